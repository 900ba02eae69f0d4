use std::sync::OnceLock;

use regex::Regex;

use super::{AnnotationSet, GridRef, SizeUnit, Stroke, StrokeText, TextStyle};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no <answer> block in model output")]
    NoAnswerBlock,
    #[error("stroke {0}: number of points and t_values differ")]
    CountMismatch(String),
    #[error("unreadable token at byte {0}")]
    BadToken(usize),
    #[error("malformed markup at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("invalid JSON annotation: {0}")]
    Json(String),
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static CELL: OnceLock<Regex> = OnceLock::new();
            CELL.get_or_init(|| Regex::new($pat).expect("static regex"))
        }
    };
}

re!(comment_re, r"(?s)<!--.*?-->");
re!(stroke_re, r"(?s)<s(\d+)>(.*?)</s(\d+)>");
re!(stroke_open_re, r"<s\d+>");
re!(points_re, r"(?s)<points>(.*?)</points>");
re!(t_values_re, r"(?s)<t_values>(.*?)</t_values>");
re!(id_re, r"(?s)<id>(.*?)</id>");
re!(text_re, r#"(?s)<text((?:\s+[A-Za-z_][\w-]*\s*=\s*(?:"[^"]*"|'[^']*'))*)\s*>(.*?)</text>"#);
re!(attr_re, r#"([A-Za-z_][\w-]*)\s*=\s*(?:"([^"]*)"|'([^']*)')"#);
re!(concept_re, r"(?s)<concept>(.*?)</concept>");
re!(final_re, r"(?s)<final_answer>(.*?)</final_answer>");
re!(token_re, r#"^(?:'x(-?\d+)y(-?\d+)'|"x(-?\d+)y(-?\d+)")$"#);
re!(fence_re, r"(?m)^[ \t]*```[^\n]*\n?");
re!(
    loose_tag_re,
    r"<\s*(/?)\s*(answer|concept|strokes|s\d+|points|t_values|id|text|final_answer|style|font_size|color)\s*>"
);
re!(loose_text_open_re, r"<\s+text\s");
re!(style_re, r"(?s)<style>(.*?)</style>");
re!(font_size_re, r"(?s)<font_size>(.*?)</font_size>");
re!(color_re, r"(?s)<color>(.*?)</color>");

/// Parses model output in either dialect. Text starting with `{` is read as
/// JSON, anything else as the XML-style grammar.
pub fn parse_annotation(text: &str) -> Result<AnnotationSet, ParseError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_xml(text)
    }
}

pub fn parse_json(text: &str) -> Result<AnnotationSet, ParseError> {
    let mut set: AnnotationSet =
        serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))?;
    for s in &mut set.strokes {
        if s.points.len() != s.t_values.len() {
            return Err(ParseError::CountMismatch(s.id.clone()));
        }
        normalize_t_values(&s.points, &mut s.t_values);
    }
    Ok(set)
}

/// Strict parse first; on failure, parse the repaired text. A text that
/// parses strictly is never touched by repair.
pub fn parse_xml(text: &str) -> Result<AnnotationSet, ParseError> {
    match parse_strict(text) {
        Ok(set) => Ok(set),
        Err(err) => {
            let fixed = repair(text);
            if fixed == text {
                Err(err)
            } else {
                parse_strict(&fixed)
            }
        }
    }
}

/// Rewrites the enumerated kinds of noise LLMs add around the grammar:
/// code fences, whitespace inside tag brackets, unquoted point tokens, the
/// `<style><font_size>/<color></style>` text-style carrier, a missing
/// `</answer>`, and stroke blocks emitted with no `<answer>` wrapper.
pub fn repair(text: &str) -> String {
    let mut out = fence_re().replace_all(text, "").into_owned();
    out = loose_tag_re().replace_all(&out, "<$1$2>").into_owned();
    out = loose_text_open_re().replace_all(&out, "<text ").into_owned();
    out = points_re()
        .replace_all(&out, |c: &regex::Captures<'_>| {
            let body = &c[1];
            let toks: Vec<String> = body
                .split(',')
                .map(|t| {
                    let t = t.trim();
                    let quoted = t.len() >= 2
                        && (t.starts_with('\'') || t.starts_with('"'))
                        && (t.ends_with('\'') || t.ends_with('"'));
                    if quoted || t.is_empty() {
                        t.to_owned()
                    } else {
                        format!("'{}'", t.trim_matches(|ch| ch == '\'' || ch == '"'))
                    }
                })
                .collect();
            let rebuilt = toks.join(",");
            if body.split(',').map(str::trim).eq(toks.iter().map(String::as_str)) {
                c[0].to_owned()
            } else {
                format!("<points>{rebuilt}</points>")
            }
        })
        .into_owned();
    out = stroke_re()
        .replace_all(&out, |c: &regex::Captures<'_>| {
            let body = &c[2];
            let Some(style) = style_re().captures(body) else {
                return c[0].to_owned();
            };
            let size = font_size_re().captures(&style[1]).map(|m| m[1].trim().to_owned());
            let color = color_re().captures(&style[1]).map(|m| m[1].trim().to_owned());
            let without_style = style_re().replace(body, "").into_owned();
            let merged = text_re()
                .replace(&without_style, |t: &regex::Captures<'_>| {
                    let mut attrs = t[1].to_owned();
                    let has = |name: &str| {
                        attr_re().captures_iter(&t[1]).any(|a| a[1].eq_ignore_ascii_case(name))
                    };
                    if let Some(s) = &size {
                        if !has("size") {
                            attrs.push_str(&format!(" size=\"{s}\""));
                        }
                    }
                    if let Some(col) = &color {
                        if !has("color") {
                            attrs.push_str(&format!(" color=\"{col}\""));
                        }
                    }
                    format!("<text{attrs}>{}</text>", &t[2])
                })
                .into_owned();
            format!("<s{}>{}</s{}>", &c[1], merged, &c[3])
        })
        .into_owned();
    if let Some(open) = out.find("<answer>") {
        if !out[open..].contains("</answer>") {
            out.push_str("\n</answer>");
        }
    } else if stroke_open_re().is_match(&out) || out.contains("<final_answer>") {
        out = format!("<answer>\n{}\n</answer>", out.trim());
    }
    out
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&quot;", "\"").replace("&amp;", "&")
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// Same-length replacement of comments so byte offsets stay meaningful.
fn blank_comments(text: &str) -> String {
    comment_re().replace_all(text, |c: &regex::Captures<'_>| " ".repeat(c[0].len())).into_owned()
}

fn parse_strict(raw: &str) -> Result<AnnotationSet, ParseError> {
    let text = blank_comments(raw);
    let start = text.find("<answer>").ok_or(ParseError::NoAnswerBlock)?;
    let body_start = start + "<answer>".len();
    let body_end = text[body_start..]
        .find("</answer>")
        .map(|i| body_start + i)
        .ok_or(ParseError::Malformed { offset: start, reason: "unterminated <answer>" })?;
    let body = &text[body_start..body_end];

    let mut numbered: Vec<(u64, Stroke)> = Vec::new();
    let mut last_stroke_end = 0usize;
    for cap in stroke_re().captures_iter(body) {
        let whole = cap.get(0).expect("match");
        let off = body_start + whole.start();
        if cap[1] != cap[3] {
            return Err(ParseError::Malformed { offset: off, reason: "mismatched stroke tags" });
        }
        let n: u64 = cap[1].parse().map_err(|_| ParseError::BadToken(off))?;
        let inner = cap.get(2).expect("group");
        let stroke = parse_stroke(inner.as_str(), body_start + inner.start(), n)?;
        numbered.push((n, stroke));
        last_stroke_end = whole.end();
    }
    let opened = stroke_open_re().find_iter(body).count();
    if opened != numbered.len() {
        return Err(ParseError::Malformed { offset: body_start, reason: "unterminated stroke block" });
    }
    numbered.sort_by_key(|(n, _)| *n);

    let strokes_close = body.find("</strokes>").unwrap_or(last_stroke_end);
    let concept = concept_re()
        .captures(body)
        .map(|c| unescape(c[1].trim()))
        .filter(|c| !c.is_empty());

    // The answer may sit inside the block or after </answer>.
    let (final_answer, early) = match final_re().captures(body) {
        Some(c) => {
            let pos = c.get(0).expect("match").start();
            (Some(unescape(c[1].trim())), pos < strokes_close)
        }
        None => (final_re().captures(&text[body_end..]).map(|c| unescape(c[1].trim())), false),
    };

    Ok(AnnotationSet {
        concept,
        strokes: numbered.into_iter().map(|(_, s)| s).collect(),
        final_answer,
        final_answer_early: early,
    })
}

fn parse_stroke(body: &str, base: usize, n: u64) -> Result<Stroke, ParseError> {
    if let Some(m) = style_re().find(body) {
        // Left to `repair`, which folds the carrier into the text attributes.
        return Err(ParseError::Malformed { offset: base + m.start(), reason: "style carrier outside <text>" });
    }
    let pts_cap = points_re()
        .captures(body)
        .ok_or(ParseError::Malformed { offset: base, reason: "stroke without <points>" })?;
    let pts_group = pts_cap.get(1).expect("group");
    let mut points = Vec::new();
    let mut cursor = pts_group.start();
    for tok in pts_group.as_str().split(',') {
        let off = base + cursor;
        cursor += tok.len() + 1;
        let tok = tok.trim();
        let caps = token_re().captures(tok).ok_or(ParseError::BadToken(off))?;
        let (c, r) = match (caps.get(1), caps.get(2)) {
            (Some(c), Some(r)) => (c.as_str(), r.as_str()),
            _ => (&caps[3], &caps[4]),
        };
        let col = c.parse().map_err(|_| ParseError::BadToken(off))?;
        let row = r.parse().map_err(|_| ParseError::BadToken(off))?;
        points.push(GridRef { col, row });
    }

    let id = id_re()
        .captures(body)
        .map(|c| unescape(c[1].trim()))
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("s{n}"));

    let t_cap = t_values_re().captures(body).ok_or(ParseError::CountMismatch(id.clone()))?;
    let t_group = t_cap.get(1).expect("group");
    let mut t_values = Vec::new();
    let mut cursor = t_group.start();
    for tok in t_group.as_str().split(',') {
        let off = base + cursor;
        cursor += tok.len() + 1;
        let tok = tok.trim();
        if tok.is_empty() && t_group.as_str().trim().is_empty() {
            break;
        }
        let v: f64 = tok.parse().map_err(|_| ParseError::BadToken(off))?;
        if !v.is_finite() {
            return Err(ParseError::BadToken(off));
        }
        t_values.push(v);
    }
    if points.len() != t_values.len() {
        return Err(ParseError::CountMismatch(id));
    }

    let text = match text_re().captures(body) {
        None => None,
        Some(c) => {
            let off = base + c.get(0).expect("match").start();
            let mut style = TextStyle::default();
            for a in attr_re().captures_iter(&c[1]) {
                let val = a.get(2).or_else(|| a.get(3)).map(|m| m.as_str().trim()).unwrap_or("");
                match a[1].to_ascii_lowercase().as_str() {
                    "size" => {
                        let (num, unit) = match val.strip_suffix("px") {
                            Some(n) => (n.trim(), SizeUnit::Pixels),
                            None => (val, SizeUnit::Cells),
                        };
                        style.size = num.parse().map_err(|_| ParseError::BadToken(off))?;
                        style.unit = unit;
                    }
                    "color" => style.color = val.to_owned(),
                    _ => {}
                }
            }
            Some(StrokeText { content: unescape(strip_quotes(&c[2])), style })
        }
    };

    normalize_t_values(&points, &mut t_values);
    Ok(Stroke { id, points, t_values, text })
}

/// Canonicalizes curve parameters in place.
///
/// Corner pairs (identical adjacent points) written with slightly descending
/// t values are swapped so the list is nondecreasing; a nondecreasing list
/// whose endpoints are not 0 and 1 is rescaled affinely onto `[0, 1]`. Lists
/// that remain out of order are left alone for `validate` to report.
pub fn normalize_t_values(points: &[GridRef], ts: &mut [f64]) {
    if points.len() != ts.len() || ts.len() < 2 {
        return;
    }
    for i in 0..ts.len() - 1 {
        if points[i] == points[i + 1] && ts[i] > ts[i + 1] && ts[i] - ts[i + 1] <= 0.1 + 1e-12 {
            ts.swap(i, i + 1);
        }
    }
    let nondecreasing = ts.windows(2).all(|w| w[0] <= w[1]);
    let (first, last) = (ts[0], ts[ts.len() - 1]);
    if nondecreasing && last > first && (first != 0.0 || last != 1.0) {
        let span = last - first;
        for t in ts.iter_mut() {
            *t = (*t - first) / span;
        }
        ts[0] = 0.0;
        let n = ts.len();
        ts[n - 1] = 1.0;
    }
}
