use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnnotationSet, SizeUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    XmlStyle,
    Json,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_size(size: f64) -> String {
    if size.fract() == 0.0 {
        format!("{size:.1}")
    } else {
        format!("{size}")
    }
}

pub fn serialize_annotation(set: &AnnotationSet, dialect: Dialect) -> String {
    match dialect {
        Dialect::Json => serde_json::to_string_pretty(set).expect("annotation sets always serialize"),
        Dialect::XmlStyle => to_xml(set),
    }
}

fn to_xml(set: &AnnotationSet) -> String {
    let mut out = String::from("<answer>\n");
    if let Some(c) = &set.concept {
        let _ = writeln!(out, "<concept>{}</concept>", escape(c));
    }
    out.push_str("<strokes>\n");
    for (i, s) in set.strokes.iter().enumerate() {
        let n = i + 1;
        let points: Vec<String> = s.points.iter().map(|p| format!("'{p}'")).collect();
        let ts: Vec<String> = s.t_values.iter().map(|t| format!("{t:.2}")).collect();
        let _ = writeln!(out, "<s{n}>");
        let _ = writeln!(out, "  <points>{}</points>", points.join(","));
        let _ = writeln!(out, "  <t_values>{}</t_values>", ts.join(","));
        if let Some(text) = &s.text {
            let unit = match text.style.unit {
                SizeUnit::Cells => "",
                SizeUnit::Pixels => "px",
            };
            let _ = writeln!(
                out,
                "  <text size=\"{}{unit}\" color=\"{}\">'{}'</text>",
                fmt_size(text.style.size),
                text.style.color,
                escape(&text.content)
            );
        }
        let _ = writeln!(out, "  <id>{}</id>", escape(&s.id));
        let _ = writeln!(out, "</s{n}>");
    }
    out.push_str("</strokes>\n");
    if let Some(a) = &set.final_answer {
        let _ = writeln!(out, "<final_answer>{}</final_answer>", escape(a));
    }
    out.push_str("</answer>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stroke::{parse_annotation, GridRef, Stroke, TextStyle};

    #[test]
    fn single_dot() {
        let set = AnnotationSet {
            strokes: vec![Stroke::new("dot", vec![GridRef::new(15, 31)], vec![0.0])],
            ..Default::default()
        };
        let xml = serialize_annotation(&set, Dialect::XmlStyle);
        assert!(xml.contains("<points>'x15y31'</points>"));
        assert!(xml.contains("<t_values>0.00</t_values>"));
    }

    #[test]
    fn text_stroke() {
        let style = TextStyle { size: 1.6, unit: SizeUnit::Cells, color: "#ff0066".into() };
        let set = AnnotationSet {
            strokes: vec![Stroke::label("marker_1", GridRef::new(4, 4), "1", style)],
            ..Default::default()
        };
        let xml = serialize_annotation(&set, Dialect::XmlStyle);
        assert!(xml.contains(r##"<text size="1.6" color="#ff0066">'1'</text>"##), "{xml}");
        assert_eq!(parse_annotation(&xml).unwrap(), set);
    }

    #[test]
    fn json_shape() {
        let set = AnnotationSet {
            concept: Some("c".into()),
            strokes: vec![Stroke::new("a", vec![GridRef::new(1, 2)], vec![0.0])],
            final_answer: Some("3".into()),
            final_answer_early: false,
        };
        let v: serde_json::Value = serde_json::from_str(&serialize_annotation(&set, Dialect::Json)).unwrap();
        assert_eq!(v["strokes"][0]["points"][0]["x"], 1);
        assert_eq!(v["strokes"][0]["t"][0], 0.0);
        assert_eq!(v["final_answer"], "3");
    }

    #[test]
    fn whole_sizes_keep_a_decimal() {
        assert_eq!(fmt_size(4.0), "4.0");
        assert_eq!(fmt_size(3.2), "3.2");
    }
}
