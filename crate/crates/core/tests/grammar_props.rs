use proptest::prelude::*;

use strokelab_core::stroke::{
    parse_annotation, repair, serialize_annotation, validate, AnnotationSet, CoordinateFrame, Dialect, GridRef, Origin, SizeUnit, Stroke,
    StrokeText, TextStyle,
};

const VPCT: &str = include_str!("data/vpct_output.txt");

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 &<>_-]{0,8}[A-Za-z0-9]|[A-Za-z0-9]"
}

fn t_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    // Nondecreasing hundredths from 0 to 1, as the serializer prints them.
    prop::collection::vec(0u32..=100, n.saturating_sub(2)).prop_map(move |mut mid| {
        if n == 1 {
            return vec![0.0];
        }
        mid.sort_unstable();
        let mut v = vec![0.0];
        v.extend(mid.iter().map(|k| *k as f64 / 100.0));
        v.push(1.0);
        v
    })
}

fn geometry_stroke() -> impl Strategy<Value = (Vec<GridRef>, Vec<f64>)> {
    (1usize..10).prop_flat_map(|n| (prop::collection::vec((0i32..=1000, 0i32..=1000).prop_map(|(c, r)| GridRef::new(c, r)), n), t_values(n)))
}

fn text_stroke() -> impl Strategy<Value = (GridRef, StrokeText)> {
    (
        (0i32..=1000, 0i32..=1000),
        word(),
        prop_oneof![
            prop::sample::select(vec![0.5, 1.0, 1.6, 2.0, 2.5]).prop_map(|s| (s, SizeUnit::Cells)),
            (4u32..60).prop_map(|p| (p as f64, SizeUnit::Pixels)),
        ],
        prop::sample::select(vec!["black", "#ff0066", "red", "#00aa33"]),
    )
        .prop_map(|((c, r), content, (size, unit), color)| {
            (GridRef::new(c, r), StrokeText { content, style: TextStyle { size, unit, color: color.to_string() } })
        })
}

prop_compose! {
    fn annotation_set()(
        concept in prop::option::of(word()),
        kinds in prop::collection::vec(prop_oneof![
            geometry_stroke().prop_map(|(p, t)| (p, t, None)),
            text_stroke().prop_map(|(a, t)| (vec![a], vec![0.0], Some(t))),
        ], 0..6),
        final_answer in prop::option::of(word()),
    ) -> AnnotationSet {
        let strokes = kinds.into_iter().enumerate().map(|(i, (points, t_values, text))| Stroke {
            id: format!("stroke_{i}"),
            points,
            t_values,
            text,
        }).collect();
        AnnotationSet { concept, strokes, final_answer, final_answer_early: false }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip_both_dialects(set in annotation_set()) {
        let frame = CoordinateFrame::normalized(1000, Origin::TopLeft).unwrap();
        prop_assert!(validate(&set, &frame).is_empty());
        for d in [Dialect::XmlStyle, Dialect::Json] {
            let text = serialize_annotation(&set, d);
            prop_assert_eq!(&parse_annotation(&text).unwrap(), &set, "dialect {:?}:\n{}", d, text);
        }
    }

    #[test]
    fn parse_is_deterministic_and_repair_is_a_noop_on_clean_text(set in annotation_set()) {
        let text = serialize_annotation(&set, Dialect::XmlStyle);
        prop_assert_eq!(parse_annotation(&text), parse_annotation(&text));
        prop_assert_eq!(parse_annotation(&repair(&text)).unwrap(), set);
    }

    #[test]
    fn stroke_order_is_preserved(set in annotation_set()) {
        let parsed = parse_annotation(&serialize_annotation(&set, Dialect::XmlStyle)).unwrap();
        let ids: Vec<_> = parsed.strokes.iter().map(|s| s.id.clone()).collect();
        let want: Vec<_> = (0..set.strokes.len()).map(|i| format!("stroke_{i}")).collect();
        prop_assert_eq!(ids, want);
    }
}

#[test]
fn vpct_example_reserializes() {
    let set = parse_annotation(VPCT).unwrap();
    assert_eq!(set.strokes.len(), 5);
    assert_eq!(set.final_answer.as_deref(), Some("3"));
    for d in [Dialect::XmlStyle, Dialect::Json] {
        assert_eq!(parse_annotation(&serialize_annotation(&set, d)).unwrap(), set);
    }
}

#[test]
fn fenced_and_loose_output_is_repaired() {
    let raw = "```xml\n< answer >\n<strokes><s1><points>x3y4, x5y6</points><t_values>0,1</t_values><id>a</id></s1></strokes>\n";
    let set = parse_annotation(raw).unwrap();
    assert_eq!(set.strokes[0].points, vec![GridRef::new(3, 4), GridRef::new(5, 6)]);
}
