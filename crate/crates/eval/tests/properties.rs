use docsynth_eval::{evaluate, EvalOptions, MetricReport};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

fn record() -> impl Strategy<Value = Value> {
    (
        0i64..100,
        prop_oneof![Just("u"), Just("v"), Just("w")],
        any::<bool>(),
        prop::option::of(-5.0f64..5.0),
        prop_oneof![(0i64..4).prop_map(|i| json!(i)), Just(json!("none")), Just(Value::Null)],
        prop::collection::vec(0i64..3, 0..4),
        any::<bool>(),
    )
        .prop_map(|(x, c, b, opt, m, arr, y)| {
            let mut r = Map::new();
            r.insert("x".into(), json!(x));
            r.insert("c".into(), json!(c));
            r.insert("b".into(), json!(b));
            if let Some(o) = opt {
                r.insert("opt".into(), json!(o));
            }
            r.insert("m".into(), m);
            r.insert("arr".into(), json!(arr));
            r.insert("y".into(), json!(if y { "p" } else { "q" }));
            Value::Object(r)
        })
}

fn table() -> impl Strategy<Value = Vec<Value>> {
    prop::collection::vec(record(), 12..40).prop_map(|mut t| {
        t[0]["y"] = json!("p");
        t[1]["y"] = json!("q");
        t
    })
}

fn opts() -> EvalOptions {
    EvalOptions { target: Some("y".into()), ..Default::default() }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn check_ranges(r: &MetricReport) -> Result<(), TestCaseError> {
    let f = &r.fidelity;
    prop_assert!(unit(f.overall) && unit(f.shapes) && unit(f.trends));
    prop_assert!(unit(r.detection.score) && unit(r.detection.auc));
    if let Some(u) = &r.utility {
        prop_assert!(unit(u.score) && unit(u.tstr_f1) && unit(u.trtr_f1));
    }
    if let Some(p) = &r.privacy {
        prop_assert!(unit(p.score) && (0.0..=100.0).contains(&p.dcr));
    }
    for c in &r.columns {
        prop_assert!(unit(c.presence) && unit(c.dtype) && unit(c.value) && unit(c.score));
        prop_assert!(c.score <= c.presence.min(c.dtype).min(c.value) + 1e-12, "{c:?}");
    }
    for a in &r.array_lengths {
        prop_assert!(a.distance >= 0.0 && a.present_only >= 0.0);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_stay_in_range_and_bound_by_their_factors(train in table(), test in table(), synth in table()) {
        check_ranges(&evaluate(&train, &test, &synth, &opts()).unwrap())?;
    }

    #[test]
    fn a_table_is_faithful_to_itself(train in table(), test in table()) {
        let r = evaluate(&train, &test, &test, &opts()).unwrap();
        prop_assert!((r.fidelity.shapes - 1.0).abs() < 1e-12, "{}", r.fidelity.shapes);
        prop_assert!((r.fidelity.trends - 1.0).abs() < 1e-12, "{}", r.fidelity.trends);
        prop_assert!(r.array_lengths.iter().all(|a| a.distance == 0.0));
    }

    #[test]
    fn evaluation_is_deterministic(train in table(), test in table(), synth in table()) {
        let a = serde_json::to_value(evaluate(&train, &test, &synth, &opts()).unwrap()).unwrap();
        let b = serde_json::to_value(evaluate(&train, &test, &synth, &opts()).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn columns_come_from_both_tables(train in table(), test in table(), synth in table()) {
        let mut test = test;
        test[0]["only_real"] = json!(1);
        let synth: Vec<Value> = synth
            .into_iter()
            .map(|mut r| {
                r.as_object_mut().unwrap().remove("opt");
                r["only_synth"] = json!("s");
                r
            })
            .collect();
        let r = evaluate(&train, &test, &synth, &opts()).unwrap();
        let col = |name: &str| r.columns.iter().find(|c| c.column == name).cloned();
        prop_assert!(col("only_real").is_some_and(|c| c.presence < 1.0));
        prop_assert!(col("only_synth").is_some_and(|c| c.presence < 1.0));
        if test.iter().any(|t| t.get("opt").is_some()) {
            prop_assert!(col("opt").is_some_and(|c| c.presence < 1.0));
        }
    }
}
