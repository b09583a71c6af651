use gp_cli::{parse_kernel, parse_lik, parse_mean};
use proptest::prelude::*;

fn num() -> impl Strategy<Value = String> {
    prop_oneof![
        (-50i32..50).prop_map(|i| format!("{}", f64::from(i) / 10.0)),
        (-5i32..5).prop_map(|i| format!("{i}")),
        (-3.0f64..3.0).prop_map(|v| format!("{v:?}")),
        Just("1e-3".to_string()),
    ]
}

fn scale() -> impl Strategy<Value = String> {
    prop_oneof![
        num(),
        prop::collection::vec(num(), 1..4).prop_map(|v| format!("[{}]", v.join(", "))),
        (1usize..6).prop_map(|d| format!("zeros({d})")),
    ]
}

fn base() -> impl Strategy<Value = String> {
    prop_oneof![
        (scale(), num()).prop_map(|(l, s)| format!("SE({l},{s})")),
        (prop::sample::select(vec!["1/2", "3/2", "5/2"]), scale(), num()).prop_map(|(o, l, s)| format!("Matern({o}, {l}, {s})")),
        (scale(), num(), num()).prop_map(|(l, s, a)| format!("RQ({l},{s},{a})")),
        (num(), num(), num()).prop_map(|(l, s, p)| format!("Periodic({l},{s},{p})")),
        scale().prop_map(|l| format!("Lin({l})")),
        (num(), num(), 1u32..5).prop_map(|(c, s, d)| format!("Poly({c},{s},{d})")),
        num().prop_map(|s| format!("Noise({s})")),
        num().prop_map(|s| format!("Const({s})")),
        (num(), num()).prop_map(|(l, s)| format!("fix(SE({l},{s}), σ)")),
        (num(), num(), num()).prop_map(|(l, s, a)| format!("fix(RQ({l},{s},{a}), ℓ, α)")),
        (num(), num()).prop_map(|(l, s)| format!("fix(SE({l},{s}))")),
        (num(), num(), 1usize..4).prop_map(|(l, s, d)| format!("Masked(SE({l},{s}), [{d}])")),
        (num(), num(), 2usize..5).prop_map(|(l, s, d)| format!("masked(SE({l},{s}), collect(1:{d}))")),
    ]
}

fn expr() -> impl Strategy<Value = String> {
    base().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            inner.prop_map(|a| format!("({a})")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn rendering_is_a_parse_fixed_point(src in expr()) {
        let tree = parse_kernel(&src).map_err(|e| TestCaseError::fail(format!("{src}: {e}")))?;
        let text = tree.to_string();
        let again = parse_kernel(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&again, &tree, "{} rendered as {}", src, text);
        prop_assert_eq!(again.to_string(), text);
    }

    #[test]
    fn truncated_input_fails_at_a_position_inside_it(src in expr(), cut in 0.0f64..1.0) {
        let boundaries: Vec<usize> = src.char_indices().map(|(i, _)| i).collect();
        let at = boundaries[((boundaries.len() as f64) * cut) as usize];
        let prefix = &src[..at];
        // A prefix can itself be complete ("SE(0,0) + Lin(1)" cut before " + ").
        if let Err(e) = parse_kernel(prefix) {
            prop_assert!(e.offset() >= 1 && e.offset() <= prefix.len() + 1, "{prefix:?}: {e}");
        }
    }
}

#[test]
fn means_and_likelihoods_round_trip() {
    for src in ["MeanZero()", "MeanConst(2.5)", "MeanLin([0.1, -0.2])", "MeanPoly([[1.0, 2.0], [3.0, 4.0]])", "MeanConst(1.0) + MeanLin([2.0])"] {
        let m = parse_mean(src).unwrap_or_else(|e| panic!("{src}: {e}"));
        assert_eq!(parse_mean(&m.to_string()).unwrap(), m, "{src}");
    }
    for src in ["BernLik()", "BinLik(10)", "ExpLik()", "GaussLik(-1.0)", "PoisLik()", "StuTLik(3, 0.1)"] {
        let l = parse_lik(src).unwrap_or_else(|e| panic!("{src}: {e}"));
        assert_eq!(parse_lik(&l.to_string()).unwrap(), l, "{src}");
        l.to_likelihood();
    }
}
