use chaingrade_core::metrics::{
    chain_correctness_all, chain_correctness_type, geo_mean, step_correctness_all, step_correctness_description,
    step_correctness_reasoning, step_correctness_typed, MetricsError,
};
use chaingrade_core::{ComponentScores, StepType};
use proptest::prelude::*;

/// Product-root oracle in plain arithmetic.
fn root_of_product(xs: &[f64]) -> f64 {
    xs.iter().product::<f64>().powf(1.0 / xs.len() as f64)
}

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 1 => Just(1.0), 8 => 0.0..=1.0f64]
}

fn positive_unit() -> impl Strategy<Value = f64> {
    0.05..=1.0f64
}

fn step_type() -> impl Strategy<Value = StepType> {
    prop_oneof![Just(StepType::Description), Just(StepType::Reasoning), Just(StepType::Both)]
}

fn components() -> impl Strategy<Value = ComponentScores> {
    (positive_unit(), positive_unit(), positive_unit(), positive_unit(), positive_unit())
        .prop_map(|(a, b, c, d, e)| ComponentScores::all(a, b, c, d, e))
}

#[test]
fn worked_examples() {
    let d = step_correctness_description(&ComponentScores::description(0.5, 1.0)).unwrap();
    assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
    let r = step_correctness_reasoning(&ComponentScores::reasoning(0.8, 0.9, 1.0)).unwrap();
    assert!((r - 0.72f64.powf(1.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert_eq!(geo_mean(&[]), Err(MetricsError::Empty));
    assert_eq!(geo_mean(&[0.5, 1.5]), Err(MetricsError::OutOfRange(1.5)));
    assert!(matches!(
        chain_correctness_type(&[(StepType::Reasoning, ComponentScores::description(1.0, 1.0))]),
        Err(MetricsError::MissingComponent { step_index: 1, .. })
    ));
}

proptest! {
    #[test]
    fn geo_mean_stays_within_min_and_max(xs in prop::collection::vec(unit(), 1..12)) {
        let g = geo_mean(&xs).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
    }

    #[test]
    fn geo_mean_ignores_order(mut xs in prop::collection::vec(unit(), 1..12), seed in any::<u64>()) {
        let g = geo_mean(&xs).unwrap();
        let n = xs.len();
        xs.rotate_left((seed as usize) % n);
        xs.reverse();
        prop_assert!((geo_mean(&xs).unwrap() - g).abs() <= 1e-12);
    }

    #[test]
    fn any_zero_gives_zero(mut xs in prop::collection::vec(unit(), 1..12), at in any::<prop::sample::Index>()) {
        let i = at.index(xs.len());
        xs[i] = 0.0;
        prop_assert_eq!(geo_mean(&xs).unwrap(), 0.0);
    }

    #[test]
    fn scaling_inputs_scales_output(xs in prop::collection::vec(unit(), 1..12), c in 0.001..=1.0f64) {
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let expected = c * geo_mean(&xs).unwrap();
        prop_assert!((geo_mean(&scaled).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn typed_chain_matches_oracle(steps in prop::collection::vec((step_type(), components()), 1..8)) {
        let chain = chain_correctness_type(&steps).unwrap();
        let per_step: Vec<f64> = steps
            .iter()
            .map(|(t, c)| {
                let d = root_of_product(&[c.s_d_correct.unwrap(), c.s_d_relevant.unwrap()]);
                let r = root_of_product(&[c.s_l_correct.unwrap(), c.s_l_relevant.unwrap(), c.s_info.unwrap()]);
                match t {
                    StepType::Description => d,
                    StepType::Reasoning => r,
                    StepType::Both => root_of_product(&[d, r]),
                }
            })
            .collect();
        for (s, expected) in chain.steps.iter().zip(&per_step) {
            prop_assert!((s.value - expected).abs() <= 1e-9);
        }
        prop_assert!((chain.value - root_of_product(&per_step)).abs() <= 1e-9);
    }

    #[test]
    fn all_dimension_chain_matches_oracle(steps in prop::collection::vec(components(), 1..8)) {
        let chain = chain_correctness_all(&steps).unwrap();
        let per_step: Vec<f64> = steps
            .iter()
            .map(|c| {
                let d = root_of_product(&[c.s_d_correct.unwrap(), c.s_d_relevant.unwrap()]);
                let r = root_of_product(&[c.s_l_correct.unwrap(), c.s_l_relevant.unwrap(), c.s_info.unwrap()]);
                root_of_product(&[d, r])
            })
            .collect();
        prop_assert!((chain.value - root_of_product(&per_step)).abs() <= 1e-9);
        for (c, s) in steps.iter().zip(&chain.steps) {
            prop_assert_eq!(step_correctness_all(c).unwrap(), s.value);
        }
    }

    #[test]
    fn typed_step_on_both_combines_formulas(c in components()) {
        let d = step_correctness_description(&c).unwrap();
        let r = step_correctness_reasoning(&c).unwrap();
        let both = step_correctness_typed(StepType::Both, &c).unwrap();
        prop_assert!((both - (d * r).sqrt()).abs() <= 1e-12);
    }
}
