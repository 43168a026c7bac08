//! Randomised protocol runs checked tick by tick.

mod suites;

use entsim_core::dodag::ObjectiveFunction;
use entsim_core::{CoherenceTime, SimParams};
use proptest::prelude::*;
use suites::random;

fn t_co_strategy() -> impl Strategy<Value = CoherenceTime> {
    prop_oneof![
        (1u32..=6).prop_map(CoherenceTime::Finite),
        Just(CoherenceTime::Infinite),
    ]
}

fn params_strategy() -> impl Strategy<Value = SimParams> {
    (4usize..=8, 0.3f64..=1.0, 0.3f64..=1.0, t_co_strategy(), any::<u64>()).prop_map(|(side, p, q, t_co, seed)| SimParams {
        p,
        q,
        t_co,
        side,
        seed,
        ..SimParams::default()
    })
}

const TICKS: usize = 80;
const CASES: u32 = 16; // 16 × 80 = 1280 ticks per property

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn dodag_stays_acyclic_and_monotone(prm in params_strategy(), fixed in any::<bool>()) {
        let objective = if fixed { ObjectiveFunction::FixedIncrement } else { ObjectiveFunction::Connectivity };
        random::dodag_run(prm, objective, TICKS);
    }

    #[test]
    fn ghs_forest_levels_and_views(prm in params_strategy()) {
        random::ghs_run(prm, TICKS);
    }

    #[test]
    fn ghs_spans_without_decoherence(side in 3usize..=9, seed in any::<u64>()) {
        random::ghs_spans(side, seed, TICKS);
    }
}

#[test]
fn split_then_remerge_restores_a_spanning_fragment() {
    random::split_then_remerge();
}
