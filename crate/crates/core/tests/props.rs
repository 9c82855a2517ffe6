use std::collections::BTreeMap;

use abducer_core::biabduction::{canonical, Contract};
use abducer_core::seplogic::Var;
use abducer_core::testgen::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(r: Result<(), String>) -> Result<(), TestCaseError> {
    r.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn abduced_state_and_frame_cover_the_demand(seed in any::<u64>()) {
        check(prop_biabduction(seed))?;
    }

    #[test]
    fn antiframes_are_free_of_program_variables(seed in any::<u64>()) {
        check(prop_antiframe(seed))?;
    }

    #[test]
    fn statements_only_touch_their_footprint(seed in any::<u64>()) {
        check(prop_frame(seed))?;
    }

    #[test]
    fn sibling_preconditions_exclude_each_other(seed in any::<u64>()) {
        check(prop_sibling_worlds(seed))?;
    }

    #[test]
    fn canonical_form_survives_renaming(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars: Vec<Var> = vec![Var::anchor("a"), Var::anchor("b"), Var::Logical(1), Var::Logical(2), Var::Logical(3), Var::Logical(4)];
        let c = Contract {
            pre: random_heap(&mut rng, &vars, 3, 3),
            posts: (0..2).map(|_| random_heap(&mut rng, &vars, 3, 3)).collect(),
        };
        let mut targets: Vec<u32> = (10..20).collect();
        targets.shuffle(&mut rng);
        let map: BTreeMap<Var, Var> = (1..=4).map(|i| (Var::Logical(i), Var::Logical(targets[i as usize]))).collect();
        let mut renamed = Contract { pre: c.pre.rename(&map), posts: c.posts.iter().map(|q| q.rename(&map)).collect() };
        renamed.posts.reverse();
        prop_assert_eq!(canonical(&c), canonical(&renamed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loop_free_programs_get_sound_contracts(seed in any::<u64>()) {
        check(prop_random_program_sound(seed))?;
    }
}
