mod common;

use common::rerank_cases::{constant_scorer, generate, monotone_transform, permutation, tail_isolation};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn output_is_permutation_with_fused_head(seed in any::<u64>()) {
        permutation(&generate(seed)).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn tail_is_untouched(seed in any::<u64>()) {
        tail_isolation(&generate(seed)).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn constant_member_preserves_order(seed in any::<u64>()) {
        constant_scorer(&generate(seed), seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn monotone_transform_preserves_order(seed in any::<u64>()) {
        monotone_transform(&generate(seed)).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn batch_size_and_parallelism_do_not_matter(seed in any::<u64>()) {
        let mut case = generate(seed);
        let a = case.run(case.scorers());
        case.batch_size = 1 + case.batch_size % 4;
        case.parallel = 4;
        let b = case.run(case.scorers());
        prop_assert_eq!(a, b);
    }
}
