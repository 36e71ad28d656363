mod common;

use common::checks::pca_instance;
use common::fixed_cases;
use proptest::prelude::*;

proptest! {
    #![proptest_config(fixed_cases(200))]

    #[test]
    fn pca_invariants(seed in 0u64..1_000_000, n in 6usize..40, q in 4usize..60, k_frac in 0.0f64..1.0, low_rank in any::<bool>()) {
        let kmax = n.min(q) - 1;
        let k = 1 + ((kmax - 1) as f64 * k_frac) as usize;
        pca_instance(seed, n, q, k, low_rank).map_err(TestCaseError::fail)?;
    }
}
