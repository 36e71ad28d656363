mod common;

use common::checks::{chi_square_monte_carlo, quantile_round_trip, CHI_SQUARE_PAIRS};
use common::fixed_cases;
use proptest::prelude::*;

#[test]
fn cdf_matches_monte_carlo() {
    for (i, &(df, lambda)) in CHI_SQUARE_PAIRS.iter().enumerate() {
        chi_square_monte_carlo(df, lambda, 1_000_000, 1000 + i as u64, 3e-3).unwrap();
    }
}

proptest! {
    #![proptest_config(fixed_cases(300))]

    #[test]
    fn quantile_inverts_survival(df in 1usize..30, lambda in 0.0f64..40.0, alpha in 0.001f64..0.999) {
        quantile_round_trip(df, lambda, alpha).map_err(TestCaseError::fail)?;
    }
}
