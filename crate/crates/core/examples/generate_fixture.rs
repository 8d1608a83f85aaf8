//! Regenerate `fixtures/synthetic_market.csv`.
//!
//! cargo run -p glidepath --example generate_fixture > crates/core/fixtures/synthetic_market.csv

use glidepath::synthetic::{SyntheticMarket, FIXTURE_SEED};

fn main() {
    let csv = SyntheticMarket::fixture()
        .generate_csv(FIXTURE_SEED)
        .expect("fixture parameters are valid");
    print!("{csv}");
}
