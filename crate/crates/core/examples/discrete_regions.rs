//! Four-category covariate: the region keeps the categories whose labeled
//! mean sits on the same side of the grand mean as the prediction.
//!
//! cargo run --release --example discrete_regions

use fppi::data::SemiSupervised;
use fppi::mean::{discrete_estimate, ppi_plusplus_plugin};
use fppi::sim::{generate, scenario1_categories, PredictionId, ScenarioId, ScenarioSpec};

fn main() -> fppi::Result<()> {
    for pred in PredictionId::ALL.iter().copied() {
        let spec = ScenarioSpec::new(ScenarioId::Scenario1, pred, 500, 10_000).with_seed(3);
        let g = generate(&spec, 0)?;
        let data = SemiSupervised::new(&g.labeled, &g.unlabeled, &g.f_labeled, &g.f_unlabeled)?;
        let fppi = discrete_estimate(&data, &scenario1_categories())?;
        let ppp = ppi_plusplus_plugin(&data)?;
        println!(
            "{pred}: region {:<18} fppi {:.4} (se {:.4})  ppi++ {:.4} (se {:.4})  oracle region {}",
            fppi.region.describe(),
            fppi.theta_hat,
            fppi.std_error,
            ppp.theta_hat,
            ppp.std_error,
            g.truth.oracle_region.describe()
        );
        if !fppi.diagnostics.excluded_categories.is_empty() {
            println!("  categories without labels: {:?}", fppi.diagnostics.excluded_categories);
        }
    }
    Ok(())
}
