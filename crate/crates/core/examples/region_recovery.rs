//! How often the estimated region matches the population one as the
//! labeled sample grows: exact recovery for discrete covariates, and the
//! probe-measured symmetric difference for the margin fixture.
//!
//! cargo run --release --example region_recovery

use fppi::sim::{region_recovery_experiment, PredictionId, ScenarioId, ScenarioSpec};

fn main() -> fppi::Result<()> {
    let grid = [50, 100, 200, 400, 800];

    let mut discrete = ScenarioSpec::new(ScenarioId::Scenario1, PredictionId::F3, 50, 1)
        .with_seed(1)
        .with_replications(500);
    // heavier noise than the default makes the small-n failures visible
    discrete.noise_sd = Some(6.0);
    println!("four categories, f3, noise sd 6:");
    for row in region_recovery_experiment(&discrete, &grid)? {
        println!("  n={:<4} {} = {:.3} ± {:.3}", row.n, row.metric, row.value, row.std_error);
    }

    for c in [0.05, 0.5] {
        let mut margin = ScenarioSpec::new(ScenarioId::MarginSeparation, PredictionId::F1, 50, 1)
            .with_seed(2)
            .with_replications(200);
        margin.margin_c = c;
        margin.probe_size = 2000;
        println!("margin fixture, c = {c}:");
        for row in region_recovery_experiment(&margin, &grid)? {
            println!("  n={:<4} {} = {:.4} ± {:.4}", row.n, row.metric, row.value, row.std_error);
        }
    }
    Ok(())
}
