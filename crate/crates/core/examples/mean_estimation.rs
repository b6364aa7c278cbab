//! Estimate a population mean from a small labeled sample, a large
//! unlabeled one and a black-box prediction, comparing the classical mean,
//! PPI++ and the filtered estimator with an estimated region.
//!
//! cargo run --release --example mean_estimation

use fppi::data::SemiSupervised;
use fppi::mean::{algorithm1_estimate, classical_mean, confidence_interval, ppi_plusplus_plugin};
use fppi::sim::{generate, PredictionId, ScenarioId, ScenarioSpec, Target};
use fppi::OracleSpec;

fn main() -> fppi::Result<()> {
    // Y = Σ sin xᵢ + Σ cos xᵢ + ε, with the prediction f(x) = 2 Σ sin xᵢ
    let mut spec = ScenarioSpec::new(ScenarioId::Scenario2, PredictionId::F3, 1000, 10_000).with_seed(7);
    spec.target = Target::Mean;
    let g = generate(&spec, 0)?;
    let data = SemiSupervised::new(&g.labeled, &g.unlabeled, &g.f_labeled, &g.f_unlabeled)?;
    println!("true mean θ* = {:.4}", g.truth.theta_star[0]);

    let runs = [
        ("classical", classical_mean(&data)?),
        ("ppi++", ppi_plusplus_plugin(&data)?),
        ("fppi", algorithm1_estimate(&data, &OracleSpec::Knn { k: 15 })?),
    ];
    for (name, r) in &runs {
        let ci = confidence_interval(r, 0.95)?;
        println!(
            "{name:>9}: θ̂ = {:.4}  se = {:.4}  95% CI [{:.4}, {:.4}]  λ = {:.3}",
            r.theta_hat, r.std_error, ci.lower, ci.upper, r.lambda_hat
        );
    }
    let fppi = &runs[2].1;
    println!(
        "region {} holds {} of {} labeled rows",
        fppi.region.describe(),
        fppi.diagnostics.labeled_in_region,
        data.n()
    );
    Ok(())
}
