//! Logistic regression coefficients with predicted probabilities standing
//! in for missing labels: the labeled-only MLE, PPI++ and the filtered fit.
//!
//! cargo run --release --example glm_logistic

use fppi::data::SemiSupervised;
use fppi::glm::{algorithm2_from_mle, glm_mle, glm_with_region, WeightRule};
use fppi::sim::{generate, PredictionId, ScenarioId, ScenarioSpec};
use fppi::{GlmFamily, OptimizerOptions, OracleSpec, Region};

fn main() -> fppi::Result<()> {
    let spec = ScenarioSpec::new(ScenarioId::Scenario3, PredictionId::F3, 1000, 10_000).with_seed(11);
    // the first call also fits θ* on a 10⁶-row reference draw, a few seconds
    let g = generate(&spec, 0)?;
    let data = SemiSupervised::new(&g.labeled, &g.unlabeled, &g.f_labeled, &g.f_unlabeled)?;
    let family = GlmFamily::Bernoulli;
    let opts = OptimizerOptions::default();

    let mle = glm_mle(&g.labeled, family, &opts)?;
    let classical = glm_with_region(&data, &Region::Empty, &mle, WeightRule::Fixed(0.0), family, &opts)?;
    let ppp = glm_with_region(&data, &Region::All, &mle, WeightRule::Plugin, family, &opts)?;
    let fppi = algorithm2_from_mle(&data, &OracleSpec::Knn { k: 15 }, &mle, family, &opts)?;

    let star = &g.truth.theta_star;
    println!("θ*        = {}", fmt(star));
    for (name, r) in [("mle", &classical), ("ppi++", &ppp), ("fppi", &fppi)] {
        let err: f64 = r.theta_hat.iter().zip(star).map(|(a, b)| (a - b).powi(2)).sum();
        println!(
            "{name:<9} = {}  se {}  λ = {:.3}  ‖θ̂−θ*‖² = {err:.2e}",
            fmt(&r.theta_hat),
            fmt(&r.std_errors()),
            r.lambda_hat
        );
    }
    println!(
        "filtered region keeps {} of {} unlabeled rows; estimated AMSE {:.4} vs {:.4} unfiltered",
        fppi.unlabeled_in_region,
        data.big_n(),
        fppi.amse_estimate,
        ppp.amse_estimate
    );
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:+.4}")).collect();
    format!("[{}]", parts.join(", "))
}
