//! Round trip through CSV files: write a labeled and an unlabeled sample
//! with a prediction column, read them back, estimate.
//!
//! The same files work with the binary:
//!   fppi estimate-mean --labeled labeled.csv --unlabeled unlabeled.csv
//!
//! cargo run --release --example csv_estimation

use std::fs::File;

use fppi::csvio::{load_labeled, load_unlabeled, write_labeled, write_unlabeled};
use fppi::data::SemiSupervised;
use fppi::mean::{algorithm1_estimate, confidence_interval};
use fppi::sim::{generate, PredictionId, ScenarioId, ScenarioSpec, Target};
use fppi::{FppiError, OracleSpec};

fn main() -> fppi::Result<()> {
    let mut spec = ScenarioSpec::new(ScenarioId::Scenario2, PredictionId::F1, 800, 8000).with_seed(21);
    spec.target = Target::Mean;
    let g = generate(&spec, 0)?;

    let dir = std::env::temp_dir();
    let (lab_path, unl_path) = (dir.join("fppi_labeled.csv"), dir.join("fppi_unlabeled.csv"));
    write_labeled(File::create(&lab_path)?, &g.labeled, Some(&g.f_labeled))?;
    write_unlabeled(File::create(&unl_path)?, &g.unlabeled, Some(&g.f_unlabeled))?;
    println!("wrote {} and {}", lab_path.display(), unl_path.display());

    let lab = load_labeled(&lab_path, "f")?;
    let unl = load_unlabeled(&unl_path, "f")?;
    let (f_lab, f_unl) = match (&lab.predictions, &unl.predictions) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(FppiError::InvalidArgument("prediction column `f` missing".into())),
    };
    let data = SemiSupervised::new(&lab.data, &unl.data, f_lab, f_unl)?;
    let r = algorithm1_estimate(&data, &OracleSpec::Knn { k: 15 })?;
    let ci = confidence_interval(&r, 0.9)?;
    println!(
        "θ̂ = {:.4}, 90% CI [{:.4}, {:.4}] (θ* = {:.4}); dropped rows: {} labeled, {} unlabeled",
        r.theta_hat, ci.lower, ci.upper, g.truth.theta_star[0], lab.dropped_rows, unl.dropped_rows
    );
    Ok(())
}
