//! Regression oracles used to estimate the conditional mean inside region
//! estimation: brute-force k-nearest neighbors, least squares, exact-match
//! category means, and the plain sample mean.

use std::str::FromStr;
use std::sync::Arc;

use crate::data::{LabeledDataset, RowFn};
use crate::error::{FppiError, Result};
use crate::linalg::{dot, Cholesky, Matrix};

pub fn sample_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(FppiError::Empty("sample mean of an empty vector"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Brute-force Euclidean k-nearest-neighbor regressor.
///
/// Predictions are the unweighted mean response of the `k` closest training
/// rows. Distance ties go to the lower training index, so predictions are
/// deterministic. On 0/1 responses the prediction is the neighborhood
/// proportion, which is how the classifier variant is used.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    x: Matrix,
    y: Vec<f64>,
}

pub fn knn_fit(data: &LabeledDataset, k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(FppiError::invalid("k must be positive"));
    }
    if k > data.len() {
        return Err(FppiError::invalid(format!(
            "k = {k} exceeds the {} training rows",
            data.len()
        )));
    }
    Ok(KnnModel {
        k,
        x: data.x().clone(),
        y: data.y().to_vec(),
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let k = self.k;
        // (squared distance, index), kept sorted; scanning in index order and
        // inserting after equal distances realizes the lowest-index tie-break.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.x.row_iter().enumerate() {
            let d: f64 = row
                .iter()
                .zip(query)
                .map(|(a, b)| {
                    let t = a - b;
                    t * t
                })
                .sum();
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, query: &[f64]) -> f64 {
        let idx = self.neighbors(query);
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / self.k as f64
    }

    pub fn predict(&self, queries: &Matrix) -> Result<Vec<f64>> {
        if queries.cols() != self.dim() {
            return Err(FppiError::DimensionMismatch {
                context: "knn query columns",
                expected: self.dim(),
                found: queries.cols(),
            });
        }
        Ok(queries.row_iter().map(|q| self.predict_row(q)).collect())
    }
}

/// Least-squares coefficients (no implicit intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel {
    pub theta: Vec<f64>,
}

/// Solves the normal equations by Cholesky; a rank-deficient design is
/// reported as [`FppiError::Singular`] rather than pseudo-inverted.
pub fn ols_fit(data: &LabeledDataset) -> Result<OlsModel> {
    let p = data.dim();
    if data.len() < p {
        return Err(FppiError::invalid(format!(
            "least squares needs at least p = {p} rows, got {}",
            data.len()
        )));
    }
    let mut gram = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    for (row, &y) in data.x().row_iter().zip(data.y()) {
        gram.add_outer(row, 1.0);
        for (acc, &v) in xty.iter_mut().zip(row) {
            *acc += v * y;
        }
    }
    let theta = Cholesky::factor(&gram)?.solve(&xty)?;
    Ok(OlsModel { theta })
}

impl OlsModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        dot(&self.theta, row)
    }
}

/// Within-category response means keyed by exact covariate row.
#[derive(Debug, Clone)]
pub struct CategoryMeans {
    categories: Vec<Vec<f64>>,
    means: Vec<f64>,
    counts: Vec<usize>,
}

impl CategoryMeans {
    /// Categories are recorded in order of first appearance.
    pub fn fit(data: &LabeledDataset) -> Self {
        let mut categories: Vec<Vec<f64>> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for (row, &y) in data.x().row_iter().zip(data.y()) {
            match categories.iter().position(|c| c.as_slice() == row) {
                Some(k) => {
                    sums[k] += y;
                    counts[k] += 1;
                }
                None => {
                    categories.push(row.to_vec());
                    sums.push(y);
                    counts.push(1);
                }
            }
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        Self {
            categories,
            means,
            counts,
        }
    }

    pub fn categories(&self) -> &[Vec<f64>] {
        &self.categories
    }

    pub fn count(&self, category: &[f64]) -> usize {
        self.lookup(category).map_or(0, |k| self.counts[k])
    }

    fn lookup(&self, row: &[f64]) -> Option<usize> {
        self.categories.iter().position(|c| c.as_slice() == row)
    }

    /// Mean response of the matching category; NaN for unseen rows, which
    /// keeps them out of any strict sign-product region.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.lookup(row).map_or(f64::NAN, |k| self.means[k])
    }
}

/// Which conditional-mean oracle to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleSpec {
    Knn { k: usize },
    Ols,
    /// Exact-match category means, for discrete covariates.
    CategoryMean,
}

impl OracleSpec {
    pub fn fit(&self, data: &LabeledDataset) -> Result<FittedOracle> {
        Ok(match *self {
            OracleSpec::Knn { k } => FittedOracle::Knn(knn_fit(data, k)?),
            OracleSpec::Ols => FittedOracle::Ols(ols_fit(data)?),
            OracleSpec::CategoryMean => FittedOracle::CategoryMean(CategoryMeans::fit(data)),
        })
    }
}

impl FromStr for OracleSpec {
    type Err = FppiError;

    /// Accepts `knn:K`, `ols`, and `discrete`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(k) = s.strip_prefix("knn:") {
            let k = k
                .parse()
                .map_err(|_| FppiError::invalid(format!("bad neighbor count in `{s}`")))?;
            return Ok(OracleSpec::Knn { k });
        }
        match s {
            "ols" => Ok(OracleSpec::Ols),
            "discrete" => Ok(OracleSpec::CategoryMean),
            _ => Err(FppiError::invalid(format!(
                "unknown oracle `{s}` (expected knn:K, ols or discrete)"
            ))),
        }
    }
}

impl std::fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleSpec::Knn { k } => write!(f, "knn:{k}"),
            OracleSpec::Ols => f.write_str("ols"),
            OracleSpec::CategoryMean => f.write_str("discrete"),
        }
    }
}

impl serde::Serialize for OracleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for OracleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub enum FittedOracle {
    Knn(KnnModel),
    Ols(OlsModel),
    CategoryMean(CategoryMeans),
}

impl FittedOracle {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            FittedOracle::Knn(m) => m.predict_row(row),
            FittedOracle::Ols(m) => m.predict_row(row),
            FittedOracle::CategoryMean(m) => m.predict_row(row),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            FittedOracle::Knn(m) => Some(m.dim()),
            FittedOracle::Ols(m) => Some(m.theta.len()),
            FittedOracle::CategoryMean(m) => m.categories.first().map(Vec::len),
        }
    }

    pub fn into_row_fn(self) -> RowFn {
        Arc::new(move |row| self.predict_row(row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(x: &[f64], y: &[f64]) -> LabeledDataset {
        LabeledDataset::new(Matrix::column(x), y.to_vec()).unwrap()
    }

    #[test]
    fn sample_mean_cases() {
        assert_eq!(sample_mean(&[3.0]).unwrap(), 3.0);
        assert_eq!(sample_mean(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        // equiprobable category means of the discrete mean-estimation scenario
        assert_eq!(sample_mean(&[-2.0, -1.0, 5.0, 10.0]).unwrap(), 3.0);
        assert!(sample_mean(&[]).is_err());
    }

    #[test]
    fn knn_single_point() {
        let m = knn_fit(&dataset(&[0.0], &[7.0]), 1).unwrap();
        assert_eq!(m.predict_row(&[123.0]), 7.0);
    }

    #[test]
    fn knn_nearest_grid_point() {
        let grid: Vec<f64> = (0..10).map(f64::from).collect();
        let m = knn_fit(&dataset(&grid, &grid), 1).unwrap();
        assert_eq!(m.predict_row(&[4.2]), 4.0);
    }

    #[test]
    fn knn_all_neighbors_is_mean() {
        let x = [0.0, 1.0, 5.0, 9.0];
        let y = [1.0, 2.0, 3.0, 10.0];
        let m = knn_fit(&dataset(&x, &y), 4).unwrap();
        assert_eq!(m.predict_row(&[-3.0]), 4.0);
        assert_eq!(m.predict_row(&[100.0]), 4.0);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // rows 0 and 2 duplicate the query point; rows 1 and 3 are equidistant
        let x = [1.0, 0.0, 1.0, 2.0];
        let y = [10.0, 20.0, 30.0, 40.0];
        let m = knn_fit(&dataset(&x, &y), 3).unwrap();
        assert_eq!(m.neighbors(&[1.0]), vec![0, 2, 1]);
        assert_eq!(m.predict_row(&[1.0]), 20.0);
        let m1 = knn_fit(&dataset(&x, &y), 1).unwrap();
        assert_eq!(m1.predict_row(&[1.5]), 10.0);
    }

    #[test]
    fn knn_binary_labels_give_probabilities() {
        let x: Vec<f64> = (0..40).map(|i| f64::from(i) * 0.1).collect();
        let y: Vec<f64> = (0..40).map(|i| f64::from(i % 3 == 0)).collect();
        let m = knn_fit(&dataset(&x, &y), 15).unwrap();
        for q in [-1.0, 0.5, 2.0, 5.0] {
            let p = m.predict_row(&[q]);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn knn_errors() {
        let d = dataset(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(knn_fit(&d, 0).is_err());
        assert!(knn_fit(&d, 3).is_err());
        let m = knn_fit(&d, 1).unwrap();
        let wide = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(m.predict(&wide).is_err());
    }

    #[test]
    fn ols_noiseless_fits() {
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let m = ols_fit(&dataset(&x, &y)).unwrap();
        assert!((m.theta[0] - 2.0).abs() < 1e-10);

        let rows: Vec<[f64; 2]> = (0..10)
            .map(|i| [f64::from(i), f64::from((i * 7) % 5) - 1.5])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - r[1]).collect();
        let d = LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), y).unwrap();
        let m = ols_fit(&d).unwrap();
        assert!((m.theta[0] - 3.0).abs() < 1e-10);
        assert!((m.theta[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn ols_rank_deficient_is_singular() {
        let rows: Vec<[f64; 2]> = (0..5).map(|i| [f64::from(i), 2.0 * f64::from(i)]).collect();
        let d = LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), vec![1.0; 5]).unwrap();
        assert!(matches!(ols_fit(&d), Err(FppiError::Singular { .. })));
    }

    #[test]
    fn category_means_and_unseen_rows() {
        let d = dataset(&[0.0, 1.0, 0.0, 1.0, 2.0], &[1.0, 5.0, 3.0, 7.0, -1.0]);
        let cm = CategoryMeans::fit(&d);
        assert_eq!(cm.predict_row(&[0.0]), 2.0);
        assert_eq!(cm.predict_row(&[1.0]), 6.0);
        assert_eq!(cm.count(&[2.0]), 1);
        assert!(cm.predict_row(&[3.0]).is_nan());
    }

    #[test]
    fn oracle_spec_parsing() {
        assert_eq!("knn:15".parse::<OracleSpec>().unwrap(), OracleSpec::Knn { k: 15 });
        assert_eq!("ols".parse::<OracleSpec>().unwrap(), OracleSpec::Ols);
        assert_eq!("discrete".parse::<OracleSpec>().unwrap(), OracleSpec::CategoryMean);
        assert!("knn:x".parse::<OracleSpec>().is_err());
        assert!("forest".parse::<OracleSpec>().is_err());
        assert_eq!(OracleSpec::Knn { k: 3 }.to_string(), "knn:3");
    }
}
