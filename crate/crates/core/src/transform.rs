//! Feature-space normalization and PCA, fitted on training data and applied
//! unchanged to unseen data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{dot, symmetric_eigen, Square};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// `(x - mean) / var`, or `(x - mean) / std` when configured.
    Variance,
    /// `x / max|x|`.
    MaxAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    kind: NormKind,
    use_std: bool,
    /// Per-dimension mean; all zeros for max-abs normalization.
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Dimensions whose fitted scale was zero and replaced by 1.
    degenerate: Vec<bool>,
}

fn require_rows(train: &FeatureMatrix) -> Result<()> {
    if train.is_empty() {
        Err(Error::EmptyTrainSet)
    } else {
        Ok(())
    }
}

fn column_means(m: &FeatureMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.n_cols()];
    for row in m.rows() {
        for (acc, x) in mean.iter_mut().zip(row) {
            *acc += x;
        }
    }
    let n = m.n_rows() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

/// Fits `(x - mean) / var` with population statistics.
pub fn fit_variance_norm(train: &FeatureMatrix) -> Result<NormalizerState> {
    fit_variance_norm_with(train, false)
}

/// Variance normalization dividing by the standard deviation (z-score) when
/// `use_std` is set, by the variance otherwise.
pub fn fit_variance_norm_with(train: &FeatureMatrix, use_std: bool) -> Result<NormalizerState> {
    require_rows(train)?;
    let mean = column_means(train);
    let mut var = vec![0.0; train.n_cols()];
    for row in train.rows() {
        for ((acc, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (x - m) * (x - m);
        }
    }
    let n = train.n_rows() as f64;
    let mut degenerate = Vec::with_capacity(var.len());
    let scale = var
        .iter()
        .zip(&mean)
        .map(|(&v, m)| {
            let v = v / n;
            // Rounding leaves a residue of order eps * |mean| on constant columns.
            let flat = v.sqrt() <= 1e-12 * m.abs() || v == 0.0;
            degenerate.push(flat);
            if flat {
                1.0
            } else if use_std {
                v.sqrt()
            } else {
                v
            }
        })
        .collect();
    Ok(NormalizerState {
        kind: NormKind::Variance,
        use_std,
        mean,
        scale,
        degenerate,
    })
}

/// Fits `x / max|x|` per dimension.
pub fn fit_maxabs_norm(train: &FeatureMatrix) -> Result<NormalizerState> {
    require_rows(train)?;
    let mut max = vec![0.0f64; train.n_cols()];
    for row in train.rows() {
        for (m, x) in max.iter_mut().zip(row) {
            *m = m.max(x.abs());
        }
    }
    let degenerate: Vec<bool> = max.iter().map(|&m| m == 0.0).collect();
    let scale = max.iter().map(|&m| if m == 0.0 { 1.0 } else { m }).collect();
    Ok(NormalizerState {
        kind: NormKind::MaxAbs,
        use_std: false,
        mean: vec![0.0; train.n_cols()],
        scale,
        degenerate,
    })
}

/// Fits the normalizer of the given kind.
pub fn fit_norm(kind: NormKind, train: &FeatureMatrix, use_std: bool) -> Result<NormalizerState> {
    match kind {
        NormKind::Variance => fit_variance_norm_with(train, use_std),
        NormKind::MaxAbs => fit_maxabs_norm(train),
    }
}

impl NormalizerState {
    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn dims(&self) -> usize {
        self.scale.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

/// Principal axes fitted on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaState {
    mean: Vec<f64>,
    /// `k` orthonormal rows of length `d`.
    components: Vec<Vec<f64>>,
    explained_variances: Vec<f64>,
}

/// PCA via the eigendecomposition of the sample covariance (or of the Gram
/// matrix when there are fewer rows than dimensions).
pub fn fit_pca(train: &FeatureMatrix, k: usize) -> Result<PcaState> {
    require_rows(train)?;
    let n = train.n_rows();
    let d = train.n_cols();
    let max = (n - 1).min(d);
    if k > max {
        return Err(Error::KTooLarge { k, max });
    }
    let mean = column_means(train);
    let centered: Vec<Vec<f64>> = train
        .rows()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let denom = (n - 1) as f64;

    let (mut components, mut variances) = if d > n {
        gram_route(&centered, k, denom).unwrap_or_else(|| covariance_route(&centered, d, k, denom))
    } else {
        covariance_route(&centered, d, k, denom)
    };
    for (c, v) in components.iter_mut().zip(variances.iter_mut()) {
        *v = v.max(0.0);
        // Largest-magnitude entry positive, so the sign is reproducible.
        let pivot = c
            .iter()
            .cloned()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(PcaState {
        mean,
        components,
        explained_variances: variances,
    })
}

fn covariance_route(centered: &[Vec<f64>], d: usize, k: usize, denom: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let cov: Square = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; d];
            for x in centered {
                let xi = x[i];
                if xi != 0.0 {
                    for (r, xj) in row.iter_mut().zip(x) {
                        *r += xi * xj;
                    }
                }
            }
            row.iter_mut().for_each(|v| *v /= denom);
            row
        })
        .collect();
    let eig = symmetric_eigen(&cov);
    (
        eig.vectors.into_iter().take(k).collect(),
        eig.values.into_iter().take(k).collect(),
    )
}

/// Components from the eigenvectors of `X Xᵀ`; `None` if one of the wanted
/// eigenvalues is numerically zero.
fn gram_route(centered: &[Vec<f64>], k: usize, denom: f64) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = centered.len();
    let gram: Square = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| dot(&centered[i], &centered[j]) / denom).collect())
        .collect();
    let eig = symmetric_eigen(&gram);
    let top = eig.values.first().copied().unwrap_or(0.0);
    let d = centered[0].len();
    let mut components = Vec::with_capacity(k);
    for (lambda, u) in eig.values.iter().zip(&eig.vectors).take(k) {
        if !(*lambda > 1e-10 * top) {
            return None;
        }
        let mut v = vec![0.0; d];
        for (x, &w) in centered.iter().zip(u) {
            for (acc, xi) in v.iter_mut().zip(x) {
                *acc += w * xi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        components.push(v);
    }
    Some((components, eig.values.into_iter().take(k).collect()))
}

impl PcaState {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variances(&self) -> &[f64] {
        &self.explained_variances
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.iter().map(|c| dot(c, &centered)).collect()
    }

    pub fn reconstruct_row(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &p) in self.components.iter().zip(projected) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += p * ci;
            }
        }
        out
    }

    /// Projects and back-projects every row of `matrix`.
    pub fn reconstruct(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        check_dims(self.dims(), matrix)?;
        let data = matrix
            .rows()
            .flat_map(|r| self.reconstruct_row(&self.project_row(r)))
            .collect();
        matrix.with_data(data, matrix.names().to_vec())
    }
}

fn check_dims(expected: usize, matrix: &FeatureMatrix) -> Result<()> {
    if matrix.n_cols() != expected {
        return Err(Error::DimMismatch {
            expected,
            found: matrix.n_cols(),
        });
    }
    Ok(())
}

/// A fitted row-wise transform.
pub trait Transform {
    fn input_dims(&self) -> usize;

    fn output_names(&self, input: &FeatureMatrix) -> Vec<String>;

    fn transform_row(&self, row: &[f64]) -> Vec<f64>;

    /// Transforms every row; labels are carried over.
    fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix>
    where
        Self: Sync,
    {
        check_dims(self.input_dims(), matrix)?;
        let rows: Vec<Vec<f64>> = (0..matrix.n_rows())
            .into_par_iter()
            .map(|i| self.transform_row(matrix.row(i)))
            .collect();
        matrix.with_data(rows.concat(), self.output_names(matrix))
    }
}

impl Transform for NormalizerState {
    fn input_dims(&self) -> usize {
        self.dims()
    }

    fn output_names(&self, input: &FeatureMatrix) -> Vec<String> {
        input.names().to_vec()
    }

    fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.apply_row(row)
    }
}

impl Transform for PcaState {
    fn input_dims(&self) -> usize {
        self.dims()
    }

    fn output_names(&self, _input: &FeatureMatrix) -> Vec<String> {
        (1..=self.k()).map(|j| format!("pc_{j:03}")).collect()
    }

    fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.project_row(row)
    }
}

/// Free-function form of [`Transform::apply`].
pub fn apply<T: Transform + Sync>(state: &T, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    state.apply(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn variance_norm_divides_by_variance() {
        let st = fit_variance_norm(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(st.mean(), [2.0]);
        assert!((st.scale()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(st.apply_row(&[2.0]), vec![0.0]);
        assert!((st.apply_row(&[3.0])[0] - 1.5).abs() < 1e-12);

        let z = fit_variance_norm_with(&col(&[1.0, 2.0, 3.0]), true).unwrap();
        assert!((z.apply_row(&[3.0])[0] - 1.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_flagged() {
        let m = col(&[5.0, 5.0, 5.0]);
        let st = fit_variance_norm(&m).unwrap();
        assert_eq!(st.degenerate(), [true]);
        assert!(st.apply(&m).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxabs_semantics() {
        let st = fit_maxabs_norm(&col(&[-2.0, 1.0])).unwrap();
        assert_eq!(st.scale(), [2.0]);
        assert_eq!(st.apply_row(&[-2.0]), vec![-1.0]);
        assert_eq!(st.apply_row(&[1.0]), vec![0.5]);
        assert_eq!(st.apply_row(&[4.0]), vec![2.0]);

        let zero = col(&[0.0, 0.0]);
        let st = fit_maxabs_norm(&zero).unwrap();
        assert_eq!(st.degenerate(), [true]);
        assert_eq!(st.apply(&zero).unwrap().data(), [0.0, 0.0]);
    }

    #[test]
    fn dim_mismatch() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64; 25]).collect();
        let st = fit_maxabs_norm(&FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
        let narrow: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64; 24]).collect();
        assert!(matches!(
            st.apply(&FeatureMatrix::from_rows(&narrow).unwrap()),
            Err(Error::DimMismatch { expected: 25, found: 24 })
        ));
        assert!(fit_maxabs_norm(&FeatureMatrix::from_rows(&[]).unwrap()).is_err());
    }

    #[test]
    fn pca_on_a_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let st = fit_pca(&FeatureMatrix::from_rows(&rows).unwrap(), 2).unwrap();
        let c = &st.components()[0];
        assert!((c[0] - 0.5f64.sqrt()).abs() < 1e-12 && (c[1] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(st.explained_variances()[1].abs() < 1e-12);
    }

    #[test]
    fn pca_k_bounds_and_shapes() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        assert!(matches!(fit_pca(&m, 4), Err(Error::KTooLarge { k: 4, max: 3 })));
        let st = fit_pca(&m, 2).unwrap();
        let out = st.apply(&m).unwrap();
        assert_eq!((out.n_rows(), out.n_cols()), (4, 2));
    }

    #[test]
    fn gram_route_agrees_with_covariance_route() {
        // 5 rows, 8 columns: fit_pca takes the Gram route.
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..8).map(|j| ((i * 31 + j * 17) % 11) as f64 + 0.1 * (i * j) as f64).collect())
            .collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let gram = fit_pca(&m, 3).unwrap();
        let mean = column_means(&m);
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect();
        let (cov_c, cov_v) = covariance_route(&centered, 8, 3, 4.0);
        for j in 0..3 {
            assert!((gram.explained_variances()[j] - cov_v[j]).abs() < 1e-9);
            let overlap = dot(&gram.components()[j], &cov_c[j]).abs();
            assert!((overlap - 1.0).abs() < 1e-9);
        }
    }
}
