//! Logistic score models fit by damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{GroupCode, PopulationSample, SampleView};
use crate::error::{Error, Result};
use crate::numeric::{log1p_exp, sigmoid};

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub iterations: usize,
    pub gradient_max_norm: f64,
    pub converged: bool,
    /// The fitted predictor classifies every training row correctly, so the
    /// ridge term is what keeps the coefficients finite.
    pub separated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticScoreModel {
    pub per_group: bool,
    /// One entry per group when `per_group`, otherwise a single entry.
    pub intercepts: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub label_map: Vec<String>,
    pub ridge: f64,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub metadata: Vec<FitMetadata>,
}

impl LogisticScoreModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    fn params(&self, group: GroupCode) -> Result<(f64, &[f64])> {
        let k = if self.per_group { group } else { 0 };
        match (self.intercepts.get(k), self.coefficients.get(k)) {
            (Some(&b0), Some(beta)) => Ok((b0, beta)),
            _ => Err(Error::MissingPolicy(group)),
        }
    }

    pub fn linear_predictor(&self, x: &[f64], group: GroupCode) -> Result<f64> {
        let (b0, beta) = self.params(group)?;
        if x.len() != beta.len() {
            return Err(Error::Shape {
                expected: beta.len(),
                found: x.len(),
            });
        }
        Ok(b0 + beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        let p = model.n_features();
        let k = if model.per_group { model.label_map.len() } else { 1 };
        if model.intercepts.len() != k
            || model.coefficients.len() != k
            || model.coefficients.iter().any(|c| c.len() != p)
        {
            return Err(Error::Schema("model parameter arrays have inconsistent lengths".into()));
        }
        if model
            .intercepts
            .iter()
            .chain(model.coefficients.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Schema("model parameters must be finite".into()));
        }
        Ok(model)
    }
}

/// Penalized mean log-likelihood of a logistic model,
/// `(1/n) Σ [y η − log(1 + e^η)] − (ridge/2) ‖β‖²` with `η = β·(1, x)`.
/// Parameters are ordered intercept first.
#[derive(Clone, Debug)]
pub struct LogisticProblem {
    design: DMatrix<f64>,
    labels: DVector<f64>,
    ridge: f64,
}

impl LogisticProblem {
    /// `x` is row-major with `p` columns; an intercept column is prepended.
    pub fn new(x: &[f64], p: usize, labels: &[bool], ridge: f64) -> Result<Self> {
        let n = labels.len();
        if x.len() != n * p {
            return Err(Error::Shape {
                expected: n * p,
                found: x.len(),
            });
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i * p + j - 1] });
        let labels = DVector::from_iterator(n, labels.iter().map(|&y| f64::from(u8::from(y))));
        Ok(Self {
            design,
            labels,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        let eta = &self.design * &b;
        let n = self.labels.len() as f64;
        let ll: f64 = eta
            .iter()
            .zip(self.labels.iter())
            .map(|(&e, &y)| y * e - log1p_exp(e))
            .sum();
        ll / n - 0.5 * self.ridge * b.norm_squared()
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        self.gradient_vec(&b).as_slice().to_vec()
    }

    fn gradient_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let eta = &self.design * b;
        let n = self.labels.len() as f64;
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.labels.iter()).map(|(&e, &y)| y - sigmoid(e)),
        );
        self.design.tr_mul(&resid) / n - b * self.ridge
    }

    /// Negative Hessian, always positive definite for `ridge > 0`.
    fn curvature(&self, b: &DVector<f64>) -> DMatrix<f64> {
        let eta = &self.design * b;
        let n = self.labels.len() as f64;
        let mut weighted = self.design.clone();
        for (i, &e) in eta.iter().enumerate() {
            let s = sigmoid(e);
            let w = s * (1.0 - s);
            weighted.row_mut(i).scale_mut(w);
        }
        let mut h = self.design.tr_mul(&weighted) / n;
        for j in 0..h.ncols() {
            h[(j, j)] += self.ridge;
        }
        h
    }

    /// Maximizes the objective from zero.
    pub fn solve(&self) -> (Vec<f64>, FitMetadata) {
        let mut b = DVector::zeros(self.dim());
        let mut f = self.objective(b.as_slice());
        let mut meta = FitMetadata::default();
        for it in 0..=MAX_ITERATIONS {
            let g = self.gradient_vec(&b);
            meta.iterations = it;
            meta.gradient_max_norm = g.amax();
            if meta.gradient_max_norm <= GRADIENT_TOLERANCE {
                meta.converged = true;
                break;
            }
            if it == MAX_ITERATIONS {
                break;
            }
            let step = match self.curvature(&b).cholesky() {
                Some(c) => c.solve(&g),
                None => g.clone(),
            };
            let slope = g.dot(&step);
            let mut t = 1.0;
            loop {
                let cand = &b + &step * t;
                let fc = self.objective(cand.as_slice());
                if fc >= f + 1e-4 * t * slope || t < 1e-12 {
                    b = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
            }
        }
        let eta = &self.design * &b;
        meta.separated = eta
            .iter()
            .zip(self.labels.iter())
            .all(|(&e, &y)| (y > 0.5 && e > 0.0) || (y < 0.5 && e < 0.0));
        (b.as_slice().to_vec(), meta)
    }
}

/// Fits `P(label = 1 | x)` (pooled) or `P(label = 1 | x, a)` (separately per
/// group) on the given rows.
pub(crate) fn fit_rows(
    sample: &PopulationSample,
    rows: &[usize],
    labels: &[bool],
    per_group: bool,
    ridge: f64,
) -> Result<LogisticScoreModel> {
    let p = sample.n_covariates();
    let m = sample.n_groups();
    let blocks: Vec<Vec<usize>> = if per_group {
        (0..m)
            .map(|g| (0..rows.len()).filter(|&k| sample.group(rows[k]) == g).collect())
            .collect()
    } else {
        vec![(0..rows.len()).collect()]
    };
    let mut intercepts = Vec::with_capacity(blocks.len());
    let mut coefficients = Vec::with_capacity(blocks.len());
    let mut metadata = Vec::with_capacity(blocks.len());
    for (k, block) in blocks.iter().enumerate() {
        let y: Vec<bool> = block.iter().map(|&i| labels[i]).collect();
        let positives = y.iter().filter(|&&v| v).count();
        if positives == 0 || positives == y.len() {
            let scope = if per_group {
                format!("group `{}`", sample.group_label(k))
            } else {
                "training data".to_string()
            };
            return Err(Error::DegenerateFit(format!("{scope} has a single outcome class")));
        }
        let x: Vec<f64> = block.iter().flat_map(|&i| sample.row(rows[i]).iter().copied()).collect();
        let problem = LogisticProblem::new(&x, p, &y, ridge)?;
        let (beta, meta) = problem.solve();
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateFit("non-finite coefficients".into()));
        }
        intercepts.push(beta[0]);
        coefficients.push(beta[1..].to_vec());
        metadata.push(meta);
    }
    Ok(LogisticScoreModel {
        per_group,
        intercepts,
        coefficients,
        label_map: sample.label_map().to_vec(),
        ridge,
        covariates: sample.covariate_names().to_vec(),
        metadata,
    })
}

/// Maximum-likelihood logistic fit of `Y` on the covariates of the view.
pub fn fit_logistic(training: &SampleView<'_>, per_group: bool) -> Result<LogisticScoreModel> {
    training.require_outcomes()?;
    let sample = training.sample();
    let labels: Vec<bool> = training
        .rows()
        .iter()
        .map(|&r| sample.outcome(r).unwrap_or(false))
        .collect();
    fit_rows(sample, training.rows(), &labels, per_group, DEFAULT_RIDGE)
}

/// `σ(intercept + β·x)` per row; `covariates` is row-major.
pub fn predict_score(
    model: &LogisticScoreModel,
    covariates: &[f64],
    groups: &[GroupCode],
) -> Result<Vec<f64>> {
    let p = model.n_features();
    if covariates.len() != groups.len() * p {
        return Err(Error::Shape {
            expected: groups.len() * p,
            found: covariates.len(),
        });
    }
    groups
        .iter()
        .enumerate()
        .map(|(i, &g)| Ok(sigmoid(model.linear_predictor(&covariates[i * p..(i + 1) * p], g)?)))
        .collect()
}

pub fn predict_sample(model: &LogisticScoreModel, sample: &PopulationSample) -> Result<Vec<f64>> {
    if sample.n_covariates() != model.n_features() {
        return Err(Error::Shape {
            expected: model.n_features(),
            found: sample.n_covariates(),
        });
    }
    predict_score(model, sample.covariates(), sample.groups())
}
