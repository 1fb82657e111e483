//! Synthetic populations with known ground truth.
//!
//! Every row draws from its own ChaCha stream keyed on `(seed, row)`, with
//! the columns consumed in a fixed order, so a sample does not depend on
//! generation order and prefixes of larger samples agree row for row.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::PopulationSample;
use crate::error::{Error, Result};
use crate::numeric::sigmoid;

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoanScenarioSpec {
    pub n: usize,
    pub seed: u64,
    pub means: [[f64; 2]; 2],
    pub betas: [[f64; 2]; 2],
    /// Share of group 0.
    pub share_0: f64,
}

impl Default for LoanScenarioSpec {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: 0,
            means: [[1.0, 0.0], [0.0, 1.0]],
            betas: [[1.0, -1.0], [1.25, -1.0]],
            share_0: 0.5,
        }
    }
}

impl LoanScenarioSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.share_0 > 0.0 && self.share_0 < 1.0) {
            return Err(Error::invalid("share_0", "must lie in (0, 1)"));
        }
        if self.means.iter().chain(&self.betas).flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("means/betas", "must be finite"));
        }
        Ok(())
    }

    fn linear(&self, x: [f64; 2], a: usize) -> f64 {
        self.betas[a][0] * x[0] + self.betas[a][1] * x[1]
    }

    /// `P(Y = 1 | X = x, A = a)`.
    pub fn aware_score(&self, x: [f64; 2], a: usize) -> f64 {
        sigmoid(self.linear(x, a))
    }

    /// `P(Z = 1 | X = x, A = a)`.
    pub fn inclusion_propensity(&self, x: [f64; 2], a: usize) -> f64 {
        sigmoid(self.linear(x, a))
    }

    /// `P(Y = 1 | X = x, A = a, Z = 1)`, from the joint of the two
    /// conditionally independent draws.
    pub fn included_aware_score(&self, x: [f64; 2], a: usize) -> f64 {
        let (y, z) = (self.aware_score(x, a), self.inclusion_propensity(x, a));
        y * z / z
    }

    /// `P(A = a | X = x)` from the Gaussian class densities and shares.
    pub fn group_posterior(&self, x: [f64; 2], a: usize) -> f64 {
        let log_density = |g: usize| {
            let d0 = x[0] - self.means[g][0];
            let d1 = x[1] - self.means[g][1];
            -0.5 * (d0 * d0 + d1 * d1)
        };
        let shares = [self.share_0, 1.0 - self.share_0];
        // Logit of group 1 versus group 0.
        let logit = (shares[1].ln() + log_density(1)) - (shares[0].ln() + log_density(0));
        let p1 = sigmoid(logit);
        if a == 1 {
            p1
        } else {
            sigmoid(-logit)
        }
    }

    /// `P(Y = 1 | X = x)`, marginalizing the group.
    pub fn blind_score(&self, x: [f64; 2]) -> f64 {
        (0..2).map(|a| self.aware_score(x, a) * self.group_posterior(x, a)).sum()
    }
}

/// Exact per-row quantities for a synthetic sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleBundle {
    pub score_blind: Vec<f64>,
    pub score_aware: Vec<f64>,
    /// `P(Z = 1 | X, A)` for each row; `P(T = 1 | X, A) = 1`.
    pub propensity: Vec<f64>,
}

impl OracleBundle {
    pub fn len(&self) -> usize {
        self.propensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.propensity.is_empty()
    }

    /// Propensity ratios `P(T=1|x,a) / P(Z=1|x,a)`.
    pub fn ratio_weights(&self) -> Vec<f64> {
        self.propensity.iter().map(|p| 1.0 / p).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "true_score_blind", "true_score_aware", "true_propensity"])?;
        for r in 0..self.len() {
            w.write_record([
                r.to_string(),
                self.score_blind[r].to_string(),
                self.score_aware[r].to_string(),
                self.propensity[r].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<oracle>".into(),
            source: e,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let headers = rd.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("oracle file lacks column `{name}`")))
        };
        let cols = [find("true_score_blind")?, find("true_score_aware")?, find("true_propensity")?];
        let mut out = Self::default();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let mut vals = [0.0; 3];
            for (v, &c) in vals.iter_mut().zip(&cols) {
                let field = rec.get(c).unwrap_or("");
                *v = field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: headers[c].to_owned(),
                    message: e.to_string(),
                })?;
            }
            if !(vals[2] > 0.0 && vals[2] <= 1.0) {
                return Err(Error::InvalidWeight { row, value: vals[2] });
            }
            out.score_blind.push(vals[0]);
            out.score_aware.push(vals[1]);
            out.propensity.push(vals[2]);
        }
        Ok(out)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Draws the loan scenario. Every row carries its outcome; censoring the
/// excluded rows is left to the caller.
pub fn generate_loan(spec: &LoanScenarioSpec) -> Result<(PopulationSample, OracleBundle)> {
    spec.validate()?;
    let n = spec.n;
    let mut covs = Vec::with_capacity(2 * n);
    let mut groups = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut included = Vec::with_capacity(n);
    let mut oracle = OracleBundle::default();
    for r in 0..n {
        let mut rng = row_rng(spec.seed, r);
        let a = usize::from(rng.random::<f64>() >= spec.share_0);
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let x = [spec.means[a][0] + e0, spec.means[a][1] + e1];
        let py = spec.aware_score(x, a);
        let pz = spec.inclusion_propensity(x, a);
        let y = rng.random::<f64>() < py;
        let z = rng.random::<f64>() < pz;
        covs.extend_from_slice(&x);
        groups.push(a);
        outcomes.push(Some(y));
        included.push(z);
        oracle.score_blind.push(spec.blind_score(x));
        oracle.score_aware.push(py);
        oracle.propensity.push(pz);
    }
    let sample = PopulationSample::from_codes(
        vec!["x_1".into(), "x_2".into()],
        covs,
        groups,
        vec!["0".into(), "1".into()],
        outcomes,
        included,
        Some(vec![true; n]),
    )?;
    Ok((sample, oracle))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileCensorSpec {
    /// Index of the censoring covariate.
    pub feature: usize,
    pub q: f64,
}

impl QuantileCensorSpec {
    pub fn new(feature: usize) -> Self {
        Self { feature, q: 0.1 }
    }
}

/// Overwrites `Z` with `T = 1 and X_j > x_(k)`, where `x_(k)` is the k-th
/// smallest value of `X_j` among target rows and `k = ⌊q · n_T⌋`. With
/// `k = 0` nothing is censored.
pub fn generate_quantile_censoring(spec: &QuantileCensorSpec, sample: &PopulationSample) -> Result<PopulationSample> {
    if !(spec.q > 0.0 && spec.q < 1.0) {
        return Err(Error::invalid("q", "must lie in (0, 1)"));
    }
    let p = sample.n_covariates();
    if spec.feature >= p {
        return Err(Error::invalid("feature", format!("index {} but the sample has {p} covariates", spec.feature)));
    }
    let mut values: Vec<f64> = (0..sample.len())
        .filter(|&r| sample.targeted(r))
        .map(|r| sample.row(r)[spec.feature])
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    values.sort_by(f64::total_cmp);
    let name = &sample.covariate_names()[spec.feature];
    if values[0] == values[values.len() - 1] {
        return Err(Error::QuantileUndefined(format!("covariate `{name}` is constant on the target rows")));
    }
    let k = (spec.q * values.len() as f64).floor() as usize;
    let cut = if k == 0 { f64::NEG_INFINITY } else { values[k - 1] };
    let included = (0..sample.len())
        .map(|r| sample.targeted(r) && sample.row(r)[spec.feature] > cut)
        .collect();
    sample.with_included(included)
}

/// Credit-style analog: a lower-income protected group and two candidate
/// censoring features, income and a version decoupled from the group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreditScenarioSpec {
    pub n: usize,
    pub seed: u64,
    /// Mean income deficit of group 1 in standard-deviation units.
    pub income_gap: f64,
    /// Extra noise of the decoupled feature within group 0.
    pub decoupled_noise: f64,
    pub intercept: f64,
    pub slope: f64,
}

impl Default for CreditScenarioSpec {
    fn default() -> Self {
        Self {
            n: 50_000,
            seed: 0,
            // Gives corr(income, A) ≈ −0.32 at equal shares.
            income_gap: 0.6755,
            decoupled_noise: 1.5,
            intercept: 0.5,
            slope: 1.5,
        }
    }
}

/// Columns `x_inc` and `x_inc_per`; every row is targeted and included.
/// Returns the sample and the exact score `P(Y = 1 | X)`.
pub fn generate_credit(spec: &CreditScenarioSpec) -> Result<(PopulationSample, Vec<f64>)> {
    if ![spec.income_gap, spec.decoupled_noise, spec.intercept, spec.slope]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::invalid("credit scenario", "parameters must be finite"));
    }
    let n = spec.n;
    let mut covs = Vec::with_capacity(2 * n);
    let mut groups = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for r in 0..n {
        let mut rng = row_rng(spec.seed, r);
        let a = usize::from(rng.random::<f64>() >= 0.5);
        let e: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.sample(StandardNormal);
        let income = e - spec.income_gap * a as f64;
        let per = income + spec.income_gap * a as f64 + spec.decoupled_noise * (1 - a) as f64 * u;
        let p = sigmoid(spec.intercept + spec.slope * income);
        covs.extend_from_slice(&[income, per]);
        groups.push(a);
        outcomes.push(Some(rng.random::<f64>() < p));
        scores.push(p);
    }
    let sample = PopulationSample::from_codes(
        vec!["x_inc".into(), "x_inc_per".into()],
        covs,
        groups,
        vec!["0".into(), "1".into()],
        outcomes,
        vec![true; n],
        Some(vec![true; n]),
    )?;
    Ok((sample, scores))
}
