//! Weight functions `p̃(x, a)` and target-population rates estimated from
//! training rows.
//!
//! Missing at random is assumed throughout: `Z ⊥ Y | X, A` and
//! `T ⊥ Y | X, A`. Under it, weighting each training row by the propensity
//! ratio `P(T=1 | x, a) / P(Z=1 | x, a)`, or by any per-group multiple of it,
//! turns training rates into target rates. Nothing here can check the
//! assumption.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::dataset::{GroupCode, PopulationSample, SampleView};
use crate::error::{Error, Result};
use crate::policy::{expected_acceptance, GroupPolicy};
use crate::rates::{conditional_cdf, ConditionalCdf};
use crate::scoring::{fit_rows, LogisticScoreModel, DEFAULT_RIDGE};

pub const DEFAULT_CAP: f64 = 10.0;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BINS: usize = 10;

type Evaluator = Arc<dyn Fn(&[f64], GroupCode) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightForm {
    InversePropensity,
    DensityRatio,
    Constant,
    Oracle,
}

/// How covariates are grouped into cells for density ratios.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMap {
    /// Exact values of the listed covariate columns.
    Columns(Vec<usize>),
    /// Per-column quantile bins; all covariates when `columns` is empty.
    QuantileBins { columns: Vec<usize>, bins: usize },
}

impl Default for CellMap {
    fn default() -> Self {
        CellMap::QuantileBins {
            columns: Vec::new(),
            bins: DEFAULT_BINS,
        }
    }
}

/// Cell key: one entry per referenced column, either the raw value bits or
/// a bin index.
type CellKey = Vec<u64>;

#[derive(Clone, Debug, PartialEq)]
enum Binner {
    Exact(Vec<usize>),
    Edges(Vec<(usize, Vec<f64>)>),
}

impl Binner {
    fn key(&self, x: &[f64]) -> CellKey {
        match self {
            Binner::Exact(cols) => cols.iter().map(|&j| x[j].to_bits()).collect(),
            Binner::Edges(cols) => cols
                .iter()
                .map(|(j, edges)| edges.partition_point(|&e| e < x[*j]) as u64)
                .collect(),
        }
    }

    fn describe(&self, key: &CellKey) -> String {
        match self {
            Binner::Exact(_) => key
                .iter()
                .map(|b| f64::from_bits(*b).to_string())
                .collect::<Vec<_>>()
                .join("|"),
            Binner::Edges(_) => key.iter().map(u64::to_string).collect::<Vec<_>>().join("|"),
        }
    }
}

/// One entry of a density-ratio table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellWeight {
    pub cell: String,
    pub group: String,
    pub n_train: usize,
    pub n_target: usize,
    pub weight: f64,
    pub clipped: bool,
}

#[derive(Clone, Debug, PartialEq)]
struct DensityRatio {
    binner: Binner,
    cells: CellMap,
    alpha: f64,
    cap: f64,
    n_groups: usize,
    table: BTreeMap<(CellKey, GroupCode), (f64, bool)>,
    entries: Vec<CellWeight>,
    /// Weight of a (cell, group) pair never observed, when defined.
    unseen: Option<f64>,
}

#[derive(Clone)]
enum Kind {
    InversePropensity { model: LogisticScoreModel, cap: f64 },
    DensityRatio(Box<DensityRatio>),
    Constant(f64),
    Tabulated(Vec<f64>),
    Custom(Evaluator),
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::InversePropensity { cap, .. } => write!(f, "InversePropensity(cap={cap})"),
            Kind::DensityRatio(d) => write!(f, "DensityRatio({} cells)", d.entries.len()),
            Kind::Constant(c) => write!(f, "Constant({c})"),
            Kind::Tabulated(v) => write!(f, "Tabulated({} rows)", v.len()),
            Kind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// An evaluable `p̃(x, a) > 0`.
///
/// A weight function is only meaningful up to a positive per-group factor
/// `r(a)`. Such a factor is kept apart from the base weights
/// (see [`WeightFunction::scaled_by_group`]) and cancels from every
/// within-group rate.
#[derive(Clone, Debug)]
pub struct WeightFunction {
    kind: Kind,
    group_scale: Option<Vec<f64>>,
}

/// Summary of the weights a function assigns to a set of rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSummary {
    pub rows: usize,
    pub clip_count: usize,
    /// Kish effective sample size `(Σw)² / Σw²`.
    pub ess: f64,
    pub min: f64,
    pub max: f64,
}

impl WeightFunction {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::invalid("weight", "constant weight must be positive"));
        }
        Ok(Self::from_kind(Kind::Constant(value)))
    }

    /// Known per-row weights, aligned with the rows of one sample.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if let Some(row) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidWeight {
                row,
                value: values[row],
            });
        }
        Ok(Self::from_kind(Kind::Tabulated(values)))
    }

    /// A caller-supplied evaluator, e.g. a known propensity ratio.
    pub fn oracle(f: impl Fn(&[f64], GroupCode) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_kind(Kind::Custom(Arc::new(f)))
    }

    fn from_kind(kind: Kind) -> Self {
        Self {
            kind,
            group_scale: None,
        }
    }

    /// Multiplies the weights of group `a` by `scale[a]`.
    pub fn scaled_by_group(mut self, scale: Vec<f64>) -> Result<Self> {
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("scale", "group scales must be positive"));
        }
        self.group_scale = Some(match self.group_scale.take() {
            Some(old) => old.iter().zip(&scale).map(|(a, b)| a * b).collect(),
            None => scale,
        });
        Ok(self)
    }

    pub fn form(&self) -> WeightForm {
        match self.kind {
            Kind::InversePropensity { .. } => WeightForm::InversePropensity,
            Kind::DensityRatio(_) => WeightForm::DensityRatio,
            Kind::Constant(_) => WeightForm::Constant,
            Kind::Tabulated(_) | Kind::Custom(_) => WeightForm::Oracle,
        }
    }

    pub fn cap(&self) -> Option<f64> {
        match &self.kind {
            Kind::InversePropensity { cap, .. } => Some(*cap),
            Kind::DensityRatio(d) => Some(d.cap),
            _ => None,
        }
    }

    fn scale_of(&self, group: GroupCode) -> f64 {
        self.group_scale
            .as_ref()
            .map_or(1.0, |s| s.get(group).copied().unwrap_or(1.0))
    }

    /// Base weight and whether it was clipped, without the group factor.
    fn base(&self, x: &[f64], group: GroupCode) -> Result<(f64, bool)> {
        let (w, clipped) = match &self.kind {
            Kind::Constant(c) => (*c, false),
            Kind::Custom(f) => (f(x, group), false),
            Kind::Tabulated(_) => {
                return Err(Error::Precondition(
                    "tabulated weights are indexed by row, not by covariates".into(),
                ))
            }
            Kind::InversePropensity { model, cap } => {
                let eta = model.linear_predictor(x, group)?;
                // 1 / σ(η) = 1 + e^{-η}
                let w = 1.0 + (-eta).exp();
                if w > *cap {
                    (*cap, true)
                } else {
                    (w, false)
                }
            }
            Kind::DensityRatio(d) => match d.table.get(&(d.binner.key(x), group)) {
                Some(&(w, c)) => (w, c),
                None => match d.unseen {
                    Some(w) => (w.min(d.cap), w > d.cap),
                    None => {
                        return Err(Error::Precondition(
                            "cell not covered by the density-ratio table and no smoothing".into(),
                        ))
                    }
                },
            },
        };
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidWeight { row: 0, value: w });
        }
        Ok((w, clipped))
    }

    pub fn evaluate(&self, x: &[f64], group: GroupCode) -> Result<f64> {
        Ok(self.base(x, group)?.0 * self.scale_of(group))
    }

    fn base_rows(&self, sample: &PopulationSample) -> Result<Vec<(f64, bool)>> {
        if let Kind::Tabulated(v) = &self.kind {
            if v.len() != sample.len() {
                return Err(Error::Shape {
                    expected: sample.len(),
                    found: v.len(),
                });
            }
            return Ok(v.iter().map(|&w| (w, false)).collect());
        }
        (0..sample.len())
            .map(|r| {
                self.base(sample.row(r), sample.group(r)).map_err(|e| match e {
                    Error::InvalidWeight { value, .. } => Error::InvalidWeight { row: r, value },
                    other => other,
                })
            })
            .collect()
    }

    /// Weights of every row of `sample`, group factors included.
    pub fn row_weights(&self, sample: &PopulationSample) -> Result<Vec<f64>> {
        Ok(self
            .base_rows(sample)?
            .into_iter()
            .enumerate()
            .map(|(r, (w, _))| w * self.scale_of(sample.group(r)))
            .collect())
    }

    /// Weights with any per-group factor removed. Every within-group rate
    /// uses these, so such a factor cannot change a rate.
    pub fn within_group_weights(&self, sample: &PopulationSample) -> Result<Vec<f64>> {
        Ok(self.base_rows(sample)?.into_iter().map(|(w, _)| w).collect())
    }

    pub fn summary(&self, view: &SampleView<'_>) -> Result<WeightSummary> {
        let sample = view.sample();
        let base = self.base_rows(sample)?;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut clip_count = 0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in view.rows() {
            let (b, clipped) = base[r];
            let w = b * self.scale_of(sample.group(r));
            s1 += w;
            s2 += w * w;
            clip_count += usize::from(clipped);
            lo = lo.min(w);
            hi = hi.max(w);
        }
        Ok(WeightSummary {
            rows: view.len(),
            clip_count,
            ess: if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 },
            min: lo,
            max: hi,
        })
    }

    /// Density-ratio table entries, empty for other forms.
    pub fn table(&self) -> &[CellWeight] {
        match &self.kind {
            Kind::DensityRatio(d) => &d.entries,
            _ => &[],
        }
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let params = match &self.kind {
            Kind::InversePropensity { model, cap } => json!({ "model": model, "cap": cap }),
            Kind::DensityRatio(d) => json!({
                "cells": d.cells,
                "alpha": d.alpha,
                "cap": d.cap,
                "table": d.entries,
            }),
            Kind::Constant(c) => json!({ "value": c }),
            Kind::Tabulated(v) => json!({ "rows": v.len() }),
            Kind::Custom(_) => json!({}),
        };
        Ok(json!({
            "form": self.form(),
            "parameters": params,
            "group_scale": self.group_scale,
        }))
    }

    /// Writes the density-ratio table as CSV `(cell, group, weight, clipped)`.
    pub fn write_table<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "group", "n_train", "n_target", "weight", "clipped"])?;
        for e in self.table() {
            w.write_record([
                e.cell.clone(),
                e.group.clone(),
                e.n_train.to_string(),
                e.n_target.to_string(),
                e.weight.to_string(),
                u8::from(e.clipped).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Fits `P(Z = 1 | X, A)` by logistic regression separately per group on the
/// target rows and weights each row by the clipped reciprocal.
pub fn fit_inclusion_propensity(sample: &PopulationSample) -> Result<WeightFunction> {
    fit_inclusion_propensity_capped(sample, DEFAULT_CAP)
}

pub fn fit_inclusion_propensity_capped(sample: &PopulationSample, cap: f64) -> Result<WeightFunction> {
    if !(cap >= 1.0) {
        return Err(Error::invalid("cap", "clip cap must be at least 1"));
    }
    let rows: Vec<usize> = (0..sample.len()).filter(|&r| sample.targeted(r)).collect();
    let z: Vec<bool> = rows.iter().map(|&r| sample.included(r)).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if z.iter().all(|&v| v) || z.iter().all(|&v| !v) {
        return Err(Error::DegenerateFit("inclusion indicator is constant".into()));
    }
    let model = fit_rows(sample, &rows, &z, true, DEFAULT_RIDGE)?;
    Ok(WeightFunction::from_kind(Kind::InversePropensity { model, cap }))
}

/// Smoothed ratio of target to training cell frequencies,
/// `[(n_T + α) / (N_T + αK)] / [(n_Z + α) / (N_Z + αK)]` with `K` the number of
/// observed cells times the number of groups, clipped at `cap`.
pub fn fit_density_ratio(
    train_view: &SampleView<'_>,
    target_view: &SampleView<'_>,
    cells: &CellMap,
    alpha: f64,
    cap: f64,
) -> Result<WeightFunction> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", "smoothing must be nonnegative"));
    }
    if !(cap > 0.0) {
        return Err(Error::invalid("cap", "clip cap must be positive"));
    }
    let sample = train_view.sample();
    if !std::ptr::eq(sample, target_view.sample()) {
        return Err(Error::Precondition("train and target views must share a sample".into()));
    }
    let p = sample.n_covariates();
    let check_cols = |cols: &[usize]| -> Result<()> {
        match cols.iter().find(|&&j| j >= p) {
            Some(&j) => Err(Error::invalid("cells", format!("covariate index {j} out of range"))),
            None => Ok(()),
        }
    };
    let binner = match cells {
        CellMap::Columns(cols) => {
            check_cols(cols)?;
            Binner::Exact(cols.clone())
        }
        CellMap::QuantileBins { columns, bins } => {
            if *bins == 0 {
                return Err(Error::invalid("bins", "need at least one bin"));
            }
            let cols: Vec<usize> = if columns.is_empty() { (0..p).collect() } else { columns.clone() };
            check_cols(&cols)?;
            let mut union: Vec<usize> = train_view.rows().iter().chain(target_view.rows()).copied().collect();
            union.sort_unstable();
            union.dedup();
            let edges = cols
                .iter()
                .map(|&j| {
                    let mut v: Vec<f64> = union.iter().map(|&r| sample.row(r)[j]).collect();
                    v.sort_by(f64::total_cmp);
                    let mut e: Vec<f64> = (1..*bins)
                        .map(|k| v[((k * v.len()) / bins).min(v.len() - 1)])
                        .collect();
                    e.dedup();
                    (j, e)
                })
                .collect();
            Binner::Edges(edges)
        }
    };
    let m = sample.n_groups();
    let mut counts: BTreeMap<(CellKey, GroupCode), (usize, usize)> = BTreeMap::new();
    for &r in train_view.rows() {
        counts.entry((binner.key(sample.row(r)), sample.group(r))).or_default().0 += 1;
    }
    for &r in target_view.rows() {
        counts.entry((binner.key(sample.row(r)), sample.group(r))).or_default().1 += 1;
    }
    let n_cells = counts.keys().map(|(c, _)| c).collect::<std::collections::BTreeSet<_>>().len();
    let k = (n_cells * m) as f64;
    let (nz, nt) = (train_view.len() as f64, target_view.len() as f64);
    let ratio = |z: usize, t: usize| {
        let num = (t as f64 + alpha) / (nt + alpha * k);
        let den = (z as f64 + alpha) / (nz + alpha * k);
        num / den
    };
    let mut table = BTreeMap::new();
    let mut entries = Vec::with_capacity(counts.len());
    for ((key, g), (z, t)) in &counts {
        let raw = ratio(*z, *t);
        if raw == 0.0 {
            return Err(Error::NoTargetSupport {
                cell: binner.describe(key),
                group: sample.group_label(*g).to_owned(),
            });
        }
        let clipped = raw > cap;
        let w = raw.min(cap);
        table.insert((key.clone(), *g), (w, clipped));
        entries.push(CellWeight {
            cell: binner.describe(key),
            group: sample.group_label(*g).to_owned(),
            n_train: *z,
            n_target: *t,
            weight: w,
            clipped,
        });
    }
    let unseen = (alpha > 0.0).then(|| ratio(0, 0));
    Ok(WeightFunction::from_kind(Kind::DensityRatio(Box::new(DensityRatio {
        binner,
        cells: cells.clone(),
        alpha,
        cap,
        n_groups: m,
        table,
        entries,
        unseen,
    }))))
}

/// Estimated `P(Ŷ = 1 | Y = label, A = group, T = 1)`: the weighted share
/// of expected acceptances among training rows of the cell.
pub fn weighted_rate(
    policy: &GroupPolicy,
    train_view: &SampleView<'_>,
    scores: &[f64],
    weight_fn: &WeightFunction,
    group: GroupCode,
    label: bool,
) -> Result<f64> {
    let w = weight_fn.within_group_weights(train_view.sample())?;
    expected_acceptance(policy, train_view, scores, Some(&w), group, label)
}

/// Score distribution of the cell with row masses proportional to `p̃`.
pub fn weighted_conditional_cdf(
    train_view: &SampleView<'_>,
    scores: &[f64],
    weight_fn: &WeightFunction,
    group: GroupCode,
    label: bool,
) -> Result<ConditionalCdf> {
    let w = weight_fn.within_group_weights(train_view.sample())?;
    conditional_cdf(train_view, scores, group, label, Some(&w))
}
