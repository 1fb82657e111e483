//! Exact empirical score distributions.
//!
//! Everything here is an exact step function over the observed scores: no
//! binning, no interpolation. `F(θ) = P(R ≤ θ | Y = y, A = a, E)` is
//! right-continuous; between support points it is constant, so any
//! comparison of such functions only has to look at the merged support.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{Event, GroupCode, SampleView};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// A decision threshold, or the sentinel lying strictly below every score.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub const BELOW_SUPPORT: Threshold = Threshold(f64::NEG_INFINITY);

    pub fn at(value: f64) -> Self {
        Threshold(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_below_support(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_below_support() {
            f.write_str("below_support")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_below_support() {
            s.serialize_str("below_support")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(Threshold(v)),
            Repr::Text(t) if t == "below_support" => Ok(Threshold::BELOW_SUPPORT),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"below_support\", found \"{t}\""
            ))),
        }
    }
}

/// What a distribution conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditioning {
    pub event: Event,
    pub group: GroupCode,
    pub label: bool,
    pub weighted: bool,
}

/// Weighted empirical CDF of the score within one (event, group, label) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalCdf {
    support: Vec<f64>,
    mass: Vec<f64>,
    cumulative: Vec<f64>,
    conditioning: Conditioning,
}

impl ConditionalCdf {
    /// Builds the distribution of `(score, weight)` pairs. Equal scores merge
    /// into one atom. Weights are rescaled by their maximum first, so a
    /// constant weight vector reproduces the unweighted CDF bit for bit.
    pub fn from_points(mut points: Vec<(f64, f64)>, conditioning: Conditioning) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("empty distribution".into()));
        }
        let max_w = points.iter().map(|p| p.1).fold(0.0, f64::max);
        if !(max_w > 0.0 && max_w.is_finite()) {
            return Err(Error::Precondition("weights must be positive".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::new();
        let mut raw: Vec<f64> = Vec::new();
        for (s, w) in points {
            let w = w / max_w;
            match support.last() {
                Some(&last) if last == s => *raw.last_mut().expect("nonempty") += w,
                _ => {
                    support.push(s);
                    raw.push(w);
                }
            }
        }
        let mut total = CompensatedSum::default();
        for &w in &raw {
            total.add(w);
        }
        let total = total.value();
        let mut running = CompensatedSum::default();
        let mut cumulative = Vec::with_capacity(raw.len());
        for &w in &raw {
            running.add(w);
            cumulative.push((running.value() / total).min(1.0));
        }
        *cumulative.last_mut().expect("nonempty") = 1.0;
        let mass = raw.iter().map(|w| w / total).collect();
        Ok(Self {
            support,
            mass,
            cumulative,
            conditioning,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `F` at each support point.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        *self.support.last().expect("nonempty")
    }

    /// `F(θ) = P(R ≤ θ)`.
    pub fn eval(&self, theta: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= theta);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `P(R < θ)`.
    pub fn eval_below(&self, theta: f64) -> f64 {
        let k = self.support.partition_point(|&s| s < theta);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `P(R = θ)`.
    pub fn atom(&self, theta: f64) -> f64 {
        match self.support.binary_search_by(|s| s.total_cmp(&theta)) {
            Ok(i) => self.mass[i],
            Err(_) => 0.0,
        }
    }

    /// Generalized inverse `inf{θ ∈ support : F(θ) ≥ q}`; `q = 0` maps to
    /// [`Threshold::BELOW_SUPPORT`].
    pub fn inverse(&self, q: f64) -> Threshold {
        match self.inverse_index(q) {
            None => Threshold::BELOW_SUPPORT,
            Some(i) => Threshold(self.support[i]),
        }
    }

    /// Support index of the generalized inverse, `None` for `q <= 0`.
    pub fn inverse_index(&self, q: f64) -> Option<usize> {
        if q <= 0.0 {
            return None;
        }
        let i = self.cumulative.partition_point(|&c| c < q);
        Some(i.min(self.support.len() - 1))
    }

    /// Probability that a rule accepting scores above `theta`, and scores
    /// equal to it with probability `q`, accepts a draw from this cell.
    pub fn acceptance(&self, theta: Threshold, q: f64) -> f64 {
        if theta.is_below_support() {
            return 1.0;
        }
        1.0 - self.eval(theta.0) + q * self.atom(theta.0)
    }
}

/// Free-function form of [`ConditionalCdf::inverse`].
pub fn inverse_cdf(cdf: &ConditionalCdf, q: f64) -> Result<Threshold> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("q", format!("{q} is not in [0, 1]")));
    }
    Ok(cdf.inverse(q))
}

pub(crate) fn check_scores(scores: &[f64], n: usize) -> Result<()> {
    if scores.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: scores.len(),
        });
    }
    if let Some(row) = scores
        .iter()
        .position(|s| !(0.0..=1.0).contains(s) || s.is_nan())
    {
        return Err(Error::InvalidScore {
            row,
            value: scores[row],
        });
    }
    Ok(())
}

pub(crate) fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<()> {
    let Some(w) = weights else { return Ok(()) };
    if w.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: w.len(),
        });
    }
    if let Some(row) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidWeight { row, value: w[row] });
    }
    Ok(())
}

pub(crate) fn undefined(view: &SampleView<'_>, group: GroupCode, label: bool) -> Error {
    Error::UndefinedRate {
        group: view.sample().group_label(group).to_owned(),
        label: label as u8,
        event: view.event(),
    }
}

/// Empirical CDF of the score among rows of `group` with outcome `label` in
/// `view`, optionally weighted per row.
pub fn conditional_cdf(
    view: &SampleView<'_>,
    scores: &[f64],
    group: GroupCode,
    label: bool,
    weights: Option<&[f64]>,
) -> Result<ConditionalCdf> {
    let n = view.sample().len();
    check_scores(scores, n)?;
    check_weights(weights, n)?;
    view.require_outcomes()?;
    let points: Vec<(f64, f64)> = view
        .cell(group, label)
        .map(|r| (scores[r], weights.map_or(1.0, |w| w[r])))
        .collect();
    if points.is_empty() {
        return Err(undefined(view, group, label));
    }
    ConditionalCdf::from_points(
        points,
        Conditioning {
            event: view.event(),
            group,
            label,
            weighted: weights.is_some(),
        },
    )
}

/// Sorted union of several supports.
pub fn merged_support<'a>(cdfs: impl IntoIterator<Item = &'a ConditionalCdf>) -> Vec<f64> {
    let mut all: Vec<f64> = cdfs
        .into_iter()
        .flat_map(|c| c.support.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// `Δ(θ) = F^{train}(θ) − F^{target}(θ)`: the target TPR minus the training
/// TPR of the threshold rule at θ.
#[derive(Clone, Debug)]
pub struct DeltaCurve {
    train: ConditionalCdf,
    target: ConditionalCdf,
}

impl DeltaCurve {
    pub fn train(&self) -> &ConditionalCdf {
        &self.train
    }

    pub fn target(&self) -> &ConditionalCdf {
        &self.target
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.train.eval(theta) - self.target.eval(theta)
    }

    pub fn support(&self) -> Vec<f64> {
        merged_support([&self.train, &self.target])
    }

    /// Δ of a possibly randomized operating point: training minus target
    /// expected false-negative rate. Equals `eval(θ)` when neither CDF has an
    /// atom at θ.
    pub fn at_operating_point(&self, theta: Threshold, q: f64) -> f64 {
        self.target.acceptance(theta, q) - self.train.acceptance(theta, q)
    }
}

pub fn delta_curve(train_cdf: &ConditionalCdf, target_cdf: &ConditionalCdf) -> Result<DeltaCurve> {
    let (a, b) = (train_cdf.conditioning(), target_cdf.conditioning());
    if a.group != b.group || a.label != b.label {
        return Err(Error::ConditioningMismatch(format!(
            "train conditions on group {} label {}, target on group {} label {}",
            a.group, a.label as u8, b.group, b.label as u8
        )));
    }
    Ok(DeltaCurve {
        train: train_cdf.clone(),
        target: target_cdf.clone(),
    })
}

/// One vertex of an empirical ROC curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocVertex {
    pub fpr: f64,
    pub tpr: f64,
    /// The vertex is the rule accepting scores `>= accept_from`; the first
    /// vertex accepts nothing and carries `+inf`.
    pub accept_from: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub group: GroupCode,
    pub event: Event,
    /// From (0, 0) to (1, 1), one vertex per distinct score in between.
    pub points: Vec<RocVertex>,
}

impl RocCurve {
    /// Area under the piecewise-linear curve; tied scores count one half.
    pub fn auc(&self) -> f64 {
        let mut area = CompensatedSum::default();
        for w in self.points.windows(2) {
            area.add((w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0);
        }
        area.value()
    }

    /// Distinct scores, descending; vertex `j >= 1` accepts scores `>= scores[j - 1]`.
    pub fn scores_descending(&self) -> Vec<f64> {
        self.points[1..].iter().map(|p| p.accept_from).collect()
    }
}

pub fn roc_curve(
    view: &SampleView<'_>,
    scores: &[f64],
    group: GroupCode,
    weights: Option<&[f64]>,
) -> Result<RocCurve> {
    let pos = conditional_cdf(view, scores, group, true, weights)?;
    let neg = conditional_cdf(view, scores, group, false, weights)?;
    Ok(roc_from_cdfs(&pos, &neg, view.event()))
}

pub(crate) fn roc_from_cdfs(pos: &ConditionalCdf, neg: &ConditionalCdf, event: Event) -> RocCurve {
    let support = merged_support([pos, neg]);
    let mut points = Vec::with_capacity(support.len() + 1);
    points.push(RocVertex {
        fpr: 0.0,
        tpr: 0.0,
        accept_from: f64::INFINITY,
    });
    for &s in support.iter().rev() {
        points.push(RocVertex {
            fpr: 1.0 - neg.eval_below(s),
            tpr: 1.0 - pos.eval_below(s),
            accept_from: s,
        });
    }
    RocCurve {
        group: pos.conditioning().group,
        event,
        points,
    }
}

/// First-order stochastic order `F ⪯ G`, i.e. `F(θ) ≥ G(θ) − slack` for all
/// θ: the population behind `G` has overall larger values. Exact on the
/// merged support when `slack = 0`.
pub fn precedes(f: &ConditionalCdf, g: &ConditionalCdf, slack: f64) -> bool {
    merged_support([f, g])
        .into_iter()
        .all(|t| f.eval(t) >= g.eval(t) - slack)
}

/// Step-function values at a grid, for plotting: `(θ, F(θ))`.
pub fn tabulate(cdf: &ConditionalCdf) -> Vec<(f64, f64)> {
    cdf.support
        .iter()
        .copied()
        .zip(cdf.cumulative.iter().copied())
        .collect()
}
