//! Residual unfairness diagnostics: inequity matrices, the Δ identity for
//! equal-opportunity policies, benefit-of-the-doubt findings and
//! propensity-ratio sign tests.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataset::{Event, GroupCode, PopulationSample, SampleView};
use crate::error::{Error, Result};
use crate::numeric::{sign_with_tolerance, CompensatedSum};
use crate::policy::{expected_acceptance, GroupPolicy, GroupRule};
use crate::rates::{check_scores, conditional_cdf, merged_support, precedes, ConditionalCdf, DeltaCurve};
use crate::reweight::WeightFunction;

/// Tolerance used when reporting the sign of a difference of rates.
pub const SIGN_TOLERANCE: f64 = 1e-12;

/// `ε_{a,b}^E = TPR_a − TPR_b` for every ordered pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequityMatrix {
    pub event: Event,
    pub weighted: bool,
    pub labels: Vec<String>,
    pub tpr: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl InequityMatrix {
    pub fn from_tprs(event: Event, weighted: bool, labels: Vec<String>, tpr: Vec<f64>) -> Self {
        let values = tpr
            .iter()
            .map(|a| tpr.iter().map(|b| a - b).collect())
            .collect();
        Self {
            event,
            weighted,
            labels,
            tpr,
            values,
        }
    }

    pub fn get(&self, a: GroupCode, b: GroupCode) -> f64 {
        self.values[a][b]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference from `other`.
    pub fn max_gap(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub fn inequity(
    policy: &GroupPolicy,
    view: &SampleView<'_>,
    scores: &[f64],
    weights: Option<&[f64]>,
) -> Result<InequityMatrix> {
    let m = view.sample().n_groups();
    let tpr = (0..m)
        .map(|g| expected_acceptance(policy, view, scores, weights, g, true))
        .collect::<Result<Vec<_>>>()?;
    Ok(InequityMatrix::from_tprs(
        view.event(),
        weights.is_some(),
        view.sample().label_map().to_vec(),
        tpr,
    ))
}

fn rule_acceptance(cdf: &ConditionalCdf, rule: &GroupRule) -> f64 {
    let first = cdf.acceptance(rule.primary.theta, rule.primary.q);
    match rule.secondary {
        None => first,
        Some(s) => (1.0 - rule.mix) * first + rule.mix * cdf.acceptance(s.theta, s.q),
    }
}

/// Both sides of `ε_{a,b}^{T=1} = Δ_a(θ_a) − Δ_b(θ_b)` for one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Result {
    pub direct: Vec<Vec<f64>>,
    pub via_delta: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub residual: f64,
}

/// Positive-label score distributions of every group on a training and a
/// target view, built once for repeated identity checks.
#[derive(Clone, Debug)]
pub struct Prop1Check {
    deltas: Vec<DeltaCurve>,
    tolerance: f64,
}

impl Prop1Check {
    pub fn new(train_view: &SampleView<'_>, target_view: &SampleView<'_>, scores: &[f64]) -> Result<Self> {
        let m = train_view.sample().n_groups();
        let deltas = (0..m)
            .map(|g| {
                let train = conditional_cdf(train_view, scores, g, true, None)?;
                let target = conditional_cdf(target_view, scores, g, true, None)?;
                crate::rates::delta_curve(&train, &target)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            deltas,
            tolerance: 1e-9,
        })
    }

    /// Allowed spread of training TPRs before a policy counts as not
    /// equal-opportunity.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn deltas(&self) -> &[DeltaCurve] {
        &self.deltas
    }

    /// Evaluates both sides. Δ is taken at the policy's operating point, so
    /// atom-randomized rules are covered by linearity.
    pub fn check(&self, policy: &GroupPolicy) -> Result<Prop1Result> {
        let m = self.deltas.len();
        let rules = (0..m).map(|g| policy.rule(g)).collect::<Result<Vec<_>>>()?;
        let train: Vec<f64> = rules
            .iter()
            .zip(&self.deltas)
            .map(|(r, d)| rule_acceptance(d.train(), r))
            .collect();
        let spread = train.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - train.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if spread > self.tolerance {
            return Err(Error::NotEqualOpportunity { spread });
        }
        let target: Vec<f64> = rules
            .iter()
            .zip(&self.deltas)
            .map(|(r, d)| rule_acceptance(d.target(), r))
            .collect();
        let delta: Vec<f64> = rules
            .iter()
            .zip(&self.deltas)
            .map(|(r, d)| match r.secondary {
                None => d.at_operating_point(r.primary.theta, r.primary.q),
                Some(s) => {
                    (1.0 - r.mix) * d.at_operating_point(r.primary.theta, r.primary.q)
                        + r.mix * d.at_operating_point(s.theta, s.q)
                }
            })
            .collect();
        let direct: Vec<Vec<f64>> = target.iter().map(|a| target.iter().map(|b| a - b).collect()).collect();
        let via_delta: Vec<Vec<f64>> = delta.iter().map(|a| delta.iter().map(|b| a - b).collect()).collect();
        let residual = direct
            .iter()
            .flatten()
            .zip(via_delta.iter().flatten())
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        Ok(Prop1Result {
            direct,
            via_delta,
            delta,
            residual,
        })
    }
}

/// Checks the Δ identity for one equal-opportunity policy derived on
/// `train_view`.
pub fn prop1_identity(
    policy: &GroupPolicy,
    train_view: &SampleView<'_>,
    target_view: &SampleView<'_>,
    scores: &[f64],
) -> Result<Prop1Result> {
    Prop1Check::new(train_view, target_view, scores)?.check(policy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbdKind {
    Strong,
    StrongStrict,
    WeakInterval,
    WeakEndowedInterval,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbdFinding {
    pub kind: DbdKind,
    pub advantaged: Option<GroupCode>,
    pub disadvantaged: Option<GroupCode>,
    /// Open interval `(θ_lo, θ_hi)`.
    pub interval: Option<(f64, f64)>,
    /// Common training TPRs whose equal-opportunity thresholds all fall in
    /// the interval, as `[lo, hi)`.
    pub tpr_range: Option<(f64, f64)>,
}

impl DbdFinding {
    pub fn none() -> Self {
        Self {
            kind: DbdKind::None,
            advantaged: None,
            disadvantaged: None,
            interval: None,
            tpr_range: None,
        }
    }

    pub fn is_none(&self) -> bool {
        self.kind == DbdKind::None
    }
}

/// Support points and interior midpoints of the merged support, the points
/// at which step functions on it take every one of their values.
fn evaluation_grid(cdfs: &[&ConditionalCdf]) -> Vec<f64> {
    let support = merged_support(cdfs.iter().copied());
    let mut grid = Vec::with_capacity(2 * support.len());
    for w in support.windows(2) {
        grid.push(w[0]);
        grid.push(0.5 * (w[0] + w[1]));
    }
    grid.extend(support.last());
    grid
}

/// Strong benefit of the doubt: `Δ_a ≥ 0` and `Δ_b ≤ 0` everywhere, not both
/// identically zero, tried with both role assignments. With `slack > 0` the
/// inequalities are relaxed and "nonzero" means beyond the slack.
pub fn check_strong_dbd(
    a_train: &ConditionalCdf,
    a_target: &ConditionalCdf,
    b_train: &ConditionalCdf,
    b_target: &ConditionalCdf,
    slack: f64,
) -> DbdFinding {
    let grid = evaluation_grid(&[a_train, a_target, b_train, b_target]);
    let da: Vec<f64> = grid.iter().map(|&t| a_train.eval(t) - a_target.eval(t)).collect();
    let db: Vec<f64> = grid.iter().map(|&t| b_train.eval(t) - b_target.eval(t)).collect();
    let last = grid.len().saturating_sub(1);
    let (ga, gb) = (a_train.conditioning().group, b_train.conditioning().group);
    for (up, down, adv, dis) in [(&da, &db, ga, gb), (&db, &da, gb, ga)] {
        let holds = up.iter().all(|&d| d >= -slack) && down.iter().all(|&d| d <= slack);
        let nonzero = up.iter().chain(down.iter()).any(|&d| d.abs() > slack);
        if holds && nonzero {
            let strict = (0..last).all(|i| up[i] > slack && down[i] < -slack);
            return DbdFinding {
                kind: if strict { DbdKind::StrongStrict } else { DbdKind::Strong },
                advantaged: Some(adv),
                disadvantaged: Some(dis),
                interval: None,
                tpr_range: None,
            };
        }
    }
    DbdFinding::none()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakMode {
    /// `Δ_a(θ) > Δ_b(θ')` for all `θ, θ'` in the interval.
    Strict,
    /// Only for `θ ≥ θ'`; requires group `a` to be endowed with higher
    /// training scores.
    Endowed,
}

/// Values of a monotone deque window: front holds the extreme.
struct WindowExtreme {
    items: VecDeque<(usize, f64)>,
    max: bool,
}

impl WindowExtreme {
    fn new(max: bool) -> Self {
        Self {
            items: VecDeque::new(),
            max,
        }
    }

    fn push(&mut self, i: usize, v: f64) {
        while let Some(&(_, back)) = self.items.back() {
            let dominated = if self.max { back <= v } else { back >= v };
            if !dominated {
                break;
            }
            self.items.pop_back();
        }
        self.items.push_back((i, v));
    }

    fn evict_before(&mut self, start: usize) {
        while self.items.front().is_some_and(|&(i, _)| i < start) {
            self.items.pop_front();
        }
    }

    fn value(&self) -> f64 {
        self.items.front().map_or(if self.max { f64::NEG_INFINITY } else { f64::INFINITY }, |x| x.1)
    }
}

/// Longest interval on the merged support where the weak benefit-of-the-doubt
/// condition of `mode` holds, with `a` advantaged.
pub fn find_weak_dbd_interval(
    delta_a: &DeltaCurve,
    delta_b: &DeltaCurve,
    mode: WeakMode,
    endowment_check: Option<(&ConditionalCdf, &ConditionalCdf)>,
) -> Result<DbdFinding> {
    find_weak_dbd_interval_with_slack(delta_a, delta_b, mode, endowment_check, 0.0)
}

pub fn find_weak_dbd_interval_with_slack(
    delta_a: &DeltaCurve,
    delta_b: &DeltaCurve,
    mode: WeakMode,
    endowment_check: Option<(&ConditionalCdf, &ConditionalCdf)>,
    slack: f64,
) -> Result<DbdFinding> {
    if mode == WeakMode::Endowed {
        let (fa, fb) = endowment_check.unwrap_or((delta_a.train(), delta_b.train()));
        // a endowed: F_a ≤ F_b pointwise, i.e. F_b ⪯ F_a.
        if !precedes(fb, fa, slack) {
            return Err(Error::Precondition(
                "training scores of the advantaged group do not dominate the other group's".into(),
            ));
        }
    }
    let support = merged_support([delta_a.train(), delta_a.target(), delta_b.train(), delta_b.target()]);
    if support.len() < 2 {
        return Ok(DbdFinding::none());
    }
    // Piece k is [support[k], support[k + 1]).
    let pieces = support.len() - 1;
    let va: Vec<f64> = support[..pieces].iter().map(|&t| delta_a.eval(t)).collect();
    let vb: Vec<f64> = support[..pieces].iter().map(|&t| delta_b.eval(t)).collect();
    let mut min_a = WindowExtreme::new(false);
    let mut max_b = WindowExtreme::new(true);
    let mut start = 0;
    let mut best: Option<(usize, usize)> = None;
    for j in 0..pieces {
        min_a.push(j, va[j]);
        max_b.push(j, vb[j]);
        loop {
            let ok = match mode {
                WeakMode::Strict => min_a.value() > max_b.value() + slack,
                WeakMode::Endowed => va[j] > max_b.value() + slack,
            };
            if ok || start > j {
                break;
            }
            start += 1;
            min_a.evict_before(start);
            max_b.evict_before(start);
        }
        if start <= j {
            let len = support[j + 1] - support[start];
            if best.is_none_or(|(i, k)| len > support[k + 1] - support[i]) {
                best = Some((start, j));
            }
        }
    }
    let Some((i, j)) = best else {
        return Ok(DbdFinding::none());
    };
    let (lo, hi) = (support[i], support[j + 1]);
    let fa = delta_a.train();
    let fb = delta_b.train();
    let fnr_lo = fa.eval(support[i]).max(fb.eval(support[i]));
    let fnr_hi = fa.eval(support[j]).min(fb.eval(support[j]));
    let tpr_range = (fnr_lo < fnr_hi).then(|| (1.0 - fnr_hi, 1.0 - fnr_lo));
    Ok(DbdFinding {
        kind: match mode {
            WeakMode::Strict => DbdKind::WeakInterval,
            WeakMode::Endowed => DbdKind::WeakEndowedInterval,
        },
        advantaged: Some(delta_a.train().conditioning().group),
        disadvantaged: Some(delta_b.train().conditioning().group),
        interval: Some((lo, hi)),
        tpr_range,
    })
}

/// Result of comparing inequity on the training and target views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop7Result {
    pub train: InequityMatrix,
    pub target: InequityMatrix,
    pub max_gap: f64,
}

/// Inequity on `Z = 1` against inequity on `T = 1`. Under inclusion that
/// depends on the group alone, the two agree.
pub fn prop7_null_check(sample: &PopulationSample, policy: &GroupPolicy, scores: &[f64]) -> Result<Prop7Result> {
    let train = inequity(policy, &sample.view(Event::Included)?, scores, None)?;
    let target = inequity(policy, &sample.view(Event::Targeted)?, scores, None)?;
    let max_gap = train.max_gap(&target);
    Ok(Prop7Result { train, target, max_gap })
}

/// Mean weight among expected false negatives and true positives of one
/// group, with the sign each implies for the change in TPR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop8Result {
    pub group: GroupCode,
    pub mean_fn: f64,
    pub mean_tp: f64,
    pub train_tpr: f64,
    pub target_tpr: f64,
    /// `sign(mean_tp − mean_fn)`.
    pub predicted_direction: i8,
    /// `sign(target_tpr − train_tpr)`, the target TPR estimated by weighting.
    pub observed_direction: i8,
}

struct PositiveMasses {
    fn_mass: f64,
    fn_weighted: f64,
    tp_mass: f64,
    tp_weighted: f64,
}

fn positive_masses(
    policy: &GroupPolicy,
    view: &SampleView<'_>,
    scores: &[f64],
    weights: &[f64],
    group: GroupCode,
) -> Result<PositiveMasses> {
    let rule = policy.rule(group)?;
    let (mut f, mut fw, mut t, mut tw) = Default::default();
    let (f, fw, t, tw): (&mut CompensatedSum, &mut CompensatedSum, &mut CompensatedSum, &mut CompensatedSum) =
        (&mut f, &mut fw, &mut t, &mut tw);
    for r in view.cell(group, true) {
        let acc = rule.accept_prob(scores[r]);
        f.add(1.0 - acc);
        fw.add((1.0 - acc) * weights[r]);
        t.add(acc);
        tw.add(acc * weights[r]);
    }
    Ok(PositiveMasses {
        fn_mass: f.value(),
        fn_weighted: fw.value(),
        tp_mass: t.value(),
        tp_weighted: tw.value(),
    })
}

fn relative_sign(x: f64, scale: f64) -> i8 {
    sign_with_tolerance(x, SIGN_TOLERANCE * scale.abs().max(1.0))
}

/// Compares mean `p̃` among false negatives and true positives of `group` on
/// the training view.
pub fn prop8_ratio_test(
    policy: &GroupPolicy,
    train_view: &SampleView<'_>,
    scores: &[f64],
    weight_fn: &WeightFunction,
    group: GroupCode,
) -> Result<Prop8Result> {
    check_scores(scores, train_view.sample().len())?;
    train_view.require_outcomes()?;
    let weights = weight_fn.within_group_weights(train_view.sample())?;
    let masses = positive_masses(policy, train_view, scores, &weights, group)?;
    let empty = || Error::UndefinedRate {
        group: train_view.sample().group_label(group).to_owned(),
        label: 1,
        event: train_view.event(),
    };
    if masses.fn_mass <= 0.0 || masses.tp_mass <= 0.0 {
        return Err(empty());
    }
    let mean_fn = masses.fn_weighted / masses.fn_mass;
    let mean_tp = masses.tp_weighted / masses.tp_mass;
    let train_tpr = masses.tp_mass / (masses.tp_mass + masses.fn_mass);
    let target_tpr = masses.tp_weighted / (masses.tp_weighted + masses.fn_weighted);
    Ok(Prop8Result {
        group,
        mean_fn,
        mean_tp,
        train_tpr,
        target_tpr,
        predicted_direction: relative_sign(mean_tp - mean_fn, mean_tp.max(mean_fn)),
        observed_direction: sign_with_tolerance(target_tpr - train_tpr, SIGN_TOLERANCE),
    })
}

/// Cross-group form for a policy that is equal-opportunity on training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cor9Result {
    pub a: GroupCode,
    pub b: GroupCode,
    /// `mean_fn(a) / mean_fn(b)`.
    pub fn_ratio: f64,
    /// `mean_tp(a) / mean_tp(b)`.
    pub tp_ratio: f64,
    /// `sign(tp_ratio − fn_ratio)`.
    pub predicted_sign: i8,
    /// Sign of the target inequity estimated by weighting.
    pub observed_sign: i8,
    pub target_inequity: f64,
}

pub fn cor9_ratio_test(
    policy: &GroupPolicy,
    train_view: &SampleView<'_>,
    scores: &[f64],
    weight_fn: &WeightFunction,
    a: GroupCode,
    b: GroupCode,
) -> Result<Cor9Result> {
    let ra = prop8_ratio_test(policy, train_view, scores, weight_fn, a)?;
    let rb = prop8_ratio_test(policy, train_view, scores, weight_fn, b)?;
    let spread = (ra.train_tpr - rb.train_tpr).abs();
    if spread > 1e-9 {
        return Err(Error::NotEqualOpportunity { spread });
    }
    let fn_ratio = ra.mean_fn / rb.mean_fn;
    let tp_ratio = ra.mean_tp / rb.mean_tp;
    let target_inequity = ra.target_tpr - rb.target_tpr;
    Ok(Cor9Result {
        a,
        b,
        fn_ratio,
        tp_ratio,
        predicted_sign: relative_sign(tp_ratio - fn_ratio, tp_ratio.max(fn_ratio)),
        observed_sign: sign_with_tolerance(target_inequity, SIGN_TOLERANCE),
        target_inequity,
    })
}

/// The "disparate suspicion" mirror: outcomes flipped and scores negated
/// (`1 − s`), so true-negative-rate questions become true-positive-rate ones.
pub fn mirrored(sample: &PopulationSample, scores: &[f64]) -> Result<(PopulationSample, Vec<f64>)> {
    check_scores(scores, sample.len())?;
    let flipped = PopulationSample::from_codes(
        sample.covariate_names().to_vec(),
        sample.covariates().to_vec(),
        sample.groups().to_vec(),
        sample.label_map().to_vec(),
        sample.outcomes().iter().map(|y| y.map(|v| !v)).collect(),
        sample.included_flags().to_vec(),
        sample
            .has_target_column()
            .then(|| (0..sample.len()).map(|r| sample.targeted(r)).collect()),
    )?;
    Ok((flipped, scores.iter().map(|s| 1.0 - s).collect()))
}

/// Machine-readable bundle of all diagnostics of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub inequity: Vec<InequityMatrix>,
    pub prop1: Option<Prop1Result>,
    pub dbd_findings: Vec<DbdFinding>,
    pub prop7: Option<Prop7Result>,
    pub prop8: Vec<Prop8Result>,
}
