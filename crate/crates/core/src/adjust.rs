//! Post-processing a score into equal-opportunity and equalized-odds
//! group-threshold policies.

use serde::{Deserialize, Serialize};

use crate::dataset::{Event, SampleView};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::policy::{Criterion, GroupPolicy, GroupRule, OperatingPoint, Provenance};
use crate::rates::{conditional_cdf, merged_support, roc_from_cdfs, ConditionalCdf, RocCurve, Threshold};

/// Group shares and positive rates under an evaluation distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseRates {
    pub share: Vec<f64>,
    /// `P(Y = 1 | A = a)`.
    pub positive_rate: Vec<f64>,
}

impl BaseRates {
    pub fn from_view(view: &SampleView<'_>, weights: Option<&[f64]>) -> Result<Self> {
        view.require_outcomes()?;
        let sample = view.sample();
        let m = sample.n_groups();
        let mut mass = vec![CompensatedSum::default(); m];
        let mut pos = vec![CompensatedSum::default(); m];
        for &r in view.rows() {
            let w = weights.map_or(1.0, |w| w[r]);
            let g = sample.group(r);
            mass[g].add(w);
            if sample.outcome(r) == Some(true) {
                pos[g].add(w);
            }
        }
        let total: f64 = mass.iter().map(CompensatedSum::value).sum();
        Ok(Self {
            share: mass.iter().map(|s| s.value() / total).collect(),
            positive_rate: mass
                .iter()
                .zip(&pos)
                .map(|(t, p)| if t.value() > 0.0 { p.value() / t.value() } else { 0.0 })
                .collect(),
        })
    }

    /// Overall `P(Y = 1)`.
    pub fn overall_positive(&self) -> f64 {
        self.share.iter().zip(&self.positive_rate).map(|(s, p)| s * p).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub fn_cost: f64,
    pub fp_cost: f64,
    /// Taken from the evaluation view when absent.
    pub base_rates: Option<BaseRates>,
}

impl LossSpec {
    pub fn new(fn_cost: f64, fp_cost: f64) -> Result<Self> {
        let spec = Self {
            fn_cost,
            fp_cost,
            base_rates: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Misclassification loss `I[y ≠ y']`.
    pub fn symmetric() -> Self {
        Self {
            fn_cost: 1.0,
            fp_cost: 1.0,
            base_rates: None,
        }
    }

    /// A false negative costs `lambda` false positives.
    pub fn exchange_rate(lambda: f64) -> Result<Self> {
        Self::new(lambda, 1.0)
    }

    pub fn with_base_rates(mut self, base_rates: BaseRates) -> Self {
        self.base_rates = Some(base_rates);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: f64| c.is_finite() && c >= 0.0;
        if !ok(self.fn_cost) || !ok(self.fp_cost) {
            return Err(Error::invalid("loss", "costs must be finite and nonnegative"));
        }
        if self.fn_cost == 0.0 && self.fp_cost == 0.0 {
            return Err(Error::invalid("loss", "costs cannot both be zero"));
        }
        Ok(())
    }

    fn resolve(&self, view: &SampleView<'_>, weights: Option<&[f64]>) -> Result<BaseRates> {
        self.validate()?;
        let rates = match &self.base_rates {
            Some(b) => b.clone(),
            None => BaseRates::from_view(view, weights)?,
        };
        let m = view.sample().n_groups();
        if rates.share.len() != m || rates.positive_rate.len() != m {
            return Err(Error::Shape {
                expected: m,
                found: rates.share.len(),
            });
        }
        Ok(rates)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho", format!("{rho} is not in [0, 1]")));
    }
    Ok(())
}

/// Operating point with expected acceptance `1 − fnr` on `cdf`.
fn point_at_fnr(cdf: &ConditionalCdf, fnr: f64) -> OperatingPoint {
    match cdf.inverse_index(fnr) {
        None => OperatingPoint::accept_all(),
        // At an exact level, accepting the whole next atom matches the
        // positive rate and rejects negatives scored between the two atoms.
        Some(i) if cdf.cumulative()[i] == fnr && i + 1 < cdf.support().len() => {
            OperatingPoint::new(Threshold::at(cdf.support()[i + 1]), 1.0)
        }
        Some(i) => {
            let q = ((cdf.cumulative()[i] - fnr) / cdf.mass()[i]).clamp(0.0, 1.0);
            OperatingPoint::new(Threshold::at(cdf.support()[i]), q)
        }
    }
}

/// All equal-opportunity policies of a score on one view, indexed by the
/// common false negative rate.
#[derive(Clone, Debug)]
pub struct EqualOpportunityFamily {
    positives: Vec<ConditionalCdf>,
    negatives: Option<Vec<ConditionalCdf>>,
    labels: Vec<String>,
    event: Event,
    weighted: bool,
}

impl EqualOpportunityFamily {
    pub fn new(view: &SampleView<'_>, scores: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        let m = view.sample().n_groups();
        let positives = (0..m)
            .map(|g| conditional_cdf(view, scores, g, true, weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            positives,
            negatives: None,
            labels: view.sample().label_map().to_vec(),
            event: view.event(),
            weighted: weights.is_some(),
        })
    }

    /// Also keeps the label-0 distributions, needed to price false positives.
    pub fn with_negatives(
        view: &SampleView<'_>,
        scores: &[f64],
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let mut fam = Self::new(view, scores, weights)?;
        let m = view.sample().n_groups();
        fam.negatives = Some(
            (0..m)
                .map(|g| conditional_cdf(view, scores, g, false, weights))
                .collect::<Result<Vec<_>>>()?,
        );
        Ok(fam)
    }

    pub fn positives(&self) -> &[ConditionalCdf] {
        &self.positives
    }

    pub fn negatives(&self) -> Option<&[ConditionalCdf]> {
        self.negatives.as_deref()
    }

    /// Common false negative rates at which some group needs no atom
    /// randomization, ascending from 0 to 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = std::iter::once(0.0)
            .chain(self.positives.iter().flat_map(|c| c.cumulative().iter().copied()))
            .collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
    }

    pub fn at_fnr(&self, fnr: f64) -> GroupPolicy {
        let rules = self
            .positives
            .iter()
            .map(|c| GroupRule::pure(point_at_fnr(c, fnr)))
            .collect();
        let mut policy = GroupPolicy::new(Criterion::EqualOpportunity, rules, self.labels.clone());
        policy.provenance = Provenance {
            event: Some(self.event),
            weighted: self.weighted,
            rho: Some(1.0 - fnr),
            ..Provenance::default()
        };
        policy
    }

    pub fn at_tpr(&self, rho: f64) -> Result<GroupPolicy> {
        check_rho(rho)?;
        let mut policy = self.at_fnr(1.0 - rho);
        policy.provenance.rho = Some(rho);
        Ok(policy)
    }

    /// Expected loss of a member policy under `loss` and `base`.
    fn loss_of(&self, policy: &GroupPolicy, fnr: f64, loss: &LossSpec, base: &BaseRates) -> f64 {
        let negatives = self.negatives.as_ref().expect("negatives loaded");
        let mut total = CompensatedSum::default();
        for (g, rule) in policy.rules.iter().enumerate() {
            let pi = base.positive_rate[g];
            let fpr = negatives[g].acceptance(rule.primary.theta, rule.primary.q);
            total.add(base.share[g] * (loss.fn_cost * pi * fnr + loss.fp_cost * (1.0 - pi) * fpr));
        }
        total.value()
    }
}

/// Per group, `θ_a = F_a^{-1}(1 − ρ)` with the atom probability set so the
/// expected true positive rate is exactly `ρ`.
pub fn derive_equal_opportunity(
    scores: &[f64],
    view: &SampleView<'_>,
    rho: f64,
    weights: Option<&[f64]>,
) -> Result<GroupPolicy> {
    check_rho(rho)?;
    EqualOpportunityFamily::new(view, scores, weights)?.at_tpr(rho)
}

/// Loss-minimizing equal-opportunity policy over all breakpoints, with the
/// common true positive rate it attains. Ties go to the larger rate.
pub fn optimal_equal_opportunity(
    scores: &[f64],
    view: &SampleView<'_>,
    loss: &LossSpec,
    weights: Option<&[f64]>,
) -> Result<(GroupPolicy, f64)> {
    let base = loss.resolve(view, weights)?;
    let fam = EqualOpportunityFamily::with_negatives(view, scores, weights)?;
    let tol = 1e-12 * (loss.fn_cost + loss.fp_cost);
    let mut best: Option<(f64, f64, GroupPolicy)> = None;
    for t in fam.breakpoints() {
        let mut candidates = vec![fam.at_fnr(t)];
        if t == 0.0 {
            // Full rate without accepting negatives below every positive.
            let mut tight = fam.at_fnr(t);
            for (rule, c) in tight.rules.iter_mut().zip(&fam.positives) {
                if !c.support().is_empty() {
                    *rule = GroupRule::pure(OperatingPoint::new(Threshold::at(c.support()[0]), 1.0));
                }
            }
            candidates.push(tight);
        }
        for policy in candidates {
            let l = fam.loss_of(&policy, t, loss, &base);
            if best.as_ref().is_none_or(|(bl, _, _)| l < bl - tol) {
                best = Some((l, t, policy));
            }
        }
    }
    let (_, t, mut policy) = best.expect("breakpoints include 0 and 1");
    policy.provenance.fn_cost = Some(loss.fn_cost);
    policy.provenance.fp_cost = Some(loss.fp_cost);
    Ok((policy, 1.0 - t))
}

type Point = (f64, f64);

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull, counter-clockwise, without collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        a += p.0 * q.1 - q.0 * p.1;
    }
    a / 2.0
}

/// Clips `subject` to the convex counter-clockwise polygon `clip`.
pub fn intersect_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (cp, cq) = (cross(a, b, p), cross(a, b, q));
            if cp >= 0.0 {
                out.push(p);
            }
            if (cp >= 0.0) != (cq >= 0.0) {
                let t = cp / (cp - cq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        out.dedup_by(|x, y| (x.0 - y.0).abs() < 1e-15 && (x.1 - y.1).abs() < 1e-15);
    }
    out
}

/// Single operating point at parameter `lambda` along ROC segment `j → j + 1`.
fn point_on_segment(roc: &RocCurve, j: usize, lambda: f64) -> OperatingPoint {
    OperatingPoint::new(Threshold::at(roc.points[j + 1].accept_from), lambda.clamp(0.0, 1.0))
}

fn xy(roc: &RocCurve, i: usize) -> Point {
    (roc.points[i].fpr, roc.points[i].tpr)
}

/// Locates `p` on the ROC polyline, returning the segment and the fraction
/// along it.
fn locate_on_polyline(roc: &RocCurve, p: Point, tol: f64) -> Option<(usize, f64)> {
    for j in 0..roc.points.len() - 1 {
        let (a, b) = (xy(roc, j), xy(roc, j + 1));
        let d = (b.0 - a.0, b.1 - a.1);
        let len2 = d.0 * d.0 + d.1 * d.1;
        if len2 == 0.0 {
            continue;
        }
        let lambda = ((p.0 - a.0) * d.0 + (p.1 - a.1) * d.1) / len2;
        if !(-tol..=1.0 + tol).contains(&lambda) {
            continue;
        }
        let l = lambda.clamp(0.0, 1.0);
        let proj = (a.0 + l * d.0, a.1 + l * d.1);
        if (proj.0 - p.0).hypot(proj.1 - p.1) <= tol {
            return Some((j, l));
        }
    }
    None
}

/// Expresses an achievable `(FPR, TPR)` point of one group as a mixture of
/// at most two operating points on its ROC polyline.
pub(crate) fn realize(roc: &RocCurve, p: Point) -> Result<GroupRule> {
    if let Some((j, l)) = locate_on_polyline(roc, p, 1e-12) {
        return Ok(GroupRule::pure(point_on_segment(roc, j, l)));
    }
    let k = roc.points.len();
    let mut alpha = Vec::with_capacity(k);
    let v0 = xy(roc, 0);
    alpha.push((v0.1 - p.1).atan2(v0.0 - p.0));
    for i in 1..k {
        let (a, b) = (xy(roc, i - 1), xy(roc, i));
        let u = (a.0 - p.0, a.1 - p.1);
        let v = (b.0 - p.0, b.1 - p.1);
        let turn = (u.0 * v.1 - u.1 * v.0).atan2(u.0 * v.0 + u.1 * v.1);
        alpha.push(alpha[i - 1] + turn);
    }
    let by = |f: fn(f64, f64) -> bool| {
        (0..k).fold(0, |best, i| if f(alpha[i], alpha[best]) { i } else { best })
    };
    let i_min = by(|x, y| x < y);
    let i_max = by(|x, y| x > y);
    let span = alpha[i_max] - alpha[i_min];
    if span < std::f64::consts::PI - 1e-9 {
        return Err(Error::Precondition(format!(
            "point ({}, {}) is outside the achievable region of group {}",
            p.0, p.1, roc.group
        )));
    }
    let target = (alpha[i_min] + std::f64::consts::PI).min(alpha[i_max]);
    let c1 = xy(roc, i_min);
    let dir = (p.0 - c1.0, p.1 - c1.1);
    let step: isize = if i_max > i_min { 1 } else { -1 };
    let mut i = i_min as isize;
    while i != i_max as isize {
        let n = i + step;
        let (lo, hi) = (alpha[i as usize], alpha[n as usize]);
        if (lo - target) * (hi - target) <= 0.0 {
            let (a, b) = (xy(roc, i as usize), xy(roc, n as usize));
            // Solve p + s·dir = a + t·(b − a).
            let e = (b.0 - a.0, b.1 - a.1);
            let den = dir.0 * e.1 - dir.1 * e.0;
            let t = if den == 0.0 {
                0.0
            } else {
                (((a.0 - p.0) * dir.1 - (a.1 - p.1) * dir.0) / den).clamp(0.0, 1.0)
            };
            let c2 = (a.0 + t * e.0, a.1 + t * e.1);
            let (seg, lambda) = if step > 0 { (i as usize, t) } else { (n as usize, 1.0 - t) };
            let first = if i_min == 0 {
                OperatingPoint::new(Threshold::at(roc.points[1].accept_from), 0.0)
            } else {
                OperatingPoint::new(Threshold::at(roc.points[i_min].accept_from), 1.0)
            };
            let d1 = (p.0 - c1.0).hypot(p.1 - c1.1);
            let d = (c2.0 - c1.0).hypot(c2.1 - c1.1);
            let w = if d > 0.0 { (d1 / d).clamp(0.0, 1.0) } else { 0.0 };
            return Ok(GroupRule::mixture(first, point_on_segment(roc, seg, lambda), w));
        }
        i = n;
    }
    Err(Error::Precondition(format!(
        "could not realize ({}, {}) for group {}",
        p.0, p.1, roc.group
    )))
}

/// Achievable `(FPR, TPR)` region of one group: hull of its ROC vertices.
pub fn achievable_region(roc: &RocCurve) -> Vec<Point> {
    let pts: Vec<Point> = roc.points.iter().map(|v| (v.fpr, v.tpr)).collect();
    convex_hull(&pts)
}

/// Equalized-odds policy minimizing expected loss over the intersection of
/// the groups' achievable regions. When that intersection has no area the
/// result is a randomized constant flagged as degenerate.
pub fn derive_equalized_odds(
    scores: &[f64],
    view: &SampleView<'_>,
    loss: &LossSpec,
    weights: Option<&[f64]>,
) -> Result<GroupPolicy> {
    let base = loss.resolve(view, weights)?;
    let fam = EqualOpportunityFamily::with_negatives(view, scores, weights)?;
    let negatives = fam.negatives().expect("negatives loaded");
    let rocs: Vec<RocCurve> = fam
        .positives()
        .iter()
        .zip(negatives)
        .map(|(p, n)| roc_from_cdfs(p, n, view.event()))
        .collect();
    let mut region = achievable_region(&rocs[0]);
    for roc in &rocs[1..] {
        region = intersect_convex(&region, &achievable_region(roc));
    }
    let py = base.overall_positive();
    let c_t = loss.fn_cost * py;
    let c_f = loss.fp_cost * (1.0 - py);
    let objective = |p: Point| c_f * p.0 - c_t * p.1;
    let degenerate = polygon_area(&region).abs() < 1e-12;
    let candidates = if degenerate {
        vec![(0.0, 0.0), (1.0, 1.0)]
    } else {
        region
    };
    let tol = 1e-12 * (loss.fn_cost + loss.fp_cost);
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        let (lc, lb) = (objective(c), objective(best));
        let better = lc < lb - tol
            || ((lc - lb).abs() <= tol && (c.1 > best.1 || (c.1 == best.1 && c.0 < best.0)));
        if better {
            best = c;
        }
    }
    let rules = if degenerate {
        let reject = OperatingPoint::new(Threshold::at(1.0), 0.0);
        let rule = if best.1 >= 1.0 {
            GroupRule::mixture(reject, OperatingPoint::accept_all(), 1.0)
        } else {
            GroupRule::mixture(reject, OperatingPoint::accept_all(), 0.0)
        };
        vec![rule; rocs.len()]
    } else {
        rocs.iter().map(|roc| realize(roc, best)).collect::<Result<Vec<_>>>()?
    };
    let mut policy = GroupPolicy::new(Criterion::EqualizedOdds, rules, view.sample().label_map().to_vec());
    policy.provenance = Provenance {
        event: Some(view.event()),
        weighted: weights.is_some(),
        fn_cost: Some(loss.fn_cost),
        fp_cost: Some(loss.fp_cost),
        operating_point: Some(best),
        degenerate,
        ..Provenance::default()
    };
    Ok(policy)
}

/// Merged score support of both labels in every group, for sweeps.
pub fn score_grid(fam: &EqualOpportunityFamily) -> Vec<f64> {
    let negs = fam.negatives().unwrap_or(&[]);
    merged_support(fam.positives().iter().chain(negs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PopulationSample;
    use crate::policy::{expected_acceptance, expected_rates};

    fn sample(groups: Vec<usize>, outcomes: Vec<bool>) -> PopulationSample {
        let n = groups.len();
        let m = groups.iter().max().map_or(2, |g| (g + 1).max(2));
        PopulationSample::from_codes(
            vec![],
            vec![],
            groups,
            (0..m).map(|g| g.to_string()).collect(),
            outcomes.into_iter().map(Some).collect(),
            vec![true; n],
            None,
        )
        .unwrap()
    }

    #[test]
    fn full_rate_accepts_everyone() {
        let s = sample(vec![0, 0, 1, 1], vec![true, true, true, false]);
        let v = s.view(Event::All).unwrap();
        let p = derive_equal_opportunity(&[0.1, 0.4, 0.3, 0.9], &v, 1.0, None).unwrap();
        assert!(p.rules.iter().all(|r| r.primary.theta.is_below_support()));
        for g in 0..2 {
            let tpr = expected_acceptance(&p, &v, &[0.1, 0.4, 0.3, 0.9], None, g, true).unwrap();
            assert_eq!(tpr, 1.0);
        }
    }

    #[test]
    fn half_rate_single_atom() {
        let s = sample(vec![0, 0, 1], vec![true, true, true]);
        let v = s.view(Event::All).unwrap();
        let p = derive_equal_opportunity(&[0.2, 0.8, 0.5], &v, 0.5, None).unwrap();
        assert_eq!(p.rules[0].primary, OperatingPoint::new(Threshold::at(0.8), 1.0));
        assert_eq!(expected_acceptance(&p, &v, &[0.2, 0.8, 0.5], None, 0, true).unwrap(), 0.5);
    }

    #[test]
    fn rho_out_of_range() {
        let s = sample(vec![0, 1], vec![true, true]);
        let v = s.view(Event::All).unwrap();
        assert!(matches!(
            derive_equal_opportunity(&[0.2, 0.8], &v, 1.5, None),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn group_without_positives() {
        let s = sample(vec![0, 1], vec![true, false]);
        let v = s.view(Event::All).unwrap();
        assert!(matches!(
            derive_equal_opportunity(&[0.2, 0.8], &v, 0.5, None),
            Err(Error::UndefinedRate { .. })
        ));
    }

    fn tied_sample() -> (PopulationSample, Vec<f64>) {
        let groups = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let y = vec![true, false, true, false, true, false, true, false];
        let scores = vec![0.9, 0.9, 0.4, 0.2, 0.7, 0.7, 0.3, 0.1];
        (sample(groups, y), scores)
    }

    #[test]
    fn free_false_positives_give_full_rate() {
        let (s, sc) = tied_sample();
        let v = s.view(Event::All).unwrap();
        let (_, rho) = optimal_equal_opportunity(&sc, &v, &LossSpec::new(1.0, 0.0).unwrap(), None).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn free_false_negatives_give_zero_rate() {
        let (s, sc) = tied_sample();
        let v = s.view(Event::All).unwrap();
        let (p, rho) = optimal_equal_opportunity(&sc, &v, &LossSpec::new(0.0, 1.0).unwrap(), None).unwrap();
        assert_eq!(rho, 0.0);
        let t = expected_rates(&p, &v, &sc, None).unwrap();
        assert!(t.groups.iter().all(|g| g.tpr == 0.0 && g.fpr == 0.0));
    }

    #[test]
    fn both_costs_zero_rejected() {
        assert!(LossSpec::new(0.0, 0.0).is_err());
        assert!(LossSpec::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn hull_of_square() {
        let h = convex_hull(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(h.len(), 4);
        assert!((polygon_area(&h) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn intersection_of_triangles() {
        let a = convex_hull(&[(0.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let b = convex_hull(&[(0.0, 0.0), (1.0, 1.0), (0.5, 1.0)]);
        let c = intersect_convex(&a, &b);
        assert!((polygon_area(&c) - polygon_area(&b)).abs() < 1e-15);
    }

    #[test]
    fn identical_groups_reach_unconstrained_optimum() {
        let scores = vec![0.9, 0.8, 0.6, 0.5, 0.3, 0.9, 0.8, 0.6, 0.5, 0.3];
        let y = vec![true, true, false, true, false, true, true, false, true, false];
        let groups = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let s = sample(groups, y);
        let v = s.view(Event::All).unwrap();
        let loss = LossSpec::symmetric();
        let p = derive_equalized_odds(&scores, &v, &loss, None).unwrap();
        assert!(!p.provenance.degenerate);
        let t = expected_rates(&p, &v, &scores, None).unwrap();
        // Best single threshold per group: accept >= 0.8 or >= 0.5, both 1 error.
        let errors = |fpr: f64, tpr: f64| 2.0 * fpr + 3.0 * (1.0 - tpr);
        let e = errors(t.groups[0].fpr, t.groups[0].tpr);
        assert!((e - 1.0).abs() < 1e-12);
        assert!((t.groups[0].tpr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_group_collapses_to_diagonal() {
        let scores = vec![0.9, 0.1, 0.8, 0.2, 0.5, 0.5, 0.3, 0.3];
        let y = vec![true, false, true, false, true, false, true, false];
        let groups = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let s = sample(groups, y);
        let v = s.view(Event::All).unwrap();
        let p = derive_equalized_odds(&scores, &v, &LossSpec::symmetric(), None).unwrap();
        assert!(p.provenance.degenerate);
        let t = expected_rates(&p, &v, &scores, None).unwrap();
        for g in &t.groups {
            assert_eq!(g.tpr, g.fpr);
        }
    }

    #[test]
    fn mixture_needed_between_groups() {
        let scores = vec![0.9, 0.6, 0.4, 0.1, 0.8, 0.7, 0.35, 0.2, 0.65, 0.3];
        let y = vec![true, false, true, false, true, true, false, false, true, false];
        let groups = vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let s = sample(groups, y);
        let v = s.view(Event::All).unwrap();
        let p = derive_equalized_odds(&scores, &v, &LossSpec::exchange_rate(3.0).unwrap(), None).unwrap();
        let t = expected_rates(&p, &v, &scores, None).unwrap();
        assert!((t.groups[0].tpr - t.groups[1].tpr).abs() < 1e-9);
        assert!((t.groups[0].fpr - t.groups[1].fpr).abs() < 1e-9);
        let (f, tp) = p.provenance.operating_point.unwrap();
        assert!((t.groups[0].tpr - tp).abs() < 1e-9 && (t.groups[0].fpr - f).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn eo_equalizes_rates(
            raw in proptest::collection::vec((0u8..8, 0usize..3, proptest::bool::ANY), 6..60),
            rho in 0.0f64..=1.0,
        ) {
            let mut rows = raw;
            for g in 0..3 {
                rows.push((3, g, true));
            }
            let scores: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 8.0).collect();
            let s = sample(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect());
            let v = s.view(Event::All).unwrap();
            let p = derive_equal_opportunity(&scores, &v, rho, None).unwrap();
            for g in 0..3 {
                let tpr = crate::policy::expected_acceptance(&p, &v, &scores, None, g, true).unwrap();
                proptest::prop_assert!((tpr - rho).abs() <= 1e-12, "{tpr} vs {rho}");
            }
        }

        #[test]
        fn constant_weights_leave_policy_unchanged(
            raw in proptest::collection::vec((0u8..8, 0usize..2, proptest::bool::ANY), 6..40),
            c in 0.01f64..100.0,
        ) {
            let mut rows = raw;
            rows.extend([(2, 0, true), (5, 0, false), (3, 1, true), (6, 1, false)]);
            let scores: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 8.0).collect();
            let s = sample(rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect());
            let v = s.view(Event::All).unwrap();
            let w = vec![c; rows.len()];
            let fam = EqualOpportunityFamily::new(&v, &scores, None).unwrap();
            let famw = EqualOpportunityFamily::new(&v, &scores, Some(&w)).unwrap();
            for t in fam.breakpoints() {
                proptest::prop_assert_eq!(fam.at_fnr(t).rules, famw.at_fnr(t).rules);
            }
            let loss = LossSpec::symmetric();
            let a = derive_equalized_odds(&scores, &v, &loss, None).unwrap();
            let b = derive_equalized_odds(&scores, &v, &loss, Some(&w)).unwrap();
            proptest::prop_assert_eq!(a.rules, b.rules);
        }
    }
}
