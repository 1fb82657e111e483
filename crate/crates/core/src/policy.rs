//! Group-threshold decision rules and their exact error rates.
//!
//! A rule decides `Ŷ = 1` for scores above its threshold, `Ŷ = 0` below it,
//! and flips a `q`-coin for scores exactly at it. An equalized-odds rule may
//! additionally pick between two such operating points with probability `w`.
//! Randomness never depends on anything but the score, the group and the
//! seed, so `Ŷ ⊥ (Y, Z, T) | X, A` holds by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Event, GroupCode, SampleView};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::rates::{check_scores, check_weights, undefined, Threshold};

/// Threshold plus the acceptance probability at the threshold atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub theta: Threshold,
    pub q: f64,
}

impl OperatingPoint {
    pub fn new(theta: Threshold, q: f64) -> Self {
        Self { theta, q }
    }

    /// Accepts every score.
    pub fn accept_all() -> Self {
        Self::new(Threshold::BELOW_SUPPORT, 0.0)
    }

    /// `P(Ŷ = 1)` for a row with this score.
    pub fn accept_prob(&self, score: f64) -> f64 {
        let t = self.theta.value();
        if score > t {
            1.0
        } else if score == t {
            self.q
        } else {
            0.0
        }
    }
}

/// Decision rule for one group: an operating point, or a two-point mixture
/// using `secondary` with probability `mix`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupRule {
    pub primary: OperatingPoint,
    pub secondary: Option<OperatingPoint>,
    pub mix: f64,
}

impl GroupRule {
    pub fn pure(point: OperatingPoint) -> Self {
        Self {
            primary: point,
            secondary: None,
            mix: 0.0,
        }
    }

    pub fn mixture(primary: OperatingPoint, secondary: OperatingPoint, mix: f64) -> Self {
        Self {
            primary,
            secondary: Some(secondary),
            mix,
        }
    }

    pub fn accept_prob(&self, score: f64) -> f64 {
        match self.secondary {
            None => self.primary.accept_prob(score),
            Some(second) => {
                (1.0 - self.mix) * self.primary.accept_prob(score)
                    + self.mix * second.accept_prob(score)
            }
        }
    }

    /// Total probability spent on coin flips, used to break ties between
    /// otherwise equal rules.
    pub fn randomization(&self) -> f64 {
        let atom = |p: &OperatingPoint| {
            if p.theta.is_below_support() {
                0.0
            } else {
                p.q.min(1.0 - p.q)
            }
        };
        match self.secondary {
            None => atom(&self.primary),
            Some(s) => {
                self.mix.min(1.0 - self.mix)
                    + (1.0 - self.mix) * atom(&self.primary)
                    + self.mix * atom(&s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    EqualOpportunity,
    EqualizedOdds,
    Custom,
}

/// How a policy was obtained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Event of the view the policy was derived on.
    pub event: Option<Event>,
    pub weighted: bool,
    /// Common true positive rate, for equal-opportunity policies.
    pub rho: Option<f64>,
    pub fn_cost: Option<f64>,
    pub fp_cost: Option<f64>,
    /// Common `(FPR, TPR)` point, for equalized-odds policies.
    pub operating_point: Option<(f64, f64)>,
    /// Set when the feasible region collapsed to the diagonal.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupPolicy {
    pub criterion: Criterion,
    /// Indexed by group code.
    pub rules: Vec<GroupRule>,
    pub labels: Vec<String>,
    pub provenance: Provenance,
}

impl GroupPolicy {
    pub fn new(criterion: Criterion, rules: Vec<GroupRule>, labels: Vec<String>) -> Self {
        Self {
            criterion,
            rules,
            labels,
            provenance: Provenance::default(),
        }
    }

    pub fn rule(&self, group: GroupCode) -> Result<&GroupRule> {
        self.rules.get(group).ok_or(Error::MissingPolicy(group))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PolicyRecord::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: PolicyRecord = serde_json::from_str(text)?;
        record.try_into()
    }
}

/// Serialized form: `{criterion, per_group: [{theta, q, theta2, q2, w}], provenance}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub criterion: Criterion,
    pub per_group: Vec<RuleRecord>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleRecord {
    pub group: String,
    pub theta: Threshold,
    pub q: f64,
    pub theta2: Option<Threshold>,
    pub q2: Option<f64>,
    pub w: f64,
}

impl From<&GroupPolicy> for PolicyRecord {
    fn from(p: &GroupPolicy) -> Self {
        let per_group = p
            .rules
            .iter()
            .zip(&p.labels)
            .map(|(r, label)| RuleRecord {
                group: label.clone(),
                theta: r.primary.theta,
                q: r.primary.q,
                theta2: r.secondary.map(|s| s.theta),
                q2: r.secondary.map(|s| s.q),
                w: r.mix,
            })
            .collect();
        PolicyRecord {
            criterion: p.criterion,
            per_group,
            provenance: p.provenance.clone(),
        }
    }
}

impl TryFrom<PolicyRecord> for GroupPolicy {
    type Error = Error;

    fn try_from(rec: PolicyRecord) -> Result<Self> {
        let mut rules = Vec::with_capacity(rec.per_group.len());
        let mut labels = Vec::with_capacity(rec.per_group.len());
        for r in rec.per_group {
            let prob_ok = |v: f64| (0.0..=1.0).contains(&v);
            if !prob_ok(r.q) || !prob_ok(r.w) || r.q2.is_some_and(|q| !prob_ok(q)) {
                return Err(Error::invalid(
                    "policy",
                    format!("group `{}` has a probability outside [0, 1]", r.group),
                ));
            }
            let primary = OperatingPoint::new(r.theta, r.q);
            rules.push(match r.theta2 {
                Some(t2) => GroupRule::mixture(primary, OperatingPoint::new(t2, r.q2.unwrap_or(0.0)), r.w),
                None => GroupRule::pure(primary),
            });
            labels.push(r.group);
        }
        Ok(GroupPolicy {
            criterion: rec.criterion,
            rules,
            labels,
            provenance: rec.provenance,
        })
    }
}

/// Draws decisions. Row `i` uses ChaCha stream `i` under key `seed`, so the
/// result does not depend on row order or on how rows are partitioned.
pub fn apply_policy(
    policy: &GroupPolicy,
    scores: &[f64],
    groups: &[GroupCode],
    seed: u64,
) -> Result<Vec<bool>> {
    if scores.len() != groups.len() {
        return Err(Error::Shape {
            expected: groups.len(),
            found: scores.len(),
        });
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    scores
        .iter()
        .zip(groups)
        .enumerate()
        .map(|(i, (&s, &g))| {
            let rule = policy.rule(g)?;
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            let use_second: f64 = rng.random();
            let coin: f64 = rng.random();
            let point = match rule.secondary {
                Some(second) if use_second < rule.mix => second,
                _ => rule.primary,
            };
            Ok(coin < point.accept_prob(s))
        })
        .collect()
}

/// Expected rates of one group on one view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: GroupCode,
    pub tpr: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesTable {
    pub event: Event,
    pub weighted: bool,
    pub groups: Vec<GroupRates>,
}

/// `P(Ŷ = 1 | Y = label, A = group, E)` under the policy's randomization,
/// computed analytically from the rows of the view.
pub fn expected_acceptance(
    policy: &GroupPolicy,
    view: &SampleView<'_>,
    scores: &[f64],
    weights: Option<&[f64]>,
    group: GroupCode,
    label: bool,
) -> Result<f64> {
    let n = view.sample().len();
    check_scores(scores, n)?;
    check_weights(weights, n)?;
    view.require_outcomes()?;
    let rule = policy.rule(group)?;
    let rows: Vec<usize> = view.cell(group, label).collect();
    if rows.is_empty() {
        return Err(undefined(view, group, label));
    }
    let max_w = weights.map_or(1.0, |w| rows.iter().map(|&r| w[r]).fold(0.0, f64::max));
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for &r in &rows {
        let w = weights.map_or(1.0, |w| w[r] / max_w);
        num.add(w * rule.accept_prob(scores[r]));
        den.add(w);
    }
    Ok((num.value() / den.value()).clamp(0.0, 1.0))
}

pub fn expected_rates(
    policy: &GroupPolicy,
    view: &SampleView<'_>,
    scores: &[f64],
    weights: Option<&[f64]>,
) -> Result<RatesTable> {
    let groups = (0..view.sample().n_groups())
        .map(|g| {
            let tpr = expected_acceptance(policy, view, scores, weights, g, true)?;
            let fpr = expected_acceptance(policy, view, scores, weights, g, false)?;
            Ok(GroupRates {
                group: g,
                tpr,
                fpr,
                fnr: 1.0 - tpr,
                tnr: 1.0 - fpr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatesTable {
        event: view.event(),
        weighted: weights.is_some(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PopulationSample;

    fn two_group_policy(a: GroupRule, b: GroupRule) -> GroupPolicy {
        GroupPolicy::new(Criterion::Custom, vec![a, b], vec!["0".into(), "1".into()])
    }

    fn sample(groups: Vec<usize>, outcomes: Vec<bool>) -> PopulationSample {
        let n = groups.len();
        PopulationSample::from_codes(
            vec![],
            vec![],
            groups,
            vec!["0".into(), "1".into()],
            outcomes.into_iter().map(Some).collect(),
            vec![true; n],
            None,
        )
        .unwrap()
    }

    #[test]
    fn below_support_accepts_everything() {
        let p = two_group_policy(
            GroupRule::pure(OperatingPoint::accept_all()),
            GroupRule::pure(OperatingPoint::accept_all()),
        );
        let d = apply_policy(&p, &[0.0, 0.3, 1.0], &[0, 0, 1], 1).unwrap();
        assert_eq!(d, [true, true, true]);
    }

    #[test]
    fn sharp_threshold() {
        let rule = GroupRule::pure(OperatingPoint::new(Threshold::at(0.5), 0.9));
        let p = two_group_policy(rule, rule);
        let d = apply_policy(&p, &[0.2, 0.8], &[0, 1], 99).unwrap();
        assert_eq!(d, [false, true]);
    }

    #[test]
    fn unknown_group_is_missing_policy() {
        let rule = GroupRule::pure(OperatingPoint::accept_all());
        let p = GroupPolicy::new(Criterion::Custom, vec![rule], vec!["0".into()]);
        assert!(matches!(
            apply_policy(&p, &[0.2, 0.8], &[0, 1], 0),
            Err(Error::MissingPolicy(1))
        ));
    }

    #[test]
    fn atom_acceptance_concentrates() {
        let rule = GroupRule::pure(OperatingPoint::new(Threshold::at(0.8), 0.25));
        let p = two_group_policy(rule, rule);
        let n = 100_000;
        let d = apply_policy(&p, &vec![0.8; n], &vec![0; n], 2024).unwrap();
        let frac = d.iter().filter(|&&x| x).count() as f64 / n as f64;
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((frac - 0.25).abs() < 3.0 * sd, "{frac}");
    }

    #[test]
    fn decisions_ignore_row_partitioning() {
        let rule = GroupRule::mixture(
            OperatingPoint::new(Threshold::at(0.4), 0.5),
            OperatingPoint::new(Threshold::at(0.6), 0.5),
            0.3,
        );
        let p = two_group_policy(rule, rule);
        let scores: Vec<f64> = (0..200).map(|i| (i % 11) as f64 / 10.0).collect();
        let groups: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let all = apply_policy(&p, &scores, &groups, 5).unwrap();
        assert_eq!(all, apply_policy(&p, &scores, &groups, 5).unwrap());
        let prefix = apply_policy(&p, &scores[..50], &groups[..50], 5).unwrap();
        assert_eq!(prefix, all[..50]);
    }

    #[test]
    fn trivial_policy_rates() {
        let s = sample(vec![0, 0, 1, 1], vec![true, false, true, false]);
        let v = s.view(Event::All).unwrap();
        let p = two_group_policy(
            GroupRule::pure(OperatingPoint::accept_all()),
            GroupRule::pure(OperatingPoint::accept_all()),
        );
        let t = expected_rates(&p, &v, &[0.1, 0.2, 0.3, 0.4], None).unwrap();
        for g in &t.groups {
            assert_eq!((g.tpr, g.fpr, g.fnr, g.tnr), (1.0, 1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn atom_arithmetic() {
        let s = sample(vec![0, 0, 1, 1], vec![true, false, true, false]);
        let v = s.view(Event::All).unwrap();
        let rule = GroupRule::pure(OperatingPoint::new(Threshold::at(0.8), 0.3));
        let p = two_group_policy(rule, rule);
        let tpr = expected_acceptance(&p, &v, &[0.8, 0.1, 0.8, 0.1], None, 0, true).unwrap();
        assert_eq!(tpr, 0.3);
    }

    #[test]
    fn empty_cell_is_error() {
        let s = sample(vec![0, 0, 1], vec![true, false, true]);
        let v = s.view(Event::All).unwrap();
        let rule = GroupRule::pure(OperatingPoint::accept_all());
        let p = two_group_policy(rule, rule);
        assert!(matches!(
            expected_rates(&p, &v, &[0.1, 0.2, 0.3], None),
            Err(Error::UndefinedRate { label: 0, .. })
        ));
    }

    #[test]
    fn policy_json_roundtrip() {
        let p = two_group_policy(
            GroupRule::pure(OperatingPoint::accept_all()),
            GroupRule::mixture(
                OperatingPoint::new(Threshold::at(0.3), 0.25),
                OperatingPoint::new(Threshold::at(0.7), 1.0),
                0.5,
            ),
        );
        let text = p.to_json().unwrap();
        assert!(text.contains("\"theta\": \"below_support\""));
        assert!(text.contains("\"theta2\": 0.7"));
        assert_eq!(GroupPolicy::from_json(&text).unwrap(), p);
    }

    #[test]
    fn monte_carlo_matches_expectation() {
        let n = 1_000_000;
        let scores: Vec<f64> = (0..n).map(|i| (i % 7) as f64 / 6.0).collect();
        let groups = vec![0; n];
        let s = sample(groups.clone(), vec![true; n]);
        let rule = GroupRule::mixture(
            OperatingPoint::new(Threshold::at(3.0 / 6.0), 0.4),
            OperatingPoint::new(Threshold::at(1.0 / 6.0), 0.9),
            0.35,
        );
        let p = two_group_policy(rule, rule);
        let v = s.view(Event::All).unwrap();
        let exact = expected_acceptance(&p, &v, &scores, None, 0, true).unwrap();
        let d = apply_policy(&p, &scores, &groups, 11).unwrap();
        let mc = d.iter().filter(|&&x| x).count() as f64 / n as f64;
        let sd = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((mc - exact).abs() < 3.0 * sd, "mc {mc} exact {exact}");
    }

    proptest::proptest! {
        #[test]
        fn complements_sum_to_one(x in 0.0f64..=1.0) {
            proptest::prop_assert_eq!(x + (1.0 - x), 1.0);
        }

        #[test]
        fn raising_threshold_never_raises_rates(
            scores in proptest::collection::vec(0u8..20, 4..40),
            t1 in 0u8..20, t2 in 0u8..20, q in 0.0f64..=1.0,
        ) {
            let n = scores.len();
            let s = sample((0..n).map(|i| i % 2).collect(), (0..n).map(|i| i % 3 != 0).collect());
            let v = s.view(Event::All).unwrap();
            let sc: Vec<f64> = scores.iter().map(|&x| x as f64 / 20.0).collect();
            let (lo, hi) = (t1.min(t2) as f64 / 20.0, t1.max(t2) as f64 / 20.0);
            let mk = |t: f64| {
                let r = GroupRule::pure(OperatingPoint::new(Threshold::at(t), q));
                two_group_policy(r, r)
            };
            for label in [true, false] {
                for g in 0..2 {
                    let a = expected_acceptance(&mk(lo), &v, &sc, None, g, label);
                    let b = expected_acceptance(&mk(hi), &v, &sc, None, g, label);
                    if let (Ok(a), Ok(b)) = (a, b) {
                        proptest::prop_assert!(b <= a);
                    }
                }
            }
        }
    }
}
