#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::OnceLock;

use censorfair::dataset::{Event, PopulationSample};
use censorfair::policy::GroupPolicy;
use censorfair::reweight::WeightFunction;
use censorfair::synth::{generate_loan, LoanScenarioSpec, OracleBundle};

pub const LOAN_SEED: u64 = 20_180_710;
pub const LOAN_N: usize = 100_000;

pub fn loan() -> &'static (PopulationSample, OracleBundle) {
    static CELL: OnceLock<(PopulationSample, OracleBundle)> = OnceLock::new();
    CELL.get_or_init(|| generate_loan(&LoanScenarioSpec::new(LOAN_N, LOAN_SEED)).unwrap())
}

/// Oracle weights of the loan fixture, `1 / P(Z=1 | X, A)` per row.
pub fn loan_oracle_weights() -> WeightFunction {
    WeightFunction::tabulated(loan().1.ratio_weights()).unwrap()
}

/// One `(x, a)` stratum of an enumerated world. Label counts are the rows of
/// the full population; `tau` and `pi` are the exact fractions of each
/// label's rows that are targeted and included, so censoring is at random
/// given `(x, a)`.
#[derive(Clone, Debug)]
pub struct Stratum {
    pub x: f64,
    pub a: usize,
    pub score: f64,
    pub pos: usize,
    pub neg: usize,
    pub tau: (usize, usize),
    pub pi: (usize, usize),
}

impl Stratum {
    fn part(n: usize, (num, den): (usize, usize)) -> usize {
        assert_eq!(n * num % den, 0, "stratum count not divisible");
        n * num / den
    }

    pub fn count(&self, label: bool) -> usize {
        if label {
            self.pos
        } else {
            self.neg
        }
    }

    pub fn targeted(&self, label: bool) -> usize {
        Self::part(self.count(label), self.tau)
    }

    pub fn included(&self, label: bool) -> usize {
        Self::part(self.count(label), self.pi)
    }

    /// `P(T=1 | x, a) / P(Z=1 | x, a)`.
    pub fn ratio(&self) -> f64 {
        (self.tau.0 as f64 / self.tau.1 as f64) / (self.pi.0 as f64 / self.pi.1 as f64)
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub strata: Vec<Stratum>,
    pub groups: usize,
}

impl World {
    /// Replicated rows: in each stratum and label, the first `pi` share is
    /// included and the last `tau` share is targeted.
    pub fn sample(&self) -> (PopulationSample, Vec<f64>) {
        let (mut x, mut g, mut y, mut z, mut t, mut s) = Default::default();
        let (x, g, y, z, t, s): (&mut Vec<f64>, &mut Vec<usize>, &mut Vec<Option<bool>>, &mut Vec<bool>, &mut Vec<bool>, &mut Vec<f64>) =
            (&mut x, &mut g, &mut y, &mut z, &mut t, &mut s);
        for st in &self.strata {
            for label in [true, false] {
                let n = st.count(label);
                let (nz, nt) = (st.included(label), st.targeted(label));
                for i in 0..n {
                    x.push(st.x);
                    g.push(st.a);
                    y.push(Some(label));
                    z.push(i < nz);
                    t.push(i >= n - nt);
                    s.push(st.score);
                }
            }
        }
        let labels = (0..self.groups).map(|a| format!("g{a}")).collect();
        let sample =
            PopulationSample::from_codes(vec!["x".into()], x.clone(), g.clone(), labels, y.clone(), z.clone(), Some(t.clone()))
                .unwrap();
        (sample, s.clone())
    }

    pub fn weight_fn(&self) -> WeightFunction {
        let table: HashMap<(u64, usize), f64> =
            self.strata.iter().map(|st| ((st.x.to_bits(), st.a), st.ratio())).collect();
        WeightFunction::oracle(move |x, a| table[&(x[0].to_bits(), a)])
    }

    /// `P(Ŷ = 1 | Y = label, A = a, T = 1)` summed over strata, not rows.
    pub fn target_rate(&self, policy: &GroupPolicy, a: usize, label: bool) -> f64 {
        let rule = policy.rule(a).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for st in self.strata.iter().filter(|st| st.a == a) {
            let n = st.targeted(label) as f64;
            num += n * rule.accept_prob(st.score);
            den += n;
        }
        num / den
    }

    pub fn train_rate(&self, policy: &GroupPolicy, a: usize, label: bool) -> f64 {
        let rule = policy.rule(a).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for st in self.strata.iter().filter(|st| st.a == a) {
            let n = st.included(label) as f64;
            num += n * rule.accept_prob(st.score);
            den += n;
        }
        num / den
    }
}

/// A 16-stratum world with covariate-dependent inclusion and targeting.
pub fn mixed_world() -> World {
    let mut strata = Vec::new();
    let pis = [(1, 4), (1, 2), (3, 4), (1, 1)];
    let taus = [(1, 1), (2, 3), (1, 3), (1, 1)];
    for a in 0..2 {
        for (k, xv) in [0.0, 1.0, 2.0, 3.0].into_iter().enumerate() {
            let j = (k + a) % 4;
            strata.push(Stratum {
                x: xv,
                a,
                score: 0.15 + 0.2 * xv + 0.05 * a as f64,
                pos: 12 * (1 + k + a),
                neg: 12 * (4 - k + a),
                tau: taus[j],
                pi: pis[(j + 1) % 4],
            });
        }
    }
    World { strata, groups: 2 }
}

/// Inclusion fraction depends on the group alone; everyone is targeted.
pub fn group_only_world() -> World {
    let mut w = mixed_world();
    for st in &mut w.strata {
        st.tau = (1, 1);
        st.pi = if st.a == 0 { (1, 2) } else { (1, 4) };
    }
    w
}

/// Train-only and target-only point-mass populations, all positive.
pub fn point_mass_sample(train: &[(f64, usize)], target: &[(f64, usize)], groups: usize) -> (PopulationSample, Vec<f64>) {
    let n = train.len() + target.len();
    let scores: Vec<f64> = train.iter().chain(target).map(|p| p.0).collect();
    let g: Vec<usize> = train.iter().chain(target).map(|p| p.1).collect();
    let z: Vec<bool> = (0..n).map(|i| i < train.len()).collect();
    let t: Vec<bool> = (0..n).map(|i| i >= train.len()).collect();
    let labels = (0..groups).map(|a| format!("g{a}")).collect();
    let s = PopulationSample::from_codes(vec![], vec![], g, labels, vec![Some(true); n], z, Some(t)).unwrap();
    (s, scores)
}

/// Expands `(score, count)` lists into rows of one group.
pub fn expand(points: &[(f64, usize)], group: usize) -> Vec<(f64, usize)> {
    points
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat_n((s, group), c))
        .collect()
}

pub fn views(s: &PopulationSample) -> (censorfair::dataset::SampleView<'_>, censorfair::dataset::SampleView<'_>) {
    (s.view(Event::Included).unwrap(), s.view(Event::Targeted).unwrap())
}
