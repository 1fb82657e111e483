//! Library results against independent computations: counting, pairwise
//! comparison, grid search, a separate likelihood fit and simulation.

mod common;

use censorfair::adjust::{derive_equal_opportunity, derive_equalized_odds, optimal_equal_opportunity, EqualOpportunityFamily, LossSpec};
use censorfair::dataset::{read_csv, write_csv, CsvSchema, Event, PopulationSample};
use censorfair::diagnose::{check_strong_dbd, find_weak_dbd_interval, inequity, WeakMode};
use censorfair::policy::{expected_acceptance, expected_rates, GroupPolicy, GroupRule, OperatingPoint};
use censorfair::rates::{conditional_cdf, delta_curve, roc_curve, DeltaCurve, Threshold};
use censorfair::reweight::{fit_inclusion_propensity, weighted_rate};
use censorfair::scoring::{fit_logistic, predict_sample};
use censorfair::synth::{
    generate_credit, generate_loan, generate_quantile_censoring, CreditScenarioSpec, LoanScenarioSpec,
    QuantileCensorSpec,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use common::*;

fn count_cdf(s: &PopulationSample, scores: &[f64], event: Event, g: usize, theta: f64) -> f64 {
    let rows: Vec<usize> = (0..s.len())
        .filter(|&r| s.in_event(r, event) && s.group(r) == g && s.outcome(r) == Some(true))
        .collect();
    rows.iter().filter(|&&r| scores[r] <= theta).count() as f64 / rows.len() as f64
}

#[test]
fn auc_matches_pairwise_comparison() {
    let (s, o) = generate_loan(&LoanScenarioSpec::new(2000, 3)).unwrap();
    let v = s.view(Event::Included).unwrap();
    let sc = &o.score_blind;
    let roc = roc_curve(&v, sc, 0, None).unwrap();
    let pos: Vec<f64> = v.cell(0, true).map(|r| sc[r]).collect();
    let neg: Vec<f64> = v.cell(0, false).map(|r| sc[r]).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    let mw = wins / (pos.len() * neg.len()) as f64;
    assert!((roc.auc() - mw).abs() <= 1e-9, "{} vs {mw}", roc.auc());
}

#[test]
fn auc_with_ties() {
    let scores = [0.1, 0.5, 0.5, 0.9, 0.5, 0.1];
    let y = [false, true, false, true, true, false];
    let s = PopulationSample::from_codes(
        vec![],
        vec![],
        vec![0, 0, 0, 0, 0, 1],
        vec!["a".into(), "b".into()],
        y.iter().map(|&b| Some(b)).collect(),
        vec![true; 6],
        None,
    )
    .unwrap();
    let roc = roc_curve(&s.view(Event::All).unwrap(), &scores, 0, None).unwrap();
    // Positives {0.5, 0.9, 0.5}, negatives {0.1, 0.5}: wins 1+1+1+1 and two ties.
    assert!((roc.auc() - 5.0 / 6.0).abs() < 1e-15);
}

#[test]
fn cdf_matches_counting() {
    let (s, o) = loan();
    let v = s.view(Event::Included).unwrap();
    let cdf = conditional_cdf(&v, &o.score_blind, 1, true, None).unwrap();
    for k in 0..20 {
        let theta = k as f64 / 19.0;
        let c = count_cdf(s, &o.score_blind, Event::Included, 1, theta);
        assert!((cdf.eval(theta) - c).abs() <= 1e-12, "theta {theta}");
    }
}

fn loan_deltas(scores: &[f64]) -> (DeltaCurve, DeltaCurve) {
    let (s, _) = loan();
    let (tr, tg) = views(s);
    let d = |g| {
        delta_curve(
            &conditional_cdf(&tr, scores, g, true, None).unwrap(),
            &conditional_cdf(&tg, scores, g, true, None).unwrap(),
        )
        .unwrap()
    };
    (d(0), d(1))
}

#[test]
fn delta_matches_two_pass_counting() {
    let (s, o) = loan();
    let (d0, d1) = loan_deltas(&o.score_blind);
    for k in 0..200 {
        let theta = k as f64 / 199.0;
        for (g, d) in [(0, &d0), (1, &d1)] {
            let c = count_cdf(s, &o.score_blind, Event::Included, g, theta)
                - count_cdf(s, &o.score_blind, Event::Targeted, g, theta);
            assert!((d.eval(theta) - c).abs() <= 1e-12);
        }
    }
}

/// Longest grid interval `[g_i, g_j]` on which every grid value of `Δ_a`
/// exceeds every grid value of `Δ_b`.
fn grid_interval(da: &DeltaCurve, db: &DeltaCurve, lo: f64, hi: f64) -> (f64, f64, f64) {
    let h = (hi - lo) / 199.0;
    let grid: Vec<f64> = (0..200).map(|k| lo + k as f64 * h).collect();
    let va: Vec<f64> = grid.iter().map(|&t| da.eval(t)).collect();
    let vb: Vec<f64> = grid.iter().map(|&t| db.eval(t)).collect();
    let mut best = (0.0, 0.0);
    for i in 0..200 {
        for j in i..200 {
            let min_a = va[i..=j].iter().cloned().fold(f64::INFINITY, f64::min);
            let max_b = vb[i..=j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if min_a > max_b && grid[j] - grid[i] > best.1 - best.0 {
                best = (grid[i], grid[j]);
            }
        }
    }
    (best.0, best.1, h)
}

#[test]
fn weak_interval_matches_grid_search() {
    let (_, o) = loan();
    for scores in [&o.score_aware, &o.score_blind] {
        let (d0, d1) = loan_deltas(scores);
        let f = find_weak_dbd_interval(&d0, &d1, WeakMode::Strict, None).unwrap();
        let (lo, hi) = f.interval.unwrap();
        let support = d0.train().support();
        let (glo, ghi, h) = grid_interval(&d0, &d1, support[0], *support.last().unwrap());
        assert!((lo - glo).abs() <= 2.0 * h && (hi - ghi).abs() <= 2.0 * h, "({lo}, {hi}) vs grid ({glo}, {ghi})");
    }
}

/// Independent iteratively reweighted least squares for a pooled logistic
/// model with intercept, solved by Gaussian elimination.
fn reference_logistic(x: &[[f64; 2]], y: &[bool], ridge: f64) -> [f64; 3] {
    let n = x.len() as f64;
    let mut b = [0.0; 3];
    for _ in 0..100 {
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for (xi, &yi) in x.iter().zip(y) {
            let f = [1.0, xi[0], xi[1]];
            let eta = b[0] + b[1] * xi[0] + b[2] * xi[1];
            let p = 1.0 / (1.0 + (-eta).exp());
            for a in 0..3 {
                g[a] += (f64::from(u8::from(yi)) - p) * f[a] / n;
                for c in 0..3 {
                    h[a][c] += p * (1.0 - p) * f[a] * f[c] / n;
                }
            }
        }
        for a in 0..3 {
            g[a] -= ridge * b[a];
            h[a][a] += ridge;
        }
        // Solve h · step = g.
        let mut m = [[0.0; 4]; 3];
        for a in 0..3 {
            m[a][..3].copy_from_slice(&h[a]);
            m[a][3] = g[a];
        }
        for col in 0..3 {
            let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            for row in 0..3 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..4 {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        let step: Vec<f64> = (0..3).map(|a| m[a][3] / m[a][a]).collect();
        for a in 0..3 {
            b[a] += step[a];
        }
        if step.iter().all(|s| s.abs() < 1e-14) {
            break;
        }
    }
    b
}

#[test]
fn pooled_fit_matches_reference_likelihood_fit() {
    let (s, o) = loan();
    let tr = s.view(Event::Included).unwrap();
    let model = fit_logistic(&tr, false).unwrap();
    let x: Vec<[f64; 2]> = tr.rows().iter().map(|&r| [s.row(r)[0], s.row(r)[1]]).collect();
    let y: Vec<bool> = tr.rows().iter().map(|&r| s.outcome(r) == Some(true)).collect();
    let b = reference_logistic(&x, &y, model.ridge);
    let ours = [model.intercepts[0], model.coefficients[0][0], model.coefficients[0][1]];
    for k in 0..3 {
        assert!((ours[k] - b[k]).abs() < 1e-6, "{ours:?} vs {b:?}");
    }
    let fitted = predict_sample(&model, s).unwrap();
    let reference: Vec<f64> = (0..s.len())
        .map(|r| 1.0 / (1.0 + (-(b[0] + b[1] * s.row(r)[0] + b[2] * s.row(r)[1])).exp()))
        .collect();
    let mad = |a: &[f64]| a.iter().zip(&o.score_aware).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
    assert!(mad(&fitted) <= mad(&reference) + 1e-6);
    let n = fitted.len() as f64;
    let (mf, mo) = (fitted.iter().sum::<f64>() / n, o.score_aware.iter().sum::<f64>() / n);
    let cov: f64 = fitted.iter().zip(&o.score_aware).map(|(a, b)| (a - mf) * (b - mo)).sum();
    let vf: f64 = fitted.iter().map(|a| (a - mf).powi(2)).sum();
    let vo: f64 = o.score_aware.iter().map(|b| (b - mo).powi(2)).sum();
    assert!(cov / (vf * vo).sqrt() > 0.95);
}

#[test]
fn loan_group_means() {
    let (s, _) = loan();
    let rows: Vec<usize> = (0..s.len()).filter(|&r| s.group(r) == 0).collect();
    let n = rows.len() as f64;
    for (j, mu) in [1.0, 0.0].into_iter().enumerate() {
        let m = rows.iter().map(|&r| s.row(r)[j]).sum::<f64>() / n;
        assert!((m - mu).abs() <= 3.0 / 50_000f64.sqrt(), "coordinate {j}: {m}");
    }
}

#[test]
fn loan_positive_rate_matches_integral() {
    let (s, _) = loan();
    let spec = LoanScenarioSpec::default();
    let ys: Vec<f64> = (0..s.len())
        .filter(|&r| s.group(r) == 1)
        .map(|r| f64::from(u8::from(s.outcome(r) == Some(true))))
        .collect();
    let p_hat = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut rng = StdRng::seed_from_u64(11);
    let boot: Vec<f64> = (0..200)
        .map(|_| (0..ys.len()).map(|_| ys[rng.random_range(0..ys.len())]).sum::<f64>() / ys.len() as f64)
        .collect();
    let mb = boot.iter().sum::<f64>() / 200.0;
    let se = (boot.iter().map(|b| (b - mb).powi(2)).sum::<f64>() / 199.0).sqrt();
    let mut mc = 0.0;
    let draws = 2_000_000;
    for _ in 0..draws {
        let x = [rng.sample::<f64, _>(StandardNormal), 1.0 + rng.sample::<f64, _>(StandardNormal)];
        mc += spec.aware_score(x, 1);
    }
    mc /= draws as f64;
    assert!((p_hat - mc).abs() <= 3.0 * se, "{p_hat} vs {mc} (se {se})");
}

#[test]
fn loan_is_reproducible_and_roundtrips() {
    let (a, oa) = generate_loan(&LoanScenarioSpec::new(3000, 5)).unwrap();
    let (b, ob) = generate_loan(&LoanScenarioSpec::new(3000, 5)).unwrap();
    assert_eq!(oa, ob);
    let mut buf = Vec::new();
    write_csv(&a, &mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
    for r in 0..a.len() {
        let bits = |s: &PopulationSample| s.row(r).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&a), bits(&back));
        assert_eq!(a.group_label(a.group(r)), back.group_label(back.group(r)));
        assert_eq!(a.outcome(r), back.outcome(r));
        assert_eq!(a.included(r), back.included(r));
        assert_eq!(a.targeted(r), back.targeted(r));
    }
}

#[test]
fn loan_has_no_strong_finding() {
    let (s, o) = loan();
    let (tr, tg) = views(s);
    let c = |v, g| conditional_cdf(v, &o.score_blind, g, true, None).unwrap();
    let f = check_strong_dbd(&c(&tr, 0), &c(&tg, 0), &c(&tr, 1), &c(&tg, 1), 0.0);
    assert!(f.is_none(), "{f:?}");
}

#[test]
fn equalized_odds_optimum_moves_with_the_population() {
    let (s, o) = loan();
    let (tr, tg) = views(s);
    let point = |v| derive_equalized_odds(&o.score_blind, v, &LossSpec::symmetric(), None).unwrap().provenance.operating_point.unwrap();
    let (pz, pt) = (point(&tr), point(&tg));
    for p in [pz, pt] {
        assert!(p.0 > 0.0 && p.0 < 1.0 && p.1 > 0.0 && p.1 < 1.0, "{p:?}");
    }
    assert!((pz.0 - pt.0).abs() + (pz.1 - pt.1).abs() > 0.01, "{pz:?} vs {pt:?}");
}

#[test]
fn oracle_and_fitted_weights_recover_target_rates() {
    let (s, o) = loan();
    let (tr, tg) = views(s);
    let sc = &o.score_blind;
    let policy = derive_equal_opportunity(sc, &tr, 0.7, None).unwrap();
    let oracle = loan_oracle_weights();
    let fitted = fit_inclusion_propensity(s).unwrap();
    for g in 0..2 {
        for label in [true, false] {
            let truth = expected_acceptance(&policy, &tg, sc, None, g, label).unwrap();
            let est = weighted_rate(&policy, &tr, sc, &oracle, g, label).unwrap();
            assert!((est - truth).abs() <= 0.01, "oracle g{g} y{label}: {est} vs {truth}");
            let est = weighted_rate(&policy, &tr, sc, &fitted, g, label).unwrap();
            assert!((est - truth).abs() <= 0.02, "fitted g{g} y{label}: {est} vs {truth}");
        }
    }
}

#[test]
fn naive_group1_thresholds_higher_at_matched_group0_thresholds() {
    let (s, o) = loan();
    let tr = s.view(Event::Included).unwrap();
    let sc = &o.score_blind;
    let w = loan_oracle_weights().within_group_weights(s).unwrap();
    let c = |wt: Option<&[f64]>| -> Vec<_> { (0..2).map(|g| conditional_cdf(&tr, sc, g, true, wt).unwrap()).collect() };
    let (cz, cw) = (c(None), c(Some(&w)));
    for k in 1..100 {
        let t0 = k as f64 / 100.0;
        let naive = cz[1].inverse(cz[0].eval(t0)).value();
        let corrected = cw[1].inverse(cw[0].eval(t0)).value();
        assert!(naive >= corrected, "theta_0 {t0}");
        if t0 >= 0.1 {
            assert!(naive > corrected, "theta_0 {t0}");
        }
    }
}

#[test]
fn optimal_equal_opportunity_beats_every_rate_on_a_fine_grid() {
    for seed in 0..6u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let n = 40;
        let g: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let sc: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 8.0).collect();
        let y: Vec<Option<bool>> = (0..n).map(|i| Some(i < 4 || rng.random::<f64>() < sc[i])).collect();
        let y: Vec<Option<bool>> = y.iter().enumerate().map(|(i, v)| if (4..8).contains(&i) { Some(false) } else { *v }).collect();
        let s = PopulationSample::from_codes(vec![], vec![], g, vec!["a".into(), "b".into()], y, vec![true; n], None).unwrap();
        let v = s.view(Event::All).unwrap();
        let loss = LossSpec::new(1.0 + seed as f64, 1.0).unwrap();
        // Expected loss by row sums: per-row costs with counted frequencies.
        let cost = |p: &GroupPolicy| {
            let r = expected_rates(p, &v, &sc, None).unwrap();
            let mut total = 0.0;
            for gr in &r.groups {
                let npos = v.cell(gr.group, true).count() as f64;
                let nneg = v.cell(gr.group, false).count() as f64;
                total += loss.fn_cost * npos * gr.fnr + loss.fp_cost * nneg * gr.fpr;
            }
            total / n as f64
        };
        let (best, _) = optimal_equal_opportunity(&sc, &v, &loss, None).unwrap();
        let fam = EqualOpportunityFamily::new(&v, &sc, None).unwrap();
        let best_cost = cost(&best);
        for k in 0..=1000 {
            let p = fam.at_tpr(k as f64 / 1000.0).unwrap();
            assert!(best_cost <= cost(&p) + 1e-12, "seed {seed}, rho {}", k as f64 / 1000.0);
        }
    }
}

#[test]
fn reported_fnr_gap_is_the_inequity() {
    // Target FNRs of 0.11 and 0.20 under an equal-opportunity policy.
    let n = 100;
    let scores: Vec<f64> = (0..2 * n).map(|i| (i % n) as f64 / n as f64).collect();
    let g: Vec<usize> = (0..2 * n).map(|i| i / n).collect();
    let s = PopulationSample::from_codes(
        vec![],
        vec![],
        g,
        vec!["White".into(), "White Hispanic".into()],
        vec![Some(true); 2 * n],
        vec![true; 2 * n],
        None,
    )
    .unwrap();
    let at = |t: f64| GroupRule::pure(OperatingPoint::new(Threshold::at(t), 0.0));
    // Scores are multiples of 0.01: accept above 0.105 vs above 0.195.
    let policy = GroupPolicy::new(
        censorfair::policy::Criterion::Custom,
        vec![at(0.105), at(0.195)],
        s.label_map().to_vec(),
    );
    let m = inequity(&policy, &s.view(Event::Targeted).unwrap(), &scores, None).unwrap();
    assert!((m.get(0, 1) - 0.09).abs() < 1e-12);
    assert!((m.tpr[0] - 0.89).abs() < 1e-12 && (m.tpr[1] - 0.80).abs() < 1e-12);
}

#[test]
fn three_group_inequity_matches_counting() {
    let scores = [0.1, 0.4, 0.8, 0.3, 0.5, 0.9, 0.2, 0.6, 0.7, 0.95, 0.05, 0.45];
    let g = [0, 0, 0, 1, 1, 1, 2, 2, 2, 0, 1, 2];
    let s = PopulationSample::from_codes(
        vec![],
        vec![],
        g.to_vec(),
        vec!["a".into(), "b".into(), "c".into()],
        vec![Some(true); 12],
        vec![true; 12],
        None,
    )
    .unwrap();
    let at = |t: f64| GroupRule::pure(OperatingPoint::new(Threshold::at(t), 0.0));
    let policy = GroupPolicy::new(censorfair::policy::Criterion::Custom, vec![at(0.3), at(0.4), at(0.5)], s.label_map().to_vec());
    let m = inequity(&policy, &s.view(Event::All).unwrap(), &scores, None).unwrap();
    let thresholds = [0.3, 0.4, 0.5];
    let tpr: Vec<f64> = (0..3)
        .map(|a| {
            let rows: Vec<usize> = (0..12).filter(|&r| g[r] == a).collect();
            rows.iter().filter(|&&r| scores[r] > thresholds[a]).count() as f64 / rows.len() as f64
        })
        .collect();
    for a in 0..3 {
        for b in 0..3 {
            assert_eq!(m.get(a, b), tpr[a] - tpr[b]);
        }
    }
}

fn credit_orientation(feature: usize) -> (f64, f64) {
    let (s, p) = generate_credit(&CreditScenarioSpec {
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let censored = generate_quantile_censoring(&QuantileCensorSpec::new(feature), &s).unwrap();
    let (tr, tg) = views(&censored);
    let d = |g| {
        delta_curve(
            &conditional_cdf(&tr, &p, g, true, None).unwrap(),
            &conditional_cdf(&tg, &p, g, true, None).unwrap(),
        )
        .unwrap()
    };
    let (d0, d1) = (d(0), d(1));
    let len = |f: censorfair::diagnose::DbdFinding| f.interval.map_or(0.0, |(lo, hi)| hi - lo);
    (
        len(find_weak_dbd_interval(&d0, &d1, WeakMode::Strict, None).unwrap()),
        len(find_weak_dbd_interval(&d1, &d0, WeakMode::Strict, None).unwrap()),
    )
}

#[test]
fn credit_analog_direction_reverses_with_the_censoring_feature() {
    // (group 1 disadvantaged, group 0 disadvantaged) interval lengths.
    let (inc_1, inc_0) = credit_orientation(0);
    assert!(inc_1 > 0.0 && inc_1 > 2.0 * inc_0, "income: {inc_1} vs {inc_0}");
    let (per_1, per_0) = credit_orientation(1);
    assert!(per_0 > 0.0 && per_0 > 2.0 * per_1, "decoupled: {per_1} vs {per_0}");
}
