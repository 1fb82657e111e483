use std::fs;
use std::path::{Path, PathBuf};

use censorfair::adjust::{derive_equal_opportunity, derive_equalized_odds, optimal_equal_opportunity, LossSpec};
use censorfair::dataset::{load_csv, save_csv, CsvSchema, Event, PopulationSample, SampleView};
use censorfair::diagnose::{
    check_strong_dbd, find_weak_dbd_interval, inequity, prop1_identity, prop7_null_check, prop8_ratio_test, WeakMode,
};
use censorfair::export::{write_cdfs, write_deltas, write_intervals, write_rocs};
use censorfair::policy::{expected_rates, GroupPolicy, PolicyRecord, RatesTable};
use censorfair::rates::{conditional_cdf, delta_curve, precedes, roc_curve, ConditionalCdf, DeltaCurve};
use censorfair::reweight::{fit_density_ratio, fit_inclusion_propensity_capped, CellMap, WeightFunction};
use censorfair::scoring::{fit_logistic, predict_sample, LogisticScoreModel};
use censorfair::synth::{generate_credit, generate_loan, generate_quantile_censoring, CreditScenarioSpec, LoanScenarioSpec, QuantileCensorSpec};
use censorfair::Error;

use crate::config::{CriterionArg, EvalMode, Scenario, Settings, WeightSource};
use crate::report::{AuditReport, TargetSource};
use crate::CliError;

fn out_path(s: &Settings, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&s.out_dir).map_err(|e| CliError::io(&s.out_dir, e))?;
    Ok(s.out_dir.join(name))
}

fn write_bytes(s: &Settings, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = out_path(s, name)?;
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes CSV produced by `f` into a buffer, then to `name`.
fn write_csv_with(
    s: &Settings,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> censorfair::Result<()>,
) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_bytes(s, name, &buf)
}

fn write_report(s: &Settings, report: &AuditReport) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(Error::from)?;
    text.push('\n');
    write_bytes(s, "report.json", text.as_bytes())
}

/// One numeric column of a row-aligned CSV file.
pub fn read_column(path: &Path, column: &str, rows: usize) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::csv(path, e))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Core(Error::Schema(format!("{}: no column `{column}`", path.display()))))?;
    let mut values = Vec::with_capacity(rows);
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::csv(path, e))?;
        let field = record.get(idx).unwrap_or_default();
        let v = field.trim().parse::<f64>().map_err(|e| {
            CliError::Core(Error::Parse {
                row,
                column: column.into(),
                message: format!("{}: {e}", path.display()),
            })
        })?;
        values.push(v);
    }
    if values.len() != rows {
        return Err(Error::Shape {
            expected: rows,
            found: values.len(),
        }
        .into());
    }
    Ok(values)
}

fn load_data(s: &Settings) -> Result<PopulationSample, CliError> {
    Ok(load_csv(s.data()?, &CsvSchema::default())?)
}

fn load_scores(s: &Settings, sample: &PopulationSample) -> Result<Vec<f64>, CliError> {
    match (&s.scores, &s.model) {
        (Some(path), _) => read_column(path, &s.score_column, sample.len()),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(predict_sample(&LogisticScoreModel::from_json(&text)?, sample)?)
        }
        (None, None) => Err(CliError::Config("a score source is required: --scores or --model".into())),
    }
}

fn load_policy(path: &Path) -> Result<GroupPolicy, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(GroupPolicy::from_json(&text)?)
}

fn weight_function(s: &Settings, sample: &PopulationSample) -> Result<Option<WeightFunction>, CliError> {
    let Some(source) = s.weights else { return Ok(None) };
    let wf = match source {
        WeightSource::InversePropensity => fit_inclusion_propensity_capped(sample, s.cap)?,
        WeightSource::DensityRatio => {
            let cells = CellMap::QuantileBins {
                columns: Vec::new(),
                bins: s.bins,
            };
            let (tr, tg) = (sample.view(Event::Included)?, sample.view(Event::Targeted)?);
            fit_density_ratio(&tr, &tg, &cells, s.alpha, s.cap)?
        }
        WeightSource::Oracle => {
            let path = s
                .oracle
                .as_deref()
                .ok_or_else(|| CliError::Config("oracle weights need --oracle".into()))?;
            let p = read_column(path, "true_propensity", sample.len())?;
            WeightFunction::tabulated(p.iter().map(|p| 1.0 / p).collect())?
        }
    };
    Ok(Some(wf))
}

/// The target view when its outcomes are observed.
fn observed_target<'a>(sample: &'a PopulationSample) -> Option<SampleView<'a>> {
    let v = sample.view(Event::Targeted).ok()?;
    v.require_outcomes().ok().map(|_| v)
}

fn rates_and_inequity(
    report: &mut AuditReport,
    policy: &GroupPolicy,
    sample: &PopulationSample,
    scores: &[f64],
    weights: Option<&[f64]>,
) -> Result<(), CliError> {
    let tr = sample.view(Event::Included)?;
    let mut views: Vec<(SampleView<'_>, Option<&[f64]>)> = vec![(tr.clone(), None)];
    if let Some(w) = weights {
        views.push((tr, Some(w)));
    }
    if let Some(tg) = observed_target(sample) {
        views.push((tg, None));
    }
    for (v, w) in &views {
        report.rates.push(expected_rates(policy, v, scores, *w)?);
        report.inequity.push(inequity(policy, v, scores, *w)?);
    }
    Ok(())
}

fn write_rates_csv(s: &Settings, labels: &[String], tables: &[RatesTable]) -> Result<PathBuf, CliError> {
    write_csv_with(s, "rates.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["event", "weighted", "group", "tpr", "fpr", "fnr", "tnr"])?;
        for t in tables {
            for g in &t.groups {
                w.write_record([
                    t.event.to_string(),
                    t.weighted.to_string(),
                    labels[g.group].clone(),
                    g.tpr.to_string(),
                    g.fpr.to_string(),
                    g.fnr.to_string(),
                    g.tnr.to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })
}

pub fn simulate(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let data = out_path(s, "data.csv")?;
    let oracle = out_path(s, "oracle.csv")?;
    match s.scenario {
        Scenario::Loan => {
            let (sample, bundle) = generate_loan(&LoanScenarioSpec::new(s.n, s.seed))?;
            save_csv(&sample, &data)?;
            bundle.save_csv(&oracle)?;
        }
        Scenario::Quantile => {
            let spec = CreditScenarioSpec {
                n: s.n,
                seed: s.seed,
                ..Default::default()
            };
            let (sample, scores) = generate_credit(&spec)?;
            let feature = sample
                .covariate_index(&s.feature)
                .ok_or_else(|| CliError::Config(format!("unknown feature `{}`", s.feature)))?;
            let censored = generate_quantile_censoring(&QuantileCensorSpec { feature, q: s.quantile }, &sample)?;
            save_csv(&censored, &data)?;
            write_csv_with(s, "oracle.csv", |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["row", "true_score"])?;
                for (r, p) in scores.iter().enumerate() {
                    w.write_record([r.to_string(), p.to_string()])?;
                }
                w.flush().map_err(csv::Error::from)?;
                Ok(())
            })?;
        }
    }
    Ok(vec![data, oracle])
}

pub fn fit(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let sample = load_data(s)?;
    let model = fit_logistic(&sample.view(Event::Included)?, s.per_group)?;
    let mut text = model.to_json()?;
    text.push('\n');
    let model_path = write_bytes(s, "model.json", text.as_bytes())?;
    let scores = predict_sample(&model, &sample)?;
    let scores_path = write_csv_with(s, "scores.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "score"])?;
        for (r, p) in scores.iter().enumerate() {
            w.write_record([r.to_string(), p.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    Ok(vec![model_path, scores_path, write_report(s, &AuditReport::new("fit", s))?])
}

pub fn weights(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let sample = load_data(s)?;
    let wf = weight_function(s, &sample)?
        .ok_or_else(|| CliError::Config("a weight source is required: --weights or --oracle".into()))?;
    let mut report = AuditReport::new("weights", s);
    report.weights = Some(wf.summary(&sample.view(Event::Included)?)?);
    let mut text = serde_json::to_string_pretty(&wf.to_json()?).map_err(Error::from)?;
    text.push('\n');
    let json = write_bytes(s, "weights.json", text.as_bytes())?;
    let table = write_csv_with(s, "weights_table.csv", |buf| wf.write_table(buf))?;
    let rows = wf.row_weights(&sample)?;
    let row_path = write_csv_with(s, "row_weights.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "weight"])?;
        for (r, v) in rows.iter().enumerate() {
            w.write_record([r.to_string(), v.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    Ok(vec![json, table, row_path, write_report(s, &report)?])
}

pub fn adjust(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let sample = load_data(s)?;
    let scores = load_scores(s, &sample)?;
    let wf = weight_function(s, &sample)?;
    let weights = wf.as_ref().map(|wf| wf.within_group_weights(&sample)).transpose()?;
    let w = match s.eval {
        EvalMode::Naive => None,
        EvalMode::Reweighted => Some(weights.as_deref().ok_or_else(|| {
            CliError::Config("reweighted evaluation needs a weight source: --weights or --oracle".into())
        })?),
    };
    let tr = sample.view(Event::Included)?;
    let loss = LossSpec::exchange_rate(s.fn_fp_rate)?;
    let policy = match (s.criterion, s.rho) {
        (CriterionArg::Eo, Some(rho)) => derive_equal_opportunity(&scores, &tr, rho, w)?,
        (CriterionArg::Eo, None) => optimal_equal_opportunity(&scores, &tr, &loss, w)?.0,
        (CriterionArg::Eodds, _) => derive_equalized_odds(&scores, &tr, &loss, w)?,
    };
    let mut report = AuditReport::new("adjust", s);
    report.policies.push(PolicyRecord::from(&policy));
    rates_and_inequity(&mut report, &policy, &sample, &scores, weights.as_deref())?;
    if let Some(wf) = &wf {
        report.weights = Some(wf.summary(&tr)?);
    }
    let mut text = policy.to_json()?;
    text.push('\n');
    let policy_path = write_bytes(s, "policy.json", text.as_bytes())?;
    let rates_path = write_rates_csv(s, sample.label_map(), &report.rates)?;
    Ok(vec![policy_path, rates_path, write_report(s, &report)?])
}

/// Positive-label training and target distributions of one group.
fn group_deltas(
    sample: &PopulationSample,
    scores: &[f64],
    weights: Option<&[f64]>,
) -> Result<(Vec<DeltaCurve>, TargetSource), CliError> {
    let tr = sample.view(Event::Included)?;
    let target = observed_target(sample);
    let source = match (&target, weights) {
        (Some(_), _) => TargetSource::Observed,
        (None, Some(_)) => TargetSource::Reweighted,
        (None, None) => {
            return Err(CliError::Config(
                "target outcomes are unobserved; supply --weights or --oracle to estimate them".into(),
            ))
        }
    };
    let deltas = (0..sample.n_groups())
        .map(|g| {
            let train = conditional_cdf(&tr, scores, g, true, None)?;
            let tgt = match &target {
                Some(tg) => conditional_cdf(tg, scores, g, true, None)?,
                None => conditional_cdf(&tr, scores, g, true, weights)?,
            };
            delta_curve(&train, &tgt)
        })
        .collect::<censorfair::Result<Vec<_>>>()?;
    Ok((deltas, source))
}

pub fn diagnose(s: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let sample = load_data(s)?;
    let scores = load_scores(s, &sample)?;
    let wf = weight_function(s, &sample)?;
    let weights = wf.as_ref().map(|wf| wf.within_group_weights(&sample)).transpose()?;
    let tr = sample.view(Event::Included)?;
    let mut report = AuditReport::new("diagnose", s);
    let (deltas, source) = group_deltas(&sample, &scores, weights.as_deref())?;
    report.target_source = Some(source);
    let m = sample.n_groups();
    for a in 0..m {
        for b in a + 1..m {
            let (da, db) = (&deltas[a], &deltas[b]);
            let f = check_strong_dbd(da.train(), da.target(), db.train(), db.target(), 0.0);
            if !f.is_none() {
                report.findings.push(f);
            }
        }
    }
    for a in 0..m {
        for b in (0..m).filter(|&b| b != a) {
            let (da, db) = (&deltas[a], &deltas[b]);
            let f = find_weak_dbd_interval(da, db, WeakMode::Strict, None)?;
            if !f.is_none() {
                report.findings.push(f);
            }
            if precedes(db.train(), da.train(), 0.0) {
                let f = find_weak_dbd_interval(da, db, WeakMode::Endowed, None)?;
                if !f.is_none() {
                    report.findings.push(f);
                }
            }
        }
    }
    if let Some(path) = &s.policy {
        let policy = load_policy(path)?;
        report.policies.push(PolicyRecord::from(&policy));
        rates_and_inequity(&mut report, &policy, &sample, &scores, weights.as_deref())?;
        if let Some(tg) = observed_target(&sample) {
            report.checks.prop1 = match prop1_identity(&policy, &tr, &tg, &scores) {
                Err(Error::NotEqualOpportunity { .. }) => None,
                r => Some(r?),
            };
            report.checks.prop7 = Some(prop7_null_check(&sample, &policy, &scores)?);
        }
        if let Some(wf) = &wf {
            for g in 0..m {
                report.checks.prop8.push(prop8_ratio_test(&policy, &tr, &scores, wf, g)?);
            }
        }
    }
    if let Some(wf) = &wf {
        report.weights = Some(wf.summary(&tr)?);
    }
    let labels = sample.label_map();
    let mut cdfs: Vec<ConditionalCdf> = deltas.iter().flat_map(|d| [d.train().clone(), d.target().clone()]).collect();
    for g in 0..m {
        if tr.cell(g, false).next().is_some() {
            cdfs.push(conditional_cdf(&tr, &scores, g, false, None)?);
        }
    }
    let mut rocs = Vec::new();
    for v in std::iter::once(tr.clone()).chain(observed_target(&sample)) {
        for g in 0..m {
            rocs.push(roc_curve(&v, &scores, g, None)?);
        }
    }
    let mut written = vec![
        write_csv_with(s, "cdfs.csv", |buf| write_cdfs(buf, &cdfs.iter().collect::<Vec<_>>(), labels))?,
        write_csv_with(s, "deltas.csv", |buf| write_deltas(buf, &deltas.iter().collect::<Vec<_>>(), labels))?,
        write_csv_with(s, "rocs.csv", |buf| write_rocs(buf, &rocs.iter().collect::<Vec<_>>(), labels))?,
        write_csv_with(s, "intervals.csv", |buf| write_intervals(buf, &report.findings, labels))?,
    ];
    written.push(write_report(s, &report)?);
    Ok(written)
}
