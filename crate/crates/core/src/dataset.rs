//! Censored training samples and target samples.
//!
//! A [`PopulationSample`] stores one row per decision instance: covariates
//! `X`, a protected group `A`, an outcome `Y` that may be missing, the
//! inclusion flag `Z` (row is in the labeled training data) and the target
//! flag `T` (row belongs to the population the policy will be applied to).
//! When no target column is present every row is treated as `T = 1`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense group code in `0..m`. The original label lives in the sample's label map.
pub type GroupCode = usize;

/// Conditioning event selecting the rows of a [`SampleView`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    /// `Z = 1`: rows included in the labeled training data.
    #[serde(rename = "Z=1")]
    Included,
    /// `T = 1`: rows of the target population.
    #[serde(rename = "T=1")]
    Targeted,
    /// Every row.
    #[serde(rename = "all")]
    All,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Event::Included => "Z=1",
            Event::Targeted => "T=1",
            Event::All => "all",
        })
    }
}

/// Column-oriented input for [`PopulationSample::new`].
#[derive(Clone, Debug, Default)]
pub struct RawSample {
    pub covariate_names: Vec<String>,
    /// Row-major, `rows * covariate_names.len()` entries.
    pub covariates: Vec<f64>,
    /// Group label per row, as it appears in the source data.
    pub group_labels: Vec<String>,
    pub outcomes: Vec<Option<bool>>,
    pub included: Vec<bool>,
    pub targeted: Option<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSample {
    covariate_names: Vec<String>,
    covariates: Vec<f64>,
    groups: Vec<GroupCode>,
    label_map: Vec<String>,
    outcomes: Vec<Option<bool>>,
    included: Vec<bool>,
    targeted: Option<Vec<bool>>,
}

impl PopulationSample {
    /// Validates the columns and encodes group labels.
    ///
    /// Labels are sorted numerically when every label parses as a number and
    /// lexicographically otherwise; the code of a label is its rank.
    pub fn new(raw: RawSample) -> Result<Self> {
        let (groups, label_map) = encode_groups(&raw.group_labels);
        Self::from_codes(
            raw.covariate_names,
            raw.covariates,
            groups,
            label_map,
            raw.outcomes,
            raw.included,
            raw.targeted,
        )
    }

    /// Builds a sample from already-encoded groups. The label map fixes `m`,
    /// so a sample may be empty or miss some groups.
    #[allow(clippy::too_many_arguments)]
    pub fn from_codes(
        covariate_names: Vec<String>,
        covariates: Vec<f64>,
        groups: Vec<GroupCode>,
        label_map: Vec<String>,
        outcomes: Vec<Option<bool>>,
        included: Vec<bool>,
        targeted: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = groups.len();
        let d = covariate_names.len();
        if covariates.len() != n * d {
            return Err(Error::Shape {
                expected: n * d,
                found: covariates.len(),
            });
        }
        for len in [outcomes.len(), included.len()]
            .into_iter()
            .chain(targeted.as_ref().map(Vec::len))
        {
            if len != n {
                return Err(Error::Shape {
                    expected: n,
                    found: len,
                });
            }
        }
        if label_map.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least two groups, found {}",
                label_map.len()
            )));
        }
        if let Some(row) = groups.iter().position(|&g| g >= label_map.len()) {
            return Err(Error::Schema(format!(
                "row {row}: group code {} outside label map of size {}",
                groups[row],
                label_map.len()
            )));
        }
        if let Some(pos) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / d.max(1),
                column: covariate_names[pos % d.max(1)].clone(),
                message: "covariate is not finite".into(),
            });
        }
        if let Some(row) = (0..n).find(|&i| included[i] && outcomes[i].is_none()) {
            return Err(Error::Schema(format!(
                "row {row} is included (z = 1) but has no outcome"
            )));
        }
        Ok(Self {
            covariate_names,
            covariates,
            groups,
            label_map,
            outcomes,
            included,
            targeted,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.label_map.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    /// Covariates of one row.
    pub fn row(&self, row: usize) -> &[f64] {
        let d = self.n_covariates();
        &self.covariates[row * d..(row + 1) * d]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn group(&self, row: usize) -> GroupCode {
        self.groups[row]
    }

    pub fn groups(&self) -> &[GroupCode] {
        &self.groups
    }

    pub fn label_map(&self) -> &[String] {
        &self.label_map
    }

    pub fn group_label(&self, code: GroupCode) -> &str {
        &self.label_map[code]
    }

    pub fn group_code(&self, label: &str) -> Option<GroupCode> {
        self.label_map.iter().position(|l| l == label)
    }

    pub fn outcome(&self, row: usize) -> Option<bool> {
        self.outcomes[row]
    }

    pub fn outcomes(&self) -> &[Option<bool>] {
        &self.outcomes
    }

    pub fn included(&self, row: usize) -> bool {
        self.included[row]
    }

    pub fn included_flags(&self) -> &[bool] {
        &self.included
    }

    /// `T` for a row; constant 1 when the sample has no target column.
    pub fn targeted(&self, row: usize) -> bool {
        self.targeted.as_ref().is_none_or(|t| t[row])
    }

    pub fn has_target_column(&self) -> bool {
        self.targeted.is_some()
    }

    pub fn in_event(&self, row: usize, event: Event) -> bool {
        match event {
            Event::Included => self.included[row],
            Event::Targeted => self.targeted(row),
            Event::All => true,
        }
    }

    /// Rows satisfying `event`. Errors when none do.
    pub fn view(&self, event: Event) -> Result<SampleView<'_>> {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.in_event(i, event)).collect();
        if rows.is_empty() {
            return Err(Error::EmptyView { event });
        }
        Ok(SampleView {
            sample: self,
            event,
            rows,
        })
    }

    /// Copy with a new inclusion column. Rows newly included must carry outcomes.
    pub fn with_included(&self, included: Vec<bool>) -> Result<Self> {
        Self::from_codes(
            self.covariate_names.clone(),
            self.covariates.clone(),
            self.groups.clone(),
            self.label_map.clone(),
            self.outcomes.clone(),
            included,
            self.targeted.clone(),
        )
    }

    /// Copy with a target column attached (or removed with `None`).
    pub fn with_targeted(&self, targeted: Option<Vec<bool>>) -> Result<Self> {
        Self::from_codes(
            self.covariate_names.clone(),
            self.covariates.clone(),
            self.groups.clone(),
            self.label_map.clone(),
            self.outcomes.clone(),
            self.included.clone(),
            targeted,
        )
    }

    /// Copy whose excluded rows have their outcomes removed, as a logged
    /// dataset would record them.
    pub fn censor_excluded(&self) -> Self {
        let mut out = self.clone();
        for (o, &z) in out.outcomes.iter_mut().zip(&self.included) {
            if !z {
                *o = None;
            }
        }
        out
    }

    /// Copy restricted to the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let d = self.n_covariates();
        let mut covariates = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            covariates.extend_from_slice(self.row(r));
        }
        Self::from_codes(
            self.covariate_names.clone(),
            covariates,
            rows.iter().map(|&r| self.groups[r]).collect(),
            self.label_map.clone(),
            rows.iter().map(|&r| self.outcomes[r]).collect(),
            rows.iter().map(|&r| self.included[r]).collect(),
            self.targeted
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r]).collect()),
        )
    }
}

/// The rows of a sample satisfying a conditioning event.
#[derive(Clone, Debug)]
pub struct SampleView<'a> {
    sample: &'a PopulationSample,
    event: Event,
    rows: Vec<usize>,
}

impl<'a> SampleView<'a> {
    pub fn sample(&self) -> &'a PopulationSample {
        self.sample
    }

    pub fn event(&self) -> Event {
        self.event
    }

    /// Indices into the parent sample, increasing.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of `group` whose observed outcome equals `label`.
    pub fn cell(&self, group: GroupCode, label: bool) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().copied().filter(move |&r| {
            self.sample.groups[r] == group && self.sample.outcomes[r] == Some(label)
        })
    }

    pub fn group_rows(&self, group: GroupCode) -> impl Iterator<Item = usize> + '_ {
        self.rows
            .iter()
            .copied()
            .filter(move |&r| self.sample.groups[r] == group)
    }

    /// Errors when some selected row lacks an outcome; label-conditional rates
    /// on such a view would silently describe only its labeled part.
    pub fn require_outcomes(&self) -> Result<()> {
        let count = self
            .rows
            .iter()
            .filter(|&&r| self.sample.outcomes[r].is_none())
            .count();
        if count > 0 {
            return Err(Error::CensoredOutcomes {
                event: self.event,
                count,
            });
        }
        Ok(())
    }
}

/// Dense codes and the sorted label map.
pub fn encode_groups(labels: &[String]) -> (Vec<GroupCode>, Vec<String>) {
    let mut distinct: Vec<String> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    let numeric: Option<Vec<f64>> = distinct.iter().map(|l| l.trim().parse().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(distinct).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        distinct = paired.into_iter().map(|(_, l)| l).collect();
    }
    let codes = labels
        .iter()
        .map(|l| distinct.iter().position(|d| d == l).expect("label present"))
        .collect();
    (codes, distinct)
}

/// Column names used when reading and writing CSV samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Covariate columns. Empty means every column whose name starts with `x_`.
    pub covariates: Vec<String>,
    pub group: String,
    pub outcome: String,
    pub included: String,
    /// Target column; read when present in the header.
    pub targeted: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            covariates: Vec::new(),
            group: "a".into(),
            outcome: "y".into(),
            included: "z".into(),
            targeted: Some("t".into()),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PopulationSample> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<PopulationSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let covariate_names: Vec<String> = if schema.covariates.is_empty() {
        header.iter().filter(|h| h.starts_with("x_")).cloned().collect()
    } else {
        schema.covariates.clone()
    };
    let cov_idx = covariate_names
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let group_idx = find(&schema.group)?;
    let outcome_idx = find(&schema.outcome)?;
    let included_idx = find(&schema.included)?;
    let targeted_idx = schema
        .targeted
        .as_deref()
        .and_then(|t| header.iter().position(|h| h == t));

    let mut raw = RawSample {
        covariate_names,
        targeted: targeted_idx.map(|_| Vec::new()),
        ..RawSample::default()
    };
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        for (&ci, name) in cov_idx.iter().zip(&raw.covariate_names) {
            let v: f64 = field(ci).trim().parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                message: format!("`{}` is not a number", field(ci)),
            })?;
            raw.covariates.push(v);
        }
        raw.group_labels.push(field(group_idx).to_owned());
        let outcome = match field(outcome_idx).trim() {
            "" => None,
            v => Some(parse_binary(v, row, &schema.outcome)?),
        };
        raw.outcomes.push(outcome);
        raw.included
            .push(parse_binary(field(included_idx).trim(), row, &schema.included)?);
        if let (Some(ti), Some(t)) = (targeted_idx, raw.targeted.as_mut()) {
            let name = schema.targeted.as_deref().unwrap_or("t");
            t.push(parse_binary(field(ti).trim(), row, name)?);
        }
    }
    if raw.group_labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    PopulationSample::new(raw)
}

fn parse_binary(value: &str, row: usize, column: &str) -> Result<bool> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            row,
            column: column.to_owned(),
            message: format!("expected 0 or 1, found `{other}`"),
        }),
    }
}

/// Writes the sample with the default column names. Covariates are written as
/// `x_<name>` unless the name already carries the prefix. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(sample: &PopulationSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = sample
        .covariate_names
        .iter()
        .map(|c| {
            if c.starts_with("x_") {
                c.clone()
            } else {
                format!("x_{c}")
            }
        })
        .collect();
    header.extend(["a", "y", "z"].map(String::from));
    if sample.has_target_column() {
        header.push("t".into());
    }
    wtr.write_record(&header)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for i in 0..sample.len() {
        let mut rec: Vec<String> = sample.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(sample.group_label(sample.group(i)).to_owned());
        rec.push(match sample.outcome(i) {
            Some(y) => flag(y).into(),
            None => String::new(),
        });
        rec.push(flag(sample.included(i)).into());
        if sample.has_target_column() {
            rec.push(flag(sample.targeted(i)).into());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_csv(sample: &PopulationSample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(sample, std::io::BufWriter::new(file))
}
