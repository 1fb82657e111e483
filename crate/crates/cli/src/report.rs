use censorfair::diagnose::{DbdFinding, InequityMatrix, Prop1Result, Prop7Result, Prop8Result};
use censorfair::policy::{PolicyRecord, RatesTable};
use censorfair::reweight::WeightSummary;
use serde::Serialize;

use crate::config::Settings;

pub const SCHEMA_VERSION: &str = "1.0.0";

/// JSON Schema of [`AuditReport`].
pub const SCHEMA: &str = include_str!("../schema/audit-report.schema.json");

#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub config: Settings,
}

/// Where the target-population score distributions came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// Outcomes observed on the target rows.
    Observed,
    /// Training rows reweighted toward the target.
    Reweighted,
}

#[derive(Debug, Default, Serialize)]
pub struct Checks {
    pub prop1: Option<Prop1Result>,
    pub prop7: Option<Prop7Result>,
    pub prop8: Vec<Prop8Result>,
}

#[derive(Debug, Serialize)]
pub struct AuditReport {
    pub schema_version: &'static str,
    pub run: RunInfo,
    pub policies: Vec<PolicyRecord>,
    pub rates: Vec<RatesTable>,
    pub inequity: Vec<InequityMatrix>,
    pub findings: Vec<DbdFinding>,
    pub target_source: Option<TargetSource>,
    pub checks: Checks,
    pub weights: Option<WeightSummary>,
}

impl AuditReport {
    pub fn new(command: &'static str, settings: &Settings) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run: RunInfo {
                command,
                seed: settings.seed,
                config_hash: settings.hash(),
                config: settings.clone(),
            },
            policies: Vec::new(),
            rates: Vec::new(),
            inequity: Vec::new(),
            findings: Vec::new(),
            target_source: None,
            checks: Checks::default(),
            weights: None,
        }
    }
}
