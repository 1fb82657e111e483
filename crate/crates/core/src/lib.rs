//! Audits group-threshold decision policies learned from censored data.
//!
//! Training rows are those with `Z = 1`; the policy is deployed on the rows
//! with `T = 1`. The crate derives equal-opportunity and equalized-odds
//! policies from a score, measures the inequity they leave on the target
//! population, diagnoses it through the Δ curves
//! `F^{Z=1}_a(θ) − F^{T=1}_a(θ)`, and corrects training rates by propensity
//! or density-ratio weights.
//!
//! ```
//! use censorfair::prelude::*;
//!
//! let (sample, oracle) = generate_loan(&LoanScenarioSpec::new(2_000, 1)).unwrap();
//! let train = sample.view(Event::Included).unwrap();
//! let target = sample.view(Event::Targeted).unwrap();
//! let policy = derive_equal_opportunity(&oracle.score_blind, &train, 0.8, None).unwrap();
//! let eps = inequity(&policy, &target, &oracle.score_blind, None).unwrap();
//! assert!(eps.get(0, 1) > 0.0);
//! ```

pub mod adjust;
pub mod dataset;
pub mod diagnose;
pub mod error;
pub mod export;
pub mod numeric;
pub mod policy;
pub mod rates;
pub mod reweight;
pub mod scoring;
pub mod synth;

pub use error::{Error, ErrorClass, Result};

/// The types and functions most audits need.
pub mod prelude {
    pub use crate::adjust::{
        derive_equal_opportunity, derive_equalized_odds, optimal_equal_opportunity, BaseRates,
        EqualOpportunityFamily, LossSpec,
    };
    pub use crate::dataset::{load_csv, save_csv, CsvSchema, Event, PopulationSample, SampleView};
    pub use crate::diagnose::{
        check_strong_dbd, find_weak_dbd_interval, inequity, prop1_identity, DbdFinding, DbdKind,
        InequityMatrix, WeakMode,
    };
    pub use crate::error::{Error, Result};
    pub use crate::policy::{apply_policy, expected_rates, GroupPolicy, GroupRule, OperatingPoint};
    pub use crate::rates::{conditional_cdf, delta_curve, roc_curve, ConditionalCdf, DeltaCurve, Threshold};
    pub use crate::reweight::{
        fit_density_ratio, fit_inclusion_propensity, weighted_conditional_cdf, weighted_rate, CellMap,
        WeightFunction,
    };
    pub use crate::scoring::{fit_logistic, predict_sample, LogisticScoreModel};
    pub use crate::synth::{generate_loan, generate_quantile_censoring, LoanScenarioSpec, QuantileCensorSpec};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/selective-labels.md")]
    mod selective_labels {}
    #[doc = include_str!("../../../book/src/adjustment.md")]
    mod adjustment {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/reweighting.md")]
    mod reweighting {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
