//! Per-run reports, repeated-run suites and their JSON / CSV forms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{run_mbb, FitConfig, FitMiss, MbbConfig};
use crate::bict::Tolerance;
use crate::blocks::{detect_minimal_blocks, GSStructure};
use crate::cases::{CaseSpec, Expected};
use crate::error::{Error, Stage};
use crate::factors::{detect_factors, Polarity};
use crate::model::{render_model, GSModel};
use crate::rng;

/// Settings shared by every run of a suite; embedded in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tol: Tolerance,
    pub polarity: Polarity,
    pub samples_per_var: usize,
    /// Overrides each case's own target error.
    pub eps_target: Option<f64>,
    pub keep_unconverged: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tol: Tolerance::default(),
            polarity: Polarity::default(),
            samples_per_var: 200,
            eps_target: None,
            keep_unconverged: true,
        }
    }
}

impl RunConfig {
    pub fn mbb(&self, case: &CaseSpec) -> MbbConfig {
        MbbConfig {
            tol: self.tol,
            polarity: self.polarity,
            fit: FitConfig {
                eps_target: self.eps_target.unwrap_or(case.eps_target),
                samples_per_var: self.samples_per_var,
                ..FitConfig::default()
            },
            mse_points_per_var: self.samples_per_var,
            keep_unconverged: self.keep_unconverged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub t3_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub repeated: Vec<String>,
    pub blocks: usize,
    pub factors: usize,
    pub detail: GSStructure,
}

impl StructureSummary {
    fn new(s: &GSStructure, names: &[String]) -> Self {
        StructureSummary {
            repeated: s.repeated.iter().map(|&v| names[v].clone()).collect(),
            blocks: s.m(),
            factors: s.factor_count(),
            detail: s.clone(),
        }
    }

    pub fn matches(&self, e: &Expected) -> bool {
        self.detail.repeated == e.repeated && self.blocks == e.blocks && self.factors == e.factors
    }
}

/// Detection-only output of `probe`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummaryView {
    pub case: String,
    pub var_names: Vec<String>,
    pub structure: StructureSummary,
    pub expected: Option<Expected>,
    pub matches: Option<bool>,
}

impl StructureSummaryView {
    pub fn new(case: &CaseSpec, s: &GSStructure) -> Self {
        let structure = StructureSummary::new(s, &case.var_names);
        StructureSummaryView {
            case: case.id.clone(),
            var_names: case.var_names.clone(),
            matches: case.expected.as_ref().map(|e| structure.matches(e)),
            expected: case.expected.clone(),
            structure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub case: String,
    pub seed: u64,
    pub var_names: Vec<String>,
    pub eps_target: f64,
    pub tolerance: Tolerance,
    pub polarity: Polarity,
    pub structure: Option<StructureSummary>,
    pub expected: Option<Expected>,
    pub structure_match: Option<bool>,
    pub model: Option<GSModel>,
    pub expression: Option<String>,
    pub mse: Option<f64>,
    pub success: bool,
    pub misses: Vec<FitMiss>,
    pub evaluations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    pub error: Option<String>,
    pub error_stage: Option<Stage>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports hold only finite numbers")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn without_timings(&self) -> Report {
        Report { timings: None, ..self.clone() }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Runs the full pipeline on one case. Errors end up inside the report.
pub fn run_case(case: &CaseSpec, seed: u64, config: &RunConfig) -> Report {
    let mbb = config.mbb(case);
    let mut report = Report {
        case: case.id.clone(),
        seed,
        var_names: case.var_names.clone(),
        eps_target: mbb.fit.eps_target,
        tolerance: config.tol,
        polarity: config.polarity,
        structure: None,
        expected: case.expected.clone(),
        structure_match: None,
        model: None,
        expression: None,
        mse: None,
        success: false,
        misses: Vec::new(),
        evaluations: 0,
        timings: None,
        error: None,
        error_stage: None,
    };
    match run_mbb(case, &case.domain, &mbb, seed) {
        Ok(out) => {
            let summary = StructureSummary::new(&out.structure, &case.var_names);
            report.structure_match = case.expected.as_ref().map(|e| summary.matches(e));
            report.structure = Some(summary);
            report.expression = Some(render_model(&out.model, &case.var_names));
            report.model = Some(out.model);
            report.mse = finite(out.metrics.mse);
            report.success = report.mse.is_some_and(|m| m <= mbb.fit.eps_target);
            report.misses = out.misses;
            report.evaluations = out.metrics.evaluations;
            report.timings = Some(Timings {
                t1_ms: out.metrics.t1_ms,
                t2_ms: out.metrics.t2_ms,
                t3_ms: out.metrics.t3_ms,
            });
        }
        Err(e) => {
            if let Error::Stage { stage, .. } = &e {
                report.error_stage = Some(*stage);
                // detection is deterministic per seed: recover the structure
                // for stages that ran after it
                if !matches!(stage, Stage::BlockDetection | Stage::FactorDetection) {
                    if let Ok(s) = probe_case(case, seed, config) {
                        let summary = StructureSummary::new(&s, &case.var_names);
                        report.structure_match = case.expected.as_ref().map(|e| summary.matches(e));
                        report.structure = Some(summary);
                    }
                }
            }
            report.error = Some(e.to_string());
        }
    }
    report
}

/// Structure detection only, with the seeds `run_case` uses.
pub fn probe_case(case: &CaseSpec, seed: u64, config: &RunConfig) -> crate::Result<GSStructure> {
    let blocks = detect_minimal_blocks(case, &case.domain, &config.tol, rng::derive(seed, 1))
        .map_err(|e| e.at(Stage::BlockDetection))?;
    detect_factors(case, &case.domain, &blocks, &config.tol, config.polarity, rng::derive(seed, 2))
        .map_err(|e| e.at(Stage::FactorDetection))
}

/// Table-style aggregate of one case's repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: String,
    pub reps: usize,
    pub successes: usize,
    pub structure_matches: Option<usize>,
    pub mean_mse: Option<f64>,
    pub max_mse: Option<f64>,
    /// Structure of the first repetition that reached detection.
    pub blocks: Option<usize>,
    pub factors: Option<usize>,
    pub repeated_vars: Option<Vec<String>>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub base_seed: u64,
    pub reps: usize,
    pub config: RunConfig,
    pub summary: Vec<CaseSummary>,
    pub runs: Vec<Report>,
}

/// Seed of repetition `rep` of `case_id`.
pub fn rep_seed(base_seed: u64, case_id: &str, rep: usize) -> u64 {
    let tag = case_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    rng::derive_path(base_seed, &[tag, rep as u64])
}

pub fn summarize(case: &str, runs: &[&Report]) -> CaseSummary {
    let mses: Vec<f64> = runs.iter().filter_map(|r| r.mse).collect();
    let first = runs.iter().find_map(|r| r.structure.as_ref());
    let with_expected: Vec<bool> = runs.iter().filter_map(|r| r.structure_match).collect();
    CaseSummary {
        case: case.to_string(),
        reps: runs.len(),
        successes: runs.iter().filter(|r| r.success).count(),
        structure_matches: (!with_expected.is_empty() || runs.iter().any(|r| r.expected.is_some()))
            .then(|| with_expected.iter().filter(|m| **m).count()),
        mean_mse: (!mses.is_empty()).then(|| mses.iter().sum::<f64>() / mses.len() as f64),
        max_mse: mses.iter().copied().reduce(f64::max),
        blocks: first.map(|s| s.blocks),
        factors: first.map(|s| s.factors),
        repeated_vars: first.map(|s| s.repeated.clone()),
        errors: runs.iter().filter(|r| r.error.is_some()).count(),
    }
}

/// `reps` independent runs of every case; results ordered by (case, rep).
pub fn run_suite(cases: &[CaseSpec], reps: usize, base_seed: u64, config: &RunConfig) -> SuiteResult {
    let jobs: Vec<(usize, usize)> = (0..cases.len()).flat_map(|c| (0..reps).map(move |r| (c, r))).collect();
    let runs: Vec<Report> = jobs
        .par_iter()
        .map(|&(c, r)| run_case(&cases[c], rep_seed(base_seed, &cases[c].id, r), config))
        .collect();
    let summary = cases
        .iter()
        .enumerate()
        .map(|(c, case)| {
            let mine: Vec<&Report> = runs[c * reps..(c + 1) * reps].iter().collect();
            summarize(&case.id, &mine)
        })
        .collect();
    SuiteResult { base_seed, reps, config: config.clone(), summary, runs }
}

impl SuiteResult {
    /// JSON without timings, byte-identical for equal inputs.
    pub fn to_json(&self) -> String {
        let stripped = SuiteResult {
            runs: self.runs.iter().map(Report::without_timings).collect(),
            ..self.clone()
        };
        serde_json::to_string_pretty(&stripped).expect("suite holds only finite numbers")
    }

    /// Per-run timings, keyed by case and seed.
    pub fn timings_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .runs
            .iter()
            .map(|r| serde_json::json!({ "case": r.case, "seed": r.seed, "timings": r.timings }))
            .collect();
        serde_json::to_string_pretty(&rows).expect("timings are finite")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,reps,successes,mean_mse,max_mse,blocks,factors,repeated_vars,t1_ms,t2_ms,t3_ms\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        let optu = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
        for s in &self.summary {
            let runs: Vec<&Report> = self.runs.iter().filter(|r| r.case == s.case).collect();
            let mean_t = |pick: fn(&Timings) -> f64| {
                let ts: Vec<f64> = runs.iter().filter_map(|r| r.timings.as_ref()).map(pick).collect();
                if ts.is_empty() {
                    String::new()
                } else {
                    format!("{:.3}", ts.iter().sum::<f64>() / ts.len() as f64)
                }
            };
            let rep = match &s.repeated_vars {
                None => String::new(),
                Some(v) if v.is_empty() => "None".into(),
                Some(v) => v.join(";"),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                s.case,
                s.reps,
                s.successes,
                opt(s.mean_mse),
                opt(s.max_mse),
                optu(s.blocks),
                optu(s.factors),
                rep,
                mean_t(|t| t.t1_ms),
                mean_t(|t| t.t2_ms),
                mean_t(|t| t.t3_ms),
            ));
        }
        out
    }
}
