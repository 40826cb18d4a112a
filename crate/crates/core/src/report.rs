//! The selection report: everything one run produced, in a stable schema
//! with both machine (JSON) and human (text) renderings.

use serde::{Deserialize, Serialize};

use crate::kernel::DispersionStats;
use crate::objective::TieBreak;
use crate::selector::{Stage1Step, Stage2Step};

/// The numeric configuration a run actually used, with per-stage lambdas
/// already resolved. Deliberately method-agnostic: two method names that
/// wire the same lambdas produce byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub lambda_stage1: f64,
    pub lambda_stage2: f64,
    pub residual_floor: f64,
    pub k1: usize,
    pub k: usize,
    pub tie_break: TieBreak,
    pub allow_negative_gain: bool,
    pub seed: u64,
}

/// Full record of a two-stage selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config_echo: ConfigEcho,
    pub stage1: Vec<Stage1Step>,
    /// `f(S)` after each stage-1 step.
    pub objective_trace: Vec<f64>,
    pub stage2: Vec<Stage2Step>,
    /// Per-query rankings when the run asked for them; `null` otherwise.
    pub per_query_stage2: Option<Vec<Vec<Stage2Step>>>,
    /// Spread of the stage-1 selection (absent when fewer than 2 picks).
    pub dispersion_selected: Option<DispersionStats>,
    /// Spread of a coverage-only (lambda = 0) stage-1 rerun on the same
    /// corpus, for side-by-side comparison.
    pub dispersion_coverage_only: Option<DispersionStats>,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config_echo;
        out.push_str("selection report\n");
        out.push_str(&format!(
            "config: lambda_stage1={} lambda_stage2={} residual_floor={:e} k1={} k={} allow_negative_gain={} seed={}\n",
            c.lambda_stage1, c.lambda_stage2, c.residual_floor, c.k1, c.k,
            c.allow_negative_gain, c.seed
        ));
        out.push_str(&format!("stage 1 ({} selected):\n", self.stage1.len()));
        for (i, s) in self.stage1.iter().enumerate() {
            out.push_str(&format!(
                "  {:>4}. index={} id={} gain={} coverage_delta={} diversity_delta={} f={}\n",
                i + 1,
                s.index,
                s.id,
                s.gain,
                s.coverage_delta,
                s.diversity_delta,
                self.objective_trace[i]
            ));
        }
        out.push_str(&format!("stage 2 ({} selected):\n", self.stage2.len()));
        for (i, s) in self.stage2.iter().enumerate() {
            out.push_str(&format!(
                "  {:>4}. index={} id={} gain={}\n",
                i + 1,
                s.index,
                s.id,
                s.gain
            ));
        }
        if let Some(per_query) = &self.per_query_stage2 {
            for (qi, steps) in per_query.iter().enumerate() {
                out.push_str(&format!("stage 2 for query {qi}:\n"));
                for (i, s) in steps.iter().enumerate() {
                    out.push_str(&format!(
                        "  {:>4}. index={} id={} gain={}\n",
                        i + 1,
                        s.index,
                        s.id,
                        s.gain
                    ));
                }
            }
        }
        match &self.dispersion_selected {
            Some(d) => out.push_str(&format!(
                "dispersion selected: mean_pairwise_sim={} min_pairwise_sim={} logdet={}\n",
                d.mean_pairwise_sim, d.min_pairwise_sim, d.logdet
            )),
            None => out.push_str("dispersion selected: n/a\n"),
        }
        match &self.dispersion_coverage_only {
            Some(d) => out.push_str(&format!(
                "dispersion coverage-only: mean_pairwise_sim={} min_pairwise_sim={} logdet={}\n",
                d.mean_pairwise_sim, d.min_pairwise_sim, d.logdet
            )),
            None => out.push_str("dispersion coverage-only: n/a\n"),
        }
        if self.warnings.is_empty() {
            out.push_str("warnings: none\n");
        } else {
            out.push_str("warnings:\n");
            for w in &self.warnings {
                out.push_str(&format!("  - {w}\n"));
            }
        }
        out
    }
}
