//! End-to-end solve: dynamics, restriction to the cycle, finite equilibrium,
//! and verification against the full game.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{guarantee_pack, BoundVariant, GuaranteePack};
use crate::dynamics::{self, CycleSets, DynamicsConfig, Mode, Outcome, Trace};
use crate::error::{Error, Result};
use crate::finite::{self, DeltaReport, DEFAULT_K_PLAYER_EPS};
use crate::game::{to_real, AdequacyReport, IcqsInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub mode: Mode,
    pub dynamics: DynamicsConfig,
    /// Regret target of the finite solver for three or more players.
    pub k_player_eps: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { mode: Mode::Integer, dynamics: DynamicsConfig::default(), k_player_eps: DEFAULT_K_PLAYER_EPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub strategies: Vec<Vec<Vec<i64>>>,
    pub probabilities: Vec<Vec<f64>>,
    /// Largest regret inside the finite game.
    pub achieved_eps: f64,
    pub delta: DeltaReport,
    /// Whether every gain respects the closed-form Δ bound; absent when the
    /// game is not positively adequate.
    pub delta_bounded: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    pub adequacy: AdequacyReport,
    pub outcome: Outcome,
    pub iterations: usize,
    /// Wall-clock seconds spent in the pipeline.
    pub t_br: f64,
    pub final_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleSets>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumReport>,
    /// Flatness and exact-where-known variants.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub guarantees: Vec<GuaranteePack>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous_point: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<f64>,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

impl SolveReport {
    pub fn max_gain(&self) -> Option<f64> {
        self.equilibrium.as_ref().map(|e| e.delta.max_gain())
    }
}

pub fn solve(inst: &IcqsInstance, start: Option<&[Vec<i64>]>, cfg: &SolveConfig) -> Result<SolveReport> {
    let clock = Instant::now();
    let adequacy = inst.classify()?;
    let zero = inst.zero_profile();
    let start = start.unwrap_or(&zero);
    let mut report = SolveReport {
        mode: cfg.mode,
        adequacy,
        outcome: Outcome::IterationCapReached,
        iterations: 0,
        t_br: 0.0,
        final_norm: 0.0,
        cycle: None,
        equilibrium: None,
        guarantees: Vec::new(),
        continuous_point: None,
        stationarity: None,
        trace: None,
    };
    match cfg.mode {
        Mode::Integer => {
            let trace = dynamics::run_br(inst, start, &cfg.dynamics)?;
            report.outcome = trace.outcome;
            report.iterations = trace.iterations();
            report.final_norm = trace.norms.last().copied().unwrap_or(0.0);
            if trace.outcome.terminated() {
                let cycle = CycleSets::from_trace(&trace)?;
                let fg = finite::restrict(inst, &cycle)?;
                let (mixed, achieved_eps) = finite::solve(&fg, cfg.k_player_eps)?;
                let delta = finite::verify_delta(inst, &fg, &mixed, &cfg.dynamics.iqp)?;
                report.guarantees = [BoundVariant::Flatness, BoundVariant::ExactWhereKnown]
                    .into_iter()
                    .map(|v| guarantee_pack(inst, &cycle, &cfg.dynamics.iqp, v))
                    .collect::<Result<_>>()?;
                report.equilibrium = Some(EquilibriumReport {
                    strategies: fg.strategies,
                    probabilities: mixed.probabilities,
                    achieved_eps,
                    delta_bounded: delta.within_a_priori(),
                    delta,
                });
                report.cycle = Some(cycle);
            }
            report.trace = Some(Trace::Integer(trace));
        }
        Mode::Continuous => {
            let trace = dynamics::run_continuous(inst, &to_real(start), &cfg.dynamics)?;
            report.outcome = trace.outcome;
            report.iterations = trace.iterations();
            report.final_norm = trace.norms.last().copied().unwrap_or(0.0);
            if let Outcome::FixedPoint { .. } = trace.outcome {
                let point = trace.profiles.last().cloned().ok_or(Error::NoCycle)?;
                report.stationarity = Some(dynamics::stationarity_residual(inst, &point)?);
                report.continuous_point = Some(point);
            }
            report.trace = Some(Trace::Continuous(trace));
        }
    }
    report.t_br = clock.elapsed().as_secs_f64();
    Ok(report)
}

/// One row of a benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: usize,
    pub n_players: usize,
    pub t_br: f64,
    pub k_br: usize,
    pub outcome: String,
    pub max_gain: Option<f64>,
    /// Largest per-player a-priori Δ bound, when one exists.
    pub delta_bound: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn from_report(id: usize, n_players: usize, report: &SolveReport) -> Self {
        let delta_bound = report
            .equilibrium
            .as_ref()
            .and_then(|e| e.delta.a_priori.as_ref())
            .map(|b| b.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        RunRecord {
            id,
            n_players,
            t_br: report.t_br,
            k_br: report.iterations,
            outcome: report.outcome.label().to_string(),
            max_gain: report.max_gain(),
            delta_bound,
            error: None,
        }
    }

    pub fn failed(id: usize, n_players: usize, err: &Error) -> Self {
        RunRecord {
            id,
            n_players,
            t_br: 0.0,
            k_br: 0,
            outcome: "error".into(),
            max_gain: None,
            delta_bound: None,
            error: Some(err.to_string()),
        }
    }

    pub fn solved(&self) -> bool {
        self.outcome == "cycle" || self.outcome == "fixed_point"
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("id,n_players,t_br,k_br,outcome,max_gain,delta_bound,error\n");
    for r in records {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
        out.push_str(&format!(
            "{},{},{:.6},{},{},{},{},{}\n",
            r.id,
            r.n_players,
            r.t_br,
            r.k_br,
            r.outcome,
            opt(r.max_gain),
            opt(r.delta_bound),
            err
        ));
    }
    out
}

/// Fraction of all records solved within each observed solve time.
pub fn performance_profile(records: &[RunRecord]) -> Vec<(f64, f64)> {
    let mut times: Vec<f64> = records.iter().filter(|r| r.solved()).map(|r| r.t_br).collect();
    times.sort_by(f64::total_cmp);
    let total = records.len() as f64;
    times.iter().enumerate().map(|(k, &t)| (t, (k + 1) as f64 / total)).collect()
}

pub fn profile_csv(profile: &[(f64, f64)]) -> String {
    let mut out = String::from("time,fraction\n");
    for (t, f) in profile {
        out.push_str(&format!("{t:.6},{f:.6}\n"));
    }
    out
}
