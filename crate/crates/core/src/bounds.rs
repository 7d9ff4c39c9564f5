//! Closed-form guarantees: cycle diameters, bounds on them, and the Δ
//! bounds for the restricted-game equilibrium.

use serde::{Deserialize, Serialize};

use crate::dynamics::CycleSets;
use crate::error::Result;
use crate::game::{Adequacy, IcqsInstance};
use crate::iqp::{self, IqpConfig};
use crate::linalg::{self, dist2};

const CLOSURE_MAX_ITERS: usize = 100_000;
const CLOSURE_TOLERANCE: f64 = 1e-13;

/// Which proximity value feeds the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// The flatness-constant bound for every player.
    Flatness,
    /// The exact value `√n/2` for diagonal `Q`, the flatness bound otherwise.
    ExactWhereKnown,
}

pub fn player_prox(q: &linalg::Matrix, cfg: &IqpConfig, variant: BoundVariant) -> Result<f64> {
    if variant == BoundVariant::ExactWhereKnown {
        if let Some(p) = iqp::exact_prox(q) {
            return Ok(p);
        }
    }
    Ok(iqp::prox_bound(q, cfg)?.prox_value)
}

fn all_prox(inst: &IcqsInstance, cfg: &IqpConfig, variant: BoundVariant) -> Result<Vec<f64>> {
    inst.players().iter().map(|p| player_prox(&p.q, cfg, variant)).collect()
}

fn lambda_max(inst: &IcqsInstance) -> Result<Vec<f64>> {
    inst.players().iter().map(|p| Ok(linalg::sym_eigen(&p.q)?.lambda_max())).collect()
}

/// Largest pairwise distance within player `i`'s cycle set.
pub fn cycle_diameter(cycle: &CycleSets, i: usize) -> f64 {
    let pts: Vec<Vec<f64>> = cycle.sets[i].iter().map(|x| iqp::to_f64(x)).collect();
    let mut best: f64 = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            best = best.max(dist2(&pts[a], &pts[b]));
        }
    }
    best
}

/// `λ₁(Qᵢ)·(prox(Qᵢ) + Lᵢ)²`.
pub fn delta_a_posteriori(
    inst: &IcqsInstance,
    i: usize,
    l: f64,
    cfg: &IqpConfig,
    variant: BoundVariant,
) -> Result<f64> {
    let q = &inst.player(i).q;
    let lambda = linalg::sym_eigen(q)?.lambda_max();
    let prox = player_prox(q, cfg, variant)?;
    Ok(lambda * (prox + l).powi(2))
}

/// Smallest solution of `Lᵢ = σᵢ·agg(L₋ᵢ) + 2proxᵢ`, by monotone iteration
/// from zero; `None` when the iteration does not settle.
fn closure_bound(sigma: &[f64], prox: &[f64], agg: impl Fn(&[f64], usize) -> f64) -> Option<Vec<f64>> {
    let k = sigma.len();
    let mut l = vec![0.0; k];
    for _ in 0..CLOSURE_MAX_ITERS {
        let next: Vec<f64> = (0..k).map(|i| sigma[i] * agg(&l, i) + 2.0 * prox[i]).collect();
        let change = next.iter().zip(&l).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().copied().fold(1.0, f64::max);
        l = next;
        if !scale.is_finite() || scale > 1e15 {
            return None;
        }
        if change <= CLOSURE_TOLERANCE * scale {
            return Some(l);
        }
    }
    None
}

fn max_others(l: &[f64], i: usize) -> f64 {
    l.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(0.0, f64::max)
}

fn norm_others(l: &[f64], i: usize) -> f64 {
    l.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v * v).sum::<f64>().sqrt()
}

fn adequate_inputs(inst: &IcqsInstance, cfg: &IqpConfig, variant: BoundVariant) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let report = inst.classify()?;
    if report.classification != Adequacy::PositivelyAdequate {
        return Ok(None);
    }
    let sigma = report.players.iter().map(|p| p.sigma_max).collect();
    Ok(Some((sigma, all_prox(inst, cfg, variant)?)))
}

/// Bounds on the per-player cycle diameters for positively adequate games.
///
/// With two players this is `Lᵢ ≤ (2proxⱼσᵢ + 2proxᵢ)/(1 − σᵢσⱼ)`. With more
/// players it is the smallest solution of `Lᵢ = σᵢ·max_{j≠i} Lⱼ + 2proxᵢ`,
/// which always exists when every `σᵢ < 1`. The opponents' joint diameter can
/// exceed `max_{j≠i} Lⱼ`, so for three or more players this is a heuristic;
/// see [`l_bound_sound`].
pub fn l_bound_theoretical(inst: &IcqsInstance, cfg: &IqpConfig, variant: BoundVariant) -> Result<Option<Vec<f64>>> {
    let Some((sigma, prox)) = adequate_inputs(inst, cfg, variant)? else { return Ok(None) };
    if inst.n_players() == 2 {
        let denom = 1.0 - sigma[0] * sigma[1];
        return Ok(Some(vec![
            (2.0 * prox[1] * sigma[0] + 2.0 * prox[0]) / denom,
            (2.0 * prox[0] * sigma[1] + 2.0 * prox[1]) / denom,
        ]));
    }
    Ok(closure_bound(&sigma, &prox, max_others))
}

/// Diameter bounds that hold for any number of players: the entrywise
/// minimum of the closure with `‖L₋ᵢ‖₂` in place of the maximum, and
/// `σᵢ·D + 2proxᵢ` with `D = 2‖prox‖/(1 − ‖G‖)` bounding the joint diameter
/// (`G` the joint interaction map, used only when `‖G‖ < 1`). Either may be
/// unavailable; `None` when both are. Equal to [`l_bound_theoretical`] for
/// two players.
pub fn l_bound_sound(inst: &IcqsInstance, cfg: &IqpConfig, variant: BoundVariant) -> Result<Option<Vec<f64>>> {
    if inst.n_players() == 2 {
        return l_bound_theoretical(inst, cfg, variant);
    }
    let Some((sigma, prox)) = adequate_inputs(inst, cfg, variant)? else { return Ok(None) };
    let closure = closure_bound(&sigma, &prox, norm_others);
    let g_norm = linalg::singular_values(&inst.joint_interaction()?)?.first().copied().unwrap_or(0.0);
    let joint = (g_norm < 1.0).then(|| {
        let d = 2.0 * linalg::norm2(&prox) / (1.0 - g_norm);
        sigma.iter().zip(&prox).map(|(s, p)| s * d + 2.0 * p).collect::<Vec<f64>>()
    });
    Ok(match (closure, joint) {
        (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect()),
        (a, b) => a.or(b),
    })
}

/// `λ₁(Qᵢ)·(prox(Qᵢ) + L̄ᵢ)²` with `L̄` from [`l_bound_theoretical`].
pub fn delta_a_priori(inst: &IcqsInstance, cfg: &IqpConfig, variant: BoundVariant) -> Result<Option<Vec<f64>>> {
    let Some(l) = l_bound_theoretical(inst, cfg, variant)? else { return Ok(None) };
    let prox = all_prox(inst, cfg, variant)?;
    let lambda = lambda_max(inst)?;
    Ok(Some((0..inst.n_players()).map(|i| lambda[i] * (prox[i] + l[i]).powi(2)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteePack {
    pub variant: BoundVariant,
    pub measured_l: Vec<f64>,
    pub l_bound: Option<Vec<f64>>,
    /// Diameter bound valid for any player count (see [`l_bound_sound`]).
    pub l_bound_sound: Option<Vec<f64>>,
    pub delta_a_posteriori: Vec<f64>,
    pub delta_a_priori: Option<Vec<f64>>,
    pub lambda_max: Vec<f64>,
    pub sigma_max: Vec<f64>,
    pub prox: Vec<f64>,
    /// Some measured diameter exceeds its theoretical bound.
    pub l_bound_violated: bool,
}

pub fn guarantee_pack(
    inst: &IcqsInstance,
    cycle: &CycleSets,
    cfg: &IqpConfig,
    variant: BoundVariant,
) -> Result<GuaranteePack> {
    let k = inst.n_players();
    let measured_l: Vec<f64> = (0..k).map(|i| cycle_diameter(cycle, i)).collect();
    let prox = all_prox(inst, cfg, variant)?;
    let lambda = lambda_max(inst)?;
    let sigma_max = inst.classify()?.players.iter().map(|p| p.sigma_max).collect();
    let l_bound = l_bound_theoretical(inst, cfg, variant)?;
    let l_bound_sound = l_bound_sound(inst, cfg, variant)?;
    let delta_a_posteriori = (0..k).map(|i| lambda[i] * (prox[i] + measured_l[i]).powi(2)).collect();
    let delta_a_priori = l_bound
        .as_ref()
        .map(|l| (0..k).map(|i| lambda[i] * (prox[i] + l[i]).powi(2)).collect());
    let l_bound_violated = l_bound
        .as_ref()
        .is_some_and(|l| measured_l.iter().zip(l).any(|(m, b)| *m > b + 1e-12));
    Ok(GuaranteePack {
        variant,
        measured_l,
        l_bound,
        l_bound_sound,
        delta_a_posteriori,
        delta_a_priori,
        lambda_max: lambda,
        sigma_max,
        prox,
        l_bound_violated,
    })
}
