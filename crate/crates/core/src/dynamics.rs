//! Simultaneous best-response iteration with exact cycle detection, a
//! divergence certificate for negatively adequate games, and a continuous
//! mode in which every player answers with its real minimizer.

use std::collections::HashMap;
use std::fmt::{Display, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{to_real, Adequacy, IcqsInstance};
use crate::iqp::{self, IqpConfig};
use crate::linalg::{dist2, norm2};

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_FP_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_DIVERGENCE_CONFIRM_STEPS: usize = 8;

pub type Profile<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Integer,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOrder {
    /// Every player answers the previous joint profile.
    Jacobi,
    /// Players answer in turn, seeing updates made earlier in the round.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub max_iters: usize,
    /// Joint step norm below which the continuous iteration stops.
    pub fp_tolerance: f64,
    /// Consecutive norm increases outside the divergence radius needed before
    /// the certificate is issued. Zero disables the certificate.
    pub divergence_confirm_steps: usize,
    pub update: UpdateOrder,
    pub iqp: IqpConfig,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            max_iters: DEFAULT_MAX_ITERS,
            fp_tolerance: DEFAULT_FP_TOLERANCE,
            divergence_confirm_steps: DEFAULT_DIVERGENCE_CONFIRM_STEPS,
            update: UpdateOrder::Jacobi,
            iqp: IqpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// `profiles[start] == profiles[repeat]`, `start + 1 < repeat`.
    CycleFound { start: usize, repeat: usize },
    DivergenceCertified { at_index: usize },
    IterationCapReached,
    /// `profiles[index]` equals (or, in continuous mode, is within tolerance of)
    /// its successor.
    FixedPoint { index: usize },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::CycleFound { .. } => "cycle",
            Outcome::FixedPoint { .. } => "fixed_point",
            Outcome::DivergenceCertified { .. } => "divergence",
            Outcome::IterationCapReached => "cap",
        }
    }

    pub fn terminated(&self) -> bool {
        matches!(self, Outcome::CycleFound { .. } | Outcome::FixedPoint { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrTrace<T> {
    pub profiles: Vec<Profile<T>>,
    pub outcome: Outcome,
    /// Joint ℓ2 norm of each profile.
    pub norms: Vec<f64>,
}

impl<T> BrTrace<T> {
    /// Number of best-response rounds performed.
    pub fn iterations(&self) -> usize {
        self.profiles.len().saturating_sub(1)
    }

    /// The profiles that make up the terminal cycle (a single profile for a
    /// fixed point).
    pub fn cycle_profiles(&self) -> Result<&[Profile<T>]> {
        match self.outcome {
            Outcome::CycleFound { start, repeat } => Ok(&self.profiles[start..repeat]),
            Outcome::FixedPoint { index } => Ok(&self.profiles[index..=index]),
            _ => Err(Error::NoCycle),
        }
    }
}

/// Either kind of trace, for callers that pick the mode at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Integer(BrTrace<i64>),
    Continuous(BrTrace<f64>),
}

impl Trace {
    pub fn outcome(&self) -> Outcome {
        match self {
            Trace::Integer(t) => t.outcome,
            Trace::Continuous(t) => t.outcome,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            Trace::Integer(t) => t.iterations(),
            Trace::Continuous(t) => t.iterations(),
        }
    }

    pub fn to_csv(&self) -> String {
        match self {
            Trace::Integer(t) => trace_csv(t),
            Trace::Continuous(t) => trace_csv(t),
        }
    }
}

/// Strategy entries: integer lattice points or reals.
pub trait Coord: Copy {
    fn as_f64(self) -> f64;
}

impl Coord for i64 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Coord for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

fn joint_norm<T: Coord>(profile: &[Vec<T>]) -> f64 {
    profile.iter().flatten().map(|&v| v.as_f64().powi(2)).sum::<f64>().sqrt()
}

fn to_f64_profile<T: Coord>(profile: &[Vec<T>]) -> Profile<f64> {
    profile.iter().map(|x| x.iter().map(|&v| v.as_f64()).collect()).collect()
}

pub fn joint_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = dist2(x, y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn check_start<T>(inst: &IcqsInstance, start: &[Vec<T>]) -> Result<()> {
    if start.len() != inst.n_players() || start.iter().zip(inst.dims()).any(|(x, &n)| x.len() != n) {
        return Err(Error::dims("start profile does not match the instance dimensions"));
    }
    Ok(())
}

/// `‖(Q₁⁻¹d₁; …; Q_k⁻¹d_k)‖` and `‖(prox(Q₁); …; prox(Q_k))‖`.
pub fn radius_parts(inst: &IcqsInstance, cfg: &IqpConfig) -> Result<(f64, f64)> {
    let mut d_sq = 0.0;
    let mut prox_sq = 0.0;
    for i in 0..inst.n_players() {
        let u = iqp::continuous_min(&inst.base_quadratic(i))?;
        d_sq += norm2(&u).powi(2);
        let prox = iqp::prox_bound(&inst.player(i).q, cfg)?.prox_value;
        prox_sq += prox * prox;
    }
    Ok((d_sq.sqrt(), prox_sq.sqrt()))
}

/// Norm beyond which a best-response round strictly shrinks the joint
/// profile, for positively adequate games.
pub fn termination_radius(inst: &IcqsInstance, cfg: &IqpConfig) -> Result<Option<f64>> {
    let report = inst.classify()?;
    if report.classification != Adequacy::PositivelyAdequate {
        return Ok(None);
    }
    let (d_part, prox_part) = radius_parts(inst, cfg)?;
    Ok(Some((d_part + prox_part) / report.rho))
}

/// Norm beyond which a best-response round strictly grows the joint
/// profile, for negatively adequate games.
pub fn divergence_radius(inst: &IcqsInstance, cfg: &IqpConfig) -> Result<Option<f64>> {
    let report = inst.classify()?;
    if report.classification != Adequacy::NegativelyAdequate {
        return Ok(None);
    }
    let (d_part, prox_part) = radius_parts(inst, cfg)?;
    Ok(Some((d_part + prox_part) / report.rho))
}

/// Divergence radius for the continuous iteration (no rounding term).
pub fn continuous_divergence_radius(inst: &IcqsInstance) -> Result<Option<f64>> {
    let report = inst.classify()?;
    if report.classification != Adequacy::NegativelyAdequate {
        return Ok(None);
    }
    let (d_part, _) = radius_parts(inst, &IqpConfig::default())?;
    Ok(Some(d_part / report.rho))
}

struct DivergenceWatch {
    radius: Option<f64>,
    confirm: usize,
    streak: usize,
}

impl DivergenceWatch {
    fn new(radius: Option<f64>, confirm: usize) -> Self {
        DivergenceWatch { radius: radius.filter(|_| confirm > 0), confirm, streak: 0 }
    }

    fn observe(&mut self, prev_norm: f64, norm: f64) -> bool {
        let Some(r) = self.radius else { return false };
        if prev_norm > r && norm > prev_norm {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= self.confirm
    }
}

/// Integer best-response dynamics from `start`.
pub fn run_br(inst: &IcqsInstance, start: &[Vec<i64>], cfg: &DynamicsConfig) -> Result<BrTrace<i64>> {
    check_start(inst, start)?;
    let radius = if cfg.divergence_confirm_steps > 0 { divergence_radius(inst, &cfg.iqp)? } else { None };
    let mut watch = DivergenceWatch::new(radius, cfg.divergence_confirm_steps);

    let mut profiles = vec![start.to_vec()];
    let mut norms = vec![joint_norm(start)];
    let mut seen: HashMap<Profile<i64>, usize> = HashMap::from([(start.to_vec(), 0)]);

    for t in 1..=cfg.max_iters {
        let prev = &profiles[t - 1];
        let next = match cfg.update {
            UpdateOrder::Jacobi => {
                let real = to_real(prev);
                (0..inst.n_players())
                    .map(|i| inst.best_response(i, &real, &cfg.iqp))
                    .collect::<Result<Profile<i64>>>()?
            }
            UpdateOrder::GaussSeidel => {
                let mut work = prev.clone();
                for i in 0..inst.n_players() {
                    work[i] = inst.best_response(i, &to_real(&work), &cfg.iqp)?;
                }
                work
            }
        };
        norms.push(joint_norm(&next));
        if let Some(&k) = seen.get(&next) {
            profiles.push(next);
            let outcome = if k + 1 == t {
                Outcome::FixedPoint { index: k }
            } else {
                Outcome::CycleFound { start: k, repeat: t }
            };
            return Ok(BrTrace { profiles, outcome, norms });
        }
        seen.insert(next.clone(), t);
        profiles.push(next);
        if watch.observe(norms[t - 1], norms[t]) {
            return Ok(BrTrace { profiles, outcome: Outcome::DivergenceCertified { at_index: t }, norms });
        }
    }
    Ok(BrTrace { profiles, outcome: Outcome::IterationCapReached, norms })
}

/// Best-response dynamics of the game relaxed to real strategies.
pub fn run_continuous(inst: &IcqsInstance, start: &[Vec<f64>], cfg: &DynamicsConfig) -> Result<BrTrace<f64>> {
    check_start(inst, start)?;
    let radius = if cfg.divergence_confirm_steps > 0 { continuous_divergence_radius(inst)? } else { None };
    let mut watch = DivergenceWatch::new(radius, cfg.divergence_confirm_steps);

    let mut profiles = vec![start.to_vec()];
    let mut norms = vec![joint_norm(start)];
    for t in 1..=cfg.max_iters {
        let prev = &profiles[t - 1];
        let next = match cfg.update {
            UpdateOrder::Jacobi => (0..inst.n_players())
                .map(|i| inst.continuous_response(i, prev))
                .collect::<Result<Profile<f64>>>()?,
            UpdateOrder::GaussSeidel => {
                let mut work = prev.clone();
                for i in 0..inst.n_players() {
                    work[i] = inst.continuous_response(i, &work)?;
                }
                work
            }
        };
        let step = joint_dist(prev, &next);
        norms.push(joint_norm(&next));
        profiles.push(next);
        if step < cfg.fp_tolerance {
            return Ok(BrTrace { profiles, outcome: Outcome::FixedPoint { index: t - 1 }, norms });
        }
        if !norms[t].is_finite() {
            return Ok(BrTrace { profiles, outcome: Outcome::IterationCapReached, norms });
        }
        if watch.observe(norms[t - 1], norms[t]) {
            return Ok(BrTrace { profiles, outcome: Outcome::DivergenceCertified { at_index: t }, norms });
        }
    }
    Ok(BrTrace { profiles, outcome: Outcome::IterationCapReached, norms })
}

/// Per-player sets of distinct strategies visited on the terminal cycle,
/// sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSets {
    pub sets: Vec<Vec<Vec<i64>>>,
}

impl CycleSets {
    pub fn from_trace(trace: &BrTrace<i64>) -> Result<Self> {
        let cycle = trace.cycle_profiles()?;
        let k = cycle[0].len();
        let sets = (0..k)
            .map(|i| {
                let mut s: Vec<Vec<i64>> = cycle.iter().map(|p| p[i].clone()).collect();
                s.sort();
                s.dedup();
                s
            })
            .collect();
        Ok(CycleSets { sets })
    }

    pub fn singleton(profile: &[Vec<i64>]) -> Self {
        CycleSets { sets: profile.iter().map(|x| vec![x.clone()]).collect() }
    }

    pub fn n_players(&self) -> usize {
        self.sets.len()
    }

    pub fn is_singleton(&self) -> bool {
        self.sets.iter().all(|s| s.len() == 1)
    }
}

/// Distance from each profile (up to the cycle's end) to the nearest cycle
/// profile; cycle members map to zero.
pub fn cycle_telemetry<T: Coord>(trace: &BrTrace<T>) -> Result<Vec<f64>> {
    let cycle: Vec<Profile<f64>> = trace.cycle_profiles()?.iter().map(|p| to_f64_profile(p)).collect();
    let end = match trace.outcome {
        Outcome::CycleFound { repeat, .. } => repeat,
        Outcome::FixedPoint { index } => index + 1,
        _ => unreachable!("cycle_profiles checked the outcome"),
    };
    Ok(trace.profiles[..end]
        .iter()
        .map(|p| {
            let real = to_f64_profile(p);
            cycle.iter().map(|c| joint_dist(&real, c)).fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Ratios `‖z_{t+1} − z*‖ / ‖z_t − z*‖` toward the final iterate `z*`,
/// restricted to steps where `‖z_t − z*‖ > floor`.
pub fn contraction_ratios(trace: &BrTrace<f64>, floor: f64) -> Vec<f64> {
    let Some(fixed) = trace.profiles.last() else { return Vec::new() };
    let dists: Vec<f64> = trace.profiles.iter().map(|p| joint_dist(p, fixed)).collect();
    dists.windows(2).filter(|w| w[0] > floor).map(|w| w[1] / w[0]).collect()
}

/// Largest per-player gradient norm `‖Qᵢxᵢ + Cᵢx₋ᵢ + dᵢ‖`.
pub fn stationarity_residual(inst: &IcqsInstance, profile: &[Vec<f64>]) -> Result<f64> {
    (0..inst.n_players()).try_fold(0.0f64, |acc, i| {
        let q = inst.response_problem(i, profile)?;
        Ok(acc.max(iqp::gradient_norm(&q, &profile[i])))
    })
}

/// One row per profile: iteration index, flattened profile, joint norm.
pub fn trace_csv<T: Display>(trace: &BrTrace<T>) -> String {
    let mut out = String::from("iter");
    if let Some(first) = trace.profiles.first() {
        for (i, x) in first.iter().enumerate() {
            for j in 0..x.len() {
                let _ = write!(out, ",p{i}_{j}");
            }
        }
    }
    out.push_str(",norm\n");
    for (t, (p, n)) in trace.profiles.iter().zip(&trace.norms).enumerate() {
        let _ = write!(out, "{t}");
        for v in p.iter().flatten() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{n}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{builtin, Builtin};

    #[test]
    fn example1_doubles_and_is_certified() {
        let inst = builtin(Builtin::Example1).unwrap();
        let trace = run_br(&inst, &[vec![5], vec![5]], &DynamicsConfig::default()).unwrap();
        for (i, p) in trace.profiles.iter().enumerate() {
            let v = 5 * (1 << i);
            assert_eq!(p, &vec![vec![v], vec![v]]);
        }
        assert_eq!(trace.outcome, Outcome::DivergenceCertified { at_index: 8 });
    }

    #[test]
    fn cycling_example_has_period_four() {
        let inst = builtin(Builtin::Cycling).unwrap();
        let trace = run_br(&inst, &[vec![0], vec![0]], &DynamicsConfig::default()).unwrap();
        let expected: Vec<Profile<i64>> = [(0, 0), (0, 1), (1, 1), (1, 0), (0, 0)]
            .iter()
            .map(|&(x, y)| vec![vec![x], vec![y]])
            .collect();
        assert_eq!(trace.profiles, expected);
        assert_eq!(trace.outcome, Outcome::CycleFound { start: 0, repeat: 4 });
        assert_eq!(cycle_telemetry(&trace).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn counterexample_cycle_sets() {
        let inst = builtin(Builtin::Counterexample(10)).unwrap();
        let trace = run_br(&inst, &[vec![0, 1], vec![0, 1]], &DynamicsConfig::default()).unwrap();
        let sets = CycleSets::from_trace(&trace).unwrap();
        let expected = vec![vec![0, 1], vec![10, 0]];
        assert_eq!(sets.sets, vec![expected.clone(), expected]);
    }

    #[test]
    fn termination_radius_examples() {
        let cfg = IqpConfig::default();
        let l = termination_radius(&builtin(Builtin::Cycling).unwrap(), &cfg).unwrap().unwrap();
        let expected = ((0.45f64.powi(2) + 0.55f64.powi(2)).sqrt() + (2.0f64 * 0.0625).sqrt()) / 0.9;
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 1.182).abs() < 1e-3);
        assert_eq!(termination_radius(&builtin(Builtin::Example1).unwrap(), &cfg).unwrap(), None);
    }

    #[test]
    fn divergence_radius_examples() {
        let cfg = IqpConfig::default();
        let r = divergence_radius(&builtin(Builtin::Example1).unwrap(), &cfg).unwrap().unwrap();
        assert!((r - (0.125f64).sqrt()).abs() < 1e-12);
        assert_eq!(divergence_radius(&builtin(Builtin::Cycling).unwrap(), &cfg).unwrap(), None);
    }

    #[test]
    fn cycling_from_far_start_approaches_monotonically() {
        let inst = builtin(Builtin::Cycling).unwrap();
        let trace = run_br(&inst, &[vec![10], vec![10]], &DynamicsConfig::default()).unwrap();
        assert!(trace.outcome.terminated());
        let dists = cycle_telemetry(&trace).unwrap();
        let entry = dists.iter().position(|&d| d == 0.0).unwrap();
        assert!(entry >= 1);
        assert!(dists[..=entry].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn fixed_point_telemetry_measures_distance() {
        let spec = crate::instgen::PricingSpec {
            a_range: (10.0, 10.0),
            b_range: (1.0, 1.0),
            c_range: (0.0, 0.0),
            cross_scale: 0.0,
            n_players: 2,
            ..Default::default()
        };
        let inst = crate::instgen::gen_pricing(&spec).unwrap();
        let trace = run_br(&inst, &inst.zero_profile(), &DynamicsConfig::default()).unwrap();
        let Outcome::FixedPoint { index } = trace.outcome else { panic!("{:?}", trace.outcome) };
        assert_eq!(index, 1);
        let dists = cycle_telemetry(&trace).unwrap();
        let dim = inst.total_dim() as f64;
        assert!((dists[0] - 5.0 * dim.sqrt()).abs() < 1e-12);
        assert_eq!(dists[1], 0.0);
    }

    #[test]
    fn no_cycle_on_divergence() {
        let inst = builtin(Builtin::Example1).unwrap();
        let trace = run_br(&inst, &[vec![5], vec![5]], &DynamicsConfig::default()).unwrap();
        assert_eq!(cycle_telemetry(&trace), Err(Error::NoCycle));
        assert_eq!(CycleSets::from_trace(&trace), Err(Error::NoCycle));
    }

    #[test]
    fn cap_without_certificate() {
        let inst = builtin(Builtin::Example1).unwrap();
        let cfg = DynamicsConfig { max_iters: 5, divergence_confirm_steps: 0, ..Default::default() };
        let trace = run_br(&inst, &[vec![5], vec![5]], &cfg).unwrap();
        assert_eq!(trace.outcome, Outcome::IterationCapReached);
        assert_eq!(trace.iterations(), 5);
    }

    #[test]
    fn continuous_mode_examples() {
        let cfg = DynamicsConfig::default();
        let cyc = builtin(Builtin::Cycling).unwrap();
        let trace = run_continuous(&cyc, &[vec![0.0], vec![0.0]], &cfg).unwrap();
        assert!(matches!(trace.outcome, Outcome::FixedPoint { .. }));
        assert!(stationarity_residual(&cyc, trace.profiles.last().unwrap()).unwrap() < 1e-9);
        for r in contraction_ratios(&trace, 1e-6) {
            assert!(r <= 0.1 + 1e-6);
        }
        let ex1 = builtin(Builtin::Example1).unwrap();
        let trace = run_continuous(&ex1, &[vec![5.0], vec![5.0]], &cfg).unwrap();
        assert!(matches!(trace.outcome, Outcome::DivergenceCertified { .. }));
        assert!(trace.norms.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gauss_seidel_runs() {
        let inst = builtin(Builtin::Cycling).unwrap();
        let cfg = DynamicsConfig { update: UpdateOrder::GaussSeidel, ..Default::default() };
        let trace = run_br(&inst, &[vec![0], vec![0]], &cfg).unwrap();
        assert!(trace.outcome.terminated());
    }

    #[test]
    fn csv_export_shape() {
        let inst = builtin(Builtin::Cycling).unwrap();
        let trace = run_br(&inst, &[vec![0], vec![0]], &DynamicsConfig::default()).unwrap();
        let csv = trace_csv(&trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,p0_0,p1_0,norm");
        assert_eq!(lines[1], "0,0,0,0");
        assert_eq!(lines[2], "1,0,1,1");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn rejects_bad_start() {
        let inst = builtin(Builtin::Cycling).unwrap();
        assert!(run_br(&inst, &[vec![0, 1], vec![0]], &DynamicsConfig::default()).is_err());
    }
}
