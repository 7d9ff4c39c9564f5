//! The finite game obtained by restricting every player to its cycle set,
//! its pure and mixed equilibria, and the check of a mixed profile against
//! deviations in the full integer game.

use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundVariant};
use crate::dynamics::CycleSets;
use crate::error::{Error, Result};
use crate::game::{mean_profile, IcqsInstance};
use crate::iqp::{self, IqpConfig};
use crate::linalg::{self, Matrix};

/// Tolerance of the within-game equilibrium conditions, relative to the
/// largest cost magnitude (and absolute below 1).
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;
/// Diagonal shift applied to singular indifference systems.
pub const SINGULAR_PERTURBATION: f64 = 1e-12;
pub const REGRET_MATCHING_ROUNDS: usize = 1_000_000;
pub const DEFAULT_K_PLAYER_EPS: f64 = 1e-6;
/// Support tuples tried by the small-support search before falling back to
/// regret matching.
pub const SUPPORT_TUPLE_BUDGET: usize = 20_000;
const MAX_SMALL_SUPPORT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGame {
    /// Per-player strategy lists.
    pub strategies: Vec<Vec<Vec<i64>>>,
    /// Row-major over joint index tuples (player 0 most significant); each
    /// entry holds every player's cost.
    pub costs: Vec<Vec<f64>>,
}

impl FiniteGame {
    pub fn new(strategies: Vec<Vec<Vec<i64>>>, costs: Vec<Vec<f64>>) -> Result<Self> {
        let k = strategies.len();
        if k == 0 || strategies.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidInstance("finite game needs a nonempty strategy list per player".into()));
        }
        let size: usize = strategies.iter().map(|s| s.len()).product();
        if costs.len() != size || costs.iter().any(|c| c.len() != k) {
            return Err(Error::dims("cost tensor does not match the strategy counts"));
        }
        Ok(FiniteGame { strategies, costs })
    }

    pub fn n_players(&self) -> usize {
        self.strategies.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.strategies.iter().map(|s| s.len()).collect()
    }

    pub fn flat_index(&self, tuple: &[usize]) -> usize {
        tuple.iter().zip(&self.strategies).fold(0, |acc, (&t, s)| acc * s.len() + t)
    }

    pub fn tuple(&self, mut flat: usize) -> Vec<usize> {
        let mut t = vec![0; self.n_players()];
        for (slot, s) in t.iter_mut().zip(&self.strategies).rev() {
            *slot = flat % s.len();
            flat /= s.len();
        }
        t
    }

    pub fn cost(&self, tuple: &[usize], player: usize) -> f64 {
        self.costs[self.flat_index(tuple)][player]
    }

    pub fn profile(&self, tuple: &[usize]) -> Vec<Vec<i64>> {
        tuple.iter().zip(&self.strategies).map(|(&t, s)| s[t].clone()).collect()
    }

    /// Expected cost of each pure strategy of `player` against the others'
    /// mixed strategies (`probs[player]` is ignored).
    pub fn pure_costs(&self, player: usize, probs: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.strategies[player].len()];
        for (flat, c) in self.costs.iter().enumerate() {
            let t = self.tuple(flat);
            let w: f64 = t.iter().enumerate().filter(|&(j, _)| j != player).map(|(j, &tj)| probs[j][tj]).product();
            if w != 0.0 {
                out[t[player]] += w * c[player];
            }
        }
        out
    }

    pub fn expected_cost(&self, player: usize, probs: &[Vec<f64>]) -> f64 {
        linalg::dot(&self.pure_costs(player, probs), &probs[player])
    }

    /// Per-player regret: expected cost minus the best pure-strategy cost.
    pub fn regrets(&self, probs: &[Vec<f64>]) -> Vec<f64> {
        (0..self.n_players())
            .map(|i| {
                let pc = self.pure_costs(i, probs);
                let best = pc.iter().copied().fold(f64::INFINITY, f64::min);
                linalg::dot(&pc, &probs[i]) - best
            })
            .collect()
    }

    fn tolerance(&self) -> f64 {
        let scale = self.costs.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
        EQUILIBRIUM_TOLERANCE * scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    pub probabilities: Vec<Vec<f64>>,
}

impl MixedProfile {
    pub fn pure(shape: &[usize], tuple: &[usize]) -> Self {
        MixedProfile {
            probabilities: shape
                .iter()
                .zip(tuple)
                .map(|(&n, &t)| (0..n).map(|s| if s == t { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn is_valid_for(&self, fg: &FiniteGame) -> bool {
        self.probabilities.len() == fg.n_players()
            && self.probabilities.iter().zip(&fg.strategies).all(|(p, s)| {
                p.len() == s.len() && p.iter().all(|&v| v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12
            })
    }
}

pub fn restrict(inst: &IcqsInstance, cycle: &CycleSets) -> Result<FiniteGame> {
    if cycle.n_players() != inst.n_players() {
        return Err(Error::dims("cycle sets and instance differ in player count"));
    }
    let shape: Vec<usize> = cycle.sets.iter().map(|s| s.len()).collect();
    let size: usize = shape.iter().product();
    let mut fg = FiniteGame { strategies: cycle.sets.clone(), costs: Vec::with_capacity(size) };
    if size == 0 {
        return Err(Error::InvalidInstance("empty cycle set".into()));
    }
    for flat in 0..size {
        let profile = fg.profile(&fg.tuple(flat));
        let costs = (0..inst.n_players()).map(|i| inst.objective_int(i, &profile)).collect::<Result<Vec<_>>>()?;
        fg.costs.push(costs);
    }
    Ok(fg)
}

/// Every joint index tuple at which no player can lower its own cost.
pub fn pne_search(fg: &FiniteGame) -> Vec<Vec<usize>> {
    let tol = fg.tolerance();
    let shape = fg.shape();
    (0..fg.costs.len())
        .map(|flat| fg.tuple(flat))
        .filter(|t| {
            (0..fg.n_players()).all(|i| {
                let here = fg.cost(t, i);
                (0..shape[i]).all(|s| {
                    let mut alt = t.clone();
                    alt[i] = s;
                    fg.cost(&alt, i) >= here - tol
                })
            })
        })
        .collect()
}

/// Index subsets of `0..n` of size `k`, lexicographic.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Solves `M x = b`, through normal equations when `M` is not square, with a
/// small diagonal shift when the system is singular.
fn solve_indifference(m: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let (sys, rhs) = if m.is_square() {
        (m.clone(), b.to_vec())
    } else {
        let mt = m.transpose();
        (mt.matmul(m).ok()?, mt.mul_vec(b).ok()?)
    };
    match linalg::solve_general(&sys, &rhs) {
        Ok(x) => Some(x),
        Err(_) => {
            let shifted = sys.add(&Matrix::identity(sys.rows()).scaled(SINGULAR_PERTURBATION)).ok()?;
            linalg::solve_general(&shifted, &rhs).ok()
        }
    }
}

/// Mixed strategy of the opponent over `cols` making every row in `rows` of
/// `cost` (the owner's costs) equally expensive.
fn indifferent_mix(cost: &[Vec<f64>], rows: &[usize], cols: &[usize], n_cols: usize) -> Option<Vec<f64>> {
    let r = rows.len() + 1;
    let c = cols.len() + 1;
    let mut m = Matrix::zeros(r, c);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            m[(a, b)] = cost[i][j];
        }
        m[(a, cols.len())] = -1.0;
    }
    for b in 0..cols.len() {
        m[(rows.len(), b)] = 1.0;
    }
    let mut rhs = vec![0.0; r];
    rhs[rows.len()] = 1.0;
    let x = solve_indifference(&m, &rhs)?;
    let mut probs = vec![0.0; n_cols];
    for (b, &j) in cols.iter().enumerate() {
        if !x[b].is_finite() || x[b] < -1e-10 {
            return None;
        }
        probs[j] = x[b].max(0.0);
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return None;
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Some(probs)
}

/// Every strategy played with positive probability is a best response, within `tol`.
fn is_equilibrium(fg: &FiniteGame, probs: &[Vec<f64>], tol: f64) -> bool {
    (0..fg.n_players()).all(|i| {
        let pc = fg.pure_costs(i, probs);
        let best = pc.iter().copied().fold(f64::INFINITY, f64::min);
        pc.iter().zip(&probs[i]).all(|(&c, &p)| p == 0.0 || c <= best + tol)
    })
}

/// Exact mixed equilibrium of a two-player finite game by support
/// enumeration, smallest total support first.
pub fn mne_two_player(fg: &FiniteGame) -> Result<MixedProfile> {
    if fg.n_players() != 2 {
        return Err(Error::dims(format!("two-player solver called with {} players", fg.n_players())));
    }
    let (m, n) = (fg.strategies[0].len(), fg.strategies[1].len());
    let a: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| fg.cost(&[i, j], 0)).collect()).collect();
    // player 1's costs, indexed [own][opponent]
    let b: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| fg.cost(&[i, j], 1)).collect()).collect();
    let tol = fg.tolerance();

    for total in 2..=m + n {
        let mut pairs = Vec::new();
        for size_i in total.saturating_sub(n).max(1)..=(total - 1).min(m) {
            for rows in combinations(m, size_i) {
                for cols in combinations(n, total - size_i) {
                    pairs.push((rows.clone(), cols));
                }
            }
        }
        pairs.sort();
        for (rows, cols) in pairs {
            let Some(q) = indifferent_mix(&a, &rows, &cols, n) else { continue };
            let Some(p) = indifferent_mix(&b, &cols, &rows, m) else { continue };
            let probs = vec![p, q];
            if is_equilibrium(fg, &probs, tol) {
                return Ok(MixedProfile { probabilities: probs });
            }
        }
    }
    Err(Error::NoEquilibriumFound)
}

/// Support tuples (one support per player, each of size ≤ 3), ordered by
/// total size then lexicographically, skipping the all-pure tuples.
fn small_support_tuples(shape: &[usize], budget: usize) -> Vec<Vec<Vec<usize>>> {
    let per_player: Vec<Vec<Vec<usize>>> = shape
        .iter()
        .map(|&n| (1..=n.min(MAX_SMALL_SUPPORT)).flat_map(|s| combinations(n, s)).collect())
        .collect();
    let mut tuples: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for options in &per_player {
        let mut next = Vec::new();
        for t in &tuples {
            for o in options {
                let mut e = t.clone();
                e.push(o.clone());
                next.push(e);
                if next.len() > budget.saturating_mul(4) {
                    break;
                }
            }
        }
        tuples = next;
    }
    tuples.retain(|t| t.iter().any(|s| s.len() > 1));
    tuples.sort_by(|x, y| {
        let sx: usize = x.iter().map(|s| s.len()).sum();
        let sy: usize = y.iter().map(|s| s.len()).sum();
        sx.cmp(&sy).then_with(|| x.cmp(y))
    });
    tuples.truncate(budget);
    tuples
}

/// Expected cost of `player` under `probs`, with the strategies in `fixed`
/// forced to pure choices.
fn cost_with_fixed(fg: &FiniteGame, player: usize, probs: &[Vec<f64>], fixed: &[(usize, usize)]) -> f64 {
    let mut total = 0.0;
    'outer: for (flat, c) in fg.costs.iter().enumerate() {
        let t = fg.tuple(flat);
        let mut w = 1.0;
        for (j, &tj) in t.iter().enumerate() {
            if let Some(&(_, s)) = fixed.iter().find(|(p, _)| *p == j) {
                if s != tj {
                    continue 'outer;
                }
            } else if j != player {
                w *= probs[j][tj];
            } else {
                continue 'outer;
            }
        }
        total += w * c[player];
    }
    total
}

/// Indifference residual for a support tuple: per player, cost differences
/// between support strategies and the first one, plus the simplex constraint.
fn support_residual(fg: &FiniteGame, supports: &[Vec<usize>], probs: &[Vec<f64>]) -> Vec<f64> {
    let mut r = Vec::new();
    for (i, sup) in supports.iter().enumerate() {
        let base = cost_with_fixed(fg, i, probs, &[(i, sup[0])]);
        for &s in &sup[1..] {
            r.push(cost_with_fixed(fg, i, probs, &[(i, s)]) - base);
        }
        r.push(sup.iter().map(|&s| probs[i][s]).sum::<f64>() - 1.0);
    }
    r
}

/// Analytic Jacobian of [`support_residual`]: the costs are multilinear in
/// the probabilities, so each partial fixes one more player's strategy.
fn support_jacobian(fg: &FiniteGame, supports: &[Vec<usize>], probs: &[Vec<f64>]) -> Matrix {
    let vars: Vec<(usize, usize)> = supports.iter().enumerate().flat_map(|(j, s)| s.iter().map(move |&b| (j, b))).collect();
    let rows: usize = supports.iter().map(|s| s.len()).sum();
    let mut jac = Matrix::zeros(rows, vars.len());
    let mut row = 0;
    for (i, sup) in supports.iter().enumerate() {
        for &s in &sup[1..] {
            for (col, &(j, b)) in vars.iter().enumerate() {
                if j != i {
                    jac[(row, col)] = cost_with_fixed(fg, i, probs, &[(i, s), (j, b)])
                        - cost_with_fixed(fg, i, probs, &[(i, sup[0]), (j, b)]);
                }
            }
            row += 1;
        }
        for (col, &(j, _)) in vars.iter().enumerate() {
            if j == i {
                jac[(row, col)] = 1.0;
            }
        }
        row += 1;
    }
    jac
}

/// Damped Newton on the indifference system of one support tuple.
fn solve_support(fg: &FiniteGame, supports: &[Vec<usize>]) -> Option<Vec<Vec<f64>>> {
    let shape = fg.shape();
    let mut probs: Vec<Vec<f64>> = shape
        .iter()
        .zip(supports)
        .map(|(&n, s)| {
            let mut p = vec![0.0; n];
            s.iter().for_each(|&b| p[b] = 1.0 / s.len() as f64);
            p
        })
        .collect();
    let norm = |r: &[f64]| linalg::norm2(r);
    let scale = fg.costs.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let mut res = support_residual(fg, supports, &probs);
    for _ in 0..100 {
        if norm(&res) <= 1e-13 * scale {
            break;
        }
        let jac = support_jacobian(fg, supports, &probs);
        let neg: Vec<f64> = res.iter().map(|v| -v).collect();
        let step = solve_indifference(&jac, &neg)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = probs.clone();
            let mut k = 0;
            for (j, sup) in supports.iter().enumerate() {
                for &b in sup {
                    trial[j][b] += t * step[k];
                    k += 1;
                }
            }
            let tr = support_residual(fg, supports, &trial);
            if norm(&tr) < norm(&res) {
                probs = trial;
                res = tr;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if norm(&res) > 1e-9 * scale {
        return None;
    }
    for p in probs.iter_mut() {
        if p.iter().any(|&v| !v.is_finite() || v < -1e-10) {
            return None;
        }
        p.iter_mut().for_each(|v| *v = v.max(0.0));
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
    }
    Some(probs)
}

/// Regret matching on expected costs; returns the average profile with the
/// smallest observed maximum regret.
fn regret_matching(fg: &FiniteGame, eps: f64, rounds: usize) -> (Vec<Vec<f64>>, f64) {
    let shape = fg.shape();
    let k = fg.n_players();
    let mut current: Vec<Vec<f64>> = shape.iter().map(|&n| vec![1.0 / n as f64; n]).collect();
    let mut cum_regret: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    let mut cum_strategy: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    let mut best = (current.clone(), f64::INFINITY);
    for round in 1..=rounds {
        let pcs: Vec<Vec<f64>> = (0..k).map(|i| fg.pure_costs(i, &current)).collect();
        for i in 0..k {
            let expected = linalg::dot(&pcs[i], &current[i]);
            for (r, c) in cum_regret[i].iter_mut().zip(&pcs[i]) {
                *r += expected - c;
            }
            for (s, p) in cum_strategy[i].iter_mut().zip(&current[i]) {
                *s += p;
            }
        }
        for i in 0..k {
            let pos: f64 = cum_regret[i].iter().map(|r| r.max(0.0)).sum();
            current[i] = if pos > 0.0 {
                cum_regret[i].iter().map(|r| r.max(0.0) / pos).collect()
            } else {
                vec![1.0 / shape[i] as f64; shape[i]]
            };
        }
        if round % 1000 == 0 || round == rounds {
            let avg: Vec<Vec<f64>> = cum_strategy
                .iter()
                .map(|s| {
                    let t: f64 = s.iter().sum();
                    s.iter().map(|v| v / t).collect()
                })
                .collect();
            let reg = fg.regrets(&avg).into_iter().fold(0.0, f64::max);
            if reg < best.1 {
                best = (avg, reg);
            }
            if best.1 <= eps {
                break;
            }
        }
    }
    best
}

/// Approximate mixed equilibrium for three or more players. Returns the
/// profile and its maximum per-player regret.
pub fn mne_k_player(fg: &FiniteGame, eps: f64) -> Result<(MixedProfile, f64)> {
    if let Some(t) = pne_search(fg).first() {
        return Ok((MixedProfile::pure(&fg.shape(), t), 0.0));
    }
    for supports in small_support_tuples(&fg.shape(), SUPPORT_TUPLE_BUDGET) {
        if let Some(probs) = solve_support(fg, &supports) {
            let reg = fg.regrets(&probs).into_iter().fold(0.0, f64::max);
            if reg <= eps {
                return Ok((MixedProfile { probabilities: probs }, reg.max(0.0)));
            }
        }
    }
    let (probs, reg) = regret_matching(fg, eps, REGRET_MATCHING_ROUNDS);
    if reg <= eps {
        Ok((MixedProfile { probabilities: probs }, reg.max(0.0)))
    } else {
        Err(Error::ToleranceNotReached { best_eps: reg })
    }
}

/// Mixed equilibrium of the finite game and its achieved regret: exact for
/// two players, approximate otherwise.
pub fn solve(fg: &FiniteGame, eps: f64) -> Result<(MixedProfile, f64)> {
    if fg.n_players() == 2 {
        let p = mne_two_player(fg)?;
        let reg = fg.regrets(&p.probabilities).into_iter().fold(0.0, f64::max);
        Ok((p, reg.max(0.0)))
    } else {
        mne_k_player(fg, eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDelta {
    pub expected_cost: f64,
    /// Best integer deviation against the mean opponent strategies.
    pub deviation: Vec<i64>,
    pub deviation_cost: f64,
    /// `expected_cost − deviation_cost`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub players: Vec<PlayerDelta>,
    /// Closed-form Δ bound per player, when the game is positively adequate.
    pub a_priori: Option<Vec<f64>>,
}

impl DeltaReport {
    pub fn max_gain(&self) -> f64 {
        self.players.iter().map(|p| p.gain).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn within_a_priori(&self) -> Option<bool> {
        self.a_priori.as_ref().map(|b| self.players.iter().zip(b).all(|(p, &d)| p.gain <= d))
    }
}

pub fn verify_delta(inst: &IcqsInstance, fg: &FiniteGame, profile: &MixedProfile, cfg: &IqpConfig) -> Result<DeltaReport> {
    if !profile.is_valid_for(fg) {
        return Err(Error::dims("mixed profile does not fit the finite game"));
    }
    let mean = mean_profile(&fg.strategies, &profile.probabilities)?;
    let players = (0..fg.n_players())
        .map(|i| {
            let expected_cost = fg.expected_cost(i, &profile.probabilities);
            let deviation = inst.best_response(i, &mean, cfg)?;
            let deviation_cost = inst.objective(i, &iqp::to_f64(&deviation), &mean)?;
            Ok(PlayerDelta { expected_cost, deviation, deviation_cost, gain: expected_cost - deviation_cost })
        })
        .collect::<Result<Vec<_>>>()?;
    let a_priori = bounds::delta_a_priori(inst, cfg, BoundVariant::ExactWhereKnown)?;
    Ok(DeltaReport { players, a_priori })
}
