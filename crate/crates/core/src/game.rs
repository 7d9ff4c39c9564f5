//! The game model: `k ≥ 2` players, player `i` minimizing
//! `½xᵢᵀQᵢxᵢ + (Σⱼ Cᵢⱼxⱼ + dᵢ)ᵀxᵢ` over `xᵢ ∈ ℤ^{nᵢ}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iqp::{self, IqpConfig, QuadForm, Quadratic};
use crate::linalg::{self, Matrix};

/// Singular values within this distance of 1 are classified as `Neither`.
pub const ADEQUACY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerProblem {
    pub q: Matrix,
    /// Coupling blocks keyed by opponent index; absent blocks are zero.
    pub c: BTreeMap<usize, Matrix>,
    pub d: Vec<f64>,
}

impl PlayerProblem {
    pub fn new(q: Matrix, c: BTreeMap<usize, Matrix>, d: Vec<f64>) -> Self {
        PlayerProblem { q, c, d }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }
}

#[derive(Debug, Clone)]
pub struct IcqsInstance {
    players: Vec<PlayerProblem>,
    dims: Vec<usize>,
    forms: Vec<Arc<QuadForm>>,
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adequacy {
    PositivelyAdequate,
    NegativelyAdequate,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerAdequacy {
    pub sigma_max: f64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdequacyReport {
    pub players: Vec<PlayerAdequacy>,
    pub classification: Adequacy,
    /// Margin to 1: `1 − max σ_max` or `min σ_min − 1`; zero for `Neither`.
    pub rho: f64,
}

impl AdequacyReport {
    pub fn max_sigma(&self) -> f64 {
        self.players.iter().map(|p| p.sigma_max).fold(0.0, f64::max)
    }

    pub fn min_sigma(&self) -> f64 {
        self.players.iter().map(|p| p.sigma_min).fold(f64::INFINITY, f64::min)
    }
}

impl IcqsInstance {
    pub fn new(players: Vec<PlayerProblem>) -> Result<Self> {
        Self::with_meta(players, serde_json::Value::Null)
    }

    pub fn with_meta(players: Vec<PlayerProblem>, meta: serde_json::Value) -> Result<Self> {
        let k = players.len();
        if k < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 players, got {k}")));
        }
        let dims: Vec<usize> = players.iter().map(PlayerProblem::dim).collect();
        let mut forms = Vec::with_capacity(k);
        for (i, p) in players.iter().enumerate() {
            let n = dims[i];
            if n == 0 {
                return Err(Error::InvalidInstance(format!("player {i} has no variables")));
            }
            if p.q.rows() != n || p.q.cols() != n {
                return Err(Error::dims(format!(
                    "player {i}: Q is {}x{}, d has length {n}",
                    p.q.rows(),
                    p.q.cols()
                )));
            }
            for (&j, block) in &p.c {
                if j >= k || j == i {
                    return Err(Error::InvalidInstance(format!(
                        "player {i}: coupling block for invalid opponent {j}"
                    )));
                }
                if block.rows() != n || block.cols() != dims[j] {
                    return Err(Error::dims(format!(
                        "player {i}: block C[{j}] is {}x{}, expected {n}x{}",
                        block.rows(),
                        block.cols(),
                        dims[j]
                    )));
                }
            }
            forms.push(Arc::new(QuadForm::new(p.q.clone())?));
        }
        Ok(IcqsInstance { players, dims, forms, meta })
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn player(&self, i: usize) -> &PlayerProblem {
        &self.players[i]
    }

    pub fn players(&self) -> &[PlayerProblem] {
        &self.players
    }

    fn check_profile<T>(&self, profile: &[Vec<T>]) -> Result<()> {
        if profile.len() != self.n_players() {
            return Err(Error::dims(format!(
                "profile has {} players, instance has {}",
                profile.len(),
                self.n_players()
            )));
        }
        for (i, (x, &n)) in profile.iter().zip(&self.dims).enumerate() {
            if x.len() != n {
                return Err(Error::dims(format!("player {i}: {} entries, expected {n}", x.len())));
            }
        }
        Ok(())
    }

    /// `Σⱼ Cᵢⱼ xⱼ` over opponents; the entry for `i` in `profile` is ignored.
    pub fn coupling(&self, i: usize, profile: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_profile(profile)?;
        let mut out = vec![0.0; self.dims[i]];
        for (&j, block) in &self.players[i].c {
            let v = block.mul_vec(&profile[j])?;
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        }
        Ok(out)
    }

    /// Player `i`'s quadratic given the opponents in `profile`.
    pub fn response_problem(&self, i: usize, profile: &[Vec<f64>]) -> Result<Quadratic> {
        let mut lin = self.coupling(i, profile)?;
        lin.iter_mut().zip(&self.players[i].d).for_each(|(l, d)| *l += d);
        Quadratic::from_form(Arc::clone(&self.forms[i]), lin)
    }

    pub fn base_quadratic(&self, i: usize) -> Quadratic {
        Quadratic::from_form(Arc::clone(&self.forms[i]), self.players[i].d.clone())
            .expect("validated at construction")
    }

    /// Objective of player `i` playing `own` against the opponents in `profile`.
    pub fn objective(&self, i: usize, own: &[f64], profile: &[Vec<f64>]) -> Result<f64> {
        if own.len() != self.dims[i] {
            return Err(Error::dims(format!("player {i}: own strategy length {}", own.len())));
        }
        Ok(self.response_problem(i, profile)?.objective(own))
    }

    pub fn objective_int(&self, i: usize, profile: &[Vec<i64>]) -> Result<f64> {
        let real = to_real(profile);
        self.objective(i, &real[i], &real)
    }

    pub fn best_response(&self, i: usize, profile: &[Vec<f64>], cfg: &IqpConfig) -> Result<Vec<i64>> {
        Ok(iqp::integer_min(&self.response_problem(i, profile)?, cfg)?.point)
    }

    /// Best response to mixed opponents. The coupling is linear in the
    /// opponents' variables, so this is the response to their mean.
    pub fn best_response_mixed(
        &self,
        i: usize,
        strategies: &[Vec<Vec<i64>>],
        probabilities: &[Vec<f64>],
        cfg: &IqpConfig,
    ) -> Result<Vec<i64>> {
        let mean = mean_profile(strategies, probabilities)?;
        self.best_response(i, &mean, cfg)
    }

    pub fn continuous_response(&self, i: usize, profile: &[Vec<f64>]) -> Result<Vec<f64>> {
        iqp::continuous_min(&self.response_problem(i, profile)?)
    }

    /// `Cᵢ` as the horizontal concatenation of all opponent blocks in player order.
    pub fn coupling_matrix(&self, i: usize) -> Matrix {
        let n = self.dims[i];
        let zero_blocks: Vec<Matrix> = (0..self.n_players())
            .filter(|&j| j != i)
            .map(|j| Matrix::zeros(n, self.dims[j]))
            .collect();
        let blocks: Vec<&Matrix> = (0..self.n_players())
            .filter(|&j| j != i)
            .zip(&zero_blocks)
            .map(|(j, z)| self.players[i].c.get(&j).unwrap_or(z))
            .collect();
        Matrix::hcat(&blocks, n).expect("blocks validated at construction")
    }

    /// `Rᵢ = Qᵢ⁻¹Cᵢ`.
    pub fn interaction_matrix(&self, i: usize) -> Result<Matrix> {
        linalg::solve_spd_matrix(&self.players[i].q, &self.coupling_matrix(i))
    }

    pub fn classify(&self) -> Result<AdequacyReport> {
        self.classify_with(ADEQUACY_EPS)
    }

    pub fn classify_with(&self, eps: f64) -> Result<AdequacyReport> {
        let mut players = Vec::with_capacity(self.n_players());
        for i in 0..self.n_players() {
            let sv = linalg::singular_values(&self.interaction_matrix(i)?)?;
            players.push(PlayerAdequacy {
                sigma_max: sv.first().copied().unwrap_or(0.0),
                sigma_min: sv.last().copied().unwrap_or(0.0),
            });
        }
        let max_sigma = players.iter().map(|p| p.sigma_max).fold(0.0, f64::max);
        let min_sigma = players.iter().map(|p| p.sigma_min).fold(f64::INFINITY, f64::min);
        let (classification, rho) = if max_sigma < 1.0 - eps {
            (Adequacy::PositivelyAdequate, 1.0 - max_sigma)
        } else if min_sigma > 1.0 + eps {
            (Adequacy::NegativelyAdequate, min_sigma - 1.0)
        } else {
            (Adequacy::Neither, 0.0)
        };
        Ok(AdequacyReport { players, classification, rho })
    }

    /// The joint linear map `z ↦ (R₁z₋₁, …, R_kz₋ₖ)` as one square matrix
    /// (zero diagonal blocks).
    pub fn joint_interaction(&self) -> Result<Matrix> {
        let total = self.total_dim();
        let offsets = self.offsets();
        let mut g = Matrix::zeros(total, total);
        for i in 0..self.n_players() {
            let r = self.interaction_matrix(i)?;
            let mut col = 0;
            for j in (0..self.n_players()).filter(|&j| j != i) {
                for a in 0..self.dims[i] {
                    for b in 0..self.dims[j] {
                        g[(offsets[i] + a, offsets[j] + b)] = r[(a, col + b)];
                    }
                }
                col += self.dims[j];
            }
        }
        Ok(g)
    }

    pub fn offsets(&self) -> Vec<usize> {
        self.dims
            .iter()
            .scan(0, |acc, &n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect()
    }

    pub fn zero_profile(&self) -> Vec<Vec<i64>> {
        self.dims.iter().map(|&n| vec![0; n]).collect()
    }
}

pub fn to_real(profile: &[Vec<i64>]) -> Vec<Vec<f64>> {
    profile.iter().map(|x| iqp::to_f64(x)).collect()
}

/// Per-player mean strategy of a mixed profile.
pub fn mean_profile(strategies: &[Vec<Vec<i64>>], probabilities: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if strategies.len() != probabilities.len() {
        return Err(Error::dims("strategy and probability lists differ in player count"));
    }
    strategies
        .iter()
        .zip(probabilities)
        .map(|(s, p)| {
            if s.len() != p.len() || s.is_empty() {
                return Err(Error::dims("probabilities do not match strategies"));
            }
            let n = s[0].len();
            let mut mean = vec![0.0; n];
            for (x, &w) in s.iter().zip(p) {
                for (m, &v) in mean.iter_mut().zip(x) {
                    *m += w * v as f64;
                }
            }
            Ok(mean)
        })
        .collect()
}
