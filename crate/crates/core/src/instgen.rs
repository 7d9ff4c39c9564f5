//! Instance generators: the retail pricing family, the random integer
//! family, a negatively adequate family for divergence experiments, and the
//! hand-written example games.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::game::{Adequacy, IcqsInstance, PlayerProblem};
use crate::linalg::{self, Matrix};
use crate::rng::SplitMix64;

pub const REJECTION_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Two scalar players whose best responses double each round.
    Example1,
    /// Two scalar players that cycle through four profiles.
    Cycling,
    /// Two-dimensional game whose restricted equilibrium fails badly; `M` even.
    Counterexample(i64),
}

impl Builtin {
    pub fn parse(name: &str, m: Option<i64>) -> Result<Self> {
        match name {
            "example1" => Ok(Builtin::Example1),
            "cycling" => Ok(Builtin::Cycling),
            "counterexample" => Ok(Builtin::Counterexample(m.unwrap_or(10))),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Builtin::Example1 => "example1".into(),
            Builtin::Cycling => "cycling".into(),
            Builtin::Counterexample(m) => format!("counterexample(M={m})"),
        }
    }
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_diag(&[v])
}

fn mat(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).expect("literal matrix")
}

pub fn builtin(which: Builtin) -> Result<IcqsInstance> {
    let two = |q: Matrix, c: Matrix, d: Vec<f64>, opp: usize| PlayerProblem::new(q, BTreeMap::from([(opp, c)]), d);
    let players = match which {
        Builtin::Example1 => vec![
            two(scalar(2.0), scalar(-4.0), vec![0.0], 1),
            two(scalar(2.0), scalar(-4.0), vec![0.0], 0),
        ],
        Builtin::Cycling => vec![
            two(scalar(2.0), scalar(-0.2), vec![-0.9], 1),
            two(scalar(2.0), scalar(0.2), vec![-1.1], 0),
        ],
        Builtin::Counterexample(m) => {
            if m < 2 || m % 2 != 0 {
                return Err(Error::InvalidM(m));
            }
            let mf = m as f64;
            vec![
                two(Matrix::identity(2), Matrix::identity(2).scaled(-1.0), vec![0.0, 0.0], 1),
                two(
                    Matrix::identity(2),
                    mat(&[&[1.0 / mf, -(mf - 1.0)], &[-1.0 / mf, 0.0]]),
                    vec![-1.0, 0.0],
                    0,
                ),
            ]
        }
    };
    IcqsInstance::with_meta(players, json!({ "generator": "builtin", "name": which.name() }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingSpec {
    pub n_players: usize,
    pub products_min: usize,
    pub products_max: usize,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub c_range: (f64, f64),
    /// Cross elasticities are drawn from `[-s, s]`, `s = cross_scale · min b / total products`.
    pub cross_scale: f64,
    pub seed: u64,
}

impl Default for PricingSpec {
    fn default() -> Self {
        PricingSpec {
            n_players: 2,
            products_min: 3,
            products_max: 6,
            a_range: (20.0, 100.0),
            b_range: (1.0, 4.0),
            c_range: (1.0, 10.0),
            cross_scale: 0.3,
            seed: 0,
        }
    }
}

impl PricingSpec {
    fn validate(&self) -> Result<()> {
        let ranges = [self.a_range, self.b_range, self.c_range];
        if ranges.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
            return Err(Error::InvalidInstance("pricing ranges must be finite and ordered".into()));
        }
        if self.b_range.0 <= 0.0 {
            return Err(Error::InvalidInstance("price sensitivities b must be positive".into()));
        }
        if self.n_players < 2 || self.products_min == 0 || self.products_min > self.products_max {
            return Err(Error::InvalidInstance("invalid pricing player/product counts".into()));
        }
        Ok(())
    }
}

/// Retailer `i` sets integer prices for its products `Jᵢ` and minimizes
/// `−Σ_{j∈Jᵢ}(p_j − c_j)q_j` with `q_j = a_j − b_j p_j − Σ_{j'≠j} d_{jj'} p_{j'}`.
/// Terms that depend only on opponents' prices are dropped. Candidates that
/// are not positively adequate are discarded.
pub fn gen_pricing(spec: &PricingSpec) -> Result<IcqsInstance> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    for attempt in 0..REJECTION_BUDGET {
        let inst = draw_pricing(spec, &mut rng, attempt)?;
        if inst.classify()?.classification == Adequacy::PositivelyAdequate {
            return Ok(inst);
        }
    }
    Err(Error::RejectionBudgetExceeded { rejections: REJECTION_BUDGET })
}

fn draw_pricing(spec: &PricingSpec, rng: &mut SplitMix64, attempt: usize) -> Result<IcqsInstance> {
    let k = spec.n_players;
    let counts: Vec<usize> = (0..k)
        .map(|_| rng.int_in(spec.products_min as i64, spec.products_max as i64) as usize)
        .collect();
    let total: usize = counts.iter().sum();
    let owner: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
    let local: Vec<usize> = counts.iter().flat_map(|&c| 0..c).collect();

    let a: Vec<f64> = (0..total).map(|_| rng.uniform_in(spec.a_range.0, spec.a_range.1)).collect();
    let b: Vec<f64> = (0..total).map(|_| rng.uniform_in(spec.b_range.0, spec.b_range.1)).collect();
    let c: Vec<f64> = (0..total).map(|_| rng.uniform_in(spec.c_range.0, spec.c_range.1)).collect();
    let b_min = b.iter().copied().fold(f64::INFINITY, f64::min);
    let s = spec.cross_scale * b_min / total as f64;
    let mut cross = Matrix::zeros(total, total);
    for j in 0..total {
        for jp in 0..total {
            if j != jp {
                cross[(j, jp)] = rng.uniform_in(-s, s);
            }
        }
    }

    let mut players = Vec::with_capacity(k);
    for i in 0..k {
        let own: Vec<usize> = (0..total).filter(|&j| owner[j] == i).collect();
        let n = own.len();
        let mut q = Matrix::zeros(n, n);
        let mut d = vec![0.0; n];
        for (ra, &j) in own.iter().enumerate() {
            q[(ra, ra)] = 2.0 * b[j];
            d[ra] = -a[j] - c[j] * b[j];
            for (rb, &jp) in own.iter().enumerate() {
                if jp != j {
                    q[(ra, rb)] = cross[(j, jp)] + cross[(jp, j)];
                    // −c_{j'} d_{j'j} p_j from the cost term of product j'
                    d[ra] -= c[jp] * cross[(jp, j)];
                }
            }
        }
        let mut blocks = BTreeMap::new();
        for m in (0..k).filter(|&m| m != i) {
            let mut block = Matrix::zeros(n, counts[m]);
            for (ra, &j) in own.iter().enumerate() {
                for jp in (0..total).filter(|&jp| owner[jp] == m) {
                    block[(ra, local[jp])] = cross[(j, jp)];
                }
            }
            blocks.insert(m, block);
        }
        players.push(PlayerProblem::new(q, blocks, d));
    }
    let meta = json!({ "generator": "pricing", "spec": spec, "seed": spec.seed, "attempt": attempt });
    IcqsInstance::with_meta(players, meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomSpec {
    pub n_players: usize,
    pub vars_per_player: usize,
    pub p_range: (i64, i64),
    pub c_range: (i64, i64),
    pub d_range: (i64, i64),
    pub seed: u64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            n_players: 2,
            vars_per_player: 5,
            p_range: (-3, 3),
            c_range: (-5, 5),
            d_range: (-10, 10),
            seed: 0,
        }
    }
}

/// Per player: integer `P`, `Q̃ = PPᵀ`, integer `C`, `σ̃ = σ_max(Q̃⁻¹C)`,
/// `Q = ⌈σ̃⌉Q̃ + I` (with `⌈σ̃⌉` taken as at least 1), integer `d`. Singular
/// `PPᵀ` draws and instances that fail the adequacy check are redrawn.
pub fn gen_random(spec: &RandomSpec) -> Result<IcqsInstance> {
    let k = spec.n_players;
    let n = spec.vars_per_player;
    if k < 2 || n == 0 {
        return Err(Error::InvalidInstance("random family needs >= 2 players and >= 1 variable".into()));
    }
    for (lo, hi) in [spec.p_range, spec.c_range, spec.d_range] {
        if lo > hi {
            return Err(Error::InvalidInstance("random entry ranges must be ordered".into()));
        }
    }
    let mut rng = SplitMix64::new(spec.seed);
    let mut rejections = 0;
    while rejections < REJECTION_BUDGET {
        let mut players = Vec::with_capacity(k);
        for i in 0..k {
            let player = loop {
                match draw_random_player(spec, i, &mut rng)? {
                    Some(p) => break p,
                    None => {
                        rejections += 1;
                        if rejections >= REJECTION_BUDGET {
                            return Err(Error::RejectionBudgetExceeded { rejections });
                        }
                    }
                }
            };
            players.push(player);
        }
        let meta = json!({ "generator": "random", "spec": spec, "seed": spec.seed, "rejections": rejections });
        let inst = IcqsInstance::with_meta(players, meta)?;
        if inst.classify()?.classification == Adequacy::PositivelyAdequate {
            return Ok(inst);
        }
        rejections += 1;
    }
    Err(Error::RejectionBudgetExceeded { rejections })
}

fn int_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, (lo, hi): (i64, i64)) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.int_in(lo, hi) as f64).collect();
    Matrix::new(rows, cols, data).expect("finite entries")
}

fn draw_random_player(spec: &RandomSpec, i: usize, rng: &mut SplitMix64) -> Result<Option<PlayerProblem>> {
    let n = spec.vars_per_player;
    let k = spec.n_players;
    let p = int_matrix(rng, n, n, spec.p_range);
    let c_full = int_matrix(rng, n, n * (k - 1), spec.c_range);
    let d: Vec<f64> = (0..n).map(|_| rng.int_in(spec.d_range.0, spec.d_range.1) as f64).collect();
    let q_tilde = p.matmul(&p.transpose())?;
    let r_tilde = match linalg::solve_spd_matrix(&q_tilde, &c_full) {
        Ok(r) => r,
        Err(Error::NotPositiveDefinite { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let sigma = linalg::singular_values(&r_tilde)?.first().copied().unwrap_or(0.0);
    let scale = sigma.ceil().max(1.0);
    let q = q_tilde.scaled(scale).add(&Matrix::identity(n))?;

    let mut blocks = BTreeMap::new();
    for (slot, m) in (0..k).filter(|&m| m != i).enumerate() {
        let mut block = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                block[(a, b)] = c_full[(a, slot * n + b)];
            }
        }
        blocks.insert(m, block);
    }
    Ok(Some(PlayerProblem::new(q, blocks, d)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegativeSpec {
    pub vars_per_player: usize,
    /// Singular values of each interaction matrix are drawn from this range.
    pub sigma_range: (f64, f64),
    pub p_range: (i64, i64),
    pub d_range: (i64, i64),
    pub seed: u64,
}

impl Default for NegativeSpec {
    fn default() -> Self {
        NegativeSpec { vars_per_player: 3, sigma_range: (1.2, 1.6), p_range: (-2, 2), d_range: (-5, 5), seed: 0 }
    }
}

/// Two-player games with `Rᵢ = Oᵢ·diag(sᵢ)` for orthogonal `Oᵢ` and every
/// `sᵢₖ > 1`, realized as `Cᵢ = QᵢRᵢ` with `Qᵢ = PPᵀ + I`.
pub fn gen_negative(spec: &NegativeSpec) -> Result<IcqsInstance> {
    let n = spec.vars_per_player;
    if n == 0 || spec.sigma_range.0 <= 1.0 || spec.sigma_range.0 > spec.sigma_range.1 {
        return Err(Error::InvalidInstance("negative family needs n >= 1 and sigma range above 1".into()));
    }
    let mut rng = SplitMix64::new(spec.seed);
    for attempt in 0..REJECTION_BUDGET {
        let mut players = Vec::with_capacity(2);
        for i in 0..2 {
            let p = int_matrix(&mut rng, n, n, spec.p_range);
            let q = p.matmul(&p.transpose())?.add(&Matrix::identity(n))?;
            let o = random_orthogonal(&mut rng, n);
            let s: Vec<f64> = (0..n).map(|_| rng.uniform_in(spec.sigma_range.0, spec.sigma_range.1)).collect();
            let r = o.matmul(&Matrix::from_diag(&s))?;
            let c = q.matmul(&r)?;
            let d: Vec<f64> = (0..n).map(|_| rng.int_in(spec.d_range.0, spec.d_range.1) as f64).collect();
            players.push(PlayerProblem::new(q, BTreeMap::from([(1 - i, c)]), d));
        }
        let meta = json!({ "generator": "negative", "spec": spec, "seed": spec.seed, "attempt": attempt });
        let inst = IcqsInstance::with_meta(players, meta)?;
        if inst.classify()?.classification == Adequacy::NegativelyAdequate {
            return Ok(inst);
        }
    }
    Err(Error::RejectionBudgetExceeded { rejections: REJECTION_BUDGET })
}

/// Gram–Schmidt on a Gaussian matrix.
fn random_orthogonal(rng: &mut SplitMix64, n: usize) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            for u in &cols {
                let proj = linalg::dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = linalg::norm2(&v);
            if norm < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        if ok {
            let mut m = Matrix::zeros(n, n);
            for (j, col) in cols.iter().enumerate() {
                for (i, &v) in col.iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            return m;
        }
    }
}
