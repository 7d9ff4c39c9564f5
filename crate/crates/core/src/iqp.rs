//! Minimization of `½xᵀQx + dᵀx` over `ℤⁿ` for positive definite `Q`, and
//! the flatness-based proximity bounds between integer and continuous
//! minimizers.
//!
//! The minimizer is found by depth-first enumeration over the Cholesky
//! factor (closest-vector style), visiting each coordinate's candidates in
//! zig-zag order around its conditional center and pruning against the
//! incumbent. Co-optimal points are resolved to the lexicographically
//! smallest one so best responses are deterministic.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, cholesky_solve, dist2, dot, sym_eigen, Matrix};

pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;
pub const DEFAULT_ORACLE_BUDGET: u128 = 20_000_000;
/// Relative tolerance under which two objective values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqpConfig {
    pub node_budget: u64,
    /// Replaces the default `n^{5/2}` flatness constant when set.
    pub flatness_override: Option<f64>,
}

impl Default for IqpConfig {
    fn default() -> Self {
        IqpConfig { node_budget: DEFAULT_NODE_BUDGET, flatness_override: None }
    }
}

impl IqpConfig {
    pub fn flatness(&self, n: usize) -> f64 {
        self.flatness_override.unwrap_or_else(|| flatness_constant(n))
    }
}

/// A positive definite quadratic form with its Cholesky factor.
#[derive(Debug)]
pub struct QuadForm {
    q: Matrix,
    chol: Matrix,
}

impl QuadForm {
    pub fn new(q: Matrix) -> Result<Self> {
        let chol = cholesky(&q)?;
        Ok(QuadForm { q, chol })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        cholesky_solve(&self.chol, b)
    }
}

/// `½xᵀQx + dᵀx`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    form: Arc<QuadForm>,
    d: Vec<f64>,
}

impl Quadratic {
    pub fn new(q: Matrix, d: Vec<f64>) -> Result<Self> {
        let form = Arc::new(QuadForm::new(q)?);
        Self::from_form(form, d)
    }

    pub fn from_form(form: Arc<QuadForm>, d: Vec<f64>) -> Result<Self> {
        if d.len() != form.dim() {
            return Err(Error::dims(format!(
                "linear term has length {}, matrix is {}x{}",
                d.len(),
                form.dim(),
                form.dim()
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite linear term".into()));
        }
        Ok(Quadratic { form, d })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn q(&self) -> &Matrix {
        &self.form.q
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn form(&self) -> &Arc<QuadForm> {
        &self.form
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.form.q.mul_vec(x).expect("dimension checked at construction");
        0.5 * dot(x, &qx) + dot(&self.d, x)
    }

    pub fn objective_int(&self, x: &[i64]) -> f64 {
        self.objective(&to_f64(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.form.q.mul_vec(x).expect("dimension checked at construction");
        for (gi, di) in g.iter_mut().zip(&self.d) {
            *gi += di;
        }
        g
    }
}

pub fn to_f64(x: &[i64]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

/// `u = −Q⁻¹d`.
pub fn continuous_min(q: &Quadratic) -> Result<Vec<f64>> {
    let mut u = q.form.solve(&q.d)?;
    u.iter_mut().for_each(|v| *v = -*v);
    Ok(u)
}

/// Default flatness constant `n^{5/2}`.
pub fn flatness_constant(n: usize) -> f64 {
    (n as f64).powf(2.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxBound {
    pub prox_value: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub flatness: f64,
    pub obj_gap: f64,
}

impl ProxBound {
    pub fn from_eigen(lambda_max: f64, lambda_min: f64, flatness: f64) -> Self {
        ProxBound {
            prox_value: flatness / 4.0 * (lambda_max / lambda_min).sqrt(),
            lambda_max,
            lambda_min,
            flatness,
            obj_gap: lambda_max * flatness * flatness / 32.0,
        }
    }
}

pub fn prox_bound(q: &Matrix, cfg: &IqpConfig) -> Result<ProxBound> {
    let eig = sym_eigen(q)?;
    let (lmax, lmin) = (eig.lambda_max(), eig.lambda_min());
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite { index: q.rows() - 1, pivot: lmin });
    }
    Ok(ProxBound::from_eigen(lmax, lmin, cfg.flatness(q.rows())))
}

/// Proximity for diagonal `Q`, where integer minimization separates into
/// per-coordinate rounding and the worst case is the cube center: `√n/2`.
pub fn exact_prox(q: &Matrix) -> Option<f64> {
    q.is_diagonal().then(|| (q.rows() as f64).sqrt() / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegerMin {
    pub point: Vec<i64>,
    pub value: f64,
    /// Enumeration nodes (or box points) visited.
    pub nodes: u64,
}

/// How an integer minimizer sits relative to the proximity bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityCheck {
    pub distance: f64,
    pub objective_gap: f64,
    pub within_distance_bound: bool,
    pub within_gap_bound: bool,
}

pub fn proximity_check(q: &Quadratic, min: &IntegerMin, bound: &ProxBound) -> Result<ProximityCheck> {
    let u = continuous_min(q)?;
    let distance = dist2(&to_f64(&min.point), &u);
    let objective_gap = min.value - q.objective(&u);
    let slack = 1e-12 * (1.0 + objective_gap.abs());
    Ok(ProximityCheck {
        distance,
        objective_gap,
        within_distance_bound: distance <= bound.prox_value + 1e-12,
        within_gap_bound: objective_gap <= bound.obj_gap + slack,
    })
}

fn round_vec(u: &[f64]) -> Vec<i64> {
    u.iter().map(|v| v.round() as i64).collect()
}

struct Enumerator<'a> {
    n: usize,
    /// `r_ii²` from `Q = RᵀR`.
    diag: Vec<f64>,
    /// `mu[(i, j)] = r_ij / r_ii` for `j > i`.
    mu: &'a Matrix,
    center: Vec<f64>,
    tol: f64,
    budget: u64,
    nodes: u64,
    current: Vec<i64>,
    best: Vec<i64>,
    best_value: f64,
}

impl Enumerator<'_> {
    fn visit(&mut self, level: usize, partial: f64) -> Result<()> {
        // conditional center of this coordinate given the ones already fixed
        let mut c = self.center[level];
        for j in level + 1..self.n {
            c -= self.mu[(level, j)] * (self.current[j] as f64 - self.center[j]);
        }
        let base = c.round();
        let side = if c >= base { 1.0 } else { -1.0 };
        // offsets 0, +s, -s, +2s, -2s, ... have nondecreasing |y - c|
        let mut k = 0u64;
        loop {
            let offset = if k == 0 {
                0.0
            } else {
                let mag = k.div_ceil(2) as f64;
                if k % 2 == 1 { side * mag } else { -side * mag }
            };
            let y = base + offset;
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::EnumerationBudgetExceeded { budget: self.budget });
            }
            let next = partial + self.diag[level] * (y - c) * (y - c);
            if next > self.best_value + self.tol {
                break;
            }
            self.current[level] = y as i64;
            if level == 0 {
                self.offer(next);
            } else {
                self.visit(level - 1, next)?;
            }
            k += 1;
        }
        Ok(())
    }

    fn offer(&mut self, value: f64) {
        if value < self.best_value - self.tol {
            self.best.clone_from(&self.current);
            self.best_value = value;
        } else if value <= self.best_value + self.tol && self.current < self.best {
            self.best.clone_from(&self.current);
            self.best_value = self.best_value.min(value);
        }
    }
}

/// Global integer minimizer of `q`, ties broken lexicographically.
pub fn integer_min(q: &Quadratic, cfg: &IqpConfig) -> Result<IntegerMin> {
    let n = q.dim();
    if n == 0 {
        return Ok(IntegerMin { point: Vec::new(), value: 0.0, nodes: 0 });
    }
    // shift to the rounded continuous minimizer and refine the residual
    // center there, so large iterates keep their fractional accuracy
    let anchor = round_vec(&continuous_min(q)?);
    let anchor_f = to_f64(&anchor);
    let mut shifted_d = q.form.q.mul_vec(&anchor_f)?;
    for (s, d) in shifted_d.iter_mut().zip(&q.d) {
        *s += d;
    }
    let mut center = q.form.solve(&shifted_d)?;
    center.iter_mut().for_each(|v| *v = -*v);

    // Q = RᵀR with R = Lᵀ upper triangular
    let l = &q.form.chol;
    let diag: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let mut mu = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            mu[(i, j)] = l[(j, i)] / l[(i, i)];
        }
    }

    // incumbent: the anchor itself (offset zero)
    let zero = vec![0i64; n];
    let start_value = quad_dist(&diag, &mu, &center, &zero);
    let mut e = Enumerator {
        n,
        diag,
        mu: &mu,
        center,
        tol: TIE_TOLERANCE * (1.0 + start_value),
        budget: cfg.node_budget,
        nodes: 0,
        current: zero.clone(),
        best: zero,
        best_value: start_value,
    };
    e.visit(n - 1, 0.0)?;

    let point: Vec<i64> = anchor.iter().zip(&e.best).map(|(a, o)| a + o).collect();
    let value = q.objective_int(&point);
    Ok(IntegerMin { point, value, nodes: e.nodes })
}

/// `(y - c)ᵀ Q (y - c)` through the triangular factor.
fn quad_dist(diag: &[f64], mu: &Matrix, center: &[f64], y: &[i64]) -> f64 {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut t = y[i] as f64 - center[i];
            for j in i + 1..n {
                t += mu[(i, j)] * (y[j] as f64 - center[j]);
            }
            diag[i] * t * t
        })
        .sum()
}

/// Exhaustive minimum over the box of half-width `⌈radius⌉` around the
/// rounded continuous minimizer. Objective values are evaluated directly.
pub fn brute_force_min(q: &Quadratic, radius: f64, budget: u128) -> Result<IntegerMin> {
    let n = q.dim();
    let r = radius.max(0.0).ceil() as i64;
    let side = (2 * r + 1) as u128;
    let points = (0..n).try_fold(1u128, |acc, _| acc.checked_mul(side)).unwrap_or(u128::MAX);
    if points > budget {
        return Err(Error::OracleBudgetExceeded { points, budget });
    }
    let anchor = round_vec(&continuous_min(q)?);
    let mut offset = vec![-r; n];
    let mut best: Option<(f64, Vec<i64>)> = None;
    let mut visited = 0u64;
    loop {
        let x: Vec<i64> = anchor.iter().zip(&offset).map(|(a, o)| a + o).collect();
        let v = q.objective_int(&x);
        visited += 1;
        let better = match &best {
            None => true,
            Some((bv, bx)) => {
                let tol = TIE_TOLERANCE * (1.0 + bv.abs());
                v < bv - tol || (v <= bv + tol && x < *bx)
            }
        };
        if better {
            best = Some((v, x));
        }
        // odometer increment
        let mut i = n;
        loop {
            if i == 0 {
                let (value, point) = best.expect("box has at least one point");
                return Ok(IntegerMin { point, value, nodes: visited });
            }
            i -= 1;
            if offset[i] < r {
                offset[i] += 1;
                break;
            }
            offset[i] = -r;
        }
        if n == 0 {
            unreachable!();
        }
    }
}

/// Radius that provably contains every integer minimizer when used with
/// [`brute_force_min`]: the rounded minimizer bounds the sublevel
/// ellipsoid, whose axis-aligned extent is `√(c·(Q⁻¹)_ii)`.
pub fn safe_box_radius(q: &Quadratic) -> Result<f64> {
    let n = q.dim();
    let u = continuous_min(q)?;
    let r0: Vec<f64> = u.iter().map(|v| v.round() - v).collect();
    let c = dot(&r0, &q.form.q.mul_vec(&r0)?);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let qinv_ii = q.form.solve(&e)?[i];
        worst = worst.max((c * qinv_ii).sqrt());
    }
    Ok(worst + 0.5)
}

pub fn gradient_norm(q: &Quadratic, x: &[f64]) -> f64 {
    linalg::norm2(&q.gradient(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(rows: &[&[f64]], d: &[f64]) -> Quadratic {
        let q = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        Quadratic::new(q, d.to_vec()).unwrap()
    }

    #[test]
    fn continuous_min_examples() {
        assert!((continuous_min(&quad(&[&[2.0]], &[-0.9])).unwrap()[0] - 0.45).abs() < 1e-15);
        assert_eq!(continuous_min(&quad(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0])).unwrap(), vec![0.0, 0.0]);
        let u = continuous_min(&quad(&[&[2.0, 1.0], &[1.0, 2.0]], &[-3.0, -3.0])).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flatness_examples() {
        assert_eq!(flatness_constant(1), 1.0);
        assert_eq!(flatness_constant(4), 32.0);
        assert!((flatness_constant(9) - 243.0).abs() < 1e-12);
    }

    #[test]
    fn prox_bound_examples() {
        let cfg = IqpConfig::default();
        let b = prox_bound(&Matrix::identity(4), &cfg).unwrap();
        assert!((b.prox_value - 8.0).abs() < 1e-12);
        let b = prox_bound(&Matrix::identity(1), &cfg).unwrap();
        assert!((b.prox_value - 0.25).abs() < 1e-15);
        assert!((b.obj_gap - 1.0 / 32.0).abs() < 1e-15);
        let b = prox_bound(&Matrix::from_diag(&[4.0, 1.0]), &cfg).unwrap();
        assert!((b.prox_value - 2f64.powf(2.5) / 4.0 * 2.0).abs() < 1e-12);
        assert!((b.prox_value - 2.828427).abs() < 1e-6);
    }

    #[test]
    fn flatness_override_is_used() {
        let cfg = IqpConfig { flatness_override: Some(2.0), ..Default::default() };
        let b = prox_bound(&Matrix::identity(3), &cfg).unwrap();
        assert_eq!(b.flatness, 2.0);
        assert!((b.prox_value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_prox_only_for_diagonal() {
        assert_eq!(exact_prox(&Matrix::from_diag(&[2.0, 3.0, 1.0, 5.0])), Some(1.0));
        assert_eq!(exact_prox(&Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()), None);
    }

    #[test]
    fn integer_min_examples() {
        let cfg = IqpConfig::default();
        let m = integer_min(&quad(&[&[2.0]], &[-0.9]), &cfg).unwrap();
        assert_eq!(m.point, vec![0]);
        assert_eq!(m.value, 0.0);
        let m = integer_min(&quad(&[&[2.0]], &[-20.0]), &cfg).unwrap();
        assert_eq!(m.point, vec![10]);
        let m = integer_min(&quad(&[&[1.0, 0.0], &[0.0, 1.0]], &[-0.5, -0.5]), &cfg).unwrap();
        assert_eq!(m.point, vec![0, 0]);
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn brute_force_examples() {
        let m = brute_force_min(&quad(&[&[2.0]], &[-0.9]), 2.0, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_eq!((m.point, m.value), (vec![0], 0.0));
        let m = brute_force_min(&quad(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]), 1.0, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_eq!((m.point, m.value), (vec![0, 0], 0.0));
    }

    #[test]
    fn oracle_budget_is_enforced() {
        let q = Quadratic::new(Matrix::identity(4), vec![0.0; 4]).unwrap();
        let err = brute_force_min(&q, 10.0, 1000).unwrap_err();
        assert_eq!(err, Error::OracleBudgetExceeded { points: 21u128.pow(4), budget: 1000 });
    }

    #[test]
    fn node_budget_is_enforced() {
        let q = Quadratic::new(Matrix::identity(6), vec![-0.5; 6]).unwrap();
        let cfg = IqpConfig { node_budget: 10, ..Default::default() };
        assert_eq!(integer_min(&q, &cfg), Err(Error::EnumerationBudgetExceeded { budget: 10 }));
    }

    #[test]
    fn ill_conditioned_coupled_case() {
        // strongly correlated coordinates: rounding the continuous minimizer is wrong
        let q = quad(&[&[1.0, 0.99], &[0.99, 1.0]], &[-0.3, 0.8]);
        let fast = integer_min(&q, &IqpConfig::default()).unwrap();
        let slow = brute_force_min(&q, safe_box_radius(&q).unwrap(), DEFAULT_ORACLE_BUDGET).unwrap();
        assert_eq!(fast.point, slow.point);
    }

    #[test]
    fn huge_center_keeps_precision() {
        let q = quad(&[&[2.0]], &[-2.0 * 1.0e12 - 0.9]);
        let m = integer_min(&q, &IqpConfig::default()).unwrap();
        assert_eq!(m.point, vec![1_000_000_000_000]);
    }

    #[test]
    fn one_dimensional_prox_constant_is_exceeded() {
        // Q = 1, d = -1/2: the rounding distance 1/2 exceeds the flatness value 1/4
        let q = quad(&[&[1.0]], &[-0.5]);
        let m = integer_min(&q, &IqpConfig::default()).unwrap();
        let b = prox_bound(q.q(), &IqpConfig::default()).unwrap();
        let check = proximity_check(&q, &m, &b).unwrap();
        assert!((check.distance - 0.5).abs() < 1e-15);
        assert!(!check.within_distance_bound);
        assert!(!check.within_gap_bound);
    }
}
