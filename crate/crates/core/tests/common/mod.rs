//! Test-side oracles, written independently of the library's numerics.
#![allow(dead_code)]

use std::io::Write;

use icqs::game::IcqsInstance;
use icqs::instgen::{gen_pricing, gen_random, PricingSpec, RandomSpec};
use icqs::rng::SplitMix64;
use icqs::Matrix;

/// Writes straight to the process stderr so the line survives output capture.
pub fn report(id: u32, name: &str, passed: bool, detail: &str) {
    let mark = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2} [{name}]: {mark} — {detail}");
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Random orthogonal matrix (columns) by modified Gram–Schmidt on Gaussian draws.
pub fn orthogonal(rng: &mut SplitMix64, n: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for c in &cols {
            let p = dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
        }
        let len = norm(&v);
        if len > 1e-6 {
            cols.push(v.into_iter().map(|x| x / len).collect());
        }
    }
    cols
}

/// Positive definite quadratic with known spectrum: `Q = O·diag(λ)·Oᵀ`.
pub struct KnownQuadratic {
    pub q: Matrix,
    pub d: Vec<f64>,
    pub eig: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl KnownQuadratic {
    /// `−Q⁻¹d` through the known eigenbasis.
    pub fn continuous_min(&self) -> Vec<f64> {
        let n = self.d.len();
        let mut u = vec![0.0; n];
        for (c, &l) in self.basis.iter().zip(&self.eig) {
            let w = -dot(c, &self.d) / l;
            u.iter_mut().zip(c).for_each(|(x, y)| *x += w * y);
        }
        u
    }

    pub fn lambda_max(&self) -> f64 {
        self.eig.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eig.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * self.q[(i, j)] * x[j];
            }
        }
        0.5 * quad + dot(&self.d, x)
    }
}

/// The 200-instance corpus: `n ∈ 1..=4`, condition number ≤ 100.
pub fn quadratic_corpus() -> Vec<KnownQuadratic> {
    let mut rng = SplitMix64::new(20_240_601);
    (0..200)
        .map(|t| {
            let n = 1 + t % 4;
            let scale = rng.uniform_in(0.5, 5.0);
            let cond = rng.uniform_in(1.0, 100.0);
            let mut eig: Vec<f64> = (0..n).map(|_| scale * rng.uniform_in(1.0, cond)).collect();
            eig[0] = scale;
            if n > 1 {
                eig[1] = scale * cond;
            }
            let basis = orthogonal(&mut rng, n);
            let mut q = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = (0..n).map(|k| basis[k][i] * eig[k] * basis[k][j]).sum();
                    q[(i, j)] = v;
                }
            }
            // exact symmetry
            for i in 0..n {
                for j in 0..i {
                    let m = 0.5 * (q[(i, j)] + q[(j, i)]);
                    q[(i, j)] = m;
                    q[(j, i)] = m;
                }
            }
            let d = (0..n).map(|_| rng.uniform_in(-20.0, 20.0)).collect();
            KnownQuadratic { q, d, eig, basis }
        })
        .collect()
}

/// Solves `A x = b` by Gaussian elimination with complete pivoting.
#[allow(clippy::needless_range_loop)]
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if a[i][j].abs() > best {
                    best = a[i][j].abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        assert!(best > 0.0, "singular system");
        a.swap(k, pi);
        b.swap(k, pi);
        for row in a.iter_mut() {
            row.swap(k, pj);
        }
        perm.swap(k, pj);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * y[j]).sum();
        y[k] = (b[k] - s) / a[k][k];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = y[k];
    }
    x
}

/// The unique stationary profile of the real relaxation: `Qᵢxᵢ + Σⱼ Cᵢⱼxⱼ + dᵢ = 0`.
pub fn stationary_profile(inst: &IcqsInstance) -> Vec<Vec<f64>> {
    let offsets = inst.offsets();
    let total = inst.total_dim();
    let mut a = vec![vec![0.0; total]; total];
    let mut b = vec![0.0; total];
    for (i, p) in inst.players().iter().enumerate() {
        let n = inst.dims()[i];
        for r in 0..n {
            for c in 0..n {
                a[offsets[i] + r][offsets[i] + c] = p.q[(r, c)];
            }
            b[offsets[i] + r] = -p.d[r];
        }
        for (&j, block) in &p.c {
            for r in 0..n {
                for c in 0..inst.dims()[j] {
                    a[offsets[i] + r][offsets[j] + c] = block[(r, c)];
                }
            }
        }
    }
    let z = gauss_solve(a, b);
    inst.dims().iter().zip(&offsets).map(|(&n, &o)| z[o..o + n].to_vec()).collect()
}

pub fn joint_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn joint_norm(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// The 50 positively adequate instances of the termination study: even ids
/// are pricing games, odd ids random games; players cycle through 2..=5.
pub fn termination_corpus() -> Vec<IcqsInstance> {
    (0..50u64)
        .map(|id| {
            let k = 2 + (id as usize / 2) % 4;
            if id % 2 == 0 {
                gen_pricing(&PricingSpec { n_players: k, seed: 500 + id, ..Default::default() }).unwrap()
            } else {
                let vars = if (id / 2) % 2 == 0 { 5 } else { 10 };
                gen_random(&RandomSpec { n_players: k, vars_per_player: vars, seed: 500 + id, ..Default::default() })
                    .unwrap()
            }
        })
        .collect()
}

/// Ten starting profiles with coordinates in `[−50, 50]`.
pub fn random_starts(inst: &IcqsInstance, seed: u64) -> Vec<Vec<Vec<i64>>> {
    let mut rng = SplitMix64::new(seed);
    (0..10).map(|_| inst.dims().iter().map(|&n| (0..n).map(|_| rng.int_in(-50, 50)).collect()).collect()).collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
