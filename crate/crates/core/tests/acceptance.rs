//! Acceptance criteria, one test per criterion. Each test writes a single
//! PASS/FAIL line to stderr before asserting.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use icqs::bounds::BoundVariant;
use icqs::dynamics::{
    contraction_ratios, divergence_radius, run_br, run_continuous, stationarity_residual, CycleSets, DynamicsConfig,
    Outcome,
};
use icqs::finite::{mne_two_player, pne_search, restrict, verify_delta};
use icqs::game::{mean_profile, to_real, Adequacy, IcqsInstance};
use icqs::instgen::{builtin, gen_negative, Builtin, NegativeSpec};
use icqs::iqp::{self, IqpConfig, Quadratic};
use icqs::linalg::{self, Matrix};
use icqs::pipeline::{self, SolveConfig, SolveReport};
use icqs::rng::SplitMix64;

#[test]
fn criterion_01_example1_divergence() {
    let inst = builtin(Builtin::Example1).unwrap();
    let clock = Instant::now();
    let trace = run_br(&inst, &[vec![5], vec![5]], &DynamicsConfig::default()).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let doubling = trace.profiles.len() == 9
        && trace.profiles.iter().enumerate().all(|(i, p)| {
            let v = 5i64 * 2i64.pow(i as u32);
            p == &vec![vec![v], vec![v]]
        });
    let certified = matches!(trace.outcome, Outcome::DivergenceCertified { .. });
    let ok = doubling && certified && secs < 0.1;
    report(1, "example1 divergence", ok, &format!("{} steps, {:?}, {secs:.4}s", trace.iterations(), trace.outcome));
    assert!(ok);
}

#[test]
fn criterion_02_cycling_example() {
    let clock = Instant::now();
    let inst = builtin(Builtin::Cycling).unwrap();
    let trace = run_br(&inst, &[vec![0], vec![0]], &DynamicsConfig::default()).unwrap();
    let expected: Vec<Vec<Vec<i64>>> =
        [(0, 0), (0, 1), (1, 1), (1, 0), (0, 0)].iter().map(|&(x, y)| vec![vec![x], vec![y]]).collect();
    let cycle_ok = trace.profiles == expected && trace.outcome == Outcome::CycleFound { start: 0, repeat: 4 };

    let fg = restrict(&inst, &CycleSets::from_trace(&trace).unwrap()).unwrap();
    let table = [[(0.0, 0.0), (0.0, -0.1)], [(0.1, 0.0), (-0.1, 0.1)]];
    let table_ok = (0..2).all(|i| {
        (0..2).all(|j| {
            (fg.cost(&[i, j], 0) - table[i][j].0).abs() < 1e-12 && (fg.cost(&[i, j], 1) - table[i][j].1).abs() < 1e-12
        })
    });
    let mne = mne_two_player(&fg).unwrap();
    let half = mne.probabilities.iter().all(|p| p.len() == 2 && p.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    let delta = verify_delta(&inst, &fg, &mne, &IqpConfig::default()).unwrap();
    let gains_ok = delta.players.iter().all(|p| p.gain <= 1e-9);
    let secs = clock.elapsed().as_secs_f64();
    let ok = cycle_ok && table_ok && half && gains_ok && secs < 0.1;
    report(
        2,
        "cycling example",
        ok,
        &format!(
            "cycle {cycle_ok}, table {table_ok}, uniform MNE {half}, max gain {:e}, {secs:.4}s",
            delta.max_gain()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_03_counterexample_family() {
    let mut ok = true;
    let mut details = Vec::new();
    for m in [10i64, 20, 40] {
        let inst = builtin(Builtin::Counterexample(m)).unwrap();
        let trace = run_br(&inst, &[vec![0, 1], vec![0, 1]], &DynamicsConfig::default()).unwrap();
        let sets = CycleSets::from_trace(&trace).unwrap();
        let expected = vec![vec![0, 1], vec![m, 0]];
        let sets_ok = sets.sets == vec![expected.clone(), expected];
        let fg = restrict(&inst, &sets).unwrap();
        let no_pne = pne_search(&fg).is_empty();
        let mne = mne_two_player(&fg).unwrap();
        let half = mne.probabilities.iter().all(|p| p.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let costs_ok = (0..2).all(|i| fg.expected_cost(i, &mne.probabilities).abs() <= 1e-9);

        // deviation value from exhaustive search around the mean response
        let mean = mean_profile(&fg.strategies, &mne.probabilities).unwrap();
        let q = inst.response_problem(0, &mean).unwrap();
        let oracle = iqp::brute_force_min(&q, iqp::safe_box_radius(&q).unwrap(), iqp::DEFAULT_ORACLE_BUDGET).unwrap();
        let oracle_gain = fg.expected_cost(0, &mne.probabilities) - oracle.value;
        let delta = verify_delta(&inst, &fg, &mne, &IqpConfig::default()).unwrap();
        let target = (m * m) as f64 / 8.0;
        let gain_ok = oracle_gain >= target - 1e-9
            && delta.players[0].gain >= target - 1e-9
            && (delta.players[0].gain - oracle_gain).abs() <= 1e-9;
        let case = sets_ok && no_pne && half && costs_ok && gain_ok;
        ok &= case;
        details.push(format!("M={m}: gain {} (oracle {oracle_gain}) {}", delta.players[0].gain, if case { "ok" } else { "bad" }));
    }
    report(3, "counterexample family", ok, &details.join("; "));
    assert!(ok);
}

#[test]
fn criterion_04_iqp_oracle_equivalence() {
    let corpus = quadratic_corpus();
    let clock = Instant::now();
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for kq in &corpus {
        let q = Quadratic::new(kq.q.clone(), kq.d.clone()).unwrap();
        let fast = iqp::integer_min(&q, &IqpConfig::default()).unwrap();
        let slow = iqp::brute_force_min(&q, iqp::safe_box_radius(&q).unwrap(), iqp::DEFAULT_ORACLE_BUDGET).unwrap();
        let diff = (fast.value - slow.value).abs();
        worst = worst.max(diff);
        if diff > 1e-9 {
            mismatches += 1;
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let ok = mismatches == 0 && secs < 10.0;
    report(
        4,
        "IQP oracle equivalence",
        ok,
        &format!("{} instances, {mismatches} mismatches, worst |Δf| {worst:e}, {secs:.2}s", corpus.len()),
    );
    assert!(ok);
}

#[test]
fn criterion_05_proximity_invariants() {
    let corpus = quadratic_corpus();
    let mut dist_violations = [0usize; 5];
    let mut gap_violations = [0usize; 5];
    for kq in &corpus {
        let n = kq.d.len();
        let q = Quadratic::new(kq.q.clone(), kq.d.clone()).unwrap();
        let v = iqp::to_f64(&iqp::integer_min(&q, &IqpConfig::default()).unwrap().point);
        let u = kq.continuous_min();
        let flt = (n as f64).powf(2.5);
        let dist = norm(&v.iter().zip(&u).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dist_bound = flt / 4.0 * (kq.lambda_max() / kq.lambda_min()).sqrt();
        let gap = kq.objective(&v) - kq.objective(&u);
        let gap_bound = kq.lambda_max() * (n as f64).powi(5) / 32.0;
        if dist > dist_bound + 1e-12 {
            dist_violations[n] += 1;
        }
        if gap > gap_bound + 1e-12 {
            gap_violations[n] += 1;
        }
    }

    let mut identity_ok = true;
    for n in 1..=4usize {
        let q = Quadratic::new(Matrix::identity(n), vec![-0.5; n]).unwrap();
        let v = iqp::to_f64(&iqp::integer_min(&q, &IqpConfig::default()).unwrap().point);
        let dist = norm(&v.iter().map(|x| x - 0.5).collect::<Vec<_>>());
        identity_ok &= (dist - (n as f64).sqrt() / 2.0).abs() <= 1e-12;
    }

    let total_d: usize = dist_violations.iter().sum();
    let total_g: usize = gap_violations.iter().sum();
    let ok = total_d == 0 && total_g == 0 && identity_ok;
    report(
        5,
        "proximity invariants",
        ok,
        &format!(
            "distance-bound violations {total_d}/200 by n {:?}, gap-bound violations {total_g}/200 by n {:?}, identity case {identity_ok}",
            &dist_violations[1..],
            &gap_violations[1..]
        ),
    );
    assert!(ok);
}

struct TerminationRun {
    instance: usize,
    report: SolveReport,
}

fn termination_runs() -> &'static (Vec<IcqsInstance>, Vec<TerminationRun>) {
    static RUNS: OnceLock<(Vec<IcqsInstance>, Vec<TerminationRun>)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let corpus = termination_corpus();
        let mut runs = Vec::new();
        for (id, inst) in corpus.iter().enumerate() {
            assert_eq!(inst.classify().unwrap().classification, Adequacy::PositivelyAdequate);
            for start in random_starts(inst, 9000 + id as u64) {
                let report = pipeline::solve(inst, Some(&start), &SolveConfig::default()).unwrap();
                runs.push(TerminationRun { instance: id, report });
            }
        }
        (corpus, runs)
    })
}

#[test]
fn criterion_06_termination() {
    let (_, runs) = termination_runs();
    let terminated = runs.iter().filter(|r| r.report.outcome.terminated()).count();
    let max_k = runs.iter().map(|r| r.report.iterations).max().unwrap_or(0);
    let med = median(runs.iter().map(|r| r.report.t_br).collect());
    let ok = runs.len() == 500 && terminated == runs.len() && med < 1.0;
    report(
        6,
        "termination",
        ok,
        &format!("{terminated}/{} terminated, max k_BR {max_k}, median solve {med:.5}s", runs.len()),
    );
    assert!(ok);
}

#[test]
fn criterion_07_equilibrium_quality() {
    let (corpus, runs) = termination_runs();
    let mut small = 0;
    let mut unbounded = Vec::new();
    let mut worst: f64 = 0.0;
    for r in runs {
        let eq = r.report.equilibrium.as_ref().expect("terminated runs carry an equilibrium");
        let gain = eq.delta.max_gain();
        worst = worst.max(gain);
        if gain <= 1e-6 {
            small += 1;
        }
        // exact-prox variant; it falls back to the flatness value for non-diagonal Q
        let inst = &corpus[r.instance];
        let bounds = icqs::bounds::delta_a_priori(inst, &IqpConfig::default(), BoundVariant::ExactWhereKnown).unwrap();
        match bounds {
            Some(b) if eq.delta.players.iter().zip(&b).all(|(p, &d)| p.gain <= d) => {}
            _ => unbounded.push(r.instance),
        }
    }
    let frac = small as f64 / runs.len() as f64;
    let flagged = runs
        .iter()
        .filter(|r| r.report.guarantees.iter().any(|g| g.variant == BoundVariant::Flatness && g.l_bound_violated))
        .count();
    let ok = frac >= 0.95 && unbounded.is_empty();
    report(
        7,
        "equilibrium quality",
        ok,
        &format!(
            "{:.1}% of runs with gain ≤ 1e-6, worst gain {worst:e}, {} runs above the a-priori Δ, {flagged} runs flagged (flatness L bound exceeded)",
            100.0 * frac,
            unbounded.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_08_divergence() {
    let cfg = DynamicsConfig { max_iters: 50, divergence_confirm_steps: 0, ..Default::default() };
    let mut good = 0;
    let mut details = Vec::new();
    for seed in 0..20u64 {
        let spec = NegativeSpec { vars_per_player: 1 + (seed as usize % 3), seed: 700 + seed, ..Default::default() };
        let inst = gen_negative(&spec).unwrap();
        assert_eq!(inst.classify().unwrap().classification, Adequacy::NegativelyAdequate);
        let radius = divergence_radius(&inst, &IqpConfig::default()).unwrap().unwrap();
        let mut rng = SplitMix64::new(seed);
        let mut start: Vec<Vec<i64>> =
            inst.dims().iter().map(|&n| (0..n).map(|_| rng.int_in(-50, 50)).collect()).collect();
        while joint_norm(&to_real(&start)) <= radius {
            start.iter_mut().flatten().for_each(|v| *v = 2 * *v + 1);
        }
        let trace = run_br(&inst, &start, &cfg).unwrap();
        let increasing = trace.iterations() == 50 && trace.norms.windows(2).all(|w| w[1] > w[0]);
        if increasing {
            good += 1;
        } else {
            details.push(format!("seed {seed}: {:?} after {}", trace.outcome, trace.iterations()));
        }
    }
    let ok = good == 20;
    report(8, "divergence", ok, &format!("{good}/20 runs strictly increasing over 50 iterations {}", details.join("; ")));
    assert!(ok);
}

#[test]
fn criterion_09_continuous_mode() {
    let corpus = termination_corpus();
    let cfg = DynamicsConfig::default();
    let mut runs = 0;
    let mut fixed = 0;
    let mut stationary = 0;
    let mut contracting = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_residual: f64 = 0.0;
    let mut nonstationary = Vec::new();
    for (id, inst) in corpus.iter().enumerate() {
        let sigma = inst.classify().unwrap().max_sigma();
        let z_star = stationary_profile(inst);
        let oracle_residual = stationarity_residual(inst, &z_star).unwrap();
        let scale = 1.0 + joint_norm(&z_star);
        for start in random_starts(inst, 9000 + id as u64) {
            runs += 1;
            let trace = run_continuous(inst, &to_real(&start), &cfg).unwrap();
            if !matches!(trace.outcome, Outcome::FixedPoint { .. }) {
                continue;
            }
            fixed += 1;
            let residual = stationarity_residual(inst, trace.profiles.last().unwrap()).unwrap();
            worst_residual = worst_residual.max(residual);
            if residual <= 1e-8 {
                stationary += 1;
            } else if !nonstationary.iter().any(|(i, _)| *i == id) {
                nonstationary.push((id, oracle_residual));
            }
            let dists: Vec<f64> = trace.profiles.iter().map(|p| joint_dist(p, &z_star)).collect();
            let ratios: Vec<f64> = dists.windows(2).filter(|w| w[0] > 1e-6 * scale).map(|w| w[1] / w[0]).collect();
            let excess = ratios.iter().map(|r| r - sigma).fold(f64::NEG_INFINITY, f64::max);
            worst_excess = worst_excess.max(excess);
            if excess <= 1e-6 {
                contracting += 1;
            }
        }
    }
    // the library's own telemetry agrees with the oracle on one run
    let inst = &corpus[1];
    let trace = run_continuous(inst, &inst.zero_profile().iter().map(|x| vec![0.0; x.len()]).collect::<Vec<_>>(), &cfg)
        .unwrap();
    let sigma = inst.classify().unwrap().max_sigma();
    let telemetry_ok = contraction_ratios(&trace, 1e-4).iter().all(|&r| r <= sigma + 1e-3);

    let ex1 = builtin(Builtin::Example1).unwrap();
    let div = run_continuous(&ex1, &[vec![5.0], vec![5.0]], &cfg).unwrap();
    let diverges = matches!(div.outcome, Outcome::DivergenceCertified { .. }) && div.norms.windows(2).all(|w| w[1] > w[0]);

    let ok = fixed == runs && stationary == runs && contracting == runs && telemetry_ok && diverges;
    report(
        9,
        "continuous mode",
        ok,
        &format!(
            "{fixed}/{runs} fixed points, {stationary} stationary (worst residual {worst_residual:e}; residual of the exact stationary point on failing instances {}), {contracting} within σ_max+1e-6 (worst excess {worst_excess:e}), example1 diverges {diverges}",
            nonstationary.iter().map(|(i, r)| format!("#{i}: {r:e}")).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(ok);
}

fn random_matrix(rng: &mut SplitMix64, r: usize, c: usize) -> Matrix {
    let data = (0..r * c).map(|_| rng.normal()).collect();
    Matrix::new(r, c, data).unwrap()
}

#[test]
fn criterion_10_linear_algebra_invariants() {
    let mut rng = SplitMix64::new(4242);
    let mut diag_fail = 0;
    for _ in 0..100 {
        let m = rng.int_in(1, 5) as usize;
        let n = rng.int_in(1, 5) as usize;
        let a = random_matrix(&mut rng, m, n);
        let b = random_matrix(&mut rng, n, m);
        let mut expected = linalg::singular_values(&a).unwrap();
        expected.extend(linalg::singular_values(&b).unwrap());
        expected.sort_by(|x, y| y.total_cmp(x));
        let got = linalg::singular_values(&Matrix::block_diag(&[&a, &b])).unwrap();
        if got.len() != expected.len() || got.iter().zip(&expected).any(|(g, e)| (g - e).abs() > 1e-8) {
            diag_fail += 1;
        }
    }

    let mut bnd_fail = 0;
    for trial in 0..100 {
        let n = rng.int_in(1, 5) as usize;
        let raw = random_matrix(&mut rng, n, n);
        let sv = linalg::singular_values(&raw).unwrap();
        let (target, contract) = if trial % 2 == 0 {
            (rng.uniform_in(0.05, 0.99) / sv[0], true)
        } else {
            (rng.uniform_in(1.01, 3.0) / sv[n - 1], false)
        };
        let m = raw.scaled(target);
        let sv_m = linalg::singular_values(&m).unwrap();
        if (contract && sv_m[0] >= 1.0) || (!contract && sv_m[n - 1] <= 1.0) {
            bnd_fail += 1;
            continue;
        }
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mx = m.mul_vec(&x).unwrap();
            let ok = if contract { norm(&mx) < norm(&x) } else { norm(&mx) > norm(&x) };
            if !ok {
                bnd_fail += 1;
                break;
            }
        }
    }
    let ok = diag_fail == 0 && bnd_fail == 0;
    report(
        10,
        "linear-algebra invariants",
        ok,
        &format!("block-diagonal spectrum failures {diag_fail}/100, norm-bound failures {bnd_fail}/100"),
    );
    assert!(ok);
}
