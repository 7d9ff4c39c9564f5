//! Scripted reproductions of the built-in examples, each a list of named
//! pass/fail checks.

use serde::Serialize;

use crate::dynamics::{run_br, CycleSets, DynamicsConfig, Outcome};
use crate::error::Result;
use crate::finite::{mne_two_player, pne_search, restrict, verify_delta};
use crate::instgen::{builtin, Builtin};
use crate::iqp::{self, IqpConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.to_string(), passed, detail: detail.into() }
}

pub fn replicate(which: Builtin) -> Result<Vec<Check>> {
    match which {
        Builtin::Example1 => example1(),
        Builtin::Cycling => cycling(),
        Builtin::Counterexample(m) => counterexample(m),
    }
}

fn example1() -> Result<Vec<Check>> {
    let inst = builtin(Builtin::Example1)?;
    let trace = run_br(&inst, &[vec![5], vec![5]], &DynamicsConfig::default())?;
    let doubling = trace.profiles.len() == 9
        && trace.profiles.iter().enumerate().all(|(i, p)| {
            let v = 5i64 << i;
            p == &vec![vec![v], vec![v]]
        });
    Ok(vec![
        check("iterates double", doubling, format!("{} profiles", trace.profiles.len())),
        check(
            "divergence certified",
            matches!(trace.outcome, Outcome::DivergenceCertified { .. }),
            format!("{:?}", trace.outcome),
        ),
    ])
}

fn cycling() -> Result<Vec<Check>> {
    let inst = builtin(Builtin::Cycling)?;
    let trace = run_br(&inst, &[vec![0], vec![0]], &DynamicsConfig::default())?;
    let expected: Vec<Vec<Vec<i64>>> =
        [(0, 0), (0, 1), (1, 1), (1, 0), (0, 0)].iter().map(|&(x, y)| vec![vec![x], vec![y]]).collect();
    let mut checks = vec![check("period-4 cycle", trace.profiles == expected, format!("{:?}", trace.outcome))];
    let fg = restrict(&inst, &CycleSets::from_trace(&trace)?)?;
    let table = [[(0.0, 0.0), (0.0, -0.1)], [(0.1, 0.0), (-0.1, 0.1)]];
    let table_ok = (0..2).all(|i| {
        (0..2).all(|j| {
            (fg.cost(&[i, j], 0) - table[i][j].0).abs() < 1e-12 && (fg.cost(&[i, j], 1) - table[i][j].1).abs() < 1e-12
        })
    });
    checks.push(check("cost table", table_ok, ""));
    let mne = mne_two_player(&fg)?;
    let half = mne.probabilities.iter().all(|p| p.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    checks.push(check("uniform MNE", half, format!("{:?}", mne.probabilities)));
    let report = verify_delta(&inst, &fg, &mne, &IqpConfig::default())?;
    let gain = report.max_gain();
    checks.push(check("MNE of the full game", gain <= 1e-9, format!("max gain {gain:e}")));
    Ok(checks)
}

fn counterexample(m: i64) -> Result<Vec<Check>> {
    let inst = builtin(Builtin::Counterexample(m))?;
    let trace = run_br(&inst, &[vec![0, 1], vec![0, 1]], &DynamicsConfig::default())?;
    let sets = CycleSets::from_trace(&trace)?;
    let expected = vec![vec![0, 1], vec![m, 0]];
    let mut checks =
        vec![check("cycle sets", sets.sets == vec![expected.clone(), expected], format!("{:?}", sets.sets))];
    let fg = restrict(&inst, &sets)?;
    checks.push(check("no PNE", pne_search(&fg).is_empty(), ""));
    let mne = mne_two_player(&fg)?;
    let half = mne.probabilities.iter().all(|p| p.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    let costs: Vec<f64> = (0..2).map(|i| fg.expected_cost(i, &mne.probabilities)).collect();
    checks.push(check("uniform MNE", half, format!("{:?}", mne.probabilities)));
    checks.push(check("zero expected costs", costs.iter().all(|c| c.abs() <= 1e-9), format!("{costs:?}")));

    let report = verify_delta(&inst, &fg, &mne, &IqpConfig::default())?;
    let gain = report.players[0].gain;
    let target = (m * m) as f64 / 8.0;
    checks.push(check("x deviation gain", gain >= target - 1e-9, format!("gain {gain} (M²/8 = {target})")));

    // independent confirmation of the deviation value by exhaustive search
    let mean = crate::game::mean_profile(&fg.strategies, &mne.probabilities)?;
    let q = inst.response_problem(0, &mean)?;
    let oracle = iqp::brute_force_min(&q, iqp::safe_box_radius(&q)?, iqp::DEFAULT_ORACLE_BUDGET)?;
    let agrees = (oracle.value - report.players[0].deviation_cost).abs() <= 1e-9;
    checks.push(check("oracle agrees", agrees, format!("oracle {} vs {}", oracle.value, report.players[0].deviation_cost)));
    Ok(checks)
}
