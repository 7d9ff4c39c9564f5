//! Instance documents (JSON) and trace tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{IcqsInstance, PlayerProblem};
use crate::linalg::Matrix;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlayerDoc {
    #[serde(rename = "Q")]
    q: Matrix,
    #[serde(rename = "C", default)]
    c: BTreeMap<usize, Matrix>,
    d: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    players: Vec<PlayerDoc>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn instance_from_json(text: &str) -> Result<IcqsInstance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let players = doc.players.into_iter().map(|p| PlayerProblem::new(p.q, p.c, p.d)).collect();
    IcqsInstance::with_meta(players, doc.meta)
}

pub fn instance_to_json(inst: &IcqsInstance) -> String {
    let doc = InstanceDoc {
        players: inst
            .players()
            .iter()
            .map(|p| PlayerDoc { q: p.q.clone(), c: p.c.clone(), d: p.d.clone() })
            .collect(),
        meta: inst.meta.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("instance documents always serialize");
    s.push('\n');
    s
}

pub fn load_instance(path: &Path) -> Result<IcqsInstance> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    instance_from_json(&text)
}

pub fn save_instance(path: &Path, inst: &IcqsInstance) -> Result<()> {
    write_text(path, &instance_to_json(inst))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types always serialize");
    s.push('\n');
    s
}

/// Parses a profile written as comma-separated entries per player, players
/// separated by semicolons: `"1,2;0,-3"`.
pub fn parse_profile(text: &str) -> Result<Vec<Vec<i64>>> {
    text.split(';')
        .map(|player| {
            player
                .split(',')
                .map(|v| v.trim().parse::<i64>().map_err(|e| Error::Parse(format!("profile entry `{v}`: {e}"))))
                .collect()
        })
        .collect()
}
