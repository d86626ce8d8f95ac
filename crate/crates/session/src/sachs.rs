//! Consensus signalling network for the 11 Sachs et al. (2005) proteins.

use cape_core::{BinaryGraph, Result};

/// Protein names in the column order of the public observational file.
pub const NAMES: [&str; 11] = ["Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk"];

/// The 17 directed edges of the reference graph.
pub const EDGES: [(&str, &str); 17] = [
    ("PKC", "Raf"),
    ("PKC", "Mek"),
    ("PKC", "PKA"),
    ("PKC", "Jnk"),
    ("PKC", "P38"),
    ("PKA", "Raf"),
    ("PKA", "Mek"),
    ("PKA", "Erk"),
    ("PKA", "Akt"),
    ("PKA", "Jnk"),
    ("PKA", "P38"),
    ("Raf", "Mek"),
    ("Mek", "Erk"),
    ("Erk", "Akt"),
    ("Plcg", "PIP2"),
    ("Plcg", "PIP3"),
    ("PIP3", "PIP2"),
];

fn normalize(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace(['-', '_', ' '], "")
}

/// Position of each reference protein among `columns`, matching names
/// case-insensitively and ignoring `-`, `_` and spaces, with the common
/// aliases of the public files (`praf`, `pmek`, `plcg`, `p44/42`, `pakts473`,
/// `pjnk`).
pub fn column_order(columns: &[String]) -> Option<Vec<usize>> {
    let alias = |n: &str| -> String {
        match normalize(n).as_str() {
            "praf" => "raf".into(),
            "pmek" => "mek".into(),
            "plcg" | "plcgamma" => "plcg".into(),
            "p44/42" | "erk" | "perk" => "erk".into(),
            "pakts473" | "akt" | "pakt" => "akt".into(),
            "pjnk" => "jnk".into(),
            other => other.to_string(),
        }
    };
    let cols: Vec<String> = columns.iter().map(|c| alias(c)).collect();
    NAMES.iter().map(|n| cols.iter().position(|c| *c == normalize(n))).collect()
}

/// The reference graph over [`NAMES`].
pub fn reference_graph() -> BinaryGraph {
    let idx = |n: &str| NAMES.iter().position(|m| *m == n).expect("known protein");
    let edges: Vec<(usize, usize)> = EDGES.iter().map(|(a, b)| (idx(a), idx(b))).collect();
    BinaryGraph::from_edges(NAMES.len(), &edges)
        .and_then(|g| g.with_names(NAMES.iter().map(|s| s.to_string()).collect()))
        .expect("static graph is valid")
}

/// The reference graph laid out in the column order of `columns`.
pub fn reference_graph_for(columns: &[String]) -> Result<BinaryGraph> {
    let order = column_order(columns)
        .ok_or_else(|| cape_core::Error::Config("data columns do not name the 11 Sachs proteins".into()))?;
    if columns.len() != NAMES.len() {
        return Err(cape_core::Error::Config(format!("expected 11 columns, found {}", columns.len())));
    }
    let edges: Vec<(usize, usize)> = EDGES
        .iter()
        .map(|(a, b)| {
            let ia = NAMES.iter().position(|m| m == a).expect("known protein");
            let ib = NAMES.iter().position(|m| m == b).expect("known protein");
            (order[ia], order[ib])
        })
        .collect();
    BinaryGraph::from_edges(columns.len(), &edges)?.with_names(columns.to_vec())
}
