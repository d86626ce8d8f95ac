//! Dense weighted DAGs, acyclicity checks and local graph edits.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;

/// A three-way expert answer for an ordered pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    /// `j -> i`
    Reverse = 0,
    /// `i -> j`
    Forward = 1,
    /// no direct edge
    NoEdge = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Reverse, Label::Forward, Label::NoEdge];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// The same judgement expressed for the swapped pair `(j, i)`.
    pub fn swapped(self) -> Label {
        match self {
            Label::Reverse => Label::Forward,
            Label::Forward => Label::Reverse,
            Label::NoEdge => Label::NoEdge,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Label> {
        match v {
            0 => Ok(Label::Reverse),
            1 => Ok(Label::Forward),
            2 => Ok(Label::NoEdge),
            _ => Err(Error::Parse(format!("label must be 0, 1 or 2, got {v}"))),
        }
    }
}

/// Kind of a single local graph edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditKind {
    AddEdge,
    RemoveEdge,
    FlipEdge,
    PerturbWeight,
}

impl EditKind {
    pub const ALL: [EditKind; 4] = [
        EditKind::AddEdge,
        EditKind::RemoveEdge,
        EditKind::FlipEdge,
        EditKind::PerturbWeight,
    ];
}

/// A local edit on the ordered pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdit<T> {
    pub kind: EditKind,
    pub i: usize,
    pub j: usize,
    /// New weight for `AddEdge` and `PerturbWeight`.
    pub weight: Option<T>,
}

impl<T: Scalar> GraphEdit<T> {
    pub fn add(i: usize, j: usize, weight: T) -> Self {
        Self { kind: EditKind::AddEdge, i, j, weight: Some(weight) }
    }

    pub fn remove(i: usize, j: usize) -> Self {
        Self { kind: EditKind::RemoveEdge, i, j, weight: None }
    }

    pub fn flip(i: usize, j: usize) -> Self {
        Self { kind: EditKind::FlipEdge, i, j, weight: None }
    }

    pub fn perturb(i: usize, j: usize, weight: T) -> Self {
        Self { kind: EditKind::PerturbWeight, i, j, weight: Some(weight) }
    }
}

/// Checks a square boolean adjacency matrix for directed cycles.
///
/// Kahn peeling, `O(D^2)` on the dense matrix.
pub fn is_acyclic(adjacency: &[Vec<bool>]) -> Result<bool> {
    let d = adjacency.len();
    for (i, row) in adjacency.iter().enumerate() {
        if row.len() != d {
            return Err(contract(format!("adjacency row {i} has length {} in a {d}-node matrix", row.len())));
        }
        if row[i] {
            return Err(contract(format!("adjacency has a self-loop at node {i}")));
        }
    }
    let flat: Vec<bool> = adjacency.iter().flatten().copied().collect();
    Ok(is_acyclic_flat(d, &flat))
}

pub(crate) fn is_acyclic_flat(d: usize, adj: &[bool]) -> bool {
    let mut indegree = vec![0usize; d];
    for i in 0..d {
        for j in 0..d {
            if adj[i * d + j] {
                indegree[j] += 1;
            }
        }
    }
    let mut stack: Vec<usize> = (0..d).filter(|&v| indegree[v] == 0).collect();
    let mut peeled = 0;
    while let Some(v) = stack.pop() {
        peeled += 1;
        for w in 0..d {
            if adj[v * d + w] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    stack.push(w);
                }
            }
        }
    }
    peeled == d
}

/// A `D x D` weight matrix with zero diagonal and acyclic support.
///
/// Edge `i -> j` exists exactly when `W[i][j] != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag<T> {
    d: usize,
    weights: Vec<T>,
    names: Option<Vec<String>>,
}

impl<T: Scalar> WeightedDag<T> {
    /// The empty graph on `d` nodes.
    pub fn empty(d: usize) -> Self {
        assert!(d >= 1, "a graph needs at least one node");
        Self { d, weights: vec![T::zero(); d * d], names: None }
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize, T)]) -> Result<Self> {
        if d == 0 {
            return Err(contract("a graph needs at least one node"));
        }
        let mut weights = vec![T::zero(); d * d];
        for &(i, j, w) in edges {
            if i >= d || j >= d {
                return Err(contract(format!("edge ({i}, {j}) out of range for {d} nodes")));
            }
            if i == j {
                return Err(contract(format!("self-loop at node {i}")));
            }
            if !w.is_finite() {
                return Err(contract(format!("edge ({i}, {j}) has non-finite weight")));
            }
            weights[i * d + j] = w;
        }
        Self::from_dense(d, weights)
    }

    /// Builds from a row-major `d * d` weight vector.
    pub fn from_dense(d: usize, weights: Vec<T>) -> Result<Self> {
        if d == 0 || weights.len() != d * d {
            return Err(contract(format!("expected {} weights for {d} nodes, got {}", d * d, weights.len())));
        }
        for i in 0..d {
            if weights[i * d + i] != T::zero() {
                return Err(contract(format!("nonzero diagonal weight at node {i}")));
            }
        }
        let adj: Vec<bool> = weights.iter().map(|w| *w != T::zero()).collect();
        if !is_acyclic_flat(d, &adj) {
            return Err(Error::Rejected);
        }
        Ok(Self { d, weights, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(contract(format!("{} names for {} nodes", names.len(), self.d)));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn set_names(&mut self, names: Option<Vec<String>>) {
        if let Some(n) = &names {
            assert_eq!(n.len(), self.d, "one name per node");
        }
        self.names = names;
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.d + j]
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weights[i * self.d + j] != T::zero()
    }

    /// Row-major weights.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Present edges as `(i, j, w)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let d = self.d;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(move |(k, w)| (k / d, k % d, *w))
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != T::zero()).count()
    }

    /// Binary support `1(W != 0)`, row-major.
    pub fn adjacency(&self) -> Vec<bool> {
        self.weights.iter().map(|w| *w != T::zero()).collect()
    }

    /// Whether a directed path `from ~> to` exists (length >= 0).
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        self.reaches_skipping(from, to, None)
    }

    /// Reachability ignoring one directed edge.
    fn reaches_skipping(&self, from: usize, to: usize, skip: Option<(usize, usize)>) -> bool {
        if from == to {
            return true;
        }
        let d = self.d;
        let mut seen = vec![false; d];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            let row = &self.weights[v * d..(v + 1) * d];
            for (w, x) in row.iter().enumerate() {
                if *x == T::zero() || seen[w] || skip == Some((v, w)) {
                    continue;
                }
                if w == to {
                    return true;
                }
                seen[w] = true;
                stack.push(w);
            }
        }
        false
    }

    /// Whether inserting `i -> j` would close a directed cycle.
    ///
    /// An edge that is already present closes nothing new.
    pub fn adding_creates_cycle(&self, i: usize, j: usize) -> bool {
        !self.has_edge(i, j) && self.reaches(j, i)
    }

    fn check_edit(&self, e: &GraphEdit<T>) -> Result<()> {
        let (i, j, d) = (e.i, e.j, self.d);
        if i >= d || j >= d {
            return Err(contract(format!("edit pair ({i}, {j}) out of range for {d} nodes")));
        }
        if i == j {
            return Err(contract("edit pair must have i != j"));
        }
        let present = self.has_edge(i, j);
        match e.kind {
            EditKind::AddEdge if present => Err(contract(format!("AddEdge on existing edge {i}->{j}"))),
            EditKind::RemoveEdge | EditKind::FlipEdge | EditKind::PerturbWeight if !present => {
                Err(contract(format!("{:?} on missing edge {i}->{j}", e.kind)))
            }
            EditKind::AddEdge | EditKind::PerturbWeight => match e.weight {
                Some(w) if w != T::zero() && w.is_finite() => Ok(()),
                _ => Err(contract(format!("{:?} needs a finite nonzero weight", e.kind))),
            },
            _ => Ok(()),
        }
    }

    /// Whether a (precondition-valid) edit keeps the support acyclic.
    pub fn edit_keeps_acyclic(&self, e: &GraphEdit<T>) -> bool {
        match e.kind {
            EditKind::AddEdge => !self.reaches(e.j, e.i),
            // j -> i closes a cycle iff i still reaches j without the flipped edge
            EditKind::FlipEdge => !self.reaches_skipping(e.i, e.j, Some((e.i, e.j))),
            EditKind::RemoveEdge | EditKind::PerturbWeight => true,
        }
    }

    /// Applies an edit in place; on rejection the graph is untouched.
    pub fn apply_edit_in_place(&mut self, e: &GraphEdit<T>) -> Result<()> {
        self.check_edit(e)?;
        if !self.edit_keeps_acyclic(e) {
            return Err(Error::Rejected);
        }
        let d = self.d;
        let (ij, ji) = (e.i * d + e.j, e.j * d + e.i);
        match e.kind {
            EditKind::AddEdge | EditKind::PerturbWeight => self.weights[ij] = e.weight.unwrap(),
            EditKind::RemoveEdge => self.weights[ij] = T::zero(),
            EditKind::FlipEdge => {
                self.weights[ji] = self.weights[ij];
                self.weights[ij] = T::zero();
            }
        }
        Ok(())
    }

    /// Returns the edited graph, or [`Error::Rejected`] if it would be cyclic.
    pub fn apply_edit(&self, e: &GraphEdit<T>) -> Result<Self> {
        let mut out = self.clone();
        out.apply_edit_in_place(e)?;
        Ok(out)
    }

    /// Unordered adjacent pairs `{i, j}` stored as `(min, max)`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges().map(|(i, j, _)| (i.min(j), i.max(j))).collect()
    }

    /// The label a perfect expert would give for `(i, j)`.
    pub fn true_label(&self, i: usize, j: usize) -> Result<Label> {
        if i == j {
            return Err(contract("true_label needs i != j"));
        }
        if i >= self.d || j >= self.d {
            return Err(contract(format!("pair ({i}, {j}) out of range")));
        }
        Ok(self.label_unchecked(i, j))
    }

    #[inline]
    pub(crate) fn label_unchecked(&self, i: usize, j: usize) -> Label {
        if self.has_edge(i, j) {
            Label::Forward
        } else if self.has_edge(j, i) {
            Label::Reverse
        } else {
            Label::NoEdge
        }
    }

    /// Casts weights to another scalar type.
    pub fn cast<U: Scalar>(&self) -> WeightedDag<U> {
        WeightedDag {
            d: self.d,
            weights: self.weights.iter().map(|w| U::of(w.as_f64())).collect(),
            names: self.names.clone(),
        }
    }
}

/// Binary directed adjacency that may contain cycles and two-way pairs.
///
/// Used as the reference graph for evaluation and by the effect-graph
/// oracle. A pair connected in both directions labels as [`Label::NoEdge`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGraph {
    d: usize,
    adj: Vec<bool>,
    names: Option<Vec<String>>,
}

impl BinaryGraph {
    pub fn new(d: usize, adj: Vec<bool>) -> Result<Self> {
        if d == 0 || adj.len() != d * d {
            return Err(contract(format!("expected {} entries for {d} nodes, got {}", d * d, adj.len())));
        }
        if (0..d).any(|i| adj[i * d + i]) {
            return Err(contract("nonzero diagonal in adjacency"));
        }
        Ok(Self { d, adj, names: None })
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![false; d * d];
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(contract(format!("edge ({i}, {j}) out of range for {d} nodes")));
            }
            adj[i * d + j] = true;
        }
        Self::new(d, adj)
    }

    pub fn from_dag<T: Scalar>(w: &WeightedDag<T>) -> Self {
        Self { d: w.d, adj: w.adjacency(), names: w.names.clone() }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(contract(format!("{} names for {} nodes", names.len(), self.d)));
        }
        self.names = Some(names);
        Ok(self)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d + j]
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|a| **a).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.d;
        self.adj.iter().enumerate().filter(|(_, a)| **a).map(move |(k, _)| (k / d, k % d))
    }

    /// Pairs `(i, j)`, `i < j`, with edges both ways.
    pub fn ambiguous_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges().filter(|&(i, j)| i < j && self.has_edge(j, i)).collect()
    }

    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges().map(|(i, j)| (i.min(j), i.max(j))).collect()
    }

    pub fn is_acyclic(&self) -> bool {
        is_acyclic_flat(self.d, &self.adj)
    }

    pub fn label(&self, i: usize, j: usize) -> Result<Label> {
        if i == j || i >= self.d || j >= self.d {
            return Err(contract(format!("invalid pair ({i}, {j})")));
        }
        Ok(self.label_unchecked(i, j))
    }

    #[inline]
    pub(crate) fn label_unchecked(&self, i: usize, j: usize) -> Label {
        match (self.has_edge(i, j), self.has_edge(j, i)) {
            (true, false) => Label::Forward,
            (false, true) => Label::Reverse,
            _ => Label::NoEdge,
        }
    }
}

impl<T: Scalar> From<&WeightedDag<T>> for BinaryGraph {
    fn from(w: &WeightedDag<T>) -> Self {
        Self::from_dag(w)
    }
}

/// All ordered pairs `(i, j)` with `i != j`, lexicographic.
pub fn ordered_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
}
