//! The Eventual Relay Forest of a window: every building points to its
//! blocking building. Foils, spines and the F/F, I/F, I/I classes are read
//! off the parent pointers.
//!
//! Parents are found in one right-to-left sweep. The stack holds the upper
//! convex hull of the buildings seen so far; seen from a new building the
//! slopes to successive hull vertices are unimodal, so popping until the next
//! vertex stops improving leaves the argmax on top. Popping only on a strict
//! improvement keeps the nearest building on ties.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::blockage::{Scheme, Truncation};
use crate::error::{Error, Result};
use crate::heights::HeightModel;
use crate::landscape::{line_exceedance_mass, Building, IntensityProfile, Landscape};
use crate::{Point, Stream};

/// Parent pointer of a forest node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parent {
    Node(usize),
    /// `τ1` at maximal height: the node relays to itself.
    SelfLoop,
    /// The blocking building cannot be certified inside the window.
    Censored,
}

/// Parent pointers over the buildings of a window.
#[derive(Debug, Clone)]
pub struct RelayForest {
    pub nodes: Vec<Building>,
    pub parent: Vec<Parent>,
    pub scheme: Scheme,
    pub window: (f64, f64),
    pub margin: f64,
    sup: f64,
}

/// Builds the forest of the buildings of `l` (no extension). A parent is kept
/// only if the probability that a building beyond the window beats it is
/// below `tr.trunc_eps`.
pub fn build_forest(l: &Landscape, scheme: Scheme, tr: &Truncation, boundary_margin: f64) -> Result<RelayForest> {
    let heights = l.heights();
    let profile = l.profile();
    if scheme == Scheme::Infinite && heights.is_max_height_case() {
        return Err(Error::SchemeMismatch("scheme tau is ill-defined when the height law has an atom at its supremum"));
    }
    let nodes = l.buildings().to_vec();
    let (_, right) = l.covered();
    let s = heights.sup_support();
    let mut parent = stack_parents(&nodes, s, scheme);
    for (i, p) in parent.iter_mut().enumerate() {
        if let Parent::Node(j) = *p {
            let (u, v) = (nodes[i], nodes[j]);
            let t = (v.h - u.h) / (v.x - u.x);
            // A maximal building is never beaten from outside.
            let certified = v.h >= s
                || (t > 0.0 && {
                    let mass = line_exceedance_mass(profile, heights, right, f64::INFINITY, u.top(), t);
                    -(-mass).exp_m1() < tr.trunc_eps
                });
            if !certified {
                *p = Parent::Censored;
            }
        }
    }
    Ok(RelayForest { nodes, parent, scheme, window: l.covered(), margin: boundary_margin, sup: s })
}

/// Blocking buildings computed among `nodes` only (sorted by base). Nodes
/// with nothing to their right are `Censored`.
pub(crate) fn stack_parents(nodes: &[Building], sup: f64, scheme: Scheme) -> Vec<Parent> {
    let n = nodes.len();
    let mut parent = vec![Parent::Censored; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_max: Option<usize> = None;
    let slope = |u: Building, v: Building| (v.h - u.h) / (v.x - u.x);
    for i in (0..n).rev() {
        let u = nodes[i];
        if u.h >= sup {
            parent[i] = match scheme {
                Scheme::SelfAbsorbing => Parent::SelfLoop,
                _ => next_max.map_or(Parent::Censored, Parent::Node),
            };
            // Nothing beyond a maximal building can beat it from the left.
            stack.clear();
            stack.push(i);
            next_max = Some(i);
            continue;
        }
        while stack.len() >= 2 {
            let (s0, s1) = (stack[stack.len() - 1], stack[stack.len() - 2]);
            if slope(u, nodes[s1]) > slope(u, nodes[s0]) {
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(&top) = stack.last() {
            parent[i] = Parent::Node(top);
        }
        stack.push(i);
    }
    parent
}

/// Relation of two nodes under the foil equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoilRelation {
    Same,
    Different,
    /// The chains do not merge within the depth budget or the window.
    Unknown,
}

/// Foil classes found within a depth budget.
#[derive(Debug, Clone)]
pub struct FoilPartition {
    pub class_of: Vec<usize>,
    pub n_classes: usize,
}

impl FoilPartition {
    pub fn same(&self, a: usize, b: usize) -> bool {
        self.class_of[a] == self.class_of[b]
    }
}

impl RelayForest {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Whether the node lies at least `margin` away from both window edges.
    pub fn is_interior(&self, i: usize) -> bool {
        let x = self.nodes[i].x;
        x >= self.window.0 + self.margin && x <= self.window.1 - self.margin
    }

    pub fn is_max_height(&self, i: usize) -> bool {
        self.nodes[i].h >= self.sup
    }

    /// `τ^k(i)` for `k = 0..=depth`, stopping early at a censored pointer.
    /// Self-loops repeat the node.
    pub fn chain(&self, i: usize, depth: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(depth + 1);
        out.push(i);
        let mut cur = i;
        for _ in 0..depth {
            match self.parent[cur] {
                Parent::Node(p) => cur = p,
                Parent::SelfLoop => {}
                Parent::Censored => break,
            }
            out.push(cur);
        }
        out
    }

    /// Fraction of interior nodes whose parent is censored.
    pub fn censored_fraction(&self) -> f64 {
        let interior: Vec<usize> = (0..self.len()).filter(|&i| self.is_interior(i)).collect();
        if interior.is_empty() {
            return 0.0;
        }
        interior.iter().filter(|&&i| self.parent[i] == Parent::Censored).count() as f64 / interior.len() as f64
    }

    /// Whether the parent pointers (self-loops aside) form a DAG, checked by
    /// a topological sort.
    pub fn is_acyclic(&self) -> bool {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for p in &self.parent {
            if let Parent::Node(j) = p {
                indeg[*j] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop() {
            seen += 1;
            if let Parent::Node(j) = self.parent[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push(j);
                }
            }
        }
        seen == n
    }

    /// Number of (all-generation) descendants of each node inside the window.
    pub fn descendant_counts(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.len()];
        // Children sit left of their parent, so a left-to-right pass suffices.
        for i in 0..self.len() {
            if let Parent::Node(p) = self.parent[i] {
                d[p] += d[i] + 1;
            }
        }
        d
    }

    /// Interior nodes visited by the chain of every node of the left margin:
    /// the empirical spine.
    pub fn empirical_spine(&self) -> Vec<usize> {
        let starts: Vec<usize> = (0..self.len()).filter(|&i| self.nodes[i].x < self.window.0 + self.margin).collect();
        if starts.is_empty() {
            return Vec::new();
        }
        let mut hits = vec![0usize; self.len()];
        for &s in &starts {
            let mut cur = s;
            loop {
                hits[cur] += 1;
                match self.parent[cur] {
                    Parent::Node(p) => cur = p,
                    _ => break,
                }
            }
        }
        (0..self.len()).filter(|&i| self.is_interior(i) && hits[i] == starts.len()).collect()
    }

    /// Writes `node_x,node_h,parent_x,parent_h,censored,spine`. Self-loops
    /// repeat the node as parent; censored nodes leave the parent empty. The
    /// `spine` column flags maximal-height nodes under `τ2`.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["node_x", "node_h", "parent_x", "parent_h", "censored", "spine"])?;
        for (i, b) in self.nodes.iter().enumerate() {
            let (px, ph, c) = match self.parent[i] {
                Parent::Node(p) => (self.nodes[p].x.to_string(), self.nodes[p].h.to_string(), "0"),
                Parent::SelfLoop => (b.x.to_string(), b.h.to_string(), "0"),
                Parent::Censored => (String::new(), String::new(), "1"),
            };
            let spine = self.scheme == Scheme::NextMax && self.is_max_height(i);
            out.write_record([b.x.to_string(), b.h.to_string(), px, ph, c.to_string(), (spine as u8).to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn find(uf: &mut [usize], mut i: usize) -> usize {
    while uf[i] != i {
        uf[i] = uf[uf[i]];
        i = uf[i];
    }
    i
}

/// Groups nodes whose `k`-fold iterates coincide for some `k ≤ depth`.
pub fn foil_partition(forest: &RelayForest, depth: usize) -> FoilPartition {
    let n = forest.len();
    let mut uf: Vec<usize> = (0..n).collect();
    let mut first: HashMap<(usize, usize), usize> = HashMap::new();
    for i in 0..n {
        for (k, &v) in forest.chain(i, depth).iter().enumerate().skip(1) {
            match first.get(&(k, v)) {
                Some(&j) => {
                    let (a, b) = (find(&mut uf, i), find(&mut uf, j));
                    uf[a] = b;
                }
                None => {
                    first.insert((k, v), i);
                }
            }
        }
    }
    let mut labels = HashMap::new();
    let class_of: Vec<usize> = (0..n)
        .map(|i| {
            let r = find(&mut uf, i);
            let next = labels.len();
            *labels.entry(r).or_insert(next)
        })
        .collect();
    FoilPartition { n_classes: labels.len(), class_of }
}

/// Decides whether two nodes share a foil, looking `depth` generations up.
pub fn foil_relation(forest: &RelayForest, a: usize, b: usize, depth: usize) -> FoilRelation {
    if a == b {
        return FoilRelation::Same;
    }
    let ca = forest.chain(a, depth);
    let cb = forest.chain(b, depth);
    let pos_b: HashMap<usize, usize> = cb.iter().enumerate().rev().map(|(k, &v)| (v, k)).collect();
    for (i, v) in ca.iter().enumerate() {
        if let Some(&j) = pos_b.get(v) {
            if i == j || forest.parent[*v] == Parent::SelfLoop {
                return FoilRelation::Same;
            }
            return FoilRelation::Different;
        }
    }
    let ends_in_loop = |c: &[usize]| forest.parent[*c.last().expect("nonempty")] == Parent::SelfLoop;
    if ends_in_loop(&ca) && ends_in_loop(&cb) {
        FoilRelation::Different
    } else {
        FoilRelation::Unknown
    }
}

/// Class of the relay family tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EftClass {
    /// Finite components with cycles (here self-loops).
    #[serde(rename = "F/F")]
    FF,
    /// One bi-infinite spine.
    #[serde(rename = "I/F")]
    IF,
    /// One-ended with infinite foils.
    #[serde(rename = "I/I")]
    II,
}

impl std::fmt::Display for EftClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EftClass::FF => "F/F",
            EftClass::IF => "I/F",
            EftClass::II => "I/I",
        })
    }
}

/// The class implied by the height law and the scheme.
pub fn classify_eft(heights: &HeightModel, scheme: Scheme) -> Result<EftClass> {
    if !heights.is_max_height_case() {
        return Ok(EftClass::II);
    }
    match scheme {
        Scheme::SelfAbsorbing => Ok(EftClass::FF),
        Scheme::NextMax => Ok(EftClass::IF),
        Scheme::Infinite => {
            Err(Error::SchemeMismatch("scheme tau is ill-defined when the height law has an atom at its supremum"))
        }
    }
}

/// Consistency evidence for the class, measured on one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EftDiagnostics {
    pub class: EftClass,
    pub n_nodes: usize,
    pub censored_fraction: f64,
    pub self_loop_fraction: f64,
    pub acyclic_apart_from_self_loops: bool,
    /// `τ1`: fraction of nodes (right margin excluded) whose chain ends in a
    /// self-loop inside the window.
    pub absorbed_fraction: Option<f64>,
    /// `τ2`: whether the empirical spine is exactly the interior maximal
    /// height nodes.
    pub spine_matches_max_height: Option<bool>,
    pub max_descendants: usize,
}

/// Simulates a window of width `width` and measures the diagnostics.
pub fn eft_diagnostics(
    profile: &IntensityProfile,
    heights: &HeightModel,
    scheme: Scheme,
    width: f64,
    margin: f64,
    stream: Stream,
    tr: &Truncation,
) -> Result<EftDiagnostics> {
    let class = classify_eft(heights, scheme)?;
    let l = Landscape::generate(profile, heights, 0.0, width, stream);
    let f = build_forest(&l, scheme, tr, margin)?;
    let n = f.len();
    let loops = f.parent.iter().filter(|p| **p == Parent::SelfLoop).count();
    let absorbed_fraction = (scheme == Scheme::SelfAbsorbing).then(|| {
        let considered: Vec<usize> = (0..n).filter(|&i| f.nodes[i].x <= f.window.1 - margin).collect();
        let ok = considered
            .iter()
            .filter(|&&i| {
                let c = f.chain(i, n + 1);
                f.parent[*c.last().expect("nonempty")] == Parent::SelfLoop
            })
            .count();
        if considered.is_empty() {
            1.0
        } else {
            ok as f64 / considered.len() as f64
        }
    });
    let spine_matches_max_height = (scheme == Scheme::NextMax).then(|| {
        let spine = f.empirical_spine();
        let max_nodes: Vec<usize> = (0..n).filter(|&i| f.is_interior(i) && f.is_max_height(i)).collect();
        spine == max_nodes
    });
    Ok(EftDiagnostics {
        class,
        n_nodes: n,
        censored_fraction: f.censored_fraction(),
        self_loop_fraction: if n == 0 { 0.0 } else { loops as f64 / n as f64 },
        acyclic_apart_from_self_loops: f.is_acyclic(),
        absorbed_fraction,
        spine_matches_max_height,
        max_descendants: f.descendant_counts().into_iter().max().unwrap_or(0),
    })
}

/// Convenience: the top of a node.
pub fn node_point(f: &RelayForest, i: usize) -> Point {
    f.nodes[i].top()
}
