//! Acyclic mixed graphs: directed edges for direct effects, bidirected edges
//! for latent confounding. The central representation is the bow-free acyclic
//! path diagram (BAP), which allows at most one edge per vertex pair.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Mixed graph over vertices `0..p` with directed and bidirected edge sets.
///
/// Bidirected pairs are stored with the smaller vertex first, so set equality
/// of the edge sets is graph equality (graphs are labeled, not compared up to
/// isomorphism).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedGraph {
    p: usize,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
}

/// Relation of an unordered vertex pair `(u, v)` with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    /// `u -> v`
    ParentOf,
    /// `v -> u`
    ChildOf,
    /// `u <-> v`
    Sibling,
    NoEdge,
}

impl RelationKind {
    pub const ALL: [RelationKind; 4] = [
        RelationKind::ParentOf,
        RelationKind::ChildOf,
        RelationKind::Sibling,
        RelationKind::NoEdge,
    ];

    fn index(self) -> usize {
        match self {
            RelationKind::ParentOf => 0,
            RelationKind::ChildOf => 1,
            RelationKind::Sibling => 2,
            RelationKind::NoEdge => 3,
        }
    }
}

/// A violation found by [`MixedGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfLoop(usize),
    /// Pair with both a directed and a bidirected edge.
    Bow(usize, usize),
    /// Vertices on a directed cycle.
    Cycle(Vec<usize>),
}

/// Neighborhood sets of a vertex. Ancestors and descendants are strict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relations {
    pub parents: BTreeSet<usize>,
    pub children: BTreeSet<usize>,
    pub ancestors: BTreeSet<usize>,
    pub descendants: BTreeSet<usize>,
    pub siblings: BTreeSet<usize>,
}

impl Relations {
    /// Ancestors including the vertex itself.
    pub fn ancestors_inclusive(&self, v: usize) -> BTreeSet<usize> {
        let mut s = self.ancestors.clone();
        s.insert(v);
        s
    }
}

/// Pairwise comparison of an estimated graph against the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphScore {
    pub pairwise_correct: usize,
    pub pairwise_total: usize,
    pub exact: bool,
    /// `confusion[truth][estimate]` over [`RelationKind::ALL`] order.
    pub confusion: [[usize; 4]; 4],
}

impl MixedGraph {
    /// Builds a graph, rejecting self-loops, duplicate/bow pairs, and directed
    /// cycles.
    pub fn new(
        p: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut g = MixedGraph {
            p,
            directed: BTreeSet::new(),
            bidirected: BTreeSet::new(),
        };
        for (u, v) in directed {
            g.check_vertex(u)?;
            g.check_vertex(v)?;
            g.directed.insert((u, v));
        }
        for (u, v) in bidirected {
            g.check_vertex(u)?;
            g.check_vertex(v)?;
            g.bidirected.insert((u.min(v), u.max(v)));
        }
        let violations = g.validate();
        if let Some(v) = violations.first() {
            return Err(GraphError::Invalid(format!("{v:?}")));
        }
        Ok(g)
    }

    /// Graph with no edges.
    pub fn edgeless(p: usize) -> Self {
        MixedGraph {
            p,
            directed: BTreeSet::new(),
            bidirected: BTreeSet::new(),
        }
    }

    fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.p {
            Err(GraphError::VertexOutOfRange { v, p: self.p })
        } else {
            Ok(())
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    pub fn bidirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bidirected.iter().copied()
    }

    pub fn num_directed(&self) -> usize {
        self.directed.len()
    }

    pub fn num_bidirected(&self) -> usize {
        self.bidirected.len()
    }

    pub fn has_directed(&self, u: usize, v: usize) -> bool {
        self.directed.contains(&(u, v))
    }

    pub fn has_bidirected(&self, u: usize, v: usize) -> bool {
        self.bidirected.contains(&(u.min(v), u.max(v)))
    }

    /// Checks the BAP invariants. Returns an empty list iff the graph is a
    /// valid bow-free acyclic path diagram.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for &(u, v) in &self.directed {
            if u == v {
                out.push(Violation::SelfLoop(u));
            }
        }
        for &(u, v) in &self.bidirected {
            if u == v {
                out.push(Violation::SelfLoop(u));
            }
        }
        for &(u, v) in &self.bidirected {
            if self.directed.contains(&(u, v)) || self.directed.contains(&(v, u)) {
                out.push(Violation::Bow(u, v));
            }
        }
        if let Err(cycle) = self.try_topological_order() {
            out.push(Violation::Cycle(cycle));
        }
        out
    }

    /// Neighborhood sets of `v`; ancestors/descendants via reachability on the
    /// directed part.
    pub fn relations(&self, v: usize) -> Result<Relations, GraphError> {
        self.check_vertex(v)?;
        let mut r = Relations {
            parents: BTreeSet::new(),
            children: BTreeSet::new(),
            ancestors: BTreeSet::new(),
            descendants: BTreeSet::new(),
            siblings: BTreeSet::new(),
        };
        for &(u, w) in &self.directed {
            if w == v {
                r.parents.insert(u);
            }
            if u == v {
                r.children.insert(w);
            }
        }
        for &(u, w) in &self.bidirected {
            if u == v {
                r.siblings.insert(w);
            }
            if w == v {
                r.siblings.insert(u);
            }
        }
        r.ancestors = self.reach(v, true);
        r.descendants = self.reach(v, false);
        Ok(r)
    }

    /// All strict ancestors of `v` (backward=true) or descendants.
    fn reach(&self, v: usize, backward: bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &(u, w) in &self.directed {
                let (from, to) = if backward { (w, u) } else { (u, w) };
                if from == x && to != v && seen.insert(to) {
                    stack.push(to);
                }
            }
        }
        seen
    }

    /// Strict-ancestor matrix: `anc[j][i]` true iff i is an ancestor of j.
    pub fn ancestor_matrix(&self) -> Vec<Vec<bool>> {
        let mut anc = vec![vec![false; self.p]; self.p];
        for (v, row) in anc.iter_mut().enumerate() {
            for a in self.reach(v, true) {
                row[a] = true;
            }
        }
        anc
    }

    /// Topological order of the directed part, smallest index first among
    /// available sources.
    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        self.try_topological_order()
            .map_err(GraphError::Cycle)
    }

    fn try_topological_order(&self) -> Result<Vec<usize>, Vec<usize>> {
        let mut indeg = vec![0usize; self.p];
        for &(u, v) in &self.directed {
            if u != v {
                indeg[v] += 1;
            }
            let _ = u;
        }
        let mut order = Vec::with_capacity(self.p);
        let mut remaining: BTreeSet<usize> = (0..self.p).collect();
        while !remaining.is_empty() {
            // smallest-index tie-break among current sources
            let next = remaining.iter().copied().find(|&v| indeg[v] == 0);
            match next {
                Some(v) => {
                    remaining.remove(&v);
                    order.push(v);
                    for &(a, b) in &self.directed {
                        if a == v && remaining.contains(&b) {
                            indeg[b] -= 1;
                        }
                    }
                }
                None => return Err(remaining.into_iter().collect()),
            }
        }
        Ok(order)
    }

    /// Random BAP per the simulation protocol: `d` directed edges uniform over
    /// `{(i,j): i < j}`, then `b` bidirected edges uniform over the pairs that
    /// keep the graph bow-free (BAP mode) or ancestral (ancestral mode). If
    /// fewer candidate pairs exist, all are taken.
    pub fn random_bap<R: Rng>(
        p: usize,
        d: usize,
        b: usize,
        ancestral: bool,
        rng: &mut R,
    ) -> MixedGraph {
        assert!(p >= 1, "need at least one vertex");
        let upper: Vec<(usize, usize)> = (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .collect();
        assert!(d <= upper.len(), "d exceeds p(p-1)/2");
        let directed: BTreeSet<(usize, usize)> = index_sample(rng, upper.len(), d)
            .into_iter()
            .map(|k| upper[k])
            .collect();

        let mut g = MixedGraph {
            p,
            directed,
            bidirected: BTreeSet::new(),
        };
        let anc = g.ancestor_matrix();
        let candidates: Vec<(usize, usize)> = upper
            .iter()
            .copied()
            .filter(|&(i, j)| {
                if ancestral {
                    !anc[j][i] && !anc[i][j]
                } else {
                    !g.directed.contains(&(i, j)) && !g.directed.contains(&(j, i))
                }
            })
            .collect();
        let take = b.min(candidates.len());
        g.bidirected = index_sample(rng, candidates.len(), take)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        debug_assert!(g.validate().is_empty());
        g
    }

    /// Maps every edge through a permutation of the vertex labels.
    pub fn relabel(&self, permutation: &[usize]) -> Result<MixedGraph, GraphError> {
        if permutation.len() != self.p {
            return Err(GraphError::BadPermutation);
        }
        let mut seen = vec![false; self.p];
        for &x in permutation {
            if x >= self.p || seen[x] {
                return Err(GraphError::BadPermutation);
            }
            seen[x] = true;
        }
        Ok(MixedGraph {
            p: self.p,
            directed: self
                .directed
                .iter()
                .map(|&(u, v)| (permutation[u], permutation[v]))
                .collect(),
            bidirected: self
                .bidirected
                .iter()
                .map(|&(u, v)| {
                    let (a, b) = (permutation[u], permutation[v]);
                    (a.min(b), a.max(b))
                })
                .collect(),
        })
    }

    fn relation_of(&self, u: usize, v: usize) -> RelationKind {
        debug_assert!(u < v);
        if self.directed.contains(&(u, v)) {
            RelationKind::ParentOf
        } else if self.directed.contains(&(v, u)) {
            RelationKind::ChildOf
        } else if self.bidirected.contains(&(u, v)) {
            RelationKind::Sibling
        } else {
            RelationKind::NoEdge
        }
    }

    /// Compares the relation of every unordered pair against `truth`.
    pub fn score_against(&self, truth: &MixedGraph) -> Result<GraphScore, GraphError> {
        if self.p != truth.p {
            return Err(GraphError::SizeMismatch {
                lhs: self.p,
                rhs: truth.p,
            });
        }
        let mut confusion = [[0usize; 4]; 4];
        let mut correct = 0;
        let mut total = 0;
        for u in 0..self.p {
            for v in u + 1..self.p {
                let t = truth.relation_of(u, v);
                let e = self.relation_of(u, v);
                confusion[t.index()][e.index()] += 1;
                if t == e {
                    correct += 1;
                }
                total += 1;
            }
        }
        Ok(GraphScore {
            pairwise_correct: correct,
            pairwise_total: total,
            exact: correct == total,
            confusion,
        })
    }

    /// DOT rendering: directed edges blue, bidirected edges red with both
    /// arrowheads. Labels are shifted by one when `one_indexed` is set.
    pub fn to_dot(&self, one_indexed: bool) -> String {
        let off = usize::from(one_indexed);
        let mut s = String::from("digraph bap {\n");
        for v in 0..self.p {
            let _ = writeln!(s, "  {};", v + off);
        }
        for &(u, v) in &self.directed {
            let _ = writeln!(s, "  {} -> {} [color=blue];", u + off, v + off);
        }
        for &(u, v) in &self.bidirected {
            let _ = writeln!(s, "  {} -> {} [dir=both, color=red];", u + off, v + off);
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self, one_indexed: bool) -> GraphJson {
        let off = usize::from(one_indexed);
        GraphJson {
            p: self.p,
            directed: self.directed.iter().map(|&(u, v)| [u + off, v + off]).collect(),
            bidirected: self
                .bidirected
                .iter()
                .map(|&(u, v)| [u + off, v + off])
                .collect(),
            one_indexed,
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<MixedGraph, GraphError> {
        let off = usize::from(json.one_indexed);
        let dec = |pair: &[usize; 2]| -> Result<(usize, usize), GraphError> {
            let (u, v) = (pair[0], pair[1]);
            if u < off || v < off {
                return Err(GraphError::Invalid("label below index base".into()));
            }
            Ok((u - off, v - off))
        };
        MixedGraph::new(
            json.p,
            json.directed.iter().map(dec).collect::<Result<Vec<_>, _>>()?,
            json.bidirected.iter().map(dec).collect::<Result<Vec<_>, _>>()?,
        )
    }
}

/// On-disk graph format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub p: usize,
    pub directed: Vec<[usize; 2]>,
    pub bidirected: Vec<[usize; 2]>,
    #[serde(default)]
    pub one_indexed: bool,
}

/// The four-node BAP used as a running example: 1→2→3→4 with
/// 1↔3, 2↔4, 1↔4 (here 0-indexed).
pub fn example_bap() -> MixedGraph {
    MixedGraph::new(4, [(0, 1), (1, 2), (2, 3)], [(0, 2), (1, 3), (0, 3)]).unwrap()
}

/// The five-node pruning example: 1→2, 1→3, 3→4, 4→5 (0-indexed).
pub fn pruning_example() -> MixedGraph {
    MixedGraph::new(5, [(0, 1), (0, 2), (2, 3), (3, 4)], []).unwrap()
}

/// Three-node ancestral graph 1→3←2 with 1↔2 (0-indexed).
pub fn confounded_collider() -> MixedGraph {
    MixedGraph::new(3, [(0, 2), (1, 2)], [(0, 1)]).unwrap()
}
