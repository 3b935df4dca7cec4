//! Generic rigidity in the plane and the patch decomposition built on it.
//!
//! Rigidity is decided combinatorially with the (2,3) pebble game. Global
//! rigidity uses the 2-D characterization: 3-connected and redundantly
//! rigid.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::scenario::{Measurement, MeasurementGraph};

/// Minimum number of shared nodes for two patches to be aligned.
pub const MIN_OVERLAP: usize = 3;

/// Simple undirected graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Self-loops and duplicate edges are dropped.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut out: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|&(a, b)| a != b)
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .inspect(|&(_, b)| assert!(b < n, "edge endpoint {b} out of range for {n} vertices"))
            .collect();
        out.sort_unstable();
        out.dedup();
        Self { n, edges: out }
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    fn without_edge(&self, k: usize) -> Self {
        let mut edges = self.edges.clone();
        edges.remove(k);
        Self { n: self.n, edges }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Connected after deleting the vertices flagged in `removed`.
    fn connected_without(&self, adj: &[Vec<usize>], removed: &[bool]) -> bool {
        let Some(start) = (0..self.n).find(|&v| !removed[v]) else {
            return true;
        };
        let mut seen = removed.to_vec();
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Vertex 3-connectivity: more than 3 vertices and no separating set of
    /// size at most 2.
    pub fn is_3_connected(&self) -> bool {
        if self.n < 4 {
            return false;
        }
        let adj = self.adjacency();
        let mut removed = vec![false; self.n];
        if !self.connected_without(&adj, &removed) {
            return false;
        }
        for a in 0..self.n {
            removed[a] = true;
            if !self.connected_without(&adj, &removed) {
                return false;
            }
            for b in a + 1..self.n {
                removed[b] = true;
                let ok = self.connected_without(&adj, &removed);
                removed[b] = false;
                if !ok {
                    return false;
                }
            }
            removed[a] = false;
        }
        true
    }
}

/// State of the (2,3) pebble game: two pebbles per vertex, accepted edges
/// are directed away from the vertex whose pebble covers them.
struct PebbleGame {
    pebbles: Vec<u8>,
    out: Vec<Vec<usize>>,
}

impl PebbleGame {
    fn new(n: usize) -> Self {
        Self {
            pebbles: vec![2; n],
            out: vec![Vec::new(); n],
        }
    }

    /// Moves one free pebble onto `root` along a directed path, never taking
    /// pebbles from `root` or `keep`. Returns false if none is reachable.
    fn draw_pebble(&mut self, root: usize, keep: usize) -> bool {
        let n = self.pebbles.len();
        let mut parent = vec![usize::MAX; n];
        parent[root] = root;
        let mut stack = vec![root];
        let mut found = None;
        'search: while let Some(v) = stack.pop() {
            for &w in &self.out[v] {
                if parent[w] != usize::MAX {
                    continue;
                }
                parent[w] = v;
                if w != keep && self.pebbles[w] > 0 {
                    found = Some(w);
                    break 'search;
                }
                stack.push(w);
            }
        }
        let Some(source) = found else {
            return false;
        };
        // Reverse the path root -> ... -> source.
        let mut w = source;
        while w != root {
            let v = parent[w];
            let pos = self.out[v].iter().position(|&x| x == w).expect("path edge");
            self.out[v].swap_remove(pos);
            self.out[w].push(v);
            w = v;
        }
        self.pebbles[source] -= 1;
        self.pebbles[root] += 1;
        true
    }

    /// Tries to accept edge `(u, v)`; true if it is independent of the
    /// edges accepted so far.
    fn insert(&mut self, u: usize, v: usize) -> bool {
        while self.pebbles[u] < 2 {
            if !self.draw_pebble(u, v) {
                break;
            }
        }
        while self.pebbles[v] < 2 {
            if !self.draw_pebble(v, u) {
                break;
            }
        }
        if self.pebbles[u] + self.pebbles[v] < 4 {
            return false;
        }
        self.pebbles[u] -= 1;
        self.out[u].push(v);
        true
    }
}

/// Size of a maximal independent edge set in the 2-D generic rigidity
/// matroid.
pub fn rigidity_rank(graph: &Graph) -> usize {
    let mut game = PebbleGame::new(graph.n);
    graph.edges.iter().filter(|&&(u, v)| game.insert(u, v)).count()
}

/// Generic rigidity in the plane.
pub fn is_rigid(graph: &Graph) -> bool {
    match graph.n {
        0 | 1 => true,
        n => rigidity_rank(graph) == 2 * n - 3,
    }
}

/// Rigid after deleting any single edge.
pub fn is_redundantly_rigid(graph: &Graph) -> bool {
    if graph.n <= 1 {
        return true;
    }
    if graph.edges.len() < 2 * graph.n - 2 || !is_rigid(graph) {
        return false;
    }
    (0..graph.edges.len()).all(|k| is_rigid(&graph.without_edge(k)))
}

/// Generic global rigidity in the plane.
pub fn is_globally_rigid(graph: &Graph) -> bool {
    let n = graph.n;
    if n <= 3 {
        return graph.edges.len() == n * n.saturating_sub(1) / 2;
    }
    graph.is_3_connected() && is_redundantly_rigid(graph)
}

/// Globally rigid subgraph with its own local coordinate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub patch_id: usize,
    /// Sorted global node indices.
    pub members: Vec<usize>,
    /// Measured edges with both endpoints in `members`, global indices.
    pub local_edges: Vec<Measurement>,
    /// Local coordinates in `members` order, once embedded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_coords: Option<Vec<Point>>,
}

impl Patch {
    pub fn new(patch_id: usize, members: Vec<usize>, local_edges: Vec<Measurement>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Self {
            patch_id,
            members,
            local_edges,
            local_coords: None,
        }
    }

    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.members.binary_search(&node).ok()
    }

    /// Sorted global nodes shared with `other`.
    pub fn shared_with(&self, other: &Patch) -> Vec<usize> {
        let (mut a, mut b) = (0, 0);
        let mut out = Vec::new();
        while a < self.members.len() && b < other.members.len() {
            match self.members[a].cmp(&other.members[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.members[a]);
                    a += 1;
                    b += 1;
                }
            }
        }
        out
    }

    /// Coordinate of a global node in this patch's frame.
    pub fn coord_of(&self, node: usize) -> Option<Point> {
        let k = self.local_index(node)?;
        self.local_coords.as_ref().map(|c| c[k])
    }

    /// Local edges re-indexed into `members` positions.
    pub fn local_graph(&self) -> Graph {
        Graph::new(
            self.members.len(),
            self.local_edges.iter().map(|m| {
                (self.local_index(m.i).unwrap(), self.local_index(m.j).unwrap())
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    /// Patch indices containing each node, indexed by node.
    pub node_to_patches: Vec<Vec<usize>>,
    /// Nodes that belong to no patch.
    pub unlocalizable: Vec<usize>,
    /// Patch pairs `(k, l)`, `k < l`, sharing at least [`MIN_OVERLAP`] nodes.
    pub adjacency: Vec<(usize, usize)>,
}

impl PatchSet {
    pub fn from_patches(node_count: usize, patches: Vec<Patch>) -> Self {
        let mut node_to_patches = vec![Vec::new(); node_count];
        for (k, p) in patches.iter().enumerate() {
            for &v in &p.members {
                node_to_patches[v].push(k);
            }
        }
        let unlocalizable = (0..node_count)
            .filter(|&v| node_to_patches[v].is_empty())
            .collect();
        let mut adjacency = Vec::new();
        for k in 0..patches.len() {
            for l in k + 1..patches.len() {
                if patches[k].shared_with(&patches[l]).len() >= MIN_OVERLAP {
                    adjacency.push((k, l));
                }
            }
        }
        Self {
            patches,
            node_to_patches,
            unlocalizable,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Shrinks `members` by repeatedly dropping the lowest-degree vertex
/// (ties to the smaller index) until the induced graph is globally rigid.
fn rigid_core(mut members: Vec<usize>, measured: &BTreeMap<(usize, usize), f64>) -> Option<Vec<usize>> {
    loop {
        if members.len() < 3 {
            return None;
        }
        let local = induced(&members, measured);
        if is_globally_rigid(&local) {
            return Some(members);
        }
        let deg = local.degrees();
        let drop = (0..members.len()).min_by_key(|&k| (deg[k], members[k])).unwrap();
        members.remove(drop);
    }
}

fn induced(members: &[usize], measured: &BTreeMap<(usize, usize), f64>) -> Graph {
    let mut edges = Vec::new();
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            if measured.contains_key(&(members[a], members[b])) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(members.len(), edges)
}

/// Splits the measurement graph into globally rigid patches, one per
/// distinct rigid core of a closed 1-hop neighborhood.
pub fn decompose(mg: &MeasurementGraph) -> Result<PatchSet> {
    let measured: BTreeMap<(usize, usize), f64> =
        mg.edges.iter().map(|m| ((m.i, m.j), m.d)).collect();
    let adj = mg.adjacency();

    let cores: Vec<Option<Vec<usize>>> = (0..mg.node_count)
        .into_par_iter()
        .map(|i| {
            let mut members: Vec<usize> = adj[i].iter().map(|&(j, _)| j).collect();
            members.push(i);
            members.sort_unstable();
            rigid_core(members, &measured)
        })
        .collect();

    let mut seen = std::collections::HashSet::new();
    let mut patches = Vec::new();
    for members in cores.into_iter().flatten() {
        if !seen.insert(members.clone()) {
            continue;
        }
        let mut local_edges = Vec::new();
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                if let Some(&d) = measured.get(&(members[a], members[b])) {
                    local_edges.push(Measurement { i: members[a], j: members[b], d });
                }
            }
        }
        patches.push(Patch::new(patches.len(), members, local_edges));
    }
    if patches.is_empty() {
        return Err(Error::UnlocalizableGraph);
    }
    Ok(PatchSet::from_patches(mg.node_count, patches))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Graph {
        Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    fn wheel(rim: usize) -> Graph {
        let mut e: Vec<_> = (0..rim).map(|i| (i, (i + 1) % rim)).collect();
        e.extend((0..rim).map(|i| (i, rim)));
        Graph::new(rim + 1, e)
    }

    fn unit_graph(n: usize, edges: &[(usize, usize)]) -> MeasurementGraph {
        MeasurementGraph::from_edges(n, edges.iter().map(|&(i, j)| (i, j, 1.0)))
    }

    #[test]
    fn small_rigidity_cases() {
        assert!(is_rigid(&Graph::complete(3)));
        assert!(!is_rigid(&cycle(4)));
        assert!(is_rigid(&Graph::new(1, [])));
        assert!(is_rigid(&Graph::new(2, [(0, 1)])));
        assert!(!is_rigid(&Graph::new(2, [])));
        // Two triangles hinged at a vertex flex.
        assert!(!is_rigid(&Graph::new(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)])));
        // Triangular prism is minimally rigid.
        let prism = Graph::new(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)]);
        assert!(is_rigid(&prism));
        assert_eq!(rigidity_rank(&prism), 9);
    }

    #[test]
    fn global_rigidity_cases() {
        assert!(is_globally_rigid(&Graph::complete(4)));
        assert!(is_globally_rigid(&Graph::complete(3)));
        assert!(is_globally_rigid(&Graph::complete(1)));
        assert!(is_globally_rigid(&Graph::complete(2)));
        assert!(!is_globally_rigid(&Graph::new(3, [(0, 1), (1, 2)])));
        let k4_minus = Graph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]);
        assert!(is_rigid(&k4_minus));
        assert!(!is_globally_rigid(&k4_minus));
        assert!(is_globally_rigid(&wheel(5)));
        // Rigid but not redundantly rigid: the prism.
        let prism = Graph::new(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)]);
        assert!(prism.is_3_connected());
        assert!(!is_globally_rigid(&prism));
    }

    #[test]
    fn three_connectivity() {
        assert!(Graph::complete(4).is_3_connected());
        assert!(!cycle(6).is_3_connected());
        assert!(!Graph::complete(3).is_3_connected());
        assert!(wheel(6).is_3_connected());
    }

    #[test]
    fn complete_graph_gives_single_patch() {
        let mg = unit_graph(5, Graph::complete(5).edges());
        let ps = decompose(&mg).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps.patches[0].members, vec![0, 1, 2, 3, 4]);
        assert_eq!(ps.patches[0].local_edges.len(), 10);
        assert!(ps.unlocalizable.is_empty());
        assert!(ps.adjacency.is_empty());
    }

    #[test]
    fn trees_are_unlocalizable() {
        let mg = unit_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(decompose(&mg), Err(Error::UnlocalizableGraph));
        let star = unit_graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(decompose(&star), Err(Error::UnlocalizableGraph));
    }

    #[test]
    fn two_k4_sharing_a_triangle() {
        // K4 on {0,1,2,3} and on {1,2,3,4}. Neighborhoods of 0 and 4 are the
        // two K4s; neighborhoods of 1, 2, 3 are the union, K5 minus (0,4),
        // which is 3-connected and redundantly rigid.
        let mut e: Vec<(usize, usize)> = Graph::complete(4).edges().to_vec();
        e.extend([(1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4)]);
        let mg = unit_graph(5, &e);
        let ps = decompose(&mg).unwrap();
        let members: Vec<_> = ps.patches.iter().map(|p| p.members.clone()).collect();
        assert_eq!(members, vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3, 4], vec![1, 2, 3, 4]]);
        assert_eq!(ps.patches[0].shared_with(&ps.patches[2]), vec![1, 2, 3]);
        assert_eq!(ps.adjacency, vec![(0, 1), (0, 2), (1, 2)]);
        for p in &ps.patches {
            assert!(is_globally_rigid(&p.local_graph()));
        }
    }

    #[test]
    fn splitting_drops_low_degree_members() {
        // Node 0 sees a K4 {1,2,3,4} plus a pendant 5; its neighborhood is
        // not globally rigid until 5 is dropped.
        let mut e: Vec<(usize, usize)> = vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)];
        e.extend([(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]);
        let mg = unit_graph(6, &e);
        let ps = decompose(&mg).unwrap();
        assert_eq!(ps.patches[0].members, vec![0, 1, 2, 3, 4]);
        assert_eq!(ps.unlocalizable, vec![5]);
        assert_eq!(ps.node_to_patches[5], Vec::<usize>::new());
    }

    #[test]
    fn decompose_is_deterministic() {
        let dep = crate::scenario::generate_annulus(40, 0.2, 1.0, 4).unwrap();
        let mg = crate::scenario::measure(&dep, 0.55, 0.0, 0).unwrap();
        let a = decompose(&mg).unwrap();
        let b = decompose(&mg).unwrap();
        assert_eq!(a, b);
        for p in &a.patches {
            assert!(p.members.len() >= 3);
            assert!(is_globally_rigid(&p.local_graph()));
        }
    }
}
