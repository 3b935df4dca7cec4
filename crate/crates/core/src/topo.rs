//! Topology extraction: MaxNTtop and the LMST and brute-force baselines.
//!
//! All three work on the same candidate set: node pairs in the same
//! localization component no farther apart than the transmission range at
//! the power cap.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::radio::{
    assign_power_lp, db_to_linear, directed_links, is_detectable, link_snr, PowerAssignment, RadioParams,
    RequiredLink,
};
use crate::rigidity::PatchSet;
use crate::scenario::MeasurementGraph;
use crate::sync::LocalizationResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    MaxNTtop,
    Lmst,
    BruteForce,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::MaxNTtop, Algorithm::BruteForce, Algorithm::Lmst];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::MaxNTtop => "maxnttop",
            Algorithm::Lmst => "lmst",
            Algorithm::BruteForce => "bruteforce",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxnttop" => Ok(Algorithm::MaxNTtop),
            "lmst" => Ok(Algorithm::Lmst),
            "bruteforce" | "brute_force" | "brute-force" => Ok(Algorithm::BruteForce),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm {s:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Node positions plus what topology extraction may know about them.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub positions: Vec<Point>,
    /// Nodes in different components are never candidates.
    pub component: Vec<usize>,
    /// Measurement-graph neighbors; empty lists fall back to the candidates.
    pub measured: Vec<Vec<usize>>,
    /// Initial patch label per node for MaxNTtop.
    pub groups: Vec<usize>,
    /// Member lists of the localization patches, if known.
    pub patches: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(positions: Vec<Point>) -> Self {
        let n = positions.len();
        Self {
            positions,
            component: vec![0; n],
            measured: vec![Vec::new(); n],
            groups: (0..n).collect(),
            patches: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_measurements(mut self, mg: &MeasurementGraph) -> Self {
        self.measured = mg
            .adjacency()
            .into_iter()
            .map(|row| row.into_iter().map(|(j, _)| j).collect())
            .collect();
        self
    }

    /// Partitions nodes among patches, larger patches first (ties by id);
    /// nodes in no patch stay alone.
    pub fn with_patches(mut self, ps: &PatchSet) -> Self {
        let n = self.len();
        let mut order: Vec<usize> = (0..ps.patches.len()).collect();
        order.sort_by_key(|&k| (std::cmp::Reverse(ps.patches[k].members.len()), k));
        let mut label = vec![usize::MAX; n];
        for k in order {
            for &v in &ps.patches[k].members {
                if label[v] == usize::MAX {
                    label[v] = n + k;
                }
            }
        }
        self.groups = (0..n).map(|v| if label[v] == usize::MAX { v } else { label[v] }).collect();
        self.patches = ps.patches.iter().map(|p| p.members.clone()).collect();
        self
    }

    /// Uses estimated coordinates. Unlocalized nodes sit in a component of
    /// their own and so take no part in any topology.
    pub fn from_localization(res: &LocalizationResult) -> Self {
        let n = res.coords.len();
        let base = res.component_count;
        let positions = res.coords.iter().map(|c| c.unwrap_or_default()).collect();
        let component = (0..n).map(|v| res.component[v].unwrap_or(base + v)).collect();
        Self {
            component,
            ..Self::new(positions)
        }
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.positions[i].dist(&self.positions[j])
    }

    /// Candidate pairs `(i, j, d)`, `i < j`, in index order.
    pub fn candidates(&self, params: &RadioParams) -> Vec<(usize, usize, f64)> {
        let range = params.transmission_range_km();
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = self.dist(i, j);
                if self.component[i] == self.component[j] && d > 0.0 && d <= range {
                    out.push((i, j, d));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoEdge {
    pub i: usize,
    pub j: usize,
    pub d_km: f64,
    /// SNR at `j` of `i`'s transmission and vice versa, in dB.
    pub snr_ij_db: f64,
    pub snr_ji_db: f64,
}

impl TopoEdge {
    /// The weaker direction bounds the usable link.
    pub fn snr_db(&self) -> f64 {
        self.snr_ij_db.min(self.snr_ji_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    /// Required edges after admission and pruning.
    pub required: usize,
    pub admitted: usize,
    pub pruned: usize,
    /// Edges detectable in both directions.
    pub links: usize,
    pub mean_snr_cap_db: f64,
    pub mean_snr_db: f64,
    pub gap_db: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub algo: Algorithm,
    pub n: usize,
    pub edges: Vec<TopoEdge>,
    pub powers: PowerAssignment,
    pub trace: Vec<TraceStep>,
    pub converged: bool,
    pub iterations: usize,
}

impl Topology {
    fn new(algo: Algorithm, n: usize) -> Self {
        Self {
            algo,
            n,
            edges: Vec::new(),
            powers: PowerAssignment::off(n),
            trace: Vec::new(),
            converged: true,
            iterations: 0,
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn snr_pair(i: usize, j: usize, d: f64, p: &PowerAssignment, params: &RadioParams) -> (f64, f64) {
    let h = params.gain(i, j);
    (
        link_snr(d, p.p_t_dbm[i], h, params).unwrap(),
        link_snr(d, p.p_t_dbm[j], h, params).unwrap(),
    )
}

fn both_ways(i: usize, j: usize, d: f64, p: &PowerAssignment, params: &RadioParams) -> bool {
    let h = params.gain(i, j);
    is_detectable(d, p.p_t_dbm[i], h, params).unwrap() && is_detectable(d, p.p_t_dbm[j], h, params).unwrap()
}

/// Every candidate pair detectable in both directions under `p`.
fn detectable_edges(
    cands: &[(usize, usize, f64)],
    p: &PowerAssignment,
    params: &RadioParams,
) -> Vec<TopoEdge> {
    cands
        .iter()
        .filter(|&&(i, j, d)| both_ways(i, j, d, p, params))
        .map(|&(i, j, d)| edge(i, j, d, p, params))
        .collect()
}

fn edge(i: usize, j: usize, d: f64, p: &PowerAssignment, params: &RadioParams) -> TopoEdge {
    let (a, b) = snr_pair(i, j, d, p, params);
    TopoEdge {
        i,
        j,
        d_km: d,
        snr_ij_db: a,
        snr_ji_db: b,
    }
}

/// LP powers for `required`, dropping edges the cap cannot serve.
fn lp_with_pruning(
    required: &mut Vec<(usize, usize, f64)>,
    n: usize,
    params: &RadioParams,
) -> Result<(PowerAssignment, usize)> {
    let mut pruned = 0;
    loop {
        match assign_power_lp(&directed_links(required, params), n, params) {
            Ok(p) => return Ok((p, pruned)),
            Err(Error::Infeasible { from, to, required_dbm }) => {
                log::info!("pruning edge {from}-{to}: needs {required_dbm:.2} dBm");
                let key = (from.min(to), from.max(to));
                required.retain(|&(i, j, _)| (i, j) != key);
                pruned += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, v: usize) -> usize {
        let mut r = v;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut v = v;
        while self.0[v] != r {
            let next = self.0[v];
            self.0[v] = r;
            v = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.0[hi] = lo;
        true
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// Mean directed SNR over `links` at the cap and at `p`, in dB.
fn snr_means(links: &[TopoEdge], p_cap: &PowerAssignment, params: &RadioParams) -> (f64, f64) {
    let at_cap = mean(links.iter().flat_map(|e| {
        let (a, b) = snr_pair(e.i, e.j, e.d_km, p_cap, params);
        [a, b]
    }));
    let at_p = mean(links.iter().flat_map(|e| [e.snr_ij_db, e.snr_ji_db]));
    (at_cap, at_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxNtConfig {
    /// Convergence threshold on the change of the SNR gap, dB.
    pub eps: f64,
    pub max_iters: usize,
    pub seed_edges: SeedEdges,
    /// Also admit every pair heard in one direction, so the weaker node
    /// must answer.
    pub reciprocate: bool,
}

/// Required edges before the first iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeedEdges {
    /// Each node's nearest candidate plus measured edges inside a group.
    Nearest,
    /// Each node's nearest candidate plus every measured edge.
    Measured,
    /// Each node's nearest candidate plus every pair sharing a patch.
    #[default]
    Patches,
}

impl Default for MaxNtConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            max_iters: 50,
            seed_edges: SeedEdges::Patches,
            reciprocate: true,
        }
    }
}

/// Iterative MaxNTtop.
///
/// Starts from each node's nearest-neighbor edge plus the seed edges (by
/// default every pair sharing a localization patch). Every iteration ranks
/// candidates by the weaker-direction SNR at the current powers and,
/// Kruskal style, admits the best edge joining two different patches
/// until no such edge is left, then admits every pair heard in one
/// direction. The required set only grows. Powers are reassigned by the LP
/// and the topology is every pair detectable both ways. The gap between
/// the mean SNR at the cap and at the assigned powers is tracked, and the
/// loop stops once it changes by at most `eps`.
pub fn max_nt_top(net: &Network, params: &RadioParams, cfg: &MaxNtConfig) -> Result<Topology> {
    if !(cfg.eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", cfg.eps)));
    }
    let n = net.len();
    let mut topo = Topology::new(Algorithm::MaxNTtop, n);
    if n <= 1 {
        topo.iterations = 1;
        topo.trace.push(TraceStep {
            iteration: 1,
            required: 0,
            admitted: 0,
            pruned: 0,
            links: 0,
            mean_snr_cap_db: 0.0,
            mean_snr_db: 0.0,
            gap_db: 0.0,
            delta: 0.0,
        });
        return Ok(topo);
    }
    let cands = net.candidates(params);
    let p_cap = PowerAssignment::uniform(n, params.p_tmax_dbm);

    let mut in_required = std::collections::BTreeSet::new();
    let mut nearest: Vec<Option<(f64, usize)>> = vec![None; n];
    for &(i, j, d) in &cands {
        for (a, b) in [(i, j), (j, i)] {
            if nearest[a].is_none_or(|(bd, bj)| (d, b) < (bd, bj)) {
                nearest[a] = Some((d, b));
            }
        }
    }
    for (a, nn) in nearest.iter().enumerate() {
        if let Some((_, b)) = nn {
            in_required.insert((a.min(*b), a.max(*b)));
        }
    }
    let cand_index: std::collections::BTreeMap<(usize, usize), f64> =
        cands.iter().map(|&(i, j, d)| ((i, j), d)).collect();
    for i in 0..n {
        for &j in &net.measured[i] {
            let key = (i.min(j), i.max(j));
            let inside = cfg.seed_edges == SeedEdges::Measured || net.groups[i] == net.groups[j];
            if inside && cand_index.contains_key(&key) {
                in_required.insert(key);
            }
        }
    }
    if cfg.seed_edges == SeedEdges::Patches {
        for members in &net.patches {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    let key = (a.min(b), a.max(b));
                    if cand_index.contains_key(&key) {
                        in_required.insert(key);
                    }
                }
            }
        }
    }
    let mut required: Vec<(usize, usize, f64)> = in_required.iter().map(|k| (k.0, k.1, cand_index[k])).collect();
    let (mut powers, _) = lp_with_pruning(&mut required, n, params)?;
    let links = detectable_edges(&cands, &powers, params);
    let (cap0, at0) = snr_means(&links, &p_cap, params);
    let mut prev_gap = cap0 - at0;

    // Group labels compressed to 0..m for the union-find.
    let mut labels: Vec<usize> = net.groups.clone();
    labels.sort_unstable();
    labels.dedup();
    let group_of: Vec<usize> = net.groups.iter().map(|g| labels.binary_search(g).unwrap()).collect();

    for it in 1..=cfg.max_iters {
        let mut ranked: Vec<(f64, usize, usize, f64)> = cands
            .iter()
            .map(|&(i, j, d)| {
                let (a, b) = snr_pair(i, j, d, &powers, params);
                (a.min(b), i, j, d)
            })
            .collect();
        ranked.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then((x.1, x.2).cmp(&(y.1, y.2)))
        });
        let mut dsu = Dsu::new(labels.len());
        let mut admitted = 0;
        for &(_, i, j, d) in &ranked {
            if dsu.union(group_of[i], group_of[j]) && in_required.insert((i, j)) {
                required.push((i, j, d));
                admitted += 1;
            }
        }
        if cfg.reciprocate {
            for &(i, j, d) in &cands {
                let h = params.gain(i, j);
                let heard = is_detectable(d, powers.p_t_dbm[i], h, params)? || is_detectable(d, powers.p_t_dbm[j], h, params)?;
                if heard && in_required.insert((i, j)) {
                    required.push((i, j, d));
                    admitted += 1;
                }
            }
        }
        required.sort_by_key(|a| (a.0, a.1));
        let (p, pruned) = lp_with_pruning(&mut required, n, params)?;
        if pruned > 0 {
            in_required = required.iter().map(|&(i, j, _)| (i, j)).collect();
        }
        powers = p;
        let links = detectable_edges(&cands, &powers, params);
        let (cap, at) = snr_means(&links, &p_cap, params);
        let gap = cap - at;
        let delta = (gap - prev_gap).abs();
        prev_gap = gap;
        topo.trace.push(TraceStep {
            iteration: it,
            required: required.len(),
            admitted,
            pruned,
            links: links.len(),
            mean_snr_cap_db: cap,
            mean_snr_db: at,
            gap_db: gap,
            delta,
        });
        topo.edges = links;
        topo.iterations = it;
        if delta <= cfg.eps {
            topo.powers = powers;
            topo.converged = true;
            return Ok(topo);
        }
    }
    topo.powers = powers;
    topo.converged = false;
    Err(Error::NotConverged(Box::new(topo)))
}

/// Local minimum spanning tree topology: each node keeps the edges to its
/// direct neighbors in the MST of its own neighborhood, and the kept edges
/// of all nodes are united.
pub fn lmst(net: &Network, params: &RadioParams) -> Result<Topology> {
    let n = net.len();
    let mut topo = Topology::new(Algorithm::Lmst, n);
    let cands = net.candidates(params);
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j, _) in &cands {
        nbrs[i].push(j);
        nbrs[j].push(i);
    }
    let in_range = |a: usize, b: usize| {
        let d = net.dist(a, b);
        net.component[a] == net.component[b] && d > 0.0 && d <= params.transmission_range_km()
    };
    let mut kept = std::collections::BTreeSet::new();
    for u in 0..n {
        let mut local: Vec<usize> = nbrs[u].clone();
        local.push(u);
        local.sort_unstable();
        let pos = |v: usize| local.binary_search(&v).unwrap();
        let mut edges: Vec<(f64, usize, usize)> = Vec::new();
        for (x, &a) in local.iter().enumerate() {
            for &b in &local[x + 1..] {
                if in_range(a, b) {
                    edges.push((net.dist(a, b), a, b));
                }
            }
        }
        edges.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then((x.1, x.2).cmp(&(y.1, y.2))));
        let mut dsu = Dsu::new(local.len());
        for &(_, a, b) in &edges {
            if dsu.union(pos(a), pos(b)) && (a == u || b == u) {
                kept.insert((a, b));
            }
        }
    }
    let required: Vec<(usize, usize, f64)> = kept.iter().map(|&(a, b)| (a, b, net.dist(a, b))).collect();
    topo.powers = assign_power_lp(&directed_links(&required, params), n, params)?;
    topo.edges = required
        .iter()
        .map(|&(a, b, d)| edge(a, b, d, &topo.powers, params))
        .collect();
    Ok(topo)
}

/// Per-node grid search: the lowest power on a `step_db` grid, starting at
/// the receiver-floor power for the nearest neighbor, that reaches the
/// farthest measured neighbor. The topology is every pair detectable both
/// ways at the chosen powers.
pub fn brute_force(net: &Network, params: &RadioParams, step_db: f64) -> Result<Topology> {
    if !(step_db > 0.0) {
        return Err(Error::InvalidArgument(format!("step_db must be positive, got {step_db}")));
    }
    let n = net.len();
    let mut topo = Topology::new(Algorithm::BruteForce, n);
    topo.iterations = 1;
    let cands = net.candidates(params);
    let mut reach: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j, _) in &cands {
        reach[i].push(j);
        reach[j].push(i);
    }
    for i in 0..n {
        let pool: Vec<usize> = if net.measured[i].is_empty() {
            reach[i].clone()
        } else {
            net.measured[i]
                .iter()
                .copied()
                .filter(|&j| reach[i].contains(&j))
                .collect()
        };
        let Some(&far) = pool
            .iter()
            .max_by(|&&a, &&b| net.dist(i, a).partial_cmp(&net.dist(i, b)).unwrap().then(b.cmp(&a)))
        else {
            continue;
        };
        let near = reach[i]
            .iter()
            .map(|&j| net.dist(i, j))
            .fold(f64::INFINITY, f64::min);
        let floor = params.p_rmin_dbm + 10.0 * params.nu * near.log10();
        let d_far = net.dist(i, far);
        let h = params.gain(i, far);
        let steps = ((params.p_tmax_dbm - floor) / step_db).floor().max(0.0) as usize;
        let chosen = (0..=steps)
            .map(|k| floor + k as f64 * step_db)
            .chain(std::iter::once(params.p_tmax_dbm))
            .find(|&p| is_detectable(d_far, p, h, params).unwrap());
        topo.powers.p_t_dbm[i] = match chosen {
            Some(p) => p,
            None => {
                log::info!("node {i} cannot reach node {far} at the cap");
                params.p_tmax_dbm
            }
        };
    }
    topo.edges = detectable_edges(&cands, &topo.powers, params);
    Ok(topo)
}

pub fn avg_node_degree(t: &Topology) -> Result<f64> {
    if t.n == 0 {
        return Err(Error::EmptyNetwork);
    }
    Ok(2.0 * t.edges.len() as f64 / t.n as f64)
}

pub fn shannon_rate(snr_db: f64, params: &RadioParams) -> f64 {
    if snr_db == f64::NEG_INFINITY {
        return 0.0;
    }
    params.bandwidth_hz * (1.0 + db_to_linear(snr_db)).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub total_bps: f64,
    pub per_link_bps: f64,
    pub matched: Vec<(usize, usize)>,
}

/// Greedy maximum-weight matching on link rates: every node serves at most
/// one concurrent link. Ties go to the smaller index pair.
pub fn network_throughput(t: &Topology, params: &RadioParams) -> Throughput {
    let mut links: Vec<(f64, usize, usize)> = t
        .edges
        .iter()
        .map(|e| (shannon_rate(e.snr_db(), params), e.i.min(e.j), e.i.max(e.j)))
        .collect();
    links.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut busy = vec![false; t.n];
    let mut matched = Vec::new();
    let mut total = 0.0;
    for (rate, i, j) in links {
        if rate > 0.0 && !busy[i] && !busy[j] {
            busy[i] = true;
            busy[j] = true;
            matched.push((i, j));
            total += rate;
        }
    }
    let per_link = if matched.is_empty() { 0.0 } else { total / matched.len() as f64 };
    Throughput {
        total_bps: total,
        per_link_bps: per_link,
        matched,
    }
}

/// Directed links of a topology, for checks and power recomputation.
pub fn topology_links(t: &Topology, params: &RadioParams) -> Vec<RequiredLink> {
    let undirected: Vec<(usize, usize, f64)> = t.edges.iter().map(|e| (e.i, e.j, e.d_km)).collect();
    directed_links(&undirected, params)
}
