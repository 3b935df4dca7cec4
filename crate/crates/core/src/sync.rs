//! Stitching embedded patches into one global frame.
//!
//! Every overlapping patch pair yields a relative reflection, rotation and
//! translation from a complex least-squares fit. Reflections and rotations
//! are then synchronized globally from the top eigenvector of the
//! degree-normalized measurement matrix, and node coordinates are recovered
//! from the edge offsets by least squares. Mirroring is applied first
//! (across the x-axis), then rotation, then translation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_patch, EmbedConfig, COINCIDENCE_KM};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::metrics::aligned_errors;
use crate::rigidity::{decompose, Patch, PatchSet, MIN_OVERLAP};
use crate::scenario::MeasurementGraph;

/// Eigenvector components smaller than this leave a patch unsynchronized.
pub const ZERO_COMPONENT: f64 = 1e-12;

/// Best unit-modulus rotation and translation mapping `source` onto
/// `target` in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationFit {
    pub rotation: Complex64,
    pub translation: Complex64,
    pub residual: f64,
}

/// Solves `min |A xi - B|^2` with `A = [source, 1]`, `B = target` through
/// the normal equations, then projects the rotation onto the unit circle and
/// refits the translation. `None` when either point set is coincident.
pub fn fit_rotation(target: &[Complex64], source: &[Complex64]) -> Option<RotationFit> {
    let n = source.len() as f64;
    let a11: f64 = source.iter().map(|s| s.norm_sqr()).sum();
    let s_sum: Complex64 = source.iter().sum();
    let t_sum: Complex64 = target.iter().sum();
    let b1: Complex64 = source.iter().zip(target).map(|(s, t)| s.conj() * t).sum();
    // det = n * sum |s - mean(s)|^2
    let det = a11 * n - s_sum.norm_sqr();
    if det <= n * n * COINCIDENCE_KM * COINCIDENCE_KM {
        return None;
    }
    let r = (b1 * n - s_sum.conj() * t_sum) / det;
    if r.norm() < f64::EPSILON {
        return None;
    }
    let rotation = r / r.norm();
    let translation = (t_sum - rotation * s_sum) / n;
    let residual = source
        .iter()
        .zip(target)
        .map(|(s, t)| (t - rotation * s - translation).norm_sqr())
        .sum();
    Some(RotationFit {
        rotation,
        translation,
        residual,
    })
}

/// Relative motion between two patches: `p_k ~ e^{i theta} M(p_l) + tau`
/// on shared nodes, where `M` mirrors across the x-axis when `z = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAlignment {
    pub k: usize,
    pub l: usize,
    pub shared: Vec<usize>,
    /// +1 direct, -1 mirrored, 0 when the patches cannot be aligned.
    pub z: i8,
    /// Radians in `[0, 2pi)`.
    pub theta: f64,
    pub tau: Complex64,
    pub residual: f64,
}

impl PairAlignment {
    pub fn rotation(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.theta)
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

fn shared_coords(pk: &Patch, pl: &Patch, shared: &[usize]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let missing = |p: &Patch| Error::InvalidArgument(format!("patch {} has no local coordinates", p.patch_id));
    let ck = pk.local_coords.as_ref().ok_or_else(|| missing(pk))?;
    let cl = pl.local_coords.as_ref().ok_or_else(|| missing(pl))?;
    let pick = |p: &Patch, c: &[Point]| -> Vec<Complex64> {
        shared.iter().map(|&v| c[p.local_index(v).unwrap()].to_complex()).collect()
    };
    Ok((pick(pk, ck), pick(pl, cl)))
}

/// Aligns patch `pl` onto patch `pk`, trying both `pl` and its mirror image
/// and keeping whichever fits better (ties keep the direct fit).
pub fn align_pair(pk: &Patch, pl: &Patch) -> Result<PairAlignment> {
    let shared = pk.shared_with(pl);
    let mut out = PairAlignment {
        k: pk.patch_id,
        l: pl.patch_id,
        shared,
        z: 0,
        theta: 0.0,
        tau: Complex64::new(0.0, 0.0),
        residual: 0.0,
    };
    if out.shared.len() < MIN_OVERLAP {
        return Ok(out);
    }
    let (target, source) = shared_coords(pk, pl, &out.shared)?;
    let mirrored: Vec<Complex64> = source.iter().map(|s| s.conj()).collect();
    let degenerate = || Error::DegenerateOverlap(pk.patch_id, pl.patch_id);
    let direct = fit_rotation(&target, &source).ok_or_else(degenerate)?;
    let flipped = fit_rotation(&target, &mirrored).ok_or_else(degenerate)?;
    let (z, fit) = if direct.residual <= flipped.residual {
        (1, direct)
    } else {
        (-1, flipped)
    };
    out.z = z;
    out.theta = wrap_angle(fit.rotation.arg());
    out.tau = fit.translation;
    out.residual = fit.residual;
    Ok(out)
}

/// Sparse pairwise measurements between patches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyncState {
    pub patch_count: usize,
    /// Relative reflections `z_kl` for `k < l`; `Z` is symmetric.
    pub z: BTreeMap<(usize, usize), i8>,
    /// Relative rotations `R_kl` for `k < l`; `R_lk = conj(R_kl)`.
    pub r: BTreeMap<(usize, usize), Complex64>,
}

impl SyncState {
    pub fn new(patch_count: usize) -> Self {
        Self {
            patch_count,
            ..Self::default()
        }
    }

    /// Records `z_kl = z_lk`; zero entries are not stored.
    pub fn set_reflection(&mut self, k: usize, l: usize, z: i8) {
        assert!(k != l && k < self.patch_count && l < self.patch_count);
        let key = (k.min(l), k.max(l));
        if z == 0 {
            self.z.remove(&key);
        } else {
            self.z.insert(key, z.signum());
        }
    }

    /// Records `R_kl = phase` (and so `R_lk = conj(phase)`).
    pub fn set_rotation(&mut self, k: usize, l: usize, phase: Complex64) {
        assert!(k != l && k < self.patch_count && l < self.patch_count);
        if k < l {
            self.r.insert((k, l), phase);
        } else {
            self.r.insert((l, k), phase.conj());
        }
    }

    /// Reflection entries from pairwise alignments.
    pub fn from_alignments(patch_count: usize, alignments: &[PairAlignment]) -> Self {
        let mut s = Self::new(patch_count);
        for a in alignments {
            s.set_reflection(a.k, a.l, a.z);
        }
        s
    }

    pub fn z_rows(&self) -> Vec<Vec<(usize, Complex64)>> {
        let mut rows = vec![Vec::new(); self.patch_count];
        for (&(k, l), &z) in &self.z {
            let v = Complex64::new(z as f64, 0.0);
            rows[k].push((l, v));
            rows[l].push((k, v));
        }
        rows
    }

    pub fn r_rows(&self) -> Vec<Vec<(usize, Complex64)>> {
        let mut rows = vec![Vec::new(); self.patch_count];
        for (&(k, l), &v) in &self.r {
            rows[k].push((l, v));
            rows[l].push((k, v.conj()));
        }
        rows
    }

    /// Diagonal of the degree matrix for the reflection graph.
    pub fn reflection_degree(&self) -> Vec<usize> {
        self.z_rows().iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 10_000,
        }
    }
}

/// Top eigenvector of `Delta^-1 M` per connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSync {
    /// Unit-2-norm eigenvector entries per component, indexed by patch.
    pub vector: Vec<Complex64>,
    /// Connected-component label per patch, numbered by smallest member.
    pub component: Vec<usize>,
    /// Iterations used per component.
    pub iterations: Vec<usize>,
    /// False if any component hit the iteration cap.
    pub converged: bool,
}

fn components(rows: &[Vec<(usize, Complex64)>]) -> Vec<usize> {
    let n = rows.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &(w, _) in &rows[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

/// Power iteration on `(I + Delta^-1 M) / 2`. The shift makes every
/// eigenvalue nonnegative without moving the eigenvectors, so the iteration
/// cannot lock onto the `-1` end of a bipartite spectrum. The start vector
/// is a fixed pseudo-random positive vector.
pub fn top_eigenvector(rows: &[Vec<(usize, Complex64)>], opts: &PowerIteration) -> EigenSync {
    let n = rows.len();
    let component = components(rows);
    let count = component.iter().copied().max().map_or(0, |m| m + 1);
    let mut vector = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = vec![0; count];
    let mut converged = true;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1234);

    for c in 0..count {
        let members: Vec<usize> = (0..n).filter(|&v| component[v] == c).collect();
        if members.len() == 1 {
            vector[members[0]] = Complex64::new(1.0, 0.0);
            continue;
        }
        let mut v: Vec<Complex64> = members
            .iter()
            .map(|_| Complex64::new(rng.random_range(0.5..1.5), 0.0))
            .collect();
        normalize(&mut v);
        let pos: BTreeMap<usize, usize> = members.iter().enumerate().map(|(a, &m)| (m, a)).collect();
        let mut done = false;
        for it in 1..=opts.max_iters {
            let next: Vec<Complex64> = members
                .iter()
                .enumerate()
                .map(|(a, &m)| {
                    let row = &rows[m];
                    let acc: Complex64 = row.iter().map(|&(w, x)| x * v[pos[&w]]).sum();
                    (v[a] + acc / row.len() as f64) * 0.5
                })
                .collect();
            let mut next = next;
            normalize(&mut next);
            let diff: f64 = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            v = next;
            iterations[c] = it;
            if diff < opts.tol {
                done = true;
                break;
            }
        }
        converged &= done;
        for (a, &m) in members.iter().enumerate() {
            vector[m] = v[a];
        }
    }
    EigenSync {
        vector,
        component,
        iterations,
        converged,
    }
}

fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSync {
    /// Global reflection per patch; the first patch of each component is +1.
    pub signs: Vec<i8>,
    pub component: Vec<usize>,
    /// Patches whose eigenvector entry vanished; their sign defaults to +1.
    pub flagged: Vec<usize>,
    pub converged: bool,
}

impl ReflectionSync {
    pub fn component_count(&self) -> usize {
        self.component.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Global reflections from the top eigenvector of `Delta^-1 Z`. Patches
/// with sign -1 are to be replaced by their mirror image.
pub fn sync_reflections(state: &SyncState, opts: &PowerIteration) -> ReflectionSync {
    let eig = top_eigenvector(&state.z_rows(), opts);
    let n = state.patch_count;
    let mut signs = vec![1i8; n];
    let mut flagged = Vec::new();
    for k in 0..n {
        let x = eig.vector[k].re;
        if x.abs() < ZERO_COMPONENT {
            flagged.push(k);
        } else if x < 0.0 {
            signs[k] = -1;
        }
    }
    // Fix each component's global sign by its first patch.
    let mut anchor: BTreeMap<usize, i8> = BTreeMap::new();
    for k in 0..n {
        if !flagged.contains(&k) {
            anchor.entry(eig.component[k]).or_insert(signs[k]);
        }
    }
    for k in 0..n {
        if !flagged.contains(&k) {
            signs[k] *= anchor[&eig.component[k]];
        }
    }
    ReflectionSync {
        signs,
        component: eig.component,
        flagged,
        converged: eig.converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSync {
    /// Global rotation per patch in `[0, 2pi)`; the first patch of each
    /// component is at 0.
    pub angles: Vec<f64>,
    pub component: Vec<usize>,
    /// Patches whose eigenvector entry vanished; left unsynchronized.
    pub flagged: Vec<usize>,
    pub converged: bool,
}

/// Global rotations from the top eigenvector of `Delta^-1 R`:
/// `e^{i theta_k} = v_k / |v_k|`. Reflections must already be applied to
/// the entries of `R`.
pub fn sync_rotations(state: &SyncState, opts: &PowerIteration) -> RotationSync {
    let eig = top_eigenvector(&state.r_rows(), opts);
    let n = state.patch_count;
    let flagged: Vec<usize> = (0..n).filter(|&k| eig.vector[k].norm() < ZERO_COMPONENT).collect();
    let mut gauge: BTreeMap<usize, Complex64> = BTreeMap::new();
    for k in 0..n {
        if !flagged.contains(&k) {
            let v = eig.vector[k];
            gauge.entry(eig.component[k]).or_insert((v / v.norm()).conj());
        }
    }
    let angles = (0..n)
        .map(|k| {
            if flagged.contains(&k) {
                return 0.0;
            }
            let v = eig.vector[k];
            wrap_angle((v / v.norm() * gauge[&eig.component[k]]).arg())
        })
        .collect();
    RotationSync {
        angles,
        component: eig.component,
        flagged,
        converged: eig.converged,
    }
}

/// One aggregated equation `c (x_i - x_j) = gamma_x` (and likewise for y),
/// where `c` counts the patches containing edge `(i, j)` and `gamma` sums
/// their local offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationRow {
    pub i: usize,
    pub j: usize,
    pub coefficient: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationSystem {
    pub node_count: usize,
    pub rows: Vec<TranslationRow>,
    /// Recovered coordinates, zero centroid per component; `None` for nodes
    /// in no row.
    pub solution: Vec<Option<Point>>,
    /// Connected component of the edge-incidence system per node.
    pub component: Vec<Option<usize>>,
}

/// Least-squares node coordinates from the edge offsets of oriented
/// patches. Per-patch translations are eliminated, not estimated.
pub fn solve_translations(node_count: usize, patches: &[&Patch]) -> Result<TranslationSystem> {
    solve_translations_for(node_count, patches, |_| true)
}

fn solve_translations_for(
    node_count: usize,
    patches: &[&Patch],
    include: impl Fn(usize) -> bool,
) -> Result<TranslationSystem> {
    let mut agg: BTreeMap<(usize, usize), (f64, f64, f64)> = BTreeMap::new();
    for p in patches {
        let coords = p.local_coords.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("patch {} has no local coordinates", p.patch_id))
        })?;
        for e in &p.local_edges {
            if !(include(e.i) && include(e.j)) {
                continue;
            }
            let off = coords[p.local_index(e.i).unwrap()] - coords[p.local_index(e.j).unwrap()];
            let entry = agg.entry((e.i, e.j)).or_insert((0.0, 0.0, 0.0));
            entry.0 += 1.0;
            entry.1 += off.x;
            entry.2 += off.y;
        }
    }
    let rows: Vec<TranslationRow> = agg
        .into_iter()
        .map(|((i, j), (c, gx, gy))| TranslationRow {
            i,
            j,
            coefficient: c,
            gamma_x: gx,
            gamma_y: gy,
        })
        .collect();

    // Dense normal equations over the nodes that appear in some row.
    let mut index = vec![usize::MAX; node_count];
    let mut nodes = Vec::new();
    for r in &rows {
        for v in [r.i, r.j] {
            if index[v] == usize::MAX {
                index[v] = nodes.len();
                nodes.push(v);
            }
        }
    }
    let m = nodes.len();
    let mut adj = vec![Vec::new(); m];
    let mut lap = DMatrix::<f64>::zeros(m, m);
    let mut bx = vec![0.0; m];
    let mut by = vec![0.0; m];
    for r in &rows {
        let (a, b) = (index[r.i], index[r.j]);
        let w = r.coefficient * r.coefficient;
        lap[(a, a)] += w;
        lap[(b, b)] += w;
        lap[(a, b)] -= w;
        lap[(b, a)] -= w;
        bx[a] += r.coefficient * r.gamma_x;
        bx[b] -= r.coefficient * r.gamma_x;
        by[a] += r.coefficient * r.gamma_y;
        by[b] -= r.coefficient * r.gamma_y;
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; m];
    let mut comp_count = 0;
    for s in 0..m {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = comp_count;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = comp_count;
                    stack.push(w);
                }
            }
        }
        comp_count += 1;
    }
    // The null space is one constant vector per component; pinning each
    // component's sum to zero removes it.
    for a in 0..m {
        for b in 0..m {
            if comp[a] == comp[b] {
                lap[(a, b)] += 1.0;
            }
        }
    }
    let chol = lap
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("translation system is not positive definite".into()))?;
    let x = chol.solve(&nalgebra::DVector::from_vec(bx));
    let y = chol.solve(&nalgebra::DVector::from_vec(by));

    let mut solution = vec![None; node_count];
    let mut component = vec![None; node_count];
    for c in 0..comp_count {
        let members: Vec<usize> = (0..m).filter(|&a| comp[a] == c).collect();
        let k = members.len() as f64;
        let cx = members.iter().map(|&a| x[a]).sum::<f64>() / k;
        let cy = members.iter().map(|&a| y[a]).sum::<f64>() / k;
        for &a in &members {
            solution[nodes[a]] = Some(Point::new(x[a] - cx, y[a] - cy));
            component[nodes[a]] = Some(c);
        }
    }
    Ok(TranslationSystem {
        node_count,
        rows,
        solution,
        component,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeConfig {
    pub embed: EmbedConfig,
    pub power: PowerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDiagnostics {
    pub patch_id: usize,
    pub size: usize,
    pub embedded: bool,
    pub mds_stress: f64,
    pub final_stress: f64,
    pub sweeps: usize,
    pub reflection: i8,
    pub rotation: f64,
    pub component: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    /// Estimated position per node; `None` if the node was not localized.
    pub coords: Vec<Option<Point>>,
    /// Alignment component per localized node. Components have independent
    /// gauges.
    pub component: Vec<Option<usize>>,
    pub unlocalized: Vec<usize>,
    pub patches: Vec<PatchDiagnostics>,
    pub alignments: usize,
    pub component_count: usize,
    /// Per-node error after rigid alignment to the truth (simulation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors_km: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_km: Option<f64>,
}

impl LocalizationResult {
    pub fn localized_count(&self) -> usize {
        self.coords.iter().filter(|c| c.is_some()).count()
    }

    /// Fills per-node errors and the RMS, aligning each component to the
    /// truth separately.
    pub fn evaluate(&mut self, truth: &[Point]) -> Result<f64> {
        if truth.len() != self.coords.len() {
            return Err(Error::LengthMismatch(truth.len(), self.coords.len()));
        }
        let mut errors = vec![None; truth.len()];
        let mut sq = 0.0;
        let mut count = 0usize;
        for c in 0..self.component_count {
            let nodes: Vec<usize> = (0..truth.len())
                .filter(|&v| self.component[v] == Some(c) && self.coords[v].is_some())
                .collect();
            if nodes.is_empty() {
                continue;
            }
            let est: Vec<Point> = nodes.iter().map(|&v| self.coords[v].unwrap()).collect();
            let tru: Vec<Point> = nodes.iter().map(|&v| truth[v]).collect();
            for (&v, e) in nodes.iter().zip(aligned_errors(&est, &tru)?) {
                errors[v] = Some(e);
                sq += e * e;
                count += 1;
            }
        }
        let rms = if count == 0 { 0.0 } else { (sq / count as f64).sqrt() };
        self.errors_km = Some(errors);
        self.rms_km = Some(rms);
        Ok(rms)
    }
}

/// Full localization: decompose, embed, align, synchronize, translate.
pub fn localize(mg: &MeasurementGraph, cfg: &LocalizeConfig) -> Result<LocalizationResult> {
    let patch_set = decompose(mg)?;
    localize_patches(mg.node_count, patch_set, cfg)
}

/// Localization from a precomputed decomposition.
pub fn localize_patches(node_count: usize, patch_set: PatchSet, cfg: &LocalizeConfig) -> Result<LocalizationResult> {
    let PatchSet { mut patches, adjacency, .. } = patch_set;
    let n_patches = patches.len();

    let embedded: Vec<Option<(crate::embed::EmbedReport, Vec<f64>)>> = patches
        .par_iter_mut()
        .map(|p| match embed_patch(p, &cfg.embed) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("patch {} not embedded: {e}", p.patch_id);
                None
            }
        })
        .collect();
    let ok: Vec<bool> = embedded.iter().map(Option::is_some).collect();

    let alignments: Vec<PairAlignment> = adjacency
        .par_iter()
        .filter(|&&(k, l)| ok[k] && ok[l])
        .filter_map(|&(k, l)| match align_pair(&patches[k], &patches[l]) {
            Ok(a) => Some(a),
            Err(e) => {
                log::warn!("patches {k} and {l} not aligned: {e}");
                None
            }
        })
        .collect();
    let aligned: Vec<&PairAlignment> = alignments.iter().filter(|a| a.z != 0).collect();

    let mut state = SyncState::from_alignments(n_patches, &alignments);
    let reflections = sync_reflections(&state, &cfg.power);
    for (k, p) in patches.iter_mut().enumerate() {
        if reflections.signs[k] < 0 {
            if let Some(c) = p.local_coords.as_mut() {
                c.iter_mut().for_each(|q| *q = q.mirrored());
            }
        }
    }

    // Relative rotations between the now consistently reflected patches.
    // The fit maps l onto k, so R_kl is its conjugate.
    for a in &aligned {
        let shared = &a.shared;
        let (target, source) = shared_coords(&patches[a.k], &patches[a.l], shared)?;
        let same = reflections.signs[a.k] * reflections.signs[a.l] == a.z;
        if !same {
            log::debug!("patches {} and {} disagree with the synchronized reflections", a.k, a.l);
        }
        if let Some(fit) = fit_rotation(&target, &source) {
            state.set_rotation(a.k, a.l, fit.rotation.conj());
        }
    }
    let rotations = sync_rotations(&state, &cfg.power);
    if !(reflections.converged && rotations.converged) {
        log::warn!("synchronization hit the power-iteration cap");
    }
    for (k, p) in patches.iter_mut().enumerate() {
        let phase = Complex64::from_polar(1.0, rotations.angles[k]);
        if let Some(c) = p.local_coords.as_mut() {
            c.iter_mut().for_each(|q| *q = Point::from_complex(phase * q.to_complex()));
        }
    }

    // Assign each node to the alignment component holding most of its
    // patches (ties to the lower label), then solve each component alone.
    let comp_of_patch = &reflections.component;
    let usable: Vec<bool> = (0..n_patches)
        .map(|k| ok[k] && !reflections.flagged.contains(&k) && !rotations.flagged.contains(&k))
        .collect();
    let mut node_comp: Vec<Option<usize>> = vec![None; node_count];
    {
        let mut votes: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); node_count];
        for (k, p) in patches.iter().enumerate().filter(|(k, _)| usable[*k]) {
            for &v in &p.members {
                *votes[v].entry(comp_of_patch[k]).or_default() += 1;
            }
        }
        for (v, tally) in votes.iter().enumerate() {
            node_comp[v] = tally
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&c, _)| c);
        }
    }

    let mut coords = vec![None; node_count];
    let mut component = vec![None; node_count];
    let mut labels: Vec<usize> = node_comp.iter().flatten().copied().collect();
    labels.sort_unstable();
    labels.dedup();
    for (new_label, &c) in labels.iter().enumerate() {
        let members: Vec<&Patch> = (0..n_patches)
            .filter(|&k| usable[k] && comp_of_patch[k] == c)
            .map(|k| &patches[k])
            .collect();
        let system = solve_translations_for(node_count, &members, |v| node_comp[v] == Some(c))?;
        for v in 0..node_count {
            if let Some(p) = system.solution[v] {
                coords[v] = Some(p);
                component[v] = Some(new_label);
            }
        }
    }
    let unlocalized = (0..node_count).filter(|&v| coords[v].is_none()).collect();

    let patches_diag = (0..n_patches)
        .map(|k| {
            let (mds_stress, final_stress, sweeps) = embedded[k]
                .as_ref()
                .map_or((f64::NAN, f64::NAN, 0), |(r, _)| (r.mds_stress, r.final_stress, r.sweeps));
            PatchDiagnostics {
                patch_id: k,
                size: patches[k].members.len(),
                embedded: ok[k],
                mds_stress,
                final_stress,
                sweeps,
                reflection: reflections.signs[k],
                rotation: rotations.angles[k],
                component: comp_of_patch[k],
                flagged: !usable[k],
            }
        })
        .collect();
    Ok(LocalizationResult {
        coords,
        component,
        unlocalized,
        patches: patches_diag,
        alignments: aligned.len(),
        component_count: labels.len(),
        errors_km: None,
        rms_km: None,
    })
}
