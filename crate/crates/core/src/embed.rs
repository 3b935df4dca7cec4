//! Local coordinates for a single patch: distance completion, classical
//! MDS, and refinement by iterative majorization over the measured edges.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::rigidity::Patch;

/// Distances below this (km) count as coincident.
pub const COINCIDENCE_KM: f64 = 1e-9;

/// Lower bound used when completing a missing distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBound {
    /// Largest measured distance incident to either endpoint.
    #[default]
    Incident,
    /// Triangle inequality through common neighbors, `max_k |d_ik - d_jk|`.
    Triangle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDistances {
    pub size: usize,
    pub d: DMatrix<f64>,
    /// True where the entry was estimated rather than measured.
    pub completed_mask: DMatrix<bool>,
}

impl CompletedDistances {
    /// Wraps a full distance matrix with nothing completed.
    pub fn from_matrix(d: DMatrix<f64>) -> Self {
        let size = d.nrows();
        Self {
            size,
            d,
            completed_mask: DMatrix::from_element(size, size, false),
        }
    }

    pub fn from_points(points: &[Point]) -> Self {
        let n = points.len();
        Self::from_matrix(DMatrix::from_fn(n, n, |a, b| points[a].dist(&points[b])))
    }
}

fn measured_matrix(patch: &Patch) -> DMatrix<Option<f64>> {
    let n = patch.members.len();
    let mut m = DMatrix::from_element(n, n, None);
    for e in &patch.local_edges {
        let (a, b) = (patch.local_index(e.i).unwrap(), patch.local_index(e.j).unwrap());
        m[(a, b)] = Some(e.d);
        m[(b, a)] = Some(e.d);
    }
    m
}

/// Fills every unmeasured pair with the midpoint of a lower and an upper
/// bound. The upper bound is the shortest two-hop path through a common
/// neighbor, or the shortest path overall when there is none.
pub fn complete_distances(patch: &Patch, lower: LowerBound) -> Result<CompletedDistances> {
    let n = patch.members.len();
    let m = measured_matrix(patch);

    // All-pairs shortest paths over measured edges for the fallback bound.
    let mut sp = DMatrix::from_fn(n, n, |a, b| if a == b { 0.0 } else { m[(a, b)].unwrap_or(f64::INFINITY) });
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                let via = sp[(a, k)] + sp[(k, b)];
                if via < sp[(a, b)] {
                    sp[(a, b)] = via;
                }
            }
        }
    }

    let incident_max: Vec<f64> = (0..n)
        .map(|a| (0..n).filter_map(|k| m[(a, k)]).fold(0.0, f64::max))
        .collect();

    let mut d = DMatrix::zeros(n, n);
    let mut mask = DMatrix::from_element(n, n, false);
    for a in 0..n {
        for b in a + 1..n {
            let value = match m[(a, b)] {
                Some(v) => v,
                None => {
                    if !sp[(a, b)].is_finite() {
                        return Err(Error::DisconnectedPatch {
                            patch: patch.patch_id,
                            i: patch.members[a],
                            j: patch.members[b],
                        });
                    }
                    let common = (0..n).filter_map(|k| Some((m[(a, k)]?, m[(b, k)]?)));
                    let upper = common
                        .clone()
                        .map(|(x, y)| x + y)
                        .reduce(f64::min)
                        .unwrap_or(sp[(a, b)]);
                    let low = match lower {
                        LowerBound::Incident => incident_max[a].max(incident_max[b]),
                        LowerBound::Triangle => common.map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
                    };
                    mask[(a, b)] = true;
                    mask[(b, a)] = true;
                    (low.min(upper) + upper) / 2.0
                }
            };
            d[(a, b)] = value;
            d[(b, a)] = value;
        }
    }
    Ok(CompletedDistances {
        size: n,
        d,
        completed_mask: mask,
    })
}

#[derive(Debug, Clone)]
pub struct MdsDecomposition {
    /// Double-centered gram matrix `-1/2 J L J`.
    pub gram: DMatrix<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub rank_used: usize,
    pub coords: Vec<Point>,
}

/// Gram matrix `-1/2 J L J` with `L` the squared distances and
/// `J = I - 11^T / n`.
pub fn double_center(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    let sq = d.map(|x| x * x);
    let j = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    (&j * sq * &j) * -0.5
}

/// Classical multidimensional scaling into the plane.
pub fn classical_mds(cd: &CompletedDistances) -> Result<MdsDecomposition> {
    let n = cd.size;
    let d = cd.d.map(|x| if x.abs() < COINCIDENCE_KM { 0.0 } else { x });
    let gram = double_center(&d);
    let eig = SymmetricEigen::new(gram.clone());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let second = eigenvalues.get(1).copied().unwrap_or(0.0);
    // Squared coincidence tolerance, per node.
    if top <= COINCIDENCE_KM * COINCIDENCE_KM * n as f64 {
        return Err(Error::DegenerateConfiguration(top, second));
    }
    let scale = [top.max(0.0).sqrt(), second.max(0.0).sqrt()];
    let coords = (0..n)
        .map(|r| {
            let y = if n > 1 { scale[1] * eigenvectors[(r, 1)] } else { 0.0 };
            Point::new(scale[0] * eigenvectors[(r, 0)], y)
        })
        .collect();
    Ok(MdsDecomposition {
        gram,
        eigenvalues,
        eigenvectors,
        rank_used: 2,
        coords,
    })
}

/// Raw stress `sum (|p_i - p_j| - d_ij)^2` over the patch's measured edges.
pub fn stress(coords: &[Point], patch: &Patch) -> f64 {
    patch
        .local_edges
        .iter()
        .map(|e| {
            let a = coords[patch.local_index(e.i).unwrap()];
            let b = coords[patch.local_index(e.j).unwrap()];
            (a.dist(&b) - e.d).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub coords: Vec<Point>,
    /// Stress before the first sweep and after every accepted sweep.
    pub stress: Vec<f64>,
    pub sweeps: usize,
    /// Set when a sweep would have raised the stress and was rolled back.
    pub stopped_on_increase: bool,
}

fn inv(x: f64) -> f64 {
    if x < COINCIDENCE_KM {
        0.0
    } else {
        1.0 / x
    }
}

/// Iterative majorization with all updates in a sweep taken from the
/// previous sweep's coordinates:
///
/// `p_i <- 1/deg_i * sum_j [p_j + d_ij (p_i - p_j) inv(|p_i - p_j|)]`.
///
/// Stops when the relative stress change drops below `tol`, after
/// `max_iters` sweeps, or before any sweep that would raise the stress.
pub fn refine_majorization(coords: &[Point], patch: &Patch, max_iters: usize, tol: f64) -> Result<Refinement> {
    if coords.len() != patch.members.len() {
        return Err(Error::LengthMismatch(coords.len(), patch.members.len()));
    }
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "majorization needs max_iters >= 1 and tol > 0, got {max_iters}, {tol}"
        )));
    }
    let n = coords.len();
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &patch.local_edges {
        let (a, b) = (patch.local_index(e.i).unwrap(), patch.local_index(e.j).unwrap());
        nbrs[a].push((b, e.d));
        nbrs[b].push((a, e.d));
    }

    let mut current = coords.to_vec();
    let mut history = vec![stress(&current, patch)];
    let mut sweeps = 0;
    let mut stopped_on_increase = false;
    while sweeps < max_iters {
        let next: Vec<Point> = (0..n)
            .map(|i| {
                if nbrs[i].is_empty() {
                    return current[i];
                }
                let pi = current[i];
                let sum = nbrs[i].iter().fold(Point::default(), |acc, &(j, dij)| {
                    let pj = current[j];
                    acc + pj + (pi - pj) * (dij * inv(pi.dist(&pj)))
                });
                sum * (1.0 / nbrs[i].len() as f64)
            })
            .collect();
        sweeps += 1;
        let before = *history.last().unwrap();
        let after = stress(&next, patch);
        if !(after <= before) {
            stopped_on_increase = true;
            break;
        }
        current = next;
        history.push(after);
        if before == 0.0 || (before - after) / before < tol {
            break;
        }
    }
    Ok(Refinement {
        coords: current,
        stress: history,
        sweeps,
        stopped_on_increase,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub lower_bound: LowerBound,
    pub max_iters: usize,
    pub tol: f64,
    /// Damped Gauss-Newton steps on the stress after majorization; 0 skips
    /// the polish.
    pub polish_iters: usize,
    /// Extra attempts for a patch left above `restart_stress` relative
    /// stress: first with the other completion bound, then from seeded
    /// random starts. The lowest-stress attempt wins.
    pub restarts: usize,
    pub restart_stress: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            lower_bound: LowerBound::Incident,
            max_iters: 200,
            tol: 1e-9,
            polish_iters: 100,
            restarts: 128,
            restart_stress: 1e-20,
        }
    }
}

/// Levenberg-Marquardt on the raw stress. Only steps that lower the stress
/// are kept, so the result is never worse than the input. Returns the
/// coordinates, their stress and the number of accepted steps.
pub fn polish_stress(coords: &[Point], patch: &Patch, max_steps: usize) -> (Vec<Point>, f64, usize) {
    let n = coords.len();
    let edges: Vec<(usize, usize, f64)> = patch
        .local_edges
        .iter()
        .map(|e| (patch.local_index(e.i).unwrap(), patch.local_index(e.j).unwrap(), e.d))
        .collect();
    let mut current = coords.to_vec();
    let mut s = stress(&current, patch);
    let mut lambda = 1e-3;
    let mut accepted = 0;
    let mut tries = 0;
    while accepted < max_steps && tries < 4 * max_steps + 20 && s > 0.0 {
        tries += 1;
        let mut jtj = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut g = DVector::<f64>::zeros(2 * n);
        for &(a, b, d) in &edges {
            let diff = current[a] - current[b];
            let len = diff.norm();
            if len < COINCIDENCE_KM {
                continue;
            }
            let u = [diff.x / len, diff.y / len];
            let r = len - d;
            for (ia, ua) in u.iter().enumerate() {
                g[2 * a + ia] += ua * r;
                g[2 * b + ia] -= ua * r;
                for (ib, ub) in u.iter().enumerate() {
                    let v = ua * ub;
                    jtj[(2 * a + ia, 2 * a + ib)] += v;
                    jtj[(2 * b + ia, 2 * b + ib)] += v;
                    jtj[(2 * a + ia, 2 * b + ib)] -= v;
                    jtj[(2 * b + ia, 2 * a + ib)] -= v;
                }
            }
        }
        for k in 0..2 * n {
            jtj[(k, k)] += lambda;
        }
        let Some(chol) = jtj.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = chol.solve(&(-g));
        let trial: Vec<Point> = (0..n)
            .map(|i| current[i] + Point::new(step[2 * i], step[2 * i + 1]))
            .collect();
        let ts = stress(&trial, patch);
        if ts < s {
            let gain = (s - ts) / s;
            current = trial;
            s = ts;
            accepted += 1;
            lambda = (lambda / 5.0).max(1e-15);
            if gain < 1e-16 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (current, s, accepted)
}

/// Per-patch embedding diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedReport {
    pub patch_id: usize,
    pub completed_pairs: usize,
    pub mds_stress: f64,
    pub final_stress: f64,
    pub sweeps: usize,
    pub polish_steps: usize,
}

/// Completes, scales and refines one patch, storing the result in
/// `patch.local_coords`.
pub fn embed_patch(patch: &mut Patch, cfg: &EmbedConfig) -> Result<(EmbedReport, Vec<f64>)> {
    let cd = complete_distances(patch, cfg.lower_bound)?;
    let mds = classical_mds(&cd)?;
    let completed_pairs = cd.completed_mask.iter().filter(|&&b| b).count() / 2;
    let scale: f64 = patch.local_edges.iter().map(|e| e.d * e.d).sum::<f64>().max(f64::MIN_POSITIVE);

    let attempt = |start: &[Point]| -> Result<(Refinement, Vec<Point>, f64, usize)> {
        let refined = refine_majorization(start, patch, cfg.max_iters, cfg.tol)?;
        let (coords, s, steps) = polish_stress(&refined.coords, patch, cfg.polish_iters);
        Ok((refined, coords, s, steps))
    };
    let mut best = attempt(&mds.coords)?;
    let mut tried = 0;
    while best.2 / scale > cfg.restart_stress && tried < cfg.restarts {
        let start = if tried == 0 {
            let other = match cfg.lower_bound {
                LowerBound::Incident => LowerBound::Triangle,
                LowerBound::Triangle => LowerBound::Incident,
            };
            match complete_distances(patch, other).and_then(|c| classical_mds(&c)) {
                Ok(m) => m.coords,
                Err(_) => random_start(patch, tried),
            }
        } else {
            random_start(patch, tried)
        };
        tried += 1;
        let next = attempt(&start)?;
        if next.2 < best.2 {
            best = next;
        }
    }
    if tried > 0 {
        log::debug!("patch {} used {tried} restarts, stress {:e}", patch.patch_id, best.2);
    }
    let (refined, coords, final_stress, polish_steps) = best;
    let report = EmbedReport {
        patch_id: patch.patch_id,
        completed_pairs,
        mds_stress: refined.stress[0],
        final_stress,
        sweeps: refined.sweeps,
        polish_steps,
    };
    patch.local_coords = Some(coords);
    Ok((report, refined.stress))
}

fn random_start(patch: &Patch, attempt: usize) -> Vec<Point> {
    use rand::{Rng, SeedableRng};
    let span = patch.local_edges.iter().map(|e| e.d).fold(0.0, f64::max).max(COINCIDENCE_KM);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64((patch.patch_id as u64) << 8 | attempt as u64);
    patch
        .members
        .iter()
        .map(|_| Point::new(rng.random_range(0.0..span), rng.random_range(0.0..span)))
        .collect()
}

/// Writes per-patch stress trajectories as `patch_id,sweep,stress` rows.
pub fn write_stress_csv<W: std::io::Write>(out: W, trajectories: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patch_id", "sweep", "stress"])?;
    for (id, traj) in trajectories {
        for (k, s) in traj.iter().enumerate() {
            w.write_record([id.to_string(), k.to_string(), format!("{s:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
