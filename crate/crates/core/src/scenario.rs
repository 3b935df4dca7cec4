//! Synthetic deployments and the noisy range measurements taken over them.
//!
//! All lengths are kilometers. Ground-truth positions live in [`Deployment`]
//! and are only read back by evaluation code; solvers see a
//! [`MeasurementGraph`].

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Annulus {
        center: Point,
        inner_km: f64,
        outer_km: f64,
    },
    Rectangle {
        width_km: f64,
        height_km: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub node_count: usize,
    pub positions: Vec<Point>,
    pub region: Region,
    pub seed: u64,
    /// Node index of the gateway, if the deployment has one.
    #[serde(default)]
    pub gateway: Option<usize>,
}

/// One measured range, stored once per unordered pair with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Measurement {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

impl From<(usize, usize, f64)> for Measurement {
    fn from((i, j, d): (usize, usize, f64)) -> Self {
        Self { i, j, d }
    }
}

impl From<Measurement> for (usize, usize, f64) {
    fn from(m: Measurement) -> Self {
        (m.i, m.j, m.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGraph {
    pub node_count: usize,
    pub edges: Vec<Measurement>,
    #[serde(with = "crate::serde_util::null_as_pos_inf")]
    pub sensing_range: f64,
    pub noise_factor: f64,
}

impl MeasurementGraph {
    /// Builds a graph from explicit measurements. Pairs are normalized to
    /// `i < j`; later duplicates of the same pair are dropped.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for (a, b, d) in edges {
            if a == b {
                continue;
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if seen.insert((i, j)) {
                out.push(Measurement { i, j, d });
            }
        }
        out.sort_by_key(|m| (m.i, m.j));
        Self {
            node_count,
            edges: out,
            sensing_range: f64::INFINITY,
            noise_factor: 0.0,
        }
    }

    /// Adjacency lists of `(neighbor, measured distance)`, sorted by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for m in &self.edges {
            adj[m.i].push((m.j, m.d));
            adj[m.j].push((m.i, m.d));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }

    pub fn degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count];
        for m in &self.edges {
            deg[m.i] += 1;
            deg[m.j] += 1;
        }
        deg
    }
}

/// A deployment paired with the measurements taken over it; the unit the
/// harness reads and writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub deployment: Deployment,
    pub graph: MeasurementGraph,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Gateway at the center (node 0), remaining nodes uniform by area on the
/// annulus `inner_km <= r <= outer_km`.
pub fn generate_annulus(n: usize, inner_km: f64, outer_km: f64, seed: u64) -> Result<Deployment> {
    if n == 0 {
        return Err(Error::InvalidCount);
    }
    if !(inner_km >= 0.0 && inner_km < outer_km && outer_km.is_finite()) {
        return Err(Error::InvalidRegion(format!(
            "annulus needs 0 <= inner < outer, got inner={inner_km} outer={outer_km}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Point::new(0.0, 0.0);
    let (r0, r1) = (inner_km * inner_km, outer_km * outer_km);
    let mut positions = Vec::with_capacity(n);
    positions.push(center);
    for _ in 1..n {
        let u: f64 = rng.random();
        let r = (r0 + u * (r1 - r0)).sqrt();
        let theta = 2.0 * PI * rng.random::<f64>();
        positions.push(Point::new(r * theta.cos(), r * theta.sin()));
    }
    Ok(Deployment {
        node_count: n,
        positions,
        region: Region::Annulus {
            center,
            inner_km,
            outer_km,
        },
        seed,
        gateway: Some(0),
    })
}

/// `n` i.i.d. uniform nodes on `[0, width] x [0, height]`, no gateway.
pub fn generate_rectangle(n: usize, width_km: f64, height_km: f64, seed: u64) -> Result<Deployment> {
    if n == 0 {
        return Err(Error::InvalidCount);
    }
    if !(width_km > 0.0 && height_km > 0.0 && width_km.is_finite() && height_km.is_finite()) {
        return Err(Error::InvalidRegion(format!(
            "rectangle needs positive dimensions, got {width_km} x {height_km}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| {
            let x = width_km * rng.random::<f64>();
            let y = height_km * rng.random::<f64>();
            Point::new(x, y)
        })
        .collect();
    Ok(Deployment {
        node_count: n,
        positions,
        region: Region::Rectangle {
            width_km,
            height_km,
        },
        seed,
        gateway: None,
    })
}

/// Range measurements between every pair within `sensing_range`.
///
/// The measured value is `true * (1 + noise_factor * g)` with `g ~ N(0, 1)`,
/// redrawn until the result is positive. Coincident pairs carry no usable
/// range and are skipped.
pub fn measure(dep: &Deployment, sensing_range: f64, noise_factor: f64, seed: u64) -> Result<MeasurementGraph> {
    if !(sensing_range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sensing range must be positive, got {sensing_range}"
        )));
    }
    if !(noise_factor >= 0.0 && noise_factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise factor must be finite and >= 0, got {noise_factor}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = &dep.positions;
    let mut edges = Vec::new();
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let truth = pos[i].dist(&pos[j]);
            if truth > sensing_range {
                continue;
            }
            if truth <= 0.0 {
                log::warn!("nodes {i} and {j} coincide; no range recorded");
                continue;
            }
            let d = if noise_factor == 0.0 {
                truth
            } else {
                loop {
                    let g: f64 = rng.sample(StandardNormal);
                    let d = truth * (1.0 + noise_factor * g);
                    if d > 0.0 {
                        break d;
                    }
                }
            };
            edges.push(Measurement { i, j, d });
        }
    }
    Ok(MeasurementGraph {
        node_count: dep.node_count,
        edges,
        sensing_range,
        noise_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Deployment {
        Deployment {
            node_count: xs.len(),
            positions: xs.iter().map(|&x| Point::new(x, 0.0)).collect(),
            region: Region::Rectangle {
                width_km: 10.0,
                height_km: 10.0,
            },
            seed: 0,
            gateway: None,
        }
    }

    #[test]
    fn annulus_radii_and_gateway() {
        let dep = generate_annulus(50, 0.2, 1.0, 7).unwrap();
        assert_eq!(dep.positions.len(), 50);
        assert_eq!(dep.positions[0], Point::new(0.0, 0.0));
        assert_eq!(dep.gateway, Some(0));
        for p in &dep.positions[1..] {
            let r = p.norm();
            assert!((0.2 - 1e-12..=1.0 + 1e-12).contains(&r), "r = {r}");
        }
        assert_eq!(dep, generate_annulus(50, 0.2, 1.0, 7).unwrap());
        assert_ne!(dep, generate_annulus(50, 0.2, 1.0, 8).unwrap());
    }

    #[test]
    fn annulus_single_node_is_gateway() {
        let dep = generate_annulus(1, 0.2, 1.0, 0).unwrap();
        assert_eq!(dep.positions, vec![Point::new(0.0, 0.0)]);
    }

    #[test]
    fn annulus_rejects_bad_input() {
        assert_eq!(generate_annulus(0, 0.2, 1.0, 0), Err(Error::InvalidCount));
        assert!(matches!(generate_annulus(5, 1.0, 1.0, 0), Err(Error::InvalidRegion(_))));
        assert!(matches!(generate_annulus(5, 2.0, 1.0, 0), Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn annulus_is_uniform_by_area() {
        // Fraction of nodes inside radius r should be (r^2 - a^2) / (b^2 - a^2).
        let dep = generate_annulus(20_001, 0.2, 1.0, 99).unwrap();
        let r_mid = 0.6;
        let inside = dep.positions[1..].iter().filter(|p| p.norm() <= r_mid).count() as f64;
        let expect = (r_mid * r_mid - 0.04) / (1.0 - 0.04);
        let frac = inside / 20_000.0;
        let sigma = (expect * (1.0 - expect) / 20_000.0).sqrt();
        assert!((frac - expect).abs() < 4.0 * sigma, "{frac} vs {expect}");
    }

    #[test]
    fn rectangle_bounds_and_determinism() {
        let dep = generate_rectangle(80, 4.0, 4.0, 3).unwrap();
        assert_eq!(dep.positions.len(), 80);
        assert!(dep
            .positions
            .iter()
            .all(|p| (0.0..=4.0).contains(&p.x) && (0.0..=4.0).contains(&p.y)));
        assert_eq!(dep, generate_rectangle(80, 4.0, 4.0, 3).unwrap());
        let pair = generate_rectangle(2, 1.0, 1.0, 1).unwrap();
        assert!(pair
            .positions
            .iter()
            .all(|p| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
        assert!(matches!(generate_rectangle(3, 0.0, 1.0, 0), Err(Error::InvalidRegion(_))));
        assert!(matches!(generate_rectangle(3, 1.0, -1.0, 0), Err(Error::InvalidRegion(_))));
    }

    #[test]
    fn threshold_semantics_without_noise() {
        let mg = measure(&line(&[0.0, 1.0, 3.0]), 1.5, 0.0, 0).unwrap();
        assert_eq!(mg.edges, vec![Measurement { i: 0, j: 1, d: 1.0 }]);
    }

    #[test]
    fn infinite_range_is_complete_and_exact() {
        let dep = generate_rectangle(12, 2.0, 3.0, 5).unwrap();
        let mg = measure(&dep, f64::INFINITY, 0.0, 0).unwrap();
        assert_eq!(mg.edges.len(), 12 * 11 / 2);
        for m in &mg.edges {
            assert!(m.i < m.j);
            assert_eq!(m.d, dep.positions[m.i].dist(&dep.positions[m.j]));
        }
    }

    #[test]
    fn noise_follows_multiplicative_gaussian_law() {
        // At eta = 0.05 truncation never triggers, so |d/true - 1| = eta*|g|
        // with mean eta*sqrt(2/pi).
        let dep = generate_rectangle(160, 1.0, 1.0, 21).unwrap();
        let eta = 0.05;
        let mg = measure(&dep, f64::INFINITY, eta, 11).unwrap();
        assert!(mg.edges.len() >= 10_000);
        let rel: Vec<f64> = mg
            .edges
            .iter()
            .map(|m| (m.d / dep.positions[m.i].dist(&dep.positions[m.j]) - 1.0).abs())
            .collect();
        let n = rel.len() as f64;
        let mean = rel.iter().sum::<f64>() / n;
        let expect = eta * (2.0 / PI).sqrt();
        // Var|g| = 1 - 2/pi.
        let sigma = eta * (1.0 - 2.0 / PI).sqrt() / n.sqrt();
        assert!((mean - expect).abs() < 3.0 * sigma, "{mean} vs {expect} (sigma {sigma})");
        assert!(mg.edges.iter().all(|m| m.d > 0.0));
        assert_eq!(mg, measure(&dep, f64::INFINITY, eta, 11).unwrap());
    }

    #[test]
    fn measure_rejects_bad_arguments() {
        let dep = line(&[0.0, 1.0]);
        assert!(measure(&dep, 0.0, 0.0, 0).is_err());
        assert!(measure(&dep, 1.0, -0.1, 0).is_err());
    }

    #[test]
    fn scenario_json_shape() {
        let dep = line(&[0.0, 1.0, 3.0]);
        let mg = measure(&dep, f64::INFINITY, 0.0, 0).unwrap();
        let json = serde_json::to_value(Scenario { deployment: dep.clone(), graph: mg.clone() }).unwrap();
        assert_eq!(json["deployment"]["positions"][1], serde_json::json!([1.0, 0.0]));
        assert_eq!(json["graph"]["edges"][0], serde_json::json!([0, 1, 1.0]));
        assert!(json["graph"]["sensing_range"].is_null());
        let back: Scenario = serde_json::from_value(json).unwrap();
        assert_eq!(back.graph, mg);
        assert_eq!(back.deployment, dep);
    }
}
