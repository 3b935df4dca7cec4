//! Evaluation metrics shared by the experiments.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{centroid, Point};

/// Rigid motion (rotation or reflection plus translation) in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub linear: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl RigidMotion {
    pub fn apply(&self, p: Point) -> Point {
        let v = self.linear * Vector2::new(p.x, p.y) + self.translation;
        Point::new(v.x, v.y)
    }
}

/// Orthogonal Procrustes without scaling: the rigid motion taking `est`
/// closest to `truth` in least squares. Reflections are allowed.
pub fn rigid_align(est: &[Point], truth: &[Point]) -> Result<RigidMotion> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch(est.len(), truth.len()));
    }
    if est.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (ce, ct) = (centroid(est), centroid(truth));
    let mut h = Matrix2::zeros();
    for (e, t) in est.iter().zip(truth) {
        let a = Vector2::new(e.x - ce.x, e.y - ce.y);
        let b = Vector2::new(t.x - ct.x, t.y - ct.y);
        h += a * b.transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let linear = v_t.transpose() * u.transpose();
    let translation = Vector2::new(ct.x, ct.y) - linear * Vector2::new(ce.x, ce.y);
    Ok(RigidMotion { linear, translation })
}

/// Per-node errors `|p_i - p_hat_i|` after removing the rigid-motion gauge.
pub fn aligned_errors(est: &[Point], truth: &[Point]) -> Result<Vec<f64>> {
    let motion = rigid_align(est, truth)?;
    Ok(est
        .iter()
        .zip(truth)
        .map(|(e, t)| motion.apply(*e).dist(t))
        .collect())
}

/// RMS position error after optimal rigid alignment of `est` onto `truth`.
pub fn procrustes_error(est: &[Point], truth: &[Point]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch(est.len(), truth.len()));
    }
    let errs = aligned_errors(est, truth)?;
    Ok((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

/// One (scenario, algorithm, sweep point) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub seed: u64,
    pub algo: String,
    pub beta_db: f64,
    pub avg_degree: f64,
    pub throughput_total_bps: f64,
    pub throughput_per_link_bps: f64,
    pub rms_km: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    /// Empty on success; the error message for a failed job. Not part of
    /// the CSV schema: failed rows carry NaN metrics there.
    #[serde(skip)]
    pub failure: String,
}

impl RunReport {
    pub fn is_failure(&self) -> bool {
        !self.failure.is_empty() || self.avg_degree.is_nan()
    }

    fn metric(&self, name: Metric) -> f64 {
        match name {
            Metric::AvgDegree => self.avg_degree,
            Metric::ThroughputTotal => self.throughput_total_bps,
            Metric::ThroughputPerLink => self.throughput_per_link_bps,
            Metric::RmsKm => self.rms_km,
            Metric::Iterations => self.iterations as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AvgDegree,
    ThroughputTotal,
    ThroughputPerLink,
    RmsKm,
    Iterations,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::AvgDegree,
        Metric::ThroughputTotal,
        Metric::ThroughputPerLink,
        Metric::RmsKm,
        Metric::Iterations,
    ];
}

/// Mean and sample standard deviation of one metric over a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario_id: String,
    pub algo: String,
    pub beta_db: f64,
    pub metric: Metric,
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
}

/// Groups successful reports by (scenario, algorithm, beta) and summarizes
/// every metric. Rows come out sorted by group key, then metric.
pub fn aggregate(reports: &[RunReport]) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<(String, String, u64), Vec<&RunReport>> = BTreeMap::new();
    for r in reports.iter().filter(|r| !r.is_failure()) {
        let key = (r.scenario_id.clone(), r.algo.clone(), ordered_bits(r.beta_db));
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((scenario_id, algo, _), group) in groups {
        let beta_db = group[0].beta_db;
        for metric in Metric::ALL {
            let values: Vec<f64> = group.iter().map(|r| r.metric(metric)).collect();
            let (mean, stddev) = mean_stddev(&values);
            rows.push(SummaryRow {
                scenario_id: scenario_id.clone(),
                algo: algo.clone(),
                beta_db,
                metric,
                count: values.len(),
                mean,
                stddev,
            });
        }
    }
    Ok(rows)
}

/// Maps f64 to u64 preserving numeric order.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Mean and sample (n - 1) standard deviation; a single value has
/// deviation 0.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate(points: &[Point], angle: f64, shift: Point) -> Vec<Point> {
        let (s, c) = angle.sin_cos();
        points
            .iter()
            .map(|p| Point::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y))
            .collect()
    }

    /// SVD-free closed form: for centered clouds the best rotation angle
    /// is atan2(sum cross, sum dot); a reflection is tried by mirroring.
    fn closed_form_rms(est: &[Point], truth: &[Point]) -> f64 {
        let n = est.len() as f64;
        let (ce, ct) = (centroid(est), centroid(truth));
        let best = |mirror: bool| {
            let e: Vec<Point> = est
                .iter()
                .map(|p| {
                    let q = *p - ce;
                    if mirror { q.mirrored() } else { q }
                })
                .collect();
            let t: Vec<Point> = truth.iter().map(|p| *p - ct).collect();
            let dot: f64 = e.iter().zip(&t).map(|(a, b)| a.x * b.x + a.y * b.y).sum();
            let cross: f64 = e.iter().zip(&t).map(|(a, b)| a.x * b.y - a.y * b.x).sum();
            let ang = cross.atan2(dot);
            let r = rotate(&e, ang, Point::default());
            r.iter().zip(&t).map(|(a, b)| a.dist(b).powi(2)).sum::<f64>()
        };
        (best(false).min(best(true)) / n).sqrt()
    }

    fn triangle() -> Vec<Point> {
        vec![Point::new(0.0, 0.0), Point::new(1.0, 0.2), Point::new(0.4, 0.9)]
    }

    #[test]
    fn identical_sets_have_zero_error() {
        assert_eq!(procrustes_error(&triangle(), &triangle()).unwrap(), 0.0);
    }

    #[test]
    fn rotation_and_translation_are_removed() {
        let t = triangle();
        let est = rotate(&t, 37.0f64.to_radians(), Point::new(3.0, -2.0));
        assert!(procrustes_error(&est, &t).unwrap() < 1e-12);
        let mirrored: Vec<Point> = est.iter().map(|p| p.mirrored()).collect();
        assert!(procrustes_error(&mirrored, &t).unwrap() < 1e-12);
    }

    #[test]
    fn displaced_node_matches_closed_form() {
        let t = triangle();
        let mut est = t.clone();
        est[1].x += 0.3;
        let rms = procrustes_error(&est, &t).unwrap();
        let expect = closed_form_rms(&est, &t);
        assert!((rms - expect).abs() < 1e-9, "{rms} vs {expect}");
        assert!(rms <= 0.3 / 3f64.sqrt() + 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(procrustes_error(&triangle(), &triangle()[..2]), Err(Error::LengthMismatch(3, 2)));
    }

    #[test]
    fn aggregate_textbook_values() {
        let mk = |v: f64| RunReport {
            scenario_id: "s".into(),
            seed: 0,
            algo: "lmst".into(),
            beta_db: 2.5,
            avg_degree: v,
            throughput_total_bps: v,
            throughput_per_link_bps: v,
            rms_km: 0.0,
            iterations: 1,
            wall_ms: 0.0,
            failure: String::new(),
        };
        let rows = aggregate(&[mk(1.0), mk(3.0)]).unwrap();
        let deg = rows.iter().find(|r| r.metric == Metric::AvgDegree).unwrap();
        assert_eq!(deg.mean, 2.0);
        assert!((deg.stddev - 2f64.sqrt()).abs() < 1e-15);
        let single = aggregate(&[mk(4.0)]).unwrap();
        assert!(single.iter().all(|r| r.stddev == 0.0));
        let twin = aggregate(&[mk(4.0), mk(4.0)]).unwrap();
        assert!(twin.iter().all(|r| r.stddev == 0.0));
        assert_eq!(aggregate(&[]), Err(Error::EmptyInput));
    }

    #[test]
    fn aggregate_orders_groups() {
        let mk = |algo: &str, beta: f64| RunReport {
            scenario_id: "s".into(),
            seed: 0,
            algo: algo.into(),
            beta_db: beta,
            avg_degree: 1.0,
            throughput_total_bps: 1.0,
            throughput_per_link_bps: 1.0,
            rms_km: 0.0,
            iterations: 1,
            wall_ms: 0.0,
            failure: String::new(),
        };
        let rows = aggregate(&[mk("b", 10.0), mk("a", 2.5), mk("b", 2.5)]).unwrap();
        let keys: Vec<(String, f64)> = rows
            .iter()
            .filter(|r| r.metric == Metric::AvgDegree)
            .map(|r| (r.algo.clone(), r.beta_db))
            .collect();
        assert_eq!(keys, vec![("a".into(), 2.5), ("b".into(), 2.5), ("b".into(), 10.0)]);
    }
}
