//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a criterion outside `KNOWN_UNMET` fails.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use iotopo::embed::{classical_mds, CompletedDistances};
use iotopo::geom::Point;
use iotopo::harness::{run_jobs, ExperimentConfig};
use iotopo::metrics::RunReport;
use iotopo::radio::{assign_power_lp, assign_power_simplex, directed_links, RadioParams};
use iotopo::rigidity::{decompose, is_rigid, Graph};
use iotopo::scenario::{generate_annulus, measure, MeasurementGraph};
use iotopo::sync::{localize_patches, sync_reflections, sync_rotations, LocalizeConfig, PowerIteration, SyncState};
use iotopo::topo::{brute_force, network_throughput, Network, Topology};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that are implemented faithfully but not met by this model.
const KNOWN_UNMET: &[usize] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    ExperimentConfig::load(&path).expect("bundled config parses")
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn rows<'a>(reports: &'a [RunReport], algo: &'a str) -> impl Iterator<Item = &'a RunReport> + 'a {
    reports.iter().filter(move |r| r.algo == algo)
}

fn c1_localization() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut min_patches = usize::MAX;
    let mut overlapping = true;
    for seed in 1..=20 {
        let dep = generate_annulus(50, 0.2, 1.0, seed).unwrap();
        let mg = measure(&dep, 0.5, 0.0, seed).unwrap();
        let ps = decompose(&mg).unwrap();
        min_patches = min_patches.min(ps.patches.len());
        overlapping &= ps
            .patches
            .iter()
            .enumerate()
            .any(|(k, p)| ps.patches[k + 1..].iter().any(|q| p.shared_with(q).len() >= 3));
        let mut res = localize_patches(mg.node_count, ps, &LocalizeConfig::default()).unwrap();
        worst = worst.max(res.evaluate(&dep.positions).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && min_patches >= 2 && overlapping && secs <= 10.0,
        format!("max RMS {worst:.2e} km, min patches {min_patches}, {secs:.2} s"),
    )
}

fn c2_mds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(3..=30);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let mds = classical_mds(&CompletedDistances::from_points(&pts)).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let d = pts[i].dist(&pts[j]);
                worst = worst.max((mds.coords[i].dist(&mds.coords[j]) - d).abs() / d);
            }
        }
    }
    outcome(worst <= 1e-9, format!("max relative distance error {worst:.2e}"))
}

fn wrap(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    t.min(std::f64::consts::TAU - t)
}

fn c3_sync() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = PowerIteration::default();
    let (mut sign_ok, mut worst) = (0, 0.0f64);
    for _ in 0..50 {
        let m = rng.random_range(2..=30);
        let edges = common::random_connected(&mut rng, m, 0.15);
        let signs: Vec<i8> = (0..m).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-3.14..3.14)).collect();
        let mut state = SyncState::new(m);
        for &(k, l) in &edges {
            state.set_reflection(k, l, signs[k] * signs[l]);
            state.set_rotation(k, l, Complex64::from_polar(1.0, theta[k] - theta[l]));
        }
        let refl = sync_reflections(&state, &opts);
        let flip = refl.signs[0] * signs[0];
        sign_ok += (0..m).all(|k| refl.signs[k] * flip == signs[k]) as usize;
        let rot = sync_rotations(&state, &opts);
        let offset = theta[0] - rot.angles[0];
        for k in 0..m {
            worst = worst.max(wrap(rot.angles[k] + offset - theta[k]));
        }
    }
    outcome(
        sign_ok == 50 && worst <= 1e-9,
        format!("signs exact on {sign_ok}/50, max angle error {worst:.2e} rad"),
    )
}

fn c4_lp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = RadioParams::default();
    let (mut worst_rel, mut worst_db, mut below) = (0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)))
            .collect();
        let edges: Vec<(usize, usize, f64)> = common::random_connected(&mut rng, n, 0.2)
            .into_iter()
            .map(|(a, b)| (a, b, pts[a].dist(&pts[b])))
            .collect();
        let links = directed_links(&edges, &params);
        let lp = assign_power_lp(&links, n, &params).unwrap();
        let sx = assign_power_simplex(&links, n, &params).unwrap();
        for i in 0..n {
            let (a, b) = (lp.mw(i), sx.mw(i));
            worst_rel = worst_rel.max((a - b).abs() / a.abs().max(b.abs()));
        }
        let net = Network::new(pts).with_measurements(&MeasurementGraph::from_edges(n, edges));
        let bf = brute_force(&net, &params, 0.01).unwrap();
        for i in 0..n {
            let gap = bf.powers.p_t_dbm[i] - lp.p_t_dbm[i];
            below += (gap < -1e-9) as usize;
            worst_db = worst_db.max(gap.abs());
        }
    }
    outcome(
        worst_rel <= 1e-9 && worst_db <= 0.01 + 1e-9 && below == 0,
        format!("LP vs simplex {worst_rel:.2e} rel, brute force within {worst_db:.4} dB"),
    )
}

struct Suite {
    name: &'static str,
    reports: Vec<RunReport>,
    topologies: Vec<Option<Topology>>,
    secs: f64,
}

fn suite(name: &'static str) -> Suite {
    let cfg = config(name);
    let start = Instant::now();
    let (reports, topologies) = run_jobs(&cfg).unwrap();
    Suite {
        name,
        reports,
        topologies,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn c5_convergence(annulus: &Suite) -> Outcome {
    let runs: Vec<&RunReport> = rows(&annulus.reports, "maxnttop").collect();
    let all_converged = runs.iter().all(|r| r.failure.is_empty())
        && annulus
            .topologies
            .iter()
            .flatten()
            .filter(|t| t.algo.tag() == "maxnttop")
            .all(|t| t.converged);
    let avg = mean(runs.iter().map(|r| r.iterations as f64));
    outcome(
        avg <= 10.0 && all_converged && runs.len() == 5,
        format!("mean iterations {avg:.1} over {} runs, all converged: {all_converged}", runs.len()),
    )
}

fn c6_degree(suites: &[&Suite]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in suites {
        let deg = |a| mean(rows(&s.reports, a).map(|r| r.avg_degree));
        let (m, b, l) = (deg("maxnttop"), deg("bruteforce"), deg("lmst"));
        pass &= m >= b && b >= l && m > l && s.secs <= 60.0;
        parts.push(format!("{}: {m:.2} >= {b:.2} >= {l:.2} ({:.1} s)", s.name, s.secs));
    }
    outcome(pass, parts.join("; "))
}

/// Scheduled links of a topology and their mean SNR.
fn schedule(t: &Topology, params: &RadioParams) -> (usize, f64) {
    let th = network_throughput(t, params);
    let snr: Vec<f64> = th
        .matched
        .iter()
        .filter_map(|&(i, j)| t.edges.iter().find(|e| (e.i, e.j) == (i.min(j), i.max(j))))
        .map(|e| e.snr_db())
        .collect();
    (snr.len(), mean(snr.into_iter()))
}

fn c7_throughput(suites: &[&Suite]) -> Outcome {
    let params = RadioParams::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in suites {
        let tp = |a| mean(rows(&s.reports, a).map(|r| r.throughput_total_bps));
        let ratio = tp("maxnttop") / tp("bruteforce");
        let sched = |a: &str| {
            let v: Vec<(usize, f64)> = s
                .topologies
                .iter()
                .flatten()
                .filter(|t| t.algo.tag() == a)
                .map(|t| schedule(t, &params))
                .collect();
            (mean(v.iter().map(|x| x.0 as f64)), mean(v.iter().map(|x| x.1)))
        };
        let ((lm, sm), (lb, sb)) = (sched("maxnttop"), sched("bruteforce"));
        pass &= ratio > 1.0 && lm >= lb && sm >= sb;
        parts.push(format!(
            "{}: ratio {ratio:.3}, scheduled links {lm:.1} vs {lb:.1} at mean SNR {sm:.1} vs {sb:.1} dB",
            s.name
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c8_saturation() -> Outcome {
    let mut cfg = config("fig4");
    cfg.algorithms = vec!["maxnttop".parse().unwrap()];
    let (reports, _) = run_jobs(&cfg).unwrap();
    let betas = cfg.betas();
    let curve: Vec<f64> = betas
        .iter()
        .map(|&b| mean(reports.iter().filter(|r| r.beta_db == b).map(|r| r.throughput_per_link_bps)))
        .collect();
    let at = |b: f64| curve[betas.iter().position(|&x| x == b).unwrap()];
    let rising = betas
        .windows(2)
        .zip(curve.windows(2))
        .filter(|(b, _)| b[1] <= 25.0)
        .all(|(_, c)| c[1] >= c[0]);
    let change = (at(30.0) - at(25.0)).abs() / at(25.0);
    outcome(
        rising && change < 0.05,
        format!(
            "non-decreasing to 25 dB: {rising}, change 25->30 dB {:.1}% ({:.0} -> {:.0} b/s)",
            change * 100.0,
            at(25.0),
            at(30.0)
        ),
    )
}

fn c9_rigidity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut disagree = 0;
    for k in 0..300 {
        let n = 2 + k % 5;
        let p = rng.random_range(0.3..0.95);
        let edges = common::random_graph(&mut rng, n, p);
        disagree += (is_rigid(&Graph::new(n, edges.clone())) != common::laman_rigid(n, &edges)) as usize;
    }
    outcome(disagree == 0, format!("{disagree} disagreements over 300 graphs"))
}

fn c10_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let bytes: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let mut cfg = config("fig2");
            cfg.output_dir = d.path().to_path_buf();
            iotopo::harness::run(&cfg).unwrap();
            std::fs::read(d.path().join("reports.csv")).unwrap()
        })
        .collect();
    outcome(
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!("reports.csv {} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

fn main() {
    let annulus = suite("fig2");
    let rectangle = suite("fig3");
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "exact localization recovery", c1_localization()),
        (2, "MDS exactness", c2_mds()),
        (3, "synchronization exactness", c3_sync()),
        (4, "LP optimality", c4_lp()),
        (5, "MaxNTtop convergence", c5_convergence(&annulus)),
        (6, "degree ordering", c6_degree(&[&annulus, &rectangle])),
        (7, "throughput ordering", c7_throughput(&[&annulus, &rectangle])),
        (8, "throughput saturation", c8_saturation()),
        (9, "rigidity oracle agreement", c9_rigidity()),
        (10, "determinism", c10_determinism()),
    ];
    let mut blocking = 0;
    for (id, name, o) in &results {
        let tag = match (o.pass, KNOWN_UNMET.contains(id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                blocking += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} {tag:<12} {name}: {}", o.detail);
    }
    if blocking > 0 {
        eprintln!("{blocking} acceptance criteria failed");
        std::process::exit(1);
    }
}
