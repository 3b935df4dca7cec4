//! Link budget and transmit-power assignment.
//!
//! Distances are in kilometers, powers in dBm at the interface and in mW
//! inside the linear program. A link `i -> j` is detectable when the SNR at
//! `j` reaches `beta` and the received power (without channel gain) reaches
//! the receiver floor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for the detectability test, absorbing dB round-off.
pub const DETECT_SLACK_DB: f64 = 1e-9;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> Result<f64> {
    if mw > 0.0 {
        Ok(10.0 * mw.log10())
    } else {
        Err(Error::NonPositivePower(mw))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GainModel {
    /// `h_ij = 1` for every link.
    #[default]
    Unit,
    /// Symmetric log-normal shadowing, `10 log10 h_ij ~ N(0, sigma_db^2)`.
    LogNormal { sigma_db: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub nu: f64,
    pub noise_dbm: f64,
    pub beta_db: f64,
    pub p_tmax_dbm: f64,
    pub p_rmin_dbm: f64,
    pub bandwidth_hz: f64,
    pub gain_model: GainModel,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            nu: 4.0,
            noise_dbm: -50.0,
            beta_db: 2.5,
            p_tmax_dbm: 27.0,
            p_rmin_dbm: -63.0,
            bandwidth_hz: 125e3,
            gain_model: GainModel::Unit,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        if !(self.nu > 0.0) {
            return bad("nu", format!("must be positive, got {}", self.nu));
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz", format!("must be positive, got {}", self.bandwidth_hz));
        }
        if !(self.p_tmax_dbm > self.p_rmin_dbm) {
            return bad(
                "p_tmax_dbm",
                format!("must exceed p_rmin_dbm ({} <= {})", self.p_tmax_dbm, self.p_rmin_dbm),
            );
        }
        for (f, v) in [("noise_dbm", self.noise_dbm), ("beta_db", self.beta_db)] {
            if !v.is_finite() {
                return bad(f, format!("must be finite, got {v}"));
            }
        }
        if let GainModel::LogNormal { sigma_db, .. } = self.gain_model {
            if !(sigma_db >= 0.0) {
                return bad("gain_model.sigma_db", format!("must be nonnegative, got {sigma_db}"));
            }
        }
        Ok(())
    }

    pub fn with_beta(mut self, beta_db: f64) -> Self {
        self.beta_db = beta_db;
        self
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_dbm)
    }

    pub fn beta_linear(&self) -> f64 {
        db_to_linear(self.beta_db)
    }

    /// Longest link detectable at the transmit cap with unit gain.
    pub fn transmission_range_km(&self) -> f64 {
        let need = (self.beta_linear() * self.noise_mw()).max(dbm_to_mw(self.p_rmin_dbm));
        (dbm_to_mw(self.p_tmax_dbm) / need).powf(1.0 / self.nu)
    }

    /// Channel gain of the undirected pair `{i, j}`.
    pub fn gain(&self, i: usize, j: usize) -> f64 {
        match self.gain_model {
            GainModel::Unit => 1.0,
            GainModel::LogNormal { sigma_db, seed } => {
                if sigma_db == 0.0 {
                    return 1.0;
                }
                let (a, b) = (i.min(j) as u64, i.max(j) as u64);
                let key = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
                let mut rng = ChaCha8Rng::seed_from_u64(key);
                let db = Normal::new(0.0, sigma_db).unwrap().sample(&mut rng);
                db_to_linear(db)
            }
        }
    }

    /// Smallest transmit power in mW making a link of length `d_km` and
    /// gain `h` detectable; infinite for a dead channel.
    pub fn required_power_mw(&self, d_km: f64, h: f64) -> f64 {
        let path = d_km.powf(self.nu);
        let snr = if h > 0.0 {
            self.beta_linear() * self.noise_mw() * path / h
        } else {
            f64::INFINITY
        };
        snr.max(dbm_to_mw(self.p_rmin_dbm) * path)
    }
}

/// SNR in dB at the receiver of a link; `-inf` when `h = 0`.
pub fn link_snr(d_km: f64, p_t_dbm: f64, h: f64, params: &RadioParams) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::ZeroDistance(d_km));
    }
    if h <= 0.0 || p_t_dbm == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * h.log10() + p_t_dbm - 10.0 * params.nu * d_km.log10() - params.noise_dbm)
}

/// Received power in dBm, without channel gain.
pub fn received_dbm(d_km: f64, p_t_dbm: f64, params: &RadioParams) -> f64 {
    p_t_dbm - 10.0 * params.nu * d_km.log10()
}

pub fn is_detectable(d_km: f64, p_t_dbm: f64, h: f64, params: &RadioParams) -> Result<bool> {
    let snr = link_snr(d_km, p_t_dbm, h, params)?;
    Ok(snr >= params.beta_db - DETECT_SLACK_DB
        && received_dbm(d_km, p_t_dbm, params) >= params.p_rmin_dbm - DETECT_SLACK_DB)
}

/// Per-node transmit powers in dBm; `-inf` (JSON `null`) means off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAssignment {
    #[serde(with = "crate::serde_util::vec_null_as_neg_inf")]
    pub p_t_dbm: Vec<f64>,
}

impl PowerAssignment {
    pub fn off(n: usize) -> Self {
        Self {
            p_t_dbm: vec![f64::NEG_INFINITY; n],
        }
    }

    pub fn uniform(n: usize, dbm: f64) -> Self {
        Self { p_t_dbm: vec![dbm; n] }
    }

    pub fn len(&self) -> usize {
        self.p_t_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_t_dbm.is_empty()
    }

    pub fn is_on(&self, i: usize) -> bool {
        self.p_t_dbm[i] > f64::NEG_INFINITY
    }

    pub fn mw(&self, i: usize) -> f64 {
        if self.is_on(i) {
            dbm_to_mw(self.p_t_dbm[i])
        } else {
            0.0
        }
    }

    /// LP objective: total transmit power in mW.
    pub fn total_mw(&self) -> f64 {
        (0..self.len()).map(|i| self.mw(i)).sum()
    }
}

/// One directed link that must be detectable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequiredLink {
    pub from: usize,
    pub to: usize,
    pub d_km: f64,
    pub h: f64,
}

/// Both directions of every undirected edge `(i, j, d_km)`.
pub fn directed_links(edges: &[(usize, usize, f64)], params: &RadioParams) -> Vec<RequiredLink> {
    edges
        .iter()
        .flat_map(|&(i, j, d_km)| {
            let h = params.gain(i, j);
            [
                RequiredLink { from: i, to: j, d_km, h },
                RequiredLink { from: j, to: i, d_km, h },
            ]
        })
        .collect()
}

fn check_links(links: &[RequiredLink], n: usize) -> Result<()> {
    for l in links {
        if l.from >= n || l.to >= n {
            return Err(Error::InvalidArgument(format!("link {}->{} outside {n} nodes", l.from, l.to)));
        }
        if !(l.d_km > 0.0) {
            return Err(Error::ZeroDistance(l.d_km));
        }
    }
    Ok(())
}

fn infeasible(l: &RequiredLink, mw: f64) -> Error {
    Error::Infeasible {
        from: l.from,
        to: l.to,
        required_dbm: if mw.is_finite() { 10.0 * mw.log10() } else { f64::INFINITY },
    }
}

/// Minimum-total-power assignment. The program separates by node, so each
/// node transmits at the largest requirement among its outgoing links.
pub fn assign_power_lp(links: &[RequiredLink], n: usize, params: &RadioParams) -> Result<PowerAssignment> {
    check_links(links, n)?;
    let cap = dbm_to_mw(params.p_tmax_dbm);
    let mut need = vec![0.0f64; n];
    for l in links {
        let mw = params.required_power_mw(l.d_km, l.h);
        if mw > cap * (1.0 + 1e-12) {
            return Err(infeasible(l, mw));
        }
        need[l.from] = need[l.from].max(mw.min(cap));
    }
    Ok(PowerAssignment {
        p_t_dbm: need
            .iter()
            .map(|&mw| if mw > 0.0 { 10.0 * mw.log10() } else { f64::NEG_INFINITY })
            .collect(),
    })
}

/// The same program solved by the generic simplex, one variable per node
/// and one row per printed constraint.
pub fn assign_power_simplex(links: &[RequiredLink], n: usize, params: &RadioParams) -> Result<PowerAssignment> {
    use simplex::{LinearProgram, Relation};
    check_links(links, n)?;
    let cap = dbm_to_mw(params.p_tmax_dbm);
    let floor = dbm_to_mw(params.p_rmin_dbm);
    let bn = params.beta_linear() * params.noise_mw();
    let mut lp = LinearProgram::new(vec![1.0; n]);
    let unit = |i: usize| {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        row
    };
    for i in 0..n {
        lp.constrain(unit(i), Relation::Le, cap);
    }
    for l in links {
        let path = l.d_km.powf(params.nu);
        if l.h > 0.0 {
            lp.constrain(unit(l.from), Relation::Ge, bn * path / l.h);
        } else {
            return Err(infeasible(l, f64::INFINITY));
        }
        lp.constrain(unit(l.from), Relation::Ge, floor * path);
    }
    match lp.solve() {
        Ok(sol) => Ok(PowerAssignment {
            p_t_dbm: sol
                .x
                .iter()
                .map(|&mw| if mw > 0.0 { 10.0 * mw.log10() } else { f64::NEG_INFINITY })
                .collect(),
        }),
        Err(Error::LpInfeasible) => {
            let worst = links
                .iter()
                .map(|l| (l, params.required_power_mw(l.d_km, l.h)))
                .find(|(_, mw)| *mw > cap)
                .ok_or(Error::LpInfeasible)?;
            Err(infeasible(worst.0, worst.1))
        }
        Err(e) => Err(e),
    }
}

/// Dense two-phase simplex with Bland's rule.
pub mod simplex {
    use crate::error::{Error, Result};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Relation {
        Le,
        Ge,
        Eq,
    }

    /// `min c^T x` subject to the rows and `x >= 0`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct LinearProgram {
        pub c: Vec<f64>,
        pub rows: Vec<(Vec<f64>, Relation, f64)>,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct LpSolution {
        pub x: Vec<f64>,
        pub objective: f64,
        pub pivots: usize,
    }

    const EPS: f64 = 1e-12;

    struct Tableau {
        /// `m` constraint rows followed by the objective row; last column
        /// is the right-hand side.
        t: Vec<Vec<f64>>,
        basis: Vec<usize>,
        pivots: usize,
    }

    impl Tableau {
        fn m(&self) -> usize {
            self.basis.len()
        }

        fn pivot(&mut self, r: usize, col: usize) {
            let p = self.t[r][col];
            self.t[r].iter_mut().for_each(|v| *v /= p);
            let row = self.t[r].clone();
            for (k, other) in self.t.iter_mut().enumerate() {
                if k == r {
                    continue;
                }
                let f = other[col];
                if f != 0.0 {
                    for (v, rv) in other.iter_mut().zip(&row) {
                        *v -= f * rv;
                    }
                }
            }
            self.basis[r] = col;
            self.pivots += 1;
        }

        /// Minimizes the objective row over the columns in `allowed`.
        fn optimize(&mut self, allowed: usize) -> Result<()> {
            let m = self.m();
            loop {
                let obj = &self.t[m];
                let Some(col) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                    return Ok(());
                };
                let rhs = self.t[0].len() - 1;
                let mut best: Option<(f64, usize, usize)> = None;
                for r in 0..m {
                    let a = self.t[r][col];
                    if a > EPS {
                        let ratio = self.t[r][rhs] / a;
                        let better = match best {
                            None => true,
                            Some((br, _, bb)) => {
                                ratio < br - EPS * br.abs().max(1.0)
                                    || (ratio <= br + EPS * br.abs().max(1.0) && self.basis[r] < bb)
                            }
                        };
                        if better {
                            best = Some((ratio, r, self.basis[r]));
                        }
                    }
                }
                let Some((_, r, _)) = best else {
                    return Err(Error::Unbounded);
                };
                self.pivot(r, col);
            }
        }
    }

    impl LinearProgram {
        pub fn new(c: Vec<f64>) -> Self {
            Self { c, rows: Vec::new() }
        }

        pub fn constrain(&mut self, a: Vec<f64>, rel: Relation, b: f64) {
            assert_eq!(a.len(), self.c.len());
            self.rows.push((a, rel, b));
        }

        pub fn solve(&self) -> Result<LpSolution> {
            let n = self.c.len();
            let m = self.rows.len();
            // Normalize to b >= 0.
            let rows: Vec<(Vec<f64>, Relation, f64)> = self
                .rows
                .iter()
                .map(|(a, rel, b)| {
                    if *b < 0.0 {
                        let flipped = match rel {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        };
                        (a.iter().map(|v| -v).collect(), flipped, -b)
                    } else {
                        (a.clone(), *rel, *b)
                    }
                })
                .collect();
            let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
            let artificials = rows.iter().filter(|r| r.1 != Relation::Le).count();
            let width = n + slacks + artificials + 1;
            let rhs = width - 1;
            let art_start = n + slacks;
            let mut t = vec![vec![0.0; width]; m + 1];
            let mut basis = vec![0; m];
            let (mut s, mut a) = (n, art_start);
            for (r, (coef, rel, b)) in rows.iter().enumerate() {
                t[r][..n].copy_from_slice(coef);
                t[r][rhs] = *b;
                match rel {
                    Relation::Le => {
                        t[r][s] = 1.0;
                        basis[r] = s;
                        s += 1;
                    }
                    Relation::Ge => {
                        t[r][s] = -1.0;
                        s += 1;
                        t[r][a] = 1.0;
                        basis[r] = a;
                        a += 1;
                    }
                    Relation::Eq => {
                        t[r][a] = 1.0;
                        basis[r] = a;
                        a += 1;
                    }
                }
            }
            // Phase 1 objective: sum of artificials, expressed in the
            // nonbasic columns.
            for r in 0..m {
                if basis[r] >= art_start {
                    for j in 0..width {
                        t[m][j] -= t[r][j];
                    }
                    t[m][basis[r]] += 1.0;
                }
            }
            let mut tab = Tableau { t, basis, pivots: 0 };
            if artificials > 0 {
                tab.optimize(rhs)?;
                let scale = rows.iter().map(|r| r.2).fold(1.0, f64::max);
                if -tab.t[m][rhs] > 1e-9 * scale {
                    return Err(Error::LpInfeasible);
                }
                // Drive zero-level artificials out of the basis.
                for r in 0..m {
                    if tab.basis[r] >= art_start {
                        if let Some(col) = (0..art_start).find(|&j| tab.t[r][j].abs() > EPS) {
                            tab.pivot(r, col);
                        }
                    }
                }
            }
            // Phase 2 objective row.
            let mut obj = vec![0.0; width];
            obj[..n].copy_from_slice(&self.c);
            for r in 0..m {
                let cb = if tab.basis[r] < n { self.c[tab.basis[r]] } else { 0.0 };
                if cb != 0.0 {
                    for j in 0..width {
                        obj[j] -= cb * tab.t[r][j];
                    }
                }
            }
            // Artificial columns are never re-entered.
            for v in &mut obj[art_start..rhs] {
                *v = 0.0;
            }
            tab.t[m] = obj;
            tab.optimize(art_start)?;
            let mut x = vec![0.0; n];
            for r in 0..m {
                if tab.basis[r] < n {
                    x[tab.basis[r]] = tab.t[r][rhs];
                }
            }
            let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
            Ok(LpSolution {
                x,
                objective,
                pivots: tab.pivots,
            })
        }
    }
}
