//! Joint navigation and sensing transmit beamforming.
//!
//! [`run_algorithm1`] alternates an update of the sensing interference
//! covariance with a convex subproblem in the lifted beams `W = w w^H` and
//! `V_m = v_m v_m^H`. Inside the subproblem the FIM entries are linearized
//! around the current iterate, the inverse FIMs are replaced by Schur
//! complement LMIs and rank one is encouraged by the penalty
//! `rho' (tr X - i^H X i)`. The reference beamformers live here as well.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::{Coefficient, ConicProblem, ConicSolution, ConicSolver, Constraint, InteriorPoint, Sense, SolveStatus};
use crate::error::{Error, Result};
use crate::fim::{effective_fim, pvt_errors, spd_inverse, FimBlock, FimBundle, PvtErrors, PvtWeights, UeModel};
use crate::geometry::{CMatrix, CVector};
use crate::sensing::{uniform_receiver, SensingScene};

/// Everything the beamformer sees: one model per UE, the sensing geometry
/// and the per-satellite power budgets in watts.
#[derive(Debug, Clone)]
pub struct Scene {
    pub ues: Vec<UeModel>,
    pub sensing: SensingScene,
    pub budgets: Vec<f64>,
}

impl Scene {
    pub fn satellites(&self) -> usize {
        self.budgets.len()
    }

    pub fn antennas(&self) -> usize {
        self.sensing.antennas()
    }

    /// Length NK of a stacked beam.
    pub fn dim(&self) -> usize {
        self.antennas() * self.satellites()
    }

    pub fn check(&self) -> Result<()> {
        let (k, n) = (self.satellites(), self.antennas());
        if self.ues.is_empty() {
            return Err(Error::Dimension("scene has no UEs".into()));
        }
        if self.sensing.satellites() != k {
            return Err(Error::Dimension(format!("{} echo blocks for {k} satellites", self.sensing.satellites())));
        }
        for (m, ue) in self.ues.iter().enumerate() {
            if ue.satellites() != k || ue.antennas() != n {
                return Err(Error::Dimension(format!("UE {m} has {} x {} channels", ue.satellites(), ue.antennas())));
            }
        }
        if self.budgets.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Validation(vec!["power budgets must be positive".into()]));
        }
        Ok(())
    }

    /// Power drawn by each satellite.
    pub fn powers(&self, w: &CVector, navs: &[CVector]) -> Vec<f64> {
        let n = self.antennas();
        (0..self.satellites())
            .map(|k| w.rows(k * n, n).norm_squared() + navs.iter().map(|v| v.rows(k * n, n).norm_squared()).sum::<f64>())
            .collect()
    }

    pub fn powers_lifted(&self, w: &CMatrix, navs: &[CMatrix]) -> Vec<f64> {
        let n = self.antennas();
        let tr = |x: &CMatrix, k: usize| x.view((k * n, k * n), (n, n)).trace().re;
        (0..self.satellites()).map(|k| tr(w, k) + navs.iter().map(|v| tr(v, k)).sum::<f64>()).collect()
    }
}

/// Rows of the identity picking satellite `k`'s N-block out of a stacked vector.
pub fn selector(k: usize, n: usize, sats: usize) -> DMatrix<f64> {
    crate::fim::block_selector(k, n, sats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Internal,
    Clarabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Minimum SAINR, linear.
    pub sainr_threshold: f64,
    pub weights: PvtWeights,
    pub initial_penalty: f64,
    pub amplification: f64,
    pub penalty_accuracy: f64,
    pub penalty_cap: f64,
    pub max_iterations: usize,
    pub solver_tolerance: f64,
    pub convergence_threshold: f64,
    pub backend: Backend,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            sainr_threshold: 10.0,
            weights: PvtWeights::default(),
            initial_penalty: 10.0,
            amplification: 1.5,
            penalty_accuracy: 1e-4,
            penalty_cap: 1e8,
            max_iterations: 50,
            solver_tolerance: 1e-9,
            convergence_threshold: 1e-3,
            backend: Backend::Internal,
        }
    }
}

impl OptimizerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.sainr_threshold > 0.0) {
            v.push("optimizer.sainr_threshold must be positive".into());
        }
        if !(self.amplification > 1.0) {
            v.push("optimizer.amplification_coefficient must exceed 1".into());
        }
        if !(self.penalty_accuracy > 0.0) {
            v.push("optimizer.penalty_accuracy must be positive".into());
        }
        if !(self.initial_penalty > 0.0) {
            v.push("optimizer.initial_penalty must be positive".into());
        }
        if !(self.penalty_cap >= self.initial_penalty) {
            v.push("optimizer.penalty_cap must be at least the initial penalty".into());
        }
        if self.max_iterations == 0 {
            v.push("optimizer.max_iterations must be at least 1".into());
        }
        if !(self.solver_tolerance > 0.0 && self.solver_tolerance < 1e-2) {
            v.push("optimizer.solver_tolerance must lie in (0, 1e-2)".into());
        }
        if !(self.convergence_threshold > 0.0) {
            v.push("optimizer.convergence_threshold must be positive".into());
        }
        let w = &self.weights;
        if !(w.position >= 0.0 && w.velocity >= 0.0 && w.timing >= 0.0) {
            v.push("optimizer.weights must be nonnegative".into());
        }
        v
    }

    pub fn solver(&self) -> Box<dyn ConicSolver> {
        match self.backend {
            Backend::Internal => Box::new(InteriorPoint { tolerance: self.solver_tolerance, max_iterations: 120 }),
            #[cfg(feature = "clarabel")]
            Backend::Clarabel => Box::new(crate::conic::ClarabelBackend {
                tolerance: self.solver_tolerance,
                max_iterations: 400,
            }),
            #[cfg(not(feature = "clarabel"))]
            Backend::Clarabel => {
                log::warn!("built without the clarabel feature; using the internal solver");
                Box::new(InteriorPoint { tolerance: self.solver_tolerance, max_iterations: 120 })
            }
        }
    }
}

/// First-order model of the entry `2 tr(V A) / (sigma^2 + tr(W B))` around
/// an expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEntry {
    pub v_coefficient: CMatrix,
    pub w_coefficient: CMatrix,
    pub constant: f64,
}

impl AffineEntry {
    pub fn evaluate(&self, w: &CMatrix, v: &CMatrix) -> f64 {
        (&self.v_coefficient * v).trace().re + (&self.w_coefficient * w).trace().re + self.constant
    }
}

/// Exact entry `2 tr(V A) / (sigma^2 + tr(W B))`.
pub fn lifted_entry(a: &CMatrix, b: &CMatrix, noise: f64, w: &CMatrix, v: &CMatrix) -> f64 {
    2.0 * (v * a).trace().re / (noise + (w * b).trace().re)
}

pub fn sca_linearize(a: &CMatrix, b: &CMatrix, noise: f64, w0: &CMatrix, v0: &CMatrix) -> Result<AffineEntry> {
    let t0 = (w0 * b).trace().re;
    let den = noise + t0;
    if !(den > 0.0) {
        return Err(Error::Numerical("expansion point has no noise floor".into()));
    }
    let a0 = (v0 * a).trace().re;
    Ok(AffineEntry {
        v_coefficient: a * Complex64::new(2.0 / den, 0.0),
        w_coefficient: b * Complex64::new(-2.0 * a0 / (den * den), 0.0),
        constant: 2.0 * a0 * t0 / (den * den),
    })
}

/// Per-UE normalization fixed at the starting point so successive
/// subproblems stay comparable. Delay and Doppler rows are scaled so the
/// starting FIM has a unit diagonal; the remaining scalars bring the
/// position, clock and velocity blocks to order one.
#[derive(Debug, Clone, PartialEq)]
struct UeScaling {
    tau: Vec<f64>,
    freq: Vec<f64>,
    position: f64,
    clock: f64,
    velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Scaling {
    power: f64,
    objective: f64,
    ues: Vec<UeScaling>,
}

fn herm(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// FIM blocks congruence-scaled by diag(tau) and diag(freq).
pub fn normalized_bundle(b: &FimBundle, tau: &[f64], freq: &[f64]) -> FimBundle {
    let k = tau.len();
    FimBundle {
        tau_tau: DMatrix::from_fn(k, k, |i, j| b.tau_tau[(i, j)] * tau[i] * tau[j]),
        freq_freq: DMatrix::from_fn(k, k, |i, j| b.freq_freq[(i, j)] * freq[i] * freq[j]),
        tau_freq: DMatrix::from_fn(k, k, |i, j| b.tau_freq[(i, j)] * tau[i] * freq[j]),
        gamma: b.gamma,
        noise: b.noise,
    }
}

impl Scaling {
    fn new(scene: &Scene, cfg: &OptimizerConfig, w: &CMatrix, navs: &[CMatrix]) -> Result<Self> {
        let mut ues = Vec::new();
        let mut total = 0.0;
        for (ue, v) in scene.ues.iter().zip(navs) {
            let b = ue.fim_lifted(w, v)?;
            let k = ue.satellites();
            let inv_sqrt = |x: f64| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 };
            let tau: Vec<f64> = (0..k).map(|i| inv_sqrt(b.tau_tau[(i, i)])).collect();
            let freq: Vec<f64> = (0..k).map(|i| inv_sqrt(b.freq_freq[(i, i)])).collect();
            if tau.iter().chain(&freq).any(|x| *x == 0.0) {
                return Err(Error::Unobservable("starting beams leave a satellite silent".into()));
            }
            let nb = normalized_bundle(&b, &tau, &freq);
            let (fe_inv, _) = spd_inverse(&effective_fim(&nb)?)?;
            let jt = DMatrix::from_fn(4, k, |r, c| ue.jacobian[(r, c)] * tau[c]);
            let cov = &jt * fe_inv * jt.transpose();
            let position = ((cov[(0, 0)] + cov[(1, 1)] + cov[(2, 2)]) / 3.0).sqrt();
            let clock = cov[(3, 3)].sqrt();
            let velocity = (b.gamma.trace() / 3.0).sqrt();
            total += pvt_errors(&b, &ue.jacobian, &cfg.weights)?.weighted;
            ues.push(UeScaling { tau, freq, position, clock, velocity });
        }
        let objective = total / scene.ues.len() as f64;
        if !(objective > 0.0 && objective.is_finite()) {
            return Err(Error::Numerical("starting objective is not finite".into()));
        }
        let power = scene.budgets.iter().cloned().fold(0.0, f64::max);
        Ok(Scaling { power, objective, ues })
    }
}

/// State of the outer loop.
#[derive(Debug, Clone)]
pub struct SdrIterate {
    pub w: CMatrix,
    pub v: Vec<CMatrix>,
    pub penalty: f64,
    /// Leading eigenvectors of W and each V_m.
    pub leading: Vec<CVector>,
    pub interference: CMatrix,
    pub iteration: usize,
    scaling: Scaling,
}

impl SdrIterate {
    fn lifted(&self) -> impl Iterator<Item = &CMatrix> {
        std::iter::once(&self.w).chain(self.v.iter())
    }

    /// Sum of tr X - lambda_max(X) over W and all V_m, in units of the largest budget.
    pub fn rank_residual(&self) -> f64 {
        self.lifted().map(|x| rank_gap(x)).sum::<f64>() / self.scaling.power
    }
}

fn rank_gap(x: &CMatrix) -> f64 {
    let e = herm(x).symmetric_eigenvalues();
    (e.sum() - e.max()).max(0.0)
}

/// Leading eigenpair; near-ties go to the vector best aligned with `prev`.
pub fn leading_eigenvector(x: &CMatrix, prev: Option<&CVector>) -> (f64, CVector) {
    let eig = herm(x).symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let tol = 1e-10 * lmax.abs().max(f64::MIN_POSITIVE);
    let mut best = None;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < lmax - tol {
            continue;
        }
        let u = eig.eigenvectors.column(i).into_owned();
        let score = prev.map_or(0.0, |p| p.dotc(&u).norm());
        match best {
            Some((s, _)) if s >= score => {}
            _ => best = Some((score, u)),
        }
    }
    (lmax, best.expect("nonempty spectrum").1)
}

/// Linearized FIM entry in the UE basis: `core` acts on V through the
/// channel columns, `w` multiplies tr(W h h^H).
#[derive(Debug, Clone, Default)]
struct LinearEntry {
    core: Vec<(usize, usize, Complex64)>,
    w: f64,
    constant: f64,
}

impl LinearEntry {
    fn add_scaled(&mut self, other: &LinearEntry, s: f64) {
        self.core.extend(other.core.iter().map(|&(p, q, v)| (p, q, v * s)));
        self.w += other.w * s;
        self.constant += other.constant * s;
    }
}

/// Normalized linearized entries of F_tt, F_ff (upper triangles) and F_tf.
struct LinearFim {
    tau_tau: Vec<Vec<LinearEntry>>,
    freq_freq: Vec<Vec<LinearEntry>>,
    tau_freq: Vec<Vec<LinearEntry>>,
}

fn linear_fim(ue: &UeModel, s: &UeScaling, w0: &CMatrix, v0: &CMatrix) -> LinearFim {
    let k = ue.satellites();
    let den = ue.equivalent_noise_lifted(w0);
    let t0 = den - ue.noise;
    let grams = |b: FimBlock| match b {
        FimBlock::TauTau => &ue.grams.tau_tau,
        FimBlock::FreqFreq => &ue.grams.freq_freq,
        FimBlock::TauFreq => &ue.grams.tau_freq,
    };
    let entry = |b: FimBlock, i: usize, j: usize, scale: f64| {
        let kappa = 2.0 * scale;
        let a0 = ue.raw_entry_lifted(b, v0, i, j);
        let g = grams(b)[(i, j)] * (kappa / den);
        let core = if i == j { vec![(i, i, Complex64::new(g.re, 0.0))] } else { vec![(i, j, g * 0.5)] };
        LinearEntry { core, w: -kappa * a0 / (den * den), constant: kappa * a0 * t0 / (den * den) }
    };
    LinearFim {
        tau_tau: (0..k)
            .map(|i| (0..k).map(|j| entry(FimBlock::TauTau, i.min(j), i.max(j), s.tau[i] * s.tau[j])).collect())
            .collect(),
        freq_freq: (0..k)
            .map(|i| (0..k).map(|j| entry(FimBlock::FreqFreq, i.min(j), i.max(j), s.freq[i] * s.freq[j])).collect())
            .collect(),
        tau_freq: (0..k).map(|i| (0..k).map(|j| entry(FimBlock::TauFreq, i, j, s.tau[i] * s.freq[j])).collect()).collect(),
    }
}

/// Where each variable of the subproblem lives.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpLayout {
    pub w: usize,
    pub v: Vec<usize>,
    /// Per UE: FIM block (2K), position block (K+3), timing block (K+1), velocity block (6).
    pub ue_blocks: Vec<[usize; 4]>,
    pub power_rows: Vec<usize>,
    pub sainr_row: Option<usize>,
}

/// Count of matrix inequalities by kind and dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Census {
    pub entries: Vec<(&'static str, usize, usize)>,
}

impl Census {
    /// Counts merged by dimension.
    pub fn by_dimension(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &(_, d, c) in &self.entries {
            *m.entry(d).or_insert(0) += c;
        }
        m
    }
}

pub struct PenalizedSdp {
    pub problem: ConicProblem,
    pub layout: SdpLayout,
    pub census: Census,
}

fn real_entry(p: usize, q: usize, v: f64) -> (usize, usize, f64) {
    if p == q {
        (p, p, v)
    } else {
        (p, q, 0.5 * v)
    }
}

/// The convex subproblem around `it`. `sensing` adds the SAINR constraint
/// with MVDR weights computed from the iterate's interference matrix.
pub fn build_penalized_sdp(scene: &Scene, cfg: &OptimizerConfig, it: &SdrIterate, sensing: bool) -> Result<PenalizedSdp> {
    let (k, n, nk, mm) = (scene.satellites(), scene.antennas(), scene.dim(), scene.ues.len());
    let sc = &it.scaling;
    let pref = sc.power;
    let c1 = Complex64::new(1.0, 0.0);
    let mut p = ConicProblem::new();

    // W basis: normalized stacked UE channels, then the echo vector.
    let echo = scene.sensing.echo_stacked();
    let mut wcols: Vec<CVector> = scene.ues.iter().map(|u| u.stacked()).collect();
    wcols.push(echo.clone());
    let wnorms: Vec<f64> = wcols.iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
    let wbasis = CMatrix::from_fn(nk, mm + 1, |r, c| wcols[c][r] / wnorms[c]);
    let wb = p.add_block_with_basis(wbasis, "W");

    let mut vb = Vec::new();
    let mut vnorms = Vec::new();
    for (m, ue) in scene.ues.iter().enumerate() {
        let norms: Vec<f64> = ue.channels.iter().map(|h| h.norm().max(f64::MIN_POSITIVE)).collect();
        let basis = CMatrix::from_fn(nk, k, |r, c| ue.padded(c)[r] / norms[c]);
        vb.push(p.add_block_with_basis(basis, format!("V{m}")));
        vnorms.push(norms);
    }

    // Objective: penalty on the lifted beams.
    // The penalty weighs watts against the raw weighted error.
    let rho = it.penalty * pref / sc.objective;
    let pen = |iota: &CVector| (CMatrix::identity(nk, nk) - iota * iota.adjoint()) * Complex64::new(rho, 0.0);
    p.set_objective(wb, pen(&it.leading[0]));
    for m in 0..mm {
        p.set_objective(vb[m], pen(&it.leading[m + 1]));
    }

    let eq = |terms, rhs, label: String| Constraint { terms, scalars: vec![], sense: Sense::Eq, rhs, label };
    let mut ue_blocks = Vec::new();
    for (m, ue) in scene.ues.iter().enumerate() {
        let s = &sc.ues[m];
        let lin = linear_fim(ue, s, &it.w, &it.v[m]);
        let b52 = p.add_block(2 * k, format!("fim{m}"));
        let b55 = p.add_block(k + 3, format!("position{m}"));
        let b56 = p.add_block(k + 1, format!("timing{m}"));
        let bvel = p.add_block(6, format!("velocity{m}"));
        ue_blocks.push([b52, b55, b56, bvel]);

        let vn = &vnorms[m];
        let wn = wnorms[m];
        let lin_terms = |e: &LinearEntry, sign: f64| -> (Vec<(usize, Coefficient)>, f64) {
            let core = e
                .core
                .iter()
                .map(|&(a, b, v)| (a, b, v * (sign * pref * vn[a] * vn[b])))
                .collect::<Vec<_>>();
            let mut t = vec![(vb[m], Coefficient::in_basis(core))];
            if e.w != 0.0 {
                t.push((wb, Coefficient::in_basis([(m, m, c1 * (sign * pref * e.w * wn * wn))])));
            }
            (t, -sign * e.constant)
        };

        // [F_tt - U, F_tf; F_tf^T, F_ff] >= 0
        for q in 0..2 * k {
            for r in 0..=q {
                let e = match (r < k, q < k) {
                    (true, true) => &lin.tau_tau[r][q],
                    (true, false) => &lin.tau_freq[r][q - k],
                    _ => &lin.freq_freq[r - k][q - k],
                };
                let (mut terms, rhs) = lin_terms(e, -1.0);
                terms.push((b52, Coefficient::real([real_entry(r, q, 1.0)])));
                if q < k {
                    terms.push((b55, Coefficient::real([real_entry(3 + r, 3 + q, 1.0)])));
                }
                p.add_constraint(eq(terms, rhs, format!("fim{m}[{r},{q}]")));
            }
        }
        // [Omega, Lambda J; ., U] >= 0 and [Omega', gamma J; ., U] >= 0
        let j = &ue.jacobian;
        for a in 0..3 {
            for i in 0..k {
                p.add_constraint(eq(
                    vec![(b55, Coefficient::real([real_entry(a, 3 + i, 1.0)]))],
                    j[(a, i)] * s.tau[i] / s.position,
                    format!("position{m}[{a},{i}]"),
                ));
            }
        }
        for i in 0..k {
            p.add_constraint(eq(
                vec![(b56, Coefficient::real([real_entry(0, 1 + i, 1.0)]))],
                j[(3, i)] * s.tau[i] / s.clock,
                format!("timing{m}[{i}]"),
            ));
        }
        for q in 0..k {
            for r in 0..=q {
                p.add_constraint(eq(
                    vec![
                        (b56, Coefficient::real([real_entry(1 + r, 1 + q, 1.0)])),
                        (b55, Coefficient::real([real_entry(3 + r, 3 + q, -1.0)])),
                    ],
                    0.0,
                    format!("tie{m}[{r},{q}]"),
                ));
            }
        }
        // [Omega'', I3; I3, H^T F_ff H] >= 0
        for a in 0..3 {
            for b in 0..3 {
                p.add_constraint(eq(
                    vec![(bvel, Coefficient::real([real_entry(a, 3 + b, 1.0)]))],
                    if a == b { 1.0 } else { 0.0 },
                    format!("velocity{m}[{a},{b}]"),
                ));
            }
        }
        let h = DMatrix::from_fn(k, 3, |i, a| ue.doppler_rows[(i, a)] / (s.freq[i] * s.velocity));
        for b in 0..3 {
            for a in 0..=b {
                let mut acc = LinearEntry::default();
                for i in 0..k {
                    for jj in 0..k {
                        let wgt = h[(i, a)] * h[(jj, b)];
                        if wgt != 0.0 {
                            acc.add_scaled(&lin.freq_freq[i][jj], wgt);
                        }
                    }
                }
                // freq_freq[i][j] stores the (min, max) entry; the core is
                // Herm(g e_i e_j^H), symmetric in (i, j) up to conjugation.
                let (mut terms, rhs) = lin_terms(&acc, -1.0);
                terms.push((bvel, Coefficient::real([real_entry(3 + a, 3 + b, 1.0)])));
                p.add_constraint(eq(terms, rhs, format!("doppler{m}[{a},{b}]")));
            }
        }
        // objective weights on Omega, Omega', Omega''
        let mf = mm as f64 * sc.objective;
        let w = &cfg.weights;
        let mut c55 = CMatrix::zeros(k + 3, k + 3);
        for a in 0..3 {
            c55[(a, a)] = c1 * (w.position * s.position * s.position / mf);
        }
        p.set_objective(b55, c55);
        let mut c56 = CMatrix::zeros(k + 1, k + 1);
        c56[(0, 0)] = c1 * (w.timing * s.clock * s.clock / mf);
        p.set_objective(b56, c56);
        let mut cv = CMatrix::zeros(6, 6);
        for a in 0..3 {
            cv[(a, a)] = c1 * (w.velocity / (s.velocity * s.velocity * mf));
        }
        p.set_objective(bvel, cv);
    }

    // per-satellite power
    let mut power_rows = Vec::new();
    for (kk, &budget) in scene.budgets.iter().enumerate() {
        let diag = Coefficient::real((0..n).map(|i| (kk * n + i, kk * n + i, 1.0)));
        let mut terms = vec![(wb, diag.clone())];
        for m in 0..mm {
            terms.push((vb[m], diag.clone()));
        }
        power_rows.push(p.add_constraint(Constraint {
            terms,
            scalars: vec![],
            sense: Sense::Le,
            rhs: budget / pref,
            label: format!("power{kk}"),
        }));
    }

    let mut sainr_row = None;
    if sensing {
        let sen = &scene.sensing;
        let z = mvdr_direction(sen, &it.interference)?;
        let eta = cfg.sainr_threshold;
        let gain = sen.beta.norm_sqr() * z.dotc(&sen.receive).norm_sqr();
        let (qw, qv) = sen.interference_coefficients(&z);
        let en = wnorms[mm];
        let mut terms = vec![
            (wb, Coefficient::in_basis([(mm, mm, c1 * (gain * en * en * pref))])),
            (wb, Coefficient::dense(&(qw * Complex64::new(-eta * pref, 0.0)))),
        ];
        let qv = Coefficient::dense(&(qv * Complex64::new(-eta * pref, 0.0)));
        for m in 0..mm {
            terms.push((vb[m], qv.clone()));
        }
        sainr_row = Some(p.add_constraint(Constraint {
            terms,
            scalars: vec![],
            sense: Sense::Ge,
            rhs: eta * sen.noise * z.norm_squared(),
            label: "sainr".into(),
        }));
    }

    let census = Census {
        entries: vec![
            ("fim", 2 * k, mm),
            ("position", k + 3, mm),
            ("timing", k + 1, mm),
            ("velocity", 6, mm),
            ("beam", nk, mm + 1 + k + usize::from(sensing)),
        ],
    };
    Ok(PenalizedSdp { problem: p, layout: SdpLayout { w: wb, v: vb, ue_blocks, power_rows, sainr_row }, census })
}

/// Unnormalized MVDR direction (R + sigma_s^2 I)^-1 a_r.
pub fn mvdr_direction(sen: &SensingScene, r: &CMatrix) -> Result<CVector> {
    let n = sen.antennas();
    let q = herm(&(r + CMatrix::identity(n, n) * Complex64::new(sen.noise, 0.0)));
    let chol = q.cholesky().ok_or_else(|| Error::Numerical("R + sigma_s^2 I is not positive definite".into()))?;
    Ok(chol.solve(&sen.receive))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub sensing: CVector,
    pub navigation: Vec<CVector>,
    pub powers: Vec<f64>,
    /// MVDR SAINR of the extracted beams, linear.
    pub sainr: f64,
    pub errors: Vec<PvtErrors>,
    /// Mean weighted PVT error over UEs.
    pub objective: f64,
    /// Mean weighted PVT error of the lifted iterate, starting point first.
    pub trace: Vec<f64>,
    /// Normalized penalized objective per iteration at the penalty then in force.
    pub penalized_trace: Vec<f64>,
    pub rank_residual: f64,
    pub penalty: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub penalty_capped: bool,
    pub rescaled: bool,
    pub regularized: bool,
}

/// Metrics of a set of beam vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamMetrics {
    pub errors: Vec<PvtErrors>,
    pub objective: f64,
    pub sainr: f64,
    pub powers: Vec<f64>,
}

pub fn evaluate_beams(scene: &Scene, cfg: &OptimizerConfig, w: &CVector, navs: &[CVector]) -> Result<BeamMetrics> {
    let mut errors = Vec::new();
    for (ue, v) in scene.ues.iter().zip(navs) {
        errors.push(pvt_errors(&ue.fim(w, v)?, &ue.jacobian, &cfg.weights)?);
    }
    let objective = errors.iter().map(|e| e.weighted).sum::<f64>() / errors.len() as f64;
    let r = scene.sensing.interference(w, navs);
    let sainr = if w.norm() > 0.0 { scene.sensing.max_sainr(&r, w)? } else { 0.0 };
    Ok(BeamMetrics { errors, objective, sainr, powers: scene.powers(w, navs) })
}

fn lifted_objective(scene: &Scene, cfg: &OptimizerConfig, w: &CMatrix, navs: &[CMatrix]) -> f64 {
    let mut total = 0.0;
    for (ue, v) in scene.ues.iter().zip(navs) {
        match ue.fim_lifted(w, v).and_then(|b| pvt_errors(&b, &ue.jacobian, &cfg.weights)) {
            Ok(e) if e.weighted.is_finite() => total += e.weighted,
            _ => return f64::INFINITY,
        }
    }
    total / scene.ues.len() as f64
}

fn direction(x: &CVector) -> CVector {
    let n = x.norm();
    if n > 0.0 {
        x / Complex64::new(n, 0.0)
    } else {
        x.clone()
    }
}

/// Beams from per-satellite unit directions and a sensing share of each budget.
fn split(scene: &Scene, sense_dirs: &[CVector], nav_dirs: &[Vec<CVector>], share: f64) -> (CVector, Vec<CVector>) {
    let (k, n, mm) = (scene.satellites(), scene.antennas(), scene.ues.len());
    let mut w = CVector::zeros(k * n);
    let mut navs = vec![CVector::zeros(k * n); mm];
    for kk in 0..k {
        let p = scene.budgets[kk];
        w.rows_mut(kk * n, n).copy_from(&(&sense_dirs[kk] * Complex64::new((share * p).sqrt(), 0.0)));
        for m in 0..mm {
            let a = ((1.0 - share) * p / mm as f64).sqrt();
            navs[m].rows_mut(kk * n, n).copy_from(&(&nav_dirs[m][kk] * Complex64::new(a, 0.0)));
        }
    }
    (w, navs)
}

const MAX_SHARE: f64 = 0.999;

/// Sensing share: half of every budget, raised by bisection until the MVDR
/// SAINR reaches the threshold.
fn sensing_share(scene: &Scene, cfg: &OptimizerConfig, sense: &[CVector], nav: &[Vec<CVector>]) -> Result<(f64, CVector, Vec<CVector>)> {
    let sainr = |s: f64| -> Result<f64> {
        let (w, v) = split(scene, sense, nav, s);
        scene.sensing.max_sainr(&scene.sensing.interference(&w, &v), &w)
    };
    let target = cfg.sainr_threshold * (1.0 + 1e-6);
    let mut lo = 0.5;
    if sainr(lo)? < target {
        let mut hi = MAX_SHARE;
        let top = sainr(hi)?;
        if top < target {
            return Err(Error::Infeasible(format!(
                "SAINR threshold {:.2} dB unreachable: {:.2} dB with {:.1}% of every budget on sensing",
                10.0 * cfg.sainr_threshold.log10(),
                10.0 * top.log10(),
                100.0 * MAX_SHARE
            )));
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if sainr(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo = hi;
    }
    let (w, v) = split(scene, sense, nav, lo);
    Ok((lo, w, v))
}

/// Per satellite, the echo direction with the UE channels projected out, or
/// the plain echo direction when too little of it survives.
fn sensing_directions(scene: &Scene) -> Vec<CVector> {
    let (n, mm) = (scene.antennas(), scene.ues.len());
    scene
        .sensing
        .echo
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if mm >= n {
                return direction(e);
            }
            let h = CMatrix::from_fn(n, mm, |r, c| scene.ues[c].channels[k][r]);
            let residual = match (h.adjoint() * &h).try_inverse() {
                Some(g) => e - &h * (g * (h.adjoint() * e)),
                None => e.clone(),
            };
            if residual.norm() > 1e-3 * e.norm() {
                direction(&residual)
            } else {
                direction(e)
            }
        })
        .collect()
}

fn matched_directions(scene: &Scene) -> (Vec<CVector>, Vec<Vec<CVector>>) {
    let sense = sensing_directions(scene);
    let nav = scene.ues.iter().map(|u| u.channels.iter().map(direction).collect()).collect();
    (sense, nav)
}

/// Matched starting beams that meet the SAINR threshold.
pub fn initial_beams(scene: &Scene, cfg: &OptimizerConfig) -> Result<(CVector, Vec<CVector>)> {
    scene.check()?;
    let (sense, nav) = matched_directions(scene);
    match sensing_share(scene, cfg, &sense, &nav) {
        Ok((_, w, v)) => Ok((w, v)),
        Err(Error::Infeasible(_)) => {
            let plain: Vec<CVector> = scene.sensing.echo.iter().map(direction).collect();
            let (_, w, v) = sensing_share(scene, cfg, &plain, &nav)?;
            Ok((w, v))
        }
        Err(e) => Err(e),
    }
}

/// Consecutive subproblems without descent before the loop gives up.
const MAX_MISSES: usize = 5;

struct LoopOutcome {
    iterate: SdrIterate,
    trace: Vec<f64>,
    penalized_trace: Vec<f64>,
    converged: bool,
    stalled: bool,
    capped: bool,
    iterations: usize,
}

fn accept(sol: &ConicSolution) -> bool {
    match sol.status {
        SolveStatus::Optimal => true,
        SolveStatus::MaxIterations => sol.primal_residual < 1e-6 && sol.dual_residual < 1e-6 && sol.gap < 1e-5,
        _ => false,
    }
}

fn binding_report(p: &PenalizedSdp, scene: &Scene) -> String {
    let mut parts: Vec<String> = p.layout.power_rows.iter().enumerate().map(|(k, _)| format!("power{k} <= {:.3e} W", scene.budgets[k])).collect();
    if p.layout.sainr_row.is_some() {
        parts.push("sainr".into());
    }
    format!("constraints involved: {}", parts.join(", "))
}

fn penalized(scene: &Scene, cfg: &OptimizerConfig, sc: &Scaling, rho: f64, w: &CMatrix, navs: &[CMatrix]) -> (f64, f64) {
    let f = lifted_objective(scene, cfg, w, navs);
    let gap: f64 = rank_gap(w) + navs.iter().map(rank_gap).sum::<f64>();
    (f, (f + rho * gap) / sc.objective)
}

fn optimize(
    scene: &Scene,
    cfg: &OptimizerConfig,
    solver: &dyn ConicSolver,
    w0: &CVector,
    v0: &[CVector],
    sensing: bool,
) -> Result<LoopOutcome> {
    let w = w0 * w0.adjoint();
    let v: Vec<CMatrix> = v0.iter().map(|x| x * x.adjoint()).collect();
    let scaling = Scaling::new(scene, cfg, &w, &v)?;
    let interference = scene.sensing.interference_lifted(&w, &v);
    let mut leading = vec![direction(w0)];
    leading.extend(v0.iter().map(direction));
    let mut it = SdrIterate { w, v, penalty: cfg.initial_penalty, leading, interference, iteration: 0, scaling };

    let (f0, pen0) = penalized(scene, cfg, &it.scaling, it.penalty, &it.w, &it.v);
    let mut trace = vec![f0];
    let mut penalized_trace = vec![pen0];
    let (mut current, mut converged, mut stalled, mut capped) = (pen0, false, false, false);
    let mut iterations = 0;
    let mut misses = 0;
    while iterations < cfg.max_iterations {
        it.interference = scene.sensing.interference_lifted(&it.w, &it.v);
        let mut lead = Vec::with_capacity(it.v.len() + 1);
        for (i, x) in it.lifted().enumerate() {
            lead.push(leading_eigenvector(x, it.leading.get(i)).1);
        }
        it.leading = lead;
        let sdp = build_penalized_sdp(scene, cfg, &it, sensing)?;
        let sol = solver.solve(&sdp.problem)?;
        if !accept(&sol) {
            if iterations == 0 && sol.status == SolveStatus::Infeasible {
                return Err(Error::Infeasible(binding_report(&sdp, scene)));
            }
            log::warn!("subproblem {iterations} ended with {:?}; keeping the last iterate", sol.status);
            stalled = true;
            break;
        }
        iterations += 1;
        let pref = Complex64::new(it.scaling.power, 0.0);
        let wn = herm(&(&sol.blocks[sdp.layout.w] * pref));
        let vn: Vec<CMatrix> = sdp.layout.v.iter().map(|&b| herm(&(&sol.blocks[b] * pref))).collect();

        // Backtrack toward the previous iterate until the true objective does not increase.
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let tc = Complex64::new(t, 0.0);
            let wc = &it.w + (&wn - &it.w) * tc;
            let vc: Vec<CMatrix> = it.v.iter().zip(&vn).map(|(a, b)| a + (b - a) * tc).collect();
            let (f, val) = penalized(scene, cfg, &it.scaling, it.penalty, &wc, &vc);
            if val <= current {
                next = Some((wc, vc, f, val));
                break;
            }
            t *= 0.5;
        }
        let change = match next {
            Some((wc, vc, f, val)) => {
                if t < 1.0 {
                    log::debug!("iteration {iterations}: step damped to {t}");
                }
                misses = 0;
                it.w = wc;
                it.v = vc;
                let change = (current - val).abs() / current.abs().max(f64::MIN_POSITIVE);
                current = val;
                trace.push(f);
                penalized_trace.push(val);
                change
            }
            None => {
                // The iterate is stationary for this penalty.
                log::debug!("no descent along the subproblem direction at iteration {iterations}");
                misses += 1;
                trace.push(*trace.last().expect("trace"));
                penalized_trace.push(current);
                if misses >= MAX_MISSES {
                    stalled = true;
                    break;
                }
                0.0
            }
        };
        it.iteration = iterations;
        let f = *trace.last().expect("trace");
        let val = current;
        let residual = it.rank_residual();
        log::debug!(
            "iteration {iterations}: objective {f:.6e} penalized {val:.6e} change {change:.2e} rank residual {residual:.2e} penalty {:.3e}",
            it.penalty
        );
        if change < cfg.convergence_threshold {
            if residual <= cfg.penalty_accuracy {
                converged = true;
                break;
            }
            let raised = it.penalty * cfg.amplification;
            if raised > cfg.penalty_cap {
                capped = true;
                it.penalty = cfg.penalty_cap;
            } else {
                it.penalty = raised;
            }
            current = penalized(scene, cfg, &it.scaling, it.penalty, &it.w, &it.v).1;
        }
    }
    Ok(LoopOutcome { iterate: it, trace, penalized_trace, converged, stalled, capped, iterations })
}

/// Leading-eigenpair beams with a uniform rescale when any budget is exceeded.
fn extract(scene: &Scene, it: &SdrIterate) -> (CVector, Vec<CVector>, bool) {
    let beam = |x: &CMatrix, prev: &CVector| {
        let (l, u) = leading_eigenvector(x, Some(prev));
        u * Complex64::new(l.max(0.0).sqrt(), 0.0)
    };
    let mut w = beam(&it.w, &it.leading[0]);
    let mut navs: Vec<CVector> = it.v.iter().enumerate().map(|(m, v)| beam(v, &it.leading[m + 1])).collect();
    let powers = scene.powers(&w, &navs);
    let worst = powers.iter().zip(&scene.budgets).map(|(p, b)| p / b).fold(0.0, f64::max);
    let rescaled = worst > 1.0 + 1e-6;
    if rescaled {
        let s = Complex64::new(1.0 / worst.sqrt(), 0.0);
        w *= s;
        for v in &mut navs {
            *v *= s;
        }
    }
    (w, navs, rescaled)
}

fn finish(scene: &Scene, cfg: &OptimizerConfig, out: LoopOutcome) -> Result<BeamformingSolution> {
    let (w, navs, rescaled) = extract(scene, &out.iterate);
    let metrics = evaluate_beams(scene, cfg, &w, &navs)?;
    Ok(BeamformingSolution {
        sensing: w,
        navigation: navs,
        powers: metrics.powers,
        sainr: metrics.sainr,
        errors: metrics.errors,
        objective: metrics.objective,
        trace: out.trace,
        penalized_trace: out.penalized_trace,
        rank_residual: out.iterate.rank_residual(),
        penalty: out.iterate.penalty,
        iterations: out.iterations,
        converged: out.converged,
        stalled: out.stalled,
        penalty_capped: out.capped,
        rescaled,
        regularized: false,
    })
}

/// The penalized SDR/SCA beamformer starting from `start`, or from matched
/// beams when `start` is `None`.
pub fn run_algorithm1(
    scene: &Scene,
    cfg: &OptimizerConfig,
    solver: &dyn ConicSolver,
    start: Option<(&CVector, &[CVector])>,
) -> Result<BeamformingSolution> {
    scene.check()?;
    let bad = cfg.violations();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let owned;
    let (w0, v0) = match start {
        Some(s) => s,
        None => {
            owned = initial_beams(scene, cfg)?;
            (&owned.0, owned.1.as_slice())
        }
    };
    let out = optimize(scene, cfg, solver, w0, v0, true)?;
    finish(scene, cfg, out)
}

/// The same loop without the SAINR constraint, started from `warm` (usually
/// the constrained solution); the better of start and result is returned.
pub fn baseline_navigation_only(
    scene: &Scene,
    cfg: &OptimizerConfig,
    solver: &dyn ConicSolver,
    warm: &BeamformingSolution,
) -> Result<BeamformingSolution> {
    scene.check()?;
    let out = optimize(scene, cfg, solver, &warm.sensing, &warm.navigation, false)?;
    let sol = finish(scene, cfg, out)?;
    if sol.objective <= warm.objective {
        Ok(sol)
    } else {
        log::debug!("navigation-only loop did not improve on its warm start");
        let mut kept = warm.clone();
        kept.trace = sol.trace;
        kept.penalized_trace = sol.penalized_trace;
        kept.iterations = sol.iterations;
        Ok(kept)
    }
}

/// Zero-forcing navigation beams: per satellite, the pseudo-inverse of the
/// UE channel matrix, so each beam is invisible to the other UEs.
pub fn zero_forcing_directions(scene: &Scene) -> (Vec<Vec<CVector>>, bool) {
    let (k, n, mm) = (scene.satellites(), scene.antennas(), scene.ues.len());
    let mut out = vec![Vec::with_capacity(k); mm];
    let mut regularized = false;
    for kk in 0..k {
        let h = CMatrix::from_fn(n, mm, |r, c| scene.ues[c].channels[kk][r]);
        // columns of H (H^H H)^-1 satisfy h_j^H v_m = delta_jm
        let g = h.adjoint() * &h;
        let scale = g.diagonal().iter().map(|x| x.re).fold(0.0, f64::max);
        let eig = herm(&g).symmetric_eigenvalues();
        let ginv = if mm <= n && eig.min() > 1e-10 * scale {
            g.clone().try_inverse()
        } else {
            None
        };
        let ginv = ginv.unwrap_or_else(|| {
            regularized = true;
            let reg = &g + CMatrix::identity(mm, mm) * Complex64::new(1e-6 * scale.max(f64::MIN_POSITIVE), 0.0);
            reg.try_inverse().unwrap_or_else(|| CMatrix::identity(mm, mm))
        });
        let v = &h * ginv;
        for m in 0..mm {
            out[m].push(direction(&v.column(m).into_owned()));
        }
    }
    (out, regularized)
}

pub fn baseline_zfbf(scene: &Scene, cfg: &OptimizerConfig) -> Result<BeamformingSolution> {
    scene.check()?;
    let sense: Vec<CVector> = scene.sensing.echo.iter().map(direction).collect();
    let (nav, regularized) = zero_forcing_directions(scene);
    let (_, w, navs) = sensing_share(scene, cfg, &sense, &nav)?;
    let m = evaluate_beams(scene, cfg, &w, &navs)?;
    Ok(BeamformingSolution {
        sensing: w,
        navigation: navs,
        powers: m.powers,
        sainr: m.sainr,
        errors: m.errors,
        objective: m.objective,
        trace: vec![m.objective],
        penalized_trace: vec![],
        rank_residual: 0.0,
        penalty: 0.0,
        iterations: 0,
        converged: true,
        stalled: false,
        penalty_capped: false,
        rescaled: false,
        regularized,
    })
}

/// SAINR of the given beams when the receiver uses uniform weights.
pub fn baseline_uwr(scene: &Scene, w: &CVector, navs: &[CVector]) -> f64 {
    let r = scene.sensing.interference(w, navs);
    scene.sensing.sainr(&r, &uniform_receiver(scene.antennas()), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = rand_c(rng, n, n);
        &a * a.adjoint()
    }

    #[test]
    fn selectors_partition_the_stack() {
        let (n, k) = (3, 4);
        let mut sum = DMatrix::zeros(n * k, n * k);
        for kk in 0..k {
            let d = selector(kk, n, k);
            assert_eq!(&d * d.transpose(), DMatrix::identity(n, n));
            sum += d.transpose() * d;
        }
        assert_eq!(sum, DMatrix::identity(n * k, n * k));
    }

    #[test]
    fn linearization_is_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 6;
        let (a, b) = (herm(&rand_c(&mut rng, n, n)), psd(&mut rng, n));
        let (w0, v0) = (psd(&mut rng, n), psd(&mut rng, n));
        let lin = sca_linearize(&a, &b, 0.3, &w0, &v0).unwrap();
        let exact = lifted_entry(&a, &b, 0.3, &w0, &v0);
        assert_relative_eq!(lin.evaluate(&w0, &v0), exact, max_relative = 1e-12);

        let dw = herm(&rand_c(&mut rng, n, n));
        let dv = herm(&rand_c(&mut rng, n, n));
        let h = 1e-6 * w0.norm();
        let hc = Complex64::new(h, 0.0);
        let fd = (lifted_entry(&a, &b, 0.3, &(&w0 + &dw * hc), &(&v0 + &dv * hc))
            - lifted_entry(&a, &b, 0.3, &(&w0 - &dw * hc), &(&v0 - &dv * hc)))
            / (2.0 * h);
        let dir = (&lin.w_coefficient * &dw).trace().re + (&lin.v_coefficient * &dv).trace().re;
        assert_relative_eq!(dir, fd, max_relative = 1e-6);
    }

    #[test]
    fn linearization_without_coupling_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let a = herm(&rand_c(&mut rng, n, n));
        let b = CMatrix::zeros(n, n);
        let lin = sca_linearize(&a, &b, 0.7, &psd(&mut rng, n), &psd(&mut rng, n)).unwrap();
        let (w, v) = (psd(&mut rng, n), psd(&mut rng, n));
        assert_relative_eq!(lin.evaluate(&w, &v), lifted_entry(&a, &b, 0.7, &w, &v), max_relative = 1e-12);
        assert_eq!(lin.constant, 0.0);
        assert!(lin.w_coefficient.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn leading_eigenvector_breaks_ties_by_alignment() {
        let mut x = CMatrix::identity(3, 3);
        x[(2, 2)] = Complex64::new(0.5, 0.0);
        let prev = CVector::from_vec(vec![Complex64::new(0.1, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let (l, u) = leading_eigenvector(&x, Some(&prev));
        assert_relative_eq!(l, 1.0, epsilon = 1e-12);
        assert!(u[1].norm() > 0.99);
    }

    #[test]
    fn rank_one_extraction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = rand_c(&mut rng, 5, 1).column(0).into_owned();
        let x = &w * w.adjoint();
        let (l, u) = leading_eigenvector(&x, None);
        let rebuilt = (&u * u.adjoint()) * Complex64::new(l, 0.0);
        assert!((rebuilt - &x).norm() < 1e-8 * x.norm());
        assert!(rank_gap(&x) < 1e-12 * x.norm());
    }

    #[test]
    fn config_violations_are_listed() {
        let cfg = OptimizerConfig { amplification: 0.5, penalty_accuracy: 0.0, ..Default::default() };
        assert_eq!(cfg.violations().len(), 2);
        assert!(OptimizerConfig::default().violations().is_empty());
    }
}
