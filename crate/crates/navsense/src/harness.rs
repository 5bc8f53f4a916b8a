//! Seeded experiment runs, parameter sweeps and baseline comparisons, with
//! self-describing CSV output.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fim::PvtErrors;
use crate::navigation::{bancroft_init, build_weighting, simulate_pseudoranges, wls_solve};
use crate::optimizer::{
    baseline_navigation_only, baseline_uwr, baseline_zfbf, evaluate_beams, run_algorithm1, BeamformingSolution,
};
use crate::scenario::{build_scenario, scenario_hash, Scenario, Streams};

pub const SCHEMA_VERSION: u32 = 1;

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn tagged(hash: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| e.with_scenario(hash)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UeMetrics {
    pub position: f64,
    pub timing: f64,
    pub velocity: f64,
    pub weighted: f64,
}

impl From<&PvtErrors> for UeMetrics {
    fn from(e: &PvtErrors) -> Self {
        UeMetrics { position: e.position, timing: e.timing, velocity: e.velocity, weighted: e.weighted }
    }
}

/// Outcome of one Algorithm 1 run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub hash: String,
    pub seed: u64,
    /// Weighted PVT error per outer iteration, starting point first.
    pub trace: Vec<f64>,
    /// Normalized penalized objective per outer iteration.
    pub penalized_trace: Vec<f64>,
    pub ues: Vec<UeMetrics>,
    pub objective: f64,
    pub sainr_db: f64,
    pub powers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub rank_residual: f64,
    pub wall_time: f64,
}

impl RunRecord {
    fn new(s: &Scenario, sol: &BeamformingSolution, wall_time: f64) -> Self {
        RunRecord {
            hash: s.hash.clone(),
            seed: s.seed,
            trace: sol.trace.clone(),
            penalized_trace: sol.penalized_trace.clone(),
            ues: sol.errors.iter().map(UeMetrics::from).collect(),
            objective: sol.objective,
            sainr_db: db(sol.sainr),
            powers: sol.powers.clone(),
            iterations: sol.iterations,
            converged: sol.converged,
            stalled: sol.stalled,
            rank_residual: sol.rank_residual,
            wall_time,
        }
    }

    /// Same record with the wall time cleared, for determinism checks.
    pub fn without_timing(&self) -> Self {
        RunRecord { wall_time: 0.0, ..self.clone() }
    }
}

/// Algorithm 1 on an already built scenario.
pub fn solve(cfg: &ScenarioConfig, s: &Scenario) -> Result<BeamformingSolution> {
    let oc = cfg.optimizer();
    run_algorithm1(&s.scene, &oc, oc.solver().as_ref(), None).map_err(tagged(&s.hash))
}

pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunRecord> {
    let hash = scenario_hash(cfg, seed);
    let start = Instant::now();
    let s = build_scenario(cfg, seed).map_err(tagged(&hash))?;
    let sol = solve(cfg, &s)?;
    let rec = RunRecord::new(&s, &sol, start.elapsed().as_secs_f64());
    if !rec.objective.is_finite() || rec.trace.iter().any(|x| !x.is_finite()) {
        return Err(tagged(&hash)(Error::Numerical("non-finite metrics".into())));
    }
    Ok(rec)
}

/// Mean and standard error over the successful seeds of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Stat { mean, stderr: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    /// One entry per seed; `None` where the run failed.
    pub runs: Vec<Option<RunRecord>>,
    pub failures: Vec<String>,
    pub weighted: Stat,
    /// Statistics of log10 of the weighted error. Scenes differ in geometry
    /// by orders of magnitude, so this tracks the typical seed.
    pub log_weighted: Stat,
    pub position: Stat,
    pub timing: Stat,
    pub velocity: Stat,
    pub sainr_db: Stat,
}

impl SweepPoint {
    fn new(value: f64, results: Vec<Result<RunRecord>>) -> Self {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(rec) => runs.push(Some(rec)),
                Err(e) => {
                    failures.push(e.to_string());
                    runs.push(None);
                }
            }
        }
        let ok: Vec<&RunRecord> = runs.iter().flatten().collect();
        let mean_over_ues = |f: fn(&UeMetrics) -> f64| -> Vec<f64> {
            ok.iter().map(|r| r.ues.iter().map(f).sum::<f64>() / r.ues.len() as f64).collect()
        };
        SweepPoint {
            value,
            weighted: Stat::of(&ok.iter().map(|r| r.objective).collect::<Vec<_>>()),
            log_weighted: Stat::of(&ok.iter().map(|r| r.objective.log10()).collect::<Vec<_>>()),
            position: Stat::of(&mean_over_ues(|u| u.position)),
            timing: Stat::of(&mean_over_ues(|u| u.timing)),
            velocity: Stat::of(&mean_over_ues(|u| u.velocity)),
            sainr_db: Stat::of(&ok.iter().map(|r| r.sainr_db).collect::<Vec<_>>()),
            runs,
            failures,
        }
    }
}

/// Runs `cfg` with `path` set to each of `values`, over seeds
/// `cfg.seed .. cfg.seed + seeds`. Points and seeds run in parallel.
pub fn sweep(cfg: &ScenarioConfig, path: &str, values: &[f64], seeds: usize) -> Result<Vec<SweepPoint>> {
    let cfgs: Vec<ScenarioConfig> = values.iter().map(|&v| cfg.with_value(path, v)).collect::<Result<_>>()?;
    for c in &cfgs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u64)> =
        (0..cfgs.len()).flat_map(|i| (0..seeds as u64).map(move |s| (i, s))).collect();
    let mut results: Vec<(usize, u64, Result<RunRecord>)> = jobs
        .par_iter()
        .map(|&(i, s)| (i, s, run_scenario(&cfgs[i], cfg.seed + s)))
        .collect();
    results.sort_by_key(|(i, s, _)| (*i, *s));
    let mut grouped: Vec<Vec<Result<RunRecord>>> = (0..cfgs.len()).map(|_| Vec::new()).collect();
    for (i, _, r) in results {
        grouped[i].push(r);
    }
    Ok(values.iter().zip(grouped).map(|(&v, r)| SweepPoint::new(v, r)).collect())
}

/// One method in the baseline comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    pub method: String,
    pub objective: f64,
    pub position: f64,
    pub timing: f64,
    pub velocity: f64,
    pub sainr_db: f64,
    /// Monte Carlo position RMSE of the pseudo-range solver, where it applies.
    pub position_rmse: Option<f64>,
}

fn mean_errors(errors: &[PvtErrors]) -> (f64, f64, f64, f64) {
    let n = errors.len() as f64;
    let sum = |f: fn(&PvtErrors) -> f64| errors.iter().map(f).sum::<f64>() / n;
    (sum(|e| e.weighted), sum(|e| e.position), sum(|e| e.timing), sum(|e| e.velocity))
}

fn row(method: &str, errors: &[PvtErrors], sainr: f64, position_rmse: Option<f64>) -> BaselineRow {
    let (objective, position, timing, velocity) = mean_errors(errors);
    BaselineRow { method: method.into(), objective, position, timing, velocity, sainr_db: db(sainr), position_rmse }
}

/// Position RMSE (m) of iterated least squares over `trials` noisy
/// pseudo-range draws per UE, with elevation weighting or equal weights.
pub fn pseudorange_rmse<R: Rng + ?Sized>(
    s: &Scenario,
    sigma0: f64,
    weighted: bool,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let k = s.satellites.len();
    let mut sq = 0.0;
    let mut count = 0usize;
    for (ue, elev) in s.ues.iter().zip(&s.elevations) {
        let phi = if weighted { build_weighting(elev)? } else { DMatrix::identity(k, k) };
        for _ in 0..trials {
            let pr = simulate_pseudoranges(&s.satellites, ue, rng, sigma0);
            let (init, _) = bancroft_init(&s.satellites, &pr)?;
            let fix = wls_solve(&s.satellites, &pr, init, &phi, 10, 1e-4)?;
            sq += (fix.position - ue.position).norm_squared();
            count += 1;
        }
    }
    Ok((sq / count as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub hash: String,
    pub seed: u64,
    pub rows: Vec<BaselineRow>,
}

impl BaselineReport {
    pub fn get(&self, method: &str) -> Option<&BaselineRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

pub const BASELINE_TRIALS: usize = 200;

/// Algorithm 1, ZFBF, UWR, LS weighting and navigation-only on one scene.
pub fn run_baselines(cfg: &ScenarioConfig, seed: u64) -> Result<BaselineReport> {
    let hash = scenario_hash(cfg, seed);
    let tag = tagged(&hash);
    let s = build_scenario(cfg, seed).map_err(&tag)?;
    let oc = cfg.optimizer();
    let solver = oc.solver();
    let alg1 = run_algorithm1(&s.scene, &oc, solver.as_ref(), None).map_err(&tag)?;
    let zf = baseline_zfbf(&s.scene, &oc).map_err(&tag)?;
    let nav = baseline_navigation_only(&s.scene, &oc, solver.as_ref(), &alg1).map_err(&tag)?;
    let ls = evaluate_beams(&s.uniform_scene(), &oc, &alg1.sensing, &alg1.navigation).map_err(&tag)?;
    let uwr = baseline_uwr(&s.scene, &alg1.sensing, &alg1.navigation);

    let sigma0 = cfg.scenario.pseudorange_sigma_m;
    let streams = Streams::new(seed);
    let wls_rmse = pseudorange_rmse(&s, sigma0, true, BASELINE_TRIALS, &mut streams.get("pseudorange")).map_err(&tag)?;
    let ls_rmse = pseudorange_rmse(&s, sigma0, false, BASELINE_TRIALS, &mut streams.get("pseudorange")).map_err(&tag)?;

    let rows = vec![
        row("algorithm1", &alg1.errors, alg1.sainr, Some(wls_rmse)),
        row("zfbf", &zf.errors, zf.sainr, None),
        row("uwr", &alg1.errors, uwr, None),
        row("ls-weighting", &ls.errors, ls.sainr, Some(ls_rmse)),
        row("navigation-only", &nav.errors, nav.sainr, None),
    ];
    Ok(BaselineReport { hash: hash.clone(), seed, rows })
}

fn writer(path: &Path, hash: &str, seed: u64, extra: &str) -> Result<csv::Writer<std::fs::File>> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(io)?;
    writeln!(f, "# schema={SCHEMA_VERSION} hash={hash} seed={seed}{extra}").map_err(io)?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

/// Per-iteration trace: `iteration, objective, penalized`.
pub fn write_trace_csv(path: &Path, rec: &RunRecord) -> Result<()> {
    let mut w = writer(path, &rec.hash, rec.seed, "")?;
    w.write_record(["iteration", "objective", "penalized"]).map_err(csv_err)?;
    for (i, (f, p)) in rec.trace.iter().zip(&rec.penalized_trace).enumerate() {
        w.write_record([i.to_string(), num(*f), num(*p)]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Per-UE metrics of one run: `ue, position_m2, timing_s2, velocity_m2s2,
/// weighted`, followed by a summary row with UE index `all`.
pub fn write_run_csv(path: &Path, rec: &RunRecord) -> Result<()> {
    let extra = format!(
        " converged={} iterations={} sainr_db={:.6} rank_residual={:.3e} wall_time_s={:.3} powers_w={}",
        rec.converged,
        rec.iterations,
        rec.sainr_db,
        rec.rank_residual,
        rec.wall_time,
        rec.powers.iter().map(|p| format!("{p:.6e}")).collect::<Vec<_>>().join(";")
    );
    let mut w = writer(path, &rec.hash, rec.seed, &extra)?;
    w.write_record(["ue", "position_m2", "timing_s2", "velocity_m2s2", "weighted"]).map_err(csv_err)?;
    for (m, u) in rec.ues.iter().enumerate() {
        w.write_record([m.to_string(), num(u.position), num(u.timing), num(u.velocity), num(u.weighted)])
            .map_err(csv_err)?;
    }
    w.write_record(["all".into(), String::new(), String::new(), String::new(), num(rec.objective)])
        .map_err(csv_err)?;
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Sweep summary, one row per value: `value, runs, failures`, then mean and
/// standard error of the weighted error, its log10, E^P, E^T, E^V (UE
/// averages) and SAINR in dB.
pub fn write_sweep_csv(path: &Path, cfg: &ScenarioConfig, param: &str, points: &[SweepPoint]) -> Result<()> {
    let extra = format!(" param={param} seeds={}", points.first().map_or(0, |p| p.runs.len()));
    let mut w = writer(path, &scenario_hash(cfg, cfg.seed), cfg.seed, &extra)?;
    w.write_record([
        "value",
        "runs",
        "failures",
        "weighted_mean",
        "weighted_stderr",
        "log10_weighted_mean",
        "log10_weighted_stderr",
        "position_mean",
        "position_stderr",
        "timing_mean",
        "timing_stderr",
        "velocity_mean",
        "velocity_stderr",
        "sainr_db_mean",
        "sainr_db_stderr",
    ])
    .map_err(csv_err)?;
    for p in points {
        let ok = p.runs.iter().flatten().count();
        let mut rec = vec![num(p.value), ok.to_string(), p.failures.len().to_string()];
        for s in [p.weighted, p.log_weighted, p.position, p.timing, p.velocity, p.sainr_db] {
            rec.push(num(s.mean));
            rec.push(num(s.stderr));
        }
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Baseline table: `method, weighted, position_m2, timing_s2,
/// velocity_m2s2, sainr_db, position_rmse_m` (the last is empty where the
/// pseudo-range Monte Carlo does not apply).
pub fn write_baselines_csv(path: &Path, report: &BaselineReport) -> Result<()> {
    let mut w = writer(path, &report.hash, report.seed, "")?;
    w.write_record(["method", "weighted", "position_m2", "timing_s2", "velocity_m2s2", "sainr_db", "position_rmse_m"])
        .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.method.clone(),
            num(r.objective),
            num(r.position),
            num(r.timing),
            num(r.velocity),
            num(r.sainr_db),
            r.position_rmse.map(num).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
