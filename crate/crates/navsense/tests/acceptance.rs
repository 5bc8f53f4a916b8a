//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! cargo test --release --test acceptance

use std::time::Instant;

use leo_navsense::channel::{array_gain, ChannelParams};
use leo_navsense::config::ScenarioConfig;
use leo_navsense::consts::LIGHT_SPEED;
use leo_navsense::fim::{pvt_errors, FimBlock, FimBundle, PvtWeights};
use leo_navsense::geometry::{
    generate_walker, ground_point, local_frame, transmit_steering, ue_elevation, CMatrix, CVector, SatelliteState,
    UeState, UpaConfig, Vec3, WalkerConfig,
};
use leo_navsense::harness::{pseudorange_rmse, run_baselines, run_scenario, sweep, RunRecord, SweepPoint};
use leo_navsense::navigation::{
    bancroft_init, build_weighting, geometry_matrix, jacobian, mle_velocity, simulate_pseudoranges,
    synthesize_decoded, wls_solve, VelocitySearch,
};
use leo_navsense::optimizer::{initial_beams, lifted_entry, sca_linearize};
use leo_navsense::scenario::{build_scenario, Scenario};
use leo_navsense::waveform::gen_nav_sequence;
use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn mrel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

fn herm(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn outer(x: &CVector) -> CMatrix {
    x * x.adjoint()
}

/// Random beams at the scale of the per-satellite budget.
fn random_beams(rng: &mut ChaCha8Rng, s: &Scenario, budget: f64) -> (CVector, Vec<CVector>) {
    let nk = s.scene.sensing.echo_stacked().len();
    let scale = Complex64::new((budget / nk as f64).sqrt(), 0.0);
    let w = cvec(rng, nk) * scale;
    let navs = (0..s.ues.len()).map(|_| cvec(rng, nk) * scale).collect();
    (w, navs)
}

fn desk_runs(cfg: &ScenarioConfig, seeds: std::ops::Range<u64>) -> Vec<Result<RunRecord, String>> {
    seeds.map(|s| run_scenario(cfg, s).map_err(|e| e.to_string())).collect()
}

fn criterion1(runs: &[Result<RunRecord, String>]) -> Outcome {
    let mut worst_rise = 0.0f64;
    let mut max_iter = 0;
    let mut bad = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let rise = r.penalized_trace.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
        worst_rise = worst_rise.max(rise);
        max_iter = max_iter.max(r.iterations);
        if rise > 1e-6 || !r.converged || r.iterations > 20 {
            bad.push(format!("seed {seed}: rise {rise:.1e}, converged {}, {} iterations", r.converged, r.iterations));
        }
    }
    check(
        bad.is_empty(),
        format!("{} seeds, worst trace rise {worst_rise:.1e}, max {max_iter} iterations {}", runs.len(), bad.join("; ")),
    )
}

fn criterion2(cfg: &ScenarioConfig, runs: &[Result<RunRecord, String>]) -> Outcome {
    let pmax = cfg.power_budget();
    let eta = cfg.optimizer.sainr_threshold_db;
    let (mut worst_rank, mut worst_power, mut worst_sainr) = (0.0f64, 0.0f64, f64::INFINITY);
    let mut bad = Vec::new();
    for (seed, r) in runs.iter().enumerate() {
        let Ok(r) = r else {
            bad.push(format!("seed {seed} failed"));
            continue;
        };
        let p = r.powers.iter().cloned().fold(0.0, f64::max) / pmax;
        worst_rank = worst_rank.max(r.rank_residual);
        worst_power = worst_power.max(p);
        worst_sainr = worst_sainr.min(r.sainr_db);
        if r.rank_residual > 1e-4 || p > 1.0 + 1e-6 || r.sainr_db < eta - 0.1 {
            bad.push(format!("seed {seed}"));
        }
    }
    check(
        bad.is_empty(),
        format!(
            "{} runs, max rank residual {worst_rank:.1e}, max power/P {worst_power:.9}, min SAINR {worst_sainr:.4} dB {}",
            runs.len(),
            bad.join(", ")
        ),
    )
}

fn criterion3(cfg: &ScenarioConfig) -> Outcome {
    // 25 geometries, each with 4 random beam sets and hence 4 interference
    // covariances.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst, mut violations, mut scenes) = (0.0f64, 0usize, 0);
    for seed in 1000..1025 {
        let s = build_scenario(cfg, seed).map_err(|e| e.to_string())?;
        let sen = &s.scene.sensing;
        for _ in 0..4 {
            let (w, navs) = random_beams(&mut rng, &s, cfg.power_budget());
            let r = sen.interference(&w, &navs);
            let closed = sen.max_sainr(&r, &w).map_err(|e| e.to_string())?;
            let z = sen.mvdr(&r, &w).map_err(|e| e.to_string())?;
            worst = worst.max(rel(closed, sen.sainr(&r, &z, &w)));
            for _ in 0..1000 {
                let zr = cvec(&mut rng, sen.antennas());
                if sen.sainr(&r, &zr, &w) > closed * (1.0 + 1e-12) {
                    violations += 1;
                }
            }
            scenes += 1;
        }
    }
    check(
        worst <= 1e-9 && violations == 0,
        format!(
            "{scenes} scenes (25 geometries x 4 beam sets), max |closed - MVDR| / closed {worst:.1e}, {violations} of {} random receivers beat MVDR",
            scenes * 1000
        ),
    )
}

fn bundle_gap(a: &FimBundle, b: &FimBundle) -> f64 {
    let g = |m: &Matrix3<f64>| DMatrix::from_iterator(3, 3, m.iter().cloned());
    [
        mrel(&a.tau_tau, &b.tau_tau),
        mrel(&a.freq_freq, &b.freq_freq),
        mrel(&a.tau_freq, &b.tau_freq),
        mrel(&g(&a.gamma), &g(&b.gamma)),
        rel(a.noise, b.noise),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn criterion4(cfg: &ScenarioConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let scenes: Vec<Scenario> = (0..5).map(|s| build_scenario(cfg, 2000 + s)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let (mut fim, mut noise, mut interf, mut sainr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let s = &scenes[i % scenes.len()];
        let (w, navs) = random_beams(&mut rng, s, cfg.power_budget());
        let (wl, vl): (CMatrix, Vec<CMatrix>) = (outer(&w), navs.iter().map(outer).collect());
        for (m, ue) in s.scene.ues.iter().enumerate() {
            let a = ue.fim(&w, &navs[m]).map_err(|e| e.to_string())?;
            let b = ue.fim_lifted(&wl, &vl[m]).map_err(|e| e.to_string())?;
            fim = fim.max(bundle_gap(&a, &b));
            noise = noise.max(rel(ue.equivalent_noise(&w), ue.equivalent_noise_lifted(&wl)));
        }
        let sen = &s.scene.sensing;
        let r = sen.interference(&w, &navs);
        let rl = sen.interference_lifted(&wl, &vl);
        interf = interf.max((&r - &rl).norm() / r.norm());
        let g = sen.max_sainr(&r, &w).map_err(|e| e.to_string())?;
        let gl = sen.max_sainr_lifted(&rl, &wl).map_err(|e| e.to_string())?;
        sainr = sainr.max(rel(g, gl));
    }
    let worst = fim.max(noise).max(interf).max(sainr);
    check(
        worst <= 1e-10,
        format!("100 beam sets, max relative gap: FIM {fim:.1e}, noise {noise:.1e}, R {interf:.1e}, SAINR {sainr:.1e}"),
    )
}

fn criterion5(cfg: &ScenarioConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let oc = cfg.optimizer();
    let (mut tangent, mut deriv, mut entries) = (0.0f64, 0.0f64, 0usize);
    for seed in 3000..3003 {
        let s = build_scenario(cfg, seed).map_err(|e| e.to_string())?;
        let (w, navs) = initial_beams(&s.scene, &oc).map_err(|e| e.to_string())?;
        let w0 = outer(&w);
        let nk = w.len();
        for (m, ue) in s.scene.ues.iter().enumerate() {
            let v0 = outer(&navs[m]);
            let b = ue.noise_coefficient();
            let exact = ue.fim_lifted(&w0, &v0).map_err(|e| e.to_string())?;
            let k = ue.satellites();
            for block in [FimBlock::TauTau, FimBlock::FreqFreq, FimBlock::TauFreq] {
                let target = match block {
                    FimBlock::TauTau => &exact.tau_tau,
                    FimBlock::FreqFreq => &exact.freq_freq,
                    FimBlock::TauFreq => &exact.tau_freq,
                };
                let scale = target.amax();
                for i in 0..k {
                    for j in 0..k {
                        let a = ue.coefficient(block, i, j);
                        let lin = sca_linearize(&a, &b, ue.noise, &w0, &v0).map_err(|e| e.to_string())?;
                        let f0 = lifted_entry(&a, &b, ue.noise, &w0, &v0);
                        tangent = tangent.max((lin.evaluate(&w0, &v0) - target[(i, j)]).abs() / scale);
                        tangent = tangent.max((f0 - target[(i, j)]).abs() / scale);

                        let (dw, dv) = (herm(&mut rng, nk), herm(&mut rng, nk));
                        let dw = &dw * Complex64::new(w0.norm() / dw.norm(), 0.0);
                        let dv = &dv * Complex64::new(v0.norm() / dv.norm(), 0.0);
                        let h = 1e-5;
                        let hc = Complex64::new(h, 0.0);
                        let fd = (lifted_entry(&a, &b, ue.noise, &(&w0 + &dw * hc), &(&v0 + &dv * hc))
                            - lifted_entry(&a, &b, ue.noise, &(&w0 - &dw * hc), &(&v0 - &dv * hc)))
                            / (2.0 * h);
                        let dir = (&lin.w_coefficient * &dw).trace().re + (&lin.v_coefficient * &dv).trace().re;
                        deriv = deriv.max((dir - fd).abs() / dir.abs().max(fd.abs()).max(1e-12 * scale));
                        entries += 1;
                    }
                }
            }
        }
    }
    check(
        tangent <= 1e-10 && deriv <= 1e-4,
        format!("{entries} entries, tangency gap {tangent:.1e}, directional derivative gap {deriv:.1e}"),
    )
}

/// Six satellites spread in azimuth and elevation above a fixed UE.
fn synthetic_sky() -> (Vec<SatelliteState>, UeState) {
    let p = ground_point(0.52, 1.81);
    let up = p.normalize();
    let east = Vec3::z().cross(&up).normalize();
    let north = up.cross(&east);
    let r = 6_371e3 + 550e3;
    let sats = [(0.0, 80.0), (40.0, 35.0), (115.0, 55.0), (190.0, 25.0), (250.0, 45.0), (320.0, 30.0)]
        .iter()
        .enumerate()
        .map(|(i, &(az, el)): (usize, &(f64, f64))| {
            let (az, el) = (az.to_radians(), el.to_radians());
            let dir = (east * az.sin() + north * az.cos()) * el.cos() + up * el.sin();
            let b = p.dot(&dir);
            let slant = -b + (b * b - p.norm_squared() + r * r).sqrt();
            let q = p + dir * slant;
            SatelliteState { position: q, velocity: q.normalize().cross(&north).normalize() * 7.6e3, clock_bias: 2e-7 * i as f64 }
        })
        .collect();
    let ue = UeState { position: p, velocity: Vec3::new(14.0, -22.0, 5.0), clock_error: 3.2e-7, rx_gain: 1.0 };
    (sats, ue)
}

fn criterion6() -> Outcome {
    let (sats, ue) = synthetic_sky();
    let elev: Vec<f64> = sats.iter().map(|s| ue_elevation(&ue.position, &s.position).angle).collect();
    let phi = build_weighting(&elev).map_err(|e| e.to_string())?;
    let sigma0 = 5.0;
    let mut rng = ChaCha8Rng::seed_from_u64(606);

    let clean = simulate_pseudoranges(&sats, &ue, &mut rng, 0.0);
    let (init, _) = bancroft_init(&sats, &clean).map_err(|e| e.to_string())?;
    let fix = wls_solve(&sats, &clean, init, &phi, 10, 1e-9).map_err(|e| e.to_string())?;
    let noiseless = (fix.position - ue.position).norm();

    let trials = 2000;
    let mut sq = Vec::with_capacity(trials);
    let mut sigmas = Vec::new();
    for _ in 0..trials {
        let pr = simulate_pseudoranges(&sats, &ue, &mut rng, sigma0);
        let (init, _) = bancroft_init(&sats, &pr).map_err(|e| e.to_string())?;
        let fix = wls_solve(&sats, &pr, init, &phi, 10, 1e-6).map_err(|e| e.to_string())?;
        sq.push((fix.position - ue.position).norm_squared());
        sigmas = pr.sigma;
    }
    let n = trials as f64;
    let mse = sq.iter().sum::<f64>() / n;
    let se = (sq.iter().map(|x| (x - mse).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();

    // Delay FIM of independent ranging errors with std sigma_k / c.
    let k = sats.len();
    let tt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, sigmas.iter().map(|s| (LIGHT_SPEED / s).powi(2))));
    let bundle = FimBundle {
        tau_tau: tt,
        freq_freq: DMatrix::identity(k, k),
        tau_freq: DMatrix::zeros(k, k),
        gamma: Matrix3::identity(),
        noise: 1.0,
    };
    let j = jacobian(&sats, &ue.position, &phi).map_err(|e| e.to_string())?;
    let bound = pvt_errors(&bundle, &j, &PvtWeights::default()).map_err(|e| e.to_string())?.position;

    let window = ScenarioConfig::default().window();
    let links = sats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sig = gen_nav_sequence(1, 1023, 0, i, 10e6)?;
            synthesize_decoded(&sig, &window, s, &ue, 35e9, Complex64::from_polar(1.0, 0.3 * i as f64), 0.0, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let est = mle_velocity(&links, &window, &ue.position, 35e9, &VelocitySearch::default()).map_err(|e| e.to_string())?;
    let verr = (est.velocity - ue.velocity).norm();

    check(
        mse >= bound - 3.0 * se && noiseless < 1e-6 && verr < 0.1,
        format!(
            "WLS MSE {mse:.3} m^2 (se {se:.3}) vs E^P {bound:.3} m^2, noiseless WLS {noiseless:.1e} m, noiseless MLE velocity {verr:.1e} m/s"
        ),
    )
}

fn criterion7() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [4usize, 6, 8] {
        let cfg = ScenarioConfig::default().with_value("scenario.satellites", k as f64).map_err(|e| e.to_string())?;
        let (mut wls, mut ls) = (0.0, 0.0);
        let scenes = 5;
        for seed in 0..scenes {
            let s = build_scenario(&cfg, seed).map_err(|e| e.to_string())?;
            let sigma = cfg.scenario.pseudorange_sigma_m;
            let mut a = ChaCha8Rng::seed_from_u64(700 + seed);
            let mut b = ChaCha8Rng::seed_from_u64(700 + seed);
            wls += pseudorange_rmse(&s, sigma, true, 100, &mut a).map_err(|e| e.to_string())?.powi(2);
            ls += pseudorange_rmse(&s, sigma, false, 100, &mut b).map_err(|e| e.to_string())?.powi(2);
        }
        let (wls, ls) = ((wls / scenes as f64).sqrt(), (ls / scenes as f64).sqrt());
        ok &= wls <= ls * (1.0 + 1e-9);
        parts.push(format!("K={k}: WLS {wls:.2} m, LS {ls:.2} m"));
    }
    check(ok, format!("500 trials per UE; {}", parts.join("; ")))
}

fn trend(points: &[SweepPoint], increasing: bool) -> (bool, String) {
    let means: Vec<f64> = points.iter().map(|p| p.weighted.mean).collect();
    let ok = points.iter().all(|p| p.failures.is_empty())
        && means.windows(2).all(|w| if increasing { w[1] >= w[0] } else { w[1] <= w[0] });
    let text = points
        .iter()
        .map(|p| format!("{}: {:.3e} (log10 {:.2})", p.value, p.weighted.mean, p.log_weighted.mean))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, text)
}

fn criterion8(cfg: &ScenarioConfig) -> Outcome {
    let seeds = 20;
    let grids: [(&str, &[f64], bool); 4] = [
        ("optimizer.max_transmit_power_dbm", &[20.0, 25.0, 30.0], false),
        ("optimizer.sainr_threshold_db", &[5.0, 10.0, 15.0], true),
        ("scenario.ues", &[1.0, 2.0, 4.0], true),
        ("constellation.total_satellites", &[864.0, 1296.0, 1728.0], false),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (path, values, increasing) in grids {
        let pts = sweep(cfg, path, values, seeds).map_err(|e| e.to_string())?;
        let (good, text) = trend(&pts, increasing);
        ok &= good;
        lines.push(format!("      {} {path}: {text}", if good { "ok  " } else { "FAIL" }));
    }
    let mut order_fail = Vec::new();
    for seed in cfg.seed..cfg.seed + seeds as u64 {
        let r = run_baselines(cfg, seed).map_err(|e| e.to_string())?;
        let f = |m: &str| r.get(m).map(|x| x.objective).unwrap_or(f64::NAN);
        let (nav, alg, zf) = (f("navigation-only"), f("algorithm1"), f("zfbf"));
        if !(nav <= alg * (1.0 + 1e-6) && alg <= zf * (1.0 + 1e-6)) {
            order_fail.push(format!("seed {seed}: {nav:.3e} / {alg:.3e} / {zf:.3e}"));
        }
    }
    ok &= order_fail.is_empty();
    lines.push(format!(
        "      {} navigation-only <= algorithm1 <= zfbf on {}/{seeds} seeds {}",
        if order_fail.is_empty() { "ok  " } else { "FAIL" },
        seeds - order_fail.len(),
        order_fail.join("; ")
    ));
    check(ok, format!("{seeds} seeds per point\n{}", lines.join("\n")))
}

fn criterion9() -> Outcome {
    let sats = generate_walker(&WalkerConfig::default(), 0.3).map_err(|e| e.to_string())?;
    let mut frame = 0.0f64;
    for s in &sats {
        let f = local_frame(s).map_err(|e| e.to_string())?;
        let m = nalgebra::Matrix3::from_columns(&[f.x, f.y, f.z]);
        frame = frame.max((m.transpose() * m - Matrix3::identity()).amax()).max((f.x.cross(&f.y) - f.z).amax());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut steer = 0.0f64;
    for (nx, ny) in [(1, 1), (2, 2), (4, 4), (3, 5)] {
        let upa = UpaConfig::half_wavelength(nx, ny, 35e9, 3e8);
        for _ in 0..200 {
            let a = transmit_steering(&upa, rng.gen_range(0.0..1.5), rng.gen_range(-3.14..3.14));
            steer = steer.max((a.norm() - 1.0).abs());
        }
    }
    let c = ChannelParams::default();
    let boresight = array_gain(0.0, c.b_max, c.eps_3db);
    let noise = c.noise_power();
    let (sky, ue) = synthetic_sky();
    let phi = build_weighting(&sky.iter().map(|s| ue_elevation(&ue.position, &s.position).angle).collect::<Vec<_>>())
        .map_err(|e| e.to_string())?;
    let jz = jacobian(&sky, &ue.position, &phi).map_err(|e| e.to_string())? * geometry_matrix(&sky, &ue.position);
    // Clock rows are in seconds and the clock column in meters per second;
    // compare with both brought to meters.
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 1.0, LIGHT_SPEED]));
    let d_inv = d.map(|x| if x != 0.0 { 1.0 / x } else { 0.0 });
    let jz_gap = (&d * jz * d_inv / LIGHT_SPEED - DMatrix::<f64>::identity(4, 4)).amax();
    check(
        frame < 1e-12 && steer < 1e-12 && boresight == c.b_max && rel(noise, 2.76e-14) < 1e-12 && jz_gap < 1e-9,
        format!(
            "frame residual {frame:.1e} over {} satellites, steering norm {steer:.1e}, boresight gain {:.4} dBi, noise {noise:.4e} W, |JZ/c - I| {jz_gap:.1e}",
            sats.len(),
            10.0 * boresight.log10()
        ),
    )
}

fn main() {
    let cfg = ScenarioConfig::default();
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, budget_s: f64, run: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        let (ok, detail) = match out {
            Ok(d) => (secs <= budget_s, d),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n} {name:<28} {}  [{secs:.1} s of {budget_s:.0} s] {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    };

    let mut runs = Vec::new();
    report(1, "convergence", 600.0, &mut || {
        runs = desk_runs(&cfg, 0..5);
        criterion1(&runs)
    });
    report(2, "rank recovery", 600.0, &mut || {
        runs.extend(desk_runs(&cfg, 5..20));
        criterion2(&cfg, &runs)
    });
    report(3, "closed-form SAINR", 60.0, &mut || criterion3(&cfg));
    report(4, "lifted vs vector", 600.0, &mut || criterion4(&cfg));
    report(5, "SCA tangency", 600.0, &mut || criterion5(&cfg));
    report(6, "estimator vs bound", 600.0, &mut criterion6);
    report(7, "WLS vs LS", 120.0, &mut criterion7);
    report(8, "trend reproduction", 1800.0, &mut || criterion8(&cfg));
    report(9, "geometry and channel", 60.0, &mut criterion9);

    println!("acceptance: {} of 9 criteria passed in {:.1} s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
