//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. `ACCEPTANCE_ONLY=3,7` runs a subset.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::*;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use sepdd_core::baseline2d::{aggregate_surface, ambiguity_point, estimate_2d, steering_vector, Baseline2dSettings};
use sepdd_core::fusion::{bistatic_delay, bistatic_doppler, localize, velocity_from_dopplers, Geometry, XyGrid};
use sepdd_core::harness::{run_sweep, EstimatorSettings, SceneTemplate, SweepAxis, SweepSpec};
use sepdd_core::projection::build_basis;
use sepdd_core::scene::SceneConfig;
use sepdd_core::separable::{
    delay_criterion_point, delay_profile, estimate_separable, tretter_doppler, AmplitudeSequence, DelayProfile,
    SeparableSettings,
};
use sepdd_core::{wire, Execution};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn projection() -> Outcome {
    let mut r = rng(11);
    let (mut worst_oracle, mut worst_null, mut worst_idem) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..50 {
        let cfg = random_scene(1000 + k, 256, 16, 1.0);
        let b = &batches_for(&cfg, 1)[0];
        let basis = build_basis(b).unwrap();
        let x = interference_matrix(b);
        let p = dense_projector(&x);
        let v = cvec(&mut r, b.len());
        let want: Vec<Complex64> = (&p * dvec(&v)).iter().copied().collect();
        let got = basis.project_out(&v).unwrap();
        worst_oracle = worst_oracle.max(rel_err(&got, &want));

        let w = dvec(&cvec(&mut r, x.ncols()));
        let xw: Vec<Complex64> = (&x * w).iter().copied().collect();
        let null = basis.project_out(&xw).unwrap();
        let ratio = null.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
            / xw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst_null = worst_null.max(ratio);

        worst_idem = worst_idem.max(rel_err(&basis.project_out(&got).unwrap(), &got));
    }
    outcome(
        worst_oracle <= 1e-9 && worst_null <= 1e-9 && worst_idem <= 1e-10,
        format!("oracle {worst_oracle:.1e}, annihilation {worst_null:.1e}, idempotence {worst_idem:.1e}"),
    )
}

fn ambiguity_oracle() -> Outcome {
    let mut r = rng(22);
    let (mut worst_2d, mut worst_sep) = (0.0f64, 0.0f64);
    for k in 0..100 {
        let cfg = random_scene(2000 + k, 256, 8, 1.0);
        let batches = batches_for(&cfg, 2);
        let b = &batches[r.random_range(0..batches.len())];
        let basis = build_basis(b).unwrap();
        let p = dense_projector(&interference_matrix(b));
        let tau = r.random_range(0.05..8.0) * DT;
        let omega = r.random_range(-1e6..1e6);

        let a = steering_vector(b, tau, omega).unwrap();
        let want = dense_criterion(&p, &a, b.surveillance());
        let got = ambiguity_point(b, &basis, tau, omega).unwrap().value;
        worst_2d = worst_2d.max((got - want).abs() / want);

        let dx: Vec<Complex64> =
            b.delayed_reference(tau).unwrap().iter().enumerate().map(|(q, z)| z * q as f64).collect();
        let want = dense_criterion(&p, &dx, b.surveillance());
        let got = delay_criterion_point(b, &basis, tau).unwrap().value;
        worst_sep = worst_sep.max((got - want).abs() / want);
    }
    outcome(worst_2d <= 1e-9 && worst_sep <= 1e-9, format!("2-D {worst_2d:.1e}, delay criterion {worst_sep:.1e}"))
}

fn noiseless_recovery() -> Outcome {
    let (q, m, omega0) = (1 << 10, 8, 250.0);
    let template = SceneTemplate { n_samples: q * m, target_delay: 13.0 * DT, target_doppler: omega0, ..Default::default() };
    let cfg = SceneConfig { noise_power: 0.0, ..template.scene() };
    let batches = prepared_for(&cfg, m);
    let settings = SeparableSettings::default();
    let sep = estimate_separable(&batches, &settings, Execution::default()).unwrap();
    let tau_err = (sep.tau_hat() - cfg.target_delay).abs();
    let omega_rel = (sep.omega_hat() - omega0).abs() / omega0;

    let est = EstimatorSettings { batches: m, ..Default::default() };
    let b2 = Baseline2dSettings::default();
    let e = estimate_2d(&batches, &est.search_box(&batches), Some((cfg.target_delay, omega0)), &b2, Execution::default())
        .unwrap();
    let tol = (DT * b2.relative_tolerance, 2.0 * PI / ((q * m) as f64 * DT) * b2.relative_tolerance);
    let (e_tau, e_omega) = ((e.tau_hat - cfg.target_delay).abs(), (e.omega_hat - omega0).abs());
    outcome(
        tau_err <= settings.fine_step * DT && omega_rel <= 1e-3 && e_tau <= tol.0 && e_omega <= tol.1,
        format!(
            "separable |dtau| {tau_err:.1e} s, omega rel {omega_rel:.1e}; 2-D |dtau| {e_tau:.1e} s, |domega| {e_omega:.1e} rad/s"
        ),
    )
}

fn batch_sweep() -> Outcome {
    let spec = SweepSpec {
        axis: SweepAxis::Batches { batch_len: 1 << 12, batch_counts: vec![2, 4, 8, 16], dopplers: vec![250.0] },
        trials: 100,
        master_seed: 1,
        scene: SceneTemplate { tnr_db: 30.0, ..Default::default() },
        estimator: EstimatorSettings::default(),
    };
    let table = run_sweep(&spec, Execution::default()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut last = f64::INFINITY;
    for r in &table.rows {
        let (b, s) = (&r.baseline, &r.separable);
        pass &= s.tau_rmse <= 2.0 * b.tau_rmse;
        pass &= s.omega_rmse <= b.omega_rmse;
        pass &= s.omega_rmse <= last;
        pass &= b.failed == 0 && s.failed == 0;
        last = s.omega_rmse;
        detail.push(format!(
            "M={} tau {:.2e}/{:.2e} s omega {:.1}/{:.1} rad/s",
            r.batches, s.tau_rmse, b.tau_rmse, s.omega_rmse, b.omega_rmse
        ));
    }
    outcome(pass, format!("separable/2-D: {}", detail.join("; ")))
}

fn threshold_effect() -> Outcome {
    let spec = SweepSpec {
        axis: SweepAxis::Doppler { n_samples: 1 << 14, dopplers: vec![50.0], batch_counts: vec![4, 64] },
        trials: 100,
        master_seed: 2,
        scene: SceneTemplate { tnr_db: 40.0, ..Default::default() },
        estimator: EstimatorSettings::default(),
    };
    let table = run_sweep(&spec, Execution::default()).unwrap();
    let (few, many) = (table.row(4, 50.0).unwrap(), table.row(64, 50.0).unwrap());
    let sep_ratio = many.separable.omega_rmse / few.separable.omega_rmse;
    let b = (many.baseline.omega_rmse, few.baseline.omega_rmse);
    let base_change = b.0.max(b.1) / b.0.min(b.1);
    outcome(
        sep_ratio >= 5.0 && base_change < 2.0,
        format!(
            "separable omega RMSE {:.1} -> {:.1} rad/s (x{sep_ratio:.1}); 2-D {:.1} -> {:.1} rad/s (x{base_change:.2})",
            few.separable.omega_rmse, many.separable.omega_rmse, b.1, b.0
        ),
    )
}

fn tretter() -> Outcome {
    let mut r = rng(66);
    let (dt, q) = (4e-8, 4096);
    let mut worst_exact = 0.0f64;
    for _ in 0..200 {
        let m = r.random_range(2..128);
        let slope = r.random_range(-3.0..3.0);
        let phi0 = r.random_range(-PI..PI);
        let d = (1..=m).map(|k| Complex64::from_polar(2.0, phi0 + slope * k as f64)).collect();
        let fit = tretter_doppler(&AmplitudeSequence::from_amplitudes(d), dt, q).unwrap();
        let omega = slope / (dt * q as f64);
        worst_exact = worst_exact.max((fit.omega_hat - omega).abs() / omega.abs());
    }

    let sigma = 0.01;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut ratios = Vec::new();
    for m in [8usize, 16, 32, 64] {
        let slope = 0.05;
        let errs: Vec<f64> = (0..1000)
            .map(|_| {
                let d = (1..=m)
                    .map(|k| Complex64::from_polar(1.0, 0.4 + slope * k as f64 + noise.sample(&mut r)))
                    .collect();
                tretter_doppler(&AmplitudeSequence::from_amplitudes(d), dt, q).unwrap().slope - slope
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
        let mf = m as f64;
        let law = sigma * (12.0 / (mf * (mf * mf - 1.0))).sqrt();
        ratios.push((m, sd / law));
    }
    let scaling_ok = ratios.iter().all(|(_, k)| *k <= 1.5 && *k >= 1.0 / 1.5);
    let shown: Vec<String> = ratios.iter().map(|(m, k)| format!("M={m}: {k:.3}")).collect();
    outcome(
        worst_exact <= 1e-12 && scaling_ok,
        format!("exact fit rel {worst_exact:.1e}; sd/law {}", shown.join(", ")),
    )
}

fn fusion() -> Outcome {
    let g = Geometry {
        io_pos: [0.0, 0.0],
        node_pos: vec![[1000.0, 0.0], [-1000.0, 0.0], [0.0, 1000.0], [0.0, -1000.0]],
        carrier: 2.0 * PI * 600e6,
        c: 299_792_458.0,
    };
    let (pos, vel) = ([123.4, -56.7], [10.0, -5.0]);
    let step = DT / 2.0;
    let profiles: Vec<DelayProfile> = (0..4)
        .map(|k| {
            let tau = bistatic_delay(&g, k, pos).unwrap();
            let tau_grid: Vec<f64> = (0..=64).map(|i| i as f64 * step).collect();
            let values = tau_grid.iter().map(|t| (1.0 - (t - tau).abs() / step).max(0.0)).collect();
            DelayProfile { tau_grid, values, degenerate_points: 0 }
        })
        .collect();
    let grid = XyGrid { x: (-300.0, 300.0), y: (-300.0, 300.0), nx: 200, ny: 200 };
    let fix = localize(&profiles, &g, &grid, Execution::default()).unwrap().pos;
    let cell = grid.cell();
    let in_cell = (fix[0] - pos[0]).abs() <= cell[0] && (fix[1] - pos[1]).abs() <= cell[1];

    let omegas: Vec<f64> = (0..4).map(|k| bistatic_doppler(&g, k, pos, vel).unwrap()).collect();
    let v = velocity_from_dopplers(&g, pos, &omegas).unwrap().vel;
    let vel_rel = (v[0] - vel[0]).hypot(v[1] - vel[1]) / vel[0].hypot(vel[1]);

    let mut worst_fd = 0.0f64;
    let eps = 1e-6;
    for k in 0..4 {
        let at = |s: f64| bistatic_delay(&g, k, [pos[0] + vel[0] * s, pos[1] + vel[1] * s]).unwrap();
        let fd = -g.carrier * (at(eps) - at(-eps)) / (2.0 * eps);
        worst_fd = worst_fd.max((fd - omegas[k]).abs() / omegas[k].abs());
    }
    outcome(
        in_cell && vel_rel <= 1e-6 && worst_fd <= 1e-4,
        format!(
            "fix ({:.1}, {:.1}) m vs ({}, {}), cell {:.2} m; velocity rel {vel_rel:.1e}; gradient rel {worst_fd:.1e}",
            fix[0], fix[1], pos[0], pos[1], cell[0]
        ),
    )
}

fn communication() -> Outcome {
    let (q, m) = (1024, 2);
    let template = SceneTemplate { n_samples: q * m, tnr_db: 20.0, ..Default::default() };
    let batches = prepared_for(&template.scene(), m);
    let est = EstimatorSettings { batches: m, doppler_span: 1e5, ..Default::default() };
    let b2 = est.baseline;
    let search = est.search_box(&batches);
    let (_, omega_grid) = b2.grids(&search, q, DT);
    let tau_grid: Vec<f64> = (1..=2 * est.order).map(|i| i as f64 * b2.tau_step * DT).collect();
    let profile = delay_profile(&batches, &tau_grid, Execution::default()).unwrap();
    let surface = aggregate_surface(&batches, &tau_grid, &omega_grid, Execution::default()).unwrap();
    let (mut pbytes, mut sbytes) = (Vec::new(), Vec::new());
    profile.write_csv(&mut pbytes).unwrap();
    surface.write_csv(&mut sbytes).unwrap();
    let (nt, nw) = (tau_grid.len(), omega_grid.len());
    let (p, s) = (pbytes.len(), sbytes.len());
    let exact = p == wire::profile_csv_bytes(nt) && s == wire::surface_csv_bytes(nt, nw);
    let ratio = s as f64 / p as f64;
    let predicted = wire::surface_csv_bytes(nt, nw) as f64 / wire::profile_csv_bytes(nt) as f64;
    outcome(
        exact && s >= nw * p && ratio == predicted,
        format!("{nt} delays x {nw} Dopplers: profile {p} B, surface {s} B, ratio {ratio:.4} >= {nw}"),
    )
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, Duration, fn() -> Outcome); 8] = [
        (1, "projection correctness", Duration::from_secs(10), projection),
        (2, "ambiguity oracle equivalence", Duration::from_secs(10), ambiguity_oracle),
        (3, "noiseless exact recovery", Duration::from_secs(30), noiseless_recovery),
        (4, "batch-count sweep", Duration::from_secs(20 * 60), batch_sweep),
        (5, "slow-target threshold effect", Duration::from_secs(20 * 60), threshold_effect),
        (6, "phase regression exactness and scaling", Duration::from_secs(60), tretter),
        (7, "fusion self-consistency", Duration::from_secs(60), fusion),
        (8, "communication accounting", Duration::from_secs(60), communication),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let took = start.elapsed();
        let pass = out.pass && took <= limit;
        failed += !pass as usize;
        println!(
            "{} criterion {id}: {name}: {} [{:.1} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
