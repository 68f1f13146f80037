//! Monte Carlo experiments: paired single-node trials, batch-count and
//! Doppler sweeps with RMSE tables, and a multi-node localization demo.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseline2d::{estimate_2d, Baseline2dSettings, SearchBox};
use crate::batching::make_batches;
use crate::error::{invalid, Result};
use crate::fusion::{self, bistatic_delay, bistatic_doppler, Geometry, TargetState, XyGrid};
use crate::par::Execution;
use crate::projection::{prepare_batches, PreparedBatch};
use crate::scene::{
    complex_gaussian, generate_waveform, seeded_stream, synthesize_node, ClutterTap, SceneConfig,
};
use crate::separable::{estimate_separable, SeparableSettings};
use crate::wire;

const STREAM_CLUTTER: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline2d,
    Separable,
}

/// Conditions noticed while producing one estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    /// The estimator failed; the estimates are NaN.
    pub error: Option<String>,
    /// The true delay is outside `(0, L dt]`.
    pub outside_clutter_span: bool,
    pub not_converged: bool,
    /// `|w Q dt| > 1`, where the linearized model is poor.
    pub approximation_warning: bool,
    /// Batches whose amplitude was too small to carry a phase.
    pub unreliable_batches: usize,
}

impl Flags {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    pub tau_hat: f64,
    pub omega_hat: f64,
    /// `tau_hat - tau0`.
    pub tau_err: f64,
    /// `omega_hat - omega0`.
    pub omega_err: f64,
    pub flags: Flags,
    /// Seconds, including the shared interference projection.
    pub wall_time: f64,
}

impl TrialResult {
    fn failed(method: Method, err: String, wall_time: f64) -> Self {
        Self {
            method,
            tau_hat: f64::NAN,
            omega_hat: f64::NAN,
            tau_err: f64::NAN,
            omega_err: f64::NAN,
            flags: Flags { error: Some(err), ..Default::default() },
            wall_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    /// Number of batches `M`.
    pub batches: usize,
    /// Clutter order `L` assumed by the projector.
    pub order: usize,
    pub separable: SeparableSettings,
    pub baseline: Baseline2dSettings,
    /// Half-width of the baseline Doppler search box, rad/s.
    pub doppler_span: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            batches: 8,
            order: 32,
            separable: SeparableSettings::default(),
            baseline: Baseline2dSettings::default(),
            doppler_span: 1000.0,
        }
    }
}

impl EstimatorSettings {
    pub fn search_box(&self, batches: &[PreparedBatch]) -> SearchBox {
        let max_tau = batches.first().map_or(0.0, |b| b.batch.max_delay());
        SearchBox { tau: (0.0, max_tau), omega: (-self.doppler_span, self.doppler_span) }
    }
}

/// Runs both estimators on one synthesized scene.
///
/// `seed` replaces `cfg.seed` and also seeds the waveform, so a seed fixes
/// the whole trial. The baseline simplex starts at the true `(tau0, w0)`.
pub fn run_trial(cfg: &SceneConfig, est: &EstimatorSettings, seed: u64) -> Result<(TrialResult, TrialResult)> {
    run_trial_with(cfg, est, seed, Execution::Sequential)
}

pub fn run_trial_with(
    cfg: &SceneConfig,
    est: &EstimatorSettings,
    seed: u64,
    exec: Execution,
) -> Result<(TrialResult, TrialResult)> {
    cfg.validate()?;
    let cfg = SceneConfig { seed, ..cfg.clone() };
    let pre_roll = cfg.clutter_order().max(est.order);
    let waveform = generate_waveform(cfg.n_samples + pre_roll, seed)?;
    let node = synthesize_node(&cfg, &waveform)?;

    let start = Instant::now();
    let prepared = make_batches(&node, est.batches, est.order).and_then(|b| prepare_batches(b, exec));
    let prep_time = start.elapsed().as_secs_f64();
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            return Ok((
                TrialResult::failed(Method::Baseline2d, msg.clone(), prep_time),
                TrialResult::failed(Method::Separable, msg, prep_time),
            ));
        }
    };
    let (tau0, w0) = (cfg.target_delay, cfg.target_doppler);
    let finish = |method, tau_hat: f64, omega_hat: f64, flags, wall_time| TrialResult {
        method,
        tau_hat,
        omega_hat,
        tau_err: tau_hat - tau0,
        omega_err: omega_hat - w0,
        flags,
        wall_time,
    };

    let start = Instant::now();
    let search = est.search_box(&prepared);
    let baseline = match estimate_2d(&prepared, &search, Some((tau0, w0)), &est.baseline, exec) {
        Ok(e) => {
            let flags = Flags { not_converged: !e.converged, ..Default::default() };
            finish(Method::Baseline2d, e.tau_hat, e.omega_hat, flags, prep_time + start.elapsed().as_secs_f64())
        }
        Err(e) => TrialResult::failed(Method::Baseline2d, e.to_string(), prep_time + start.elapsed().as_secs_f64()),
    };

    let start = Instant::now();
    let in_span = tau0 > 0.0 && tau0 <= est.order as f64 * cfg.dt * (1.0 + 1e-12);
    let separable = match estimate_separable(&prepared, &est.separable, exec) {
        Ok(e) => {
            let flags = Flags {
                outside_clutter_span: !in_span,
                approximation_warning: e.fit.approximation_warning,
                unreliable_batches: e.sequence.reliable.iter().filter(|r| !**r).count(),
                ..Default::default()
            };
            finish(Method::Separable, e.tau_hat(), e.omega_hat(), flags, prep_time + start.elapsed().as_secs_f64())
        }
        Err(e) => {
            let mut r = TrialResult::failed(Method::Separable, e.to_string(), prep_time + start.elapsed().as_secs_f64());
            r.flags.outside_clutter_span = !in_span;
            r
        }
    };
    Ok((baseline, separable))
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Scene described by power ratios relative to the noise, in dB.
///
/// The waveform has unit power, so a ratio `r` dB means an amplitude of
/// `sqrt(noise_power * 10^(r/10))`. Clutter taps on lags `1..=order` and
/// all amplitude phases are drawn once from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneTemplate {
    pub n_samples: usize,
    pub dt: f64,
    pub order: usize,
    pub dnr_db: f64,
    /// Total over all clutter taps.
    pub cnr_db: f64,
    pub tnr_db: f64,
    pub target_delay: f64,
    pub target_doppler: f64,
    pub noise_power: f64,
    pub seed: u64,
}

impl Default for SceneTemplate {
    fn default() -> Self {
        Self {
            n_samples: 1 << 15,
            dt: 4e-8,
            order: 32,
            dnr_db: 30.0,
            cnr_db: 10.0,
            tnr_db: -5.0,
            target_delay: 13.0 * 4e-8,
            target_doppler: 250.0,
            noise_power: 1.0,
            seed: 2024,
        }
    }
}

impl SceneTemplate {
    pub fn scene(&self) -> SceneConfig {
        let mut rng = seeded_stream(self.seed, STREAM_CLUTTER);
        let mut unit = || {
            let z = complex_gaussian(&mut rng, 1.0);
            z / z.norm().max(f64::MIN_POSITIVE)
        };
        let amp = |r_db: f64| (self.noise_power * db(r_db)).sqrt();
        let b = unit() * amp(self.dnr_db);
        let d = unit() * amp(self.tnr_db);
        let mut rng = seeded_stream(self.seed ^ 0x9e37_79b9_7f4a_7c15, STREAM_CLUTTER);
        let raw: Vec<Complex64> = (0..self.order).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let total: f64 = raw.iter().map(|c| c.norm_sqr()).sum();
        let scale = if total > 0.0 { (self.noise_power * db(self.cnr_db) / total).sqrt() } else { 0.0 };
        SceneConfig {
            n_samples: self.n_samples,
            dt: self.dt,
            dpi_amp: b.into(),
            clutter_taps: raw.iter().enumerate().map(|(l, c)| ClutterTap::new(l + 1, c * scale)).collect(),
            target_amp: d.into(),
            target_delay: self.target_delay,
            target_doppler: self.target_doppler,
            noise_power: self.noise_power,
            seed: self.seed,
        }
    }
}

/// Independent per-trial seed.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master.wrapping_add((trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Batch length fixed, so `N = M Q` grows with `M`.
    Batches { batch_len: usize, batch_counts: Vec<usize>, dopplers: Vec<f64> },
    /// Record length fixed, `Q = N / M`.
    Doppler { n_samples: usize, dopplers: Vec<f64>, batch_counts: Vec<usize> },
}

impl SweepAxis {
    fn points(&self) -> Vec<(usize, usize, f64)> {
        match self {
            SweepAxis::Batches { batch_len, batch_counts, dopplers } => dopplers
                .iter()
                .flat_map(|w| batch_counts.iter().map(move |m| (*m, m * batch_len, *w)))
                .collect(),
            SweepAxis::Doppler { n_samples, dopplers, batch_counts } => batch_counts
                .iter()
                .flat_map(|m| dopplers.iter().map(move |w| (*m, *n_samples, *w)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub scene: SceneTemplate,
    #[serde(default)]
    pub estimator: EstimatorSettings,
}

impl SweepSpec {
    /// Batch-count sweep at `Q = 2^12`, `M` in {2, 4, 8, 16}, three target
    /// speeds.
    pub fn batches_default() -> Self {
        Self {
            axis: SweepAxis::Batches {
                batch_len: 1 << 12,
                batch_counts: vec![2, 4, 8, 16],
                dopplers: vec![50.0, 250.0, 450.0],
            },
            trials: 100,
            master_seed: 1,
            scene: SceneTemplate { tnr_db: 20.0, ..Default::default() },
            estimator: EstimatorSettings::default(),
        }
    }

    /// Doppler sweep at `N = 2^14` for several batch counts.
    pub fn doppler_default() -> Self {
        Self {
            axis: SweepAxis::Doppler {
                n_samples: 1 << 14,
                dopplers: vec![50.0, 250.0, 450.0],
                batch_counts: vec![4, 16, 64],
            },
            trials: 100,
            master_seed: 2,
            scene: SceneTemplate { tnr_db: 50.0, ..Default::default() },
            estimator: EstimatorSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        let empty = match &self.axis {
            SweepAxis::Batches { batch_counts, dopplers, .. } => batch_counts.is_empty() || dopplers.is_empty(),
            SweepAxis::Doppler { batch_counts, dopplers, .. } => batch_counts.is_empty() || dopplers.is_empty(),
        };
        if empty {
            return invalid("sweep values must be non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub tau_rmse: f64,
    pub omega_rmse: f64,
    /// Trials with any flag set.
    pub flagged: usize,
    /// Trials without an estimate, left out of the RMSE.
    pub failed: usize,
    pub mean_time: f64,
}

impl MethodStats {
    pub fn from_trials<'a>(results: impl IntoIterator<Item = &'a TrialResult>) -> Self {
        let (mut st, mut sw, mut n, mut flagged, mut failed, mut time, mut total) = (0.0, 0.0, 0, 0, 0, 0.0, 0);
        for r in results {
            total += 1;
            time += r.wall_time;
            flagged += !r.flags.is_empty() as usize;
            if r.tau_err.is_finite() && r.omega_err.is_finite() {
                st += r.tau_err * r.tau_err;
                sw += r.omega_err * r.omega_err;
                n += 1;
            } else {
                failed += 1;
            }
        }
        let rms = |s: f64| if n > 0 { (s / n as f64).sqrt() } else { f64::NAN };
        Self {
            tau_rmse: rms(st),
            omega_rmse: rms(sw),
            flagged,
            failed,
            mean_time: if total > 0 { time / total as f64 } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub batches: usize,
    pub batch_len: usize,
    pub n_samples: usize,
    pub omega0: f64,
    pub trials: usize,
    pub baseline: MethodStats,
    pub separable: MethodStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "batches,batch_len,n_samples,omega0_rad_s,trials,\
tau_rmse_2d_s,omega_rmse_2d_rad_s,flagged_2d,failed_2d,time_2d_s,\
tau_rmse_sep_s,omega_rmse_sep_rad_s,flagged_sep,failed_sep,time_sep_s";

impl SweepTable {
    /// Rows for one target speed.
    pub fn series(&self, omega0: f64) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.omega0 == omega0).collect()
    }

    pub fn row(&self, batches: usize, omega0: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.batches == batches && r.omega0 == omega0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        for r in &self.rows {
            let (b, p) = (&r.baseline, &r.separable);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:e},{:e},{},{},{:e},{:e},{:e},{},{},{:e}",
                r.batches,
                r.batch_len,
                r.n_samples,
                r.omega0,
                r.trials,
                b.tau_rmse,
                b.omega_rmse,
                b.flagged,
                b.failed,
                b.mean_time,
                p.tau_rmse,
                p.omega_rmse,
                p.flagged,
                p.failed,
                p.mean_time
            );
        }
        s
    }

    /// Gnuplot script plotting the Doppler and delay RMSE from `csv_name`
    /// on a log scale, one curve per method and series.
    pub fn gnuplot_script(&self, csv_name: &str) -> String {
        let (xcol, xlabel, key_col, key_name, keys): (usize, &str, usize, &str, Vec<f64>) = match &self.axis {
            SweepAxis::Batches { dopplers, .. } => (1, "number of batches M", 4, "w0", dopplers.clone()),
            SweepAxis::Doppler { batch_counts, .. } => {
                (4, "target Doppler w0 (rad/s)", 1, "M", batch_counts.iter().map(|m| *m as f64).collect())
            }
        };
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set logscale y");
        let _ = writeln!(s, "set key outside");
        let _ = writeln!(s, "set xlabel '{xlabel}'");
        if matches!(self.axis, SweepAxis::Batches { .. }) {
            let _ = writeln!(s, "set logscale x 2");
        }
        for (title, c2d, csep, ylabel, out) in [
            ("Doppler RMSE", 7, 12, "RMSE (rad/s)", "omega"),
            ("delay RMSE", 6, 11, "RMSE (s)", "tau"),
        ] {
            let stem = csv_name.trim_end_matches(".csv");
            let _ = writeln!(s, "set terminal pngcairo size 900,600");
            let _ = writeln!(s, "set output '{stem}_{out}.png'");
            let _ = writeln!(s, "set title '{title}'");
            let _ = writeln!(s, "set ylabel '{ylabel}'");
            let curves: Vec<String> = keys
                .iter()
                .flat_map(|k| {
                    [(c2d, "2-D"), (csep, "separable")].map(|(col, name)| {
                        format!(
                            "'{csv_name}' every ::1 using {xcol}:(${key_col}=={k}?${col}:1/0) with linespoints title '{name} {key_name}={k}'"
                        )
                    })
                })
                .collect();
            let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
        }
        s
    }
}

/// Runs every sweep point with `spec.trials` paired trials. Trial `i` uses
/// the same seed at every point.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepTable> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (m, n, w) in spec.axis.points() {
        let scene = SceneTemplate { n_samples: n, target_doppler: w, ..spec.scene }.scene();
        let est = EstimatorSettings { batches: m, ..spec.estimator };
        let results = exec.map_range(spec.trials, |i| run_trial(&scene, &est, trial_seed(spec.master_seed, i)));
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let row = SweepRow {
            batches: m,
            batch_len: n / m.max(1),
            n_samples: n,
            omega0: w,
            trials: spec.trials,
            baseline: MethodStats::from_trials(results.iter().map(|r| &r.0)),
            separable: MethodStats::from_trials(results.iter().map(|r| &r.1)),
        };
        log::info!(
            "M={m} N={n} w0={w}: omega RMSE 2-D {:.3e} sep {:.3e}, tau RMSE 2-D {:.3e} sep {:.3e}",
            row.baseline.omega_rmse,
            row.separable.omega_rmse,
            row.baseline.tau_rmse,
            row.separable.tau_rmse
        );
        rows.push(row);
    }
    Ok(SweepTable { axis: spec.axis.clone(), rows })
}

/// Multi-node scenario: every node sees the same illuminator waveform and a
/// target whose delay and Doppler follow from the geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeDemo {
    pub geometry: Geometry,
    pub target: TargetState,
    pub scene: SceneTemplate,
    pub estimator: EstimatorSettings,
    pub grid: XyGrid,
}

impl Default for LocalizeDemo {
    fn default() -> Self {
        Self {
            geometry: Geometry {
                io_pos: [0.0, 0.0],
                node_pos: vec![[1000.0, 0.0], [-1000.0, 0.0], [0.0, 1000.0], [0.0, -1000.0]],
                carrier: 2.0 * std::f64::consts::PI * 600e6,
                c: 299_792_458.0,
            },
            target: TargetState { pos: [100.0, 80.0], vel: [10.0, -5.0] },
            scene: SceneTemplate { n_samples: 1 << 15, tnr_db: 50.0, ..Default::default() },
            estimator: EstimatorSettings::default(),
            grid: XyGrid { x: (-200.0, 400.0), y: (-200.0, 400.0), nx: 121, ny: 121 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub tau_true: f64,
    pub omega_true: f64,
    pub tau_hat: f64,
    pub omega_hat: f64,
    /// Size of the transmitted delay profile CSV.
    pub profile_bytes: usize,
    /// Size of an ambiguity surface CSV on the same delay grid.
    pub surface_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeReport {
    pub truth: TargetState,
    pub estimate: TargetState,
    pub velocity_residual: f64,
    pub nodes: Vec<NodeReport>,
    pub profile_bytes_total: usize,
    pub surface_bytes_total: usize,
}

pub fn run_localize(demo: &LocalizeDemo, seed: u64, exec: Execution) -> Result<LocalizeReport> {
    let geom = &demo.geometry;
    geom.validate()?;
    let base = demo.scene.scene();
    let est = &demo.estimator;
    let waveform = generate_waveform(base.n_samples + base.clutter_order().max(est.order), seed)?;
    let mut profiles = Vec::new();
    let mut nodes = Vec::new();
    let mut omegas = Vec::new();
    for k in 0..geom.nodes() {
        let tau = bistatic_delay(geom, k, demo.target.pos)?;
        let omega = bistatic_doppler(geom, k, demo.target.pos, demo.target.vel)?;
        if tau > est.order as f64 * base.dt {
            log::warn!("node {k}: target delay {tau:e} s lies outside the clutter span");
        }
        let cfg = SceneConfig {
            target_delay: tau,
            target_doppler: omega,
            seed: trial_seed(seed, k),
            ..base.clone()
        };
        let node = synthesize_node(&cfg, &waveform)?;
        let prepared = prepare_batches(make_batches(&node, est.batches, est.order)?, exec)?;
        let sep = estimate_separable(&prepared, &est.separable, exec)?;
        let q = prepared[0].batch.len();
        let search = est.search_box(&prepared);
        let (_, omega_grid) = est.baseline.grids(&search, q, base.dt);
        let n_tau = sep.delay.profile.tau_grid.len();
        nodes.push(NodeReport {
            tau_true: tau,
            omega_true: omega,
            tau_hat: sep.tau_hat(),
            omega_hat: sep.omega_hat(),
            profile_bytes: sep.delay.profile.csv_bytes(),
            surface_bytes: wire::surface_csv_bytes(n_tau, omega_grid.len()),
        });
        omegas.push(sep.omega_hat());
        profiles.push(sep.delay.profile);
    }
    let pos = fusion::localize(&profiles, geom, &demo.grid, exec)?.pos;
    let vel = fusion::velocity_from_dopplers(geom, pos, &omegas)?;
    Ok(LocalizeReport {
        truth: demo.target,
        estimate: TargetState { pos, vel: vel.vel },
        velocity_residual: vel.residual_norm,
        profile_bytes_total: nodes.iter().map(|n| n.profile_bytes).sum(),
        surface_bytes_total: nodes.iter().map(|n| n.surface_bytes).sum(),
        nodes,
    })
}
