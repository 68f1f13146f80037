//! Separable delay and Doppler estimation for slow targets inside the
//! clutter span.
//!
//! To first order in `w dt q` the steering vector is
//! `x_m(tau) + j w dt D x_m(tau)` with `D = diag(0, 1, ..., Q-1)`. The first
//! term lies in the clutter span and is removed by the projector, so the
//! per-batch criterion no longer depends on Doppler:
//!
//! ```text
//! P_m(tau) = |x_m(tau)^H D Pi_perp y_m|^2 / (x_m(tau)^H D Pi_perp D x_m(tau))
//! ```
//!
//! With the delay fixed, the unnormalized amplitudes
//! `d~_m = x_m(tau)^H D Pi_perp y_m` rotate by `Q w dt` from one batch to the
//! next; a least-squares line through their unwrapped phases gives `w`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseline2d::{locate, PointValue, DEGENERATE_RATIO};
use crate::batching::Batch;
use crate::error::{invalid, Error, Result};
use crate::par::Execution;
use crate::projection::{dot_conj, norm_sqr, PreparedBatch, ProjectionBasis};
use crate::scene::FractionalDelay;
use crate::wire;

/// Relative magnitude below which an amplitude's phase is not used.
pub const UNRELIABLE_RATIO: f64 = 1e-12;

fn ramp_weighted(batch: &Batch, op: &FractionalDelay, out: &mut [Complex64]) {
    batch.delayed_reference_into(op, out);
    for (q, z) in out.iter_mut().enumerate() {
        *z *= q as f64;
    }
}

fn check_span(batch: &Batch, tau: f64) -> Result<()> {
    let hi = batch.order() as f64 * batch.dt() * (1.0 + 1e-12);
    if !(tau > 0.0 && tau <= hi) {
        return invalid(format!("delay {tau} s outside the clutter span (0, {hi}] s"));
    }
    Ok(())
}

fn criterion(basis: &ProjectionBasis, dx: &mut [Complex64], cleaned: &[Complex64]) -> PointValue {
    let scale = norm_sqr(dx);
    basis.project_out_in_place(dx);
    let den = norm_sqr(dx);
    if !(den > DEGENERATE_RATIO * scale) {
        return PointValue { value: 0.0, degenerate: true };
    }
    PointValue { value: dot_conj(dx, cleaned).norm_sqr() / den, degenerate: false }
}

/// Doppler-free delay criterion of one batch.
pub fn delay_criterion_point(batch: &Batch, basis: &ProjectionBasis, tau: f64) -> Result<PointValue> {
    check_span(batch, tau)?;
    if basis.len() != batch.len() {
        return invalid("basis length does not match the batch");
    }
    let cleaned = basis.project_out(batch.surveillance())?;
    let op = batch.delay_operator(tau)?;
    let mut dx = vec![Complex64::new(0.0, 0.0); batch.len()];
    ramp_weighted(batch, &op, &mut dx);
    Ok(criterion(basis, &mut dx, &cleaned))
}

impl PreparedBatch {
    /// [`delay_criterion_point`] using the cached `Pi_perp y_m`.
    pub fn delay_criterion(&self, tau: f64) -> Result<PointValue> {
        check_span(&self.batch, tau)?;
        let op = self.batch.delay_operator(tau)?;
        let mut dx = vec![Complex64::new(0.0, 0.0); self.batch.len()];
        ramp_weighted(&self.batch, &op, &mut dx);
        Ok(criterion(&self.basis, &mut dx, self.cleaned()))
    }
}

/// Delay criterion summed over batches on a delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub degenerate_points: usize,
}

impl DelayProfile {
    pub fn argmax(&self) -> (f64, f64) {
        let (k, v) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        (self.tau_grid[k], v)
    }

    /// Linear interpolation; zero outside the grid.
    pub fn sample(&self, tau: f64) -> f64 {
        match locate(&self.tau_grid, tau) {
            Some((i, f)) => {
                let j = (i + 1).min(self.values.len() - 1);
                (1.0 - f) * self.values[i] + f * self.values[j]
            }
            None => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<usize> {
        w.write_all(wire::PROFILE_HEADER.as_bytes())?;
        let mut bytes = wire::PROFILE_HEADER.len();
        for (t, v) in self.tau_grid.iter().zip(&self.values) {
            let line = format!("{},{}\n", wire::field(*t), wire::field(*v));
            w.write_all(line.as_bytes())?;
            bytes += line.len();
        }
        Ok(bytes)
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("write to memory");
        String::from_utf8(out).expect("ascii csv")
    }

    pub fn csv_bytes(&self) -> usize {
        wire::profile_csv_bytes(self.tau_grid.len())
    }

    /// Parses the CSV written by [`DelayProfile::write_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(wire::PROFILE_HEADER.trim()) {
            return invalid("delay profile CSV must start with `tau_s,value`");
        }
        let mut tau_grid = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed = line.split_once(',').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            let Some((t, v)) = parsed else {
                return invalid(format!("malformed delay profile row {}", k + 2));
            };
            tau_grid.push(t);
            values.push(v);
        }
        if tau_grid.is_empty() {
            return invalid("delay profile CSV has no rows");
        }
        Ok(Self { tau_grid, values, degenerate_points: 0 })
    }
}

/// Evaluates the summed delay criterion on `tau_grid`.
pub fn delay_profile(batches: &[PreparedBatch], tau_grid: &[f64], exec: Execution) -> Result<DelayProfile> {
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    for t in tau_grid {
        check_span(&first.batch, *t)?;
    }
    let points = exec.map(tau_grid, |tau| {
        let op = FractionalDelay::new(tau / first.batch.dt());
        let mut dx = vec![Complex64::new(0.0, 0.0); first.batch.len()];
        let mut total = 0.0;
        let mut degenerate = 0;
        for b in batches {
            dx.resize(b.batch.len(), Complex64::new(0.0, 0.0));
            ramp_weighted(&b.batch, &op, &mut dx);
            let p = criterion(&b.basis, &mut dx, b.cleaned());
            total += p.value;
            degenerate += p.degenerate as usize;
        }
        (total, degenerate)
    });
    Ok(DelayProfile {
        tau_grid: tau_grid.to_vec(),
        values: points.iter().map(|p| p.0).collect(),
        degenerate_points: points.iter().map(|p| p.1).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayEstimate {
    pub tau_hat: f64,
    /// Coarse profile over `[dt, L dt]`, the statistic a node transmits.
    pub profile: DelayProfile,
    /// Fine profile around the coarse argmax.
    pub fine: DelayProfile,
}

/// Coarse scan over `[dt, L dt]` followed by a fine scan of
/// `[argmax - coarse_step, argmax + coarse_step]`.
pub fn estimate_delay(
    batches: &[PreparedBatch],
    coarse_step: f64,
    fine_step: f64,
    exec: Execution,
) -> Result<DelayEstimate> {
    if !(fine_step > 0.0 && coarse_step >= fine_step && coarse_step.is_finite()) {
        return invalid("delay steps must satisfy coarse >= fine > 0");
    }
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    let dt = first.batch.dt();
    let hi = first.batch.order() as f64 * dt;
    if hi < dt {
        return invalid("clutter order must be at least 1 for the delay scan");
    }
    let n_coarse = ((hi - dt) / coarse_step + 1e-9).floor() as usize;
    let coarse: Vec<f64> = (0..=n_coarse).map(|i| dt + i as f64 * coarse_step).collect();
    let profile = delay_profile(batches, &coarse, exec)?;
    let total_points = coarse.len() * batches.len();
    if profile.degenerate_points == total_points {
        return Err(Error::NoTargetSignal);
    }
    let (center, _) = profile.argmax();

    let half = (coarse_step / fine_step + 1e-9).floor() as i64;
    let fine_grid: Vec<f64> = (-half..=half)
        .map(|k| center + k as f64 * fine_step)
        .filter(|t| *t > 0.0 && *t <= hi * (1.0 + 1e-12))
        .collect();
    let fine = delay_profile(batches, &fine_grid, exec)?;
    let (tau_hat, _) = fine.argmax();
    Ok(DelayEstimate { tau_hat, profile, fine })
}

/// Unnormalized batch amplitudes and their unwrapped phases.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSequence {
    pub d_tilde: Vec<Complex64>,
    pub phases_unwrapped: Vec<f64>,
    pub reliable: Vec<bool>,
    /// Batch indices `m` (1-based) used as regression abscissa.
    pub batch_index: Vec<usize>,
}

impl AmplitudeSequence {
    pub fn reliable_count(&self) -> usize {
        self.reliable.iter().filter(|r| **r).count()
    }

    /// Sequence from given amplitudes, all considered reliable except exact
    /// zeros.
    pub fn from_amplitudes(d_tilde: Vec<Complex64>) -> Self {
        let reliable: Vec<bool> = d_tilde.iter().map(|d| d.norm() > 0.0).collect();
        let raw: Vec<f64> = d_tilde.iter().map(|d| d.arg()).collect();
        let phases_unwrapped = unwrap_phases(&raw, &reliable);
        let batch_index = (1..=d_tilde.len()).collect();
        Self { d_tilde, phases_unwrapped, reliable, batch_index }
    }
}

fn wrap(x: f64) -> f64 {
    // into (-pi, pi]
    let mut r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Unwraps `phases` so that successive reliable differences lie in
/// `(-pi, pi]`. Unreliable entries carry the running offset but do not
/// anchor the next difference.
pub fn unwrap_phases(phases: &[f64], reliable: &[bool]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut last: Option<(f64, f64)> = None; // (raw, unwrapped) of last reliable
    let mut offset = 0.0;
    for (p, ok) in phases.iter().zip(reliable) {
        match (last, *ok) {
            (Some((raw, un)), true) => {
                let u = un + wrap(p - raw);
                offset = u - p;
                last = Some((*p, u));
                out.push(u);
            }
            (None, true) => {
                last = Some((*p, *p));
                offset = 0.0;
                out.push(*p);
            }
            (_, false) => out.push(p + offset),
        }
    }
    out
}

/// `d~_m = x_m(tau)^H D Pi_perp y_m` for every batch.
pub fn amplitude_sequence(batches: &[PreparedBatch], tau_hat: f64) -> Result<AmplitudeSequence> {
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    check_span(&first.batch, tau_hat)?;
    let op = first.batch.delay_operator(tau_hat)?;
    let mut d_tilde = Vec::with_capacity(batches.len());
    let mut reliable = Vec::with_capacity(batches.len());
    let mut dx = Vec::new();
    for b in batches {
        dx.resize(b.batch.len(), Complex64::new(0.0, 0.0));
        ramp_weighted(&b.batch, &op, &mut dx);
        let d = dot_conj(&dx, b.cleaned());
        let floor = UNRELIABLE_RATIO * norm_sqr(b.batch.surveillance()).sqrt() * norm_sqr(&dx).sqrt();
        reliable.push(d.norm() >= floor && d.norm() > 0.0);
        d_tilde.push(d);
    }
    let raw: Vec<f64> = d_tilde.iter().map(|d| d.arg()).collect();
    let phases_unwrapped = unwrap_phases(&raw, &reliable);
    let batch_index = batches.iter().map(|b| b.batch.index()).collect();
    Ok(AmplitudeSequence { d_tilde, phases_unwrapped, reliable, batch_index })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerFit {
    pub omega_hat: f64,
    /// Phase advance per batch, `Q w dt`.
    pub slope: f64,
    pub intercept: f64,
    pub samples_used: usize,
    /// Set when `|w Q dt| > 1`, outside the first-order regime.
    pub approximation_warning: bool,
}

/// Ordinary least-squares line through the reliable unwrapped phases
/// against the batch index; `w = slope / (Q dt)`.
pub fn tretter_doppler(seq: &AmplitudeSequence, dt: f64, q: usize) -> Result<DopplerFit> {
    if !(dt > 0.0) || q == 0 {
        return invalid("dt and Q must be positive");
    }
    let pts: Vec<(f64, f64)> = seq
        .batch_index
        .iter()
        .zip(&seq.phases_unwrapped)
        .zip(&seq.reliable)
        .filter(|(_, ok)| **ok)
        .map(|((m, p), _)| (*m as f64, *p))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, available: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 2, available: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let omega_hat = slope / dt / q as f64;
    Ok(DopplerFit {
        omega_hat,
        slope,
        intercept,
        samples_used: pts.len(),
        approximation_warning: (omega_hat * dt * q as f64).abs() > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableSettings {
    /// Coarse delay step in units of `dt`.
    pub coarse_step: f64,
    /// Fine delay step in units of `dt`.
    pub fine_step: f64,
}

impl Default for SeparableSettings {
    fn default() -> Self {
        Self { coarse_step: 1.0, fine_step: 1.0 / 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableEstimate {
    pub delay: DelayEstimate,
    pub sequence: AmplitudeSequence,
    pub fit: DopplerFit,
}

impl SeparableEstimate {
    pub fn tau_hat(&self) -> f64 {
        self.delay.tau_hat
    }

    pub fn omega_hat(&self) -> f64 {
        self.fit.omega_hat
    }
}

/// Delay scan, amplitude sequence at the estimated delay, then the phase
/// regression.
pub fn estimate_separable(
    batches: &[PreparedBatch],
    settings: &SeparableSettings,
    exec: Execution,
) -> Result<SeparableEstimate> {
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    let dt = first.batch.dt();
    let delay = estimate_delay(batches, settings.coarse_step * dt, settings.fine_step * dt, exec)?;
    let sequence = amplitude_sequence(batches, delay.tau_hat)?;
    let fit = tretter_doppler(&sequence, dt, first.batch.len())?;
    Ok(SeparableEstimate { delay, sequence, fit })
}
