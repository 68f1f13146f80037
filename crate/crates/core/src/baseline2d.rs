//! Full 2-D delay-Doppler estimator with incoherent batch combining.
//!
//! Each batch contributes the interference-cleaned, normalized ambiguity
//!
//! ```text
//! P_m(tau, w) = |a^H Pi_perp y_m|^2 / (a^H Pi_perp a),   a = x_m(tau) .* v(w)
//! ```
//!
//! with the Doppler vector `v(w)_q = exp(j w q dt)` referenced to the batch
//! start. The node statistic is the plain sum over batches. Because the
//! Doppler ramp does not commute with the projector, every `(tau, w)` point
//! costs one projection per batch.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::batching::Batch;
use crate::error::{invalid, Result};
use crate::par::Execution;
use crate::projection::{dot_conj, norm_sqr, PreparedBatch, ProjectionBasis};
use crate::scene::FractionalDelay;
use crate::simplex::{self, SimplexSettings};
use crate::wire;

/// Relative denominator floor below which a criterion point is degenerate.
pub const DEGENERATE_RATIO: f64 = 1e-12;

/// Criterion value at one point. Degenerate points evaluate to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Writes `v(w)` of length `out.len()` into `out`.
pub(crate) fn doppler_ramp_into(omega: f64, dt: f64, out: &mut [Complex64]) {
    const ANCHOR: usize = 128;
    let step = Complex64::from_polar(1.0, omega * dt);
    for (c, chunk) in out.chunks_mut(ANCHOR).enumerate() {
        let mut z = Complex64::from_polar(1.0, omega * dt * (c * ANCHOR) as f64);
        for o in chunk.iter_mut() {
            *o = z;
            z *= step;
        }
    }
}

/// Doppler vector `[1, e^{j w dt}, ..., e^{j w (Q-1) dt}]`.
pub fn doppler_vector(q: usize, omega: f64, dt: f64) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); q];
    doppler_ramp_into(omega, dt, &mut v);
    v
}

/// Steering vector `x_m(tau) .* v(w)`.
pub fn steering_vector(batch: &Batch, tau: f64, omega: f64) -> Result<Vec<Complex64>> {
    let mut a = batch.delayed_reference(tau)?;
    let v = doppler_vector(batch.len(), omega, batch.dt());
    a.iter_mut().zip(&v).for_each(|(x, r)| *x *= r);
    Ok(a)
}

// |<Pi a, c>|^2 / ||Pi a||^2 with `a` overwritten by its projection
fn normalized_fit(basis: &ProjectionBasis, a: &mut [Complex64], cleaned: &[Complex64]) -> PointValue {
    let scale = norm_sqr(a);
    basis.project_out_in_place(a);
    let den = norm_sqr(a);
    if !(den > DEGENERATE_RATIO * scale) {
        return PointValue { value: 0.0, degenerate: true };
    }
    let num = dot_conj(a, cleaned).norm_sqr();
    PointValue { value: num / den, degenerate: false }
}

/// `P_m(tau, w)` for one batch.
pub fn ambiguity_point(batch: &Batch, basis: &ProjectionBasis, tau: f64, omega: f64) -> Result<PointValue> {
    if basis.len() != batch.len() {
        return invalid("basis length does not match the batch");
    }
    let cleaned = basis.project_out(batch.surveillance())?;
    let mut a = steering_vector(batch, tau, omega)?;
    Ok(normalized_fit(basis, &mut a, &cleaned))
}

impl PreparedBatch {
    /// `P_m(tau, w)` using the cached `Pi_perp y_m`.
    pub fn ambiguity(&self, tau: f64, omega: f64) -> Result<PointValue> {
        let op = self.batch.delay_operator(tau)?;
        let mut a = vec![Complex64::new(0.0, 0.0); self.batch.len()];
        let mut ramp = a.clone();
        Ok(self.ambiguity_with(&op, omega, &mut a, &mut ramp))
    }

    fn ambiguity_with(
        &self,
        op: &FractionalDelay,
        omega: f64,
        a: &mut [Complex64],
        ramp: &mut [Complex64],
    ) -> PointValue {
        self.batch.delayed_reference_into(op, a);
        doppler_ramp_into(omega, self.batch.dt(), ramp);
        a.iter_mut().zip(ramp.iter()).for_each(|(x, r)| *x *= r);
        normalized_fit(&self.basis, a, self.cleaned())
    }
}

/// Sum of `P_m(tau, w)` over batches and the number of degenerate terms.
pub fn aggregate_point(batches: &[PreparedBatch], tau: f64, omega: f64) -> Result<(f64, usize)> {
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    let op = first.batch.delay_operator(tau)?;
    let q = first.batch.len();
    let mut a = vec![Complex64::new(0.0, 0.0); q];
    let mut ramp = a.clone();
    let mut total = 0.0;
    let mut degenerate = 0;
    for b in batches {
        if b.batch.len() != q {
            a.resize(b.batch.len(), Complex64::new(0.0, 0.0));
            ramp.resize(b.batch.len(), Complex64::new(0.0, 0.0));
        }
        let p = b.ambiguity_with(&op, omega, &mut a, &mut ramp);
        total += p.value;
        degenerate += p.degenerate as usize;
    }
    Ok((total, degenerate))
}

/// Aggregated criterion sampled on a `tau x w` grid, stored tau-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub tau_grid: Vec<f64>,
    pub omega_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub degenerate_points: usize,
}

impl AmbiguitySurface {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.omega_grid.len() + j]
    }

    /// `(tau, w, value)` of the largest grid value.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let (k, v) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let nw = self.omega_grid.len();
        (self.tau_grid[k / nw], self.omega_grid[k % nw], v)
    }

    /// Bilinear interpolation; zero outside the grid.
    pub fn sample(&self, tau: f64, omega: f64) -> f64 {
        let (Some((i, fi)), Some((j, fj))) = (locate(&self.tau_grid, tau), locate(&self.omega_grid, omega)) else {
            return 0.0;
        };
        let nt = self.tau_grid.len();
        let nw = self.omega_grid.len();
        let i1 = (i + 1).min(nt - 1);
        let j1 = (j + 1).min(nw - 1);
        let v00 = self.value(i, j);
        let v01 = self.value(i, j1);
        let v10 = self.value(i1, j);
        let v11 = self.value(i1, j1);
        (1.0 - fi) * ((1.0 - fj) * v00 + fj * v01) + fi * ((1.0 - fj) * v10 + fj * v11)
    }

    /// CSV with header `tau_s,omega_rad_s,value`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<usize> {
        let mut bytes = 0;
        let header = "tau_s,omega_rad_s,value\n";
        w.write_all(header.as_bytes())?;
        bytes += header.len();
        for (i, tau) in self.tau_grid.iter().enumerate() {
            for (j, omega) in self.omega_grid.iter().enumerate() {
                let line = format!(
                    "{},{},{}\n",
                    wire::field(*tau),
                    wire::field(*omega),
                    wire::field(self.value(i, j))
                );
                w.write_all(line.as_bytes())?;
                bytes += line.len();
            }
        }
        Ok(bytes)
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("write to memory");
        String::from_utf8(out).expect("ascii csv")
    }

    pub fn csv_bytes(&self) -> usize {
        wire::surface_csv_bytes(self.tau_grid.len(), self.omega_grid.len())
    }
}

/// Index of the grid cell containing `x` and the fractional position in it.
pub(crate) fn locate(grid: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = grid.len();
    if n == 0 || !(x >= grid[0] && x <= grid[n - 1]) {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = grid.partition_point(|g| *g <= x).saturating_sub(1).min(n - 2);
    let w = grid[i + 1] - grid[i];
    let f = if w > 0.0 { ((x - grid[i]) / w).clamp(0.0, 1.0) } else { 0.0 };
    Some((i, f))
}

/// Sums `P_m` over batches on every grid point. Rows (delays) run in
/// parallel; each batch's delayed reference is computed once per row.
pub fn aggregate_surface(
    batches: &[PreparedBatch],
    tau_grid: &[f64],
    omega_grid: &[f64],
    exec: Execution,
) -> Result<AmbiguitySurface> {
    if tau_grid.is_empty() || omega_grid.is_empty() {
        return invalid("delay and Doppler grids must be non-empty");
    }
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    let ops = tau_grid.iter().map(|t| first.batch.delay_operator(*t)).collect::<Result<Vec<_>>>()?;
    let rows = exec.map(&ops, |op| {
        let mut row = vec![0.0; omega_grid.len()];
        let mut degenerate = 0;
        for b in batches {
            let q = b.batch.len();
            let mut delayed = vec![Complex64::new(0.0, 0.0); q];
            b.batch.delayed_reference_into(op, &mut delayed);
            let mut a = vec![Complex64::new(0.0, 0.0); q];
            let mut ramp = a.clone();
            for (slot, omega) in row.iter_mut().zip(omega_grid) {
                doppler_ramp_into(*omega, b.batch.dt(), &mut ramp);
                for ((ai, x), r) in a.iter_mut().zip(&delayed).zip(&ramp) {
                    *ai = x * r;
                }
                let p = normalized_fit(&b.basis, &mut a, b.cleaned());
                *slot += p.value;
                degenerate += p.degenerate as usize;
            }
        }
        (row, degenerate)
    });
    let degenerate_points = rows.iter().map(|r| r.1).sum();
    let values = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(AmbiguitySurface { tau_grid: tau_grid.to_vec(), omega_grid: omega_grid.to_vec(), values, degenerate_points })
}

/// Rectangular search region in `(tau, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub tau: (f64, f64),
    pub omega: (f64, f64),
}

impl SearchBox {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.tau) || !ok(self.omega) {
            return invalid("search box bounds must be finite and ordered");
        }
        Ok(())
    }

    pub fn contains(&self, tau: f64, omega: f64) -> bool {
        (self.tau.0..=self.tau.1).contains(&tau) && (self.omega.0..=self.omega.1).contains(&omega)
    }
}

/// Evenly spaced points from `lo` to `hi` with spacing at most `step`,
/// always including both ends.
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo || !(step > 0.0) {
        return vec![lo];
    }
    let n = ((hi - lo) / step - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline2dSettings {
    /// Delay grid step in units of `dt`.
    pub tau_step: f64,
    /// Doppler grid oversampling relative to `2 pi / (Q dt)`.
    pub doppler_oversampling: f64,
    pub simplex: SimplexSettings,
    /// Convergence tolerance as a fraction of `dt` and of `2 pi / (N dt)`.
    pub relative_tolerance: f64,
}

impl Default for Baseline2dSettings {
    fn default() -> Self {
        Self { tau_step: 0.5, doppler_oversampling: 8.0, simplex: SimplexSettings::default(), relative_tolerance: 1e-3 }
    }
}

impl Baseline2dSettings {
    pub fn grids(&self, search: &SearchBox, q: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let tau = grid(search.tau.0, search.tau.1, self.tau_step * dt);
        let omega = grid(search.omega.0, search.omega.1, 2.0 * PI / (q as f64 * dt * self.doppler_oversampling));
        (tau, omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate2D {
    pub tau_hat: f64,
    pub omega_hat: f64,
    pub peak_value: f64,
    pub refine_iterations: usize,
    pub converged: bool,
}

/// Maximizes the aggregated criterion inside `search`.
///
/// With `init` the simplex starts there; otherwise it starts from the grid
/// argmax. Converged when the simplex spans less than
/// `(dt, 2 pi / (N dt))` times the relative tolerance.
pub fn estimate_2d(
    batches: &[PreparedBatch],
    search: &SearchBox,
    init: Option<(f64, f64)>,
    settings: &Baseline2dSettings,
    exec: Execution,
) -> Result<Estimate2D> {
    search.validate()?;
    let Some(first) = batches.first() else {
        return invalid("no batches");
    };
    let dt = first.batch.dt();
    let q = first.batch.len();
    let max_tau = first.batch.max_delay();
    if search.tau.0 < 0.0 || search.tau.1 > max_tau {
        return invalid(format!("delay search range must lie within [0, {max_tau}] s"));
    }
    let n_total: usize = batches.iter().map(|b| b.batch.len()).sum();
    let start = match init {
        Some(p) => p,
        None => {
            let (tg, wg) = settings.grids(search, q, dt);
            let s = aggregate_surface(batches, &tg, &wg, exec)?;
            let (t, w, _) = s.argmax();
            (t, w)
        }
    };
    let scale = [dt, 2.0 * PI / (10.0 * q as f64 * dt)];
    let tol = [dt * settings.relative_tolerance, 2.0 * PI / (n_total as f64 * dt) * settings.relative_tolerance];
    let bounds = [search.tau, search.omega];
    let objective = |x: &[f64]| aggregate_point(batches, x[0], x[1]).map(|(v, _)| v).unwrap_or(f64::NAN);
    let r = simplex::maximize(objective, &[start.0, start.1], &scale, &tol, Some(&bounds), &settings.simplex);
    if !r.converged {
        log::debug!("simplex stopped after {} iterations without converging", r.iterations);
    }
    Ok(Estimate2D {
        tau_hat: r.x[0],
        omega_hat: r.x[1],
        peak_value: r.value,
        refine_iterations: r.iterations,
        converged: r.converged,
    })
}
