//! Reference and surveillance channel synthesis.
//!
//! The illuminator waveform is white circular complex Gaussian noise. The
//! surveillance channel is built from the reference stream as direct-path
//! interference, an FIR clutter term over integer lags `1..=L`, a delayed and
//! Doppler-shifted target echo and receiver noise:
//!
//! ```text
//! y[n] = b x[n] + sum_l c_l x[n - l] + d x(t_n - tau0) exp(j w0 t_n) + e[n]
//! ```
//!
//! Fractional delays use the same [`FractionalDelay`] operator that the
//! estimators use to build steering vectors.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Half-width of the windowed-sinc interpolation kernel, in samples.
pub const KERNEL_HALF_WIDTH: usize = 32;
/// Kaiser window shape parameter of the interpolation kernel.
pub const KAISER_BETA: f64 = 12.0;

/// Delays closer than this (in samples) to an integer are treated as exact
/// integer shifts.
const INTEGER_SNAP: f64 = 1e-9;

pub(crate) const STREAM_WAVEFORM: u64 = 1;
pub(crate) const STREAM_NOISE: u64 = 2;

pub(crate) fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one circularly-symmetric complex Gaussian sample with the given
/// total (complex) variance.
pub(crate) fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Uniformly sampled complex baseband signal. Sample `n` sits at `t0 + n * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    samples: Vec<Complex64>,
    dt: f64,
    t0: f64,
}

impl ComplexSeries {
    pub fn new(samples: Vec<Complex64>, dt: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return invalid("series must hold at least one sample");
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("sample interval must be positive, got {dt}"));
        }
        if !t0.is_finite() {
            return invalid("series start time must be finite");
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// White complex Gaussian illuminator waveform with unit power per sample.
pub fn generate_waveform(n_samples: usize, seed: u64) -> Result<ComplexSeries> {
    if n_samples == 0 {
        return invalid("waveform length must be at least 1");
    }
    let mut rng = seeded_stream(seed, STREAM_WAVEFORM);
    let samples = (0..n_samples).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    ComplexSeries::new(samples, 1.0, 0.0)
}

fn bessel_i0(x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
        k += 1.0;
    }
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let a = PI * t;
        a.sin() / a
    }
}

/// Band-limited delay by a real number of samples.
///
/// Integer delays are exact sample shifts. Fractional delays use a 64-tap
/// Kaiser-windowed sinc kernel. Outputs whose delayed time falls outside the
/// input record are zero; outputs whose kernel support is only partially
/// inside the record use the available taps, rescaled to the full kernel gain.
#[derive(Debug, Clone)]
pub struct FractionalDelay {
    /// Integer part `K` of the delay `K + frac`, `frac` in `[0, 1)`.
    shift: i64,
    frac: f64,
    taps: Option<Vec<f64>>,
    gain: f64,
}

impl FractionalDelay {
    pub fn new(delay_samples: f64) -> Self {
        let nearest = delay_samples.round();
        if (delay_samples - nearest).abs() < INTEGER_SNAP {
            return Self { shift: nearest as i64, frac: 0.0, taps: None, gain: 1.0 };
        }
        let shift = delay_samples.floor();
        let frac = delay_samples - shift;
        let hw = KERNEL_HALF_WIDTH as f64;
        let norm = bessel_i0(KAISER_BETA);
        // tap i reads input index n - shift - HW + i, at offset HW - frac - i
        let taps: Vec<f64> = (0..2 * KERNEL_HALF_WIDTH)
            .map(|i| {
                let t = hw - frac - i as f64;
                let u = t / hw;
                let w = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / norm;
                sinc(t) * w
            })
            .collect();
        let gain = taps.iter().sum();
        Self { shift: shift as i64, frac, taps: Some(taps), gain }
    }

    pub fn is_integer(&self) -> bool {
        self.taps.is_none()
    }

    /// Delay in samples represented by this operator.
    pub fn delay_samples(&self) -> f64 {
        self.shift as f64 + self.frac
    }

    /// Writes delayed outputs with indices `start..start + out.len()`.
    /// Output index `n` corresponds to input index `n` on the same grid.
    pub fn apply_into(&self, input: &[Complex64], start: usize, out: &mut [Complex64]) {
        let len = input.len() as i64;
        match &self.taps {
            None => {
                for (k, o) in out.iter_mut().enumerate() {
                    let src = (start + k) as i64 - self.shift;
                    *o = if (0..len).contains(&src) {
                        input[src as usize]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
            }
            Some(taps) => {
                let ntaps = taps.len() as i64;
                let hw = KERNEL_HALF_WIDTH as i64;
                for (k, o) in out.iter_mut().enumerate() {
                    let n = (start + k) as i64;
                    let first = n - self.shift - hw;
                    if first >= 0 && first + ntaps <= len {
                        let window = &input[first as usize..(first + ntaps) as usize];
                        let mut re = 0.0;
                        let mut im = 0.0;
                        for (w, z) in taps.iter().zip(window) {
                            re += w * z.re;
                            im += w * z.im;
                        }
                        *o = Complex64::new(re, im);
                    } else {
                        *o = self.edge_sample(input, n);
                    }
                }
            }
        }
    }

    fn edge_sample(&self, input: &[Complex64], n: i64) -> Complex64 {
        let taps = self.taps.as_ref().expect("fractional kernel");
        let len = input.len() as i64;
        // delayed time n - shift - frac must lie inside the record
        let pos = n as f64 - self.shift as f64 - self.frac;
        if pos < 0.0 || pos > (len - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let first = n - self.shift - KERNEL_HALF_WIDTH as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut avail = 0.0;
        for (i, w) in taps.iter().enumerate() {
            let j = first + i as i64;
            if (0..len).contains(&j) {
                acc += input[j as usize] * *w;
                avail += w;
            }
        }
        acc * (self.gain / avail)
    }

    pub fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); input.len()];
        self.apply_into(input, 0, &mut out);
        out
    }
}

/// Returns `x(t - tau)` on the grid of `x`.
pub fn fractional_delay(x: &ComplexSeries, tau: f64) -> Result<ComplexSeries> {
    let span = x.len() as f64 * x.dt();
    if !(tau.abs() < span) {
        return invalid(format!("delay {tau} s exceeds the record span {span} s"));
    }
    let op = FractionalDelay::new(tau / x.dt());
    ComplexSeries::new(op.apply(x.samples()), x.dt(), x.t0())
}

/// Complex number as a `{re, im}` JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexPair> for Complex64 {
    fn from(p: ComplexPair) -> Self {
        Complex64::new(p.re, p.im)
    }
}

impl From<Complex64> for ComplexPair {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterTap {
    pub lag: usize,
    pub re: f64,
    pub im: f64,
}

impl ClutterTap {
    pub fn new(lag: usize, coeff: Complex64) -> Self {
        Self { lag, re: coeff.re, im: coeff.im }
    }

    pub fn coeff(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Generative description of one receiver node's scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_samples: usize,
    pub dt: f64,
    pub dpi_amp: ComplexPair,
    #[serde(default)]
    pub clutter_taps: Vec<ClutterTap>,
    pub target_amp: ComplexPair,
    pub target_delay: f64,
    pub target_doppler: f64,
    pub noise_power: f64,
    pub seed: u64,
}

impl SceneConfig {
    /// Largest clutter lag `L`, zero when there is no clutter.
    pub fn clutter_order(&self) -> usize {
        self.clutter_taps.iter().map(|t| t.lag).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return invalid("n_samples must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid("dt must be positive and finite");
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return invalid("noise_power must be non-negative and finite");
        }
        if !self.target_delay.is_finite() || !self.target_doppler.is_finite() {
            return invalid("target delay and Doppler must be finite");
        }
        if let Some(t) = self.clutter_taps.iter().find(|t| t.lag == 0) {
            return invalid(format!("clutter lag must be >= 1, got {}", t.lag));
        }
        let amps = [self.dpi_amp, self.target_amp];
        let taps = self.clutter_taps.iter().map(|t| ComplexPair { re: t.re, im: t.im });
        if amps.into_iter().chain(taps).any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return invalid("amplitudes must be finite");
        }
        Ok(())
    }

    /// True when the target delay lies in `(0, L dt]`.
    pub fn target_in_clutter_span(&self) -> bool {
        let l = self.clutter_order() as f64;
        self.target_delay > 0.0 && self.target_delay <= l * self.dt * (1.0 + 1e-12)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reference and surveillance channels of one node. The reference carries
/// `pre_roll` samples before the surveillance record starts.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSignals {
    pub reference: ComplexSeries,
    pub surveillance: ComplexSeries,
    pub pre_roll: usize,
}

impl NodeSignals {
    pub fn new(reference: ComplexSeries, surveillance: ComplexSeries) -> Result<Self> {
        let dt = surveillance.dt();
        if (reference.dt() - dt).abs() > 1e-12 * dt {
            return invalid("reference and surveillance sample intervals differ");
        }
        let pre = -reference.t0() / dt;
        let pre_roll = pre.round();
        if pre_roll < 0.0 || (pre - pre_roll).abs() > 1e-6 {
            return invalid("reference must start an integer number of samples before t = 0");
        }
        let pre_roll = pre_roll as usize;
        if surveillance.t0().abs() > 1e-6 * dt {
            return invalid("surveillance must start at t = 0");
        }
        if reference.len() < pre_roll + surveillance.len() {
            return invalid("reference does not cover the surveillance record");
        }
        Ok(Self { reference, surveillance, pre_roll })
    }
}

/// Builds both channels from `waveform`. The first `L` waveform samples are
/// the reference pre-roll.
pub fn synthesize_node(cfg: &SceneConfig, waveform: &ComplexSeries) -> Result<NodeSignals> {
    cfg.validate()?;
    let n = cfg.n_samples;
    let l = cfg.clutter_order();
    if waveform.len() < n + l {
        return invalid(format!(
            "waveform has {} samples, scene needs N + L = {}",
            waveform.len(),
            n + l
        ));
    }
    let x: Vec<Complex64> = waveform.samples()[..n + l].to_vec();
    let dpi: Complex64 = cfg.dpi_amp.into();
    let d: Complex64 = cfg.target_amp.into();

    let mut y: Vec<Complex64> = x[l..].iter().map(|s| dpi * s).collect();
    for tap in &cfg.clutter_taps {
        let c = tap.coeff();
        for (k, yk) in y.iter_mut().enumerate() {
            *yk += c * x[l + k - tap.lag];
        }
    }
    if d != Complex64::new(0.0, 0.0) {
        let op = FractionalDelay::new(cfg.target_delay / cfg.dt);
        let mut echo = vec![Complex64::new(0.0, 0.0); n];
        op.apply_into(&x, l, &mut echo);
        let step = cfg.target_doppler * cfg.dt;
        for (k, (yk, e)) in y.iter_mut().zip(&echo).enumerate() {
            *yk += d * e * Complex64::from_polar(1.0, step * k as f64);
        }
    }
    if cfg.noise_power > 0.0 {
        let mut rng = seeded_stream(cfg.seed, STREAM_NOISE);
        for yk in y.iter_mut() {
            *yk += complex_gaussian(&mut rng, cfg.noise_power);
        }
    }
    let reference = ComplexSeries::new(x, cfg.dt, -(l as f64) * cfg.dt)?;
    let surveillance = ComplexSeries::new(y, cfg.dt, 0.0)?;
    Ok(NodeSignals { reference, surveillance, pre_roll: l })
}
