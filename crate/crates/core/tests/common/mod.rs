#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sepdd_core::batching::{make_batches, Batch};
use sepdd_core::projection::{prepare_batches, PreparedBatch};
use sepdd_core::scene::{generate_waveform, synthesize_node, ClutterTap, ComplexPair, SceneConfig};
use sepdd_core::Execution;

pub const DT: f64 = 4e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss(r: &mut impl Rng) -> Complex64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec(r: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| cgauss(r)).collect()
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Random scene with every amplitude drawn from `seed`.
pub fn random_scene(seed: u64, n: usize, order: usize, noise: f64) -> SceneConfig {
    let mut r = rng(seed ^ 0xabcd);
    let pair = |z: Complex64| ComplexPair { re: z.re, im: z.im };
    SceneConfig {
        n_samples: n,
        dt: DT,
        dpi_amp: pair(cgauss(&mut r) * 10.0),
        clutter_taps: (1..=order).map(|l| ClutterTap::new(l, cgauss(&mut r))).collect(),
        target_amp: pair(cgauss(&mut r) * 3.0),
        target_delay: r.random_range(1.0..order as f64) * DT,
        target_doppler: r.random_range(-3e4..3e4),
        noise_power: noise,
        seed,
    }
}

pub fn batches_for(cfg: &SceneConfig, m: usize) -> Vec<Batch> {
    let w = generate_waveform(cfg.n_samples + cfg.clutter_order(), cfg.seed.wrapping_add(1)).unwrap();
    let node = synthesize_node(cfg, &w).unwrap();
    make_batches(&node, m, cfg.clutter_order()).unwrap()
}

pub fn prepared_for(cfg: &SceneConfig, m: usize) -> Vec<PreparedBatch> {
    prepare_batches(batches_for(cfg, m), Execution::Sequential).unwrap()
}

/// Interference matrix `[x_m, X_m]` of a batch as a dense matrix.
pub fn interference_matrix(b: &Batch) -> DMatrix<Complex64> {
    let cols = b.interference_columns();
    DMatrix::from_fn(b.len(), cols.len(), |i, j| cols[j][i])
}

/// `I - X (X^H X)^-1 X^H`.
pub fn dense_projector(x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let xh = x.adjoint();
    let gram_inv = (&xh * x).try_inverse().expect("full column rank");
    DMatrix::identity(x.nrows(), x.nrows()) - x * gram_inv * xh
}

pub fn dvec(v: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(v)
}

/// `|a^H P y|^2 / (a^H P a)` with a dense projector.
pub fn dense_criterion(p: &DMatrix<Complex64>, a: &[Complex64], y: &[Complex64]) -> f64 {
    let (a, y) = (dvec(a), dvec(y));
    let num = (a.adjoint() * p * &y)[(0, 0)].norm_sqr();
    let den = (a.adjoint() * p * &a)[(0, 0)].re;
    num / den
}

/// Band-limited periodic signal: random spectrum on `|k| <= kmax`.
pub struct Periodic {
    pub n: usize,
    pub coeffs: Vec<(i64, Complex64)>,
}

impl Periodic {
    pub fn random(seed: u64, n: usize, band: f64) -> Self {
        let mut r = rng(seed);
        let kmax = (band * n as f64).floor() as i64;
        Self { n, coeffs: (-kmax..=kmax).map(|k| (k, cgauss(&mut r))).collect() }
    }

    /// Samples of the signal delayed by `shift` samples (circular, exact).
    pub fn delayed(&self, shift: f64) -> Vec<Complex64> {
        let n = self.n as f64;
        (0..self.n)
            .map(|i| {
                self.coeffs
                    .iter()
                    .map(|(k, c)| c * Complex64::from_polar(1.0, 2.0 * PI * *k as f64 * (i as f64 - shift) / n))
                    .sum()
            })
            .collect()
    }
}
