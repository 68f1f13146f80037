//! Non-overlapping batches with their Toeplitz clutter matrices.
//!
//! Batch `m` (1-based) covers surveillance samples `(m-1)Q .. mQ-1`. Its
//! clutter matrix column `l` holds reference samples `x[(m-1)Q + q - l]`, so
//! the matrix is never stored: it is a window into the shared reference
//! stream.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::scene::{FractionalDelay, NodeSignals, KERNEL_HALF_WIDTH};

#[derive(Debug, Clone)]
pub struct Batch {
    index: usize,
    q_offset: usize,
    len: usize,
    order: usize,
    dt: f64,
    surveillance: Vec<Complex64>,
    // whole reference stream, starting `pre_roll` samples before t = 0
    reference: Arc<[Complex64]>,
    pre_roll: usize,
}

impl Batch {
    /// 1-based batch index `m`.
    pub fn index(&self) -> usize {
        self.index
    }

    /// Offset `(m-1)Q` of the first sample in the surveillance record.
    pub fn q_offset(&self) -> usize {
        self.q_offset
    }

    /// Batch length `Q`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of clutter lags `L`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn pre_roll(&self) -> usize {
        self.pre_roll
    }

    /// Surveillance vector `y_m`.
    pub fn surveillance(&self) -> &[Complex64] {
        &self.surveillance
    }

    /// Reference vector `x_m`.
    pub fn reference(&self) -> &[Complex64] {
        self.clutter_column(0)
    }

    /// Column `lag` of the clutter matrix (`lag = 0` gives `x_m`).
    pub fn clutter_column(&self, lag: usize) -> &[Complex64] {
        assert!(lag <= self.pre_roll, "lag {lag} exceeds pre-roll {}", self.pre_roll);
        let start = self.pre_roll + self.q_offset - lag;
        &self.reference[start..start + self.len]
    }

    /// Columns of `[x_m, X_m]`: the DPI column followed by lags `1..=L`.
    pub fn interference_columns(&self) -> Vec<&[Complex64]> {
        (0..=self.order).map(|l| self.clutter_column(l)).collect()
    }

    /// Dense `Q x L` clutter matrix, column-major.
    pub fn clutter_matrix(&self) -> Vec<Vec<Complex64>> {
        (1..=self.order).map(|l| self.clutter_column(l).to_vec()).collect()
    }

    /// Index range `[lo, hi]` of the surveillance-time samples covered by the
    /// clutter matrix.
    pub fn clutter_sample_range(&self) -> (i64, i64) {
        let off = self.q_offset as i64;
        (off - self.order as i64, off + self.len as i64 - 2)
    }

    /// Whole reference stream shared by all batches of a node.
    pub fn reference_stream(&self) -> &[Complex64] {
        &self.reference
    }

    /// Largest delay accepted by [`Batch::delayed_reference`].
    pub fn max_delay(&self) -> f64 {
        (self.pre_roll + KERNEL_HALF_WIDTH) as f64 * self.dt
    }

    fn check_delay(&self, tau: f64) -> Result<()> {
        if !(tau >= 0.0 && tau <= self.max_delay() * (1.0 + 1e-12)) {
            return invalid(format!(
                "delay {tau} s outside the reference support [0, {}] s",
                self.max_delay()
            ));
        }
        Ok(())
    }

    /// `x_m(tau)`: the reference stream delayed by `tau`, windowed to this
    /// batch.
    pub fn delayed_reference(&self, tau: f64) -> Result<Vec<Complex64>> {
        self.check_delay(tau)?;
        let op = FractionalDelay::new(tau / self.dt);
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        self.delayed_reference_into(&op, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`Batch::delayed_reference`] for hot loops.
    pub(crate) fn delayed_reference_into(&self, op: &FractionalDelay, out: &mut [Complex64]) {
        op.apply_into(&self.reference, self.pre_roll + self.q_offset, out);
    }

    pub(crate) fn delay_operator(&self, tau: f64) -> Result<FractionalDelay> {
        self.check_delay(tau)?;
        Ok(FractionalDelay::new(tau / self.dt))
    }

    /// Same batch with the surveillance vector scaled by `k`.
    pub fn scaled(&self, k: Complex64) -> Batch {
        let mut b = self.clone();
        b.surveillance.iter_mut().for_each(|y| *y *= k);
        b
    }
}

/// Splits a node's record into `batches` batches of `Q = floor(N / M)`
/// samples with clutter order `order`. The trailing `N mod M` samples are
/// dropped.
pub fn make_batches(node: &NodeSignals, batches: usize, order: usize) -> Result<Vec<Batch>> {
    if batches == 0 {
        return invalid("number of batches must be at least 1");
    }
    let n = node.surveillance.len();
    let q = n / batches;
    if q < 2 || order + 1 >= q {
        return invalid(format!("clutter order L = {order} requires L < Q - 1 with Q = {q}"));
    }
    if node.pre_roll < order {
        return invalid(format!(
            "reference pre-roll of {} samples is shorter than L = {order}",
            node.pre_roll
        ));
    }
    let dropped = n - q * batches;
    if dropped > 0 {
        log::info!("dropping {dropped} trailing samples (N = {n}, M = {batches}, Q = {q})");
    }
    let reference: Arc<[Complex64]> = Arc::from(node.reference.samples());
    let y = node.surveillance.samples();
    Ok((0..batches)
        .map(|m| Batch {
            index: m + 1,
            q_offset: m * q,
            len: q,
            order,
            dt: node.surveillance.dt(),
            surveillance: y[m * q..(m + 1) * q].to_vec(),
            reference: Arc::clone(&reference),
            pre_roll: node.pre_roll,
        })
        .collect())
}
