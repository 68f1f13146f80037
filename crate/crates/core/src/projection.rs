//! Interference subspace of a batch and its orthogonal-complement projector.
//!
//! The basis is an orthonormal factor `U` of `span{x_m, X_m}` from a
//! column-pivoted Householder QR. The `Q x Q` projector is never formed;
//! `project_out` applies `v - U (U^H v)` in `O(Q (L + 1))`.

use num_complex::Complex64;

use crate::batching::Batch;
use crate::error::{invalid, Result};
use crate::par::Execution;

#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    batch_index: usize,
    len: usize,
    requested: usize,
    columns: Vec<Vec<Complex64>>,
    pivots: Vec<usize>,
}

#[inline]
pub(crate) fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // sum conj(a_i) b_i
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

#[inline]
fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    // y -= alpha x
    for (xi, yi) in x.iter().zip(y.iter_mut()) {
        yi.re -= alpha.re * xi.re - alpha.im * xi.im;
        yi.im -= alpha.re * xi.im + alpha.im * xi.re;
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.re * z.re + z.im * z.im).sum()
}

impl ProjectionBasis {
    /// Orthonormal basis for the span of `columns` (all of equal length).
    ///
    /// Numerical rank is the number of pivots whose residual norm exceeds
    /// `len * eps * |R_00|`; a rank below the column count is logged and
    /// reported by [`ProjectionBasis::is_rank_deficient`].
    pub fn from_columns(batch_index: usize, columns: &[&[Complex64]]) -> Result<Self> {
        let n = columns.len();
        let len = columns.first().map_or(0, |c| c.len());
        if n == 0 || len == 0 {
            return invalid("interference basis needs at least one non-empty column");
        }
        if columns.iter().any(|c| c.len() != len) {
            return invalid("interference columns differ in length");
        }
        if n > len {
            return invalid(format!("{n} columns exceed the column length {len}"));
        }
        let mut work: Vec<Vec<Complex64>> = columns.iter().map(|c| c.to_vec()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut reflectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let threshold_scale = len as f64 * f64::EPSILON;
        let mut top = 0.0;

        for k in 0..n {
            let (p, best) = (k..n)
                .map(|j| (j, norm_sqr(&work[j][k..])))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            work.swap(k, p);
            order.swap(k, p);
            let norm = best.sqrt();
            if k == 0 {
                top = norm;
            }
            if norm <= threshold_scale * top || norm == 0.0 {
                break;
            }
            let x = &work[k][k..];
            let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { Complex64::new(1.0, 0.0) };
            let alpha = -phase * norm;
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vn = norm_sqr(&v).sqrt();
            v.iter_mut().for_each(|z| *z /= vn);
            for col in work.iter_mut().skip(k + 1) {
                let c = dot_conj(&v, &col[k..]) * 2.0;
                axpy(c, &v, &mut col[k..]);
            }
            work[k][k] = alpha;
            reflectors.push(v);
        }

        let rank = reflectors.len();
        if rank < n {
            log::warn!("batch {batch_index}: interference basis rank {rank} < {n} columns");
        }
        // thin Q: U e_j = H_0 H_1 ... H_{r-1} e_j
        let columns = (0..rank)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); len];
                e[j] = Complex64::new(1.0, 0.0);
                for (k, v) in reflectors.iter().enumerate().rev() {
                    let c = dot_conj(v, &e[k..]) * 2.0;
                    axpy(c, v, &mut e[k..]);
                }
                e
            })
            .collect();
        Ok(Self { batch_index, len, requested: n, columns, pivots: order[..rank].to_vec() })
    }

    pub fn batch_index(&self) -> usize {
        self.batch_index
    }

    /// Vector length `Q` the basis acts on.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.requested
    }

    /// Input columns selected by pivoting, in factorization order.
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn columns(&self) -> &[Vec<Complex64>] {
        &self.columns
    }

    /// `v - U (U^H v)`.
    pub fn project_out(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.len {
            return invalid(format!("vector length {} does not match Q = {}", v.len(), self.len));
        }
        let mut out = v.to_vec();
        self.project_out_in_place(&mut out);
        Ok(out)
    }

    /// In-place [`ProjectionBasis::project_out`]; `v.len()` must equal `Q`.
    pub fn project_out_in_place(&self, v: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.len);
        let coeffs: Vec<Complex64> = self.columns.iter().map(|u| dot_conj(u, v)).collect();
        for (u, c) in self.columns.iter().zip(coeffs) {
            axpy(c, u, v);
        }
    }

    /// Projection `U (U^H v)` onto the interference span.
    pub fn project_onto(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let residual = self.project_out(v)?;
        Ok(v.iter().zip(residual).map(|(a, r)| a - r).collect())
    }
}

/// Basis of `[x_m, X_m]` for one batch.
pub fn build_basis(batch: &Batch) -> Result<ProjectionBasis> {
    ProjectionBasis::from_columns(batch.index(), &batch.interference_columns())
}

/// A batch with its interference basis and cleaned surveillance vector
/// `Pi_perp y_m`, ready for repeated criterion evaluation.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub batch: Batch,
    pub basis: ProjectionBasis,
    cleaned: Vec<Complex64>,
    cleaned_energy: f64,
}

impl PreparedBatch {
    pub fn new(batch: Batch, basis: ProjectionBasis) -> Result<Self> {
        if basis.len() != batch.len() {
            return invalid("basis length does not match the batch");
        }
        let cleaned = basis.project_out(batch.surveillance())?;
        let cleaned_energy = norm_sqr(&cleaned);
        Ok(Self { batch, basis, cleaned, cleaned_energy })
    }

    pub fn prepare(batch: Batch) -> Result<Self> {
        let basis = build_basis(&batch)?;
        Self::new(batch, basis)
    }

    /// `Pi_perp y_m`.
    pub fn cleaned(&self) -> &[Complex64] {
        &self.cleaned
    }

    /// `||Pi_perp y_m||^2`.
    pub fn cleaned_energy(&self) -> f64 {
        self.cleaned_energy
    }
}

/// Builds the basis of every batch; batches are independent.
pub fn prepare_batches(batches: Vec<Batch>, exec: Execution) -> Result<Vec<PreparedBatch>> {
    exec.map(&batches, |b| PreparedBatch::prepare(b.clone())).into_iter().collect()
}
