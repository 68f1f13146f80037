//! Central-node fusion over a planar bistatic geometry.
//!
//! Delays are measured relative to the direct path, so the direct-path
//! interference sits at zero delay:
//!
//! ```text
//! tau_k(p) = (|p - io| + |p - node_k| - |io - node_k|) / c
//! w_k(p, v) = -(w_c / c) (u_io + u_k) . v
//! ```
//!
//! with `u_io`, `u_k` the unit vectors from the illuminator and from node `k`
//! toward the target. A closing target has positive Doppler. Node statistics
//! are combined incoherently; a node with no sample at a hypothesis adds
//! zero.

use serde::{Deserialize, Serialize};

use crate::baseline2d::AmbiguitySurface;
use crate::error::{invalid, Error, Result};
use crate::par::Execution;
use crate::separable::DelayProfile;

pub type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub io_pos: Point,
    pub node_pos: Vec<Point>,
    /// Carrier frequency in rad/s.
    pub carrier: f64,
    /// Propagation speed in m/s.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub pos: Point,
    pub vel: Point,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
        if !finite(&self.io_pos) || !self.node_pos.iter().all(finite) {
            return invalid("positions must be finite");
        }
        if !(self.c > 0.0) || !self.carrier.is_finite() {
            return invalid("propagation speed must be positive and carrier finite");
        }
        if self.node_pos.iter().any(|n| norm(sub(*n, self.io_pos)) == 0.0) {
            return invalid("a receiver node coincides with the illuminator");
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.node_pos.len()
    }

    fn node(&self, k: usize) -> Result<Point> {
        self.node_pos.get(k).copied().ok_or_else(|| Error::InvalidArgument(format!("no node {k}")))
    }

    /// `u_io + u_k` at `pos`.
    pub fn direction_sum(&self, k: usize, pos: Point) -> Result<Point> {
        let node = self.node(k)?;
        let a = sub(pos, self.io_pos);
        let b = sub(pos, node);
        let (na, nb) = (norm(a), norm(b));
        if na == 0.0 || nb == 0.0 {
            return invalid("target position coincides with the illuminator or a node");
        }
        Ok([a[0] / na + b[0] / nb, a[1] / na + b[1] / nb])
    }
}

/// Bistatic delay of node `k` relative to its direct path.
pub fn bistatic_delay(geom: &Geometry, k: usize, pos: Point) -> Result<f64> {
    let node = geom.node(k)?;
    let a = norm(sub(pos, geom.io_pos));
    let b = norm(sub(pos, node));
    if a == 0.0 || b == 0.0 {
        return invalid("target position coincides with the illuminator or a node");
    }
    let baseline = norm(sub(node, geom.io_pos));
    Ok(((a + b - baseline) / geom.c).max(0.0))
}

/// Bistatic Doppler of node `k` in rad/s.
pub fn bistatic_doppler(geom: &Geometry, k: usize, pos: Point, vel: Point) -> Result<f64> {
    let s = geom.direction_sum(k, pos)?;
    Ok(-(geom.carrier / geom.c) * (s[0] * vel[0] + s[1] * vel[1]))
}

/// Regular grid of candidate positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XyGrid {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl XyGrid {
    fn axis(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point {
        [Self::axis(self.x.0, self.x.1, self.nx, ix), Self::axis(self.y.0, self.y.1, self.ny, iy)]
    }

    pub fn cell(&self) -> Point {
        let d = |(lo, hi): (f64, f64), n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        [d(self.x, self.nx), d(self.y, self.ny)]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub pos: Point,
    pub value: f64,
}

// order-independent sum: node permutations give bit-identical totals
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn argmax_rows(rows: Vec<(usize, f64)>) -> Option<(usize, f64)> {
    rows.into_iter().fold(None, |best, (k, v)| match best {
        Some((_, bv)) if bv >= v => best,
        _ => Some((k, v)),
    })
}

/// Position maximizing the sum of node delay profiles sampled at the
/// hypothesized bistatic delays.
pub fn localize(profiles: &[DelayProfile], geom: &Geometry, grid: &XyGrid, exec: Execution) -> Result<Localization> {
    geom.validate()?;
    if grid.is_empty() {
        return invalid("position grid is empty");
    }
    if profiles.len() != geom.nodes() {
        return invalid(format!("{} profiles for {} nodes", profiles.len(), geom.nodes()));
    }
    let rows = exec.map_range(grid.ny, |iy| {
        let mut best = (0, f64::NEG_INFINITY);
        for ix in 0..grid.nx {
            let p = grid.point(ix, iy);
            let terms = profiles
                .iter()
                .enumerate()
                .map(|(k, prof)| bistatic_delay(geom, k, p).map(|t| prof.sample(t)).unwrap_or(0.0))
                .collect();
            let v = sorted_sum(terms);
            if v > best.1 {
                best = (iy * grid.nx + ix, v);
            }
        }
        best
    });
    let (k, value) = argmax_rows(rows).expect("non-empty grid");
    if !(value > 0.0) {
        return Err(Error::NoTargetSignal);
    }
    Ok(Localization { pos: grid.point(k % grid.nx, k / grid.nx), value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityFit {
    pub vel: Point,
    pub residual_norm: f64,
}

/// Least-squares velocity from per-node Doppler estimates at a fixed
/// position. Each node contributes one linear equation in `(vx, vy)`.
pub fn velocity_from_dopplers(geom: &Geometry, pos: Point, omega_hats: &[f64]) -> Result<VelocityFit> {
    geom.validate()?;
    if omega_hats.len() != geom.nodes() {
        return invalid(format!("{} Doppler values for {} nodes", omega_hats.len(), geom.nodes()));
    }
    let k_scale = -geom.carrier / geom.c;
    let rows = (0..geom.nodes())
        .map(|k| geom.direction_sum(k, pos).map(|s| [k_scale * s[0], k_scale * s[1]]))
        .collect::<Result<Vec<_>>>()?;
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, w) in rows.iter().zip(omega_hats) {
        a11 += r[0] * r[0];
        a12 += r[0] * r[1];
        a22 += r[1] * r[1];
        b1 += r[0] * w;
        b2 += r[1] * w;
    }
    let det = a11 * a22 - a12 * a12;
    let trace = a11 + a22;
    if !(det > 1e-10 * trace * trace) {
        return Err(Error::UnderDetermined(
            "node direction sums are collinear; velocity is not identifiable".into(),
        ));
    }
    let vel = [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];
    let residual_norm = rows
        .iter()
        .zip(omega_hats)
        .map(|(r, w)| (r[0] * vel[0] + r[1] * vel[1] - w).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(VelocityFit { vel, residual_norm })
}

/// Regular grid of candidate velocities.
pub type VelocityGrid = XyGrid;

/// Joint position-velocity search over node ambiguity surfaces. This is the
/// four-dimensional counterpart of [`localize`] for the full 2-D estimator;
/// its cost grows with the product of both grids.
pub fn localize_joint(
    surfaces: &[AmbiguitySurface],
    geom: &Geometry,
    grid: &XyGrid,
    velocities: &VelocityGrid,
    exec: Execution,
) -> Result<(TargetState, f64)> {
    geom.validate()?;
    if grid.is_empty() || velocities.is_empty() {
        return invalid("position and velocity grids must be non-empty");
    }
    if surfaces.len() != geom.nodes() {
        return invalid(format!("{} surfaces for {} nodes", surfaces.len(), geom.nodes()));
    }
    let rows = exec.map_range(grid.len(), |kp| {
        let p = grid.point(kp % grid.nx, kp / grid.nx);
        let delays: Vec<Option<f64>> = (0..geom.nodes()).map(|k| bistatic_delay(geom, k, p).ok()).collect();
        let mut best = (0, f64::NEG_INFINITY);
        for kv in 0..velocities.len() {
            let v = velocities.point(kv % velocities.nx, kv / velocities.nx);
            let terms = surfaces
                .iter()
                .enumerate()
                .map(|(k, s)| match delays[k] {
                    Some(t) => bistatic_doppler(geom, k, p, v).map(|w| s.sample(t, w)).unwrap_or(0.0),
                    None => 0.0,
                })
                .collect();
            let total = sorted_sum(terms);
            if total > best.1 {
                best = (kp * velocities.len() + kv, total);
            }
        }
        best
    });
    let (k, value) = argmax_rows(rows).expect("non-empty grid");
    if !(value > 0.0) {
        return Err(Error::NoTargetSignal);
    }
    let (kp, kv) = (k / velocities.len(), k % velocities.len());
    let state = TargetState {
        pos: grid.point(kp % grid.nx, kp / grid.nx),
        vel: velocities.point(kv % velocities.nx, kv / velocities.nx),
    };
    Ok((state, value))
}
