//! Bounded Nelder-Mead simplex search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexSettings {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iterations: usize,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self { reflection: 1.0, expansion: 2.0, contraction: 0.5, shrink: 0.5, max_iterations: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Objective<F> {
    f: F,
    bounds: Option<Vec<(f64, f64)>>,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Objective<F> {
    fn clamp(&self, x: &mut [f64]) {
        if let Some(b) = &self.bounds {
            for (xi, (lo, hi)) in x.iter_mut().zip(b) {
                *xi = xi.clamp(*lo, *hi);
            }
        }
    }

    // internal sense is minimization of -f
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = -(self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Maximizes `f` starting from `start`.
///
/// The initial simplex steps `scale[i]` along each axis. Converges when every
/// vertex lies within `tol[i]` of the best vertex in every coordinate.
/// Points are clamped into `bounds` when given.
pub fn maximize<F>(
    f: F,
    start: &[f64],
    scale: &[f64],
    tol: &[f64],
    bounds: Option<&[(f64, f64)]>,
    settings: &SimplexSettings,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert!(n > 0 && scale.len() == n && tol.len() == n, "dimension mismatch");
    let mut obj = Objective { f, bounds: bounds.map(|b| b.to_vec()), evaluations: 0 };

    let mut x0 = start.to_vec();
    obj.clamp(&mut x0);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let g0 = obj.eval(&x0);
    simplex.push((x0.clone(), g0));
    for i in 0..n {
        let mut p = x0.clone();
        p[i] += scale[i];
        obj.clamp(&mut p);
        if p[i] == x0[i] {
            p[i] = x0[i] - scale[i];
            obj.clamp(&mut p);
        }
        let g = obj.eval(&p);
        simplex.push((p, g));
    }

    let mut iterations = 0;
    let converged = loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let done = simplex[1..]
            .iter()
            .all(|(p, _)| p.iter().zip(best).zip(tol).all(|((a, b), t)| (a - b).abs() < *t));
        if done || iterations >= settings.max_iterations {
            break done;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let (worst, g_worst) = simplex[n].clone();
        let g_best = simplex[0].1;
        let g_second = simplex[n - 1].1;

        let mut xr = lerp(&centroid, &worst, -settings.reflection);
        obj.clamp(&mut xr);
        let gr = obj.eval(&xr);

        if gr < g_best {
            let mut xe = lerp(&centroid, &xr, settings.expansion);
            obj.clamp(&mut xe);
            let ge = obj.eval(&xe);
            simplex[n] = if ge < gr { (xe, ge) } else { (xr, gr) };
            continue;
        }
        if gr < g_second {
            simplex[n] = (xr, gr);
            continue;
        }
        let (mut xc, accept_below) = if gr < g_worst {
            (lerp(&centroid, &xr, settings.contraction), gr)
        } else {
            (lerp(&centroid, &worst, settings.contraction), g_worst)
        };
        obj.clamp(&mut xc);
        let gc = obj.eval(&xc);
        if gc < accept_below || (gr < g_worst && gc <= gr) {
            simplex[n] = (xc, gc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut p = lerp(&anchor, &vertex.0, settings.shrink);
            obj.clamp(&mut p);
            let g = obj.eval(&p);
            *vertex = (p, g);
        }
    };

    let (x, g) = simplex.swap_remove(0);
    SimplexResult { x, value: -g, iterations, evaluations: obj.evaluations, converged }
}
