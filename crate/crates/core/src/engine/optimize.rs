//! Box-constrained quasi-Newton ascent with central-difference gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Step used for central differences (in the optimizer's coordinates).
pub const GRADIENT_STEP: f64 = 1e-4;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const MAX_STEP: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AscentOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentSettings {
    pub max_iter: usize,
    pub gtol: f64,
    pub ftol: f64,
    pub step: f64,
}

impl Default for AscentSettings {
    fn default() -> Self {
        AscentSettings { max_iter: 100, gtol: 1e-5, ftol: 1e-9, step: GRADIENT_STEP }
    }
}

/// `∂f/∂z_i ≈ (f(z + h e_i) − f(z − h e_i)) / 2h`.
pub fn central_gradient<F>(f: &F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = z.to_vec();
    let mut grad = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        probe[i] = z[i] + h;
        let up = f(&probe)?;
        probe[i] = z[i] - h;
        let down = f(&probe)?;
        probe[i] = z[i];
        let g = (up - down) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        grad.push(g);
    }
    Ok(grad)
}

fn clamp_into(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in z.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Coordinates that may move: not pinned at a bound with the gradient pushing outward.
fn free_mask(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..z.len())
        .map(|i| !((z[i] <= lo[i] && g[i] < 0.0) || (z[i] >= hi[i] && g[i] > 0.0)))
        .collect()
}

/// Maximizes `f` over the box `[lo, hi]` starting from `start`.
///
/// The objective never decreases: every accepted step satisfies an Armijo
/// condition. Failing evaluations during the line search count as rejected
/// trial points; a failure at the start point is returned as an error.
pub fn maximize<F>(f: &F, start: &[f64], lo: &[f64], hi: &[f64], settings: AscentSettings) -> Result<AscentOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let p = start.len();
    let mut z = start.to_vec();
    clamp_into(&mut z, lo, hi);
    let mut fz = f(&z)?;
    if !fz.is_finite() {
        return Err(Error::Numeric("objective not finite at start".into()));
    }
    if p == 0 {
        return Ok(AscentOutcome { point: z, value: fz, iterations: 0, converged: true });
    }
    let mut g = central_gradient(f, &z, settings.step)?;
    let mut h_inv = DMatrix::<f64>::identity(p, p);

    for it in 0..settings.max_iter {
        let free = free_mask(&z, &g, lo, hi);
        let pg: f64 = g.iter().zip(&free).filter(|(_, f)| **f).map(|(v, _)| v * v).sum::<f64>().sqrt();
        if pg <= settings.gtol {
            return Ok(AscentOutcome { point: z, value: fz, iterations: it, converged: true });
        }

        let g_free = DVector::from_iterator(p, g.iter().zip(&free).map(|(v, f)| if *f { *v } else { 0.0 }));
        let mut dir = &h_inv * &g_free;
        for i in 0..p {
            if !free[i] {
                dir[i] = 0.0;
            }
        }
        if dir.dot(&g_free) <= 0.0 {
            h_inv = DMatrix::identity(p, p);
            dir = g_free.clone();
        }
        let longest = dir.amax();
        let mut alpha = if longest > MAX_STEP { MAX_STEP / longest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(v, d)| v + alpha * d).collect();
            clamp_into(&mut trial, lo, hi);
            let step: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| s.abs() < 1e-14) {
                break;
            }
            let gain: f64 = step.iter().zip(&g).map(|(s, gi)| s * gi).sum();
            if let Ok(ft) = f(&trial) {
                if ft.is_finite() && ft >= fz + ARMIJO * gain {
                    accepted = Some((trial, ft, step));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, step)) = accepted else {
            return Ok(AscentOutcome { point: z, value: fz, iterations: it, converged: true });
        };
        let g_new = match central_gradient(f, &trial, settings.step) {
            Ok(g) => g,
            Err(_) => {
                return Ok(AscentOutcome { point: trial, value: ft, iterations: it + 1, converged: false });
            }
        };

        // Inverse-Hessian update for the minimization of −f.
        let s = DVector::from_vec(step);
        let y = DVector::from_iterator(p, g_new.iter().zip(&g).map(|(a, b)| b - a));
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let ident = DMatrix::<f64>::identity(p, p);
            let left = &ident - rho * &s * y.transpose();
            let right = &ident - rho * &y * s.transpose();
            h_inv = &left * &h_inv * &right + rho * &s * s.transpose();
        }

        let improvement = ft - fz;
        z = trial;
        g = g_new;
        fz = ft;
        if improvement.abs() <= settings.ftol * (1.0 + fz.abs()) {
            return Ok(AscentOutcome { point: z, value: fz, iterations: it + 1, converged: true });
        }
    }
    Ok(AscentOutcome { point: z, value: fz, iterations: settings.max_iter, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(z: &[f64]) -> Result<f64> {
        Ok(-((z[0] - 1.0).powi(2) + 10.0 * (z[1] + 0.5).powi(2)))
    }

    #[test]
    fn finds_interior_maximum() {
        let out = maximize(&bowl, &[-3.0, 3.0], &[-5.0, -5.0], &[5.0, 5.0], AscentSettings::default()).unwrap();
        assert!(out.converged);
        assert!((out.point[0] - 1.0).abs() < 1e-4, "{:?}", out.point);
        assert!((out.point[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn respects_bounds() {
        let out = maximize(&bowl, &[0.0, 0.0], &[-5.0, 0.0], &[0.5, 5.0], AscentSettings::default()).unwrap();
        assert!((out.point[0] - 0.5).abs() < 1e-9);
        assert!(out.point[1].abs() < 1e-9);
    }

    #[test]
    fn never_decreases() {
        let rosen = |z: &[f64]| -> Result<f64> { Ok(-(100.0 * (z[1] - z[0] * z[0]).powi(2) + (1.0 - z[0]).powi(2))) };
        let start = [-1.2, 1.0];
        let f0 = rosen(&start).unwrap();
        let out = maximize(&rosen, &start, &[-2.0, -2.0], &[2.0, 2.0], AscentSettings { max_iter: 5, ..Default::default() }).unwrap();
        assert!(out.value >= f0);
    }

    #[test]
    fn gradient_matches_analytic() {
        let g = central_gradient(&bowl, &[0.0, 0.0], 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] + 10.0).abs() < 1e-8);
    }

    #[test]
    fn start_failure_is_error() {
        let bad = |_: &[f64]| -> Result<f64> { Err(Error::Numeric("boom".into())) };
        assert!(maximize(&bad, &[0.0], &[-1.0], &[1.0], AscentSettings::default()).is_err());
    }
}
