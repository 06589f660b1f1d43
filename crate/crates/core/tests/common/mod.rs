//! Reference implementations used only by the integration tests. None of
//! them go through the library's quadratic form or solvers.

#![allow(dead_code)]

use coolish::ols::{fit_ols, Dataset, OlsFit};
use coolish::shrinkage::{build_point, ShrinkagePoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| normal(rng))
}

pub struct Instance {
    pub fit: OlsFit,
    pub point: ShrinkagePoint,
    pub b_true: DMatrix<f64>,
}

/// Random regression problem with a single test point. Coefficients mix a
/// shared row effect with per-outcome spread so the shrinkage features are
/// correlated but not collinear.
pub fn random_instance<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Instance {
    let n = p + rng.random_range(5..40);
    let x = normal_matrix(n, p, rng);
    let shared: Vec<f64> = (0..p).map(|_| 1.5 * normal(rng)).collect();
    let spread = rng.random_range(0.3..1.5);
    let b_true = DMatrix::from_fn(p, q, |j, _| shared[j] + spread * normal(rng));
    let noise_sd = rng.random_range(0.2..2.0);
    let y = &x * &b_true + normal_matrix(n, q, rng) * noise_sd;
    let fit = fit_ols(&Dataset::new(x, y).unwrap()).unwrap();
    let x0 = normal_vector(p, rng);
    let point = build_point(&fit, &x0).unwrap();
    Instance { fit, point, b_true }
}

/// Empirical risk evaluated straight from its definition.
pub fn risk(pt: &ShrinkagePoint, theta: &DVector<f64>) -> f64 {
    let q = pt.y0_hat.len() as f64;
    let fitted = &pt.x_tilde * theta;
    let sq: f64 = pt
        .y0_hat
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    -pt.sigma2_0.sum() / q + sq / q + 2.0 * pt.q_vec.dot(theta)
}

/// Gradient written out from the definition.
pub fn risk_gradient(pt: &ShrinkagePoint, theta: &DVector<f64>) -> DVector<f64> {
    let q = pt.y0_hat.len() as f64;
    let resid = &pt.y0_hat - &pt.x_tilde * theta;
    pt.x_tilde.tr_mul(&resid) * (-2.0 / q) + &pt.q_vec * 2.0
}

/// Lower and upper bounds for the shrinkage box.
pub fn box_bounds(dim: usize, m: f64) -> (DVector<f64>, DVector<f64>) {
    let lo = DVector::from_fn(dim, |j, _| if j == 0 { -m } else { 0.0 });
    let hi = DVector::from_element(dim, m);
    (lo, hi)
}

fn project(theta: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(theta.len(), |j, _| theta[j].clamp(lo[j], hi[j]))
}

/// Accelerated projected gradient on the box `[lo, hi]`, run in Jacobi
/// scaled coordinates (a diagonal change of variables keeps the box a box).
/// Momentum restarts whenever it points uphill; step `1 / L` with `L` the
/// largest eigenvalue of the scaled Hessian.
pub fn projected_gradient(
    pt: &ShrinkagePoint,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    iterations: usize,
) -> DVector<f64> {
    let q = pt.y0_hat.len() as f64;
    let dim = pt.x_tilde.ncols();
    let hessian = pt.x_tilde.tr_mul(&pt.x_tilde) * (2.0 / q);
    let scale = DVector::from_fn(dim, |j, _| {
        let h = hessian[(j, j)];
        if h > 0.0 {
            1.0 / h.sqrt()
        } else {
            1.0
        }
    });
    let scaled = DMatrix::from_fn(dim, dim, |a, b| hessian[(a, b)] * scale[a] * scale[b]);
    let step = 1.0 / scaled.symmetric_eigenvalues().max();
    // gradient step in theta coordinates: theta - step * D^2 grad
    let descend = |theta: &DVector<f64>| -> DVector<f64> {
        let g = risk_gradient(pt, theta);
        let moved = DVector::from_fn(dim, |j, _| theta[j] - step * scale[j] * scale[j] * g[j]);
        project(&moved, lo, hi)
    };

    let mut x = project(&DVector::zeros(dim), lo, hi);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..iterations {
        let next = descend(&y);
        if (&next - &y).amax() == 0.0 && y == x {
            break;
        }
        // restart when the step opposes the momentum direction
        let g = risk_gradient(pt, &y);
        if g.dot(&(&next - &x)) > 0.0 {
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    x
}

/// Exhaustive active-set search: every coordinate is pinned to its lower
/// bound, pinned to its upper bound or left free; the free block is solved by
/// least squares and the best feasible candidate is kept.
pub fn enumerate_active_sets(pt: &ShrinkagePoint, m: f64) -> (DVector<f64>, f64) {
    let dim = pt.x_tilde.ncols();
    let q = pt.y0_hat.len() as f64;
    let (lo, hi) = box_bounds(dim, m);
    let hessian = pt.x_tilde.tr_mul(&pt.x_tilde) / q;
    let linear = pt.x_tilde.tr_mul(&pt.y0_hat) / q - &pt.q_vec;
    let patterns = 3usize.pow(dim as u32);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..patterns {
        let mut state = vec![0u8; dim];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut theta = DVector::zeros(dim);
        let free: Vec<usize> = (0..dim).filter(|j| state[*j] == 2).collect();
        for j in 0..dim {
            match state[j] {
                0 => theta[j] = lo[j],
                1 => theta[j] = hi[j],
                _ => {}
            }
        }
        if !free.is_empty() {
            let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| hessian[(free[a], free[b])]);
            let mut rhs = DVector::from_fn(free.len(), |a, _| linear[free[a]]);
            for (a, &fa) in free.iter().enumerate() {
                for j in 0..dim {
                    if state[j] != 2 {
                        rhs[a] -= hessian[(fa, j)] * theta[j];
                    }
                }
            }
            let Some(inv) = h_ff.try_inverse() else { continue };
            let sol = inv * rhs;
            for (a, &fa) in free.iter().enumerate() {
                theta[fa] = sol[a];
            }
        }
        if (0..dim).any(|j| theta[j] < lo[j] || theta[j] > hi[j]) {
            continue;
        }
        let value = risk(pt, &theta);
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((theta, value));
        }
    }
    best.expect("the all-bounds pattern is always feasible")
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
