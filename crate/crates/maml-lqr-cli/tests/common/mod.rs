//! Shared helpers for the acceptance suite: independent scalar closed
//! forms (no library calls, so they can arbitrate), a random task
//! generator, and bisection.

use maml_lqr::lqr::{self, LqrTask, Policy};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Closed-form scalar policy cost: with `m = a - b w`,
/// `c(w) = s0 (q + r w^2) / (1 - m^2)` for `|m| < 1`.
pub fn scalar_cost(a: f64, b: f64, q: f64, r: f64, s0: f64, w: f64) -> f64 {
    let m = a - b * w;
    s0 * (q + r * w * w) / (1.0 - m * m)
}

/// Closed-form derivative of [`scalar_cost`] in `w`.
pub fn scalar_cost_grad(a: f64, b: f64, q: f64, r: f64, s0: f64, w: f64) -> f64 {
    let m = a - b * w;
    let u = q + r * w * w;
    let v = 1.0 - m * m;
    s0 * (2.0 * r * w * v - u * 2.0 * b * m) / (v * v)
}

/// Root of `f` in `[lo, hi]` by bisection; panics unless `f` changes sign
/// over the bracket. Independent of every library solver.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let (flo, fhi) = (f(lo), f(hi));
    assert!(
        flo * fhi < 0.0,
        "no sign change over [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A random task with state and input dimension up to 3, paired with a
/// stabilizing policy near (but not at) its optimum. Draws are filtered to
/// a spectral radius at most 0.9 and a cost at most 50 so central
/// differences of the cost stay well-conditioned.
pub fn random_stabilizing_pair(rng: &mut ChaCha8Rng) -> (LqrTask, Policy) {
    loop {
        let d = rng.random_range(1..=3);
        let r_dim = rng.random_range(1..=3);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.2..1.2));
        let b = DMatrix::from_fn(d, r_dim, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose() + DMatrix::identity(d, d) * 0.2;
        let h = DMatrix::from_fn(r_dim, r_dim, |_, _| rng.random_range(-1.0..1.0));
        let r = &h * h.transpose() + DMatrix::identity(r_dim, r_dim) * 0.5;
        let s = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let sigma0 = &s * s.transpose() + DMatrix::identity(d, d) * 0.2;
        let Ok(task) = LqrTask::new(a, b, q, r, sigma0) else {
            continue;
        };
        let Ok(sol) = lqr::solve_riccati(&task) else {
            continue;
        };
        let jitter = DMatrix::from_fn(r_dim, d, |_, _| rng.random_range(-0.02..0.02));
        let w = Policy::new(sol.w_star.gain() + jitter);
        let Ok(m) = task.closed_loop(&w) else {
            continue;
        };
        let Ok(rho) = lqr::spectral_radius(&m) else {
            continue;
        };
        if rho > 0.9 {
            continue;
        }
        let Ok(eval) = lqr::eval_cost(&task, &w) else {
            continue;
        };
        if !eval.stable || eval.value > 50.0 {
            continue;
        }
        return (task, w);
    }
}
