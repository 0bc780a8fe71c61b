#![allow(dead_code)]

use std::sync::Arc;

use nonovershoot::jet::Jet;
use nonovershoot::model::{DriftFn, SystemModel};
use rand::Rng;

/// `psi_i = a x_i^2 + b x_1 x_i + e x_1` for each row `[a, b, e]`;
/// `g = 1.5 + 0.5 sin(x_n)`.
pub fn poly_system(coef: &[[f64; 3]]) -> SystemModel {
    let psi: Vec<DriftFn> = coef
        .iter()
        .enumerate()
        .map(|(i, &[a, b, e])| {
            Arc::new(move |x: &[Jet]| {
                let xi = &x[i];
                &(&(xi * xi).scale(a) + &(&x[0] * xi).scale(b)) + &x[0].scale(e)
            }) as DriftFn
        })
        .collect();
    let n = coef.len();
    SystemModel::new(
        format!("poly:{n}"),
        psi,
        Arc::new(move |x: &[f64]| 1.5 + 0.5 * x[n - 1].sin()),
        1.0,
    )
    .unwrap()
}

pub fn random_poly_system<R: Rng>(rng: &mut R, n: usize) -> SystemModel {
    let coef: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    poly_system(&coef)
}

/// Central difference with one Richardson step.
pub fn richardson(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
