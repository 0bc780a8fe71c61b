use crate::{Error, Result};

/// One classical Runge-Kutta step of `x' = rhs(t, x)`.
pub fn rk4_step<F>(rhs: &mut F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let blowup = |state: &[f64]| Error::NumericalBlowup { t: Some(t), state: state.to_vec() };
    let stage = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> { base.iter().zip(k).map(|(b, k)| b + s * k).collect() };
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());

    let k1 = rhs(t, x)?;
    if !finite(&k1) {
        return Err(blowup(x));
    }
    let x2 = stage(x, &k1, 0.5 * dt);
    let k2 = rhs(t + 0.5 * dt, &x2)?;
    if !finite(&k2) {
        return Err(blowup(&x2));
    }
    let x3 = stage(x, &k2, 0.5 * dt);
    let k3 = rhs(t + 0.5 * dt, &x3)?;
    if !finite(&k3) {
        return Err(blowup(&x3));
    }
    let x4 = stage(x, &k3, dt);
    let k4 = rhs(t + dt, &x4)?;
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if !finite(&next) {
        return Err(blowup(&x4));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate<F>(mut f: F, x0: f64, dt: f64, steps: usize) -> f64
    where
        F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    {
        let mut x = vec![x0];
        for k in 0..steps {
            x = rk4_step(&mut f, k as f64 * dt, &x, dt).unwrap();
        }
        x[0]
    }

    #[test]
    fn exponential_decay() {
        let x = integrate(|_, x| Ok(vec![-x[0]]), 1.0, 0.1, 10);
        assert!((x - (-1.0f64).exp()).abs() < 1e-6);
        assert!((x - 0.3678794).abs() < 1e-6);
    }

    #[test]
    fn zero_field_and_constant_field() {
        assert_eq!(integrate(|_, _| Ok(vec![0.0]), 0.7, 0.1, 5), 0.7);
        assert_eq!(integrate(|_, _| Ok(vec![1.0]), 2.0, 0.25, 4), 3.0);
    }

    #[test]
    fn non_finite_stage_is_blowup() {
        let mut f = |_: f64, x: &[f64]| Ok(vec![1.0 / (x[0] - 1.0)]);
        let err = rk4_step(&mut f, 0.5, &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::NumericalBlowup { t: Some(t), .. } if t == 0.5));
    }
}
