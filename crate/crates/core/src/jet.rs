//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A [`Jet`] stores the Taylor coefficients of a scalar function of `nvars`
//! variables around a base point, up to a fixed total degree. Degree-one jets
//! behave exactly like multivariate dual numbers; higher degrees let a
//! recursion differentiate quantities that are themselves built from
//! derivatives, which is what the backstepping recursion needs.
//!
//! Every jet tracks how many leading degrees are still exact (`valid`).
//! Differentiating a jet consumes one degree.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// Monomial layout shared by all jets of a given (variables, degree) shape.
pub struct JetSpace {
    nvars: usize,
    degree: usize,
    exponents: Vec<Vec<u8>>,
    degrees: Vec<usize>,
    units: Vec<usize>,
    // (lhs, rhs, out) triples for every pair whose product stays within `degree`
    products: Vec<(u32, u32, u32)>,
    // per variable: (src, dst, factor) for d/dv_j
    derivs: Vec<Vec<(u32, u32, f64)>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("nvars", &self.nvars)
            .field("degree", &self.degree)
            .field("len", &self.exponents.len())
            .finish()
    }
}

impl JetSpace {
    pub fn new(nvars: usize, degree: usize) -> Arc<Self> {
        let mut exponents: Vec<Vec<u8>> = Vec::new();
        for d in 0..=degree {
            push_monomials(nvars, d, &mut vec![0u8; nvars], 0, &mut exponents);
        }
        let degrees: Vec<usize> = exponents
            .iter()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .collect();
        let index: HashMap<Vec<u8>, usize> = exponents
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();

        let units = (0..nvars)
            .map(|j| {
                if degree == 0 {
                    usize::MAX
                } else {
                    let mut e = vec![0u8; nvars];
                    e[j] = 1;
                    index[&e]
                }
            })
            .collect();

        let mut products = Vec::new();
        for (a, ea) in exponents.iter().enumerate() {
            for (b, eb) in exponents.iter().enumerate() {
                if degrees[a] + degrees[b] > degree {
                    continue;
                }
                let sum: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                products.push((a as u32, b as u32, index[&sum] as u32));
            }
        }

        let derivs = (0..nvars)
            .map(|j| {
                exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e[j] > 0)
                    .map(|(src, e)| {
                        let mut lowered = e.clone();
                        lowered[j] -= 1;
                        (src as u32, index[&lowered] as u32, e[j] as f64)
                    })
                    .collect()
            })
            .collect();

        Arc::new(Self {
            nvars,
            degree,
            exponents,
            degrees,
            units,
            products,
            derivs,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }
}

fn push_monomials(nvars: usize, left: usize, cur: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == nvars || nvars == 0 {
        if nvars > 0 {
            cur[pos] = left as u8;
        }
        out.push(cur.clone());
        if nvars > 0 {
            cur[pos] = 0;
        }
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k as u8;
        push_monomials(nvars, left - k, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coef: Vec<f64>,
    valid: usize,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("value", &self.value())
            .field("valid", &self.valid)
            .field("coef", &self.coef)
            .finish()
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, value: f64) -> Self {
        let mut coef = vec![0.0; space.len()];
        coef[0] = value;
        Self {
            space: Arc::clone(space),
            coef,
            valid: space.degree,
        }
    }

    /// The `j`-th coordinate function evaluated at `value`.
    pub fn variable(space: &Arc<JetSpace>, j: usize, value: f64) -> Self {
        let mut jet = Self::constant(space, value);
        if space.degree > 0 {
            jet.coef[space.units[j]] = 1.0;
        }
        jet
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    /// Number of leading degrees that are exact.
    pub fn valid(&self) -> usize {
        self.valid
    }

    /// First partial derivative with respect to variable `j`.
    ///
    /// Returns `None` once the jet has no exact first-order information left.
    pub fn partial(&self, j: usize) -> Option<f64> {
        (self.valid >= 1).then(|| self.coef[self.space.units[j]])
    }

    pub fn gradient(&self) -> Option<Vec<f64>> {
        (0..self.space.nvars).map(|j| self.partial(j)).collect()
    }

    /// Jet of the partial derivative with respect to variable `j`.
    pub fn derivative(&self, j: usize) -> Jet {
        let mut coef = vec![0.0; self.coef.len()];
        let valid = self.valid.saturating_sub(1);
        if self.valid > 0 {
            for &(src, dst, factor) in &self.space.derivs[j] {
                if self.space.degrees[dst as usize] <= valid {
                    coef[dst as usize] += factor * self.coef[src as usize];
                }
            }
        }
        Jet {
            space: Arc::clone(&self.space),
            coef,
            valid,
        }
    }

    /// Applies a scalar function given its derivatives at the base value,
    /// `derivs[k] = f^(k)(value)` for `k = 0..=valid`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        debug_assert!(derivs.len() > self.valid);
        let mut delta = self.clone();
        delta.coef[0] = 0.0;
        let mut factorial = (1..=self.valid).map(|k| k as f64).product::<f64>();
        let mut acc = Jet::constant(&self.space, derivs[self.valid] / factorial);
        acc.valid = self.valid;
        for k in (0..self.valid).rev() {
            factorial /= (k + 1) as f64;
            acc = &acc * &delta;
            acc.coef[0] += derivs[k] / factorial;
        }
        acc
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let d: Vec<f64> = (0..=self.valid).map(|k| [s, c, -s, -c][k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let d: Vec<f64> = (0..=self.valid).map(|k| [c, -s, -c, s][k % 4]).collect();
        self.compose(&d)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.valid + 1])
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut out = Jet::constant(&self.space, 1.0);
        out.valid = self.valid;
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    pub fn scale(&self, k: f64) -> Jet {
        Jet {
            space: Arc::clone(&self.space),
            coef: self.coef.iter().map(|c| c * k).collect(),
            valid: self.valid,
        }
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.space, &other.space));
        let valid = self.valid.min(other.valid);
        let coef = self
            .coef
            .iter()
            .zip(&other.coef)
            .zip(&self.space.degrees)
            .map(|((a, b), &d)| if d <= valid { f(*a, *b) } else { 0.0 })
            .collect();
        Jet {
            space: Arc::clone(&self.space),
            coef,
            valid,
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.space, &rhs.space));
        let valid = self.valid.min(rhs.valid);
        let degrees = &self.space.degrees;
        let mut coef = vec![0.0; self.coef.len()];
        for &(a, b, out) in &self.space.products {
            if degrees[out as usize] <= valid {
                coef[out as usize] += self.coef[a as usize] * rhs.coef[b as usize];
            }
        }
        Jet {
            space: Arc::clone(&self.space),
            coef,
            valid,
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut out = self.clone();
        out.coef[0] += rhs;
        out
    }
}

impl Sub<f64> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self + (-rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<&Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        rhs.scale(self)
    }
}

macro_rules! forward_owned {
    ($($tr:ident::$m:ident),*) => {$(
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet { (&self).$m(&rhs) }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet { (&self).$m(rhs) }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet { self.$m(&rhs) }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $m(self, rhs: f64) -> Jet { (&self).$m(rhs) }
        }
    )*};
}

forward_owned!(Add::add, Sub::sub, Mul::mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs.scale(self)
    }
}
