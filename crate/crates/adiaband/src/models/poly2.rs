use std::collections::BTreeMap;

/// Bivariate polynomial in (s, t) with real coefficients; supports the exact
/// differentiation and Taylor machinery the model builders need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly2 {
    /// (s_power, t_power) -> coefficient; zero coefficients are pruned.
    coeffs: BTreeMap<(usize, usize), f64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::default();
        p.set(0, 0, c);
        p
    }

    pub fn monomial(s_pow: usize, t_pow: usize, c: f64) -> Self {
        let mut p = Self::default();
        p.set(s_pow, t_pow, c);
        p
    }

    pub fn set(&mut self, s_pow: usize, t_pow: usize, c: f64) {
        if c == 0.0 {
            self.coeffs.remove(&(s_pow, t_pow));
        } else {
            self.coeffs.insert((s_pow, t_pow), c);
        }
    }

    pub fn add_to(&mut self, s_pow: usize, t_pow: usize, c: f64) {
        let v = self.coeffs.get(&(s_pow, t_pow)).copied().unwrap_or(0.0) + c;
        self.set(s_pow, t_pow, v);
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&(a, b), &c)| c * s.powi(a as i32) * t.powi(b as i32))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&(a, b), &c) in &other.coeffs {
            out.add_to(a, b, c);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::default();
        for (&(a, b), &v) in &self.coeffs {
            out.set(a, b, v * c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::default();
        for (&(a1, b1), &c1) in &self.coeffs {
            for (&(a2, b2), &c2) in &other.coeffs {
                out.add_to(a1 + a2, b1 + b2, c1 * c2);
            }
        }
        out
    }

    /// Partial derivative d^{a}_s d^{b}_t.
    pub fn derive(&self, a: usize, b: usize) -> Self {
        let mut out = Self::default();
        for (&(pa, pb), &c) in &self.coeffs {
            if pa < a || pb < b {
                continue;
            }
            let mut f = c;
            for k in 0..a {
                f *= (pa - k) as f64;
            }
            for k in 0..b {
                f *= (pb - k) as f64;
            }
            out.set(pa - a, pb - b, f);
        }
        out
    }

    /// Taylor coefficient polynomial d^{a}_s d^{b}_t / (a! b!), still a
    /// function of the expansion point (s, t).
    pub fn taylor_coeff(&self, a: usize, b: usize) -> Self {
        let mut fact = 1.0f64;
        for k in 2..=a {
            fact *= k as f64;
        }
        for k in 2..=b {
            fact *= k as f64;
        }
        self.derive(a, b).scale(1.0 / fact)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.keys().map(|&(a, b)| a + b).max().unwrap_or(0)
    }
}
