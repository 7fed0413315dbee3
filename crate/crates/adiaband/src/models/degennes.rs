use crate::error::{AdiabandError, Result};

/// Half-line model H[gamma, sigma] = -d^2/dt^2 + (t - sigma)^2 on (0, t_max)
/// with the Robin condition u'(0) = gamma u(0); `gamma = +inf` selects the
/// Dirichlet condition u(0) = 0. Discretized with second-order finite
/// differences (ghost-node Robin row, symmetrized by a diagonal similarity)
/// and refined by Richardson extrapolation in the step size.
#[derive(Debug, Clone)]
pub struct DeGennesModel {
    pub gamma: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub sigma: f64,
}

impl DeGennesModel {
    pub fn new(gamma: f64, sigma: f64, t_max: f64, n_t: usize) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(AdiabandError::Config {
                path: "gamma".into(),
                message: format!("Robin parameter must be nonnegative, got {gamma}"),
            });
        }
        if t_max < sigma + 8.0 {
            return Err(AdiabandError::Config {
                path: "t_max".into(),
                message: format!("t_max = {t_max} too small for sigma = {sigma} (need sigma + 8)"),
            });
        }
        if n_t < 400 {
            return Err(AdiabandError::Config {
                path: "n_t".into(),
                message: format!("need at least 400 grid points, got {n_t}"),
            });
        }
        Ok(Self { gamma, t_max, n_t, sigma })
    }

    pub fn dirichlet(&self) -> bool {
        self.gamma.is_infinite()
    }

    /// Symmetric tridiagonal discretization at `n` intervals: (diag, offdiag).
    fn tridiagonal(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let dt = self.t_max / n as f64;
        let inv2 = 1.0 / (dt * dt);
        let pot = |i: usize| {
            let t = i as f64 * dt;
            (t - self.sigma) * (t - self.sigma)
        };
        if self.dirichlet() {
            // unknowns u_1 .. u_{n-1}
            let m = n - 1;
            let d: Vec<f64> = (0..m).map(|k| 2.0 * inv2 + pot(k + 1)).collect();
            let e = vec![-inv2; m - 1];
            (d, e)
        } else {
            // unknowns u_0 .. u_{n-1}; ghost node encodes u'(0) = gamma u(0),
            // and the resulting first row is symmetrized by scaling u_0 by
            // sqrt(2) (similarity, spectrum unchanged).
            let m = n;
            let mut d: Vec<f64> = (0..m).map(|k| 2.0 * inv2 + pot(k)).collect();
            d[0] = 2.0 * inv2 * (1.0 + dt * self.gamma) + pot(0);
            let mut e = vec![-inv2; m - 1];
            e[0] = -std::f64::consts::SQRT_2 * inv2;
            (d, e)
        }
    }

    /// Lowest `n_levels` eigenvalues at the model's own resolution (no
    /// extrapolation).
    fn raw_eigen(&self, n: usize, n_levels: usize) -> Vec<f64> {
        let (d, e) = self.tridiagonal(n);
        (0..n_levels).map(|k| tridiag_eigenvalue(&d, &e, k)).collect()
    }

    /// Richardson-extrapolated eigenvalues, refined until two successive
    /// extrapolations agree to 1e-8.
    pub fn eigen(&self, n_levels: usize) -> Result<Vec<f64>> {
        let mut n = self.n_t;
        let mut coarse = self.raw_eigen(n, n_levels);
        let mut prev: Option<Vec<f64>> = None;
        for _ in 0..6 {
            n *= 2;
            let fine = self.raw_eigen(n, n_levels);
            // second-order scheme: error ~ C dt^2
            let extrap: Vec<f64> = fine
                .iter()
                .zip(coarse.iter())
                .map(|(f, c)| (4.0 * f - c) / 3.0)
                .collect();
            if let Some(p) = &prev {
                let diff = extrap
                    .iter()
                    .zip(p.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if diff < 1e-8 {
                    return Ok(extrap);
                }
            }
            prev = Some(extrap);
            coarse = fine;
        }
        Err(AdiabandError::RefinementNotConverged(format!(
            "eigenvalues at gamma = {}, sigma = {} still moving after refinement",
            self.gamma, self.sigma
        )))
    }
}

/// k-th (0-based, ascending) eigenvalue of a symmetric tridiagonal matrix by
/// Sturm-sequence bisection.
fn tridiag_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    assert!(k < n);
    let e_max = e.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mut lo = d.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * e_max - 1.0;
    let mut hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * e_max + 1.0;
    let count_below = |x: f64| -> usize {
        let mut q = d[0] - x;
        let mut count = usize::from(q < 0.0);
        for i in 1..n {
            if q.abs() < 1e-300 {
                q = 1e-300;
            }
            q = d[i] - x - e[i - 1] * e[i - 1] / q;
            count += usize::from(q < 0.0);
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// mu_n(gamma, sigma) for 1-based level n, at standardized resolution.
pub fn mu(gamma: f64, sigma: f64, n: usize) -> Result<f64> {
    let t_max = (sigma + 8.0).max(14.0);
    let model = DeGennesModel::new(gamma, sigma, t_max, 560)?;
    Ok(model.eigen(n)?[n - 1])
}

/// Golden-section minimum of sigma -> mu_n(gamma, sigma): returns the
/// critical value Theta^{[n-1]}(gamma) and the minimizer sigma*.
pub fn dispersion_minimum(gamma: f64, n: usize) -> Result<(f64, f64)> {
    let f = |s: f64| mu(gamma, s, n);
    if gamma.is_infinite() {
        // Dirichlet limit: the curve decreases strictly towards the free
        // oscillator level 2n - 1 and the minimizer escapes to infinity, so
        // the critical value is the limit itself. Verified on the far tail
        // before reporting it.
        let limit = 2.0 * n as f64 - 1.0;
        let tail = f(12.0)?;
        if (tail - limit).abs() > 1e-3 || f(0.0)? <= tail {
            return Err(AdiabandError::BracketFailure(format!(
                "Dirichlet dispersion curve mu_{n} does not approach {limit} (tail {tail})"
            )));
        }
        return Ok((limit, f64::INFINITY));
    }
    // coarse bracket scan
    let step = 0.25;
    let sigmas: Vec<f64> = (0..=20).map(|i| i as f64 * step).collect();
    let vals: Vec<f64> = sigmas.iter().map(|&s| f(s)).collect::<Result<_>>()?;
    let mut bracket = None;
    for i in 1..vals.len() - 1 {
        if vals[i] < vals[i - 1] && vals[i] <= vals[i + 1] {
            bracket = Some((sigmas[i - 1], sigmas[i + 1]));
            break;
        }
    }
    let (mut a, mut b) = bracket.ok_or_else(|| {
        AdiabandError::BracketFailure(format!(
            "no interior minimum of mu_{n}({gamma}, .) in [0, 5]"
        ))
    })?;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut dpt = a + phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(dpt)?;
    while b - a > 1e-6 {
        if fc < fd {
            b = dpt;
            dpt = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = dpt;
            fc = fd;
            dpt = a + phi * (b - a);
            fd = f(dpt)?;
        }
    }
    let sigma_star = 0.5 * (a + b);
    let theta = f(sigma_star)?;
    let lo = 2.0 * n as f64 - 3.0;
    let hi = 2.0 * n as f64 - 1.0;
    if !(theta > lo && theta < hi) {
        return Err(AdiabandError::BracketFailure(format!(
            "critical value {theta} outside ({lo}, {hi})"
        )));
    }
    // non-degeneracy: positive curvature estimate at the minimum
    let dd = 0.05;
    let curv = (f(sigma_star + dd)? + f(sigma_star - dd)? - 2.0 * theta) / (dd * dd);
    if curv <= 1e-6 {
        return Err(AdiabandError::BracketFailure(format!(
            "flat dispersion curve at sigma = {sigma_star} (curvature {curv:.3e})"
        )));
    }
    Ok((theta, sigma_star))
}

/// Band count N(gamma, a, b) for a window [a, b] inside a single interval
/// (2n - 3, 2n - 1): N = n if b >= Theta^{[n-1]}(gamma), else n - 1.
pub fn count_bands(gamma: f64, a: f64, b: f64) -> Result<usize> {
    if !(a <= b) {
        return Err(AdiabandError::Config {
            path: "window".into(),
            message: format!("empty window [{a}, {b}]"),
        });
    }
    let mut level = None;
    for n in 1..=8usize {
        let lo = 2.0 * n as f64 - 3.0;
        let hi = 2.0 * n as f64 - 1.0;
        if a > lo && b < hi {
            level = Some(n);
            break;
        }
    }
    let n = level.ok_or(AdiabandError::WindowStraddlesThreshold { a, b })?;
    let (theta, _) = dispersion_minimum(gamma, n)?;
    Ok(if b >= theta { n } else { n - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn neumann_at_origin_selects_even_oscillator_levels() {
        // gamma = 0, sigma = 0: half-line restriction of the even Hermite
        // functions, eigenvalues 1, 5
        let model = DeGennesModel::new(0.0, 0.0, 14.0, 560).unwrap();
        let mu = model.eigen(2).unwrap();
        assert_abs_diff_eq!(mu[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mu[1], 5.0, epsilon = 1e-6);
    }

    #[test]
    fn dirichlet_at_origin_selects_odd_oscillator_levels() {
        let model = DeGennesModel::new(f64::INFINITY, 0.0, 14.0, 560).unwrap();
        let mu = model.eigen(2).unwrap();
        assert_abs_diff_eq!(mu[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mu[1], 7.0, epsilon = 1e-6);
    }

    #[test]
    fn levels_are_strictly_increasing() {
        let model = DeGennesModel::new(1.0, 0.7, 14.0, 560).unwrap();
        let mu = model.eigen(4).unwrap();
        for w in mu.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn neumann_dispersion_minimum_matches_reference() {
        let (theta, sigma_star) = dispersion_minimum(0.0, 1).unwrap();
        assert_abs_diff_eq!(theta, 0.590106, epsilon = 1e-4);
        assert_abs_diff_eq!(sigma_star, 0.7681, epsilon = 1e-3);
    }

    #[test]
    fn dirichlet_dispersion_minimum_is_the_limit() {
        let (theta, sigma_star) = dispersion_minimum(f64::INFINITY, 1).unwrap();
        assert_abs_diff_eq!(theta, 1.0, epsilon = 1e-12);
        assert!(sigma_star.is_infinite());
        // every admissible window top stays below the limit, so the Dirichlet
        // count in the first interval is always zero
        assert_eq!(count_bands(f64::INFINITY, -0.2, 0.8).unwrap(), 0);
    }

    #[test]
    fn band_count_case_split() {
        // b above the threshold Theta0(0) ~ 0.59 -> one band
        assert_eq!(count_bands(0.0, 0.8, 0.95).unwrap(), 1);
        // entirely below the threshold -> none
        assert_eq!(count_bands(0.0, 0.1, 0.3).unwrap(), 0);
        // straddling the Landau threshold at 1 is refused
        assert!(matches!(
            count_bands(0.0, 0.9, 1.1),
            Err(AdiabandError::WindowStraddlesThreshold { .. })
        ));
    }

    #[test]
    fn invalid_parameters_are_refused() {
        assert!(DeGennesModel::new(-1.0, 0.0, 14.0, 560).is_err());
        assert!(DeGennesModel::new(0.0, 8.0, 10.0, 560).is_err());
        assert!(DeGennesModel::new(0.0, 0.0, 14.0, 100).is_err());
    }
}
