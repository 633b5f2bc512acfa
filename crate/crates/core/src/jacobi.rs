//! Jacobi polynomials, normalizing constants of the ball basis, eigenvalues,
//! harmonic-space dimensions and the growth estimates behind the `e^n`
//! bound on the basis.

use crate::error::{Error, Result};
use crate::geometry::ModelParams;
use crate::scalar::Field;

/// Largest polynomial degree the recurrences are used for.
pub const MAX_DEGREE: usize = 200;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Type parameters `(alpha, beta)` of a Jacobi family, both `> -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiParams {
    alpha: f64,
    beta: f64,
}

impl JacobiParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > -1.0 && beta > -1.0) {
            return Err(Error::InvalidParameter(format!(
                "Jacobi parameters must exceed -1, got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// The family `P_j^{mu - 1/2, k + d/2 - 1}` attached to harmonic degree `k`.
    pub fn for_ball(params: &ModelParams, k: usize) -> Self {
        Self {
            alpha: params.mu() - 0.5,
            beta: k as f64 + params.d() as f64 / 2.0 - 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Index `(n, j, kappa)` of a basis element; `0 <= 2j <= n`, `1 <= kappa <= h(n - 2j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    pub n: usize,
    pub j: usize,
    pub kappa: usize,
}

impl MultiIndex {
    pub fn new(d: usize, n: usize, j: usize, kappa: usize) -> Result<Self> {
        if 2 * j > n {
            return Err(Error::InvalidParameter(format!("need 2j <= n, got n = {n}, j = {j}")));
        }
        let h = harmonic_dim(d, n - 2 * j);
        if kappa == 0 || kappa as u64 > h {
            return Err(Error::InvalidParameter(format!(
                "kappa = {kappa} outside 1..={h} for harmonic degree {}",
                n - 2 * j
            )));
        }
        Ok(Self { n, j, kappa })
    }

    /// Harmonic degree `n - 2j`.
    pub fn k(&self) -> usize {
        self.n - 2 * self.j
    }

    /// All indices with `n <= n_max`, ordered by `(n, j, kappa)`.
    pub fn enumerate(d: usize, n_max: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for n in 0..=n_max {
            for j in 0..=n / 2 {
                let h = harmonic_dim(d, n - 2 * j) as usize;
                for kappa in 1..=h {
                    out.push(MultiIndex { n, j, kappa });
                }
            }
        }
        out
    }
}

/// `P_j^{alpha, beta}(x)` by the three-term recurrence.
pub fn jacobi_eval(j: usize, params: JacobiParams, x: f64) -> f64 {
    jacobi_values(j, params, x)[j]
}

/// `P_0, ..., P_{j_max}` at `x`.
pub fn jacobi_values(j_max: usize, params: JacobiParams, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(j_max + 1);
    jacobi_values_into(j_max, params.alpha, params.beta, x, &mut out);
    out
}

pub(crate) fn jacobi_values_into(j_max: usize, a: f64, b: f64, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if j_max == 0 {
        return;
    }
    out.push((a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0);
    for n in 2..=j_max {
        let nf = n as f64;
        let s = 2.0 * nf + a + b;
        let c0 = 2.0 * nf * (nf + a + b) * (s - 2.0);
        let c1 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c2 = 2.0 * (nf + a - 1.0) * (nf + b - 1.0) * s;
        let p = (c1 * out[n - 1] - c2 * out[n - 2]) / c0;
        out.push(p);
    }
}

/// The recurrence over any [`Field`]; the coefficients are formed in `T` too,
/// so double-double evaluation keeps full precision.
pub(crate) fn jacobi_values_field<T: Field>(j_max: usize, a: T, b: T, x: T, out: &mut Vec<T>) {
    out.clear();
    let one = T::from(1.0);
    out.push(one);
    if j_max == 0 {
        return;
    }
    let two = T::from(2.0);
    out.push((a + one) + (a + b + two) * (x - one) / two);
    let ab = a * a - b * b;
    for n in 2..=j_max {
        let nf = T::from(n as f64);
        let s = two * nf + a + b;
        let c0 = two * nf * (nf + a + b) * (s - two);
        let c1 = (s - one) * (s * (s - two) * x + ab);
        let c2 = two * (nf + a - one) * (nf + b - one) * s;
        let p = (c1 * out[n - 1] - c2 * out[n - 2]) / c0;
        out.push(p);
    }
}

/// `ln (C_{n,j}^mu)^2`.
pub fn ln_norm_const_sq(params: &ModelParams, n: usize, j: usize) -> f64 {
    let mu = params.mu();
    let d = params.d() as f64;
    let (nf, jf) = (n as f64, j as f64);
    ln_gamma(jf + mu + 0.5) + ln_gamma(nf - jf + d / 2.0)
        - std::f64::consts::LN_2
        - (nf + mu + (d - 1.0) / 2.0).ln()
        - ln_gamma(jf + 1.0)
        - ln_gamma(nf - jf + mu + (d - 1.0) / 2.0)
}

/// The normalizing constant `C_{n,j}^mu`, computed in log space.
pub fn norm_const(params: &ModelParams, n: usize, j: usize) -> Result<f64> {
    if 2 * j > n {
        return Err(Error::InvalidParameter(format!("need 2j <= n, got n = {n}, j = {j}")));
    }
    let half_log = 0.5 * ln_norm_const_sq(params, n, j);
    if !half_log.is_finite() || half_log.abs() > 700.0 {
        return Err(Error::Overflow { n, j });
    }
    Ok(half_log.exp())
}

/// `lambda_n^mu = n (n + d + 2 mu - 1)`.
pub fn eigenvalue(params: &ModelParams, n: usize) -> f64 {
    let nf = n as f64;
    nf * (nf + params.d() as f64 + 2.0 * params.mu() - 1.0)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Dimension of the space of spherical harmonics of degree `k` in `d` variables.
pub fn harmonic_dim(d: usize, k: usize) -> u64 {
    let (d, k) = (d as u64, k as u64);
    let mut h = binomial(d + k - 1, k);
    if k >= 2 {
        h -= binomial(d + k - 3, k - 2);
    }
    h
}

/// `sup_{[-1,1]} |P_j^{alpha,beta}| = binom(j + q, j)` with `q = max(alpha, beta) >= -1/2`.
pub fn jacobi_sup(j: usize, params: JacobiParams) -> Result<f64> {
    let q = params.alpha.max(params.beta);
    if q < -0.5 {
        return Err(Error::InvalidParameter(format!(
            "sup formula needs max(alpha, beta) >= -1/2, got {q}"
        )));
    }
    let jf = j as f64;
    Ok((ln_gamma(jf + q + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(q + 1.0)).exp())
}

/// Both sides of `x^x <= (x+a)^x <= e^a x^x`, in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StirlingA {
    pub ln_lower: f64,
    pub ln_value: f64,
    pub ln_upper: f64,
    pub holds: bool,
}

pub fn stirling_bound_a(x: f64, a: f64) -> StirlingA {
    let ln_lower = x * x.ln();
    let ln_value = x * (x + a).ln();
    let ln_upper = a + ln_lower;
    let slack = 1e-12 * (1.0 + ln_value.abs());
    StirlingA {
        ln_lower,
        ln_value,
        ln_upper,
        holds: ln_lower <= ln_value + slack && ln_value <= ln_upper + slack,
    }
}

/// Both sides of `(x+y)^{x+y} <= 2^{x+y} x^x y^y`, in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StirlingB {
    pub ln_value: f64,
    pub ln_bound: f64,
    pub holds: bool,
}

pub fn stirling_bound_b(x: f64, y: f64) -> StirlingB {
    let ln_value = (x + y) * (x + y).ln();
    let ln_bound = (x + y) * std::f64::consts::LN_2 + x * x.ln() + y * y.ln();
    StirlingB {
        ln_value,
        ln_bound,
        holds: ln_value <= ln_bound + 1e-12 * (1.0 + ln_bound.abs()),
    }
}

/// `Gamma(x) / (x^{x-1/2} e^{-x})`.
pub fn gamma_asymptotic_ratio(x: f64) -> f64 {
    (ln_gamma(x) - (x - 0.5) * x.ln() + x).exp()
}

/// Per-degree growth report for `|Q_{n,j,kappa}|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    pub n: usize,
    /// `max_{j} C^{-1} sup|P_j| (h(n-2j)/sigma)^{1/2}`.
    pub envelope: f64,
    /// Grid maximum of `|Q_{n,j,kappa}|` over all `j, kappa`.
    pub empirical: f64,
    pub exp_n: f64,
}

/// Analytic envelope of `sup_B |Q_{n,j,kappa}|` over `j, kappa`.
pub fn analytic_envelope(params: &ModelParams, n: usize) -> f64 {
    let sigma = params.sphere_area();
    (0..=n / 2)
        .map(|j| {
            let k = n - 2 * j;
            let sup = jacobi_sup(j, JacobiParams::for_ball(params, k)).expect("beta >= 0");
            let c = (0.5 * ln_norm_const_sq(params, n, j)).exp();
            sup / c * (harmonic_dim(params.d(), k) as f64 / sigma).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Analytic envelope and grid-search maximum of the basis for every `n <= n_max`.
///
/// The grid has `radial` equispaced radii in `[0, 1]` and `angular` directions
/// (a circle for `d = 2`, a `sqrt(angular)` square latitude-longitude grid for `d = 3`).
pub fn q_envelope(
    params: &ModelParams,
    n_max: usize,
    radial: usize,
    angular: usize,
) -> Result<Vec<EnvelopeRow>> {
    let d = params.d();
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let dirs = crate::spectral::direction_grid(d, angular);
    let mut emp = vec![0.0f64; n_max + 1];
    let inv_c: Vec<Vec<f64>> = (0..=n_max)
        .map(|n| {
            (0..=n / 2)
                .map(|j| (-0.5 * ln_norm_const_sq(params, n, j)).exp())
                .collect()
        })
        .collect();
    let mut pj = Vec::new();
    for ir in 0..radial {
        let r = ir as f64 / (radial - 1).max(1) as f64;
        let s = 2.0 * r * r - 1.0;
        // sup over kappa of |S_{k,kappa}| at radius r, maximized over directions
        let mut harm_max = vec![0.0f64; n_max + 1];
        for dir in &dirs {
            let x: Vec<f64> = dir.iter().map(|c| c * r).collect();
            for (k, hm) in harm_max.iter_mut().enumerate() {
                for v in crate::spectral::solid_harmonics_degree(d, k, &x)? {
                    *hm = hm.max(v.abs());
                }
            }
        }
        for k in 0..=n_max {
            let jp = JacobiParams::for_ball(params, k);
            let j_max = (n_max - k) / 2;
            jacobi_values_into(j_max, jp.alpha, jp.beta, s, &mut pj);
            for (j, p) in pj.iter().enumerate() {
                let n = k + 2 * j;
                let v = inv_c[n][j] * p.abs() * harm_max[k];
                emp[n] = emp[n].max(v);
            }
        }
    }
    Ok((0..=n_max)
        .map(|n| EnvelopeRow {
            n,
            envelope: analytic_envelope(params, n),
            empirical: emp[n],
            exp_n: (n as f64).exp(),
        })
        .collect())
}

/// Smallest `C` with `envelope(n) <= C e^n` over the rows.
pub fn fitted_growth_constant(rows: &[EnvelopeRow]) -> f64 {
    rows.iter().map(|r| r.envelope / r.exp_n).fold(0.0, f64::max)
}

/// Least-squares exponent `A` of `max_j (C_{n,j})^{-2} ~ (n+1)^A` over `n_lo..=n_hi`,
/// together with `max / min` of `max_j (C_{n,j})^{-2} / (n+1)^A` over `0..=n_hi`.
pub fn fitted_norm_exponent(params: &ModelParams, n_lo: usize, n_hi: usize) -> (f64, f64) {
    let m = |n: usize| {
        (0..=n / 2)
            .map(|j| -ln_norm_const_sq(params, n, j))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let pts: Vec<(f64, f64)> = (n_lo..=n_hi).map(|n| (((n + 1) as f64).ln(), m(n))).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let a = sxy / sxx;
    let logs: Vec<f64> = (0..=n_hi).map(|n| m(n) - a * ((n + 1) as f64).ln()).collect();
    let spread = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - logs.iter().cloned().fold(f64::INFINITY, f64::min);
    (a, spread.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, mu: f64) -> ModelParams {
        ModelParams::new(d, mu).unwrap()
    }

    /// Rodrigues formula expanded symbolically for j <= 5: the derivative of
    /// (1-x)^{j+a}(1+x)^{j+b} via Leibniz gives
    /// P_j(x) = sum_m binom(j+a, j-m) binom(j+b, m) ((x-1)/2)^m ((x+1)/2)^{j-m}.
    fn rodrigues(j: usize, a: f64, b: f64, x: f64) -> f64 {
        fn gbinom(top: f64, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (top - i as f64) / (i + 1) as f64)
        }
        (0..=j)
            .map(|m| {
                gbinom(j as f64 + a, j - m)
                    * gbinom(j as f64 + b, m)
                    * ((x - 1.0) / 2.0).powi(m as i32)
                    * ((x + 1.0) / 2.0).powi((j - m) as i32)
            })
            .sum()
    }

    #[test]
    fn low_degree_values() {
        let p = JacobiParams::new(0.3, -0.4).unwrap();
        assert_eq!(jacobi_eval(0, p, 0.7), 1.0);
        let leg = JacobiParams::new(0.0, 0.0).unwrap();
        assert!((jacobi_eval(1, leg, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recurrence_matches_rodrigues() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = rng.gen_range(-0.99..3.0);
            let b = rng.gen_range(-0.99..3.0);
            let x = rng.gen_range(-1.0..=1.0);
            let p = JacobiParams::new(a, b).unwrap();
            let vals = jacobi_values(5, p, x);
            for (j, v) in vals.iter().enumerate() {
                assert!((v - rodrigues(j, a, b, x)).abs() < 1e-12, "j={j} a={a} b={b} x={x}");
            }
        }
    }

    #[test]
    fn value_at_one_is_binomial() {
        for &(a, b) in &[(0.5, 1.0), (-0.5, 2.5), (1.7, -0.3)] {
            let p = JacobiParams::new(a, b).unwrap();
            for j in 0..=5 {
                let binom = (ln_gamma(j as f64 + a + 1.0)
                    - ln_gamma(j as f64 + 1.0)
                    - ln_gamma(a + 1.0))
                .exp();
                assert!((jacobi_eval(j, p, 1.0) - binom).abs() < 1e-12 * binom.max(1.0));
                assert!((rodrigues(j, a, b, 1.0) - binom).abs() < 1e-12 * binom.max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(JacobiParams::new(-1.0, 0.0).is_err());
        assert!(MultiIndex::new(2, 3, 2, 1).is_err());
        assert!(MultiIndex::new(2, 3, 1, 3).is_err());
        assert!(MultiIndex::new(3, 3, 1, 3).is_ok());
    }

    #[test]
    fn norm_const_base_case() {
        // d = 2, mu = 1/2: C^2 = Gamma(1) Gamma(1) / (2 * 1 * Gamma(1)) = 1/2
        let c = norm_const(&params(2, 0.5), 0, 0).unwrap();
        assert!((c * c - 0.5).abs() < 1e-14);
        for d in [2, 3] {
            for mu in [-0.3, 0.0, 0.5, 1.5] {
                let p = params(d, mu);
                for n in 0..=60 {
                    for j in 0..=n / 2 {
                        assert!(norm_const(&p, n, j).unwrap() > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(eigenvalue(&params(2, 0.0), 0), 0.0);
        assert_eq!(eigenvalue(&params(2, 0.0), 1), 2.0);
        assert_eq!(eigenvalue(&params(3, 0.5), 2), 10.0);
        let p = params(3, 1.5);
        for n in 1..60 {
            assert!(eigenvalue(&p, n) > eigenvalue(&p, n - 1));
        }
        let r = eigenvalue(&params(2, 0.5), 400) / 160_000.0;
        assert!((r - 1.0).abs() < 0.01);
    }

    #[test]
    fn harmonic_dims() {
        for d in 2..6 {
            assert_eq!(harmonic_dim(d, 0), 1);
            assert_eq!(harmonic_dim(d, 1), d as u64);
        }
        for k in 1..30 {
            assert_eq!(harmonic_dim(2, k), 2);
            assert_eq!(harmonic_dim(3, k), 2 * k as u64 + 1);
        }
    }

    #[test]
    fn sup_formula() {
        let leg = JacobiParams::new(0.0, 0.0).unwrap();
        for j in 0..20 {
            assert!((jacobi_sup(j, leg).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(jacobi_sup(3, JacobiParams::new(-0.7, -0.6).unwrap()).is_err());
        // grid-search oracle
        for &(a, b) in &[(0.0, 0.0), (1.0, 0.5), (-0.5, 2.0), (2.5, 3.0), (1.0, 0.0)] {
            let p = JacobiParams::new(a, b).unwrap();
            for j in 0..12 {
                let sup = jacobi_sup(j, p).unwrap();
                let grid_max = (0..10_000)
                    .map(|i| jacobi_eval(j, p, -1.0 + 2.0 * i as f64 / 9_999.0).abs())
                    .fold(0.0, f64::max);
                assert!(grid_max <= sup * (1.0 + 1e-9));
                let ends = jacobi_eval(j, p, 1.0).abs().max(jacobi_eval(j, p, -1.0).abs());
                if (ends - grid_max).abs() < 1e-12 * grid_max {
                    assert!(grid_max >= 0.99 * sup);
                }
            }
        }
    }

    #[test]
    fn stirling_examples() {
        let a = stirling_bound_a(1.0, 1.0);
        assert!((a.ln_lower.exp() - 1.0).abs() < 1e-15);
        assert!((a.ln_value.exp() - 2.0).abs() < 1e-15);
        assert!((a.ln_upper.exp() - std::f64::consts::E).abs() < 1e-14);
        assert!(a.holds);
        let b = stirling_bound_b(1.0, 1.0);
        assert!((b.ln_value.exp() - 4.0).abs() < 1e-14 && (b.ln_bound.exp() - 4.0).abs() < 1e-14);
        assert!(b.holds);
        let b = stirling_bound_b(1.0, 2.0);
        assert!((b.ln_value.exp() - 27.0).abs() < 1e-12);
        assert!((b.ln_bound.exp() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_ratio() {
        assert!((gamma_asymptotic_ratio(1.0) - std::f64::consts::E).abs() < 1e-13);
        let want = std::f64::consts::E.powi(2) / (2.0 * 2f64.sqrt());
        assert!((gamma_asymptotic_ratio(2.0) - want).abs() < 1e-13);
        for i in 0..=950 {
            let x = 5.0 + i as f64 * 0.1;
            let r = gamma_asymptotic_ratio(x);
            assert!((2.4..=2.6).contains(&r), "x = {x}, r = {r}");
        }
    }

    #[test]
    fn envelope_dominates_grid() {
        let p = params(2, 0.5);
        let rows = q_envelope(&p, 20, 60, 64).unwrap();
        for r in &rows {
            assert!(r.empirical <= r.envelope * (1.0 + 1e-9), "n = {}", r.n);
        }
        let q0 = 1.0 / (norm_const(&p, 0, 0).unwrap() * p.sphere_area().sqrt());
        assert!((rows[0].empirical - q0).abs() < 1e-12);
        let c = fitted_growth_constant(&rows);
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn norm_growth_is_polynomial() {
        let (a, spread) = fitted_norm_exponent(&params(2, 0.5), 10, 40);
        assert!(a > 0.0 && a < 10.0);
        assert!(spread < 50.0);
    }
}
