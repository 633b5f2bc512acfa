//! The orthonormal basis `Q_{n,j,kappa}`, zonal kernels, the truncated heat
//! kernel and the heat and Poisson semigroups acting on grid functions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::geometry::{BallPoint, ModelParams};
use crate::jacobi::{
    eigenvalue, harmonic_dim, jacobi_values_field, jacobi_values_into, ln_gamma, ln_norm_const_sq, norm_const,
    MultiIndex,
};
use crate::quadrature::{gauss_laguerre, Domain, GridFunction, QuadratureRule};
use crate::scalar::{Field, Jet};

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(d))
    }
}

/// Unit directions for grid searches: `count` equispaced angles for `d = 2`, a
/// `ceil(sqrt(count))`-square latitude-longitude grid (poles included) for `d = 3`.
pub fn direction_grid(d: usize, count: usize) -> Vec<Vec<f64>> {
    let count = count.max(1);
    if d == 2 {
        return (0..count)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let m = ((count as f64).sqrt().ceil() as usize).max(2);
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let th = PI * i as f64 / (m - 1) as f64;
        for j in 0..m {
            let ph = 2.0 * PI * j as f64 / m as f64;
            out.push(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
        }
    }
    out
}

/// All solid harmonics of degree `0..=k_max` at `x`, grouped by degree.
///
/// `d = 2`: `1/sqrt(2 pi)`, then `Re (x1 + i x2)^k / sqrt(pi)`, `Im (..)^k / sqrt(pi)`.
/// `d = 3`: real orthonormal `Y_l^m` times `r^l`, ordered `m = 0, (1, cos), (1, sin), ...`.
pub(crate) fn solid_harmonics_field<T: Field>(d: usize, k_max: usize, x: &[T]) -> Result<Vec<Vec<T>>> {
    check_dim(d)?;
    if x.len() != d {
        return Err(Error::InvalidParameter(format!("point has {} coordinates, expected {d}", x.len())));
    }
    let zero = T::from(0.0);
    let mut out: Vec<Vec<T>> = (0..=k_max).map(|k| vec![zero; harmonic_dim(d, k) as usize]).collect();
    let (mut re, mut im) = (T::from(1.0), zero);
    if d == 2 {
        out[0][0] = T::from(1.0 / (2.0 * PI).sqrt());
        let c = T::from(1.0 / PI.sqrt());
        for slot in out.iter_mut().skip(1) {
            (re, im) = (re * x[0] - im * x[1], re * x[1] + im * x[0]);
            slot[0] = re * c;
            slot[1] = im * c;
        }
        return Ok(out);
    }
    let z = x[2];
    let r2 = x[0] * x[0] + x[1] * x[1] + z * z;
    let mut base = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=k_max {
        if m > 0 {
            (re, im) = (re * x[0] - im * x[1], re * x[1] + im * x[0]);
            base *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        }
        let scale = if m == 0 { base } else { base * 2f64.sqrt() };
        let channels: &[(T, usize)] = if m == 0 {
            &[(re, 0)]
        } else {
            &[(re, 2 * m - 1), (im, 2 * m)]
        };
        for &(seed, slot) in channels {
            let mut prev2 = zero;
            let mut prev = seed * T::from(scale);
            out[m][slot] = prev;
            for l in m + 1..=k_max {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                let next = T::from(a) * (z * prev - T::from(b) * r2 * prev2);
                out[l][slot] = next;
                prev2 = prev;
                prev = next;
            }
        }
    }
    Ok(out)
}

/// `S_{k,kappa}(x)` for `kappa = 1..=h(k)`.
pub fn solid_harmonics_degree(d: usize, k: usize, x: &[f64]) -> Result<Vec<f64>> {
    Ok(solid_harmonics_field(d, k, x)?.pop().expect("k_max + 1 degrees"))
}

/// A single solid harmonic `S_{k,kappa}(x)`.
pub fn solid_harmonic(d: usize, k: usize, kappa: usize, x: &BallPoint) -> Result<f64> {
    let h = harmonic_dim(d, k) as usize;
    if kappa == 0 || kappa > h {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} outside 1..={h}")));
    }
    Ok(solid_harmonics_degree(d, k, x.coords())?[kappa - 1])
}

/// `sum_kappa S_{k,kappa}(x) S_{k,kappa}(y)` without forming the harmonics.
pub fn zonal_kernel(d: usize, k: usize, x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_dim(d)?;
    let p: f64 = x.coords().iter().zip(y.coords()).map(|(a, b)| a * b).sum();
    let q = x.norm_sq() * y.norm_sq();
    let v = zonal_recurrence(d, k, p, q);
    Ok(zonal_weight(d, k) * v[k] / zonal_pi(d))
}

/// Homogeneous Chebyshev (`d = 2`) or Legendre (`d = 3`) polynomials in
/// `p = <x, y>`, `q = |x|^2 |y|^2`: `(|x||y|)^k T_k(cos)` or `(|x||y|)^k P_k(cos)`.
fn zonal_recurrence<T: Field>(d: usize, k_max: usize, p: T, q: T) -> Vec<T> {
    let mut v = Vec::with_capacity(k_max + 1);
    v.push(T::from(1.0));
    if k_max >= 1 {
        v.push(p);
    }
    for k in 2..=k_max {
        let next = if d == 2 {
            T::from(2.0) * p * v[k - 1] - q * v[k - 2]
        } else {
            let kf = k as f64;
            (T::from(2.0 * kf - 1.0) * p * v[k - 1] - T::from(kf - 1.0) * q * v[k - 2]) / T::from(kf)
        };
        v.push(next);
    }
    v
}

/// Per-degree factor of the zonal kernel, with the common `1/pi` or `1/(4 pi)` removed.
fn zonal_weight(d: usize, k: usize) -> f64 {
    match (d, k) {
        (2, 0) => 0.5,
        (2, _) => 1.0,
        _ => (2 * k + 1) as f64,
    }
}

fn zonal_pi(d: usize) -> f64 {
    if d == 2 {
        PI
    } else {
        4.0 * PI
    }
}

/// Offsets of the `(n, j)` blocks in the `(n, j, kappa)` enumeration order.
#[derive(Debug, Clone)]
struct BasisLayout {
    start: Vec<Vec<usize>>,
    len: usize,
}

impl BasisLayout {
    fn new(d: usize, n_max: usize) -> Self {
        let mut start = Vec::with_capacity(n_max + 1);
        let mut pos = 0;
        for n in 0..=n_max {
            let mut row = Vec::with_capacity(n / 2 + 1);
            for j in 0..=n / 2 {
                row.push(pos);
                pos += harmonic_dim(d, n - 2 * j) as usize;
            }
            start.push(row);
        }
        Self { start, len: pos }
    }
}

fn inverse_norms(params: &ModelParams, n_max: usize) -> Result<Vec<Vec<f64>>> {
    (0..=n_max)
        .map(|n| (0..=n / 2).map(|j| norm_const(params, n, j).map(|c| 1.0 / c)).collect())
        .collect()
}

/// All `Q_{n,j,kappa}(x)` with `n <= n_max`, in [`MultiIndex::enumerate`] order.
pub(crate) fn basis_values_field<T: Field>(params: &ModelParams, n_max: usize, x: &[T]) -> Result<Vec<T>> {
    let d = params.d();
    let harm = solid_harmonics_field(d, n_max, x)?;
    let inv_c = inverse_norms(params, n_max)?;
    let r2 = x.iter().fold(T::from(0.0), |acc, v| acc + *v * *v);
    let s = T::from(2.0) * r2 - T::from(1.0);
    let alpha = T::from(params.mu() - 0.5);
    let mut jac: Vec<Vec<T>> = Vec::with_capacity(n_max + 1);
    let mut buf = Vec::new();
    for k in 0..=n_max {
        let beta = T::from(k as f64 + d as f64 / 2.0 - 1.0);
        jacobi_values_field((n_max - k) / 2, alpha, beta, s, &mut buf);
        jac.push(buf.clone());
    }
    let mut out = Vec::new();
    for n in 0..=n_max {
        for j in 0..=n / 2 {
            let k = n - 2 * j;
            let radial = jac[k][j] * T::from(inv_c[n][j]);
            out.extend(harm[k].iter().map(|h| radial * *h));
        }
    }
    Ok(out)
}

/// All basis values with `n <= n_max` at `x`, in [`MultiIndex::enumerate`] order.
pub fn basis_values(params: &ModelParams, n_max: usize, x: &[f64]) -> Result<Vec<f64>> {
    basis_values_field(params, n_max, x)
}

/// `Q_{n,j,kappa}(x) = C^{-1} P_j(2|x|^2 - 1) S_{n-2j,kappa}(x)`.
pub fn basis_eval(params: &ModelParams, idx: MultiIndex, x: &BallPoint) -> Result<f64> {
    basis_eval_field(params, idx, x.coords())
}

pub(crate) fn basis_eval_field<T: Field>(params: &ModelParams, idx: MultiIndex, x: &[T]) -> Result<T> {
    let d = params.d();
    let k = idx.k();
    let c = norm_const(params, idx.n, idx.j)?;
    let harm = solid_harmonics_field(d, k, x)?;
    let r2 = x.iter().fold(T::from(0.0), |acc, v| acc + *v * *v);
    let s = T::from(2.0) * r2 - T::from(1.0);
    let mut jac = Vec::new();
    jacobi_values_field(
        idx.j,
        T::from(params.mu() - 0.5),
        T::from(k as f64 + d as f64 / 2.0 - 1.0),
        s,
        &mut jac,
    );
    let h = harm[k]
        .get(idx.kappa - 1)
        .copied()
        .ok_or_else(|| Error::InvalidParameter(format!("kappa = {} out of range", idx.kappa)))?;
    Ok(jac[idx.j] * h / T::from(c))
}

/// `Q_{n,j,kappa}(x)` and its gradient.
pub fn basis_gradient(params: &ModelParams, idx: MultiIndex, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let q = basis_eval_field(params, idx, &Jet::vars(x))?;
    Ok((q.v, q.g[..x.len()].to_vec()))
}

/// Truncation policy for kernel series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub n_max: usize,
    pub tail_tol: f64,
    pub t_min: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            n_max: 40,
            tail_tol: 1e-10,
            t_min: 0.05,
        }
    }
}

impl Truncation {
    pub fn new(n_max: usize, tail_tol: f64, t_min: f64) -> Result<Self> {
        if !(tail_tol > 0.0) || !(t_min > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tail_tol and t_min must be positive (got {tail_tol}, {t_min})"
            )));
        }
        Ok(Self { n_max, tail_tol, t_min })
    }
}

/// A kernel value with a bound on the truncated tail and on rounding error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    /// Bound on `|sum_{n > n_max} ...|`.
    pub tail_bound: f64,
    /// Estimated rounding error of the finite sum.
    pub rounding: f64,
}

impl KernelValue {
    pub fn error_bound(&self) -> f64 {
        self.tail_bound + self.rounding
    }
}

/// Exact reproducing-kernel diagonals are used for `n_max < n <= n_max + TAIL_EXACT`.
const TAIL_EXACT: usize = 40;

/// The truncated heat kernel
/// `sum_{n <= n_max} e^{-t lambda_n} sum_j C_{n,j}^{-2} P_j(s_x) P_j(s_y) Z_{n-2j}(x, y)`.
///
/// Coefficients are generated by rational recurrences, so the same sum can be
/// carried out in `f64` or in double-double arithmetic. The latter resolves
/// kernel values far below the size of individual terms (`h ~ 1e-20` for
/// distant pairs at small `t`).
#[derive(Debug, Clone)]
pub struct HeatKernel {
    params: ModelParams,
    trunc: Truncation,
    n_ext: usize,
    offsets: Vec<usize>,
    coef: Vec<f64>,
    coef_dd: Vec<Dd>,
    global: f64,
    /// `(lambda_n, ln(dim_n * envelope_n^2))` for `n > n_ext`.
    far: Vec<(f64, f64)>,
}

/// Per-point data reused across kernel evaluations.
#[derive(Debug, Clone)]
pub struct KernelPoint {
    coords: Vec<f64>,
    norm_sq: f64,
    jac: Vec<f64>,
    jac_dd: Option<Vec<Dd>>,
    diag: Vec<f64>,
}

impl KernelPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// `e^{-t lambda_n}` for `n <= n_max`.
#[derive(Debug, Clone)]
pub struct Damping {
    t: f64,
    f: Vec<f64>,
    dd: Option<Vec<Dd>>,
}

impl Damping {
    pub fn t(&self) -> f64 {
        self.t
    }
}

impl HeatKernel {
    pub fn new(params: &ModelParams, trunc: Truncation) -> Result<Self> {
        let d = params.d();
        check_dim(d)?;
        let n_max = trunc.n_max;
        let n_ext = n_max + TAIL_EXACT;
        let mu = Dd::from_f64(params.mu());
        let a = mu + Dd::from_f64((d as f64 - 1.0) / 2.0);
        let b = mu + Dd::from_f64(0.5);
        let c = Dd::from_f64(d as f64 / 2.0);
        let mut offsets = Vec::with_capacity(n_ext + 1);
        let mut coef_dd = Vec::new();
        // g(k, j) = j! Gamma(k+j+a) / (Gamma(j+b) Gamma(k+j+c)), relative to g(0, 0)
        let mut g_k0 = Dd::ONE;
        for k in 0..=n_ext {
            offsets.push(coef_dd.len());
            let kd = Dd::from_f64(k as f64);
            if k > 0 {
                let km = Dd::from_f64((k - 1) as f64);
                g_k0 = g_k0 * (km + a) / (km + c);
            }
            let mut g = g_k0;
            for j in 0..=(n_ext - k) / 2 {
                let jd = Dd::from_f64(j as f64);
                if j > 0 {
                    let jm = Dd::from_f64((j - 1) as f64);
                    g = g * (jd * (kd + jm + a)) / ((jm + b) * (kd + jm + c));
                }
                let n = Dd::from_f64((k + 2 * j) as f64);
                coef_dd.push((n + a) * 2.0 * g * zonal_weight(d, k));
            }
        }
        let coef = coef_dd.iter().map(|v| v.to_f64()).collect();
        let (af, bf, cf) = (a.to_f64(), b.to_f64(), c.to_f64());
        let global = (ln_gamma(af) - ln_gamma(bf) - ln_gamma(cf)).exp() / zonal_pi(d);

        let t_min = trunc.t_min;
        let sigma = params.sphere_area();
        let alpha = params.mu() - 0.5;
        let mut far = Vec::new();
        let mut n = n_ext + 1;
        loop {
            let mut ln_env = f64::NEG_INFINITY;
            let mut dim = 0.0;
            for j in 0..=n / 2 {
                let k = n - 2 * j;
                let beta = k as f64 + d as f64 / 2.0 - 1.0;
                let q = alpha.max(beta);
                let jf = j as f64;
                let ln_sup = ln_gamma(jf + q + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(q + 1.0);
                let h = harmonic_dim(d, k) as f64;
                dim += h;
                let e = ln_sup - 0.5 * ln_norm_const_sq(params, n, j) + 0.5 * (h / sigma).ln();
                ln_env = ln_env.max(e);
            }
            let lam = eigenvalue(params, n);
            let ln_b = dim.ln() + 2.0 * ln_env;
            far.push((lam, ln_b));
            // super-geometric decay from here on
            if t_min * lam - ln_b > 745.0 || n > 100_000 {
                break;
            }
            n += 1;
        }
        Ok(Self {
            params: *params,
            trunc,
            n_ext,
            offsets,
            coef,
            coef_dd,
            global,
            far,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    fn blocks(&self, n: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (k, offset, j_max) for the series truncated at degree n
        (0..=n).map(move |k| (k, self.offsets[k], (n - k) / 2))
    }

    /// Tabulates Jacobi values at `x`; `precise` adds a double-double table.
    pub fn prepare(&self, x: &[f64], precise: bool) -> Result<KernelPoint> {
        let d = self.params.d();
        if x.len() != d {
            return Err(Error::InvalidParameter(format!("point has {} coordinates, expected {d}", x.len())));
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 > 1.0 + 1e-12 {
            return Err(Error::OutsideDomain(format!("|x|^2 = {r2}")));
        }
        let s = 2.0 * r2 - 1.0;
        let alpha = self.params.mu() - 0.5;
        let mut jac = vec![0.0; self.coef.len()];
        let mut buf = Vec::new();
        for (k, off, jm) in self.blocks(self.n_ext) {
            jacobi_values_into(jm, alpha, k as f64 + d as f64 / 2.0 - 1.0, s, &mut buf);
            jac[off..off + jm + 1].copy_from_slice(&buf);
        }
        let n_max = self.trunc.n_max;
        let mut diag = Vec::with_capacity(self.n_ext - n_max);
        for n in n_max + 1..=self.n_ext {
            let mut acc = 0.0;
            for j in 0..=n / 2 {
                let k = n - 2 * j;
                let i = self.offsets[k] + j;
                acc += self.coef[i] * jac[i] * jac[i] * r2.powi(k as i32);
            }
            diag.push(self.global * acc);
        }
        let jac_dd = precise.then(|| {
            let r2 = x.iter().fold(Dd::ZERO, |acc, v| acc + Dd::prod(*v, *v));
            let s = r2 * 2.0 - Dd::ONE;
            let alpha = Dd::from_f64(self.params.mu()) - Dd::from_f64(0.5);
            let mut out = vec![Dd::ZERO; self.coef.len()];
            let mut buf = Vec::new();
            for (k, off, jm) in self.blocks(n_max) {
                let beta = Dd::from_f64(k as f64 + d as f64 / 2.0 - 1.0);
                jacobi_values_field(jm, alpha, beta, s, &mut buf);
                out[off..off + jm + 1].copy_from_slice(&buf);
            }
            out
        });
        Ok(KernelPoint {
            coords: x.to_vec(),
            norm_sq: r2,
            jac,
            jac_dd,
            diag,
        })
    }

    /// Damping factors at time `t`; rejects `t < t_min`.
    pub fn damping(&self, t: f64, precise: bool) -> Result<Damping> {
        if !(t >= self.trunc.t_min) {
            return Err(Error::TimeTooSmall {
                t,
                t_min: self.trunc.t_min,
            });
        }
        Ok(self.damping_unchecked(t, precise))
    }

    fn damping_unchecked(&self, t: f64, precise: bool) -> Damping {
        let n_max = self.trunc.n_max;
        let f = (0..=n_max).map(|n| (-t * eigenvalue(&self.params, n)).exp()).collect();
        let dd = precise.then(|| {
            let d = Dd::from_f64(self.params.d() as f64);
            let m = Dd::from_f64(self.params.mu()) * 2.0 - Dd::ONE;
            (0..=n_max)
                .map(|n| {
                    let nd = Dd::from_f64(n as f64);
                    (-(nd * (nd + d + m) * t)).exp()
                })
                .collect()
        });
        Damping { t, f, dd }
    }

    fn pair_invariants(&self, x: &KernelPoint, y: &KernelPoint) -> (f64, f64) {
        let p = x.coords.iter().zip(&y.coords).map(|(a, b)| a * b).sum();
        (p, x.norm_sq * y.norm_sq)
    }

    /// Plain `f64` value without tail or rounding bookkeeping.
    pub fn value(&self, damp: &Damping, x: &KernelPoint, y: &KernelPoint) -> f64 {
        let (p, q) = self.pair_invariants(x, y);
        let v = zonal_recurrence(self.params.d(), self.trunc.n_max, p, q);
        let mut acc = 0.0;
        for (k, off, jm) in self.blocks(self.trunc.n_max) {
            let mut inner = 0.0;
            for j in 0..=jm {
                let i = off + j;
                inner += damp.f[k + 2 * j] * self.coef[i] * x.jac[i] * y.jac[i];
            }
            acc += inner * v[k];
        }
        self.global * acc
    }

    /// Kernel value with tail bound, in double-double arithmetic when the
    /// damping and both points carry precise tables.
    pub fn eval_prepared(&self, damp: &Damping, x: &KernelPoint, y: &KernelPoint) -> Result<KernelValue> {
        let n_max = self.trunc.n_max;
        let d = self.params.d();
        // |zonal_k| <= (|x| |y|)^k
        let rxy = (x.norm_sq * y.norm_sq).sqrt();
        let (value, abs_sum, unit) = match (&damp.dd, &x.jac_dd, &y.jac_dd) {
            (Some(dm), Some(jx), Some(jy)) => {
                let p = x.coords.iter().zip(&y.coords).fold(Dd::ZERO, |acc, (a, b)| acc + Dd::prod(*a, *b));
                let q = x.coords.iter().fold(Dd::ZERO, |acc, a| acc + Dd::prod(*a, *a))
                    * y.coords.iter().fold(Dd::ZERO, |acc, a| acc + Dd::prod(*a, *a));
                let v = zonal_recurrence(d, n_max, p, q);
                let mut acc = Dd::ZERO;
                let mut abs_sum = 0.0;
                for (k, off, jm) in self.blocks(n_max) {
                    let mut inner = Dd::ZERO;
                    let mut inner_abs = 0.0;
                    for j in 0..=jm {
                        let i = off + j;
                        let term = dm[k + 2 * j] * self.coef_dd[i] * jx[i] * jy[i];
                        inner_abs += term.hi.abs();
                        inner += term;
                    }
                    acc += inner * v[k];
                    abs_sum += inner_abs * rxy.powi(k as i32);
                }
                ((acc * self.global).to_f64(), abs_sum * self.global, 1e-31)
            }
            _ => {
                let (p, q) = self.pair_invariants(x, y);
                let v = zonal_recurrence(d, n_max, p, q);
                let mut acc = 0.0;
                let mut abs_sum = 0.0;
                for (k, off, jm) in self.blocks(n_max) {
                    let mut inner = 0.0;
                    let mut inner_abs = 0.0;
                    for j in 0..=jm {
                        let i = off + j;
                        let term = damp.f[k + 2 * j] * self.coef[i] * x.jac[i] * y.jac[i];
                        inner += term;
                        inner_abs += term.abs();
                    }
                    acc += inner * v[k];
                    abs_sum += inner_abs * rxy.powi(k as i32);
                }
                (self.global * acc, abs_sum * self.global, f64::EPSILON)
            }
        };
        let terms = ((n_max + 1) * (n_max + 2)) as f64;
        let rounding = unit * terms * abs_sum + f64::EPSILON * value.abs();
        let tail_bound = self.tail_bound(damp.t, x, y);
        if tail_bound > self.trunc.tail_tol {
            return Err(Error::TailTooLarge {
                bound: tail_bound,
                tol: self.trunc.tail_tol,
            });
        }
        Ok(KernelValue {
            value,
            tail_bound,
            rounding,
        })
    }

    /// Cauchy-Schwarz bound `sum_{n > n_max} e^{-t lambda_n} sqrt(K_n(x,x) K_n(y,y))`,
    /// with the reproducing-kernel diagonals `K_n` computed exactly up to
    /// `n_max + 40` and bounded by `dim_n sup|Q|^2` beyond.
    pub fn tail_bound(&self, t: f64, x: &KernelPoint, y: &KernelPoint) -> f64 {
        let n_max = self.trunc.n_max;
        let mut acc = 0.0;
        for (i, (kx, ky)) in x.diag.iter().zip(&y.diag).enumerate() {
            let n = n_max + 1 + i;
            acc += (-t * eigenvalue(&self.params, n)).exp() * (kx * ky).sqrt();
        }
        for &(lam, ln_b) in &self.far {
            acc += (ln_b - t * lam).exp();
        }
        acc
    }

    /// `h_t(x, y)` in `f64` with tail bound.
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> Result<KernelValue> {
        let damp = self.damping(t, false)?;
        self.eval_prepared(&damp, &self.prepare(x, false)?, &self.prepare(y, false)?)
    }

    /// `h_t(x, y)` in double-double arithmetic with tail bound.
    pub fn eval_precise(&self, t: f64, x: &[f64], y: &[f64]) -> Result<KernelValue> {
        let damp = self.damping(t, true)?;
        self.eval_prepared(&damp, &self.prepare(x, true)?, &self.prepare(y, true)?)
    }
}

/// `h_t(x, y)` truncated at `trunc.n_max`, summed in double-double arithmetic.
pub fn heat_kernel(
    params: &ModelParams,
    trunc: Truncation,
    t: f64,
    x: &BallPoint,
    y: &BallPoint,
) -> Result<KernelValue> {
    HeatKernel::new(params, trunc)?.eval_precise(t, x.coords(), y.coords())
}

/// `int_B h_t(x, y) dW_mu(y)` by quadrature.
pub fn kernel_mass(kernel: &HeatKernel, t: f64, x: &[f64], rule: &QuadratureRule) -> Result<f64> {
    let damp = kernel.damping(t, false)?;
    let px = kernel.prepare(x, false)?;
    let mut acc = crate::quadrature::KahanSum::default();
    for i in 0..rule.len() {
        let py = kernel.prepare(rule.node(i), false)?;
        acc.add(rule.weight(i) * kernel.value(&damp, &px, &py));
    }
    Ok(acc.sum())
}

/// [`kernel_mass`] for every `x` in `xs` and `t` in `times`, indexed
/// `[x][t]`; each node is tabulated once.
pub fn kernel_masses(kernel: &HeatKernel, times: &[f64], xs: &[Vec<f64>], rule: &QuadratureRule) -> Result<Vec<Vec<f64>>> {
    let damps = times.iter().map(|&t| kernel.damping(t, false)).collect::<Result<Vec<_>>>()?;
    let pxs = xs.iter().map(|x| kernel.prepare(x, false)).collect::<Result<Vec<_>>>()?;
    let mut acc = vec![vec![crate::quadrature::KahanSum::default(); times.len()]; xs.len()];
    for i in 0..rule.len() {
        let pz = kernel.prepare(rule.node(i), false)?;
        let w = rule.weight(i);
        for (px, row) in pxs.iter().zip(acc.iter_mut()) {
            for (dm, a) in damps.iter().zip(row.iter_mut()) {
                a.add(w * kernel.value(dm, px, &pz));
            }
        }
    }
    Ok(acc.into_iter().map(|r| r.into_iter().map(|a| a.sum()).collect()).collect())
}

/// [`chapman_kolmogorov`] for every `(s, t, x, y)`; each node is tabulated once.
pub fn chapman_kolmogorov_batch(
    kernel: &HeatKernel,
    cases: &[(f64, f64, Vec<f64>, Vec<f64>)],
    rule: &QuadratureRule,
) -> Result<Vec<(f64, f64)>> {
    let prepared = cases
        .iter()
        .map(|(s, t, x, y)| {
            Ok((
                kernel.damping(*s, false)?,
                kernel.damping(*t, false)?,
                kernel.damping(s + t, false)?,
                kernel.prepare(x, false)?,
                kernel.prepare(y, false)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![crate::quadrature::KahanSum::default(); cases.len()];
    for i in 0..rule.len() {
        let pz = kernel.prepare(rule.node(i), false)?;
        let w = rule.weight(i);
        for ((ds, dt, _, px, py), a) in prepared.iter().zip(acc.iter_mut()) {
            a.add(w * kernel.value(ds, px, &pz) * kernel.value(dt, &pz, py));
        }
    }
    Ok(prepared
        .iter()
        .zip(acc)
        .map(|((_, _, dst, px, py), a)| (a.sum(), kernel.value(dst, px, py)))
        .collect())
}

/// `(int_B h_s(x, z) h_t(z, y) dW_mu(z), h_{s+t}(x, y))`.
pub fn chapman_kolmogorov(
    kernel: &HeatKernel,
    s: f64,
    t: f64,
    x: &[f64],
    y: &[f64],
    rule: &QuadratureRule,
) -> Result<(f64, f64)> {
    let ds = kernel.damping(s, false)?;
    let dt = kernel.damping(t, false)?;
    let dst = kernel.damping(s + t, false)?;
    let px = kernel.prepare(x, false)?;
    let py = kernel.prepare(y, false)?;
    let mut acc = crate::quadrature::KahanSum::default();
    for i in 0..rule.len() {
        let pz = kernel.prepare(rule.node(i), false)?;
        acc.add(rule.weight(i) * kernel.value(&ds, &px, &pz) * kernel.value(&dt, &pz, &py));
    }
    Ok((acc.sum(), kernel.value(&dst, &px, &py)))
}

/// Coefficients `<f, Q_{n,j,kappa}>` for `n <= n_max`, in [`MultiIndex::enumerate`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    d: usize,
    n_max: usize,
    values: Vec<f64>,
}

impl SpectralCoefficients {
    /// Wraps values given in [`MultiIndex::enumerate`] order for `n <= n_max`.
    pub fn from_values(d: usize, n_max: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != BasisLayout::new(d, n_max).len {
            return Err(Error::InvalidParameter(format!("expected {} coefficients, got {}", BasisLayout::new(d, n_max).len, values.len())));
        }
        Ok(Self { d, n_max, values })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: MultiIndex) -> f64 {
        if idx.n > self.n_max {
            return 0.0;
        }
        let layout = BasisLayout::new(self.d, self.n_max);
        self.values[layout.start[idx.n][idx.j] + idx.kappa - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        MultiIndex::enumerate(self.d, self.n_max).into_iter().zip(self.values.iter().copied())
    }

    /// Multiplies each degree-`n` coefficient by `m(n)`.
    pub fn scaled<F: Fn(usize) -> f64>(&self, m: F) -> Self {
        let mut values = self.values.clone();
        let layout = BasisLayout::new(self.d, self.n_max);
        for n in 0..=self.n_max {
            let factor = m(n);
            let lo = layout.start[n][0];
            let hi = layout.start.get(n + 1).map_or(layout.len, |r| r[0]);
            values[lo..hi].iter_mut().for_each(|v| *v *= factor);
        }
        Self {
            d: self.d,
            n_max: self.n_max,
            values,
        }
    }
}

/// Default order of the Gauss-Laguerre rule in the subordination integral.
pub const POISSON_LAGUERRE_ORDER: usize = 400;

/// Coefficients below this magnitude are set to zero by `analyze`.
pub const FLUSH_THRESHOLD: f64 = 1e-14;

/// Analysis and synthesis on a product ball rule, factored into a radial and
/// an angular stage.
#[derive(Debug, Clone)]
pub struct SpectralTransform {
    params: ModelParams,
    n_max: usize,
    rule: Arc<QuadratureRule>,
    layout: BasisLayout,
    n_r: usize,
    n_a: usize,
    radial_w: Vec<f64>,
    angular_w: Vec<f64>,
    /// `C^{-1} P_j(s_r) r^k`, indexed `[r][(k, j)]`.
    radial: Vec<f64>,
    rad_off: Vec<usize>,
    rad_len: usize,
    /// `S_{k,kappa}(direction)`, indexed `[a][(k, kappa)]`.
    angular: Vec<f64>,
    harm_off: Vec<usize>,
    harm_len: usize,
}

impl SpectralTransform {
    pub fn new(params: &ModelParams, n_max: usize, rule: Arc<QuadratureRule>) -> Result<Self> {
        let d = params.d();
        check_dim(d)?;
        if rule.domain() != (Domain::Ball { d, mu: params.mu() }) {
            return Err(Error::InvalidParameter("rule does not match the model parameters".into()));
        }
        if rule.exactness() < 2 * n_max {
            return Err(Error::InsufficientExactness {
                have: rule.exactness(),
                need: 2 * n_max,
            });
        }
        let lay = rule.layout().ok_or(Error::InsufficientExactness {
            have: 0,
            need: 2 * n_max,
        })?;
        let inv_c = inverse_norms(params, n_max)?;
        let mut rad_off = Vec::with_capacity(n_max + 1);
        let mut rad_len = 0;
        for k in 0..=n_max {
            rad_off.push(rad_len);
            rad_len += (n_max - k) / 2 + 1;
        }
        let mut harm_off = Vec::with_capacity(n_max + 1);
        let mut harm_len = 0;
        for k in 0..=n_max {
            harm_off.push(harm_len);
            harm_len += harmonic_dim(d, k) as usize;
        }
        let alpha = params.mu() - 0.5;
        let mut radial = Vec::with_capacity(lay.radial.len() * rad_len);
        let mut buf = Vec::new();
        for &(r, _) in &lay.radial {
            let s = 2.0 * r * r - 1.0;
            for k in 0..=n_max {
                jacobi_values_into((n_max - k) / 2, alpha, k as f64 + d as f64 / 2.0 - 1.0, s, &mut buf);
                let rk = r.powi(k as i32);
                for (j, p) in buf.iter().enumerate() {
                    radial.push(inv_c[k + 2 * j][j] * p * rk);
                }
            }
        }
        let mut angular = Vec::with_capacity(lay.directions.len() * harm_len);
        for dir in &lay.directions {
            for row in solid_harmonics_field(d, n_max, dir)? {
                angular.extend(row);
            }
        }
        Ok(Self {
            params: *params,
            n_max,
            layout: BasisLayout::new(d, n_max),
            n_r: lay.radial.len(),
            n_a: lay.directions.len(),
            radial_w: lay.radial.iter().map(|p| p.1).collect(),
            angular_w: lay.direction_weights.clone(),
            radial,
            rad_off,
            rad_len,
            angular,
            harm_off,
            harm_len,
            rule,
        })
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(f.rule(), &self.rule) || **f.rule() == *self.rule {
            Ok(())
        } else {
            Err(Error::RuleMismatch)
        }
    }

    /// `<f, Q>` by quadrature; tiny coefficients are flushed to zero.
    pub fn analyze(&self, f: &GridFunction) -> Result<SpectralCoefficients> {
        self.check(f)?;
        let fv = f.values();
        let d = self.params.d();
        let mut values = vec![0.0; self.layout.len];
        let mut proj = vec![0.0; self.harm_len];
        for r in 0..self.n_r {
            proj.iter_mut().for_each(|v| *v = 0.0);
            for a in 0..self.n_a {
                let wf = self.angular_w[a] * fv[r * self.n_a + a];
                if wf == 0.0 {
                    continue;
                }
                let row = &self.angular[a * self.harm_len..(a + 1) * self.harm_len];
                proj.iter_mut().zip(row).for_each(|(p, y)| *p += wf * y);
            }
            let rad = &self.radial[r * self.rad_len..(r + 1) * self.rad_len];
            let wr = self.radial_w[r];
            for n in 0..=self.n_max {
                for j in 0..=n / 2 {
                    let k = n - 2 * j;
                    let c = wr * rad[self.rad_off[k] + j];
                    let base = self.layout.start[n][j];
                    let h = harmonic_dim(d, k) as usize;
                    let pk = &proj[self.harm_off[k]..self.harm_off[k] + h];
                    values[base..base + h].iter_mut().zip(pk).for_each(|(v, p)| *v += c * p);
                }
            }
        }
        values.iter_mut().for_each(|v| {
            if v.abs() < FLUSH_THRESHOLD {
                *v = 0.0
            }
        });
        Ok(SpectralCoefficients {
            d,
            n_max: self.n_max,
            values,
        })
    }

    /// `sum c_{n,j,kappa} Q_{n,j,kappa}` at the rule nodes.
    pub fn synthesize(&self, coeffs: &SpectralCoefficients) -> Result<GridFunction> {
        let d = self.params.d();
        if coeffs.d != d || coeffs.n_max != self.n_max {
            return Err(Error::InvalidParameter("coefficient layout does not match the transform".into()));
        }
        let mut out = vec![0.0; self.n_r * self.n_a];
        let mut g = vec![0.0; self.harm_len];
        for r in 0..self.n_r {
            g.iter_mut().for_each(|v| *v = 0.0);
            let rad = &self.radial[r * self.rad_len..(r + 1) * self.rad_len];
            for n in 0..=self.n_max {
                for j in 0..=n / 2 {
                    let k = n - 2 * j;
                    let c = rad[self.rad_off[k] + j];
                    let base = self.layout.start[n][j];
                    let h = harmonic_dim(d, k) as usize;
                    g[self.harm_off[k]..self.harm_off[k] + h]
                        .iter_mut()
                        .zip(&coeffs.values[base..base + h])
                        .for_each(|(gv, cv)| *gv += c * cv);
                }
            }
            for a in 0..self.n_a {
                let row = &self.angular[a * self.harm_len..(a + 1) * self.harm_len];
                out[r * self.n_a + a] = row.iter().zip(&g).map(|(y, gv)| y * gv).sum();
            }
        }
        GridFunction::new(self.rule.clone(), out)
    }

    /// Applies the spectral multiplier `m(n)` to `f`.
    pub fn apply_multiplier<F: Fn(usize) -> f64>(&self, f: &GridFunction, m: F) -> Result<GridFunction> {
        self.synthesize(&self.analyze(f)?.scaled(m))
    }

    /// `H_t f`; no lower limit on `t` since no kernel series is summed.
    pub fn heat(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        let p = self.params;
        self.apply_multiplier(f, |n| (-t * eigenvalue(&p, n)).exp())
    }

    /// `P_t f` by damping with `e^{-t sqrt(lambda_n)}`.
    pub fn poisson(&self, t: f64, f: &GridFunction) -> Result<GridFunction> {
        let p = self.params;
        self.apply_multiplier(f, |n| (-t * eigenvalue(&p, n).sqrt()).exp())
    }

    /// `P_t f = int_0^inf H_{t^2/(4u)} f e^{-u} du / sqrt(pi u)` with an
    /// `order`-point generalized Gauss-Laguerre rule (`alpha = -1/2`).
    ///
    /// The rule resolves `e^{-a/u}` only for `a = t^2 lambda / 4` well above
    /// its smallest node; with 400 points the error is about `1e-7` at `a = 1/2`.
    pub fn poisson_subordinated(&self, t: f64, f: &GridFunction, order: usize) -> Result<GridFunction> {
        let gl = gauss_laguerre(order, -0.5)?;
        let p = self.params;
        let coeffs = self.analyze(f)?;
        let c = 1.0 / PI.sqrt();
        let damped = coeffs.scaled(|n| {
            let lam = eigenvalue(&p, n);
            gl.iter().map(|(u, w)| w * c * (-t * t * lam / (4.0 * u)).exp()).sum()
        });
        self.synthesize(&damped)
    }

    /// Discrete Gram matrix of the basis on the rule.
    pub fn gram_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.params.d();
        let h = self.harm_len;
        let mut ang = vec![0.0; h * h];
        for a in 0..self.n_a {
            let row = &self.angular[a * h..(a + 1) * h];
            let w = self.angular_w[a];
            for i in 0..h {
                let wi = w * row[i];
                for j in 0..h {
                    ang[i * h + j] += wi * row[j];
                }
            }
        }
        let m = self.rad_len;
        let mut rad = vec![0.0; m * m];
        for r in 0..self.n_r {
            let row = &self.radial[r * m..(r + 1) * m];
            let w = self.radial_w[r];
            for i in 0..m {
                for j in 0..m {
                    rad[i * m + j] += w * row[i] * row[j];
                }
            }
        }
        let idx = MultiIndex::enumerate(d, self.n_max);
        let key = |q: &MultiIndex| {
            let k = q.k();
            (self.rad_off[k] + q.j, self.harm_off[k] + q.kappa - 1)
        };
        idx.iter()
            .map(|a| {
                let (ra, ha) = key(a);
                idx.iter()
                    .map(|b| {
                        let (rb, hb) = key(b);
                        rad[ra * m + rb] * ang[ha * h + hb]
                    })
                    .collect()
            })
            .collect()
    }
}

/// `max |G - I|` over the Gram matrix.
pub fn gram_deviation(gram: &[Vec<f64>]) -> f64 {
    gram.iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (v - if i == j { 1.0 } else { 0.0 }).abs()))
        .fold(0.0, f64::max)
}

/// Coefficients of `f` against every `Q` with `n <= n_max`.
pub fn analyze(params: &ModelParams, n_max: usize, f: &GridFunction) -> Result<SpectralCoefficients> {
    SpectralTransform::new(params, n_max, f.rule().clone())?.analyze(f)
}

/// `H_t f` through the spectral route, truncated at `trunc.n_max`.
pub fn apply_heat(params: &ModelParams, trunc: Truncation, t: f64, f: &GridFunction) -> Result<GridFunction> {
    if !(t >= trunc.t_min) {
        return Err(Error::TimeTooSmall { t, t_min: trunc.t_min });
    }
    SpectralTransform::new(params, trunc.n_max, f.rule().clone())?.heat(t, f)
}

/// `P_t f` through the spectral route.
pub fn apply_poisson(params: &ModelParams, trunc: Truncation, t: f64, f: &GridFunction) -> Result<GridFunction> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("Poisson time must be positive, got {t}")));
    }
    SpectralTransform::new(params, trunc.n_max, f.rule().clone())?.poisson(t, f)
}

/// `H_t f(x) = int h_t(x, y) f(y) dW_mu(y)` at every node, by quadrature.
pub fn apply_heat_kernel_route(kernel: &HeatKernel, t: f64, f: &GridFunction) -> Result<GridFunction> {
    let rule = f.rule();
    if rule.exactness() < 2 * kernel.truncation().n_max {
        return Err(Error::InsufficientExactness {
            have: rule.exactness(),
            need: 2 * kernel.truncation().n_max,
        });
    }
    let damp = kernel.damping(t, false)?;
    let pts: Vec<KernelPoint> = rule.nodes().map(|x| kernel.prepare(x, false)).collect::<Result<_>>()?;
    let fv = f.values();
    let out = crate::par::map_indexed(pts.len(), |i| {
        let mut acc = crate::quadrature::KahanSum::default();
        for (k, py) in pts.iter().enumerate() {
            acc.add(rule.weight(k) * kernel.value(&damp, &pts[i], py) * fv[k]);
        }
        acc.sum()
    });
    GridFunction::new(rule.clone(), out)
}
