//! Radial derivative, spherical gradient, the energy density `Gamma`, the
//! Dirichlet form and Poincare quotients on balls and hemisphere caps.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{region_rule, BallPoint, BallRegion, ModelParams, RegionRule, SpherePoint, MIN_INTERIOR_NODES};
use crate::jacobi::MultiIndex;
use crate::quadrature::{compensated_sum, gauss_jacobi, sphere_rule, KahanSum, QuadratureRule};
use crate::scalar::Jet;
use crate::spectral::basis_eval_field;

/// Central-difference step of the registration check.
pub const FD_STEP: f64 = 1e-5;
/// Tolerance of the registration check, relative to `max(1, |grad|)`.
pub const FD_TOL: f64 = 1e-6;
/// Points sampled by the registration check.
pub const FD_POINTS: usize = 100;
/// Shrink factor of the inner cap in the hemisphere quotient.
pub const TAU: f64 = 1.0 / (3.0 * PI);
/// Pointwise grids skip `|x|` below this.
pub const ORIGIN_EXCLUSION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    TrigPolynomial,
    BasisElement,
    Intrinsic,
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::TrigPolynomial => "trig-polynomial",
            Family::BasisElement => "basis-element",
            Family::Intrinsic => "intrinsic",
            Family::Custom => "custom",
        };
        f.write_str(s)
    }
}

type Evaluator = dyn Fn(&[f64], &mut [f64]) -> f64 + Send + Sync;

/// A `C^1` function on the ball with an analytic gradient.
///
/// The evaluator returns `f(x)` and writes `grad f(x)` into its second
/// argument.
#[derive(Clone)]
pub struct SmoothTestFunction {
    dim: usize,
    family: Family,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for SmoothTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothTestFunction")
            .field("dim", &self.dim)
            .field("family", &self.family)
            .finish()
    }
}

impl SmoothTestFunction {
    /// Wraps `eval` after checking its gradient against central differences.
    pub fn register<F>(dim: usize, family: Family, eval: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    {
        let f = SmoothTestFunction {
            dim,
            family,
            eval: Arc::new(eval),
        };
        let err = f.gradient_check(FD_POINTS, 0x6772_6164)?;
        if err > FD_TOL {
            return Err(Error::GradientMismatch {
                family: family.to_string(),
                err,
            });
        }
        Ok(f)
    }

    /// Largest relative deviation between the gradient and extrapolated central differences.
    pub fn gradient_check(&self, points: usize, seed: u64) -> Result<f64> {
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut g = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        for _ in 0..points {
            let x = random_point(&mut rng, d, 0.9);
            (self.eval)(&x, &mut g);
            for i in 0..d {
                let mut central = |h: f64| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    ((self.eval)(&xp, &mut scratch) - (self.eval)(&xm, &mut scratch)) / (2.0 * h)
                };
                // Richardson step: cancels the h^2 term
                let fd = (4.0 * central(FD_STEP / 2.0) - central(FD_STEP)) / 3.0;
                worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
            }
        }
        if !worst.is_finite() {
            return Err(Error::GradientMismatch {
                family: self.family.to_string(),
                err: worst,
            });
        }
        Ok(worst)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        (self.eval)(x, &mut g)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        (self.eval)(x, &mut g);
        g
    }

    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.eval)(x, grad)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        SmoothTestFunction {
            dim,
            family: Family::Custom,
            eval: Arc::new(move |_x: &[f64], g: &mut [f64]| {
                g.iter_mut().for_each(|v| *v = 0.0);
                c
            }),
        }
    }

    pub fn trig_polynomial(poly: TrigPolynomial) -> Result<Self> {
        let dim = poly.dim;
        Self::register(dim, Family::TrigPolynomial, move |x, g| poly.eval(x, g))
    }

    /// `Q_{n,j,kappa}`, differentiated in forward mode.
    pub fn basis_element(params: &ModelParams, idx: MultiIndex) -> Result<Self> {
        let p = *params;
        let d = params.d();
        basis_eval_field(&p, idx, &vec![Jet::from(0.5); d])?;
        Self::register(d, Family::BasisElement, move |x, g| {
            let q = basis_eval_field(&p, idx, &Jet::vars(x)).expect("index validated at registration");
            g.copy_from_slice(&q.g[..x.len()]);
            q.v
        })
    }

    /// `f_{delta,eps}(x) = arccos((<x,y> + sqrt((1+eps)^2-|x|^2) sqrt((1+eps)^2-|y|^2)) / (1+delta)^2)`.
    pub fn intrinsic(y: &BallPoint, delta: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < delta) {
            return Err(Error::InvalidParameter(format!(
                "intrinsic test function needs 0 < eps < delta, got eps = {eps}, delta = {delta}"
            )));
        }
        let y = y.coords().to_vec();
        let d = y.len();
        Self::register(d, Family::Intrinsic, move |x, g| {
            let f = intrinsic_field(&Jet::vars(x), &y, delta, eps);
            g.copy_from_slice(&f.g[..x.len()]);
            f.v
        })
    }
}

fn intrinsic_field(x: &[Jet], y: &[f64], delta: f64, eps: f64) -> Jet {
    let e2 = (1.0 + eps) * (1.0 + eps);
    let mut dot = Jet::from(0.0);
    let mut nx = Jet::from(0.0);
    for (a, b) in x.iter().zip(y) {
        dot = dot + *a * Jet::from(*b);
        nx = nx + *a * *a;
    }
    let ny: f64 = y.iter().map(|v| v * v).sum();
    let num = dot + (Jet::from(e2) - nx).sqrt() * Jet::from((e2 - ny).sqrt());
    (num / Jet::from((1.0 + delta) * (1.0 + delta))).acos()
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..radius)).collect();
        if c.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            return c;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    pub freq: Vec<f64>,
    pub cos: f64,
    pub sin: f64,
}

/// `sum_m c_m cos(<w_m, x>) + s_m sin(<w_m, x>)` with integer frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    dim: usize,
    terms: Vec<TrigTerm>,
}

impl TrigPolynomial {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        if terms.iter().any(|t| t.freq.len() != dim) {
            return Err(Error::InvalidParameter("frequency dimension mismatch".into()));
        }
        Ok(Self { dim, terms })
    }

    /// `terms` random terms with `0 < |w|_1 <= degree` and coefficients in `[-1, 1]`.
    pub fn random(dim: usize, degree: usize, terms: usize, rng: &mut ChaCha8Rng) -> Self {
        let m = degree as i64;
        let terms = (0..terms)
            .map(|_| {
                let freq = loop {
                    let w: Vec<i64> = (0..dim).map(|_| rng.gen_range(-m..=m)).collect();
                    let l1: i64 = w.iter().map(|v| v.abs()).sum();
                    if l1 > 0 && l1 <= m {
                        break w.into_iter().map(|v| v as f64).collect();
                    }
                };
                TrigTerm {
                    freq,
                    cos: rng.gen_range(-1.0..1.0),
                    sin: rng.gen_range(-1.0..1.0),
                }
            })
            .collect();
        Self { dim, terms }
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    fn eval(&self, x: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut acc = 0.0;
        for t in &self.terms {
            let phase: f64 = t.freq.iter().zip(x).map(|(w, v)| w * v).sum();
            let (s, c) = phase.sin_cos();
            acc += t.cos * c + t.sin * s;
            let dphase = t.sin * c - t.cos * s;
            for (gi, w) in g.iter_mut().zip(&t.freq) {
                *gi += dphase * w;
            }
        }
        acc
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzero(x: &BallPoint, what: &'static str) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::AtOrigin(what));
    }
    Ok(r)
}

/// `<x/|x|, grad f(x)>`.
pub fn radial_derivative(f: &SmoothTestFunction, x: &BallPoint) -> Result<f64> {
    let r = nonzero(x, "the radial derivative")?;
    Ok(dot(x.coords(), &f.gradient(x.coords())) / r)
}

/// `grad_0 f(x) = |x| grad f(x) - x d_r f(x)`, orthogonal to `x`.
pub fn spherical_gradient(f: &SmoothTestFunction, x: &BallPoint) -> Result<Vec<f64>> {
    let r = nonzero(x, "the spherical gradient")?;
    let g = f.gradient(x.coords());
    let dr = dot(x.coords(), &g) / r;
    Ok(g.iter().zip(x.coords()).map(|(gi, xi)| r * gi - xi * dr).collect())
}

/// `Gamma(f, g)(x) = (1-|x|^2) d_r f d_r g + |x|^{-2} <grad_0 f, grad_0 g>`.
pub fn carre_du_champ(f: &SmoothTestFunction, g: &SmoothTestFunction, x: &BallPoint) -> Result<f64> {
    let r = nonzero(x, "the carre du champ")?;
    let (fr, gr) = (radial_derivative(f, x)?, radial_derivative(g, x)?);
    let (f0, g0) = (spherical_gradient(f, x)?, spherical_gradient(g, x)?);
    Ok((1.0 - x.norm_sq()) * fr * gr + dot(&f0, &g0) / (r * r))
}

/// `Gamma(f, g)` from the gradients as `<grad f, grad g> - <x, grad f><x, grad g>`;
/// the same quantity, free of the removable `1/|x|^2`.
pub fn energy_density(x: &[f64], grad_f: &[f64], grad_g: &[f64]) -> f64 {
    dot(grad_f, grad_g) - dot(x, grad_f) * dot(x, grad_g)
}

/// Tangential gradient of `f~(xi) = f(xi')` on the sphere at the lifted point.
pub fn hemisphere_gradient(f: &SmoothTestFunction, x: &BallPoint) -> Vec<f64> {
    let mut g = f.gradient(x.coords());
    g.push(0.0);
    let mut xi = x.coords().to_vec();
    xi.push(x.height());
    let c = dot(&g, &xi);
    g.iter().zip(&xi).map(|(gi, p)| gi - c * p).collect()
}

/// `|Gamma(f,f)(x) - |grad~_0 f~(lift x)|^2|`, relative to `max(Gamma, 1e-300)`.
pub fn transfer_error(f: &SmoothTestFunction, x: &BallPoint) -> Result<f64> {
    let gamma = carre_du_champ(f, f, x)?;
    let t: f64 = hemisphere_gradient(f, x).iter().map(|v| v * v).sum();
    Ok((gamma - t).abs() / gamma.abs().max(1e-300))
}

/// `int_B Gamma(f, g) dW_mu` on a ball rule.
pub fn dirichlet_form(f: &SmoothTestFunction, g: &SmoothTestFunction, rule: &QuadratureRule) -> f64 {
    let d = f.dim();
    let mut gf = vec![0.0; d];
    let mut gg = vec![0.0; d];
    let mut acc = KahanSum::default();
    for i in 0..rule.len() {
        let x = rule.node(i);
        f.value_and_gradient(x, &mut gf);
        g.value_and_gradient(x, &mut gg);
        acc.add(rule.weight(i) * energy_density(x, &gf, &gg));
    }
    acc.sum()
}

/// Both sides of `int_B d_r f phi dx = -int_B f (d_r phi + (d-1) phi / |x|) dx`
/// for a polynomial bump supported in `0.1 < |x| < 0.9`.
pub fn integration_by_parts(f: &SmoothTestFunction, order: usize) -> Result<(f64, f64)> {
    let d = f.dim();
    let (lo, hi) = (0.1, 0.9);
    let bump = |r: f64| ((r - lo) * (hi - r)).powi(3);
    let dbump = |r: f64| 3.0 * ((r - lo) * (hi - r)).powi(2) * (lo + hi - 2.0 * r);
    let radial = gauss_jacobi(order, 0.0, 0.0)?;
    let sph = sphere_rule(d, 2 * order)?;
    let half = (hi - lo) / 2.0;
    let mut lhs = KahanSum::default();
    let mut rhs = KahanSum::default();
    let mut g = vec![0.0; d];
    for &(s, wr) in &radial {
        let r = lo + half * (1.0 + s);
        let jac = wr * half * r.powi(d as i32 - 1);
        for a in 0..sph.len() {
            let u = sph.node(a);
            let x: Vec<f64> = u.iter().map(|v| r * v).collect();
            let w = jac * sph.weight(a);
            let fv = f.value_and_gradient(&x, &mut g);
            let fr = dot(u, &g);
            let ang = 1.0 + 0.5 * x[0];
            let phi = bump(r) * ang;
            let phi_r = dbump(r) * ang + bump(r) * 0.5 * u[0];
            lhs.add(w * fr * phi);
            rhs.add(-w * fv * (phi_r + (d as f64 - 1.0) * phi / r));
        }
    }
    Ok((lhs.sum(), rhs.sum()))
}

/// A deterministic polar grid of about `count` points with `0.01 <= |x| <= 1`.
pub fn punctured_grid(d: usize, count: usize) -> Vec<Vec<f64>> {
    let n_r = ((count as f64).powf(1.0 / d as f64).ceil() as usize).max(2);
    let n_a = (count / n_r).max(1);
    let dirs = crate::spectral::direction_grid(d, n_a);
    let mut out = Vec::with_capacity(n_r * dirs.len());
    for i in 0..n_r {
        let r = ORIGIN_EXCLUSION + (1.0 - ORIGIN_EXCLUSION) * i as f64 / (n_r - 1) as f64;
        for u in &dirs {
            out.push(u.iter().map(|v| r * v).collect());
        }
    }
    out
}

/// A Poincare quotient `lhs / (r^2 rhs)` with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareValue {
    pub ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub nodes: usize,
}

/// `int |f - f_avg|^2 dW_mu` over the rule, centred at `shift` first so that
/// constants give exactly zero.
fn variance(f: &SmoothTestFunction, rule: &RegionRule, shift: f64) -> f64 {
    let vals: Vec<f64> = (0..rule.len()).map(|i| f.value(rule.node(i)) - shift).collect();
    let w = rule.weights();
    let mass = compensated_sum(w.iter().copied());
    let mean = compensated_sum(vals.iter().zip(w).map(|(v, w)| v * w)) / mass;
    compensated_sum(vals.iter().zip(w).map(|(v, w)| w * (v - mean) * (v - mean)))
}

fn energy(f: &SmoothTestFunction, rule: &RegionRule) -> f64 {
    let mut g = vec![0.0; f.dim()];
    compensated_sum((0..rule.len()).map(|i| {
        let x = rule.node(i);
        f.value_and_gradient(x, &mut g);
        rule.weights()[i] * energy_density(x, &g, &g)
    }))
}

/// [`variance`] and [`energy`] on one rule from a single pass over the nodes.
fn variance_and_energy(f: &SmoothTestFunction, rule: &RegionRule, shift: f64) -> (f64, f64) {
    let mut g = vec![0.0; f.dim()];
    let w = rule.weights();
    let mut vals = Vec::with_capacity(rule.len());
    let mut dens = Vec::with_capacity(rule.len());
    for i in 0..rule.len() {
        let x = rule.node(i);
        vals.push(f.value_and_gradient(x, &mut g) - shift);
        dens.push(w[i] * energy_density(x, &g, &g));
    }
    let mass = compensated_sum(w.iter().copied());
    let mean = compensated_sum(vals.iter().zip(w).map(|(v, w)| v * w)) / mass;
    let var = compensated_sum(vals.iter().zip(w).map(|(v, w)| w * (v - mean) * (v - mean)));
    (var, compensated_sum(dens))
}

fn quotient(lhs: f64, rhs: f64, r: f64, nodes: usize) -> Result<PoincareValue> {
    if rhs <= 0.0 {
        if lhs <= 0.0 {
            return Ok(PoincareValue { ratio: 0.0, lhs, rhs, nodes });
        }
        return Err(Error::DegenerateEnergy { lhs });
    }
    Ok(PoincareValue {
        ratio: lhs / (r * r * rhs),
        lhs,
        rhs,
        nodes,
    })
}

fn check_nodes(rule: &RegionRule) -> Result<()> {
    if rule.len() < MIN_INTERIOR_NODES {
        return Err(Error::InvalidParameter(format!(
            "region rule has {} nodes, need {MIN_INTERIOR_NODES}",
            rule.len()
        )));
    }
    Ok(())
}

/// `int_{B(z,r)} |f - f_B|^2 dW_mu / (r^2 int_{B(z,r)} Gamma(f,f) dW_mu)`
/// with `rule` covering the region.
pub fn poincare_ratio(f: &SmoothTestFunction, region: &BallRegion, rule: &RegionRule) -> Result<PoincareValue> {
    check_nodes(rule)?;
    let shift = f.value(region.center.coords());
    let (var, en) = variance_and_energy(f, rule, shift);
    quotient(var, en, region.radius, rule.len())
}

/// Variance on `c+(xi, tau r)` over `r^2` times energy on `c+(xi, r)`,
/// with `tau = 1/(3 pi)`; both caps are integrated on the ball.
pub fn hemisphere_poincare_ratio(
    params: &ModelParams,
    f: &SmoothTestFunction,
    xi: &SpherePoint,
    r: f64,
    order: usize,
) -> Result<PoincareValue> {
    if !(r > 0.0 && r <= 1.0 / 6.0) {
        return Err(Error::InvalidParameter(format!("cap radius must lie in (0, 1/6], got {r}")));
    }
    let z = crate::geometry::project(xi)?;
    let inner = region_rule(params, &z, TAU * r, order)?;
    let outer = region_rule(params, &z, r, order)?;
    hemisphere_quotient(f, &z, r, &inner, &outer)
}

/// The hemisphere quotient on prebuilt inner and outer rules.
pub fn hemisphere_quotient(
    f: &SmoothTestFunction,
    center: &BallPoint,
    r: f64,
    inner: &RegionRule,
    outer: &RegionRule,
) -> Result<PoincareValue> {
    check_nodes(inner)?;
    let shift = f.value(center.coords());
    quotient(variance(f, inner, shift), energy(f, outer), r, inner.len())
}

/// `(mean-centred variance, W(c)^{-1} int int |f(x) - f(y)|^2)` over one rule,
/// the second by the explicit double sum.
pub fn double_form_check(f: &SmoothTestFunction, rule: &RegionRule) -> (f64, f64) {
    let shift = f.value(rule.node(0));
    let lhs = variance(f, rule, shift);
    let vals: Vec<f64> = (0..rule.len()).map(|i| f.value(rule.node(i))).collect();
    let w = rule.weights();
    let rows = crate::par::map_indexed(vals.len(), |i| {
        compensated_sum(vals.iter().zip(w).map(|(v, wj)| wj * (vals[i] - v).powi(2))) * w[i]
    });
    (lhs, compensated_sum(rows) / rule.volume())
}

/// Regions with radii in `[r_min, r_max]`: a third centred within `0.01`
/// of the boundary sphere, a third with `|z| = 1`, a third uniform in `B`.
pub fn sample_regions(d: usize, count: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<BallRegion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let dir = random_direction(&mut rng, d);
            let rho: f64 = match i % 3 {
                0 => 1.0 - rng.gen_range(0.0..0.01),
                1 => 1.0,
                _ => rng.gen::<f64>().powf(1.0 / d as f64),
            };
            let r = r_min * (r_max / r_min).powf(rng.gen::<f64>());
            let center = BallPoint::new(dir.iter().map(|v| rho * v).collect()).expect("inside the ball");
            BallRegion { center, radius: r }
        })
        .collect()
}

pub(crate) fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Cap centers on the upper hemisphere with radii in `[r_min, 1/6]`: even
/// indices are boundary caps (`xi_{d+1} <= 2 tau r`), odd ones interior.
pub fn sample_caps(d: usize, count: usize, r_min: f64, seed: u64) -> Vec<(SpherePoint, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_max = 1.0 / 6.0;
    (0..count)
        .map(|i| {
            let r = r_min * (r_max / r_min).powf(rng.gen::<f64>());
            let h = if i % 2 == 0 {
                rng.gen_range(0.0..=2.0 * TAU * r)
            } else {
                rng.gen_range(2.0 * TAU * r..1.0)
            };
            let dir = random_direction(&mut rng, d);
            let s = (1.0 - h * h).sqrt();
            let mut c: Vec<f64> = dir.iter().map(|v| s * v).collect();
            c.push(h);
            let xi = SpherePoint::new(c, crate::geometry::Chart::UpperHemisphere).expect("unit vector");
            (xi, r)
        })
        .collect()
}

/// Worst quotient over a family of functions on one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub center: Vec<f64>,
    pub radius: f64,
    pub ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareScan {
    pub rows: Vec<ScanRow>,
    pub max_ratio: f64,
}

fn worst(center: Vec<f64>, radius: f64, vals: Vec<PoincareValue>) -> ScanRow {
    let best = vals
        .into_iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .unwrap_or(PoincareValue { ratio: 0.0, lhs: 0.0, rhs: 0.0, nodes: 0 });
    ScanRow {
        center,
        radius,
        ratio: best.ratio,
        lhs: best.lhs,
        rhs: best.rhs,
        nodes: best.nodes,
    }
}

fn finish(rows: Vec<ScanRow>) -> PoincareScan {
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    PoincareScan { rows, max_ratio }
}

/// Ball quotients for every function on every region, parallel over regions.
pub fn poincare_scan(
    params: &ModelParams,
    fs: &[SmoothTestFunction],
    regions: &[BallRegion],
    order: usize,
) -> Result<PoincareScan> {
    let rows = crate::par::map_indexed(regions.len(), |i| -> Result<ScanRow> {
        let reg = &regions[i];
        let rule = region_rule(params, &reg.center, reg.radius, order)?;
        let vals = fs.iter().map(|f| poincare_ratio(f, reg, &rule)).collect::<Result<Vec<_>>>()?;
        Ok(worst(reg.center.coords().to_vec(), reg.radius, vals))
    });
    Ok(finish(rows.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Hemisphere quotients for every function on every cap.
pub fn hemisphere_scan(
    params: &ModelParams,
    fs: &[SmoothTestFunction],
    caps: &[(SpherePoint, f64)],
    order: usize,
) -> Result<PoincareScan> {
    let rows = crate::par::map_indexed(caps.len(), |i| -> Result<ScanRow> {
        let (xi, r) = &caps[i];
        let z = crate::geometry::project(xi)?;
        let inner = region_rule(params, &z, TAU * r, order)?;
        let outer = region_rule(params, &z, *r, order)?;
        let vals = fs
            .iter()
            .map(|f| hemisphere_quotient(f, &z, *r, &inner, &outer))
            .collect::<Result<Vec<_>>>()?;
        Ok(worst(xi.coords().to_vec(), *r, vals))
    });
    Ok(finish(rows.into_iter().collect::<Result<Vec<_>>>()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist_ball;
    use crate::jacobi::eigenvalue;
    use crate::quadrature::ball_rule_for_degree;

    fn p(d: usize, mu: f64) -> ModelParams {
        ModelParams::new(d, mu).unwrap()
    }

    fn custom<F: Fn(&[Jet]) -> Jet + Send + Sync + 'static>(d: usize, f: F) -> SmoothTestFunction {
        SmoothTestFunction::register(d, Family::Custom, move |x, g| {
            let v = f(&Jet::vars(x));
            g.copy_from_slice(&v.g[..x.len()]);
            v.v
        })
        .unwrap()
    }

    fn bp(c: &[f64]) -> BallPoint {
        BallPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn registration_rejects_wrong_gradients() {
        let bad = SmoothTestFunction::register(2, Family::Custom, |x, g| {
            g[0] = 1.0;
            g[1] = 0.0;
            x[0] * x[0]
        });
        assert!(matches!(bad, Err(Error::GradientMismatch { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2, 3] {
            for _ in 0..5 {
                let t = TrigPolynomial::random(d, 8, 4, &mut rng);
                assert!(SmoothTestFunction::trig_polynomial(t).is_ok());
            }
        }
        let params = p(3, 0.5);
        for idx in MultiIndex::enumerate(3, 4) {
            SmoothTestFunction::basis_element(&params, idx).unwrap();
        }
    }

    #[test]
    fn radial_and_spherical_examples() {
        let sq = custom(2, |x| x[0] * x[0] + x[1] * x[1]);
        let x = bp(&[0.3, 0.4]);
        assert!((radial_derivative(&sq, &x).unwrap() - 1.0).abs() < 1e-14);
        let c = SmoothTestFunction::constant(2, 3.0);
        assert_eq!(radial_derivative(&c, &x).unwrap(), 0.0);
        let x1 = custom(2, |x| x[0]);
        assert!((radial_derivative(&x1, &bp(&[0.5, 0.0])).unwrap() - 1.0).abs() < 1e-15);
        let g0 = spherical_gradient(&x1, &bp(&[0.0, 0.5])).unwrap();
        assert!((g0[0] - 0.5).abs() < 1e-15 && g0[1].abs() < 1e-15);
        let rad = custom(3, |x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt().sin());
        let g0 = spherical_gradient(&rad, &bp(&[0.1, -0.3, 0.2])).unwrap();
        assert!(g0.iter().all(|v| v.abs() < 1e-15));
        let o = BallPoint::origin(2);
        assert!(matches!(radial_derivative(&x1, &o), Err(Error::AtOrigin(_))));
        assert!(matches!(spherical_gradient(&x1, &o), Err(Error::AtOrigin(_))));
        assert!(matches!(carre_du_champ(&x1, &x1, &o), Err(Error::AtOrigin(_))));
    }

    #[test]
    fn spherical_gradient_is_tangential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..1000 {
            let d = 2 + i % 2;
            let f = SmoothTestFunction::trig_polynomial(TrigPolynomial::random(d, 6, 3, &mut rng)).unwrap();
            let x = bp(&random_point(&mut rng, d, 1.0));
            if x.norm() == 0.0 {
                continue;
            }
            let g0 = spherical_gradient(&f, &x).unwrap();
            let scale = g0.iter().map(|v| v.abs()).fold(1.0, f64::max);
            assert!(dot(&g0, x.coords()).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn gamma_of_coordinate_function() {
        let x1 = custom(2, |x| x[0]);
        for x in punctured_grid(2, 2000) {
            let x = bp(&x);
            let g = carre_du_champ(&x1, &x1, &x).unwrap();
            let r2 = x.norm_sq();
            let want = (1.0 - r2) * x.coords()[0].powi(2) / r2 + x.coords()[1].powi(2) / r2;
            assert!((g - want).abs() < 1e-14);
            assert!(g >= 0.0 && g <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn transfer_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3] {
            let fs = [
                SmoothTestFunction::trig_polynomial(TrigPolynomial::random(d, 8, 4, &mut rng)).unwrap(),
                SmoothTestFunction::basis_element(&p(d, 0.5), MultiIndex::new(d, 4, 1, 2).unwrap()).unwrap(),
                SmoothTestFunction::intrinsic(&bp(&vec![0.2; d]), 2e-3, 1e-3).unwrap(),
            ];
            for f in &fs {
                for _ in 0..300 {
                    let x = bp(&random_point(&mut rng, d, 1.0));
                    if x.norm() < ORIGIN_EXCLUSION {
                        continue;
                    }
                    let gamma = carre_du_champ(f, f, &x).unwrap();
                    let smooth = energy_density(x.coords(), &f.gradient(x.coords()), &f.gradient(x.coords()));
                    assert!((gamma - smooth).abs() <= 1e-12 * gamma.abs().max(1.0));
                    assert!(transfer_error(f, &x).unwrap() < 1e-8 || gamma < 1e-20);
                }
            }
        }
    }

    #[test]
    fn dirichlet_form_is_diagonal_on_the_basis() {
        for d in [2, 3] {
            for mu in [0.0, 0.5, 1.5] {
                let params = p(d, mu);
                let rule = ball_rule_for_degree(&params, 14).unwrap();
                let idx = MultiIndex::enumerate(d, 4);
                let fs: Vec<_> = idx
                    .iter()
                    .map(|&i| SmoothTestFunction::basis_element(&params, i).unwrap())
                    .collect();
                for (a, fa) in fs.iter().enumerate() {
                    for (b, fb) in fs.iter().enumerate().skip(a) {
                        let want = if a == b { eigenvalue(&params, idx[a].n) } else { 0.0 };
                        let e = dirichlet_form(fa, fb, &rule);
                        assert!((e - want).abs() < 1e-8, "d={d} mu={mu} {:?} {:?} {e}", idx[a], idx[b]);
                    }
                }
                let one = SmoothTestFunction::constant(d, 1.0);
                assert_eq!(dirichlet_form(&one, &fs[3], &rule), 0.0);
            }
        }
    }

    #[test]
    fn integration_by_parts_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2, 3] {
            let f = SmoothTestFunction::trig_polynomial(TrigPolynomial::random(d, 6, 4, &mut rng)).unwrap();
            let (l, r) = integration_by_parts(&f, 24).unwrap();
            assert!((l - r).abs() < 1e-10, "{l} {r}");
        }
    }

    #[test]
    fn intrinsic_function_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(SmoothTestFunction::intrinsic(&bp(&[0.1, 0.1]), 1e-3, 1e-3).is_err());
        for d in [2, 3] {
            let y = bp(&random_point(&mut rng, d, 1.0));
            let (delta, eps) = (2e-3, 1e-3);
            let f = SmoothTestFunction::intrinsic(&y, delta, eps).unwrap();
            let at_y = ((1.0 + eps) * (1.0 + eps) / ((1.0 + delta) * (1.0 + delta))).acos();
            assert!((f.value(y.coords()) - at_y).abs() < 1e-12);
            for x in punctured_grid(d, 3000) {
                let x = bp(&x);
                assert!(carre_du_champ(&f, &f, &x).unwrap() <= 1.0 + 1e-8);
                assert!(f.value(x.coords()) - f.value(y.coords()) <= dist_ball(&x, &y) + 1e-9);
            }
        }
    }

    #[test]
    fn intrinsic_offset_vanishes_as_delta_meets_eps() {
        // f(x) - f(y) - d_B(x, y) is dominated by f(y) = arccos(((1+eps)/(1+delta))^2)
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = bp(&[0.3, -0.2]);
        let tight = SmoothTestFunction::intrinsic(&y, 1e-3 * (1.0 + 1e-8), 1e-3).unwrap();
        let loose = SmoothTestFunction::intrinsic(&y, 2e-3, 1e-3).unwrap();
        let (mut e_tight, mut e_loose) = (0.0f64, 0.0f64);
        for _ in 0..200 {
            let x = bp(&random_point(&mut rng, 2, 1.0));
            let db = dist_ball(&x, &y);
            e_tight = e_tight.max((tight.value(x.coords()) - tight.value(y.coords()) - db).abs());
            e_loose = e_loose.max((loose.value(x.coords()) - loose.value(y.coords()) - db).abs());
        }
        assert!(e_tight < 1e-2);
        assert!(e_loose > 0.05 && e_loose < 0.1, "{e_loose}");
    }

    #[test]
    fn poincare_examples() {
        for d in [2, 3] {
            for mu in [0.0, 0.5, 1.5] {
                let params = p(d, mu);
                let z = BallPoint::axis(d, 0, 0.4).unwrap();
                let reg = BallRegion::new(z.clone(), 0.1).unwrap();
                let rule = region_rule(&params, &z, 0.1, 10).unwrap();
                let c = SmoothTestFunction::constant(d, 2.5);
                assert_eq!(poincare_ratio(&c, &reg, &rule).unwrap().ratio, 0.0);
                let q = SmoothTestFunction::basis_element(&params, MultiIndex::new(d, 1, 0, 1).unwrap()).unwrap();
                let full = BallRegion::new(BallPoint::origin(d), PI).unwrap();
                let rule = region_rule(&params, &full.center, PI, 8).unwrap();
                let v = poincare_ratio(&q, &full, &rule).unwrap();
                let lam = eigenvalue(&params, 1);
                assert!((v.lhs - 1.0).abs() < 1e-12 && (v.rhs - lam).abs() < 1e-12);
                assert!((v.ratio - 1.0 / (PI * PI * lam)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hemisphere_quotient_and_double_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2, 3] {
            let params = p(d, 0.5);
            let c = SmoothTestFunction::constant(d, -1.0);
            let caps = sample_caps(d, 6, 0.01, 11);
            for (xi, r) in &caps {
                assert_eq!(hemisphere_poincare_ratio(&params, &c, xi, *r, 8).unwrap().ratio, 0.0);
                let f = SmoothTestFunction::trig_polynomial(TrigPolynomial::random(d, 8, 4, &mut rng)).unwrap();
                let v = hemisphere_poincare_ratio(&params, &f, xi, *r, 8).unwrap();
                assert!(v.ratio.is_finite() && v.ratio > 0.0);
                let rule = region_rule(&params, &project_of(xi), *r, 4).unwrap();
                let (lhs, double) = double_form_check(&f, &rule);
                assert!(lhs <= double && double <= 4.0 * lhs);
                assert!((double - 2.0 * lhs).abs() < 1e-9 * lhs);
            }
            assert!(hemisphere_poincare_ratio(&params, &c, &caps[0].0, 0.2, 8).is_err());
        }
    }

    fn project_of(xi: &SpherePoint) -> BallPoint {
        crate::geometry::project(xi).unwrap()
    }

    #[test]
    fn sphere_caps_sanity() {
        // mu = 0 in d = 2: the measure is surface measure on S^2
        let params = p(2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fs: Vec<_> = (0..5)
            .map(|_| SmoothTestFunction::trig_polynomial(TrigPolynomial::random(2, 4, 3, &mut rng)).unwrap())
            .collect();
        let mut worst = 0.0f64;
        for i in 0..20 {
            let z = bp(&[0.6 * (i as f64 * 0.7).cos(), 0.6 * (i as f64 * 0.7).sin()]);
            let r = 0.05 + 0.05 * (i % 5) as f64;
            let reg = BallRegion::new(z.clone(), r).unwrap();
            let rule = region_rule(&params, &z, r, 10).unwrap();
            for f in &fs {
                worst = worst.max(poincare_ratio(f, &reg, &rule).unwrap().ratio);
            }
        }
        // the first Neumann eigenvalue of a small cap is about (1.84 / r)^2
        assert!(worst < 1.0, "{worst}");
    }

    #[test]
    fn scans_are_stable_under_refinement() {
        let params = p(2, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fs: Vec<_> = (0..6)
            .map(|_| SmoothTestFunction::trig_polynomial(TrigPolynomial::random(2, 8, 4, &mut rng)).unwrap())
            .collect();
        let regions = sample_regions(2, 12, 0.01, 1.0 / 6.0, 3);
        let a = poincare_scan(&params, &fs, &regions, 8).unwrap();
        let b = poincare_scan(&params, &fs, &regions, 16).unwrap();
        assert!((a.max_ratio / b.max_ratio - 1.0).abs() < 0.2);
        let caps = sample_caps(2, 12, 0.01, 4);
        let a = hemisphere_scan(&params, &fs, &caps, 8).unwrap();
        let b = hemisphere_scan(&params, &fs, &caps, 16).unwrap();
        assert!((a.max_ratio / b.max_ratio - 1.0).abs() < 0.2);
    }
}
