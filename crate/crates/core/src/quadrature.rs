//! Polynomial-exact quadrature on the ball, the sphere and intervals.
//!
//! Ball rules are products of a radial Gauss-Jacobi rule in `s = 2r^2 - 1`
//! and a rule on `S^{d-1}`. Nodes are stored radius-major, so node
//! `i * n_angular + a` sits at radius `i` and direction `a`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{sphere_area, ModelParams};
use crate::jacobi::ln_gamma;

/// Default radial order of ball rules.
pub const DEFAULT_RADIAL_ORDER: usize = 64;
/// Default angular order of ball rules.
pub const DEFAULT_ANGULAR_ORDER: usize = 128;

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = KahanSum::default();
    for x in it {
        k.add(x);
    }
    k.sum()
}

/// Symmetric tridiagonal eigen-solve for a Jacobi matrix; returns nodes and
/// weights `mu0 * v_0^2`, sorted by node.
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Vec<(f64, f64)> {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `n`-point Gauss-Jacobi rule for `(1-x)^alpha (1+x)^beta` on `[-1, 1]`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<Vec<(f64, f64)>> {
    if n == 0 || !(alpha > -1.0 && beta > -1.0) {
        return Err(Error::InvalidParameter(format!(
            "Gauss-Jacobi needs n >= 1, alpha, beta > -1 (n = {n}, alpha = {alpha}, beta = {beta})"
        )));
    }
    let (a, b) = (alpha, beta);
    let ab = a + b;
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);
    diag.push((b - a) / (ab + 2.0));
    for k in 1..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        diag.push((b * b - a * a) / (s * (s + 2.0)));
    }
    for k in 1..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        let b2 = if k == 1 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        off.push(b2.sqrt());
    }
    Ok(golub_welsch(&diag, &off, mu0))
}

/// `n`-point generalized Gauss-Laguerre rule for `x^alpha e^{-x}` on `(0, inf)`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if n == 0 || !(alpha > -1.0) {
        return Err(Error::InvalidParameter(format!(
            "Gauss-Laguerre needs n >= 1 and alpha > -1 (n = {n}, alpha = {alpha})"
        )));
    }
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| (k as f64 * (k as f64 + alpha)).sqrt()).collect();
    Ok(golub_welsch(&diag, &off, ln_gamma(alpha + 1.0).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `B` in `R^d` with the measure `W_mu`.
    Ball { d: usize, mu: f64 },
    /// `S^{d-1}` in `R^d` with surface measure.
    Sphere { d: usize },
    /// `[-1, 1]` with a Jacobi weight.
    Interval { alpha: f64, beta: f64 },
}

/// Radial/angular split of a product ball rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLayout {
    /// `(r, weight)` for `d lambda_mu`.
    pub radial: Vec<(f64, f64)>,
    /// Directions and weights of the sphere factor.
    pub directions: Vec<Vec<f64>>,
    pub direction_weights: Vec<f64>,
}

/// An immutable node/weight list.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    domain: Domain,
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exactness: usize,
    samples: Option<usize>,
    layout: Option<ProductLayout>,
}

impl QuadratureRule {
    fn build(
        domain: Domain,
        dim: usize,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        exactness: usize,
        mass: f64,
    ) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("quadrature weights must be positive".into()));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - mass).abs() > 1e-10 * mass.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, domain measure is {mass}"
            )));
        }
        Ok(Self {
            domain,
            dim,
            nodes,
            weights,
            exactness,
            samples: None,
            layout: None,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.domain, Domain::Ball { .. })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks(self.dim)
    }

    /// Total polynomial degree integrated exactly (0 for Monte Carlo rules).
    pub fn exactness(&self) -> usize {
        self.exactness
    }

    /// Sample count of a Monte Carlo rule.
    pub fn samples(&self) -> Option<usize> {
        self.samples
    }

    pub fn layout(&self) -> Option<&ProductLayout> {
        self.layout.as_ref()
    }

    /// `sum_i w_i f(x_i)` with compensated summation.
    pub fn integrate_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let mut acc = KahanSum::default();
        for i in 0..self.len() {
            acc.add(self.weights[i] * f(self.node(i)));
        }
        acc.sum()
    }

    /// Writes one row per node: coordinates, then the weight.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},weight", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.node(i).iter().map(|v| crate::csv::fmt(*v)).collect();
            writeln!(out, "{},{}", row.join(","), crate::csv::fmt(self.weights[i]))?;
        }
        Ok(())
    }
}

/// Gauss-Jacobi rule on `[-1, 1]` as a `QuadratureRule`.
pub fn interval_rule(n: usize, alpha: f64, beta: f64) -> Result<QuadratureRule> {
    let gj = gauss_jacobi(n, alpha, beta)?;
    let mass = gj.iter().map(|p| p.1).sum();
    QuadratureRule::build(
        Domain::Interval { alpha, beta },
        1,
        gj.iter().map(|p| p.0).collect(),
        gj.iter().map(|p| p.1).collect(),
        2 * n - 1,
        mass,
    )
}

/// Product-ready rule on `S^{d-1}`.
///
/// `d = 2`: `order` equispaced angles, exact to trigonometric degree `order - 1`.
/// `d = 3`: `ceil(order/2)` Gauss-Legendre polar cosines times `order` azimuths,
/// exact to spherical-harmonic degree `order - 1`.
pub fn sphere_rule(d: usize, order: usize) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::InvalidParameter("angular order must be >= 1".into()));
    }
    let (dirs, weights) = sphere_nodes(d, order)?;
    let mut nodes = Vec::with_capacity(dirs.len() * d);
    dirs.iter().for_each(|v| nodes.extend_from_slice(v));
    QuadratureRule::build(Domain::Sphere { d }, d, nodes, weights, order - 1, sphere_area(d))
}

/// Product rule on `S^{d-1}`; azimuths sit at half steps, off the coordinate axes.
fn sphere_nodes(d: usize, order: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    match d {
        2 => {
            let w = 2.0 * PI / order as f64;
            let dirs = (0..order)
                .map(|i| {
                    let t = 2.0 * PI * (i as f64 + 0.5) / order as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            Ok((dirs, vec![w; order]))
        }
        3 => {
            let polar = gauss_jacobi(order.div_ceil(2), 0.0, 0.0)?;
            let wphi = 2.0 * PI / order as f64;
            let mut dirs = Vec::with_capacity(polar.len() * order);
            let mut weights = Vec::with_capacity(polar.len() * order);
            for &(c, wc) in &polar {
                let s = (1.0 - c * c).sqrt();
                for k in 0..order {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / order as f64;
                    dirs.push(vec![s * phi.cos(), s * phi.sin(), c]);
                    weights.push(wc * wphi);
                }
            }
            Ok((dirs, weights))
        }
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

/// Radial Gauss rule for `d lambda_mu(r) = r^{d-1} (1-r^2)^{mu-1/2} dr` on `(0, 1)`.
///
/// Built in `s = 2r^2 - 1`, where the measure becomes
/// `2^{-(d-2)/2 - (mu-1/2) - 2} (1-s)^{mu-1/2} (1+s)^{d/2-1} ds`.
pub fn radial_rule(params: &ModelParams, order: usize) -> Result<Vec<(f64, f64)>> {
    let d = params.d() as f64;
    let alpha = params.mu() - 0.5;
    let beta = d / 2.0 - 1.0;
    let scale = 2f64.powf(-beta - alpha - 2.0);
    Ok(gauss_jacobi(order, alpha, beta)?
        .into_iter()
        .map(|(s, w)| (((1.0 + s) / 2.0).sqrt(), w * scale))
        .collect())
}

/// Product rule on `B` for `W_mu`, exact to total degree
/// `min(4 radial_order - 1, angular_order - 1)`.
///
/// For `d > 3` there is no exact sphere rule; use [`monte_carlo_ball_rule`].
pub fn ball_rule(params: &ModelParams, radial_order: usize, angular_order: usize) -> Result<QuadratureRule> {
    let d = params.d();
    if radial_order == 0 || angular_order == 0 {
        return Err(Error::InvalidParameter("orders must be >= 1".into()));
    }
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let radial = radial_rule(params, radial_order)?;
    let (dirs, dw) = sphere_nodes(d, angular_order)?;
    let mut nodes = Vec::with_capacity(radial.len() * dirs.len() * d);
    let mut weights = Vec::with_capacity(radial.len() * dirs.len());
    for &(r, wr) in &radial {
        for (dir, &wa) in dirs.iter().zip(&dw) {
            nodes.extend(dir.iter().map(|c| c * r));
            weights.push(wr * wa);
        }
    }
    let exact = (4 * radial_order - 1).min(angular_order - 1);
    let mut rule = QuadratureRule::build(
        Domain::Ball { d, mu: params.mu() },
        d,
        nodes,
        weights,
        exact,
        params.total_mass(),
    )?;
    rule.layout = Some(ProductLayout {
        radial,
        directions: dirs,
        direction_weights: dw,
    });
    Ok(rule)
}

/// Smallest product rule exact to total degree `degree`.
pub fn ball_rule_for_degree(params: &ModelParams, degree: usize) -> Result<QuadratureRule> {
    ball_rule(params, (degree + 1).div_ceil(4).max(1), degree + 1)
}

/// Monte Carlo surrogate for `d > 3`: uniform points in `B` weighted by
/// `W_mu`, normalized to total mass `W_mu(B)`. Declared exactness is 0.
pub fn monte_carlo_ball_rule(params: &ModelParams, samples: usize, seed: u64) -> Result<QuadratureRule> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let d = params.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(samples * d);
    let mut raw = Vec::with_capacity(samples);
    while raw.len() < samples {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if n2 >= 1.0 {
            continue;
        }
        raw.push((1.0 - n2).powf(params.mu() - 0.5));
        nodes.extend(x);
    }
    let total = compensated_sum(raw.iter().copied());
    let mass = params.total_mass();
    let weights: Vec<f64> = raw.iter().map(|w| w / total * mass).collect();
    let mut rule = QuadratureRule::build(Domain::Ball { d, mu: params.mu() }, d, nodes, weights, 0, mass)?;
    rule.samples = Some(samples);
    Ok(rule)
}

/// Values of a function at the nodes of a shared rule.
#[derive(Debug, Clone)]
pub struct GridFunction {
    rule: Arc<QuadratureRule>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(rule: Arc<QuadratureRule>, values: Vec<f64>) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} nodes",
                values.len(),
                rule.len()
            )));
        }
        Ok(Self { rule, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(rule: Arc<QuadratureRule>, f: F) -> Self {
        let values = rule.nodes().map(f).collect();
        Self { rule, values }
    }

    pub fn constant(rule: Arc<QuadratureRule>, c: f64) -> Self {
        let values = vec![c; rule.len()];
        Self { rule, values }
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            rule: self.rule.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn same_rule(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.rule, &other.rule) || *self.rule == *other.rule
    }

    /// `sup |f - g|` over nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if !self.same_rule(other) {
            return Err(Error::RuleMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// `sum_i w_i f_i`.
pub fn integrate(f: &GridFunction) -> f64 {
    let mut acc = KahanSum::default();
    for (w, v) in f.rule.weights.iter().zip(&f.values) {
        acc.add(w * v);
    }
    acc.sum()
}

/// `sum_i w_i f_i g_i`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    if !f.same_rule(g) {
        return Err(Error::RuleMismatch);
    }
    let mut acc = KahanSum::default();
    for ((w, a), b) in f.rule.weights.iter().zip(&f.values).zip(&g.values) {
        acc.add(w * a * b);
    }
    Ok(acc.sum())
}
