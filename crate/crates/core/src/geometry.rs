//! The metric-measure space `(B, W_mu, d_B)` and its hemisphere picture.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::jacobi::ln_gamma;
use crate::quadrature::{gauss_jacobi, QuadratureRule};

const UNIT_TOL: f64 = 1e-12;

/// Dimension `d >= 2` and type parameter `mu > -1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    d: usize,
    mu: f64,
}

impl ModelParams {
    pub fn new(d: usize, mu: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {d}")));
        }
        if !(mu > -0.5) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must exceed -1/2, got {mu}")));
        }
        Ok(Self { d, mu })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `sigma(S^{d-1})`.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.d)
    }

    /// `W_mu(B)`.
    pub fn total_mass(&self) -> f64 {
        let (d, mu) = (self.d as f64, self.mu);
        self.sphere_area()
            * 0.5
            * (ln_gamma(d / 2.0) + ln_gamma(mu + 0.5) - ln_gamma(mu + (d + 1.0) / 2.0)).exp()
    }
}

/// Area of the unit sphere `S^{m-1}` in `R^m`; `S^0` has two points.
pub fn sphere_area(m: usize) -> f64 {
    let m = m as f64;
    2.0 * (0.5 * m * PI.ln() - ln_gamma(m / 2.0)).exp()
}

/// A point of the closed unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint(Vec<f64>);

impl BallPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n2: f64 = coords.iter().map(|c| c * c).sum();
        if !(n2.sqrt() <= 1.0 + UNIT_TOL) {
            return Err(Error::OutsideDomain(format!("|x| = {} > 1", n2.sqrt())));
        }
        Ok(Self(coords))
    }

    pub fn origin(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// The `i`-th coordinate vector scaled by `t`.
    pub fn axis(d: usize, i: usize, t: f64) -> Result<Self> {
        let mut c = vec![0.0; d];
        c[i] = t;
        Self::new(c)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `sqrt(1 - |x|^2)`, the height of the lifted point.
    pub fn height(&self) -> f64 {
        (1.0 - self.norm_sq()).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// `S^{d-1}` inside `R^d`.
    Sphere,
    /// The closed upper hemisphere of `S^d` inside `R^{d+1}`.
    UpperHemisphere,
}

/// A unit vector, tagged with the sphere it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: Vec<f64>,
    chart: Chart,
}

impl SpherePoint {
    pub fn new(coords: Vec<f64>, chart: Chart) -> Result<Self> {
        let n = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::OutsideDomain(format!("|xi| = {n} is not 1")));
        }
        if chart == Chart::UpperHemisphere && *coords.last().unwrap_or(&-1.0) < 0.0 {
            return Err(Error::OutsideDomain("last coordinate is negative".into()));
        }
        Ok(Self { coords, chart })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    /// The last coordinate `x_{d+1}`.
    pub fn height(&self) -> f64 {
        *self.coords.last().unwrap()
    }
}

/// The geodesic ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallRegion {
    pub center: BallPoint,
    pub radius: f64,
}

impl BallRegion {
    pub fn new(center: BallPoint, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be >= 0, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        dist_ball_coords(self.center.coords(), y) < self.radius
    }
}

#[inline]
fn clamp_unit(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

/// `d_B(x, y) = arccos(<x,y> + sqrt(1-|x|^2) sqrt(1-|y|^2))`.
pub fn dist_ball(x: &BallPoint, y: &BallPoint) -> f64 {
    dist_ball_coords(x.coords(), y.coords())
}

pub(crate) fn dist_ball_coords(x: &[f64], y: &[f64]) -> f64 {
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    let hx = (1.0 - nx).max(0.0).sqrt();
    let hy = (1.0 - ny).max(0.0).sqrt();
    // chord form is accurate for nearby points where arccos loses digits
    let c = dot + hx * hy;
    if c > 0.9 {
        let mut chord2 = (hx - hy).powi(2);
        for (a, b) in x.iter().zip(y) {
            chord2 += (a - b).powi(2);
        }
        2.0 * (0.5 * chord2.sqrt()).min(1.0).asin()
    } else {
        clamp_unit(c).acos()
    }
}

/// Geodesic distance on a unit sphere.
pub fn sphere_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    clamp_unit(dot).acos()
}

/// `x -> (x, sqrt(1 - |x|^2))`.
pub fn lift(x: &BallPoint) -> SpherePoint {
    let mut c = x.coords().to_vec();
    c.push(x.height());
    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    c.iter_mut().for_each(|v| *v /= n);
    SpherePoint {
        coords: c,
        chart: Chart::UpperHemisphere,
    }
}

/// Drops the last coordinate of a hemisphere point.
pub fn project(xi: &SpherePoint) -> Result<BallPoint> {
    if xi.chart != Chart::UpperHemisphere {
        return Err(Error::InvalidParameter("project expects a hemisphere point".into()));
    }
    if xi.height() < 0.0 {
        return Err(Error::OutsideDomain("last coordinate is negative".into()));
    }
    BallPoint::new(xi.coords[..xi.coords.len() - 1].to_vec())
}

/// `W_mu(x) = (1 - |x|^2)^{mu - 1/2}`.
pub fn weight_density(params: &ModelParams, x: &BallPoint) -> Result<f64> {
    let u = 1.0 - x.norm_sq();
    let e = params.mu() - 0.5;
    if u <= 0.0 {
        return if e < 0.0 {
            Err(Error::BoundarySingularity { mu: params.mu() })
        } else if e == 0.0 {
            Ok(1.0)
        } else {
            Ok(0.0)
        };
    }
    Ok(u.powf(e))
}

/// Ball volume with the number of rule nodes that fell inside the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallVolume {
    pub value: f64,
    pub interior_nodes: usize,
}

/// Nodes below which an indicator quadrature is considered unresolved.
pub const MIN_INTERIOR_NODES: usize = 50;

/// `W_mu(B(z, r))` by quadrature of the sharp indicator on a ball rule.
///
/// Balls about the origin are Euclidean balls `{|x| < sin r}` and are
/// integrated exactly through the radial measure instead.
pub fn ball_volume(params: &ModelParams, region: &BallRegion, rule: &QuadratureRule) -> Result<BallVolume> {
    if region.radius == 0.0 {
        return Ok(BallVolume { value: 0.0, interior_nodes: 0 });
    }
    if region.radius >= PI {
        return Ok(BallVolume {
            value: params.total_mass(),
            interior_nodes: rule.len(),
        });
    }
    let interior = (0..rule.len()).filter(|&i| region.contains(rule.node(i))).count();
    if region.center.norm() == 0.0 {
        let rho = if region.radius >= PI / 2.0 { 1.0 } else { region.radius.sin() };
        return Ok(BallVolume {
            value: params.sphere_area() * lambda_measure(params, 0.0, rho),
            interior_nodes: interior,
        });
    }
    if !rule.is_ball() {
        return Err(Error::InvalidParameter("ball_volume needs a rule on B".into()));
    }
    let mut acc = crate::quadrature::KahanSum::default();
    for i in 0..rule.len() {
        if region.contains(rule.node(i)) {
            acc.add(rule.weight(i));
        }
    }
    if interior < MIN_INTERIOR_NODES {
        log::warn!(
            "ball volume at r = {} resolved by only {interior} nodes",
            region.radius
        );
    }
    Ok(BallVolume {
        value: acc.sum(),
        interior_nodes: interior,
    })
}

/// `W_mu(B(z, r))` integrated in geodesic polar coordinates about the lifted center.
///
/// The cap `c+(z~, r)` is swept by geodesic radius `theta` and direction; the
/// weight `y_{d+1}^{2 mu}` vanishes where the cap leaves the hemisphere, and
/// that edge is absorbed into a Gauss-Jacobi weight.
pub fn ball_volume_polar(params: &ModelParams, center: &BallPoint, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= PI {
        return params.total_mass();
    }
    let d = params.d();
    let two_mu = 2.0 * params.mu();
    let a = center.height();
    let b = center.norm().min(1.0);
    let sub_area = sphere_area(d - 1);
    let full_area = sphere_area(d);

    let gl = gauss_jacobi(24, 0.0, 0.0).expect("legendre");
    let gj_edge = gauss_jacobi(24, two_mu, 0.0).expect("alpha = 2mu > -1");
    let sin_pow = |psi: f64| if d == 2 { 1.0 } else { psi.sin().powi(d as i32 - 2) };
    let pos_pow = |g: f64| if g > 0.0 { g.powf(two_mu) } else { 0.0 };

    let inner = |theta: f64| -> f64 {
        let aa = a * theta.cos();
        let bb = b * theta.sin();
        if bb <= 1e-14 * aa.abs().max(1e-300) {
            return full_area * pos_pow(aa);
        }
        let cstar = -aa / bb;
        if cstar >= 1.0 {
            return 0.0;
        }
        let integral = if cstar <= -1.0 {
            gl.iter()
                .map(|&(s, w)| {
                    let psi = PI * (1.0 + s) / 2.0;
                    w * pos_pow(aa + bb * psi.cos()) * sin_pow(psi)
                })
                .sum::<f64>()
                * PI
                / 2.0
        } else {
            let ps = cstar.acos();
            gj_edge
                .iter()
                .map(|&(s, w)| {
                    let psi = ps * (1.0 + s) / 2.0;
                    let one_m = 1.0 - s;
                    let sinc = (ps * one_m / 4.0).sin() / one_m;
                    let g = 2.0 * bb * ((ps + psi) / 2.0).sin() * sinc;
                    w * pos_pow(g) * sin_pow(psi)
                })
                .sum::<f64>()
                * ps
                / 2.0
        };
        sub_area * integral
    };

    let outer = |lo: f64, hi: f64| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let half = (hi - lo) / 2.0;
        gl.iter()
            .map(|&(s, w)| {
                let th = lo + half * (1.0 + s);
                w * th.sin().powi(d as i32 - 1) * inner(th)
            })
            .sum::<f64>()
            * half
    };

    // kinks where the cap first touches and finally leaves the equator
    let theta0 = a.atan2(b);
    let theta1 = PI - theta0;
    if r >= theta1 {
        return params.total_mass();
    }
    let end = r;
    let mut total = outer(0.0, r.min(theta0));
    if r > theta0 {
        let len = end - theta0;
        let mut pts = vec![theta0];
        for m in (1..=8).rev() {
            pts.push(theta0 + len * 0.25f64.powi(m));
        }
        pts.push(end);
        for w in pts.windows(2) {
            total += outer(w[0], w[1]);
        }
    }
    total
}

/// Nodes and `W_mu` weights covering `B(z, r)`, for integrals over the region.
#[derive(Debug, Clone)]
pub struct RegionRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RegionRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        crate::quadrature::compensated_sum(self.weights.iter().copied())
    }

    pub fn integrate_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        crate::quadrature::compensated_sum((0..self.len()).map(|i| self.weights[i] * f(self.node(i))))
    }
}

/// Orthonormal vectors of `R^d` perpendicular to the unit vector `e`.
fn complement(e: &[f64]) -> Vec<Vec<f64>> {
    let d = e.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for b in std::iter::once(e).chain(basis.iter().map(|b| b.as_slice())) {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.5 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
        if basis.len() == d - 1 {
            break;
        }
    }
    basis
}

/// Quadrature for `int_{B(z, r)} g dW_mu` in geodesic polar coordinates
/// about the lifted center, with the same edge treatment as
/// [`ball_volume_polar`]. `order` points per radial segment and per angle.
///
/// Regions reaching past every point of `B` fall back to a product rule.
pub fn region_rule(params: &ModelParams, center: &BallPoint, r: f64, order: usize) -> Result<RegionRule> {
    let d = params.d();
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if center.dim() != d {
        return Err(Error::InvalidParameter("center dimension mismatch".into()));
    }
    if !(r > 0.0) || order < 2 {
        return Err(Error::InvalidParameter(format!("need r > 0 and order >= 2, got {r}, {order}")));
    }
    let a = center.height();
    let b = center.norm().min(1.0);
    let theta0 = a.atan2(b);
    let theta1 = PI - theta0;
    if r >= theta1 {
        let rule = crate::quadrature::ball_rule(params, order, 2 * order)?;
        return Ok(RegionRule {
            dim: d,
            nodes: rule.nodes().flatten().copied().collect(),
            weights: rule.weights().to_vec(),
        });
    }

    let two_mu = 2.0 * params.mu();
    let gl = gauss_jacobi(order, 0.0, 0.0)?;
    let gj_edge = gauss_jacobi(order, two_mu, 0.0)?;
    let pos_pow = |g: f64| if g > 0.0 { g.powf(two_mu) } else { 0.0 };
    let sin_pow = |psi: f64| if d == 2 { 1.0 } else { psi.sin() };

    // frame: zt = (z, a), uphill w, complement omegas (all in R^{d+1})
    let zhat: Vec<f64> = if b > 0.0 {
        center.coords().iter().map(|v| v / b).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let mut zt: Vec<f64> = center.coords().to_vec();
    zt.push(a);
    let mut w: Vec<f64> = zhat.iter().map(|v| -a * v).collect();
    w.push(b);
    if b == 0.0 {
        w = zhat.clone();
        w.push(0.0);
    }
    let comp = complement(&zhat);
    let omegas: Vec<(Vec<f64>, f64)> = if d == 2 {
        let v = &comp[0];
        vec![(vec![v[0], v[1], 0.0], 1.0), (vec![-v[0], -v[1], 0.0], 1.0)]
    } else {
        let m = 2 * order;
        (0..m)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                let (s, c) = phi.sin_cos();
                let o = (0..3).map(|i| c * comp[0][i] + s * comp[1][i]).collect();
                (o, 2.0 * PI / m as f64)
            })
            .collect()
    };

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut emit = |theta: f64, wt: f64| {
        let (st, ct) = theta.sin_cos();
        let aa = a * ct;
        let bb = b * st;
        // (psi, weight including the height factor)
        let mut psis: Vec<(f64, f64)> = Vec::with_capacity(order);
        let cstar = if bb <= 1e-14 * aa.abs().max(1e-300) { f64::NEG_INFINITY } else { -aa / bb };
        if cstar >= 1.0 {
            return;
        }
        if cstar <= -1.0 {
            for &(s, gw) in &gl {
                let psi = PI * (1.0 + s) / 2.0;
                psis.push((psi, gw * PI / 2.0 * pos_pow(aa + bb * psi.cos()) * sin_pow(psi)));
            }
        } else {
            let ps = cstar.acos();
            for &(s, gw) in &gj_edge {
                let psi = ps * (1.0 + s) / 2.0;
                let one_m = 1.0 - s;
                let sinc = (ps * one_m / 4.0).sin() / one_m;
                let g = 2.0 * bb * ((ps + psi) / 2.0).sin() * sinc;
                psis.push((psi, gw * ps / 2.0 * pos_pow(g) * sin_pow(psi)));
            }
        }
        let wt = wt * st.powi(d as i32 - 1);
        for &(psi, pw) in &psis {
            let (sp, cp) = psi.sin_cos();
            for (om, ow) in &omegas {
                for i in 0..d {
                    nodes.push(ct * zt[i] + st * (cp * w[i] + sp * om[i]));
                }
                weights.push(wt * pw * ow);
            }
        }
    };
    let mut segment = |lo: f64, hi: f64| {
        if hi <= lo {
            return;
        }
        let half = (hi - lo) / 2.0;
        for &(s, gw) in &gl {
            emit(lo + half * (1.0 + s), gw * half);
        }
    };
    segment(0.0, r.min(theta0));
    if r > theta0 {
        let len = r - theta0;
        let mut pts = vec![theta0];
        for m in (1..=8).rev() {
            pts.push(theta0 + len * 0.25f64.powi(m));
        }
        pts.push(r);
        for win in pts.windows(2) {
            segment(win[0], win[1]);
        }
    }
    Ok(RegionRule { dim: d, nodes, weights })
}

/// `r^d (sqrt(1-|z|^2) + r)^{2 mu}` for `r <= pi`, `1` beyond.
pub fn volume_comparability(params: &ModelParams, region: &BallRegion) -> f64 {
    let r = region.radius;
    if r > PI {
        return 1.0;
    }
    r.powi(params.d() as i32) * (region.center.height() + r).powf(2.0 * params.mu())
}

/// `lambda_mu((a, b)) = int_a^b r^{d-1} (1 - r^2)^{mu - 1/2} dr`.
pub fn lambda_measure(params: &ModelParams, a: f64, b: f64) -> f64 {
    let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
    if b <= a {
        return 0.0;
    }
    // with v = r^2: 1/2 int v^{(d-2)/2} (1-v)^{mu-1/2} dv
    0.5 * (incomplete_beta_mass(params, b * b) - incomplete_beta_mass(params, a * a))
}

/// `int_0^x v^{p} (1-v)^{q} dv` with `p = (d-2)/2`, `q = mu - 1/2`.
fn incomplete_beta_mass(params: &ModelParams, x: f64) -> f64 {
    let p = (params.d() as f64 - 2.0) / 2.0;
    let q = params.mu() - 0.5;
    if x <= 0.0 {
        return 0.0;
    }
    let complete = (ln_gamma(p + 1.0) + ln_gamma(q + 1.0) - ln_gamma(p + q + 2.0)).exp();
    if x >= 1.0 {
        return complete;
    }
    const N: usize = 40;
    if x <= 0.5 {
        // v = x (1+s)/2 absorbs v^p; (1-v)^q is smooth on [0, 1/2]
        let rule = gauss_jacobi(N, 0.0, p).expect("p >= 0");
        let scale = (x / 2.0).powf(p + 1.0);
        scale
            * rule
                .iter()
                .map(|&(s, w)| w * (1.0 - x * (1.0 + s) / 2.0).powf(q))
                .sum::<f64>()
    } else {
        // tail over [x, 1] with the (1-v)^q edge absorbed
        let rule = gauss_jacobi(N, q, 0.0).expect("q > -1");
        let len = 1.0 - x;
        let scale = (len / 2.0).powf(q + 1.0);
        let tail = scale
            * rule
                .iter()
                .map(|&(s, w)| w * (x + len * (1.0 + s) / 2.0).powf(p))
                .sum::<f64>();
        complete - tail
    }
}

/// `W~(c+(xi, r))`, transferred to the ball as `W_mu(B(pi(xi), r))`.
pub fn cap_volume(params: &ModelParams, center: &SpherePoint, r: f64) -> Result<f64> {
    let z = project(center)?;
    Ok(ball_volume_polar(params, &z, r))
}

/// `r^d (x_{d+1} + r)^{2 mu}`.
pub fn cap_comparability(params: &ModelParams, center: &SpherePoint, r: f64) -> f64 {
    r.powi(params.d() as i32) * (center.height() + r).powf(2.0 * params.mu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::ball_rule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(d: usize, mu: f64) -> ModelParams {
        ModelParams::new(d, mu).unwrap()
    }

    pub(crate) fn random_ball_point(rng: &mut ChaCha8Rng, d: usize) -> BallPoint {
        loop {
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                return BallPoint::new(c).unwrap();
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1, 0.0).is_err());
        assert!(ModelParams::new(2, -0.5).is_err());
        assert!(ModelParams::new(3, -0.49).is_ok());
        assert!(BallPoint::new(vec![1.0, 1e-13]).is_ok());
        assert!(BallPoint::new(vec![1.0, 1e-3]).is_err());
    }

    #[test]
    fn masses() {
        assert!((p(2, 0.5).total_mass() - PI).abs() < 1e-13);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(1) - 2.0).abs() < 1e-13);
        // d = 3, mu = 1/2: Lebesgue volume of the unit ball
        assert!((p(3, 0.5).total_mass() - 4.0 * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn distance_examples() {
        let e1 = BallPoint::axis(2, 0, 1.0).unwrap();
        let m1 = BallPoint::axis(2, 0, -1.0).unwrap();
        let o = BallPoint::origin(2);
        assert_eq!(dist_ball(&e1, &e1), 0.0);
        assert!((dist_ball(&e1, &m1) - PI).abs() < 1e-15);
        assert!((dist_ball(&o, &e1) - PI / 2.0).abs() < 1e-15);
        let x = BallPoint::new(vec![0.3, -0.4]).unwrap();
        assert_eq!(dist_ball(&x, &x), 0.0);
    }

    #[test]
    fn lift_and_project() {
        let o = BallPoint::origin(3);
        assert_eq!(lift(&o).coords(), &[0.0, 0.0, 0.0, 1.0]);
        let e1 = BallPoint::axis(3, 0, 1.0).unwrap();
        assert_eq!(lift(&e1).coords(), &[1.0, 0.0, 0.0, 0.0]);
        let o2 = BallPoint::origin(2);
        let e12 = BallPoint::axis(2, 0, 1.0).unwrap();
        let g = sphere_dist(lift(&o2).coords(), lift(&e12).coords());
        assert!((g - PI / 2.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = random_ball_point(&mut rng, 3);
            let y = random_ball_point(&mut rng, 3);
            let back = project(&lift(&x)).unwrap();
            for (a, b) in back.coords().iter().zip(x.coords()) {
                assert!((a - b).abs() < 1e-15);
            }
            let g = sphere_dist(lift(&x).coords(), lift(&y).coords());
            assert!((g - dist_ball(&x, &y)).abs() < 1e-7);
        }
        let below = SpherePoint::new(vec![0.0, 0.6, -0.8], Chart::Sphere).unwrap();
        assert!(project(&below).is_err());
        assert!(SpherePoint::new(vec![0.0, 0.6, -0.8], Chart::UpperHemisphere).is_err());
    }

    #[test]
    fn density_values() {
        let o = BallPoint::origin(2);
        assert_eq!(weight_density(&p(2, 1.3), &o).unwrap(), 1.0);
        let x = BallPoint::new(vec![0.6, 0.0]).unwrap();
        assert!((weight_density(&p(2, 1.5), &x).unwrap() - 0.64).abs() < 1e-15);
        assert_eq!(weight_density(&p(2, 0.5), &x).unwrap(), 1.0);
        let e1 = BallPoint::axis(2, 0, 1.0).unwrap();
        assert_eq!(weight_density(&p(2, 0.5), &e1).unwrap(), 1.0);
        assert_eq!(weight_density(&p(2, 1.0), &e1).unwrap(), 0.0);
        assert!(matches!(
            weight_density(&p(2, 0.0), &e1),
            Err(Error::BoundarySingularity { .. })
        ));
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_measure(&p(2, 0.3), 0.4, 0.4), 0.0);
        assert!((lambda_measure(&p(2, 0.5), 0.0, 1.0) - 0.5).abs() < 1e-14);
        assert!((lambda_measure(&p(2, 0.0), 0.0, 1.0) - 1.0).abs() < 1e-14);
        // antiderivative -(1-r^2)^{1/2} for d = 2, mu = 0
        let f = |r: f64| -(1.0 - r * r).sqrt();
        for &(a, b) in &[(0.1, 0.5), (0.3, 0.9), (0.7, 0.999), (0.0, 0.75)] {
            let got = lambda_measure(&p(2, 0.0), a, b);
            assert!((got - (f(b) - f(a))).abs() < 1e-12, "{a} {b}");
        }
        // d = 3, mu = 1/2: r^3/3
        assert!((lambda_measure(&p(3, 0.5), 0.2, 0.8) - (0.512 - 0.008) / 3.0).abs() < 1e-13);
    }

    #[test]
    fn ball_volume_examples() {
        let params = p(2, 0.5);
        let rule = ball_rule(&params, 16, 64).unwrap();
        let full = BallRegion::new(BallPoint::origin(2), PI).unwrap();
        assert!((ball_volume(&params, &full, &rule).unwrap().value - PI).abs() < 1e-12);
        let zero = BallRegion::new(BallPoint::new(vec![0.2, 0.1]).unwrap(), 0.0).unwrap();
        assert_eq!(ball_volume(&params, &zero, &rule).unwrap().value, 0.0);
        let third = BallRegion::new(BallPoint::origin(2), PI / 3.0).unwrap();
        let v = ball_volume(&params, &third, &rule).unwrap().value;
        assert!((v - 3.0 * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn polar_volume_matches_radial_oracle() {
        for d in [2, 3] {
            for mu in [0.0, 0.5, 1.5, -0.3] {
                let params = p(d, mu);
                let o = BallPoint::origin(d);
                if mu < 0.0 {
                    // the density is singular on the boundary; check only caps inside the hemisphere
                    let want = params.sphere_area() * lambda_measure(&params, 0.0, 1.0f64.sin());
                    assert!((ball_volume_polar(&params, &o, 1.0) - want).abs() < 1e-9 * want);
                    continue;
                }
                for &r in &[0.05f64, 0.3, 1.0, 1.5] {
                    let want = params.sphere_area() * lambda_measure(&params, 0.0, r.sin());
                    let got = ball_volume_polar(&params, &o, r);
                    assert!((got - want).abs() < 1e-9 * want, "d={d} mu={mu} r={r}");
                }
                let whole = ball_volume_polar(&params, &o, 3.0);
                assert!((whole - params.total_mass()).abs() < 1e-8, "d={d} mu={mu}");
            }
        }
    }

    #[test]
    fn polar_volume_matches_indicator_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3] {
            for mu in [0.0, 0.5, 1.5] {
                let params = p(d, mu);
                let rule = if d == 2 {
                    ball_rule(&params, 400, 800).unwrap()
                } else {
                    ball_rule(&params, 60, 120).unwrap()
                };
                for _ in 0..4 {
                    let z = random_ball_point(&mut rng, d);
                    let r = rng.gen_range(0.5..2.0);
                    let region = BallRegion::new(z.clone(), r).unwrap();
                    let q = ball_volume(&params, &region, &rule).unwrap().value;
                    let polar = ball_volume_polar(&params, &z, r);
                    let tol = if d == 2 { 5e-3 } else { 3e-2 };
                    assert!((q - polar).abs() < tol * polar, "d={d} mu={mu} r={r} q={q} polar={polar}");
                }
            }
        }
    }

    #[test]
    fn comparability_examples() {
        let o = BallPoint::origin(2);
        let reg = BallRegion::new(o.clone(), 4.0).unwrap();
        assert_eq!(volume_comparability(&p(2, 1.0), &reg), 1.0);
        let reg = BallRegion::new(BallPoint::new(vec![0.3, 0.2]).unwrap(), 0.7).unwrap();
        assert!((volume_comparability(&p(2, 0.0), &reg) - 0.49).abs() < 1e-15);
        let reg = BallRegion::new(o, 0.1).unwrap();
        assert!((volume_comparability(&p(2, 1.0), &reg) - 0.0121).abs() < 1e-15);
    }

    #[test]
    fn cap_volumes() {
        let params = p(2, 0.5);
        let north = lift(&BallPoint::origin(2));
        assert!((cap_volume(&params, &north, PI).unwrap() - PI).abs() < 1e-12);
        for mu in [0.0, 0.5, 1.5] {
            let params = p(2, mu);
            assert!((cap_volume(&params, &north, PI).unwrap() - params.total_mass()).abs() < 1e-12);
            for &r in &[0.05, 0.1, 0.2] {
                let ratio = cap_volume(&params, &north, r).unwrap() / cap_comparability(&params, &north, r);
                assert!((0.1..=10.0).contains(&ratio), "mu={mu} r={r} ratio={ratio}");
            }
        }
    }

    #[test]
    fn doubling_and_comparability_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2, 3] {
            for mu in [0.0, 1.5] {
                let params = p(d, mu);
                let (mut kmax, mut kmin, mut dbl) = (0.0f64, f64::INFINITY, 0.0f64);
                for _ in 0..200 {
                    let z = random_ball_point(&mut rng, d);
                    let r = rng.gen_range(0.01..PI / 2.0);
                    let v = ball_volume_polar(&params, &z, r);
                    let v2 = ball_volume_polar(&params, &z, 2.0 * r);
                    dbl = dbl.max(v2 / v);
                    let c = volume_comparability(&params, &BallRegion::new(z, r).unwrap());
                    kmax = kmax.max(v / c);
                    kmin = kmin.min(v / c);
                }
                assert!(dbl < 2f64.powi(d as i32 + 2 * mu.ceil() as i32 + 2), "doubling {dbl}");
                assert!(kmax / kmin < 200.0, "comparability spread {}", kmax / kmin);
            }
        }
    }

    #[test]
    fn metric_axioms_and_chord_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = random_ball_point(&mut rng, 3);
            let y = random_ball_point(&mut rng, 3);
            let z = random_ball_point(&mut rng, 3);
            let (dxy, dyz, dxz) = (dist_ball(&x, &y), dist_ball(&y, &z), dist_ball(&x, &z));
            assert!((0.0..=PI).contains(&dxy));
            assert_eq!(dxy, dist_ball(&y, &x));
            assert!(dxz <= dxy + dyz + 1e-10);
            let chord: f64 = lift(&x)
                .coords()
                .iter()
                .zip(lift(&y).coords())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dxy >= chord - 1e-12);
            assert!(dxy <= PI / 2.0 * chord + 1e-12);
        }
    }

    #[test]
    fn region_rule_volume_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in [2, 3] {
            for mu in [0.0, 0.5, 1.5] {
                let params = p(d, mu);
                for _ in 0..6 {
                    let z = random_ball_point(&mut rng, d);
                    let r = rng.gen_range(0.02..2.5);
                    let rule = region_rule(&params, &z, r, 24).unwrap();
                    let want = ball_volume_polar(&params, &z, r);
                    assert!((rule.volume() - want).abs() < 1e-10 * want.max(1e-300) + 1e-14, "d={d} mu={mu} r={r} z={:?} got={} want={want}", z, rule.volume());
                    for i in 0..rule.len() {
                        let x = rule.node(i);
                        assert!(x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
                        assert!(dist_ball_coords(z.coords(), x) <= r + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn region_rule_converges_on_smooth_integrands() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = |x: &[f64]| (2.0 * x[0]).cos() + x[1] * x[1] * x[0];
        for d in [2, 3] {
            for mu in [0.0, 0.5, 1.5] {
                let params = p(d, mu);
                for _ in 0..4 {
                    let z = random_ball_point(&mut rng, d);
                    let r = rng.gen_range(0.05..1.5);
                    let lo = region_rule(&params, &z, r, 16).unwrap().integrate_fn(g);
                    let hi = region_rule(&params, &z, r, 32).unwrap().integrate_fn(g);
                    let vol = ball_volume_polar(&params, &z, r);
                    assert!((lo - hi).abs() < 1e-8 * vol, "d={d} mu={mu} r={r}");
                }
                // the whole ball, against the product rule
                let z = BallPoint::axis(d, 0, 0.3).unwrap();
                let whole = region_rule(&params, &z, PI, 12).unwrap().integrate_fn(g);
                let direct = ball_rule(&params, 20, 40).unwrap().integrate_fn(g);
                assert!((whole - direct).abs() < 1e-12);
            }
        }
    }
}
