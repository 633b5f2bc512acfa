//! Power weights, sampled `A_p` constants on the sphere, the radial interval
//! and the ball, the product-weight containment, and the Ciaurri condition.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dirichlet::random_direction;
use crate::error::{Error, Result};
use crate::geometry::{ball_volume_polar, dist_ball_coords, lambda_measure, region_rule, sphere_dist, BallPoint, BallRegion, ModelParams};
use crate::quadrature::{compensated_sum, gauss_jacobi};

/// Where an `A_p` constant is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// `S^{d-1}` with surface measure and geodesic caps.
    Sphere,
    /// `(0, 1)` with `d lambda_mu = r^{d-1} (1-r^2)^{mu-1/2} dr` and subintervals.
    Interval,
    /// `B` with `W_mu` and `d_B`-balls.
    Ball,
}

/// A weight on one of the three spaces.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Constant,
    /// `v(x') = dist(x', pole)^a` on `S^{d-1}`.
    SpherePower { pole: Vec<f64>, a: f64 },
    /// `u(r) = (1-r)^b r^c` on `(0, 1)`.
    RadialPower { b: f64, c: f64 },
    /// `w(x) = v(x/|x|) u(|x|)` on `B`.
    Product { v: Box<WeightSpec>, u: Box<WeightSpec> },
}

impl WeightSpec {
    /// `dist(., pole)^a`, checked against `-(d-1) < a < (d-1)(p-1)`.
    pub fn sphere_power(pole: Vec<f64>, a: f64, p: f64) -> Result<Self> {
        let m = pole.len() as f64 - 1.0;
        if !(a > -m && a < m * (p - 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "a = {a} is outside the A_{p} range ({}, {}) on S^{m}",
                -m,
                m * (p - 1.0)
            )));
        }
        let n = pole.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(WeightSpec::SpherePower {
            pole: pole.into_iter().map(|v| v / n).collect(),
            a,
        })
    }

    /// `(1-r)^b r^c`, checked against the power-weight ranges of `lambda_mu`:
    /// local dimension `d` at `0` and `mu + 1/2` at `1`.
    pub fn radial_power(params: &ModelParams, b: f64, c: f64, p: f64) -> Result<Self> {
        let d0 = params.d() as f64;
        let d1 = params.mu() + 0.5;
        if !(b > -d1 && b < d1 * (p - 1.0)) || !(c > -d0 && c < d0 * (p - 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "(b, c) = ({b}, {c}) is outside the A_{p} range for d = {}, mu = {}",
                params.d(),
                params.mu()
            )));
        }
        Ok(WeightSpec::RadialPower { b, c })
    }

    /// A radial power weight without the range check.
    pub fn radial_power_unchecked(b: f64, c: f64) -> Self {
        WeightSpec::RadialPower { b, c }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            WeightSpec::Constant => true,
            WeightSpec::SpherePower { a, .. } => *a == 0.0,
            WeightSpec::RadialPower { b, c } => *b == 0.0 && *c == 0.0,
            WeightSpec::Product { v, u } => v.is_constant() && u.is_constant(),
        }
    }

    pub fn space(&self) -> Option<Space> {
        match self {
            WeightSpec::Constant => None,
            WeightSpec::SpherePower { .. } => Some(Space::Sphere),
            WeightSpec::RadialPower { .. } => Some(Space::Interval),
            WeightSpec::Product { .. } => Some(Space::Ball),
        }
    }

    /// Value on the sphere.
    pub fn sphere(&self, x: &[f64]) -> f64 {
        match self {
            WeightSpec::SpherePower { pole, a } => sphere_dist(x, pole).powf(*a),
            _ => 1.0,
        }
    }

    /// Value on `(0, 1)`.
    pub fn radial(&self, r: f64) -> f64 {
        match self {
            WeightSpec::RadialPower { b, c } => (1.0 - r).powf(*b) * r.powf(*c),
            _ => 1.0,
        }
    }

    /// Value on the ball; a product weight composes its factors.
    /// The origin is read along the last axis.
    pub fn ball(&self, x: &[f64]) -> f64 {
        match self {
            WeightSpec::Product { v, u } => {
                let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                let dir: Vec<f64> = if r > 0.0 {
                    x.iter().map(|t| t / r).collect()
                } else {
                    (0..x.len()).map(|i| if i + 1 == x.len() { 1.0 } else { 0.0 }).collect()
                };
                v.sphere(&dir) * u.radial(r)
            }
            WeightSpec::RadialPower { .. } => self.radial(x.iter().map(|t| t * t).sum::<f64>().sqrt()),
            _ => 1.0,
        }
    }
}

/// `w(x) = v(x/|x|) u(|x|)`.
pub fn product_weight(v: &WeightSpec, u: &WeightSpec) -> Result<WeightSpec> {
    if !matches!(v, WeightSpec::SpherePower { .. } | WeightSpec::Constant)
        || !matches!(u, WeightSpec::RadialPower { .. } | WeightSpec::Constant)
    {
        return Err(Error::InvalidParameter("product weights take a sphere and a radial factor".into()));
    }
    Ok(WeightSpec::Product {
        v: Box::new(v.clone()),
        u: Box::new(u.clone()),
    })
}

/// Sample supremum of `(avg w)(avg w^{1-p'})^{p-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApEstimate {
    pub p: f64,
    pub constant: f64,
    pub space: Space,
    pub regions: usize,
    /// Index of the region attaining the supremum.
    pub argmax: usize,
}

fn dual(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, inf), got {p}")));
    }
    Ok(())
}

fn fold_sup(p: f64, space: Space, qs: Vec<Result<f64>>) -> Result<ApEstimate> {
    let mut best = 1.0f64;
    let mut argmax = 0;
    let n = qs.len();
    for (i, q) in qs.into_iter().enumerate() {
        let q = q?;
        if q > best {
            best = q;
            argmax = i;
        }
    }
    Ok(ApEstimate {
        p,
        constant: best,
        space,
        regions: n,
        argmax,
    })
}

const PIECE_NODES: usize = 24;

/// `int_x^y r^{e0} (1-r)^{e1} (1+r)^{e2} dr` for `0 <= x < y <= 1`;
/// `inf` when an included endpoint is non-integrable.
pub fn power_integral(x: f64, y: f64, e0: f64, e1: f64, e2: f64) -> f64 {
    if !(y > x) {
        return 0.0;
    }
    if x < 0.5 && y > 0.5 {
        return power_integral(x, 0.5, e0, e1, e2) + power_integral(0.5, y, e0, e1, e2);
    }
    let g = |ln_r: f64, ln_1m: f64, r: f64| (e0 * ln_r + e1 * ln_1m + e2 * r.ln_1p()).exp();
    let gl = gauss_jacobi(PIECE_NODES, 0.0, 0.0).expect("legendre");
    if y <= 0.5 {
        if x == 0.0 {
            if e0 <= -1.0 {
                return f64::INFINITY;
            }
            // r = y (1+s)/2 absorbs r^{e0}
            let rule = gauss_jacobi(PIECE_NODES, 0.0, e0).expect("e0 > -1");
            let scale = (y / 2.0).powf(e0 + 1.0);
            return scale
                * compensated_sum(rule.iter().map(|&(s, w)| {
                    let r = y * (1.0 + s) / 2.0;
                    w * (e1 * (-r).ln_1p() + e2 * r.ln_1p()).exp()
                }));
        }
        // r = e^v, pieces of length <= 1 in v
        let (a, b) = (x.ln(), y.ln());
        let pieces = ((b - a).ceil() as usize).max(1);
        let h = (b - a) / pieces as f64;
        return compensated_sum((0..pieces).flat_map(|k| {
            let lo = a + k as f64 * h;
            gl.iter().map(move |&(s, w)| {
                let v = lo + h * (1.0 + s) / 2.0;
                let r = v.exp();
                w * h / 2.0 * r * g(v, (-r).ln_1p(), r)
            })
        }));
    }
    if y == 1.0 {
        if e1 <= -1.0 {
            return f64::INFINITY;
        }
        let rule = gauss_jacobi(PIECE_NODES, e1, 0.0).expect("e1 > -1");
        let len = 1.0 - x;
        let scale = (len / 2.0).powf(e1 + 1.0);
        return scale
            * compensated_sum(rule.iter().map(|&(s, w)| {
                let r = x + len * (1.0 + s) / 2.0;
                w * (e0 * r.ln() + e2 * r.ln_1p()).exp()
            }));
    }
    // 1 - r = e^{-v}
    let (a, b) = (-(-x).ln_1p(), -(-y).ln_1p());
    let pieces = ((b - a).ceil() as usize).max(1);
    let h = (b - a) / pieces as f64;
    compensated_sum((0..pieces).flat_map(|k| {
        let lo = a + k as f64 * h;
        gl.iter().map(move |&(s, w)| {
            let v = lo + h * (1.0 + s) / 2.0;
            let om = (-v).exp();
            let r = 1.0 - om;
            w * h / 2.0 * om * g(r.ln(), -v, r)
        })
    }))
}

/// `(avg u)(avg u^{1-p'})^{p-1}` on `(x, y)` against `lambda_mu`.
pub fn interval_quotient(params: &ModelParams, u: &WeightSpec, p: f64, x: f64, y: f64) -> Result<f64> {
    if u.is_constant() {
        return Ok(1.0);
    }
    let (b, c) = match u {
        WeightSpec::RadialPower { b, c } => (*b, *c),
        _ => return Err(Error::InvalidParameter("interval quotients need a radial weight".into())),
    };
    let (d, mu) = (params.d() as f64, params.mu());
    let m0 = d - 1.0;
    let m1 = mu - 0.5;
    let s = 1.0 - dual(p);
    let mass = power_integral(x, y, m0, m1, m1);
    let iw = power_integral(x, y, m0 + c, m1 + b, m1);
    let iv = power_integral(x, y, m0 + s * c, m1 + s * b, m1);
    if !iv.is_finite() || !iw.is_finite() {
        return Err(Error::NonIntegrableWeight(format!("({x}, {y})")));
    }
    Ok((iw / mass) * (iv / mass).powf(p - 1.0))
}

/// Subintervals of `(0, 1)` whose gaps to `0` and to `1` run over
/// `n` log-spaced values down to `10^{-depth}`, plus `extra` random ones.
pub fn interval_sample(n: usize, depth: f64, extra: usize, seed: u64) -> Vec<(f64, f64)> {
    let gaps = crate::kernel_lab::log_grid(10f64.powf(-depth), 0.5, n);
    let mut out = Vec::new();
    for &g0 in &gaps {
        for &g1 in &gaps {
            let (x, y) = (g0, 1.0 - g1);
            if y > x {
                out.push((x, y));
            }
        }
        out.push((0.0, g0));
        out.push((1.0 - g0, 1.0));
        out.push((0.0, 1.0 - g0));
        out.push((g0, 1.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let a: f64 = rng.gen();
        let b: f64 = rng.gen();
        if a != b {
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

/// `[u]_p` on `(0, 1)` over the given intervals.
pub fn ap_interval(params: &ModelParams, u: &WeightSpec, p: f64, intervals: &[(f64, f64)]) -> Result<ApEstimate> {
    check_p(p)?;
    fold_sup(p, Space::Interval, interval_quotients(params, u, p, intervals))
}

fn interval_quotients(params: &ModelParams, u: &WeightSpec, p: f64, intervals: &[(f64, f64)]) -> Vec<Result<f64>> {
    crate::par::map_indexed(intervals.len(), |i| {
        interval_quotient(params, u, p, intervals[i].0, intervals[i].1)
    })
}

/// `int_Q dist(., pole)^e dsigma` over the cap of center `center`, radius `rho`.
pub fn cap_power_integral(pole: &[f64], center: &[f64], rho: f64, e: f64) -> f64 {
    let m = pole.len();
    let dd = sphere_dist(pole, center);
    let rho = rho.min(PI);
    if m == 2 {
        // arcs of theta in [0, pi] for the two points at distance theta from the pole
        let prim = |t: f64| t.powf(e + 1.0) / (e + 1.0);
        let mut acc = 0.0;
        for shift in [dd, -dd] {
            for k in [-1.0, 0.0, 1.0] {
                let lo = (shift - rho + 2.0 * PI * k).max(0.0);
                let hi = (shift + rho + 2.0 * PI * k).min(PI);
                if hi > lo {
                    if lo == 0.0 && e <= -1.0 {
                        return f64::INFINITY;
                    }
                    acc += prim(hi) - prim(lo);
                }
            }
        }
        return acc;
    }
    // S^2: polar coordinates about the pole
    let full_lo = (rho - dd).max(0.0);
    let mut acc = 0.0;
    if full_lo > 0.0 {
        if e <= -2.0 {
            return f64::INFINITY;
        }
        let rule = gauss_jacobi(PIECE_NODES, 0.0, e + 1.0).expect("e > -2");
        let scale = (full_lo / 2.0).powf(e + 2.0);
        acc += 2.0 * PI
            * scale
            * compensated_sum(rule.iter().map(|&(s, w)| {
                let t = full_lo * (1.0 + s) / 2.0;
                let sinc = if t == 0.0 { 1.0 } else { t.sin() / t };
                w * sinc
            }));
    }
    let lo = (dd - rho).abs();
    let hi_full = 2.0 * PI - dd - rho;
    let hi = (dd + rho).min(hi_full).min(PI);
    if hi > lo && dd > 0.0 {
        let gl = gauss_jacobi(4 * PIECE_NODES, 0.0, 0.0).expect("legendre");
        let (sd, cd, cr) = (dd.sin(), dd.cos(), rho.cos());
        acc += compensated_sum(gl.iter().map(|&(s, w)| {
            let tau = PI * (1.0 + s) / 2.0;
            let t = lo + (hi - lo) * (1.0 - tau.cos()) / 2.0;
            let jac = (hi - lo) * tau.sin() / 2.0 * PI / 2.0;
            let kappa = ((cr - t.cos() * cd) / (t.sin() * sd)).clamp(-1.0, 1.0);
            w * jac * t.powf(e) * t.sin() * 2.0 * kappa.acos()
        }));
    }
    if hi_full < PI {
        let a = hi_full.max(0.0);
        let gl = gauss_jacobi(PIECE_NODES, 0.0, 0.0).expect("legendre");
        let half = (PI - a) / 2.0;
        acc += 2.0 * PI * compensated_sum(gl.iter().map(|&(s, w)| {
            let t = a + half * (1.0 + s);
            w * half * t.powf(e) * t.sin()
        }));
    }
    acc
}

fn cap_area(m: usize, rho: f64) -> f64 {
    let rho = rho.min(PI);
    if m == 2 {
        2.0 * rho
    } else {
        2.0 * PI * (1.0 - rho.cos())
    }
}

/// Caps `(center, radius)` on `S^{d-1}`: radii log-uniform in `[1e-3, pi]`,
/// half of the centers within the cap radius of `pole`.
pub fn cap_sample(pole: &[f64], count: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let m = pole.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let rho = 1e-3 * (PI / 1e-3).powf(rng.gen::<f64>());
            let center = if i % 2 == 0 {
                // rotate the pole by an angle below rho
                let u = random_direction(&mut rng, m);
                let c: f64 = u.iter().zip(pole).map(|(a, b)| a * b).sum();
                let mut t: Vec<f64> = u.iter().zip(pole).map(|(a, b)| a - c * b).collect();
                let n = t.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                t.iter_mut().for_each(|v| *v /= n);
                let ang = rho * rng.gen::<f64>();
                pole.iter().zip(&t).map(|(p, q)| ang.cos() * p + ang.sin() * q).collect()
            } else {
                random_direction(&mut rng, m)
            };
            (center, rho)
        })
        .collect()
}

/// `[v]_p` on `S^{d-1}` over the given caps.
pub fn ap_sphere(v: &WeightSpec, p: f64, caps: &[(Vec<f64>, f64)]) -> Result<ApEstimate> {
    check_p(p)?;
    fold_sup(p, Space::Sphere, sphere_quotients(v, p, caps)?)
}

fn sphere_quotients(v: &WeightSpec, p: f64, caps: &[(Vec<f64>, f64)]) -> Result<Vec<Result<f64>>> {
    if v.is_constant() {
        return Ok(vec![Ok(1.0); caps.len()]);
    }
    let (pole, a) = match v {
        WeightSpec::SpherePower { pole, a } => (pole.clone(), *a),
        _ => return Err(Error::InvalidParameter("sphere quotients need a sphere weight".into())),
    };
    let s = 1.0 - dual(p);
    Ok(crate::par::map_indexed(caps.len(), |i| {
        let (c, rho) = &caps[i];
        let area = cap_area(pole.len(), *rho);
        let iw = cap_power_integral(&pole, c, *rho, a);
        let iv = cap_power_integral(&pole, c, *rho, s * a);
        if !iw.is_finite() || !iv.is_finite() {
            return Err(Error::NonIntegrableWeight(format!("cap {c:?}, radius {rho}")));
        }
        Ok((iw / area) * (iv / area).powf(p - 1.0))
    }))
}

/// `d_B`-balls with radii log-uniform in `[0.02, pi]`; a third centred
/// near the boundary, a third near the origin, a third uniform.
pub fn ball_region_sample(d: usize, count: usize, seed: u64) -> Vec<BallRegion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let dir = random_direction(&mut rng, d);
            let rho: f64 = match i % 3 {
                0 => 1.0 - 0.05 * rng.gen::<f64>(),
                1 => 0.05 * rng.gen::<f64>(),
                _ => rng.gen::<f64>().powf(1.0 / d as f64),
            };
            let r = 0.02 * (PI / 0.02).powf(rng.gen::<f64>());
            BallRegion {
                center: BallPoint::new(dir.iter().map(|v| rho * v).collect()).expect("inside"),
                radius: r,
            }
        })
        .collect()
}

/// `[w]_p` on `B` over the given balls, integrated by region rules of `order`.
pub fn ap_ball(params: &ModelParams, w: &WeightSpec, p: f64, regions: &[BallRegion], order: usize) -> Result<ApEstimate> {
    check_p(p)?;
    fold_sup(p, Space::Ball, ball_quotients(params, w, p, regions, order))
}

fn ball_quotients(params: &ModelParams, w: &WeightSpec, p: f64, regions: &[BallRegion], order: usize) -> Vec<Result<f64>> {
    if w.is_constant() {
        return vec![Ok(1.0); regions.len()];
    }
    let s = 1.0 - dual(p);
    crate::par::map_indexed(regions.len(), |i| {
        let reg = &regions[i];
        let rule = region_rule(params, &reg.center, reg.radius, order)?;
        let mass = rule.volume();
        let vals: Vec<f64> = (0..rule.len()).map(|k| w.ball(rule.node(k))).collect();
        let iw = compensated_sum(vals.iter().zip(rule.weights()).map(|(v, q)| q * v));
        let iv = compensated_sum(vals.iter().zip(rule.weights()).map(|(v, q)| q * v.powf(s)));
        if !iw.is_finite() || !iv.is_finite() {
            return Err(Error::NonIntegrableWeight(format!("B({:?}, {})", reg.center.coords(), reg.radius)));
        }
        Ok((iw / mass) * (iv / mass).powf(p - 1.0))
    })
}

/// Test regions for [`ap_constant`].
#[derive(Debug, Clone)]
pub enum RegionSample {
    Caps(Vec<(Vec<f64>, f64)>),
    Intervals(Vec<(f64, f64)>),
    /// Balls with the order of their region rules.
    Balls(Vec<BallRegion>, usize),
}

impl RegionSample {
    pub fn len(&self) -> usize {
        match self {
            RegionSample::Caps(v) => v.len(),
            RegionSample::Intervals(v) => v.len(),
            RegionSample::Balls(v, _) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn space(&self) -> Space {
        match self {
            RegionSample::Caps(_) => Space::Sphere,
            RegionSample::Intervals(_) => Space::Interval,
            RegionSample::Balls(..) => Space::Ball,
        }
    }
}

pub const MIN_REGIONS: usize = 200;

/// Sample supremum of the `A_p` quotient of `w` over at least 200 regions.
pub fn ap_constant(params: &ModelParams, w: &WeightSpec, p: f64, sample: &RegionSample) -> Result<ApEstimate> {
    if sample.len() < MIN_REGIONS {
        return Err(Error::InvalidParameter(format!(
            "A_p estimates need at least {MIN_REGIONS} regions, got {}",
            sample.len()
        )));
    }
    check_p(p)?;
    fold_sup(p, sample.space(), quotients(params, w, p, sample)?)
}

fn quotients(params: &ModelParams, w: &WeightSpec, p: f64, sample: &RegionSample) -> Result<Vec<Result<f64>>> {
    Ok(match sample {
        RegionSample::Caps(c) => sphere_quotients(w, p, c)?,
        RegionSample::Intervals(i) => {
            if w.is_constant() {
                vec![Ok(1.0); i.len()]
            } else {
                interval_quotients(params, w, p, i)
            }
        }
        RegionSample::Balls(b, order) => ball_quotients(params, w, p, b, *order),
    })
}

/// The `A_p` quotient of `w` on every region of the sample.
pub fn ap_quotients(params: &ModelParams, w: &WeightSpec, p: f64, sample: &RegionSample) -> Result<Vec<f64>> {
    check_p(p)?;
    quotients(params, w, p, sample)?.into_iter().collect()
}

/// Which branch of the construction produced a containment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainmentCase {
    Large,
    Central,
    Interior,
    Boundary,
}

/// `B(x, s) subset {r z' : r in I, z' in Q}` with `I = (lo, hi)` and
/// `Q = {dist(., dir) < cap_radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Containment {
    pub case: ContainmentCase,
    pub interval: (f64, f64),
    pub cap_center: Vec<f64>,
    pub cap_radius: f64,
    /// `lambda_mu(I) sigma(Q) / W_mu(B(x, s))`.
    pub quotient: f64,
}

impl Containment {
    pub fn contains(&self, z: &[f64]) -> bool {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        // points of the open ball may round onto the rim
        let below = r < self.interval.1 || self.interval.1 >= 1.0;
        if !(r > self.interval.0 && below) {
            return false;
        }
        if self.cap_radius >= PI {
            return true;
        }
        let dir: Vec<f64> = z.iter().map(|v| v / r).collect();
        sphere_dist(&dir, &self.cap_center) < self.cap_radius
    }
}

/// The interval and cap enclosing `B(x, s)`, by the three-case construction.
pub fn containment_construct(params: &ModelParams, x: &BallPoint, s: f64) -> Result<Containment> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
    }
    let d = params.d();
    let nx = x.norm();
    let h = x.height();
    let dir: Vec<f64> = if nx > 0.0 {
        x.coords().iter().map(|v| v / nx).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let (case, interval, cap_radius) = if s >= 1.0 / 6.0 {
        (ContainmentCase::Large, (0.0, 1.0), PI)
    } else if h > 2.0 * s && nx <= 2.0 * s {
        (ContainmentCase::Central, (0.0, 3.0 * s), PI)
    } else if h > 2.0 * s {
        let half = 1.5 * s * h;
        (
            ContainmentCase::Interior,
            ((nx - half).max(0.0), (nx + half).min(1.0)),
            PI * s / (2.0 * nx),
        )
    } else {
        (ContainmentCase::Boundary, ((1.0 - 9.0 * s * s).max(0.0).sqrt(), 1.0), PI * s)
    };
    let sigma = if cap_radius >= PI {
        params.sphere_area()
    } else {
        cap_area(d, cap_radius)
    };
    let lam = lambda_measure(params, interval.0, interval.1);
    let vol = ball_volume_polar(params, x, s);
    Ok(Containment {
        case,
        interval,
        cap_center: dir,
        cap_radius,
        quotient: lam * sigma / vol,
    })
}

/// `count` points of `B(x, s)`: uniform on the lifted cap, kept where the
/// last coordinate is nonnegative.
pub fn sample_ball(x: &BallPoint, s: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = x.dim();
    let mut c = x.coords().to_vec();
    c.push(x.height());
    let s = s.min(PI);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = sample_cap(&c, s, rng);
        if p[d] > 0.0 && dist_ball_coords(x.coords(), &p[..d]) < s {
            out.push(p[..d].to_vec());
        }
    }
    out
}

/// Uniform point of the cap `{dist(., c) < s}` on `S^d`.
fn sample_cap(c: &[f64], s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = c.len();
    let u = random_direction(rng, m);
    let k: f64 = u.iter().zip(c).map(|(a, b)| a * b).sum();
    let mut t: Vec<f64> = u.iter().zip(c).map(|(a, b)| a - k * b).collect();
    let n = t.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    t.iter_mut().for_each(|v| *v /= n);
    // angle with density sin^{m-2}; rejection against the bound at s
    let peak = if s < PI / 2.0 { s.sin() } else { 1.0 };
    let theta = loop {
        let th = s * rng.gen::<f64>();
        if rng.gen::<f64>() * peak.powi(m as i32 - 2) <= th.sin().powi(m as i32 - 2) {
            break th;
        }
    };
    c.iter().zip(&t).map(|(a, b)| theta.cos() * a + theta.sin() * b).collect()
}

/// Outcome of sampling one containment.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentCheck {
    pub containment: Containment,
    pub escaped: usize,
    /// Largest `dist(x/|x|, z/|z|) |x| / s` seen (below `pi/2` in the interior case).
    pub angle_ratio: f64,
}

pub fn check_containment(params: &ModelParams, x: &BallPoint, s: f64, points: usize, rng: &mut ChaCha8Rng) -> Result<ContainmentCheck> {
    let c = containment_construct(params, x, s)?;
    let zs = sample_ball(x, s, points, rng);
    let escaped = zs.iter().filter(|z| !c.contains(z)).count();
    let nx = x.norm();
    let mut angle_ratio = 0.0f64;
    if nx > 0.0 {
        for z in &zs {
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nz > 0.0 {
                let dz: Vec<f64> = z.iter().map(|v| v / nz).collect();
                angle_ratio = angle_ratio.max(sphere_dist(&dz, &c.cap_center) * nx / s);
            }
        }
    }
    Ok(ContainmentCheck {
        containment: c,
        escaped,
        angle_ratio,
    })
}

/// `(x, s)` pairs cycling through the four construction cases, each drawn
/// densest where its measure quotient peaks: small `s` and the rim for the
/// large case, the rim for the boundary case.
pub fn containment_sample(d: usize, count: usize, seed: u64) -> Vec<(BallPoint, f64)> {
    const S_MIN: f64 = 1e-3;
    let sixth = 1.0 / 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            let (s, rho) = match i % 4 {
                0 => (sixth * 1.5f64.powf(u.powi(4)), 1.0 - v.powi(4)),
                1 => {
                    let s = sixth * (S_MIN / sixth).powf(u * u);
                    (s, 2.0 * s * v)
                }
                2 => {
                    let s = S_MIN * (sixth / S_MIN).powf(u);
                    let hi = (1.0 - 4.0 * s * s).sqrt();
                    (s, 2.0 * s + (hi - 2.0 * s) * v)
                }
                _ => {
                    let s = S_MIN * (sixth / S_MIN).powf(u);
                    (s, (1.0 - (2.0 * s * v.powi(4)).powi(2)).sqrt())
                }
            };
            let rho = rho.min(1.0 - 1e-12);
            let dir = random_direction(&mut rng, d);
            (BallPoint::new(dir.iter().map(|t| rho * t).collect()).expect("inside"), s)
        })
        .collect()
}

fn ciaurri_exponents(params: &ModelParams, b: f64, c: f64, p: f64) -> ([f64; 2], [f64; 2]) {
    let (d, mu) = (params.d() as f64, params.mu());
    let pd = dual(p);
    let a0 = (d - 1.0) * (1.0 - p / 2.0);
    let a1 = mu * (1.0 - p / 2.0) - 0.5;
    // beta = ((1-r)^{1/2} alpha)^{1-p'} (1-r)^{-1/2}
    let b0 = a0 * (1.0 - pd);
    let b1 = (0.5 + a1) * (1.0 - pd) - 0.5;
    let s = 1.0 - pd;
    ([c + a0, b + a1], [s * c + b0, s * b + b1])
}

/// `sup_{0<x<y<1} (1-x)^{p/2} (y-x)^{-p} (int_x^y u alpha_p)(int_x^y u^{1-p'} beta_p)^{p-1}`
/// over an `n x n` grid, log-spaced in `1-y` and `y-x` down to `10^{-depth}`;
/// `inf` when either integrand is non-integrable at `0` or `1`.
pub fn ciaurri_condition(params: &ModelParams, u: &WeightSpec, p: f64, n: usize, depth: f64) -> Result<f64> {
    check_p(p)?;
    let (b, c) = match u {
        WeightSpec::RadialPower { b, c } => (*b, *c),
        WeightSpec::Constant => (0.0, 0.0),
        _ => return Err(Error::InvalidParameter("the Ciaurri condition takes a radial weight".into())),
    };
    let (ea, eb) = ciaurri_exponents(params, b, c, p);
    if ea.iter().chain(&eb).any(|e| *e <= -1.0) {
        return Ok(f64::INFINITY);
    }
    let lo = 10f64.powf(-depth);
    let one_minus_y = crate::kernel_lab::log_grid(lo, 1.0 - 1e-3, n);
    let frac = crate::kernel_lab::log_grid(lo, 1.0 - lo, n);
    let rows = crate::par::map_indexed(one_minus_y.len(), |i| {
        let y = 1.0 - one_minus_y[i];
        frac.iter()
            .map(|f| {
                let x = y - f * y;
                let ia = power_integral(x, y, ea[0], ea[1], 0.0);
                let ib = power_integral(x, y, eb[0], eb[1], 0.0);
                (1.0 - x).powf(p / 2.0) / (y - x).powf(p) * ia * ib.powf(p - 1.0)
            })
            .fold(0.0f64, f64::max)
    });
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// One weight of the implication scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicationRow {
    pub b: f64,
    pub c: f64,
    pub p: f64,
    pub ciaurri: [f64; 2],
    pub ap: [f64; 2],
    pub ciaurri_finite: bool,
    pub ap_finite: bool,
}

impl ImplicationRow {
    /// A finite Ciaurri supremum comes with a finite `A_p` estimate.
    pub fn holds(&self) -> bool {
        !self.ciaurri_finite || self.ap_finite
    }
}

/// A supremum counts as finite when deepening the grid from `10^{-6}` to
/// `10^{-12}` changes it by less than a factor `1.5`.
pub const GROWTH_FACTOR: f64 = 1.5;

pub const CIAURRI_GRID: usize = 100;

/// Ciaurri supremum and interval `A_p` estimate at two grid depths.
pub fn implication_check(params: &ModelParams, b: f64, c: f64, p: f64) -> Result<ImplicationRow> {
    if params.mu() < 0.0 {
        return Err(Error::InvalidParameter("the implication needs mu >= 0".into()));
    }
    let u = WeightSpec::radial_power_unchecked(b, c);
    let ci = [ciaurri_condition(params, &u, p, CIAURRI_GRID, 6.0)?, ciaurri_condition(params, &u, p, CIAURRI_GRID, 12.0)?];
    let ap_at = |depth: f64| -> Result<f64> {
        match ap_interval(params, &u, p, &interval_sample(30, depth, 0, 0)) {
            Ok(e) => Ok(e.constant),
            Err(Error::NonIntegrableWeight(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let ap = [ap_at(6.0)?, ap_at(12.0)?];
    let finite = |v: [f64; 2]| v[1].is_finite() && v[1] < GROWTH_FACTOR * v[0];
    Ok(ImplicationRow {
        b,
        c,
        p,
        ciaurri: ci,
        ap,
        ciaurri_finite: finite(ci),
        ap_finite: finite(ap),
    })
}
