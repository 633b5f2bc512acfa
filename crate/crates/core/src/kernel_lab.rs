//! Empirical checks of the heat kernel: Gaussian envelopes, the maximal
//! operator `H_* f = sup_t |H_t f|`, Hardy-Littlewood comparison and
//! weighted norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csv::Table;
use crate::error::{Error, Result};
use crate::geometry::{ball_volume_polar, dist_ball_coords, BallPoint, ModelParams};
use crate::jacobi::eigenvalue;
use crate::quadrature::{compensated_sum, GridFunction};
use crate::spectral::{HeatKernel, SpectralCoefficients, SpectralTransform, Truncation};

/// Ratio of consecutive times in scan grids.
pub const T_GRID_RATIO: f64 = 1.15;
/// Upper end of the maximal-function time grid.
pub const T_GRID_MAX: f64 = 10.0;
/// Levels of the weak-type distribution scan.
pub const WEAK_LEVELS: usize = 30;

/// `lo, lo q, lo q^2, ...` below `hi`, closed with `hi`.
pub fn geometric_grid(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = lo;
    while t < hi * (1.0 - 1e-12) {
        out.push(t);
        t *= ratio;
    }
    out.push(hi);
    out
}

/// `count` points evenly spaced in `log t` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScanConfig {
    pub params: ModelParams,
    pub trunc: Truncation,
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub seed: u64,
}

impl GaussianScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min >= self.trunc.t_min) {
            return Err(Error::InvalidParameter(format!(
                "scan t_min {} is below the truncation minimum {}",
                self.t_min, self.trunc.t_min
            )));
        }
        if !(self.t_max > self.t_min) {
            return Err(Error::InvalidParameter("t_max must exceed t_min".into()));
        }
        if self.count < 100 {
            return Err(Error::InvalidParameter(format!("need at least 100 pairs, got {}", self.count)));
        }
        Ok(())
    }

    pub fn t_grid(&self) -> Vec<f64> {
        geometric_grid(self.t_min, self.t_max, T_GRID_RATIO)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: f64,
    pub error_bound: f64,
    pub ball_vol: f64,
    pub dist: f64,
    /// `ln(h_t(x, y) W_mu(B(x, sqrt t)))`.
    pub log_ratio: f64,
}

impl GaussianSample {
    /// `d_B(x, y)^2 / t`.
    pub fn u(&self) -> f64 {
        self.dist * self.dist / self.t
    }
}

/// `ln C - c u` lines bounding the samples from above and below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub c1_big: f64,
    pub c1: f64,
    pub c2_big: f64,
    pub c2: f64,
}

impl Envelope {
    pub fn as_array(&self) -> [f64; 4] {
        [self.c1_big, self.c1, self.c2_big, self.c2]
    }

    /// Largest relative change of any constant against `other`.
    pub fn max_rel_change(&self, other: &Envelope) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScanReport {
    pub samples: Vec<GaussianSample>,
    pub envelope: Envelope,
    pub passes: bool,
}

impl GaussianScanReport {
    pub fn table(&self) -> Table {
        let d = self.samples.first().map_or(0, |s| s.x.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.extend((0..d).map(|i| format!("y{i}")));
        header.extend(["h", "error_bound", "ball_vol", "d_B", "u", "log_ratio"].map(String::from));
        let mut t = Table::new(&header);
        for s in &self.samples {
            let mut row = vec![s.t];
            row.extend(&s.x);
            row.extend(&s.y);
            row.extend([s.h, s.error_bound, s.ball_vol, s.dist, s.u(), s.log_ratio]);
            t.push(&row);
        }
        t
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, d: usize, r_lo: f64, r_hi: f64) -> Vec<f64> {
    let dir = crate::dirichlet::random_direction(rng, d);
    let (a, b) = (r_lo.powi(d as i32), r_hi.powi(d as i32));
    let r = rng.gen_range(a..=b).powf(1.0 / d as f64);
    dir.into_iter().map(|v| v * r).collect()
}

/// Pair `i` of the stratified sample: both points deep for `i = 0 mod 3`,
/// one within `0.05` of the boundary for `i = 1 mod 3`, both uniform otherwise.
/// Prefixes of a longer sample reproduce a shorter one.
pub fn stratified_pairs(d: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| match i % 3 {
            0 => (uniform_in(&mut rng, d, 0.0, 0.5), uniform_in(&mut rng, d, 0.0, 0.5)),
            1 => (uniform_in(&mut rng, d, 0.95, 1.0), uniform_in(&mut rng, d, 0.0, 1.0)),
            _ => (uniform_in(&mut rng, d, 0.0, 1.0), uniform_in(&mut rng, d, 0.0, 1.0)),
        })
        .collect()
}

/// Kernel samples over the stratified pairs and the time grid, plus the
/// diagonal `(x, x)` of every fifth pair, with fitted envelopes.
pub fn gaussian_scan(config: &GaussianScanConfig) -> Result<GaussianScanReport> {
    config.validate()?;
    let params = config.params;
    let kernel = HeatKernel::new(&params, config.trunc)?;
    let ts = config.t_grid();
    let damps = ts
        .iter()
        .map(|&t| kernel.damping(t, true))
        .collect::<Result<Vec<_>>>()?;
    let pairs = stratified_pairs(params.d(), config.count, config.seed);
    let per_pair = crate::par::map_indexed(pairs.len(), |i| -> Result<Vec<GaussianSample>> {
        let (x, y) = &pairs[i];
        let px = kernel.prepare(x, true)?;
        let py = kernel.prepare(y, true)?;
        let xb = BallPoint::new(x.clone())?;
        let mut out = Vec::new();
        let mut targets = vec![(y.clone(), &py)];
        if i % 5 == 0 {
            targets.push((x.clone(), &px));
        }
        for (damp, &t) in damps.iter().zip(&ts) {
            let vol = ball_volume_polar(&params, &xb, t.sqrt());
            for (yc, pt) in &targets {
                let kv = kernel.eval_prepared(damp, &px, pt)?;
                if !(kv.value > 0.0) {
                    return Err(Error::NonPositiveKernel { h: kv.value, t });
                }
                out.push(GaussianSample {
                    t,
                    x: x.clone(),
                    y: yc.clone(),
                    h: kv.value,
                    error_bound: kv.error_bound(),
                    ball_vol: vol,
                    dist: dist_ball_coords(x, yc),
                    log_ratio: (kv.value * vol).ln(),
                });
            }
        }
        Ok(out)
    });
    let mut samples = Vec::new();
    for s in per_pair {
        samples.extend(s?);
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.u(), s.log_ratio)).collect();
    let envelope = fit_envelope(&pts, ENVELOPE_ANCHOR)?;
    let slack = 1e-9;
    let inside = pts.iter().all(|&(u, l)| {
        l <= envelope.c2_big.ln() - envelope.c2 * u + slack && l >= envelope.c1_big.ln() - envelope.c1 * u - slack
    });
    let passes = inside
        && envelope.c2 > 0.0
        && envelope.c1_big <= envelope.c2_big
        && envelope.c2 <= envelope.c1
        && samples.iter().all(|s| s.h > 0.0);
    Ok(GaussianScanReport {
        samples,
        envelope,
        passes,
    })
}

/// Upper or lower convex hull of points sorted by abscissa.
fn hull(pts: &[(f64, f64)], upper: bool) -> Vec<(f64, f64)> {
    let mut h: Vec<(f64, f64)> = Vec::new();
    for &p in pts {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if (upper && cross >= 0.0) || (!upper && cross <= 0.0) {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h
}

/// Supporting line `(intercept, slope)` of a hull at abscissa `u0`.
fn support(h: &[(f64, f64)], u0: f64) -> (f64, f64) {
    if h.len() == 1 {
        return (h[0].1, 0.0);
    }
    let k = h.windows(2).position(|w| w[1].0 >= u0).unwrap_or(h.len() - 2);
    let (a, b) = (h[k], h[k + 1]);
    let slope = (b.1 - a.1) / (b.0 - a.0);
    (a.1 - slope * a.0, slope)
}

/// Abscissa `u = d^2/t = 1` where both envelope lines are made tight.
pub const ENVELOPE_ANCHOR: f64 = 1.0;

/// Linear programs over `(ln C, c)`: the upper line minimizes its height
/// `ln C - c u0` subject to lying above every sample, the lower one maximizes
/// it subject to lying below. The optima are the hull edges supporting the
/// samples at `u0`.
pub fn fit_envelope(pts: &[(f64, f64)], u0: f64) -> Result<Envelope> {
    if pts.len() < 2 {
        return Err(Error::InvalidParameter("envelope fit needs two samples".into()));
    }
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // keep one point per abscissa: the largest for the upper hull, the smallest for the lower
    let mut up: Vec<(f64, f64)> = Vec::new();
    let mut lo: Vec<(f64, f64)> = Vec::new();
    for &p in &sorted {
        match up.last_mut() {
            Some(q) if q.0 == p.0 => q.1 = q.1.max(p.1),
            _ => up.push(p),
        }
        match lo.last() {
            Some(q) if q.0 == p.0 => {}
            _ => lo.push(p),
        }
    }
    let (a2, s2) = support(&hull(&up, true), u0);
    let (a1, s1) = support(&hull(&lo, false), u0);
    Ok(Envelope {
        c1_big: a1.exp(),
        c1: -s1,
        c2_big: a2.exp(),
        c2: -s2,
    })
}

/// `sup_t |H_t f|` over `t_grid` together with the `t -> inf` limit, the
/// mean of `f`. Constants are returned unchanged.
pub fn maximal_function(tr: &SpectralTransform, f: &GridFunction, t_grid: &[f64]) -> Result<GridFunction> {
    if t_grid.len() < 40 {
        return Err(Error::InvalidParameter(format!(
            "time grid needs at least 40 points, got {}",
            t_grid.len()
        )));
    }
    let v = f.values();
    if v.iter().all(|x| *x == v[0]) {
        return Ok(f.map(f64::abs));
    }
    let coeffs = tr.analyze(f)?;
    let p = *tr.params();
    let mut best = tr.synthesize(&coeffs.scaled(|n| if n == 0 { 1.0 } else { 0.0 }))?.values().to_vec();
    best.iter_mut().for_each(|b| *b = b.abs());
    for &t in t_grid {
        let h = tr.synthesize(&coeffs.scaled(|n| (-t * eigenvalue(&p, n)).exp()))?;
        best.iter_mut().zip(h.values()).for_each(|(b, v)| *b = b.max(v.abs()));
    }
    GridFunction::new(tr.rule().clone(), best)
}

/// Time grid of the maximal operator: ratio `1.15` from `t_min` to `10`,
/// or `count` log-spaced points when given.
pub fn maximal_t_grid(t_min: f64, count: Option<usize>) -> Vec<f64> {
    match count {
        Some(n) => log_grid(t_min, T_GRID_MAX, n),
        None => {
            let g = geometric_grid(t_min, T_GRID_MAX, T_GRID_RATIO);
            if g.len() >= 40 {
                g
            } else {
                log_grid(t_min, T_GRID_MAX, 40)
            }
        }
    }
}

/// `Mf(x) = max_r W_mu(B(x,r))^{-1} int_{B(x,r)} |f| dW_mu` at every node,
/// with balls measured by the node weights.
pub fn hl_maximal(f: &GridFunction, radius_grid: &[f64]) -> Result<GridFunction> {
    let all: Vec<usize> = (0..f.rule().len()).collect();
    GridFunction::new(f.rule().clone(), hl_maximal_at(f, radius_grid, &all))
}

/// [`hl_maximal`] at the nodes `centers` only; the averages still run over every node.
pub fn hl_maximal_at(f: &GridFunction, radius_grid: &[f64], centers: &[usize]) -> Vec<f64> {
    let rule = f.rule();
    let n = rule.len();
    let vals: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let mut radii = radius_grid.to_vec();
    radii.sort_by(f64::total_cmp);
    crate::par::map_indexed(centers.len(), |c| {
        let xi = rule.node(centers[c]);
        let mut by_dist: Vec<(f64, usize)> = (0..n).map(|j| (dist_ball_coords(xi, rule.node(j)), j)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut mass, mut int) = (0.0, 0.0);
        let mut k = 0;
        let mut best = 0.0f64;
        for &r in &radii {
            while k < n && by_dist[k].0 < r {
                let j = by_dist[k].1;
                mass += rule.weight(j);
                int += rule.weight(j) * vals[j];
                k += 1;
            }
            if mass > 0.0 {
                best = best.max(int / mass);
            }
        }
        best
    })
}

/// `(int |f|^p w dW_mu)^{1/p}` on the rule.
pub fn weighted_lp_norm(f: &GridFunction, w: &GridFunction, p: f64) -> Result<f64> {
    if !f.same_rule(w) {
        return Err(Error::RuleMismatch);
    }
    let rule = f.rule();
    let s = compensated_sum(
        f.values()
            .iter()
            .zip(w.values())
            .enumerate()
            .map(|(i, (v, wv))| rule.weight(i) * wv * v.abs().powf(p)),
    );
    Ok(s.powf(1.0 / p))
}

/// `WEAK_LEVELS` log-spaced levels over `[0.01, 1] ||f||_inf`.
pub fn weak_levels(f: &GridFunction) -> Vec<f64> {
    let sup = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    log_grid(0.01 * sup, sup, WEAK_LEVELS)
}

/// `max_lambda lambda w{hf > lambda} / ||f||_{L^1(w)}`.
pub fn weak_l1_ratio(f: &GridFunction, hf: &GridFunction, w: &GridFunction, levels: &[f64]) -> Result<f64> {
    if !f.same_rule(w) || !f.same_rule(hf) {
        return Err(Error::RuleMismatch);
    }
    let norm = weighted_lp_norm(f, w, 1.0)?;
    if norm == 0.0 {
        return Ok(0.0);
    }
    let rule = f.rule();
    let mut best = 0.0f64;
    for &lam in levels {
        let m = compensated_sum(
            hf.values()
                .iter()
                .zip(w.values())
                .enumerate()
                .filter(|(_, (h, _))| **h > lam)
                .map(|(i, (_, wv))| rule.weight(i) * wv),
        );
        best = best.max(lam * m / norm);
    }
    Ok(best)
}

/// `(int_0^1 (int_S |g(r x')|^q v dsigma)^{p/q} u(r) dlambda_mu)^{1/p}` on a
/// product rule.
pub fn mixed_norm<V, U>(g: &GridFunction, p: f64, q: f64, v: V, u: U) -> Result<f64>
where
    V: Fn(&[f64]) -> f64,
    U: Fn(f64) -> f64,
{
    let rule = g.rule();
    let layout = rule
        .layout()
        .ok_or_else(|| Error::InvalidParameter("mixed norms need a product rule".into()))?;
    let n_a = layout.directions.len();
    let vw: Vec<f64> = layout
        .directions
        .iter()
        .zip(&layout.direction_weights)
        .map(|(dir, w)| w * v(dir))
        .collect();
    let outer = compensated_sum(layout.radial.iter().enumerate().map(|(i, &(r, wr))| {
        let inner = compensated_sum((0..n_a).map(|a| vw[a] * g.values()[i * n_a + a].abs().powf(q)));
        wr * u(r) * inner.powf(p / q)
    }));
    Ok(outer.powf(1.0 / p))
}

/// `mixed_norm(H_* f) / mixed_norm(f)`, zero for `f = 0`.
pub fn mixed_norm_ratio<V, U>(f: &GridFunction, hf: &GridFunction, p: f64, q: f64, v: V, u: U) -> Result<f64>
where
    V: Fn(&[f64]) -> f64 + Copy,
    U: Fn(f64) -> f64 + Copy,
{
    let den = mixed_norm(f, p, q, v, u)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(mixed_norm(hf, p, q, v, u)? / den)
}

/// `(min, max)` of `a / b` over nodes where `b > 0`.
pub fn comparability(a: &GridFunction, b: &GridFunction) -> (f64, f64) {
    a.values()
        .iter()
        .zip(b.values())
        .filter(|(_, b)| **b > 0.0)
        .map(|(a, b)| a / b)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// `(sum_a c_a Q_a)^2` with `c_a` uniform in `[-1, 1]` over `n <= degree`;
/// nonnegative with spectral degree `2 degree`. Synthesized on the nodes of `tr`.
pub fn random_square(tr: &SpectralTransform, degree: usize, rng: &mut ChaCha8Rng) -> Result<GridFunction> {
    if degree > tr.n_max() {
        return Err(Error::InvalidParameter(format!("degree {degree} exceeds the transform's {}", tr.n_max())));
    }
    let d = tr.params().d();
    let m = crate::jacobi::MultiIndex::enumerate(d, degree).len();
    let mut c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.resize(crate::jacobi::MultiIndex::enumerate(d, tr.n_max()).len(), 0.0);
    let p = tr.synthesize(&SpectralCoefficients::from_values(d, tr.n_max(), c)?)?;
    GridFunction::new(tr.rule().clone(), p.values().iter().map(|v| v * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::basis_values;
    use std::sync::Arc;
    use crate::quadrature::{ball_rule_for_degree, integrate, QuadratureRule};

    fn p(d: usize, mu: f64) -> ModelParams {
        ModelParams::new(d, mu).unwrap()
    }

    #[test]
    fn grids() {
        let g = geometric_grid(0.05, 10.0, 1.15);
        assert_eq!(*g.last().unwrap(), 10.0);
        assert!(g.windows(2).all(|w| w[1] / w[0] <= 1.15 + 1e-12));
        assert!(maximal_t_grid(0.05, None).len() >= 40);
        let l = log_grid(1.0, 100.0, 3);
        assert!((l[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_of_a_line_is_the_line() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let e = fit_envelope(&pts, 5.0).unwrap();
        assert!((e.c2 - 0.5).abs() < 1e-12 && (e.c1 - 0.5).abs() < 1e-12);
        assert!((e.c2_big - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn envelope_bounds_scattered_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0..10.0);
                (u, -u + rng.gen_range(-1.0..1.0))
            })
            .collect();
        let e = fit_envelope(&pts, 5.0).unwrap();
        for &(u, l) in &pts {
            assert!(l <= e.c2_big.ln() - e.c2 * u + 1e-12);
            assert!(l >= e.c1_big.ln() - e.c1 * u - 1e-12);
        }
        assert!(e.c2 > 0.5 && e.c2 < 1.5 && e.c1 > 0.5 && e.c1 < 1.5);
    }

    #[test]
    fn pairs_are_prefix_stable() {
        let a = stratified_pairs(3, 30, 5);
        let b = stratified_pairs(3, 60, 5);
        assert_eq!(a[..], b[..30]);
        for (i, (x, _)) in a.iter().enumerate() {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            match i % 3 {
                0 => assert!(r < 0.5),
                1 => assert!(r > 0.95 && r <= 1.0),
                _ => assert!(r <= 1.0),
            }
        }
    }

    #[test]
    fn small_gaussian_scan() {
        let params = p(2, 0.5);
        let cfg = GaussianScanConfig {
            params,
            trunc: Truncation::default(),
            t_min: 0.05,
            t_max: 5.0,
            count: 100,
            seed: 3,
        };
        let rep = gaussian_scan(&cfg).unwrap();
        assert!(rep.passes, "{:?}", rep.envelope);
        assert!(rep.samples.iter().all(|s| s.h > 0.0));
        // t -> inf: h W(B(x, sqrt t)) -> 1
        let last: Vec<_> = rep
            .samples
            .iter()
            .filter(|s| s.t == 5.0 && s.ball_vol == params.total_mass())
            .collect();
        assert!(!last.is_empty());
        assert!(last.iter().all(|s| (s.log_ratio).abs() < 1e-3));
        assert!(rep.envelope.c1_big <= 1.0 && rep.envelope.c2_big >= 1.0);
        let bad = GaussianScanConfig { t_min: 0.01, ..cfg.clone() };
        assert!(gaussian_scan(&bad).is_err());
        let bad = GaussianScanConfig { count: 99, ..cfg };
        assert!(gaussian_scan(&bad).is_err());
    }

    fn setup(d: usize, mu: f64, n_max: usize) -> (ModelParams, Arc<QuadratureRule>, SpectralTransform) {
        let params = p(d, mu);
        let rule = Arc::new(ball_rule_for_degree(&params, 2 * n_max).unwrap());
        let tr = SpectralTransform::new(&params, n_max, rule.clone()).unwrap();
        (params, rule, tr)
    }

    #[test]
    fn maximal_function_examples() {
        let (params, rule, tr) = setup(2, 0.5, 8);
        let ts = maximal_t_grid(0.05, None);
        let c = GridFunction::constant(rule.clone(), 2.0);
        assert_eq!(maximal_function(&tr, &c, &ts).unwrap().values(), c.values());
        assert!(maximal_function(&tr, &c, &ts[..10]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_square(&tr, 4, &mut rng).unwrap();
        let g = random_square(&tr, 4, &mut rng).unwrap();
        let hf = maximal_function(&tr, &f, &ts).unwrap();
        let hg = maximal_function(&tr, &g, &ts).unwrap();
        let sum = GridFunction::new(rule.clone(), f.values().iter().zip(g.values()).map(|(a, b)| a + b).collect()).unwrap();
        let hs = maximal_function(&tr, &sum, &ts).unwrap();
        let avg = integrate(&f) / params.total_mass();
        for i in 0..rule.len() {
            assert!(hf.values()[i] >= avg - 1e-12);
            assert!(hs.values()[i] <= hf.values()[i] + hg.values()[i] + 1e-12);
        }
        let fine = maximal_function(&tr, &f, &maximal_t_grid(0.05, Some(80))).unwrap();
        let coarse = maximal_function(&tr, &f, &maximal_t_grid(0.05, Some(40))).unwrap();
        let sup = fine.values().iter().fold(0.0f64, |m, v| m.max(*v));
        assert!(fine.sup_distance(&coarse).unwrap() < 0.01 * sup);
    }

    #[test]
    fn random_square_matches_pointwise_basis() {
        let (params, rule, tr) = setup(3, 1.5, 6);
        let f = random_square(&tr, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c: Vec<f64> = (0..crate::jacobi::MultiIndex::enumerate(3, 3).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (i, x) in rule.nodes().enumerate().step_by(17) {
            let p: f64 = basis_values(&params, 3, x).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum();
            assert!((f.values()[i] - p * p).abs() < 1e-10 * (1.0 + p * p));
        }
        assert!(random_square(&tr, 7, &mut rng).is_err());
    }

    #[test]
    fn hl_maximal_examples() {
        let (params, rule, tr) = setup(2, 0.5, 6);
        let radii = log_grid(0.05, std::f64::consts::PI, 16);
        let c = GridFunction::constant(rule.clone(), 3.0);
        let mc = hl_maximal(&c, &radii).unwrap();
        assert!(mc.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_square(&tr, 3, &mut rng).unwrap();
        let mf = hl_maximal(&f, &radii).unwrap();
        let avg = integrate(&f) / params.total_mass();
        assert!(mf.values().iter().all(|v| *v >= avg * (1.0 - 1e-12)));
        let hf = maximal_function(&tr, &f, &maximal_t_grid(0.05, None)).unwrap();
        let (lo, hi) = comparability(&hf, &mf);
        assert!(lo > 0.1 && hi < 10.0, "{lo} {hi}");
    }

    #[test]
    fn weighted_and_mixed_norms() {
        let (params, rule, tr) = setup(3, 0.5, 6);
        let one = GridFunction::constant(rule.clone(), 1.0);
        assert!((weighted_lp_norm(&one, &one, 2.0).unwrap() - params.total_mass().sqrt()).abs() < 1e-12);
        let q = SpectralTransform::new(&params, 6, rule.clone()).unwrap();
        let c = GridFunction::constant(rule.clone(), 0.7);
        let hc = maximal_function(&q, &c, &maximal_t_grid(0.05, None)).unwrap();
        assert_eq!(mixed_norm_ratio(&c, &hc, 1.5, 3.0, |_| 1.0, |r| r.powf(0.3)).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_square(&tr, 3, &mut rng).unwrap();
        let hf = maximal_function(&tr, &f, &maximal_t_grid(0.05, None)).unwrap();
        // p = q with trivial weights is the unweighted L^p ratio
        let mixed = mixed_norm_ratio(&f, &hf, 2.0, 2.0, |_| 1.0, |_| 1.0).unwrap();
        let lp = weighted_lp_norm(&hf, &one, 2.0).unwrap() / weighted_lp_norm(&f, &one, 2.0).unwrap();
        assert!((mixed - lp).abs() < 1e-12 * lp);
        assert!(lp.is_finite() && lp > 0.0);
        let zero = GridFunction::constant(rule.clone(), 0.0);
        assert_eq!(mixed_norm_ratio(&zero, &zero, 2.0, 2.0, |_| 1.0, |_| 1.0).unwrap(), 0.0);
        let weak = weak_l1_ratio(&f, &hf, &one, &weak_levels(&f)).unwrap();
        assert!(weak.is_finite() && weak > 0.0);
    }
}
