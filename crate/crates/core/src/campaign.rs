//! Verification campaigns: each runs a family of numerical checks for one
//! `(d, mu)` and produces CSV tables plus a machine-readable summary.

use std::f64::consts::PI;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::csv::{fmt as cell, write_atomic, Table};
use crate::dirichlet::{
    carre_du_champ, dirichlet_form, hemisphere_scan, poincare_ratio, poincare_scan, punctured_grid, sample_caps,
    sample_regions, transfer_error, PoincareScan, SmoothTestFunction, TrigPolynomial,
};
use crate::error::{Error, Result};
use crate::geometry::{dist_ball, region_rule, BallPoint, ModelParams};
use crate::jacobi::{
    eigenvalue, fitted_growth_constant, q_envelope, stirling_bound_a, stirling_bound_b, MultiIndex,
};
use crate::kernel_lab::{
    gaussian_scan, hl_maximal_at, log_grid, maximal_function, maximal_t_grid, mixed_norm_ratio,
    random_square, stratified_pairs, weak_l1_ratio, weak_levels, weighted_lp_norm, GaussianScanConfig,
    GaussianScanReport,
};
use crate::quadrature::{ball_rule_for_degree, GridFunction, QuadratureRule};
use crate::spectral::{
    apply_heat, basis_values, chapman_kolmogorov_batch, gram_deviation, kernel_masses, HeatKernel, SpectralTransform,
    Truncation,
};
use crate::weights::{
    ap_quotients, cap_sample, check_containment, containment_sample, implication_check, interval_sample,
    product_weight, ball_region_sample, ContainmentCase, RegionSample, WeightSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Campaign {
    Basis,
    Kernel,
    Gaussian,
    Poincare,
    Intrinsic,
    Maximal,
    Weights,
}

impl Campaign {
    pub const ALL: [Campaign; 7] = [
        Campaign::Basis,
        Campaign::Kernel,
        Campaign::Gaussian,
        Campaign::Poincare,
        Campaign::Intrinsic,
        Campaign::Maximal,
        Campaign::Weights,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Campaign::Basis => "basis",
            Campaign::Kernel => "kernel",
            Campaign::Gaussian => "gaussian",
            Campaign::Poincare => "poincare",
            Campaign::Intrinsic => "intrinsic",
            Campaign::Maximal => "maximal",
            Campaign::Weights => "weights",
        }
    }

    /// The statement the campaign tests.
    pub fn claim(self) -> &'static str {
        match self {
            Campaign::Basis => "Q_{n,j,kappa} is orthonormal in L^2(W_mu); sup|Q_{n,j,kappa}| grows at most like e^n; Stirling-type inequalities",
            Campaign::Kernel => "L Q = lambda_n Q; h_t has unit mass and the semigroup property",
            Campaign::Gaussian => "C1 exp(-c1 d^2/t) / W(B(x,sqrt t)) <= h_t(x,y) <= C2 exp(-c2 d^2/t) / W(B(x,sqrt t))",
            Campaign::Poincare => "Dirichlet form diagonal on the basis; hemisphere transfer of Gamma; local Poincare inequality on d_B-balls and caps",
            Campaign::Intrinsic => "Gamma(f_{delta,eps}) <= 1 and f_{delta,eps}(x) - f_{delta,eps}(y) recovers d_B(x,y)",
            Campaign::Maximal => "H_* is bounded on L^p(w) for power A_p weights, weak (1,1), and comparable to the Hardy-Littlewood maximal function",
            Campaign::Weights => "v(x/|x|) u(|x|) is A_p with [w]_p <= C [v]_p [u]_p; B(x,s) lies in I x Q with comparable measure; Ciaurri condition implies A_p; mixed-norm bounds for H_*",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Campaign seed derived from the master seed by a fixed offset.
    pub fn seed(self, master: u64) -> u64 {
        let k = Self::ALL.iter().position(|c| *c == self).unwrap() as u64 + 1;
        master.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Below,
    AtMost,
    Equals,
    Holds,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::AtMost => "<=",
            Relation::Equals => "==",
            Relation::Holds => "holds",
        }
    }
}

/// One pass/fail criterion with the value it was decided on.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: Relation::Below, passed: value < limit }
    }

    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, relation: Relation::AtMost, passed: value <= limit }
    }

    pub fn equals(name: &str, value: f64, want: f64) -> Self {
        Self { name: name.into(), value, limit: want, relation: Relation::Equals, passed: value == want }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
            relation: Relation::Holds,
            passed: ok,
        }
    }
}

/// Outcome of one campaign.
#[derive(Debug, Clone)]
pub struct Report {
    pub campaign: Campaign,
    pub seed: u64,
    pub d: usize,
    pub mu: f64,
    pub checks: Vec<Check>,
    pub constants: Vec<(String, f64)>,
    pub tables: Vec<(String, Table)>,
    /// A hard numerical failure that stopped the campaign.
    pub error: Option<String>,
}

impl Report {
    fn new(campaign: Campaign, cfg: &RunConfig) -> Self {
        Self {
            campaign,
            seed: campaign.seed(cfg.seed()),
            d: cfg.count("model.d"),
            mu: cfg.real("model.mu"),
            checks: Vec::new(),
            constants: Vec::new(),
            tables: Vec::new(),
            error: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// `0` when every check passed, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    fn constant_push(&mut self, name: &str, v: f64) {
        self.constants.push((name.to_string(), v));
    }

    /// `key = value` lines: claim, status, every check, constants,
    /// tolerances and the failure list.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("campaign", self.campaign.name().into());
        line("claim", self.campaign.claim().into());
        line("status", if self.passed() { "pass" } else { "fail" }.into());
        line("seed", self.seed.to_string());
        line("model.d", self.d.to_string());
        line("model.mu", cell(self.mu));
        for c in &self.checks {
            line(
                &format!("check.{}", c.name),
                format!(
                    "{} value={} {} {}",
                    if c.passed { "pass" } else { "fail" },
                    cell(c.value),
                    c.relation.symbol(),
                    cell(c.limit)
                ),
            );
        }
        for (k, v) in &self.constants {
            line(&format!("constant.{k}"), cell(*v));
        }
        for c in &self.checks {
            if c.relation != Relation::Holds {
                line(&format!("tolerance.{}", c.name), cell(c.limit));
            }
        }
        for c in self.checks.iter().filter(|c| !c.passed) {
            line("failure", c.name.clone());
        }
        if let Some(e) = &self.error {
            line("failure", "error".into());
            line("error", e.clone());
        }
        s
    }

    /// Writes `<campaign>_<table>.csv` for every table and `<campaign>_summary.txt`.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, t) in &self.tables {
            let p = dir.join(format!("{}_{}.csv", self.campaign.name(), name));
            t.write(&p)?;
            out.push(p);
        }
        let p = dir.join(format!("{}_summary.txt", self.campaign.name()));
        write_atomic(&p, self.summary().as_bytes())?;
        out.push(p);
        Ok(out)
    }
}

/// Runs one campaign; numerical errors end up in [`Report::error`].
pub fn run(campaign: Campaign, cfg: &RunConfig) -> Report {
    let mut rep = Report::new(campaign, cfg);
    let res = match campaign {
        Campaign::Basis => basis(cfg, &mut rep),
        Campaign::Kernel => kernel(cfg, &mut rep),
        Campaign::Gaussian => gaussian(cfg, &mut rep),
        Campaign::Poincare => poincare(cfg, &mut rep),
        Campaign::Intrinsic => intrinsic(cfg, &mut rep),
        Campaign::Maximal => maximal(cfg, &mut rep),
        Campaign::Weights => weights(cfg, &mut rep),
    };
    if let Err(e) = res {
        rep.error = Some(e.to_string());
    }
    rep
}

fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}{i}")).collect()
}

fn header(parts: &[&[String]], tail: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = parts.iter().flat_map(|p| p.iter().cloned()).collect();
    h.extend(tail.iter().map(|s| s.to_string()));
    h
}

fn basis(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let n = cfg.count("basis.n_max");
    let tol = cfg.real("basis.tol");
    let rule = Arc::new(ball_rule_for_degree(&params, 2 * n)?);
    let tr = SpectralTransform::new(&params, n, rule)?;
    let dev = gram_deviation(&tr.gram_matrix());
    rep.checks.push(Check::below("gram_deviation", dev, tol));
    rep.constant_push("gram_deviation", dev);

    let mut rng = ChaCha8Rng::seed_from_u64(rep.seed);
    let m = cfg.count("basis.stirling_samples");
    let mut t = Table::new(&["x", "a", "y", "a_lower_margin", "a_upper_margin", "b_margin"]);
    let (mut bad_a, mut bad_b) = (0usize, 0usize);
    for _ in 0..m {
        let x = 10f64.powf(rng.gen_range(-3.0..3.0));
        let a = 10f64.powf(rng.gen_range(-3.0..2.0));
        let y = 10f64.powf(rng.gen_range(-3.0..3.0));
        let sa = stirling_bound_a(x, a);
        let sb = stirling_bound_b(x, y);
        bad_a += usize::from(!sa.holds);
        bad_b += usize::from(!sb.holds);
        t.push(&[x, a, y, sa.ln_value - sa.ln_lower, sa.ln_upper - sa.ln_value, sb.ln_bound - sb.ln_value]);
    }
    rep.checks.push(Check::equals("stirling_a_violations", bad_a as f64, 0.0));
    rep.checks.push(Check::equals("stirling_b_violations", bad_b as f64, 0.0));
    rep.tables.push(("stirling".into(), t));

    let rows = q_envelope(
        &params,
        cfg.count("basis.envelope_n_max"),
        cfg.count("basis.grid_radial"),
        cfg.count("basis.grid_angular"),
    )?;
    let mut t = Table::new(&["n", "envelope", "empirical", "exp_n", "envelope_over_exp_n"]);
    let mut dom = 0.0f64;
    for r in &rows {
        dom = dom.max(r.empirical / r.envelope);
        t.push(&[r.n as f64, r.envelope, r.empirical, r.exp_n, r.envelope / r.exp_n]);
    }
    rep.tables.push(("envelope".into(), t));
    // grid sup never exceeds the analytic envelope
    rep.checks.push(Check::at_most("empirical_over_envelope", dom, 1.0 + 1e-9));
    // envelope / e^n stops growing: the upper half of the degrees stays below the lower half
    let half = rows.len() / 2;
    let lo = rows[..half].iter().map(|r| r.envelope / r.exp_n).fold(0.0, f64::max);
    let hi = rows[half..].iter().map(|r| r.envelope / r.exp_n).fold(0.0, f64::max);
    rep.checks.push(Check::at_most("envelope_growth_tail_ratio", hi / lo, 1.0));
    rep.constant_push("envelope_growth_constant", fitted_growth_constant(&rows));
    Ok(())
}

/// Basis values on every node, indexed `[node][basis]`.
fn basis_table(params: &ModelParams, n_max: usize, rule: &QuadratureRule) -> Result<Vec<Vec<f64>>> {
    rule.nodes().map(|x| basis_values(params, n_max, x)).collect()
}

fn kernel(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let d = params.d();
    let trunc = cfg.truncation()?;
    let hk = HeatKernel::new(&params, trunc)?;

    // eigen-action of the spectral heat route
    let ne = cfg.count("kernel.eigen_n_max");
    let rule = Arc::new(ball_rule_for_degree(&params, 2 * ne + 2)?);
    let etr = Truncation::new(ne, trunc.tail_tol, trunc.t_min)?;
    let table = basis_table(&params, ne, &rule)?;
    let idx = MultiIndex::enumerate(d, ne);
    let mut t = Table::new(&["n", "j", "kappa", "t", "sup_error"]);
    let mut worst = 0.0f64;
    for (b, ix) in idx.iter().enumerate() {
        let q = GridFunction::new(rule.clone(), table.iter().map(|row| row[b]).collect())?;
        for time in [0.1, 1.0] {
            let h = apply_heat(&params, etr, time, &q)?;
            let damp = (-time * eigenvalue(&params, ix.n)).exp();
            let err = h.values().iter().zip(q.values()).map(|(a, b)| (a - damp * b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
            t.push(&[ix.n as f64, ix.j as f64, ix.kappa as f64, time, err]);
        }
    }
    rep.checks.push(Check::below("eigen_action", worst, cfg.real("kernel.eigen_tol")));
    rep.tables.push(("eigen_action".into(), t));

    // mass
    let np = cfg.count("kernel.points");
    let rule = ball_rule_for_degree(&params, cfg.count("kernel.rule_degree"))?;
    let pts = stratified_pairs(d, np, rep.seed);
    let times = [0.05, 0.2, 1.0, 5.0];
    let xs: Vec<Vec<f64>> = pts.iter().map(|p| p.0.clone()).collect();
    let masses = kernel_masses(&hk, &times, &xs, &rule)?;
    let mut t = Table::new(&header(&[&coord_header("x", d)], &["t", "mass", "error"]));
    let mut worst = 0.0f64;
    for (i, r) in masses.into_iter().enumerate() {
        for (&time, m) in times.iter().zip(r) {
            let mut row = pts[i].0.clone();
            row.extend([time, m, (m - 1.0).abs()]);
            t.push(&row);
            worst = worst.max((m - 1.0).abs());
        }
    }
    rep.checks.push(Check::below("mass_error", worst, cfg.real("kernel.mass_tol")));
    rep.constant_push("max_mass_error", worst);
    rep.tables.push(("mass".into(), t));

    // single evaluations with their error bounds
    let mut t = Table::new(&header(&[&coord_header("x", d), &coord_header("y", d)], &["t", "h", "tail_bound", "rounding"]));
    for (x, y) in &pts {
        for &time in &times {
            let v = hk.eval(time, x, y)?;
            let mut row = x.clone();
            row.extend(y);
            row.extend([time, v.value, v.tail_bound, v.rounding]);
            t.push(&row);
        }
    }
    rep.tables.push(("values".into(), t));

    // semigroup
    let mut rng = ChaCha8Rng::seed_from_u64(rep.seed ^ 0x636b);
    let pairs = stratified_pairs(d, np, rep.seed.wrapping_add(1));
    let st: Vec<(f64, f64)> = (0..np)
        .map(|_| (10f64.powf(rng.gen_range(-1.0..0.0)), 10f64.powf(rng.gen_range(-1.0..0.0))))
        .collect();
    let cases: Vec<_> = (0..np).map(|i| (st[i].0, st[i].1, pairs[i].0.clone(), pairs[i].1.clone())).collect();
    let rows = chapman_kolmogorov_batch(&hk, &cases, &rule)?;
    let mut t = Table::new(&header(&[&coord_header("x", d), &coord_header("y", d)], &["s", "t", "lhs", "rhs", "rel_error"]));
    let mut worst = 0.0f64;
    for (i, (lhs, rhs)) in rows.into_iter().enumerate() {
        let e = (lhs - rhs).abs() / rhs.abs();
        worst = worst.max(e);
        let mut row = pairs[i].0.clone();
        row.extend(&pairs[i].1);
        row.extend([st[i].0, st[i].1, lhs, rhs, e]);
        t.push(&row);
    }
    rep.checks.push(Check::below("chapman_kolmogorov", worst, cfg.real("kernel.ck_tol")));
    rep.constant_push("max_ck_rel_error", worst);
    rep.tables.push(("semigroup".into(), t));
    Ok(())
}

fn envelope_table(reps: &[(&str, &GaussianScanReport)]) -> Table {
    let mut t = Table::new(&["scan", "C1", "c1", "C2", "c2"]);
    for (name, r) in reps {
        t.push_labeled(&[name], &r.envelope.as_array());
    }
    t
}

fn gaussian(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let trunc = cfg.truncation()?;
    let base = GaussianScanConfig {
        params,
        trunc,
        t_min: cfg.real("gaussian.t_min"),
        t_max: cfg.real("gaussian.t_max"),
        count: cfg.count("gaussian.pairs"),
        seed: rep.seed,
    };
    let a = gaussian_scan(&base)?;
    let b = gaussian_scan(&GaussianScanConfig {
        trunc: Truncation { n_max: cfg.count("gaussian.n_max_refined"), ..trunc },
        ..base.clone()
    })?;
    let c = gaussian_scan(&GaussianScanConfig { count: 2 * base.count, ..base.clone() })?;
    let tol = cfg.real("gaussian.stability");
    let min_h = a.samples.iter().map(|s| s.h).fold(f64::INFINITY, f64::min);
    rep.checks.push(Check::holds("kernel_positive", min_h > 0.0));
    rep.checks.push(Check::holds("samples_inside_envelope", a.passes));
    rep.checks.push(Check::holds("c2_positive", a.envelope.c2 > 0.0));
    rep.checks.push(Check::below("n_max_stability", a.envelope.max_rel_change(&b.envelope), tol));
    rep.checks.push(Check::below("sample_stability", a.envelope.max_rel_change(&c.envelope), tol));
    let [c1b, c1, c2b, c2] = a.envelope.as_array();
    rep.constant_push("C1", c1b);
    rep.constant_push("c1", c1);
    rep.constant_push("C2", c2b);
    rep.constant_push("c2", c2);
    rep.constant_push("min_h", min_h);
    rep.tables.push(("samples".into(), a.table()));
    rep.tables.push(("envelopes".into(), envelope_table(&[("base", &a), ("n_max_refined", &b), ("doubled", &c)])));
    Ok(())
}

fn scan_table(d: usize, scan: &PoincareScan) -> Table {
    let cols = coord_header("c", d);
    let mut t = Table::new(&header(&[&cols], &["radius", "ratio", "lhs", "rhs", "nodes"]));
    for r in &scan.rows {
        let mut row = r.center.clone();
        row.resize(d, 0.0);
        row.extend([r.radius, r.ratio, r.lhs, r.rhs, r.nodes as f64]);
        t.push(&row);
    }
    t
}

fn poincare(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let d = params.d();
    let mut rng = ChaCha8Rng::seed_from_u64(rep.seed);

    // the form is diagonal on the basis
    let nf = cfg.count("poincare.form_n_max");
    let rule = ball_rule_for_degree(&params, 2 * nf + 2)?;
    let idx = MultiIndex::enumerate(d, nf);
    let fs = idx
        .iter()
        .map(|&i| SmoothTestFunction::basis_element(&params, i))
        .collect::<Result<Vec<_>>>()?;
    let errs = crate::par::map_indexed(fs.len(), |a| {
        (a..fs.len())
            .map(|b| {
                let want = if a == b { eigenvalue(&params, idx[a].n) } else { 0.0 };
                (dirichlet_form(&fs[a], &fs[b], &rule) - want).abs()
            })
            .fold(0.0, f64::max)
    });
    let form_err = errs.into_iter().fold(0.0, f64::max);
    rep.checks.push(Check::below("form_diagonal", form_err, cfg.real("poincare.form_tol")));
    rep.constant_push("form_max_error", form_err);

    // transfer to the hemisphere, per registered family
    let grid = punctured_grid(d, cfg.count("poincare.transfer_points"));
    let y: Vec<f64> = crate::dirichlet::random_direction(&mut rng, d).iter().map(|v| 0.5 * v).collect();
    let family: Vec<(&str, SmoothTestFunction)> = vec![
        ("trig", SmoothTestFunction::trig_polynomial(TrigPolynomial::random(d, 6, 4, &mut rng))?),
        ("basis", SmoothTestFunction::basis_element(&params, MultiIndex::new(d, 3, 1, 1)?)?),
        ("intrinsic", SmoothTestFunction::intrinsic(&BallPoint::new(y)?, 2e-3, 1e-3)?),
    ];
    let mut t = Table::new(&["family", "points", "max_rel_error"]);
    let mut worst = 0.0f64;
    for (name, f) in &family {
        let mut e = 0.0f64;
        for x in &grid {
            let x = BallPoint::new(x.clone())?;
            let gamma = carre_du_champ(f, f, &x)?;
            if gamma > 1e-20 {
                e = e.max(transfer_error(f, &x)?);
            }
        }
        worst = worst.max(e);
        t.push_labeled(&[name], &[grid.len() as f64, e]);
    }
    rep.checks.push(Check::below("transfer", worst, cfg.real("poincare.transfer_tol")));
    rep.tables.push(("transfer".into(), t));

    // Poincare scans
    let deg = cfg.count("poincare.degree");
    let fs: Vec<SmoothTestFunction> = (0..cfg.count("poincare.functions"))
        .map(|_| SmoothTestFunction::trig_polynomial(TrigPolynomial::random(d, deg, 4, &mut rng)))
        .collect::<Result<_>>()?;
    let order = cfg.count("poincare.order");
    let nreg = cfg.count("poincare.regions");
    let regions = sample_regions(d, nreg, 0.01, 1.0 / 6.0, rep.seed);
    let a = poincare_scan(&params, &fs, &regions, order)?;
    let b = poincare_scan(&params, &fs, &regions, 2 * order)?;
    let tol = cfg.real("poincare.stability");
    let finite = a.rows.iter().chain(&b.rows).all(|r| r.ratio.is_finite());
    rep.checks.push(Check::holds("ball_ratios_finite", finite));
    rep.checks.push(Check::below("ball_stability", (b.max_ratio / a.max_ratio - 1.0).abs(), tol));
    rep.constant_push("ball_max_ratio", a.max_ratio);
    rep.constant_push("ball_max_ratio_refined", b.max_ratio);

    let one = SmoothTestFunction::constant(d, 1.25);
    let mut const_max = 0.0f64;
    for reg in &regions {
        let rule = region_rule(&params, &reg.center, reg.radius, order)?;
        const_max = const_max.max(poincare_ratio(&one, reg, &rule)?.ratio);
    }
    rep.checks.push(Check::equals("constant_ratio", const_max, 0.0));

    let caps = sample_caps(d, nreg, 0.01, rep.seed.wrapping_add(1));
    let ha = hemisphere_scan(&params, &fs, &caps, order)?;
    let hb = hemisphere_scan(&params, &fs, &caps, 2 * order)?;
    let finite = ha.rows.iter().chain(&hb.rows).all(|r| r.ratio.is_finite());
    rep.checks.push(Check::holds("cap_ratios_finite", finite));
    rep.checks.push(Check::below("cap_stability", (hb.max_ratio / ha.max_ratio - 1.0).abs(), tol));
    rep.constant_push("cap_max_ratio", ha.max_ratio);
    rep.constant_push("cap_max_ratio_refined", hb.max_ratio);
    rep.constant_push("tau", crate::dirichlet::TAU);
    rep.tables.push(("ball_scan".into(), scan_table(d, &a)));
    rep.tables.push(("cap_scan".into(), scan_table(d + 1, &ha)));
    Ok(())
}

fn intrinsic(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let d = params.d();
    let (eps, delta) = (cfg.real("intrinsic.eps"), cfg.real("intrinsic.delta"));
    let grid: Vec<BallPoint> = punctured_grid(d, cfg.count("intrinsic.grid"))
        .into_iter()
        .map(BallPoint::new)
        .collect::<Result<_>>()?;
    let centers = stratified_pairs(d, cfg.count("intrinsic.centers"), rep.seed);
    let gam = crate::par::map_indexed(centers.len(), |i| -> Result<f64> {
        let f = SmoothTestFunction::intrinsic(&BallPoint::new(centers[i].0.clone())?, delta, eps)?;
        grid.iter().map(|x| carre_du_champ(&f, &f, x)).try_fold(0.0f64, |m, g| Ok(m.max(g?)))
    });
    let gmax = gam.into_iter().try_fold(0.0f64, |m, g| g.map(|g| m.max(g)))?;
    rep.checks.push(Check::at_most("gamma_max", gmax, 1.0 + 1e-8));
    rep.constant_push("gamma_max", gmax);

    let pairs = stratified_pairs(d, cfg.count("intrinsic.pairs"), rep.seed.wrapping_add(1));
    let tight = eps + 0.01 * (delta - eps);
    let rows = crate::par::map_indexed(pairs.len(), |i| -> Result<[f64; 4]> {
        let (x, y) = (&pairs[i].0, &pairs[i].1);
        let yb = BallPoint::new(y.clone())?;
        let db = dist_ball(&BallPoint::new(x.clone())?, &yb);
        let f = SmoothTestFunction::intrinsic(&yb, delta, eps)?;
        let g = SmoothTestFunction::intrinsic(&yb, tight, eps)?;
        let diff = f.value(x) - f.value(y);
        Ok([db, diff, (diff - db).abs(), (g.value(x) - g.value(y) - db).abs()])
    });
    let mut t = Table::new(&header(
        &[&coord_header("x", d), &coord_header("y", d)],
        &["d_B", "f_x_minus_f_y", "error", "error_delta_to_eps"],
    ));
    let (mut err, mut err_tight, mut lip) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (i, r) in rows.into_iter().enumerate() {
        let r = r?;
        err = err.max(r[2]);
        err_tight = err_tight.max(r[3]);
        lip = lip.max(r[1] - r[0]);
        let mut row = pairs[i].0.clone();
        row.extend(&pairs[i].1);
        row.extend(r);
        t.push(&row);
    }
    let tol = cfg.real("intrinsic.tol");
    rep.checks.push(Check::at_most("lipschitz", lip, 1e-9));
    rep.checks.push(Check::below("distance_recovery", err, tol));
    rep.constant_push("recovery_error", err);
    rep.constant_push("recovery_error_delta_to_eps", err_tight);
    // f(y) = arccos(((1+eps)/(1+delta))^2) is the offset at the diagonal
    rep.constant_push("diagonal_offset", (((1.0 + eps) / (1.0 + delta)).powi(2)).acos());
    rep.tables.push(("pairs".into(), t));
    Ok(())
}

const P_SET: [f64; 3] = [1.5, 2.0, 3.0];

/// Product power weights `dist(x', e_1)^a (1-r)^b` for `a, b` scaled into the
/// admissible ranges, kept when admissible at `p`.
fn power_family(params: &ModelParams, a_t: &[f64], b_t: &[f64], p: f64) -> Vec<(f64, f64, WeightSpec, WeightSpec)> {
    let d = params.d();
    let mut pole = vec![0.0; d];
    pole[0] = 1.0;
    let mut out = Vec::new();
    for &ta in a_t {
        for &tb in b_t {
            let a = ta * (d as f64 - 1.0);
            let b = tb * (params.mu() + 0.5);
            if let (Ok(v), Ok(u)) = (
                WeightSpec::sphere_power(pole.clone(), a, p),
                WeightSpec::radial_power(params, b, 0.0, p),
            ) {
                out.push((a, b, v, u));
            }
        }
    }
    out
}

struct MaximalSetup {
    rule: Arc<QuadratureRule>,
    fs: Vec<GridFunction>,
    hfs: Vec<GridFunction>,
}

fn maximal_setup(params: &ModelParams, degree: usize, extra: usize, t_count: usize, count: usize, seed: u64, t_min: f64) -> Result<MaximalSetup> {
    let n = 2 * degree;
    let rule = Arc::new(ball_rule_for_degree(params, 2 * n + extra)?);
    let tr = SpectralTransform::new(params, n, rule.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = maximal_t_grid(t_min, Some(t_count));
    let fs = (0..count).map(|_| random_square(&tr, degree, &mut rng)).collect::<Result<Vec<_>>>()?;
    let hfs = fs.iter().map(|f| maximal_function(&tr, f, &ts)).collect::<Result<Vec<_>>>()?;
    Ok(MaximalSetup { rule, fs, hfs })
}

fn lp_ratios(s: &MaximalSetup, family: &[(f64, f64, WeightSpec, WeightSpec)], p: f64) -> Result<Vec<f64>> {
    family
        .iter()
        .map(|(_, _, v, u)| {
            let w = product_weight(v, u)?;
            let wg = GridFunction::from_fn(s.rule.clone(), |x| w.ball(x));
            s.fs.iter()
                .zip(&s.hfs)
                .try_fold(0.0f64, |m, (f, hf)| Ok(m.max(weighted_lp_norm(hf, &wg, p)? / weighted_lp_norm(f, &wg, p)?)))
        })
        .collect()
}

/// Smallest ball radius of the Hardy-Littlewood comparison; `maximal.t_min` is its square.
const HL_RADIUS_MIN: f64 = 0.05;

fn maximal(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let deg = cfg.count("maximal.degree");
    let nf = cfg.count("maximal.functions");
    let tc = cfg.count("maximal.t_count");
    // band-limited inputs need no kernel truncation, so t reaches the smallest HL scale
    let t_min = cfg.real("maximal.t_min");
    let base = maximal_setup(&params, deg, 0, tc, nf, rep.seed, t_min)?;
    let fine = maximal_setup(&params, deg, 8, 2 * tc, nf, rep.seed, t_min)?;
    let tol = cfg.real("maximal.stability");
    let ts = [-0.5, 0.0, 0.5];
    let mut t = Table::new(&["p", "a", "b", "ratio", "ratio_refined"]);
    let (mut worst, mut finite) = (0.0f64, true);
    let mut top = (0.0f64, 0.0f64);
    for p in P_SET {
        let fam = power_family(&params, &ts, &ts, p);
        let ra = lp_ratios(&base, &fam, p)?;
        let rb = lp_ratios(&fine, &fam, p)?;
        for (i, (a, b, _, _)) in fam.iter().enumerate() {
            finite &= ra[i].is_finite() && rb[i].is_finite();
            worst = worst.max((rb[i] / ra[i] - 1.0).abs());
            top = (top.0.max(ra[i]), top.1.max(rb[i]));
            t.push(&[p, *a, *b, ra[i], rb[i]]);
        }
    }
    rep.checks.push(Check::holds("lp_ratios_finite", finite));
    rep.checks.push(Check::below("lp_stability", worst, tol));
    rep.constant_push("lp_max_ratio", top.0);
    rep.constant_push("lp_max_ratio_refined", top.1);
    rep.tables.push(("lp_ratios".into(), t));

    let one = GridFunction::constant(base.rule.clone(), 1.0);
    let mut weak = 0.0f64;
    for (f, hf) in base.fs.iter().zip(&base.hfs) {
        weak = weak.max(weak_l1_ratio(f, hf, &one, &weak_levels(hf))?);
    }
    rep.checks.push(Check::holds("weak_l1_finite", weak.is_finite() && weak > 0.0));
    rep.constant_push("weak_l1_max_ratio", weak);

    // small balls need many nodes, so the comparison runs on a denser rule at a strided subset of centres
    let hl = maximal_setup(&params, deg, cfg.count("maximal.hl_extra"), tc, nf, rep.seed, t_min)?;
    let n = hl.rule.len();
    let step = n.div_ceil(cfg.count("maximal.hl_centers").clamp(1, n));
    let centers: Vec<usize> = (0..n).step_by(step).collect();
    let radii = log_grid(HL_RADIUS_MIN, PI, cfg.count("maximal.radii"));
    let mut t = Table::new(&["f", "lower", "upper"]);
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for (i, (f, hf)) in hl.fs.iter().zip(&hl.hfs).enumerate() {
        let mf = hl_maximal_at(f, &radii, &centers);
        let (a, b) = centers
            .iter()
            .zip(&mf)
            .filter(|(_, m)| **m > 0.0)
            .map(|(&c, m)| hf.values()[c] / m)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        lo.push(a);
        hi.push(b);
        t.push(&[i as f64, a, b]);
    }
    let spread = |v: &[f64]| {
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0
    };
    let s = spread(&lo).max(spread(&hi));
    rep.checks.push(Check::below("hl_spread", s, cfg.real("maximal.hl_spread")));
    rep.constant_push("hl_lower", lo.iter().cloned().fold(f64::INFINITY, f64::min));
    rep.constant_push("hl_upper", hi.iter().cloned().fold(0.0, f64::max));
    rep.tables.push(("hl_comparability".into(), t));
    Ok(())
}

fn weights(cfg: &RunConfig, rep: &mut Report) -> Result<()> {
    let params = cfg.params()?;
    let d = params.d();
    let p = cfg.real("weights.p");
    let n_reg = cfg.count("weights.regions");
    let order = cfg.count("weights.order");
    let tol = cfg.real("weights.stability");
    let seed = rep.seed;

    // product family
    let fam = power_family(&params, &[-0.5, 0.0, 0.5], &[-0.25, 0.0, 0.5], p);
    let mut pole = vec![0.0; d];
    pole[0] = 1.0;
    let samples = |level: u64| {
        let k = 1 << level;
        (
            RegionSample::Caps(cap_sample(&pole, k * n_reg, seed + level)),
            RegionSample::Intervals(interval_sample(14 * k, 8.0 + 4.0 * level as f64, 100 * k, seed + level)),
            RegionSample::Balls(ball_region_sample(d, k * n_reg, seed + level), order + 4 * level as usize),
        )
    };
    let sup = |q: Vec<f64>| q.into_iter().fold(1.0f64, f64::max);
    let mut fit = [0.0f64; 2];
    let mut t = Table::new(&["level", "a", "b", "v_p", "u_p", "w_p", "ratio"]);
    let mut quot = Table::new(&["a", "b", "region", "quotient"]);
    for level in 0..2u64 {
        let (caps, ints, balls) = samples(level);
        for (a, b, v, u) in &fam {
            let w = product_weight(v, u)?;
            let qv = sup(ap_quotients(&params, v, p, &caps)?);
            let qu = sup(ap_quotients(&params, u, p, &ints)?);
            let qw_all = ap_quotients(&params, &w, p, &balls)?;
            if level == 0 {
                for (i, q) in qw_all.iter().enumerate() {
                    quot.push(&[*a, *b, i as f64, *q]);
                }
            }
            let qw = sup(qw_all);
            let r = qw / (qv * qu);
            fit[level as usize] = fit[level as usize].max(r);
            t.push(&[level as f64, *a, *b, qv, qu, qw, r]);
        }
    }
    rep.checks.push(Check::holds("product_fit_finite", fit[0].is_finite() && fit[0] > 0.0));
    rep.checks.push(Check::below("product_fit_stability", (fit[1] / fit[0] - 1.0).abs(), tol));
    rep.constant_push("C_fit", fit[0]);
    rep.constant_push("C_fit_refined", fit[1]);
    rep.tables.push(("product".into(), t));
    rep.tables.push(("ball_quotients".into(), quot));

    // containment
    let nc = cfg.count("weights.containment");
    let pts = cfg.count("weights.containment_points");
    let mut t = Table::new(&header(&[&coord_header("x", d)], &["s", "case", "i_lo", "i_hi", "cap_radius", "quotient", "escaped", "angle_ratio"]));
    let mut qmax = [0.0f64; 2];
    let (mut escaped, mut angle) = (0usize, 0.0f64);
    // the first `nc` draws are the base sample; all `2 nc` are its doubling
    let sample = containment_sample(d, 2 * nc, seed.wrapping_add(17));
    let rows = crate::par::map_indexed(sample.len(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
        check_containment(&params, &sample[i].0, sample[i].1, pts, &mut rng)
    });
    for (i, r) in rows.into_iter().enumerate() {
        let r = r?;
        let c = &r.containment;
        escaped += r.escaped;
        if c.case == ContainmentCase::Interior {
            angle = angle.max(r.angle_ratio);
        }
        qmax[1] = qmax[1].max(c.quotient);
        if i < nc {
            qmax[0] = qmax[0].max(c.quotient);
        }
        let case = match c.case {
            ContainmentCase::Large => 0.0,
            ContainmentCase::Central => 1.0,
            ContainmentCase::Interior => 2.0,
            ContainmentCase::Boundary => 3.0,
        };
        let mut row = sample[i].0.coords().to_vec();
        row.extend([sample[i].1, case, c.interval.0, c.interval.1, c.cap_radius, c.quotient, r.escaped as f64, r.angle_ratio]);
        t.push(&row);
    }
    rep.checks.push(Check::equals("containment_escapes", escaped as f64, 0.0));
    rep.checks.push(Check::below("interior_angle_ratio", angle, PI / 2.0));
    rep.checks.push(Check::below("containment_quotient_stability", qmax[1] / qmax[0] - 1.0, tol));
    rep.constant_push("containment_quotient_max", qmax[0]);
    rep.constant_push("containment_quotient_max_doubled", qmax[1]);
    rep.tables.push(("containment".into(), t));

    // Ciaurri condition against A_p on (0, 1)
    let mut t = Table::new(&["b", "c", "p", "ciaurri", "ciaurri_deep", "ap", "ap_deep", "ciaurri_finite", "ap_finite"]);
    let mut all = true;
    let unit = implication_check(&params, 0.0, 0.0, p)?;
    rep.checks.push(Check::holds("ciaurri_unit_weight_finite", unit.ciaurri_finite && unit.ap_finite));
    let m = params.mu() + 0.5;
    for pp in P_SET {
        for b in [-0.5 * m, 0.0, 0.5 * m * (pp - 1.0), 1.5 * m * (pp - 1.0)] {
            for c in [0.0, 0.5 * d as f64 * (pp - 1.0)] {
                let r = implication_check(&params, b, c, pp)?;
                all &= r.holds();
                let flag = |v: bool| if v { 1.0 } else { 0.0 };
                t.push(&[b, c, pp, r.ciaurri[0], r.ciaurri[1], r.ap[0], r.ap[1], flag(r.ciaurri_finite), flag(r.ap_finite)]);
            }
        }
    }
    rep.checks.push(Check::holds("ciaurri_implies_ap", all));
    rep.tables.push(("ciaurri".into(), t));

    // mixed norms of the maximal operator
    let nf = cfg.count("weights.mixed_functions");
    let deg = cfg.count("weights.mixed_degree");
    let t_min = cfg.real("maximal.t_min");
    let base = maximal_setup(&params, deg, 0, 40, nf, seed.wrapping_add(29), t_min)?;
    let fine = maximal_setup(&params, deg, 8, 80, nf, seed.wrapping_add(29), t_min)?;
    let ts = [-0.4, 0.0, 0.4];
    let mut t = Table::new(&["p", "q", "a", "b", "ratio", "ratio_refined"]);
    let (mut finite, mut worst, mut top) = (true, 0.0f64, 0.0f64);
    for p in P_SET {
        for q in P_SET {
            for &ta in &ts {
                for &tb in &ts {
                    let a = ta * (d as f64 - 1.0);
                    let b = tb * m;
                    let v = WeightSpec::sphere_power(pole.clone(), a, q)?;
                    let u = WeightSpec::radial_power(&params, b, 0.0, p)?;
                    let ratio = |s: &MaximalSetup| -> Result<f64> {
                        s.fs.iter().zip(&s.hfs).try_fold(0.0f64, |mx, (f, hf)| {
                            Ok(mx.max(mixed_norm_ratio(f, hf, p, q, |x: &[f64]| v.sphere(x), |r: f64| u.radial(r))?))
                        })
                    };
                    let (ra, rb) = (ratio(&base)?, ratio(&fine)?);
                    finite &= ra.is_finite() && rb.is_finite();
                    worst = worst.max((rb / ra - 1.0).abs());
                    top = top.max(ra);
                    t.push(&[p, q, a, b, ra, rb]);
                }
            }
        }
    }
    let c = GridFunction::constant(base.rule.clone(), 0.75);
    let tr = SpectralTransform::new(&params, 2 * deg, base.rule.clone())?;
    let hc = maximal_function(&tr, &c, &maximal_t_grid(t_min, Some(40)))?;
    let vq = WeightSpec::sphere_power(pole.clone(), 0.4 * (d as f64 - 1.0), 2.0)?;
    let uq = WeightSpec::radial_power(&params, 0.4 * m, 0.0, 2.0)?;
    let unit = mixed_norm_ratio(&c, &hc, 1.5, 3.0, |x: &[f64]| vq.sphere(x), |r: f64| uq.radial(r))?;
    rep.checks.push(Check::holds("mixed_ratios_finite", finite));
    rep.checks.push(Check::below("mixed_stability", worst, tol));
    rep.checks.push(Check::equals("mixed_constant_ratio", unit, 1.0));
    rep.constant_push("mixed_max_ratio", top);
    rep.tables.push(("mixed".into(), t));
    Ok(())
}

/// Runs `campaign` and writes its artifacts under the configured output directory.
pub fn run_and_write(campaign: Campaign, cfg: &RunConfig) -> io::Result<Report> {
    let rep = run(campaign, cfg);
    rep.write(&cfg.out_dir())?;
    Ok(rep)
}

/// `Err` for configurations the campaigns cannot run at all.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    if params.d() > 3 {
        return Err(Error::UnsupportedDimension(params.d()));
    }
    cfg.truncation()?;
    Ok(())
}
