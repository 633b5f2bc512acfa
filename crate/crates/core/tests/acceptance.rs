//! Acceptance run: every campaign over d in {2, 3} and mu in {0, 0.5, 1.5},
//! one PASS/FAIL line per criterion.
//!
//! The process exits 0 once every line is printed, so a FAIL is reported
//! without failing `cargo test`; set `BALLHEAT_ACCEPTANCE_STRICT=1` to turn
//! any FAIL into exit status 1.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ballheat::campaign::{self, Campaign, Check, Report};
use ballheat::config::RunConfig;

const DIMS: [usize; 2] = [2, 3];
const MUS: [f64; 3] = [0.0, 0.5, 1.5];
/// Configuration re-run for the determinism criterion.
const REPEAT: (usize, f64) = (2, 0.5);

struct Criterion {
    id: usize,
    title: &'static str,
    campaign: Campaign,
    checks: &'static [&'static str],
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "orthonormality", campaign: Campaign::Basis, checks: &["gram_deviation"] },
    Criterion { id: 2, title: "eigen-action", campaign: Campaign::Kernel, checks: &["eigen_action"] },
    Criterion { id: 3, title: "kernel mass", campaign: Campaign::Kernel, checks: &["mass_error"] },
    Criterion { id: 4, title: "Chapman-Kolmogorov", campaign: Campaign::Kernel, checks: &["chapman_kolmogorov"] },
    Criterion {
        id: 5,
        title: "Gaussian bounds",
        campaign: Campaign::Gaussian,
        checks: &["kernel_positive", "samples_inside_envelope", "c2_positive", "n_max_stability", "sample_stability"],
    },
    Criterion {
        id: 6,
        title: "intrinsic distance",
        campaign: Campaign::Intrinsic,
        checks: &["gamma_max", "distance_recovery"],
    },
    Criterion { id: 7, title: "Dirichlet form diagonal", campaign: Campaign::Poincare, checks: &["form_diagonal"] },
    Criterion { id: 8, title: "hemisphere transfer", campaign: Campaign::Poincare, checks: &["transfer"] },
    Criterion {
        id: 9,
        title: "Poincare inequality",
        campaign: Campaign::Poincare,
        checks: &["ball_ratios_finite", "ball_stability", "constant_ratio", "cap_ratios_finite", "cap_stability"],
    },
    Criterion {
        id: 10,
        title: "maximal operator",
        campaign: Campaign::Maximal,
        checks: &["lp_ratios_finite", "lp_stability", "weak_l1_finite", "hl_spread"],
    },
    Criterion {
        id: 11,
        title: "mixed norm",
        campaign: Campaign::Weights,
        checks: &["mixed_ratios_finite", "mixed_stability", "mixed_constant_ratio"],
    },
    Criterion {
        id: 12,
        title: "product weights",
        campaign: Campaign::Weights,
        checks: &[
            "product_fit_finite",
            "product_fit_stability",
            "containment_escapes",
            "interior_angle_ratio",
            "containment_quotient_stability",
        ],
    },
    Criterion {
        id: 13,
        title: "basis growth and Stirling",
        campaign: Campaign::Basis,
        checks: &["stirling_a_violations", "stirling_b_violations", "empirical_over_envelope", "envelope_growth_tail_ratio"],
    },
];

fn config(d: usize, mu: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.set("model.d", &d.to_string()).unwrap();
    cfg.set("model.mu", &mu.to_string()).unwrap();
    cfg
}

fn label(d: usize, mu: f64) -> String {
    format!("d={d} mu={mu}")
}

fn describe(k: &Check) -> String {
    format!("{}={:.3e} (limit {:.3e})", k.name, k.value, k.limit)
}

/// Worst-case value per check name across all configurations; for ratios and
/// errors that is the largest value.
fn worst<'a>(reports: impl Iterator<Item = &'a Report>, names: &[&str]) -> Vec<String> {
    let mut out = BTreeMap::new();
    for r in reports {
        for n in names {
            if let Some(k) = r.check(n) {
                let e = out.entry(n.to_string()).or_insert_with(|| k.clone());
                if !k.passed || (e.passed && k.value > e.value) {
                    *e = k.clone();
                }
            }
        }
    }
    names.iter().filter_map(|n| out.get(*n)).map(describe).collect()
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name()))
        .collect();
    names.sort();
    for name in names {
        if !name.to_string_lossy().ends_with(".csv") {
            continue;
        }
        let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(&name)).map_err(|e| format!("{}: {e}", name.to_string_lossy()))?;
        if x != y {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
        n += 1;
    }
    Ok(n)
}

fn main() -> ExitCode {
    let mut reports: BTreeMap<(Campaign, usize, usize), Report> = BTreeMap::new();
    let mut seconds: BTreeMap<Campaign, f64> = BTreeMap::new();
    let first = tempfile::tempdir().expect("temp dir");
    let second = tempfile::tempdir().expect("temp dir");

    for c in Campaign::ALL {
        for d in DIMS {
            for (m, mu) in MUS.iter().enumerate() {
                let cfg = config(d, *mu);
                let start = Instant::now();
                let rep = campaign::run(c, &cfg);
                *seconds.entry(c).or_default() += start.elapsed().as_secs_f64();
                eprintln!(
                    "  ran {c} {} in {:.1}s: {}",
                    label(d, *mu),
                    start.elapsed().as_secs_f64(),
                    if rep.passed() { "pass" } else { "fail" }
                );
                if (d, *mu) == REPEAT {
                    rep.write(first.path()).expect("write report");
                }
                reports.insert((c, d, m), rep);
            }
        }
    }

    let mut failed = 0;
    for cr in CRITERIA {
        let runs: Vec<(&Report, String)> = DIMS
            .iter()
            .flat_map(|&d| MUS.iter().enumerate().map(move |(m, mu)| (d, m, *mu)))
            .map(|(d, m, mu)| (&reports[&(cr.campaign, d, m)], label(d, mu)))
            .collect();
        let mut problems = Vec::new();
        for (r, l) in &runs {
            if let Some(e) = &r.error {
                problems.push(format!("{l}: error {e}"));
            }
            for n in cr.checks {
                match r.check(n) {
                    Some(k) if !k.passed => problems.push(format!("{l}: {}", describe(k))),
                    None if r.error.is_none() => problems.push(format!("{l}: {n} missing")),
                    _ => {}
                }
            }
        }
        let ok = problems.is_empty();
        failed += usize::from(!ok);
        println!(
            "{} {:>2} {} [{} configs, {} {:.1}s]: {}",
            if ok { "PASS" } else { "FAIL" },
            cr.id,
            cr.title,
            runs.len(),
            cr.campaign,
            seconds[&cr.campaign],
            worst(runs.iter().map(|(r, _)| *r), cr.checks).join(", ")
        );
        for p in problems {
            println!("        {p}");
        }
    }

    // determinism: every campaign again at one configuration, byte-compared
    let (d, mu) = REPEAT;
    let start = Instant::now();
    let cfg = config(d, mu);
    let verdict = Campaign::ALL
        .iter()
        .try_for_each(|&c| campaign::run(c, &cfg).write(second.path()).map(|_| ()).map_err(|e| e.to_string()))
        .and_then(|_| compare_dirs(first.path(), second.path()));
    match verdict {
        Ok(n) => println!(
            "PASS 14 determinism [{}, {:.1}s]: {n} CSV files byte-identical across two runs",
            label(d, mu),
            start.elapsed().as_secs_f64()
        ),
        Err(e) => {
            failed += 1;
            println!("FAIL 14 determinism [{}]: {e}", label(d, mu));
        }
    }

    println!("{} of 14 criteria passed", 14 - failed);
    let strict = std::env::var("BALLHEAT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
