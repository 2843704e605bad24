//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Environment:
//! - `BARTBORROW_ACCEPTANCE_REPS`: override the replication count of the
//!   simulation criteria (default 100) and the dataset count of the
//!   permutation criterion (default 50), for quick smoke runs.
//! - `BARTBORROW_ACUPUNCTURE`: path to the public acupuncture trial data;
//!   without it the real-data criterion is skipped.
//! - `BARTBORROW_ACUPUNCTURE_SCHEMA`: optional JSON schema for that file
//!   (default: the built-in acupuncture schema).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use bart_borrow::bart::{
    fit_bart, log_tree_structure_prior, BartData, BartHyper, DecisionTree, McmcConfig, MoveProbs,
    SplitRule, SplitSpace,
};
use bart_borrow::cli;
use bart_borrow::diagnostics::{default_permutation_settings, permutation_test_ci};
use bart_borrow::models::FitSettings;
use bart_borrow::posterior::Method;
use bart_borrow::rng::derive_seed;
use bart_borrow::sim::{
    cate_discrepancy, generate_scenario, run_replications, ReplicationReport, ScenarioSpec, Variant,
};
use bart_borrow::stats;

type Check = fn() -> Verdict;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn reps() -> usize {
    std::env::var("BARTBORROW_ACCEPTANCE_REPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(100)
}

fn perm_datasets() -> usize {
    std::env::var("BARTBORROW_ACCEPTANCE_REPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(50)
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn replicate(scenario: u8, variant: Variant, methods: &[Method], seed: u64) -> ReplicationReport {
    let spec = ScenarioSpec::new(scenario, variant, 0);
    run_replications(&spec, methods, reps(), &FitSettings::default(), seed)
        .expect("replications run")
        .0
}

fn row(r: &ReplicationReport, m: Method) -> &bart_borrow::sim::ReportRow {
    r.row(m.name()).expect("method present")
}

/// Criterion 1: Single root-only tree with fixed sigma against the closed-form
/// normal-normal posterior of the leaf mean.
fn conjugate_oracle() -> Verdict {
    let start = Instant::now();
    let n = 50;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 + 0.4 * (r[0] * 23.0).cos())
        .collect();
    let sigma = 0.3;
    let hyper = BartHyper {
        n_trees: 1,
        moves: MoveProbs::none(),
        sigma_fixed: Some(sigma),
        ..BartHyper::default()
    };
    let data = BartData::new(&rows, None, y.clone()).unwrap();
    let fit = fit_bart(&data, &hyper, &McmcConfig::new(20_100, 100, 17)).unwrap();
    let draws: Vec<f64> = fit
        .forests
        .iter()
        .map(|f| f.predict(&[0.5], 0).unwrap())
        .collect();

    // Outcome mapped to [-0.5, 0.5]: center c, width s; leaf prior sd 0.5 / k.
    let (lo, hi) = y
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let (c, s) = ((lo + hi) / 2.0, hi - lo);
    let tau = 0.5 / hyper.k_mu;
    let sig = sigma / s;
    let prec = n as f64 / (sig * sig) + 1.0 / (tau * tau);
    let post_mean = c + s * (y.iter().map(|v| (v - c) / s).sum::<f64>() / (sig * sig)) / prec;
    let post_sd = s / prec.sqrt();

    // Root-only draws are independent, so plain SEs apply.
    let l = draws.len() as f64;
    let mean_se = post_sd / l.sqrt();
    let sd_se = post_sd / (2.0 * (l - 1.0)).sqrt();
    let (m, sd) = (stats::mean(&draws), stats::sd(&draws));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        (m - post_mean).abs() < 3.0 * mean_se && (sd - post_sd).abs() < 3.0 * sd_se && secs < 10.0,
        format!(
            "mean {m:.6} vs {post_mean:.6} (3 SE = {:.2e}); sd {sd:.6} vs {post_sd:.6} (3 SE = {:.2e}); {secs:.2}s",
            3.0 * mean_se,
            3.0 * sd_se
        ),
    )
}

/// Enumerates every tree on a one-covariate grid with cut indices
/// `lo..hi` available at each pending node.
fn enumerate(
    tree: DecisionTree,
    pending: Vec<(usize, usize, usize)>,
    cuts: &[f64],
    out: &mut Vec<DecisionTree>,
) {
    let Some((&(node, lo, hi), rest)) = pending.split_first() else {
        out.push(tree);
        return;
    };
    enumerate(tree.clone(), rest.to_vec(), cuts, out);
    for k in lo..hi {
        let mut t = tree.clone();
        let (l, r) = t
            .grow(
                node,
                SplitRule::Threshold {
                    var: 0,
                    threshold: cuts[k],
                },
                0.0,
                0.0,
            )
            .unwrap();
        let mut next = rest.to_vec();
        next.push((l, lo, k));
        next.push((r, k + 1, hi));
        enumerate(t, next, cuts, out);
    }
}

/// Criterion 2: Prior mass over all trees on a two-cutpoint grid.
fn tree_prior_normalization() -> Verdict {
    let cuts = vec![0.25, 0.6];
    let space = SplitSpace::new(vec![cuts.clone()], 0);
    let mut trees = Vec::new();
    enumerate(
        DecisionTree::leaf(1, 0.0),
        vec![(0, 0, cuts.len())],
        &cuts,
        &mut trees,
    );
    let max_depth = trees
        .iter()
        .map(|t| t.depths().into_iter().max().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let h = BartHyper::default();
    let mass: f64 = trees
        .iter()
        .map(|t| log_tree_structure_prior(t, &h, &space).exp())
        .sum();
    // Term by term: the root stays a leaf, or splits at one of two cuts
    // (choice 1/2). That leaves one side without cuts (a leaf for sure) and
    // the other with one cut, which may split once (choice 1) into two
    // cut-free leaves.
    let p0 = h.rho;
    let p1 = h.rho * 2f64.powf(-h.kappa);
    let one_cut_side = (1.0 - p1) + p1 * 1.0;
    let closed = (1.0 - p0) + 2.0 * (p0 * 0.5) * one_cut_side;
    verdict(
        trees.len() == 5
            && max_depth <= 2
            && (mass - 1.0).abs() < 1e-9
            && (closed - 1.0).abs() < 1e-12,
        format!(
            "{} trees (max depth {max_depth}); total mass {mass:.15}",
            trees.len()
        ),
    )
}

fn power_ordering_detail(r: &ReplicationReport) -> String {
    r.rows
        .iter()
        .map(|x| {
            format!(
                "{} bias {:.2} rmse {:.2} cover {:.1} rej2 {:.1}",
                x.model, x.bias, x.rmse, x.cover, x.rej2
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Criterion 3: Scenario 1, conditional independence.
fn scenario_one() -> Verdict {
    let r = replicate(
        1,
        Variant::CondIndep,
        &[Method::Bart, Method::Hlm, Method::Nnhm],
        301,
    );
    let b = row(&r, Method::Bart);
    let (h, n) = (row(&r, Method::Hlm), row(&r, Method::Nnhm));
    verdict(
        in_range(b.bias, -2.0, 1.0)
            && in_range(b.rmse, 3.3, 5.3)
            && in_range(b.cover, 91.0, 99.0)
            && in_range(b.rej2, 67.0, 87.0)
            && b.rej2 > h.rej2
            && h.rej2 > n.rej2,
        power_ordering_detail(&r),
    )
}

/// Criterion 4: Scenario 3: every method unbiased, no efficiency loss for BART.
fn scenario_three() -> Verdict {
    let r = replicate(3, Variant::CondIndep, &Method::ALL, 303);
    let worst = r.rows.iter().map(|x| x.bias.abs()).fold(0.0, f64::max);
    let gap = (row(&r, Method::Bart).rmse - row(&r, Method::Nnhm).rmse).abs();
    verdict(
        worst < 1.5 && gap <= 1.5,
        format!(
            "max |bias| {worst:.2}; |RMSE BART - NNHM| {gap:.2}; {}",
            power_ordering_detail(&r)
        ),
    )
}

/// Criterion 5: Violated conditional independence.
fn violated() -> Verdict {
    let s2 = replicate(2, Variant::Violated, &[Method::Bart], 305);
    let s1 = replicate(1, Variant::Violated, &[Method::Bart, Method::Hlm], 306);
    let rej1 = row(&s2, Method::Bart).rej1;
    let (bp, hp) = (row(&s1, Method::Bart).rej2, row(&s1, Method::Hlm).rej2);
    verdict(
        in_range(rej1, 4.0, 16.0) && bp > hp,
        format!("scenario 2 BART %Rej.1 {rej1:.1}; scenario 1 power BART {bp:.1} vs HLM {hp:.1}"),
    )
}

/// Criterion 6: Four external sources, two of them shifted.
fn multi_source() -> Verdict {
    let methods = [Method::Bart, Method::Nnhm];
    let s1 = replicate(1, Variant::MultiSource, &methods, 307);
    let s2 = replicate(2, Variant::MultiSource, &methods, 308);
    let r = |rep: &ReplicationReport, m| row(rep, m).rmse;
    let failed: usize = [&s1, &s2]
        .iter()
        .map(|x| x.meta["failed_fits"].parse::<usize>().unwrap())
        .sum();
    verdict(
        failed == 0 && r(&s1, Method::Bart) < r(&s1, Method::Nnhm) && r(&s2, Method::Bart) < r(&s2, Method::Nnhm),
        format!(
            "scenario 1 RMSE BART {:.2} vs NNHM {:.2}; scenario 2 RMSE BART {:.2} vs NNHM {:.2}; failed fits {failed}",
            r(&s1, Method::Bart),
            r(&s1, Method::Nnhm),
            r(&s2, Method::Bart),
            r(&s2, Method::Nnhm)
        ),
    )
}

/// Criterion 7: Discrepancies computed from the known surfaces.
fn discrepancy_exactness() -> Verdict {
    let mut problems = Vec::new();
    for seed in 0..20u64 {
        let g = generate_scenario(&ScenarioSpec::new(3, Variant::Violated, seed)).unwrap();
        let d = 100.0 * cate_discrepancy(&g, 1).unwrap();
        if d != -20.0 {
            problems.push(format!("S3 violated seed {seed}: {d:?}"));
        }
        for sc in 1..=3 {
            let g = generate_scenario(&ScenarioSpec::new(sc, Variant::CondIndep, seed)).unwrap();
            let d = cate_discrepancy(&g, 1).unwrap();
            if d != 0.0 {
                problems.push(format!("S{sc} cond-indep seed {seed}: {d:?}"));
            }
        }
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "S3 violated = -20 exactly; cond-indep = 0 exactly (20 seeds each)".into()
        } else {
            problems.join("; ")
        },
    )
}

/// Criterion 8: Permutation test power and size.
fn permutation() -> Verdict {
    let (hyper, mcmc) = default_permutation_settings();
    let n = perm_datasets();
    let rate = |variant: Variant, base: u64| -> f64 {
        let small = (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let g = generate_scenario(&ScenarioSpec::new(3, variant, derive_seed(base, &[k])))
                    .unwrap();
                permutation_test_ci(&g.dataset, 100, &hyper, &mcmc, derive_seed(base + 1, &[k]))
                    .unwrap()
                    .p_value
                    < 0.05
            })
            .filter(|&b| b)
            .count();
        100.0 * small as f64 / n as f64
    };
    let power = rate(Variant::Violated, 800);
    let size = rate(Variant::CondIndep, 900);
    verdict(
        power >= 70.0 && size <= 12.0,
        format!("{n} datasets each: p < 0.05 in {power:.0}% shifted, {size:.0}% cond-indep"),
    )
}

fn cli_bytes(args: &[&str]) -> std::result::Result<Vec<u8>, String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(
        std::iter::once("bart-borrow").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    if code == 0 {
        Ok(out)
    } else {
        Err(String::from_utf8_lossy(&err).into_owned())
    }
}

/// Criterion 9: Trial-only BART on the real acupuncture data.
fn acupuncture() -> Verdict {
    let Ok(path) = std::env::var("BARTBORROW_ACUPUNCTURE") else {
        return Verdict::Skip("set BARTBORROW_ACUPUNCTURE to the trial data file to run".into());
    };
    let schema =
        std::env::var("BARTBORROW_ACUPUNCTURE_SCHEMA").unwrap_or_else(|_| "acupuncture".into());
    let out = match cli_bytes(&[
        "analyze",
        "--data",
        &path,
        "--schema",
        &schema,
        "--methods",
        "BART",
        "--estimand",
        "cate",
        "--seed",
        "2024",
    ]) {
        Ok(o) => String::from_utf8(o).unwrap(),
        Err(e) => return Verdict::Fail(format!("analyze failed: {e}")),
    };
    let line = out.lines().nth(1).unwrap_or_default();
    let f: Vec<f64> = line
        .split(',')
        .skip(2)
        .filter_map(|v| v.parse().ok())
        .collect();
    if f.len() < 4 {
        return Verdict::Fail(format!("unexpected output `{out}`"));
    }
    verdict(
        in_range(f[0], 3.5, 5.3) && in_range(f[3], 3.6, 5.6),
        format!(
            "CATE {:.2} (95% CI {:.2} to {:.2}, length {:.2})",
            f[0], f[1], f[2], f[3]
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Criterion 10: Two runs of every subcommand with the same seed, the second on a
/// different thread count.
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("acupuncture_synthetic.csv");
    let data = data.to_str().unwrap();
    let points = dir.path().join("points.csv");
    let points = points.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "simulate",
            "--scenario",
            "2",
            "--variant",
            "multi-source",
            "--seed",
            "10",
        ],
        vec![
            "replicate",
            "--scenario",
            "3",
            "--variant",
            "cond-indep",
            "--reps",
            "2",
            "--seed",
            "7",
        ],
        vec![
            "analyze",
            "--data",
            data,
            "--schema",
            "acupuncture",
            "--methods",
            "all",
            "--synth-external",
            "30",
            "--points",
            points,
            "--seed",
            "11",
        ],
        vec![
            "diagnose",
            "--scenario",
            "3",
            "--variant",
            "violated",
            "--n-perm",
            "10",
            "--seed",
            "12",
        ],
    ];
    let mut bad = Vec::new();
    for cmd in &commands {
        let a = cli_bytes(&[cmd.as_slice(), &["--threads", "1"]].concat());
        let pa = std::fs::read(points).ok();
        let b = cli_bytes(&[cmd.as_slice(), &["--threads", "2"]].concat());
        let pb = std::fs::read(points).ok();
        match (a, b) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() && pa == pb => {}
            (Err(e), _) | (_, Err(e)) => bad.push(format!("{} failed: {e}", cmd[0])),
            _ => bad.push(format!("{} output differs", cmd[0])),
        }
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            "simulate, replicate, analyze (+ points file), diagnose byte-identical".into()
        } else {
            bad.join("; ")
        },
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // selects criteria by number or title.
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, Check); 10] = [
        ("1 conjugate oracle", conjugate_oracle),
        ("2 tree prior normalization", tree_prior_normalization),
        ("3 scenario 1 operating characteristics", scenario_one),
        ("4 scenario 3 unbiasedness and efficiency", scenario_three),
        ("5 violated conditional independence", violated),
        ("6 multi-source RMSE ordering", multi_source),
        ("7 CATE discrepancy exactness", discrepancy_exactness),
        ("8 permutation test power and size", permutation),
        ("9 acupuncture trial-only BART", acupuncture),
        ("10 subcommand determinism", determinism),
    ];
    if reps() != 100 {
        println!(
            "note: BARTBORROW_ACCEPTANCE_REPS={} (reduced scale)",
            reps()
        );
    }
    let mut failed = 0;
    for (name, check) in criteria {
        let number = name.split(' ').next().unwrap_or_default();
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| f == number || (f.parse::<u32>().is_err() && name.contains(f.as_str())))
        {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{name}] {detail} ({secs:.1}s)");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
