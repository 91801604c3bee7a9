use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hcssp::bench::{
    brute_force_cssp, brute_force_hcssp, brute_force_hcssp_filtered, build_evacuation, random_cssp,
    random_hcssp, random_solution, rollout_solution, EvacuationSpec,
};
use hcssp::bnb::{
    branch_and_bound, initial_partition, split_longest_edge, BnbConfig, BnbError, Bounder,
    Partition,
};
use hcssp::cssp::PolicyValue;
use hcssp::hierarchy::{evaluate_solution, HcsspModel};
use hcssp::solver::{anytime_run, ZeroHeuristic};

const CSSP_INSTANCES: usize = 200;
const CSSP_TOLERANCE: f64 = 1e-6;
const DUALITY_TOLERANCE: f64 = 1e-7;
const HCSSP_INSTANCES: usize = 50;
const BNB_EPSILON: f64 = 1e-3;
const TRACE_TOLERANCE: f64 = 1e-9;
const PARTITION_PAIRS: usize = 100;
const BOUND_TOLERANCE: f64 = 1e-6;
const EVAC_DELTAS: [f64; 3] = [0.01, 1.0, 10.0];
const EVAC_BUDGET: Duration = Duration::from_secs(30);
const EVAC_GAP: f64 = 0.05;
const SNAPSHOT_FRACTION: f64 = 0.2;
const SNAPSHOT_DRIFT: f64 = 0.02;
const MC_SOLUTIONS: usize = 20;
const MC_EPISODES: usize = 100_000;
const MC_MAX_Z: f64 = 3.0;

struct Report {
    failures: Vec<usize>,
}

impl Report {
    fn line(&mut self, criterion: usize, pass: bool, detail: String) {
        if !pass {
            self.failures.push(criterion);
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        // bypass the harness capture so the verdicts show in plain test runs
        let _ = writeln!(
            std::io::stderr(),
            "criterion {criterion}: {verdict} ({detail})"
        );
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn hcssp_instances() -> Vec<HcsspModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..HCSSP_INSTANCES)
        .map(|_| random_hcssp(&mut rng, 3))
        .collect()
}

/// Criteria 1 and 2.
/// Returns the number of C-SSP trace rows violating criterion 4.
fn cssp_suite(report: &mut Report) -> usize {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut infeasible = 0;
    let mut worst_dual = f64::NEG_INFINITY;
    let mut duality_violations = 0;
    let mut trace_violations = 0;
    for _ in 0..CSSP_INSTANCES {
        let m = random_cssp(&mut rng, 6, 3);
        let oracle = brute_force_cssp(&m).expect("oracle");
        let run = anytime_run(&m, None, &ZeroHeuristic).expect("solve");
        match oracle.optimum {
            None => {
                infeasible += 1;
                if !run.is_certified_infeasible() {
                    mismatches += 1;
                }
            }
            Some(f) => {
                if run.is_certified_infeasible() || (run.upper_bound - f).abs() > CSSP_TOLERANCE {
                    mismatches += 1;
                }
                if let Some(d) = &run.dual {
                    worst_dual = worst_dual.max(d.dual_value - f);
                    if d.dual_value > f + DUALITY_TOLERANCE {
                        duality_violations += 1;
                    }
                }
                for w in run.trace.windows(2) {
                    if w[1].lb < w[0].lb || w[1].ub > w[0].ub {
                        trace_violations += 1;
                    }
                }
                for r in &run.trace {
                    if r.lb > f + TRACE_TOLERANCE || f > r.ub + TRACE_TOLERANCE {
                        trace_violations += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    report.line(
        1,
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!(
            "{CSSP_INSTANCES} C-SSPs, {infeasible} infeasible, {mismatches} mismatches, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    report.line(
        2,
        duality_violations == 0,
        format!("max L(lambda*) - f* = {worst_dual:.3e}, {duality_violations} violations"),
    );
    trace_violations
}

/// Criteria 3 and 4.
fn bnb_suite(report: &mut Report, cssp_trace_violations: usize) {
    let start = Instant::now();
    let config = BnbConfig {
        epsilon: BNB_EPSILON,
        l: None,
        ..BnbConfig::default()
    };
    let mut mismatches = 0;
    let mut infeasible = 0;
    let mut trace_violations = 0;
    let mut rows = 0;
    for m in hcssp_instances() {
        let oracle = brute_force_hcssp(&m).expect("oracle");
        match (oracle.optimum, branch_and_bound(&m, &config)) {
            (None, Err(BnbError::ConvergedInfeasible(_))) => infeasible += 1,
            (Some(f), Ok(out)) => {
                if out.alpha < f - TRACE_TOLERANCE || out.alpha - f > BNB_EPSILON {
                    mismatches += 1;
                }
                rows += out.trace.len();
                for w in out.trace.windows(2) {
                    if w[1].beta < w[0].beta || w[1].alpha > w[0].alpha {
                        trace_violations += 1;
                    }
                }
                for r in &out.trace {
                    if r.beta > f + TRACE_TOLERANCE || f > r.alpha + TRACE_TOLERANCE {
                        trace_violations += 1;
                    }
                }
            }
            _ => mismatches += 1,
        }
    }
    let elapsed = start.elapsed();
    report.line(
        3,
        mismatches == 0 && elapsed < Duration::from_secs(600),
        format!(
            "{HCSSP_INSTANCES} HC-SSPs, {infeasible} infeasible, {mismatches} mismatches, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    report.line(
        4,
        trace_violations == 0 && cssp_trace_violations == 0,
        format!(
            "{rows} branch-and-bound trace rows, {trace_violations} violations, {cssp_trace_violations} C-SSP trace violations"
        ),
    );
}

fn within(q: &Partition, e: usize, v: &PolicyValue, lower: bool) -> bool {
    q.keys()
        .iter()
        .enumerate()
        .filter(|(_, k)| k.0 == e)
        .all(|(j, &(_, i))| {
            let g = v.raw_g[i - 1];
            g <= q.hi()[j] + BOUND_TOLERANCE && (!lower || g >= q.lo()[j] - BOUND_TOLERANCE)
        })
}

/// Criterion 5.
fn partition_suite(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = hcssp_instances();
    let mut pairs = 0;
    let mut violations = 0;
    let mut finite = 0;
    while pairs < PARTITION_PAIRS {
        let m = &models[rng.gen_range(0..models.len())];
        let Ok(mut q) = initial_partition(m) else {
            continue;
        };
        for _ in 0..rng.gen_range(0..6) {
            let Ok((a, b)) = split_longest_edge(&q) else {
                break;
            };
            q = if rng.gen_bool(0.5) { a } else { b };
        }
        let bounder = Bounder::new(m, None).expect("bounder");
        let lb = bounder.compute_lb(&q).expect("lb");
        let ub = bounder.compute_ub(&q).expect("ub").alpha;
        let boxed = brute_force_hcssp_filtered(m, &|e, v| within(&q, e, v, true)).expect("oracle");
        let capped =
            brute_force_hcssp_filtered(m, &|e, v| within(&q, e, v, false)).expect("oracle");
        let boxed = boxed.optimum.unwrap_or(f64::INFINITY);
        let capped = capped.optimum.unwrap_or(f64::INFINITY);
        if lb > boxed + BOUND_TOLERANCE || capped > ub + BOUND_TOLERANCE {
            violations += 1;
        }
        if ub.is_finite() {
            finite += 1;
        }
        pairs += 1;
    }
    report.line(
        5,
        violations == 0,
        format!("{pairs} partitions, {finite} with a finite upper bound, {violations} violations"),
    );
}

/// Criterion 6.
fn evacuation_suite(report: &mut Report) {
    let text = std::fs::read_to_string(repo_root().join("data/evac_fig2_like.json"))
        .expect("evacuation spec");
    let base: EvacuationSpec = serde_json::from_str(&text).expect("evacuation spec");
    let mut details = Vec::new();
    let mut pass = true;
    for delta in EVAC_DELTAS {
        let spec = EvacuationSpec {
            delta,
            ..base.clone()
        };
        let m = build_evacuation(&spec).expect("build");
        let config = BnbConfig {
            l: Some(0),
            time_budget: Some(EVAC_BUDGET),
            ..BnbConfig::default()
        };
        let out = match branch_and_bound(&m, &config) {
            Ok(out) => out,
            Err(e) => {
                pass = false;
                details.push(format!("delta {delta}: {e}"));
                continue;
            }
        };
        let gap = out.relative_gap();
        let cutoff = SNAPSHOT_FRACTION * out.trace.last().map_or(0.0, |r| r.wall_time_s);
        let snapshot = out
            .trace
            .iter()
            .take_while(|r| r.wall_time_s <= cutoff)
            .last()
            .and_then(|r| r.incumbent_obj);
        let drift = snapshot.map_or(f64::INFINITY, |s| (s - out.alpha).abs() / out.alpha);
        pass &= out.solution.is_some() && gap < EVAC_GAP && drift <= SNAPSHOT_DRIFT;
        details.push(format!(
            "delta {delta}: alpha {:.3} gap {:.3}% snapshot drift {:.3}%",
            out.alpha,
            100.0 * gap,
            100.0 * drift
        ));
    }
    report.line(6, pass, details.join("; "));
}

/// Criterion 7.
fn rollout_suite(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < MC_SOLUTIONS {
        let m = random_hcssp(&mut rng, 3);
        let Some((rho, gamma)) = random_solution(&mut rng, &m, 50) else {
            continue;
        };
        let exact = evaluate_solution(&m, &rho, &gamma).expect("evaluation");
        let mc = rollout_solution(&m, &rho, &gamma, MC_EPISODES, checked as u64).expect("rollout");
        worst = worst.max(mc.z_score(exact.objective));
        checked += 1;
    }
    report.line(
        7,
        worst <= MC_MAX_Z,
        format!("{checked} solutions, {MC_EPISODES} episodes each, max |z| = {worst:.2}"),
    );
}

fn strip_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            [&cols[..1], &cols[2..]].concat().join(",")
        })
        .collect()
}

/// Criterion 8.
fn determinism_suite(report: &mut Report) {
    let dir = std::env::temp_dir().join(format!("hcssp-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let input = repo_root().join("data/evac_fig2_like.json");
    let mut runs = Vec::new();
    for run in 0..2 {
        let solution = dir.join(format!("solution{run}.json"));
        let trace = dir.join(format!("trace{run}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_hcssp"))
            .arg("solve")
            .arg(&input)
            .args(["--l", "0", "--max-iterations", "15"])
            .arg("--solution-out")
            .arg(&solution)
            .arg("--trace-out")
            .arg(&trace)
            .output()
            .expect("run hcssp");
        let sol = std::fs::read_to_string(&solution).unwrap_or_default();
        let tr = std::fs::read_to_string(&trace).unwrap_or_default();
        runs.push((status.status.code(), sol, strip_wall_time(&tr)));
    }
    let _ = std::fs::remove_dir_all(&dir);
    let same = runs[0] == runs[1];
    let ok = runs[0].0 == Some(0) && !runs[0].1.is_empty();
    report.line(
        8,
        same && ok,
        format!(
            "exit {:?}, {} trace rows, identical: {same}",
            runs[0].0,
            runs[0].2.len().saturating_sub(1)
        ),
    );
}

#[test]
fn acceptance_criteria() {
    let mut report = Report {
        failures: Vec::new(),
    };
    let cssp_trace_violations = cssp_suite(&mut report);
    bnb_suite(&mut report, cssp_trace_violations);
    partition_suite(&mut report);
    evacuation_suite(&mut report);
    rollout_suite(&mut report);
    determinism_suite(&mut report);
    assert!(
        report.failures.is_empty(),
        "failed criteria: {:?}",
        report.failures
    );
}
