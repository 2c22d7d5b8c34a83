//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! P9 runs only when `TRACEFL_EXTERNAL_CORPUS` points at a directory of
//! traced bug bundles; `TRACEFL_EXTERNAL_MODEL` optionally supplies the model
//! for the `ours` row.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tracefl_core::ablation::{run_ablation, AblationAxis, AblationSpec, AblationTable};
use tracefl_core::corpus::bundle::load_corpus;
use tracefl_core::corpus::split::{split, SplitSpec};
use tracefl_core::corpus::synth::{generate_synthetic, FaultModel, SynthSpec};
use tracefl_core::evalrank::{evaluate, Method, RankedBug, TOP_N};
use tracefl_core::gbdt::binning::BinnedMatrix;
use tracefl_core::gbdt::tree::{best_split, build_histogram, split_gain, GrowParams};
use tracefl_core::gbdt::{feature_importance, sigmoid, train, window_level_importance, Dataset, Hyperparams, Model};
use tracefl_core::pipeline::{
    dataset_from_features, evaluate_methods, featurize_all, BugFeatures, EvalBug, FeatureConfig, MethodResult,
};
use tracefl_core::spectra::{formula_scores, spectra_rows, Counters, Epsilon};
use tracefl_core::trace::{aggregate, BugRecord, Step, TestTrace, Verdict};
use tracefl_core::window::{contextualize, FeatureSchema, GroupMask};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- P1

fn random_bug(rng: &mut ChaCha8Rng, id: usize) -> BugRecord {
    let n_lines = rng.gen_range(1..=50u32);
    let n_tests = rng.gen_range(2..=10usize);
    let fail_at = rng.gen_range(0..n_tests);
    let pass_at = (fail_at + 1) % n_tests;
    let traces = (0..n_tests)
        .map(|t| {
            let verdict = if t == fail_at || (t != pass_at && rng.gen_bool(0.3)) {
                Verdict::Fail
            } else {
                Verdict::Pass
            };
            let len = rng.gen_range(1..=60);
            let mut prev = 0;
            let steps = (0..len)
                .map(|_| {
                    let line = rng.gen_range(1..=n_lines);
                    let s = Step::new(line, prev);
                    prev = line;
                    s
                })
                .collect();
            TestTrace::new(format!("t{t}"), verdict, steps)
        })
        .collect();
    BugRecord {
        bug_id: format!("rand-{id}"),
        source_lines: (1..=n_lines).map(|i| format!("x{i} = {i}")).collect(),
        traces,
        buggy_lines: BTreeSet::from([1]),
    }
}

fn p1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = Epsilon::default();
    let mut rows_checked = 0;
    for id in 0..200 {
        let bug = random_bug(&mut rng, id);
        bug.validate().map_err(|e| e.to_string())?;
        let (pass, fail) = aggregate(&bug);
        let rows = spectra_rows(&pass, &fail, eps);

        // naive recount straight from the traces
        let by = |v: Verdict| bug.traces.iter().filter(move |t| t.verdict == v);
        let n_p = by(Verdict::Pass).count() as u32;
        let n_f = by(Verdict::Fail).count() as u32;
        let steps_p: usize = by(Verdict::Pass).map(|t| t.steps.len()).sum();
        let steps_f: usize = by(Verdict::Fail).map(|t| t.steps.len()).sum();
        let executed: BTreeSet<u32> = bug.traces.iter().flat_map(|t| t.steps.iter().map(|s| s.line)).collect();
        ensure(rows.iter().map(|r| r.line).eq(executed.iter().copied()), || {
            format!("{}: row lines differ from executed lines", bug.bug_id)
        })?;
        for r in &rows {
            let covers = |v: Verdict| by(v).filter(|t| t.steps.iter().any(|s| s.line == r.line)).count() as u32;
            let count = |v: Verdict| by(v).flat_map(|t| t.steps.iter()).filter(|s| s.line == r.line).count() as u64;
            let (e_p, e_f) = (covers(Verdict::Pass), covers(Verdict::Fail));
            let exact = (r.counters.e_p, r.counters.e_f, r.counters.n_p(), r.counters.n_f(), r.count_pass, r.count_fail)
                == (e_p, e_f, n_p - e_p, n_f - e_f, count(Verdict::Pass), count(Verdict::Fail))
                && (r.counters.total_pass, r.counters.total_fail) == (n_p, n_f);
            ensure(exact, || format!("{} line {}: integer counters differ", bug.bug_id, r.line))?;
            let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
            let expected = [
                ratio(count(Verdict::Pass) as f64, steps_p as f64),
                ratio(count(Verdict::Fail) as f64, steps_f as f64),
                ratio(e_p as f64, n_p as f64),
                ratio(e_f as f64, n_f as f64),
            ];
            let got = [r.exec_pass_norm, r.exec_fail_norm, r.pass_rate, r.fail_rate];
            for (g, e) in got.iter().zip(expected) {
                ensure((g - e).abs() <= 1e-12, || format!("{} line {}: ratio {g} vs {e}", bug.bug_id, r.line))?;
            }
            rows_checked += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("200 bugs, {rows_checked} rows exact, {:.2}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------- P2

fn p2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = 1e-9;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let total_pass = rng.gen_range(0..=60u32);
        let total_fail = rng.gen_range(0..=60u32);
        let e_p = rng.gen_range(0..=total_pass);
        let e_f = rng.gen_range(0..=total_fail);
        let c = Counters { e_p, e_f, total_pass, total_fail };
        let s = formula_scores(c, Epsilon::new(eps).unwrap());

        let (ep, ef, np_, nf) = (e_p as f64, e_f as f64, total_pass as f64, total_fail as f64);
        let ochiai_outside = ef / ((nf * (ef + ep)).sqrt() + eps);
        let ochiai_inside = ef / (nf * (ef + ep) + eps).sqrt();
        let dstar2 = ef.powi(2) / (ep + (nf - ef) + eps);
        let pass_frac = ep / (np_ + eps);
        let fail_frac = ef / (nf + eps);
        let tarantula = 1.0 - pass_frac / (pass_frac + fail_frac + eps);

        for (label, got, want) in [
            ("ochiai", s.ochiai, ochiai_outside),
            ("ochiai(eps under root)", s.ochiai, ochiai_inside),
            ("dstar2", s.dstar2, dstar2),
            ("tarantula", s.tarantula, tarantula),
        ] {
            let err = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(err);
            ensure(got.is_finite() && err <= 1e-8, || format!("{label} {c:?}: {got} vs {want}"))?;
        }
        ensure((0.0..=1.0).contains(&s.ochiai), || format!("ochiai {} out of [0,1] for {c:?}", s.ochiai))?;
    }
    Ok(format!("1000 configurations, max rel err {worst:.1e}"))
}

// ---------------------------------------------------------------- P3

fn p3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut vectors = 0;
    for &w in &[1usize, 3, 5] {
        let schema = FeatureSchema::new(&GroupMask::all(), w, -1.0).map_err(|e| e.to_string())?;
        let n = schema.base_len();
        let spectral = schema.spectral_indices();
        let m = spectral.len();
        for _ in 0..20 {
            let lines: BTreeSet<u32> = (0..rng.gen_range(1..25)).map(|_| rng.gen_range(1..=30u32)).collect();
            let base: BTreeMap<u32, Vec<f64>> = lines
                .iter()
                .map(|&l| (l, (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()))
                .collect();
            let out = contextualize("b", &base, &BTreeSet::new(), &schema);
            ensure(out.len() == base.len(), || "one vector per base line".into())?;
            for v in &out {
                ensure(v.values.len() == w * n + 2 * m, || format!("length {} at w={w}", v.values.len()))?;
                let h = (w / 2) as i64;
                for (k, off) in (-h..=h).enumerate() {
                    let neighbor = i64::from(v.line) + off;
                    let src = u32::try_from(neighbor).ok().and_then(|l| base.get(&l));
                    for j in 0..n {
                        let want = src.map_or(-1.0, |s| s[j]);
                        ensure(v.values[k * n + j] == want, || {
                            format!("w={w} line {} offset {off} feature {j}", v.line)
                        })?;
                    }
                }
                if v.line == 1 && w > 1 {
                    ensure(v.values[..n].iter().all(|&x| x == -1.0), || "line 1 not padded before".into())?;
                }
                let focal = &base[&v.line];
                for (k, &idx) in spectral.iter().enumerate() {
                    let (lo, hi) = (v.values[w * n + 2 * k], v.values[w * n + 2 * k + 1]);
                    ensure(lo <= focal[idx] && focal[idx] <= hi, || format!("min/max do not bracket at line {}", v.line))?;
                }
                vectors += 1;
            }
        }
    }
    Ok(format!("{vectors} vectors over w in {{1,3,5}}, slots and bounds exact"))
}

// ---------------------------------------------------------------- P4

fn brute_rank(scores: &BTreeMap<u32, f64>, line: u32) -> usize {
    let s = scores[&line];
    1 + scores.iter().filter(|&(&l, &x)| x > s || (x == s && l < line)).count()
}

fn p4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bugs = Vec::new();
    for i in 0..20 {
        let n = rng.gen_range(1..=15u32);
        // coarse scores so ties are common
        let scores: BTreeMap<u32, f64> = (1..=n).map(|l| (l, f64::from(rng.gen_range(0..4)) / 4.0)).collect();
        let single = i % 2 == 0;
        let buggy: BTreeSet<u32> = if single {
            BTreeSet::from([rng.gen_range(1..=n + 2)])
        } else {
            (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=n + 2)).collect()
        };
        let bug = RankedBug::new(format!("h{i}"), &scores, buggy.clone()).map_err(|e| e.to_string())?;

        let present: Vec<usize> = buggy.iter().filter(|l| scores.contains_key(l)).map(|&l| brute_rank(&scores, l)).collect();
        let (first, avg) = if present.is_empty() {
            (f64::from(n + 1), f64::from(n + 1))
        } else {
            (*present.iter().min().unwrap() as f64, present.iter().sum::<usize>() as f64 / present.len() as f64)
        };
        ensure(bug.first_rank == first && bug.avg_rank == avg, || {
            format!("h{i}: ranks ({}, {}) vs ({first}, {avg})", bug.first_rank, bug.avg_rank)
        })?;
        if single {
            ensure(bug.first_rank == bug.avg_rank, || format!("h{i}: single-line MAR != MFR"))?;
        }
        bugs.push((bug, present.is_empty()));
    }
    let report = evaluate("test", &bugs.iter().map(|(b, _)| b.clone()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let mfr = bugs.iter().map(|(b, _)| b.first_rank).sum::<f64>() / 20.0;
    let mar = bugs.iter().map(|(b, _)| b.avg_rank).sum::<f64>() / 20.0;
    ensure(report.mfr == mfr && report.mar == mar, || "MFR/MAR mismatch".into())?;
    for k in TOP_N {
        let hits = bugs.iter().filter(|(b, unranked)| !unranked && b.first_rank <= k as f64).count();
        ensure(report.top[&k] == hits as f64 / 20.0, || format!("Top-{k} mismatch"))?;
    }
    let singles: Vec<RankedBug> = bugs.iter().step_by(2).map(|(b, _)| b.clone()).collect();
    let single_report = evaluate("single", &singles).map_err(|e| e.to_string())?;
    ensure(single_report.mfr == single_report.mar, || "MAR != MFR on single-line set".into())?;

    let flat: BTreeMap<u32, f64> = (1..=9).map(|l| (l, 0.5)).collect();
    let b = RankedBug::new("flat", &flat, BTreeSet::from([4])).map_err(|e| e.to_string())?;
    ensure(b.ranked.iter().all(|r| r.rank == r.line as usize), || "constant scores not ranked by line".into())?;
    Ok(format!("20 bugs, MFR {:.3}, MAR {:.3}, tie-break and MAR=MFR identity hold", report.mfr, report.mar))
}

// ---------------------------------------------------------------- P5

/// Exhaustive split search over sorted raw values, midpoint thresholds.
fn exact_split(cols: &[Vec<f64>], grad: &[f64], hess: &[f64], params: &GrowParams) -> Option<(usize, f64, f64)> {
    let g_tot: f64 = grad.iter().sum();
    let h_tot: f64 = hess.iter().sum();
    let n = grad.len();
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, col) in cols.iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..n - 1 {
            gl += grad[order[k]];
            hl += hess[order[k]];
            let (a, b) = (col[order[k]], col[order[k + 1]]);
            if a == b || k + 1 < params.min_samples_leaf || n - k - 1 < params.min_samples_leaf {
                continue;
            }
            let gain = split_gain(gl, hl, g_tot - gl, h_tot - hl, params.lambda);
            let thr = a + (b - a) / 2.0;
            if gain > 0.0 && best.is_none_or(|(_, _, g)| gain > g * (1.0 + 1e-12)) {
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

fn separable(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset::new((0..5).map(|i| format!("x{i}")).collect());
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let label = u8::from(row[0] + 0.5 * row[1] > 0.8);
        d.push(&row, label).unwrap();
    }
    d
}

fn p5() -> Check {
    // histogram vs exact scan on small data
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    for trial in 0..20 {
        let rows = rng.gen_range(40..=500);
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|f| {
                (0..rows)
                    .map(|_| if f == 3 { f64::from(rng.gen_range(0..6)) } else { rng.gen_range(-3.0..3.0) })
                    .collect()
            })
            .collect();
        let grad: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hess: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.05..0.25)).collect();
        let values: Vec<f64> = (0..rows).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
        let params = GrowParams { max_leaves: 2, min_samples_leaf: 1 + trial % 10, lambda: 1.0, learning_rate: 0.1 };
        let binned = BinnedMatrix::build(&values, rows, 4, 1024);
        let features = [0, 1, 2, 3];
        let all: Vec<u32> = (0..rows as u32).collect();
        let hist = build_histogram(&binned, &features, &all, &grad, &hess);
        let got = best_split(&binned, &features, &hist, &params);
        let want = exact_split(&cols, &grad, &hess, &params);
        match (got, want) {
            (Some(g), Some((f, thr, gain))) => ensure(
                g.feature == f && g.threshold == thr && (g.gain - gain).abs() <= 1e-9 * gain.max(1.0),
                || format!("trial {trial}: histogram ({}, {}, {}) vs exact ({f}, {thr}, {gain})", g.feature, g.threshold, g.gain),
            )?,
            (None, None) => {}
            (g, w) => return Err(format!("trial {trial}: {g:?} vs {w:?}")),
        }
        cases += 1;
    }

    // logloss non-increasing and separable accuracy
    let data = separable(200, 50);
    let hp = Hyperparams { num_trees: 100, min_samples_leaf: 5, ..Default::default() };
    let (model, log) = train(&data, &hp).map_err(|e| e.to_string())?;
    for (i, pair) in log.logloss.windows(2).enumerate() {
        ensure(pair[1] <= pair[0] + 1e-9, || format!("logloss rose at round {}: {} -> {}", i + 1, pair[0], pair[1]))?;
    }
    let correct = (0..data.rows())
        .filter(|&i| u8::from(model.predict_proba(data.row(i)).unwrap() >= 0.5) == data.labels[i])
        .count();
    let acc = correct as f64 / data.rows() as f64;
    ensure(acc >= 0.99, || format!("training accuracy {acc}"))?;

    // bitwise determinism, including across thread counts
    let hp_sub = Hyperparams { num_trees: 40, feature_subsample: 0.6, seed: 9, min_samples_leaf: 5, ..Default::default() };
    let bigger = separable(600, 51);
    let json_in = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&bigger, &hp_sub).unwrap().0.to_json())
    };
    let reference = json_in(1);
    ensure(reference == json_in(1) && reference == json_in(4) && reference == train(&bigger, &hp_sub).unwrap().0.to_json(), || {
        "training is not bitwise deterministic".into()
    })?;
    Ok(format!(
        "{cases} split oracles match, logloss {:.4} -> {:.4} monotone, accuracy {:.3}, deterministic across 1/4/default threads",
        log.logloss[0],
        log.logloss.last().unwrap(),
        acc
    ))
}

// ---------------------------------------------------------------- P6

fn result<'a>(results: &'a [MethodResult], m: Method) -> &'a MethodResult {
    results.iter().find(|r| r.report.method == m.as_str()).expect("method evaluated")
}

fn method_table(results: &[MethodResult]) -> String {
    let mut s = String::from("      method      MFR      MAR   Top-1   Top-3   Top-5\n");
    for r in results {
        let t = &r.report.top;
        s += &format!(
            "      {:<9} {:>7.3} {:>8.3} {:>6.1}% {:>6.1}% {:>6.1}%\n",
            r.report.method,
            r.report.mfr,
            r.report.mar,
            t[&1] * 100.0,
            t[&3] * 100.0,
            t[&5] * 100.0
        );
    }
    s
}

fn train_eval(features: &[BugFeatures], train_ids: &BTreeSet<String>, schema: &FeatureSchema, hp: &Hyperparams) -> Model {
    let data = dataset_from_features(features.iter().filter(|f| train_ids.contains(&f.bug_id)), schema).unwrap();
    train(&data, hp).unwrap().0
}

fn p6() -> Check {
    let start = Instant::now();
    let spec = SynthSpec { num_bugs: 1200, seed: 42, ..Default::default() };
    let bugs = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let config = FeatureConfig::default();
    let schema = config.schema().unwrap();
    let features = featurize_all(&bugs, &config).map_err(|e| e.to_string())?;
    let ids: Vec<String> = bugs.iter().map(|b| b.bug_id.clone()).collect();
    let (train_ids, eval_ids) = split(&ids, &SplitSpec { train_fraction: 1000.5 / 1200.0, seed: 42 }).unwrap();
    ensure(train_ids.len() == 1000 && eval_ids.len() == 200, || "split sizes".into())?;
    let train_ids: BTreeSet<String> = train_ids.into_iter().collect();
    let model = train_eval(&features, &train_ids, &schema, &Hyperparams::default());
    let eval: Vec<EvalBug> = features.iter().filter(|f| !train_ids.contains(&f.bug_id)).map(EvalBug::from).collect();
    let (results, skipped) = evaluate_methods(&eval, &Method::ALL, Some(&model), 42).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let table = method_table(&results);
    ensure(skipped.is_empty(), || format!("skipped bugs {skipped:?}"))?;

    let mfr = |m| result(&results, m).report.mfr;
    let best_formula = [Method::Ochiai, Method::DStar2, Method::Tarantula].into_iter().map(mfr).fold(f64::INFINITY, f64::min);
    let top1 = |m| result(&results, m).report.top[&1];
    ensure(mfr(Method::Model) < best_formula, || format!("model MFR not below best formula\n{table}"))?;
    ensure(top1(Method::Model) >= top1(Method::Ochiai), || format!("model Top-1 below Ochiai\n{table}"))?;
    ensure(Method::ALL.iter().all(|&m| m == Method::Random || mfr(m) < mfr(Method::Random)), || {
        format!("random is not the worst\n{table}")
    })?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{:.1}s, 1000 train / 200 eval\n{}", elapsed.as_secs_f64(), table.trim_end()))
}

// ---------------------------------------------------------------- P7

fn well_formed(table: &AblationTable, rows: usize) -> Result<(), String> {
    ensure(table.rows.len() == rows, || format!("{} rows, expected {rows}", table.rows.len()))?;
    for r in &table.rows {
        let vals = [r.mfr.mean, r.mfr.ci95, r.mar.mean, r.mar.ci95];
        ensure(vals.iter().all(|v| v.is_finite() && *v >= 0.0) && r.mfr.mean >= 1.0, || {
            format!("row {} malformed", r.setting)
        })?;
        ensure(r.runs.len() == table.repeats && TOP_N.iter().all(|k| r.top.contains_key(k)), || {
            format!("row {} incomplete", r.setting)
        })?;
    }
    let text = table.to_text();
    ensure(text.lines().count() == rows + 1, || "text table line count".into())?;
    Ok(())
}

fn p7() -> Check {
    let hp = Hyperparams { num_trees: 60, ..Default::default() };
    let mixed = generate_synthetic(&SynthSpec { num_bugs: 300, seed: 7, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut window = AblationSpec::new(AblationAxis::Window);
    window.hyperparams = hp.clone();
    window.repeats = 2;
    let wt = run_ablation(&mixed, &window).map_err(|e| e.to_string())?;
    well_formed(&wt, 4)?;

    let coverage = generate_synthetic(&SynthSpec {
        num_bugs: 400,
        seed: 17,
        faults: vec![FaultModel::CoverageDivergence],
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let mut groups = AblationSpec::new(AblationAxis::Groups);
    groups.hyperparams = hp;
    let gt = run_ablation(&coverage, &groups).map_err(|e| e.to_string())?;
    well_formed(&gt, 6)?;
    let all = gt.row("all").unwrap().mfr.mean;
    let reduced = gt.row("no spectral+formula").unwrap().mfr.mean;
    ensure(reduced > all, || format!("no spectral+formula MFR {reduced} not worse than all {all}\n{}", gt.to_text()))?;
    Ok(format!(
        "window table 4 rows, groups table 6 rows; coverage sub-corpus MFR all {all:.3} vs no spectral+formula {reduced:.3}\n{}{}",
        indent(&wt.to_text()),
        indent(&gt.to_text()).trim_end()
    ))
}

fn indent(s: &str) -> String {
    s.lines().map(|l| format!("      {l}\n")).collect()
}

// ---------------------------------------------------------------- P8

fn p8() -> Check {
    // gain accounting on a real pipeline model
    let bugs = generate_synthetic(&SynthSpec { num_bugs: 150, seed: 8, ..Default::default() }).map_err(|e| e.to_string())?;
    let config = FeatureConfig::default();
    let schema = config.schema().unwrap();
    let features = featurize_all(&bugs, &config).map_err(|e| e.to_string())?;
    let ids: BTreeSet<String> = bugs.iter().map(|b| b.bug_id.clone()).collect();
    let model = train_eval(&features, &ids, &schema, &Hyperparams { num_trees: 50, ..Default::default() });
    let imp = feature_importance(&model);
    let table_sum: f64 = imp.iter().map(|i| i.gain).sum();
    let total = model.total_split_gain();
    ensure((table_sum - total).abs() <= 1e-9 * total.max(1.0), || format!("gain sum {table_sum} vs {total}"))?;
    ensure(imp.windows(2).all(|p| p[0].gain >= p[1].gain) && imp[0].relative == 1.0, || "gain table ordering".into())?;
    let levels = window_level_importance(&imp, &schema).map_err(|e| e.to_string())?;
    ensure(levels.len() == 5, || format!("{} window levels", levels.len()))?;

    // one informative column among 141
    let names = schema.feature_names();
    let target = names.iter().position(|n| n == "fail_rate0").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut data = Dataset::new(names.clone());
    for _ in 0..1500 {
        let row: Vec<f64> = (0..names.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let label = u8::from(sigmoid(12.0 * (row[target] - 0.6)) > rng.gen_range(0.0..1.0));
        data.push(&row, label).unwrap();
    }
    let (m2, _) = train(&data, &Hyperparams { num_trees: 60, ..Default::default() }).map_err(|e| e.to_string())?;
    let top = feature_importance(&m2);
    ensure(top[0].feature == "fail_rate0", || format!("top feature {}", top[0].feature))?;
    Ok(format!(
        "gain sum {total:.3} matches, 5 levels ({}), informative feature ranked first (rel. runner-up {:.3})",
        levels.iter().map(|l| l.label.as_str()).collect::<Vec<_>>().join(" "),
        top[1].relative
    ))
}

// ---------------------------------------------------------------- P9

fn p9() -> Option<Check> {
    let dir = std::env::var_os("TRACEFL_EXTERNAL_CORPUS")?;
    Some((|| {
        let bugs = load_corpus(Path::new(&dir)).map_err(|e| e.to_string())?;
        let config = FeatureConfig::default();
        let features = featurize_all(&bugs, &config).map_err(|e| e.to_string())?;
        let model = match std::env::var_os("TRACEFL_EXTERNAL_MODEL") {
            Some(p) => Model::from_json(&std::fs::read_to_string(p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?,
            None => {
                let synth = generate_synthetic(&SynthSpec { num_bugs: 1000, seed: 42, ..Default::default() }).unwrap();
                let sf = featurize_all(&synth, &config).unwrap();
                let ids = synth.iter().map(|b| b.bug_id.clone()).collect();
                train_eval(&sf, &ids, &config.schema().unwrap(), &Hyperparams::default())
            }
        };
        let eval: Vec<EvalBug> = features.iter().map(EvalBug::from).collect();
        let (results, skipped) = evaluate_methods(&eval, &Method::ALL, Some(&model), 0).map_err(|e| e.to_string())?;
        ensure(results.len() == 5, || "five methods".into())?;
        Ok(format!("{} bugs ({} without labels skipped)\n{}", eval.len() - skipped.len(), skipped.len(), method_table(&results).trim_end()))
    })())
}

// ----------------------------------------------------------------

fn run(id: &str, name: &str, check: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("{id} {name}: PASS ({detail})");
            true
        }
        Err(why) => {
            println!("{id} {name}: FAIL ({why})");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and similar harness probes
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run("P1", "spectrum oracle", p1);
    ok &= run("P2", "formula oracle", p2);
    ok &= run("P3", "window layout", p3);
    ok &= run("P4", "metric oracle", p4);
    ok &= run("P5", "gbdt learning", p5);
    ok &= run("P6", "end-to-end beats baselines", p6);
    ok &= run("P7", "ablation harness", p7);
    ok &= run("P8", "importance reporting", p8);
    match p9() {
        Some(check) => ok &= run("P9", "external corpus baselines", || check),
        None => println!("P9 external corpus baselines: SKIP (TRACEFL_EXTERNAL_CORPUS not set)"),
    }
    if !ok {
        std::process::exit(1);
    }
}
