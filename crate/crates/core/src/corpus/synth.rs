//! Seeded synthetic bug corpus.
//!
//! A program is a flat list of blocks (statements, conditionals, loops,
//! guarded loops). Each test walks the blocks under its own plan. One block
//! holds the planted buggy line `b`, and failing tests perturb the walk at
//! `b` according to the bug's fault model. Coverage bugs usually also carry
//! a decoy: a line run by some failing tests and no passing test, shaped so
//! that only spectral counts tell it apart from `b`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::bundle::{write_bug, write_manifest, CorpusManifest};
use crate::corpus::split::{split, SplitSpec};
use crate::error::{Error, Result};
use crate::trace::{BugRecord, Step, TestTrace, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultModel {
    /// `b` runs only in failing tests.
    CoverageDivergence,
    /// `b` runs in every test but many more times per failing test.
    CountDivergence,
    /// Failing tests reach `b` from predecessors never seen in passing tests.
    FlowDivergence,
}

impl FaultModel {
    pub const ALL: [FaultModel; 3] = [
        FaultModel::CoverageDivergence,
        FaultModel::CountDivergence,
        FaultModel::FlowDivergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultModel::CoverageDivergence => "coverage_divergence",
            FaultModel::CountDivergence => "count_divergence",
            FaultModel::FlowDivergence => "flow_divergence",
        }
    }
}

impl fmt::Display for FaultModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "coverage_divergence" | "coverage" => Ok(FaultModel::CoverageDivergence),
            "count_divergence" | "count" => Ok(FaultModel::CountDivergence),
            "flow_divergence" | "flow" => Ok(FaultModel::FlowDivergence),
            other => Err(Error::Config(format!("unknown fault model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_bugs: usize,
    /// Inclusive bounds on program length.
    pub lines: (usize, usize),
    /// Inclusive bounds on the number of tests per bug.
    pub tests: (usize, usize),
    /// Bug `i` uses `faults[i % faults.len()]`.
    pub faults: Vec<FaultModel>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_bugs: 100,
            lines: (8, 30),
            tests: (4, 10),
            faults: FaultModel::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_bugs == 0 {
            return Err(Error::Config("num_bugs must be at least 1".into()));
        }
        if self.lines.0 > self.lines.1 || self.lines.0 < 8 {
            return Err(Error::Config(format!(
                "line range {:?} must be non-empty with minimum at least 8",
                self.lines
            )));
        }
        if self.tests.0 > self.tests.1 || self.tests.0 < 2 {
            return Err(Error::Config(format!(
                "test range {:?} must be non-empty with minimum at least 2",
                self.tests
            )));
        }
        if self.faults.is_empty() {
            return Err(Error::Config("at least one fault model is required".into()));
        }
        Ok(())
    }

    pub fn fault_of(&self, index: usize) -> FaultModel {
        self.faults[index % self.faults.len()]
    }
}

pub fn bug_id(index: usize) -> String {
    format!("synth-{index:05}")
}

/// Line numbers are filled in when the program is laid out.
#[derive(Debug, Clone)]
enum Block {
    Stmt { line: u32 },
    If { header: u32, body: Vec<u32>, p_take: f64 },
    Loop { header: u32, body: Vec<u32> },
    GuardLoop { header: u32, guard: u32, body: u32, p_take: f64 },
    /// `if` nested in an `if`. Passing tests reach the inner `if` but skip
    /// its body; failing tests either run the body or crash at the outer
    /// `if`.
    Nested { outer: u32, inner: u32, body: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Plain,
    /// Single-line conditional body holding `b`.
    CoverageIf,
    /// Guarded loop body holding `b`.
    CountLoop,
    /// Conditional whose successor statement is `b`.
    FlowIf,
    /// Fail-only body covered by some but not all failing tests.
    Decoy,
}

/// Per-test decisions for one block.
#[derive(Debug, Clone)]
enum Plan {
    None,
    Take(bool),
    Iter(u32),
    Guard(Vec<bool>),
    Decoy(DecoyPath),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DecoyPath {
    Skip,
    Cover,
    Crash,
}

const STMTS: [&str; 8] = [
    "x = x + {k}",
    "y = x * {k}",
    "total += x",
    "x = min(x, {k})",
    "y = y - x",
    "values.append(x)",
    "x = abs(y) % {k}",
    "count += 1",
];

const CONDS: [&str; 4] = ["if x > {k}:", "if y < {k}:", "if x % {k} == 0:", "if not values:"];

const LOOPS: [&str; 3] = ["for i in range({k}):", "while i < {k}:", "for v in values[:{k}]:"];

fn fill(rng: &mut ChaCha8Rng, templates: &[&str], indent: usize) -> String {
    let t = templates.choose(rng).expect("templates non-empty");
    let k: u32 = rng.gen_range(1..10);
    format!("{}{}", "    ".repeat(indent + 1), t.replace("{k}", &k.to_string()))
}

struct Program {
    source: Vec<String>,
    blocks: Vec<(Block, Role)>,
    buggy: u32,
}

fn block_len(kind: u8, body: usize) -> usize {
    match kind {
        0 => 1,
        1 | 2 => 1 + body,
        _ => 3,
    }
}

fn build_program(rng: &mut ChaCha8Rng, target: usize, fault: FaultModel) -> Program {
    // Line 1 is the function header and the last line is the return, so
    // blocks occupy lines 2..target.
    let budget = target - 2;
    let bug_len = match fault {
        FaultModel::CoverageDivergence => 2,
        FaultModel::CountDivergence => 3,
        FaultModel::FlowDivergence => 0,
    };
    let flow_body = rng.gen_range(1..=2usize);
    let bug_len = if fault == FaultModel::FlowDivergence { 2 + flow_body } else { bug_len };

    // Shapes as (kind, body length): 0 stmt, 1 if, 2 loop, 3 guarded loop,
    // 4 decoy.
    let mut shapes: Vec<(u8, usize)> = Vec::new();
    let decoy = fault == FaultModel::CoverageDivergence && rng.gen_bool(0.8);
    let mut used = bug_len + if decoy { 3 } else { 0 };
    while used < budget {
        let room = budget - used;
        let kind: u8 = if room < 2 { 0 } else { [0, 0, 1, 1, 2, 3][rng.gen_range(0..6)] };
        let body = rng.gen_range(1..=3usize).min(room.saturating_sub(1).max(1));
        let len = block_len(kind, body);
        if len > room {
            shapes.push((0, 1));
            used += 1;
        } else {
            shapes.push((kind, body));
            used += len;
        }
    }
    let bug_at = rng.gen_range(0..=shapes.len());
    // crashes at the decoy must not hide `b`, so the decoy comes after it
    if decoy {
        let at = rng.gen_range(bug_at..=shapes.len());
        shapes.insert(at, (4, 1));
    }

    let mut source = vec!["def solve(x, y, values):".to_string()];
    let mut blocks = Vec::new();
    let mut buggy = 0;
    let mut next = 2u32;
    let mut take_line = |source: &mut Vec<String>, text: String| {
        source.push(text);
        let l = next;
        next += 1;
        l
    };

    let p_take = |rng: &mut ChaCha8Rng| rng.gen_range(0.15..0.85);
    for i in 0..=shapes.len() {
        if i == bug_at {
            match fault {
                FaultModel::CoverageDivergence => {
                    let header = take_line(&mut source, fill(rng, &CONDS, 0));
                    let body = take_line(&mut source, fill(rng, &STMTS, 1));
                    buggy = body;
                    blocks.push((Block::If { header, body: vec![body], p_take: 0.0 }, Role::CoverageIf));
                }
                FaultModel::CountDivergence => {
                    let header = take_line(&mut source, fill(rng, &LOOPS, 0));
                    let guard = take_line(&mut source, fill(rng, &CONDS, 1));
                    let body = take_line(&mut source, fill(rng, &STMTS, 2));
                    buggy = body;
                    blocks.push((Block::GuardLoop { header, guard, body, p_take: 0.0 }, Role::CountLoop));
                }
                FaultModel::FlowDivergence => {
                    let header = take_line(&mut source, fill(rng, &CONDS, 0));
                    let body = (0..flow_body)
                        .map(|_| take_line(&mut source, fill(rng, &STMTS, 1)))
                        .collect();
                    blocks.push((Block::If { header, body, p_take: 0.0 }, Role::FlowIf));
                    let line = take_line(&mut source, fill(rng, &STMTS, 0));
                    buggy = line;
                    blocks.push((Block::Stmt { line }, Role::Plain));
                }
            }
        }
        let Some(&(kind, body_len)) = shapes.get(i) else { continue };
        let block = match kind {
            0 => Block::Stmt { line: take_line(&mut source, fill(rng, &STMTS, 0)) },
            1 => {
                let header = take_line(&mut source, fill(rng, &CONDS, 0));
                let body = (0..body_len).map(|_| take_line(&mut source, fill(rng, &STMTS, 1))).collect();
                Block::If { header, body, p_take: p_take(rng) }
            }
            4 => {
                let outer = take_line(&mut source, fill(rng, &CONDS, 0));
                let inner = take_line(&mut source, fill(rng, &CONDS, 1));
                let body = take_line(&mut source, fill(rng, &STMTS, 2));
                blocks.push((Block::Nested { outer, inner, body }, Role::Decoy));
                continue;
            }
            2 => {
                let header = take_line(&mut source, fill(rng, &LOOPS, 0));
                let body = (0..body_len).map(|_| take_line(&mut source, fill(rng, &STMTS, 1))).collect();
                Block::Loop { header, body }
            }
            _ => {
                let header = take_line(&mut source, fill(rng, &LOOPS, 0));
                let guard = take_line(&mut source, fill(rng, &CONDS, 1));
                let body = take_line(&mut source, fill(rng, &STMTS, 2));
                Block::GuardLoop { header, guard, body, p_take: p_take(rng) }
            }
        };
        blocks.push((block, Role::Plain));
    }
    let ret = take_line(&mut source, "    return x".to_string());
    blocks.push((Block::Stmt { line: ret }, Role::Plain));
    Program { source, blocks, buggy }
}

fn plan_block(rng: &mut ChaCha8Rng, block: &Block, role: Role, verdict: Verdict, fail_index: usize) -> Plan {
    let failing = verdict == Verdict::Fail;
    match (block, role) {
        (Block::Stmt { .. }, _) => Plan::None,
        (Block::If { .. }, Role::CoverageIf) => Plan::Take(failing),
        // Passing tests always run the body; the first failing test skips it
        // and later ones alternate.
        (Block::If { .. }, Role::FlowIf) => Plan::Take(!failing || fail_index % 2 == 1),
        (Block::If { p_take, .. }, _) => Plan::Take(rng.gen_bool(*p_take)),
        (Block::Loop { .. }, _) => Plan::Iter(rng.gen_range(1..=3)),
        (Block::GuardLoop { .. }, Role::CountLoop) => {
            let iters = rng.gen_range(2..=5usize);
            Plan::Guard((0..iters).map(|i| failing || i == 0).collect())
        }
        (Block::GuardLoop { p_take, .. }, _) => {
            let iters = rng.gen_range(2..=5usize);
            Plan::Guard((0..iters).map(|_| rng.gen_bool(*p_take)).collect())
        }
        (Block::Nested { .. }, _) => Plan::Decoy(match (failing, rng.gen_bool(0.5)) {
            (false, _) => DecoyPath::Skip,
            (true, true) => DecoyPath::Cover,
            (true, false) => DecoyPath::Crash,
        }),
    }
}

fn body_taken(plan: &Plan) -> bool {
    match plan {
        Plan::Take(t) => *t,
        Plan::Guard(g) => g.iter().any(|&t| t),
        _ => true,
    }
}

fn force_taken(plan: &mut Plan) {
    match plan {
        Plan::Take(t) => *t = true,
        Plan::Guard(g) => g[0] = true,
        _ => {}
    }
}

fn walk(blocks: &[(Block, Role)], plans: &[Plan]) -> Vec<u32> {
    let mut lines = vec![1];
    for ((block, _), plan) in blocks.iter().zip(plans) {
        match (block, plan) {
            (Block::Stmt { line }, _) => lines.push(*line),
            (Block::If { header, body, .. }, Plan::Take(take)) => {
                lines.push(*header);
                if *take {
                    lines.extend(body);
                }
            }
            (Block::Loop { header, body }, Plan::Iter(n)) => {
                for _ in 0..*n {
                    lines.push(*header);
                    lines.extend(body);
                }
                lines.push(*header);
            }
            (Block::Nested { outer, inner, body }, Plan::Decoy(path)) => {
                lines.push(*outer);
                match path {
                    DecoyPath::Crash => break,
                    DecoyPath::Skip => lines.push(*inner),
                    DecoyPath::Cover => lines.extend([*inner, *body]),
                }
            }
            (Block::GuardLoop { header, guard, body, .. }, Plan::Guard(takes)) => {
                for &take in takes {
                    lines.push(*header);
                    lines.push(*guard);
                    if take {
                        lines.push(*body);
                    }
                }
                lines.push(*header);
            }
            _ => unreachable!("plan does not match block"),
        }
    }
    lines
}

fn to_steps(lines: &[u32]) -> Vec<Step> {
    let mut prev = 0;
    lines
        .iter()
        .map(|&l| {
            let s = Step::new(l, prev);
            prev = l;
            s
        })
        .collect()
}

/// Generates bug `index` of `spec`. The stream depends only on
/// `(spec.seed, index)`.
pub fn generate_bug(spec: &SynthSpec, index: usize) -> BugRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let fault = spec.fault_of(index);
    let target = rng.gen_range(spec.lines.0..=spec.lines.1);
    let program = build_program(&mut rng, target, fault);

    let n_tests = rng.gen_range(spec.tests.0..=spec.tests.1);
    // coverage bugs need two failing tests so decoys can cover only some
    let min_fail = if fault == FaultModel::CoverageDivergence { 2 } else { 1 };
    let n_fail = rng.gen_range(min_fail..=n_tests / 2);
    let mut verdicts: Vec<Verdict> = (0..n_tests)
        .map(|i| if i < n_fail { Verdict::Fail } else { Verdict::Pass })
        .collect();
    verdicts.shuffle(&mut rng);

    let mut fail_seen = 0;
    let mut plans: Vec<Vec<Plan>> = verdicts
        .iter()
        .map(|&v| {
            let fail_index = fail_seen;
            if v == Verdict::Fail {
                fail_seen += 1;
            }
            program
                .blocks
                .iter()
                .map(|(b, role)| plan_block(&mut rng, b, *role, v, fail_index))
                .collect()
        })
        .collect();

    // A decoy body runs in the first failing test; the last one crashes.
    let fails: Vec<usize> = (0..n_tests).filter(|&t| verdicts[t] == Verdict::Fail).collect();
    for (k, (_, role)) in program.blocks.iter().enumerate() {
        if *role == Role::Decoy {
            plans[fails[0]][k] = Plan::Decoy(DecoyPath::Cover);
            plans[*fails.last().expect("has failing test")][k] = Plan::Decoy(DecoyPath::Crash);
        }
    }

    // Keep `b` the only line covered by every failing test and no passing
    // test, so coverage bugs have a unique top formula score.
    if fault == FaultModel::CoverageDivergence {
        let first_pass = verdicts.iter().position(|&v| v == Verdict::Pass).expect("has passing test");
        for (k, (_, role)) in program.blocks.iter().enumerate() {
            if *role != Role::Plain {
                continue;
            }
            let all_fail = verdicts
                .iter()
                .zip(&plans)
                .all(|(&v, p)| v == Verdict::Pass || body_taken(&p[k]));
            let no_pass = verdicts
                .iter()
                .zip(&plans)
                .all(|(&v, p)| v == Verdict::Fail || !body_taken(&p[k]));
            if all_fail && no_pass {
                force_taken(&mut plans[first_pass][k]);
            }
        }
    }

    let traces = verdicts
        .iter()
        .zip(&plans)
        .enumerate()
        .map(|(i, (&v, p))| TestTrace::new(format!("test_{i}"), v, to_steps(&walk(&program.blocks, p))))
        .collect();
    BugRecord {
        bug_id: bug_id(index),
        source_lines: program.source,
        traces,
        buggy_lines: BTreeSet::from([program.buggy]),
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<BugRecord>> {
    spec.validate()?;
    Ok((0..spec.num_bugs)
        .into_par_iter()
        .map(|i| generate_bug(spec, i))
        .collect())
}

/// Writes bundles plus a manifest recording the train/validation split.
pub fn write_synthetic(dir: &Path, spec: &SynthSpec, split_spec: &SplitSpec) -> Result<Vec<BugRecord>> {
    let bugs = generate_synthetic(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    bugs.par_iter().try_for_each(|b| write_bug(dir, b).map(|_| ()))?;
    let bug_ids: Vec<String> = bugs.iter().map(|b| b.bug_id.clone()).collect();
    let (train, validation) = if bug_ids.len() >= 2 {
        split(&bug_ids, split_spec)?
    } else {
        (bug_ids.clone(), Vec::new())
    };
    write_manifest(
        dir,
        &CorpusManifest {
            bug_ids,
            train,
            validation,
            train_fraction: split_spec.train_fraction,
            seed: split_spec.seed,
        },
    )?;
    Ok(bugs)
}
