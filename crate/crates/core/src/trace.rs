//! Trace and bug data model.
//!
//! A trace file is JSON Lines: a header object `{"test_id", "verdict"}`
//! followed by one object per executed step, `{"l": line, "p": prev_line}`
//! plus optional extras (`t` timestamp, `c` step counter, `v` variable
//! snapshot). Only `l` and `p` feed the feature pipeline; extras are kept
//! opaquely when requested so files can be rewritten without loss.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One executed line. `prev_line` is 0 for the first step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub line: u32,
    pub prev_line: u32,
}

impl Step {
    pub fn new(line: u32, prev_line: u32) -> Self {
        Self { line, prev_line }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    /// Maps a raw verdict string; errors and timeouts count as failures.
    pub fn from_raw(raw: &str) -> Option<Self> {
        match raw {
            "pass" => Some(Verdict::Pass),
            "fail" | "error" | "timeout" => Some(Verdict::Fail),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// Per-step extras other than `l`/`p`, in file order.
pub type StepExtras = Map<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct TestTrace {
    pub test_id: String,
    pub verdict: Verdict,
    pub steps: Vec<Step>,
    /// Parallel to `steps` when extras were retained at parse time.
    pub aux: Option<Vec<StepExtras>>,
}

impl TestTrace {
    pub fn new(test_id: impl Into<String>, verdict: Verdict, steps: Vec<Step>) -> Self {
        Self {
            test_id: test_id.into(),
            verdict,
            steps,
            aux: None,
        }
    }

    /// Checks non-emptiness and the `prev_line` chain.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.steps.first() else {
            return Err(Error::Validation(format!(
                "test {}: trace has no steps",
                self.test_id
            )));
        };
        if first.prev_line != 0 {
            return Err(Error::Validation(format!(
                "test {} step 0: first step must have prev_line 0, found {}",
                self.test_id, first.prev_line
            )));
        }
        for (idx, pair) in self.steps.windows(2).enumerate() {
            let (prev, cur) = (pair[0], pair[1]);
            if cur.line == 0 {
                return Err(Error::Validation(format!(
                    "test {} step {}: line numbers are 1-based",
                    self.test_id,
                    idx + 1
                )));
            }
            if cur.prev_line != prev.line {
                return Err(Error::Validation(format!(
                    "test {} step {}: prev_line {} does not match previous line {}",
                    self.test_id,
                    idx + 1,
                    cur.prev_line,
                    prev.line
                )));
            }
        }
        if first.line == 0 {
            return Err(Error::Validation(format!(
                "test {} step 0: line numbers are 1-based",
                self.test_id
            )));
        }
        if let Some(aux) = &self.aux {
            if aux.len() != self.steps.len() {
                return Err(Error::Validation(format!(
                    "test {}: {} aux records for {} steps",
                    self.test_id,
                    aux.len(),
                    self.steps.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    /// Keep per-step extras (`t`, `c`, `v`, unknown keys) in `TestTrace::aux`.
    pub keep_aux: bool,
}

#[derive(Deserialize)]
struct Header {
    test_id: String,
    verdict: String,
}

/// Parses a JSON Lines trace file. A file may hold several runs; each
/// header line starts a new trace. Blank lines are skipped.
pub fn parse_trace_file(bytes: &[u8]) -> Result<Vec<TestTrace>> {
    parse_trace_file_with(bytes, ParseOptions { keep_aux: true })
}

pub fn parse_trace_file_with(bytes: &[u8], opts: ParseOptions) -> Result<Vec<TestTrace>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse("trace file", e))?;
    let mut traces: Vec<TestTrace> = Vec::new();
    let mut current: Option<TestTrace> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: Map<String, Value> = serde_json::from_str(raw)
            .map_err(|e| Error::parse(format!("line {lineno}"), e))?;
        if value.contains_key("test_id") {
            let header: Header = serde_json::from_value(Value::Object(value))
                .map_err(|e| Error::parse(format!("line {lineno}"), e))?;
            let verdict = Verdict::from_raw(&header.verdict).ok_or_else(|| {
                Error::parse(
                    format!("line {lineno}"),
                    format!("unknown verdict {:?}", header.verdict),
                )
            })?;
            if let Some(done) = current.take() {
                traces.push(done);
            }
            let mut trace = TestTrace::new(header.test_id, verdict, Vec::new());
            if opts.keep_aux {
                trace.aux = Some(Vec::new());
            }
            current = Some(trace);
            continue;
        }
        let trace = current.as_mut().ok_or_else(|| {
            Error::parse(format!("line {lineno}"), "step record before any header")
        })?;
        let (step, extras) = parse_step(value, lineno)?;
        trace.steps.push(step);
        if let Some(aux) = trace.aux.as_mut() {
            aux.push(extras);
        }
    }
    if let Some(done) = current.take() {
        traces.push(done);
    }

    for trace in &mut traces {
        if trace.aux.as_ref().is_some_and(|a| a.iter().all(Map::is_empty)) {
            trace.aux = None;
        }
        trace.validate()?;
    }
    Ok(traces)
}

fn parse_step(mut value: Map<String, Value>, lineno: usize) -> Result<(Step, StepExtras)> {
    let mut field = |key: &str| -> Result<u32> {
        let v = value
            .remove(key)
            .ok_or_else(|| Error::parse(format!("line {lineno}"), format!("missing field {key:?}")))?;
        v.as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| {
                Error::parse(
                    format!("line {lineno}"),
                    format!("field {key:?} must be a non-negative integer, got {v}"),
                )
            })
    };
    let line = field("l")?;
    let prev_line = field("p")?;
    if line == 0 {
        return Err(Error::parse(format!("line {lineno}"), "line numbers are 1-based"));
    }
    Ok((Step { line, prev_line }, value))
}

/// Serializes traces in the JSON Lines format, one header per trace.
pub fn write_trace_file<W: Write>(mut out: W, traces: &[TestTrace]) -> std::io::Result<()> {
    for trace in traces {
        let header = serde_json::json!({
            "test_id": trace.test_id,
            "verdict": trace.verdict.as_str(),
        });
        writeln!(out, "{header}")?;
        for (i, step) in trace.steps.iter().enumerate() {
            let mut obj = Map::new();
            obj.insert("l".into(), step.line.into());
            obj.insert("p".into(), step.prev_line.into());
            if let Some(extras) = trace.aux.as_ref().and_then(|a| a.get(i)) {
                for (k, v) in extras {
                    obj.insert(k.clone(), v.clone());
                }
            }
            writeln!(out, "{}", Value::Object(obj))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BugRecord {
    pub bug_id: String,
    pub source_lines: Vec<String>,
    pub traces: Vec<TestTrace>,
    pub buggy_lines: BTreeSet<u32>,
}

impl BugRecord {
    pub fn validate(&self) -> Result<()> {
        let n_lines = self.source_lines.len() as u32;
        let mut has_pass = false;
        let mut has_fail = false;
        for trace in &self.traces {
            trace.validate()?;
            match trace.verdict {
                Verdict::Pass => has_pass = true,
                Verdict::Fail => has_fail = true,
            }
            if let Some(step) = trace.steps.iter().find(|s| s.line > n_lines) {
                return Err(Error::Validation(format!(
                    "test {}: line {} beyond source length {}",
                    trace.test_id, step.line, n_lines
                )));
            }
        }
        if !(has_pass && has_fail) {
            return Err(Error::Validation(
                "need at least one passing and one failing test".into(),
            ));
        }
        if let Some(&bad) = self
            .buggy_lines
            .iter()
            .find(|&&l| l == 0 || l > n_lines)
        {
            return Err(Error::Validation(format!(
                "buggy line {bad} outside 1..={n_lines}"
            )));
        }
        Ok(())
    }
}

/// Per-outcome condensation of a bug's traces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutcomeAggregate {
    pub outcome: Option<Verdict>,
    /// Number of tests with this outcome (N_p or N_f).
    pub num_tests: u32,
    /// Total executions of each line.
    pub per_line_counts: BTreeMap<u32, u64>,
    /// Number of tests whose trace contains the line (e_p or e_f).
    pub per_line_tests: BTreeMap<u32, u32>,
    /// Multiset of predecessors per line, as predecessor -> occurrences.
    pub per_line_preds: BTreeMap<u32, BTreeMap<u32, u64>>,
    pub total_steps: u64,
}

impl OutcomeAggregate {
    fn empty(outcome: Verdict) -> Self {
        Self {
            outcome: Some(outcome),
            ..Self::default()
        }
    }

    fn absorb(&mut self, trace: &TestTrace) {
        self.num_tests += 1;
        let mut seen = BTreeSet::new();
        for step in &trace.steps {
            *self.per_line_counts.entry(step.line).or_default() += 1;
            *self
                .per_line_preds
                .entry(step.line)
                .or_default()
                .entry(step.prev_line)
                .or_default() += 1;
            seen.insert(step.line);
        }
        for line in seen {
            *self.per_line_tests.entry(line).or_default() += 1;
        }
        self.total_steps += trace.steps.len() as u64;
    }
}

/// Splits a bug's traces by outcome and aggregates each side.
pub fn aggregate(bug: &BugRecord) -> (OutcomeAggregate, OutcomeAggregate) {
    let mut pass = OutcomeAggregate::empty(Verdict::Pass);
    let mut fail = OutcomeAggregate::empty(Verdict::Fail);
    for trace in &bug.traces {
        match trace.verdict {
            Verdict::Pass => pass.absorb(trace),
            Verdict::Fail => fail.absorb(trace),
        }
    }
    (pass, fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(pairs: &[(u32, u32)]) -> Vec<Step> {
        pairs.iter().map(|&(l, p)| Step::new(l, p)).collect()
    }

    #[test]
    fn minimal_file() {
        let src = b"{\"test_id\":\"t1\",\"verdict\":\"pass\"}\n{\"l\":1,\"p\":0}\n{\"l\":2,\"p\":1}\n";
        let traces = parse_trace_file(src).unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].test_id, "t1");
        assert_eq!(traces[0].verdict, Verdict::Pass);
        assert_eq!(traces[0].steps, steps(&[(1, 0), (2, 1)]));
        assert!(traces[0].aux.is_none());
    }

    #[test]
    fn chain_violation_names_test_and_step() {
        let src = b"{\"test_id\":\"t9\",\"verdict\":\"pass\"}\n{\"l\":1,\"p\":0}\n{\"l\":2,\"p\":1}\n{\"l\":3,\"p\":1}\n";
        let err = parse_trace_file(src).unwrap_err().to_string();
        assert!(err.contains("t9"), "{err}");
        assert!(err.contains("step 2"), "{err}");
    }

    #[test]
    fn error_and_timeout_fold_to_fail() {
        let src = b"{\"test_id\":\"a\",\"verdict\":\"error\"}\n{\"l\":1,\"p\":0}\n{\"test_id\":\"b\",\"verdict\":\"timeout\"}\n{\"l\":1,\"p\":0}\n";
        let traces = parse_trace_file(src).unwrap();
        assert!(traces.iter().all(|t| t.verdict == Verdict::Fail));
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let src = b"{\"test_id\":\"a\",\"verdict\":\"pass\"}\n{\"l\":1,\"p\":0}\n{\"l\":2,\n";
        let err = parse_trace_file(src).unwrap_err();
        assert!(matches!(&err, Error::Parse { location, .. } if location == "line 3"), "{err}");
    }

    #[test]
    fn unknown_verdict_and_negative_line_rejected() {
        assert!(parse_trace_file(b"{\"test_id\":\"a\",\"verdict\":\"skip\"}\n").is_err());
        assert!(
            parse_trace_file(b"{\"test_id\":\"a\",\"verdict\":\"pass\"}\n{\"l\":-1,\"p\":0}\n")
                .is_err()
        );
    }

    #[test]
    fn empty_trace_is_invalid() {
        let err = parse_trace_file(b"{\"test_id\":\"a\",\"verdict\":\"pass\"}\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn aux_fields_round_trip() {
        let src = "{\"test_id\":\"t\",\"verdict\":\"fail\"}\n{\"l\":1,\"p\":0,\"t\":100,\"c\":1,\"v\":{\"x\":3}}\n{\"l\":2,\"p\":1,\"zz\":true}\n";
        let traces = parse_trace_file(src.as_bytes()).unwrap();
        let aux = traces[0].aux.as_ref().unwrap();
        assert_eq!(aux[0]["t"], 100);
        assert_eq!(aux[1]["zz"], true);
        let mut out = Vec::new();
        write_trace_file(&mut out, &traces).unwrap();
        assert_eq!(parse_trace_file(&out).unwrap(), traces);

        let lean = parse_trace_file_with(src.as_bytes(), ParseOptions::default()).unwrap();
        assert!(lean[0].aux.is_none());
        assert_eq!(lean[0].steps, traces[0].steps);
    }

    fn bug(traces: Vec<TestTrace>) -> BugRecord {
        BugRecord {
            bug_id: "b".into(),
            source_lines: vec!["x".into(); 5],
            traces,
            buggy_lines: BTreeSet::new(),
        }
    }

    #[test]
    fn aggregate_counts_occurrences() {
        let b = bug(vec![
            TestTrace::new("p", Verdict::Pass, steps(&[(1, 0), (2, 1), (2, 2)])),
            TestTrace::new("f", Verdict::Fail, steps(&[(1, 0)])),
        ]);
        let (pass, fail) = aggregate(&b);
        assert_eq!(pass.per_line_counts, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(pass.total_steps, 3);
        assert_eq!(pass.per_line_tests[&2], 1);
        assert_eq!(pass.per_line_preds[&2], BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(fail.num_tests, 1);
    }

    #[test]
    fn aggregate_two_tests_same_line() {
        let b = bug(vec![
            TestTrace::new("p1", Verdict::Pass, steps(&[(4, 0)])),
            TestTrace::new("p2", Verdict::Pass, steps(&[(4, 0)])),
            TestTrace::new("f", Verdict::Fail, steps(&[(1, 0)])),
        ]);
        let (pass, _) = aggregate(&b);
        assert_eq!(pass.per_line_counts[&4], 2);
        assert_eq!(pass.num_tests, 2);
    }

    #[test]
    fn bug_needs_both_outcomes_and_bounded_lines() {
        let only_pass = bug(vec![TestTrace::new("p", Verdict::Pass, steps(&[(1, 0)]))]);
        assert!(only_pass.validate().is_err());

        let too_long = bug(vec![
            TestTrace::new("p", Verdict::Pass, steps(&[(1, 0)])),
            TestTrace::new("f", Verdict::Fail, steps(&[(6, 0)])),
        ]);
        assert!(too_long.validate().is_err());

        let mut labeled = bug(vec![
            TestTrace::new("p", Verdict::Pass, steps(&[(1, 0)])),
            TestTrace::new("f", Verdict::Fail, steps(&[(1, 0)])),
        ]);
        labeled.buggy_lines.insert(9);
        assert!(labeled.validate().is_err());
    }
}
