//! Runner for the acceptance criteria: each one is timed against its budget
//! and reported on a single `PASS`/`FAIL` line.

use std::time::{Duration, Instant};

/// Result of one criterion's checks, before timing is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }

    /// Passes only if every named sub-check passes; failed ones are listed.
    pub fn all(checks: &[(&str, bool)], detail: impl Into<String>) -> Self {
        let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
        let mut detail = detail.into();
        if !failed.is_empty() {
            detail.push_str(&format!(" | failed: {}", failed.join(", ")));
        }
        Self::new(failed.is_empty(), detail)
    }
}

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub budget: Duration,
    pub check: fn() -> Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub elapsed: Duration,
    pub budget: Duration,
    pub detail: String,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "{} [{}] {} ({:.1}s of {}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

/// A criterion passes when its checks pass within the time budget.
pub fn evaluate(c: &Criterion) -> Verdict {
    let start = Instant::now();
    let outcome = (c.check)();
    let elapsed = start.elapsed();
    let in_time = elapsed <= c.budget;
    let mut detail = outcome.detail;
    if !in_time {
        detail.push_str(" | over time budget");
    }
    Verdict {
        id: c.id,
        name: c.name,
        passed: outcome.passed && in_time,
        elapsed,
        budget: c.budget,
        detail,
    }
}

/// Numeric arguments select criteria by id; flags are ignored.
pub fn selection(args: impl IntoIterator<Item = String>) -> Vec<usize> {
    args.into_iter().filter_map(|a| a.parse().ok()).collect()
}

/// Runs the selected criteria (all when `only` is empty), printing one line
/// each as it finishes. Returns true if every run criterion passed.
pub fn run_all(criteria: &[Criterion], only: &[usize]) -> bool {
    let mut ok = true;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let v = evaluate(c);
        println!("{}", v.line());
        ok &= v.passed;
        ran += 1;
    }
    println!("acceptance: {ran} criteria run, {}", if ok { "all passed" } else { "some failed" });
    ok
}
