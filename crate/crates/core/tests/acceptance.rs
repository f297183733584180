//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use orbm::verify::{run_suite, Overrides};

struct Criterion {
    id: u8,
    title: &'static str,
    suites: &'static [&'static str],
    /// Wall-clock budget for deterministic criteria.
    budget: Option<Duration>,
}

const CRITERIA: [Criterion; 10] = [
    Criterion { id: 1, title: "closed-form identities", suites: &["identities"], budget: Some(Duration::from_secs(1)) },
    Criterion { id: 2, title: "regime classification", suites: &["classification"], budget: None },
    Criterion { id: 3, title: "one-step complementarity uniqueness", suites: &["lcp"], budget: Some(Duration::from_secs(10)) },
    Criterion { id: 4, title: "deterministic cycle factor", suites: &["cycle-factor"], budget: Some(Duration::from_secs(1)) },
    Criterion { id: 5, title: "strip exit law", suites: &["exit-law"], budget: None },
    Criterion { id: 6, title: "strip exit time", suites: &["exit-time"], budget: None },
    Criterion { id: 7, title: "displacement per cycle", suites: &["displacement"], budget: None },
    Criterion { id: 8, title: "martingale and hitting law", suites: &["martingale", "hitting-law"], budget: None },
    Criterion { id: 9, title: "excursion rate", suites: &["kappa-rate"], budget: None },
    Criterion { id: 10, title: "refinement and coupled identity", suites: &["refinement"], budget: None },
];

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    for c in &CRITERIA {
        let start = Instant::now();
        let mut ok = true;
        let mut notes = Vec::new();
        for suite in c.suites {
            match run_suite(suite, &Overrides::default()) {
                Ok(report) => {
                    for check in &report.checks {
                        eprintln!("    [{suite}] {}", check.line());
                    }
                    if !report.passed {
                        ok = false;
                        notes.push(format!("{suite} failing: {}", report.failing().join("; ")));
                    }
                }
                Err(e) => {
                    ok = false;
                    notes.push(format!("{suite} error: {e}"));
                }
            }
        }
        let elapsed = start.elapsed();
        if let Some(b) = c.budget {
            if elapsed > b {
                ok = false;
                notes.push(format!("over budget {:.1}s", b.as_secs_f64()));
            }
        }
        all &= ok;
        let verdict = if ok { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {:>2} {verdict} {} ({:.2}s)", c.id, c.title, elapsed.as_secs_f64());
        if !notes.is_empty() {
            line.push_str(" - ");
            line.push_str(&notes.join("; "));
        }
        println!("{line}");
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
