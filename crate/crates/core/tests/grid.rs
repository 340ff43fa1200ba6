//! Analytic domain verdicts against numerics on the (p, q) grid.

use repfree::checker::{check, Rule};
use repfree::model::{power_law_membership, Membership};
use repfree::numeric::{power_law_model, truncation_sweep, EvalOptions, Verdict};
use repfree::parser::parse_slash;

const PS: [f64; 3] = [0.0, 1.0, 2.0];
const QS: [f64; 4] = [0.6, 0.75, 1.5, 3.0];

fn partial_sum(exponent: f64, n: usize) -> f64 {
    // Smallest terms first to limit rounding.
    (1..=n).rev().map(|k| (k as f64).powf(exponent)).sum()
}

/// `sum n^(2p-2q)` at N = 2^20 against N = 2^10: a change above 10% is
/// read as divergence.
#[test]
fn power_law_rule_matches_brute_force() {
    let mut mismatches = Vec::new();
    for p in PS {
        for q in QS {
            let small = partial_sum(2.0 * p - 2.0 * q, 1 << 10);
            let large = partial_sum(2.0 * p - 2.0 * q, 1 << 20);
            let growth = (large - small) / small;
            let brute = if growth > 0.10 {
                Membership::Out
            } else {
                Membership::In
            };
            let analytic = power_law_membership(p, q);
            println!(
                "p={p} q={q}: growth {:.1}% brute {brute} analytic {analytic}",
                100.0 * growth
            );
            if brute != analytic {
                mismatches.push(format!("(p={p}, q={q}) growth {:.1}%", 100.0 * growth));
            }
        }
    }
    assert!(
        mismatches.is_empty(),
        "brute force disagrees at {}",
        mismatches.join(", ")
    );
}

/// Clean `P/u/` must have a convergent `|Pu|^2` sweep; an SL1 error must
/// come with a divergent one.
#[test]
fn checker_verdicts_match_sweeps() {
    let ns = [1 << 10, 1 << 14, 1 << 17, 1 << 20];
    let apply = parse_slash("P/u/").unwrap();
    let norm = parse_slash("P/u/ . P/u/").unwrap();
    let mut mismatches = Vec::new();
    for p in PS {
        for q in QS {
            let m = power_law_model(p, &[("u", q)]).unwrap();
            let diags = check(&apply, &m).unwrap();
            let rejected = diags.iter().any(|d| d.is_error() && d.rule == Rule::SL1);
            let sweep = truncation_sweep(&norm, &m, &ns, &EvalOptions::forced()).unwrap();
            let want = if rejected {
                Verdict::Divergent
            } else {
                Verdict::Convergent
            };
            println!(
                "p={p} q={q}: checker {} sweep {} (exponent {:.3})",
                if rejected { "error" } else { "clean" },
                sweep.verdict,
                sweep.exponent
            );
            if sweep.verdict != want {
                mismatches.push(format!(
                    "(p={p}, q={q}) expected {want}, sweep {}",
                    sweep.verdict
                ));
            }
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("; "));
}
