//! Depth-first box bisection with a global budget, split deterministically
//! into independent subtrees that are processed in parallel.

use rayon::prelude::*;

use crate::interval::Interval;

pub(crate) enum Classify {
    /// Box needs no further work (proven or irrelevant).
    Done,
    /// Box is undecided but too small to split.
    Unresolved,
    Split(usize),
    /// A concrete point violating the condition, with the offending value.
    Violation(Vec<f64>, f64),
}

#[derive(Clone, Debug, Default)]
pub(crate) struct BnbStats {
    pub processed: usize,
    pub unresolved: usize,
    pub exhausted: bool,
    pub violation: Option<(Vec<f64>, f64)>,
}

impl BnbStats {
    pub fn complete(&self) -> bool {
        self.violation.is_none() && self.unresolved == 0 && !self.exhausted
    }
}

const FRONTIER: usize = 64;

pub(crate) fn split(b: &[Interval], d: usize) -> (Vec<Interval>, Vec<Interval>) {
    let m = b[d].mid();
    let mut lo = b.to_vec();
    let mut hi = b.to_vec();
    lo[d] = Interval::new(b[d].lo, m);
    hi[d] = Interval::new(m, b[d].hi);
    (lo, hi)
}

pub(crate) fn run<F>(root: Vec<Interval>, budget: usize, classify: F) -> BnbStats
where
    F: Fn(&[Interval]) -> Classify + Sync,
{
    let mut stats = BnbStats::default();
    // breadth-first until the frontier is wide enough to share out
    let mut frontier = vec![root];
    while !frontier.is_empty() && frontier.len() < FRONTIER && stats.processed < budget {
        let mut next = Vec::new();
        for b in frontier {
            stats.processed += 1;
            match classify(&b) {
                Classify::Done => {}
                Classify::Unresolved => stats.unresolved += 1,
                Classify::Violation(p, v) => {
                    stats.violation = Some((p, v));
                    return stats;
                }
                Classify::Split(d) => {
                    let (l, h) = split(&b, d);
                    next.push(l);
                    next.push(h);
                }
            }
        }
        frontier = next;
    }
    if frontier.is_empty() {
        return stats;
    }
    let share = (budget.saturating_sub(stats.processed) / frontier.len()).max(1);
    let parts: Vec<BnbStats> = frontier.into_par_iter().map(|b| run_serial(b, share, &classify)).collect();
    for p in parts {
        stats.processed += p.processed;
        stats.unresolved += p.unresolved;
        stats.exhausted |= p.exhausted;
        if stats.violation.is_none() {
            stats.violation = p.violation;
        }
    }
    stats
}

fn run_serial<F>(root: Vec<Interval>, budget: usize, classify: &F) -> BnbStats
where
    F: Fn(&[Interval]) -> Classify,
{
    let mut stats = BnbStats::default();
    let mut stack = vec![root];
    while let Some(b) = stack.pop() {
        if stats.processed >= budget {
            stats.exhausted = true;
            return stats;
        }
        stats.processed += 1;
        match classify(&b) {
            Classify::Done => {}
            Classify::Unresolved => stats.unresolved += 1,
            Classify::Violation(p, v) => {
                stats.violation = Some((p, v));
                return stats;
            }
            Classify::Split(d) => {
                let (l, h) = split(&b, d);
                stack.push(h);
                stack.push(l);
            }
        }
    }
    stats
}
