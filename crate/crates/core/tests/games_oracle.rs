//! Game solvers against fixed-point characterizations computed by subset
//! enumeration, plus adversarial closed-loop runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachsynth::abstraction::{InputGrid, TransitionSystem};
use reachsynth::games::{solve_reach, solve_reach_naive, solve_safety, synthesize, GameMode, GameSpec};
use reachsynth::grid::PartitionGrid;
use reachsynth::IntervalBox;

fn random_system(rng: &mut ChaCha8Rng) -> (TransitionSystem, Vec<Vec<Vec<usize>>>) {
    let n = rng.gen_range(1..=12);
    let m = rng.gen_range(1..=3);
    let rows: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let k = rng.gen_range(1..=4);
                    // index n is Out
                    let mut r: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=n)).collect();
                    r.sort_unstable();
                    r.dedup();
                    r
                })
                .collect()
        })
        .collect();
    let grid = PartitionGrid::new(IntervalBox::new(vec![0.0], vec![1.0]).unwrap(), vec![n]).unwrap();
    let inputs = InputGrid::new(IntervalBox::new(vec![0.0], vec![1.0]).unwrap(), vec![m], |_| true).unwrap();
    (TransitionSystem::from_rows(grid, inputs, vec![true; n], rows.clone()).unwrap(), rows)
}

fn inside(rows: &[Vec<Vec<usize>>], s: usize, u: usize, set: u32) -> bool {
    rows[s][u].iter().all(|&t| t < rows.len() && set & (1 << t) != 0)
}

/// Greatest fixed point: union of all subsets `X ⊆ target` with
/// `X ⊆ CPre_stay(X)`.
fn safety_oracle(rows: &[Vec<Vec<usize>>], target: u32, stay_inputs: &[usize]) -> u32 {
    let n = rows.len();
    let mut best = 0;
    for x in 0..(1u32 << n) {
        if x & !target != 0 {
            continue;
        }
        if (0..n).filter(|s| x & (1 << s) != 0).all(|s| stay_inputs.iter().any(|&u| inside(rows, s, u, x))) {
            best |= x;
        }
    }
    best
}

/// Least fixed point: intersection of all `X ⊇ S` closed under `CPre`.
fn reach_oracle(rows: &[Vec<Vec<usize>>], stay: u32, inputs: &[usize]) -> u32 {
    let n = rows.len();
    let mut best = (1u32 << n) - 1;
    for x in 0..(1u32 << n) {
        if stay & !x != 0 {
            continue;
        }
        if (0..n).all(|s| x & (1 << s) != 0 || !inputs.iter().any(|&u| inside(rows, s, u, x))) {
            best &= x;
        }
    }
    best
}

fn mask(v: &[bool]) -> u32 {
    v.iter().enumerate().filter(|(_, b)| **b).fold(0, |acc, (i, _)| acc | 1 << i)
}

#[test]
fn solvers_match_subset_enumeration_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (ts, rows) = random_system(&mut rng);
        let n = ts.num_states();
        let m = ts.num_inputs();
        let target: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        let stay_inputs: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.7)).collect();
        let spec = GameSpec { target_cells: target.clone(), stay_inputs: stay_inputs.clone(), all_inputs: (0..m).collect() };
        let safety = solve_safety(&ts, &spec).unwrap();
        let tmask = target.iter().fold(0u32, |a, s| a | 1 << s);
        assert_eq!(mask(&safety.stay), safety_oracle(&rows, tmask, &stay_inputs));

        let fast = solve_reach(&ts, &safety.stay, &spec.all_inputs).unwrap();
        let slow = solve_reach_naive(&ts, &safety.stay, &spec.all_inputs).unwrap();
        assert_eq!(fast.win, slow.win);
        assert_eq!(fast.rank, slow.rank);
        assert_eq!(fast.choice, slow.choice);
        let all: Vec<usize> = (0..m).collect();
        assert_eq!(mask(&fast.win), reach_oracle(&rows, mask(&safety.stay), &all));

        let c = synthesize(&ts, &spec, GameMode::ReachAvoidStay).unwrap();
        c.verify(&ts).unwrap();
    }
}

#[test]
fn memoryless_strategies_cannot_beat_the_solver() {
    // every memoryless strategy's sure-reach set is contained in R, and
    // some strategy achieves R
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (ts, rows) = random_system(&mut rng);
        let n = rows.len();
        if n > 7 {
            continue;
        }
        let m = ts.num_inputs();
        let stay: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let r = solve_reach(&ts, &stay, &(0..m).collect::<Vec<_>>()).unwrap();
        let mut union = 0u32;
        let mut strategy = vec![0usize; n];
        loop {
            let mut set = mask(&stay);
            loop {
                let grow = (0..n).filter(|&s| set & (1 << s) == 0 && inside(&rows, s, strategy[s], set)).fold(0, |a, s| a | 1 << s);
                if grow == 0 {
                    break;
                }
                set |= grow;
            }
            union |= set;
            let mut d = 0;
            while d < n {
                strategy[d] += 1;
                if strategy[d] < m {
                    break;
                }
                strategy[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
        assert_eq!(union, mask(&r.win));
    }
}

#[test]
fn adversarial_runs_reach_and_stay() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut runs = 0;
    while runs < 1000 {
        let (ts, _) = random_system(&mut rng);
        let n = ts.num_states();
        let m = ts.num_inputs();
        let spec = GameSpec { target_cells: (0..n).filter(|_| rng.gen_bool(0.6)).collect(), stay_inputs: (0..m).collect(), all_inputs: (0..m).collect() };
        let c = synthesize(&ts, &spec, GameMode::ReachAvoidStay).unwrap();
        let win = c.win_set();
        if win.is_empty() {
            continue;
        }
        let s0 = win[rng.gen_range(0..win.len())];
        let budget = c.rank(s0).unwrap() as usize;
        let mut s = s0;
        for step in 0..budget + 20 {
            if step >= budget {
                assert!(c.in_stay(s), "not in S after {budget} steps");
            }
            let succ = ts.successors(s, c.choice(s).unwrap()).unwrap();
            s = succ[rng.gen_range(0..succ.len())];
            assert!(s < n, "run reached Out");
        }
        runs += 1;
    }
}
