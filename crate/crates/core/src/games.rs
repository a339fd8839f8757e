//! Safety and reachability games on a [`TransitionSystem`] and extraction of
//! the symbolic controller.
//!
//! Safety is solved by repeated removal (greatest fixed point), reachability
//! by a layered worklist over predecessor counts (least fixed point). A
//! straightforward rescan version of the reachability iteration is kept for
//! cross-checking.
//!
//! # Binary format
//!
//! Same header discipline as the transition system (magic `RSCT`), followed
//! by a `u8` mode and, per cell, a `u8` flag byte (bit 0: stay set, bit 1:
//! winning set), a `u32` rank and a `u32` input index (`u32::MAX` for none).

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::abstraction::{InputGrid, TransitionSystem};
use crate::codec;
use crate::error::{Error, Result};
use crate::grid::PartitionGrid;

const MAGIC: &[u8; 4] = b"RSCT";
pub const NO_INPUT: u32 = u32::MAX;
pub const NO_RANK: u32 = u32::MAX;

/// Target data of a reach-avoid(-stay) game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub target_cells: Vec<usize>,
    pub stay_inputs: Vec<usize>,
    pub all_inputs: Vec<usize>,
}

impl GameSpec {
    fn validate(&self, ts: &TransitionSystem) -> Result<()> {
        if let Some(&s) = self.target_cells.iter().find(|&&s| s >= ts.num_states()) {
            return Err(Error::StateOutOfRange(s));
        }
        for &u in self.stay_inputs.iter().chain(&self.all_inputs) {
            if u >= ts.num_inputs() {
                return Err(Error::InputOutOfRange(u));
            }
        }
        if let Some(&u) = self.stay_inputs.iter().find(|u| !self.all_inputs.contains(u)) {
            return Err(Error::InvalidSettings(format!("stay input {u} is not an admissible input")));
        }
        Ok(())
    }
}

/// Whether the target must also be rendered invariant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameMode {
    /// Reach the target, then stay in it forever.
    ReachAvoidStay,
    /// Reach the target; the run ends there.
    ReachAvoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SafetyResult {
    pub stay: Vec<bool>,
    pub choice: Vec<u32>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachResult {
    pub win: Vec<bool>,
    pub rank: Vec<u32>,
    pub choice: Vec<u32>,
    pub iterations: usize,
}

fn sorted_inputs(inputs: &[usize]) -> Vec<usize> {
    let mut v = inputs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn row_inside(ts: &TransitionSystem, s: usize, u: usize, set: &[bool]) -> bool {
    let out = ts.out();
    ts.row(s, u).iter().all(|&t| (t as usize) < out && set[t as usize])
}

/// Maximal controlled-invariant subset of the target under the stay inputs.
pub fn solve_safety(ts: &TransitionSystem, spec: &GameSpec) -> Result<SafetyResult> {
    spec.validate(ts)?;
    let n = ts.num_states();
    let inputs = sorted_inputs(&spec.stay_inputs);
    let mut stay = vec![false; n];
    for &s in &spec.target_cells {
        stay[s] = ts.is_safe(s);
    }
    let mut iterations = 0;
    loop {
        iterations += 1;
        let members: Vec<usize> = (0..n).filter(|&s| stay[s]).collect();
        let drop: Vec<usize> = members
            .par_iter()
            .filter(|&&s| !inputs.iter().any(|&u| row_inside(ts, s, u, &stay)))
            .copied()
            .collect();
        if drop.is_empty() {
            break;
        }
        for s in drop {
            stay[s] = false;
        }
    }
    let choice = (0..n)
        .map(|s| {
            if !stay[s] {
                return NO_INPUT;
            }
            inputs.iter().find(|&&u| row_inside(ts, s, u, &stay)).map_or(NO_INPUT, |&u| u as u32)
        })
        .collect();
    Ok(SafetyResult { stay, choice, iterations })
}

/// States from which `stay` can be reached while avoiding `Out`, via a
/// layered worklist on per-pair counts of successors not yet winning.
pub fn solve_reach(ts: &TransitionSystem, stay: &[bool], all_inputs: &[usize]) -> Result<ReachResult> {
    let n = ts.num_states();
    let m = ts.num_inputs();
    if stay.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: stay.len() });
    }
    if let Some(&u) = all_inputs.iter().find(|&&u| u >= m) {
        return Err(Error::InputOutOfRange(u));
    }
    let inputs = sorted_inputs(all_inputs);
    let mut allowed = vec![false; m];
    for &u in &inputs {
        allowed[u] = true;
    }
    let out = ts.out();

    // pending[s*m+u]: successors of (s,u) not yet in R; Out is never in R
    let mut pending = vec![u32::MAX; n * m];
    let mut pred_count = vec![0u32; n + 1];
    for s in 0..n {
        if !ts.is_safe(s) {
            continue;
        }
        for &u in &inputs {
            let row = ts.row(s, u);
            pending[s * m + u] = row.len() as u32;
            for &t in row {
                if (t as usize) < out {
                    pred_count[t as usize + 1] += 1;
                }
            }
        }
    }
    for i in 0..n {
        pred_count[i + 1] += pred_count[i];
    }
    let pred_start = pred_count;
    let mut fill = pred_start.clone();
    let mut preds = vec![0u32; pred_start[n] as usize];
    for s in 0..n {
        if !ts.is_safe(s) {
            continue;
        }
        for &u in &inputs {
            for &t in ts.row(s, u) {
                if (t as usize) < out {
                    preds[fill[t as usize] as usize] = (s * m + u) as u32;
                    fill[t as usize] += 1;
                }
            }
        }
    }

    let mut win = vec![false; n];
    let mut rank = vec![NO_RANK; n];
    let mut choice = vec![NO_INPUT; n];
    let mut frontier: Vec<usize> = (0..n).filter(|&s| stay[s] && ts.is_safe(s)).collect();
    for &s in &frontier {
        win[s] = true;
        rank[s] = 0;
    }
    let mut level = 0u32;
    let mut iterations = 0;
    while !frontier.is_empty() {
        iterations += 1;
        level += 1;
        let mut candidates = Vec::new();
        for &t in &frontier {
            for &p in &preds[pred_start[t] as usize..pred_start[t + 1] as usize] {
                let p = p as usize;
                pending[p] -= 1;
                if pending[p] == 0 && !win[p / m] {
                    candidates.push(p / m);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for &s in &candidates {
            choice[s] = inputs.iter().find(|&&u| pending[s * m + u] == 0).map_or(NO_INPUT, |&u| u as u32);
        }
        for &s in &candidates {
            win[s] = true;
            rank[s] = level;
        }
        frontier = candidates;
    }
    Ok(ReachResult { win, rank, choice, iterations })
}

/// Reachability by full rescans: `R ← R ∪ {s | ∃u, δ(s,u) ⊆ R}` until no
/// change. Same output as [`solve_reach`].
pub fn solve_reach_naive(ts: &TransitionSystem, stay: &[bool], all_inputs: &[usize]) -> Result<ReachResult> {
    let n = ts.num_states();
    if stay.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: stay.len() });
    }
    if let Some(&u) = all_inputs.iter().find(|&&u| u >= ts.num_inputs()) {
        return Err(Error::InputOutOfRange(u));
    }
    let inputs = sorted_inputs(all_inputs);
    let mut win: Vec<bool> = (0..n).map(|s| stay[s] && ts.is_safe(s)).collect();
    let mut rank: Vec<u32> = win.iter().map(|w| if *w { 0 } else { NO_RANK }).collect();
    let mut choice = vec![NO_INPUT; n];
    let mut level = 0u32;
    let mut iterations = 0;
    loop {
        iterations += 1;
        level += 1;
        let entering: Vec<(usize, u32)> = (0..n)
            .filter(|&s| !win[s] && ts.is_safe(s))
            .filter_map(|s| inputs.iter().find(|&&u| row_inside(ts, s, u, &win)).map(|&u| (s, u as u32)))
            .collect();
        if entering.is_empty() {
            break;
        }
        for (s, u) in entering {
            win[s] = true;
            rank[s] = level;
            choice[s] = u;
        }
    }
    Ok(ReachResult { win, rank, choice, iterations })
}

/// Symbolic controller: stay set `S`, winning set `R ⊇ S`, input choice and
/// rank (0 on `S`, entry iteration elsewhere).
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerTable {
    grid: PartitionGrid,
    inputs: InputGrid,
    mode: GameMode,
    stay: Vec<bool>,
    win: Vec<bool>,
    rank: Vec<u32>,
    choice: Vec<u32>,
    config_hash: [u8; 32],
}

/// Merges stay choices on `S` and reach choices on `R \ S`.
pub fn extract_controller(ts: &TransitionSystem, mode: GameMode, safety: &SafetyResult, reach: &ReachResult) -> ControllerTable {
    let n = ts.num_states();
    let choice = (0..n)
        .map(|s| {
            if safety.stay[s] {
                match mode {
                    GameMode::ReachAvoidStay => safety.choice[s],
                    GameMode::ReachAvoid => NO_INPUT,
                }
            } else if reach.win[s] {
                reach.choice[s]
            } else {
                NO_INPUT
            }
        })
        .collect();
    ControllerTable {
        grid: ts.grid().clone(),
        inputs: ts.inputs().clone(),
        mode,
        stay: safety.stay.clone(),
        win: reach.win.clone(),
        rank: reach.rank.clone(),
        choice,
        config_hash: *ts.config_hash(),
    }
}

/// Iteration counts of the two fixed points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthesisStats {
    pub safety_iterations: usize,
    pub reach_iterations: usize,
}

/// Runs the full game for `mode`: safety then reachability, or plain
/// reachability of the target cells.
pub fn synthesize(ts: &TransitionSystem, spec: &GameSpec, mode: GameMode) -> Result<ControllerTable> {
    synthesize_with_stats(ts, spec, mode).map(|(t, _)| t)
}

pub fn synthesize_with_stats(ts: &TransitionSystem, spec: &GameSpec, mode: GameMode) -> Result<(ControllerTable, SynthesisStats)> {
    let safety = match mode {
        GameMode::ReachAvoidStay => solve_safety(ts, spec)?,
        GameMode::ReachAvoid => {
            spec.validate(ts)?;
            let mut stay = vec![false; ts.num_states()];
            for &s in &spec.target_cells {
                stay[s] = ts.is_safe(s);
            }
            SafetyResult { choice: vec![NO_INPUT; stay.len()], stay, iterations: 0 }
        }
    };
    let reach = solve_reach(ts, &safety.stay, &spec.all_inputs)?;
    let stats = SynthesisStats { safety_iterations: safety.iterations, reach_iterations: reach.iterations };
    Ok((extract_controller(ts, mode, &safety, &reach), stats))
}

impl ControllerTable {
    pub fn grid(&self) -> &PartitionGrid {
        &self.grid
    }

    pub fn inputs(&self) -> &InputGrid {
        &self.inputs
    }

    pub fn mode(&self) -> GameMode {
        self.mode
    }

    pub fn in_stay(&self, s: usize) -> bool {
        s < self.stay.len() && self.stay[s]
    }

    pub fn in_win(&self, s: usize) -> bool {
        s < self.win.len() && self.win[s]
    }

    pub fn rank(&self, s: usize) -> Option<u32> {
        self.rank.get(s).copied().filter(|r| *r != NO_RANK)
    }

    /// Input index chosen in cell `s`, if any.
    pub fn choice(&self, s: usize) -> Option<usize> {
        self.choice.get(s).copied().filter(|u| *u != NO_INPUT).map(|u| u as usize)
    }

    pub fn stay_set(&self) -> Vec<usize> {
        (0..self.stay.len()).filter(|&s| self.stay[s]).collect()
    }

    pub fn win_set(&self) -> Vec<usize> {
        (0..self.win.len()).filter(|&s| self.win[s]).collect()
    }

    /// `|R| / |𝒳 \ {Out}|`.
    pub fn coverage(&self) -> f64 {
        self.win.iter().filter(|w| **w).count() as f64 / self.win.len() as f64
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        &self.config_hash
    }

    pub fn set_config_hash(&mut self, hash: [u8; 32]) {
        self.config_hash = hash;
    }

    /// Re-checks the fixed-point and rank certificates against `ts`.
    pub fn verify(&self, ts: &TransitionSystem) -> std::result::Result<(), String> {
        let out = ts.out();
        for s in 0..self.win.len() {
            if self.stay[s] && !self.win[s] {
                return Err(format!("cell {s} in S but not in R"));
            }
            if !self.win[s] {
                continue;
            }
            let Some(u) = self.choice(s) else {
                if self.stay[s] && self.mode == GameMode::ReachAvoid {
                    continue;
                }
                return Err(format!("winning cell {s} has no input"));
            };
            for &t in ts.row(s, u) {
                let t = t as usize;
                if t == out {
                    return Err(format!("cell {s} input {u} can reach Out"));
                }
                if self.stay[s] {
                    if !self.stay[t] {
                        return Err(format!("cell {s} input {u} leaves S to {t}"));
                    }
                } else if !self.win[t] || self.rank[t] >= self.rank[s] {
                    return Err(format!("cell {s} (rank {}) input {u} reaches {t} without rank decrease", self.rank[s]));
                }
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        codec::write_header(w, MAGIC, &self.config_hash)?;
        codec::write_grid(w, &self.grid)?;
        codec::write_inputs(w, &self.inputs)?;
        w.write_u8(match self.mode {
            GameMode::ReachAvoidStay => 0,
            GameMode::ReachAvoid => 1,
        })?;
        for s in 0..self.win.len() {
            w.write_u8(self.stay[s] as u8 | (self.win[s] as u8) << 1)?;
            w.write_u32::<LE>(self.rank[s])?;
            w.write_u32::<LE>(self.choice[s])?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let config_hash = codec::read_header(r, MAGIC)?;
        let grid = codec::read_grid(r)?;
        let inputs = codec::read_inputs(r)?;
        let mode = match r.read_u8()? {
            0 => GameMode::ReachAvoidStay,
            1 => GameMode::ReachAvoid,
            m => return Err(Error::Format(format!("unknown game mode {m}"))),
        };
        let n = grid.total_cells();
        let (mut stay, mut win, mut rank, mut choice) = (vec![false; n], vec![false; n], vec![0; n], vec![0; n]);
        for s in 0..n {
            let f = r.read_u8()?;
            stay[s] = f & 1 != 0;
            win[s] = f & 2 != 0;
            rank[s] = r.read_u32::<LE>()?;
            choice[s] = r.read_u32::<LE>()?;
            if choice[s] != NO_INPUT && choice[s] as usize >= inputs.len() {
                return Err(Error::Format(format!("cell {s}: input {} out of range", choice[s])));
            }
        }
        Ok(ControllerTable { grid, inputs, mode, stay, win, rank, choice, config_hash })
    }

    /// One line per winning cell: `s S|R rank input`.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# mode {:?} cells {} winning {} stay {}", self.mode, self.win.len(), self.win_set().len(), self.stay_set().len())?;
        for s in 0..self.win.len() {
            if !self.win[s] {
                continue;
            }
            let tag = if self.stay[s] { "S" } else { "R" };
            match self.choice(s) {
                Some(u) => writeln!(w, "{s} {tag} {} {u}", self.rank[s])?,
                None => writeln!(w, "{s} {tag} {} -", self.rank[s])?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::IntervalBox;

    fn system(rows: Vec<Vec<Vec<usize>>>) -> TransitionSystem {
        let n = rows.len();
        let m = rows[0].len();
        let grid = PartitionGrid::new(IntervalBox::new(vec![0.0], vec![n as f64]).unwrap(), vec![n]).unwrap();
        let inputs = InputGrid::new(IntervalBox::new(vec![0.0], vec![1.0]).unwrap(), vec![m], |_| true).unwrap();
        TransitionSystem::from_rows(grid, inputs, vec![true; n], rows).unwrap()
    }

    fn spec(target: Vec<usize>, m: usize) -> GameSpec {
        GameSpec { target_cells: target, stay_inputs: (0..m).collect(), all_inputs: (0..m).collect() }
    }

    #[test]
    fn safety_removes_states_leaking_out_of_target() {
        // a -> a, b -> {a, c}, c -> Out
        let ts = system(vec![vec![vec![0]], vec![vec![0, 2]], vec![vec![3]]]);
        let r = solve_safety(&ts, &spec(vec![0, 1], 1)).unwrap();
        assert_eq!(r.stay, vec![true, false, false]);
        assert_eq!(r.choice[0], 0);
    }

    #[test]
    fn safety_trivial_cases() {
        let ts = system(vec![vec![vec![0]], vec![vec![1]], vec![vec![2]]]);
        let r = solve_safety(&ts, &spec(vec![0, 1, 2], 1)).unwrap();
        assert_eq!(r.stay, vec![true; 3]);
        assert_eq!(r.iterations, 1);
        let r = solve_safety(&ts, &spec(vec![], 1)).unwrap();
        assert_eq!(r.stay, vec![false; 3]);
    }

    #[test]
    fn reach_chain_ranks() {
        // a -> b -> c, c in S
        let ts = system(vec![vec![vec![1]], vec![vec![2]], vec![vec![2]]]);
        let stay = vec![false, false, true];
        for r in [solve_reach(&ts, &stay, &[0]).unwrap(), solve_reach_naive(&ts, &stay, &[0]).unwrap()] {
            assert_eq!(r.win, vec![true; 3]);
            assert_eq!(r.rank, vec![2, 1, 0]);
            assert_eq!(r.choice[..2], [0, 0]);
        }
        let r = solve_reach(&ts, &[false; 3], &[0]).unwrap();
        assert_eq!(r.win, vec![false; 3]);
    }

    #[test]
    fn state_with_only_out_successors_loses() {
        let ts = system(vec![vec![vec![1], vec![3]], vec![vec![1], vec![1]], vec![vec![3], vec![3, 1]]]);
        let r = solve_reach(&ts, &[false, true, false], &[0, 1]).unwrap();
        assert_eq!(r.win, vec![true, true, false]);
    }

    #[test]
    fn tie_break_prefers_smallest_input() {
        // four inputs; inputs 1 and 3 keep cell 0 in place, the others leave
        let ts = system(vec![vec![vec![1], vec![0], vec![1], vec![0]], vec![vec![2]; 4], vec![vec![2]; 4]]);
        let sp = GameSpec { target_cells: vec![0], stay_inputs: vec![3, 1, 0, 2], all_inputs: vec![0, 1, 2, 3] };
        let c = synthesize(&ts, &sp, GameMode::ReachAvoidStay).unwrap();
        assert_eq!(c.choice(0), Some(1));
        c.verify(&ts).unwrap();
    }

    #[test]
    fn controller_roundtrip() {
        let ts = system(vec![vec![vec![1], vec![0]], vec![vec![2], vec![0, 1]], vec![vec![2], vec![3]]]);
        let c = synthesize(&ts, &spec(vec![2], 2), GameMode::ReachAvoidStay).unwrap();
        c.verify(&ts).unwrap();
        let mut buf = Vec::new();
        c.write_binary(&mut buf).unwrap();
        assert_eq!(ControllerTable::read_binary(&mut buf.as_slice()).unwrap(), c);
        let mut txt = Vec::new();
        c.write_text(&mut txt).unwrap();
        assert!(String::from_utf8(txt).unwrap().contains("2 S 0 0"));
    }

    #[test]
    fn reach_avoid_mode_skips_safety() {
        // target cell 2 is not invariant, but reach-avoid only needs to hit it
        let ts = system(vec![vec![vec![1]], vec![vec![2]], vec![vec![3]]]);
        let c = synthesize(&ts, &spec(vec![2], 1), GameMode::ReachAvoid).unwrap();
        assert_eq!(c.win_set(), vec![0, 1, 2]);
        assert_eq!(c.choice(2), None);
        c.verify(&ts).unwrap();
        let c = synthesize(&ts, &spec(vec![2], 1), GameMode::ReachAvoidStay).unwrap();
        assert!(c.win_set().is_empty());
    }
}
