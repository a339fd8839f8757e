//! The controller for the concrete model: the symbolic controller held
//! over each sampling period, composed with the funnel feedback.
//!
//! `û(t) = 𝒦(H(x̂(kT_s)))` on `[kT_s, (k+1)T_s)`, and
//! `u = κ(t mod T_s, φ(x̂)(x − π(x̂, û)), x̂, û)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::funnel::{error_state, state_from_error, ErrorSystem, FunnelCertificate};
use crate::games::{ControllerTable, GameMode};
use crate::interval::IntervalBox;

/// Sample-and-hold state owned by the caller.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Latch {
    period: Option<u64>,
    cell: usize,
    input: Option<usize>,
}

impl Latch {
    pub fn new() -> Self {
        Latch::default()
    }

    pub fn period(&self) -> Option<u64> {
        self.period
    }

    pub fn cell(&self) -> Option<usize> {
        self.period.map(|_| self.cell)
    }

    /// Index of the held input; `None` once the target of a reach-avoid
    /// game has been latched.
    pub fn input(&self) -> Option<usize> {
        self.input
    }
}

/// What a sampling instant latched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hold {
    Input(usize),
    /// A target cell of a reach-avoid game: the task is complete.
    Reached,
}

pub struct HierarchicalController<'a, E: ErrorSystem + ?Sized> {
    pub table: &'a ControllerTable,
    pub cert: &'a FunnelCertificate,
    pub es: &'a E,
}

impl<'a, E: ErrorSystem + ?Sized> Clone for HierarchicalController<'a, E> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<'a, E: ErrorSystem + ?Sized> Copy for HierarchicalController<'a, E> {}

/// Period index of `t`; a new period starts exactly at `kT_s`.
pub fn period_of(t: f64, ts: f64) -> u64 {
    (t / ts + 1e-9).floor().max(0.0) as u64
}

impl<'a, E: ErrorSystem + ?Sized> HierarchicalController<'a, E> {
    pub fn new(table: &'a ControllerTable, cert: &'a FunnelCertificate, es: &'a E) -> Result<Self> {
        cert.check_against(es)?;
        if table.grid().dim() != es.arities().xhat || table.inputs().domain().dim() != es.arities().uhat {
            return Err(Error::Format("controller table does not match the error system".into()));
        }
        Ok(HierarchicalController { table, cert, es })
    }

    pub fn ts(&self) -> f64 {
        self.cert.ts
    }

    /// Latches `H(x̂)` at the start of period `k`.
    pub fn sample(&self, k: u64, t: f64, xhat: &[f64], latch: &mut Latch) -> Result<Hold> {
        let cell = self.table.grid().cell_of(xhat);
        let hold = match self.table.choice(cell) {
            Some(u) if self.table.in_win(cell) => Hold::Input(u),
            None if self.table.mode() == GameMode::ReachAvoid && self.table.in_stay(cell) => Hold::Reached,
            _ => return Err(Error::LeftWinningSet { t, cell }),
        };
        *latch = Latch { period: Some(k), cell, input: if let Hold::Input(u) = hold { Some(u) } else { None } };
        Ok(hold)
    }

    /// `κ̂(t, x̂)`. The latch is refreshed from `x̂` when `t` lies in a
    /// period it has not seen; `None` means the target was reached.
    pub fn zoh_control(&self, t: f64, xhat: &[f64], latch: &mut Latch) -> Result<Option<&'a [f64]>> {
        let k = period_of(t, self.ts());
        if latch.period != Some(k) {
            self.sample(k, t, xhat, latch)?;
        }
        Ok(latch.input.map(|u| self.table.inputs().point(u)))
    }

    /// Funnel feedback at time `t̃ ∈ [0, T_s]` into the period.
    pub fn low_level(&self, t_tilde: f64, x: &[f64], xhat: &[f64], uhat: &[f64]) -> Vec<f64> {
        let e = error_state(x, xhat, uhat, self.es);
        self.cert.kappa_at(t_tilde, &e, xhat, uhat)
    }

    /// `C(t, x, x̂)`; `None` once the target of a reach-avoid game is reached.
    pub fn composed_control(&self, t: f64, x: &[f64], xhat: &[f64], latch: &mut Latch) -> Result<Option<Vec<f64>>> {
        let Some(uhat) = self.zoh_control(t, xhat, latch)? else { return Ok(None) };
        let k = latch.period.expect("latched by zoh_control");
        let t_tilde = (t - k as f64 * self.ts()).max(0.0);
        Ok(Some(self.low_level(t_tilde, x, xhat, uhat)))
    }

    /// Half-widths of the largest symmetric box around 0 containing `E0`,
    /// mapped to a bound on `x − π(x̂, û)`.
    fn e0_offset_bound(&self) -> Vec<f64> {
        let e0 = &self.cert.e0;
        let r: Vec<f64> = e0.lo().iter().zip(e0.hi()).map(|(l, h)| l.abs().max(h.abs())).collect();
        self.es.untransformed_bound(&r)
    }

    /// Cells that may hold a witness: winning cells with an input.
    fn witness_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.table.win_set().into_iter().filter(|&c| self.table.choice(c).is_some())
    }

    pub fn initial_set(&self) -> WinningInitialSet<'_, 'a, E> {
        WinningInitialSet { hc: self, refinements: 32 }
    }
}

/// `X0 = {π(x̂, 𝒦(H(x̂))) | H(x̂) ∈ R} + E0`, decided by a bounded search.
pub struct WinningInitialSet<'h, 'a, E: ErrorSystem + ?Sized> {
    hc: &'h HierarchicalController<'a, E>,
    /// Low-discrepancy points tried per cell after its center.
    pub refinements: usize,
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u32, base: u32) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Candidate `j` of a cell: the center for `j = 0`, then Halton points.
fn candidate(cell: &IntervalBox, j: usize) -> Vec<f64> {
    if j == 0 {
        return cell.center();
    }
    (0..cell.dim()).map(|d| cell.lo()[d] + radical_inverse(j as u32, PRIMES[d % PRIMES.len()]) * (cell.hi()[d] - cell.lo()[d])).collect()
}

impl<'h, 'a, E: ErrorSystem + ?Sized> WinningInitialSet<'h, 'a, E> {
    fn admissible(&self, x: &[f64], xhat: &[f64], cell: usize) -> bool {
        let hc = self.hc;
        if hc.table.grid().cell_of(xhat) != cell || !hc.table.in_win(cell) {
            return false;
        }
        let Some(u) = hc.table.choice(cell) else { return false };
        let e = error_state(x, xhat, hc.table.inputs().point(u), hc.es);
        hc.cert.e0.contains_point(&e)
    }

    /// A witness `x̂₀` with `H(x̂₀) ∈ R` and `φ(x̂₀)(x − π(x̂₀, 𝒦(H(x̂₀)))) ∈ E0`,
    /// or `None` when the search finds none.
    pub fn witness(&self, x: &[f64]) -> Option<Vec<f64>> {
        let hc = self.hc;
        let grid = hc.table.grid();
        let inputs = hc.table.inputs();
        let pi = hc.es.affine_map();
        let bound = hc.e0_offset_bound();
        for cell in hc.witness_cells() {
            let cb = grid.cell_box(cell);
            let u = inputs.point(hc.table.choice(cell).expect("filtered"));
            let image = pi.image(&cb, &IntervalBox::point(u).expect("finite input"));
            let reach = image.expand(&bound).expect("non-negative bound");
            if !reach.contains_point(x) {
                continue;
            }
            for j in 0..=self.refinements {
                let xhat = candidate(&cb, j);
                if self.admissible(x, &xhat, cell) {
                    return Some(xhat);
                }
            }
        }
        None
    }

    /// A random member with its witness: a candidate point of a random cell
    /// of `cells` (all witness cells when empty) offset by a uniform `e ∈ E0`.
    pub fn sample<R: Rng>(&self, rng: &mut R, cells: &[usize], attempts: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let hc = self.hc;
        let pool: Vec<usize> = if cells.is_empty() { hc.witness_cells().collect() } else { cells.iter().copied().filter(|&c| hc.table.choice(c).is_some() && hc.table.in_win(c)).collect() };
        if pool.is_empty() {
            return Ok(None);
        }
        let e0 = &hc.cert.e0;
        for _ in 0..attempts {
            let cell = pool[rng.gen_range(0..pool.len())];
            let xhat = candidate(&hc.table.grid().cell_box(cell), rng.gen_range(0..=self.refinements));
            let u = hc.table.inputs().point(hc.table.choice(cell).expect("filtered"));
            let e: Vec<f64> = (0..e0.dim()).map(|d| rng.gen_range(e0.lo()[d]..=e0.hi()[d])).collect();
            let x = state_from_error(&e, &xhat, u, hc.es)?;
            if let Some(w) = self.witness(&x) {
                return Ok(Some((x, w)));
            }
        }
        Ok(None)
    }

    /// Re-checks a witness returned by [`witness`](Self::witness).
    pub fn is_witness(&self, x: &[f64], xhat: &[f64]) -> bool {
        self.admissible(x, xhat, self.hc.table.grid().cell_of(xhat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{InputGrid, TransitionSystem};
    use crate::funnel::FunnelDomains;
    use crate::games::{synthesize, GameSpec};
    use crate::grid::PartitionGrid;
    use crate::models::integrator::IntegratorErrors;
    use crate::models::Model;
    use crate::polynomial::{Arities, PolynomialMap};

    /// 1-D chain of 5 cells on [0, 1], inputs {−0.1, 0, 0.1}; every cell
    /// moves right by one under 0.1 and stays under 0.
    fn table(mode: GameMode) -> ControllerTable {
        let grid = PartitionGrid::new(IntervalBox::new(vec![0.0], vec![1.0]).unwrap(), vec![5]).unwrap();
        let inputs = InputGrid::new(IntervalBox::new(vec![-0.1], vec![0.1]).unwrap(), vec![3], |_| true).unwrap();
        let rows = (0..5usize).map(|s| vec![vec![s.saturating_sub(1)], vec![s], vec![(s + 1).min(4)]]).collect();
        let ts = TransitionSystem::from_rows(grid, inputs, vec![true; 5], rows).unwrap();
        let spec = GameSpec { target_cells: vec![4], stay_inputs: vec![1], all_inputs: vec![0, 1, 2] };
        synthesize(&ts, &spec, mode).unwrap()
    }

    fn cert(es: &IntegratorErrors) -> FunnelCertificate {
        let e = Arities { t: 1, e: 2, xhat: 0, uhat: 0, w: 0, what: 0 };
        let k = Arities { t: 1, e: 2, xhat: 1, uhat: 1, w: 0, what: 0 };
        let b = |r: f64| IntervalBox::symmetric(&[r]).unwrap();
        let c = FunnelCertificate {
            schema_version: crate::funnel::CERTIFICATE_SCHEMA,
            gamma: 1.0,
            ts: 2.0,
            e0: IntervalBox::symmetric(&[0.02, 0.02]).unwrap(),
            jump_matrix: es.jump_matrix(),
            domains: FunnelDomains { xhat: IntervalBox::new(vec![0.0], vec![1.0]).unwrap(), uhat: b(0.1), delta_uhat: b(0.2), w: b(0.0), what: b(0.0) },
            v: PolynomialMap::quadratic(e, &[vec![1.0, 0.0], vec![0.0, 1.0]], 0.0, 0.0),
            kappa: PolynomialMap::linear_in_e(k, &[vec![-1.0, -2.0]]),
        };
        c.check_against(es).unwrap();
        c
    }

    #[test]
    fn hold_is_constant_over_a_period_and_switches_at_its_end() {
        let model = crate::models::integrator::Integrator::new();
        let es = model.error_system();
        let (t, c) = (table(GameMode::ReachAvoidStay), cert(es));
        let hc = HierarchicalController::new(&t, &c, es).unwrap();
        let mut latch = Latch::new();
        let u0 = hc.zoh_control(0.0, &[0.1], &mut latch).unwrap().unwrap().to_vec();
        assert_eq!(u0, vec![0.1]);
        // x̂ moved into the target, but the held input stays until T_s
        assert_eq!(hc.zoh_control(1.999, &[0.95], &mut latch).unwrap().unwrap(), &[0.1]);
        assert_eq!(hc.zoh_control(2.0, &[0.95], &mut latch).unwrap().unwrap(), &[0.0]);
        assert_eq!(latch.period(), Some(1));
        assert_eq!(latch.cell(), Some(4));
    }

    #[test]
    fn reach_avoid_latch_reports_completion() {
        let model = crate::models::integrator::Integrator::new();
        let es = model.error_system();
        let (t, c) = (table(GameMode::ReachAvoid), cert(es));
        let hc = HierarchicalController::new(&t, &c, es).unwrap();
        let mut latch = Latch::new();
        assert_eq!(hc.zoh_control(0.0, &[0.9], &mut latch).unwrap(), None);
        assert_eq!(latch.input(), None);
    }

    #[test]
    fn composed_control_folds_time_and_vanishes_at_zero_error() {
        let model = crate::models::integrator::Integrator::new();
        let es = model.error_system();
        let (t, c) = (table(GameMode::ReachAvoidStay), cert(es));
        let hc = HierarchicalController::new(&t, &c, es).unwrap();
        let mut latch = Latch::new();
        // x = π(x̂, û) = (x̂, û)
        assert_eq!(hc.composed_control(5.0, &[0.1, 0.1], &[0.1], &mut latch).unwrap().unwrap(), vec![0.0]);
        assert_eq!(latch.period(), Some(2));
        // u = −e₁ − 2e₂
        let u = hc.composed_control(5.0, &[0.2, 0.1], &[0.1], &mut latch).unwrap().unwrap();
        assert!((u[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn leaving_the_winning_set_is_an_error() {
        let model = crate::models::integrator::Integrator::new();
        let es = model.error_system();
        let t = table(GameMode::ReachAvoidStay);
        let c = cert(es);
        let hc = HierarchicalController::new(&t, &c, es).unwrap();
        let mut latch = Latch::new();
        assert!(matches!(hc.zoh_control(0.0, &[5.0], &mut latch), Err(Error::LeftWinningSet { cell: 5, .. })));
    }

    #[test]
    fn initial_set_membership() {
        let model = crate::models::integrator::Integrator::new();
        let es = model.error_system();
        let (t, c) = (table(GameMode::ReachAvoidStay), cert(es));
        let hc = HierarchicalController::new(&t, &c, es).unwrap();
        let x0 = hc.initial_set();
        // π(center of cell 0, its input)
        assert_eq!(x0.witness(&[0.1, 0.1]), Some(vec![0.1]));
        assert_eq!(x0.witness(&[50.0, 0.0]), None);
        // offset inside E0 but away from the center
        let x = [0.115, 0.09];
        let w = x0.witness(&x).unwrap();
        assert!(x0.is_witness(&x, &w));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        for _ in 0..50 {
            let (x, w) = x0.sample(&mut rng, &[], 10).unwrap().unwrap();
            assert!(x0.is_witness(&x, &w));
        }
    }

    #[test]
    fn halton_candidates_lie_in_the_cell() {
        let cell = IntervalBox::new(vec![1.0, -2.0, 0.0], vec![1.5, -1.0, 0.1]).unwrap();
        for j in 0..=32 {
            assert!(cell.contains_point(&candidate(&cell, j)));
        }
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert!((radical_inverse(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }
}
