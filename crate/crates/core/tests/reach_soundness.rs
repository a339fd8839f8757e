//! Over-approximation boxes against sampled trajectories.

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachsynth::abstraction::{build_abstraction, InputGrid};
use reachsynth::grid::PartitionGrid;
use reachsynth::models::ship::{kinematics_decomposition, ShipKinematics};
use reachsynth::reach::{embed_integrate, rk4_step, Decomposition, ReachSettings, VectorField};
use reachsynth::IntervalBox;

fn bx(lo: &[f64], hi: &[f64]) -> IntervalBox {
    IntervalBox::new(lo.to_vec(), hi.to_vec()).unwrap()
}

fn uniform_in(rng: &mut ChaCha8Rng, b: &IntervalBox) -> Vec<f64> {
    b.lo().iter().zip(b.hi()).map(|(l, h)| if l < h { rng.gen_range(*l..*h) } else { *l }).collect()
}

/// Endpoint at `horizon` under a disturbance switching `switches` times,
/// integrated with 40 RK4 steps per constant piece.
fn endpoint(f: &dyn VectorField, x0: &[f64], u: &[f64], w: &IntervalBox, horizon: f64, switches: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pieces = switches + 1;
    let sub = 40;
    let h = horizon / (pieces * sub) as f64;
    let mut x = x0.to_vec();
    for _ in 0..pieces {
        let wk = uniform_in(rng, w);
        for _ in 0..sub {
            rk4_step(f, &mut x, u, &wk, h);
        }
    }
    x
}

fn what() -> IntervalBox {
    bx(&[-0.01; 3], &[0.01; 3])
}

#[test]
fn ship_cell_contains_monte_carlo_endpoints() {
    let cell = bx(&[0.0, 0.0, -PI], &[0.2, 0.13, -PI + 0.1257]);
    let u = [0.18, 0.0, 0.0];
    let settings = ReachSettings::new(3.0, 50, Vec::new()).unwrap();
    let reach = embed_integrate(&kinematics_decomposition(), &cell, &u, &what(), &settings).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let x0 = uniform_in(&mut rng, &cell);
        let x = endpoint(&ShipKinematics, &x0, &u, &what(), 3.0, 10, &mut rng);
        assert!(reach.contains_point(&x), "{x:?} outside {reach:?}");
    }
}

#[test]
fn ship_decomposition_is_consistent_on_the_diagonal() {
    let d = kinematics_decomposition();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = vec![rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-PI..PI)];
        let u: Vec<f64> = vec![rng.gen_range(0.0..0.18), rng.gen_range(-0.05..0.05), rng.gen_range(-0.1..0.1)];
        let w = uniform_in(&mut rng, &what());
        let got = d.eval(&x, &x, &u, &w, &w).unwrap();
        let mut want = vec![0.0; 3];
        ShipKinematics.eval(&x, &u, &w, &mut want);
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    assert_eq!(worst, 0.0);
}

#[test]
fn point_boxes_stay_points() {
    let d = kinematics_decomposition();
    let settings = ReachSettings::new(3.0, 50, Vec::new()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let x = vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..6.5), rng.gen_range(-PI..PI)];
        let u = vec![rng.gen_range(0.0..0.18), rng.gen_range(-0.05..0.05), rng.gen_range(-0.1..0.1)];
        let w = uniform_in(&mut rng, &what());
        let r = embed_integrate(&d, &IntervalBox::point(&x).unwrap(), &u, &IntervalBox::point(&w).unwrap(), &settings).unwrap();
        assert!(r.widths().iter().all(|&wd| wd <= 1e-6), "{r:?}");
    }
}

#[test]
fn abstraction_successors_contain_sampled_endpoints() {
    let grid = PartitionGrid::new(bx(&[0.0, 0.0, -PI], &[4.0, 3.0, PI]), vec![10, 8, 12]).unwrap();
    let inputs = InputGrid::new(bx(&[0.0, -0.05, -0.1], &[0.18, 0.05, 0.1]), vec![3, 3, 3], |_| true).unwrap();
    let settings = ReachSettings::new(3.0, 30, Vec::new()).unwrap();
    let ts = build_abstraction(&kinematics_decomposition(), &grid, &inputs, &what(), &settings, |_| false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let s = rng.gen_range(0..grid.total_cells());
        let ui = rng.gen_range(0..inputs.len());
        let x0 = uniform_in(&mut rng, &grid.cell_box(s));
        let x = endpoint(&ShipKinematics, &x0, inputs.point(ui), &what(), 3.0, 10, &mut rng);
        let succ = ts.successors(s, ui).unwrap();
        assert!(succ.contains(&grid.cell_of(&x)), "cell {s} input {ui}: endpoint {x:?} not in {succ:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nested_initial_boxes_give_nested_reach_boxes(
        lo in prop::array::uniform3(-1.0f64..1.0),
        inner in prop::array::uniform3(0.0f64..0.3),
        outer in prop::array::uniform3(0.0f64..0.3),
        u in prop::array::uniform3(-0.1f64..0.1),
    ) {
        let small = bx(&lo, &[lo[0] + inner[0], lo[1] + inner[1], lo[2] + inner[2]]);
        let big = bx(
            &[lo[0] - outer[0], lo[1] - outer[1], lo[2] - outer[2]],
            &[lo[0] + inner[0] + outer[0], lo[1] + inner[1] + outer[1], lo[2] + inner[2] + outer[2]],
        );
        let settings = ReachSettings::new(3.0, 30, Vec::new()).unwrap();
        let d = kinematics_decomposition();
        let a = embed_integrate(&d, &small, &u, &what(), &settings).unwrap();
        let b = embed_integrate(&d, &big, &u, &what(), &settings).unwrap();
        let slack = 1e-12;
        for i in 0..3 {
            prop_assert!(b.lo()[i] <= a.lo()[i] + slack && a.hi()[i] <= b.hi()[i] + slack, "{:?} not inside {:?}", a, b);
        }
    }

    #[test]
    fn random_ship_cells_contain_their_endpoints(
        lo in prop::array::uniform3(-3.0f64..3.0),
        width in prop::array::uniform3(0.01f64..0.5),
        u in (0.0f64..0.18, -0.05f64..0.05, -0.1f64..0.1),
        seed in any::<u64>(),
    ) {
        let cell = bx(&lo, &[lo[0] + width[0], lo[1] + width[1], lo[2] + width[2]]);
        let u = [u.0, u.1, u.2];
        let settings = ReachSettings::new(3.0, 30, Vec::new()).unwrap();
        let reach = embed_integrate(&kinematics_decomposition(), &cell, &u, &what(), &settings).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let x0 = uniform_in(&mut rng, &cell);
            let x = endpoint(&ShipKinematics, &x0, &u, &what(), 3.0, 10, &mut rng);
            prop_assert!(reach.contains_point(&x), "{:?} outside {:?}", x, reach);
        }
    }
}
