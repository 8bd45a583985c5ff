//! Fundamental diagram of the cellular model on a single-lane ring, next to
//! the deterministic prediction q = min(rho * vmax, 1 - rho).
//!
//! cargo run --release --example nasch_fundamental -- 0.2

use std::collections::BTreeMap;

use melsim::kernel::EntityId;
use melsim::traffic::micro::fine_step;
use melsim::traffic::{ExitCredits, Hop, Lane, Lattice, MicroVehicle, NaschParams};

const CELLS: u32 = 1000;
const STEPS: u64 = 1000;

fn ring(n: u32) -> Lattice {
    Lattice {
        lanes: BTreeMap::from([(0, Lane { cells: CELLS, reserved: 0 })]),
        vehicles: (0..n)
            .map(|i| MicroVehicle {
                id: EntityId(u64::from(i)),
                tag: u64::from(i),
                arc: 0,
                cell: (u64::from(i) * u64::from(CELLS) / u64::from(n)) as u32,
                speed: 0,
                dest: 0,
                route: Vec::new(),
                next: Hop::Unresolved,
            })
            .collect(),
    }
}

fn flow(rho: f64, params: &NaschParams) -> f64 {
    let mut l = ring((rho * f64::from(CELLS)).round() as u32);
    let mut moved = 0u64;
    for f in 0..STEPS {
        let out = fine_step(&mut l, params, f, 11, &mut ExitCredits::default(), &mut |v| v.next = Hop::Internal(0)).unwrap();
        moved += out.speeds.iter().map(|s| u64::from(s.2)).sum::<u64>();
    }
    moved as f64 / (f64::from(CELLS) * STEPS as f64)
}

fn main() {
    let p_brake: f64 = std::env::args().nth(1).map_or(0.0, |a| a.parse().expect("p_brake"));
    let params = NaschParams { vmax: 5, p_brake };
    println!("rho    q_sim    q_p0");
    for k in 1..=18 {
        let rho = k as f64 * 0.05;
        let theory = (rho * 5.0).min(1.0 - rho);
        println!("{rho:.2}  {:.4}  {theory:.4}", flow(rho, &params));
    }
}
