//! Emission accumulation for a constant-speed cruise and an acceleration
//! ramp, compared against a much finer quadrature.
//!
//! cargo run --example emissions

use melsim::multilevel::step_continuous;
use melsim::traffic::{emission_rate, EmissionAccumulator, EmissionCoeffs};

fn main() {
    let c = EmissionCoeffs::default();
    let dt = 1.0;

    let mut cruise = EmissionAccumulator::default();
    for _ in 0..60 {
        cruise = step_continuous(cruise, [(12.0, 12.0)], dt, &c);
    }
    println!("60 s at 12 m/s: {:.6} g (rate x time = {:.6} g)", cruise.grams, emission_rate(12.0, &c) * 60.0);

    // 0 -> 15 m/s over 30 s, then hold for 30 s
    let speed = |t: f64| if t < 30.0 { 0.5 * t } else { 15.0 };
    let mut ramp = EmissionAccumulator::default();
    for k in 0..60 {
        let t = k as f64 * dt;
        ramp = step_continuous(ramp, [(speed(t), speed(t + dt))], dt, &c);
    }
    let n = 60_000;
    let h = 60.0 / n as f64;
    let fine: f64 = (0..n).map(|i| emission_rate(speed((i as f64 + 0.5) * h), &c) * h).sum();
    println!(
        "ramp+cruise: {:.6} g ({:.4} l), fine midpoint sum {:.6} g, rel diff {:.2e}",
        ramp.grams,
        ramp.fuel_liters,
        fine,
        (ramp.grams - fine).abs() / fine
    );
}
