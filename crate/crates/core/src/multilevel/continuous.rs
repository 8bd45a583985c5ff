//! Level 2: continuous accumulators advanced alongside fine steps.

use crate::traffic::{accumulate, EmissionAccumulator, EmissionCoeffs};

/// Advances `acc` by one fine step for every `(v_prev, v_now)` pair (m/s).
pub fn step_continuous(
    acc: EmissionAccumulator,
    speeds: impl IntoIterator<Item = (f64, f64)>,
    dt: f64,
    coeffs: &EmissionCoeffs,
) -> EmissionAccumulator {
    speeds
        .into_iter()
        .fold(acc, |a, (v0, v1)| accumulate(a, v0, v1, dt, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::emission_rate;

    #[test]
    fn no_vehicles_no_change() {
        let acc = EmissionAccumulator {
            grams: 1.5,
            fuel_liters: 0.1,
        };
        assert_eq!(step_continuous(acc, [], 1.0, &EmissionCoeffs::default()), acc);
    }

    #[test]
    fn constant_speed_over_r_steps() {
        let c = EmissionCoeffs::default();
        let mut acc = EmissionAccumulator::default();
        for _ in 0..3 {
            acc = step_continuous(acc, [(12.0, 12.0)], 1.0, &c);
        }
        let expected = emission_rate(12.0, &c) * 3.0;
        assert!((acc.grams - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }
}
