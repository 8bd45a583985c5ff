use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Liters of fuel per gram of emitted CO2 (gasoline, about 2392 g/L).
pub const GRAMS_PER_LITER: f64 = 2392.0;

/// Rate polynomial a + b·v + c·v² + d·v³ in grams per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for EmissionCoeffs {
    fn default() -> Self {
        EmissionCoeffs {
            a: 0.2,
            b: 0.03,
            c: 0.0015,
            d: 0.00008,
        }
    }
}

impl EmissionCoeffs {
    /// Rejects coefficient sets whose rate goes negative on [0, v_max].
    ///
    /// The cubic is checked at both ends and at its interior critical points.
    pub fn validate(&self, v_max: f64) -> Result<()> {
        let mut probes = vec![0.0, v_max];
        // rate' = b + 2c v + 3d v²
        let (qa, qb, qc) = (3.0 * self.d, 2.0 * self.c, self.b);
        if qa != 0.0 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                probes.push((-qb + disc.sqrt()) / (2.0 * qa));
                probes.push((-qb - disc.sqrt()) / (2.0 * qa));
            }
        } else if qb != 0.0 {
            probes.push(-qc / qb);
        }
        for v in probes.into_iter().filter(|v| (0.0..=v_max).contains(v)) {
            let r = emission_rate(v, self);
            if r < 0.0 || !r.is_finite() {
                return Err(SimError::Config(format!(
                    "emission rate is negative ({r}) at v = {v} m/s; coefficients must keep the rate >= 0 on [0, {v_max}]"
                )));
            }
        }
        Ok(())
    }
}

pub fn emission_rate(v: f64, coeffs: &EmissionCoeffs) -> f64 {
    coeffs.a + v * (coeffs.b + v * (coeffs.c + v * coeffs.d))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionAccumulator {
    pub grams: f64,
    pub fuel_liters: f64,
}

/// Integrates the rate over one step with speed varying linearly from
/// `v_prev` to `v_now`.
///
/// Simpson's rule is exact here because the rate is a cubic in v and v
/// is linear in time. Constant speed reduces to `rate(v) · dt`.
pub fn step_integral(v_prev: f64, v_now: f64, dt: f64, coeffs: &EmissionCoeffs) -> f64 {
    if v_prev == v_now {
        return emission_rate(v_now, coeffs) * dt;
    }
    let mid = 0.5 * (v_prev + v_now);
    dt / 6.0 * (emission_rate(v_prev, coeffs) + 4.0 * emission_rate(mid, coeffs) + emission_rate(v_now, coeffs))
}

pub fn accumulate(acc: EmissionAccumulator, v_prev: f64, v_now: f64, dt: f64, coeffs: &EmissionCoeffs) -> EmissionAccumulator {
    let g = step_integral(v_prev, v_now, dt, coeffs);
    EmissionAccumulator {
        grams: acc.grams + g,
        fuel_liters: acc.fuel_liters + g / GRAMS_PER_LITER,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_rate_is_a() {
        let c = EmissionCoeffs::default();
        assert_eq!(emission_rate(0.0, &c), 0.2);
    }

    #[test]
    fn constant_speed_is_rate_times_dt() {
        let c = EmissionCoeffs::default();
        let mut acc = EmissionAccumulator::default();
        for _ in 0..4 {
            acc = accumulate(acc, 10.0, 10.0, 0.5, &c);
        }
        let expected = emission_rate(10.0, &c) * 4.0 * 0.5;
        assert!((acc.grams - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }

    #[test]
    fn validation_catches_negative_dip() {
        let ok = EmissionCoeffs::default();
        assert!(ok.validate(37.5).is_ok());
        let dip = EmissionCoeffs {
            a: 0.1,
            b: -0.05,
            c: 0.001,
            d: 0.0,
        };
        assert!(dip.validate(37.5).is_err());
        let negative_idle = EmissionCoeffs { a: -0.1, ..ok };
        assert!(negative_idle.validate(37.5).is_err());
    }
}
