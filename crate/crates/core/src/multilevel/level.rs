use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::kernel::LevelId;

/// Model seconds per step, kept exact so alignment checks never round.
pub type StepSize = Ratio<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelKind {
    TimeStepped,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub id: LevelId,
    pub step_size: StepSize,
    pub kind: LevelKind,
}

impl LevelSpec {
    pub fn stepped(id: u8, step_size: StepSize) -> Self {
        LevelSpec {
            id: LevelId(id),
            step_size,
            kind: LevelKind::TimeStepped,
        }
    }

    pub fn continuous(id: u8, step_size: StepSize) -> Self {
        LevelSpec {
            id: LevelId(id),
            step_size,
            kind: LevelKind::Continuous,
        }
    }
}

/// Returned by `register_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelHandle {
    pub level: LevelId,
    /// Fine steps per parent step; `None` for the root and continuous levels.
    pub ratio: Option<u64>,
}

/// Integer ratio `coarse / fine`, or an error when the steps do not align.
pub fn alignment_ratio(coarse: StepSize, fine: StepSize) -> Result<u64> {
    if *coarse.numer() == 0 || *fine.numer() == 0 {
        return Err(SimError::Config("step sizes must be positive".into()));
    }
    let r = coarse / fine;
    if !r.is_integer() {
        return Err(SimError::Config(format!(
            "coarse step {} is not an integer multiple of fine step {} (ratio {})",
            coarse, fine, r
        )));
    }
    Ok(r.to_integer())
}

/// Parses a decimal literal such as `3`, `1.0` or `0.25` into an exact ratio.
pub fn parse_step_size(text: &str) -> Result<StepSize> {
    let bad = || SimError::Config(format!("invalid step size {text:?}"));
    let text = text.trim();
    if text.starts_with('-') {
        return Err(SimError::Config(format!("step size must be positive, got {text}")));
    }
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 12 {
        return Err(bad());
    }
    let denom = 10u64.pow(frac.len() as u32);
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let numer = int.checked_mul(denom).and_then(|v| v.checked_add(frac_v)).ok_or_else(bad)?;
    if numer == 0 {
        return Err(SimError::Config(format!("step size must be positive, got {text}")));
    }
    Ok(Ratio::new(numer, denom))
}

pub fn step_seconds(size: StepSize) -> f64 {
    *size.numer() as f64 / *size.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse_step_size("3.0").unwrap(), Ratio::from_integer(3));
        assert_eq!(parse_step_size("0.3").unwrap(), Ratio::new(3, 10));
        assert_eq!(parse_step_size("1").unwrap(), Ratio::from_integer(1));
        assert!(parse_step_size("0").is_err());
        assert!(parse_step_size("-1").is_err());
        assert!(parse_step_size("abc").is_err());
    }

    #[test]
    fn ratio_must_be_integral() {
        assert_eq!(alignment_ratio(Ratio::from_integer(3), Ratio::from_integer(1)).unwrap(), 3);
        assert_eq!(alignment_ratio(Ratio::from_integer(1), Ratio::from_integer(1)).unwrap(), 1);
        let err = alignment_ratio(Ratio::from_integer(1), Ratio::new(3, 10)).unwrap_err();
        assert!(err.to_string().contains("10/3"), "{err}");
    }
}
