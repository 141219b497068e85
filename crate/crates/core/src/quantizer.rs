//! Uniform mid-tread quantizer.
//!
//! `Q(v) = yΔ` for the unique integer `y` with `(y − ½)Δ ≤ v < (y + ½)Δ`.
//! Cells are half-open, so values on a cell boundary round up. A resolution
//! of zero is the identity channel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vector;

/// Largest level index that is still an exact integer in `f64`.
pub const MAX_LEVEL: f64 = 9_007_199_254_740_992.0; // 2^53

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum QuantizerError {
    #[error("quantizer resolution must be finite and >= 0, got {0}")]
    InvalidResolution(f64),
    #[error("level index for value {value:e} at resolution {delta:e} exceeds 2^53")]
    LevelOverflow { value: f64, delta: f64 },
    #[error("cannot quantize non-finite value {0}")]
    NonFiniteValue(f64),
    #[error("coordinate {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    resolution: f64,
}

impl Quantizer {
    pub fn new(resolution: f64) -> Result<Self, QuantizerError> {
        if !resolution.is_finite() || resolution < 0.0 {
            return Err(QuantizerError::InvalidResolution(resolution));
        }
        Ok(Self { resolution })
    }

    /// The quantization-free channel.
    pub fn identity() -> Self {
        Self { resolution: 0.0 }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn is_identity(&self) -> bool {
        self.resolution == 0.0
    }

    /// Integer level `y` of the cell containing `v`.
    pub fn level(&self, v: f64) -> Result<f64, QuantizerError> {
        let delta = self.resolution;
        if !v.is_finite() {
            return Err(QuantizerError::NonFiniteValue(v));
        }
        if delta == 0.0 {
            return Err(QuantizerError::InvalidResolution(delta));
        }
        let mut y = (v / delta + 0.5).floor();
        if !y.is_finite() || y.abs() > MAX_LEVEL {
            return Err(QuantizerError::LevelOverflow { value: v, delta });
        }
        // The division can land a boundary value in the wrong cell; restore
        // the half-open cell semantics against the defining inequality.
        while (y - 0.5) * delta > v {
            y -= 1.0;
        }
        while v >= (y + 0.5) * delta {
            y += 1.0;
        }
        if y.abs() > MAX_LEVEL {
            return Err(QuantizerError::LevelOverflow { value: v, delta });
        }
        Ok(y)
    }

    pub fn quantize(&self, v: f64) -> Result<f64, QuantizerError> {
        if self.is_identity() {
            return Ok(v);
        }
        Ok(self.level(v)? * self.resolution)
    }

    /// `Q([v]ᵢ)`: a `dim`-vector holding the quantized value at `index` and
    /// zeros elsewhere.
    pub fn quantize_coordinate_vector(
        &self,
        value: f64,
        index: usize,
        dim: usize,
    ) -> Result<Vector, QuantizerError> {
        if index >= dim {
            return Err(QuantizerError::IndexOutOfRange { index, dim });
        }
        let mut out = Vector::zeros(dim);
        out[index] = self.quantize(value)?;
        Ok(out)
    }
}

impl Default for Quantizer {
    fn default() -> Self {
        Self::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(delta: f64) -> Quantizer {
        Quantizer::new(delta).unwrap()
    }

    /// Linear scan over levels; independent of the floor-based path.
    fn scan_level(delta: f64, v: f64) -> i64 {
        let mut y: i64 = -10_000;
        while !((y as f64 - 0.5) * delta <= v && v < (y as f64 + 0.5) * delta) {
            y += 1;
            assert!(y < 10_000, "scan ran off the end");
        }
        y
    }

    #[test]
    fn examples() {
        assert_eq!(q(1.0).quantize(0.4).unwrap(), 0.0);
        assert_eq!(q(1.0).quantize(0.5).unwrap(), 1.0);
        assert_eq!(q(1.0).quantize(-0.5).unwrap(), 0.0);
        assert_eq!(scan_level(10.0, 123.4), 12);
        assert_eq!(q(10.0).quantize(123.4).unwrap(), 120.0);
        assert_eq!(q(0.0).quantize(7.25).unwrap(), 7.25);
    }

    #[test]
    fn coordinate_vector_examples() {
        assert_eq!(q(1.0).quantize_coordinate_vector(0.4, 1, 3).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(q(0.0).quantize_coordinate_vector(3.7, 0, 2).unwrap().as_slice(), &[3.7, 0.0]);
        let v = q(10.0).quantize_coordinate_vector(123.4, 0, 2).unwrap();
        assert_eq!(v.as_slice(), &[120.0, 0.0]);
        let mut raw = Vector::zeros(2);
        raw[0] = 123.4;
        let noise = (raw - v).norm();
        assert!((noise - 3.4).abs() < 1e-12 && noise <= 5.0);
        assert!(matches!(
            q(1.0).quantize_coordinate_vector(1.0, 3, 3),
            Err(QuantizerError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn overflow_and_invalid() {
        assert!(matches!(q(1e-10).quantize(1e10), Err(QuantizerError::LevelOverflow { .. })));
        assert!(matches!(Quantizer::new(-1.0), Err(QuantizerError::InvalidResolution(_))));
        assert!(matches!(Quantizer::new(f64::NAN), Err(QuantizerError::InvalidResolution(_))));
        assert!(matches!(q(1.0).quantize(f64::INFINITY), Err(QuantizerError::NonFiniteValue(_))));
    }

    #[test]
    fn boundaries_follow_half_open_cells() {
        for delta in [1.0, 0.25, 2.0, 1e3] {
            for y in -50..=50 {
                let y = y as f64;
                let lower = (y - 0.5) * delta;
                assert_eq!(q(delta).level(lower).unwrap(), y, "lower edge of cell {y}");
                let below_upper = ((y + 0.5) * delta).next_down();
                assert_eq!(q(delta).level(below_upper).unwrap(), y);
            }
        }
    }

    #[test]
    fn agrees_with_scan() {
        for (delta, v) in [(0.3, 0.45), (0.1, 0.15), (7.0, -10.5), (10.0, 123.4), (1.0, -0.5000001)] {
            assert_eq!(q(delta).level(v).unwrap(), scan_level(delta, v) as f64, "{delta} {v}");
        }
    }

    proptest! {
        #[test]
        fn noise_bounded_and_on_grid(delta in 1e-3f64..1e3, v in -1e6f64..1e6) {
            let quant = q(delta);
            let out = quant.quantize(v).unwrap();
            prop_assert!((out - v).abs() <= delta / 2.0);
            // the level is an exact integer; the output is its float product with Δ
            let level = quant.level(v).unwrap();
            prop_assert_eq!(level, level.round());
            prop_assert_eq!(out, level * delta);
            prop_assert_eq!((out / delta).round(), level);
        }

        #[test]
        fn idempotent(delta in 1e-3f64..1e3, v in -1e6f64..1e6) {
            let quant = q(delta);
            let once = quant.quantize(v).unwrap();
            prop_assert_eq!(quant.quantize(once).unwrap(), once);
        }

        #[test]
        fn monotone(delta in 1e-3f64..1e3, a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let quant = q(delta);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quant.quantize(lo).unwrap() <= quant.quantize(hi).unwrap());
        }

        #[test]
        fn odd_symmetric_off_boundary(delta in 1e-3f64..1e3, v in -1e6f64..1e6) {
            let quant = q(delta);
            let frac = (v / delta + 0.5).rem_euclid(1.0);
            prop_assume!(frac > 1e-6 && frac < 1.0 - 1e-6);
            prop_assert_eq!(quant.quantize(-v).unwrap(), -quant.quantize(v).unwrap());
        }
    }
}
