use std::f64::consts::PI;

use super::SpectrogramError;

/// The classic Hamming coefficient (the side-lobe-cancelling 25/46 rounded).
pub const HAMMING_ALPHA: f64 = 0.54;

#[derive(Debug, Clone, PartialEq)]
pub struct HammingWindow {
    pub coefficients: Vec<f64>,
    pub alpha: f64,
}

impl HammingWindow {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Symmetric Hamming window: `h[n] = 0.54 − 0.46·cos(2πn/N)`, `N = len − 1`.
pub fn hamming(len: usize) -> Result<HammingWindow, SpectrogramError> {
    if len < 2 {
        return Err(SpectrogramError::WindowTooShort(len));
    }
    let n_max = (len - 1) as f64;
    let beta = 1.0 - HAMMING_ALPHA;
    let mut coefficients: Vec<f64> = (0..len)
        .map(|n| HAMMING_ALPHA - beta * (2.0 * PI * n as f64 / n_max).cos())
        .collect();
    // cos is not bit-symmetric around π; mirror the first half.
    for n in 0..len / 2 {
        coefficients[len - 1 - n] = coefficients[n];
    }
    Ok(HammingWindow {
        coefficients,
        alpha: HAMMING_ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_0_08() {
        let w = hamming(128).unwrap();
        assert!((w.coefficients[0] - 0.08).abs() < 1e-12);
        assert!((w.coefficients[127] - 0.08).abs() < 1e-12);
        assert_eq!(w.alpha, 0.54);
    }

    #[test]
    fn symmetric_and_bounded() {
        let w = hamming(128).unwrap();
        for n in 0..128 {
            assert_eq!(w.coefficients[n], w.coefficients[127 - n]);
            assert!(w.coefficients[n] <= 1.0 && w.coefficients[n] >= 0.08 - 1e-12);
        }
    }

    #[test]
    fn odd_length_peaks_at_one() {
        let w = hamming(129).unwrap();
        assert!((w.coefficients[64] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_short() {
        assert!(hamming(1).is_err());
        assert!(hamming(2).is_ok());
    }
}
