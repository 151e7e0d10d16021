//! Butterworth band-pass design by bilinear transform with frequency
//! pre-warping, realized as a cascade of second-order sections.
//!
//! An order-`n` low-pass prototype becomes an order-`2n` band-pass; each
//! prototype pole yields one conjugate pole pair per section, and every
//! section carries one zero at DC and one at Nyquist.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;
use crate::signal_io::AudioRecording;

/// One section, `a0` normalized to 1:
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Response at `z = e^{jω}`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + z1 * self.b1 + z2 * self.b2) / (1.0 + z1 * self.a1 + z2 * self.a2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub sections: Vec<Biquad>,
    /// Prototype order.
    pub order: usize,
    pub low_cut: f64,
    pub high_cut: f64,
    pub fs: u32,
}

impl BandpassFilter {
    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.fs as f64;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Designs an order-`order` prototype Butterworth band-pass for `[low, high]` Hz.
pub fn design_bandpass(order: usize, low: f64, high: f64, fs: u32) -> Result<BandpassFilter, DspError> {
    let nyquist = fs as f64 / 2.0;
    if order == 0 || !(low > 0.0 && low < high && high < nyquist) {
        return Err(DspError::InvalidBand { low, high, nyquist });
    }
    let c = 2.0 * fs as f64;
    // pre-warped analog band edges
    let w_lo = c * (PI * low / fs as f64).tan();
    let w_hi = c * (PI * high / fs as f64).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let mut sections = Vec::with_capacity(order);
    // Prototype poles in the upper half plane (plus the real one for odd order).
    for k in 0..order.div_ceil(2) {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * bw / 2.0;
        let disc = (half * half - w0_sq).sqrt();
        let roots = [half + disc, half - disc];
        let is_real_prototype = p.im.abs() < 1e-12;
        if is_real_prototype {
            // the two roots are a conjugate pair (or two reals): one section
            let sum = (roots[0] + roots[1]).re;
            let prod = (roots[0] * roots[1]).re;
            sections.push(bilinear_section(bw, sum, prod, c));
        } else {
            for r in roots {
                sections.push(bilinear_section(bw, 2.0 * r.re, r.norm_sqr(), c));
            }
        }
    }
    let filter = BandpassFilter {
        sections,
        order,
        low_cut: low,
        high_cut: high,
        fs,
    };
    debug_assert!(filter.is_stable());
    if !filter.is_stable() {
        return Err(DspError::InvalidBand { low, high, nyquist });
    }
    Ok(filter)
}

/// Maps `bw·s / (s² − sum·s + prod)` through `s = c (1 − z⁻¹)/(1 + z⁻¹)`.
fn bilinear_section(bw: f64, sum: f64, prod: f64, c: f64) -> Biquad {
    let a0 = c * c - sum * c + prod;
    let a1 = 2.0 * (prod - c * c);
    let a2 = c * c + sum * c + prod;
    let g = bw * c / a0;
    Biquad {
        b0: g,
        b1: 0.0,
        b2: -g,
        a1: a1 / a0,
        a2: a2 / a0,
    }
}

/// Per-call delay lines (transposed direct form II), zero initial state.
#[derive(Debug, Clone)]
pub struct FilterState {
    z: Vec<[f64; 2]>,
}

impl FilterState {
    pub fn new(filter: &BandpassFilter) -> Self {
        FilterState {
            z: vec![[0.0; 2]; filter.sections.len()],
        }
    }

    pub fn process(&mut self, filter: &BandpassFilter, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in filter.sections.iter().zip(self.z.iter_mut()) {
            let y = s.b0 * v + z[0];
            z[0] = s.b1 * v - s.a1 * y + z[1];
            z[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }
}

/// Filters a slice with a single causal pass.
pub fn filter_samples(filter: &BandpassFilter, input: &[f64]) -> Vec<f64> {
    let mut state = FilterState::new(filter);
    input.iter().map(|&x| state.process(filter, x)).collect()
}

pub fn apply_filter(filter: &BandpassFilter, rec: &AudioRecording) -> Result<AudioRecording, DspError> {
    if rec.sample_rate != filter.fs {
        return Err(DspError::RateMismatch {
            expected: filter.fs,
            actual: rec.sample_rate,
        });
    }
    Ok(AudioRecording {
        samples: filter_samples(filter, &rec.samples),
        ..rec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> BandpassFilter {
        design_bandpass(4, 20.0, 400.0, 2000).unwrap()
    }

    #[test]
    fn four_sections_with_dc_and_nyquist_zeros() {
        let f = canonical();
        assert_eq!(f.sections.len(), 4);
        assert_eq!(f.magnitude(0.0), 0.0);
        assert!(f.magnitude(1000.0) < 1e-12);
        for s in &f.sections {
            assert_eq!(s.b1, 0.0);
            assert_eq!(s.b0, -s.b2);
        }
    }

    #[test]
    fn cutoffs_are_minus_3_db() {
        let f = canonical();
        for fc in [20.0, 400.0] {
            let m = f.magnitude(fc);
            assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.007, "{fc}: {m}");
            let db = f.magnitude_db(fc) + 10.0 * 2f64.log10();
            assert!(db.abs() < 0.1, "{fc}: {db} dB off");
        }
    }

    #[test]
    fn peak_near_geometric_center() {
        let f = canonical();
        let (arg, peak) = (1..1000)
            .map(|hz| (hz, f.magnitude(hz as f64)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!((80..=100).contains(&arg), "argmax {arg}");
        assert!((0.999..=1.0 + 1e-9).contains(&peak), "peak {peak}");
    }

    #[test]
    fn stopbands_are_monotone() {
        let f = canonical();
        let lower: Vec<f64> = (0..=20).map(|hz| f.magnitude(hz as f64)).collect();
        assert!(lower.windows(2).all(|w| w[1] > w[0]));
        let upper: Vec<f64> = (400..=1000).map(|hz| f.magnitude(hz as f64)).collect();
        assert!(upper.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn poles_inside_unit_circle() {
        let f = canonical();
        assert!(f.poles().iter().all(|p| p.norm() < 1.0));
        assert!(f.is_stable());
    }

    #[test]
    fn odd_order_and_wide_bands_design() {
        for (order, lo, hi) in [(1, 20.0, 400.0), (3, 5.0, 900.0), (5, 150.0, 350.0), (2, 1.0, 999.0)] {
            let f = design_bandpass(order, lo, hi, 2000).unwrap();
            assert_eq!(f.sections.len(), order);
            assert!(f.is_stable());
            let m = f.magnitude(lo);
            assert!((m - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6, "{order} {lo}: {m}");
        }
    }

    #[test]
    fn invalid_bands_rejected() {
        for (lo, hi) in [(0.0, 400.0), (400.0, 20.0), (20.0, 1000.0), (-5.0, 10.0)] {
            assert!(matches!(
                design_bandpass(4, lo, hi, 2000),
                Err(DspError::InvalidBand { .. })
            ));
        }
        assert!(design_bandpass(0, 20.0, 400.0, 2000).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let f = canonical();
        let rec = AudioRecording::new(vec![0.0; 5000], 2000, "z");
        let out = apply_filter(&f, &rec).unwrap();
        assert_eq!(out.samples.len(), 5000);
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rate_mismatch() {
        let f = canonical();
        let rec = AudioRecording::new(vec![0.0; 10], 4000, "r");
        assert!(matches!(apply_filter(&f, &rec), Err(DspError::RateMismatch { .. })));
    }

    #[test]
    fn steady_state_sine_matches_transfer_function() {
        let f = canonical();
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * PI * 200.0 * n as f64 / 2000.0).sin())
            .collect();
        let y = filter_samples(&f, &x);
        let amp = y[1000..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let expected = f.magnitude(200.0);
        assert!((amp - expected).abs() / expected < 0.01, "{amp} vs {expected}");
    }

    #[test]
    fn impulse_response_decays() {
        let f = canonical();
        let mut x = vec![0.0; 16000];
        x[0] = 1.0;
        let y = filter_samples(&f, &x);
        let tail_start = y.iter().rposition(|v| v.abs() >= 1e-6).unwrap();
        assert!(tail_start < 16000 - 1);
        let energy: f64 = y.iter().map(|v| v * v).sum();
        assert!(energy.is_finite() && energy > 0.0);
    }
}
