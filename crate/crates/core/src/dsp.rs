//! Biquad sections (RBJ cookbook) and small filter helpers.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn normalized(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
        }
    }

    fn omega(freq_hz: f64, sample_rate: f64) -> (f64, f64) {
        let w0 = 2.0 * PI * freq_hz / sample_rate;
        (w0.cos(), w0.sin())
    }

    pub fn lowpass(freq_hz: f64, q: f64, sample_rate: f64) -> Self {
        let (cos, sin) = Self::omega(freq_hz, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::normalized(
            (1.0 - cos) / 2.0,
            1.0 - cos,
            (1.0 - cos) / 2.0,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    pub fn highpass(freq_hz: f64, q: f64, sample_rate: f64) -> Self {
        let (cos, sin) = Self::omega(freq_hz, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::normalized(
            (1.0 + cos) / 2.0,
            -(1.0 + cos),
            (1.0 + cos) / 2.0,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    /// Band-pass with 0 dB gain at the centre frequency.
    pub fn bandpass(center_hz: f64, q: f64, sample_rate: f64) -> Self {
        let (cos, sin) = Self::omega(center_hz, sample_rate);
        let alpha = sin / (2.0 * q);
        Self::normalized(alpha, 0.0, -alpha, 1.0 + alpha, -2.0 * cos, 1.0 - alpha)
    }

    /// Direct form II transposed, zero initial state.
    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let (mut z1, mut z2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = self.b0 * v + z1;
                z1 = self.b1 * v - self.a1 * y + z2;
                z2 = self.b2 * v - self.a2 * y;
                y
            })
            .collect()
    }
}

/// Dot product with four partial sums so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let split = n / 4 * 4;
    let mut acc = [0.0; 4];
    for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = a[split..n].iter().zip(&b[split..n]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

const BUTTERWORTH_Q: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// 4th-order Linkwitz–Riley split into `(low, high)`; the bands sum to an all-pass response.
pub fn linkwitz_riley_split(x: &[f64], cutoff_hz: f64, sample_rate: f64) -> (Vec<f64>, Vec<f64>) {
    let lp = Biquad::lowpass(cutoff_hz, BUTTERWORTH_Q, sample_rate);
    let hp = Biquad::highpass(cutoff_hz, BUTTERWORTH_Q, sample_rate);
    let low = lp.process(&lp.process(x));
    let high = hp.process(&hp.process(x));
    (low, high)
}

/// Coefficient of a one-pole smoother with time constant `tau_sec`.
pub fn one_pole_coeff(tau_sec: f64, sample_rate: f64) -> f64 {
    if tau_sec <= 0.0 {
        0.0
    } else {
        (-1.0 / (tau_sec * sample_rate)).exp()
    }
}
