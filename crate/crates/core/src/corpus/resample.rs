//! Band-limited resampling by direct Kaiser-windowed sinc interpolation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Zero crossings of the sinc kernel kept on each side of the centre.
const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples `samples` from `source_rate` to `target_rate`.
///
/// The output has `round(len * target / source)` samples. When downsampling
/// the kernel cutoff moves to the target Nyquist frequency.
pub fn resample(samples: &[f64], source_rate: u32, target_rate: u32) -> Result<Vec<f64>> {
    if source_rate == 0 || target_rate == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if source_rate == target_rate {
        return Ok(samples.to_vec());
    }
    let ratio = target_rate as f64 / source_rate as f64;
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    let half_width = ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let n = samples.len() as isize;

    let out = (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let lo = ((t - half_width).ceil() as isize).max(0);
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let d = t - k as f64;
                let u = d / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / i0_beta;
                acc += samples[k as usize] * cutoff * sinc(cutoff * d) * window;
            }
            acc
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, len: usize) -> Vec<f64> {
        (0..len).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn identity_when_rates_match() {
        let x = vec![0.1, -0.2, 0.3];
        assert_eq!(resample(&x, 48000, 48000).unwrap(), x);
    }

    #[test]
    fn upsampled_length() {
        let x = vec![0.0; 24000];
        let y = resample(&x, 24000, 48000).unwrap();
        assert!((y.len() as i64 - 48000).abs() <= 1);
    }

    #[test]
    fn zero_rate_rejected() {
        assert!(resample(&[0.0], 0, 48000).is_err());
        assert!(resample(&[0.0], 48000, 0).is_err());
    }

    #[test]
    fn sine_survives_downsampling() {
        let x = sine(1000.0, 48000.0, 48000);
        let y = resample(&x, 48000, 16000).unwrap();
        let reference = sine(1000.0, 16000.0, y.len());
        let edge = 200;
        let (mut err, mut energy) = (0.0, 0.0);
        for i in edge..y.len() - edge {
            err += (y[i] - reference[i]).powi(2);
            energy += reference[i].powi(2);
        }
        let rel = (err / energy).sqrt();
        assert!(rel < 1e-3, "relative rms error {rel}");
    }

    #[test]
    fn sine_survives_upsampling() {
        let x = sine(440.0, 16000.0, 16000);
        let y = resample(&x, 16000, 48000).unwrap();
        let reference = sine(440.0, 48000.0, y.len());
        let edge = 600;
        let (mut err, mut energy) = (0.0, 0.0);
        for i in edge..y.len() - edge {
            err += (y[i] - reference[i]).powi(2);
            energy += reference[i].powi(2);
        }
        assert!((err / energy).sqrt() < 1e-3);
    }
}
