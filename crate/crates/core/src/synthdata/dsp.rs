//! Small signal-processing helpers shared by the generator and its tests.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Scales `x` so its peak magnitude equals `target`. All-zero input is left
/// alone.
pub fn normalize_peak(x: &mut [f64], target: f64) {
    let p = peak(x);
    if p > 0.0 {
        let g = target / p;
        for v in x.iter_mut() {
            *v *= g;
        }
    }
}

/// Causal FIR filter, output truncated to the input length.
pub fn fir_filter(x: &[f64], taps: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(k, &h)| h * x[n - k])
                .sum()
        })
        .collect()
}

pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Unnormalised inverse transform; divide by the length to invert [`fft`].
pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&buf)
}

/// Full linear convolution via zero-padded FFTs.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let pad = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (d, &s) in v.iter_mut().zip(x) {
            d.re = s;
        }
        v
    };
    let fa = fft(&pad(a));
    let fb = fft(&pad(b));
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    ifft(&prod)[..out_len].iter().map(|c| c.re / n as f64).collect()
}

/// Magnitudes of the non-negative frequency bins of one frame.
pub fn magnitude_spectrum(frame: &[f64]) -> Vec<f64> {
    let spec = fft_real(frame);
    spec[..frame.len() / 2 + 1].iter().map(|c| c.norm()).collect()
}

/// Average Hann-windowed power spectrum over non-overlapping frames, in dB.
pub fn long_term_log_spectrum(x: &[f64], frame_len: usize) -> Vec<f64> {
    let window: Vec<f64> = (0..frame_len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_len as f64).cos())
        .collect();
    let bins = frame_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut frames = 0;
    for chunk in x.chunks_exact(frame_len) {
        let w: Vec<f64> = chunk.iter().zip(&window).map(|(a, b)| a * b).collect();
        for (a, m) in acc.iter_mut().zip(magnitude_spectrum(&w)) {
            *a += m * m;
        }
        frames += 1;
    }
    acc.iter()
        .map(|p| 10.0 * (p / frames.max(1) as f64 + 1e-12).log10())
        .collect()
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    num / (va * vb).sqrt()
}

/// Signal-to-interferer ratio in dB from the two components.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    20.0 * (rms(signal) / rms(noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct_sum() {
        let a = [1.0, 2.0, -1.0, 0.5];
        let b = [0.5, -0.25, 2.0];
        let got = convolve(&a, &b);
        let mut expected = vec![0.0; 6];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                expected[i + j] += x * y;
            }
        }
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
        assert_eq!(&fir_filter(&a, &b)[..], &{
            let mut v = expected.clone();
            v.truncate(4);
            v
        }[..]);
    }

    #[test]
    fn fft_round_trip() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.7).cos()).collect();
        let back = ifft(&fft_real(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b.re / 37.0).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_normalization() {
        let mut x = vec![0.1, -0.4, 0.2];
        normalize_peak(&mut x, 0.9);
        assert!((peak(&x) - 0.9).abs() < 1e-15);
        let mut z = vec![0.0; 3];
        normalize_peak(&mut z, 0.9);
        assert_eq!(z, vec![0.0; 3]);
    }
}
