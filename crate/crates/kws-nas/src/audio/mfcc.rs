//! 40-dimensional MFCC front end.
//!
//! Chain: 30 ms frames at a 10 ms hop (no padding, so a one-second clip gives
//! 98 frames), periodic Hann window, 512-point FFT magnitude spectrum, 40
//! triangular mel filters spanning 20 Hz to 8 kHz (area-normalized), natural
//! log with a 1e-10 floor, orthonormal DCT-II keeping all 40 coefficients.

use super::{AudioClip, FeatureMap, CLIP_SAMPLES, SAMPLE_RATE};
use crate::tensor::{Real, Tensor, PI};

pub const FRAME_LEN: usize = 480;
pub const HOP_LEN: usize = 160;
pub const N_FFT: usize = 512;
pub const N_MELS: usize = 40;
pub const N_MFCC: usize = 40;
pub const FMIN_HZ: Real = 20.0;
pub const FMAX_HZ: Real = 8_000.0;
const LOG_FLOOR: Real = 1e-10;

/// Frames in a one-second clip: floor((16000 - 480) / 160) + 1.
pub const MFCC_FRAMES: usize = (CLIP_SAMPLES - FRAME_LEN) / HOP_LEN + 1;

fn hz_to_mel(hz: Real) -> Real {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: Real) -> Real {
    700.0 * ((10.0 as Real).powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank as dense rows over the `n_fft/2 + 1` magnitude
/// bins. Each triangle is scaled by `2 / (hi - lo)` so its area in Hz is one.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<Real>> {
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(FMIN_HZ);
    let mel_hi = hz_to_mel(FMAX_HZ.min(sample_rate as Real / 2.0));
    let points: Vec<Real> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as Real / (n_mels + 1) as Real))
        .collect();

    let bin_hz = sample_rate as Real / n_fft as Real;
    let mut bank = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let norm = 2.0 / (hi - lo);
        let mut row = vec![0.0; n_bins];
        for (bin, w) in row.iter_mut().enumerate() {
            let f = bin as Real * bin_hz;
            if f > lo && f < center {
                *w = norm * (f - lo) / (center - lo);
            } else if f >= center && f < hi {
                *w = norm * (hi - f) / (hi - center);
            }
        }
        bank.push(row);
    }
    bank
}

/// Iterative radix-2 FFT over interleaved (re, im) pairs; `n` a power of two.
fn fft_in_place(re: &mut [Real], im: &mut [Real]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as Real;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cur_r, mut cur_i) = (1.0, 0.0);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cur_r - im[i + k + len / 2] * cur_i,
                    re[i + k + len / 2] * cur_i + im[i + k + len / 2] * cur_r,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let next_r = cur_r * wr - cur_i * wi;
                cur_i = cur_r * wi + cur_i * wr;
                cur_r = next_r;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// MFCCs of raw samples; returns a `[N_MFCC, frames]` tensor. Exposed for
/// tests that frame arbitrary-length signals.
pub fn compute_mfcc_samples(samples: &[Real]) -> Tensor {
    let frames = if samples.len() < FRAME_LEN {
        0
    } else {
        (samples.len() - FRAME_LEN) / HOP_LEN + 1
    };
    let window: Vec<Real> = (0..FRAME_LEN)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as Real / FRAME_LEN as Real).cos())
        .collect();
    let bank = mel_filterbank(N_MELS, N_FFT, SAMPLE_RATE);
    // Orthonormal DCT-II basis: dct[k][n] = s_k * cos(pi * k * (2n+1) / (2N)).
    let dct: Vec<Vec<Real>> = (0..N_MFCC)
        .map(|k| {
            let s = if k == 0 {
                (1.0 / N_MELS as Real).sqrt()
            } else {
                (2.0 / N_MELS as Real).sqrt()
            };
            (0..N_MELS)
                .map(|n| s * (PI * k as Real * (2.0 * n as Real + 1.0) / (2.0 * N_MELS as Real)).cos())
                .collect()
        })
        .collect();

    let mut out = vec![0.0; N_MFCC * frames];
    let mut re = vec![0.0; N_FFT];
    let mut im = vec![0.0; N_FFT];
    for f in 0..frames {
        let start = f * HOP_LEN;
        re[..FRAME_LEN]
            .iter_mut()
            .zip(&samples[start..start + FRAME_LEN])
            .zip(&window)
            .for_each(|((r, s), w)| *r = s * w);
        re[FRAME_LEN..].fill(0.0);
        im.fill(0.0);
        fft_in_place(&mut re, &mut im);

        let n_bins = N_FFT / 2 + 1;
        let mut magnitude = vec![0.0; n_bins];
        for (b, m) in magnitude.iter_mut().enumerate() {
            *m = (re[b] * re[b] + im[b] * im[b]).sqrt();
        }

        let log_mel: Vec<Real> = bank
            .iter()
            .map(|row| {
                let e: Real = row.iter().zip(&magnitude).map(|(w, m)| w * m).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();

        for (k, basis) in dct.iter().enumerate() {
            let c: Real = basis.iter().zip(&log_mel).map(|(b, v)| b * v).sum();
            out[k * frames + f] = c;
        }
    }
    Tensor::new(vec![N_MFCC, frames], out).expect("mfcc shape")
}

/// The 40 x 98 feature map of a one-second clip.
pub fn compute_mfcc(clip: &AudioClip) -> FeatureMap {
    debug_assert_eq!(clip.samples.len(), CLIP_SAMPLES);
    debug_assert_eq!(clip.sample_rate, SAMPLE_RATE);
    FeatureMap {
        mfcc: compute_mfcc_samples(&clip.samples),
    }
}
