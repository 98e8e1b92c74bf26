//! Signal representation and block DSP primitives.
//!
//! Every waveform in the simulator is a [`DualPolSignal`]: two equally long
//! complex sample vectors in sqrt-watt units, so `|x|² + |y|²` is the
//! instantaneous optical power. Blocks are treated as one period of a
//! periodic signal; all filtering is done with whole-block FFTs.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// In-place forward DFT (unnormalised).
pub fn fft(buf: &mut [C64]) {
    plan(buf.len(), FftDirection::Forward).process(buf);
}

/// In-place inverse DFT, normalised by `1/len`.
pub fn ifft(buf: &mut [C64]) {
    let n = buf.len();
    plan(n, FftDirection::Inverse).process(buf);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Frequency (Hz) of each DFT bin for a block of `len` samples at `sample_rate`,
/// in natural FFT order (DC, positive, then negative frequencies).
pub fn fft_freqs(len: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / len as f64;
    (0..len)
        .map(|k| {
            let kk = if k <= (len - 1) / 2 { k as f64 } else { k as f64 - len as f64 };
            kk * df
        })
        .collect()
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Sampled dual-polarisation complex baseband field.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPolSignal {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    /// Samples per second.
    pub sample_rate: f64,
    /// Offset of the digital baseband centre from the optical carrier (Hz).
    pub center_offset: f64,
}

impl DualPolSignal {
    pub fn new(x: Vec<C64>, y: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Parameter(format!(
                "polarisation lengths must match and be non-zero (x={}, y={})",
                x.len(),
                y.len()
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Parameter(format!("sample rate {sample_rate} must be positive")));
        }
        if x.iter().chain(y.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("non-finite sample in signal".into()));
        }
        Ok(Self { x, y, sample_rate, center_offset: 0.0 })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        let z = vec![C64::new(0.0, 0.0); len];
        Self { x: z.clone(), y: z, sample_rate, center_offset: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.x.iter().chain(self.y.iter()).map(|v| v.norm_sqr()).sum()
    }

    /// Mean of `|x|² + |y|²` in watts.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn power_dbm(&self) -> f64 {
        watts_to_dbm(self.mean_power())
    }

    pub fn scale(&mut self, c: f64) {
        self.x.iter_mut().chain(self.y.iter_mut()).for_each(|v| *v *= c);
    }

    pub fn pols_mut(&mut self) -> [&mut Vec<C64>; 2] {
        [&mut self.x, &mut self.y]
    }

    /// Sample-wise sum; both signals must share length and rate.
    pub fn add(&mut self, other: &DualPolSignal) -> Result<()> {
        if other.len() != self.len() || (other.sample_rate - self.sample_rate).abs() > 1e-6 * self.sample_rate {
            return Err(Error::Parameter("cannot add signals with different length or rate".into()));
        }
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += b;
        }
        Ok(())
    }

    /// Peak-to-average power ratio of `|x|²+|y|²` in dB.
    pub fn papr_db(&self) -> f64 {
        let peak = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .fold(0.0, f64::max);
        lin_to_db(peak / self.mean_power())
    }

    /// Power per DFT bin (both polarisations summed, natural FFT order).
    /// The bins sum to the mean power.
    pub fn power_spectrum(&self) -> Vec<f64> {
        let n = self.len();
        let mut fx = self.x.clone();
        let mut fy = self.y.clone();
        fft(&mut fx);
        fft(&mut fy);
        let s = 1.0 / (n as f64 * n as f64);
        fx.iter().zip(&fy).map(|(a, b)| (a.norm_sqr() + b.norm_sqr()) * s).collect()
    }

    /// Width (Hz) of the smallest band symmetric about `center_offset` holding `fraction` of the power.
    pub fn occupied_bandwidth(&self, fraction: f64) -> f64 {
        let psd = self.power_spectrum();
        let freqs: Vec<f64> = fft_freqs(self.len(), self.sample_rate).into_iter().map(|f| f - self.center_offset).collect();
        let total: f64 = psd.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut idx: Vec<usize> = (0..psd.len()).collect();
        idx.sort_by(|&a, &b| freqs[a].abs().total_cmp(&freqs[b].abs()));
        let mut acc = 0.0;
        for &i in &idx {
            acc += psd[i];
            if acc >= fraction * total {
                return 2.0 * freqs[i].abs();
            }
        }
        self.sample_rate
    }

    /// Apply a real or complex frequency response, given per bin in natural FFT order.
    pub fn filter_response(&mut self, response: &[C64]) {
        assert_eq!(response.len(), self.len(), "response length must match signal length");
        for pol in self.pols_mut() {
            fft(pol);
            pol.iter_mut().zip(response).for_each(|(v, h)| *v *= h);
            ifft(pol);
        }
    }
}

/// Normalised mean squared error `Σ|a−b|² / Σ|b|²` in dB, `b` being the reference.
pub fn nmse_db(a: &[C64], reference: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = reference.iter().map(|q| q.norm_sqr()).sum();
    lin_to_db(num / den)
}

/// [`nmse_db`] pooled over both polarisations.
pub fn signal_nmse_db(a: &DualPolSignal, reference: &DualPolSignal) -> f64 {
    let num: f64 = a
        .x
        .iter()
        .zip(&reference.x)
        .chain(a.y.iter().zip(&reference.y))
        .map(|(p, q)| (p - q).norm_sqr())
        .sum();
    lin_to_db(num / reference.energy())
}

/// Root-raised-cosine filter description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RrcSpec {
    pub roll_off: f64,
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl RrcSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.roll_off) {
            return Err(Error::Parameter(format!("roll-off {} outside [0,1]", self.roll_off)));
        }
        if self.span_symbols < 8 {
            return Err(Error::Parameter(format!("RRC span {} symbols < 8", self.span_symbols)));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::Parameter(format!("{} samples/symbol < 2", self.samples_per_symbol)));
        }
        Ok(())
    }
}

fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Truncated RRC taps, odd length `span·sps + 1`, unit energy.
pub fn rrc_taps(spec: &RrcSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let half = (spec.span_symbols * spec.samples_per_symbol / 2) as i64;
    let sps = spec.samples_per_symbol as f64;
    let mut taps: Vec<f64> = (-half..=half).map(|n| rrc_impulse(n as f64 / sps, spec.roll_off)).collect();
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    Ok(taps)
}

/// Square root of the raised-cosine spectrum at `f` (in units of the symbol rate);
/// 1 in the passband.
pub fn rrc_amplitude(f: f64, roll_off: f64) -> f64 {
    let af = f.abs();
    let lo = (1.0 - roll_off) / 2.0;
    let hi = (1.0 + roll_off) / 2.0;
    if af <= lo {
        1.0
    } else if af > hi {
        0.0
    } else {
        (0.5 * (1.0 + (PI / roll_off * (af - lo)).cos())).sqrt()
    }
}

/// Pulse-shaping / matched filter used for whole-block filtering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PulseFilter {
    /// Periodic RRC with the exact spectrum sampled on the block's DFT grid.
    Exact { roll_off: f64 },
    /// Truncated FIR taps, applied circularly.
    Taps(RrcSpec),
}

impl PulseFilter {
    pub fn roll_off(&self) -> f64 {
        match self {
            PulseFilter::Exact { roll_off } => *roll_off,
            PulseFilter::Taps(s) => s.roll_off,
        }
    }

    /// Zero-phase response on a `len`-point grid at `sample_rate`, centred at `center` Hz,
    /// scaled so that the filter has unit energy (cascade peak of one).
    pub fn response(&self, len: usize, sample_rate: f64, symbol_rate: f64, center: f64) -> Result<Vec<C64>> {
        let sps = sample_rate / symbol_rate;
        match self {
            PulseFilter::Exact { roll_off } => {
                if !(0.0..=1.0).contains(roll_off) {
                    return Err(Error::Parameter(format!("roll-off {roll_off} outside [0,1]")));
                }
                let g = sps.sqrt();
                Ok(fft_freqs(len, sample_rate)
                    .into_iter()
                    .map(|f| C64::new(g * rrc_amplitude((f - center) / symbol_rate, *roll_off), 0.0))
                    .collect())
            }
            PulseFilter::Taps(spec) => {
                if (sps - spec.samples_per_symbol as f64).abs() > 1e-9 {
                    return Err(Error::Parameter(format!(
                        "tap filter designed for {} sps applied at {sps} sps",
                        spec.samples_per_symbol
                    )));
                }
                let taps = rrc_taps(spec)?;
                if taps.len() > len {
                    return Err(Error::Parameter("block shorter than filter".into()));
                }
                let half = taps.len() / 2;
                let mut h = vec![C64::new(0.0, 0.0); len];
                for (i, t) in taps.iter().enumerate() {
                    let idx = (i as i64 - half as i64).rem_euclid(len as i64) as usize;
                    h[idx] = C64::new(*t, 0.0);
                }
                fft(&mut h);
                if center != 0.0 {
                    // nearest-bin shift of the passband
                    let shift = (center / (sample_rate / len as f64)).round() as i64;
                    let orig = h.clone();
                    for (k, v) in h.iter_mut().enumerate() {
                        *v = orig[(k as i64 - shift).rem_euclid(len as i64) as usize];
                    }
                }
                Ok(h)
            }
        }
    }
}

/// Multiply by `exp(i·2π·Δf·n/fs)`; `center_offset` tracks the shift.
pub fn frequency_shift(signal: &DualPolSignal, delta_f: f64) -> Result<DualPolSignal> {
    if delta_f == 0.0 {
        return Ok(signal.clone());
    }
    let half_bw = signal.occupied_bandwidth(0.99) / 2.0;
    if (signal.center_offset + delta_f).abs() + half_bw >= signal.sample_rate / 2.0 {
        return Err(Error::Aliasing(format!(
            "shift of {delta_f:.4e} Hz pushes a {:.4e} Hz-wide signal past Nyquist ({:.4e} Hz)",
            2.0 * half_bw,
            signal.sample_rate / 2.0
        )));
    }
    Ok(shift_unchecked(signal, delta_f))
}

pub(crate) fn shift_unchecked(signal: &DualPolSignal, delta_f: f64) -> DualPolSignal {
    let w = 2.0 * PI * delta_f / signal.sample_rate;
    let rot: Vec<C64> = (0..signal.len()).map(|n| C64::from_polar(1.0, w * n as f64)).collect();
    let mut out = signal.clone();
    for pol in out.pols_mut() {
        pol.iter_mut().zip(&rot).for_each(|(v, r)| *v *= r);
    }
    out.center_offset += delta_f;
    out
}

/// Band-limited resampling by DFT zero-padding or truncation.
///
/// The new length `len·new_rate/sample_rate` must be an integer.
pub fn resample(signal: &DualPolSignal, new_rate: f64) -> Result<DualPolSignal> {
    let n = signal.len();
    let m_f = n as f64 * new_rate / signal.sample_rate;
    let m = m_f.round();
    if m < 1.0 || (m - m_f).abs() > 1e-6 {
        return Err(Error::Parameter(format!(
            "rate ratio {new_rate}/{} gives non-integer length {m_f}",
            signal.sample_rate
        )));
    }
    let m = m as usize;
    if m == n {
        let mut out = signal.clone();
        out.sample_rate = new_rate;
        return Ok(out);
    }
    let occupied = signal.occupied_bandwidth(0.99) + 2.0 * signal.center_offset.abs();
    if new_rate < occupied {
        return Err(Error::Aliasing(format!(
            "new rate {new_rate:.4e} below occupied bandwidth {occupied:.4e}"
        )));
    }
    let x = resample_block(&signal.x, m);
    let y = resample_block(&signal.y, m);
    Ok(DualPolSignal { x, y, sample_rate: new_rate, center_offset: signal.center_offset })
}

pub(crate) fn resample_block(input: &[C64], m: usize) -> Vec<C64> {
    let n = input.len();
    let mut spec = input.to_vec();
    fft(&mut spec);
    let out_spec = respace_spectrum(&spec, m);
    let mut out = out_spec;
    plan(m, FftDirection::Inverse).process(&mut out);
    let s = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Move an `n`-bin spectrum onto an `m`-bin grid with the same bin spacing,
/// splitting or folding the Nyquist bin of the shorter grid.
pub(crate) fn respace_spectrum(spec: &[C64], m: usize) -> Vec<C64> {
    let n = spec.len();
    let k = n.min(m);
    let mut out = vec![C64::new(0.0, 0.0); m];
    let pos = k.div_ceil(2);
    let neg = k / 2;
    out[..pos].copy_from_slice(&spec[..pos]);
    for i in 1..=neg {
        out[m - i] = spec[n - i];
    }
    if k.is_multiple_of(2) {
        let nyq = k / 2;
        if m < n {
            // fold both halves of the discarded Nyquist pair onto the new Nyquist bin
            out[nyq] = spec[nyq] + spec[n - nyq];
        } else {
            let half = spec[nyq] * 0.5;
            out[nyq] = half;
            out[m - nyq] = half;
        }
    }
    out
}

/// Scale to a mean power of `power_dbm`.
pub fn set_mean_power(signal: &DualPolSignal, power_dbm: f64) -> Result<DualPolSignal> {
    let p = signal.mean_power();
    if p == 0.0 || !p.is_finite() {
        return Err(Error::ZeroPower);
    }
    let mut out = signal.clone();
    out.scale((dbm_to_watts(power_dbm) / p).sqrt());
    Ok(out)
}

/// Circular complex Gaussian samples with `E|n|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// Add noise to both polarisations with a per-polarisation one-sided PSD profile
/// `psd(f)` in W/Hz. Flat profiles reduce to white noise of variance `psd·fs`.
pub fn add_shaped_noise<R, F>(signal: &mut DualPolSignal, rng: &mut R, psd: F)
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let n = signal.len();
    let fs = signal.sample_rate;
    let gains: Vec<f64> = fft_freqs(n, fs).into_iter().map(|f| (psd(f) * fs).max(0.0).sqrt()).collect();
    let flat = gains.iter().all(|g| (g - gains[0]).abs() <= 1e-15 * gains[0].abs());
    for pol in signal.pols_mut() {
        let mut noise: Vec<C64> = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
        if flat {
            let g = gains[0];
            pol.iter_mut().zip(&noise).for_each(|(v, w)| *v += w * g);
        } else {
            fft(&mut noise);
            noise.iter_mut().zip(&gains).for_each(|(w, g)| *w *= g);
            ifft(&mut noise);
            pol.iter_mut().zip(&noise).for_each(|(v, w)| *v += w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, fs: f64, seed: u64) -> DualPolSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let y = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        DualPolSignal::new(x, y, fs).unwrap()
    }

    fn lowpass(sig: &mut DualPolSignal, bw: f64) {
        let resp: Vec<C64> = fft_freqs(sig.len(), sig.sample_rate)
            .into_iter()
            .map(|f| C64::new(if f.abs() < bw / 2.0 { 1.0 } else { 0.0 }, 0.0))
            .collect();
        sig.filter_response(&resp);
    }

    #[test]
    fn rrc_symmetric_with_centre_maximum() {
        let taps = rrc_taps(&RrcSpec { roll_off: 0.01, span_symbols: 64, samples_per_symbol: 2 }).unwrap();
        assert_eq!(taps.len() % 2, 1);
        let c = taps.len() / 2;
        for i in 0..c {
            assert!((taps[i] - taps[taps.len() - 1 - i]).abs() < 1e-15);
            assert!(taps[i].abs() < taps[c]);
        }
        let e: f64 = taps.iter().map(|t| t * t).sum();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rrc_zero_rolloff_is_sinc() {
        let taps = rrc_taps(&RrcSpec { roll_off: 0.0, span_symbols: 16, samples_per_symbol: 4 }).unwrap();
        let c = taps.len() / 2;
        for (i, t) in taps.iter().enumerate() {
            let x = (i as f64 - c as f64) / 4.0;
            let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            assert!((t / taps[c] - sinc).abs() < 1e-12);
        }
    }

    #[test]
    fn rrc_rejects_bad_parameters() {
        assert!(rrc_taps(&RrcSpec { roll_off: 1.5, span_symbols: 64, samples_per_symbol: 2 }).is_err());
        assert!(rrc_taps(&RrcSpec { roll_off: 0.1, span_symbols: 4, samples_per_symbol: 2 }).is_err());
        assert!(rrc_taps(&RrcSpec { roll_off: 0.1, span_symbols: 64, samples_per_symbol: 1 }).is_err());
    }

    /// Symbol-spaced samples of the self-convolved taps, excluding the peak.
    fn cascade_isi(span: usize, sps: usize) -> (f64, f64) {
        let h = rrc_taps(&RrcSpec { roll_off: 0.01, span_symbols: span, samples_per_symbol: sps }).unwrap();
        let mut c = vec![0.0; 2 * h.len() - 1];
        for (i, a) in h.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        let mid = c.len() / 2;
        let isi = (1..=mid / sps).map(|m| c[mid + m * sps].abs()).fold(0.0, f64::max);
        (c[mid], isi)
    }

    #[test]
    fn truncated_rrc_cascade_isi() {
        // Reference values from direct convolution of the analytic taps.
        let (peak, isi64) = cascade_isi(64, 2);
        assert!((peak - 1.0).abs() < 1e-12);
        assert!((isi64 - 1.2554e-2).abs() < 1e-5, "isi64 = {isi64}");
        let (_, isi256) = cascade_isi(256, 2);
        assert!(isi256 <= 1e-3, "isi256 = {isi256}");
    }

    #[test]
    fn exact_block_filter_is_nyquist() {
        let (sps, nsym) = (4usize, 512usize);
        let len = sps * nsym;
        let h = PulseFilter::Exact { roll_off: 0.01 }.response(len, 4.0, 1.0, 0.0).unwrap();
        let mut imp = vec![C64::new(0.0, 0.0); len];
        imp[0] = C64::new(1.0, 0.0);
        fft(&mut imp);
        imp.iter_mut().zip(&h).for_each(|(v, g)| *v *= g * g);
        ifft(&mut imp);
        assert!((imp[0].re - 1.0).abs() < 1e-12);
        let isi = (1..nsym).map(|m| imp[m * sps].norm()).fold(0.0, f64::max);
        assert!(isi < 1e-12, "isi {isi}");
    }

    #[test]
    fn exact_filter_two_sided_bandwidth() {
        // 99.99 % of the filter energy sits inside (1+β)·R.
        let (len, fs, rs) = (1 << 14, 99e9, 49.5e9);
        let h = PulseFilter::Exact { roll_off: 0.01 }.response(len, fs, rs, 0.0).unwrap();
        let freqs = fft_freqs(len, fs);
        let edge = freqs
            .iter()
            .zip(&h)
            .filter(|(_, g)| g.norm() > 0.0)
            .map(|(f, _)| f.abs())
            .fold(0.0, f64::max);
        assert!((2.0 * edge / rs - 1.01).abs() < 2.0 * fs / len as f64 / rs);
    }

    #[test]
    fn tap_filter_response_matches_circular_convolution() {
        let spec = RrcSpec { roll_off: 0.2, span_symbols: 8, samples_per_symbol: 2 };
        let taps = rrc_taps(&spec).unwrap();
        let len = 64;
        let mut sig = DualPolSignal::zeros(len, 2.0);
        sig.x[5] = C64::new(1.0, 0.0);
        let h = PulseFilter::Taps(spec).response(len, 2.0, 1.0, 0.0).unwrap();
        sig.filter_response(&h);
        let half = taps.len() / 2;
        for (i, t) in taps.iter().enumerate() {
            let idx = (5 + i as i64 - half as i64).rem_euclid(len as i64) as usize;
            assert!((sig.x[idx].re - t).abs() < 1e-12);
        }
    }

    #[test]
    fn frequency_shift_zero_is_identity() {
        let s = random_signal(256, 1.0, 1);
        assert_eq!(frequency_shift(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn frequency_shift_inverse_pair() {
        let mut s = random_signal(4096, 200e9, 2);
        lowpass(&mut s, 50e9);
        let up = frequency_shift(&s, 50e9).unwrap();
        let back = frequency_shift(&up, -50e9).unwrap();
        assert!(signal_nmse_db(&back, &s) < -120.0);
        assert!((up.mean_power() / s.mean_power() - 1.0).abs() < 1e-12);
        assert_eq!(back.center_offset, 0.0);
    }

    #[test]
    fn tone_peak_moves_to_shifted_bin() {
        let n = 2000;
        let fs = 200e9;
        let s = DualPolSignal::new(vec![C64::new(1.0, 0.0); n], vec![C64::new(0.0, 0.0); n], fs).unwrap();
        let shifted = frequency_shift(&s, 50e9).unwrap();
        let psd = shifted.power_spectrum();
        let freqs = fft_freqs(n, fs);
        let imax = (0..n).max_by(|&a, &b| psd[a].total_cmp(&psd[b])).unwrap();
        assert!((freqs[imax] - 50e9).abs() < 1e-3);
    }

    #[test]
    fn frequency_shift_past_nyquist_is_aliasing() {
        let mut s = random_signal(4096, 200e9, 3);
        lowpass(&mut s, 100e9);
        assert!(matches!(frequency_shift(&s, 60e9), Err(Error::Aliasing(_))));
    }

    #[test]
    fn resample_same_rate_identity() {
        let s = random_signal(128, 10.0, 4);
        assert_eq!(resample(&s, 10.0).unwrap(), s);
    }

    #[test]
    fn resample_round_trip() {
        let mut s = random_signal(4096, 100e9, 5);
        lowpass(&mut s, 60e9);
        let up = resample(&s, 200e9).unwrap();
        let down = resample(&up, 100e9).unwrap();
        assert!(signal_nmse_db(&down, &s) <= -60.0);
        assert!(lin_to_db(up.mean_power() / s.mean_power()).abs() < 0.01);
    }

    #[test]
    fn resample_below_occupied_bandwidth_fails() {
        let mut s = random_signal(4096, 100e9, 6);
        lowpass(&mut s, 80e9);
        assert!(matches!(resample(&s, 50e9), Err(Error::Aliasing(_))));
        assert!(matches!(resample(&s, 77.777e9), Err(Error::Parameter(_))));
    }

    #[test]
    fn set_mean_power_values() {
        let s = random_signal(1000, 1.0, 7);
        let p0 = set_mean_power(&s, 0.0).unwrap();
        assert!((p0.mean_power() - 1e-3).abs() < 1e-12);
        let p3 = set_mean_power(&s, 3.0).unwrap();
        assert!((p3.mean_power() / 1.9953e-3 - 1.0).abs() < 1e-4);
        let again = set_mean_power(&p3, 3.0).unwrap();
        assert!(signal_nmse_db(&again, &p3) < -120.0);
        assert!(matches!(set_mean_power(&DualPolSignal::zeros(8, 1.0), 0.0), Err(Error::ZeroPower)));
    }

    #[test]
    fn shift_and_power_commute() {
        let mut s = random_signal(2048, 100e9, 8);
        lowpass(&mut s, 30e9);
        let a = set_mean_power(&frequency_shift(&s, 10e9).unwrap(), 2.0).unwrap();
        let b = frequency_shift(&set_mean_power(&s, 2.0).unwrap(), 10e9).unwrap();
        assert!(signal_nmse_db(&a, &b) < -120.0);
    }

    #[test]
    fn white_noise_variance() {
        let mut s = DualPolSignal::zeros(1 << 16, 10e9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        add_shaped_noise(&mut s, &mut rng, |_| 1e-12);
        // per pol variance = psd * fs = 0.01
        assert!((s.mean_power() / 0.02 - 1.0).abs() < 0.02);
    }

    #[test]
    fn invalid_signals_rejected() {
        assert!(DualPolSignal::new(vec![], vec![], 1.0).is_err());
        assert!(DualPolSignal::new(vec![C64::new(1.0, 0.0)], vec![], 1.0).is_err());
        assert!(DualPolSignal::new(vec![C64::new(f64::NAN, 0.0)], vec![C64::new(0.0, 0.0)], 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn parseval_after_filtering(seed in 0u64..1000, bw in 0.1f64..0.9) {
                let mut s = random_signal(512, 1.0, seed);
                lowpass(&mut s, bw);
                let time: f64 = s.mean_power();
                let freq: f64 = s.power_spectrum().iter().sum();
                prop_assert!((time / freq - 1.0).abs() < 1e-9);
            }

            #[test]
            fn set_power_is_pure_scaling(seed in 0u64..1000, dbm in -20.0f64..20.0) {
                let s = random_signal(256, 1.0, seed);
                let t = set_mean_power(&s, dbm).unwrap();
                prop_assert!((t.mean_power() / dbm_to_watts(dbm) - 1.0).abs() < 1e-9);
                let ratio = t.x[0] / s.x[0];
                prop_assert!(ratio.im.abs() < 1e-9);
                for (a, b) in t.x.iter().zip(&s.x) {
                    prop_assert!((a - b * ratio).norm() < 1e-9 * a.norm().max(1e-30));
                }
            }
        }
    }
}
