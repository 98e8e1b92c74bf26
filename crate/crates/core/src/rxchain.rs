//! Coherent receiver: front-end noise and LO, per-channel demultiplexing,
//! preamble synchronisation, pilot-aided phase recovery and SNR estimation.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sigkit::{self, db_to_lin, fft, fft_freqs, ifft, lin_to_db, DualPolSignal, PulseFilter, C64};
use crate::txchain::{decide, wiener_phase, LaserSpec, ModulationSpec, SuperchannelSpec, TxFrame};

/// Reported SNR for an error-free estimate.
pub const SNR_CAP_DB: f64 = 60.0;
const MIN_SYMBOLS_FOR_ACCURACY: usize = 10_000;

/// `f64` fields where `+∞` travels as JSON `null`.
pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Transceiver noise: per-channel transmitter AWGN, receiver AWGN and the LO.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrxNoiseSpec {
    #[serde(with = "inf_as_null")]
    pub tx_snr_db: f64,
    #[serde(with = "inf_as_null")]
    pub rx_snr_db: f64,
    pub lo: LaserSpec,
    /// Receiver SNR offset applied to the outer channels of a superchannel.
    pub edge_rx_offset_db: f64,
    /// DAC bandwidth confining each channel's transmitter noise (Hz).
    pub awg_bandwidth: f64,
}

impl Default for TrxNoiseSpec {
    fn default() -> Self {
        Self {
            tx_snr_db: f64::INFINITY,
            rx_snr_db: f64::INFINITY,
            lo: LaserSpec::default(),
            edge_rx_offset_db: -2.0,
            awg_bandwidth: 90e9,
        }
    }
}

impl TrxNoiseSpec {
    pub fn noiseless() -> Self {
        Self { lo: LaserSpec { linewidth: 0.0, ..LaserSpec::default() }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tx_snr_db", self.tx_snr_db), ("rx_snr_db", self.rx_snr_db)] {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("{name} = {v} must be positive or +inf")));
            }
        }
        if self.lo.linewidth < 0.0 || !(self.awg_bandwidth > 0.0) {
            return Err(Error::Parameter("LO linewidth and AWG bandwidth must be non-negative".into()));
        }
        Ok(())
    }

    /// SNR set by both noise sources together, in dB.
    pub fn combined_snr_db(&self) -> f64 {
        let inv = 1.0 / db_to_lin(self.tx_snr_db) + 1.0 / db_to_lin(self.rx_snr_db);
        if inv == 0.0 {
            f64::INFINITY
        } else {
            -lin_to_db(inv)
        }
    }
}

/// Receiver DSP settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RxConfig {
    /// Pilot phase averaging half-window, in pilots.
    pub cpe_half_window: usize,
    /// Decision-directed refinement half-window in symbols; 0 disables it.
    pub dd_half_window: usize,
    pub sync_threshold: f64,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self { cpe_half_window: 8, dd_half_window: 32, sync_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnrEstimate {
    pub snr_db: f64,
    pub snr_x_db: f64,
    pub snr_y_db: f64,
    pub symbols: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RxResult {
    /// Scale-corrected data symbols (pilots and preamble removed).
    pub equalized_symbols_x: Vec<C64>,
    pub equalized_symbols_y: Vec<C64>,
    pub snr: SnrEstimate,
    pub residual_frequency_offset: f64,
    /// Offset of the frame start in 2-sps samples.
    pub sync_index: usize,
    pub pol_swapped: bool,
}

/// Apply the LO phase process and receiver AWGN.
///
/// Receiver noise PSD is set so that a channel of power `channel_power`
/// sees `rx_snr_db` over its symbol-rate bandwidth; outer channels get
/// `edge_rx_offset_db` less.
pub fn coherent_front_end(
    signal: &DualPolSignal,
    trx: &TrxNoiseSpec,
    spec: &SuperchannelSpec,
    channel_power: f64,
    seed_value: u64,
) -> Result<DualPolSignal> {
    trx.validate()?;
    let mut out = signal.clone();
    if trx.lo.linewidth > 0.0 || trx.lo.frequency_offset != 0.0 {
        let phase = wiener_phase(
            out.len(),
            out.sample_rate,
            trx.lo.linewidth,
            trx.lo.frequency_offset,
            seed::derive(seed_value, &[seed::stream::LO, trx.lo.prng_seed]),
        );
        for pol in out.pols_mut() {
            pol.iter_mut().zip(&phase).for_each(|(v, p)| *v *= C64::from_polar(1.0, -p));
        }
    }
    if trx.rx_snr_db.is_finite() {
        let rs = spec.per_channel[0].symbol_rate;
        let base = channel_power / (db_to_lin(trx.rx_snr_db) * rs) / 2.0;
        let offsets = spec.channel_offsets();
        let edge = db_to_lin(-trx.edge_rx_offset_db);
        let last = offsets.len() - 1;
        let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::RX_NOISE]));
        sigkit::add_shaped_noise(&mut out, &mut rng, |f| {
            if last == 0 {
                return base;
            }
            let nearest = offsets
                .iter()
                .enumerate()
                .min_by(|a, b| (f - a.1).abs().total_cmp(&(f - b.1).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if nearest == 0 || nearest == last {
                base * edge
            } else {
                base
            }
        });
    }
    Ok(out)
}

/// Downconvert one channel, apply the matched filter and return 2-sps samples.
pub fn demux_channel(signal: &DualPolSignal, channel_offset: f64, modulation: &ModulationSpec) -> Result<DualPolSignal> {
    let rs = modulation.symbol_rate;
    let fs = signal.sample_rate;
    if channel_offset.abs() + (1.0 + modulation.roll_off) * rs / 2.0 > fs / 2.0 * (1.0 + 1e-12) {
        return Err(Error::Aliasing(format!(
            "channel at {channel_offset:.4e} Hz lies outside the {:.4e} Hz Nyquist band",
            fs / 2.0
        )));
    }
    let len = signal.len();
    let m_f = len as f64 * 2.0 * rs / fs;
    let m = m_f.round() as usize;
    if (m_f - m as f64).abs() > 1e-6 || m == 0 {
        return Err(Error::Parameter(format!("{len} samples at {fs:.4e} S/s is not a whole number of symbols")));
    }
    let df = fs / len as f64;
    let bin_f = channel_offset / df;
    let (work, shift_bins) = if (bin_f - bin_f.round()).abs() < 1e-6 {
        (None, bin_f.round() as i64)
    } else {
        (Some(sigkit::shift_unchecked(signal, -channel_offset)), 0)
    };
    let src = work.as_ref().unwrap_or(signal);
    let h = PulseFilter::Exact { roll_off: modulation.roll_off }.response(m, 2.0 * rs, rs, 0.0)?;
    let out_freqs = fft_freqs(m, 2.0 * rs);
    let scale = m as f64 / len as f64;
    let pick = |pol: &[C64]| {
        let mut spec = pol.to_vec();
        fft(&mut spec);
        let mut out: Vec<C64> = out_freqs
            .iter()
            .zip(&h)
            .map(|(f, hv)| {
                if hv.re == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let k = (f / df).round() as i64 + shift_bins;
                spec[k.rem_euclid(len as i64) as usize] * hv.re * scale
            })
            .collect();
        ifft(&mut out);
        out
    };
    DualPolSignal::new(pick(&src.x), pick(&src.y), 2.0 * rs)
}

/// Synchronisation outcome: symbol-spaced streams aligned to the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Synced {
    pub sync_index: usize,
    pub pol_swapped: bool,
    pub peak: f64,
    pub x: Vec<C64>,
    pub y: Vec<C64>,
}

const SYNC_SEGMENT: usize = 64;

/// Locate the preamble in a cyclic 2-sps stream.
///
/// The metric sums correlation magnitudes over short preamble segments, so
/// residual carrier phase drift does not destroy the peak. It is normalised
/// to [0, 1] and evaluated on both sample phases and both polarisation
/// assignments.
pub fn synchronize(samples: &DualPolSignal, frame: &TxFrame, threshold: f64) -> Result<Synced> {
    let nsym = frame.len();
    if samples.len() != 2 * nsym {
        return Err(Error::Parameter(format!("{} samples for a {nsym}-symbol frame at 2 sps", samples.len())));
    }
    let pre_len = frame.pilot_mask.iter().take_while(|p| **p).count();
    if pre_len == 0 {
        return Err(Error::Parameter("frame has no preamble".into()));
    }
    let templates = [&frame.symbols_x[..pre_len], &frame.symbols_y[..pre_len]];
    let template_energy: Vec<f64> = templates.iter().map(|t| t.iter().map(|v| v.norm_sqr()).sum()).collect();
    // conj spectra of zero-padded preamble segments
    let seg_spectra: Vec<Vec<Vec<C64>>> = templates
        .iter()
        .map(|t| {
            (0..pre_len)
                .step_by(SYNC_SEGMENT)
                .map(|start| {
                    let mut buf = vec![C64::new(0.0, 0.0); nsym];
                    let end = (start + SYNC_SEGMENT).min(pre_len);
                    buf[start..end].copy_from_slice(&t[start..end]);
                    fft(&mut buf);
                    buf.iter_mut().for_each(|v| *v = v.conj());
                    buf
                })
                .collect()
        })
        .collect();

    let mut best = (f64::NEG_INFINITY, 0usize, 0usize, false);
    for phase in 0..2 {
        let streams: Vec<Vec<C64>> = [&samples.x, &samples.y]
            .iter()
            .map(|p| p.iter().skip(phase).step_by(2).copied().collect())
            .collect();
        let windows: Vec<Vec<f64>> = streams.iter().map(|s| window_energy(s, pre_len)).collect();
        let spectra: Vec<Vec<C64>> = streams
            .iter()
            .map(|s| {
                let mut b = s.clone();
                fft(&mut b);
                b
            })
            .collect();
        // metric[(rx pol, template pol)][delay]
        let mut metric = vec![vec![0.0f64; nsym]; 4];
        for r in 0..2 {
            for t in 0..2 {
                let acc = &mut metric[2 * r + t];
                for seg in &seg_spectra[t] {
                    let mut c: Vec<C64> = spectra[r].iter().zip(seg).map(|(a, b)| a * b).collect();
                    ifft(&mut c);
                    acc.iter_mut().zip(&c).for_each(|(m, v)| *m += v.norm());
                }
                for (d, m) in acc.iter_mut().enumerate() {
                    let denom = (windows[r][d] * template_energy[t]).sqrt();
                    *m = if denom > 0.0 { *m / denom } else { 0.0 };
                }
            }
        }
        #[allow(clippy::needless_range_loop)]
        for d in 0..nsym {
            let straight = (metric[0][d] + metric[3][d]) / 2.0;
            let swapped = (metric[1][d] + metric[2][d]) / 2.0;
            for (v, sw) in [(straight, false), (swapped, true)] {
                if v > best.0 {
                    best = (v, phase, d, sw);
                }
            }
        }
    }
    let (peak, phase, delay, swapped) = best;
    if !(peak >= threshold) {
        return Err(Error::Sync { peak: peak.max(0.0), threshold });
    }
    let take = |pol: &[C64]| -> Vec<C64> { (0..nsym).map(|n| pol[(2 * ((delay + n) % nsym)) + phase]).collect() };
    let (x, y) = if swapped { (take(&samples.y), take(&samples.x)) } else { (take(&samples.x), take(&samples.y)) };
    Ok(Synced { sync_index: 2 * delay + phase, pol_swapped: swapped, peak, x, y })
}

/// Cyclic energy of `len`-sample windows starting at each index.
fn window_energy(s: &[C64], len: usize) -> Vec<f64> {
    let n = s.len();
    let mut acc: f64 = s.iter().cycle().take(len).map(|v| v.norm_sqr()).sum();
    let mut out = Vec::with_capacity(n);
    for d in 0..n {
        out.push(acc.max(0.0));
        acc += s[(d + len) % n].norm_sqr() - s[d].norm_sqr();
    }
    out
}

/// Phase-recovered streams and the estimates behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct CpeOutput {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    /// Removed phase per symbol (rad).
    pub phase: Vec<f64>,
    /// Frequency offset from the pilot phase slope (rad/symbol).
    pub frequency_offset: f64,
}

/// Pilot-aided carrier phase estimation, common to both polarisations.
///
/// Pilot phases are unwrapped, detrended by their least-squares slope,
/// averaged over `half_window` pilots each side and linearly interpolated.
/// A decision-directed pass then refines each symbol's phase from its
/// `dd_half_window` neighbours, excluding the symbol itself so its own
/// noise cannot bias the estimate.
pub fn pilot_cpe(x: &[C64], y: &[C64], frame: &TxFrame, half_window: usize, dd_half_window: usize) -> Result<CpeOutput> {
    let n = frame.len();
    if x.len() != n || y.len() != n {
        return Err(Error::Parameter("stream length differs from frame".into()));
    }
    let pilots: Vec<usize> = frame.pilot_indices().collect();
    if pilots.len() < 2 {
        return Err(Error::Parameter("at least two pilots required".into()));
    }
    let raw: Vec<f64> = pilots
        .iter()
        .map(|&i| (x[i] * frame.symbols_x[i].conj() + y[i] * frame.symbols_y[i].conj()).arg())
        .collect();
    let mut unwrapped = Vec::with_capacity(raw.len());
    let mut prev = raw[0];
    for &r in &raw {
        let v = prev + wrap(r - prev);
        unwrapped.push(v);
        prev = v;
    }
    let idx: Vec<f64> = pilots.iter().map(|&i| i as f64).collect();
    let slope = ls_slope(&idx, &unwrapped);
    let detrended: Vec<f64> = unwrapped.iter().zip(&idx).map(|(p, t)| p - slope * t).collect();
    let smoothed = moving_average(&detrended, half_window);
    let at_pilots: Vec<f64> = smoothed.iter().zip(&idx).map(|(p, t)| p + slope * t).collect();

    let mut phase = vec![0.0; n];
    let mut seg = 0;
    for (i, ph) in phase.iter_mut().enumerate() {
        while seg + 1 < pilots.len() && pilots[seg + 1] <= i {
            seg += 1;
        }
        *ph = if i <= pilots[0] {
            at_pilots[0] + slope * (i as f64 - idx[0])
        } else if seg + 1 >= pilots.len() {
            at_pilots[seg] + slope * (i as f64 - idx[seg])
        } else {
            let (t0, t1) = (idx[seg], idx[seg + 1]);
            let w = (i as f64 - t0) / (t1 - t0);
            at_pilots[seg] * (1.0 - w) + at_pilots[seg + 1] * w
        };
    }
    let derotate = |v: &[C64], ph: &[f64]| -> Vec<C64> { v.iter().zip(ph).map(|(s, p)| s * C64::from_polar(1.0, -p)).collect() };
    let mut ox = derotate(x, &phase);
    let mut oy = derotate(y, &phase);

    if dd_half_window > 0 {
        let residual = dd_refine(&ox, &oy, frame, dd_half_window);
        ox = derotate(&ox, &residual);
        oy = derotate(&oy, &residual);
        phase.iter_mut().zip(&residual).for_each(|(p, r)| *p += r);
    }
    Ok(CpeOutput { x: ox, y: oy, phase, frequency_offset: slope })
}

fn wrap(p: f64) -> f64 {
    (p + PI).rem_euclid(2.0 * PI) - PI
}

fn ls_slope(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(v).map(|(a, b)| (a - mt) * (b - mv)).sum();
    let den: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn moving_average(v: &[f64], half: usize) -> Vec<f64> {
    let n = v.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + v[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Leave-one-out decision-directed residual phase per symbol.
fn dd_refine(x: &[C64], y: &[C64], frame: &TxFrame, half: usize) -> Vec<f64> {
    let n = x.len();
    let gain = |rx: &[C64], tx: &[C64]| -> C64 {
        let (num, den) = frame
            .pilot_indices()
            .fold((C64::new(0.0, 0.0), 0.0), |(a, b), i| (a + rx[i] * tx[i].conj(), b + tx[i].norm_sqr()));
        if den > 0.0 && num.norm() > 0.0 {
            num / den
        } else {
            C64::new(1.0, 0.0)
        }
    };
    let gx = gain(x, &frame.symbols_x);
    let gy = gain(y, &frame.symbols_y);
    let reference = |i: usize, rx: &[C64], tx: &[C64], g: C64| -> C64 {
        if frame.pilot_mask[i] {
            tx[i]
        } else {
            decide(rx[i] / g, frame.qam_order)
        }
    };
    let terms: Vec<C64> = (0..n)
        .map(|i| {
            x[i] * (gx * reference(i, x, &frame.symbols_x, gx)).conj()
                + y[i] * (gy * reference(i, y, &frame.symbols_y, gy)).conj()
        })
        .collect();
    let mut prefix = vec![C64::new(0.0, 0.0); n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + terms[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let sum = prefix[hi] - prefix[lo] - terms[i];
            if sum.norm() > 0.0 {
                sum.arg()
            } else {
                0.0
            }
        })
        .collect()
}

/// SNR over the data symbols after a complex least-squares gain fit per polarisation.
pub fn estimate_snr(x: &[C64], y: &[C64], frame: &TxFrame) -> Result<SnrEstimate> {
    if x.len() != frame.len() || y.len() != frame.len() {
        return Err(Error::Parameter("stream length differs from frame".into()));
    }
    let data: Vec<usize> = frame.data_indices().collect();
    if data.is_empty() {
        return Err(Error::Parameter("frame has no data symbols".into()));
    }
    if data.len() < MIN_SYMBOLS_FOR_ACCURACY {
        warn!(
            "SNR estimated from {} data symbols per polarisation; fewer than {MIN_SYMBOLS_FOR_ACCURACY} limits accuracy",
            data.len()
        );
    }
    let pol = |rx: &[C64], tx: &[C64]| -> (f64, f64) {
        let (num, den) = data
            .iter()
            .fold((C64::new(0.0, 0.0), 0.0), |(a, b), &i| (a + rx[i] * tx[i].conj(), b + tx[i].norm_sqr()));
        if num.norm() == 0.0 {
            return (den, f64::INFINITY);
        }
        let g = num / den;
        let err: f64 = data.iter().map(|&i| (rx[i] / g - tx[i]).norm_sqr()).sum();
        (den, err)
    };
    let (sx, ex) = pol(x, &frame.symbols_x);
    let (sy, ey) = pol(y, &frame.symbols_y);
    let to_db = |s: f64, e: f64| if e <= 0.0 { SNR_CAP_DB } else { lin_to_db(s / e).min(SNR_CAP_DB) };
    Ok(SnrEstimate {
        snr_db: to_db(sx + sy, ex + ey),
        snr_x_db: to_db(sx, ex),
        snr_y_db: to_db(sy, ey),
        symbols: data.len(),
    })
}

/// Demux, synchronise, recover phase and measure one channel.
pub fn receive_channel(
    signal: &DualPolSignal,
    channel_offset: f64,
    modulation: &ModulationSpec,
    frame: &TxFrame,
    cfg: &RxConfig,
) -> Result<RxResult> {
    let samples = demux_channel(signal, channel_offset, modulation)?;
    let synced = synchronize(&samples, frame, cfg.sync_threshold)?;
    let cpe = pilot_cpe(&synced.x, &synced.y, frame, cfg.cpe_half_window, cfg.dd_half_window)?;
    let snr = estimate_snr(&cpe.x, &cpe.y, frame)?;
    let scaled = |rx: &[C64], tx: &[C64]| -> Vec<C64> {
        let (num, den) = frame
            .data_indices()
            .fold((C64::new(0.0, 0.0), 0.0), |(a, b), i| (a + rx[i] * tx[i].conj(), b + tx[i].norm_sqr()));
        let g = if num.norm() > 0.0 { num / den } else { C64::new(1.0, 0.0) };
        frame.data_indices().map(|i| rx[i] / g).collect()
    };
    Ok(RxResult {
        equalized_symbols_x: scaled(&cpe.x, &frame.symbols_x),
        equalized_symbols_y: scaled(&cpe.y, &frame.symbols_y),
        snr,
        residual_frequency_offset: cpe.frequency_offset * modulation.symbol_rate / (2.0 * PI),
        sync_index: synced.sync_index,
        pol_swapped: synced.pol_swapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigkit::{complex_gaussian, nmse_db};
    use crate::txchain::{build_frame, generate_superchannel};
    use proptest::prelude::*;

    fn modulation() -> ModulationSpec {
        ModulationSpec { payload_symbols: 32768, prng_seed: 5, ..Default::default() }
    }

    fn single(m: &ModulationSpec) -> (SuperchannelSpec, TxFrame, DualPolSignal) {
        let spec = SuperchannelSpec::uniform(1, 50e9, m.clone());
        let lasers = [LaserSpec { linewidth: 0.0, ..Default::default() }];
        let tx = generate_superchannel(&spec, &lasers, PulseFilter::Exact { roll_off: m.roll_off }, 4.0 * m.symbol_rate).unwrap();
        (spec, tx.frames[0].clone(), tx.signal)
    }

    fn noisy(frame: &TxFrame, snr_db: f64, seed_value: u64) -> (Vec<C64>, Vec<C64>) {
        let mut rng = seed::rng(seed_value);
        let var = 1.0 / db_to_lin(snr_db);
        let add = |s: &[C64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<C64> { s.iter().map(|v| v + complex_gaussian(rng, var)).collect() };
        let x = add(&frame.symbols_x, &mut rng);
        let y = add(&frame.symbols_y, &mut rng);
        (x, y)
    }

    fn big_frame() -> TxFrame {
        build_frame(&ModulationSpec { payload_symbols: 103_424, prng_seed: 9, ..Default::default() }).unwrap()
    }

    #[test]
    fn infinite_snr_survives_json() {
        let spec = TrxNoiseSpec { rx_snr_db: 25.0, ..Default::default() };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"tx_snr_db\":null"));
        let back: TrxNoiseSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!((TrxNoiseSpec { tx_snr_db: 25.0, rx_snr_db: 25.0, ..Default::default() }.combined_snr_db() - 21.99).abs() < 0.01);
    }

    #[test]
    fn ideal_front_end_is_identity() {
        let m = ModulationSpec { payload_symbols: 2048, ..Default::default() };
        let (spec, _, sig) = single(&m);
        let out = coherent_front_end(&sig, &TrxNoiseSpec::noiseless(), &spec, sig.mean_power(), 1).unwrap();
        assert_eq!(out, sig);
    }

    #[test]
    fn demux_centre_channel_loopback() {
        let m = ModulationSpec { payload_symbols: 4096, ..Default::default() };
        let (_, frame, sig) = single(&m);
        let out = demux_channel(&sig, 0.0, &m).unwrap();
        let sym: Vec<C64> = out.x.iter().step_by(2).copied().collect();
        let g = sym[0] / frame.symbols_x[0];
        let scaled: Vec<C64> = sym.iter().map(|v| v / g).collect();
        assert!(nmse_db(&scaled, &frame.symbols_x) <= -40.0);
    }

    #[test]
    fn demux_edge_channel_of_three() {
        let m = ModulationSpec { payload_symbols: 2144, ..Default::default() };
        let spec = SuperchannelSpec::uniform(3, 50e9, m.clone());
        let lasers = [LaserSpec { linewidth: 0.0, ..Default::default() }; 3];
        let tx = generate_superchannel(&spec, &lasers, PulseFilter::Exact { roll_off: 0.01 }, 198e9).unwrap();
        let out = demux_channel(&tx.signal, 50e9, &spec.per_channel[2]).unwrap();
        let frame = &tx.frames[2];
        let sym: Vec<C64> = out.y.iter().step_by(2).copied().collect();
        let g = sym[0] / frame.symbols_y[0];
        let scaled: Vec<C64> = sym.iter().map(|v| v / g).collect();
        assert!(nmse_db(&scaled, &frame.symbols_y) <= -35.0);
        assert!(matches!(demux_channel(&tx.signal, 90e9, &m), Err(Error::Aliasing(_))));
    }

    #[test]
    fn sync_finds_delay_and_swap() {
        let m = ModulationSpec { payload_symbols: 4096, ..Default::default() };
        let (_, frame, sig) = single(&m);
        let s2 = demux_channel(&sig, 0.0, &m).unwrap();
        let n = s2.len();
        let rot = |v: &[C64]| -> Vec<C64> { (0..n).map(|i| v[(i + n - 1000) % n]).collect() };
        let delayed = DualPolSignal::new(rot(&s2.x), rot(&s2.y), s2.sample_rate).unwrap();
        let r = synchronize(&delayed, &frame, 0.5).unwrap();
        assert_eq!(r.sync_index, 1000);
        assert!(!r.pol_swapped);

        let swapped = DualPolSignal::new(s2.y.clone(), s2.x.clone(), s2.sample_rate).unwrap();
        let r = synchronize(&swapped, &frame, 0.5).unwrap();
        assert!(r.pol_swapped);
        assert_eq!(r.sync_index, 0);
        let g = r.x[5] / frame.symbols_x[5];
        let scaled: Vec<C64> = r.x.iter().map(|v| v / g).collect();
        assert!(nmse_db(&scaled, &frame.symbols_x) < -40.0);
    }

    #[test]
    fn sync_rejects_noise() {
        let m = ModulationSpec { payload_symbols: 4096, ..Default::default() };
        let frame = build_frame(&m).unwrap();
        let mut rng = seed::rng(3);
        let n = 2 * frame.len();
        let x = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let y = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let s = DualPolSignal::new(x, y, 99e9).unwrap();
        assert!(matches!(synchronize(&s, &frame, 0.5), Err(Error::Sync { .. })));
    }

    #[test]
    fn cpe_is_transparent_without_phase_noise() {
        let frame = big_frame();
        let out = pilot_cpe(&frame.symbols_x, &frame.symbols_y, &frame, 8, 32).unwrap();
        assert!(nmse_db(&out.x, &frame.symbols_x) < -90.0);
        assert!(nmse_db(&out.y, &frame.symbols_y) < -90.0);
    }

    #[test]
    fn cpe_removes_static_rotation() {
        let frame = big_frame();
        let (x, y) = noisy(&frame, 18.0, 4);
        let r = C64::from_polar(1.0, 30f64.to_radians());
        let xr: Vec<C64> = x.iter().map(|v| v * r).collect();
        let yr: Vec<C64> = y.iter().map(|v| v * r).collect();
        let a = pilot_cpe(&x, &y, &frame, 8, 32).unwrap();
        let b = pilot_cpe(&xr, &yr, &frame, 8, 32).unwrap();
        let sa = estimate_snr(&a.x, &a.y, &frame).unwrap().snr_db;
        let sb = estimate_snr(&b.x, &b.y, &frame).unwrap().snr_db;
        assert!((sa - sb).abs() <= 0.05, "{sa} vs {sb}");
    }

    #[test]
    fn cpe_does_not_bias_snr() {
        let frame = big_frame();
        let (x, y) = noisy(&frame, 20.0, 5);
        let raw = estimate_snr(&x, &y, &frame).unwrap().snr_db;
        let c = pilot_cpe(&x, &y, &frame, 8, 32).unwrap();
        let cpe = estimate_snr(&c.x, &c.y, &frame).unwrap().snr_db;
        assert!((raw - cpe).abs() <= 0.05, "{raw} vs {cpe}");
    }

    #[test]
    fn cpe_penalty_against_genie() {
        let frame = big_frame();
        let (x, y) = noisy(&frame, 20.0, 6);
        let phase = wiener_phase(frame.len(), 49.5e9, 100e3, 0.0, 7);
        let rot = |v: &[C64]| -> Vec<C64> { v.iter().zip(&phase).map(|(s, p)| s * C64::from_polar(1.0, *p)).collect() };
        let (xr, yr) = (rot(&x), rot(&y));
        let genie = estimate_snr(&x, &y, &frame).unwrap().snr_db;
        let c = pilot_cpe(&xr, &yr, &frame, 8, 32).unwrap();
        let est = estimate_snr(&c.x, &c.y, &frame).unwrap().snr_db;
        assert!(genie - est <= 0.3, "genie {genie} cpe {est}");
    }

    #[test]
    fn cpe_tracks_frequency_offset() {
        let frame = big_frame();
        let w = 2.0 * PI * 20e6 / 49.5e9;
        let rot = |v: &[C64]| -> Vec<C64> { v.iter().enumerate().map(|(i, s)| s * C64::from_polar(1.0, w * i as f64)).collect() };
        let c = pilot_cpe(&rot(&frame.symbols_x), &rot(&frame.symbols_y), &frame, 8, 32).unwrap();
        assert!((c.frequency_offset - w).abs() < 1e-9);
        assert!(nmse_db(&c.x, &frame.symbols_x) < -60.0);
    }

    #[test]
    fn snr_estimator_edge_cases() {
        let frame = big_frame();
        let e = estimate_snr(&frame.symbols_x, &frame.symbols_y, &frame).unwrap();
        assert_eq!(e.snr_db, SNR_CAP_DB);
        let half: Vec<C64> = frame.symbols_x.iter().map(|v| v * 0.5).collect();
        let halfy: Vec<C64> = frame.symbols_y.iter().map(|v| v * 0.5).collect();
        assert_eq!(estimate_snr(&half, &halfy, &frame).unwrap().snr_db, SNR_CAP_DB);
    }

    #[test]
    fn snr_estimator_recovers_injected_noise() {
        let frame = big_frame();
        for (i, snr) in [5.0, 15.0, 30.0].into_iter().enumerate() {
            let (x, y) = noisy(&frame, snr, 10 + i as u64);
            let e = estimate_snr(&x, &y, &frame).unwrap();
            assert!((e.snr_db - snr).abs() <= 0.05, "{snr}: {}", e.snr_db);
            let pooled = -lin_to_db((db_to_lin(-e.snr_x_db) + db_to_lin(-e.snr_y_db)) / 2.0);
            assert!((pooled - e.snr_db).abs() < 0.01);
        }
    }

    #[test]
    fn receiver_noise_sets_back_to_back_snr() {
        let m = modulation();
        let (spec, frame, sig) = single(&m);
        let trx = TrxNoiseSpec { rx_snr_db: 25.0, ..TrxNoiseSpec::noiseless() };
        let out = coherent_front_end(&sig, &trx, &spec, sig.mean_power(), 11).unwrap();
        let r = receive_channel(&out, 0.0, &m, &frame, &RxConfig::default()).unwrap();
        assert!((r.snr.snr_db - 25.0).abs() <= 0.1, "{}", r.snr.snr_db);
        assert_eq!(r.equalized_symbols_x.len(), frame.data_indices().count());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn snr_is_scale_invariant(re in -3.0f64..3.0, im in -3.0f64..3.0, seed_value in 0u64..1000) {
            prop_assume!(re.hypot(im) > 1e-3);
            let frame = build_frame(&ModulationSpec { payload_symbols: 4096, ..Default::default() }).unwrap();
            let (x, y) = noisy(&frame, 17.0, seed_value);
            let c = C64::new(re, im);
            let a = estimate_snr(&x, &y, &frame).unwrap();
            let xs: Vec<C64> = x.iter().map(|v| v * c).collect();
            let ys: Vec<C64> = y.iter().map(|v| v * c).collect();
            let b = estimate_snr(&xs, &ys, &frame).unwrap();
            prop_assert!((a.snr_db - b.snr_db).abs() < 1e-9);
        }
    }
}
