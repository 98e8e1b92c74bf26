//! Pilot-framed DP-QAM superchannel generation.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sigkit::{self, fft, fft_freqs, ifft, DualPolSignal, PulseFilter, C64};

/// Per-channel modulation and framing parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulationSpec {
    pub qam_order: u32,
    /// Baud (Hz).
    pub symbol_rate: f64,
    pub roll_off: f64,
    /// Symbols after the preamble, pilots included.
    pub payload_symbols: usize,
    pub pilot_preamble_len: usize,
    /// One pilot every `pilot_rate_inverse` payload symbols.
    pub pilot_rate_inverse: usize,
    pub prng_seed: u64,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        Self {
            qam_order: 64,
            symbol_rate: 49.5e9,
            roll_off: 0.01,
            payload_symbols: 32768,
            pilot_preamble_len: 1024,
            pilot_rate_inverse: 32,
            prng_seed: 0,
        }
    }
}

impl ModulationSpec {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.qam_order, 4 | 16 | 64 | 256) {
            return Err(Error::Parameter(format!("unsupported QAM order {}", self.qam_order)));
        }
        if !(self.symbol_rate > 0.0) {
            return Err(Error::Parameter("symbol rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.roll_off) {
            return Err(Error::Parameter(format!("roll-off {} outside [0,1]", self.roll_off)));
        }
        if self.pilot_preamble_len == 0 || self.pilot_rate_inverse == 0 {
            return Err(Error::Parameter("preamble length and pilot spacing must be positive".into()));
        }
        if self.payload_symbols == 0 || !self.payload_symbols.is_multiple_of(self.pilot_rate_inverse) {
            return Err(Error::Parameter(format!(
                "payload {} not a positive multiple of pilot spacing {}",
                self.payload_symbols, self.pilot_rate_inverse
            )));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.pilot_preamble_len + self.payload_symbols
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.qam_order.trailing_zeros() as usize
    }

    /// Fraction of transmitted symbols that are known (preamble + pilots).
    pub fn pilot_overhead(&self) -> f64 {
        let known = self.pilot_preamble_len + self.payload_symbols / self.pilot_rate_inverse;
        known as f64 / self.frame_len() as f64
    }

    pub fn is_pilot(&self, index: usize) -> bool {
        index < self.pilot_preamble_len || (index - self.pilot_preamble_len).is_multiple_of(self.pilot_rate_inverse)
    }
}

/// WDM grid of identical channels centred on the carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperchannelSpec {
    pub channel_count: usize,
    /// Channel spacing (Hz).
    pub spacing: f64,
    pub per_channel: Vec<ModulationSpec>,
    pub center_wavelength: f64,
}

impl SuperchannelSpec {
    pub fn uniform(channel_count: usize, spacing: f64, modulation: ModulationSpec) -> Self {
        let per_channel = (0..channel_count)
            .map(|i| ModulationSpec { prng_seed: seed::derive(modulation.prng_seed, &[i as u64]), ..modulation.clone() })
            .collect();
        Self { channel_count, spacing, per_channel, center_wavelength: 1553e-9 }
    }

    /// Channel centre offsets from the carrier, lowest frequency first.
    pub fn channel_offsets(&self) -> Vec<f64> {
        let mid = (self.channel_count as f64 - 1.0) / 2.0;
        (0..self.channel_count).map(|i| (i as f64 - mid) * self.spacing).collect()
    }

    pub fn center_index(&self) -> usize {
        self.channel_count / 2
    }

    /// `(n−1)·spacing + (1+β)·R` using the widest channel.
    pub fn composite_bandwidth(&self) -> f64 {
        let widest = self
            .per_channel
            .iter()
            .map(|m| (1.0 + m.roll_off) * m.symbol_rate)
            .fold(0.0, f64::max);
        (self.channel_count as f64 - 1.0) * self.spacing + widest
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if self.channel_count == 0 || self.per_channel.len() != self.channel_count {
            return Err(Error::Parameter(format!(
                "{} channels but {} modulation specs",
                self.channel_count,
                self.per_channel.len()
            )));
        }
        if self.channel_count.is_multiple_of(2) {
            return Err(Error::Parameter("channel count must be odd so one channel sits on the carrier".into()));
        }
        for m in &self.per_channel {
            m.validate()?;
        }
        if self.channel_count > 1 {
            let widest = self.composite_bandwidth() - (self.channel_count as f64 - 1.0) * self.spacing;
            if widest > self.spacing * (1.0 + 1e-12) {
                return Err(Error::Grid(format!(
                    "channels of {widest:.4e} Hz overlap on a {:.4e} Hz grid",
                    self.spacing
                )));
            }
        }
        if self.composite_bandwidth() > sample_rate {
            return Err(Error::Grid(format!(
                "composite bandwidth {:.4e} Hz exceeds sample rate {sample_rate:.4e}",
                self.composite_bandwidth()
            )));
        }
        Ok(())
    }
}

/// Free-running laser with Lorentzian linewidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaserSpec {
    pub linewidth: f64,
    pub frequency_offset: f64,
    pub prng_seed: u64,
}

impl Default for LaserSpec {
    fn default() -> Self {
        Self { linewidth: 100e3, frequency_offset: 0.0, prng_seed: 0 }
    }
}

/// Known transmitted symbols of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TxFrame {
    pub symbols_x: Vec<C64>,
    pub symbols_y: Vec<C64>,
    pub pilot_mask: Vec<bool>,
    /// Data bits, x polarisation first then y, one bit per byte.
    pub source_bits: Vec<u8>,
    pub qam_order: u32,
}

impl TxFrame {
    pub fn len(&self) -> usize {
        self.symbols_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols_x.is_empty()
    }

    pub fn data_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pilot_mask.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i)
    }

    pub fn pilot_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pilot_mask.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i)
    }
}

fn gray_to_binary(mut g: u32) -> u32 {
    let mut mask = g >> 1;
    while mask != 0 {
        g ^= mask;
        mask >>= 1;
    }
    g
}

fn binary_to_gray(b: u32) -> u32 {
    b ^ (b >> 1)
}

fn side_and_scale(qam_order: u32) -> (u32, u32, f64) {
    let bits_per_axis = qam_order.trailing_zeros() / 2;
    let side = 1u32 << bits_per_axis;
    // average energy of the ±1, ±3, … grid is 2(M−1)/3
    let scale = (2.0 * (qam_order as f64 - 1.0) / 3.0).sqrt();
    (bits_per_axis, side, scale)
}

fn check_order(qam_order: u32) -> Result<()> {
    if !matches!(qam_order, 4 | 16 | 64 | 256) {
        return Err(Error::Parameter(format!("unsupported QAM order {qam_order}")));
    }
    Ok(())
}

/// Gray-mapped square QAM with unit average energy. The first half of each
/// bit group selects the in-phase level, the second half the quadrature level.
pub fn map_qam(bits: &[u8], qam_order: u32) -> Result<Vec<C64>> {
    check_order(qam_order)?;
    let (bpa, side, scale) = side_and_scale(qam_order);
    let group = 2 * bpa as usize;
    if !bits.len().is_multiple_of(group) {
        return Err(Error::Parameter(format!("{} bits not divisible into {group}-bit groups", bits.len())));
    }
    let level = |chunk: &[u8]| {
        let g = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
        (2 * gray_to_binary(g)) as f64 - (side - 1) as f64
    };
    Ok(bits
        .chunks(group)
        .map(|c| C64::new(level(&c[..bpa as usize]), level(&c[bpa as usize..])) / scale)
        .collect())
}

fn slice_level(v: f64, side: u32) -> u32 {
    let idx = ((v + (side - 1) as f64) / 2.0).round();
    idx.clamp(0.0, (side - 1) as f64) as u32
}

/// Nearest constellation point.
pub fn decide(symbol: C64, qam_order: u32) -> C64 {
    let (_, side, scale) = side_and_scale(qam_order);
    let lvl = |v: f64| (2 * slice_level(v * scale, side)) as f64 - (side - 1) as f64;
    C64::new(lvl(symbol.re), lvl(symbol.im)) / scale
}

/// Hard-decision demapping, inverse of [`map_qam`].
pub fn demap_qam(symbols: &[C64], qam_order: u32) -> Result<Vec<u8>> {
    check_order(qam_order)?;
    let (bpa, side, scale) = side_and_scale(qam_order);
    let mut bits = Vec::with_capacity(symbols.len() * 2 * bpa as usize);
    for s in symbols {
        for v in [s.re, s.im] {
            let g = binary_to_gray(slice_level(v * scale, side));
            for b in (0..bpa).rev() {
                bits.push(((g >> b) & 1) as u8);
            }
        }
    }
    Ok(bits)
}

pub fn constellation(qam_order: u32) -> Result<Vec<C64>> {
    check_order(qam_order)?;
    let bps = qam_order.trailing_zeros() as usize;
    let bits: Vec<u8> = (0..qam_order)
        .flat_map(|v| (0..bps).rev().map(move |b| ((v >> b) & 1) as u8))
        .collect();
    map_qam(&bits, qam_order)
}

fn qpsk<R: Rng>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(if rng.random::<bool>() { s } else { -s }, if rng.random::<bool>() { s } else { -s })
}

/// Build a frame: QPSK preamble, then payload with a QPSK pilot at every
/// `pilot_rate_inverse`-th position and QAM data elsewhere.
///
/// Data symbols on each polarisation are a shuffled, balanced draw over the
/// constellation, so every point occurs equally often when the data count is
/// a multiple of the order.
pub fn build_frame(spec: &ModulationSpec) -> Result<TxFrame> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.prng_seed, &[seed::stream::DATA]));
    let n = spec.frame_len();
    let pilot_mask: Vec<bool> = (0..n).map(|i| spec.is_pilot(i)).collect();
    let data_count = pilot_mask.iter().filter(|p| !**p).count();
    let order = spec.qam_order as usize;
    let bps = spec.bits_per_symbol();
    let points = constellation(spec.qam_order)?;

    let mut source_bits = Vec::with_capacity(2 * data_count * bps);
    let mut pols = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut labels: Vec<usize> = (0..data_count).map(|i| i % order).collect();
        labels.shuffle(&mut rng);
        let mut data = labels.into_iter();
        let symbols: Vec<C64> = pilot_mask
            .iter()
            .map(|&p| {
                if p {
                    qpsk(&mut rng)
                } else {
                    let l = data.next().expect("data label count matches mask");
                    source_bits.extend((0..bps).rev().map(|b| ((l >> b) & 1) as u8));
                    points[l]
                }
            })
            .collect();
        pols.push(symbols);
    }
    let symbols_y = pols.pop().unwrap();
    let symbols_x = pols.pop().unwrap();
    Ok(TxFrame { symbols_x, symbols_y, pilot_mask, source_bits, qam_order: spec.qam_order })
}

/// Number of output samples for a frame at `sample_rate`, if integral.
pub(crate) fn samples_for(frame_len: usize, symbol_rate: f64, sample_rate: f64) -> Result<usize> {
    let l = frame_len as f64 * sample_rate / symbol_rate;
    if (l - l.round()).abs() > 1e-6 {
        return Err(Error::Parameter(format!(
            "{frame_len} symbols at {sample_rate:.6e} S/s is not an integer sample count"
        )));
    }
    Ok(l.round() as usize)
}

/// Pulse-shape a frame at `sample_rate` (one period of a periodic waveform).
pub fn modulate_channel(
    frame: &TxFrame,
    spec: &ModulationSpec,
    sample_rate: f64,
    filter: PulseFilter,
) -> Result<DualPolSignal> {
    if sample_rate < (1.0 + spec.roll_off) * spec.symbol_rate {
        return Err(Error::Aliasing(format!(
            "{sample_rate:.4e} S/s below occupied bandwidth {:.4e} Hz",
            (1.0 + spec.roll_off) * spec.symbol_rate
        )));
    }
    let nsym = frame.len();
    let len = samples_for(nsym, spec.symbol_rate, sample_rate)?;
    let response = filter.response(len, sample_rate, spec.symbol_rate, 0.0)?;
    let freqs = fft_freqs(len, sample_rate);
    let df_sym = spec.symbol_rate / nsym as f64;
    let shape = |symbols: &[C64]| {
        let mut s = symbols.to_vec();
        fft(&mut s);
        let mut out: Vec<C64> = freqs
            .iter()
            .zip(&response)
            .map(|(f, h)| {
                if h.norm_sqr() == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let k = (f / df_sym).round() as i64;
                s[k.rem_euclid(nsym as i64) as usize] * h
            })
            .collect();
        // the tiled symbol spectrum is the DFT of the zero-stuffed symbol train
        ifft(&mut out);
        out
    };
    let x = shape(&frame.symbols_x);
    let y = shape(&frame.symbols_y);
    DualPolSignal::new(x, y, sample_rate)
}

/// Multiply by `exp(iφ[n] + i2π·f_off·n/fs)` with `φ` a Wiener process of
/// increment variance `2π·linewidth/fs`, `φ[0] = 0`.
pub fn apply_laser(signal: &DualPolSignal, laser: &LaserSpec) -> Result<DualPolSignal> {
    if laser.linewidth < 0.0 {
        return Err(Error::Parameter(format!("negative linewidth {}", laser.linewidth)));
    }
    if laser.linewidth == 0.0 && laser.frequency_offset == 0.0 {
        return Ok(signal.clone());
    }
    let phase = wiener_phase(signal.len(), signal.sample_rate, laser.linewidth, laser.frequency_offset, laser.prng_seed);
    let mut out = signal.clone();
    for pol in out.pols_mut() {
        pol.iter_mut().zip(&phase).for_each(|(v, p)| *v *= C64::from_polar(1.0, *p));
    }
    Ok(out)
}

pub(crate) fn wiener_phase(len: usize, fs: f64, linewidth: f64, offset: f64, seed_value: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::LASER]));
    let std = (2.0 * PI * linewidth / fs).sqrt();
    let w = 2.0 * PI * offset / fs;
    let mut acc = 0.0;
    (0..len)
        .map(|n| {
            if n > 0 && std > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                acc += std * z;
            }
            acc + w * n as f64
        })
        .collect()
}

/// Resample each channel to `composite_rate`, shift it onto its grid slot and sum.
///
/// Slots must fall on DFT bins of the composite block so the waveform stays periodic.
pub fn mux_superchannel(channels: &[DualPolSignal], spec: &SuperchannelSpec, composite_rate: f64) -> Result<DualPolSignal> {
    if channels.len() != spec.channel_count {
        return Err(Error::Grid(format!("{} waveforms for {} channels", channels.len(), spec.channel_count)));
    }
    spec.validate(composite_rate)?;
    let offsets = spec.channel_offsets();
    let mut out: Option<DualPolSignal> = None;
    for ((ch, off), m) in channels.iter().zip(&offsets).zip(&spec.per_channel) {
        let at_rate = sigkit::resample(ch, composite_rate)?;
        let bin = off * at_rate.len() as f64 / composite_rate;
        if (bin - bin.round()).abs() > 1e-6 {
            return Err(Error::Grid(format!(
                "channel offset {off:.4e} Hz is not on the {:.4e} Hz DFT grid; adjust the frame length",
                composite_rate / at_rate.len() as f64
            )));
        }
        if off.abs() + (1.0 + m.roll_off) * m.symbol_rate / 2.0 > composite_rate / 2.0 {
            return Err(Error::Grid(format!("channel at {off:.4e} Hz falls outside the Nyquist band")));
        }
        let shifted = sigkit::shift_unchecked(&at_rate, *off);
        match out.as_mut() {
            None => {
                let mut s = shifted;
                s.center_offset = 0.0;
                out = Some(s);
            }
            Some(acc) => acc.add(&shifted)?,
        }
    }
    out.ok_or_else(|| Error::Grid("no channels".into()))
}

/// Add white circular Gaussian noise so that signal power over the noise
/// power inside `reference_bandwidth` equals `snr_db`. `+∞` adds nothing.
pub fn apply_awgn(signal: &DualPolSignal, snr_db: f64, reference_bandwidth: f64, seed_value: u64) -> Result<DualPolSignal> {
    if !(reference_bandwidth > 0.0) {
        return Err(Error::Parameter(format!("reference bandwidth {reference_bandwidth} must be positive")));
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!("SNR {snr_db} dB")));
    }
    let psd_per_pol = signal.mean_power() / (sigkit::db_to_lin(snr_db) * reference_bandwidth) / 2.0;
    let mut out = signal.clone();
    let mut rng = seed::rng(seed_value);
    sigkit::add_shaped_noise(&mut out, &mut rng, |_| psd_per_pol);
    Ok(out)
}

/// Transmitter noise of independent per-channel sources, each confined to its
/// DAC band (`awg_bandwidth` centred on the channel) and scaled so that the
/// in-band SNR over the symbol-rate bandwidth is `snr_db` for a channel power
/// of `channel_power`.
pub fn apply_transmitter_noise(
    signal: &DualPolSignal,
    spec: &SuperchannelSpec,
    channel_power: f64,
    snr_db: f64,
    awg_bandwidth: f64,
    seed_value: u64,
) -> Result<DualPolSignal> {
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let rs = spec.per_channel[0].symbol_rate;
    let psd = channel_power / (sigkit::db_to_lin(snr_db) * rs) / 2.0;
    let offsets = spec.channel_offsets();
    let half = awg_bandwidth / 2.0;
    let mut out = signal.clone();
    let mut rng = seed::rng(seed_value);
    sigkit::add_shaped_noise(&mut out, &mut rng, |f| {
        offsets.iter().filter(|&&o| (f - o).abs() <= half).count() as f64 * psd
    });
    Ok(out)
}

/// Frames and composite waveform of a superchannel, each channel at unit power.
pub struct TxOutput {
    pub frames: Vec<TxFrame>,
    pub signal: DualPolSignal,
}

pub fn generate_superchannel(
    spec: &SuperchannelSpec,
    lasers: &[LaserSpec],
    filter: PulseFilter,
    composite_rate: f64,
) -> Result<TxOutput> {
    spec.validate(composite_rate)?;
    if lasers.len() != spec.channel_count {
        return Err(Error::Parameter(format!("{} lasers for {} channels", lasers.len(), spec.channel_count)));
    }
    let mut frames = Vec::with_capacity(spec.channel_count);
    let mut waves = Vec::with_capacity(spec.channel_count);
    for (m, laser) in spec.per_channel.iter().zip(lasers) {
        let frame = build_frame(m)?;
        let wave = modulate_channel(&frame, m, composite_rate, filter)?;
        let wave = sigkit::set_mean_power(&wave, 30.0)?;
        waves.push(apply_laser(&wave, laser)?);
        frames.push(frame);
    }
    let signal = mux_superchannel(&waves, spec, composite_rate)?;
    Ok(TxOutput { frames, signal })
}
