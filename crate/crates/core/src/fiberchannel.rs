//! Forward fibre channel: symmetric split-step Fourier integration of the
//! Manakov equation, EDFA gain with ASE loading, and multi-span links.
//!
//! The linear operator for a step of length `h` is
//! `exp(s·(i·β2/2·ω² − α/2)·h)` in the frequency domain and the nonlinear
//! operator rotates both polarisations by `s·γ·κ·(|x|²+|y|²)·h_eff`, where
//! `s = ±1` selects forward propagation or the sign-inverted virtual channel
//! and `κ` is the Manakov factor.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftDirection};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sigkit::{self, db_to_lin, fft_freqs, plan, DualPolSignal, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Fibre coefficients in engineering units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiberParams {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    /// Chromatic dispersion D in ps/(nm·km).
    pub dispersion_d: f64,
    /// Nonlinear coefficient in 1/(W·km).
    pub gamma: f64,
    pub manakov_factor: f64,
    pub reference_wavelength: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        Self {
            length_km: 76.96,
            attenuation_db_per_km: 12.2 / 76.96,
            dispersion_d: 16.7,
            gamma: 1.1,
            manakov_factor: 8.0 / 9.0,
            reference_wavelength: 1553e-9,
        }
    }
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::Parameter(format!("fibre length {} km must be positive", self.length_km)));
        }
        if self.attenuation_db_per_km < 0.0 || self.gamma < 0.0 {
            return Err(Error::Parameter("attenuation and gamma must be non-negative".into()));
        }
        if !(self.reference_wavelength > 0.0) {
            return Err(Error::Parameter("reference wavelength must be positive".into()));
        }
        Ok(())
    }

    /// Group-velocity dispersion β2 in s²/km, `−D·λ²/(2πc)`.
    pub fn beta2(&self) -> f64 {
        let d_si = self.dispersion_d * 1e-6; // s/m²
        -d_si * self.reference_wavelength.powi(2) / (2.0 * PI * SPEED_OF_LIGHT) * 1e3
    }

    /// Power attenuation coefficient in 1/km.
    pub fn alpha(&self) -> f64 {
        self.attenuation_db_per_km * std::f64::consts::LN_10 / 10.0
    }

    pub fn span_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.length_km
    }
}

/// Optical amplifier. A noise figure of `-∞` makes it noiseless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpSpec {
    pub gain_db: f64,
    pub noise_figure_db: f64,
    pub prng_seed: u64,
}

impl AmpSpec {
    /// Spontaneous emission factor `NF·G / (2(G−1))`.
    pub fn n_sp(&self) -> f64 {
        let g = db_to_lin(self.gain_db);
        if g <= 1.0 {
            return 0.0;
        }
        db_to_lin(self.noise_figure_db) * g / (2.0 * (g - 1.0))
    }

    /// One-sided ASE PSD per polarisation (W/Hz) at optical frequency `nu`.
    pub fn ase_psd(&self, nu: f64) -> f64 {
        let g = db_to_lin(self.gain_db);
        if g <= 1.0 {
            return 0.0;
        }
        self.n_sp() * PLANCK * nu * (g - 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanSpec {
    pub fiber: FiberParams,
    pub amp: AmpSpec,
}

impl SpanSpec {
    /// Span whose amplifier exactly compensates the fibre loss.
    pub fn transparent(fiber: FiberParams, noise_figure_db: f64) -> Self {
        Self { fiber, amp: AmpSpec { gain_db: fiber.span_loss_db(), noise_figure_db, prng_seed: 0 } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub spans: Vec<SpanSpec>,
    /// Optical carrier frequency (Hz).
    pub center_frequency: f64,
}

impl LinkSpec {
    pub fn uniform(count: usize, span: SpanSpec) -> Self {
        let center_frequency = SPEED_OF_LIGHT / span.fiber.reference_wavelength;
        Self { spans: vec![span; count], center_frequency }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.spans.first() else {
            return Err(Error::Parameter("link has no spans".into()));
        };
        for s in &self.spans {
            s.fiber.validate()?;
            if s.amp.gain_db < 0.0 {
                return Err(Error::Parameter(format!("negative amplifier gain {}", s.amp.gain_db)));
            }
            if s.fiber.reference_wavelength != first.fiber.reference_wavelength {
                return Err(Error::Parameter("spans disagree on reference wavelength".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn total_length_km(&self) -> f64 {
        self.spans.iter().map(|s| s.fiber.length_km).sum()
    }

    /// Accumulated β2·L in s².
    pub fn total_dispersion(&self) -> f64 {
        self.spans.iter().map(|s| s.fiber.beta2() * s.fiber.length_km).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepDistribution {
    #[default]
    Uniform,
    /// Equal integrated power (hence equal nonlinear phase) per step.
    Logarithmic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsfmConfig {
    pub steps_per_span: usize,
    pub step_distribution: StepDistribution,
}

impl Default for SsfmConfig {
    fn default() -> Self {
        Self { steps_per_span: 1000, step_distribution: StepDistribution::Uniform }
    }
}

impl SsfmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_span == 0 {
            return Err(Error::Parameter("steps_per_span must be at least 1".into()));
        }
        Ok(())
    }

    /// Step lengths (km) through one span, in propagation order.
    pub fn step_lengths(&self, fiber: &FiberParams) -> Vec<f64> {
        let n = self.steps_per_span.max(1);
        let l = fiber.length_km;
        let a = fiber.alpha();
        match self.step_distribution {
            StepDistribution::Uniform => vec![l / n as f64; n],
            StepDistribution::Logarithmic if a * l < 1e-12 => vec![l / n as f64; n],
            StepDistribution::Logarithmic => {
                let delta = (1.0 - (-a * l).exp()) / n as f64;
                let z = |k: usize| -(1.0 - k as f64 * delta).ln() / a;
                let mut steps: Vec<f64> = (1..=n).map(|k| z(k) - z(k - 1)).collect();
                // absorb rounding so the steps sum to the span length
                let sum: f64 = steps.iter().sum();
                if let Some(last) = steps.last_mut() {
                    *last += l - sum;
                }
                steps
            }
        }
    }
}

/// Loss-weighted step length for a nonlinear kick evaluated at the step midpoint:
/// `∫ e^{−α(z−h/2)} dz` over the step.
fn effective_length(alpha: f64, h: f64) -> f64 {
    if alpha * h < 1e-10 {
        h
    } else {
        2.0 * (alpha * h / 2.0).sinh() / alpha
    }
}

/// Reusable FFT plans and frequency grid for one block size.
pub struct Propagator {
    len: usize,
    omega2: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    factor: Vec<C64>,
    cached: Option<(u64, u64, u64, Vec<C64>)>,
}

impl Propagator {
    pub fn new(len: usize, sample_rate: f64) -> Self {
        let forward = plan(len, FftDirection::Forward);
        let inverse = plan(len, FftDirection::Inverse);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let omega2 = fft_freqs(len, sample_rate).into_iter().map(|f| (2.0 * PI * f).powi(2)).collect();
        Self {
            len,
            omega2,
            forward,
            inverse,
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
            factor: vec![C64::new(0.0, 0.0); len],
            cached: None,
        }
    }

    pub fn for_signal(signal: &DualPolSignal) -> Self {
        Self::new(signal.len(), signal.sample_rate)
    }

    fn check(&self, signal: &DualPolSignal) {
        assert_eq!(signal.len(), self.len, "propagator built for a different block length");
    }

    /// Linear factor for length `h` km with the 1/N of the next inverse FFT folded in.
    fn linear_factor(&mut self, fiber: &FiberParams, h: f64, sign: f64) -> &[C64] {
        let key = (h.to_bits(), sign.to_bits(), fiber.beta2().to_bits() ^ fiber.alpha().to_bits().rotate_left(17));
        let hit = matches!(&self.cached, Some((a, b, c, _)) if (*a, *b, *c) == key);
        if hit {
            return &self.cached.as_ref().unwrap().3;
        }
        let b2 = fiber.beta2();
        let a = fiber.alpha();
        let norm = 1.0 / self.len as f64;
        let amp = norm * (-sign * a / 2.0 * h).exp();
        for (f, w2) in self.factor.iter_mut().zip(&self.omega2) {
            *f = C64::from_polar(amp, sign * b2 / 2.0 * w2 * h);
        }
        // keep the most recent full-step factor; uniform grids then reuse it every step
        self.cached = Some((key.0, key.1, key.2, self.factor.clone()));
        &self.cached.as_ref().unwrap().3
    }

    fn apply_linear(&mut self, signal: &mut DualPolSignal, fiber: &FiberParams, h: f64, sign: f64) {
        let factor = self.linear_factor(fiber, h, sign).to_vec();
        for pol in signal.pols_mut() {
            pol.iter_mut().zip(&factor).for_each(|(v, f)| *v *= f);
        }
    }

    fn forward_fft(&mut self, signal: &mut DualPolSignal) {
        let [x, y] = signal.pols_mut();
        self.forward.process_with_scratch(x, &mut self.scratch);
        self.forward.process_with_scratch(y, &mut self.scratch);
    }

    fn inverse_fft(&mut self, signal: &mut DualPolSignal) {
        let [x, y] = signal.pols_mut();
        self.inverse.process_with_scratch(x, &mut self.scratch);
        self.inverse.process_with_scratch(y, &mut self.scratch);
    }

    fn nonlinear(signal: &mut DualPolSignal, fiber: &FiberParams, h: f64, sign: f64) {
        let k = sign * fiber.gamma * fiber.manakov_factor * effective_length(fiber.alpha(), h);
        let (x, y) = (&mut signal.x, &mut signal.y);
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            let phi = k * (a.norm_sqr() + b.norm_sqr());
            let (s, c) = phi.sin_cos();
            let r = C64::new(c, s);
            *a *= r;
            *b *= r;
        }
    }

    /// Symmetric step sequence over `steps` (km); adjacent half linear steps are merged.
    pub fn run(&mut self, signal: &mut DualPolSignal, fiber: &FiberParams, steps: &[f64], sign: f64) {
        self.check(signal);
        if steps.is_empty() {
            return;
        }
        if fiber.gamma == 0.0 {
            let total: f64 = steps.iter().sum();
            self.forward_fft(signal);
            self.apply_linear(signal, fiber, total, sign);
            self.inverse_fft(signal);
            return;
        }
        self.forward_fft(signal);
        self.apply_linear(signal, fiber, steps[0] / 2.0, sign);
        for (i, &h) in steps.iter().enumerate() {
            self.inverse_fft(signal);
            Self::nonlinear(signal, fiber, h, sign);
            self.forward_fft(signal);
            let next = match steps.get(i + 1) {
                Some(&h2) => (h + h2) / 2.0,
                None => h / 2.0,
            };
            self.apply_linear(signal, fiber, next, sign);
        }
        self.inverse_fft(signal);
    }
}

/// One symmetric step: half linear, nonlinear kick, half linear.
pub fn ssfm_step(signal: &DualPolSignal, fiber: &FiberParams, h_km: f64, sign: f64) -> Result<DualPolSignal> {
    if !(h_km > 0.0) {
        return Err(Error::Parameter(format!("step length {h_km} km must be positive")));
    }
    let mut out = signal.clone();
    let mut p = Propagator::for_signal(signal);
    p.forward_fft(&mut out);
    p.apply_linear(&mut out, fiber, h_km / 2.0, sign);
    p.inverse_fft(&mut out);
    Propagator::nonlinear(&mut out, fiber, h_km, sign);
    p.forward_fft(&mut out);
    p.apply_linear(&mut out, fiber, h_km / 2.0, sign);
    p.inverse_fft(&mut out);
    Ok(out)
}

/// Propagate through one fibre. `sign = -1` runs the step grid in reverse with
/// every coefficient negated, exactly undoing a forward pass on the same grid.
pub fn propagate_fiber(signal: &DualPolSignal, fiber: &FiberParams, cfg: &SsfmConfig, sign: f64) -> Result<DualPolSignal> {
    fiber.validate()?;
    cfg.validate()?;
    let mut out = signal.clone();
    let mut p = Propagator::for_signal(signal);
    propagate_fiber_with(&mut p, &mut out, fiber, cfg, sign);
    Ok(out)
}

pub(crate) fn propagate_fiber_with(p: &mut Propagator, signal: &mut DualPolSignal, fiber: &FiberParams, cfg: &SsfmConfig, sign: f64) {
    let mut steps = cfg.step_lengths(fiber);
    if sign < 0.0 {
        steps.reverse();
    }
    p.run(signal, fiber, &steps, sign);
}

/// Gain `√G` on the field plus white ASE of PSD `n_sp·h·ν·(G−1)` per polarisation.
pub fn amplify(signal: &DualPolSignal, amp: &AmpSpec, center_frequency: f64) -> Result<DualPolSignal> {
    if amp.gain_db < 0.0 {
        return Err(Error::Parameter(format!("negative gain {}", amp.gain_db)));
    }
    let mut out = signal.clone();
    if amp.gain_db == 0.0 {
        return Ok(out);
    }
    out.scale(db_to_lin(amp.gain_db).sqrt());
    let psd = amp.ase_psd(center_frequency);
    if psd > 0.0 {
        let mut rng = seed::rng(amp.prng_seed);
        sigkit::add_shaped_noise(&mut out, &mut rng, |_| psd);
    }
    Ok(out)
}

/// Span-by-span fibre propagation followed by amplification. Amplifier seeds
/// are derived from `(seed, span index)`.
pub fn propagate_link(signal: &DualPolSignal, link: &LinkSpec, cfg: &SsfmConfig, seed_value: u64) -> Result<DualPolSignal> {
    link.validate()?;
    cfg.validate()?;
    let mut out = signal.clone();
    let mut p = Propagator::for_signal(signal);
    for (i, span) in link.spans.iter().enumerate() {
        propagate_fiber_with(&mut p, &mut out, &span.fiber, cfg, 1.0);
        let amp = AmpSpec { prng_seed: seed::derive(seed_value, &[seed::stream::ASE, i as u64]), ..span.amp };
        out = amplify(&out, &amp, link.center_frequency)?;
    }
    Ok(out)
}

/// Closed-form linear response of a link (dispersion and net gain/loss only).
pub fn linear_transfer(signal: &DualPolSignal, beta2_total: f64, net_gain_db: f64) -> DualPolSignal {
    let amp = db_to_lin(net_gain_db).sqrt();
    let resp: Vec<C64> = fft_freqs(signal.len(), signal.sample_rate)
        .into_iter()
        .map(|f| C64::from_polar(amp, beta2_total / 2.0 * (2.0 * PI * f).powi(2)))
        .collect();
    let mut out = signal.clone();
    out.filter_response(&resp);
    out
}
