//! Digital backpropagation, split planning and the EDC baseline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiberchannel::{propagate_fiber_with, LinkSpec, Propagator, SpanSpec, SsfmConfig};
use crate::sigkit::{self, db_to_lin, fft_freqs, DualPolSignal, C64};

/// Division of the link between transmitter pre-distortion (the first
/// `tx_spans`) and receiver backpropagation (the remaining `rx_spans`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlcPlan {
    pub total_spans: usize,
    pub tx_spans: usize,
    pub rx_spans: usize,
    pub ssfm: SsfmConfig,
}

impl NlcPlan {
    pub fn validate(&self) -> Result<()> {
        if self.tx_spans > self.total_spans || self.tx_spans + self.rx_spans != self.total_spans {
            return Err(Error::Plan(format!(
                "{}:{} does not split {} spans",
                self.tx_spans, self.rx_spans, self.total_spans
            )));
        }
        self.ssfm.validate()
    }

    fn check_link(&self, link: &LinkSpec) -> Result<()> {
        self.validate()?;
        if link.len() != self.total_spans {
            return Err(Error::Plan(format!("plan covers {} spans, link has {}", self.total_spans, link.len())));
        }
        Ok(())
    }
}

/// `k:N−k` plan.
pub fn plan_split(total_spans: usize, tx_spans: usize, ssfm: SsfmConfig) -> Result<NlcPlan> {
    let plan = NlcPlan { total_spans, tx_spans, rx_spans: total_spans.saturating_sub(tx_spans), ssfm };
    plan.validate()?;
    Ok(plan)
}

/// Transmitter share `round(fraction·N)`, halves rounded up.
pub fn split_tx_spans(total_spans: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Plan(format!("split fraction {fraction} outside [0, 1]")));
    }
    Ok((fraction * total_spans as f64 + 0.5).floor() as usize)
}

/// Backpropagate through `spans`, last span first: undo the amplifier gain,
/// then run the sign-inverted fibre on the forward step grid.
pub fn dbp(signal: &DualPolSignal, spans: &[SpanSpec], cfg: &SsfmConfig) -> Result<DualPolSignal> {
    cfg.validate()?;
    let mut out = signal.clone();
    if spans.is_empty() {
        return Ok(out);
    }
    check_bandwidth(signal)?;
    let mut p = Propagator::for_signal(signal);
    for span in spans.iter().rev() {
        span.fiber.validate()?;
        out.scale(1.0 / db_to_lin(span.amp.gain_db).sqrt());
        propagate_fiber_with(&mut p, &mut out, &span.fiber, cfg, -1.0);
    }
    Ok(out)
}

/// Backpropagation broadens the field only through nonlinearity; a signal
/// already filling the whole Nyquist band has nowhere to grow.
fn check_bandwidth(signal: &DualPolSignal) -> Result<()> {
    let bw = signal.occupied_bandwidth(0.99);
    if bw > 0.95 * signal.sample_rate {
        return Err(Error::Aliasing(format!(
            "signal occupies {bw:.4e} Hz of a {:.4e} Hz grid; no room for backpropagation",
            signal.sample_rate
        )));
    }
    Ok(())
}

/// Pre-distort for the first `k` spans and restore the mean launch power.
pub fn precompensate(signal: &DualPolSignal, link: &LinkSpec, plan: &NlcPlan) -> Result<DualPolSignal> {
    plan.check_link(link)?;
    if plan.tx_spans == 0 {
        return Ok(signal.clone());
    }
    let target = signal.power_dbm();
    let out = dbp(signal, &link.spans[..plan.tx_spans], &plan.ssfm)?;
    sigkit::set_mean_power(&out, target)
}

/// Backpropagate the last `N−k` spans.
pub fn postcompensate(signal: &DualPolSignal, link: &LinkSpec, plan: &NlcPlan) -> Result<DualPolSignal> {
    plan.check_link(link)?;
    dbp(signal, &link.spans[plan.tx_spans..], &plan.ssfm)
}

/// All-pass removal of the link's accumulated dispersion.
pub fn edc(signal: &DualPolSignal, link: &LinkSpec) -> Result<DualPolSignal> {
    let b2l = link.total_dispersion();
    let mut out = signal.clone();
    if b2l == 0.0 {
        return Ok(out);
    }
    let resp: Vec<C64> = fft_freqs(signal.len(), signal.sample_rate)
        .into_iter()
        .map(|f| C64::from_polar(1.0, -b2l / 2.0 * (2.0 * PI * f).powi(2)))
        .collect();
    out.filter_response(&resp);
    Ok(out)
}
