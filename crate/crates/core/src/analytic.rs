//! First-order SNR budget for EDC and backpropagation schemes.
//!
//! Per channel, `1/SNR = 1/SNR_trx + (N·σ²_ase + σ²_nl)/P` with a cubic
//! nonlinear term whose coefficient depends on the scheme:
//!
//! * EDC: `η·N^(1+ε)`
//! * DBP: `ξ·M + ζ·(k/SNR_tx + (N−k)/SNR_rx)`, where `M` is `N` (Rx), `N−1`
//!   (Tx) or `max(k, N−k)` (split), and the `ζ` term is the beating of
//!   transceiver noise with the signal across the spans the noise was never
//!   backpropagated through.
//!
//! `η`, `ξ` and `ζ` are fitted to simulation sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiberchannel::{AmpSpec, SpanSpec};
use crate::sigkit::{db_to_lin, dbm_to_watts, lin_to_db, watts_to_dbm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scheme {
    Edc,
    TxDbp,
    RxDbp,
    Split { tx_spans: usize },
}

impl Scheme {
    /// Scheme for a `k:N−k` backpropagation plan.
    pub fn from_split(total_spans: usize, tx_spans: usize) -> Self {
        if tx_spans == 0 {
            Scheme::RxDbp
        } else if tx_spans >= total_spans {
            Scheme::TxDbp
        } else {
            Scheme::Split { tx_spans }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Edc => "edc",
            Scheme::TxDbp => "tx_dbp",
            Scheme::RxDbp => "rx_dbp",
            Scheme::Split { .. } => "split",
        }
    }

    /// Spans pre-compensated at the transmitter; EDC reports 0.
    pub fn tx_spans(&self, total_spans: usize) -> usize {
        match self {
            Scheme::Edc | Scheme::RxDbp => 0,
            Scheme::TxDbp => total_spans,
            Scheme::Split { tx_spans } => *tx_spans,
        }
    }

    pub fn is_dbp(&self) -> bool {
        !matches!(self, Scheme::Edc)
    }

    /// Effective span count of residual signal-ASE beating.
    pub fn beating_spans(&self, total_spans: usize) -> f64 {
        match self {
            Scheme::Edc => 0.0,
            Scheme::RxDbp => total_spans as f64,
            Scheme::TxDbp => total_spans.saturating_sub(1) as f64,
            Scheme::Split { tx_spans } => (*tx_spans).max(total_spans.saturating_sub(*tx_spans)) as f64,
        }
    }
}

/// Link noise sources independent of the calibrated coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// ASE power per span in one channel's symbol-rate bandwidth, both polarisations (W).
    pub sigma2_ase_per_span: f64,
    pub span_length_km: f64,
    #[serde(with = "crate::rxchain::inf_as_null")]
    pub snr_tx_db: f64,
    #[serde(with = "crate::rxchain::inf_as_null")]
    pub snr_rx_db: f64,
}

impl LinkBudget {
    pub fn from_span(span: &SpanSpec, center_frequency: f64, symbol_rate: f64, snr_tx_db: f64, snr_rx_db: f64) -> Self {
        Self {
            sigma2_ase_per_span: sigma2_ase(&span.amp, center_frequency, symbol_rate),
            span_length_km: span.fiber.length_km,
            snr_tx_db,
            snr_rx_db,
        }
    }

    fn inv_tx(&self) -> f64 {
        1.0 / db_to_lin(self.snr_tx_db)
    }

    fn inv_rx(&self) -> f64 {
        1.0 / db_to_lin(self.snr_rx_db)
    }

    fn inv_trx(&self) -> f64 {
        self.inv_tx() + self.inv_rx()
    }
}

/// ASE of one amplifier inside a symbol-rate bandwidth, both polarisations.
pub fn sigma2_ase(amp: &AmpSpec, center_frequency: f64, symbol_rate: f64) -> f64 {
    2.0 * amp.ase_psd(center_frequency) * symbol_rate
}

/// Fitted nonlinear coefficients (1/W²); `None` until calibrated.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BudgetCoefficients {
    pub eta: Option<f64>,
    pub xi: Option<f64>,
    pub zeta: Option<f64>,
    /// Coherent NLI accumulation exponent.
    #[serde(default)]
    pub epsilon: f64,
}

impl BudgetCoefficients {
    fn get(v: Option<f64>, name: &str) -> Result<f64> {
        match v {
            Some(x) if x.is_finite() && x >= 0.0 => Ok(x),
            Some(x) => Err(Error::Calibration(format!("{name} = {x} is not a valid coefficient"))),
            None => Err(Error::Calibration(format!("{name} is uncalibrated; run a calibration sweep first"))),
        }
    }

    /// Cubic coefficient `c` in `σ²_nl = c·P³` for a scheme at `N` spans.
    pub fn cubic(&self, link: &LinkBudget, spans: usize, scheme: Scheme) -> Result<f64> {
        let n = spans as f64;
        match scheme {
            Scheme::Edc => Ok(Self::get(self.eta, "eta")? * n.powf(1.0 + self.epsilon)),
            _ => {
                let xi = Self::get(self.xi, "xi")?;
                let zeta = self.zeta.map_or(Ok(0.0), |z| Self::get(Some(z), "zeta"))?;
                Ok(xi * scheme.beating_spans(spans) + zeta * trx_beating(link, spans, scheme))
            }
        }
    }
}

/// `k/SNR_tx + (N−k)/SNR_rx` for a DBP scheme.
fn trx_beating(link: &LinkBudget, spans: usize, scheme: Scheme) -> f64 {
    let k = scheme.tx_spans(spans) as f64;
    let rx = spans as f64 - k;
    k * link.inv_tx() + rx * link.inv_rx()
}

/// Predicted SNR (dB) at per-channel launch power `p_dbm`.
pub fn budget_snr(link: &LinkBudget, spans: usize, scheme: Scheme, p_dbm: f64, coeffs: &BudgetCoefficients) -> Result<f64> {
    if let Scheme::Split { tx_spans } = scheme {
        if tx_spans > spans {
            return Err(Error::Plan(format!("split {tx_spans} exceeds {spans} spans")));
        }
    }
    let p = dbm_to_watts(p_dbm);
    let c = coeffs.cubic(link, spans, scheme)?;
    let inv = link.inv_trx() + (spans as f64 * link.sigma2_ase_per_span + c * p.powi(3)) / p;
    Ok(-lin_to_db(inv))
}

/// Maximiser of the budget, `(σ²/(2c))^(1/3)`, in dBm.
pub fn optimal_power(link: &LinkBudget, spans: usize, scheme: Scheme, coeffs: &BudgetCoefficients) -> Result<f64> {
    let c = coeffs.cubic(link, spans, scheme)?;
    let s = spans as f64 * link.sigma2_ase_per_span;
    if c <= 0.0 {
        return Err(Error::Numerical("zero nonlinear coefficient: SNR grows without bound in power".into()));
    }
    if s <= 0.0 {
        return Err(Error::Numerical("no linear noise: optimum power is zero".into()));
    }
    Ok(watts_to_dbm((s / (2.0 * c)).cbrt()))
}

/// Budget SNR at the optimum power.
pub fn optimum_snr(link: &LinkBudget, spans: usize, scheme: Scheme, coeffs: &BudgetCoefficients) -> Result<f64> {
    let p = optimal_power(link, spans, scheme, coeffs)?;
    budget_snr(link, spans, scheme, p, coeffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub spans: usize,
    pub distance_km: f64,
}

pub const CROSSOVER_SEARCH_LIMIT: usize = 200;

/// Smallest span count at which the ASE terms (linear plus beating) at the
/// 50 % split optimum power reach the transceiver noise `P_opt/SNR_trx`.
/// `None` if that does not happen within [`CROSSOVER_SEARCH_LIMIT`] spans.
pub fn crossover_distance(link: &LinkBudget, coeffs: &BudgetCoefficients) -> Result<Option<Crossover>> {
    let inv_trx = link.inv_trx();
    if inv_trx == 0.0 {
        return Ok(Some(Crossover { spans: 0, distance_km: 0.0 }));
    }
    let xi = BudgetCoefficients::get(coeffs.xi, "xi")?;
    for n in 1..=CROSSOVER_SEARCH_LIMIT {
        let scheme = Scheme::from_split(n, n.div_ceil(2));
        let p = dbm_to_watts(optimal_power(link, n, scheme, coeffs)?);
        let ase = n as f64 * link.sigma2_ase_per_span + xi * scheme.beating_spans(n) * p.powi(3);
        if ase >= p * inv_trx {
            return Ok(Some(Crossover { spans: n, distance_km: n as f64 * link.span_length_km }));
        }
    }
    Ok(None)
}

/// One simulated peak or sweep sample used for fitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub scheme: Scheme,
    pub spans: usize,
    pub power_dbm: f64,
    pub snr_db: f64,
}

/// Nonlinear residual `(1/SNR − 1/SNR_trx − N·σ²/P)/P²`, i.e. the measured cubic coefficient.
fn measured_cubic(link: &LinkBudget, p: &CalibrationPoint) -> f64 {
    let pw = dbm_to_watts(p.power_dbm);
    (1.0 / db_to_lin(p.snr_db) - link.inv_trx() - p.spans as f64 * link.sigma2_ase_per_span / pw) / (pw * pw)
}

/// Least-squares fit of `η` (EDC points) and `ξ`, `ζ` (DBP points).
///
/// Each point contributes the equation `measured_cubic = feature·coeff`
/// weighted by `P²`, so points deep in the linear regime, where the cubic
/// residual is mostly estimator noise, carry little weight.
pub fn fit_coefficients(link: &LinkBudget, points: &[CalibrationPoint], epsilon: f64) -> Result<BudgetCoefficients> {
    let mut out = BudgetCoefficients { epsilon, ..Default::default() };

    let edc: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.scheme == Scheme::Edc)
        .map(|p| (dbm_to_watts(p.power_dbm).powi(2), (p.spans as f64).powf(1.0 + epsilon), measured_cubic(link, p)))
        .collect();
    if !edc.is_empty() {
        let (num, den) = edc.iter().fold((0.0, 0.0), |(a, b), (w, x, y)| (a + w * w * x * y, b + w * w * x * x));
        out.eta = Some(positive(num / den, "eta")?);
    }

    let dbp: Vec<(f64, f64, f64, f64)> = points
        .iter()
        .filter(|p| p.scheme.is_dbp())
        .map(|p| {
            (
                dbm_to_watts(p.power_dbm).powi(2),
                p.scheme.beating_spans(p.spans),
                trx_beating(link, p.spans, p.scheme),
                measured_cubic(link, p),
            )
        })
        .collect();
    if !dbp.is_empty() {
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (w, m, t, y) in &dbp {
            let w2 = w * w;
            s11 += w2 * m * m;
            s12 += w2 * m * t;
            s22 += w2 * t * t;
            b1 += w2 * m * y;
            b2 += w2 * t * y;
        }
        let det = s11 * s22 - s12 * s12;
        let (xi, zeta) = if s22 > 0.0 && det.abs() > 1e-12 * s11 * s22 {
            let xi = (b1 * s22 - b2 * s12) / det;
            let zeta = (s11 * b2 - s12 * b1) / det;
            if zeta < 0.0 {
                (b1 / s11, 0.0)
            } else if xi < 0.0 {
                (0.0, b2 / s22)
            } else {
                (xi, zeta)
            }
        } else {
            (b1 / s11, 0.0)
        };
        out.xi = Some(positive(xi, "xi")?);
        out.zeta = Some(zeta.max(0.0));
    }
    Ok(out)
}

fn positive(v: f64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v.max(0.0))
    } else {
        Err(Error::Calibration(format!("{name} fit is not finite; check the calibration sweep")))
    }
}
