//! Waveform simulation of coherent WDM transmission with digital
//! backpropagation split between transmitter and receiver.
//!
//! Every waveform is one period of a cyclic signal, so filtering, dispersion
//! and resampling are exact whole-block FFT operations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod fiberchannel;
pub mod labharness;
pub mod nlc;
pub mod rxchain;
pub mod seed;
pub mod sigkit;
pub mod txchain;

pub use analytic::{BudgetCoefficients, CalibrationPoint, Crossover, LinkBudget, Scheme};
pub use error::{Error, Result};
pub use labharness::{Experiment, ExperimentConfig, MeasurementRecord};
pub use fiberchannel::{AmpSpec, FiberParams, LinkSpec, SpanSpec, SsfmConfig, StepDistribution};
pub use nlc::NlcPlan;
pub use rxchain::{RxConfig, RxResult, SnrEstimate, TrxNoiseSpec};
pub use sigkit::{DualPolSignal, PulseFilter, RrcSpec, C64};
pub use txchain::{LaserSpec, ModulationSpec, SuperchannelSpec, TxFrame};
