//! Physical description of a link: fibre, WDM grid, pumps, spans.

use crate::curves::{AttenuationCurve, RamanGainCurve};
use crate::error::Error;
use crate::units::DispersionDs;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Fibre physics for one span.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FiberSpec {
    pub attenuation: AttenuationCurve,
    pub raman_gain: RamanGainCurve,
    /// Nonlinear parameter gamma [1/(W m)].
    pub gamma: f64,
    /// Group-velocity dispersion [s^2/m].
    pub beta2: f64,
    /// Dispersion slope [s^3/m].
    pub beta3: f64,
    /// Frequency at which beta2/beta3 are referenced [Hz]; phase-mismatch
    /// factors use offsets from this frequency.
    pub f_ref: f64,
    /// Span length [m].
    pub length: f64,
}

impl FiberSpec {
    pub fn new(
        attenuation: AttenuationCurve,
        raman_gain: RamanGainCurve,
        gamma: f64,
        dispersion: DispersionDs,
        length: f64,
    ) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::invariant("span length must be positive"));
        }
        if gamma < 0.0 {
            return Err(Error::invariant("gamma must be non-negative"));
        }
        let (beta2, beta3) = dispersion.to_betas();
        Ok(Self {
            attenuation,
            raman_gain,
            gamma,
            beta2,
            beta3,
            f_ref: crate::units::wavelength_to_frequency(dispersion.lambda_ref_m),
            length,
        })
    }

    /// beta2 + 2 pi beta3 (f - f_ref), the local GVD at frequency f.
    pub fn beta2_eff(&self, f_hz: f64) -> f64 {
        self.beta2 + 2.0 * std::f64::consts::PI * self.beta3 * (f_hz - self.f_ref)
    }
}

/// One WDM channel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Channel {
    /// Centre frequency [Hz].
    pub frequency: f64,
    /// Bandwidth = symbol rate [Hz].
    pub bandwidth: f64,
    /// Launch power [W].
    pub power: f64,
}

/// The WDM grid, sorted by increasing frequency.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChannelPlan {
    channels: Vec<Channel>,
}

impl ChannelPlan {
    pub fn new(mut channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invariant("channel plan must contain at least one channel"));
        }
        channels.sort_by(|a, b| a.frequency.partial_cmp(&b.frequency).unwrap());
        for ch in &channels {
            if !(ch.power > 0.0) || !(ch.bandwidth > 0.0) {
                return Err(Error::invariant("channel powers and bandwidths must be positive"));
            }
        }
        for w in channels.windows(2) {
            let gap = w[1].frequency - w[0].frequency;
            let need = 0.5 * (w[0].bandwidth + w[1].bandwidth);
            if gap < need {
                return Err(Error::invariant(format!(
                    "channels at {:.6e} and {:.6e} Hz overlap: spacing {:.3e} < (B1+B2)/2 = {:.3e}",
                    w[0].frequency, w[1].frequency, gap, need
                )));
            }
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Total launch power [W].
    pub fn total_power(&self) -> f64 {
        self.channels.iter().map(|c| c.power).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpDirection {
    /// Co-propagating: boundary power prescribed at z = 0.
    Fw,
    /// Counter-propagating: boundary power prescribed at z = L.
    Bw,
}

/// One Raman pump.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Pump {
    /// Pump frequency [Hz].
    pub frequency: f64,
    pub direction: PumpDirection,
    /// Power at its launch boundary (z=0 for FW, z=L for BW) [W].
    pub boundary_power: f64,
}

/// The pump comb for one span.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct PumpSet {
    pumps: Vec<Pump>,
}

impl PumpSet {
    pub fn new(pumps: Vec<Pump>, channels: &ChannelPlan) -> Result<Self> {
        for p in &pumps {
            if !(p.boundary_power > 0.0) {
                return Err(Error::invariant("pump boundary powers must be positive"));
            }
            if channels.channels().iter().any(|c| c.frequency == p.frequency) {
                return Err(Error::invariant(format!(
                    "pump at {:.6e} Hz collides with a channel frequency",
                    p.frequency
                )));
            }
        }
        Ok(Self { pumps })
    }

    pub fn empty() -> Self {
        Self { pumps: Vec::new() }
    }

    pub fn pumps(&self) -> &[Pump] {
        &self.pumps
    }

    pub fn forward(&self) -> impl Iterator<Item = &Pump> {
        self.pumps.iter().filter(|p| p.direction == PumpDirection::Fw)
    }

    pub fn backward(&self) -> impl Iterator<Item = &Pump> {
        self.pumps.iter().filter(|p| p.direction == PumpDirection::Bw)
    }

    pub fn has_backward(&self) -> bool {
        self.backward().next().is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.pumps.is_empty()
    }
}

/// Everything needed to solve and evaluate one span.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpanConfig {
    pub fiber: FiberSpec,
    pub channels: ChannelPlan,
    pub pumps: PumpSet,
}

/// An ordered multi-span link.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LinkPlan {
    pub spans: Vec<SpanConfig>,
    /// Coherence exponent for SPM accumulation across spans.
    pub epsilon: f64,
    /// Include pumps as extra XPM interferers in the GN evaluation.
    pub treat_pumps_as_interferers: bool,
}

impl LinkPlan {
    pub fn new(spans: Vec<SpanConfig>, epsilon: f64, treat_pumps_as_interferers: bool) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::invariant("link must contain at least one span"));
        }
        if epsilon < 0.0 {
            return Err(Error::invariant("epsilon must be non-negative"));
        }
        let first = &spans[0].channels;
        for (j, s) in spans.iter().enumerate().skip(1) {
            if s.channels.len() != first.len() {
                return Err(Error::invariant(format!(
                    "span {j} has {} channels, span 0 has {}",
                    s.channels.len(),
                    first.len()
                )));
            }
            for (a, b) in s.channels.channels().iter().zip(first.channels()) {
                if a.frequency != b.frequency {
                    return Err(Error::invariant(format!(
                        "span {j} channel frequencies differ from span 0"
                    )));
                }
            }
        }
        Ok(Self { spans, epsilon, treat_pumps_as_interferers })
    }

    pub fn num_spans(&self) -> usize {
        self.spans.len()
    }
}
