//! Scenario file ingestion: a UTF-8 JSON document describing fibre,
//! channel grid, pumps and link layout, with curve data in side CSVs.

use crate::curves::{AttenuationCurve, RamanGainCurve};
use crate::error::Error;
use crate::plan::{Channel, ChannelPlan, FiberSpec, LinkPlan, Pump, PumpDirection, PumpSet, SpanConfig};
use crate::units::{dbm_to_watt, wavelength_to_frequency, DispersionDs};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberSection {
    pub attenuation_csv: String,
    pub raman_gain_csv: String,
    /// gamma [1/(W km)]
    pub gamma_1_w_km: f64,
    /// D [ps/(nm km)]
    pub d_ps_nm_km: f64,
    /// S [ps/(nm^2 km)]
    pub s_ps_nm2_km: f64,
    #[serde(default = "default_ref_wavelength")]
    pub ref_wavelength_nm: f64,
    pub span_km: f64,
}

fn default_ref_wavelength() -> f64 {
    1550.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelsSection {
    /// Uniform grid shorthand.
    Uniform {
        count: usize,
        spacing_ghz: f64,
        center_nm: f64,
        symbol_rate_gbd: f64,
        power_dbm: f64,
    },
    /// Explicit per-channel list.
    Explicit { explicit: Vec<ExplicitChannel> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitChannel {
    pub wavelength_nm: f64,
    pub symbol_rate_gbd: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PumpEntry {
    pub wavelength_nm: f64,
    pub direction: PumpDirection,
    /// Boundary power [mW]; zero entries are allowed and dropped on load.
    pub power_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSection {
    #[serde(default = "default_spans")]
    pub num_spans: usize,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub pump_interferers: bool,
}

fn default_spans() -> usize {
    1
}

/// The raw on-disk scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub fiber: FiberSection,
    pub channels: ChannelsSection,
    #[serde(default)]
    pub pumps: Vec<PumpEntry>,
    pub link: LinkSection,
}

impl ScenarioFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    /// Build the validated link plan. Curve CSV paths resolve relative to
    /// `base_dir` (normally the scenario file's directory).
    pub fn into_plan(&self, base_dir: &Path) -> Result<LinkPlan> {
        let fiber = self.build_fiber(base_dir)?;
        let channels = self.build_channels()?;
        let pumps = self.build_pumps(&channels)?;

        let span = SpanConfig { fiber, channels, pumps };
        let spans = vec![span; self.link.num_spans.max(1)];
        if self.link.num_spans == 0 {
            return Err(Error::parse("link.num_spans", "must be at least 1"));
        }
        LinkPlan::new(spans, self.link.epsilon, self.link.pump_interferers)
    }

    fn build_fiber(&self, base_dir: &Path) -> Result<FiberSpec> {
        let att_path = base_dir.join(&self.fiber.attenuation_csv);
        let rg_path = base_dir.join(&self.fiber.raman_gain_csv);
        let attenuation = AttenuationCurve::from_csv(&att_path)?;
        let raman_gain = RamanGainCurve::from_csv(&rg_path)?;
        FiberSpec::new(
            attenuation,
            raman_gain,
            self.fiber.gamma_1_w_km / 1e3,
            DispersionDs {
                d: self.fiber.d_ps_nm_km,
                s: self.fiber.s_ps_nm2_km,
                lambda_ref_m: self.fiber.ref_wavelength_nm * 1e-9,
            },
            self.fiber.span_km * 1e3,
        )
    }

    fn build_channels(&self) -> Result<ChannelPlan> {
        let channels = match &self.channels {
            ChannelsSection::Uniform { count, spacing_ghz, center_nm, symbol_rate_gbd, power_dbm } => {
                if *count == 0 {
                    return Err(Error::parse("channels.count", "must be at least 1"));
                }
                let f_center = wavelength_to_frequency(center_nm * 1e-9);
                let spacing = spacing_ghz * 1e9;
                let half = (*count as f64 - 1.0) / 2.0;
                (0..*count)
                    .map(|i| Channel {
                        frequency: f_center + (i as f64 - half) * spacing,
                        bandwidth: symbol_rate_gbd * 1e9,
                        power: dbm_to_watt(*power_dbm),
                    })
                    .collect()
            }
            ChannelsSection::Explicit { explicit } => explicit
                .iter()
                .map(|c| Channel {
                    frequency: wavelength_to_frequency(c.wavelength_nm * 1e-9),
                    bandwidth: c.symbol_rate_gbd * 1e9,
                    power: dbm_to_watt(c.power_dbm),
                })
                .collect(),
        };
        ChannelPlan::new(channels)
    }

    fn build_pumps(&self, channels: &ChannelPlan) -> Result<PumpSet> {
        let mut pumps = Vec::new();
        for (i, p) in self.pumps.iter().enumerate() {
            if p.power_mw < 0.0 {
                return Err(Error::parse(format!("pumps[{i}].power_mw"), "must be non-negative"));
            }
            if p.power_mw == 0.0 {
                continue; // unused comb slot
            }
            pumps.push(Pump {
                frequency: wavelength_to_frequency(p.wavelength_nm * 1e-9),
                direction: p.direction,
                boundary_power: p.power_mw * 1e-3,
            });
        }
        PumpSet::new(pumps, channels)
    }
}

/// Load and validate a scenario file into a `LinkPlan`.
pub fn load_scenario(path: &Path) -> Result<LinkPlan> {
    let file = ScenarioFile::from_path(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    file.into_plan(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn data_dir() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    fn write_scenario(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("scn.json");
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn fiber_section() -> String {
        format!(
            r#""fiber": {{
                "attenuation_csv": "{}/attenuation_g652d.csv",
                "raman_gain_csv": "{}/raman_gain_g652d.csv",
                "gamma_1_w_km": 1.16, "d_ps_nm_km": 16.5, "s_ps_nm2_km": 0.09,
                "ref_wavelength_nm": 1550.0, "span_km": 80.0
            }}"#,
            data_dir().display(),
            data_dir().display()
        )
    }

    #[test]
    fn uniform_grid_loads() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            r#"{{ {fiber},
                "channels": {{"count": 131, "spacing_ghz": 100.0, "center_nm": 1550.0,
                              "symbol_rate_gbd": 96.0, "power_dbm": -4.0}},
                "pumps": [
                    {{"wavelength_nm": 1402.1, "direction": "fw", "power_mw": 150.9}},
                    {{"wavelength_nm": 1456.6, "direction": "fw", "power_mw": 0.0}}
                ],
                "link": {{"num_spans": 1, "epsilon": 0.0, "pump_interferers": false}}
            }}"#,
            fiber = fiber_section()
        );
        let p = write_scenario(dir.path(), &body);
        let plan = load_scenario(&p).unwrap();
        assert_eq!(plan.spans[0].channels.len(), 131);
        // the zero-power comb slot is dropped
        assert_eq!(plan.spans[0].pumps.pumps().len(), 1);
        let ch = plan.spans[0].channels.channels();
        let f_center = wavelength_to_frequency(1550e-9);
        approx::assert_relative_eq!(ch[65].frequency, f_center, max_relative = 1e-14);
        approx::assert_relative_eq!(ch[1].frequency - ch[0].frequency, 100e9, max_relative = 1e-12);
        approx::assert_relative_eq!(ch[0].power, dbm_to_watt(-4.0), max_relative = 1e-14);
    }

    #[test]
    fn zero_pump_single_channel_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            r#"{{ {fiber},
                "channels": {{"explicit": [
                    {{"wavelength_nm": 1550.0, "symbol_rate_gbd": 96.0, "power_dbm": 0.0}}
                ]}},
                "link": {{"num_spans": 1}}
            }}"#,
            fiber = fiber_section()
        );
        let plan = load_scenario(&write_scenario(dir.path(), &body)).unwrap();
        assert_eq!(plan.spans[0].channels.len(), 1);
        assert!(plan.spans[0].pumps.is_empty());
    }

    #[test]
    fn overlapping_grid_is_invariant_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            r#"{{ {fiber},
                "channels": {{"count": 3, "spacing_ghz": 50.0, "center_nm": 1550.0,
                              "symbol_rate_gbd": 96.0, "power_dbm": 0.0}},
                "link": {{"num_spans": 1}}
            }}"#,
            fiber = fiber_section()
        );
        let err = load_scenario(&write_scenario(dir.path(), &body)).unwrap_err();
        assert!(format!("{err}").contains("overlap"), "{err}");
    }

    #[test]
    fn malformed_json_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scenario(dir.path(), "{ not json");
        let err = load_scenario(&p).unwrap_err();
        assert!(matches!(err, Error::ScenarioParse { .. }));
    }

    #[test]
    fn reserialised_scenario_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            r#"{{ {fiber},
                "channels": {{"count": 5, "spacing_ghz": 100.0, "center_nm": 1550.0,
                              "symbol_rate_gbd": 96.0, "power_dbm": -2.0}},
                "pumps": [{{"wavelength_nm": 1430.0, "direction": "bw", "power_mw": 100.0}}],
                "link": {{"num_spans": 3, "epsilon": 0.05, "pump_interferers": false}}
            }}"#,
            fiber = fiber_section()
        );
        let p = write_scenario(dir.path(), &body);
        let file = ScenarioFile::from_path(&p).unwrap();
        let plan1 = file.into_plan(dir.path()).unwrap();
        let p2 = dir.path().join("round.json");
        std::fs::write(&p2, file.to_json()).unwrap();
        let plan2 = load_scenario(&p2).unwrap();
        assert_eq!(plan1, plan2);
    }
}
