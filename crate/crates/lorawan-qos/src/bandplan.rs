//! Sub-band, radio and traffic configuration plus scenario-file handling.
//!
//! A scenario file is one TOML document describing the band plan, the radio
//! parameters and the traffic model, so a whole experiment is a single
//! artifact. See `scenarios/` in the repository root for ready-made files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spreading factors supported by the models, in column order SF7..SF12.
pub const SPREADING_FACTORS: [u8; 6] = [7, 8, 9, 10, 11, 12];

/// Number of spreading-factor columns used by mixes and load matrices.
pub const NUM_SF: usize = 6;

/// Column index for a spreading factor (SF7 → 0, …, SF12 → 5).
pub fn sf_index(sf: u8) -> Option<usize> {
    if (7..=12).contains(&sf) {
        Some(usize::from(sf) - 7)
    } else {
        None
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    /// TOML syntax errors; the inner error carries line/column information.
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

/// One regulatory sub-band: `n_channels` channels sharing a duty-cycle limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBand {
    /// 1-based index within the plan.
    pub id: u8,
    pub name: String,
    pub n_channels: u32,
    /// Fraction of time the device may transmit in this sub-band, in (0, 1].
    pub duty_cycle: f64,
}

/// An ordered, validated list of sub-bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    sub_bands: Vec<SubBand>,
}

impl BandPlan {
    pub fn new(sub_bands: Vec<SubBand>) -> Result<Self, ScenarioError> {
        if sub_bands.is_empty() {
            return Err(invalid("band plan must contain at least one sub-band"));
        }
        for (i, sb) in sub_bands.iter().enumerate() {
            if usize::from(sb.id) != i + 1 {
                return Err(invalid(format!(
                    "sub-band ids must be contiguous from 1; got id {} at position {}",
                    sb.id,
                    i + 1
                )));
            }
            if sb.n_channels < 1 {
                return Err(invalid(format!("sub-band {}: n_channels must be >= 1", sb.name)));
            }
            if !(sb.duty_cycle > 0.0 && sb.duty_cycle <= 1.0) {
                return Err(invalid(format!(
                    "sub-band {}: duty_cycle must be in (0, 1], got {}",
                    sb.name, sb.duty_cycle
                )));
            }
            if sb.name.is_empty()
                || !sb.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(invalid(format!(
                    "sub-band name {:?} must be a short label of [A-Za-z0-9_-]",
                    sb.name
                )));
            }
        }
        let mut names: Vec<&str> = sub_bands.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != sub_bands.len() {
            return Err(invalid("sub-band names must be unique"));
        }
        Ok(Self { sub_bands })
    }

    /// Build a plan from `(name, channels, duty_cycle)` triples, assigning ids in order.
    pub fn from_parts(parts: &[(&str, u32, f64)]) -> Result<Self, ScenarioError> {
        let sub_bands = parts
            .iter()
            .enumerate()
            .map(|(i, (name, n, dc))| SubBand {
                id: (i + 1) as u8,
                name: (*name).to_string(),
                n_channels: *n,
                duty_cycle: *dc,
            })
            .collect();
        Self::new(sub_bands)
    }

    pub fn sub_bands(&self) -> &[SubBand] {
        &self.sub_bands
    }

    pub fn len(&self) -> usize {
        self.sub_bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_bands.is_empty()
    }

    pub fn total_channels(&self) -> u32 {
        self.sub_bands.iter().map(|s| s.n_channels).sum()
    }

    pub fn total_duty_cycle(&self) -> f64 {
        self.sub_bands.iter().map(|s| s.duty_cycle).sum()
    }

    /// Restrict the plan to the named sub-bands, keeping plan order and
    /// renumbering ids from 1.
    pub fn select(&self, names: &[&str]) -> Result<Self, ScenarioError> {
        for want in names {
            if !self.sub_bands.iter().any(|s| s.name == *want) {
                return Err(invalid(format!("unknown sub-band {want:?}")));
            }
        }
        let picked: Vec<SubBand> = self
            .sub_bands
            .iter()
            .filter(|s| names.contains(&s.name.as_str()))
            .enumerate()
            .map(|(i, s)| SubBand { id: (i + 1) as u8, ..s.clone() })
            .collect();
        Self::new(picked)
    }

    /// Short label for the combination, e.g. `"G+G1"`.
    pub fn label(&self) -> String {
        let names: Vec<&str> = self.sub_bands.iter().map(|s| s.name.as_str()).collect();
        names.join("+")
    }
}

/// The EU 863-870 MHz plan used throughout the numerical evaluations.
///
/// G (15 ch, 1 %), G1 (3 ch, 1 %) and G4 (1 ch, 10 %) follow the usual EU868
/// deployment. The channel counts of G2 and G3 are defaults derived from the
/// ETSI EN 300 220 sub-band widths at 125 kHz spacing; override them in a
/// scenario file if your deployment differs.
pub fn eu868_default() -> BandPlan {
    BandPlan::from_parts(&[
        ("G", 15, 0.01),
        ("G1", 3, 0.01),
        ("G2", 3, 0.001),
        ("G3", 1, 0.01),
        ("G4", 1, 0.1),
    ])
    .expect("EU868 defaults are valid")
}

/// Low-data-rate-optimization setting for the LoRa modem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ldro {
    /// On for SF11/SF12 at 125 kHz, matching reference firmware.
    #[default]
    Auto,
    On,
    Off,
}

/// LoRa modulation and framing parameters that determine time-on-air.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    /// Spreading factor, 7..=12.
    pub spreading_factor: u8,
    pub bandwidth_hz: f64,
    /// Coding-rate index 1..=4; the code rate is 4/(4+index).
    pub coding_rate: u8,
    pub preamble_symbols: u32,
    pub payload_bytes: u32,
    /// Protocol overhead added to every frame (13 bytes for a plain uplink).
    pub overhead_bytes: u32,
    pub explicit_header: bool,
    pub crc_on: bool,
    pub low_datarate_optimize: Ldro,
}

impl RadioParams {
    pub const DEFAULT_BANDWIDTH_HZ: f64 = 125_000.0;
    pub const DEFAULT_PREAMBLE_SYMBOLS: u32 = 8;
    pub const DEFAULT_OVERHEAD_BYTES: u32 = 13;

    pub fn new(spreading_factor: u8, payload_bytes: u32, coding_rate: u8) -> Self {
        Self {
            spreading_factor,
            bandwidth_hz: Self::DEFAULT_BANDWIDTH_HZ,
            coding_rate,
            preamble_symbols: Self::DEFAULT_PREAMBLE_SYMBOLS,
            payload_bytes,
            overhead_bytes: Self::DEFAULT_OVERHEAD_BYTES,
            explicit_header: true,
            crc_on: true,
            low_datarate_optimize: Ldro::Auto,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(7..=12).contains(&self.spreading_factor) {
            return Err(invalid(format!(
                "spreading_factor must be in 7..=12, got {}",
                self.spreading_factor
            )));
        }
        if !(1..=4).contains(&self.coding_rate) {
            return Err(invalid(format!("coding_rate must be in 1..=4, got {}", self.coding_rate)));
        }
        if self.preamble_symbols < 1 {
            return Err(invalid("preamble_symbols must be >= 1"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(invalid("bandwidth_hz must be positive"));
        }
        Ok(())
    }

    /// Whether low-data-rate optimization is active for these parameters.
    pub fn ldro_active(&self) -> bool {
        match self.low_datarate_optimize {
            Ldro::On => true,
            Ldro::Off => false,
            Ldro::Auto => self.spreading_factor >= 11 && self.bandwidth_hz <= 125_000.0,
        }
    }
}

/// Packet generation and device-population parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    /// Packet generation rate per device, 1/s.
    pub lambda_per_device: f64,
    pub devices: u32,
    /// One probability row per sub-band over SF7..SF12.
    pub sf_mix: Vec<[f64; NUM_SF]>,
    /// Device-level cap on total airtime, in (0, 1]; 1.0 disables the shaper.
    pub aggregated_duty_cycle: f64,
}

impl TrafficModel {
    /// All devices on `sf`, one row per sub-band of `plan`.
    pub fn single_sf(plan: &BandPlan, sf: u8, lambda_per_device: f64, devices: u32) -> Self {
        let mut row = [0.0; NUM_SF];
        row[sf_index(sf).expect("sf in 7..=12")] = 1.0;
        Self {
            lambda_per_device,
            devices,
            sf_mix: vec![row; plan.len()],
            aggregated_duty_cycle: 1.0,
        }
    }

    pub fn validate(&self, plan: &BandPlan) -> Result<(), ScenarioError> {
        if !(self.lambda_per_device >= 0.0) {
            return Err(invalid("lambda_per_device must be >= 0"));
        }
        if self.devices < 1 {
            return Err(invalid("devices must be >= 1"));
        }
        if !(self.aggregated_duty_cycle > 0.0 && self.aggregated_duty_cycle <= 1.0) {
            return Err(invalid(format!(
                "aggregated_duty_cycle must be in (0, 1], got {} (0 disables the device entirely)",
                self.aggregated_duty_cycle
            )));
        }
        if self.sf_mix.len() != plan.len() {
            return Err(invalid(format!(
                "sf_mix must have one row per sub-band: got {} rows for {} sub-bands",
                self.sf_mix.len(),
                plan.len()
            )));
        }
        for (i, row) in self.sf_mix.iter().enumerate() {
            if row.iter().any(|p| *p < 0.0) {
                return Err(invalid(format!("sf_mix row {} has a negative entry", i + 1)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "sf_mix row {} must sum to 1 within 1e-9, got {sum}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// A complete experiment description: plan, radio and traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plan: BandPlan,
    pub radio: RadioParams,
    pub traffic: TrafficModel,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.radio.validate()?;
        self.traffic.validate(&self.plan)
    }
}

// --- TOML schema -----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(rename = "subband")]
    subbands: Vec<SubBandFile>,
    radio: RadioFile,
    #[serde(default)]
    traffic: Option<TrafficFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubBandFile {
    name: String,
    channels: u32,
    duty_cycle: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RadioFile {
    sf: u8,
    payload_bytes: u32,
    coding_rate: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preamble_symbols: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    overhead_bytes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explicit_header: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crc: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low_dr_optimize: Option<Ldro>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct TrafficFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda_per_device: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    devices: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aggregated_duty_cycle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sf_mix: Option<Vec<Vec<f64>>>,
}

/// Parse and validate a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)?;

    let sub_bands = file
        .subbands
        .iter()
        .enumerate()
        .map(|(i, s)| SubBand {
            id: (i + 1) as u8,
            name: s.name.clone(),
            n_channels: s.channels,
            duty_cycle: s.duty_cycle,
        })
        .collect();
    let plan = BandPlan::new(sub_bands)?;

    let radio = RadioParams {
        spreading_factor: file.radio.sf,
        bandwidth_hz: file.radio.bandwidth_hz.unwrap_or(RadioParams::DEFAULT_BANDWIDTH_HZ),
        coding_rate: file.radio.coding_rate,
        preamble_symbols: file
            .radio
            .preamble_symbols
            .unwrap_or(RadioParams::DEFAULT_PREAMBLE_SYMBOLS),
        payload_bytes: file.radio.payload_bytes,
        overhead_bytes: file.radio.overhead_bytes.unwrap_or(RadioParams::DEFAULT_OVERHEAD_BYTES),
        explicit_header: file.radio.explicit_header.unwrap_or(true),
        crc_on: file.radio.crc.unwrap_or(true),
        low_datarate_optimize: file.radio.low_dr_optimize.unwrap_or_default(),
    };
    radio.validate()?;

    let tf = file.traffic.unwrap_or_default();
    let sf_mix = match tf.sf_mix {
        Some(rows) => {
            let mut mix = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                if row.len() != NUM_SF {
                    return Err(invalid(format!(
                        "sf_mix row {} must have {NUM_SF} entries (SF7..SF12), got {}",
                        i + 1,
                        row.len()
                    )));
                }
                let mut arr = [0.0; NUM_SF];
                arr.copy_from_slice(row);
                mix.push(arr);
            }
            mix
        }
        None => {
            // Default: every device uses the scenario's spreading factor.
            let idx = sf_index(radio.spreading_factor)
                .ok_or_else(|| invalid("spreading_factor out of range"))?;
            let mut row = [0.0; NUM_SF];
            row[idx] = 1.0;
            vec![row; plan.len()]
        }
    };
    let traffic = TrafficModel {
        lambda_per_device: tf.lambda_per_device.unwrap_or(0.0),
        devices: tf.devices.unwrap_or(1),
        sf_mix,
        aggregated_duty_cycle: tf.aggregated_duty_cycle.unwrap_or(1.0),
    };
    traffic.validate(&plan)?;

    Ok(Scenario { plan, radio, traffic })
}

/// Load and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Serialize a scenario to TOML with every field spelled out, so that
/// `parse_scenario(write_scenario(s)) == s`.
pub fn write_scenario(scenario: &Scenario) -> String {
    let file = ScenarioFile {
        subbands: scenario
            .plan
            .sub_bands()
            .iter()
            .map(|s| SubBandFile {
                name: s.name.clone(),
                channels: s.n_channels,
                duty_cycle: s.duty_cycle,
            })
            .collect(),
        radio: RadioFile {
            sf: scenario.radio.spreading_factor,
            payload_bytes: scenario.radio.payload_bytes,
            coding_rate: scenario.radio.coding_rate,
            bandwidth_hz: Some(scenario.radio.bandwidth_hz),
            preamble_symbols: Some(scenario.radio.preamble_symbols),
            overhead_bytes: Some(scenario.radio.overhead_bytes),
            explicit_header: Some(scenario.radio.explicit_header),
            crc: Some(scenario.radio.crc_on),
            low_dr_optimize: Some(scenario.radio.low_datarate_optimize),
        },
        traffic: Some(TrafficFile {
            lambda_per_device: Some(scenario.traffic.lambda_per_device),
            devices: Some(scenario.traffic.devices),
            aggregated_duty_cycle: Some(scenario.traffic.aggregated_duty_cycle),
            sf_mix: Some(scenario.traffic.sf_mix.iter().map(|r| r.to_vec()).collect()),
        }),
    };
    toml::to_string(&file).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_applies_defaults() {
        let s = parse_scenario(
            r#"
            [[subband]]
            name = "G"
            channels = 1
            duty_cycle = 1.0

            [radio]
            sf = 7
            payload_bytes = 10
            coding_rate = 1
            "#,
        )
        .unwrap();
        assert_eq!(s.plan.len(), 1);
        assert_eq!(s.plan.sub_bands()[0].n_channels, 1);
        assert_eq!(s.plan.sub_bands()[0].duty_cycle, 1.0);
        assert_eq!(s.radio.bandwidth_hz, 125_000.0);
        assert_eq!(s.radio.preamble_symbols, 8);
        assert_eq!(s.radio.overhead_bytes, 13);
        assert!(s.radio.explicit_header);
        assert!(s.radio.crc_on);
        assert_eq!(s.radio.low_datarate_optimize, Ldro::Auto);
        assert_eq!(s.traffic.devices, 1);
        assert_eq!(s.traffic.aggregated_duty_cycle, 1.0);
        // default mix concentrates on the scenario SF
        assert_eq!(s.traffic.sf_mix[0][0], 1.0);
    }

    #[test]
    fn zero_duty_cycle_is_rejected() {
        let err = parse_scenario(
            r#"
            [[subband]]
            name = "G"
            channels = 1
            duty_cycle = 0.0

            [radio]
            sf = 7
            payload_bytes = 10
            coding_rate = 1
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(ref m) if m.contains("duty_cycle")));
    }

    #[test]
    fn parse_error_carries_location() {
        let err = parse_scenario("[[subband]\nname=\"G\"").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("parse error"), "{msg}");
    }

    #[test]
    fn bad_sf_mix_row_sum_is_rejected() {
        let err = parse_scenario(
            r#"
            [[subband]]
            name = "G"
            channels = 1
            duty_cycle = 0.5

            [radio]
            sf = 7
            payload_bytes = 10
            coding_rate = 1

            [traffic]
            sf_mix = [[0.5, 0, 0, 0, 0, 0.4]]
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(ref m) if m.contains("sum to 1")));
    }

    #[test]
    fn eu868_matches_quoted_structure() {
        let plan = eu868_default();
        let g = &plan.sub_bands()[0];
        assert_eq!((g.name.as_str(), g.n_channels, g.duty_cycle), ("G", 15, 0.01));
        let g1 = &plan.sub_bands()[1];
        assert_eq!((g1.name.as_str(), g1.n_channels, g1.duty_cycle), ("G1", 3, 0.01));
        // G and G1 share the duty cycle, so their sum is 0.02.
        assert_eq!(g.duty_cycle + g1.duty_cycle, 0.02);
        // G4 has the single channel and the highest duty cycle.
        let g4 = &plan.sub_bands()[4];
        assert_eq!((g4.name.as_str(), g4.n_channels), ("G4", 1));
        assert!(plan.sub_bands().iter().all(|s| s.duty_cycle <= g4.duty_cycle));
        // G2 has the lowest duty cycle.
        let g2 = &plan.sub_bands()[2];
        assert!(plan.sub_bands().iter().all(|s| s.duty_cycle >= g2.duty_cycle));
        assert_eq!(plan.total_channels(), 23);
        // stable across calls
        assert_eq!(plan, eu868_default());
    }

    #[test]
    fn select_renumbers_ids() {
        let plan = eu868_default().select(&["G", "G2"]).unwrap();
        assert_eq!(plan.label(), "G+G2");
        assert_eq!(plan.sub_bands()[0].id, 1);
        assert_eq!(plan.sub_bands()[1].id, 2);
        assert_eq!(plan.sub_bands()[1].duty_cycle, 0.001);
        assert!(eu868_default().select(&["nope"]).is_err());
    }

    #[test]
    fn scenario_roundtrip() {
        let plan = eu868_default().select(&["G", "G1"]).unwrap();
        let radio = RadioParams::new(12, 50, 4);
        let traffic = TrafficModel::single_sf(&plan, 12, 1e-3, 100);
        let scenario = Scenario { plan, radio, traffic };
        let text = write_scenario(&scenario);
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back, scenario);
    }
}
