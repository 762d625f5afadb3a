//! LoRa time-on-air, duty-cycle holding time and sub-band service rates.
//!
//! `time_on_air` implements the SX127x-family datasheet formula. A frame with
//! time-on-air `T_tx` sent under duty cycle `δ` blocks its sub-band for
//! `T_tx/δ` total, so the sub-band sustains at most `μ = δ/T_tx` frames per
//! second; those two quantities are the inputs to everything in [`crate::queueing`].

use thiserror::Error;

use crate::bandplan::RadioParams;

#[derive(Debug, Error, PartialEq)]
pub enum AirtimeError {
    #[error("spreading factor must be in 7..=12, got {0}")]
    SpreadingFactor(u8),
    #[error("duty cycle must be in (0, 1], got {0}")]
    DutyCycle(f64),
    #[error("time-on-air must be positive, got {0}")]
    TimeOnAir(f64),
}

/// Breakdown of one frame's airtime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirtimeResult {
    /// Duration of one modulation symbol, `2^SF / bandwidth`, seconds.
    pub symbol_time: f64,
    /// Preamble duration including the 4.25-symbol sync overhead, seconds.
    pub preamble_time: f64,
    /// Number of payload symbols (at least 8).
    pub payload_symbols: u32,
    /// Total frame duration `T_tx`, seconds.
    pub time_on_air: f64,
}

/// Time-on-air of one frame.
pub fn time_on_air(radio: &RadioParams) -> Result<AirtimeResult, AirtimeError> {
    let sf = radio.spreading_factor;
    if !(7..=12).contains(&sf) {
        return Err(AirtimeError::SpreadingFactor(sf));
    }
    let sf_f = f64::from(sf);
    let symbol_time = 2f64.powi(i32::from(sf)) / radio.bandwidth_hz;
    let preamble_time = (f64::from(radio.preamble_symbols) + 4.25) * symbol_time;

    let pl_total = f64::from(radio.payload_bytes + radio.overhead_bytes);
    let de = if radio.ldro_active() { 1.0 } else { 0.0 };
    let crc = if radio.crc_on { 1.0 } else { 0.0 };
    let header = if radio.explicit_header { 1.0 } else { 0.0 };
    let numerator = 8.0 * pl_total - 4.0 * sf_f + 28.0 + 16.0 * crc - 20.0 * (1.0 - header);
    let denominator = 4.0 * (sf_f - 2.0 * de);
    let extra = ((numerator / denominator).ceil() * (f64::from(radio.coding_rate) + 4.0)).max(0.0);
    let payload_symbols = 8 + extra as u32;

    let toa = preamble_time + f64::from(payload_symbols) * symbol_time;
    Ok(AirtimeResult {
        symbol_time,
        preamble_time,
        payload_symbols,
        time_on_air: toa,
    })
}

/// Total time a sub-band is blocked by one frame: transmission plus the
/// enforced off-period, `T_tx / δ`.
pub fn holding_time(t_tx: f64, duty_cycle: f64) -> Result<f64, AirtimeError> {
    if !(duty_cycle > 0.0 && duty_cycle <= 1.0) {
        return Err(AirtimeError::DutyCycle(duty_cycle));
    }
    if !(t_tx > 0.0) {
        return Err(AirtimeError::TimeOnAir(t_tx));
    }
    Ok(t_tx / duty_cycle)
}

/// Sustainable frame rate in a sub-band, `δ / T_tx`; the reciprocal of
/// [`holding_time`].
pub fn service_rate(t_tx: f64, duty_cycle: f64) -> Result<f64, AirtimeError> {
    holding_time(t_tx, duty_cycle).map(|h| 1.0 / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::bandplan::Ldro;

    fn radio_sf(sf: u8) -> RadioParams {
        // 50-byte payload + 13-byte overhead, coding-rate index 4, preamble 8
        RadioParams::new(sf, 50, 4)
    }

    #[test]
    fn sf7_symbol_time() {
        let a = time_on_air(&radio_sf(7)).unwrap();
        assert_relative_eq!(a.symbol_time, 0.001024, max_relative = 1e-12);
    }

    // Frozen from a hand evaluation of the datasheet formula:
    // SF12, 125 kHz, 63 bytes total, CR index 4, preamble 8, LDRO on:
    //   t_sym = 4096/125000 = 0.032768 s
    //   n_payload = 8 + ceil(500/40)*8 = 112
    //   T = (8+4.25)*t_sym + 112*t_sym = 4.071424 s
    #[test]
    fn sf12_time_on_air_matches_hand_evaluation() {
        let a = time_on_air(&radio_sf(12)).unwrap();
        assert_eq!(a.payload_symbols, 112);
        assert_relative_eq!(a.time_on_air, 4.071424, max_relative = 1e-12);
        // LDRO auto-activates at SF12/125 kHz
        assert!(radio_sf(12).ldro_active());
    }

    // Same hand evaluation at SF7 (LDRO off): 8 + ceil(520/28)*8 = 160 symbols.
    #[test]
    fn sf7_time_on_air_matches_hand_evaluation() {
        let a = time_on_air(&radio_sf(7)).unwrap();
        assert_eq!(a.payload_symbols, 160);
        assert_relative_eq!(a.time_on_air, 0.176384, max_relative = 1e-12);
    }

    #[test]
    fn sf12_much_slower_than_sf7() {
        let t7 = time_on_air(&radio_sf(7)).unwrap().time_on_air;
        let t12 = time_on_air(&radio_sf(12)).unwrap().time_on_air;
        assert!(t12 > 10.0 * t7);
    }

    #[test]
    fn rejects_sf_out_of_range() {
        let mut r = radio_sf(7);
        r.spreading_factor = 6;
        assert_eq!(time_on_air(&r).unwrap_err(), AirtimeError::SpreadingFactor(6));
        r.spreading_factor = 13;
        assert!(time_on_air(&r).is_err());
    }

    #[test]
    fn ldro_override_changes_airtime() {
        let mut r = radio_sf(12);
        r.low_datarate_optimize = Ldro::Off;
        let off = time_on_air(&r).unwrap();
        r.low_datarate_optimize = Ldro::On;
        let on = time_on_air(&r).unwrap();
        assert!(on.time_on_air > off.time_on_air);
    }

    #[test]
    fn holding_time_examples() {
        assert_relative_eq!(holding_time(1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(holding_time(1.0, 0.01).unwrap(), 100.0);
        assert_relative_eq!(holding_time(2.0, 0.1).unwrap(), 20.0);
        assert!(holding_time(1.0, 0.0).is_err());
        assert!(holding_time(1.0, -0.5).is_err());
    }

    #[test]
    fn service_rate_examples() {
        assert_relative_eq!(service_rate(1.0, 0.01).unwrap(), 0.01);
        // reciprocal identity
        for (t, d) in [(1.0, 0.01), (3.4247, 0.05), (0.1768, 1.0)] {
            let h = holding_time(t, d).unwrap();
            let mu = service_rate(t, d).unwrap();
            assert_relative_eq!(mu * h, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn airtime_increases_with_payload_and_sf() {
        let mut prev = 0.0;
        for payload in [10, 20, 40, 80, 160] {
            let t = time_on_air(&RadioParams::new(9, payload, 1)).unwrap().time_on_air;
            assert!(t > prev);
            prev = t;
        }
        let mut prev = 0.0;
        for sf in 7..=12 {
            let t = time_on_air(&RadioParams::new(sf, 50, 4)).unwrap().time_on_air;
            assert!(t > prev, "SF{sf} not slower than SF{}", sf - 1);
            prev = t;
        }
    }

    #[test]
    fn payload_symbols_never_below_8() {
        // tiny implicit-header frame without CRC bottoms out at the 8-symbol floor
        let r = RadioParams {
            spreading_factor: 12,
            bandwidth_hz: 125_000.0,
            coding_rate: 1,
            preamble_symbols: 8,
            payload_bytes: 0,
            overhead_bytes: 0,
            explicit_header: false,
            crc_on: false,
            low_datarate_optimize: Ldro::Off,
        };
        let a = time_on_air(&r).unwrap();
        assert_eq!(a.payload_symbols, 8);
        assert_relative_eq!(
            a.time_on_air,
            a.preamble_time + 8.0 * a.symbol_time,
            max_relative = 1e-12
        );
    }
}
