//! End-to-end analytic evaluation of a scenario over arrival rates.
//!
//! For each per-device generation rate `λ` the pipeline is:
//!
//! 1. frame duration `T_tx` from the radio parameters (or an override),
//! 2. the M/D/1 shaper capacity from the aggregated duty cycle and the
//!    receive-window lockout caps the rate: `λ_eff = min(λ, capacity)`,
//! 3. the sub-band chain is solved at `λ_eff` for waiting times, latencies
//!    and service ratios,
//! 4. the service ratios spread the population's traffic over channels and
//!    give per-(band, SF) loads and collision probabilities.
//!
//! Beyond the shaper capacity every output is constant in `λ`, which is
//! exactly the freezing effect of aggregated duty cycling; the shaper's own
//! queueing delay is not part of the reported latency (it diverges at the
//! capacity), it is available separately through [`crate::queueing::md1_wait`].

use thiserror::Error;

use crate::airtime::{self, AirtimeError};
use crate::bandplan::{Scenario, ScenarioError, NUM_SF, SPREADING_FACTORS};
use crate::collision::{self, CollisionFormula, LoadMatrix};
use crate::queueing::{
    self, PerfReport, QueueingError, QueueSpec, WaitingFormula, DEFAULT_QUEUE_TRUNCATION,
    DEFAULT_RX_LOCKOUT_S,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Airtime(#[from] AirtimeError),
    #[error(transparent)]
    Queueing(#[from] QueueingError),
}

/// Knobs of the analytic pipeline.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub waiting_formula: WaitingFormula,
    pub collision_formula: CollisionFormula,
    /// Fixed frame duration replacing the computed time-on-air (all SFs).
    pub t_tx_override_s: Option<f64>,
    pub queue_truncation: usize,
    /// Per-packet receive-window lockout feeding the shaper capacity.
    pub rx_lockout_total: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            waiting_formula: WaitingFormula::default(),
            collision_formula: CollisionFormula::default(),
            t_tx_override_s: None,
            queue_truncation: DEFAULT_QUEUE_TRUNCATION,
            rx_lockout_total: DEFAULT_RX_LOCKOUT_S,
        }
    }
}

/// Analytic outputs for one arrival rate.
#[derive(Debug, Clone)]
pub struct PointAnalysis {
    /// Requested per-device generation rate.
    pub lambda: f64,
    /// Rate after the shaper cap; what the sub-band queue actually sees.
    pub lambda_effective: f64,
    pub shaper_capacity: f64,
    /// Frame duration at the scenario's spreading factor, seconds.
    pub t_tx_s: f64,
    pub perf: PerfReport,
    pub loads: LoadMatrix,
    /// Collision probability per (band, SF7..SF12).
    pub collision_probability: Vec<[f64; NUM_SF]>,
}

/// Evaluate the full analytic pipeline at one arrival rate.
pub fn analyze_point(
    scenario: &Scenario,
    lambda: f64,
    opts: &AnalysisOptions,
) -> Result<PointAnalysis, AnalysisError> {
    scenario.validate()?;
    if !(lambda >= 0.0) {
        return Err(QueueingError::Argument(format!("lambda must be >= 0, got {lambda}")).into());
    }

    // Frame duration per spreading factor; the override pins all of them.
    let mut t_tx_by_sf = [0.0f64; NUM_SF];
    for (idx, sf) in SPREADING_FACTORS.iter().enumerate() {
        t_tx_by_sf[idx] = match opts.t_tx_override_s {
            Some(t) => t,
            None => {
                let radio = crate::bandplan::RadioParams {
                    spreading_factor: *sf,
                    ..scenario.radio.clone()
                };
                airtime::time_on_air(&radio)?.time_on_air
            }
        };
    }
    let t_tx = t_tx_by_sf[usize::from(scenario.radio.spreading_factor) - 7];

    let capacity = queueing::shaper_capacity(
        scenario.traffic.aggregated_duty_cycle,
        t_tx,
        opts.rx_lockout_total,
    )?;
    let lambda_effective = queueing::shape_arrivals(lambda, capacity);

    let plan = &scenario.plan;
    let service_rates: Vec<f64> = plan
        .sub_bands()
        .iter()
        .map(|s| airtime::service_rate(t_tx, s.duty_cycle))
        .collect::<Result<_, _>>()?;
    let weights: Vec<u32> = plan.sub_bands().iter().map(|s| s.n_channels).collect();
    let spec = QueueSpec {
        service_rates,
        selection_weights: weights.clone(),
        arrival_rate: lambda_effective,
        queue_truncation: opts.queue_truncation,
    };
    let t_tx_per_band = vec![t_tx; plan.len()];
    let perf = queueing::performance_report(&spec, &t_tx_per_band, opts.waiting_formula)?;

    let loads = collision::offered_load(
        lambda_effective,
        &perf.service_ratios,
        &t_tx_by_sf,
        scenario.traffic.devices,
        &scenario.traffic.sf_mix,
        &weights,
    );
    let collision_probability: Vec<[f64; NUM_SF]> = loads
        .rows()
        .iter()
        .map(|row| {
            let mut out = [0.0; NUM_SF];
            for (j, load) in row.iter().enumerate() {
                out[j] = collision::collision_probability_with(*load, opts.collision_formula);
            }
            out
        })
        .collect();

    Ok(PointAnalysis {
        lambda,
        lambda_effective,
        shaper_capacity: capacity,
        t_tx_s: t_tx,
        perf,
        loads,
        collision_probability,
    })
}

/// Evaluate [`analyze_point`] over a grid of arrival rates.
pub fn analyze_grid(
    scenario: &Scenario,
    lambdas: &[f64],
    opts: &AnalysisOptions,
) -> Result<Vec<PointAnalysis>, AnalysisError> {
    lambdas.iter().map(|l| analyze_point(scenario, *l, opts)).collect()
}

/// Log-spaced grid of `steps` points from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    assert!(min > 0.0 && max >= min && steps >= 1);
    if steps == 1 {
        return vec![min];
    }
    let ratio = max / min;
    (0..steps)
        .map(|i| min * ratio.powf(i as f64 / (steps - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandplan::{eu868_default, RadioParams, TrafficModel};
    use approx::assert_relative_eq;

    fn scenario(bands: &[&str], lambda: f64, devices: u32, agg: f64) -> Scenario {
        let plan = eu868_default().select(bands).unwrap();
        let mut traffic = TrafficModel::single_sf(&plan, 12, lambda, devices);
        traffic.aggregated_duty_cycle = agg;
        Scenario { plan, radio: RadioParams::new(12, 50, 4), traffic }
    }

    #[test]
    fn grid_is_log_spaced_and_inclusive() {
        let g = log_grid(1e-4, 1e-2, 5);
        assert_eq!(g.len(), 5);
        assert_relative_eq!(g[0], 1e-4, max_relative = 1e-12);
        assert_relative_eq!(g[4], 1e-2, max_relative = 1e-12);
        let r1 = g[1] / g[0];
        let r2 = g[3] / g[2];
        assert_relative_eq!(r1, r2, max_relative = 1e-9);
        assert_eq!(log_grid(0.5, 1.0, 1), vec![0.5]);
    }

    #[test]
    fn single_band_carries_everything() {
        let s = scenario(&["G"], 1e-3, 1, 1.0);
        let p = analyze_point(&s, 1e-3, &AnalysisOptions::default()).unwrap();
        assert_relative_eq!(p.t_tx_s, 4.071424, max_relative = 1e-12);
        assert_relative_eq!(p.perf.service_ratios[0], 1.0, max_relative = 1e-6);
        assert!(p.perf.latency_lower <= p.perf.latency_upper);
        assert_eq!(p.lambda_effective, 1e-3);
    }

    #[test]
    fn outputs_freeze_beyond_shaper_capacity() {
        let opts = AnalysisOptions {
            t_tx_override_s: Some(3.4247),
            ..AnalysisOptions::default()
        };
        let s = scenario(&["G", "G4"], 0.0, 1, 0.05);
        let a = analyze_point(&s, 0.05, &opts).unwrap();
        let b = analyze_point(&s, 0.10, &opts).unwrap();
        assert!((a.shaper_capacity - 0.0146).abs() < 1e-4);
        assert_eq!(a.lambda_effective, a.shaper_capacity);
        assert_eq!(b.lambda_effective, a.lambda_effective);
        assert_eq!(a.perf.service_ratios, b.perf.service_ratios);
        assert_eq!(a.perf.latency_lower, b.perf.latency_lower);
        assert_eq!(a.loads.rows(), b.loads.rows());
    }

    #[test]
    fn collision_columns_follow_loads() {
        let s = scenario(&["G", "G1"], 1e-3, 100, 1.0);
        let p = analyze_point(&s, 1e-3, &AnalysisOptions::default()).unwrap();
        for (row, pc) in p.loads.rows().iter().zip(&p.collision_probability) {
            for j in 0..NUM_SF {
                assert_relative_eq!(
                    pc[j],
                    1.0 - (-2.0 * row[j]).exp(),
                    max_relative = 1e-12
                );
            }
            // single-SF mix: only the SF12 column is loaded
            assert_eq!(row[0], 0.0);
            assert!(row[5] > 0.0);
        }
    }
}
