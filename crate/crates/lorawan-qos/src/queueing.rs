//! Steady-state queueing models for duty-cycled sub-band selection.
//!
//! A device with `c` sub-bands behaves like a queue with `c` heterogeneous
//! servers: server `i` works at rate `μ_i = δ_i/T_tx`. An arriving packet
//! takes an idle server, chosen with probability proportional to the
//! sub-band's channel count; if every server is busy the packet queues and is
//! taken by whichever server frees first. Because queued packets always move
//! to the first free server, only the number queued matters and the system is
//! a continuous-time Markov chain over
//!
//! ```text
//!   { (B, 0) : B a proper subset of busy servers }  ∪  { (all busy, q) : 0 <= q <= Q_max }
//! ```
//!
//! [`build_generator`] materializes that chain's transition-rate matrix and
//! [`solve_steady_state`] computes its stationary distribution. The solver
//! exploits the structure rather than inverting the full matrix: conditioned
//! on all servers being busy, the queue length is a birth-death process, so
//! cut balance gives `π(all, q+1) = (λ/Σμ)·π(all, q)` exactly and only the
//! `2^c` subset states need a linear solve. The result is still verified
//! against the full generator (`‖πᵀA‖∞ < 1e-10`) on every solve.
//!
//! The remaining items are the closed forms built on top of the chain:
//! Erlang-C (the "ordinary" multi-server reference model), the waiting-time
//! and service-ratio formulas, their low-load/saturation limits, and the
//! M/D/1 traffic shaper that models aggregated duty cycling.

use thiserror::Error;

use crate::bandplan::BandPlan;

/// Hard cap on the number of sub-band servers; the subset state space grows
/// as `2^c`.
pub const MAX_SERVERS: usize = 16;

/// Default queue truncation of the finite chain.
pub const DEFAULT_QUEUE_TRUNCATION: usize = 1000;

/// Class-A receive-window lockout after an uplink with default timing:
/// first window opens 1 s after the frame, the second 1 s after the first,
/// both with zero duration in an uplink-only deployment.
pub const DEFAULT_RX_LOCKOUT_S: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum QueueingError {
    #[error("invalid queue specification: {0}")]
    Spec(String),
    #[error("at most {MAX_SERVERS} servers are supported, got {0}")]
    TooManyServers(usize),
    #[error("system is unstable: arrival rate {lambda} >= total service rate {capacity}")]
    Unstable { lambda: f64, capacity: f64 },
    #[error("arrival rate must be positive here; use the low-load limit for λ→0")]
    ZeroArrival,
    #[error("steady-state solve failed: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NumericalFailure { residual: f64, tolerance: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Description of the sub-band server system seen by one device.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSpec {
    /// Per-sub-band service rates `μ_i`, 1/s.
    pub service_rates: Vec<f64>,
    /// Per-sub-band channel counts `n_i`; arrival routing picks an idle
    /// server with probability proportional to its weight.
    pub selection_weights: Vec<u32>,
    /// Packet generation rate `λ`, 1/s.
    pub arrival_rate: f64,
    /// Queue capacity of the finite chain.
    pub queue_truncation: usize,
}

impl QueueSpec {
    pub fn new(service_rates: Vec<f64>, selection_weights: Vec<u32>, arrival_rate: f64) -> Self {
        Self {
            service_rates,
            selection_weights,
            arrival_rate,
            queue_truncation: DEFAULT_QUEUE_TRUNCATION,
        }
    }

    pub fn servers(&self) -> usize {
        self.service_rates.len()
    }

    pub fn total_rate(&self) -> f64 {
        self.service_rates.iter().sum()
    }

    fn validate(&self) -> Result<(), QueueingError> {
        let c = self.service_rates.len();
        if c == 0 {
            return Err(QueueingError::Spec("at least one server is required".into()));
        }
        if c > MAX_SERVERS {
            return Err(QueueingError::TooManyServers(c));
        }
        if self.selection_weights.len() != c {
            return Err(QueueingError::Spec(format!(
                "selection_weights length {} != service_rates length {c}",
                self.selection_weights.len()
            )));
        }
        if self.service_rates.iter().any(|mu| !(*mu > 0.0)) {
            return Err(QueueingError::Spec("all service rates must be positive".into()));
        }
        if self.selection_weights.iter().any(|w| *w < 1) {
            return Err(QueueingError::Spec("all selection weights must be >= 1".into()));
        }
        if !(self.arrival_rate >= 0.0) {
            return Err(QueueingError::Spec("arrival rate must be >= 0".into()));
        }
        if self.queue_truncation < 1 {
            return Err(QueueingError::Spec("queue truncation must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sparse transition-rate matrix of the chain together with its state layout.
///
/// States are indexed as: proper busy-subsets by their bitmask
/// (`0..2^c - 1`), then the all-busy states by queue length
/// (`2^c - 1 + q`). Only off-diagonal rates are stored; each diagonal is the
/// negated row sum.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: QueueSpec,
    entries: Vec<(u32, u32, f64)>,
    n_states: usize,
}

impl Generator {
    pub fn spec(&self) -> &QueueSpec {
        &self.spec
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Off-diagonal entries `(from, to, rate)`.
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// State index of a proper busy-subset (bitmask over servers).
    pub fn index_of_partial(&self, mask: u32) -> usize {
        debug_assert!(mask != self.full_mask());
        mask as usize
    }

    /// State index of the all-busy state with `q` packets queued.
    pub fn index_of_full(&self, q: usize) -> usize {
        self.full_mask() as usize + q
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.spec.servers()) - 1
    }

    /// Dense form including diagonals; intended for small instances and tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_states;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for &(from, to, rate) in &self.entries {
            m[(from as usize, to as usize)] += rate;
            m[(from as usize, from as usize)] -= rate;
        }
        m
    }
}

/// Build the chain's transition-rate matrix for a validated [`QueueSpec`].
pub fn build_generator(spec: &QueueSpec) -> Result<Generator, QueueingError> {
    spec.validate()?;
    let c = spec.servers();
    let full: u32 = (1u32 << c) - 1;
    let lambda = spec.arrival_rate;
    let q_max = spec.queue_truncation;
    let n_states = full as usize + q_max + 1;
    let mut entries = Vec::new();

    for mask in 0..full {
        // Arrival: route to an idle server in proportion to channel counts.
        let idle_weight: f64 = (0..c)
            .filter(|j| mask & (1 << j) == 0)
            .map(|j| f64::from(spec.selection_weights[j]))
            .sum();
        if lambda > 0.0 {
            for j in 0..c {
                if mask & (1 << j) == 0 {
                    let next = mask | (1 << j);
                    let to = if next == full { full as usize } else { next as usize };
                    let rate = lambda * f64::from(spec.selection_weights[j]) / idle_weight;
                    entries.push((mask, to as u32, rate));
                }
            }
        }
        // Departure of each busy server.
        for i in 0..c {
            if mask & (1 << i) != 0 {
                entries.push((mask, mask & !(1 << i), spec.service_rates[i]));
            }
        }
    }

    // All busy, empty queue: individual servers can still free up.
    let full_base = full as usize;
    for i in 0..c {
        entries.push((full_base as u32, full & !(1 << i), spec.service_rates[i]));
    }
    if lambda > 0.0 {
        entries.push((full_base as u32, (full_base + 1) as u32, lambda));
    }

    // Queue tail: the freed server takes the head of the queue, so departures
    // happen at the total rate and the tail is a birth-death chain. Arrivals
    // in the last state are blocked.
    let total_rate = spec.total_rate();
    for q in 1..=q_max {
        let idx = (full_base + q) as u32;
        entries.push((idx, idx - 1, total_rate));
        if q < q_max && lambda > 0.0 {
            entries.push((idx, idx + 1, lambda));
        }
    }

    Ok(Generator { spec: spec.clone(), entries, n_states })
}

/// Stationary distribution of the chain plus the derived probabilities.
#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Probability of each proper busy-subset, indexed by bitmask.
    pub partial_states: Vec<f64>,
    /// Probability of the all-busy state with queue length `q = 0..=Q_max`.
    pub full_states: Vec<f64>,
    /// Probability that every server is busy (sum of `full_states`).
    pub p_busy_all: f64,
    /// Per-server probability of being idle.
    pub p_idle: Vec<f64>,
    /// `‖πᵀA‖∞` against the full generator, a solve-quality certificate.
    pub residual_inf: f64,
}

impl SteadyState {
    /// Probability that an arrival is blocked by the queue truncation.
    pub fn p_blocked(&self) -> f64 {
        *self.full_states.last().expect("queue has at least q=0")
    }

    pub fn total_probability(&self) -> f64 {
        self.partial_states.iter().sum::<f64>() + self.full_states.iter().sum::<f64>()
    }
}

/// Residual tolerance enforced by [`solve_steady_state`].
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

// Largest subset-system solved by dense LU; beyond this Gauss-Seidel is used.
const MAX_DENSE_SERVERS: usize = 11;

/// Solve `πᵀA = 0`, `Σπ = 1` for the chain built by [`build_generator`].
pub fn solve_steady_state(generator: &Generator) -> Result<SteadyState, QueueingError> {
    let spec = &generator.spec;
    let c = spec.servers();
    let x = if c <= MAX_DENSE_SERVERS {
        solve_reduced_dense(spec)?
    } else {
        solve_reduced_gauss_seidel(spec)?
    };
    assemble_steady_state(generator, &x)
}

// Balance equations of the subset system. Unknown x[mask] is the
// unnormalized probability of busy-set `mask`; x[full] stands for the
// all-busy state with an empty queue. The queue tail has been eliminated,
// which turns the all-busy balance into  Σμ·x[full] = λ·Σ_j x[full∖{j}].
fn reduced_inflow(spec: &QueueSpec, x: &[f64], mask: u32) -> f64 {
    let c = spec.servers();
    let full: u32 = (1u32 << c) - 1;
    let lambda = spec.arrival_rate;
    let mut inflow = 0.0;
    if mask == full {
        for j in 0..c {
            inflow += lambda * x[(full & !(1 << j)) as usize];
        }
        return inflow;
    }
    // arrivals from mask ∖ {j}
    for j in 0..c {
        if mask & (1 << j) != 0 {
            let prev = mask & !(1 << j);
            let idle_weight: f64 = (0..c)
                .filter(|k| prev & (1 << k) == 0)
                .map(|k| f64::from(spec.selection_weights[k]))
                .sum();
            inflow += lambda * f64::from(spec.selection_weights[j]) / idle_weight * x[prev as usize];
        }
    }
    // departures from mask ∪ {i}
    for i in 0..c {
        if mask & (1 << i) == 0 {
            inflow += spec.service_rates[i] * x[(mask | (1 << i)) as usize];
        }
    }
    inflow
}

fn reduced_outrate(spec: &QueueSpec, mask: u32) -> f64 {
    let c = spec.servers();
    let full: u32 = (1u32 << c) - 1;
    if mask == full {
        return spec.total_rate();
    }
    let busy_rate: f64 = (0..c)
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| spec.service_rates[i])
        .sum();
    spec.arrival_rate + busy_rate
}

fn solve_reduced_dense(spec: &QueueSpec) -> Result<Vec<f64>, QueueingError> {
    use nalgebra::{DMatrix, DVector};
    let c = spec.servers();
    let full: u32 = (1u32 << c) - 1;
    let n = full as usize + 1;
    let lambda = spec.arrival_rate;

    let mut m = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    // Row 0 replaces the (redundant) empty-set balance with a normalization.
    for j in 0..n {
        m[(0, j)] = 1.0;
    }
    rhs[0] = 1.0;

    for mask in 1..=full {
        let row = mask as usize;
        let out = reduced_outrate(spec, mask);
        m[(row, row)] = 1.0; // row scaled by the outflow rate
        if mask == full {
            for j in 0..c {
                let prev = (full & !(1 << j)) as usize;
                m[(row, prev)] -= lambda / out;
            }
            continue;
        }
        for j in 0..c {
            if mask & (1 << j) != 0 {
                let prev = mask & !(1 << j);
                let idle_weight: f64 = (0..c)
                    .filter(|k| prev & (1 << k) == 0)
                    .map(|k| f64::from(spec.selection_weights[k]))
                    .sum();
                m[(row, prev as usize)] -=
                    lambda * f64::from(spec.selection_weights[j]) / idle_weight / out;
            }
        }
        for i in 0..c {
            if mask & (1 << i) == 0 {
                m[(row, (mask | (1 << i)) as usize)] -= spec.service_rates[i] / out;
            }
        }
    }

    let lu = m.lu();
    let x = lu.solve(&rhs).ok_or(QueueingError::NumericalFailure {
        residual: f64::INFINITY,
        tolerance: RESIDUAL_TOLERANCE,
    })?;
    Ok(x.iter().copied().collect())
}

// Iterative fallback for large server counts where the dense subset system
// would not fit comfortably in memory.
fn solve_reduced_gauss_seidel(spec: &QueueSpec) -> Result<Vec<f64>, QueueingError> {
    let c = spec.servers();
    let full: u32 = (1u32 << c) - 1;
    let n = full as usize + 1;
    let mut x = vec![1.0 / n as f64; n];
    let max_sweeps = 200_000;
    let mut last_change = f64::INFINITY;
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for mask in 1..=full {
            let out = reduced_outrate(spec, mask);
            let next = reduced_inflow(spec, &x, mask) / out;
            change = change.max((next - x[mask as usize]).abs());
            x[mask as usize] = next;
        }
        let total: f64 = x.iter().sum();
        for v in x.iter_mut() {
            *v /= total;
        }
        last_change = change / x.iter().cloned().fold(f64::MIN, f64::max).max(f64::MIN_POSITIVE);
        if last_change < 1e-15 {
            return Ok(x);
        }
    }
    Err(QueueingError::NumericalFailure { residual: last_change, tolerance: 1e-15 })
}

fn assemble_steady_state(
    generator: &Generator,
    x: &[f64],
) -> Result<SteadyState, QueueingError> {
    let spec = &generator.spec;
    let c = spec.servers();
    let full: u32 = (1u32 << c) - 1;
    let q_max = spec.queue_truncation;
    let rho_tail = spec.arrival_rate / spec.total_rate();

    // Unnormalized probabilities: subset states then the geometric tail.
    // The tail can overflow f64 range in deep overload, so rescale everything
    // by an exact power of two whenever the running term grows too large.
    let mut partial: Vec<f64> = x[..full as usize].to_vec();
    let mut tail: Vec<f64> = Vec::with_capacity(q_max + 1);
    let mut term = x[full as usize];
    const RESCALE_ABOVE: f64 = 1e280;
    const RESCALE_BY: f64 = 2.939e-154; // 2^-510, exact scaling
    for _ in 0..=q_max {
        tail.push(term);
        term *= rho_tail;
        if term > RESCALE_ABOVE {
            for v in partial.iter_mut().chain(tail.iter_mut()) {
                *v *= RESCALE_BY;
            }
            term *= RESCALE_BY;
        }
    }

    let total: f64 = partial.iter().sum::<f64>() + tail.iter().sum::<f64>();
    if !(total.is_finite() && total > 0.0) {
        return Err(QueueingError::NumericalFailure {
            residual: f64::INFINITY,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    for v in partial.iter_mut().chain(tail.iter_mut()) {
        *v /= total;
        // tiny negative round-off from the linear solve
        if *v < 0.0 && *v > -1e-13 {
            *v = 0.0;
        }
    }

    let p_busy_all: f64 = tail.iter().sum();
    let p_idle: Vec<f64> = (0..c)
        .map(|i| {
            partial
                .iter()
                .enumerate()
                .filter(|(mask, _)| mask & (1 << i) == 0)
                .map(|(_, p)| *p)
                .sum()
        })
        .collect();

    // Certify against the full generator, independently of how we solved.
    let mut pi = partial.clone();
    pi.extend_from_slice(&tail);
    let mut residual = vec![0.0f64; generator.n_states];
    for &(from, to, rate) in &generator.entries {
        let flow = pi[from as usize] * rate;
        residual[to as usize] += flow;
        residual[from as usize] -= flow;
    }
    let residual_inf = residual.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    if residual_inf >= RESIDUAL_TOLERANCE {
        return Err(QueueingError::NumericalFailure {
            residual: residual_inf,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    if pi.iter().any(|p| *p < 0.0) {
        return Err(QueueingError::NumericalFailure {
            residual: residual_inf,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }

    Ok(SteadyState {
        partial_states: partial,
        full_states: tail,
        p_busy_all,
        p_idle,
        residual_inf,
    })
}

/// Erlang-C: probability that an arrival to a `c`-server exponential queue
/// with per-server rate `mu` finds every server busy.
pub fn erlang_c(servers: usize, arrival: f64, per_server_rate: f64) -> Result<f64, QueueingError> {
    if servers < 1 {
        return Err(QueueingError::Argument("servers must be >= 1".into()));
    }
    if !(per_server_rate > 0.0) {
        return Err(QueueingError::Argument("per-server rate must be positive".into()));
    }
    if !(arrival >= 0.0) {
        return Err(QueueingError::Argument("arrival rate must be >= 0".into()));
    }
    let capacity = servers as f64 * per_server_rate;
    if arrival >= capacity {
        return Err(QueueingError::Unstable { lambda: arrival, capacity });
    }
    if arrival == 0.0 {
        return Ok(0.0);
    }
    let a = arrival / per_server_rate;
    let rho = a / servers as f64;
    // Erlang-B recursion, then convert to Erlang-C; numerically stable for
    // any offered load.
    let mut b = 1.0;
    for k in 1..=servers {
        b = a * b / (k as f64 + a * b);
    }
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// How the all-busy probability is turned into a waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaitingFormula {
    /// `p_busy / round((Σμ + λ)·2)` — the formula as published. Kept as the
    /// default for fidelity even though the `+ λ` denominator is suspected
    /// to be a misprint of the classical `− λ`.
    #[default]
    Paper,
    /// `p_busy / ((Σμ − λ)·2)` — the classical multi-server waiting time
    /// halved by the deterministic-service rule of thumb.
    Classical,
}

impl std::str::FromStr for WaitingFormula {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Self::Paper),
            "classical" => Ok(Self::Classical),
            other => Err(format!("unknown waiting formula {other:?} (expected paper|classical)")),
        }
    }
}

/// Mean waiting time before transmission, published form:
/// `p_busy,all / ((Σμ + λ) · 2)`.
pub fn waiting_time(p_busy_all: f64, total_rate: f64, arrival: f64) -> f64 {
    assert!(p_busy_all >= 0.0 && total_rate > 0.0 && arrival >= 0.0);
    p_busy_all / ((total_rate + arrival) * 2.0)
}

/// Classical variant with the `(Σμ − λ)` denominator; infinite at and beyond
/// saturation.
pub fn waiting_time_classical(p_busy_all: f64, total_rate: f64, arrival: f64) -> f64 {
    assert!(p_busy_all >= 0.0 && total_rate > 0.0 && arrival >= 0.0);
    if arrival >= total_rate {
        return f64::INFINITY;
    }
    p_busy_all / ((total_rate - arrival) * 2.0)
}

pub fn waiting_time_with(
    formula: WaitingFormula,
    p_busy_all: f64,
    total_rate: f64,
    arrival: f64,
) -> f64 {
    match formula {
        WaitingFormula::Paper => waiting_time(p_busy_all, total_rate, arrival),
        WaitingFormula::Classical => waiting_time_classical(p_busy_all, total_rate, arrival),
    }
}

/// Fraction of transmissions carried in a sub-band:
/// `r_i = μ_i·(1 − p_idle,i)/λ`, clamped to `[0, 1]`.
///
/// Returns the ratio and whether clamping occurred; callers surface the
/// clamp, it is never silent.
pub fn service_ratio(mu_i: f64, arrival: f64, p_idle_i: f64) -> Result<(f64, bool), QueueingError> {
    if arrival == 0.0 {
        return Err(QueueingError::ZeroArrival);
    }
    if !(arrival > 0.0) || !(mu_i > 0.0) || !(0.0..=1.0).contains(&p_idle_i) {
        return Err(QueueingError::Argument(format!(
            "service_ratio arguments out of range: mu={mu_i}, lambda={arrival}, p_idle={p_idle_i}"
        )));
    }
    let raw = mu_i * (1.0 - p_idle_i) / arrival;
    let clamped = raw.clamp(0.0, 1.0);
    Ok((clamped, clamped != raw))
}

/// The two closed-form limits of the service ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRatioLimits {
    /// `λ → 0`: shares follow channel counts, `n_i / Σn_j`.
    pub low_load: Vec<f64>,
    /// Saturation: shares follow duty cycles, `δ_i / Σδ_j`.
    pub saturation: Vec<f64>,
}

pub fn service_ratio_limits(plan: &BandPlan) -> ServiceRatioLimits {
    let n_total = f64::from(plan.total_channels());
    let d_total = plan.total_duty_cycle();
    ServiceRatioLimits {
        low_load: plan
            .sub_bands()
            .iter()
            .map(|s| f64::from(s.n_channels) / n_total)
            .collect(),
        saturation: plan.sub_bands().iter().map(|s| s.duty_cycle / d_total).collect(),
    }
}

/// Mean latency across sub-bands: the per-band totals `T_tx,i + T_w,i`
/// weighted by the per-band service rates.
pub fn mean_latency(t_tx: &[f64], t_w: &[f64], weights: &[f64]) -> f64 {
    assert!(t_tx.len() == t_w.len() && t_w.len() == weights.len() && !t_tx.is_empty());
    assert!(weights.iter().all(|w| *w > 0.0));
    let weight_sum: f64 = weights.iter().sum();
    let weighted: f64 = t_tx
        .iter()
        .zip(t_w)
        .zip(weights)
        .map(|((tx, w), weight)| weight * (tx + w))
        .sum();
    weighted / weight_sum
}

/// Service-rate capacity of the M/D/1 shaper modeling receive-window waits
/// and aggregated duty cycling: the slower of the two stages.
pub fn shaper_capacity(
    aggregated_duty_cycle: f64,
    t_tx: f64,
    rx_lockout_total: f64,
) -> Result<f64, QueueingError> {
    if !(aggregated_duty_cycle > 0.0 && aggregated_duty_cycle <= 1.0) {
        return Err(QueueingError::Argument(format!(
            "aggregated duty cycle must be in (0, 1], got {aggregated_duty_cycle} \
             (0 turns the device off entirely)"
        )));
    }
    if !(t_tx > 0.0) {
        return Err(QueueingError::Argument(format!("t_tx must be positive, got {t_tx}")));
    }
    if !(rx_lockout_total >= 0.0) {
        return Err(QueueingError::Argument("rx lockout must be >= 0".into()));
    }
    let duty_rate = aggregated_duty_cycle / t_tx;
    if rx_lockout_total > 0.0 {
        Ok(duty_rate.min(1.0 / rx_lockout_total))
    } else {
        Ok(duty_rate)
    }
}

/// Mean wait in an M/D/1 queue: `ρ / (2μ(1 − ρ))`.
pub fn md1_wait(arrival: f64, capacity: f64) -> Result<f64, QueueingError> {
    if !(capacity > 0.0) {
        return Err(QueueingError::Argument("capacity must be positive".into()));
    }
    if !(arrival >= 0.0) {
        return Err(QueueingError::Argument("arrival must be >= 0".into()));
    }
    if arrival >= capacity {
        return Err(QueueingError::Unstable { lambda: arrival, capacity });
    }
    let rho = arrival / capacity;
    Ok(rho / (2.0 * capacity * (1.0 - rho)))
}

/// Arrival rate actually seen downstream of the shaper: `min(λ, capacity)`.
/// Beyond the capacity every downstream output is constant in `λ`.
pub fn shape_arrivals(arrival: f64, shaper_capacity: f64) -> f64 {
    assert!(arrival >= 0.0 && shaper_capacity >= 0.0);
    arrival.min(shaper_capacity)
}

/// Analytic outputs of the sub-band server system at one arrival rate.
#[derive(Debug, Clone)]
pub struct PerfReport {
    /// Arrival rate the queue was evaluated at (post-shaping).
    pub arrival_rate: f64,
    /// All-busy probability from the jockeying chain ("lower" model).
    pub p_busy_all_lower: f64,
    /// All-busy probability from symmetric Erlang-C over `c` servers of rate
    /// `Σμ/c` ("upper" model); 1.0 at and beyond saturation.
    pub p_busy_all_upper: f64,
    /// Per-band waiting times under each model, seconds.
    pub waiting_lower: Vec<f64>,
    pub waiting_upper: Vec<f64>,
    /// Per-band service ratios from the chain.
    pub service_ratios: Vec<f64>,
    /// Service-rate-weighted mean latencies, seconds.
    pub latency_lower: f64,
    pub latency_upper: f64,
    /// Bands whose ratio was clamped into [0, 1] (reported, never silent).
    pub clamped_bands: Vec<usize>,
    /// Truncation loss of the finite chain; `Σ r_i = 1 − p_blocked` exactly.
    pub p_blocked: f64,
}

/// Evaluate the chain and both waiting-time models for one arrival rate.
///
/// `t_tx_per_band` holds the per-band frame durations used for the latency
/// aggregation (identical entries when all bands use one spreading factor).
pub fn performance_report(
    spec: &QueueSpec,
    t_tx_per_band: &[f64],
    formula: WaitingFormula,
) -> Result<PerfReport, QueueingError> {
    let c = spec.servers();
    if t_tx_per_band.len() != c {
        return Err(QueueingError::Argument(format!(
            "t_tx_per_band length {} != servers {c}",
            t_tx_per_band.len()
        )));
    }
    let lambda = spec.arrival_rate;
    let total_rate = spec.total_rate();

    if lambda == 0.0 {
        // Zero-load limit: no waiting, shares follow the channel counts.
        let weight_total: f64 = spec.selection_weights.iter().map(|w| f64::from(*w)).sum();
        let ratios: Vec<f64> =
            spec.selection_weights.iter().map(|w| f64::from(*w) / weight_total).collect();
        let zeros = vec![0.0; c];
        let latency = mean_latency(t_tx_per_band, &zeros, &spec.service_rates);
        return Ok(PerfReport {
            arrival_rate: 0.0,
            p_busy_all_lower: 0.0,
            p_busy_all_upper: 0.0,
            waiting_lower: zeros.clone(),
            waiting_upper: zeros,
            service_ratios: ratios,
            latency_lower: latency,
            latency_upper: latency,
            clamped_bands: Vec::new(),
            p_blocked: 0.0,
        });
    }

    let generator = build_generator(spec)?;
    let steady = solve_steady_state(&generator)?;

    let p_busy_upper = if lambda < total_rate {
        erlang_c(c, lambda, total_rate / c as f64)?
    } else {
        1.0
    };

    let w_lower = waiting_time_with(formula, steady.p_busy_all, total_rate, lambda);
    let w_upper = waiting_time_with(formula, p_busy_upper, total_rate, lambda);
    let waiting_lower = vec![w_lower; c];
    let waiting_upper = vec![w_upper; c];

    let mut service_ratios = Vec::with_capacity(c);
    let mut clamped_bands = Vec::new();
    for i in 0..c {
        let (r, clamped) = service_ratio(spec.service_rates[i], lambda, steady.p_idle[i])?;
        if clamped {
            clamped_bands.push(i);
        }
        service_ratios.push(r);
    }

    Ok(PerfReport {
        arrival_rate: lambda,
        p_busy_all_lower: steady.p_busy_all,
        p_busy_all_upper: p_busy_upper,
        latency_lower: mean_latency(t_tx_per_band, &waiting_lower, &spec.service_rates),
        latency_upper: mean_latency(t_tx_per_band, &waiting_upper, &spec.service_rates),
        waiting_lower,
        waiting_upper,
        service_ratios,
        clamped_bands,
        p_blocked: steady.p_blocked(),
    })
}
