//! Offered load and collision probability per (sub-band, spreading factor).
//!
//! Channels and spreading factors are treated as orthogonal, so each
//! (sub-band, SF) pair is a set of independent unslotted-ALOHA channels. Two
//! frames are lost when they overlap in time on the same channel with the
//! same SF; at per-channel load `L` Erlang the chance that no other frame
//! starts inside the `2·T_tx` vulnerability window is `exp(−2L)`.

use crate::bandplan::NUM_SF;

/// Per-channel Erlang loads, rows = sub-bands, columns = SF7..SF12.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMatrix {
    load: Vec<[f64; NUM_SF]>,
}

impl LoadMatrix {
    pub fn rows(&self) -> &[[f64; NUM_SF]] {
        &self.load
    }

    pub fn get(&self, band: usize, sf_idx: usize) -> f64 {
        self.load[band][sf_idx]
    }
}

/// Per-channel offered load `L(i,j) = λ·r_i·T_tx,j·M·p_SF(i,j) / n_i`.
///
/// `lambda` is the per-device generation rate after any shaping, `r` the
/// per-band service ratios, `t_tx_per_sf` the frame durations for SF7..SF12
/// and `sf_mix` the share of the `devices` population using each SF per band.
pub fn offered_load(
    lambda: f64,
    r: &[f64],
    t_tx_per_sf: &[f64; NUM_SF],
    devices: u32,
    sf_mix: &[[f64; NUM_SF]],
    channels: &[u32],
) -> LoadMatrix {
    assert!(r.len() == sf_mix.len() && r.len() == channels.len());
    let m = f64::from(devices);
    let load = r
        .iter()
        .zip(sf_mix)
        .zip(channels)
        .map(|((ri, mix), n)| {
            let mut row = [0.0; NUM_SF];
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = lambda * ri * t_tx_per_sf[j] * m * mix[j] / f64::from(*n);
            }
            row
        })
        .collect();
    LoadMatrix { load }
}

/// Which reading of the collision expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionFormula {
    /// Collision probability `1 − exp(−2L)`: `exp(−2L)` is the classical
    /// pure-ALOHA *success* probability, so the collision rate is its
    /// complement. Default, and the reading consistent with collision rates
    /// that grow with load.
    #[default]
    Complement,
    /// `exp(−2L)` verbatim, kept for exact reproduction of the published
    /// expression.
    Verbatim,
}

impl std::str::FromStr for CollisionFormula {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complement" => Ok(Self::Complement),
            "verbatim" => Ok(Self::Verbatim),
            other => {
                Err(format!("unknown collision formula {other:?} (expected complement|verbatim)"))
            }
        }
    }
}

/// Collision probability at per-channel load `load` (Erlang), default
/// complement reading.
pub fn collision_probability(load: f64) -> f64 {
    collision_probability_with(load, CollisionFormula::Complement)
}

pub fn collision_probability_with(load: f64, formula: CollisionFormula) -> f64 {
    assert!(load >= 0.0, "load must be nonnegative");
    match formula {
        CollisionFormula::Complement => -(-2.0 * load).exp_m1(),
        CollisionFormula::Verbatim => (-2.0 * load).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_cell_product() {
        // M=1, one band, one SF, λ·T_tx = 0.1, n=1, r=1 → L = 0.1
        let m = offered_load(0.1, &[1.0], &[1.0; NUM_SF], 1, &[[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]], &[1]);
        assert_relative_eq!(m.get(0, 5), 0.1, max_relative = 1e-12);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn doubling_channels_halves_the_row() {
        let mix = [[0.25, 0.0, 0.25, 0.0, 0.25, 0.25]];
        let t: [f64; NUM_SF] = [0.1, 0.2, 0.4, 0.8, 1.6, 3.2];
        let one = offered_load(0.05, &[0.7], &t, 40, &mix, &[3]);
        let two = offered_load(0.05, &[0.7], &t, 40, &mix, &[6]);
        for j in 0..NUM_SF {
            assert_relative_eq!(one.get(0, j), 2.0 * two.get(0, j), max_relative = 1e-12);
        }
    }

    #[test]
    fn collision_probability_examples() {
        assert_eq!(collision_probability(0.0), 0.0);
        assert_relative_eq!(collision_probability(0.25), 1.0 - (-0.5f64).exp(), max_relative = 1e-12);
        assert!(collision_probability(1e9) > 1.0 - 1e-12);
        // verbatim reading is the success probability
        assert_relative_eq!(
            collision_probability_with(0.25, CollisionFormula::Verbatim),
            (-0.5f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn monotone_in_load() {
        let mut prev = -1.0;
        for i in 0..200 {
            let p = collision_probability(f64::from(i) * 0.05);
            assert!(p >= prev && (0.0..1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn small_load_first_order_expansion() {
        for load in [0.001, 0.005, 0.01] {
            let p = collision_probability(load);
            let linear = 2.0 * load;
            assert!((p - linear).abs() / linear < 0.05, "load={load}");
        }
    }
}
