use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest loss periods accepted by [`model_confidence_set`].
pub const MCS_MIN_LENGTH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    pub alpha: f64,
    pub block_length: usize,
    pub replications: usize,
}

impl Default for McsConfig {
    fn default() -> Self {
        McsConfig { alpha: 0.10, block_length: 4, replications: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    /// Surviving model indices, ascending.
    pub included: Vec<usize>,
    /// Per model: whether it is in the set.
    pub inclusion: Vec<bool>,
    /// Models in order of elimination.
    pub eliminated: Vec<usize>,
    /// MCS p-value of each model.
    pub p_values: Vec<f64>,
}

/// Moving-block bootstrap row indices.
pub fn block_bootstrap_indices<R: Rng + ?Sized>(t: usize, block: usize, rng: &mut R) -> Vec<usize> {
    let block = block.clamp(1, t);
    let mut idx = Vec::with_capacity(t);
    while idx.len() < t {
        let start = rng.random_range(0..=t - block);
        idx.extend((start..start + block).take(t - idx.len()));
    }
    idx
}

/// Model confidence set with the range statistic `T_R`.
///
/// `losses[t][j]` is the loss of model `j` at time `t`.
pub fn model_confidence_set<R: Rng + ?Sized>(
    losses: &[Vec<f64>],
    config: &McsConfig,
    rng: &mut R,
) -> Result<McsResult> {
    let t = losses.len();
    let j = losses.first().map_or(0, |r| r.len());
    if j < 2 {
        return Err(Error::invalid("MCS needs at least two models"));
    }
    if t < MCS_MIN_LENGTH {
        return Err(Error::invalid(format!("MCS needs at least {MCS_MIN_LENGTH} loss observations")));
    }
    if losses.iter().any(|r| r.len() != j || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("loss matrix is ragged or non-finite"));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) || config.replications == 0 {
        return Err(Error::config("MCS alpha must be in (0,1) with at least one replication"));
    }
    let mean = |rows: &mut dyn Iterator<Item = usize>| {
        let mut m = vec![0.0; j];
        let mut n = 0.0;
        for r in rows {
            for (a, v) in m.iter_mut().zip(&losses[r]) {
                *a += v;
            }
            n += 1.0;
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    };
    let lbar = mean(&mut (0..t));
    let boot: Vec<Vec<f64>> = (0..config.replications)
        .map(|_| mean(&mut block_bootstrap_indices(t, config.block_length, rng).into_iter()))
        .collect();
    let scale = lbar.iter().map(|v| v.abs()).fold(1.0, f64::max);

    let mut alive: Vec<usize> = (0..j).collect();
    let mut eliminated = Vec::new();
    let mut p_values = vec![1.0; j];
    let mut running_p = 0.0f64;
    while alive.len() > 1 {
        let k = alive.len();
        let mut t_max = 0.0f64;
        let mut worst = (f64::NEG_INFINITY, alive[0]);
        let mut se = vec![vec![0.0; k]; k];
        for a in 0..k {
            let mut row_max = f64::NEG_INFINITY;
            for b in 0..k {
                if a == b {
                    continue;
                }
                let (ia, ib) = (alive[a], alive[b]);
                let d = lbar[ia] - lbar[ib];
                let var = boot.iter().map(|m| (m[ia] - m[ib] - d).powi(2)).sum::<f64>() / boot.len() as f64;
                se[a][b] = var.sqrt();
                let tij = if var > 1e-24 * scale * scale {
                    d / var.sqrt()
                } else if d.abs() > 1e-12 * scale {
                    d.signum() * f64::INFINITY
                } else {
                    0.0
                };
                t_max = t_max.max(tij.abs());
                row_max = row_max.max(tij);
            }
            if row_max > worst.0 {
                worst = (row_max, alive[a]);
            }
        }
        if se.iter().flatten().all(|&v| v <= 1e-12 * scale) {
            break;
        }
        let mut exceed = 0usize;
        for m in &boot {
            let mut tb = 0.0f64;
            for a in 0..k {
                for b in (a + 1)..k {
                    if se[a][b] > 1e-12 * scale {
                        let (ia, ib) = (alive[a], alive[b]);
                        let dev = (m[ia] - m[ib] - (lbar[ia] - lbar[ib])).abs() / se[a][b];
                        tb = tb.max(dev);
                    }
                }
            }
            if tb >= t_max {
                exceed += 1;
            }
        }
        let p = exceed as f64 / boot.len() as f64;
        running_p = running_p.max(p);
        if p >= config.alpha {
            break;
        }
        p_values[worst.1] = running_p;
        alive.retain(|&m| m != worst.1);
        eliminated.push(worst.1);
    }
    for &a in &alive {
        p_values[a] = 1.0;
    }
    let mut inclusion = vec![false; j];
    for &a in &alive {
        inclusion[a] = true;
    }
    alive.sort_unstable();
    Ok(McsResult { included: alive, inclusion, eliminated, p_values })
}
