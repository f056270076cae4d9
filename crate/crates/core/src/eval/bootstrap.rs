use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Percentile of sorted data with linear interpolation between closest
/// ranks (position `q * (n - 1)`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile bootstrap over `n` items.
///
/// `statistic` receives the resampled item indices and may return `None`
/// when undefined on that resample. Resample `r` draws from its own ChaCha
/// stream, so the result does not depend on scheduling. More than 10%
/// undefined resamples is an error.
pub fn bootstrap_ci<F>(n: usize, statistic: F, config: &BootstrapConfig) -> Result<Interval>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n == 0 {
        return Err(Error::Degenerate("bootstrap needs at least one item".into()));
    }
    if config.resamples == 0 || !(0.0 < config.level && config.level < 1.0) {
        return Err(Error::Config("bootstrap needs resamples >= 1 and level in (0, 1)".into()));
    }
    let values: Vec<Option<f64>> = (0..config.resamples)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |indices, r| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(r as u64);
                indices.clear();
                indices.extend((0..n).map(|_| rng.random_range(0..n)));
                statistic(indices)
            },
        )
        .collect();
    let mut defined: Vec<f64> = values.into_iter().flatten().filter(|v| !v.is_nan()).collect();
    let discarded = config.resamples - defined.len();
    if discarded * 10 > config.resamples || defined.is_empty() {
        return Err(Error::Bootstrap {
            discarded,
            total: config.resamples,
        });
    }
    defined.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.level) / 2.0;
    Ok(Interval {
        lower: percentile(&defined, alpha),
        upper: percentile(&defined, 1.0 - alpha),
    })
}
