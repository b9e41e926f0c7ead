//! Training-data filters and the carbon estimate.

use std::collections::HashSet;

use crate::data::TrainingPair;
use crate::embed::count_tokens;
use crate::error::{Error, Result};

/// Default length limit, in content tokens.
pub const MAX_TOKENS: usize = 500;

/// Drops pairs where the query or any document is longer than `max_tokens`.
pub fn filter_by_length(pairs: Vec<TrainingPair>, max_tokens: usize) -> Result<(Vec<TrainingPair>, usize)> {
    if max_tokens == 0 {
        return Err(Error::InvalidInput("max_tokens must be at least 1".into()));
    }
    let before = pairs.len();
    let kept: Vec<TrainingPair> = pairs
        .into_iter()
        .filter(|p| {
            std::iter::once(p.query.as_str())
                .chain(p.documents())
                .all(|t| count_tokens(t) <= max_tokens)
        })
        .collect();
    let dropped = before - kept.len();
    Ok((kept, dropped))
}

/// Keeps the first pair of every (query, positive) text pair.
pub fn dedup_exact(pairs: Vec<TrainingPair>) -> (Vec<TrainingPair>, usize) {
    let before = pairs.len();
    let mut seen = HashSet::new();
    let kept: Vec<TrainingPair> = pairs
        .into_iter()
        .filter(|p| seen.insert((p.query.trim().to_string(), p.positive.trim().to_string())))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Keeps pairs whose `scorer(query, positive)` reaches `threshold`.
pub fn filter_by_similarity<F>(pairs: Vec<TrainingPair>, mut scorer: F, threshold: f64) -> Result<Vec<TrainingPair>>
where
    F: FnMut(&str, &str) -> Result<f64>,
{
    let mut kept = Vec::with_capacity(pairs.len());
    for p in pairs {
        if scorer(&p.query, &p.positive)? >= threshold {
            kept.push(p);
        }
    }
    Ok(kept)
}

/// Data-center power usage effectiveness used for the reported estimate.
pub const DEFAULT_PUE: f64 = 1.3;

/// Kilograms of CO2 for `kwh` of energy at `intensity` grams per kWh.
pub fn co2_estimate(pue: f64, kwh: f64, intensity: f64) -> Result<f64> {
    for (name, v) in [("pue", pue), ("kwh", kwh), ("intensity", intensity)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name} must be a finite value >= 0, got {v}"
            )));
        }
    }
    Ok(pue * kwh * intensity / 1000.0)
}
