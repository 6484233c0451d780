//! Random search with successive-halving pruning.
//!
//! Candidates are drawn uniformly from a box and evaluated in order. Each
//! trial is first scored on a cheap rung; it survives to a full evaluation
//! only if its rung score sits in the better half of all rung scores seen so
//! far (itself included). The decision for trial `i` depends only on trials
//! `0..=i`, so a longer run with the same seed never loses a trial that a
//! shorter run fully evaluated.

use alloc::vec::Vec;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub point: Vec<f64>,
    pub rung_cost: f64,
    /// `None` when the trial was pruned at the rung.
    pub full_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub trials: Vec<Trial>,
}

pub fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::invalid("empty search space"));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("search bounds need finite lower < upper"));
        }
    }
    Ok(())
}

/// `budget` points drawn uniformly from the box, in stream order.
pub fn sample_uniform(bounds: &[(f64, f64)], budget: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    validate_bounds(bounds)?;
    let mut rng = rng::stream(seed, 0);
    Ok((0..budget)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        })
        .collect())
}

fn sanitize(c: f64) -> f64 {
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

/// Evaluates `candidates` with rung pruning and returns the full-cost argmin.
pub fn halving_search<R, F>(
    candidates: Vec<Vec<f64>>,
    mut rung: R,
    mut full: F,
) -> Result<SearchOutcome>
where
    R: FnMut(&[f64]) -> Result<f64>,
    F: FnMut(&[f64]) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::invalid("search budget must be >= 1"));
    }
    let mut trials: Vec<Trial> = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for point in candidates {
        let rung_cost = sanitize(rung(&point)?);
        let better = trials.iter().filter(|t| t.rung_cost < rung_cost).count();
        let seen = trials.len() + 1;
        let keep = better < seen.div_ceil(2);
        let full_cost = if keep {
            Some(sanitize(full(&point)?))
        } else {
            None
        };
        if let Some(c) = full_cost {
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((trials.len(), c));
            }
        }
        trials.push(Trial {
            point,
            rung_cost,
            full_cost,
        });
    }
    // the first trial is always kept
    let (idx, best_cost) = best.expect("first trial is always fully evaluated");
    Ok(SearchOutcome {
        best: trials[idx].point.clone(),
        best_cost,
        trials,
    })
}
