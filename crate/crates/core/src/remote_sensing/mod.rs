//! Vegetation indices, canopy height and volume, and LAI inversion.

mod canopy;
mod inversion;
mod vi;

pub use canopy::{canopy_height, canopy_volume, CanopyHeight, Raster};
pub use inversion::{
    defined_features, fit_lai_inverter, fit_lai_inverter_with, invert_lai, InversionModel, Stump,
};
pub use vi::{compute_vi, BandSample, ViIndex, ViVector, VI_COUNT};

use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};

/// Shuffle by `seed` and cut 3:1:1 into train, validation and test, with
/// sizes `floor(0.6n)`, `floor(0.2n)` and the remainder.
pub fn split_dataset<T>(rows: Vec<T>, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let n = rows.len();
    if n < 5 {
        return Err(Error::invalid("split needs at least five rows"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, 0));
    let n_train = n * 3 / 5;
    let n_val = n / 5;
    let mut slots: Vec<Option<T>> = rows.into_iter().map(Some).collect();
    let mut take = |ix: &[usize]| {
        ix.iter()
            .map(|&i| slots[i].take().expect("index used once"))
            .collect::<Vec<T>>()
    };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok((train, val, test))
}
