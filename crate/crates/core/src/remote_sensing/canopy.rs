use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major grid of cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    cell_size: f64,
    values: Vec<f64>,
    nodata: f64,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        values: Vec<f64>,
        nodata: f64,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(
                "raster value count must equal width * height",
            ));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::invalid("raster cell size must be > 0"));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            values,
            nodata,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        cell_size: f64,
        value: f64,
        nodata: f64,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            cell_size,
            alloc::vec![value; width * height],
            nodata,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// True for the nodata marker and for NaN.
    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }

    fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.cell_size == other.cell_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanopyHeight {
    pub heights: Raster,
    /// Cells where the surface lay below the terrain and were set to 0.
    pub clamped: usize,
}

/// Surface minus terrain, floored at zero. Nodata in either input yields
/// nodata (the surface raster's marker).
pub fn canopy_height(dsm: &Raster, dem: &Raster) -> Result<CanopyHeight> {
    if !dsm.same_grid(dem) {
        return Err(Error::invalid(
            "surface and terrain rasters differ in shape or cell size",
        ));
    }
    let mut clamped = 0;
    let values = dsm
        .values
        .iter()
        .zip(&dem.values)
        .map(|(&s, &t)| {
            if dsm.is_nodata(s) || dem.is_nodata(t) {
                return dsm.nodata;
            }
            let h = s - t;
            if h < 0.0 {
                clamped += 1;
                0.0
            } else {
                h
            }
        })
        .collect();
    Ok(CanopyHeight {
        heights: Raster {
            values,
            ..dsm.clone()
        },
        clamped,
    })
}

/// Canopy volume over the cells selected by `mask(row, col)`: the average of
/// the volume above the lowest selected cell and the volume above the mean
/// height plane (cells under the mean contribute nothing). Nodata cells are
/// skipped.
pub fn canopy_volume(heights: &Raster, mask: impl Fn(usize, usize) -> bool) -> Result<f64> {
    let mut cells = Vec::new();
    for row in 0..heights.height {
        for col in 0..heights.width {
            let h = heights.get(row, col);
            if mask(row, col) && !heights.is_nodata(h) {
                cells.push(h);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::invalid("canopy volume mask selects no valid cells"));
    }
    let area = heights.cell_size * heights.cell_size;
    let low = cells.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    let v_low: f64 = cells.iter().map(|h| (h - low) * area).sum();
    let v_mean: f64 = cells.iter().map(|h| (h - mean).max(0.0) * area).sum();
    Ok((v_low + v_mean) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, v: Vec<f64>) -> Raster {
        Raster::new(w, h, 1.0, v, -9999.0).unwrap()
    }

    #[test]
    fn equal_surfaces_give_zero_height() {
        let dem = grid(2, 2, vec![10.0, 11.0, 12.0, 13.0]);
        let ch = canopy_height(&dem, &dem).unwrap();
        assert!(ch.heights.values().iter().all(|&h| h == 0.0));
        assert_eq!(ch.clamped, 0);
    }

    #[test]
    fn uniform_offset_is_recovered() {
        let dem = grid(3, 1, vec![10.0, 11.0, 12.5]);
        let dsm = grid(3, 1, dem.values().iter().map(|v| v + 0.8).collect());
        let ch = canopy_height(&dsm, &dem).unwrap();
        for h in ch.heights.values() {
            assert_relative_eq!(*h, 0.8, max_relative = 1e-9);
        }
    }

    #[test]
    fn negative_cell_is_clamped_and_counted() {
        let dem = grid(2, 1, vec![10.0, 10.0]);
        let dsm = grid(2, 1, vec![10.5, 9.7]);
        let ch = canopy_height(&dsm, &dem).unwrap();
        assert_eq!(ch.heights.values()[1], 0.0);
        assert_eq!(ch.clamped, 1);
    }

    #[test]
    fn nodata_propagates() {
        let dem = grid(2, 1, vec![-9999.0, 10.0]);
        let dsm = grid(2, 1, vec![12.0, 11.0]);
        let ch = canopy_height(&dsm, &dem).unwrap();
        assert_eq!(ch.heights.values()[0], -9999.0);
        assert_eq!(ch.heights.values()[1], 1.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = grid(2, 1, vec![0.0, 0.0]);
        let b = grid(1, 2, vec![0.0, 0.0]);
        assert!(canopy_height(&a, &b).is_err());
        let c = Raster::new(2, 1, 0.5, vec![0.0, 0.0], -9999.0).unwrap();
        assert!(canopy_height(&a, &c).is_err());
    }

    #[test]
    fn invalid_rasters_are_rejected() {
        assert!(Raster::new(2, 2, 1.0, vec![0.0; 3], -9999.0).is_err());
        assert!(Raster::new(1, 1, 0.0, vec![0.0], -9999.0).is_err());
    }

    #[test]
    fn volume_hand_values() {
        assert_eq!(
            canopy_volume(&grid(3, 1, vec![0.4; 3]), |_, _| true).unwrap(),
            0.0
        );
        assert_eq!(
            canopy_volume(&grid(2, 2, vec![5.0; 4]), |_, _| true).unwrap(),
            0.0
        );
        assert_relative_eq!(
            canopy_volume(&grid(2, 1, vec![0.0, 1.0]), |_, _| true).unwrap(),
            0.75,
            max_relative = 1e-12
        );
    }

    #[test]
    fn volume_respects_mask_and_area() {
        let r = Raster::new(3, 1, 2.0, vec![0.0, 1.0, 100.0], -9999.0).unwrap();
        assert_relative_eq!(
            canopy_volume(&r, |_, c| c < 2).unwrap(),
            3.0,
            max_relative = 1e-12
        );
        assert!(canopy_volume(&r, |_, _| false).is_err());
    }

    proptest! {
        #[test]
        fn heights_bounded(dsm in prop::collection::vec(0.0..50.0f64, 12), dem in prop::collection::vec(0.0..50.0f64, 12)) {
            let max_s = dsm.iter().copied().fold(f64::MIN, f64::max);
            let min_t = dem.iter().copied().fold(f64::MAX, f64::min);
            let ch = canopy_height(&grid(4, 3, dsm), &grid(4, 3, dem)).unwrap();
            for h in ch.heights.values() {
                prop_assert!(*h >= 0.0 && *h <= max_s - min_t + 1e-12);
            }
        }

        #[test]
        fn volume_translation_invariant(h in prop::collection::vec(0.0..2.0f64, 9), shift in -5.0..5.0f64) {
            let a = canopy_volume(&grid(3, 3, h.clone()), |_, _| true).unwrap();
            let b = canopy_volume(&grid(3, 3, h.iter().map(|v| v + shift).collect()), |_, _| true).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
