use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::remote_sensing::{ViIndex, ViVector, VI_COUNT};

/// Values per date in a design vector: dvd, the vegetation indices, canopy
/// volume and height, LAI and the five biomass pools.
pub const PER_DATE_FEATURES: usize = 1 + VI_COUNT + 3 + 5;

/// One plot on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub plot_id: String,
    pub date: NaiveDate,
    /// Days since sowing.
    pub dvd: u32,
    pub vi: ViVector,
    pub cv: f64,
    pub ch: f64,
    pub lai: f64,
    pub tagp: f64,
    pub twso: f64,
    pub twlv: f64,
    pub twst: f64,
    pub twrt: f64,
}

impl FeatureRow {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.cv, self.ch, self.lai];
        let pools = [self.tagp, self.twso, self.twlv, self.twst, self.twrt];
        if scalars.iter().chain(&pools).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature for plot {} on {}",
                self.plot_id, self.date
            )));
        }
        if pools.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(format!(
                "negative pool for plot {} on {}",
                self.plot_id, self.date
            )));
        }
        Ok(())
    }

    /// The per-date vector in canonical column order.
    pub fn vector(&self) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(PER_DATE_FEATURES);
        v.push(self.dvd as f64);
        for (idx, x) in self.vi.iter() {
            v.push(x.ok_or_else(|| {
                Error::invalid(format!(
                    "{idx} undefined for plot {} on {}",
                    self.plot_id, self.date
                ))
            })?);
        }
        v.extend_from_slice(&[
            self.cv, self.ch, self.lai, self.tagp, self.twso, self.twlv, self.twst, self.twrt,
        ]);
        Ok(v)
    }
}

/// Names of the per-date columns, in [`FeatureRow::vector`] order.
pub fn per_date_names() -> Vec<&'static str> {
    let mut names = Vec::with_capacity(PER_DATE_FEATURES);
    names.push("dvd");
    names.extend(ViIndex::ALL.iter().map(|i| i.as_str()));
    names.extend(["cv", "ch", "lai", "tagp", "twso", "twlv", "twst", "twrt"]);
    names
}

/// Column names of a design vector built from `t` dates (`ndvi` on the second
/// selected date is `NDVI_2`).
pub fn design_names(t: usize) -> Vec<String> {
    (1..=t)
        .flat_map(|k| {
            per_date_names()
                .into_iter()
                .map(move |n| format!("{n}_{k}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct YieldRecord {
    pub plot_id: String,
    pub yield_kg_ha: f64,
}

impl YieldRecord {
    pub fn new(plot_id: impl Into<String>, yield_kg_ha: f64) -> Result<Self> {
        if !(yield_kg_ha >= 0.0) || !yield_kg_ha.is_finite() {
            return Err(Error::invalid("yield must be finite and >= 0"));
        }
        Ok(Self {
            plot_id: plot_id.into(),
            yield_kg_ha,
        })
    }
}

/// Which dates of a plot's season feed the design vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateSelector {
    First(usize),
    Last(usize),
}

impl DateSelector {
    pub fn count(self) -> usize {
        match self {
            DateSelector::First(t) | DateSelector::Last(t) => t,
        }
    }
}

/// Concatenate the selected per-date vectors, which must already be in
/// chronological order.
pub fn concat_selected(plot_id: &str, dates: &[Vec<f64>], sel: DateSelector) -> Result<Vec<f64>> {
    let t = sel.count();
    if t == 0 {
        return Err(Error::invalid("date count must be >= 1"));
    }
    if dates.len() < t {
        return Err(Error::invalid(format!(
            "plot {plot_id} has {} dates, {t} required",
            dates.len()
        )));
    }
    let chosen = match sel {
        DateSelector::First(_) => &dates[..t],
        DateSelector::Last(_) => &dates[dates.len() - t..],
    };
    Ok(chosen.concat())
}

/// One fixed-length design vector per plot, plots in order of first
/// appearance.
pub fn assemble_features(
    rows: &[FeatureRow],
    sel: DateSelector,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut plots: Vec<(String, Vec<&FeatureRow>)> = Vec::new();
    for r in rows {
        r.validate()?;
        match plots.iter_mut().find(|(id, _)| *id == r.plot_id) {
            Some((_, v)) => v.push(r),
            None => plots.push((r.plot_id.clone(), alloc::vec![r])),
        }
    }
    let mut out = Vec::with_capacity(plots.len());
    for (id, mut prs) in plots {
        prs.sort_by_key(|r| r.date);
        if prs.windows(2).any(|w| w[0].date == w[1].date) {
            return Err(Error::invalid(format!("plot {id} has duplicate dates")));
        }
        let vectors = prs.iter().map(|r| r.vector()).collect::<Result<Vec<_>>>()?;
        let design = concat_selected(&id, &vectors, sel)?;
        out.push((id, design));
    }
    Ok(out)
}

/// Pair design vectors with measured yields by plot id.
pub fn join_yields(
    designs: &[(String, Vec<f64>)],
    yields: &[YieldRecord],
) -> Result<Vec<(Vec<f64>, f64)>> {
    designs
        .iter()
        .map(|(id, x)| {
            let y = yields
                .iter()
                .find(|r| &r.plot_id == id)
                .ok_or_else(|| Error::invalid(format!("no yield record for plot {id}")))?;
            Ok((x.clone(), y.yield_kg_ha))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remote_sensing::{compute_vi, BandSample};

    fn row(plot: &str, day: u32) -> FeatureRow {
        let vi = compute_vi(&BandSample::new(0.04, 0.08, 0.1, 0.25, 0.4).unwrap());
        FeatureRow {
            plot_id: plot.into(),
            date: NaiveDate::from_ymd_opt(2023, 3, 1).unwrap() + chrono::Days::new(day as u64),
            dvd: day,
            vi,
            cv: 0.1,
            ch: 0.2,
            lai: 1.0,
            tagp: 100.0,
            twso: 0.0,
            twlv: 50.0,
            twst: 50.0,
            twrt: 20.0,
        }
    }

    #[test]
    fn full_count_concatenates_all_dates() {
        let dates = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(
            concat_selected("p", &dates, DateSelector::First(2)).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(
            concat_selected("p", &dates, DateSelector::Last(2)).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn last_selector_takes_the_tail() {
        let dates: Vec<Vec<f64>> = (1..=9).map(|d| vec![d as f64]).collect();
        assert_eq!(
            concat_selected("p", &dates, DateSelector::Last(5)).unwrap(),
            vec![5.0, 6.0, 7.0, 8.0, 9.0]
        );
        assert_eq!(
            concat_selected("p", &dates, DateSelector::First(5)).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0]
        );
    }

    #[test]
    fn design_length_is_features_times_dates() {
        let dates = vec![vec![1.0, 2.0]; 4];
        assert_eq!(
            concat_selected("p", &dates, DateSelector::First(3))
                .unwrap()
                .len(),
            6
        );
    }

    #[test]
    fn too_few_dates_names_the_plot() {
        let err = concat_selected("north-7", &[vec![1.0]], DateSelector::Last(2)).unwrap_err();
        assert!(alloc::format!("{err}").contains("north-7"));
    }

    #[test]
    fn assembles_per_plot_in_date_order() {
        let rows = vec![row("a", 30), row("b", 10), row("a", 10), row("b", 30)];
        let out = assemble_features(&rows, DateSelector::First(2)).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].0, "a");
        assert_eq!(out[0].1.len(), 2 * PER_DATE_FEATURES);
        assert_eq!(out[0].1[0], 10.0);
        assert_eq!(out[0].1[PER_DATE_FEATURES], 30.0);
        assert_eq!(design_names(2).len(), out[0].1.len());
        assert_eq!(design_names(2)[PER_DATE_FEATURES], "dvd_2");
    }

    #[test]
    fn duplicate_dates_and_negative_pools_are_rejected() {
        assert!(assemble_features(&[row("a", 1), row("a", 1)], DateSelector::First(1)).is_err());
        let mut bad = row("a", 1);
        bad.twso = -1.0;
        assert!(assemble_features(&[bad], DateSelector::First(1)).is_err());
    }

    #[test]
    fn undefined_index_is_rejected() {
        let mut r = row("a", 1);
        r.vi = compute_vi(&BandSample::new(0.0, 0.0, 0.0, 0.0, 0.0).unwrap());
        assert!(assemble_features(&[r], DateSelector::First(1)).is_err());
    }

    #[test]
    fn yields_join_by_plot() {
        let designs = vec![("a".into(), vec![1.0]), ("b".into(), vec![2.0])];
        let ys = vec![
            YieldRecord::new("b", 7.0).unwrap(),
            YieldRecord::new("a", 5.0).unwrap(),
        ];
        assert_eq!(
            join_yields(&designs, &ys).unwrap(),
            vec![(vec![1.0], 5.0), (vec![2.0], 7.0)]
        );
        assert!(join_yields(&designs, &ys[..1]).is_err());
        assert!(YieldRecord::new("c", -1.0).is_err());
    }
}
