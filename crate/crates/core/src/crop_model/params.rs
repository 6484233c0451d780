use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Piecewise-linear (leaf, stem, storage) partition fractions indexed by
/// development stage. Outside the table range the end rows apply.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    rows: Vec<(f64, [f64; 3])>,
}

impl PartitionTable {
    pub fn new(mut rows: Vec<(f64, [f64; 3])>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("partition table needs at least one row"));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate dvs in partition table"));
        }
        for (dvs, f) in &rows {
            if !dvs.is_finite() || f.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(
                    "partition fractions must be finite and non-negative",
                ));
            }
            if (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("partition fractions must sum to 1"));
            }
        }
        Ok(Self { rows })
    }

    pub fn constant(f: [f64; 3]) -> Self {
        Self {
            rows: alloc::vec![(0.0, f)],
        }
    }

    pub fn rows(&self) -> &[(f64, [f64; 3])] {
        &self.rows
    }

    pub fn at(&self, dvs: f64) -> [f64; 3] {
        let rows = &self.rows;
        if dvs <= rows[0].0 {
            return rows[0].1;
        }
        let last = rows[rows.len() - 1];
        if dvs >= last.0 {
            return last.1;
        }
        let i = rows.partition_point(|r| r.0 <= dvs);
        let (x0, f0) = rows[i - 1];
        let (x1, f1) = rows[i];
        let w = (dvs - x0) / (x1 - x0);
        [
            f0[0] + w * (f1[0] - f0[0]),
            f0[1] + w * (f1[1] - f0[1]),
            f0[2] + w * (f1[2] - f0[2]),
        ]
    }
}

/// Parameters of the growth surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct CropParams {
    /// Base temperature, °C.
    pub tbase: f64,
    /// Thermal time emergence to anthesis, °C·day.
    pub tsum1: f64,
    /// Thermal time anthesis to maturity, °C·day.
    pub tsum2: f64,
    /// Radiation-use efficiency, g/MJ.
    pub rue: f64,
    pub kext: f64,
    /// Specific leaf area, (m²/m²) per (kg/ha).
    pub sla: f64,
    /// Root fraction of daily growth.
    pub fr: f64,
    pub part_table: PartitionTable,
    /// Relative leaf senescence rate after anthesis, 1/day.
    pub rdr: f64,
}

impl Default for CropParams {
    fn default() -> Self {
        Self {
            tbase: 0.0,
            tsum1: 900.0,
            tsum2: 800.0,
            rue: 3.0,
            kext: 0.6,
            sla: 0.0022,
            fr: 0.2,
            part_table: PartitionTable {
                rows: alloc::vec![
                    (0.0, [0.65, 0.35, 0.0]),
                    (1.0, [0.10, 0.30, 0.60]),
                    (2.0, [0.0, 0.0, 1.0]),
                ],
            },
            rdr: 0.03,
        }
    }
}

impl CropParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.tbase, self.tsum1, self.tsum2, self.rue, self.kext, self.sla, self.fr, self.rdr,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite crop parameter"));
        }
        if self.tsum1 <= 0.0 || self.tsum2 <= 0.0 {
            return Err(Error::invalid("tsum1 and tsum2 must be > 0"));
        }
        if self.rue <= 0.0 || self.kext <= 0.0 || self.sla <= 0.0 {
            return Err(Error::invalid("rue, kext and sla must be > 0"));
        }
        if !(0.0..1.0).contains(&self.fr) {
            return Err(Error::invalid("fr must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.rdr) {
            return Err(Error::invalid("rdr must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Tbase => self.tbase,
            ParamName::Tsum1 => self.tsum1,
            ParamName::Tsum2 => self.tsum2,
            ParamName::Rue => self.rue,
            ParamName::Kext => self.kext,
            ParamName::Sla => self.sla,
            ParamName::Fr => self.fr,
            ParamName::Rdr => self.rdr,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let slot = match name {
            ParamName::Tbase => &mut self.tbase,
            ParamName::Tsum1 => &mut self.tsum1,
            ParamName::Tsum2 => &mut self.tsum2,
            ParamName::Rue => &mut self.rue,
            ParamName::Kext => &mut self.kext,
            ParamName::Sla => &mut self.sla,
            ParamName::Fr => &mut self.fr,
            ParamName::Rdr => &mut self.rdr,
        };
        *slot = value;
    }
}

/// Scalar parameters addressable by name (calibration, parameter files).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Tbase,
    Tsum1,
    Tsum2,
    Rue,
    Kext,
    Sla,
    Fr,
    Rdr,
}

impl ParamName {
    pub const ALL: [ParamName; 8] = [
        ParamName::Tbase,
        ParamName::Tsum1,
        ParamName::Tsum2,
        ParamName::Rue,
        ParamName::Kext,
        ParamName::Sla,
        ParamName::Fr,
        ParamName::Rdr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Tbase => "tbase",
            ParamName::Tsum1 => "tsum1",
            ParamName::Tsum2 => "tsum2",
            ParamName::Rue => "rue",
            ParamName::Kext => "kext",
            ParamName::Sla => "sla",
            ParamName::Fr => "fr",
            ParamName::Rdr => "rdr",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(alloc::format!("unknown crop parameter `{s}`")))
    }
}
