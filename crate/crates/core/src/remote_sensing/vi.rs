use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Surface reflectance in the five sensor bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSample {
    pub b: f64,
    pub g: f64,
    pub r: f64,
    pub re: f64,
    pub nir: f64,
}

impl BandSample {
    pub fn new(b: f64, g: f64, r: f64, re: f64, nir: f64) -> Result<Self> {
        let s = Self { b, g, r, re, nir };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.b, self.g, self.r, self.re, self.nir] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("reflectance must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

macro_rules! vi_indices {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Vegetation index identifiers, in canonical column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ViIndex { $($variant),* }

        impl ViIndex {
            pub const ALL: [ViIndex; VI_COUNT] = [$(ViIndex::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(ViIndex::$variant => $name),* }
            }
        }

        impl FromStr for ViIndex {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(ViIndex::$variant),)*
                    _ => Err(Error::invalid(alloc::format!("unknown vegetation index `{s}`"))),
                }
            }
        }
    };
}

pub const VI_COUNT: usize = 25;

vi_indices! {
    CiRe => "CIre",
    CiG => "CIg",
    Evi => "EVI",
    Gndvi => "GNDVI",
    Grdvi => "GRDVI",
    Kndvi => "kNDVI",
    Psri => "PSRI",
    Msavi => "MSAVI",
    Mtcari => "MTCARI",
    Mtvi => "MTVI",
    Nli => "NLI",
    Ndre => "NDRE",
    Ndvi => "NDVI",
    Nirv => "NIRv",
    Nnir => "NNIR",
    Osavi => "OSAVI",
    Rvi => "RVI",
    Savi => "SAVI",
    Sr => "SR",
    SrRe => "SRre",
    Sipi => "SIPI",
    Tvi => "TVI",
    Vdvi => "VDVI",
    Vari => "VARI",
    Wdrvi => "WDRVI",
}

impl ViIndex {
    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ViIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All index values for one sample; `None` marks an undefined index
/// (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViVector {
    values: [Option<f64>; VI_COUNT],
}

impl ViVector {
    pub fn from_values(values: [Option<f64>; VI_COUNT]) -> Result<Self> {
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("defined index values must be finite"));
        }
        Ok(Self { values })
    }

    pub fn get(&self, idx: ViIndex) -> Option<f64> {
        self.values[idx.position()]
    }

    pub fn is_defined(&self, idx: ViIndex) -> bool {
        self.get(idx).is_some()
    }

    pub fn values(&self) -> &[Option<f64>; VI_COUNT] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (ViIndex, Option<f64>)> + '_ {
        ViIndex::ALL.iter().map(move |&i| (i, self.get(i)))
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        return None;
    }
    let v = num / den;
    v.is_finite().then_some(v)
}

/// Evaluate every index for `s`.
pub fn compute_vi(s: &BandSample) -> ViVector {
    let BandSample { b, g, r, re, nir } = *s;
    let ndvi = ratio(nir - r, nir + r);
    let mut v = [None; VI_COUNT];
    let mut set = |i: ViIndex, x: Option<f64>| v[i.position()] = x.filter(|x| x.is_finite());

    set(ViIndex::CiRe, ratio(nir, re).map(|x| x - 1.0));
    set(ViIndex::CiG, ratio(nir, g).map(|x| x - 1.0));
    set(
        ViIndex::Evi,
        ratio(2.5 * (nir - r), nir + 6.0 * r - 7.5 * b + 1.0),
    );
    set(ViIndex::Gndvi, ratio(nir - g, nir + g));
    set(ViIndex::Grdvi, ratio(nir - g, libm::sqrt(nir + g)));
    set(ViIndex::Kndvi, ndvi.map(|n| libm::tanh(n * n)));
    set(ViIndex::Psri, ratio(r - b, nir));
    let disc = (2.0 * nir + 1.0) * (2.0 * nir + 1.0) - 8.0 * (nir - r);
    set(
        ViIndex::Msavi,
        (disc >= 0.0).then(|| (2.0 * nir + 1.0 - libm::sqrt(disc)) / 2.0),
    );
    set(
        ViIndex::Mtcari,
        ratio(nir, g).map(|q| 3.0 * ((nir - re) - 0.2 * (nir - re) * q)),
    );
    set(ViIndex::Mtvi, Some(1.2 * (1.2 * (nir - g) - 2.5 * (r - g))));
    set(ViIndex::Nli, ratio(nir * nir - r, nir * nir + r));
    set(ViIndex::Ndre, ratio(nir - re, nir + re));
    set(ViIndex::Ndvi, ndvi);
    set(ViIndex::Nirv, ndvi.map(|n| nir * n));
    set(ViIndex::Nnir, ratio(nir, nir + r + g));
    set(ViIndex::Osavi, ratio(1.16 * (nir - r), nir + r + 0.16));
    set(ViIndex::Rvi, ratio(r, nir));
    set(ViIndex::Savi, ratio(1.5 * (nir - r), nir + r + 0.5));
    set(ViIndex::Sr, ratio(nir, r));
    set(ViIndex::SrRe, ratio(nir, re));
    set(ViIndex::Sipi, ratio(nir - b, nir + r));
    set(ViIndex::Tvi, Some(60.0 * (nir - g) - 100.0 * (r - g)));
    set(ViIndex::Vdvi, ratio(2.0 * g - r - b, 2.0 * g + r + b));
    set(ViIndex::Vari, ratio(g - r, g + r - b));
    set(ViIndex::Wdrvi, ratio(0.1 * nir - r, 0.1 * nir + r));
    ViVector { values: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample(b: f64, g: f64, r: f64, re: f64, nir: f64) -> BandSample {
        BandSample::new(b, g, r, re, nir).unwrap()
    }

    #[test]
    fn ndvi_and_kndvi_hand_values() {
        let v = compute_vi(&sample(0.05, 0.08, 0.1, 0.3, 0.5));
        assert_relative_eq!(
            v.get(ViIndex::Ndvi).unwrap(),
            0.4 / 0.6,
            max_relative = 1e-12
        );
        assert_relative_eq!(v.get(ViIndex::Ndvi).unwrap(), 0.6667, epsilon = 1e-4);
        let k = libm::tanh((0.4f64 / 0.6).powi(2));
        assert_relative_eq!(v.get(ViIndex::Kndvi).unwrap(), k, max_relative = 1e-12);
        assert_relative_eq!(v.get(ViIndex::Kndvi).unwrap(), 0.4173, epsilon = 1e-4);
    }

    #[test]
    fn evi_hand_value() {
        let v = compute_vi(&sample(0.05, 0.08, 0.1, 0.3, 0.5));
        assert_relative_eq!(
            v.get(ViIndex::Evi).unwrap(),
            1.0 / 1.725,
            max_relative = 1e-9
        );
        assert_relative_eq!(v.get(ViIndex::Evi).unwrap(), 0.5797, epsilon = 1e-4);
    }

    #[test]
    fn equal_nir_and_red_gives_zero_ndvi() {
        let v = compute_vi(&sample(0.05, 0.1, 0.3, 0.3, 0.3));
        assert_eq!(v.get(ViIndex::Ndvi), Some(0.0));
        assert_relative_eq!(
            v.get(ViIndex::Wdrvi).unwrap(),
            (0.03 - 0.3) / (0.03 + 0.3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn vari_zero_denominator_is_undefined() {
        let v = compute_vi(&sample(0.5, 0.25, 0.25, 0.3, 0.5));
        assert_eq!(v.get(ViIndex::Vari), None);
        assert!(v.is_defined(ViIndex::Ndvi));
    }

    #[test]
    fn all_dark_sample_flags_ratios() {
        let v = compute_vi(&sample(0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(v.get(ViIndex::Ndvi), None);
        assert_eq!(v.get(ViIndex::Kndvi), None);
        assert_eq!(v.get(ViIndex::Tvi), Some(0.0));
    }

    #[test]
    fn names_round_trip() {
        for i in ViIndex::ALL {
            assert_eq!(i.as_str().parse::<ViIndex>().unwrap(), i);
        }
        assert_eq!(ViIndex::ALL.len(), 25);
        assert!("ndvi".parse::<ViIndex>().is_err());
    }

    #[test]
    fn rejects_out_of_range_reflectance() {
        assert!(BandSample::new(0.1, 0.1, 1.2, 0.1, 0.1).is_err());
        assert!(BandSample::new(f64::NAN, 0.1, 0.1, 0.1, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn normalized_indices_bounded(
            b in 0.0..=1.0f64, g in 0.0..=1.0f64, r in 0.0..=1.0f64, re in 0.0..=1.0f64, nir in 0.0..=1.0f64
        ) {
            let v = compute_vi(&sample(b, g, r, re, nir));
            for i in [ViIndex::Ndvi, ViIndex::Gndvi, ViIndex::Ndre, ViIndex::Nli] {
                if let Some(x) = v.get(i) {
                    prop_assert!((-1.0..=1.0).contains(&x), "{} = {}", i, x);
                }
            }
            if let Some(k) = v.get(ViIndex::Kndvi) {
                prop_assert!((0.0..1.0).contains(&k));
            }
            prop_assert!(v.values().iter().flatten().all(|x| x.is_finite()));
        }
    }
}
