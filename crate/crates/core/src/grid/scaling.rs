use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GenKind, Network};
use crate::error::{Error, Result};

/// Capacity multipliers per generator type and a load multiplier, relative
/// to the base year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearScaling {
    pub coal: f64,
    pub gas: f64,
    pub nuclear: f64,
    pub solar: f64,
    pub wind: f64,
    #[serde(default = "one")]
    pub other: f64,
    pub load: f64,
}

fn one() -> f64 {
    1.0
}

impl YearScaling {
    pub fn identity() -> Self {
        Self {
            coal: 1.0,
            gas: 1.0,
            nuclear: 1.0,
            solar: 1.0,
            wind: 1.0,
            other: 1.0,
            load: 1.0,
        }
    }

    pub fn generation(&self, kind: GenKind) -> f64 {
        match kind {
            GenKind::Coal => self.coal,
            GenKind::Gas => self.gas,
            GenKind::Nuclear => self.nuclear,
            GenKind::Solar => self.solar,
            GenKind::Wind => self.wind,
            GenKind::Other => self.other,
        }
    }

    fn validate(&self, year: u32) -> Result<()> {
        for v in [self.coal, self.gas, self.nuclear, self.solar, self.wind, self.other, self.load] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("year {year}: multipliers must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-year scaling, serialized as a JSON object keyed by year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalingTable {
    pub years: BTreeMap<u32, YearScaling>,
}

impl ScalingTable {
    /// Generation-mix and load projection for a Texas-like system, base year
    /// 2022.
    pub fn texas_projection() -> Self {
        let row = |coal, gas, nuclear, solar, wind, load| YearScaling {
            coal,
            gas,
            nuclear,
            solar,
            wind,
            other: 1.0,
            load,
        };
        Self {
            years: BTreeMap::from([
                (2022, row(1.00, 1.00, 1.00, 1.00, 1.00, 1.00)),
                (2030, row(0.82, 0.79, 0.98, 4.51, 2.02, 1.13)),
                (2035, row(0.82, 0.73, 0.90, 6.00, 2.23, 1.21)),
                (2040, row(0.82, 0.71, 0.80, 6.87, 2.26, 1.31)),
                (2045, row(0.82, 0.72, 0.80, 8.04, 2.32, 1.41)),
            ]),
        }
    }

    /// Load grows by `rate` per year from `base_year`; generation unchanged.
    pub fn load_growth(base_year: u32, years: &[u32], rate: f64) -> Self {
        Self {
            years: years
                .iter()
                .map(|&y| {
                    let mut s = YearScaling::identity();
                    s.load = (1.0 + rate).powi(y as i32 - base_year as i32);
                    (y, s)
                })
                .collect(),
        }
    }

    pub fn get(&self, year: u32) -> Result<&YearScaling> {
        self.years.get(&year).ok_or(Error::UnknownYear(year))
    }

    pub fn validate(&self) -> Result<()> {
        self.years.iter().try_for_each(|(&y, s)| s.validate(y))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::PathIo {
            path: path.to_path_buf(),
            source,
        })?;
        let table: ScalingTable = serde_json::from_str(&text)?;
        table.validate()?;
        Ok(table)
    }
}

/// Scales every generator's capacity (and minimum output) by its type
/// multiplier and every bus base load by the load multiplier. Topology and
/// branch data are untouched.
pub fn apply_year_scaling(net: &Network, table: &ScalingTable, year: u32) -> Result<Network> {
    let s = table.get(year)?;
    let mut out = net.clone();
    for g in &mut out.generators {
        let m = s.generation(g.kind);
        g.capacity *= m;
        g.min_output *= m;
    }
    for b in &mut out.buses {
        b.base_load *= s.load;
    }
    Ok(out)
}
