//! Representative days: annual series ingestion, max-min diversity
//! selection, and materialization into per-bus / per-generator hourly data.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Network, ScalingTable, YearScaling};

pub const HOURS_PER_DAY: usize = 24;

/// Hourly system load plus capacity-factor series keyed by column suffix
/// (`wind`, `solar`, or a generator id for per-site data).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualSeries {
    pub system_load: Vec<f64>,
    pub capacity_factors: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayProfile {
    /// Day of year, 1-based.
    pub day: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySelection {
    /// Days of year in pick order.
    pub days: Vec<usize>,
    pub weights: Vec<f64>,
}

/// One representative day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub weight: f64,
    /// `load[t][bus]`, MW.
    pub load: Vec<Vec<f64>>,
    /// `gen_max[t][g]`, MW.
    pub gen_max: Vec<Vec<f64>>,
    /// `gen_min[t][g]`, MW.
    pub gen_min: Vec<Vec<f64>>,
}

impl AnnualSeries {
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::PathIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(file)
    }

    /// Parses `hour, system_load_mw, cf_wind, cf_solar[, cf_<site>...]`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let load_col = col("system_load_mw")
            .ok_or_else(|| Error::InvalidInput("annual series lacks a system_load_mw column".into()))?;
        let cf_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix("cf_").map(|k| (i, k.to_string())))
            .collect();
        let mut out = AnnualSeries {
            system_load: Vec::new(),
            capacity_factors: cf_cols.iter().map(|(_, k)| (k.clone(), Vec::new())).collect(),
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("row {}: column {} is not a number", line + 2, &headers[i])))
            };
            out.system_load.push(num(load_col)?);
            for (i, k) in &cf_cols {
                let v = num(*i)?;
                out.capacity_factors.get_mut(k).expect("declared column").push(v);
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system_load.len();
        if n == 0 || !n.is_multiple_of(HOURS_PER_DAY) {
            return Err(Error::InvalidInput(format!("series length {n} is not a positive multiple of 24")));
        }
        if let Some(v) = self.system_load.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("system load {v} is not a nonnegative number")));
        }
        for (k, cf) in &self.capacity_factors {
            if cf.len() != n {
                return Err(Error::InvalidInput(format!("cf_{k} has {} values, load has {n}", cf.len())));
            }
            if let Some(v) = cf.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!("cf_{k} value {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn num_days(&self) -> usize {
        self.system_load.len() / HOURS_PER_DAY
    }

    fn day_slice(series: &[f64], day: usize) -> &[f64] {
        &series[(day - 1) * HOURS_PER_DAY..day * HOURS_PER_DAY]
    }
}

/// Concatenated 24-h load and capacity-factor profiles per day, each
/// dimension min-max normalized across days. Constant dimensions are zero.
pub fn build_day_profiles(series: &AnnualSeries) -> Result<Vec<DayProfile>> {
    series.validate()?;
    let days = series.num_days();
    let blocks: Vec<&Vec<f64>> = std::iter::once(&series.system_load)
        .chain(series.capacity_factors.values())
        .collect();
    let dim = blocks.len() * HOURS_PER_DAY;
    let mut raw = vec![vec![0.0; dim]; days];
    for (d, row) in raw.iter_mut().enumerate() {
        for (b, s) in blocks.iter().enumerate() {
            row[b * HOURS_PER_DAY..(b + 1) * HOURS_PER_DAY].copy_from_slice(AnnualSeries::day_slice(s, d + 1));
        }
    }
    for j in 0..dim {
        let (lo, hi) = raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        for r in raw.iter_mut() {
            r[j] = if hi > lo { (r[j] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(d, features)| DayProfile { day: d + 1, features })
        .collect())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Greedy max-min diversity selection with equal weights.
///
/// Seeds with the farthest pair, then repeatedly adds the day whose distance
/// to the nearest selected day is largest. Ties go to the lowest day number.
pub fn select_representative_days(profiles: &[DayProfile], k_r: usize) -> Result<DaySelection> {
    if k_r == 0 || k_r > profiles.len() {
        return Err(Error::InvalidInput(format!(
            "k_r = {k_r} must lie in 1..={}",
            profiles.len()
        )));
    }
    // Work in day order so every tie-break is by day number.
    let mut order: Vec<&DayProfile> = profiles.iter().collect();
    order.sort_by_key(|p| p.day);
    let n = order.len();
    let dist = |i: usize, j: usize| distance(&order[i].features, &order[j].features);

    let mut picked: Vec<usize> = Vec::with_capacity(k_r);
    if n == 1 {
        picked.push(0);
    } else {
        let mut best = (f64::NEG_INFINITY, 0, 1);
        for i in 0..n {
            for j in i + 1..n {
                let d = dist(i, j);
                if d > best.0 {
                    best = (d, i, j);
                }
            }
        }
        picked.push(best.1);
        if k_r >= 2 {
            picked.push(best.2);
        }
    }
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| picked.iter().map(|&p| dist(i, p)).fold(f64::INFINITY, f64::min))
        .collect();
    while picked.len() < k_r {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if picked.contains(&i) {
                continue;
            }
            if best.is_none_or(|(d, _)| nearest[i] > d) {
                best = Some((nearest[i], i));
            }
        }
        let (_, next) = best.expect("k_r <= number of days");
        picked.push(next);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist(i, next));
        }
    }
    Ok(DaySelection {
        days: picked.iter().map(|&i| order[i].day).collect(),
        weights: vec![1.0 / k_r as f64; k_r],
    })
}

/// Smallest pairwise distance within a set of days.
pub fn min_pairwise_distance(profiles: &[DayProfile], days: &[usize]) -> f64 {
    let feats: Vec<&[f64]> = days
        .iter()
        .filter_map(|d| profiles.iter().find(|p| p.day == *d).map(|p| p.features.as_slice()))
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            best = best.min(distance(feats[i], feats[j]));
        }
    }
    best
}

impl DaySelection {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|source| Error::PathIo {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Builds one scenario per selected day for the given planning year.
///
/// `net` carries base-year loads and capacities; the year's multipliers from
/// `table` are applied here.
pub fn materialize_scenarios(
    net: &Network,
    series: &AnnualSeries,
    selection: &DaySelection,
    year: u32,
    table: &ScalingTable,
) -> Result<Vec<Scenario>> {
    let ys = table.get(year)?;
    let total = net.total_base_load();
    let shares: Vec<f64> = net
        .buses
        .iter()
        .map(|b| if total > 0.0 { b.base_load / total } else { 0.0 })
        .collect();
    let mut cf_for = Vec::with_capacity(net.generators.len());
    for g in &net.generators {
        if !g.is_renewable() {
            cf_for.push(None);
            continue;
        }
        let site = g.id.to_string();
        let kind = serde_json::to_value(g.kind)?.as_str().unwrap_or_default().to_string();
        let cf = series
            .capacity_factors
            .get(&site)
            .or_else(|| series.capacity_factors.get(&kind))
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "generator {} ({kind}) has no cf_{site} or cf_{kind} series",
                    g.id
                ))
            })?;
        cf_for.push(Some(cf));
    }
    if selection.days.len() != selection.weights.len() {
        return Err(Error::DimensionMismatch("selection days and weights differ in length".into()));
    }
    selection
        .days
        .iter()
        .zip(&selection.weights)
        .map(|(&day, &weight)| {
            if day == 0 || day > series.num_days() {
                return Err(Error::InvalidInput(format!("day {day} is outside the series")));
            }
            let loads = AnnualSeries::day_slice(&series.system_load, day);
            let mut sc = Scenario {
                id: format!("day-{day}"),
                weight,
                load: loads
                    .iter()
                    .map(|&l| shares.iter().map(|s| s * l * ys.load).collect())
                    .collect(),
                gen_max: Vec::with_capacity(HOURS_PER_DAY),
                gen_min: Vec::with_capacity(HOURS_PER_DAY),
            };
            for h in 0..HOURS_PER_DAY {
                let (mut hi, mut lo) = (Vec::new(), Vec::new());
                for (g, cf) in net.generators.iter().zip(&cf_for) {
                    let cap = g.capacity * ys.generation(g.kind);
                    match cf {
                        Some(cf) => {
                            hi.push(cap * AnnualSeries::day_slice(cf, day)[h]);
                            lo.push(0.0);
                        }
                        None => {
                            hi.push(cap);
                            lo.push(g.min_output * ys.generation(g.kind));
                        }
                    }
                }
                sc.gen_max.push(hi);
                sc.gen_min.push(lo);
            }
            Ok(sc)
        })
        .collect()
}

impl Scenario {
    /// Scenario whose every hour repeats the given bus loads with generator
    /// bounds taken from the network.
    pub fn flat(id: impl Into<String>, weight: f64, net: &Network, load: Vec<f64>, hours: usize) -> Self {
        let hi: Vec<f64> = net.generators.iter().map(|g| g.capacity).collect();
        let lo: Vec<f64> = net.generators.iter().map(|g| g.min_output).collect();
        Scenario {
            id: id.into(),
            weight,
            load: vec![load; hours],
            gen_max: vec![hi; hours],
            gen_min: vec![lo; hours],
        }
    }

    pub fn hours(&self) -> usize {
        self.load.len()
    }

    pub fn total_load(&self, t: usize) -> f64 {
        self.load[t].iter().sum()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let t = self.hours();
        if t == 0 || self.gen_max.len() != t || self.gen_min.len() != t {
            return Err(Error::DimensionMismatch(format!("scenario {} has inconsistent hour counts", self.id)));
        }
        for h in 0..t {
            if self.load[h].len() != net.num_buses()
                || self.gen_max[h].len() != net.generators.len()
                || self.gen_min[h].len() != net.generators.len()
            {
                return Err(Error::DimensionMismatch(format!(
                    "scenario {} hour {h} does not match the network dimensions",
                    self.id
                )));
            }
            if self.load[h].iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidInput(format!("scenario {} hour {h} has a negative load", self.id)));
            }
            for (lo, hi) in self.gen_min[h].iter().zip(&self.gen_max[h]) {
                if !(*lo >= 0.0 && lo <= hi) {
                    return Err(Error::InvalidInput(format!(
                        "scenario {} hour {h} has generator bounds [{lo}, {hi}]",
                        self.id
                    )));
                }
            }
        }
        if !(self.weight > 0.0) {
            return Err(Error::InvalidInput(format!("scenario {} has weight {}", self.id, self.weight)));
        }
        Ok(())
    }

    /// Applies a year's load and per-type generation multipliers.
    pub fn scaled(&self, net: &Network, ys: &YearScaling) -> Scenario {
        let mut out = self.clone();
        for row in out.load.iter_mut() {
            row.iter_mut().for_each(|v| *v *= ys.load);
        }
        for (hi, lo) in out.gen_max.iter_mut().zip(out.gen_min.iter_mut()) {
            for (g, gen) in net.generators.iter().enumerate() {
                let m = ys.generation(gen.kind);
                hi[g] *= m;
                lo[g] *= m;
            }
        }
        out
    }
}

/// Checks each scenario and that the weights form a distribution.
pub fn validate_scenarios(net: &Network, scenarios: &[Scenario]) -> Result<()> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    for s in scenarios {
        s.validate(net)?;
    }
    let total: f64 = scenarios.iter().map(|s| s.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("scenario weights sum to {total}, not 1")));
    }
    Ok(())
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::PathIo {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn profiles(points: &[Vec<f64>]) -> Vec<DayProfile> {
        points
            .iter()
            .enumerate()
            .map(|(i, f)| DayProfile { day: i + 1, features: f.clone() })
            .collect()
    }

    fn series(days: usize, load: impl Fn(usize) -> f64) -> AnnualSeries {
        AnnualSeries {
            system_load: (0..days * 24).map(&load).collect(),
            capacity_factors: BTreeMap::from([
                ("wind".to_string(), vec![0.5; days * 24]),
                ("solar".to_string(), (0..days * 24).map(|h| (h % 24) as f64 / 24.0).collect()),
            ]),
        }
    }

    #[test]
    fn constant_load_gives_zero_features() {
        let p = build_day_profiles(&series(5, |_| 100.0)).unwrap();
        assert!(p.iter().all(|d| d.features[..24].iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn two_days_normalize_to_zero_and_one() {
        let p = build_day_profiles(&series(2, |h| if h < 24 { 100.0 } else { 200.0 })).unwrap();
        assert!(p[0].features[..24].iter().all(|&v| v == 0.0));
        assert!(p[1].features[..24].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn full_year_has_365_profiles() {
        let p = build_day_profiles(&series(365, |h| (h % 97) as f64)).unwrap();
        assert_eq!(p.len(), 365);
        assert!(p.iter().all(|d| d.features.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn farthest_pair_on_a_line() {
        let s = select_representative_days(&profiles(&[vec![0.0], vec![0.5], vec![1.0]]), 2).unwrap();
        assert_eq!(s.days, vec![1, 3]);
        assert_eq!(s.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn all_days_when_k_equals_count() {
        let p = profiles(&[vec![0.0], vec![0.2], vec![0.9], vec![0.4]]);
        let mut s = select_representative_days(&p, 4).unwrap();
        s.days.sort();
        assert_eq!(s.days, vec![1, 2, 3, 4]);
    }

    #[test]
    fn square_corners_break_ties_low() {
        let p = profiles(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let s = select_representative_days(&p, 3).unwrap();
        assert_eq!(s.days, vec![1, 4, 2]);
        assert!((min_pairwise_distance(&p, &s.days) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let p = profiles(&[vec![0.0], vec![1.0]]);
        assert!(select_representative_days(&p, 0).is_err());
        assert!(select_representative_days(&p, 3).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "hour,system_load_mw,cf_wind,cf_solar\n".to_string()
            + &(0..48).map(|h| format!("{h},{},0.3,0.1\n", 100 + h)).collect::<String>();
        let s = AnnualSeries::from_csv(text.as_bytes()).unwrap();
        assert_eq!(s.num_days(), 2);
        assert_eq!(s.capacity_factors["wind"][5], 0.3);
        assert!(AnnualSeries::from_csv("hour,system_load_mw\n0,1\n".as_bytes()).is_err());
        let bad = "hour,system_load_mw,cf_wind\n".to_string() + &(0..24).map(|h| format!("{h},1,1.5\n")).collect::<String>();
        assert!(AnnualSeries::from_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn load_share_and_year_multiplier() {
        let mut net = fixtures::f3();
        net.buses[0].base_load = 10.0;
        net.buses[1].base_load = 90.0;
        let table = ScalingTable::texas_projection();
        let sel = DaySelection { days: vec![1], weights: vec![1.0] };
        let sc = materialize_scenarios(&net, &series(1, |_| 100.0), &sel, 2030, &table).unwrap();
        assert!((sc[0].load[0][0] - 11.3).abs() < 1e-9);
        // Conventional bounds are flat across the day.
        assert!(sc[0].gen_max.iter().all(|h| h == &sc[0].gen_max[0]));
    }

    #[test]
    fn wind_capacity_factor_applies_after_scaling() {
        let mut net = fixtures::f3();
        net.generators[0].kind = crate::grid::GenKind::Wind;
        net.generators[0].capacity = 50.0;
        net.generators[0].min_output = 0.0;
        let sel = DaySelection { days: vec![1], weights: vec![1.0] };
        let sc = materialize_scenarios(&net, &series(1, |_| 100.0), &sel, 2030, &ScalingTable::texas_projection()).unwrap();
        assert!((sc[0].gen_max[3][0] - 50.5).abs() < 1e-9);
    }

    #[test]
    fn missing_renewable_series_is_reported() {
        let mut net = fixtures::f3();
        net.generators[0].kind = crate::grid::GenKind::Solar;
        net.generators[0].min_output = 0.0;
        let mut s = series(1, |_| 1.0);
        s.capacity_factors.remove("solar");
        let sel = DaySelection { days: vec![1], weights: vec![1.0] };
        assert!(materialize_scenarios(&net, &s, &sel, 2030, &ScalingTable::texas_projection()).is_err());
    }

    proptest! {
        #[test]
        fn greedy_step_is_locally_optimal(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 4..12),
            k in 2usize..4,
        ) {
            let p = profiles(&pts);
            let s = select_representative_days(&p, k).unwrap();
            let value = min_pairwise_distance(&p, &s.days);
            let head = &s.days[..k - 1];
            for d in p.iter().map(|d| d.day).filter(|d| !s.days.contains(d)) {
                let mut alt = head.to_vec();
                alt.push(d);
                prop_assert!(value >= min_pairwise_distance(&p, &alt) - 1e-12);
            }
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn selection_ignores_input_order(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2), 3..10),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let p = profiles(&pts);
            let mut shuffled = p.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = select_representative_days(&p, 3).unwrap();
            let b = select_representative_days(&shuffled, 3).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
