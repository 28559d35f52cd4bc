//! Panel ingestion, validation, and preprocessing.
//!
//! `PanelData` owns the unit/time index structure every other module consumes:
//! dense unit and period indices (in order of first appearance), observations
//! sorted by (unit, period), gap-aware per-unit period lists, and the
//! perfect-classification drop bookkeeping.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

/// One long-format row: unit label, integer period, binary outcome, covariates.
#[derive(Debug, Clone)]
pub struct Observation {
    pub unit_id: String,
    pub period_id: i64,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Counts removed by preprocessing, relative to the panel a call started from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropLog {
    pub n_obs_dropped: usize,
    pub n_units_dropped: usize,
    pub n_periods_dropped: usize,
}

/// Immutable long-format panel with dense unit/period indexing.
#[derive(Debug, Clone)]
pub struct PanelData {
    unit_labels: Vec<String>,
    period_labels: Vec<i64>,
    unit_of: Vec<u32>,
    period_of: Vec<u32>,
    y: Vec<f64>,
    x: Vec<f64>, // row-major, n_obs x k
    covariate_names: Vec<String>,
    binary_mask: Vec<bool>,
    ape_binary: Vec<bool>,
    drop_log: DropLog,
    obs_of_unit: Vec<Vec<u32>>,
    obs_of_period: Vec<Vec<u32>>,
}

impl PanelData {
    /// Builds a panel from observations, validating outcomes, covariates, and
    /// index uniqueness. Dense indices preserve the input order of first
    /// appearance; observations are stored sorted by (unit, period).
    pub fn from_observations(
        mut observations: Vec<Observation>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyPanel);
        }
        let k = covariate_names.len();

        let mut unit_labels: Vec<String> = Vec::new();
        let mut unit_index: HashMap<String, u32> = HashMap::new();
        let mut period_labels: Vec<i64> = Vec::new();
        let mut period_index: HashMap<i64, u32> = HashMap::new();
        for obs in &observations {
            if obs.y != 0.0 && obs.y != 1.0 {
                return Err(Error::NonBinaryOutcome {
                    row: 0,
                    value: format!("{}", obs.y),
                });
            }
            if obs.x.len() != k {
                return Err(Error::InsufficientPanel(format!(
                    "observation ({}, {}) has {} covariates, expected {k}",
                    obs.unit_id,
                    obs.period_id,
                    obs.x.len()
                )));
            }
            for (j, v) in obs.x.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::BadCell {
                        row: 0,
                        column: covariate_names[j].clone(),
                        value: format!("{v}"),
                    });
                }
            }
            if !unit_index.contains_key(&obs.unit_id) {
                unit_index.insert(obs.unit_id.clone(), unit_labels.len() as u32);
                unit_labels.push(obs.unit_id.clone());
            }
            if !period_index.contains_key(&obs.period_id) {
                period_index.insert(obs.period_id, period_labels.len() as u32);
                period_labels.push(obs.period_id);
            }
        }

        observations.sort_by(|a, b| {
            (unit_index[&a.unit_id], a.period_id).cmp(&(unit_index[&b.unit_id], b.period_id))
        });
        for w in observations.windows(2) {
            if w[0].unit_id == w[1].unit_id && w[0].period_id == w[1].period_id {
                return Err(Error::DuplicateIndex {
                    unit: w[0].unit_id.clone(),
                    period: w[0].period_id,
                });
            }
        }

        let n = observations.len();
        let mut unit_of = Vec::with_capacity(n);
        let mut period_of = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n * k);
        for obs in &observations {
            unit_of.push(unit_index[&obs.unit_id]);
            period_of.push(period_index[&obs.period_id]);
            y.push(obs.y);
            x.extend_from_slice(&obs.x);
        }

        let mut panel = PanelData {
            unit_labels,
            period_labels,
            unit_of,
            period_of,
            y,
            x,
            covariate_names,
            binary_mask: Vec::new(),
            ape_binary: Vec::new(),
            drop_log: DropLog::default(),
            obs_of_unit: Vec::new(),
            obs_of_period: Vec::new(),
        };
        panel.rebuild_indexes();
        panel.recompute_binary_mask();
        panel.ape_binary = panel.binary_mask.clone();
        for (j, name) in panel.covariate_names.iter().enumerate() {
            let first = panel.x[j];
            if (0..panel.n_obs()).all(|o| panel.x[o * k + j] == first) {
                return Err(Error::ConstantCovariate(name.clone()));
            }
        }
        Ok(panel)
    }

    /// Loads a long-format CSV: header row required, one row per
    /// (unit, period), integer time column, no missing covariate cells.
    pub fn load_csv(
        path: &Path,
        id_col: &str,
        time_col: &str,
        depvar: &str,
        indepvars: &[String],
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let id_idx = col(id_col)?;
        let time_idx = col(time_col)?;
        let y_idx = col(depvar)?;
        let x_idx: Vec<usize> = indepvars.iter().map(|v| col(v)).collect::<Result<_>>()?;

        let mut observations = Vec::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            let row = row_no + 2; // 1-based, after the header
            let unit_id = record.get(id_idx).unwrap_or("").trim().to_string();
            let time_raw = record.get(time_idx).unwrap_or("").trim().to_string();
            let period_id = parse_integer(&time_raw).ok_or_else(|| Error::BadCell {
                row,
                column: time_col.to_string(),
                value: time_raw.clone(),
            })?;
            let y_raw = record.get(y_idx).unwrap_or("").trim().to_string();
            let y: f64 = y_raw.parse().map_err(|_| Error::BadCell {
                row,
                column: depvar.to_string(),
                value: y_raw.clone(),
            })?;
            if y != 0.0 && y != 1.0 {
                return Err(Error::NonBinaryOutcome { row, value: y_raw });
            }
            let mut x = Vec::with_capacity(x_idx.len());
            for (&ci, name) in x_idx.iter().zip(indepvars) {
                let raw = record.get(ci).unwrap_or("").trim().to_string();
                let v: f64 = raw.parse().map_err(|_| Error::BadCell {
                    row,
                    column: name.clone(),
                    value: raw.clone(),
                })?;
                if !v.is_finite() {
                    return Err(Error::BadCell {
                        row,
                        column: name.clone(),
                        value: raw,
                    });
                }
                x.push(v);
            }
            observations.push(Observation {
                unit_id,
                period_id,
                y,
                x,
            });
        }
        Self::from_observations(observations, indepvars.to_vec())
    }

    fn rebuild_indexes(&mut self) {
        self.obs_of_unit = vec![Vec::new(); self.unit_labels.len()];
        self.obs_of_period = vec![Vec::new(); self.period_labels.len()];
        for o in 0..self.n_obs() {
            self.obs_of_unit[self.unit_of[o] as usize].push(o as u32);
            self.obs_of_period[self.period_of[o] as usize].push(o as u32);
        }
        // within a unit, keep observations in period-label order
        let period_labels = &self.period_labels;
        let period_of = &self.period_of;
        for list in &mut self.obs_of_unit {
            list.sort_by_key(|&o| period_labels[period_of[o as usize] as usize]);
        }
        let unit_of = &self.unit_of;
        for list in &mut self.obs_of_period {
            list.sort_by_key(|&o| unit_of[o as usize]);
        }
    }

    fn recompute_binary_mask(&mut self) {
        let k = self.k();
        self.binary_mask = (0..k)
            .map(|j| {
                let mut has0 = false;
                let mut has1 = false;
                for o in 0..self.n_obs() {
                    let v = self.x[o * k + j];
                    if v == 0.0 {
                        has0 = true;
                    } else if v == 1.0 {
                        has1 = true;
                    } else {
                        return false;
                    }
                }
                has0 && has1
            })
            .collect();
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_units(&self) -> usize {
        self.unit_labels.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_labels.len()
    }

    /// max period - min period + 1.
    pub fn t_span(&self) -> i64 {
        let min = self.period_labels.iter().min().unwrap();
        let max = self.period_labels.iter().max().unwrap();
        max - min + 1
    }

    pub fn k(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn y(&self, obs: usize) -> f64 {
        self.y[obs]
    }

    pub fn x_row(&self, obs: usize) -> &[f64] {
        let k = self.k();
        &self.x[obs * k..(obs + 1) * k]
    }

    pub fn x_at(&self, obs: usize, j: usize) -> f64 {
        self.x[obs * self.k() + j]
    }

    pub fn unit_of(&self, obs: usize) -> usize {
        self.unit_of[obs] as usize
    }

    pub fn period_of(&self, obs: usize) -> usize {
        self.period_of[obs] as usize
    }

    pub fn unit_label(&self, unit: usize) -> &str {
        &self.unit_labels[unit]
    }

    pub fn period_label(&self, period: usize) -> i64 {
        self.period_labels[period]
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn period_labels(&self) -> &[i64] {
        &self.period_labels
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn binary_mask(&self) -> &[bool] {
        &self.binary_mask
    }

    /// Effective binary/continuous classification used by the partial-effect
    /// kernel. Defaults to `binary_mask`; may be overridden or inherited.
    pub fn ape_binary(&self) -> &[bool] {
        &self.ape_binary
    }

    pub fn drop_log(&self) -> DropLog {
        self.drop_log
    }

    pub fn obs_of_unit(&self, unit: usize) -> &[u32] {
        &self.obs_of_unit[unit]
    }

    pub fn obs_of_period(&self, period: usize) -> &[u32] {
        &self.obs_of_period[period]
    }

    /// Group-size summary over units: (smallest, average, largest).
    pub fn group_sizes(&self) -> (usize, f64, usize) {
        let mut min = usize::MAX;
        let mut max = 0usize;
        let mut total = 0usize;
        for list in &self.obs_of_unit {
            min = min.min(list.len());
            max = max.max(list.len());
            total += list.len();
        }
        (min, total as f64 / self.n_units() as f64, max)
    }

    /// Overrides the partial-effect treatment of one covariate.
    pub fn with_ape_binary_override(mut self, name: &str, binary: bool) -> Result<Self> {
        let j = self
            .covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        self.ape_binary[j] = binary;
        Ok(self)
    }

    /// Removes units (when `include_i`) and periods (when `include_t`) whose
    /// outcomes are all zero or all one, iterating to a fixed point. The input
    /// panel is unchanged; the returned panel's `drop_log` counts exactly what
    /// this call removed.
    pub fn drop_perfect_classification(&self, include_i: bool, include_t: bool) -> Result<Self> {
        let mut keep_unit = vec![true; self.n_units()];
        let mut keep_period = vec![true; self.n_periods()];
        let obs_alive = |o: usize, ku: &[bool], kp: &[bool]| {
            ku[self.unit_of[o] as usize] && kp[self.period_of[o] as usize]
        };

        loop {
            let mut changed = false;
            if include_i {
                for i in 0..self.n_units() {
                    if !keep_unit[i] {
                        continue;
                    }
                    let mut any = false;
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for &o in &self.obs_of_unit[i] {
                        if obs_alive(o as usize, &keep_unit, &keep_period) {
                            any = true;
                            sum += self.y[o as usize];
                            count += 1;
                        }
                    }
                    if !any || sum == 0.0 || sum == count as f64 {
                        keep_unit[i] = false;
                        changed = true;
                    }
                }
            }
            if include_t {
                for t in 0..self.n_periods() {
                    if !keep_period[t] {
                        continue;
                    }
                    let mut any = false;
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for &o in &self.obs_of_period[t] {
                        if obs_alive(o as usize, &keep_unit, &keep_period) {
                            any = true;
                            sum += self.y[o as usize];
                            count += 1;
                        }
                    }
                    if !any || sum == 0.0 || sum == count as f64 {
                        keep_period[t] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let units: Vec<u32> = (0..self.n_units() as u32)
            .filter(|&i| keep_unit[i as usize])
            .collect();
        let periods: Vec<u32> = (0..self.n_periods() as u32)
            .filter(|&t| keep_period[t as usize])
            .collect();
        if units.is_empty() || periods.is_empty() {
            return Err(Error::EmptyAfterDrop);
        }
        let mut out = self.restrict(&units, &periods)?;
        out.drop_log = DropLog {
            n_obs_dropped: self.n_obs() - out.n_obs(),
            n_units_dropped: self.n_units() - out.n_units(),
            n_periods_dropped: self.n_periods() - out.n_periods(),
        };
        if include_i && out.n_units() < 2 {
            return Err(Error::InsufficientPanel(
                "fewer than 2 units remain with individual effects included".into(),
            ));
        }
        if include_t && out.n_periods() < 2 {
            return Err(Error::InsufficientPanel(
                "fewer than 2 periods remain with time effects included".into(),
            ));
        }
        Ok(out)
    }

    /// Restricts to the given dense unit and period ids (of `self`), keeping
    /// only observed cells. Covariate classification (`ape_binary`) is
    /// inherited from `self`.
    pub(crate) fn restrict(&self, units: &[u32], periods: &[u32]) -> Result<Self> {
        let unit_set: BTreeSet<u32> = units.iter().copied().collect();
        let period_set: BTreeSet<u32> = periods.iter().copied().collect();
        let k = self.k();
        let mut observations = Vec::new();
        for o in 0..self.n_obs() {
            if unit_set.contains(&self.unit_of[o]) && period_set.contains(&self.period_of[o]) {
                observations.push(Observation {
                    unit_id: self.unit_labels[self.unit_of[o] as usize].clone(),
                    period_id: self.period_labels[self.period_of[o] as usize],
                    y: self.y[o],
                    x: self.x[o * k..(o + 1) * k].to_vec(),
                });
            }
        }
        if observations.is_empty() {
            return Err(Error::EmptyAfterDrop);
        }
        let mut unit_labels = Vec::new();
        let mut period_labels = Vec::new();
        let mut unit_of = Vec::with_capacity(observations.len());
        let mut period_of = Vec::with_capacity(observations.len());
        let mut y = Vec::with_capacity(observations.len());
        let mut x = Vec::with_capacity(observations.len() * k);
        let mut unit_index: HashMap<String, u32> = HashMap::new();
        let mut period_index: HashMap<i64, u32> = HashMap::new();
        for obs in &observations {
            unit_index.entry(obs.unit_id.clone()).or_insert_with(|| {
                unit_labels.push(obs.unit_id.clone());
                (unit_labels.len() - 1) as u32
            });
            period_index.entry(obs.period_id).or_insert_with(|| {
                period_labels.push(obs.period_id);
                (period_labels.len() - 1) as u32
            });
        }
        for obs in &observations {
            unit_of.push(unit_index[&obs.unit_id]);
            period_of.push(period_index[&obs.period_id]);
            y.push(obs.y);
            x.extend_from_slice(&obs.x);
        }
        let mut out = PanelData {
            unit_labels,
            period_labels,
            unit_of,
            period_of,
            y,
            x,
            covariate_names: self.covariate_names.clone(),
            binary_mask: Vec::new(),
            ape_binary: self.ape_binary.clone(),
            drop_log: DropLog::default(),
            obs_of_unit: Vec::new(),
            obs_of_period: Vec::new(),
        };
        out.rebuild_indexes();
        out.recompute_binary_mask();
        Ok(out)
    }

    /// All (t - j, t) period-label pairs of `unit` with both periods observed;
    /// pairs spanning a gap are omitted.
    pub fn lag_pairs(&self, unit: &str, j: i64) -> Vec<(i64, i64)> {
        assert!(j >= 1, "lag order must be at least 1");
        let Some(i) = self.unit_labels.iter().position(|l| l == unit) else {
            return Vec::new();
        };
        self.lag_obs_pairs(i, j)
            .into_iter()
            .map(|(a, b)| {
                (
                    self.period_labels[self.period_of[a as usize] as usize],
                    self.period_labels[self.period_of[b as usize] as usize],
                )
            })
            .collect()
    }

    /// Gap-aware lag pairs as observation indices: (obs at t - j, obs at t).
    pub(crate) fn lag_obs_pairs(&self, unit: usize, j: i64) -> Vec<(u32, u32)> {
        let list = &self.obs_of_unit[unit];
        let by_label: HashMap<i64, u32> = list
            .iter()
            .map(|&o| (self.period_labels[self.period_of[o as usize] as usize], o))
            .collect();
        let mut pairs = Vec::new();
        for &o in list {
            let t = self.period_labels[self.period_of[o as usize] as usize];
            if let Some(&prev) = by_label.get(&(t - j)) {
                pairs.push((prev, o));
            }
        }
        pairs
    }
}

fn parse_integer(raw: &str) -> Option<i64> {
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = raw.parse().ok()?;
    if f.fract() == 0.0 && f.abs() < 9.0e15 {
        Some(f as i64)
    } else {
        None
    }
}
