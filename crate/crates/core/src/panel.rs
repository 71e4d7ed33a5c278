//! Linked survey/register observations and the panel that holds them.
//!
//! Every observation pairs a survey report `Y` with a register value `Y*`
//! for one unit in one calendar year. The measurement error is defined on
//! the log scale, `u = ln Y - ln Y*`, with nominal and relative variants
//! derived from the same pair.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Survey module an observation was sampled in. Weighted estimates must not
/// pool across modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleTag {
    Core,
    Innovation,
}

impl ModuleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModuleTag::Core => "core",
            ModuleTag::Innovation => "innovation",
        }
    }
}

impl std::str::FromStr for ModuleTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "core" => Ok(ModuleTag::Core),
            "innovation" | "is" => Ok(ModuleTag::Innovation),
            other => Err(Error::domain("module_tag", format!("unknown module `{other}`"))),
        }
    }
}

/// One person-period of linked data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedObservation {
    pub unit_id: String,
    pub period: i32,
    /// Reported gross monthly income.
    pub survey_income: Option<f64>,
    /// Register gross monthly income, taken as the true signal.
    pub register_income: Option<f64>,
    pub employed: bool,
    pub weight: f64,
    pub covariates: BTreeMap<String, f64>,
    pub module_tag: ModuleTag,
}

impl LinkedObservation {
    pub fn new(unit_id: impl Into<String>, period: i32) -> Self {
        LinkedObservation {
            unit_id: unit_id.into(),
            period,
            survey_income: None,
            register_income: None,
            employed: true,
            weight: 1.0,
            covariates: BTreeMap::new(),
            module_tag: ModuleTag::Core,
        }
    }

    pub fn with_incomes(mut self, survey: f64, register: f64) -> Self {
        self.survey_income = Some(survey);
        self.register_income = Some(register);
        self
    }

    pub fn with_covariate(mut self, name: impl Into<String>, value: f64) -> Self {
        self.covariates.insert(name.into(), value);
        self
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.covariates.get(name).copied()
    }

    /// Both incomes present and strictly positive.
    pub fn has_valid_incomes(&self) -> bool {
        matches!(
            (self.survey_income, self.register_income),
            (Some(y), Some(ys)) if y > 0.0 && ys > 0.0
        )
    }

    pub fn log_register(&self) -> Option<f64> {
        self.register_income.filter(|v| *v > 0.0).map(f64::ln)
    }

    pub fn log_survey(&self) -> Option<f64> {
        self.survey_income.filter(|v| *v > 0.0).map(f64::ln)
    }

    /// Log measurement error `u`, if both incomes are usable.
    pub fn log_error(&self) -> Option<f64> {
        compute_error_triple(self).ok().map(|e| e.log_error)
    }
}

/// The three notions of reporting error for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    /// `ln Y - ln Y*`
    pub log_error: f64,
    /// `Y - Y*`, in currency units.
    pub nominal_error: f64,
    /// `(Y - Y*) / Y*`
    pub relative_error: f64,
}

/// Which error notion a descriptive statistic is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNotion {
    Log,
    Nominal,
    Relative,
}

impl ErrorTriple {
    pub fn get(&self, notion: ErrorNotion) -> f64 {
        match notion {
            ErrorNotion::Log => self.log_error,
            ErrorNotion::Nominal => self.nominal_error,
            ErrorNotion::Relative => self.relative_error,
        }
    }
}

fn positive_income(value: Option<f64>, field: &str) -> Result<f64> {
    match value {
        None => Err(Error::domain(field, "income is missing")),
        Some(v) if !v.is_finite() || v <= 0.0 => {
            Err(Error::domain(field, format!("income must be positive and finite, got {v}")))
        }
        Some(v) => Ok(v),
    }
}

pub fn compute_error_triple(obs: &LinkedObservation) -> Result<ErrorTriple> {
    let survey = positive_income(obs.survey_income, "survey_income")?;
    let register = positive_income(obs.register_income, "register_income")?;
    let log_error = survey.ln() - register.ln();
    let nominal_error = survey - register;
    Ok(ErrorTriple {
        log_error,
        nominal_error,
        relative_error: nominal_error / register,
    })
}

/// An immutable, deterministically ordered collection of observations keyed
/// by `(unit_id, period)`, optionally carrying event time per observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    observations: Vec<LinkedObservation>,
    event_time: Option<Vec<u32>>,
}

fn validate(obs: &LinkedObservation) -> Result<()> {
    for (field, value) in [
        ("survey_income", obs.survey_income),
        ("register_income", obs.register_income),
    ] {
        if let Some(v) = value {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::domain(
                    field,
                    format!("({}, {}): income must be positive, got {v}", obs.unit_id, obs.period),
                ));
            }
        }
    }
    if !obs.weight.is_finite() || obs.weight < 0.0 {
        return Err(Error::domain(
            "weight",
            format!("({}, {}): weight must be >= 0, got {}", obs.unit_id, obs.period, obs.weight),
        ));
    }
    Ok(())
}

fn key_order(a: &LinkedObservation, b: &LinkedObservation) -> std::cmp::Ordering {
    a.unit_id.cmp(&b.unit_id).then(a.period.cmp(&b.period))
}

pub fn panel_from_records(records: Vec<LinkedObservation>) -> Result<Panel> {
    Panel::from_records(records)
}

impl Panel {
    pub fn from_records(mut records: Vec<LinkedObservation>) -> Result<Panel> {
        for obs in &records {
            validate(obs)?;
        }
        records.sort_by(key_order);
        for pair in records.windows(2) {
            if pair[0].unit_id == pair[1].unit_id && pair[0].period == pair[1].period {
                return Err(Error::DuplicateKey {
                    unit_id: pair[0].unit_id.clone(),
                    period: pair[0].period,
                });
            }
        }
        Ok(Panel {
            observations: records,
            event_time: None,
        })
    }

    /// Builds a panel whose observations carry event times. Input must already
    /// be sorted and unique; used by the balancing routines.
    pub(crate) fn with_event_times(observations: Vec<LinkedObservation>, times: Vec<u32>) -> Panel {
        debug_assert_eq!(observations.len(), times.len());
        debug_assert!(observations.windows(2).all(|w| key_order(&w[0], &w[1]).is_lt()));
        Panel {
            observations,
            event_time: Some(times),
        }
    }

    pub fn observations(&self) -> &[LinkedObservation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<LinkedObservation> {
        self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn has_event_time(&self) -> bool {
        self.event_time.is_some()
    }

    pub fn event_time(&self, index: usize) -> Option<u32> {
        self.event_time.as_ref().map(|t| t[index])
    }

    /// Iterates `(observation, event_time)` pairs.
    pub fn iter_timed(&self) -> impl Iterator<Item = (&LinkedObservation, Option<u32>)> {
        self.observations
            .iter()
            .enumerate()
            .map(move |(i, o)| (o, self.event_time(i)))
    }

    pub fn unit_count(&self) -> usize {
        let mut n = 0;
        let mut last: Option<&str> = None;
        for obs in &self.observations {
            if last != Some(obs.unit_id.as_str()) {
                n += 1;
                last = Some(&obs.unit_id);
            }
        }
        n
    }

    pub fn unit_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.observations.iter().map(|o| o.unit_id.as_str()).collect();
        ids.dedup();
        ids
    }

    /// Contiguous index ranges, one per unit, in unit order.
    pub fn unit_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 1..=self.observations.len() {
            if i == self.observations.len()
                || self.observations[i].unit_id != self.observations[start].unit_id
            {
                if i > start {
                    ranges.push(start..i);
                }
                start = i;
            }
        }
        ranges
    }

    /// Keeps observations for which `keep` is true, preserving event times.
    pub fn filter<F>(&self, mut keep: F) -> Panel
    where
        F: FnMut(&LinkedObservation, Option<u32>) -> bool,
    {
        let mut observations = Vec::new();
        let mut times = Vec::new();
        for (i, obs) in self.observations.iter().enumerate() {
            let t = self.event_time(i);
            if keep(obs, t) {
                observations.push(obs.clone());
                if let Some(t) = t {
                    times.push(t);
                }
            }
        }
        Panel {
            observations,
            event_time: self.event_time.as_ref().map(|_| times),
        }
    }

    /// Union of covariate names over all observations, sorted.
    pub fn covariate_names(&self) -> Vec<String> {
        let names: BTreeSet<&String> =
            self.observations.iter().flat_map(|o| o.covariates.keys()).collect();
        names.into_iter().cloned().collect()
    }

    pub fn modules(&self) -> BTreeSet<ModuleTag> {
        self.observations.iter().map(|o| o.module_tag).collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Panel> {
        Panel::from_records(read_observations(reader)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_observations(&self.observations, writer)
    }
}

const FIXED_COLUMNS: [&str; 7] = [
    "unit_id",
    "period",
    "survey_income",
    "register_income",
    "employed",
    "weight",
    "module_tag",
];

fn parse_opt_f64(cell: &str, column: &str, row: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Data(format!("row {row}: column `{column}`: cannot parse `{cell}` as a number")))
}

pub(crate) fn parse_bool(cell: &str, column: &str, row: usize) -> Result<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(Error::Data(format!("row {row}: column `{column}`: expected a boolean, got `{other}`"))),
    }
}

/// Reads the linked-panel CSV schema. The header is required; columns after
/// the fixed ones are covariates, and an empty cell means missing.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<LinkedObservation>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index_of = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut fixed = [0usize; 7];
    for (slot, name) in fixed.iter_mut().zip(FIXED_COLUMNS) {
        *slot = match index_of(name) {
            Some(i) => i,
            None if name == "weight" || name == "module_tag" || name == "employed" => usize::MAX,
            None => return Err(Error::Data(format!("panel CSV is missing column `{name}`"))),
        };
    }
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIXED_COLUMNS.contains(&h.trim()))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut out = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_no + 2;
        let cell = |i: usize| if i == usize::MAX { "" } else { record.get(i).unwrap_or("") };
        let unit_id = cell(fixed[0]).trim().to_string();
        if unit_id.is_empty() {
            return Err(Error::Data(format!("row {row}: empty unit_id")));
        }
        let period = cell(fixed[1])
            .trim()
            .parse::<i32>()
            .map_err(|_| Error::Data(format!("row {row}: column `period` is not an integer")))?;
        let employed = match cell(fixed[4]).trim() {
            "" => true,
            s => parse_bool(s, "employed", row)?,
        };
        let weight = parse_opt_f64(cell(fixed[5]), "weight", row)?.unwrap_or(1.0);
        let module_tag = cell(fixed[6]).parse::<ModuleTag>()?;
        let mut covariates = BTreeMap::new();
        for (i, name) in &covariate_cols {
            if let Some(v) = parse_opt_f64(cell(*i), name, row)? {
                covariates.insert(name.clone(), v);
            }
        }
        out.push(LinkedObservation {
            unit_id,
            period,
            survey_income: parse_opt_f64(cell(fixed[2]), "survey_income", row)?,
            register_income: parse_opt_f64(cell(fixed[3]), "register_income", row)?,
            employed,
            weight,
            covariates,
            module_tag,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_observations<W: Write>(observations: &[LinkedObservation], writer: W) -> Result<()> {
    let names: BTreeSet<&String> = observations.iter().flat_map(|o| o.covariates.keys()).collect();
    for name in &names {
        if FIXED_COLUMNS.contains(&name.as_str()) {
            return Err(Error::Data(format!("covariate name `{name}` collides with a fixed column")));
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(names.iter().map(|s| s.as_str()));
    wtr.write_record(&header)?;
    for obs in observations {
        let mut row = vec![
            obs.unit_id.clone(),
            obs.period.to_string(),
            fmt_opt(obs.survey_income),
            fmt_opt(obs.register_income),
            if obs.employed { "1".into() } else { "0".into() },
            obs.weight.to_string(),
            obs.module_tag.as_str().to_string(),
        ];
        row.extend(names.iter().map(|n| fmt_opt(obs.covariates.get(*n).copied())));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
