//! Survey/register harmonization: main-spell selection, daily to monthly
//! conversion, and the ordered sample-restriction pipeline with its ledger.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{parse_bool, LinkedObservation, ModuleTag, Panel};

/// Covariate names the restriction steps read.
pub mod columns {
    pub const OCCUPATION: &str = "occupation";
    pub const BIRTH_YEAR: &str = "birth_year";
    pub const REGISTER_BIRTH_YEAR: &str = "register_birth_year";
    pub const PROXY: &str = "proxy";
    pub const AGE: &str = "age";
    pub const IMPUTED: &str = "imputed";
    pub const MULTIPLE_SPELLS: &str = "multiple_spells";
}

/// Average days per month: seven 31-day months, four 30-day months and a
/// February of 28.75 days on average.
pub const DAYS_PER_MONTH: f64 = 7.0 / 12.0 * 31.0 + 4.0 / 12.0 * 30.0 + 1.0 / 12.0 * 28.75;

pub fn daily_to_monthly(daily_income: f64) -> Result<f64> {
    if !daily_income.is_finite() || daily_income < 0.0 {
        return Err(Error::domain(
            "daily_income",
            format!("must be finite and >= 0, got {daily_income}"),
        ));
    }
    Ok(daily_income * DAYS_PER_MONTH)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpellKind {
    Employment,
    UnemploymentBenefit,
    OneTimePayment,
}

impl std::str::FromStr for SpellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "employment" => Ok(SpellKind::Employment),
            "unemployment_benefit" => Ok(SpellKind::UnemploymentBenefit),
            "one_time_payment" => Ok(SpellKind::OneTimePayment),
            other => Err(Error::domain("spell_kind", format!("unknown spell kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterSpell {
    pub unit_id: String,
    pub spell_id: u64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub daily_income: f64,
    pub spell_kind: SpellKind,
    pub employer_attrs: BTreeMap<String, f64>,
}

impl RegisterSpell {
    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::domain(
                "start",
                format!("spell {} of unit {} starts after it ends", self.spell_id, self.unit_id),
            ));
        }
        if !self.daily_income.is_finite() || self.daily_income < 0.0 {
            return Err(Error::domain(
                "daily_income",
                format!("spell {} of unit {}: {}", self.spell_id, self.unit_id, self.daily_income),
            ));
        }
        Ok(())
    }

    /// True when the spell overlaps any day of the given month.
    pub fn covers(&self, month: YearMonth) -> bool {
        let (first, last) = month.bounds();
        self.start <= last && self.end >= first
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::domain("month", format!("{month} is not in 1..=12")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn previous(self) -> YearMonth {
        if self.month == 1 {
            YearMonth { year: self.year - 1, month: 12 }
        } else {
            YearMonth { year: self.year, month: self.month - 1 }
        }
    }

    fn bounds(self) -> (NaiveDate, NaiveDate) {
        let first = NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month");
        let next = if self.month == 12 {
            NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(self.year, self.month + 1, 1)
        }
        .expect("valid month");
        (first, next.pred_opt().expect("not the first representable day"))
    }
}

impl From<NaiveDate> for YearMonth {
    fn from(d: NaiveDate) -> Self {
        YearMonth { year: d.year(), month: d.month() }
    }
}

/// Picks the highest-paying employment spell covering `reference_month`.
/// Benefit spells and one-time payments never qualify; equal pay is broken
/// by the lowest `spell_id`.
pub fn select_main_spell(spells: &[RegisterSpell], reference_month: YearMonth) -> Option<&RegisterSpell> {
    spells
        .iter()
        .filter(|s| s.spell_kind == SpellKind::Employment && s.covers(reference_month))
        .min_by(|a, b| {
            b.daily_income
                .total_cmp(&a.daily_income)
                .then(a.spell_id.cmp(&b.spell_id))
        })
}

/// One survey interview, before linkage.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRecord {
    pub unit_id: String,
    pub period: i32,
    pub interview_month: u32,
    pub survey_income: Option<f64>,
    pub employed: bool,
    pub weight: f64,
    pub module_tag: ModuleTag,
    pub covariates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: String,
    pub units_remaining: usize,
    pub observations_remaining: usize,
    pub units_by_module: BTreeMap<ModuleTag, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RestrictionLedger {
    pub entries: Vec<LedgerEntry>,
}

impl RestrictionLedger {
    pub fn record(&mut self, step: &str, observations: &[LinkedObservation]) {
        let units: BTreeSet<&str> = observations.iter().map(|o| o.unit_id.as_str()).collect();
        let mut by_module: BTreeMap<ModuleTag, BTreeSet<&str>> = BTreeMap::new();
        for o in observations {
            by_module.entry(o.module_tag).or_default().insert(&o.unit_id);
        }
        log::debug!("{step}: {} units, {} observations", units.len(), observations.len());
        self.entries.push(LedgerEntry {
            step: step.to_string(),
            units_remaining: units.len(),
            observations_remaining: observations.len(),
            units_by_module: by_module.into_iter().map(|(k, v)| (k, v.len())).collect(),
        });
    }

    pub fn extend(&mut self, other: RestrictionLedger) {
        self.entries.extend(other.entries);
    }

    pub fn counts(&self) -> Vec<(&str, usize, usize)> {
        self.entries
            .iter()
            .map(|e| (e.step.as_str(), e.units_remaining, e.observations_remaining))
            .collect()
    }
}

/// Links survey interviews to the main register spell of the month before
/// the interview. Interviews without a usable survey income or without a
/// qualifying spell are dropped; the ledger records the survey input and the
/// matched panel.
pub fn link_records(
    spells: &[RegisterSpell],
    survey: &[SurveyRecord],
) -> Result<(Panel, RestrictionLedger)> {
    let mut by_unit: HashMap<&str, Vec<RegisterSpell>> = HashMap::new();
    for s in spells {
        s.validate()?;
        by_unit.entry(s.unit_id.as_str()).or_default().push(s.clone());
    }
    let survey_obs: Vec<LinkedObservation> = survey.iter().map(survey_to_observation).collect();
    let mut ledger = RestrictionLedger::default();
    ledger.record("survey_records", &survey_obs);

    let mut linked = Vec::new();
    for (rec, mut obs) in survey.iter().zip(survey_obs) {
        if !rec.employed || !matches!(rec.survey_income, Some(y) if y > 0.0) {
            continue;
        }
        let reference = YearMonth::new(rec.period, rec.interview_month)?.previous();
        let unit_spells = by_unit.get(rec.unit_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let Some(main) = select_main_spell(unit_spells, reference) else {
            continue;
        };
        let monthly = daily_to_monthly(main.daily_income)?;
        if monthly <= 0.0 {
            continue;
        }
        let covering = unit_spells
            .iter()
            .filter(|s| s.spell_kind == SpellKind::Employment && s.covers(reference))
            .count();
        obs.register_income = Some(monthly);
        for (k, v) in &main.employer_attrs {
            obs.covariates.entry(k.clone()).or_insert(*v);
        }
        obs.covariates
            .insert(columns::MULTIPLE_SPELLS.to_string(), if covering > 1 { 1.0 } else { 0.0 });
        linked.push(obs);
    }
    ledger.record("matched_spells", &linked);
    Ok((Panel::from_records(linked)?, ledger))
}

fn survey_to_observation(rec: &SurveyRecord) -> LinkedObservation {
    LinkedObservation {
        unit_id: rec.unit_id.clone(),
        period: rec.period,
        survey_income: rec.survey_income,
        register_income: None,
        employed: rec.employed,
        weight: rec.weight,
        covariates: rec.covariates.clone(),
        module_tag: rec.module_tag,
    }
}

/// Whether an observation must exceed the cap against one or both
/// denominators to be dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorCapRule {
    /// Drop when either ratio exceeds the cap.
    #[default]
    Either,
    /// Drop only when both ratios exceed the cap.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentLimit {
    pub year: i32,
    pub region: String,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalLimit {
    pub year: i32,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestrictionConfig {
    pub assessment_limits: Vec<AssessmentLimit>,
    pub assessment_cap_fraction: f64,
    pub marginal_limits: Vec<MarginalLimit>,
    pub marginal_reliable_from: i32,
    pub error_cap: f64,
    pub error_cap_rule: ErrorCapRule,
    pub age_range: (f64, f64),
    pub excluded_occupations: BTreeSet<i64>,
    pub drop_imputed: bool,
    /// Indicator covariate selecting the assessment-limit region: nonzero maps
    /// to `"east"`, zero to `"west"`. `None` uses region `"all"` throughout.
    pub region_covariate: Option<String>,
}

impl Default for RestrictionConfig {
    fn default() -> Self {
        RestrictionConfig {
            assessment_limits: Vec::new(),
            assessment_cap_fraction: 0.98,
            marginal_limits: Vec::new(),
            marginal_reliable_from: 1999,
            error_cap: 1.5,
            error_cap_rule: ErrorCapRule::Either,
            age_range: (18.0, 65.0),
            excluded_occupations: BTreeSet::new(),
            drop_imputed: true,
            region_covariate: Some("east".to_string()),
        }
    }
}

impl RestrictionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.assessment_cap_fraction > 0.0 && self.assessment_cap_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "restrictions.assessment_cap_fraction must be in (0, 1], got {}",
                self.assessment_cap_fraction
            )));
        }
        if !(self.error_cap > 0.0) {
            return Err(Error::Config(format!(
                "restrictions.error_cap must be > 0, got {}",
                self.error_cap
            )));
        }
        if self.age_range.0 > self.age_range.1 {
            return Err(Error::Config("restrictions.age_range is empty".into()));
        }
        Ok(())
    }

    fn region_of(&self, obs: &LinkedObservation) -> Option<String> {
        match &self.region_covariate {
            None => Some("all".to_string()),
            Some(name) => obs
                .covariate(name)
                .map(|v| if v != 0.0 { "east".to_string() } else { "west".to_string() }),
        }
    }
}

/// Names of the seven restriction steps, in application order.
pub const RESTRICTION_STEPS: [&str; 7] = [
    "below_assessment_limit",
    "typical_pay_structures",
    "error_within_cap",
    "coinciding_birth_year",
    "working_age",
    "within_ssc_limits",
    "income_not_imputed",
];

/// The error-cap predicate on its own: true when the observation is dropped.
pub fn exceeds_error_cap(survey: f64, register: f64, cap: f64, rule: ErrorCapRule) -> bool {
    let diff = (survey - register).abs();
    let vs_register = diff / register > cap;
    let vs_survey = diff / survey > cap;
    match rule {
        ErrorCapRule::Either => vs_register || vs_survey,
        ErrorCapRule::Both => vs_register && vs_survey,
    }
}

/// Applies the seven sample restrictions in order. The ledger starts with an
/// `input` row and gains one row per step. Observations lacking the data a
/// step needs are dropped at that step.
pub fn apply_restrictions(panel: &Panel, cfg: &RestrictionConfig) -> Result<(Panel, RestrictionLedger)> {
    cfg.validate()?;
    let assessment: HashMap<(i32, &str), f64> = cfg
        .assessment_limits
        .iter()
        .map(|a| ((a.year, a.region.as_str()), a.limit))
        .collect();
    let marginal: HashMap<i32, f64> = cfg.marginal_limits.iter().map(|m| (m.year, m.limit)).collect();

    let mut ledger = RestrictionLedger::default();
    let mut current: Vec<LinkedObservation> = panel.observations().to_vec();
    ledger.record("input", &current);

    // Configuration completeness is checked up front so a missing table row
    // is reported no matter which step would have reached it.
    for obs in &current {
        if obs.register_income.is_none() {
            continue;
        }
        if let Some(region) = cfg.region_of(obs) {
            if !assessment.contains_key(&(obs.period, region.as_str())) {
                return Err(Error::Config(format!(
                    "no assessment limit for (year {}, region {region})",
                    obs.period
                )));
            }
        }
        if obs.period < cfg.marginal_reliable_from && !marginal.contains_key(&obs.period) {
            return Err(Error::Config(format!(
                "no marginal-employment limit for year {}",
                obs.period
            )));
        }
    }

    let steps: [&dyn Fn(&LinkedObservation) -> bool; 7] = [
        &|o| match (o.register_income, cfg.region_of(o)) {
            (Some(ys), Some(region)) => {
                ys < cfg.assessment_cap_fraction * assessment[&(o.period, region.as_str())]
            }
            _ => false,
        },
        &|o| {
            cfg.excluded_occupations.is_empty()
                || matches!(o.covariate(columns::OCCUPATION),
                    Some(code) if !cfg.excluded_occupations.contains(&(code as i64)))
        },
        &|o| match (o.survey_income, o.register_income) {
            (Some(y), Some(ys)) if y > 0.0 && ys > 0.0 => {
                !exceeds_error_cap(y, ys, cfg.error_cap, cfg.error_cap_rule)
            }
            _ => false,
        },
        &|o| {
            let same_yob = matches!(
                (o.covariate(columns::BIRTH_YEAR), o.covariate(columns::REGISTER_BIRTH_YEAR)),
                (Some(a), Some(b)) if a == b
            );
            same_yob && o.covariate(columns::PROXY).is_none_or(|p| p == 0.0)
        },
        &|o| matches!(o.covariate(columns::AGE), Some(a) if a >= cfg.age_range.0 && a <= cfg.age_range.1),
        &|o| {
            if o.period >= cfg.marginal_reliable_from {
                return true;
            }
            matches!(o.register_income, Some(ys) if ys > marginal[&o.period])
        },
        &|o| !cfg.drop_imputed || matches!(o.covariate(columns::IMPUTED), Some(v) if v == 0.0),
    ];

    for (name, keep) in RESTRICTION_STEPS.iter().zip(steps) {
        current.retain(|o| keep(o));
        ledger.record(name, &current);
    }
    Ok((Panel::from_records(current)?, ledger))
}

fn parse_date(cell: &str, column: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(cell.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Data(format!("row {row}: column `{column}`: `{cell}` is not an ISO date")))
}

fn parse_num<T: std::str::FromStr>(cell: &str, column: &str, row: usize) -> Result<T> {
    cell.trim()
        .parse::<T>()
        .map_err(|_| Error::Data(format!("row {row}: column `{column}`: cannot parse `{cell}`")))
}

struct Columns {
    headers: csv::StringRecord,
}

impl Columns {
    fn require(&self, name: &str, what: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("{what} CSV is missing column `{name}`")))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.trim() == name)
    }

    fn extras(&self, fixed: &[&str]) -> Vec<(usize, String)> {
        self.headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !fixed.contains(&h.trim()))
            .map(|(i, h)| (i, h.trim().to_string()))
            .collect()
    }
}

fn numeric_extras(record: &csv::StringRecord, extras: &[(usize, String)], row: usize) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, name) in extras {
        let cell = record.get(*i).unwrap_or("").trim();
        if !cell.is_empty() {
            out.insert(name.clone(), parse_num::<f64>(cell, name, row)?);
        }
    }
    Ok(out)
}

/// Spell CSV: `unit_id, spell_id, start, end, daily_income, spell_kind`, then
/// numeric employer attribute columns.
pub fn read_spells<R: Read>(reader: R) -> Result<Vec<RegisterSpell>> {
    const FIXED: [&str; 6] = ["unit_id", "spell_id", "start", "end", "daily_income", "spell_kind"];
    let mut rdr = csv::Reader::from_reader(reader);
    let cols = Columns { headers: rdr.headers()?.clone() };
    let idx: Vec<usize> = FIXED.iter().map(|c| cols.require(c, "spell")).collect::<Result<_>>()?;
    let extras = cols.extras(&FIXED);
    let mut spells = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let row = n + 2;
        let get = |i: usize| record.get(idx[i]).unwrap_or("");
        let spell = RegisterSpell {
            unit_id: get(0).trim().to_string(),
            spell_id: parse_num(get(1), "spell_id", row)?,
            start: parse_date(get(2), "start", row)?,
            end: parse_date(get(3), "end", row)?,
            daily_income: parse_num(get(4), "daily_income", row)?,
            spell_kind: get(5).parse()?,
            employer_attrs: numeric_extras(&record, &extras, row)?,
        };
        spell.validate()?;
        spells.push(spell);
    }
    Ok(spells)
}

/// Survey CSV: `unit_id, period, interview_month, survey_income, employed,
/// weight, module_tag`, then numeric covariate columns.
pub fn read_survey<R: Read>(reader: R) -> Result<Vec<SurveyRecord>> {
    const FIXED: [&str; 7] = [
        "unit_id",
        "period",
        "interview_month",
        "survey_income",
        "employed",
        "weight",
        "module_tag",
    ];
    let mut rdr = csv::Reader::from_reader(reader);
    let cols = Columns { headers: rdr.headers()?.clone() };
    let unit = cols.require("unit_id", "survey")?;
    let period = cols.require("period", "survey")?;
    let month = cols.require("interview_month", "survey")?;
    let income = cols.require("survey_income", "survey")?;
    let employed = cols.optional("employed");
    let weight = cols.optional("weight");
    let module = cols.optional("module_tag");
    let extras = cols.extras(&FIXED);
    let mut out = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let row = n + 2;
        let cell = |i: Option<usize>| i.and_then(|i| record.get(i)).unwrap_or("").trim();
        let income_cell = cell(Some(income));
        out.push(SurveyRecord {
            unit_id: cell(Some(unit)).to_string(),
            period: parse_num(cell(Some(period)), "period", row)?,
            interview_month: parse_num(cell(Some(month)), "interview_month", row)?,
            survey_income: if income_cell.is_empty() {
                None
            } else {
                Some(parse_num(income_cell, "survey_income", row)?)
            },
            employed: match cell(employed) {
                "" => true,
                s => parse_bool(s, "employed", row)?,
            },
            weight: match cell(weight) {
                "" => 1.0,
                s => parse_num(s, "weight", row)?,
            },
            module_tag: cell(module).parse()?,
            covariates: numeric_extras(&record, &extras, row)?,
        });
    }
    Ok(out)
}

/// Limit table CSV `year, region, limit`. For marginal thresholds the region
/// column may be omitted.
pub fn read_assessment_limits<R: Read>(reader: R) -> Result<Vec<AssessmentLimit>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let cols = Columns { headers: rdr.headers()?.clone() };
    let (y, r, l) = (
        cols.require("year", "limit")?,
        cols.require("region", "limit")?,
        cols.require("limit", "limit")?,
    );
    let mut out = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        out.push(AssessmentLimit {
            year: parse_num(&record[y], "year", n + 2)?,
            region: record[r].trim().to_string(),
            limit: parse_num(&record[l], "limit", n + 2)?,
        });
    }
    Ok(out)
}

pub fn read_marginal_limits<R: Read>(reader: R) -> Result<Vec<MarginalLimit>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let cols = Columns { headers: rdr.headers()?.clone() };
    let (y, l) = (cols.require("year", "limit")?, cols.require("limit", "limit")?);
    let mut out = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        out.push(MarginalLimit {
            year: parse_num(&record[y], "year", n + 2)?,
            limit: parse_num(&record[l], "limit", n + 2)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spell(id: u64, kind: SpellKind, daily: f64, start: &str, end: &str) -> RegisterSpell {
        RegisterSpell {
            unit_id: "a".into(),
            spell_id: id,
            start: start.parse().unwrap(),
            end: end.parse().unwrap(),
            daily_income: daily,
            spell_kind: kind,
            employer_attrs: BTreeMap::new(),
        }
    }

    const MARCH: YearMonth = YearMonth { year: 2020, month: 3 };

    #[test]
    fn conversion_factor_is_exact_fraction() {
        assert!((DAYS_PER_MONTH - 30.479_166_666_666_668).abs() < 1e-12);
        assert_eq!(daily_to_monthly(0.0).unwrap(), 0.0);
        assert!((daily_to_monthly(100.0).unwrap() - 3_047.916_666_666_667).abs() < 1e-9);
        let v = daily_to_monthly(65.62).unwrap();
        assert!((v - 65.62 * 30.479_166_666_666_668).abs() < 1e-9);
        assert!((v - 2000.04).abs() < 0.01);
        assert!(matches!(daily_to_monthly(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn single_covering_spell_is_selected() {
        let spells = vec![spell(1, SpellKind::Employment, 80.0, "2019-01-01", "2020-12-31")];
        assert_eq!(select_main_spell(&spells, MARCH).unwrap().spell_id, 1);
    }

    #[test]
    fn highest_pay_wins() {
        let spells = vec![
            spell(1, SpellKind::Employment, 80.0, "2019-01-01", "2020-12-31"),
            spell(2, SpellKind::Employment, 120.0, "2020-03-15", "2020-06-30"),
            spell(3, SpellKind::Employment, 500.0, "2020-04-01", "2020-06-30"),
        ];
        assert_eq!(select_main_spell(&spells, MARCH).unwrap().spell_id, 2);
    }

    #[test]
    fn benefit_and_one_time_spells_never_qualify() {
        let spells = vec![
            spell(1, SpellKind::UnemploymentBenefit, 40.0, "2020-01-01", "2020-12-31"),
            spell(2, SpellKind::OneTimePayment, 900.0, "2020-03-01", "2020-03-01"),
        ];
        assert!(select_main_spell(&spells, MARCH).is_none());
    }

    #[test]
    fn equal_pay_tie_goes_to_lowest_id() {
        let spells = vec![
            spell(7, SpellKind::Employment, 100.0, "2020-01-01", "2020-12-31"),
            spell(4, SpellKind::Employment, 100.0, "2020-01-01", "2020-12-31"),
        ];
        assert_eq!(select_main_spell(&spells, MARCH).unwrap().spell_id, 4);
    }

    #[test]
    fn reference_month_wraps_year() {
        let ym = YearMonth::new(2020, 1).unwrap().previous();
        assert_eq!(ym, YearMonth { year: 2019, month: 12 });
        let s = spell(1, SpellKind::Employment, 1.0, "2019-12-31", "2019-12-31");
        assert!(s.covers(ym));
        assert!(!s.covers(YearMonth { year: 2020, month: 1 }));
    }

    fn base_obs(id: &str, survey: f64, register: f64) -> LinkedObservation {
        LinkedObservation::new(id, 2019)
            .with_incomes(survey, register)
            .with_covariate("east", 0.0)
            .with_covariate(columns::OCCUPATION, 1.0)
            .with_covariate(columns::BIRTH_YEAR, 1980.0)
            .with_covariate(columns::REGISTER_BIRTH_YEAR, 1980.0)
            .with_covariate(columns::AGE, 39.0)
            .with_covariate(columns::IMPUTED, 0.0)
    }

    fn cfg_2019() -> RestrictionConfig {
        RestrictionConfig {
            assessment_limits: vec![AssessmentLimit { year: 2019, region: "west".into(), limit: 6900.0 }],
            ..RestrictionConfig::default()
        }
    }

    #[test]
    fn top_coded_income_dropped_at_step_one() {
        let panel = Panel::from_records(vec![base_obs("a", 6900.0, 6900.0), base_obs("b", 6700.0, 6700.0)]).unwrap();
        let (out, ledger) = apply_restrictions(&panel, &cfg_2019()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(ledger.entries[1].step, "below_assessment_limit");
        assert_eq!(ledger.entries[1].observations_remaining, 1);
    }

    #[test]
    fn large_error_dropped_at_step_three() {
        let panel = Panel::from_records(vec![base_obs("a", 1000.0, 5000.0)]).unwrap();
        let (out, ledger) = apply_restrictions(&panel, &cfg_2019()).unwrap();
        assert!(out.is_empty());
        let c = ledger.counts();
        assert_eq!(c[2].2, 1);
        assert_eq!(c[3], ("error_within_cap", 0, 0));
    }

    #[test]
    fn all_pass_keeps_constant_counts() {
        let panel = Panel::from_records(vec![base_obs("a", 2000.0, 2100.0), base_obs("b", 3000.0, 2900.0)]).unwrap();
        let (out, ledger) = apply_restrictions(&panel, &cfg_2019()).unwrap();
        assert_eq!(out, panel);
        assert_eq!(ledger.entries.len(), 8);
        assert!(ledger.entries.iter().all(|e| e.units_remaining == 2 && e.observations_remaining == 2));
    }

    #[test]
    fn missing_limit_is_a_config_error() {
        let mut o = base_obs("a", 2000.0, 2000.0);
        o.period = 2020;
        let panel = Panel::from_records(vec![o]).unwrap();
        match apply_restrictions(&panel, &cfg_2019()) {
            Err(Error::Config(msg)) => assert!(msg.contains("2020") && msg.contains("west")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_step_input_drops() {
        let mut o = base_obs("a", 2000.0, 2000.0);
        o.covariates.remove(columns::AGE);
        let panel = Panel::from_records(vec![o]).unwrap();
        let (out, ledger) = apply_restrictions(&panel, &cfg_2019()).unwrap();
        assert!(out.is_empty());
        assert_eq!(ledger.counts()[5], ("working_age", 0, 0));
    }

    fn arb_panel() -> impl Strategy<Value = Panel> {
        proptest::collection::vec(
            (10.0f64..8000.0, 10.0f64..8000.0, 0u8..3, 14.0f64..70.0, any::<bool>(), 1996i32..2001),
            0..40,
        )
        .prop_map(|rows| {
            let recs = rows
                .into_iter()
                .enumerate()
                .map(|(i, (y, ys, occ, age, imp, year))| {
                    let mut o = base_obs(&format!("u{i:02}"), y, ys);
                    o.period = year;
                    o.covariates.insert(columns::OCCUPATION.into(), occ as f64);
                    o.covariates.insert(columns::AGE.into(), age.round());
                    o.covariates.insert(columns::IMPUTED.into(), if imp { 1.0 } else { 0.0 });
                    o
                })
                .collect();
            Panel::from_records(recs).unwrap()
        })
    }

    fn arb_cfg() -> RestrictionConfig {
        RestrictionConfig {
            assessment_limits: (1996..2001)
                .map(|y| AssessmentLimit { year: y, region: "west".into(), limit: 6000.0 })
                .collect(),
            marginal_limits: (1996..1999).map(|y| MarginalLimit { year: y, limit: 325.0 }).collect(),
            excluded_occupations: [2].into_iter().collect(),
            ..RestrictionConfig::default()
        }
    }

    proptest! {
        #[test]
        fn restrictions_are_idempotent_and_monotone(panel in arb_panel()) {
            let cfg = arb_cfg();
            let (once, ledger) = apply_restrictions(&panel, &cfg).unwrap();
            let (twice, _) = apply_restrictions(&once, &cfg).unwrap();
            prop_assert_eq!(&once, &twice);
            for w in ledger.entries.windows(2) {
                prop_assert!(w[1].units_remaining <= w[0].units_remaining);
                prop_assert!(w[1].observations_remaining <= w[0].observations_remaining);
            }
        }

        #[test]
        fn error_cap_matches_direct_or_predicate(y in 1.0f64..10_000.0, ys in 1.0f64..10_000.0, cap in 0.1f64..3.0) {
            let direct = ((y - ys).abs() / ys > cap) || ((y - ys).abs() / y > cap);
            prop_assert_eq!(exceeds_error_cap(y, ys, cap, ErrorCapRule::Either), direct);
            prop_assert_eq!(exceeds_error_cap(ys, y, cap, ErrorCapRule::Either), direct);
        }
    }
}
