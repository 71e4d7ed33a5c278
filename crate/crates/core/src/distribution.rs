//! Descriptive statistics of reporting errors: summaries, income-quantile
//! profiles, histograms and weighted group tables.
//!
//! Quantiles are lower empirical quantiles: the smallest value whose
//! cumulative weight share reaches `p`. Unweighted this is the order
//! statistic at `ceil(p n)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{compute_error_triple, ErrorNotion, LinkedObservation, ModuleTag, Panel};

/// Denominator of the weighted variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightedSd {
    /// `sum w - sum w^2 / sum w`; scale-free, equals `n - 1` for equal weights.
    #[default]
    Reliability,
    /// `sum w - 1`; weights are counts.
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub share_negative: f64,
    /// `exp(mean)`, reported for the log notion only.
    pub geometric_ratio: Option<f64>,
}

/// Relative slack when comparing cumulative weight against `p * total`.
const QUANTILE_SLACK: f64 = 1e-12;

fn lower_quantile(sorted: &[(f64, f64)], total: f64, p: f64) -> f64 {
    let target = p * total * (1.0 - QUANTILE_SLACK);
    let mut cum = 0.0;
    for &(v, w) in sorted {
        cum += w;
        if cum >= target && w > 0.0 {
            return v;
        }
    }
    sorted.last().map_or(f64::NAN, |x| x.0)
}

pub fn weighted_mean_sd(values: &[f64], weights: Option<&[f64]>, sd_kind: WeightedSd) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Data("mean/sd of an empty sample".into()));
    }
    let Some(w) = weights else {
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let ss = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        let sd = if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        return Ok((m, sd));
    };
    if w.len() != values.len() {
        return Err(Error::Data(format!("{} weights for {} values", w.len(), values.len())));
    }
    let v1: f64 = w.iter().sum();
    if !(v1 > 0.0) {
        return Err(Error::Data("weights sum to zero".into()));
    }
    let m = values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / v1;
    let ss = values.iter().zip(w).map(|(v, w)| w * (v - m) * (v - m)).sum::<f64>();
    let den = match sd_kind {
        WeightedSd::Reliability => v1 - w.iter().map(|w| w * w).sum::<f64>() / v1,
        WeightedSd::Frequency => v1 - 1.0,
    };
    let sd = if den > 0.0 { (ss / den).sqrt() } else { 0.0 };
    Ok((m, sd))
}

/// Summary of arbitrary values with optional weights.
pub fn summarize_values(values: &[f64], weights: Option<&[f64]>, sd_kind: WeightedSd) -> Result<ErrorSummary> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {v} in summary input")));
    }
    let (mean, sd) = weighted_mean_sd(values, weights, sd_kind)?;
    let mut pairs: Vec<(f64, f64)> = match weights {
        Some(w) => values.iter().copied().zip(w.iter().copied()).collect(),
        None => values.iter().map(|v| (*v, 1.0)).collect(),
    };
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let neg: f64 = pairs.iter().filter(|p| p.0 < 0.0).map(|p| p.1).sum();
    let q = |p| lower_quantile(&pairs, total, p);
    Ok(ErrorSummary {
        n: values.len(),
        mean,
        sd,
        p5: q(0.05),
        p25: q(0.25),
        p50: q(0.5),
        p75: q(0.75),
        p95: q(0.95),
        share_negative: neg / total,
        geometric_ratio: None,
    })
}

fn refuse_pooled_weights<'a>(obs: impl IntoIterator<Item = &'a LinkedObservation>) -> Result<()> {
    let modules: BTreeSet<ModuleTag> = obs.into_iter().map(|o| o.module_tag).collect();
    if modules.len() > 1 {
        return Err(Error::Config(
            "weighted statistics cannot pool the core and innovation modules: their sampling weights are \
             not harmonized; request each module separately"
                .into(),
        ));
    }
    Ok(())
}

/// Error values and weights of the observations with usable incomes.
fn error_sample(obs: &[&LinkedObservation], notion: ErrorNotion) -> (Vec<f64>, Vec<f64>) {
    obs.iter()
        .filter_map(|o| compute_error_triple(o).ok().map(|e| (e.get(notion), o.weight)))
        .unzip()
}

pub fn summarize_errors(panel: &Panel, notion: ErrorNotion, weighted: bool) -> Result<ErrorSummary> {
    let obs: Vec<&LinkedObservation> = panel.observations().iter().collect();
    summarize_error_refs(&obs, notion, weighted)
}

fn summarize_error_refs(obs: &[&LinkedObservation], notion: ErrorNotion, weighted: bool) -> Result<ErrorSummary> {
    let (values, weights) = error_sample(obs, notion);
    if values.is_empty() {
        return Err(Error::Data("no observations with both incomes to summarize".into()));
    }
    if weighted {
        refuse_pooled_weights(obs.iter().copied().filter(|o| o.has_valid_incomes()))?;
    }
    let mut s = summarize_values(&values, weighted.then_some(&weights[..]), WeightedSd::default())?;
    if notion == ErrorNotion::Log {
        s.geometric_ratio = Some(s.mean.exp());
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGroup {
    pub q: usize,
    pub summary: ErrorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProfile {
    pub quantiles: usize,
    pub notion: ErrorNotion,
    pub groups: Vec<QuantileGroup>,
}

/// Income-quantile group (1-based) of every observation with usable incomes,
/// ranked by register income within its year. Ties go by unit id.
pub fn quantile_assignment(panel: &Panel, quantiles: usize) -> Result<Vec<(usize, usize)>> {
    if quantiles < 2 {
        return Err(Error::Config(format!("number of quantiles must be >= 2, got {quantiles}")));
    }
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, o) in panel.observations().iter().enumerate() {
        if o.has_valid_incomes() {
            by_year.entry(o.period).or_default().push(i);
        }
    }
    let obs = panel.observations();
    let mut out = Vec::new();
    for (year, mut idx) in by_year {
        let n = idx.len();
        if n < quantiles {
            return Err(Error::Data(format!(
                "year {year} has {n} observations, fewer than the {quantiles} requested quantiles"
            )));
        }
        idx.sort_by(|&a, &b| {
            obs[a]
                .register_income
                .unwrap()
                .total_cmp(&obs[b].register_income.unwrap())
                .then_with(|| obs[a].unit_id.cmp(&obs[b].unit_id))
        });
        out.extend(idx.into_iter().enumerate().map(|(rank, i)| (i, rank * quantiles / n + 1)));
    }
    out.sort_unstable();
    Ok(out)
}

pub fn quantile_profile(panel: &Panel, quantiles: usize, notion: ErrorNotion) -> Result<QuantileProfile> {
    let assignment = quantile_assignment(panel, quantiles)?;
    let mut members: Vec<Vec<&LinkedObservation>> = vec![Vec::new(); quantiles];
    for (i, q) in assignment {
        members[q - 1].push(&panel.observations()[i]);
    }
    let groups = members
        .iter()
        .enumerate()
        .map(|(k, obs)| {
            Ok(QuantileGroup {
                q: k + 1,
                summary: summarize_error_refs(obs, notion, false)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(QuantileProfile { quantiles, notion, groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalOverlay {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSeries {
    pub bin_edges: Vec<f64>,
    /// Weighted sums when `weighted`, plain counts otherwise.
    pub counts: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
    pub n: usize,
    pub weighted: bool,
    pub normal: Option<NormalOverlay>,
}

impl HistogramSeries {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum::<f64>() + self.underflow + self.overflow
    }

    /// Rows of `(bin_left_edge, count)`.
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_edge", "count"])?;
        for (edge, c) in self.bin_edges.iter().zip(&self.counts) {
            w.write_record([edge.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Left-closed bins of `width` starting at `lo`; the last bin ends at the
/// first edge `>= hi`. Values outside go to underflow/overflow.
pub fn histogram(
    values: &[f64],
    width: f64,
    range: (f64, f64),
    weights: Option<&[f64]>,
    normal_overlay: bool,
) -> Result<HistogramSeries> {
    let (lo, hi) = range;
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::Config(format!("histogram width must be > 0, got {width}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("histogram range needs lo < hi, got ({lo}, {hi})")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {v} in histogram input")));
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(Error::Data(format!("{} weights for {} values", w.len(), values.len())));
        }
    }
    let nbins = (((hi - lo) / width) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let edges: Vec<f64> = (0..=nbins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0.0; nbins];
    let (mut under, mut over) = (0.0, 0.0);
    let mut inside = Vec::new();
    let mut inside_w = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if v < lo {
            under += w;
        } else if v >= edges[nbins] {
            over += w;
        } else {
            let mut k = (((v - lo) / width).floor() as usize).min(nbins - 1);
            if v < edges[k] {
                k -= 1;
            } else if v >= edges[k + 1] {
                k += 1;
            }
            counts[k] += w;
            inside.push(v);
            inside_w.push(w);
        }
    }
    let normal = if normal_overlay && !inside.is_empty() {
        let (mean, sd) = weighted_mean_sd(&inside, weights.map(|_| &inside_w[..]), WeightedSd::default())?;
        Some(NormalOverlay { mean, sd })
    } else {
        None
    };
    Ok(HistogramSeries {
        bin_edges: edges,
        counts,
        underflow: under,
        overflow: over,
        n: values.len(),
        weighted: weights.is_some(),
        normal,
    })
}

/// Step points `(x, F(x))` of the (weighted) empirical CDF.
pub fn empirical_cdf(values: &[f64], weights: Option<&[f64]>) -> Result<Vec<(f64, f64)>> {
    let mut pairs: Vec<(f64, f64)> = match weights {
        Some(w) => values.iter().copied().zip(w.iter().copied()).collect(),
        None => values.iter().map(|v| (*v, 1.0)).collect(),
    };
    if pairs.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::Data("non-finite value in CDF input".into()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut cum = 0.0;
    for (v, w) in pairs {
        cum += w;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = cum / total,
            _ => out.push((v, cum / total)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// One stage of a funnel: keep observations whose covariate compares true.
/// A missing covariate fails the predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupPredicate {
    pub label: String,
    pub covariate: String,
    pub op: CompareOp,
    pub value: f64,
}

impl GroupPredicate {
    pub fn matches(&self, obs: &LinkedObservation) -> bool {
        let Some(x) = obs.covariate(&self.covariate) else { return false };
        match self.op {
            CompareOp::Eq => x == self.value,
            CompareOp::Ne => x != self.value,
            CompareOp::Lt => x < self.value,
            CompareOp::Le => x <= self.value,
            CompareOp::Gt => x > self.value,
            CompareOp::Ge => x >= self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableStat {
    pub variable: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n_obs: usize,
    pub stats: Vec<VariableStat>,
}

/// Value of a named variable: an income field, an error notion or a covariate.
pub fn variable_value(obs: &LinkedObservation, name: &str) -> Option<f64> {
    match name {
        "survey_income" => obs.survey_income,
        "register_income" => obs.register_income,
        "log_survey" => obs.log_survey(),
        "log_register" => obs.log_register(),
        "log_error" | "u" => compute_error_triple(obs).ok().map(|e| e.log_error),
        "nominal_error" => compute_error_triple(obs).ok().map(|e| e.nominal_error),
        "relative_error" => compute_error_triple(obs).ok().map(|e| e.relative_error),
        "employed" => Some(f64::from(u8::from(obs.employed))),
        _ => obs.covariate(name),
    }
}

/// Means and standard deviations of `variables` for the whole sample (label
/// `all`) and for each cumulative stage of `chain`. `module` restricts the
/// sample first; weighted requests that would pool both modules fail.
pub fn weighted_group_summary(
    panel: &Panel,
    chain: &[GroupPredicate],
    variables: &[String],
    weighted: bool,
    module: Option<ModuleTag>,
) -> Result<Vec<GroupSummary>> {
    let base: Vec<&LinkedObservation> = panel
        .observations()
        .iter()
        .filter(|o| module.is_none_or(|m| o.module_tag == m))
        .collect();
    for v in variables {
        if !base.iter().any(|o| variable_value(o, v).is_some()) {
            return Err(Error::Data(format!("requested variable `{v}` is absent from the sample")));
        }
    }
    if weighted {
        refuse_pooled_weights(base.iter().copied())?;
    }
    let mut out = Vec::with_capacity(chain.len() + 1);
    let mut current = base;
    for stage in 0..=chain.len() {
        let label = if stage == 0 {
            "all".to_string()
        } else {
            let p = &chain[stage - 1];
            current.retain(|o| p.matches(o));
            p.label.clone()
        };
        let mut stats = Vec::with_capacity(variables.len());
        for v in variables {
            let (vals, ws): (Vec<f64>, Vec<f64>) =
                current.iter().filter_map(|o| variable_value(o, v).map(|x| (x, o.weight))).unzip();
            let (mean, sd) = if vals.is_empty() {
                (None, None)
            } else {
                let (m, s) = weighted_mean_sd(&vals, weighted.then_some(&ws[..]), WeightedSd::default())?;
                (Some(m), Some(s))
            };
            stats.push(VariableStat { variable: v.clone(), mean, sd, n: vals.len() });
        }
        out.push(GroupSummary { label, n_obs: current.len(), stats });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(unit: &str, year: i32, y: f64, ys: f64) -> LinkedObservation {
        LinkedObservation::new(unit, year).with_incomes(y, ys)
    }

    fn panel_with_errors(us: &[f64]) -> Panel {
        Panel::from_records(
            us.iter()
                .enumerate()
                .map(|(i, u)| obs(&format!("u{i:03}"), 2000, 1000.0 * u.exp(), 1000.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn no_error_summary() {
        let p = Panel::from_records(vec![obs("a", 2000, 1000.0, 1000.0), obs("b", 2000, 2000.0, 2000.0)]).unwrap();
        let s = summarize_errors(&p, ErrorNotion::Log, false).unwrap();
        assert_eq!((s.mean, s.sd, s.share_negative, s.geometric_ratio), (0.0, 0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn two_point_lower_median() {
        let s = summarize_errors(&panel_with_errors(&[0.1, -0.1]), ErrorNotion::Log, false).unwrap();
        assert!(s.mean.abs() < 1e-15);
        assert_eq!(s.share_negative, 0.5);
        assert!((s.p50 + 0.1).abs() < 1e-12);
        assert!((s.p95 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn headline_geometric_ratio() {
        let s = summarize_errors(&panel_with_errors(&[-0.07; 4]), ErrorNotion::Log, false).unwrap();
        assert!((s.geometric_ratio.unwrap() - 0.93).abs() < 0.0025);
    }

    #[test]
    fn order_statistics_at_ceil_pn() {
        let values: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = summarize_values(&values, None, WeightedSd::default()).unwrap();
        // ceil(0.05*20)=1, ceil(0.25*20)=5, 10, 15, 19
        assert_eq!([s.p5, s.p25, s.p50, s.p75, s.p95], [1.0, 5.0, 10.0, 15.0, 19.0]);
    }

    #[test]
    fn empty_summary_is_an_error() {
        assert!(summarize_errors(&Panel::default(), ErrorNotion::Log, false).is_err());
    }

    #[test]
    fn weighted_summary_refuses_mixed_modules() {
        let mut b = obs("b", 2000, 900.0, 1000.0);
        b.module_tag = ModuleTag::Innovation;
        let p = Panel::from_records(vec![obs("a", 2000, 1000.0, 1100.0), b]).unwrap();
        assert!(summarize_errors(&p, ErrorNotion::Log, false).is_ok());
        assert!(matches!(summarize_errors(&p, ErrorNotion::Log, true), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_profile_detects_mean_reversion() {
        let recs = (1..=10)
            .map(|i| {
                let ys = f64::from(i);
                let u: f64 = if i <= 5 { 0.1 } else { -0.1 };
                obs(&format!("u{i:02}"), 2010, ys * u.exp(), ys)
            })
            .collect();
        let prof = quantile_profile(&Panel::from_records(recs).unwrap(), 2, ErrorNotion::Log).unwrap();
        assert!((prof.groups[0].summary.mean - 0.1).abs() < 1e-12);
        assert!((prof.groups[1].summary.mean + 0.1).abs() < 1e-12);
        assert_eq!(prof.groups[0].summary.n, 5);
    }

    #[test]
    fn too_many_quantiles_name_the_year() {
        let p = Panel::from_records(vec![obs("a", 2011, 1.0, 1.0), obs("b", 2011, 2.0, 2.0)]).unwrap();
        let err = quantile_profile(&p, 3, ErrorNotion::Log).unwrap_err().to_string();
        assert!(err.contains("2011"), "{err}");
        assert!(quantile_profile(&p, 1, ErrorNotion::Log).is_err());
    }

    #[test]
    fn histogram_boundaries() {
        let h = histogram(&[0.0, 499.99, 500.0], 500.0, (0.0, 1000.0), None, false).unwrap();
        assert_eq!(h.counts, vec![2.0, 1.0]);
        assert_eq!(h.bin_edges, vec![0.0, 500.0, 1000.0]);
        let h = histogram(&[-1.0, 1000.0, 10.0], 500.0, (0.0, 1000.0), None, false).unwrap();
        assert_eq!((h.underflow, h.overflow, h.total()), (1.0, 1.0, 3.0));
        let h = histogram(&[], 0.05, (-1.0, 1.0), None, true).unwrap();
        assert_eq!(h.counts.len(), 40);
        assert!(h.counts.iter().all(|c| *c == 0.0) && h.normal.is_none());
        assert!(histogram(&[f64::NAN], 1.0, (0.0, 1.0), None, false).is_err());
        assert!(histogram(&[1.0], 0.0, (0.0, 1.0), None, false).is_err());
    }

    #[test]
    fn cdf_steps() {
        let c = empirical_cdf(&[2.0, 1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
    }

    #[test]
    fn group_summary_arithmetic() {
        let mut a = LinkedObservation::new("a", 2000).with_covariate("x", 0.0).with_covariate("g", 1.0);
        a.weight = 1.0;
        let mut b = LinkedObservation::new("b", 2000).with_covariate("x", 4.0).with_covariate("g", 0.0);
        b.weight = 3.0;
        let p = Panel::from_records(vec![a, b]).unwrap();
        let vars = vec!["x".to_string()];
        let w = weighted_group_summary(&p, &[], &vars, true, None).unwrap();
        assert_eq!(w[0].stats[0].mean, Some(3.0));
        let u = weighted_group_summary(&p, &[], &vars, false, None).unwrap();
        assert_eq!(u[0].stats[0].mean, Some(2.0));
        assert!((u[0].stats[0].sd.unwrap() - 8f64.sqrt()).abs() < 1e-12);

        let chain = [GroupPredicate { label: "g1".into(), covariate: "g".into(), op: CompareOp::Eq, value: 1.0 }];
        let t = weighted_group_summary(&p, &chain, &vars, false, None).unwrap();
        assert_eq!((t[1].label.as_str(), t[1].n_obs, t[1].stats[0].mean), ("g1", 1, Some(0.0)));
        assert!(weighted_group_summary(&p, &[], &["nope".to_string()], false, None).is_err());
    }

    proptest! {
        #[test]
        fn summary_invariants(us in proptest::collection::vec(-1.0f64..1.0, 1..60), c in 0.1f64..10.0) {
            let p = panel_with_errors(&us);
            let s = summarize_errors(&p, ErrorNotion::Log, false).unwrap();
            let direct: Vec<f64> = p.observations().iter().map(|o| o.log_error().unwrap()).collect();
            let mean = direct.iter().sum::<f64>() / direct.len() as f64;
            prop_assert!((s.geometric_ratio.unwrap() - mean.exp()).abs() <= 1e-12 * mean.exp());
            prop_assert!(s.p5 <= s.p25 && s.p25 <= s.p50 && s.p50 <= s.p75 && s.p75 <= s.p95);
            prop_assert!((0.0..=1.0).contains(&s.share_negative));

            let w = vec![c; direct.len()];
            let sw = summarize_values(&direct, Some(&w), WeightedSd::Reliability).unwrap();
            let su = summarize_values(&direct, None, WeightedSd::Reliability).unwrap();
            prop_assert!((sw.mean - su.mean).abs() < 1e-12);
            prop_assert!((sw.sd - su.sd).abs() < 1e-12);
            prop_assert_eq!([sw.p5, sw.p25, sw.p50, sw.p75, sw.p95], [su.p5, su.p25, su.p50, su.p75, su.p95]);
        }

        #[test]
        fn histogram_conserves_count(vs in proptest::collection::vec(-3.0f64..3.0, 0..200), w in 0.01f64..1.0) {
            let h = histogram(&vs, w, (-1.0, 1.5), None, true).unwrap();
            prop_assert_eq!(h.total(), vs.len() as f64);
            prop_assert!(h.bin_edges.windows(2).all(|e| e[0] < e[1]));
        }

        #[test]
        fn quantile_groups_balanced(incomes in proptest::collection::vec(1.0f64..1e4, 4..80), q in 2usize..5) {
            prop_assume!(incomes.len() >= q);
            let recs: Vec<_> = incomes.iter().enumerate().map(|(i, y)| obs(&format!("u{i:03}"), 2000 + (i % 2) as i32, *y, *y)).collect();
            let p = Panel::from_records(recs).unwrap();
            let years: BTreeSet<i32> = p.observations().iter().map(|o| o.period).collect();
            let per_year_ok = years.iter().all(|y| p.observations().iter().filter(|o| o.period == *y).count() >= q);
            prop_assume!(per_year_ok);
            let a = quantile_assignment(&p, q).unwrap();
            prop_assert_eq!(a.len(), p.len());
            for y in years {
                let mut sizes = vec![0usize; q];
                for (i, g) in &a {
                    if p.observations()[*i].period == y { sizes[g - 1] += 1; }
                }
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}
