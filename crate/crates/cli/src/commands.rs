//! The three subcommands. Each writes its outputs into one directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use reliab_core::balancing::{assign_event_time, build_balanced};
use reliab_core::dgp::{oracle, simulate_panel};
use reliab_core::harmonize::{
    apply_restrictions, link_records, read_assessment_limits, read_marginal_limits, read_spells, read_survey,
    RestrictionConfig, RestrictionLedger,
};
use reliab_core::Panel;
use serde_json::{json, Value};

use crate::analysis;
use crate::config::{RunConfig, Sample};
use crate::error::{CliError, Context};
use crate::report::{write_json, SCHEMA_VERSION};

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(&format!("opening {}", path.display()), e))
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(&format!("creating {}", out.display()), e))
}

fn write_panel(panel: &Panel, path: &Path) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(&format!("creating {}", path.display()), e))?;
    panel.write_csv(BufWriter::new(f)).context(&format!("writing {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

/// Writes `panel.csv` and `oracle.json`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let dgp = cfg.dgp()?;
    dgp.validate().context("config")?;
    create_dir(out)?;
    let panel = simulate_panel(&dgp).context("simulate")?;
    info!("simulated {} observations for {} units", panel.len(), panel.unit_count());
    write_panel(&panel, &out.join("panel.csv"))?;
    let oracle = match oracle(&dgp) {
        Ok(o) => json!({ "available": true, "values": o }),
        Err(e) => {
            warn!("no closed-form oracle: {e}");
            json!({ "available": false, "reason": e.to_string() })
        }
    };
    write_json(
        &out.join("oracle.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "seed": dgp.seed, "oracle": oracle }),
    )
}

/// Limits given inline plus those read from the configured CSV files.
fn restriction_config(cfg: &RunConfig) -> Result<Option<RestrictionConfig>, CliError> {
    let Some(mut rc) = cfg.restrictions.clone() else {
        if cfg.io.assessment_limits.is_some() || cfg.io.marginal_limits.is_some() {
            return Err(CliError::config("io: limit tables given without a [restrictions] section"));
        }
        return Ok(None);
    };
    if let Some(p) = &cfg.io.assessment_limits {
        rc.assessment_limits.extend(read_assessment_limits(open(p)?).context(&p.display().to_string())?);
    }
    if let Some(p) = &cfg.io.marginal_limits {
        rc.marginal_limits.extend(read_marginal_limits(open(p)?).context(&p.display().to_string())?);
    }
    rc.validate().context("config")?;
    Ok(Some(rc))
}

fn check_covariates(cfg: &RunConfig, panel: &Panel) -> Result<(), CliError> {
    let present = panel.covariate_names();
    for (i, a) in cfg.analyses.iter().enumerate() {
        for c in a.referenced_covariates() {
            if !present.contains(&c) {
                return Err(CliError::config(format!(
                    "analysis #{i} ({}): covariate `{c}` is not in the input (available: {})",
                    a.kind(),
                    present.join(", ")
                )));
            }
        }
    }
    Ok(())
}

/// Reads a linked panel, applies restrictions and balancing, runs every
/// analysis and writes `report.json` plus any plot CSVs.
pub fn analyze(cfg: &RunConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    if let Some(b) = &cfg.balance {
        b.validate().context("config")?;
    }
    let restrictions = restriction_config(cfg)?;
    let panel = Panel::read_csv(open(input)?).context(&input.display().to_string())?;
    check_covariates(cfg, &panel)?;
    let n_input = json!({ "observations": panel.len(), "units": panel.unit_count() });

    let (restricted, ledger) = match &restrictions {
        Some(rc) => {
            let (p, l) = apply_restrictions(&panel, rc).context("restrictions")?;
            if p.is_empty() {
                let step = l.entries.iter().find(|e| e.observations_remaining == 0).map_or("", |e| e.step.as_str());
                warn!("restrictions removed every observation (emptied at step `{step}`)");
            }
            (p, Some(l))
        }
        None => (panel, None),
    };
    let timed = assign_event_time(&restricted);
    let balanced = match cfg.balance {
        Some(spec) if cfg.analyses.iter().any(|a| a.sample() == Sample::Balanced) => {
            build_balanced(&timed, spec).context("balance")?
        }
        _ => timed.clone(),
    };
    let balance = cfg.balance.map(|spec| {
        json!({ "spec": spec, "observations": balanced.len(), "units": balanced.unit_count() })
    });
    info!("analysing {} observations ({} balanced)", timed.len(), balanced.len());

    let horizon = cfg.balance.map(|b| b.horizon as usize);
    let outputs: Vec<analysis::Output> = cfg
        .analyses
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let panel = match a.sample() {
                Sample::All => &timed,
                Sample::Balanced => &balanced,
            };
            analysis::run(i, a, panel, horizon)
        })
        .collect::<Result<_, _>>()?;

    create_dir(out)?;
    let mut results = Vec::with_capacity(outputs.len());
    for (i, (a, o)) in cfg.analyses.iter().zip(outputs).enumerate() {
        for (name, bytes) in &o.files {
            write_bytes(&out.join(name), bytes)?;
        }
        let files: Vec<&str> = o.files.iter().map(|(n, _)| n.as_str()).collect();
        results.push(json!({
            "index": i,
            "kind": a.kind(),
            "sample": a.sample(),
            "files": files,
            "result": o.result,
        }));
    }
    let modules: Vec<Value> = analysis::module_counts(&timed)
        .into_iter()
        .map(|(m, n)| json!({ "module": m, "observations": n }))
        .collect();
    write_json(
        &out.join("report.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "analyze",
            "input": n_input,
            "restriction_ledger": ledger,
            "sample": { "observations": timed.len(), "units": timed.unit_count(), "modules": modules },
            "balance": balance,
            "analyses": results,
        }),
    )
}

/// Links survey interviews to register spells, applies restrictions when
/// configured, and writes `linked.csv`, `panel.csv` and `ledger.json`.
pub fn harmonize(cfg: &RunConfig, spells: &Path, survey: &Path, out: &Path) -> Result<(), CliError> {
    let restrictions = restriction_config(cfg)?;
    let spells = read_spells(open(spells)?).context(&spells.display().to_string())?;
    let survey = read_survey(open(survey)?).context(&survey.display().to_string())?;
    let (linked, mut ledger): (Panel, RestrictionLedger) = link_records(&spells, &survey).context("link")?;
    create_dir(out)?;
    write_panel(&linked, &out.join("linked.csv"))?;
    let panel = match &restrictions {
        Some(rc) => {
            let (p, l) = apply_restrictions(&linked, rc).context("restrictions")?;
            ledger.extend(l);
            p
        }
        None => linked,
    };
    info!("harmonized panel: {} observations, {} units", panel.len(), panel.unit_count());
    write_panel(&panel, &out.join("panel.csv"))?;
    write_json(&out.join("ledger.json"), &json!({ "schema_version": SCHEMA_VERSION, "ledger": ledger }))
}
