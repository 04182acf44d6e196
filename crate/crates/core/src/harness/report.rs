//! Run artifacts on disk and the markdown report built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tables::{agreement_csv, family_summary_csv};
use super::{agreement_table, family_summary, BenchmarkRun, Family, Leaderboard, Protocol};
use crate::error::{Error, Result};
use crate::metrics::fmt6;
use crate::models::ThresholdPolicy;
use crate::preprocess::{MalnutritionLabel, RawTable};

pub const REPORT_FILE: &str = "report.md";
const LEADERBOARD: &str = "leaderboard.csv";
const SUMMARY: &str = "family_summary.csv";
const AGREEMENT: &str = "agreement.csv";
const TIMINGS: &str = "timings.csv";
const PROVENANCE: &str = "run.json";
const IMPORTANCE: &str = "importance.csv";
pub const PROVINCES_FILE: &str = "provinces.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub protocol: Protocol,
    pub threshold: ThresholdPolicy,
    pub models: Vec<String>,
}

fn file_stem(model: &str) -> String {
    model.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

fn calibration_path(dir: &Path, model: &str) -> PathBuf {
    dir.join("calibration").join(format!("{}.csv", file_stem(model)))
}

fn read(path: PathBuf) -> Result<String> {
    fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifacts(path),
        _ => Error::Io(e),
    })
}

/// Writes every table of a run into `dir`, then the report.
pub fn write_run(run: &BenchmarkRun, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("calibration"))?;
    fs::create_dir_all(dir.join("reports"))?;
    fs::write(dir.join(LEADERBOARD), run.leaderboard.to_csv())?;
    fs::write(dir.join(SUMMARY), family_summary_csv(&family_summary(&run.leaderboard)))?;
    fs::write(dir.join(AGREEMENT), agreement_csv(&agreement_table(&run.leaderboard)))?;
    let mut timings = String::from("model,train_seconds\n");
    for o in &run.outcomes {
        let _ = writeln!(timings, "{},{:.3}", o.name, o.train_seconds);
        if let Some(r) = &o.report {
            fs::write(calibration_path(dir, &o.name), r.calibration.to_csv())?;
            fs::write(dir.join("reports").join(format!("{}.json", file_stem(&o.name))), serde_json::to_string_pretty(r)?)?;
        }
    }
    fs::write(dir.join(TIMINGS), timings)?;
    let prov = serde_json::json!({ "provenance": run.provenance, "config": run.config });
    fs::write(dir.join(PROVENANCE), serde_json::to_string_pretty(&prov)?)?;
    match &run.importance {
        Some(c) => fs::write(dir.join(IMPORTANCE), c.to_csv())?,
        None => {
            let _ = fs::remove_file(dir.join(IMPORTANCE));
        }
    }
    emit_report(dir)
}

fn csv_to_markdown(text: &str) -> Result<String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut out = String::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cells: Vec<String> = rec.iter().map(|c| c.replace('|', "\\|")).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let _ = writeln!(out, "|{}", "---|".repeat(cells.len()));
        }
    }
    Ok(out)
}

/// Builds `report.md` from the artifacts in `dir`. The timestamp line is the
/// only content that varies between identical runs.
pub fn emit_report(dir: &Path) -> Result<PathBuf> {
    let lb_text = read(dir.join(LEADERBOARD))?;
    let lb = Leaderboard::from_csv(&lb_text)?;
    let prov: serde_json::Value = serde_json::from_str(&read(dir.join(PROVENANCE))?)?;
    let p: RunProvenance = serde_json::from_value(prov["provenance"].clone())?;

    let mut md = String::from("# Malnutrition screening benchmark\n\n");
    let _ = writeln!(md, "Generated: {}\n", chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));

    md.push_str("## Provenance\n\n");
    let _ = writeln!(md, "- seed: {}", p.seed);
    let _ = writeln!(md, "- config hash: `{}`", p.config_hash);
    let _ = writeln!(md, "- dataset hash: `{}`", p.dataset_hash);
    let _ = writeln!(md, "- rows: {} ({} features); train {} / test {}", p.n_rows, p.n_features, p.n_train, p.n_test);
    let _ = writeln!(md, "- protocol: `{}`", serde_json::to_string(&p.protocol)?);
    let _ = writeln!(md, "- threshold policy: `{}`", serde_json::to_string(&p.threshold)?);
    let _ = writeln!(md, "- models: {}\n", p.models.join(", "));

    md.push_str("## Leaderboard\n\nSorted by F1, then recall, then name.\n\n");
    md.push_str(&csv_to_markdown(&lb_text)?);

    md.push_str("\n## Family summary\n\n");
    md.push_str(&csv_to_markdown(&family_summary_csv(&family_summary(&lb)))?);

    md.push_str("\n## Agreement and trade-off\n\n");
    md.push_str(&csv_to_markdown(&agreement_csv(&agreement_table(&lb)))?);

    md.push_str("\n## Calibration of the top model per family\n");
    for family in Family::ALL {
        if let Some(top) = lb.top_of(family) {
            let csv = read(calibration_path(dir, &top.model))?;
            let _ = writeln!(md, "\n### {} ({})\n", top.model, family.name());
            md.push_str(&csv_to_markdown(&csv)?);
        }
    }

    md.push_str("\n## Consensus feature importance\n\n");
    match fs::read_to_string(dir.join(IMPORTANCE)) {
        Ok(text) => md.push_str(&csv_to_markdown(&text)?),
        Err(_) => md.push_str("Not computed for this run.\n"),
    }

    if let Ok(text) = fs::read_to_string(dir.join(PROVINCES_FILE)) {
        md.push_str("\n## Prevalence by province\n\n");
        md.push_str(&csv_to_markdown(&text)?);
    }

    md.push_str("\n## Failures\n\n");
    let failed: Vec<_> = lb.rows.iter().filter(|r| r.failed()).collect();
    if failed.is_empty() {
        md.push_str("None.\n");
    }
    for r in failed {
        let _ = writeln!(md, "- {} ({}): {}", r.model, r.family.name(), r.error.as_deref().unwrap_or("unknown error"));
    }

    let path = dir.join(REPORT_FILE);
    fs::write(&path, md)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvinceRow {
    pub province: String,
    pub n: usize,
    pub malnourished: usize,
    pub prevalence: f64,
}

/// Malnutrition prevalence per value of `column` (missing values grouped as
/// `NA`), sorted by name.
pub fn province_table(raw: &RawTable, labels: &[MalnutritionLabel], column: &str) -> Result<Vec<ProvinceRow>> {
    let col = raw.column(column)?;
    if col.len() != labels.len() {
        return Err(Error::LengthMismatch(col.len(), labels.len()));
    }
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (v, l) in col.iter().zip(labels) {
        let key = v.as_deref().map_or_else(|| "NA".to_string(), |s| s.trim().to_ascii_lowercase());
        let e = acc.entry(key).or_default();
        e.0 += 1;
        e.1 += usize::from(l.malnourished);
    }
    Ok(acc
        .into_iter()
        .map(|(province, (n, m))| ProvinceRow { province, n, malnourished: m, prevalence: m as f64 / n as f64 })
        .collect())
}

pub fn province_csv(rows: &[ProvinceRow]) -> String {
    let mut out = String::from("province,n,malnourished,prevalence\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.province, r.n, r.malnourished, fmt6(r.prevalence));
    }
    out
}

/// Class counts and per-condition prevalence (percent of all rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub n: usize,
    pub nourished: usize,
    pub malnourished: usize,
    pub underweight_pct: f64,
    pub stunted_pct: f64,
    pub wasted_pct: f64,
}

pub fn label_summary(labels: &[MalnutritionLabel]) -> LabelSummary {
    let n = labels.len();
    let count = |f: fn(&MalnutritionLabel) -> bool| labels.iter().filter(|l| f(l)).count();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let malnourished = count(|l| l.malnourished);
    LabelSummary {
        n,
        nourished: n - malnourished,
        malnourished,
        underweight_pct: pct(count(|l| l.underweight)),
        stunted_pct: pct(count(|l| l.stunted)),
        wasted_pct: pct(count(|l| l.wasted)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn province_grouping() {
        let mut t = RawTable::new(vec!["province".into()]);
        for p in ["Karnali", "koshi", "karnali"] {
            t.push_row(vec![Some(p.into())]).unwrap();
        }
        t.push_row(vec![None]).unwrap();
        let l = |m| MalnutritionLabel { malnourished: m, ..Default::default() };
        let rows = province_table(&t, &[l(true), l(false), l(false), l(true)], "province").unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.province.as_str()).collect();
        assert_eq!(names, ["NA", "karnali", "koshi"]);
        assert_eq!((rows[1].n, rows[1].malnourished), (2, 1));
        assert!(province_csv(&rows).contains("karnali,2,1,0.500000"));
    }

    #[test]
    fn missing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_report(dir.path()), Err(Error::MissingArtifacts(_))));
    }
}
