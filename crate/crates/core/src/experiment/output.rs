use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{curves_svg, matrix_svg, CrossEvalMatrix, ExperimentError, ExperimentResult, MatrixSummary};
use crate::coordinator::{ledger_csv, SessionSummary};
use crate::sim::{straggler_report, SimReport, StragglerRow};

/// Accuracy per round, one column per series.
pub fn curves_csv(series: &[(&str, &[f64])]) -> String {
    let mut out = String::from("round");
    for (name, _) in series {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let rounds = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for r in 0..rounds {
        write!(out, "{}", r + 1).expect("writing to a String");
        for (_, v) in series {
            match v.get(r) {
                Some(a) => write!(out, ",{a:.4}").expect("writing to a String"),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`curves_csv`].
pub fn parse_curves_csv(text: &str) -> Result<Vec<(String, Vec<f64>)>, ExperimentError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ExperimentError::Parse("empty curves file".into()))?;
    let mut series: Vec<(String, Vec<f64>)> =
        header.split(',').skip(1).map(|n| (n.to_string(), Vec::new())).collect();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        for (k, field) in line.split(',').skip(1).enumerate() {
            if field.is_empty() {
                continue;
            }
            let v = field
                .parse()
                .map_err(|_| ExperimentError::Parse(format!("bad value `{field}`")))?;
            series
                .get_mut(k)
                .ok_or_else(|| ExperimentError::Parse(format!("extra column in `{line}`")))?
                .1
                .push(v);
        }
    }
    Ok(series)
}

#[derive(Serialize)]
struct SessionFile<'a> {
    config_sha256: &'a str,
    seed: u64,
    matrix: &'a MatrixSummary,
    stragglers: Vec<StragglerRow>,
    simulation: &'a SimReport,
    session: &'a SessionSummary,
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Writes matrix, curves, ledger and session files into `dir`.
pub fn write_outputs(
    dir: &Path,
    result: &ExperimentResult,
    config_sha256: &str,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let m = &result.matrix;
    write(dir, "matrix.csv", &m.to_csv(), &mut written)?;
    write(dir, "matrix.svg", &matrix_svg(m), &mut written)?;
    let series: [(&str, &[f64]); 2] = [
        ("centralized", &result.centralized.curve),
        ("federated", &result.federated.model.curve),
    ];
    write(dir, "curves.csv", &curves_csv(&series), &mut written)?;
    write(dir, "curves.svg", &curves_svg(&series), &mut written)?;
    write(dir, "ledger.csv", &ledger_csv(&result.federated.ledger), &mut written)?;
    let summary = m.summary();
    let session = SessionFile {
        config_sha256,
        seed: result.seed,
        matrix: &summary,
        stragglers: straggler_report(&result.federated.report).unwrap_or_default(),
        simulation: &result.federated.report,
        session: &result.federated.summary,
    };
    let json = serde_json::to_string_pretty(&session).expect("plain data");
    write(dir, "session.json", &json, &mut written)?;
    Ok(written)
}

/// Re-renders the SVGs from `matrix.csv` and `curves.csv` in `dir`.
pub fn replot(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|source| ExperimentError::Io { path, source })
    };
    let mut written = Vec::new();
    let matrix = CrossEvalMatrix::from_csv(&read("matrix.csv")?)?;
    write(dir, "matrix.svg", &matrix_svg(&matrix), &mut written)?;
    if let Ok(text) = read("curves.csv") {
        let series = parse_curves_csv(&text)?;
        let refs: Vec<(&str, &[f64])> = series.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
        write(dir, "curves.svg", &curves_svg(&refs), &mut written)?;
    }
    Ok(written)
}
