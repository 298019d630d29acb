//! File formats and atomic output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::evalkit::CurvePoint;
use crate::textprep::Label;
use crate::wavelet::{Signal, UwtDecomposition};

/// Writes to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let name = path.file_name().ok_or_else(|| CliError::Io(format!("{}: not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// One sample per line.
pub fn signal_to_csv(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 20);
    for v in samples {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn parse_signal_csv(text: &str) -> Result<Signal, CliError> {
    let samples = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("line {}: not a number: '{}'", i + 1, l.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Signal::new(samples).map_err(|e| CliError::Data(e.to_string()))
}

pub fn read_signal(path: &Path) -> Result<Signal, CliError> {
    parse_signal_csv(&read_text(path)?).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// `level,index,value` rows, details `1..=J` then the `approx` band.
pub fn decomposition_to_csv(dec: &UwtDecomposition) -> String {
    let mut out = String::from("level,index,value\n");
    for (j, band) in dec.details.iter().enumerate() {
        for (i, v) in band.iter().enumerate() {
            let _ = writeln!(out, "{},{i},{v}", j + 1);
        }
    }
    for (i, v) in dec.approx.iter().enumerate() {
        let _ = writeln!(out, "approx,{i},{v}");
    }
    out
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("x,y,threshold\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.threshold);
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurvePoint>, CliError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize::<CurvePoint>()
        .map(|r| r.map_err(|e| CliError::Data(format!("curve csv: {e}"))))
        .collect()
}

/// Columns of a multi-series CSV: header then one row per index.
pub fn columns_to_csv(header: &[&str], columns: &[&[f64]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let rows = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// One preprocessed document as persisted by `prep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparedDoc {
    pub id: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub tokens: Vec<String>,
}

pub fn prepared_to_jsonl(docs: &[PreparedDoc]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("serializable document"));
        out.push('\n');
    }
    out
}

pub fn parse_prepared_jsonl(text: &str) -> Result<Vec<PreparedDoc>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1))))
        .collect()
}

/// One scored document as written by `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub lang: String,
    pub split: String,
    pub label: String,
    pub score: f64,
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record([&r.id, &r.lang, &r.split, &r.label, &r.score.to_string()])
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let mut out = String::from("id,lang,split,label,score\n");
    out.push_str(&String::from_utf8(body).map_err(|e| CliError::Io(e.to_string()))?);
    Ok(out)
}

pub fn parse_scores_csv(text: &str) -> Result<Vec<ScoreRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize::<ScoreRow>()
        .map(|r| r.map_err(|e| CliError::Data(format!("scores csv: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_csv_round_trip_is_exact() {
        let x = vec![0.1, -2.5e-7, 1.0 / 3.0, 12345.678, -0.0];
        let parsed = parse_signal_csv(&signal_to_csv(&x)).unwrap();
        assert_eq!(parsed.as_slice(), &x[..]);
        assert!(parse_signal_csv("1.0\nabc\n").is_err());
        assert!(parse_signal_csv("\n\n").is_err());
        assert!(parse_signal_csv("NaN\n").is_err());
    }

    #[test]
    fn decomposition_csv_layout() {
        let dec = UwtDecomposition {
            details: vec![vec![0.5, -0.5]],
            approx: vec![1.0, 2.0],
            filter_name: "haar".into(),
        };
        assert_eq!(
            decomposition_to_csv(&dec),
            "level,index,value\n1,0,0.5\n1,1,-0.5\napprox,0,1\napprox,1,2\n"
        );
    }

    #[test]
    fn curves_and_scores_round_trip() {
        let pts = vec![
            CurvePoint { x: 0.0, y: 0.0, threshold: f64::INFINITY },
            CurvePoint { x: 0.5, y: 0.25, threshold: 0.3 },
            CurvePoint { x: 1.0, y: 1.0, threshold: f64::NEG_INFINITY },
        ];
        assert_eq!(parse_curve_csv(&curve_to_csv(&pts)).unwrap(), pts);
        let rows = vec![ScoreRow {
            id: "a,b".into(),
            lang: "en".into(),
            split: "test".into(),
            label: "threat".into(),
            score: 0.125,
        }];
        assert_eq!(parse_scores_csv(&scores_to_csv(&rows).unwrap()).unwrap(), rows);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let names: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
