use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::SimilarityReport;
use crate::error::{Error, Result};

/// CSV column order.
pub const CSV_COLUMNS: [&str; 12] = [
    "method", "dataset", "r", "utility", "privacy", "delta", "mse", "l1", "ssim", "ms_ssim", "psnr", "seed",
];

/// Serializes `+inf` as the string `"inf"` and reads it back.
pub mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            "inf".serialize(s)
        } else {
            v.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

/// Reference accuracies: utility of a classifier on raw images and the
/// chance level of the privacy task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub utility_upper: f64,
    pub privacy_lower: f64,
}

/// One evaluated method: accuracies in percent, their gap, and optional
/// reconstruction metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub method: String,
    pub dataset: String,
    pub r: Option<f64>,
    pub utility: f64,
    pub privacy: f64,
    pub delta: f64,
    pub bounds: Option<Bounds>,
    pub similarity: Option<SimilarityReport>,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// `utility - privacy`.
pub fn delta(utility: f64, privacy: f64) -> f64 {
    utility - privacy
}

fn check_accuracy(name: &str, v: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&v) {
        return Err(Error::Validation(format!("{name} accuracy {v} is outside [0, 100]")));
    }
    Ok(())
}

impl ExperimentReport {
    pub fn new(method: &str, dataset: &str, utility: f64, privacy: f64, seed: u64) -> Result<Self> {
        check_accuracy("utility", utility)?;
        check_accuracy("privacy", privacy)?;
        Ok(Self {
            method: method.to_owned(),
            dataset: dataset.to_owned(),
            r: None,
            utility,
            privacy,
            delta: delta(utility, privacy),
            bounds: None,
            similarity: None,
            config: serde_json::Value::Null,
            seed,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn with_radius(mut self, r: Option<f64>) -> Self {
        self.r = r;
        self
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_similarity(mut self, s: SimilarityReport) -> Self {
        self.similarity = Some(s);
        self
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }

    /// Whether the stored delta equals `utility - privacy` bit for bit.
    pub fn delta_consistent(&self) -> bool {
        delta(self.utility, self.privacy).to_bits() == self.delta.to_bits()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse {
            offset: e.column().saturating_sub(1),
            message: e.to_string(),
        })
    }

    /// The CSV fields in [`CSV_COLUMNS`] order.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let s = self.similarity;
        vec![
            self.method.clone(),
            self.dataset.clone(),
            opt(self.r),
            fmt_num(self.utility),
            fmt_num(self.privacy),
            fmt_num(self.delta),
            opt(s.map(|s| s.mse)),
            opt(s.map(|s| s.l1)),
            opt(s.map(|s| s.ssim)),
            opt(s.map(|s| s.ms_ssim)),
            opt(s.map(|s| s.psnr)),
            self.seed.to_string(),
        ]
    }
}

/// Shortest round-trip decimal form; `+inf` becomes `"inf"`.
pub fn fmt_num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Appends one JSON record per line.
pub fn append_jsonl(path: impl AsRef<Path>, reports: &[ExperimentReport]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    for r in reports {
        writeln!(f, "{}", r.to_json_line())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<ExperimentReport>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    let mut offset = 0;
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(ExperimentReport::from_json_line(&line).map_err(|e| match e {
                Error::Parse { offset: col, message } => Error::Parse {
                    offset: offset + col,
                    message,
                },
                other => other,
            })?);
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

/// Appends rows to a CSV file, writing the header first if the file is new
/// or empty.
pub fn append_csv(path: impl AsRef<Path>, reports: &[ExperimentReport]) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(f);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if fresh {
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    }
    for r in reports {
        w.write_record(r.csv_fields()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned table sorted by delta (descending), best delta per dataset
/// marked with `*`, followed by integrity warnings for rows whose stored
/// delta does not match their accuracies.
pub fn format_table(reports: &[ExperimentReport]) -> String {
    let mut rows: Vec<&ExperimentReport> = reports.iter().collect();
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let mut best = std::collections::HashMap::new();
    for r in &rows {
        best.entry(r.dataset.as_str()).or_insert(r.delta);
    }
    let header = ["", "method", "dataset", "r", "utility", "privacy", "delta", "mse", "ssim", "psnr", "seed"];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &rows {
        let s = r.similarity;
        let f2 = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.2}") };
        let f4 = |v: f64| format!("{v:.4}");
        table.push(vec![
            if best.get(r.dataset.as_str()) == Some(&r.delta) { "*".into() } else { String::new() },
            r.method.clone(),
            r.dataset.clone(),
            r.r.map(|v| format!("{v}")).unwrap_or_else(|| "-".into()),
            f2(r.utility),
            f2(r.privacy),
            f2(r.delta),
            s.map(|s| f2(s.mse)).unwrap_or_else(|| "-".into()),
            s.map(|s| f4(s.ssim)).unwrap_or_else(|| "-".into()),
            s.map(|s| f2(s.psnr)).unwrap_or_else(|| "-".into()),
            r.seed.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, &w))| if i <= 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    for r in &rows {
        if !r.delta_consistent() {
            out.push_str(&format!(
                "warning: {} / {} seed {}: stored delta {} != utility - privacy {}\n",
                r.method,
                r.dataset,
                r.seed,
                r.delta,
                delta(r.utility, r.privacy)
            ));
        }
    }
    out
}
