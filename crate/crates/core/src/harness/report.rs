//! Result rows, their CSV form and side-by-side comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const SCHEMA: &str = "rbm-eval/1";

pub const CSV_HEADER: [&str; 18] = [
    "schema",
    "model_id",
    "n_hidden",
    "estimator",
    "proposal",
    "K",
    "M",
    "N",
    "chains",
    "thin",
    "burnin",
    "log_z_hat",
    "avg_loglik",
    "sigma",
    "repeats",
    "gibbs_steps",
    "wall_s",
    "seed",
];

/// One table row.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub model_id: String,
    pub n_hidden: usize,
    pub estimator: String,
    /// Proposal for AIS and RAISE; chain initialization for CSL.
    pub proposal: Option<String>,
    pub k: Option<usize>,
    /// AIS runs or RAISE runs per test vector.
    pub m: Option<usize>,
    /// CSL hidden samples.
    pub n: Option<usize>,
    pub chains: Option<usize>,
    pub thin: Option<usize>,
    pub burn_in: Option<usize>,
    pub log_z_hat: Option<f64>,
    pub avg_loglik: f64,
    pub sigma: f64,
    pub repeats: usize,
    pub gibbs_steps: u64,
    pub wall_time_seconds: Option<f64>,
    pub seed: u64,
    /// Single-row config reproducing this row; not part of the CSV.
    pub config_echo: String,
}

fn opt<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map(T::to_string).unwrap_or_default()
}

impl EstimateReport {
    pub fn csv_fields(&self) -> [String; 18] {
        [
            SCHEMA.to_string(),
            self.model_id.clone(),
            self.n_hidden.to_string(),
            self.estimator.clone(),
            opt(&self.proposal),
            opt(&self.k),
            opt(&self.m),
            opt(&self.n),
            opt(&self.chains),
            opt(&self.thin),
            opt(&self.burn_in),
            opt(&self.log_z_hat),
            self.avg_loglik.to_string(),
            self.sigma.to_string(),
            self.repeats.to_string(),
            self.gibbs_steps.to_string(),
            opt(&self.wall_time_seconds),
            self.seed.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        let bad = |col: &str, v: &str| {
            Error::format(
                "report CSV",
                format!("row {line}: cannot parse {col} `{v}`"),
            )
        };
        let field = |k: usize| rec.get(k).unwrap_or("");
        fn num<T: std::str::FromStr>(v: &str) -> Option<Option<T>> {
            if v.is_empty() {
                Some(None)
            } else {
                v.parse().ok().map(Some)
            }
        }
        macro_rules! optional {
            ($k:expr) => {
                num(field($k)).ok_or_else(|| bad(CSV_HEADER[$k], field($k)))?
            };
        }
        macro_rules! required {
            ($k:expr) => {
                field($k)
                    .parse()
                    .map_err(|_| bad(CSV_HEADER[$k], field($k)))?
            };
        }
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::format(
                "report CSV",
                format!("row {line}: expected 18 fields, found {}", rec.len()),
            ));
        }
        if field(0) != SCHEMA {
            return Err(Error::format(
                "report CSV",
                format!("row {line}: unsupported schema `{}`", field(0)),
            ));
        }
        Ok(Self {
            model_id: field(1).to_string(),
            n_hidden: required!(2),
            estimator: field(3).to_string(),
            proposal: Some(field(4).to_string()).filter(|s| !s.is_empty()),
            k: optional!(5),
            m: optional!(6),
            n: optional!(7),
            chains: optional!(8),
            thin: optional!(9),
            burn_in: optional!(10),
            log_z_hat: optional!(11),
            avg_loglik: required!(12),
            sigma: required!(13),
            repeats: required!(14),
            gibbs_steps: required!(15),
            wall_time_seconds: optional!(16),
            seed: required!(17),
            config_echo: String::new(),
        })
    }

    /// Short label such as `ais baserate K=10000 M=500`.
    pub fn label(&self) -> String {
        let mut s = self.estimator.clone();
        if let Some(p) = &self.proposal {
            let _ = write!(s, " {p}");
        }
        for (name, v) in [
            ("K", self.k),
            ("M", self.m),
            ("N", self.n),
            ("chains", self.chains),
            ("T", self.thin),
            ("B", self.burn_in),
        ] {
            if let Some(v) = v {
                let _ = write!(s, " {name}={v}");
            }
        }
        s
    }
}

pub fn to_csv(rows: &[EstimateReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.csv_fields()).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::format("report CSV", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("report CSV", e.to_string())
}

pub fn from_csv(text: &str) -> Result<Vec<EstimateReport>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format(
            "report CSV",
            "header does not match the schema",
        ));
    }
    r.records()
        .enumerate()
        .map(|(k, rec)| EstimateReport::from_record(&rec.map_err(csv_err)?, k + 1))
        .collect()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<EstimateReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    from_csv(&text).map_err(|e| e.context(format!("reading {}", path.display())))
}

fn fmt_opt(x: Option<f64>, prec: usize) -> String {
    x.map(|v| format!("{v:.prec$}"))
        .unwrap_or_else(|| "-".into())
}

fn render(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &mut rule.iter().map(String::as_str));
    for row in body {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

/// Human-readable table of the rows.
pub fn to_table(rows: &[EstimateReport]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model_id.clone(),
                r.label(),
                fmt_opt(r.log_z_hat, 4),
                format!("{:.4}", r.avg_loglik),
                format!("{:.4}", r.sigma),
                r.repeats.to_string(),
                r.gibbs_steps.to_string(),
                fmt_opt(r.wall_time_seconds, 1),
            ]
        })
        .collect();
    render(
        &[
            "model",
            "estimator",
            "log Z",
            "L",
            "sigma",
            "repeats",
            "gibbs",
            "wall_s",
        ],
        &body,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// Index of the report the row came from.
    pub source: usize,
    pub row: EstimateReport,
    /// `avg_loglik` minus the exact row's value.
    pub delta_loglik: Option<f64>,
    pub delta_log_z: Option<f64>,
}

/// Joins reports on model id. Every report must cover the same set of
/// models. Rows of estimator `exact` serve as ground truth, taken from the
/// row's own report when it has one (so `L` is compared on the same test
/// set) and otherwise from the first report that does.
pub fn compare(reports: &[Vec<EstimateReport>]) -> Result<Vec<ComparisonRow>> {
    if reports.is_empty() {
        return Err(Error::Empty("report list"));
    }
    let ids = |rows: &[EstimateReport]| -> Vec<String> {
        let mut v: Vec<String> = rows.iter().map(|r| r.model_id.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let first = ids(&reports[0]);
    for (k, rows) in reports.iter().enumerate().skip(1) {
        let these = ids(rows);
        if these != first {
            return Err(Error::InvalidArgument(format!(
                "report {} covers models {:?}, report 1 covers {:?}",
                k + 1,
                these,
                first
            )));
        }
    }
    let mut truth: BTreeMap<&str, &EstimateReport> = BTreeMap::new();
    let mut local: BTreeMap<(usize, &str), &EstimateReport> = BTreeMap::new();
    for (source, rows) in reports.iter().enumerate() {
        for r in rows.iter().filter(|r| r.estimator == "exact") {
            truth.entry(r.model_id.as_str()).or_insert(r);
            local.entry((source, r.model_id.as_str())).or_insert(r);
        }
    }
    let mut out = Vec::new();
    for id in &first {
        for (source, rows) in reports.iter().enumerate() {
            for r in rows.iter().filter(|r| &r.model_id == id) {
                let t = local
                    .get(&(source, id.as_str()))
                    .or_else(|| truth.get(id.as_str()));
                out.push(ComparisonRow {
                    source,
                    row: r.clone(),
                    delta_loglik: t.map(|t| r.avg_loglik - t.avg_loglik),
                    delta_log_z: t.and_then(|t| Some(r.log_z_hat? - t.log_z_hat?)),
                });
            }
        }
    }
    Ok(out)
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|c| {
            vec![
                c.row.model_id.clone(),
                (c.source + 1).to_string(),
                c.row.label(),
                fmt_opt(c.row.log_z_hat, 4),
                format!("{:.4}", c.row.avg_loglik),
                format!("{:.4}", c.row.sigma),
                c.row.gibbs_steps.to_string(),
                fmt_opt(c.delta_log_z, 4),
                fmt_opt(c.delta_loglik, 4),
            ]
        })
        .collect();
    render(
        &[
            "model",
            "report",
            "estimator",
            "log Z",
            "L",
            "sigma",
            "gibbs",
            "d log Z",
            "d L",
        ],
        &body,
    )
}
