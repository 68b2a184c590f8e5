//! Frozen CSV schemas for rounds, summaries and curves.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so every value
//! parses back to the same bits. Booleans are `0`/`1`; missing optionals are
//! empty cells.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RegretRow;
use crate::strategies::{Algorithm, RoundRecord, Termination};

pub const ROUNDS_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const CURVE_SCHEMA_VERSION: u32 = 1;

/// One trace row tagged with its episode coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub algorithm: Algorithm,
    pub trial: usize,
    pub experiment: usize,
    pub seed: u64,
    pub record: RoundRecord,
}

/// Per-episode outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub experiment: usize,
    pub seed: u64,
    pub termination: Termination,
    pub error: Option<String>,
    /// Algorithmic rounds completed.
    pub rounds: usize,
    pub first_good_round: Option<usize>,
    pub regret: RegretRow,
    pub simple_regret: f64,
    pub estimate_good: bool,
    pub eta: Option<f64>,
    pub f_star: f64,
    pub lengthscale: f64,
    pub scale: f64,
}

/// One point of an aggregate curve: statistics across trials at round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub curve: String,
    pub algorithm: Algorithm,
    pub t: usize,
    pub mean: f64,
    pub std: f64,
    pub half_std: f64,
    pub trials: usize,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub const ROUND_LEADING: [&str; 6] = ["schema_version", "algorithm", "trial", "experiment", "seed", "t"];
pub const ROUND_MIDDLE: [&str; 7] = [
    "y",
    "f",
    "r",
    "regret_standard",
    "regret_indicator",
    "regret_large_gap",
    "regret_hinge",
];
pub const ROUND_TRAILING: [&str; 6] = [
    "estimate_value",
    "estimate_good",
    "simple_regret",
    "beta_sqrt",
    "info_gain",
    "active",
];

/// Header for a `dim`-dimensional problem.
pub fn round_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ROUND_LEADING.iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|i| format!("x_{i}")));
    h.extend(ROUND_MIDDLE.iter().map(|s| s.to_string()));
    h.push("good".into());
    h.extend((0..dim).map(|i| format!("estimate_{i}")));
    h.extend(ROUND_TRAILING.iter().map(|s| s.to_string()));
    h
}

pub fn rounds_to_bytes(rows: &[RoundRow]) -> Result<Vec<u8>> {
    let dim = rows.first().map_or(0, |r| r.record.x.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(round_header(dim))?;
    for row in rows {
        let r = &row.record;
        if r.x.len() != dim || r.estimate.len() != dim {
            return Err(Error::input("rows of one file must share a dimension"));
        }
        let mut rec: Vec<String> = vec![
            ROUNDS_SCHEMA_VERSION.to_string(),
            row.algorithm.name().into(),
            row.trial.to_string(),
            row.experiment.to_string(),
            row.seed.to_string(),
            r.t.to_string(),
        ];
        rec.extend(r.x.iter().map(|&v| fmt_f64(v)));
        rec.extend(
            [
                r.y,
                r.f,
                r.regret.r,
                r.regret.standard,
                r.regret.indicator,
                r.regret.large_gap,
                r.regret.hinge,
            ]
            .map(fmt_f64),
        );
        rec.push(fmt_bool(r.good).into());
        rec.extend(r.estimate.iter().map(|&v| fmt_f64(v)));
        rec.push(fmt_f64(r.estimate_value));
        rec.push(fmt_bool(r.estimate_good).into());
        rec.push(fmt_f64(r.simple_regret));
        rec.push(fmt_f64(r.beta_sqrt));
        rec.push(fmt_f64(r.info_gain));
        rec.push(fmt_opt(r.active));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub const SUMMARY_HEADER: [&str; 20] = [
    "schema_version",
    "config_hash",
    "algorithm",
    "trial",
    "experiment",
    "seed",
    "termination",
    "error",
    "rounds",
    "first_good_round",
    "regret_standard",
    "regret_indicator",
    "regret_large_gap",
    "regret_hinge",
    "simple_regret",
    "estimate_good",
    "eta",
    "f_star",
    "lengthscale",
    "scale",
];

pub fn summaries_to_bytes(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for s in rows {
        w.write_record([
            SUMMARY_SCHEMA_VERSION.to_string(),
            s.config_hash.clone(),
            s.algorithm.name().into(),
            s.trial.to_string(),
            s.experiment.to_string(),
            s.seed.to_string(),
            s.termination.name().into(),
            s.error.clone().unwrap_or_default(),
            s.rounds.to_string(),
            fmt_opt(s.first_good_round),
            fmt_f64(s.regret.standard),
            fmt_f64(s.regret.indicator),
            fmt_f64(s.regret.large_gap),
            fmt_f64(s.regret.hinge),
            fmt_f64(s.simple_regret),
            fmt_bool(s.estimate_good).into(),
            s.eta.map(fmt_f64).unwrap_or_default(),
            fmt_f64(s.f_star),
            fmt_f64(s.lengthscale),
            fmt_f64(s.scale),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub const CURVE_HEADER: [&str; 8] = ["schema_version", "curve", "algorithm", "t", "mean", "std", "half_std", "trials"];

pub fn curves_to_bytes(points: &[CurvePoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    for p in points {
        w.write_record([
            CURVE_SCHEMA_VERSION.to_string(),
            p.curve.clone(),
            p.algorithm.name().into(),
            p.t.to_string(),
            fmt_f64(p.mean),
            fmt_f64(p.std),
            fmt_f64(p.half_std),
            p.trials.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Header-indexed access to one CSV record.
struct Cells<'a> {
    index: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
    line: u64,
}

impl Cells<'_> {
    fn raw(&self, col: &str) -> Result<&str> {
        let i = *self
            .index
            .get(col)
            .ok_or_else(|| Error::input(format!("missing column `{col}`")))?;
        self.record
            .get(i)
            .ok_or_else(|| Error::input(format!("line {}: short record", self.line)))
    }

    fn parse<T: std::str::FromStr>(&self, col: &str) -> Result<T> {
        let s = self.raw(col)?;
        s.parse()
            .map_err(|_| Error::input(format!("line {}: bad value `{s}` in column `{col}`", self.line)))
    }

    fn opt<T: std::str::FromStr>(&self, col: &str) -> Result<Option<T>> {
        if self.raw(col)?.is_empty() {
            Ok(None)
        } else {
            self.parse(col).map(Some)
        }
    }

    fn flag(&self, col: &str) -> Result<bool> {
        match self.raw(col)? {
            "1" => Ok(true),
            "0" => Ok(false),
            s => Err(Error::input(format!("line {}: bad flag `{s}` in column `{col}`", self.line))),
        }
    }

    fn algorithm(&self) -> Result<Algorithm> {
        let s = self.raw("algorithm")?;
        Algorithm::parse(s).ok_or_else(|| Error::input(format!("line {}: unknown algorithm `{s}`", self.line)))
    }

    fn schema(&self, want: u32) -> Result<()> {
        let v: u32 = self.parse("schema_version")?;
        if v != want {
            return Err(Error::input(format!("schema_version {v} is not supported (expected {want})")));
        }
        Ok(())
    }
}

fn read_all(bytes: &[u8], mut f: impl FnMut(&Cells) -> Result<()>) -> Result<()> {
    let mut r = csv::Reader::from_reader(bytes);
    let index: HashMap<String, usize> = r
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    for rec in r.records() {
        let record = rec?;
        let line = record.position().map_or(0, |p| p.line());
        f(&Cells {
            index: &index,
            record: &record,
            line,
        })?;
    }
    Ok(())
}

pub fn rounds_from_bytes(bytes: &[u8]) -> Result<Vec<RoundRow>> {
    let dim = {
        let mut r = csv::Reader::from_reader(bytes);
        r.headers()?.iter().filter(|h| h.starts_with("x_")).count()
    };
    let mut out = Vec::new();
    read_all(bytes, |c| {
        c.schema(ROUNDS_SCHEMA_VERSION)?;
        let xs = (0..dim).map(|i| c.parse(&format!("x_{i}"))).collect::<Result<Vec<f64>>>()?;
        let est = (0..dim)
            .map(|i| c.parse(&format!("estimate_{i}")))
            .collect::<Result<Vec<f64>>>()?;
        out.push(RoundRow {
            algorithm: c.algorithm()?,
            trial: c.parse("trial")?,
            experiment: c.parse("experiment")?,
            seed: c.parse("seed")?,
            record: RoundRecord {
                t: c.parse("t")?,
                x: xs,
                y: c.parse("y")?,
                f: c.parse("f")?,
                regret: RegretRow {
                    r: c.parse("r")?,
                    standard: c.parse("regret_standard")?,
                    indicator: c.parse("regret_indicator")?,
                    large_gap: c.parse("regret_large_gap")?,
                    hinge: c.parse("regret_hinge")?,
                },
                good: c.flag("good")?,
                estimate: est,
                estimate_value: c.parse("estimate_value")?,
                estimate_good: c.flag("estimate_good")?,
                simple_regret: c.parse("simple_regret")?,
                beta_sqrt: c.parse("beta_sqrt")?,
                info_gain: c.parse("info_gain")?,
                active: c.opt("active")?,
            },
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn summaries_from_bytes(bytes: &[u8]) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    read_all(bytes, |c| {
        c.schema(SUMMARY_SCHEMA_VERSION)?;
        let term = c.raw("termination")?;
        let error = c.raw("error")?;
        out.push(SummaryRow {
            config_hash: c.raw("config_hash")?.to_string(),
            algorithm: c.algorithm()?,
            trial: c.parse("trial")?,
            experiment: c.parse("experiment")?,
            seed: c.parse("seed")?,
            termination: Termination::parse(term)
                .ok_or_else(|| Error::input(format!("line {}: unknown termination `{term}`", c.line)))?,
            error: (!error.is_empty()).then(|| error.to_string()),
            rounds: c.parse("rounds")?,
            first_good_round: c.opt("first_good_round")?,
            regret: RegretRow {
                r: f64::NAN,
                standard: c.parse("regret_standard")?,
                indicator: c.parse("regret_indicator")?,
                large_gap: c.parse("regret_large_gap")?,
                hinge: c.parse("regret_hinge")?,
            },
            simple_regret: c.parse("simple_regret")?,
            estimate_good: c.flag("estimate_good")?,
            eta: c.opt("eta")?,
            f_star: c.parse("f_star")?,
            lengthscale: c.parse("lengthscale")?,
            scale: c.parse("scale")?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn curves_from_bytes(bytes: &[u8]) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    read_all(bytes, |c| {
        c.schema(CURVE_SCHEMA_VERSION)?;
        out.push(CurvePoint {
            curve: c.raw("curve")?.to_string(),
            algorithm: c.algorithm()?,
            t: c.parse("t")?,
            mean: c.parse("mean")?,
            std: c.parse("std")?,
            half_std: c.parse("half_std")?,
            trials: c.parse("trials")?,
        });
        Ok(())
    })?;
    Ok(out)
}
