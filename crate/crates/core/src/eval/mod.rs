//! Precision/recall scoring, the experiment runner and figure-data export.

mod experiment;
mod figures;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

pub use experiment::{run_experiment, run_grid, DataSource, ExperimentOutput, GridSpec, LoadedData, RunOptions};
pub use figures::{emit_figure_data, FIGURE_FILES};

use crate::error::{Error, Result};
use crate::model::{ExperimentConfig, MatchArray, Party};

/// Whose matches a report scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReportParty {
    A,
    B,
    Plain,
}

impl From<Party> for ReportParty {
    fn from(p: Party) -> Self {
        match p {
            Party::A => ReportParty::A,
            Party::B => ReportParty::B,
        }
    }
}

impl fmt::Display for ReportParty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportParty::A => "A",
            ReportParty::B => "B",
            ReportParty::Plain => "plain",
        })
    }
}

impl FromStr for ReportParty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(ReportParty::A),
            "B" => Ok(ReportParty::B),
            "plain" => Ok(ReportParty::Plain),
            other => Err(Error::data(format!("unknown report party '{other}'"))),
        }
    }
}

/// A single repetition, or the mean over all repetitions of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Repetition {
    Index(u32),
    Mean,
}

impl fmt::Display for Repetition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Repetition::Index(i) => write!(f, "{i}"),
            Repetition::Mean => f.write_str("mean"),
        }
    }
}

impl FromStr for Repetition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(Repetition::Mean);
        }
        s.parse()
            .map(Repetition::Index)
            .map_err(|_| Error::data(format!("bad repetition '{s}'")))
    }
}

/// Scores of one party in one repetition (or their mean).
///
/// A zero denominator yields 1.0 with the matching flag set. In mean rows the
/// counts are sums over the repetitions while precision, recall and time are
/// arithmetic means of the repetition values.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub party: ReportParty,
    pub repetition: Repetition,
    /// Cell configuration; `seed` is the seed this repetition ran with (the
    /// base seed in mean rows).
    pub config: ExperimentConfig,
    pub tp: u64,
    pub fp: u64,
    pub fn_count: u64,
    pub precision: f64,
    pub recall: f64,
    pub precision_zero_denominator: bool,
    pub recall_zero_denominator: bool,
    pub match_seconds: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Count predicted matches against `truth` (pairs of A id, B id).
pub fn score(ma: &MatchArray, truth: &BTreeSet<(String, String)>) -> MetricsReport {
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (a, b, _, p) in ma.iter() {
        if p.is_match() {
            if truth.contains(&(a.to_string(), b.to_string())) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let fn_count = truth.len() as u64 - tp;
    MetricsReport::from_counts(tp, fp, fn_count)
}

impl MetricsReport {
    /// Report with default identification fields; see [`MetricsReport::labelled`].
    pub fn from_counts(tp: u64, fp: u64, fn_count: u64) -> Self {
        let (precision, precision_zero_denominator) = ratio(tp, tp + fp);
        let (recall, recall_zero_denominator) = ratio(tp, tp + fn_count);
        MetricsReport {
            party: ReportParty::Plain,
            repetition: Repetition::Index(0),
            config: ExperimentConfig::default(),
            tp,
            fp,
            fn_count,
            precision,
            recall,
            precision_zero_denominator,
            recall_zero_denominator,
            match_seconds: 0.0,
        }
    }

    pub fn labelled(
        mut self,
        party: ReportParty,
        repetition: Repetition,
        config: &ExperimentConfig,
        seconds: f64,
    ) -> Self {
        self.party = party;
        self.repetition = repetition;
        self.config = config.clone();
        self.match_seconds = seconds;
        self
    }

    /// Mean row over repetition reports of one party and cell.
    pub fn mean(reps: &[MetricsReport], base: &ExperimentConfig) -> Result<MetricsReport> {
        let first = reps.first().ok_or_else(|| Error::data("no repetitions to average"))?;
        let n = reps.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reps.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            party: first.party,
            repetition: Repetition::Mean,
            config: base.clone(),
            tp: reps.iter().map(|r| r.tp).sum(),
            fp: reps.iter().map(|r| r.fp).sum(),
            fn_count: reps.iter().map(|r| r.fn_count).sum(),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            precision_zero_denominator: reps.iter().any(|r| r.precision_zero_denominator),
            recall_zero_denominator: reps.iter().any(|r| r.recall_zero_denominator),
            match_seconds: avg(|r| r.match_seconds),
        })
    }

    /// Copy with the timing zeroed, for comparisons across runs.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport {
            match_seconds: 0.0,
            ..self.clone()
        }
    }
}

const COUNT_COLUMNS: [&str; 8] = [
    "tp",
    "fp",
    "fn",
    "precision",
    "recall",
    "precision_zero_denominator",
    "recall_zero_denominator",
    "match_seconds",
];

fn config_values(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    cfg.to_kv()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// One header row, one line per report. Reals are written with 17
/// significant digits so the file reloads to identical values.
pub fn write_reports_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let echo_keys: Vec<String> = config_values(&ExperimentConfig::default())
        .into_iter()
        .map(|(k, _)| k)
        .collect();
    let mut header = vec!["party".to_string(), "repetition".to_string()];
    header.extend(echo_keys.iter().cloned());
    header.extend(COUNT_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.party.to_string(), r.repetition.to_string()];
        row.extend(config_values(&r.config).into_iter().map(|(_, v)| v));
        row.extend([
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_count.to_string(),
            format!("{:.16e}", r.precision),
            format!("{:.16e}", r.recall),
            u8::from(r.precision_zero_denominator).to_string(),
            u8::from(r.recall_zero_denominator).to_string(),
            format!("{:.16e}", r.match_seconds),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports_csv<R: Read>(input: R) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("reports CSV lacks column '{name}'")))
    };
    let party_i = col("party")?;
    let rep_i = col("repetition")?;
    let counts = COUNT_COLUMNS.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let echo: Vec<(String, usize)> = header
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != party_i && *i != rep_i && !COUNT_COLUMNS.contains(&h.as_str()))
        .map(|(i, h)| (h.clone(), i))
        .collect();

    let num = |v: &str, what: &str| -> Result<f64> { v.parse().map_err(|_| Error::data(format!("bad {what} '{v}'"))) };
    let int = |v: &str, what: &str| -> Result<u64> { v.parse().map_err(|_| Error::data(format!("bad {what} '{v}'"))) };
    let flag = |v: &str| -> Result<bool> {
        match v {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::data(format!("bad flag '{other}'"))),
        }
    };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let mut config = ExperimentConfig::default();
        for (key, i) in &echo {
            config.set(key, &row[*i])?;
        }
        out.push(MetricsReport {
            party: row[party_i].parse()?,
            repetition: row[rep_i].parse()?,
            config,
            tp: int(&row[counts[0]], "tp")?,
            fp: int(&row[counts[1]], "fp")?,
            fn_count: int(&row[counts[2]], "fn")?,
            precision: num(&row[counts[3]], "precision")?,
            recall: num(&row[counts[4]], "recall")?,
            precision_zero_denominator: flag(&row[counts[5]])?,
            recall_zero_denominator: flag(&row[counts[6]])?,
            match_seconds: num(&row[counts[7]], "match_seconds")?,
        });
    }
    Ok(out)
}
