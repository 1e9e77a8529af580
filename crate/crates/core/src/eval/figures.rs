use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{MetricsReport, Repetition, ReportParty};
use crate::error::{Error, Result};

pub const FIGURE_FILES: [&str; 5] = [
    "precision_vs_rs.csv",
    "recall_vs_rs.csv",
    "precision_vs_train.csv",
    "recall_vs_train.csv",
    "match_times.csv",
];

fn method(r: &MetricsReport) -> String {
    match r.party {
        ReportParty::Plain => "Plain".to_string(),
        ReportParty::A => "Split-1".to_string(),
        ReportParty::B => "Split-2".to_string(),
    }
}

type Series = BTreeMap<(String, usize), Vec<f64>>;

fn write_long(path: &Path, series: &Series) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "series", "y"])?;
    for ((name, x), ys) in series {
        let y = ys.iter().sum::<f64>() / ys.len() as f64;
        w.write_record([x.to_string(), name.clone(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format `(x, series, y)` CSVs, x being the match-set size. Mean rows
/// are used when present. The RS figures fix the largest training size, the
/// training-size figures the largest reference set; points sharing a series
/// and x are averaged.
pub fn emit_figure_data(reports: &[MetricsReport], dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::data("no reports to plot"));
    }
    let means: Vec<&MetricsReport> = reports.iter().filter(|r| r.repetition == Repetition::Mean).collect();
    let rows: Vec<&MetricsReport> = if means.is_empty() {
        reports.iter().collect()
    } else {
        means
    };
    let max_train = rows.iter().map(|r| r.config.training_size).max().unwrap_or(0);
    let max_rs = rows.iter().map(|r| r.config.reference_size).max().unwrap_or(0);

    let mut figures: [Series; 5] = Default::default();
    for r in &rows {
        let x = r.config.match_size;
        let kernel = r.config.kernel;
        let m = method(r);
        let plain = r.party == ReportParty::Plain;
        if r.config.training_size == max_train {
            let name = if plain {
                format!("{m}-{kernel}")
            } else {
                format!("{m}-RS{}-{kernel}", r.config.reference_size)
            };
            figures[0].entry((name.clone(), x)).or_default().push(r.precision);
            figures[1].entry((name, x)).or_default().push(r.recall);
        }
        if r.config.reference_size == max_rs {
            let name = format!("{m}-T{}-{kernel}", r.config.training_size);
            figures[2].entry((name.clone(), x)).or_default().push(r.precision);
            figures[3].entry((name, x)).or_default().push(r.recall);
        }
        if r.config.training_size == max_train && r.config.reference_size == max_rs {
            figures[4]
                .entry((format!("{m}-{kernel}"), x))
                .or_default()
                .push(r.match_seconds);
        }
    }

    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (file, series) in FIGURE_FILES.iter().zip(&figures) {
        let path = dir.join(file);
        write_long(&path, series)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExperimentConfig;
    use crate::svm::KernelKind;

    fn report(party: ReportParty, kernel: KernelKind, rs: usize, train: usize, p: f64) -> MetricsReport {
        let cfg = ExperimentConfig {
            kernel,
            reference_size: rs,
            training_size: train,
            ..ExperimentConfig::default()
        };
        let mut r = MetricsReport::from_counts(1, 0, 0).labelled(party, Repetition::Mean, &cfg, 2.5);
        r.precision = p;
        r
    }

    #[test]
    fn series_per_method_party_rs_kernel() {
        let mut reports = Vec::new();
        for kernel in [KernelKind::Linear, KernelKind::Rbf] {
            for rs in [200, 2000] {
                for party in [ReportParty::A, ReportParty::B, ReportParty::Plain] {
                    reports.push(report(party, kernel, rs, 2000, 0.9));
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_figure_data(&reports, dir.path()).unwrap();
        assert_eq!(paths.len(), 5);
        let mut r = csv::Reader::from_path(&paths[0]).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["x", "series", "y"]);
        let series: std::collections::BTreeSet<String> = r.records().map(|row| row.unwrap()[1].to_string()).collect();
        let expected: std::collections::BTreeSet<String> = [
            "Plain-linear",
            "Plain-rbf",
            "Split-1-RS200-linear",
            "Split-1-RS2000-linear",
            "Split-2-RS200-linear",
            "Split-2-RS2000-linear",
            "Split-1-RS200-rbf",
            "Split-1-RS2000-rbf",
            "Split-2-RS200-rbf",
            "Split-2-RS2000-rbf",
        ]
        .map(String::from)
        .into();
        assert_eq!(series, expected);
    }

    #[test]
    fn empty_reports_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_figure_data(&[], dir.path()).is_err());
    }
}
