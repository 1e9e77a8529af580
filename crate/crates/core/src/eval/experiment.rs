use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{score, MetricsReport, Repetition, ReportParty};
use crate::datagen::fixtures::{build_fixture, generate_reference_set, truth_from_sources};
use crate::error::{Error, Result, StageExt};
use crate::linkage::{plain_match, train_plain_baseline};
use crate::model::{ExperimentConfig, MatchArray, Party, RecordSet, ReferenceSet};
use crate::protocol::prepare_party;
use crate::seed;
use crate::svm::KernelKind;

/// Where the two parties' records and the reference set come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Fresh seeded fixtures per repetition.
    Synthetic,
    /// CSV files with a header row. `source_column` links records of the two
    /// parties for scoring and is never used for matching.
    Files {
        alice: PathBuf,
        bob: PathBuf,
        reference: PathBuf,
        source_column: String,
    },
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub alice: RecordSet,
    pub bob: RecordSet,
    pub rs: ReferenceSet,
    pub truth: BTreeSet<(String, String)>,
}

impl DataSource {
    /// Data for one repetition: `match_size` records per party and
    /// `reference_size` reference rows.
    pub fn load(&self, cfg: &ExperimentConfig) -> Result<LoadedData> {
        match self {
            DataSource::Synthetic => {
                let f = build_fixture(cfg.match_size, cfg.errors_per_row, cfg.seed)?;
                let rs = generate_reference_set(
                    cfg.reference_size,
                    seed::derive(cfg.seed, "reference", 0),
                    &f.all_values(),
                );
                if rs.len() < cfg.reference_size {
                    return Err(Error::data(format!(
                        "could only draw {} of {} reference rows",
                        rs.len(),
                        cfg.reference_size
                    )));
                }
                Ok(LoadedData {
                    alice: f.alice,
                    bob: f.bob,
                    rs,
                    truth: f.truth,
                })
            }
            DataSource::Files {
                alice,
                bob,
                reference,
                source_column,
            } => {
                let open = |p: &PathBuf| File::open(p).map_err(|e| Error::data(format!("{}: {e}", p.display())));
                let (a, pa) = RecordSet::from_csv(open(alice)?, Party::A, None, Some(source_column))?;
                let (b, pb) = RecordSet::from_csv(open(bob)?, Party::B, None, Some(source_column))?;
                let rs = ReferenceSet::from_csv(open(reference)?, None)?.head(cfg.reference_size);
                let (a, b) = (a.head(cfg.match_size), b.head(cfg.match_size));
                let keep = |recs: &RecordSet, prov: crate::model::Provenance| {
                    let ids: BTreeSet<String> = recs.ids().into_iter().collect();
                    prov.into_iter().filter(|(id, _)| ids.contains(id)).collect()
                };
                let truth = truth_from_sources(&keep(&a, pa), &keep(&b, pb));
                Ok(LoadedData {
                    alice: a,
                    bob: b,
                    rs,
                    truth,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Run grid cells concurrently instead of one after another.
    pub parallel_cells: bool,
    /// Write every MatchArray as CSV into this directory.
    pub match_dir: Option<PathBuf>,
    /// Keep a SHA-256 digest of every MatchArray CSV.
    pub digest_matches: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    /// Per repetition A, B, plain; then the mean rows in the same order.
    pub reports: Vec<MetricsReport>,
    pub match_digests: Vec<(u32, ReportParty, [u8; 32])>,
}

fn handle_matches(
    ma: &MatchArray,
    rep: u32,
    party: ReportParty,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    out: &mut ExperimentOutput,
) -> Result<()> {
    if opts.digest_matches {
        let mut h = Sha256::new();
        ma.to_csv(&mut h)?;
        out.match_digests.push((rep, party, h.finalize().into()));
    }
    if let Some(dir) = &opts.match_dir {
        fs::create_dir_all(dir)?;
        let name = format!(
            "matches_{}_m{}_rs{}_t{}_{}_rep{rep}.csv",
            cfg.kernel, cfg.match_size, cfg.reference_size, cfg.training_size, party
        );
        ma.to_csv(BufWriter::new(File::create(dir.join(name))?))?;
    }
    Ok(())
}

/// Full pipeline for one cell: split matching for both parties and the plain
/// baseline, `cfg.repetitions` times with seeds `cfg.seed + rep`. Timing
/// covers matching only.
pub fn run_experiment(cfg: &ExperimentConfig, source: &DataSource, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = ExperimentOutput::default();
    let mut per_party: [Vec<MetricsReport>; 3] = Default::default();
    for rep in 0..cfg.repetitions {
        let rep_cfg = ExperimentConfig {
            seed: cfg.seed.wrapping_add(u64::from(rep)),
            ..cfg.clone()
        };
        log::info!(
            "cell {} m={} rs={} t={} rep {rep}",
            cfg.kernel,
            cfg.match_size,
            cfg.reference_size,
            cfg.training_size
        );
        let data = source.load(&rep_cfg).stage("load")?;

        let a = prepare_party(Party::A, &data.alice, &data.rs, &rep_cfg).stage("party A")?;
        let b = prepare_party(Party::B, &data.bob, &data.rs, &rep_cfg).stage("party B")?;
        let mut results = Vec::with_capacity(3);
        let (ma, secs) = a.match_peer(&b.smashed)?;
        results.push((ReportParty::A, ma, secs));
        let (ma, secs) = b.match_peer(&a.smashed)?;
        results.push((ReportParty::B, ma, secs));
        drop((a, b));

        let spec = rep_cfg.corruption_spec(seed::derive(rep_cfg.seed, "plain", 0));
        let train = data.alice.head(rep_cfg.training_size);
        let model = train_plain_baseline(&train, &spec, &rep_cfg.svm_config()).stage("plain baseline")?;
        let start = Instant::now();
        let ma = plain_match(&data.alice, &data.bob, &model).stage("plain match")?;
        results.push((ReportParty::Plain, ma, start.elapsed().as_secs_f64()));

        for (slot, (party, ma, secs)) in results.into_iter().enumerate() {
            handle_matches(&ma, rep, party, &rep_cfg, opts, &mut out)?;
            let report = score(&ma, &data.truth).labelled(party, Repetition::Index(rep), &rep_cfg, secs);
            per_party[slot].push(report.clone());
            out.reports.push(report);
        }
    }
    for reps in &per_party {
        out.reports.push(MetricsReport::mean(reps, cfg)?);
    }
    Ok(out)
}

/// Cartesian experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub match_sizes: Vec<usize>,
    pub reference_sizes: Vec<usize>,
    pub training_sizes: Vec<usize>,
    /// Kernel with its C.
    pub kernels: Vec<(KernelKind, f64)>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            match_sizes: vec![2000, 5000, 10000],
            reference_sizes: vec![200, 2000],
            training_sizes: vec![500, 2000],
            kernels: vec![(KernelKind::Linear, 100.0), (KernelKind::Rbf, 0.01)],
        }
    }
}

impl GridSpec {
    pub fn cells(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &(kernel, c) in &self.kernels {
            for &match_size in &self.match_sizes {
                for &reference_size in &self.reference_sizes {
                    for &training_size in &self.training_sizes {
                        out.push(ExperimentConfig {
                            kernel,
                            c,
                            match_size,
                            reference_size,
                            training_size,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Every cell of `grid`, reports concatenated in cell order.
pub fn run_grid(
    base: &ExperimentConfig,
    grid: &GridSpec,
    source: &DataSource,
    opts: &RunOptions,
) -> Result<Vec<MetricsReport>> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(Error::config("experiment grid is empty"));
    }
    let run = |cfg: &ExperimentConfig| run_experiment(cfg, source, opts).map(|o| o.reports);
    let results: Vec<Result<Vec<MetricsReport>>> = if opts.parallel_cells {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    };
    let mut reports = Vec::new();
    for r in results {
        reports.extend(r?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            match_size: 60,
            reference_size: 40,
            training_size: 60,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn repetition_contract() {
        let out = run_experiment(&small(), &DataSource::Synthetic, &RunOptions::default()).unwrap();
        assert_eq!(out.reports.len(), 12);
        let means = &out.reports[9..];
        assert!(means.iter().all(|r| r.repetition == Repetition::Mean));
        for (k, m) in means.iter().enumerate() {
            let reps: Vec<&MetricsReport> = out.reports[..9].iter().skip(k).step_by(3).collect();
            assert!(reps.iter().all(|r| r.party == m.party));
            assert_eq!(
                m.precision,
                (reps[0].precision + reps[1].precision + reps[2].precision) / 3.0
            );
            assert_eq!(m.recall, (reps[0].recall + reps[1].recall + reps[2].recall) / 3.0);
        }
        let seeds: Vec<u64> = out.reports[..9].iter().step_by(3).map(|r| r.config.seed).collect();
        assert_eq!(seeds, vec![42, 43, 44]);
        for r in &out.reports[..9] {
            assert_eq!(r.tp + r.fn_count, 60);
        }
    }

    #[test]
    fn grid_cells() {
        let g = GridSpec::default();
        assert_eq!(g.cells(&ExperimentConfig::default()).len(), 24);
        let empty = GridSpec {
            match_sizes: vec![],
            ..GridSpec::default()
        };
        assert!(run_grid(&small(), &empty, &DataSource::Synthetic, &RunOptions::default()).is_err());
    }
}
