use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use splitlink::datagen::fixtures::{build_fixture, generate_reference_set, truth_from_sources};
use splitlink::datagen::{build_training_data, corrupt_recordset, deduplicate};
use splitlink::eval::{
    emit_figure_data, read_reports_csv, run_grid, score, write_reports_csv, DataSource, GridSpec, Repetition,
    ReportParty, RunOptions,
};
use splitlink::linkage::{plain_match, train_plain_baseline};
use splitlink::model::{
    read_examples_csv, write_examples_csv, ExperimentConfig, MatchArray, Party, Provenance, RecordSet, ReferenceSet,
};
use splitlink::protocol::{run_in_process, run_party, write_smashed_file, PartyOutcome, TcpTransport};
use splitlink::smashing::map_recordset_to_refset;
use splitlink::svm::{self, encode_model, KernelKind};
use splitlink::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "splitlink",
    version,
    about = "Record linkage over smashed reference-set distances"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Base seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value experiment configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// linear or rbf
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true)]
    c: Option<f64>,
    /// RBF width, or "auto"
    #[arg(long, global = true)]
    gamma: Option<String>,
    /// Reference-set size
    #[arg(long, global = true)]
    rs: Option<usize>,
    /// attr:ref pairs, e.g. first:first,last:last,middle:first,middle:last
    #[arg(long, global = true)]
    mapping: Option<String>,
    #[arg(long, global = true)]
    train_size: Option<usize>,
    #[arg(long, global = true)]
    errors_per_row: Option<u32>,
    /// Output file or directory, depending on the command
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More logging (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug, Clone)]
struct RecordInput {
    /// Records CSV with a header row
    #[arg(long)]
    input: PathBuf,
    /// A or B
    #[arg(long, default_value = "A")]
    party: Party,
    /// Column kept as provenance and excluded from matching
    #[arg(long)]
    id_column: Option<String>,
    /// Matching columns, comma separated (default: every other column)
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
}

#[derive(Args, Debug, Clone)]
struct PairInput {
    #[arg(long)]
    alice: PathBuf,
    #[arg(long)]
    bob: PathBuf,
    /// Column linking records of the two files, used only for scoring
    #[arg(long)]
    id_column: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop duplicate records
    Prepare(RecordInput),
    /// Apply seeded edit errors to every record
    Corrupt(RecordInput),
    /// Map records onto the reference set and write a SmashedBatch file
    Smash {
        #[command(flatten)]
        records: RecordInput,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Build synthetic training examples from a party's own records
    Synth {
        #[command(flatten)]
        records: RecordInput,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Train a model from an examples CSV
    Train {
        #[arg(long)]
        examples: PathBuf,
    },
    /// Run both parties in one process and write their match arrays
    Match {
        #[command(flatten)]
        pair: PairInput,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Party B: listen for one session
    Serve {
        #[command(flatten)]
        records: RecordInput,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Party A: connect to a listening peer
    Connect {
        #[command(flatten)]
        records: RecordInput,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
    /// Plain (non-private) similarity baseline trained on A's records
    Baseline {
        #[command(flatten)]
        pair: PairInput,
    },
    /// Score a match array against provenance-derived truth
    Score {
        #[arg(long)]
        matches: PathBuf,
        #[command(flatten)]
        pair: PairInput,
    },
    /// Run the experiment grid and write metric reports
    Experiment {
        /// Match-set sizes (default: config match_size)
        #[arg(long, value_delimiter = ',')]
        match_sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        rs_sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        train_sizes: Option<Vec<usize>>,
        /// kernel:C pairs, e.g. linear:100,rbf:0.01
        #[arg(long, value_delimiter = ',')]
        kernels: Option<Vec<String>>,
        /// Run the full default grid
        #[arg(long)]
        full_grid: bool,
        #[arg(long)]
        parallel_cells: bool,
        /// Also write every match array into this directory
        #[arg(long)]
        match_dir: Option<PathBuf>,
        /// Use CSV files instead of synthetic fixtures
        #[arg(long, requires_all = ["bob", "reference"])]
        alice: Option<PathBuf>,
        #[arg(long)]
        bob: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "source_id")]
        id_column: String,
    },
    /// Turn a reports CSV into figure-data CSVs
    EmitFigures {
        #[arg(long)]
        reports: PathBuf,
    },
    /// Write seeded synthetic fixtures (alice.csv, bob.csv, reference.csv)
    Fixtures {
        #[arg(long, default_value_t = 2000)]
        size: usize,
    },
}

fn experiment_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::parse_kv(&fs::read_to_string(p).map_err(|e| config_err(p, e))?)?,
        None => ExperimentConfig::default(),
    };
    let overrides: [(&str, Option<String>); 8] = [
        ("seed", g.seed.map(|v| v.to_string())),
        ("kernel", g.kernel.clone()),
        ("c", g.c.map(|v| v.to_string())),
        ("gamma", g.gamma.clone()),
        ("reference_size", g.rs.map(|v| v.to_string())),
        ("mapping", g.mapping.clone()),
        ("training_size", g.train_size.map(|v| v.to_string())),
        ("errors_per_row", g.errors_per_row.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_err(p: &Path, e: io::Error) -> Error {
    Error::Config(format!("{}: {e}", p.display()))
}

fn open(p: &Path) -> Result<File> {
    File::open(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))
}

fn load_records(input: &RecordInput) -> Result<(RecordSet, Provenance)> {
    RecordSet::from_csv(
        open(&input.input)?,
        input.party,
        input.columns.as_deref(),
        input.id_column.as_deref(),
    )
}

fn load_reference(path: &Path, cfg: &ExperimentConfig) -> Result<ReferenceSet> {
    Ok(ReferenceSet::from_csv(open(path)?, None)?.head(cfg.reference_size))
}

fn load_pair(
    pair: &PairInput,
) -> Result<(
    RecordSet,
    RecordSet,
    Option<std::collections::BTreeSet<(String, String)>>,
)> {
    let id = pair.id_column.as_deref();
    let (a, pa) = RecordSet::from_csv(open(&pair.alice)?, Party::A, None, id)?;
    let (b, pb) = RecordSet::from_csv(open(&pair.bob)?, Party::B, None, id)?;
    let truth = id.map(|_| truth_from_sources(&pa, &pb));
    Ok((a, b, truth))
}

/// `--out` as a writer, stdout when absent.
fn output(g: &Global) -> Result<Box<dyn Write>> {
    Ok(match &g.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn out_dir(g: &Global) -> Result<PathBuf> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_records(g: &Global, recs: &RecordSet, prov: &Provenance, id_column: Option<&str>) -> Result<()> {
    let prov = id_column.map(|c| (c, prov));
    recs.to_csv(output(g)?, prov)
}

fn print_metrics(label: &str, ma: &MatchArray, truth: &std::collections::BTreeSet<(String, String)>) {
    let r = score(ma, truth);
    eprintln!(
        "{label}: tp={} fp={} fn={} precision={:.4} recall={:.4}",
        r.tp, r.fp, r.fn_count, r.precision, r.recall
    );
}

fn write_outcome(dir: &Path, o: &PartyOutcome) -> Result<()> {
    let path = dir.join(format!("matches_{}.csv", o.role));
    o.matches.to_csv(BufWriter::new(File::create(&path)?))?;
    eprintln!(
        "party {}: {} pairs matched locally, {} reported by peer, matching took {:.3} s -> {}",
        o.role,
        o.matches.matched_pairs().len(),
        o.peer_matches.len(),
        o.match_seconds,
        path.display()
    );
    Ok(())
}

fn parse_kernels(specs: &[String]) -> Result<Vec<(KernelKind, f64)>> {
    specs
        .iter()
        .map(|s| {
            let (k, c) = s
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("kernel spec '{s}' is not kernel:C")))?;
            let c: f64 = c.parse().map_err(|_| Error::Config(format!("bad C in '{s}'")))?;
            Ok((k.parse()?, c))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = experiment_config(g)?;
    match &cli.command {
        Command::Prepare(input) => {
            let (recs, prov) = load_records(input)?;
            let before = recs.len();
            let recs = deduplicate(&recs);
            log::info!("kept {} of {before} records", recs.len());
            write_records(g, &recs, &prov, input.id_column.as_deref())
        }
        Command::Corrupt(input) => {
            let (recs, prov) = load_records(input)?;
            let corrupted = corrupt_recordset(&recs, &cfg.corruption_spec(cfg.seed))?;
            write_records(g, &corrupted, &prov, input.id_column.as_deref())
        }
        Command::Smash { records, reference } => {
            let (recs, _) = load_records(records)?;
            let rs = load_reference(reference, &cfg)?;
            let mapping = cfg.resolve_mapping(recs.schema(), rs.schema())?;
            let smashed = map_recordset_to_refset(&recs, &rs, &mapping)?;
            let path = g
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("smashed_{}.slsd", recs.party)));
            write_smashed_file(&path, &smashed)
        }
        Command::Synth { records, reference } => {
            let (recs, _) = load_records(records)?;
            let recs = recs.head(cfg.training_size);
            let rs = load_reference(reference, &cfg)?;
            let mapping = cfg.resolve_mapping(recs.schema(), rs.schema())?;
            let smashed = map_recordset_to_refset(&recs, &rs, &mapping)?;
            let examples = build_training_data(&smashed, &recs, &rs, &mapping, &cfg.corruption_spec(cfg.seed))?;
            write_examples_csv(&examples, output(g)?)
        }
        Command::Train { examples } => {
            let examples = read_examples_csv(open(examples)?)?;
            let model = svm::train(&examples, &cfg.svm_config(), cfg.seed)?;
            eprintln!(
                "{} support vectors, training accuracy {:.4}",
                model.support_vector_count(),
                model.accuracy(&examples)?
            );
            output(g)?.write_all(&encode_model(&model))?;
            Ok(())
        }
        Command::Match { pair, reference } => {
            let (a, b, truth) = load_pair(pair)?;
            let rs = load_reference(reference, &cfg)?;
            let (oa, ob) = run_in_process(&a, &b, &rs, &cfg)?;
            let dir = out_dir(g)?;
            write_outcome(&dir, &oa)?;
            write_outcome(&dir, &ob)?;
            if let Some(t) = truth {
                print_metrics("party A", &oa.matches, &t);
                print_metrics("party B", &ob.matches, &t);
            }
            Ok(())
        }
        Command::Serve {
            records,
            reference,
            listen,
        } => {
            let (recs, _) = load_records(&RecordInput {
                party: Party::B,
                ..records.clone()
            })?;
            let rs = load_reference(reference, &cfg)?;
            let listener = TcpListener::bind(listen)?;
            eprintln!("listening on {}", listener.local_addr()?);
            let transport = TcpTransport::accept(&listener)?;
            let outcome = run_party(Party::B, &recs, &rs, &cfg, transport)?;
            write_outcome(&out_dir(g)?, &outcome)
        }
        Command::Connect {
            records,
            reference,
            addr,
        } => {
            let (recs, _) = load_records(&RecordInput {
                party: Party::A,
                ..records.clone()
            })?;
            let rs = load_reference(reference, &cfg)?;
            let transport = TcpTransport::connect(addr.as_str())?;
            let outcome = run_party(Party::A, &recs, &rs, &cfg, transport)?;
            write_outcome(&out_dir(g)?, &outcome)
        }
        Command::Baseline { pair } => {
            let (a, b, truth) = load_pair(pair)?;
            let model = train_plain_baseline(
                &a.head(cfg.training_size),
                &cfg.corruption_spec(cfg.seed),
                &cfg.svm_config(),
            )?;
            let ma = plain_match(&a, &b, &model)?;
            if let Some(t) = truth {
                print_metrics("plain", &ma, &t);
            }
            ma.to_csv(output(g)?)
        }
        Command::Score { matches, pair } => {
            let ma = MatchArray::from_csv(open(matches)?)?;
            let (_, _, truth) = load_pair(pair)?;
            let truth = truth.ok_or_else(|| Error::Config("score needs --id-column".into()))?;
            let report = score(&ma, &truth).labelled(ReportParty::Plain, Repetition::Index(0), &cfg, 0.0);
            write_reports_csv(&[report], output(g)?)
        }
        Command::Experiment {
            match_sizes,
            rs_sizes,
            train_sizes,
            kernels,
            full_grid,
            parallel_cells,
            match_dir,
            alice,
            bob,
            reference,
            id_column,
        } => {
            let mut grid = if *full_grid {
                GridSpec::default()
            } else {
                GridSpec {
                    match_sizes: vec![cfg.match_size],
                    reference_sizes: vec![cfg.reference_size],
                    training_sizes: vec![cfg.training_size],
                    kernels: vec![(cfg.kernel, cfg.c)],
                }
            };
            if let Some(v) = match_sizes {
                grid.match_sizes = v.clone();
            }
            if let Some(v) = rs_sizes {
                grid.reference_sizes = v.clone();
            }
            if let Some(v) = train_sizes {
                grid.training_sizes = v.clone();
            }
            if let Some(v) = kernels {
                grid.kernels = parse_kernels(v)?;
            }
            let source = match (alice, bob, reference) {
                (Some(a), Some(b), Some(r)) => DataSource::Files {
                    alice: a.clone(),
                    bob: b.clone(),
                    reference: r.clone(),
                    source_column: id_column.clone(),
                },
                _ => DataSource::Synthetic,
            };
            let opts = RunOptions {
                parallel_cells: *parallel_cells,
                match_dir: match_dir.clone(),
                digest_matches: false,
            };
            let reports = run_grid(&cfg, &grid, &source, &opts)?;
            for r in reports.iter().filter(|r| r.repetition == Repetition::Mean) {
                eprintln!(
                    "{:<5} {} m={} rs={} t={}: precision={:.4} recall={:.4} match={:.3}s",
                    r.party.to_string(),
                    r.config.kernel,
                    r.config.match_size,
                    r.config.reference_size,
                    r.config.training_size,
                    r.precision,
                    r.recall,
                    r.match_seconds
                );
            }
            write_reports_csv(&reports, output(g)?)
        }
        Command::EmitFigures { reports } => {
            let reports = read_reports_csv(open(reports)?)?;
            for p in emit_figure_data(&reports, &out_dir(g)?)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Fixtures { size } => {
            let f = build_fixture(*size, cfg.errors_per_row, cfg.seed)?;
            let rs = generate_reference_set(cfg.reference_size, cfg.seed ^ 0x5245_4653, &f.all_values());
            let dir = out_dir(g)?;
            f.alice.to_csv(
                File::create(dir.join("alice.csv"))?,
                Some(("source_id", &f.alice_sources)),
            )?;
            f.bob
                .to_csv(File::create(dir.join("bob.csv"))?, Some(("source_id", &f.bob_sources)))?;
            rs.to_csv(File::create(dir.join("reference.csv"))?)?;
            eprintln!(
                "wrote {} records per party and {} reference rows to {}",
                size,
                rs.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
