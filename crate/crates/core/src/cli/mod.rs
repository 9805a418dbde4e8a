//! Experiment driver: subcommands over a run directory.
//!
//! A run directory holds `config.txt` plus the artifacts of each stage:
//!
//! | stage       | writes                                                      |
//! |-------------|-------------------------------------------------------------|
//! | `gen-data`  | `train.csv`, `test.csv`                                     |
//! | `pretrain`  | `classifier.weights` (+ `.meta`), `pretrain_log.csv`        |
//! | `consensus` | `consensus.csv`, `consensus_summary.csv`                    |
//! | `train`     | `selection.weights`, `collab.weights`, `train_log.csv`      |
//! | `eval`      | `predictions.csv`, `eval.csv`, `baselines.csv`              |
//! | `sweep`     | `legs/<λ>-<seed>/…`, `curve.csv`, `baselines.csv`           |
//!
//! `manifest.json` is refreshed after every command. Existing artifacts are
//! never overwritten without `--force`.

pub mod config;
pub mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::consensus::{
    build_consensus_dataset, consensus_accuracy, majority_vote_accuracy, ConsensusDataset,
};
use crate::data::{annotate, gen_blobs, load_csv, to_csv_string, Dataset};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_legs, baseline_confidence_deferral, baselines_simple, baselines_to_csv, curve_to_csv,
    evaluate_system, parse_baselines, parse_curve, records_to_csv, sweep_legs, CoveragePoint,
    EvalSummary, SweepData,
};
use crate::lecomh::{train_lecomh, LecomhModel};
use crate::pretrain::{pretrain_with_report, Classifier};

pub use config::{AnnotatorKind, DataSource, RunConfig};
pub use manifest::{RunManifest, MANIFEST_NAME};

/// Coverage whose nearest curve point is reported.
pub const REPORT_COVERAGE: f64 = 0.5;
const REPORT_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "lecomh", version, about = "Cost-aware human-AI collaborative classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run directory (default `<out_dir>/<timestamp>-<confighash8>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    pub force: bool,

    /// First pipeline stage to run; earlier artifacts are reused.
    #[arg(long, global = true, value_enum)]
    pub stage: Option<Stage>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or import) train/test datasets.
    GenData,
    /// Pre-train the classifier on noisy labels.
    Pretrain,
    /// Build consensus labels.
    Consensus,
    /// Train selection and collaboration networks at `lecomh.lambda`.
    Train,
    /// Evaluate the trained system and the baselines.
    Eval,
    /// Train and evaluate every `eval.lambdas` × trial pair.
    Sweep,
    /// gen-data → pretrain → consensus → sweep.
    Pipeline,
    /// Compare finished runs at matched coverage.
    Report {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Print the configuration schema with defaults.
    Schema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    GenData,
    Pretrain,
    Consensus,
    Sweep,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Pretrain => "pretrain",
            Stage::Consensus => "consensus",
            Stage::Sweep => "sweep",
        }
    }
}

/// An open run directory.
#[derive(Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub cfg: RunConfig,
    force: bool,
    started: String,
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn in_stage(stage: &str, e: Error) -> Error {
    let tag = |m: String| format!("stage {stage}: {m}");
    match e {
        Error::Shape(m) => Error::Shape(tag(m)),
        Error::State(m) => Error::State(tag(m)),
        Error::Numeric(m) => Error::Numeric(tag(m)),
        Error::Config(m) => Error::Config(tag(m)),
        Error::Range(m) => Error::Range(tag(m)),
        Error::Contract(m) => Error::Contract(tag(m)),
        other => other,
    }
}

impl Run {
    /// Resolves the configuration and run directory from the global flags.
    pub fn open(cli: &Cli) -> Result<Run> {
        let mut cfg = match (&cli.config, &cli.out) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(dir)) if dir.join("config.txt").exists() => RunConfig::load(&dir.join("config.txt"))?,
            _ => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let dir = match &cli.out {
            Some(d) => d.clone(),
            None => cfg.out_dir.join(format!(
                "{}-{}",
                chrono::Utc::now().format("%Y%m%dT%H%M%SZ"),
                cfg.hash8()
            )),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let run = Run {
            dir,
            cfg,
            force: cli.force,
            started: timestamp(),
        };
        let cfg_path = run.path("config.txt");
        let text = run.cfg.to_text();
        match std::fs::read_to_string(&cfg_path) {
            Ok(existing) if existing == text => {}
            Ok(_) if !run.force => {
                return Err(Error::Config(format!(
                    "{} holds a different configuration; pass --force to replace it",
                    run.dir.display()
                )))
            }
            _ => std::fs::write(&cfg_path, text).map_err(|e| Error::io(&cfg_path, e))?,
        }
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn guard(&self, path: &Path) -> Result<()> {
        if path.exists() && !self.force {
            return Err(Error::Config(format!(
                "refusing to overwrite {}; pass --force",
                path.display()
            )));
        }
        Ok(())
    }

    /// Writes an artifact. Rewriting identical bytes is not an overwrite.
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if std::fs::read(&path).is_ok_and(|b| b == contents.as_bytes()) {
            return Ok(path);
        }
        self.guard(&path)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn need(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::Config(format!(
                "missing {}; run `lecomh {producer}` first",
                path.display()
            )));
        }
        Ok(path)
    }

    fn load_dataset(&self, name: &str) -> Result<Dataset> {
        load_csv(&self.need(name, "gen-data")?)
    }

    fn load_classifier(&self) -> Result<Classifier> {
        Classifier::load(&self.need("classifier.weights", "pretrain")?)
    }

    fn load_consensus(&self, train: &Dataset) -> Result<ConsensusDataset> {
        let path = self.need("consensus.csv", "consensus")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        ConsensusDataset::from_csv(train.clone(), &text, self.cfg.consensus.alpha_threshold)
    }

    fn selection_mode_name(&self) -> &'static str {
        self.cfg.lecomh.selection_mode().name()
    }

    pub fn write_manifest(&self, command: &str) -> Result<RunManifest> {
        let m = RunManifest {
            command: command.into(),
            config_hash: self.cfg.hash8(),
            version: env!("CARGO_PKG_VERSION").into(),
            selection_mode: self.selection_mode_name().into(),
            started: self.started.clone(),
            finished: timestamp(),
            files: manifest::inventory(&self.dir)?,
        };
        m.write(&self.dir)?;
        Ok(m)
    }
}

pub fn cmd_gen_data(run: &Run) -> Result<()> {
    let cfg = &run.cfg;
    let (train, test) = match cfg.data.source {
        DataSource::Blobs => {
            let c = cfg.data.blobs.n_classes;
            let specs = cfg
                .data
                .annotators
                .iter()
                .enumerate()
                .map(|(j, a)| a.spec(c, cfg.seed, j))
                .collect::<Result<Vec<_>>>()?;
            let (train, test) = gen_blobs(&cfg.data.blobs, cfg.seed)?;
            (
                annotate(&train, &specs, cfg.seed)?,
                annotate(&test, &specs, cfg.seed.wrapping_add(1))?,
            )
        }
        DataSource::Csv => {
            let load = |p: &Option<PathBuf>| load_csv(p.as_ref().expect("validated"));
            let (train, test) = (load(&cfg.data.train_csv)?, load(&cfg.data.test_csv)?);
            if train.n_classes() != test.n_classes() || train.feature_dim() != test.feature_dim() {
                return Err(Error::Config(
                    "data.test_csv does not match data.train_csv in classes or dimension".into(),
                ));
            }
            (train, test)
        }
    };
    run.write("train.csv", &to_csv_string(&train))?;
    run.write("test.csv", &to_csv_string(&test))?;
    println!(
        "gen-data: {} train / {} test examples, {} annotators",
        train.len(),
        test.len(),
        train.n_annotators()
    );
    Ok(())
}

pub fn cmd_pretrain(run: &Run) -> Result<()> {
    let train = run.load_dataset("train.csv")?;
    let (clf, report) = pretrain_with_report(&train, &run.cfg.pretrain, run.cfg.seed)?;
    let weights = run.path("classifier.weights");
    run.guard(&weights)?;
    run.guard(&run.path("classifier.weights.meta"))?;
    clf.save(&weights, &run.cfg.hash8())?;
    let mut log = String::from("epoch,train_loss,held_out_accuracy\n");
    for (e, (l, a)) in report.train_loss.iter().zip(&report.held_out_accuracy).enumerate() {
        let _ = writeln!(log, "{e},{l},{a}");
    }
    run.write("pretrain_log.csv", &log)?;
    println!(
        "pretrain: best epoch {} held-out accuracy {:.4}",
        report.best_epoch, report.held_out_accuracy[report.best_epoch]
    );
    Ok(())
}

pub fn cmd_consensus(run: &Run) -> Result<()> {
    let train = run.load_dataset("train.csv")?;
    let clf = run.load_classifier()?;
    let cds = build_consensus_dataset(&train, &clf, &run.cfg.consensus)?;
    run.write("consensus.csv", &cds.to_csv())?;
    let mut summary = String::from("retained,retention,consensus_accuracy,majority_vote_accuracy\n");
    if train.has_ground_truth() {
        let _ = writeln!(
            summary,
            "{},{},{},{}",
            cds.len(),
            cds.retention(),
            consensus_accuracy(&cds)?,
            majority_vote_accuracy(&train)?
        );
    } else {
        let _ = writeln!(summary, "{},{},,", cds.len(), cds.retention());
    }
    run.write("consensus_summary.csv", &summary)?;
    println!("consensus: kept {} of {} examples", cds.len(), train.len());
    Ok(())
}

fn eval_point(lambda: f64, s: &EvalSummary) -> CoveragePoint {
    CoveragePoint {
        lambda,
        coverage: s.coverage,
        mean_cost: s.mean_cost,
        accuracy: s.accuracy,
        accuracy_std: 0.0,
        trials: 1,
    }
}

fn write_baselines(run: &Run, test: &Dataset, clf: &Classifier) -> Result<()> {
    let mut rows = baselines_simple(test, clf, run.cfg.seed)?;
    rows.extend(baseline_confidence_deferral(clf, test, &run.cfg.eval.coverages)?);
    run.write("baselines.csv", &baselines_to_csv(&rows))?;
    Ok(())
}

pub fn cmd_train(run: &Run) -> Result<()> {
    let train = run.load_dataset("train.csv")?;
    let clf = run.load_classifier()?;
    let cds = run.load_consensus(&train)?;
    for name in ["selection.weights", "collab.weights"] {
        run.guard(&run.path(name))?;
    }
    let (model, log) = train_lecomh(&cds, &clf, &run.cfg.lecomh, run.cfg.seed)?;
    run.write("train_log.csv", &log.to_csv())?;
    model.save_nets(&run.dir)?;
    let last = log.epochs.last().expect("at least one epoch");
    println!(
        "train: lambda {} final loss {:.5} training coverage {:.4}",
        run.cfg.lecomh.lambda, last.loss, last.coverage
    );
    Ok(())
}

pub fn cmd_eval(run: &Run) -> Result<()> {
    let test = run.load_dataset("test.csv")?;
    let clf = run.load_classifier()?;
    run.need("selection.weights", "train")?;
    let model = LecomhModel::load_nets(&run.dir, clf.clone(), run.cfg.lecomh.temperature)?;
    let mode = run.cfg.lecomh.selection_mode();
    let (records, summary) = evaluate_system(&model, &test, run.cfg.seed, mode)?;
    run.write("predictions.csv", &records_to_csv(&records))?;
    run.write("eval.csv", &curve_to_csv(&[eval_point(run.cfg.lecomh.lambda, &summary)]))?;
    write_baselines(run, &test, &clf)?;
    println!(
        "eval ({} selection): accuracy {:.4} coverage {:.4} mean cost {:.4}",
        mode.name(),
        summary.accuracy,
        summary.coverage,
        summary.mean_cost
    );
    Ok(())
}

pub fn cmd_sweep(run: &Run) -> Result<()> {
    let train = run.load_dataset("train.csv")?;
    let test = run.load_dataset("test.csv")?;
    let clf = run.load_classifier()?;
    let cds = run.load_consensus(&train)?;
    for name in ["curve.csv", "baselines.csv"] {
        run.guard(&run.path(name))?;
    }
    let data = SweepData {
        consensus: &cds,
        classifier: &clf,
        test: &test,
    };
    let legs = sweep_legs(data, &run.cfg.lecomh, &run.cfg.eval.lambdas, &run.cfg.trial_seeds())?;
    for leg in &legs {
        let sub = format!("legs/lambda-{}-seed-{}", leg.lambda, leg.seed);
        run.write(&format!("{sub}/train_log.csv"), &leg.log.to_csv())?;
        run.write(&format!("{sub}/predictions.csv"), &records_to_csv(&leg.records))?;
        for name in ["selection.weights", "collab.weights"] {
            run.guard(&run.path(&format!("{sub}/{name}")))?;
        }
        leg.model.save_nets(&run.path(&sub))?;
    }
    let points = aggregate_legs(&legs);
    run.write("curve.csv", &curve_to_csv(&points))?;
    write_baselines(run, &test, &clf)?;
    println!("sweep ({} selection):", run.selection_mode_name());
    for p in &points {
        println!(
            "  lambda {:<6} coverage {:.4} mean cost {:.4} accuracy {:.4} ± {:.4}",
            p.lambda, p.coverage, p.mean_cost, p.accuracy, p.accuracy_std
        );
    }
    Ok(())
}

pub fn cmd_pipeline(run: &Run, from: Option<Stage>) -> Result<()> {
    let from = from.unwrap_or(Stage::GenData);
    let stages: [(Stage, fn(&Run) -> Result<()>); 4] = [
        (Stage::GenData, cmd_gen_data),
        (Stage::Pretrain, cmd_pretrain),
        (Stage::Consensus, cmd_consensus),
        (Stage::Sweep, cmd_sweep),
    ];
    for (stage, f) in stages {
        if stage >= from {
            f(run).map_err(|e| in_stage(stage.name(), e))?;
        }
    }
    Ok(())
}

/// One row of the comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub method: String,
    pub selection: String,
    pub coverage: f64,
    pub accuracy_at_coverage: f64,
    pub best_accuracy: f64,
}

/// Index of the point whose coverage is closest to `target`; near-ties go to
/// the lower coverage.
pub fn nearest_coverage(coverages: &[f64], target: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in coverages.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (d, db) = ((c - target).abs(), (coverages[b] - target).abs());
                if d < db - REPORT_TIE_TOL || ((d - db).abs() <= REPORT_TIE_TOL && c < coverages[b]) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

fn report_row(run: &str, method: &str, selection: &str, pts: &[(f64, f64)]) -> Option<ReportRow> {
    let covs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let i = nearest_coverage(&covs, REPORT_COVERAGE)?;
    Some(ReportRow {
        run: run.into(),
        method: method.into(),
        selection: selection.into(),
        coverage: pts[i].0,
        accuracy_at_coverage: pts[i].1,
        best_accuracy: pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Rows for every readable run; unreadable runs are returned as warnings.
pub fn build_report(runs: &[PathBuf]) -> (Vec<ReportRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for dir in runs {
        let name = dir.display().to_string();
        let read = |f: &str| std::fs::read_to_string(dir.join(f));
        let curve = match read("curve.csv") {
            Ok(t) => match parse_curve(&t, &dir.join("curve.csv").display().to_string()) {
                Ok(c) if !c.is_empty() => c,
                Ok(_) => {
                    warnings.push(format!("{name}: curve.csv has no points, skipped"));
                    continue;
                }
                Err(e) => {
                    warnings.push(format!("{name}: {e}, skipped"));
                    continue;
                }
            },
            Err(_) => {
                warnings.push(format!("{name}: no curve.csv, skipped"));
                continue;
            }
        };
        let selection = RunConfig::load(&dir.join("config.txt"))
            .map(|c| c.lecomh.selection_mode().name().to_string())
            .unwrap_or_else(|_| "unknown".into());
        let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.coverage, p.accuracy)).collect();
        rows.extend(report_row(&name, "lecomh", &selection, &pts));

        match read("baselines.csv").map_err(|e| e.to_string()).and_then(|t| {
            parse_baselines(&t, "baselines.csv").map_err(|e| e.to_string())
        }) {
            Ok(baselines) => {
                let mut methods: Vec<&str> = baselines.iter().map(|b| b.name.as_str()).collect();
                methods.dedup();
                for m in methods {
                    let pts: Vec<(f64, f64)> = baselines
                        .iter()
                        .filter(|b| b.name == m)
                        .map(|b| (b.coverage, b.accuracy))
                        .collect();
                    rows.extend(report_row(&name, m, "-", &pts));
                }
            }
            Err(e) => warnings.push(format!("{name}: baselines unavailable ({e})")),
        }
    }
    (rows, warnings)
}

pub fn report_to_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("run,method,selection,coverage,accuracy_at_coverage,best_accuracy\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.run, r.method, r.selection, r.coverage, r.accuracy_at_coverage, r.best_accuracy
        );
    }
    s.push_str(
        "# reference, not comparable to synthetic runs: published LECOMH accuracy on CIFAR-10H \
         at 50% coverage is 98.77\n",
    );
    s
}

pub fn cmd_report(runs: &[PathBuf], out: Option<&Path>, force: bool) -> Result<()> {
    let (rows, warnings) = build_report(runs);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let text = report_to_csv(&rows);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("report.csv");
            if path.exists() && !force {
                return Err(Error::Config(format!(
                    "refusing to overwrite {}; pass --force",
                    path.display()
                )));
            }
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            println!("report: {} rows written to {}", rows.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn schema_text() -> String {
    let defaults = RunConfig::default().entries();
    let mut s = String::new();
    for ((key, desc), (_, v)) in config::KEYS.iter().zip(defaults) {
        let _ = writeln!(s, "# {desc}\n{key} = {v}");
    }
    s
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Report { runs } => return cmd_report(runs, cli.out.as_deref(), cli.force),
        Command::Schema => {
            print!("{}", schema_text());
            return Ok(());
        }
        Command::Pipeline => {}
        _ if cli.stage.is_some() => {
            return Err(Error::Config("--stage applies only to the pipeline command".into()))
        }
        _ => {}
    }
    let run = Run::open(cli)?;
    let (name, result) = match cli.command {
        Command::GenData => ("gen-data", cmd_gen_data(&run)),
        Command::Pretrain => ("pretrain", cmd_pretrain(&run)),
        Command::Consensus => ("consensus", cmd_consensus(&run)),
        Command::Train => ("train", cmd_train(&run)),
        Command::Eval => ("eval", cmd_eval(&run)),
        Command::Sweep => ("sweep", cmd_sweep(&run)),
        Command::Pipeline => ("pipeline", cmd_pipeline(&run, cli.stage)),
        Command::Report { .. } | Command::Schema => unreachable!(),
    };
    result?;
    run.write_manifest(name)?;
    println!("run directory: {}", run.dir.display());
    Ok(())
}

