//! Command-line surface: `gen-data`, `correlate`, `score`, `rank`, `optimize`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{self, load_atms, load_zipcodes, normalize_features, KeywordTable, SynthConfig};
use crate::error::{Error, Result, ResultExt};
use crate::forest::ForestParams;
use crate::global_model::{default_global_weights, GlobalWeights};
use crate::optimizer::{self, Method};
use crate::report::{self, FileSet, InputDigest, Manifest};
use crate::scoring::{self, FusionConfig, ScoreReport, ScoringConfig, ScoringInputs};
use crate::wealth;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "atmloc", version, about = "Score and place ATM networks from zipcode demographics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic zipcodes.csv / atms.csv pair
    GenData(GenDataArgs),
    /// Correlate features against the wealth estimate
    Correlate(CorrelateArgs),
    /// Run the full scoring pipeline and write reports
    Score(ScoreArgs),
    /// Rank networks per county from a scores.csv
    Rank(RankArgs),
    /// Choose counties to open under a budget
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of zipcodes
    #[arg(long, default_value_t = 5000)]
    pub zipcodes: usize,
    /// Number of counties
    #[arg(long, default_value_t = 40)]
    pub counties: usize,
    /// Number of ATMs
    #[arg(long, default_value_t = 11229)]
    pub atms: usize,
    /// Extra f_* noise feature columns
    #[arg(long, default_value_t = 12)]
    pub extra_features: usize,
    /// Number of ATM networks
    #[arg(long, default_value_t = 6)]
    pub networks: usize,
    /// Planted clusters per county
    #[arg(long, default_value_t = 7)]
    pub clusters: usize,
    /// Draw features independently instead of planting cluster structure
    #[arg(long)]
    pub no_planted: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub zipcodes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum |r| for a feature to be selected
    #[arg(long, default_value_t = wealth::DEFAULT_CORRELATION_THRESHOLD)]
    pub threshold: f64,
    /// Also write per-feature (we, feature_value) scatter files
    #[arg(long)]
    pub scatter: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub zipcodes: PathBuf,
    #[arg(long)]
    pub atms: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Global model weight in the fused score; the local model gets 1 - alpha (0.65 at the default)
    #[arg(long, default_value_t = scoring::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Clusters per county
    #[arg(long, default_value_t = scoring::DEFAULT_K)]
    pub k: usize,
    /// Features kept per county by importance
    #[arg(long, default_value_t = scoring::DEFAULT_TOP_FEATURES)]
    pub top_features: usize,
    /// Trees per county forest
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// k-means restarts per county
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Global weights file (`feature = weight` lines); defaults to the built-in 11-feature vector
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Treat --weights as raw values and softmax-normalize them
    #[arg(long, requires = "weights")]
    pub raw_weights: bool,
    /// Name-tag keyword table overriding the built-in one
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// Also write correlation and scatter exports
    #[arg(long)]
    pub correlations: bool,
    /// Correlation selection threshold used with --correlations
    #[arg(long, default_value_t = wealth::DEFAULT_CORRELATION_THRESHOLD)]
    pub corr_threshold: f64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Output file; rankings go to stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Exact,
    Greedy,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// `county, cost` table; every county costs 1.0 when omitted
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long)]
    pub budget: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    pub method: MethodArg,
    /// Score counties by this network's fused score instead of the county mean
    #[arg(long)]
    pub network: Option<String>,
    /// Plan output file
    #[arg(long, default_value = "plan.csv")]
    pub out: PathBuf,
}

impl ScoreArgs {
    pub fn scoring_config(&self) -> ScoringConfig {
        ScoringConfig {
            fusion: FusionConfig {
                alpha: self.alpha,
                top_features: self.top_features,
                k: self.k,
            },
            restarts: self.restarts,
            forest: ForestParams {
                n_trees: self.trees,
                ..ForestParams::default()
            },
            ..ScoringConfig::default()
        }
    }

    fn flags(&self) -> BTreeMap<String, String> {
        let mut f = BTreeMap::new();
        f.insert("alpha".into(), self.alpha.to_string());
        f.insert("local_weight".into(), (1.0 - self.alpha).to_string());
        f.insert("k".into(), self.k.to_string());
        f.insert("top_features".into(), self.top_features.to_string());
        f.insert("trees".into(), self.trees.to_string());
        f.insert("restarts".into(), self.restarts.to_string());
        f.insert("raw_weights".into(), self.raw_weights.to_string());
        f.insert("correlations".into(), self.correlations.to_string());
        f.insert("corr_threshold".into(), self.corr_threshold.to_string());
        f
    }
}

fn digest_input(path: &Path) -> Result<InputDigest> {
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: report::file_digest(path)?,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn finish(
    out: &Path,
    mut files: FileSet,
    subcommand: &str,
    argv: &[String],
    seed: Option<u64>,
    flags: BTreeMap<String, String>,
    inputs: Vec<InputDigest>,
) -> Result<()> {
    let manifest = Manifest {
        tool: "atmloc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        argv: argv.to_vec(),
        seed,
        flags,
        inputs,
        outputs: files.digests(),
    };
    files.add(report::MANIFEST_FILE, manifest.to_bytes()?);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    files.write(out)?;
    Ok(())
}

fn validate_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Validation(format!("correlation threshold {t} outside [0, 1]")));
    }
    Ok(())
}

fn correlation_files(table: &dataset::NormalizedTable, threshold: f64, files: &mut FileSet) -> Result<()> {
    let corr = wealth::correlate_features(table)?.with_threshold(threshold);
    files.add(report::CORRELATION_FILE, report::correlation_csv(&corr)?);
    for e in &corr.entries {
        let points = wealth::scatter(table, &e.feature)?;
        files.add(
            Path::new(report::SCATTER_DIR).join(format!("{}.csv", e.feature)),
            report::scatter_csv(&points)?,
        );
    }
    let selected = corr.selected.join("\n");
    files.add("selected_features.txt", format!("{selected}\n").into_bytes());
    Ok(())
}

/// Runs ingest, normalization, global and local models and fusion.
pub fn run_pipeline(args: &ScoreArgs) -> Result<(ScoreReport, ScoringInputs)> {
    let config = args.scoring_config();
    config.validate().module("cli", "flags")?;
    if args.correlations {
        validate_threshold(args.corr_threshold).module("cli", "flags")?;
    }
    let weights = match &args.weights {
        Some(p) => GlobalWeights::parse(&read_text(p)?, args.raw_weights)
            .and_then(GlobalWeights::normalize)
            .module("global_model", p.display().to_string())?,
        None => default_global_weights(),
    };
    let keywords = match &args.keywords {
        Some(p) => KeywordTable::parse(&read_text(p)?).module("dataset", p.display().to_string())?,
        None => KeywordTable::default(),
    };
    let zipcodes = load_zipcodes(&args.zipcodes).module("dataset", args.zipcodes.display().to_string())?;
    let (atms, rejected) =
        load_atms(&args.atms, &zipcodes, &keywords).module("dataset", args.atms.display().to_string())?;
    log::info!(
        "loaded {} zipcodes, {} ATMs ({} rejected)",
        zipcodes.len(),
        atms.len(),
        rejected
    );
    let table = normalize_features(&zipcodes).module("dataset", "normalize")?;
    let inputs = ScoringInputs::new(table, &atms, &weights).module("global_model", "zip scores")?;
    let report = scoring::score_all(&inputs, &config, args.seed).module("scoring", "pipeline")?;
    Ok((report, inputs))
}

fn cmd_score(args: &ScoreArgs, argv: &[String]) -> Result<()> {
    let (report, inputs) = run_pipeline(args)?;
    let mut files = report::report_files(&report)?;
    if args.correlations {
        correlation_files(&inputs.table, args.corr_threshold, &mut files).module("wealth", "correlations")?;
    }
    let mut digests = vec![digest_input(&args.zipcodes)?, digest_input(&args.atms)?];
    for p in args.weights.iter().chain(&args.keywords) {
        digests.push(digest_input(p)?);
    }
    finish(&args.out, files, "score", argv, Some(args.seed), args.flags(), digests)?;
    log::info!(
        "scored {} (county, network) pairs across {} counties into {}",
        report.rows.len(),
        report.rankings.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_gen_data(args: &GenDataArgs, argv: &[String]) -> Result<()> {
    let config = SynthConfig {
        zipcodes: args.zipcodes,
        counties: args.counties,
        atms: args.atms,
        planted: !args.no_planted,
        clusters_per_county: args.clusters,
        extra_features: args.extra_features,
        networks: args.networks,
    };
    let ds = dataset::generate_synthetic(&config, args.seed).module("dataset", "synthetic generator")?;
    let (z, a) = ds.to_csv()?;
    let mut files = FileSet::default();
    files.add("zipcodes.csv", z);
    files.add("atms.csv", a);
    let mut flags = BTreeMap::new();
    flags.insert("zipcodes".into(), args.zipcodes.to_string());
    flags.insert("counties".into(), args.counties.to_string());
    flags.insert("atms".into(), args.atms.to_string());
    flags.insert("planted".into(), (!args.no_planted).to_string());
    flags.insert("clusters".into(), args.clusters.to_string());
    flags.insert("extra_features".into(), args.extra_features.to_string());
    flags.insert("networks".into(), args.networks.to_string());
    finish(&args.out, files, "gen-data", argv, Some(args.seed), flags, Vec::new())
}

fn cmd_correlate(args: &CorrelateArgs, argv: &[String]) -> Result<()> {
    validate_threshold(args.threshold).module("cli", "flags")?;
    let zipcodes = load_zipcodes(&args.zipcodes).module("dataset", args.zipcodes.display().to_string())?;
    let table = normalize_features(&zipcodes).module("dataset", "normalize")?;
    let mut files = FileSet::default();
    if args.scatter {
        correlation_files(&table, args.threshold, &mut files).module("wealth", "correlations")?;
    } else {
        let corr = wealth::correlate_features(&table)
            .module("wealth", "correlations")?
            .with_threshold(args.threshold);
        files.add(report::CORRELATION_FILE, report::correlation_csv(&corr)?);
        files.add("selected_features.txt", format!("{}\n", corr.selected.join("\n")).into_bytes());
    }
    let mut flags = BTreeMap::new();
    flags.insert("threshold".into(), args.threshold.to_string());
    flags.insert("scatter".into(), args.scatter.to_string());
    finish(&args.out, files, "correlate", argv, None, flags, vec![digest_input(&args.zipcodes)?])
}

fn cmd_rank(args: &RankArgs) -> Result<()> {
    let rows = report::read_scores(&args.scores).module("report", args.scores.display().to_string())?;
    let mut text = String::from("county,rank,network\n");
    for (county, networks) in report::rankings_from_rows(&rows) {
        for (i, n) in networks.iter().enumerate() {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record([county.as_str(), &(i + 1).to_string(), n.as_str()])
                .map_err(|e| Error::Validation(e.to_string()))?;
            let line = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
            text.push_str(&String::from_utf8_lossy(&line));
        }
    }
    match &args.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<()> {
    if !args.budget.is_finite() || args.budget < 0.0 {
        return Err(Error::Validation(format!("budget {} must be finite and >= 0", args.budget)));
    }
    let rows = report::read_scores(&args.scores).module("report", args.scores.display().to_string())?;
    let costs = match &args.costs {
        Some(p) => Some(report::read_costs(p).module("report", p.display().to_string())?),
        None => None,
    };
    let candidates = report::county_candidates(&rows, costs.as_ref(), args.network.as_deref())
        .module("optimizer", "candidates")?;
    let method = match args.method {
        MethodArg::Exact => Method::Exact,
        MethodArg::Greedy => Method::Greedy,
    };
    let plan = optimizer::place(&candidates, args.budget, method).module("optimizer", method.to_string())?;
    fs::write(&args.out, report::plan_csv(&plan, &candidates)?).map_err(|e| Error::io(&args.out, e))?;
    log::info!(
        "{} plan: {} of {} counties, score {}, cost {}",
        plan.method,
        plan.selected.len(),
        candidates.len(),
        plan.total_score,
        plan.total_cost
    );
    Ok(())
}

/// Executes a parsed command. `argv` excludes the program name.
pub fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a, argv),
        Command::Correlate(a) => cmd_correlate(a, argv),
        Command::Score(a) => cmd_score(a, argv),
        Command::Rank(a) => cmd_rank(a),
        Command::Optimize(a) => cmd_optimize(a),
    }
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, &args[1.min(args.len())..]) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
