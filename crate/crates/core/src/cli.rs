//! Batch commands: `fit`, `predict`, `compare`, `synth`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{run_comparison, AbmConfig, BaselineSpec, ComparisonTable, Method};
use crate::dataset::{encode, fit_grid, load_columns, load_csv};
use crate::error::{Error, Result};
use crate::model::{auc, extract, scorecard, BinningModel, DEFAULT_MERGE_TOL};
use crate::path::{trace, PathConfig, PathResult};
use crate::synth::{generate, SynthSpec};

pub const MODEL_FILE: &str = "model.json";
pub const SCORECARD_FILE: &str = "scorecard.csv";
pub const PATH_FILE: &str = "path.csv";
pub const GRID_FILE: &str = "grid.json";
pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Parser)]
#[command(name = "autobin", version, about = "Supervised binning via group and fused lasso")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a binning model and write model, scorecard and path report.
    Fit(RunArgs),
    /// Score a CSV with a fitted model.
    Predict(PredictArgs),
    /// Cross-validate the model against baseline binners.
    Compare(CompareArgs),
    /// Write a synthetic dataset with known cut points.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub nbins: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "lambda2-count")]
    pub lambda2_count: Option<usize>,
    #[arg(long = "lambda2-ratio")]
    pub lambda2_ratio: Option<f64>,
    #[arg(long = "lambda1-multipliers", value_delimiter = ',')]
    pub lambda1_multipliers: Option<Vec<f64>>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "refit-merged")]
    pub refit_merged: bool,
    /// JSON file with any of the settings above; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Scores CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated: raw-logistic, equal-width, equal-frequency.
    #[arg(long, value_delimiter = ',', default_value = "raw-logistic,equal-width,equal-frequency")]
    pub baselines: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    /// JSON generator spec; replaces the built-in cut-point scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Every setting of a fit or comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub target: Option<String>,
    pub nbins: usize,
    pub folds: usize,
    pub seed: u64,
    pub lambda2_count: usize,
    pub lambda2_ratio: f64,
    pub lambda1_multipliers: Vec<f64>,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub refit_merged: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let path = PathConfig::default();
        RunConfig {
            input: None,
            target: None,
            nbins: 20,
            folds: path.folds,
            seed: path.seed,
            lambda2_count: path.lambda2_count,
            lambda2_ratio: path.lambda2_ratio,
            lambda1_multipliers: path.lambda1_multipliers,
            tol: DEFAULT_MERGE_TOL,
            out: None,
            refit_merged: false,
        }
    }
}

impl RunConfig {
    /// Config file (if any) overlaid with explicit flags.
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &args.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &args.target {
            cfg.target = Some(v.clone());
        }
        if let Some(v) = args.nbins {
            cfg.nbins = v;
        }
        if let Some(v) = args.folds {
            cfg.folds = v;
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.lambda2_count {
            cfg.lambda2_count = v;
        }
        if let Some(v) = args.lambda2_ratio {
            cfg.lambda2_ratio = v;
        }
        if let Some(v) = &args.lambda1_multipliers {
            cfg.lambda1_multipliers = v.clone();
        }
        if let Some(v) = args.tol {
            cfg.tol = v;
        }
        if let Some(v) = &args.out {
            cfg.out = Some(v.clone());
        }
        cfg.refit_merged |= args.refit_merged;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.is_none() {
            return Err(Error::InvalidConfig("--input is required".into()));
        }
        if self.target.is_none() {
            return Err(Error::InvalidConfig("--target is required".into()));
        }
        if self.out.is_none() {
            return Err(Error::InvalidConfig("--out is required".into()));
        }
        if self.nbins < 2 {
            return Err(Error::InvalidConfig(format!("nbins must be >= 2, got {}", self.nbins)));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tol must be >= 0, got {}", self.tol)));
        }
        self.path_config().validate()
    }

    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            lambda2_count: self.lambda2_count,
            lambda2_ratio: self.lambda2_ratio,
            lambda1_multipliers: self.lambda1_multipliers.clone(),
            folds: self.folds,
            seed: self.seed,
            merge_tol: self.tol,
            ..PathConfig::default()
        }
    }

    fn input(&self) -> &Path {
        self.input.as_deref().expect("validated")
    }

    fn target(&self) -> &str {
        self.target.as_deref().expect("validated")
    }

    fn out(&self) -> &Path {
        self.out.as_deref().expect("validated")
    }
}

/// Files written so far; removed again unless the command succeeds.
struct Outputs {
    written: Vec<PathBuf>,
    keep: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            written: Vec::new(),
            keep: false,
        }
    }

    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model: BinningModel,
    pub path: PathResult,
    pub train_auc: f64,
}

/// load → grid → encode → path → extract → scorecard, then write artifacts.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitSummary> {
    cfg.validate()?;
    let data = load_csv(cfg.input(), cfg.target(), None)?;
    let grid = fit_grid(&data, cfg.nbins)?;
    let design = encode(&data, &grid)?;
    let path = trace(&design, data.target(), &cfg.path_config())?;
    let mut model = extract(&path.final_fit, &grid, &design.column_counts(), cfg.tol)?;
    if cfg.refit_merged {
        model = model.refit_merged(&data, crate::baselines::BASELINE_RIDGE)?;
    }
    let card = scorecard(&model, &data)?;
    let train_auc = auc(&model.score_dataset(&data)?, data.target())?;

    let out = cfg.out();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Outputs::new();
    write_text(&files.track(out.join(MODEL_FILE)), &model.to_json_string()?)?;
    card.write_csv(&files.track(out.join(SCORECARD_FILE)))?;
    path.write_csv(&files.track(out.join(PATH_FILE)))?;
    let grid_json = serde_json::to_string_pretty(&grid.to_json())?;
    write_text(&files.track(out.join(GRID_FILE)), &grid_json)?;
    files.keep = true;

    Ok(FitSummary {
        model,
        path,
        train_auc,
    })
}

/// Writes one `score` per input row.
pub fn cmd_predict(model_path: &Path, input: &Path, out: &Path) -> Result<Vec<f64>> {
    let model = BinningModel::read(model_path)?;
    let names: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let columns = if names.is_empty() {
        // constant model: only the row count is needed
        let n = count_rows(input)?;
        return write_scores(out, &vec![crate::objective::sigmoid(model.intercept); n]);
    } else {
        load_columns(input, &names)?
    };
    let scores = model.score_kept_columns(&columns)?;
    write_scores(out, &scores)
}

fn count_rows(input: &Path) -> Result<usize> {
    let file = fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut n = 0;
    for rec in rdr.records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

fn write_scores(out: &Path, scores: &[f64]) -> Result<Vec<f64>> {
    let mut files = Outputs::new();
    let path = files.track(out.to_path_buf());
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["score"])?;
    for s in scores {
        w.write_record([s.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.keep = true;
    Ok(scores.to_vec())
}

pub fn cmd_compare(cfg: &RunConfig, baselines: &[String]) -> Result<ComparisonTable> {
    cfg.validate()?;
    let specs = baselines
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            Ok(BaselineSpec {
                method: s.parse::<Method>()?,
                nbins: cfg.nbins,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = load_csv(cfg.input(), cfg.target(), None)?;
    let abm = AbmConfig {
        nbins: cfg.nbins,
        path: cfg.path_config(),
    };
    let table = run_comparison(&data, &specs, &abm, cfg.folds, cfg.seed)?;
    let out = cfg.out();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Outputs::new();
    table.write_csv(&files.track(out.join(COMPARISON_FILE)))?;
    files.keep = true;
    Ok(table)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => SynthSpec {
            n: args.rows,
            ..SynthSpec::cutpoint_scenario(args.seed)
        },
    };
    let (data, _) = generate(&spec)?;
    let mut files = Outputs::new();
    data.write_csv(&files.track(args.out.clone()), "y")?;
    files.keep = true;
    Ok(())
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = RunConfig::from_args(&args)?;
            let s = cmd_fit(&cfg)?;
            let pt = s.path.selected_point();
            println!("selected lambda1={} lambda2={}", pt.lambda1, pt.lambda2);
            let kept: Vec<&str> = s.model.variables.iter().map(|v| v.name.as_str()).collect();
            println!("kept {} variable(s): {}", kept.len(), kept.join(", "));
            println!("bins: {}", s.model.total_bins());
            println!(
                "cv auc {:.4} (sd {:.4}), training auc {:.4}",
                pt.mean_auc, pt.sd_auc, s.train_auc
            );
        }
        Command::Predict(args) => {
            let scores = cmd_predict(&args.model, &args.input, &args.out)?;
            println!("wrote {} scores to {}", scores.len(), args.out.display());
        }
        Command::Compare(args) => {
            let cfg = RunConfig::from_args(&args.run)?;
            let table = cmd_compare(&cfg, &args.baselines)?;
            for r in &table.rows {
                println!(
                    "{:<16} auc {:.4} (sd {:.4})  vars {:>3}  bins {:>4}",
                    r.method, r.mean_auc, r.sd_auc, r.kept_vars, r.total_bins
                );
            }
        }
        Command::Synth(args) => {
            cmd_synth(&args)?;
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}

/// Process exit code for an error: 2 for broken internal invariants, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invariant(_) => 2,
        _ => 1,
    }
}
