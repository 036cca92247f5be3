//! `rarefit` command-line front end.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rarefit::alignment::{align, error_to_similarity, AlignmentConfig, PreparedTenprint};
use rarefit::dataio::{self, gen_synthetic, load_dataset, save_dataset, type_frequencies, Dataset, Scope};
use rarefit::evaluation::{evaluate_full, write_report, EvaluationOptions, MatcherChoice, Report};
use rarefit::fusion::FusionParams;
use rarefit::matcher::{load_external_scores_for, MatcherConfig};
use rarefit::minutia::{MinutiaSet, SetKind};
use rarefit::Error;
use serde_json::json;

use config::{parse_matcher, AlignmentArgs, FileConfig, FusionArgs, MatcherArg};

#[derive(Parser, Debug)]
#[command(
    name = "rarefit",
    version,
    about = "Rare-minutia anchored affine fitting for latent fingerprint identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// TOML file with [alignment], [fusion], [matcher], [synth] and
    /// [evaluation] sections; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align one latent against one tenprint and report the fitting error.
    Fit(FitArgs),
    /// Run the identification experiments and write a report directory.
    Evaluate(EvaluateArgs),
    /// Sweep the threshold e_t on the rare-feature subset.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Minutia type frequencies of a dataset.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("files").args(["latent", "tenprint"]).multiple(true).conflicts_with("from_dataset")))]
#[command(group(ArgGroup::new("from_dataset").args(["dataset", "subject", "gallery"]).multiple(true)))]
struct FitArgs {
    /// Latent minutia set (JSON).
    #[arg(long, requires = "tenprint")]
    latent: Option<PathBuf>,
    /// Tenprint minutia set (JSON).
    #[arg(long, requires = "latent")]
    tenprint: Option<PathBuf>,
    /// Dataset to take the pair from, with --subject.
    #[arg(long, requires = "subject")]
    dataset: Option<PathBuf>,
    /// Subject whose latent is used.
    #[arg(long, requires = "dataset")]
    subject: Option<String>,
    /// Subject whose tenprint is used (default: the same subject).
    #[arg(long, requires = "subject")]
    gallery: Option<String>,
    #[command(flatten)]
    alignment: AlignmentArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Report directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// `internal` or `external:<csv path>`.
    #[arg(long, default_value = "internal", value_parser = parse_matcher)]
    matcher: MatcherArg,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    alignment: AlignmentArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[command(flatten)]
    fusion: FusionArgs,
    /// Tune e_t on half of the rare-feature latents and report on the rest.
    #[arg(long)]
    holdout: bool,
    /// Histogram bins for the error density.
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_name = "E_T")]
    et_min: Option<f64>,
    #[arg(long, value_name = "E_T")]
    et_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    subjects: Option<usize>,
    #[arg(long)]
    tenprint_mean: Option<f64>,
    #[arg(long)]
    latent_mean: Option<f64>,
    /// Positional jitter sigma in pixels.
    #[arg(long, value_name = "PX")]
    jitter: Option<f64>,
    /// Angular jitter sigma in degrees.
    #[arg(long, value_name = "DEG")]
    angle_jitter: Option<f64>,
    /// Half-range of the latent rotation in degrees.
    #[arg(long, value_name = "DEG")]
    rotation: Option<f64>,
    /// Probability that a rare latent minutia is lost or labelled typical.
    #[arg(long, value_name = "P")]
    rare_dropout: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScopeArg {
    Latents,
    Tenprints,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "latents")]
    scope: ScopeArg,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Message plus process exit status.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Io { .. } => 2,
            Error::Validation(_)
            | Error::InvalidInput(_)
            | Error::EmptyClass(_)
            | Error::Generation(_)
            | Error::InsufficientCorrespondence { .. }
            | Error::DegenerateGeometry(_) => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(out)) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
        Err(_) => ExitCode::from(4),
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError {
                code: 4,
                message: e.to_string(),
            })?;
    }
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(a) => fit(a, &file, cli.json),
        Command::Evaluate(a) => evaluate(a, file, cli.json),
        Command::Sweep(a) => sweep(a, file, cli.json),
        Command::Synth(a) => synth(a, file, cli.json),
        Command::Stats(a) => stats(a, cli.json),
    }
}

fn alignment_config(args: &AlignmentArgs, file: &FileConfig) -> Result<AlignmentConfig, CliError> {
    let cfg = args.apply(file.alignment.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn load_pair(a: &FitArgs) -> Result<(MinutiaSet, MinutiaSet), CliError> {
    if let (Some(l), Some(t)) = (&a.latent, &a.tenprint) {
        let latent = dataio::load_minutia_set(l, SetKind::Latent)?;
        let tenprint = dataio::load_minutia_set(t, SetKind::Tenprint)?;
        return Ok((latent, tenprint));
    }
    let (Some(path), Some(subject)) = (&a.dataset, &a.subject) else {
        return Err(CliError::usage(
            "give --latent and --tenprint, or --dataset and --subject",
        ));
    };
    let ds = load_dataset(path)?;
    let find = |id: &str| {
        ds.subjects()
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| CliError::validation(format!("no subject '{id}' in {}", path.display())))
    };
    let latent = find(subject)?.latent.clone();
    let tenprint = find(a.gallery.as_deref().unwrap_or(subject))?.tenprint.clone();
    Ok((latent, tenprint))
}

fn fit(a: FitArgs, file: &FileConfig, as_json: bool) -> Result<String, CliError> {
    let cfg = alignment_config(&a.alignment, file)?;
    let (latent, tenprint) = load_pair(&a)?;
    let outcome = align(&latent, &PreparedTenprint::new(&tenprint), &cfg);
    let e = outcome.fitting_error();
    let e_hat = error_to_similarity(e, &cfg)?;
    let reason = outcome.no_fit_reason().map(|r| r.as_str());
    let most_pairs = outcome.anchors.iter().map(|x| x.correspondence.pairs.len()).max();
    let best = outcome.best();
    let correspondences = best
        .map(|b| b.correspondence.pairs.len())
        .or(most_pairs)
        .unwrap_or(0);
    if as_json {
        let anchor = best.map(|b| {
            json!({
                "latent_index": b.anchor.latent_index,
                "tenprint_index": b.anchor.tenprint_index,
                "type": b.anchor.latent_anchor.mtype.code(),
                "type_name": b.anchor.latent_anchor.mtype.name(),
                "rotation_deg": b.rotation_deg,
            })
        });
        let v = json!({
            "latent": latent.id,
            "tenprint": tenprint.id,
            "anchors_tried": outcome.anchors.len(),
            "fitting_error": e,
            "e_hat": e_hat,
            "reason": reason,
            "anchor": anchor,
            "correspondences": correspondences,
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&v).unwrap()));
    }
    let mut s = String::new();
    let _ = writeln!(s, "latent           {} ({} minutiae)", latent.id, latent.len());
    let _ = writeln!(
        s,
        "tenprint         {} ({} minutiae)",
        tenprint.id,
        tenprint.len()
    );
    let _ = writeln!(s, "anchors tried    {}", outcome.anchors.len());
    match (e, reason) {
        (Some(e), _) => {
            let _ = writeln!(s, "E                {e}");
        }
        (None, r) => {
            let _ = writeln!(s, "E                none ({})", r.unwrap_or("no fit"));
        }
    }
    let _ = writeln!(s, "E-hat            {e_hat}");
    if let Some(b) = best {
        let _ = writeln!(
            s,
            "anchor           latent #{} / tenprint #{} ({}), rotation {} deg",
            b.anchor.latent_index,
            b.anchor.tenprint_index,
            b.anchor.latent_anchor.mtype.name(),
            b.rotation_deg
        );
    }
    let _ = writeln!(s, "correspondences  {correspondences}");
    Ok(s)
}

fn matcher_choice(
    choice: &MatcherArg,
    dataset: &Dataset,
    cfg: MatcherConfig,
) -> Result<MatcherChoice, CliError> {
    Ok(match choice {
        MatcherArg::Internal => MatcherChoice::Internal(cfg),
        MatcherArg::External(p) => MatcherChoice::External(load_external_scores_for(p, dataset)?),
    })
}

fn run_experiments(
    common: &ExperimentArgs,
    file: &FileConfig,
    params: FusionParams,
    opts: &EvaluationOptions,
) -> Result<Report, CliError> {
    let cfg = alignment_config(&common.alignment, file)?;
    params.validate()?;
    file.matcher.validate()?;
    let ds = load_dataset(&common.dataset)?;
    let matcher = matcher_choice(&common.matcher, &ds, file.matcher.clone())?;
    Ok(evaluate_full(&ds, &matcher, &cfg, &params, opts)?)
}

fn written_names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect()
}

fn evaluate(a: EvaluateArgs, file: FileConfig, as_json: bool) -> Result<String, CliError> {
    let params = a.fusion.apply(file.fusion);
    let mut opts = file.evaluation.clone();
    opts.holdout |= a.holdout;
    if let Some(b) = a.bins {
        opts.density_bins = b;
    }
    let report = run_experiments(&a.common, &file, params, &opts)?;
    let files = write_report(&report, &a.common.out, a.common.svg)?;
    let rare = report.rare.as_ref();
    if as_json {
        let v = json!({
            "out": a.common.out,
            "files": written_names(&files),
            "n_subjects": report.n_subjects,
            "n_rare": report.n_rare,
            "alignment": report.alignment,
            "fusion": report.fusion,
            "rank1": report.rank1,
            "auc": rare.and_then(|r| r.auc),
            "genuine_mode_bin": rare.and_then(|r| r.density.as_ref()).map(|d| d.genuine_mode()),
            "impostor_mode_bin": rare.and_then(|r| r.density.as_ref()).map(|d| d.impostor_mode()),
            "best_e_t": rare.map(|r| r.sweep.best_e_t),
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&v).unwrap()));
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} subjects, {} with rare minutiae in the latent",
        report.n_subjects, report.n_rare
    );
    let _ = writeln!(
        s,
        "alpha = {}, beta = {}, e_t = {}",
        report.fusion.alpha, report.fusion.beta, report.fusion.e_t
    );
    let _ = writeln!(
        s,
        "{:<22} {:>8} {:>9} {:>9} {:>9} {:>7}",
        "Rank-1", "latents", "S_m", "S'", "S''", "e_t"
    );
    for r in &report.rank1 {
        let _ = writeln!(
            s,
            "{:<22} {:>8} {:>8.2}% {:>8.2}% {:>8.2}% {:>7}",
            r.scope,
            r.n_latents,
            100.0 * r.baseline,
            100.0 * r.fused,
            100.0 * r.modified,
            r.e_t
        );
    }
    if let Some(r) = rare {
        if let Some(auc) = r.auc {
            let _ = writeln!(s, "E-hat genuine vs impostor AUC = {auc:.4}");
        }
        if let Some(d) = &r.density {
            let _ = writeln!(
                s,
                "E-hat mode bins: genuine {}, impostor {} (of {})",
                d.genuine_mode(),
                d.impostor_mode(),
                d.bins
            );
        }
    }
    let _ = writeln!(s, "wrote {} files to {}", files.len(), a.common.out.display());
    Ok(s)
}

fn sweep(a: SweepArgs, file: FileConfig, as_json: bool) -> Result<String, CliError> {
    let mut params = file.fusion;
    if let Some(v) = a.alpha {
        params.alpha = v;
    }
    if let Some(v) = a.beta {
        params.beta = v;
    }
    let mut opts = file.evaluation.clone();
    if let Some(v) = a.et_min {
        opts.sweep_min = v;
    }
    if let Some(v) = a.et_max {
        opts.sweep_max = v;
    }
    if let Some(v) = a.step {
        opts.sweep_step = v;
    }
    if !(opts.sweep_step > 0.0 && opts.sweep_min <= opts.sweep_max) {
        return Err(CliError::validation(format!(
            "sweep range [{}, {}] with step {} is empty",
            opts.sweep_min, opts.sweep_max, opts.sweep_step
        )));
    }
    let report = run_experiments(&a.common, &file, params, &opts)?;
    let Some(rare) = &report.rare else {
        return Err(CliError::validation(
            "no latent carries a rare minutia; nothing to sweep",
        ));
    };
    let dir = &a.common.out;
    std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join("sweep.csv"), &rare.sweep.to_csv())?;
    if a.common.svg {
        write_file(&dir.join("sweep.svg"), &rare.sweep.to_svg())?;
    }
    if as_json {
        let v = json!({
            "thresholds": rare.sweep.thresholds,
            "rank1": rare.sweep.rank1,
            "best_e_t": rare.sweep.best_e_t,
            "best_rank1": rare.sweep.best_rank1,
            "alpha": params.alpha,
            "beta": params.beta,
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&v).unwrap()));
    }
    Ok(format!(
        "best_e_t = {} (Rank-1 {:.2}% over {} thresholds)\n",
        rare.sweep.best_e_t,
        100.0 * rare.sweep.best_rank1,
        rare.sweep.thresholds.len()
    ))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs, file: FileConfig, as_json: bool) -> Result<String, CliError> {
    let mut p = file.synth;
    if let Some(v) = a.seed {
        p.seed = v;
    }
    if let Some(v) = a.subjects {
        p.n_subjects = v;
    }
    if let Some(v) = a.tenprint_mean {
        p.tenprint_minutiae_mean = v;
    }
    if let Some(v) = a.latent_mean {
        p.latent_minutiae_mean = v;
    }
    if let Some(v) = a.jitter {
        p.position_jitter_sigma = v;
    }
    if let Some(v) = a.angle_jitter {
        p.angle_jitter_sigma = v;
    }
    if let Some(v) = a.rotation {
        p.rotation_range_deg = v;
    }
    if let Some(v) = a.rare_dropout {
        p.rare_dropout_prob = v;
    }
    let ds = gen_synthetic(&p)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::usage(format!("{}: {e}", parent.display())))?;
    }
    save_dataset(&ds, &a.out)?;
    let n = ds.len() as f64;
    let mean_latent = ds.subjects().iter().map(|s| s.latent.len()).sum::<usize>() as f64 / n;
    let mean_tenprint = ds.subjects().iter().map(|s| s.tenprint.len()).sum::<usize>() as f64 / n;
    let n_rare = ds.subjects().iter().filter(|s| s.has_rare).count();
    if as_json {
        let v = json!({
            "out": a.out,
            "n_subjects": ds.len(),
            "n_rare": n_rare,
            "seed": p.seed,
            "mean_latent_minutiae": mean_latent,
            "mean_tenprint_minutiae": mean_tenprint,
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&v).unwrap()));
    }
    Ok(format!(
        "wrote {} subjects ({} with rare latent minutiae) to {}\nmean minutiae: latent {:.2}, tenprint {:.2}\n",
        ds.len(),
        n_rare,
        a.out.display(),
        mean_latent,
        mean_tenprint
    ))
}

fn stats(a: StatsArgs, as_json: bool) -> Result<String, CliError> {
    let ds = load_dataset(&a.dataset)?;
    let scope = match a.scope {
        ScopeArg::Latents => Scope::Latents,
        ScopeArg::Tenprints => Scope::Tenprints,
    };
    let table = type_frequencies(&ds, scope)?;
    if let Some(out) = &a.out {
        write_file(out, &table.to_csv())?;
    }
    if as_json {
        let rows: Vec<_> = table
            .observed()
            .map(|e| {
                json!({
                    "type": e.mtype.code(),
                    "name": e.mtype.name(),
                    "count": e.count,
                    "probability": e.p,
                    "rounded": format!("{:.4}", e.p),
                })
            })
            .collect();
        let v = json!({ "total": table.total, "types": rows });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&v).unwrap()));
    }
    Ok(format!("{table}\n"))
}
