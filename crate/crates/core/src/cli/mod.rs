//! Command-line entry point.
//!
//! | exit code | meaning                                           |
//! |-----------|---------------------------------------------------|
//! | 0         | success                                           |
//! | 1         | any other failure                                 |
//! | 2         | usage error (unknown command, bad flags)          |
//! | 3         | configuration error                               |
//! | 4         | training aborted on a non-finite loss             |
//! | 5         | data, checkpoint or I/O error                     |

mod ablate;
pub mod config;

use std::ffi::OsString;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::datasets::{
    generate_synthetic_pair, index_dataset, ratio_counts, split_scenes, synthetic_scene,
    write_index, write_scene, DatasetIndex, DegradationChain, SceneStyle, SplitManifest, P_RATIOS,
};
use crate::error::{Error, Result};
use crate::eval::{
    emit_table, evaluate, export_epi_strip, identity_baseline, EvalOptions, TableLayout,
};
use crate::lightfield::{
    extract_y, load_lightfield, view_file_name, Colorspace, LightField, ScaleTag, LYTRO_ANGULAR,
};
use crate::model::{count_params, read_checkpoint, OfpNet};
use crate::train::{self, Phase, TrainData, TrainState};

pub use ablate::{run_ablation, AblationOutcome};
pub use config::{resolve, FlatConfig, Preset, RunConfig};

/// Default output directory when `--out` is not given.
pub const OUT_ENV: &str = "OFPNET_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_ABORT: i32 = 4;
pub const EXIT_DATA: i32 = 5;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Abort { .. } => EXIT_ABORT,
        Error::MissingView { .. }
        | Error::InconsistentViews(_)
        | Error::EmptyDataset(_)
        | Error::Split(_)
        | Error::Data(_)
        | Error::Checkpoint(_)
        | Error::Io(_)
        | Error::Image(_)
        | Error::Json(_) => EXIT_DATA,
        _ => EXIT_OTHER,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "ofpnet",
    version,
    about = "Light field super-resolution: data, training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// TOML config with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lr0=5e-4`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $OFPNET_OUT, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a paired dataset from HR light fields or synthetic scenes.
    Degrade {
        /// Directory of HR scenes, one subdirectory each.
        #[arg(
            long = "in",
            conflicts_with = "synthetic",
            required_unless_present = "synthetic"
        )]
        input: Option<PathBuf>,
        /// Generate this many synthetic scenes instead of reading `--in`.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// LR scale factors to produce; repeatable.
        #[arg(long = "scale", default_values_t = [4u32])]
        scales: Vec<u32>,
        /// Degradation chain, e.g. `bicubic`, `blur:1.0,noise:0.01`.
        #[arg(long, default_value = "bicubic")]
        chain: String,
        /// Seeds scene synthesis, noise and the split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Synthetic scene family: `natural` or `urban`.
        #[arg(long, default_value = "natural")]
        style: String,
        /// Spatial size of synthetic scenes, HxW.
        #[arg(long, default_value = "64x64")]
        size: String,
        /// Scene counts as train,val,test; defaults to the P-style ratios.
        #[arg(long)]
        split: Option<String>,
    },
    /// Train a model from scratch.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset root; overrides `data.root`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue the run saved in this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Adapt a trained checkpoint with the finetune schedule.
    Finetune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Method name used in reports; defaults to `ofpnet`.
        #[arg(long, default_value = "ofpnet")]
        label: String,
        /// Also score the LR input and tabulate both.
        #[arg(long)]
        baseline: bool,
        /// Write RGB results under `<out>/sr/<scene>/`.
        #[arg(long)]
        dump_sr: bool,
    },
    /// Train and score the ablation variants, then tabulate them.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// `all` or a comma-separated list of variant labels.
        #[arg(long, default_value = "all")]
        variants: String,
        /// Train this many variants at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Export EPI strips of a light field, optionally super-resolved first.
    Epi {
        /// Directory of `view_{u}_{v}.png` files.
        #[arg(long)]
        views: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated `u:y` pairs; defaults to the central row of views.
        #[arg(long)]
        rows: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Subdirectory name under `<out>/epi/`; defaults to the views directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Describe a checkpoint.
    Info { checkpoint: PathBuf },
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, argv: &[OsString]) -> Result<()> {
    match command {
        Command::Degrade {
            input,
            synthetic,
            out,
            scales,
            chain,
            seed,
            style,
            size,
            split,
        } => cmd_degrade(DegradeArgs {
            input,
            synthetic,
            out,
            scales,
            chain,
            seed,
            style,
            size,
            split,
            argv,
        }),
        Command::Train { cfg, data, resume } => cmd_train(&cfg, data, resume, argv),
        Command::Finetune {
            cfg,
            data,
            checkpoint,
        } => cmd_finetune(&cfg, data, &checkpoint, argv),
        Command::Eval {
            cfg,
            data,
            checkpoint,
            label,
            baseline,
            dump_sr,
        } => cmd_eval(&cfg, data, &checkpoint, &label, baseline, dump_sr, argv),
        Command::Ablate {
            cfg,
            data,
            variants,
            parallel,
        } => cmd_ablate(&cfg, data, &variants, parallel, argv),
        Command::Epi {
            views,
            checkpoint,
            rows,
            out,
            name,
        } => cmd_epi(
            &views,
            checkpoint.as_deref(),
            rows.as_deref(),
            out,
            name,
            argv,
        ),
        Command::Info { checkpoint } => cmd_info(&checkpoint),
    }
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: Vec<String>,
    version: &'a str,
    config_file: Option<String>,
    overrides: &'a [String],
    seed: Option<u64>,
    resolved: Option<FlatConfig>,
    artifacts: Vec<Artifact>,
}

struct ManifestInput<'a> {
    command: &'a str,
    argv: &'a [OsString],
    config_file: Option<&'a Path>,
    overrides: &'a [String],
    seed: Option<u64>,
    resolved: Option<&'a RunConfig>,
    artifacts: Vec<PathBuf>,
}

/// Writes `manifest.json` (and the resolved config when there is one).
fn write_manifest(out: &Path, input: ManifestInput<'_>) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    if let Some(cfg) = input.resolved {
        std::fs::write(out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;
    }
    let artifacts = input
        .artifacts
        .iter()
        .map(|p| {
            Ok(Artifact {
                path: p.strip_prefix(out).unwrap_or(p).display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        command: input.command,
        argv: input
            .argv
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        version: env!("CARGO_PKG_VERSION"),
        config_file: input.config_file.map(|p| p.display().to_string()),
        overrides: input.overrides,
        seed: input.seed,
        resolved: input.resolved.map(RunConfig::to_flat),
        artifacts,
    };
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

/// Resolves the config for a command, folding `--seed` in as the last override.
fn resolve_args(args: &ConfigArgs, phase: Phase) -> Result<(RunConfig, Vec<String>)> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("train.seed={seed}"));
    }
    let (cfg, _) = resolve(args.config.as_deref(), &overrides, phase)?;
    Ok((cfg, overrides))
}

fn data_root(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.data.root.clone())
        .ok_or_else(|| Error::config("no dataset given; pass --data or set data.root"))
}

fn open_dataset(root: &Path) -> Result<(DatasetIndex, SplitManifest)> {
    let index = index_dataset(root)?;
    for issue in &index.issues {
        log::warn!("skipping scene {}: {}", issue.scene_id, issue.detail);
    }
    Ok((index, SplitManifest::load(root)?))
}

struct DegradeArgs<'a> {
    input: Option<PathBuf>,
    synthetic: Option<usize>,
    out: PathBuf,
    scales: Vec<u32>,
    chain: String,
    seed: u64,
    style: String,
    size: String,
    split: Option<String>,
    argv: &'a [OsString],
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::config(format!("size {s:?} is not HxW"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    Ok((
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    ))
}

fn parse_counts(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::config(format!("split {s:?} is not train,val,test counts")))
        })
        .collect::<Result<_>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::config(format!("split {s:?} needs three counts"))),
    }
}

/// HR scenes under `dir`: each subdirectory holding views directly or in `gt/`.
fn read_hr_scenes(dir: &Path) -> Result<Vec<(String, LightField)>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    let mut scenes = Vec::new();
    for path in entries {
        let id = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let views = if path.join(view_file_name(0, 0)).exists() {
            path.clone()
        } else {
            path.join("gt")
        };
        scenes.push((id, load_lightfield(&views, Colorspace::Rgb)?));
    }
    if scenes.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }
    Ok(scenes)
}

fn cmd_degrade(a: DegradeArgs<'_>) -> Result<()> {
    for &s in &a.scales {
        ScaleTag::for_scale(s).map_err(|_| Error::config(format!("--scale {s} is not 2 or 4")))?;
    }
    let lcm = if a.scales.contains(&4) { 4 } else { 2 };
    let scenes: Vec<(String, LightField)> = match (a.synthetic, &a.input) {
        (Some(n), _) => {
            let style: SceneStyle = serde_json::from_value(serde_json::Value::String(
                a.style.clone(),
            ))
            .map_err(|_| {
                Error::config(format!(
                    "unknown style {:?}; expected urban or natural",
                    a.style
                ))
            })?;
            let size = parse_size(&a.size)?;
            (0..n)
                .map(|i| {
                    let seed = a.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                    (
                        format!("scene_{i:03}"),
                        synthetic_scene(style, seed, LYTRO_ANGULAR, size),
                    )
                })
                .collect()
        }
        (None, Some(dir)) => read_hr_scenes(dir)?,
        (None, None) => return Err(Error::config("pass --in or --synthetic")),
    };
    for (i, (id, hr)) in scenes.iter().enumerate() {
        let hr = hr.crop_to_multiple(lcm)?;
        let mut lrs = Vec::new();
        for &scale in &a.scales {
            let chain =
                DegradationChain::parse(&a.chain, a.seed ^ ((i as u64) << 32) ^ scale as u64)
                    .map_err(|e| Error::config(e.to_string()))?;
            let (lr, _) = generate_synthetic_pair(&hr, scale, &chain)?;
            lrs.push((ScaleTag::for_scale(scale)?, lr));
        }
        let refs: Vec<(ScaleTag, &LightField)> = lrs.iter().map(|(t, lf)| (*t, lf)).collect();
        write_scene(&a.out, id, &hr, &refs)?;
        log::info!("wrote scene {id}");
    }
    let index = index_dataset(&a.out)?;
    write_index(&a.out, &index)?;
    let counts = match &a.split {
        Some(s) => parse_counts(s)?,
        None => ratio_counts(index.scenes.len(), P_RATIOS),
    };
    let manifest = split_scenes(&index.scenes, counts, a.seed)?;
    manifest.save(&a.out)?;
    let artifacts = vec![
        a.out.join(crate::datasets::INDEX_FILE),
        a.out.join(crate::datasets::SPLITS_FILE),
    ];
    write_manifest(
        &a.out,
        ManifestInput {
            command: "degrade",
            argv: a.argv,
            config_file: None,
            overrides: &[],
            seed: Some(a.seed),
            resolved: None,
            artifacts,
        },
    )?;
    println!(
        "{} scenes written to {} (train {}, val {}, test {})",
        index.scenes.len(),
        a.out.display(),
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len()
    );
    Ok(())
}

fn train_artifacts(outcome: &train::TrainOutcome) -> Vec<PathBuf> {
    vec![
        outcome.last.clone(),
        outcome.best.clone(),
        outcome.log.clone(),
    ]
}

fn report_training(outcome: &train::TrainOutcome) {
    println!(
        "{} steps; mean L1 {:.5} (first epoch) -> {:.5} (last epoch); best val PSNR {}",
        outcome.steps,
        outcome.first_epoch_loss,
        outcome.last_epoch_loss,
        outcome
            .best_val_psnr
            .map_or("n/a".into(), |p| format!("{p:.3} dB"))
    );
    println!("last checkpoint: {}", outcome.last.display());
}

fn cmd_train(
    args: &ConfigArgs,
    data: Option<PathBuf>,
    resume: Option<PathBuf>,
    argv: &[OsString],
) -> Result<()> {
    let out = out_dir(args.out.clone());
    let (cfg, overrides) = resolve_args(args, Phase::Train)?;
    let root = data_root(data, &cfg)?;
    let (index, manifest) = open_dataset(&root)?;
    let outcome = match &resume {
        Some(ckpt) => {
            let trainer = train::Trainer::from_checkpoint(read_checkpoint(ckpt)?)?;
            let data = TrainData::load(&index, &manifest, trainer.config().scale)?;
            let mut trainer = trainer;
            trainer.run(&data, &out)?
        }
        None => {
            let data = TrainData::load(&index, &manifest, cfg.train.scale)?;
            let model = OfpNet::<f32>::new(cfg.model.clone(), cfg.train.seed)?;
            train::train(model, &data, &cfg.train, &out)?
        }
    };
    report_training(&outcome);
    write_manifest(
        &out,
        ManifestInput {
            command: "train",
            argv,
            config_file: args.config.as_deref(),
            overrides: &overrides,
            seed: Some(cfg.train.seed),
            resolved: Some(&cfg),
            artifacts: train_artifacts(&outcome),
        },
    )?;
    Ok(())
}

fn cmd_finetune(
    args: &ConfigArgs,
    data: Option<PathBuf>,
    checkpoint: &Path,
    argv: &[OsString],
) -> Result<()> {
    let out = out_dir(args.out.clone());
    let (cfg, overrides) = resolve_args(args, Phase::Finetune)?;
    let root = data_root(data, &cfg)?;
    let (index, manifest) = open_dataset(&root)?;
    let data = TrainData::load(&index, &manifest, cfg.train.scale)?;
    let outcome = train::finetune(checkpoint, &cfg.model, &data, &cfg.train, &out)?;
    report_training(&outcome);
    let mut artifacts = train_artifacts(&outcome);
    artifacts.push(checkpoint.to_path_buf());
    write_manifest(
        &out,
        ManifestInput {
            command: "finetune",
            argv,
            config_file: args.config.as_deref(),
            overrides: &overrides,
            seed: Some(cfg.train.seed),
            resolved: Some(&cfg),
            artifacts,
        },
    )?;
    Ok(())
}

fn cmd_eval(
    args: &ConfigArgs,
    data: Option<PathBuf>,
    checkpoint: &Path,
    label: &str,
    baseline: bool,
    dump_sr: bool,
    argv: &[OsString],
) -> Result<()> {
    let out = out_dir(args.out.clone());
    let ckpt = read_checkpoint(checkpoint)?;
    let mut overrides = args.overrides.clone();
    // The checkpoint fixes the architecture and, if it has one, the scale.
    if let Some(state) = &ckpt.state {
        let state: TrainState = serde_json::from_value(state.clone())?;
        overrides.insert(0, format!("train.scale={}", state.config.scale));
    }
    let (cfg, _) = resolve(args.config.as_deref(), &overrides, Phase::Train)?;
    let root = data_root(data, &cfg)?;
    let (index, manifest) = open_dataset(&root)?;
    let split = cfg.eval.split()?;
    let opts = EvalOptions {
        tile: cfg.eval.tile,
        sr_dump: dump_sr.then(|| out.clone()),
    };
    let report = evaluate(
        &ckpt.model,
        &index,
        &manifest,
        split,
        cfg.train.scale,
        label,
        &opts,
    )?;
    let (csv, txt) = report.write(&out)?;
    print!("{}", report.render_text());
    let mut artifacts = vec![csv, txt, checkpoint.to_path_buf()];
    if baseline {
        let base = identity_baseline(&index, &manifest, split, cfg.train.scale)?;
        let (c, t) = base.write(&out)?;
        let (tc, tt) = emit_table(&[base, report], TableLayout::Table1, &out)?;
        print!("{}", std::fs::read_to_string(&tt)?);
        artifacts.extend([c, t, tc, tt]);
    }
    write_manifest(
        &out,
        ManifestInput {
            command: "eval",
            argv,
            config_file: args.config.as_deref(),
            overrides: &overrides,
            seed: None,
            resolved: Some(&cfg),
            artifacts,
        },
    )?;
    Ok(())
}

fn cmd_ablate(
    args: &ConfigArgs,
    data: Option<PathBuf>,
    variants: &str,
    parallel: usize,
    argv: &[OsString],
) -> Result<()> {
    let out = out_dir(args.out.clone());
    let (cfg, overrides) = resolve_args(args, Phase::Train)?;
    let root = data_root(data, &cfg)?;
    let (index, manifest) = open_dataset(&root)?;
    let labels: Vec<String> = if variants == "all" {
        crate::model::ABLATION_VARIANTS
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        variants
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    let outcome = run_ablation(&cfg, &index, &manifest, &labels, parallel, &out)?;
    print!("{}", std::fs::read_to_string(&outcome.table_txt)?);
    let mut artifacts = vec![outcome.table_csv.clone(), outcome.table_txt.clone()];
    artifacts.extend(outcome.checkpoints.iter().cloned());
    write_manifest(
        &out,
        ManifestInput {
            command: "ablate",
            argv,
            config_file: args.config.as_deref(),
            overrides: &overrides,
            seed: Some(cfg.train.seed),
            resolved: Some(&cfg),
            artifacts,
        },
    )?;
    Ok(())
}

fn parse_rows(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|pair| {
            let bad = || Error::config(format!("EPI row {pair:?} is not u:y"));
            let (u, y) = pair.trim().split_once(':').ok_or_else(bad)?;
            Ok((u.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?))
        })
        .collect()
}

fn cmd_epi(
    views: &Path,
    checkpoint: Option<&Path>,
    rows: Option<&str>,
    out: Option<PathBuf>,
    name: Option<String>,
    argv: &[OsString],
) -> Result<()> {
    let out = out_dir(out);
    let mut lf = extract_y(&load_lightfield(views, Colorspace::YCbCr)?)?;
    if let Some(path) = checkpoint {
        let ckpt = read_checkpoint(path)?;
        lf = ckpt.model.forward(&lf)?;
        lf.clamp_unit();
    }
    let (u_n, _) = lf.angular_size();
    let (h, _) = lf.spatial_size();
    let rows = match rows {
        Some(s) => parse_rows(s)?,
        None => vec![(u_n / 2, h / 4), (u_n / 2, h / 2), (u_n / 2, 3 * h / 4)],
    };
    let name = name.unwrap_or_else(|| {
        let base = views
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        if base == ScaleTag::Gt.dir_name() || base.starts_with("lr_") {
            let scene = views
                .parent()
                .and_then(Path::file_name)
                .unwrap_or_default()
                .to_string_lossy();
            format!("{scene}_{base}")
        } else {
            base
        }
    });
    let dir = out.join("epi").join(&name);
    std::fs::create_dir_all(&dir)?;
    let paths = export_epi_strip(&lf, &rows, &dir)?;
    for p in &paths {
        println!("{}", p.display());
    }
    let mut artifacts = paths;
    artifacts.extend(checkpoint.map(Path::to_path_buf));
    write_manifest(
        &out,
        ManifestInput {
            command: "epi",
            argv,
            config_file: None,
            overrides: &[],
            seed: None,
            resolved: None,
            artifacts,
        },
    )?;
    Ok(())
}

fn cmd_info(path: &Path) -> Result<()> {
    let ckpt = read_checkpoint(path)?;
    let config = ckpt.model.config();
    println!("checkpoint: {}", path.display());
    println!("sha256: {}", sha256_file(path)?);
    println!("parameters: {}", count_params(config));
    println!("tensors: {}", ckpt.model.params().len());
    println!(
        "optimizer moments: {}",
        if ckpt.moments.is_some() { "yes" } else { "no" }
    );
    println!("model config: {}", serde_json::to_string(config)?);
    if let Some(state) = &ckpt.state {
        match serde_json::from_value::<TrainState>(state.clone()) {
            Ok(s) => {
                println!(
                    "training: phase {:?}, epoch {}/{}, step {}, scale x{}",
                    s.config.phase, s.epoch, s.config.total_epochs, s.global_step, s.config.scale
                );
                if let Some(p) = s.best_val_psnr {
                    println!("best val PSNR: {p:.3} dB");
                }
            }
            Err(_) => println!("training state: {state}"),
        }
    }
    Ok(())
}
