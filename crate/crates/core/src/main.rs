use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apa_core::dynamics::MixRegime;
use apa_core::embed::{read_cache, write_cache, EmbedError};
use apa_core::perturb::{Transform, TransformLabel};
use apa_core::pipeline::synth::{write_corpus, SynthOptions};
use apa_core::pipeline::{
    default_cache_dir, Candidate, Corpus, EmbedderChoice, Engine, PairManifest, PipelineError, RunConfig,
};
use apa_core::stats::{fit_gaussian, fit_pca, frechet_distance, project, Projection, StatsError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "apa", version, about = "Accompaniment prompt adherence and Fréchet audio distance")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Opts {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Mix regime label; `validate` accepts a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',', default_value = "L0")]
    regime: Vec<MixRegime>,
    /// NP or PCA<k>; `validate` accepts a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',', default_value = "NP")]
    projection: Vec<Projection>,
    /// Windows per set.
    #[arg(long, global = true, default_value_t = 10_000)]
    windows: usize,
    /// Window length in seconds.
    #[arg(long, global = true, default_value_t = 5.0)]
    duration: f64,
    #[arg(long, global = true, value_enum, default_value_t = EmbedderKind::Builtin)]
    embedder: EmbedderKind,
    /// Shell command starting the bridge process, with `--embedder bridge`.
    #[arg(long, global = true)]
    bridge_cmd: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Neither read nor write the on-disk embedding cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmbedderKind {
    Builtin,
    Bridge,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Precompute the reference embedding set of a manifest.
    Embed {
        manifest: PathBuf,
        /// Embed the mismatched set instead of the matched one.
        #[arg(long)]
        mismatched: bool,
    },
    /// Score a candidate manifest against a reference manifest.
    Score { reference: PathBuf, candidate: PathBuf },
    /// Run the perturbation grid over one manifest and write CSV.
    Validate {
        manifest: PathBuf,
        /// Comma-separated transform labels.
        #[arg(long, value_delimiter = ',')]
        transforms: Option<Vec<TransformLabel>>,
        /// Command for the EXT transform (WAV on stdin, WAV on stdout).
        #[arg(long)]
        ext_cmd: Option<String>,
        /// Count EXT as an invariant transform.
        #[arg(long)]
        ext_invariant: bool,
        /// Also write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fréchet distance between two cached embedding sets.
    Fad { a: PathBuf, b: PathBuf },
    /// Write the synthetic multitrack corpus.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 24)]
        songs: usize,
        #[arg(long, default_value_t = 20.0)]
        song_duration: f64,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        PipelineError::Stats(e).into()
    }
}

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("apa: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Embed { manifest, mismatched } => {
            let out = opts
                .out
                .as_ref()
                .ok_or_else(|| Failure::Usage("embed needs --out".into()))?;
            let cfg = single_config(opts)?;
            let corpus = load_corpus(manifest)?;
            let (r, rp) = engine(opts).reference_sets(&corpus, &cfg)?;
            write_cache(if *mismatched { &rp } else { &r }, out)?;
            Ok(())
        }
        Command::Score { reference, candidate } => {
            let cfg = single_config(opts)?;
            let r = load_corpus(reference)?;
            let c = if fs::canonicalize(reference).ok() == fs::canonicalize(candidate).ok() {
                r.clone()
            } else {
                load_corpus(candidate)?
            };
            let report = engine(opts).compute_apa(&r, Candidate::Corpus(&c), &cfg)?;
            emit(opts.out.as_deref(), &to_json(&report))
        }
        Command::Validate {
            manifest,
            transforms,
            ext_cmd,
            ext_invariant,
            report,
        } => {
            let transforms = transform_list(transforms.as_deref(), ext_cmd.as_deref(), *ext_invariant)?;
            let base = single_config_unchecked(opts)?;
            let mut grid = Vec::new();
            for &regime in &opts.regime {
                for &projection in &opts.projection {
                    grid.push(RunConfig {
                        regime,
                        projection,
                        ..base.clone()
                    });
                }
            }
            let corpus = load_corpus(manifest)?;
            let result = engine(opts).run_validation(&corpus, &transforms, &grid)?;
            if let Some(path) = report {
                write_file(path, to_json(&result).as_bytes())?;
            }
            emit(opts.out.as_deref(), &result.to_csv())
        }
        Command::Fad { a, b } => {
            let a = read_cache(a)?;
            let b = read_cache(b)?;
            let projection = single(&opts.projection, "--projection")?;
            let (a, b) = match projection {
                Projection::Np => (a, b),
                mode => {
                    let p = fit_pca(&a, mode)?;
                    (project(&p, &a)?, project(&p, &b)?)
                }
            };
            let fad = frechet_distance(&fit_gaussian(&a)?, &fit_gaussian(&b)?)?;
            #[derive(Serialize)]
            struct FadOut {
                fad: f64,
                dim: usize,
                projection: Projection,
            }
            let out = FadOut {
                fad,
                dim: a.dim(),
                projection,
            };
            emit(opts.out.as_deref(), &to_json(&out))
        }
        Command::Synth {
            dir,
            songs,
            song_duration,
        } => {
            let synth = SynthOptions {
                songs: *songs,
                duration_s: *song_duration,
                seed: opts.seed,
            };
            if synth.songs == 0 || !(synth.duration_s.is_finite() && synth.duration_s > 0.0) {
                return Err(Failure::Usage("synth needs at least one song of positive length".into()));
            }
            let path = write_corpus(dir, &synth)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn single<T: Copy>(values: &[T], flag: &str) -> Result<T, Failure> {
    match values {
        [v] => Ok(*v),
        _ => Err(Failure::Usage(format!("{flag} takes a single value here"))),
    }
}

fn embedder_choice(opts: &Opts) -> Result<EmbedderChoice, Failure> {
    match (opts.embedder, &opts.bridge_cmd) {
        (EmbedderKind::Builtin, _) => Ok(EmbedderChoice::Builtin),
        (EmbedderKind::Bridge, Some(command)) => Ok(EmbedderChoice::Bridge {
            command: command.clone(),
        }),
        (EmbedderKind::Bridge, None) => Err(Failure::Usage("--embedder bridge needs --bridge-cmd".into())),
    }
}

fn single_config_unchecked(opts: &Opts) -> Result<RunConfig, Failure> {
    let cfg = RunConfig {
        regime: opts.regime[0],
        embedder: embedder_choice(opts)?,
        projection: opts.projection[0],
        window_duration_s: opts.duration,
        n_windows: opts.windows,
        seed: opts.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn single_config(opts: &Opts) -> Result<RunConfig, Failure> {
    single(&opts.regime, "--regime")?;
    single(&opts.projection, "--projection")?;
    single_config_unchecked(opts)
}

fn transform_list(
    labels: Option<&[TransformLabel]>,
    ext_cmd: Option<&str>,
    ext_invariant: bool,
) -> Result<Vec<Transform>, Failure> {
    let mut labels = labels.map(<[_]>::to_vec).unwrap_or_else(|| TransformLabel::BUILTIN.to_vec());
    if ext_cmd.is_some() && !labels.contains(&TransformLabel::External) {
        labels.push(TransformLabel::External);
    }
    labels
        .into_iter()
        .map(|label| match (label, ext_cmd) {
            (TransformLabel::External, Some(command)) => Ok(Transform::External {
                command: command.to_string(),
                invariant: ext_invariant,
            }),
            (TransformLabel::External, None) => Err(Failure::Usage("EXT needs --ext-cmd".into())),
            (l, _) => Ok(Transform::builtin(l).expect("built-in label")),
        })
        .collect()
}

fn engine(opts: &Opts) -> Engine {
    Engine::new((!opts.no_cache).then(default_cache_dir))
}

fn load_corpus(path: &Path) -> Result<Corpus, Failure> {
    let manifest = PairManifest::load(path)?;
    Ok(Corpus::load(&manifest)?)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports are serializable") + "\n"
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("stdout: {e}"))),
    }
}
