//! `horen` command-line front end.
//!
//! Settings resolve in three layers: per-command defaults, then the optional
//! flat TOML file given by `--config`, then explicit flags. The resolved
//! settings are written next to every result as `manifest.json`.
//!
//! Exit codes: 0 success, 1 usage/config/IO error, 2 property violation.

pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adaptor::AdaptorConfig;
use crate::bench::lifelong::run_with_router;
use crate::bench::report::{self, CSV_FORMAT_VERSION};
use crate::bench::{
    build_router, generate_stream, scaling_stress, sweep, BenchConfig, NormalizedRouter, RouterKind,
    ScalingConfig, StreamConfig, SweepAxis,
};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::hopfield::HopfieldParams;
use verify::{run_verification, VerifyConfig};

/// Like `println!`, but a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HOREN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "horen", version, about = "Normalized Hopfield codebook and lifelong-editing benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one lifelong-editing stream and write metrics.
    Bench(CommonArgs),
    /// Run the benchmark once per value of one parameter.
    Sweep {
        /// steps (M), gamma, beta, threshold (c) or paraphrase-angle.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Check the iteration's guarantees on random instances.
    Verify {
        #[arg(long)]
        instances: Option<usize>,
        /// Skip the softmax max-shift at β = 10⁶ to exercise the overflow guard.
        #[arg(long)]
        inject_overflow_bug: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Save, load or inspect a codebook file.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Long stream with memory and latency measurements.
    Stress(CommonArgs),
}

#[derive(Debug, Subcommand)]
pub enum CodebookAction {
    /// Build a codebook from a stream and write it to PATH.
    Save {
        path: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Read PATH and validate it.
    Load { path: PathBuf },
    /// Print dimension, size, label histogram and creation range.
    Info {
        path: PathBuf,
        /// Most frequent labels to list; 0 lists all.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat TOML file with any of the settings below (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub edits: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub router: Option<RouterKind>,
    #[arg(long)]
    pub paraphrase_angle: Option<f64>,
    #[arg(long)]
    pub hard_locality: bool,
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    #[arg(long)]
    pub time_limit_secs: Option<f64>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub edits: Option<usize>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub steps: Option<usize>,
    pub epsilon: Option<f64>,
    pub threshold: Option<f64>,
    pub router: Option<RouterKind>,
    pub paraphrase_angle: Option<f64>,
    pub hard_locality: Option<bool>,
    pub locality_angle: Option<f64>,
    pub magnitude_jitter: Option<f64>,
    pub reassert_fraction: Option<f64>,
    pub conflict_fraction: Option<f64>,
    pub learning_rate: Option<f64>,
    pub adaptor_steps: Option<usize>,
    pub loss_threshold: Option<f64>,
    pub patience: Option<usize>,
    pub checkpoints: Option<Vec<usize>>,
    pub time_limit_secs: Option<f64>,
    pub latency_queries: Option<usize>,
    pub instances: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub stream: StreamConfig,
    pub params: HopfieldParams,
    pub adaptor: AdaptorConfig,
    pub router: RouterKind,
    pub checkpoints: Vec<usize>,
    pub time_limit_secs: f64,
    pub latency_queries: usize,
    pub instances: Option<usize>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    fn bench_defaults() -> Self {
        let b = BenchConfig::default();
        RunConfig {
            stream: b.stream,
            params: b.params,
            adaptor: b.adaptor,
            router: b.router,
            checkpoints: b.checkpoints,
            time_limit_secs: 30.0 * 60.0,
            latency_queries: 0,
            instances: None,
            out_dir: PathBuf::from("."),
        }
    }

    fn stress_defaults() -> Self {
        let s = ScalingConfig::default();
        RunConfig {
            stream: s.stream,
            params: s.params,
            adaptor: s.adaptor,
            router: RouterKind::Horen,
            checkpoints: s.checkpoints,
            time_limit_secs: s.time_limit_secs,
            latency_queries: s.latency_queries,
            instances: None,
            out_dir: PathBuf::from("."),
        }
    }

    /// Overlays the config file (if any), then the flags.
    pub fn resolve(mut self, args: &CommonArgs) -> Result<Self> {
        if let Some(path) = &args.config {
            let f = FileConfig::load(path)?;
            self.apply_file(f);
        }
        let s = &mut self.stream;
        let p = &mut self.params;
        set(&mut s.seed, args.seed);
        set(&mut s.dim, args.dim);
        set(&mut s.n_edits, args.edits);
        set(&mut p.beta, args.beta);
        set(&mut p.gamma, args.gamma);
        set(&mut p.max_steps, args.steps);
        set(&mut p.epsilon, args.epsilon);
        set(&mut p.threshold, args.threshold);
        set(&mut s.paraphrase_angle, args.paraphrase_angle);
        if args.hard_locality {
            s.hard_locality = true;
        }
        set(&mut self.router, args.router);
        set(&mut self.checkpoints, args.checkpoints.clone());
        set(&mut self.time_limit_secs, args.time_limit_secs);
        set(&mut self.out_dir, args.out.clone());
        self.validate()?;
        Ok(self)
    }

    fn apply_file(&mut self, f: FileConfig) {
        let s = &mut self.stream;
        set(&mut s.seed, f.seed);
        set(&mut s.dim, f.dim);
        set(&mut s.n_edits, f.edits);
        set(&mut s.paraphrase_angle, f.paraphrase_angle);
        set(&mut s.hard_locality, f.hard_locality);
        if f.locality_angle.is_some() {
            s.locality_angle = f.locality_angle;
        }
        set(&mut s.magnitude_jitter, f.magnitude_jitter);
        set(&mut s.reassert_fraction, f.reassert_fraction);
        set(&mut s.conflict_fraction, f.conflict_fraction);
        let p = &mut self.params;
        set(&mut p.beta, f.beta);
        set(&mut p.gamma, f.gamma);
        set(&mut p.max_steps, f.steps);
        set(&mut p.epsilon, f.epsilon);
        set(&mut p.threshold, f.threshold);
        let a = &mut self.adaptor;
        set(&mut a.learning_rate, f.learning_rate);
        set(&mut a.max_steps, f.adaptor_steps);
        set(&mut a.loss_threshold, f.loss_threshold);
        set(&mut a.patience, f.patience);
        set(&mut self.router, f.router);
        set(&mut self.checkpoints, f.checkpoints);
        set(&mut self.time_limit_secs, f.time_limit_secs);
        set(&mut self.latency_queries, f.latency_queries);
        if f.instances.is_some() {
            self.instances = f.instances;
        }
        set(&mut self.out_dir, f.out);
    }

    fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.params.validate()?;
        self.adaptor.validate()?;
        if !(self.time_limit_secs > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "time limit must be positive, got {}",
                self.time_limit_secs
            )));
        }
        Ok(())
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            stream: self.stream.clone(),
            params: self.params,
            adaptor: self.adaptor,
            router: self.router,
            checkpoints: self.checkpoints.clone(),
        }
    }

    fn require_out_dir(&self) -> Result<&Path> {
        let dir = self.out_dir.as_path();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            ));
        }
        Ok(dir)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Serialize)]
struct Manifest<'a, E: Serialize> {
    artifact: &'static str,
    version: &'static str,
    csv_format_version: u32,
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<E>,
    config: &'a RunConfig,
}

fn write_manifest<E: Serialize>(dir: &Path, command: &'static str, extra: Option<E>, cfg: &RunConfig) -> Result<()> {
    let m = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        csv_format_version: CSV_FORMAT_VERSION,
        command,
        extra,
        config: cfg,
    };
    report::write_text(&dir.join("manifest.json"), &report::to_json(&m)?)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Bench(args) => cmd_bench(&RunConfig::bench_defaults().resolve(&args)?),
        Command::Sweep { axis, values, common } => {
            let axis: SweepAxis = axis.parse()?;
            cmd_sweep(&RunConfig::bench_defaults().resolve(&common)?, axis, &values)
        }
        Command::Verify {
            instances,
            inject_overflow_bug,
            common,
        } => {
            let cfg = RunConfig::bench_defaults().resolve(&common)?;
            let mut v = VerifyConfig {
                seed: cfg.stream.seed,
                inject_overflow_bug,
                ..Default::default()
            };
            if let Some(n) = instances.or(cfg.instances) {
                v.instances = n;
            }
            cmd_verify(&v)
        }
        Command::Codebook { action } => match action {
            CodebookAction::Save { path, common } => {
                cmd_codebook_save(&RunConfig::bench_defaults().resolve(&common)?, &path)
            }
            CodebookAction::Load { path } => cmd_codebook_load(&path),
            CodebookAction::Info { path, top } => cmd_codebook_info(&path, top),
        },
        Command::Stress(args) => cmd_stress(&RunConfig::stress_defaults().resolve(&args)?),
    }
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<i32> {
    let dir = cfg.require_out_dir()?;
    let stream = generate_stream(&cfg.stream)?;
    let mut router = build_router(cfg.router, cfg.stream.dim, cfg.params, cfg.adaptor)?;
    let report = run_with_router(
        router.as_mut(),
        &stream,
        &cfg.adaptor,
        &cfg.checkpoints,
        Some(Duration::from_secs_f64(cfg.time_limit_secs)),
        |m, _| {
            say!(
                "edits {:>7}  size {:>7}  rel {:.4}  gen {:.4}  loc {:.4}  op {:.4}",
                m.edits, m.codebook_size, m.reliability, m.generalization, m.locality, m.op
            )
        },
    )?;
    report::write_text(&dir.join("metrics.json"), &report::to_json(&report)?)?;
    report::write_text(&dir.join("metrics.csv"), &report::metrics_csv(&report)?)?;
    write_manifest::<()>(dir, "bench", None, cfg)?;
    say!("wrote metrics.json, metrics.csv, manifest.json to {}", dir.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SweepArgs<'a> {
    axis: &'static str,
    values: &'a [f64],
}

pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<i32> {
    let dir = cfg.require_out_dir()?;
    let report = sweep(&cfg.bench_config(), axis, values)?;
    for r in &report.rows {
        say!(
            "{} {:<8} rel {:.4}  gen {:.4}  loc {:.4}  op {:.4}  size {:>6}  displacement {:.4e}",
            axis.name(),
            r.value,
            r.reliability,
            r.generalization,
            r.locality,
            r.op,
            r.codebook_size,
            r.mean_unrelated_displacement
        );
    }
    report::write_text(&dir.join("sweep.json"), &report::to_json(&report)?)?;
    report::write_text(&dir.join("sweep.csv"), &report::sweep_csv(&report, cfg.router.name())?)?;
    write_manifest(dir, "sweep", Some(SweepArgs { axis: axis.name(), values }), cfg)?;
    say!("wrote sweep.json, sweep.csv, manifest.json to {}", dir.display());
    Ok(EXIT_OK)
}

pub fn cmd_verify(cfg: &VerifyConfig) -> Result<i32> {
    let report = run_verification(cfg)?;
    for p in &report.properties {
        say!("{}", p.line());
    }
    let ok = report.all_passed();
    say!(
        "{} in {:.2}s",
        if ok { "all properties hold" } else { "property violated" },
        report.elapsed_secs
    );
    Ok(if ok { EXIT_OK } else { EXIT_VIOLATION })
}

pub fn cmd_codebook_save(cfg: &RunConfig, path: &Path) -> Result<i32> {
    if !matches!(cfg.router, RouterKind::Horen | RouterKind::CosineOnly) {
        return Err(Error::InvalidConfig(format!(
            "only normalized routers produce a codebook, not {}",
            cfg.router
        )));
    }
    let stream = generate_stream(&cfg.stream)?;
    let mut router = if cfg.router == RouterKind::Horen {
        NormalizedRouter::new(cfg.stream.dim, cfg.params, cfg.adaptor)
    } else {
        NormalizedRouter::cosine_only(cfg.stream.dim, cfg.params, cfg.adaptor)
    };
    for s in &stream {
        crate::bench::EditRouter::apply_edit(&mut router, s.edit_query.as_slice(), &s.target)?;
    }
    router.book().save(path)?;
    say!(
        "saved {} entries (d = {}) to {}",
        router.book().len(),
        router.book().dim(),
        path.display()
    );
    Ok(EXIT_OK)
}

pub fn cmd_codebook_load(path: &Path) -> Result<i32> {
    let book = Codebook::load(path)?;
    say!(
        "ok: {} entries, d = {}, {} edits applied",
        book.len(),
        book.dim(),
        book.edits_applied()
    );
    Ok(EXIT_OK)
}

pub fn cmd_codebook_info(path: &Path, top: usize) -> Result<i32> {
    let book = Codebook::load(path)?;
    say!("d: {}", book.dim());
    say!("C: {}", book.len());
    say!("edits applied: {}", book.edits_applied());
    match book.created_range() {
        Some((lo, hi)) => say!("created: {lo}..={hi}"),
        None => say!("created: none"),
    }
    let hist = book.label_histogram();
    let mut counts: Vec<(&str, usize)> = hist.into_iter().collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    say!("labels: {} distinct", counts.len());
    let shown = if top == 0 { counts.len() } else { top.min(counts.len()) };
    for (label, n) in &counts[..shown] {
        say!("  {label}\t{n}");
    }
    if shown < counts.len() {
        say!("  ... {} more", counts.len() - shown);
    }
    Ok(EXIT_OK)
}

pub fn cmd_stress(cfg: &RunConfig) -> Result<i32> {
    if cfg.router != RouterKind::Horen {
        return Err(Error::InvalidConfig(format!(
            "stress runs the horen router only, not {}",
            cfg.router
        )));
    }
    let dir = cfg.require_out_dir()?;
    let sc = ScalingConfig {
        stream: cfg.stream.clone(),
        params: cfg.params,
        adaptor: cfg.adaptor,
        checkpoints: cfg.checkpoints.clone(),
        time_limit_secs: cfg.time_limit_secs,
        latency_queries: cfg.latency_queries.max(1),
    };
    let report = scaling_stress(&sc)?;
    for p in &report.checkpoints {
        let m = &p.metrics;
        say!(
            "edits {:>7}  size {:>7}  rel {:.4}  gen {:.4}  loc {:.4}  {:>8.1}s  match {:.3e}s",
            m.edits, m.codebook_size, m.reliability, m.generalization, m.locality, p.elapsed_secs, p.match_latency_secs
        );
    }
    say!(
        "memory fit: slope {:.1}, r^2 {:.6}, max deviation {:.3e}; latency ratio C/(C/2) {:.3}",
        report.memory_fit.slope,
        report.memory_fit.r_squared,
        report.memory_fit.max_relative_deviation,
        report.latency_ratio
    );
    report::write_text(&dir.join("stress.json"), &report::to_json(&report)?)?;
    report::write_text(&dir.join("stress.csv"), &report::scaling_csv(&report)?)?;
    write_manifest::<()>(dir, "stress", None, cfg)?;
    say!("wrote stress.json, stress.csv, manifest.json to {}", dir.display());
    Ok(EXIT_OK)
}
