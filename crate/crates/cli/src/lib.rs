//! `spatialprompt` command line.
//!
//! Exit codes: 0 success or pass, 1 validation failure, 2 input or
//! configuration error, 3 backend error. Diagnostics go to stderr; data
//! goes to files, or to stdout when the path is `-`.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use spatialprompt_core::backend::{generate, BackendKind};
use spatialprompt_core::canonical::sha256_hex;
use spatialprompt_core::compiler::ConstraintSet;
use spatialprompt_core::prompt::AssembleOptions;
use spatialprompt_core::{
    assemble, compile, export_mesh_obj, load_mesh_obj, validate, SemanticPrompt, SketchDocument, ValidationReport,
};

use config::CliConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spatialprompt", version, about = "Sketch-conditioned 3D generation pipeline")]
pub struct Cli {
    /// TOML config file; environment variables and flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Remote,
}

#[derive(Debug, clap::Args)]
pub struct CompileArgs {
    /// Junction merge distance in meters (default: derived from the sketch).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Resampling spacing in meters.
    #[arg(long)]
    pub resample_spacing: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a sketch document into a constraint set.
    Compile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: CompileArgs,
    },
    /// Compile, generate an asset and validate it.
    Generate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        style: Vec<String>,
        #[arg(long)]
        negative: Option<String>,
        #[arg(long)]
        target_face_count: Option<u32>,
        #[command(flatten)]
        params: CompileArgs,
    },
    /// Validate an OBJ mesh against a constraint set.
    Validate {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the collaborative session server until interrupted.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Re-apply a document's op log and compare digests.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print the digest of a sketch document, or SHA-256 of any other file.
    Digest {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
    fn backend(message: impl Into<String>) -> Self {
        Self { code: EXIT_BACKEND, message: message.into() }
    }
}

type Outcome = Result<i32, Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let result = if path.as_os_str() == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush())
    } else {
        std::fs::write(path, bytes)
    };
    result.map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn read_sketch(path: &Path) -> Result<SketchDocument, Failure> {
    SketchDocument::parse(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn apply_compile_args(cfg: &mut CliConfig, args: &CompileArgs) {
    if let Some(e) = args.epsilon {
        cfg.compile.epsilon = Some(e);
    }
    if let Some(s) = args.resample_spacing {
        cfg.compile.resample_spacing = s;
    }
}

fn write_report(path: &Path, report: &ValidationReport) -> Result<(), Failure> {
    let bytes = report.to_canonical_bytes().map_err(|e| Failure::input(e.to_string()))?;
    write(path, &bytes)
}

fn verdict(report: &ValidationReport) -> i32 {
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {} measured {:?} target {:?}", c.name, c.measured, c.target);
    }
    if report.overall_pass {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

/// Run a parsed command.
pub fn execute(cli: Cli) -> Outcome {
    let mut cfg = CliConfig::load(cli.config.as_deref()).map_err(|e| Failure::input(e.to_string()))?;
    match cli.command {
        Command::Compile { input, out, params } => {
            apply_compile_args(&mut cfg, &params);
            cfg.check().map_err(|e| Failure::input(e.to_string()))?;
            let doc = read_sketch(&input)?;
            let cs = compile(&doc, &cfg.compile).map_err(|e| Failure::input(e.to_string()))?;
            write(&out, &cs.to_canonical_bytes().map_err(|e| Failure::input(e.to_string()))?)?;
            Ok(EXIT_OK)
        }
        Command::Generate { input, prompt, seed, backend, out, report, style, negative, target_face_count, params } => {
            apply_compile_args(&mut cfg, &params);
            match backend {
                Some(BackendArg::Mock) => cfg.backend.kind = BackendKind::Mock,
                Some(BackendArg::Remote) => cfg.backend.kind = BackendKind::Remote,
                None => {}
            }
            cfg.check().and_then(|_| cfg.check_backend()).map_err(|e| Failure::input(e.to_string()))?;
            let doc = read_sketch(&input)?;
            let cs = compile(&doc, &cfg.compile).map_err(|e| Failure::input(e.to_string()))?;
            let mut semantic = SemanticPrompt::new(prompt);
            semantic.style_tags = style;
            semantic.negative_text = negative;
            let mut options = AssembleOptions::default();
            if let Some(n) = target_face_count {
                options.target_face_count = n;
            }
            let request = assemble(&cs, &semantic, seed, &options).map_err(|e| Failure::input(e.to_string()))?;
            eprintln!("request {} ({} backend)", request.request_id, if cfg.backend.kind == BackendKind::Mock { "mock" } else { "remote" });
            let output = generate(&request, &cfg.backend).map_err(|e| Failure::backend(e.to_string()))?;
            let result = validate(&output.mesh, &cs, &cfg.validator).map_err(|e| Failure::backend(e.to_string()))?;
            write(&out, &export_mesh_obj(&output.mesh))?;
            write_report(&report, &result)?;
            Ok(verdict(&result))
        }
        Command::Validate { mesh, constraints, report } => {
            let m = load_mesh_obj(&read(&mesh)?).map_err(|e| Failure::input(format!("{}: {e}", mesh.display())))?;
            let cs = ConstraintSet::parse(&read(&constraints)?)
                .map_err(|e| Failure::input(format!("{}: {e}", constraints.display())))?;
            let result = validate(&m, &cs, &cfg.validator).map_err(|e| Failure::input(e.to_string()))?;
            write_report(&report, &result)?;
            Ok(verdict(&result))
        }
        Command::Serve { listen } => {
            if let Some(l) = listen {
                cfg.listen = l;
            }
            cfg.check().and_then(|_| cfg.check_backend()).map_err(|e| Failure::input(e.to_string()))?;
            let addr: std::net::SocketAddr =
                cfg.listen.parse().map_err(|e| Failure::input(format!("invalid listen address {:?}: {e}", cfg.listen)))?;
            serve(addr, cfg)
        }
        Command::Replay { input } => {
            let doc = read_sketch(&input)?;
            let stored = doc.digest().map_err(|e| Failure::input(e.to_string()))?;
            let replayed = match doc.replayed().and_then(|d| d.digest()) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("op log does not replay: {e}");
                    return Ok(EXIT_VALIDATION);
                }
            };
            println!("{replayed}");
            if replayed == stored {
                Ok(EXIT_OK)
            } else {
                eprintln!("digest mismatch: stored {stored}, replayed {replayed}");
                Ok(EXIT_VALIDATION)
            }
        }
        Command::Digest { input } => {
            let bytes = read(&input)?;
            let digest = match SketchDocument::parse(&bytes) {
                Ok(doc) => doc.digest().map_err(|e| Failure::input(e.to_string()))?,
                Err(_) => sha256_hex(&bytes),
            };
            println!("{digest}");
            Ok(EXIT_OK)
        }
    }
}

fn serve(addr: std::net::SocketAddr, cfg: CliConfig) -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::input(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::input(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::input(e.to_string()))?;
        eprintln!("listening on ws://{local}/session/{{id}}");
        let config = spatialprompt_server::ServerConfig {
            backend: cfg.backend,
            validator: cfg.validator,
            compile: cfg.compile,
        };
        tokio::select! {
            r = spatialprompt_server::serve(listener, config) => {
                r.map_err(|e| Failure::input(format!("server stopped: {e}")))?;
            }
            _ = tokio::signal::ctrl_c() => eprintln!("interrupted"),
        }
        Ok(EXIT_OK)
    })
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
