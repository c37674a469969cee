use std::fs::{self, File};
use std::io::{BufWriter, LineWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use gemini_core::engine::Session;
use gemini_core::harness::{generate, read_all, HarnessError, MotionScript, SourceSpec};
use gemini_core::inference::{infer, InferenceConfig, Recording};
use gemini_core::mapper::scheme::{parse_scheme, validate_document, InteractionScheme, SchemeError};
use gemini_core::mapper::sink::{EventLogSink, EventSink};
use gemini_core::pipeline::{self, PipelineError, Sources, TimeMode};
use gemini_core::service::{self, ServiceConfig, DEFAULT_PORT};
use gemini_core::skeleton::{SkeletonFrame, SkeletonStream};

#[derive(Parser)]
#[command(name = "gemini", version, about = "Pose, voice and button to keyboard/mouse middleware")]
struct Cli {
    /// Print diagnostics as one JSON object per line on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scheme over skeleton, transcript and button sources.
    Run(RunArgs),
    /// Infer a pose from a skeleton recording and add it to a scheme.
    Infer(InferArgs),
    /// Check a scheme and report every problem.
    Validate(ValidateArgs),
    /// Render a motion script into a skeleton stream.
    Generate(GenerateArgs),
    /// Start the HTTP control service and live-state stream.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    scheme: PathBuf,
    /// A `.skel.jsonl` path or `tcp:PORT`.
    #[arg(long, value_name = "SOURCE")]
    skeleton: String,
    #[arg(long, value_name = "SOURCE")]
    transcript: Option<String>,
    #[arg(long, value_name = "SOURCE")]
    buttons: Option<String>,
    /// Event log to write.
    #[arg(long, value_name = "FILE")]
    sink: PathBuf,
    /// Process inputs by timestamp without waiting (default for files).
    #[arg(long, conflicts_with = "realtime")]
    virtual_time: bool,
    /// Pace file sources against the wall clock (default for sockets).
    #[arg(long)]
    realtime: bool,
    /// Playback speed for realtime file sources.
    #[arg(long, default_value_t = 1.0, value_name = "FACTOR")]
    speed_factor: f64,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long, value_name = "FILE")]
    recording: PathBuf,
    #[arg(long, value_name = "NAME")]
    pose_id: String,
    /// Inference setting override, e.g. `band_tolerance_m=0.12`.
    #[arg(long = "config", value_name = "KEY=VALUE")]
    config: Vec<String>,
    /// Scheme to update; created if missing.
    #[arg(long, value_name = "SCHEME_FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_name = "FILE")]
    scheme: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Motion script JSON.
    #[arg(long, value_name = "FILE")]
    script: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "GEMINI_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Initial scheme; an empty one when omitted.
    #[arg(long, value_name = "FILE")]
    scheme: Option<PathBuf>,
    /// Directory listed under /fixtures.
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
}

/// How a command failed: usage problems exit 2, domain problems exit 1.
enum Failure {
    Usage(String),
    Domain(Vec<Value>),
}

impl Failure {
    fn domain(code: &str, message: impl Into<String>) -> Self {
        Failure::Domain(vec![json!({"code": code, "message": message.into()})])
    }

    fn scheme(errors: &[SchemeError]) -> Self {
        Failure::Domain(
            errors
                .iter()
                .map(|e| json!({"code": e.code.as_str(), "path": e.path, "message": e.message}))
                .collect(),
        )
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a, cli.json),
        Command::Infer(a) => infer_cmd(a),
        Command::Validate(a) => validate(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            if cli.json {
                eprintln!("{}", json!({"level": "error", "code": "Usage", "message": msg}));
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Domain(diags)) => {
            for d in diags {
                if cli.json {
                    let mut d = d;
                    d["level"] = json!("error");
                    eprintln!("{d}");
                } else {
                    let path = d.get("path").and_then(Value::as_str).filter(|p| !p.is_empty());
                    let code = d["code"].as_str().unwrap_or("Error");
                    let message = d["message"].as_str().unwrap_or("");
                    match path {
                        Some(p) => eprintln!("error: {code} at {p}: {message}"),
                        None => eprintln!("error: {code}: {message}"),
                    }
                }
            }
            ExitCode::from(1)
        }
    }
}

fn read_input(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_scheme_file(path: &Path) -> Result<InteractionScheme, Failure> {
    let doc = read_input(path, "scheme")?;
    validate_document(&doc).map_err(|errors| Failure::scheme(&errors))
}

fn source(spec: &str, what: &str) -> Result<SourceSpec, Failure> {
    let parsed = SourceSpec::parse(spec).map_err(|e| Failure::Usage(format!("--{what}: {e}")))?;
    if let SourceSpec::Replay { path, .. } = &parsed {
        if !path.is_file() {
            return Err(Failure::Usage(format!("--{what}: no such file {}", path.display())));
        }
    }
    Ok(parsed)
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match &e {
        PipelineError::Source {
            source: HarnessError::Io(_) | HarnessError::BindFailure { .. },
            ..
        } => Failure::Usage(e.to_string()),
        PipelineError::Source {
            source: HarnessError::Decode { record, message },
            stream,
        } => Failure::Domain(vec![json!({
            "code": "DecodeError",
            "stream": stream,
            "record": record,
            "message": message,
        })]),
        PipelineError::Engine(err) => Failure::domain(err.code(), err.to_string()),
        _ => Failure::domain("RunFailed", e.to_string()),
    }
}

fn run(a: RunArgs, json_out: bool) -> Outcome {
    if !a.speed_factor.is_finite() || a.speed_factor <= 0.0 {
        return Err(Failure::Usage("--speed-factor must be finite and positive".into()));
    }
    let skeleton = source(&a.skeleton, "skeleton")?;
    let transcript = a.transcript.as_deref().map(|s| source(s, "transcript")).transpose()?;
    let buttons = a.buttons.as_deref().map(|s| source(s, "buttons")).transpose()?;
    let any_socket = [Some(&skeleton), transcript.as_ref(), buttons.as_ref()]
        .into_iter()
        .flatten()
        .any(|s| matches!(s, SourceSpec::Socket { .. }));
    let mode = if a.virtual_time || (!a.realtime && !any_socket) {
        TimeMode::Virtual
    } else {
        TimeMode::Realtime {
            speed_factor: a.speed_factor,
        }
    };

    let scheme = load_scheme_file(&a.scheme)?;
    let mut session = Session::new(scheme).map_err(|errors| Failure::scheme(&errors))?;
    let file = File::create(&a.sink)
        .map_err(|e| Failure::Usage(format!("cannot create sink {}: {e}", a.sink.display())))?;
    let sources = Sources {
        skeleton,
        transcript,
        buttons,
    };
    let summary = match mode {
        TimeMode::Virtual => {
            let mut sink = EventLogSink::new(BufWriter::new(file)).map_err(|e| Failure::Usage(e.to_string()))?;
            pipeline::run(&mut session, &sources, mode, &mut sink)
        }
        TimeMode::Realtime { .. } => {
            let mut sink = EventLogSink::new(LineWriter::new(file)).map_err(|e| Failure::Usage(e.to_string()))?;
            pipeline::run(&mut session, &sources, mode, &mut sink as &mut dyn EventSink)
        }
    }
    .map_err(pipeline_failure)?;

    let m = &summary.metrics;
    if json_out {
        println!(
            "{}",
            json!({"metrics": m, "output_events": summary.output_events})
        );
    } else {
        let us = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
        println!(
            "frames={} tokens={} device_events={} p50_latency_us={} p99_latency_us={} dropped_frames={} unmapped_triggers={} output_events={}",
            m.frames,
            m.tokens,
            m.device_events,
            us(m.p50_latency_us),
            us(m.p99_latency_us),
            m.dropped_frames,
            m.unmapped_triggers,
            summary.output_events
        );
    }
    Ok(())
}

fn apply_overrides(base: &InferenceConfig, overrides: &[String]) -> Result<InferenceConfig, Failure> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--config expects KEY=VALUE, got `{item}`")))?;
        if value.get(key).is_none() {
            return Err(Failure::Usage(format!("--config: unknown setting `{key}`")));
        }
        let parsed = serde_json::from_str(raw)
            .or_else(|_| {
                if key == "tracked_joints" {
                    Ok(Value::Array(raw.split(',').map(|j| Value::String(j.trim().into())).collect()))
                } else {
                    Err(())
                }
            })
            .map_err(|_| Failure::Usage(format!("--config: cannot parse value for `{key}`")))?;
        value[key] = parsed;
    }
    let cfg: InferenceConfig =
        serde_json::from_value(value).map_err(|e| Failure::Usage(format!("--config: {e}")))?;
    cfg.validate().map_err(|e| Failure::domain(e.code(), e.to_string()))?;
    Ok(cfg)
}

fn infer_cmd(a: InferArgs) -> Outcome {
    if a.pose_id.is_empty() || a.pose_id.chars().any(char::is_whitespace) {
        return Err(Failure::Usage(format!("invalid --pose-id `{}`", a.pose_id)));
    }
    let mut scheme = if a.out.exists() {
        let doc = read_input(&a.out, "scheme")?;
        parse_scheme(&doc).map_err(|e| Failure::scheme(&[e]))?
    } else {
        InteractionScheme::empty(
            a.out
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.split('.').next())
                .unwrap_or("scheme"),
        )
    };
    if scheme.pose(&a.pose_id).is_some() {
        return Err(Failure::domain(
            "DuplicateId",
            format!("pose `{}` already exists in {}", a.pose_id, a.out.display()),
        ));
    }
    let cfg = apply_overrides(&scheme.inference, &a.config)?;
    if !a.recording.is_file() {
        return Err(Failure::Usage(format!("no such recording {}", a.recording.display())));
    }
    let frames: Vec<SkeletonFrame> = read_all(&a.recording).map_err(|e| match e {
        HarnessError::Decode { record, message } => Failure::Domain(vec![json!({
            "code": "DecodeError", "record": record, "message": message
        })]),
        other => Failure::Usage(other.to_string()),
    })?;
    let recording = Recording::new(frames, SkeletonStream::DEFAULT_FPS);
    let pose = infer(&recording, &cfg, &a.pose_id).map_err(|e| Failure::domain(e.code(), e.to_string()))?;

    println!("{} ({} constraints)", pose.pose_id, pose.constraints.len());
    for c in &pose.constraints {
        println!("  {c}");
    }
    scheme.poses.push(pose);
    fs::write(&a.out, scheme.to_canonical_json())
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", a.out.display())))?;
    Ok(())
}

fn validate(a: ValidateArgs) -> Outcome {
    load_scheme_file(&a.scheme)?;
    println!("ok");
    Ok(())
}

fn generate_cmd(a: GenerateArgs) -> Outcome {
    let text = read_input(&a.script, "script")?;
    let script: MotionScript =
        serde_json::from_str(&text).map_err(|e| Failure::domain("InvalidScript", e.to_string()))?;
    let stream = generate(&script, a.seed).map_err(|e| Failure::domain("InvalidScript", e.to_string()))?;
    let file = File::create(&a.out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out.display())))?;
    let mut w = BufWriter::new(file);
    w.write_all(stream.encode().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let scheme = match &a.scheme {
        Some(p) => load_scheme_file(p)?,
        None => InteractionScheme::empty("untitled"),
    };
    let session = Session::new(scheme).map_err(|errors| Failure::scheme(&errors))?;
    let mut config = ServiceConfig::on_port(a.port);
    if let Some(dir) = a.fixtures {
        config = config.with_fixtures(dir);
    }
    let handle = service::serve(session, config).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("http://{}", handle.http_addr);
    println!("livestate tcp:{}", handle.live_addr.port());
    for (name, addr) in [
        ("skeleton", handle.skeleton_addr),
        ("transcript", handle.transcript_addr),
        ("buttons", handle.buttons_addr),
    ] {
        if let Some(addr) = addr {
            println!("{name} tcp:{}", addr.port());
        }
    }
    let _ = std::io::stdout().flush();
    handle.wait();
    Ok(())
}
