use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use artiscene_core::assembly::{export_scene, load_assets, read_manifest};
use artiscene_core::config::{api_key_var, parse_exemption, Config, ConfigError};
use artiscene_core::image::{encode_depth_png16, encode_mask_png, Image};
use artiscene_core::metrics::evaluate;
use artiscene_core::model::ObjectId;
use artiscene_core::oracle::{random_scene, render_isometric, roundtrip_error, RoundtripStats};
use artiscene_core::orchestrator::{
    stored_crop, write_run_dir, ObjectEdit, Pipeline, PipelineError, PipelineInput, RunRequest,
};
use artiscene_core::providers::cache::{CachedTransport, ResponseCache};
use artiscene_core::providers::http::HttpTransport;
use artiscene_core::providers::mock::{guide_image, MockProvider};
use artiscene_core::providers::{Endpoint, ProviderClient, ProviderError, Router, Transport};
use artiscene_core::runlog::RunLog;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

const CACHE_DIR_VAR: &str = "ARTISCENE_CACHE_DIR";

#[derive(Parser)]
#[command(name = "artiscene", version, about = "Text or image to modular 3D scene synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene from a text prompt.
    Generate {
        #[arg(long)]
        prompt: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a scene from a guide image, skipping text-to-image.
    FromImage {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Regenerate one object's asset, keeping its placement.
    Edit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        object: String,
        #[arg(long, conflicts_with = "crop", required_unless_present = "crop")]
        edit_prompt: Option<String>,
        #[arg(long)]
        crop: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Compute layout metrics over exported manifests.
    Eval {
        #[arg(long)]
        manifests: String,
        /// Comma-separated label pairs such as chair:desk.
        #[arg(long, value_delimiter = ',')]
        exempt: Option<Vec<String>>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write an oracle scene, its renders and a round-trip report.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle loop over several scenes with mock providers.
    Roundtrip {
        #[arg(long)]
        n_scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Args)]
struct ProviderArgs {
    /// Config file whose [providers] table selects the endpoints.
    #[arg(long, conflicts_with = "mock")]
    providers: Option<PathBuf>,
    /// Use the built-in deterministic mock providers.
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene_type: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_repetition_merge: bool,
    #[command(flatten)]
    providers: ProviderArgs,
}

/// Process exit status by failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Pipeline = 1,
    Config = 2,
    Unreachable = 3,
}

fn classify(e: &anyhow::Error) -> Failure {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return Failure::Config;
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return if p.is_unreachable() { Failure::Unreachable } else { Failure::Pipeline };
        }
        if let Some(p) = cause.downcast_ref::<ProviderError>() {
            return if p.is_unreachable() { Failure::Unreachable } else { Failure::Pipeline };
        }
    }
    Failure::Pipeline
}

fn config_error(key: &str, message: impl Into<String>) -> anyhow::Error {
    ConfigError::Invalid { key: key.into(), message: message.into() }.into()
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn http_transport(cfg: &Config) -> anyhow::Result<Arc<dyn Transport>> {
    let make = |name: &str| {
        cfg.endpoint(name, std::env::var(api_key_var(name)).ok())
            .map(|ep| Arc::new(HttpTransport::new(ep)) as Arc<dyn Transport>)
    };
    let missing: Vec<&str> = Endpoint::ALL
        .iter()
        .map(|e| e.name())
        .filter(|n| !cfg.providers.contains_key(*n))
        .collect();
    let default = match make("default") {
        Some(t) => t,
        None if missing.is_empty() => make(Endpoint::ALL[0].name()).expect("configured"),
        None => {
            return Err(config_error(
                "providers",
                format!("no endpoint configured for {}; add [providers.default] or use --mock", missing.join(", ")),
            ))
        }
    };
    let mut router = Router::new(default);
    for e in Endpoint::ALL {
        if let Some(t) = make(e.name()) {
            router = router.route(e, t);
        }
    }
    Ok(Arc::new(router))
}

struct Session {
    pipeline: Pipeline,
    log: Arc<RunLog>,
    cache: Arc<ResponseCache>,
}

fn session(args: &ProviderArgs, out: &Path, repetition_merge: bool) -> anyhow::Result<Session> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(p) = &args.providers {
        cfg.providers = Config::load(p)?.providers;
    }
    if !repetition_merge {
        cfg.pipeline.repetition_merge = false;
    }
    let inner: Arc<dyn Transport> = if args.mock {
        Arc::new(MockProvider::new(0))
    } else {
        http_transport(&cfg)?
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log = Arc::new(RunLog::to_file(&out.join("log.jsonl")).with_context(|| format!("creating log in {}", out.display()))?);
    let cache_dir = std::env::var_os(CACHE_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| out.join("cache"));
    let cache = Arc::new(ResponseCache::on_disk(&cache_dir).with_context(|| format!("opening cache {}", cache_dir.display()))?);
    let transport = Arc::new(CachedTransport::new(inner, cache.clone(), log.clone()));
    let pipeline = Pipeline::new(ProviderClient::new(transport), cfg, log.clone());
    Ok(Session { pipeline, log, cache })
}

fn default_out(prompt: &str, seed: u64) -> PathBuf {
    let slug: String = prompt
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-");
    let slug: String = slug.chars().take(40).collect();
    PathBuf::from("run").join(format!("{}-seed{seed}", if slug.is_empty() { "scene" } else { &slug }))
}

fn read_image(path: &Path) -> anyhow::Result<Image> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Image::decode_png(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn run_scene(input: PipelineInput, label: &str, run: &RunArgs) -> anyhow::Result<()> {
    let out = run.out.clone().unwrap_or_else(|| default_out(label, run.seed));
    let s = session(&run.providers, &out, !run.no_repetition_merge)?;
    let t = Instant::now();
    let req = RunRequest { input, scene_type: run.scene_type.clone(), seed: run.seed };
    let result = s.pipeline.run(&req).and_then(|o| write_run_dir(&o, &out).map(|p| (o, p)));
    s.log.event(
        "run_end",
        json!({"ok": result.is_ok(), "elapsed_ms": t.elapsed().as_secs_f64() * 1e3,
               "cache_hits": s.cache.hits(), "cache_misses": s.cache.misses()}),
    );
    s.log.flush();
    let (output, path) = result?;
    for w in &output.manifest.meta.warnings {
        tracing::warn!(stage = %w.stage, object = ?w.object.map(|o| o.to_string()), "{}", w.message);
    }
    println!("{}", path.display());
    Ok(())
}

fn edit(
    manifest: &Path,
    object: &str,
    prompt: Option<&str>,
    crop: Option<&Path>,
    out: &Path,
    providers: &ProviderArgs,
) -> anyhow::Result<()> {
    let scene_dir = manifest.parent().unwrap_or(Path::new("."));
    let m = read_manifest(manifest)?;
    let assets = load_assets(&m, scene_dir)?;
    let id: ObjectId = object
        .parse()
        .or_else(|_| object.parse::<u32>().map(ObjectId))
        .map_err(|_| anyhow!("invalid object id {object:?}"))?;
    let edit = match (prompt, crop) {
        (Some(text), _) => ObjectEdit::Prompt { text: text.into(), crop: stored_crop(scene_dir, id) },
        (None, Some(p)) => ObjectEdit::Crop(read_image(p)?),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let s = session(providers, out, true)?;
    let result = s.pipeline.edit_object(&m, &assets, id, &edit);
    s.log.flush();
    let (edited, assets) = result?;
    let path = export_scene(&edited, &assets, out)?;
    println!("{}", path.display());
    Ok(())
}

fn eval(pattern: &str, exempt: Option<&[String]>, report: &Path, config: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let exemptions = match exempt {
        Some(list) => list
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_exemption(s).ok_or_else(|| config_error("--exempt", format!("{s:?} is not label:label"))))
            .collect::<anyhow::Result<_>>()?,
        None => cfg.postprocess.overlap_exemptions.clone(),
    };
    let mut named = Vec::new();
    for entry in glob::glob(pattern).map_err(|e| config_error("--manifests", e.to_string()))? {
        let path = entry?;
        let m = read_manifest(&path)?;
        named.push((path.display().to_string(), m));
    }
    if named.is_empty() {
        return Err(anyhow!("no manifests match {pattern:?}"));
    }
    let r = evaluate(&named, &exemptions);
    write_json(report, &serde_json::to_value(&r)?)?;
    println!(
        "scenes {} oor {} avg_furniture {:.2}",
        named.len(),
        r.oor.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into()),
        r.avg_furniture
    );
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn mock_pipeline() -> Pipeline {
    Pipeline::new(ProviderClient::new(Arc::new(MockProvider::new(0))), Config::default(), Arc::new(RunLog::disabled()))
}

/// Mock pipeline run on the oracle render of `scene`.
fn oracle_roundtrip(p: &Pipeline, scene: &artiscene_core::oracle::GroundTruthScene, seed: u64) -> anyhow::Result<RoundtripStats> {
    let out = p.run(&RunRequest {
        input: PipelineInput::Image(guide_image(scene)),
        scene_type: "room".into(),
        seed,
    })?;
    Ok(roundtrip_error(scene, &out.boxes()))
}

fn synth(n: usize, seed: u64, overlap: f64, out: &Path) -> anyhow::Result<()> {
    let scene = random_scene(n, seed, overlap).map_err(|e| config_error("synth", e.to_string()))?;
    let r = render_isometric(&scene)?;
    std::fs::create_dir_all(out.join("masks"))?;
    std::fs::write(out.join("scene.json"), scene.to_json() + "\n")?;
    std::fs::write(out.join("color.png"), r.image.encode_png()?)?;
    std::fs::write(out.join("depth.png"), encode_depth_png16(&r.depth)?)?;
    let mut dets = Vec::new();
    for d in &r.detections {
        std::fs::write(out.join("masks").join(format!("{:03}.png", d.index)), encode_mask_png(&d.mask)?)?;
        dets.push(json!({"index": d.index, "label": d.label, "kind": d.kind, "bbox": d.bbox2d.to_array(),
                         "visible_fraction": d.visible_fraction()}));
    }
    write_json(&out.join("detections.json"), &json!(dets))?;
    let stats = oracle_roundtrip(&mock_pipeline(), &scene, seed)?;
    write_json(&out.join("report.json"), &json!({"n": n, "seed": seed, "overlap": overlap,
        "injected": scene.injected, "roundtrip": stats}))?;
    println!("{}", out.display());
    Ok(())
}

fn roundtrip(n_scenes: usize, seed: u64, report: &Path) -> anyhow::Result<()> {
    let t = Instant::now();
    let p = mock_pipeline();
    let mut scenes = Vec::new();
    for s in seed..seed + n_scenes as u64 {
        let n = 5 + (s % 6) as usize;
        let scene = random_scene(n, s, 0.0)?;
        let stats = oracle_roundtrip(&p, &scene, s).with_context(|| format!("scene seed {s}"))?;
        scenes.push(json!({"seed": s, "n": n, "stats": stats}));
    }
    let field = |k: &str| -> Vec<f64> { scenes.iter().map(|v| v["stats"][k].as_f64().unwrap_or(f64::NAN)).collect() };
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (c, e) = (field("center_rmse"), field("extent_rmse"));
    let all_matched = scenes.iter().all(|v| v["stats"]["matched"] == v["stats"]["ground_truth"]);
    let secs = t.elapsed().as_secs_f64();
    write_json(
        report,
        &json!({"n_scenes": n_scenes, "seed": seed, "elapsed_s": secs,
                "center_rmse_mean": mean(&c), "center_rmse_max": max(&c),
                "extent_rmse_mean": mean(&e), "extent_rmse_max": max(&e),
                "all_matched": all_matched, "scenes": scenes}),
    )?;
    println!(
        "scenes {n_scenes} center_rmse_max {:.4} extent_rmse_max {:.4} all_matched {all_matched} {secs:.1}s",
        max(&c),
        max(&e)
    );
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { prompt, run } => run_scene(PipelineInput::Prompt(prompt.clone()), &prompt, &run),
        Command::FromImage { image, run } => {
            let img = read_image(&image)?;
            let label = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            run_scene(PipelineInput::Image(img), &label, &run)
        }
        Command::Edit { manifest, object, edit_prompt, crop, out, providers } => {
            edit(&manifest, &object, edit_prompt.as_deref(), crop.as_deref(), &out, &providers)
        }
        Command::Eval { manifests, exempt, report, config } => eval(&manifests, exempt.as_deref(), &report, config.as_deref()),
        Command::Synth { n, seed, overlap, out } => synth(n, seed, overlap, &out),
        Command::Roundtrip { n_scenes, seed, report } => roundtrip(n_scenes, seed, &report),
    }
}

/// Error chain joined by ": ", skipping causes already quoted by their parent.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = classify(&e);
            eprintln!("error: {}", render_chain(&e));
            ExitCode::from(code as u8)
        }
    }
}
