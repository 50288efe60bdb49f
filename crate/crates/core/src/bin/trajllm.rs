use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trajllm::output::{render_svg, PredictionRecord};
use trajllm::scene::{generate_dataset, load_scenes, save_scenes, Template};
use trajllm::training::{evaluate, evaluate_model, history_csv, load_checkpoint, save_checkpoint, train, TrainConfig};

#[derive(Parser)]
#[command(name = "trajllm", version, about = "Multi-modal trajectory prediction on vectorized scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic scenes to a scene file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num: usize,
        /// Template name, or a comma-separated list cycled over.
        #[arg(long, default_value = "straight,left_turn,right_turn,intersection", value_parser = parse_templates)]
        template: TemplateList,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model; writes checkpoint, loss history and metrics to OUT_DIR.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the metrics report of a checkpoint on a scene file.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Print one prediction record per scene, optionally plotting each.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Clone)]
struct TemplateList(Vec<Template>);

fn parse_templates(s: &str) -> Result<TemplateList, String> {
    s.split(',').map(|t| t.trim().parse::<Template>().map_err(|e| e.to_string())).collect::<Result<_, _>>().map(TemplateList)
}

enum Failure {
    /// Bad invocation: exit code 2.
    Usage(String),
    Runtime(trajllm::Error),
}

impl From<trajllm::Error> for Failure {
    fn from(e: trajllm::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(trajllm::Error::Io { path: path.to_path_buf(), source: e }))
}

fn stdout_line(line: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| Failure::Runtime(trajllm::Error::Io { path: "<stdout>".into(), source: e }))
}

fn synth(out: &Path, num: usize, templates: &[Template], noise: f64, seed: u64) -> Result<(), Failure> {
    if num == 0 {
        return Err(Failure::Usage("--num must be at least 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Failure::Usage(format!("--noise must be finite and >= 0, got {noise}")));
    }
    let scenes = generate_dataset(templates, num, noise, seed)?;
    save_scenes(&scenes, out)?;
    println!("wrote {num} scenes to {}", out.display());
    Ok(())
}

fn run_train(config: &Path, train_path: &Path, val_path: Option<&Path>, out_dir: &Path) -> Result<(), Failure> {
    if !config.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", config.display())));
    }
    let cfg = TrainConfig::load(config).map_err(|e| Failure::Usage(e.to_string()))?;
    let train_scenes = load_scenes(train_path)?;
    let val_scenes = match val_path {
        Some(p) => load_scenes(p)?,
        None => Vec::new(),
    };
    fs::create_dir_all(out_dir).map_err(|e| Failure::Runtime(trajllm::Error::Io { path: out_dir.to_path_buf(), source: e }))?;
    let outcome = train(&cfg, &train_scenes, &val_scenes)?;
    let ckpt = out_dir.join("checkpoint.safetensors");
    save_checkpoint(&outcome.best, &ckpt)?;
    write_file(&out_dir.join("history.csv"), &history_csv(&outcome.history))?;
    let report = match outcome.best_val {
        Some(r) => r,
        None => evaluate_model(&outcome.best, &train_scenes)?,
    };
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize");
    write_file(&out_dir.join("metrics.json"), &format!("{json}\n"))?;
    println!("trained {} steps; checkpoint {}", outcome.steps, ckpt.display());
    println!("{json}");
    Ok(())
}

fn run_eval(ckpt: &Path, data: &Path, k: usize) -> Result<(), Failure> {
    let checkpoint = load_checkpoint(ckpt)?;
    let model_k = checkpoint.model.k_modes();
    if k != model_k {
        return Err(Failure::Usage(format!("--k {k} does not match the checkpoint's K={model_k}")));
    }
    let scenes = load_scenes(data)?;
    let report = evaluate(&checkpoint, &scenes, k)?;
    stdout_line(&serde_json::to_string_pretty(&report).expect("metrics serialize"))
}

fn plot_path(base: &Path, scene_id: &str, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map_or_else(|| "plot".into(), |s| s.to_string_lossy().into_owned());
    base.with_file_name(format!("{stem}-{scene_id}.svg"))
}

fn run_predict(ckpt: &Path, scene: &Path, k: usize, plot: Option<&Path>) -> Result<(), Failure> {
    let checkpoint = load_checkpoint(ckpt)?;
    let model_k = checkpoint.model.k_modes();
    if k != model_k {
        return Err(Failure::Usage(format!("--k {k} does not match the checkpoint's K={model_k}")));
    }
    let scenes = load_scenes(scene)?;
    for s in &scenes {
        let mixture = checkpoint.predict(s)?;
        stdout_line(&PredictionRecord::new(&s.scene_id, &mixture).to_line())?;
        if let Some(base) = plot {
            write_file(&plot_path(base, &s.scene_id, scenes.len() > 1), &render_svg(s, &mixture))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { out, num, template, noise, seed } => synth(out, *num, &template.0, *noise, *seed),
        Command::Train { config, train, val, out_dir } => run_train(config, train, val.as_deref(), out_dir),
        Command::Eval { ckpt, data, k } => run_eval(ckpt, data, *k),
        Command::Predict { ckpt, scene, k, plot } => run_predict(ckpt, scene, *k, plot.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
