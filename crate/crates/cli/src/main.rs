use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use npas::channel::{generate_kernels_with, KernelConfig, LinkParams};
use npas::constellation::AmplitudeAlphabet;
use npas::matchers::EssTrellis;
use npas::metrics::render_csv;
use npas::neural::{checkpoint, Shaper};
use npas::ssfm::DeskChain;
use npas::trainer::{
    blocklength_sweep, eval::shaper_marginal, evaluate, parse_power_grid, render_sweep, train, EvalChannel,
    EvalSettings, Mode, Scheme, Selection, TrainConfig,
};
use npas::Error;

mod codec;

#[derive(Parser)]
#[command(name = "npas", version, about = "Neural probabilistic amplitude shaping toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate perturbation kernels for a link.
    Kernels {
        /// Link file (JSON or TOML) or preset name: desk, full-rate.
        #[arg(long)]
        link: String,
        #[arg(long)]
        memory: usize,
        /// Pulse width relative to the symbol period.
        #[arg(long, default_value_t = KernelConfig::default().pulse_ratio)]
        pulse_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a shaper through the perturbative channel.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint or a baseline over a launch-power grid.
    Eval(EvalArgs),
    /// Train and evaluate both modes for several block lengths.
    #[command(name = "sweep-L")]
    SweepL {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated block lengths.
        #[arg(long = "L", value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        /// Evaluation frames per point.
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distribution matcher vectors.
    #[command(subcommand)]
    Codec(codec::CodecCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Uniform,
    Ess,
    EssSelect,
    /// I.i.d. amplitudes with the marginal of `--ckpt`.
    Iid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ChannelKind {
    Ssfm,
    Am,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "baseline")]
    ckpt: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Link file (JSON or TOML) or preset name: desk, full-rate.
    #[arg(long, default_value = "desk")]
    link: String,
    /// Launch powers in dBm as a:b:step.
    #[arg(long, allow_hyphen_values = true)]
    powers: String,
    /// Blocks per launch power.
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ssfm")]
    channel: ChannelKind,
    /// QAM order for baselines.
    #[arg(long, default_value_t = 64)]
    order: usize,
    /// Block length for baselines.
    #[arg(long, default_value_t = 32)]
    block_len: usize,
    /// ESS rate in bits per 1D amplitude.
    #[arg(long, default_value_t = 1.93)]
    ess_rate: f64,
    #[arg(long, default_value_t = 64)]
    candidates: usize,
    /// Kernel memory for selection and the perturbative channel.
    #[arg(long, default_value_t = 3)]
    memory: usize,
    /// Symbols per transmitted frame, rounded up to whole blocks.
    #[arg(long, default_value_t = 4096)]
    frame_symbols: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Kernels {
            link,
            memory,
            pulse_ratio,
            out,
        } => {
            let link = load_link(&link)?;
            let cfg = KernelConfig {
                pulse_ratio,
                ..KernelConfig::default()
            };
            let kernels = generate_kernels_with(&link, memory, &cfg)?;
            let meta = serde_json::json!({ "link": link, "memory": memory, "pulse_ratio": pulse_ratio });
            kernels.save(&out, &meta)
        }
        Command::Train { config, out } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = train(&cfg)?;
            outcome.save(&out, &cfg)?;
            match outcome.diverged {
                Some(reason) => Err(Error::Diverged {
                    step: outcome.trace.len(),
                    reason,
                }),
                None => Ok(()),
            }
        }
        Command::Eval(args) => run_eval(args),
        Command::SweepL {
            config,
            lengths,
            frames,
            out,
        } => {
            let cfg = TrainConfig::load(&config)?;
            if lengths.contains(&0) {
                return Err(Error::Config("block lengths must be at least 1".into()));
            }
            let rows = blocklength_sweep(&cfg, &lengths, frames)?;
            let meta = serde_json::json!({ "config": cfg, "L": lengths, "frames": frames });
            write(&out, &render_sweep(&rows, &meta))
        }
        Command::Codec(c) => codec::run(c),
    }
}

fn load_link(spec: &str) -> Result<LinkParams, Error> {
    let path = Path::new(spec);
    if !path.exists() {
        return match spec {
            "desk" => Ok(LinkParams::desk()),
            "full-rate" => Ok(LinkParams::full_rate()),
            _ => Err(Error::Config(format!("no link file or preset named '{spec}'"))),
        };
    }
    let link = LinkParams::load(path)?;
    link.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(link)
}

fn load_shaper(path: &Path) -> Result<(Shaper, TrainConfig), Error> {
    let (params, meta) = checkpoint::load(path)?;
    let cfg = meta
        .and_then(|m| m.get("config").cloned())
        .ok_or_else(|| Error::Format(format!("{}: sidecar lacks the training config", path.display())))?;
    let cfg: TrainConfig = serde_json::from_value(cfg)?;
    Ok((Shaper::new(params), cfg))
}

fn run_eval(args: EvalArgs) -> Result<(), Error> {
    let link = load_link(&args.link)?;
    let powers = parse_power_grid(&args.powers).map_err(|e| Error::Config(e.to_string()))?;
    if args.blocks == 0 {
        return Err(Error::Config("--blocks must be at least 1".into()));
    }
    let kernels_for = |memory: usize| generate_kernels_with(&link, memory, &KernelConfig::default());

    let mut order = args.order;
    let mut selection = None;
    let scheme = match (args.baseline, &args.ckpt) {
        (None, Some(path)) => {
            let (shaper, cfg) = load_shaper(path)?;
            order = cfg.order;
            Scheme::Shaper {
                shaper,
                mode: cfg.mode,
                block_len: cfg.block_len,
            }
        }
        (Some(Baseline::Iid), Some(path)) => {
            let (shaper, cfg) = load_shaper(path)?;
            if cfg.mode != Mode::Npas {
                return Err(Error::Config("the i.i.d. baseline needs an unsigned-amplitude checkpoint".into()));
            }
            order = cfg.order;
            Scheme::Iid {
                marginal: shaper_marginal(&shaper, cfg.block_len, 20_000, args.seed),
                block_len: cfg.block_len,
            }
        }
        (Some(Baseline::Iid), None) => return Err(Error::Config("--baseline iid needs --ckpt".into())),
        (Some(Baseline::Uniform), _) => Scheme::Uniform {
            block_len: args.block_len,
        },
        (Some(b @ (Baseline::Ess | Baseline::EssSelect)), _) => {
            let c = npas::constellation::Constellation::qam(order)?;
            let trellis = EssTrellis::at_least_rate(&AmplitudeAlphabet::odd(c.alphabet().len()), args.block_len, args.ess_rate)?;
            if b == Baseline::EssSelect {
                selection = Some(Selection {
                    candidates: args.candidates,
                    kernels: kernels_for(args.memory)?,
                    gamma: link.gamma,
                });
            }
            Scheme::Ess { trellis }
        }
        (None, None) => unreachable!("clap requires --ckpt or --baseline"),
    };

    let channel = match args.channel {
        ChannelKind::Ssfm => EvalChannel::Ssfm(Box::new(DeskChain {
            link: link.clone(),
            ..DeskChain::default()
        })),
        ChannelKind::Am => EvalChannel::Am {
            kernels: if link.gamma == 0.0 {
                None
            } else {
                Some(kernels_for(args.memory)?)
            },
            link: link.clone(),
            sigma2: None,
        },
    };
    let l = scheme.block_len();
    let blocks_per_frame = args.frame_symbols.div_ceil(l).max(1);
    let settings = EvalSettings {
        order,
        powers_dbm: powers,
        frames: args.blocks.div_ceil(blocks_per_frame),
        blocks_per_frame: blocks_per_frame.min(args.blocks),
        seed: args.seed,
        jobs: args.jobs,
    };
    let ev = evaluate(&scheme, selection.as_ref(), &channel, &settings)?;
    let meta = serde_json::json!({
        "scheme": describe(&args, order, l),
        "link": link,
        "channel": format!("{:?}", args.channel),
        "settings": settings,
    });
    write(&args.out, &render_csv(&ev.rows, &meta))
}

fn describe(args: &EvalArgs, order: usize, block_len: usize) -> serde_json::Value {
    serde_json::json!({
        "ckpt": args.ckpt.as_ref().map(|p| p.display().to_string()),
        "baseline": args.baseline.map(|b| format!("{b:?}")),
        "order": order,
        "block_len": block_len,
        "ess_rate": args.ess_rate,
        "candidates": args.candidates,
        "memory": args.memory,
    })
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}
