use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use stocoap::experiments::{
    cmd_metrics, cmd_plan, cmd_recv, cmd_send, cmd_simulate, ExperimentError, ExperimentSpec,
};

/// Value-weighted stochastic image transmission.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a transmission plan and check feasibility.
    Plan(SpecArgs),
    /// Send an image over UDP.
    Send {
        #[arg(long)]
        peer: String,
        #[arg(long, default_value = "0.0.0.0:0")]
        bind: String,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Receive one image over UDP.
    Recv {
        #[arg(long)]
        listen: String,
        /// Seconds to wait for an agreement request.
        #[arg(long, default_value_t = 60.0)]
        wait: f64,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Run a loss x ratio sweep in-process.
    Simulate(SpecArgs),
    /// Audit saved partial images against the original.
    Metrics {
        #[arg(long)]
        images: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
    },
}

/// Flags override the config file; each maps to the config key of the same name.
#[derive(Args)]
struct SpecArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    height: Option<String>,
    #[arg(long)]
    channels: Option<String>,
    /// Block size as WxH.
    #[arg(long)]
    block: Option<String>,
    /// uniform, gaussian, heatmap:<csv> or requirements:<csv>.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    heatmap_floor: Option<String>,
    #[arg(long)]
    packet_size: Option<String>,
    /// udp, sim-packet, sim-block or scripted.
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    drop_script: Option<String>,
    #[arg(long)]
    delay_us: Option<String>,
    /// Comma-separated budget ratios.
    #[arg(long)]
    ratio: Option<String>,
    /// Comma-separated packet loss rates.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    send_interval_us: Option<String>,
    #[arg(long)]
    guard_intervals: Option<String>,
    #[arg(long)]
    fill: Option<String>,
    #[arg(long)]
    session_id: Option<String>,
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    top_fraction: Option<String>,
    #[arg(long)]
    lossy_agreement: bool,
    #[arg(long)]
    save_images: bool,
}

impl SpecArgs {
    fn load(self) -> Result<ExperimentSpec, ExperimentError> {
        let pairs = [
            ("image", self.image),
            ("width", self.width),
            ("height", self.height),
            ("channels", self.channels),
            ("block", self.block),
            ("values", self.values),
            ("sigma", self.sigma),
            ("heatmap_floor", self.heatmap_floor),
            ("packet_size", self.packet_size),
            ("channel", self.channel),
            ("drop_script", self.drop_script),
            ("delay_us", self.delay_us),
            ("ratios", self.ratio),
            ("losses", self.loss),
            ("trials", self.trials),
            ("seed", self.seed),
            ("out_dir", self.out),
            ("send_interval_us", self.send_interval_us),
            ("guard_intervals", self.guard_intervals),
            ("fill", self.fill),
            ("session_id", self.session_id),
            ("region", self.region),
            ("top_fraction", self.top_fraction),
            ("lossy_agreement", self.lossy_agreement.then(|| "true".into())),
            ("save_images", self.save_images.then(|| "true".into())),
        ];
        let overrides: Vec<(String, String)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
        ExperimentSpec::load(self.config.as_deref(), &overrides)
    }
}

fn run(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Plan(args) => {
            let out = cmd_plan(&args.load()?)?;
            print!("{}", out.summary);
        }
        Command::Send { peer, bind, spec } => {
            let s = cmd_send(&spec.load()?, &peer, &bind)?;
            println!(
                "agreement after {} request(s); {} transmissions, {} packets in {:?}",
                s.agreement.requests_sent,
                s.log.len(),
                s.log.packets_sent,
                s.log.duration
            );
        }
        Command::Recv { listen, wait, spec } => {
            if !(wait.is_finite() && wait >= 0.0) {
                return Err(ExperimentError::Usage("wait must be a non-negative number".into()));
            }
            let r = cmd_recv(&spec.load()?, &listen, Duration::from_secs_f64(wait))?;
            println!(
                "{} of {} blocks, pixel filling rate {:.4}",
                r.unique_blocks, r.block_count, r.pixel_filling_rate
            );
        }
        Command::Simulate(args) => {
            let report = cmd_simulate(&args.load()?)?;
            println!("loss\tratio\tN\tfilling\t±se\texpected\tfull_region\t±se\tpredicted");
            for c in &report.cells {
                println!(
                    "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                    c.loss,
                    c.ratio,
                    c.total_transmissions,
                    c.mean_filling_rate,
                    c.se_filling_rate,
                    c.expected_filling_rate,
                    c.full_region_rate,
                    c.se_full_region_rate,
                    c.predicted_full_region
                );
            }
        }
        Command::Metrics { images, spec } => {
            let rows = cmd_metrics(&spec.load()?, &images)?;
            let mean = rows.iter().map(|r| r.pixel_filling_rate).sum::<f64>() / rows.len() as f64;
            println!("{} images, mean pixel filling rate {:.4}", rows.len(), mean);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
