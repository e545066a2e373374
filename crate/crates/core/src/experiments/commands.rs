use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use super::config::ExperimentSpec;
use super::sim::{Simulator, Workload};
use super::{io, ExperimentError, Result, SimReport};
use crate::channel::{ChannelConfig, ChannelMode, Clock, Lossy, SystemClock, Transport, UdpTransport};
use crate::image::{encode_pnm, load_image, tile, BlockGrid, PartialImage, PnmFormat};
use crate::model::{
    feasibility_check, region_full_coverage_probability, FeasibilityReport, Requirements,
    TransmissionPlan,
};
use crate::protocol::{
    serve, AgreementOutcome, ReceptionReport, Receiver, ReceiverConfig, SendLog, Sender,
    SenderConfig,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ExperimentError::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = create(path)?;
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| ExperimentError::io(path, e))
}

fn single_cell(spec: &ExperimentSpec, command: &str) -> Result<(f64, f64)> {
    match (spec.losses.as_slice(), spec.ratios.as_slice()) {
        ([loss], [ratio]) => Ok((*loss, *ratio)),
        _ => Err(ExperimentError::Usage(format!(
            "{command} takes a single loss and a single ratio"
        ))),
    }
}

fn drop_script(spec: &ExperimentSpec) -> Result<BTreeSet<u64>> {
    match &spec.drop_script {
        Some(path) => io::read_drop_script(path),
        None => Ok(BTreeSet::new()),
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub plan: TransmissionPlan,
    pub region: BTreeSet<usize>,
    pub feasibility: Option<FeasibilityReport>,
    pub summary: String,
}

fn summarize(w: &Workload, plan: &TransmissionPlan, region: &BTreeSet<usize>) -> String {
    let g = &w.grid;
    let region_probs: Vec<f64> = region.iter().map(|&i| plan.probabilities()[i]).collect();
    let full = region_full_coverage_probability(&region_probs, plan.block_success(), plan.total_transmissions);
    let all_fragments = plan.fragment_faithful_arrival_probs();
    let reassembly = plan.reassembly_arrival_probs();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let entries: [(&str, String); 17] = [
        ("width", g.width.to_string()),
        ("height", g.height.to_string()),
        ("channels", g.channels.to_string()),
        ("block_width", g.block_width.to_string()),
        ("block_height", g.block_height.to_string()),
        ("blocks", g.block_count().to_string()),
        ("block_size", g.block_bytes().to_string()),
        ("packet_size", plan.channel.packet_size().to_string()),
        ("fragments", plan.fragments_per_block.to_string()),
        ("ratio", plan.sizing.ratio().to_string()),
        ("transmissions", plan.total_transmissions.to_string()),
        ("loss", plan.channel.loss_rate().to_string()),
        ("block_success", plan.block_success().to_string()),
        ("expected_filling_rate", plan.expected_filling_rate().to_string()),
        ("expected_filling_rate_all_fragments", mean(&all_fragments).to_string()),
        ("expected_filling_rate_reassembly", mean(&reassembly).to_string()),
        ("region_blocks", region.len().to_string()),
    ];
    let mut s = String::from("# stocoap plan v1\n");
    for (k, v) in entries {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "region_full_coverage = {full}");
    s
}

/// Builds the plan for the spec's single (loss, ratio) and writes
/// `plan.txt` and `plan_blocks.csv` to the output directory.
pub fn cmd_plan(spec: &ExperimentSpec) -> Result<PlanOutput> {
    let (loss, ratio) = single_cell(spec, "plan")?;
    let w = Workload::load(spec)?;
    let summary_path = spec.out_dir.join("plan.txt");
    let plan = match w.plan(loss, ratio) {
        Err(ExperimentError::Infeasible(report)) => {
            write_with(&summary_path, |out| write_feasibility(out, &report))?;
            return Err(ExperimentError::Infeasible(report));
        }
        other => other?,
    };
    let region = w.region(&plan);
    let feasibility = requirements(spec)?.map(|req| {
        feasibility_check(&req, &plan.channel, plan.fragments_per_block, plan.total_transmissions)
    });
    let mut summary = summarize(&w, &plan, &region);
    if let Some(r) = &feasibility {
        let mut buf = Vec::new();
        let _ = write_feasibility(&mut buf, r);
        summary.push_str(&String::from_utf8_lossy(&buf));
    }
    write_with(&summary_path, |out| out.write_all(summary.as_bytes()))?;
    let all_fragments = plan.fragment_faithful_arrival_probs();
    let reassembly = plan.reassembly_arrival_probs();
    write_with(&spec.out_dir.join("plan_blocks.csv"), |out| {
        writeln!(out, "# stocoap plan-blocks v1")?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(["block_id", "value", "p", "expected_count", "rho", "rho_all_fragments", "rho_reassembly"])?;
        for id in 0..plan.block_count() {
            csv.write_record([
                id.to_string(),
                plan.value_map.values()[id].to_string(),
                plan.probabilities()[id].to_string(),
                plan.expected_counts[id].to_string(),
                plan.arrival_probs[id].to_string(),
                all_fragments[id].to_string(),
                reassembly[id].to_string(),
            ])?;
        }
        csv.flush()
    })?;
    Ok(PlanOutput {
        plan,
        region,
        feasibility,
        summary,
    })
}

fn write_feasibility<W: Write>(out: &mut W, r: &FeasibilityReport) -> std::io::Result<()> {
    writeln!(out, "feasible = {}", r.feasible)?;
    writeln!(out, "feasibility_lhs = {}", r.lhs)?;
    writeln!(out, "feasibility_rhs = {}", r.rhs)?;
    writeln!(out, "feasibility_slack = {}", r.slack)
}

fn requirements(spec: &ExperimentSpec) -> Result<Option<Requirements>> {
    match &spec.values {
        super::ValueSource::Requirements(path) => Ok(Some(Requirements::new(io::read_index_values(path)?)?)),
        _ => Ok(None),
    }
}

/// Agreement followed by the block phase.
pub fn send_session<T, C>(
    sender: &mut Sender,
    transport: &mut T,
    clock: &C,
) -> Result<(AgreementOutcome, SendLog)>
where
    T: Transport + ?Sized,
    C: Clock + ?Sized,
{
    let outcome = sender.run_agreement(transport, clock)?;
    let log = sender.run_block_phase(transport, clock)?;
    Ok((outcome, log))
}

/// Serves one session and returns the finalized image and report.
pub fn receive_session<T, C>(
    config: ReceiverConfig,
    transport: &mut T,
    clock: &C,
    agreement_wait: Duration,
) -> Result<(PartialImage, ReceptionReport)>
where
    T: Transport + ?Sized,
    C: Clock + ?Sized,
{
    let mut receiver = Receiver::new(config);
    Ok(serve(&mut receiver, transport, clock, agreement_wait)?)
}

#[derive(Debug, Clone)]
pub struct SendSummary {
    pub plan: TransmissionPlan,
    pub agreement: AgreementOutcome,
    pub log: SendLog,
}

/// Sends the spec's image to `peer` over UDP and writes `send_log.csv`.
/// Emulated loss from the spec's channel settings applies to outgoing datagrams.
pub fn cmd_send(spec: &ExperimentSpec, peer: &str, bind: &str) -> Result<SendSummary> {
    let (loss, ratio) = single_cell(spec, "send")?;
    let w = Workload::load(spec)?;
    let plan = w.plan(loss, ratio)?;
    let mut sender = Sender::new(
        plan.clone(),
        w.grid,
        w.blocks.clone(),
        SenderConfig {
            session_id: spec.session_id,
            seed: spec.seed,
            send_interval: Duration::from_micros(spec.send_interval_us as u64),
            ..SenderConfig::default()
        },
    )?;
    let clock = SystemClock::new();
    let udp = UdpTransport::bind(bind, clock)?.connect(peer)?;
    let mode = match spec.channel {
        ChannelMode::Scripted => ChannelMode::Scripted,
        ChannelMode::SimBlock => ChannelMode::SimBlock,
        _ => ChannelMode::Udp,
    };
    let channel = ChannelConfig {
        mode,
        loss_rate: loss,
        seed: spec.seed,
        delay: None,
        drop_script: drop_script(spec)?,
    };
    let mut transport = Lossy::new(udp, channel.loss_process());
    let (agreement, log) = send_session(&mut sender, &mut transport, &clock)?;
    write_with(&spec.out_dir.join("send_log.csv"), |out| log.write_csv(out))?;
    Ok(SendSummary {
        plan,
        agreement,
        log,
    })
}

/// Receives one session on `listen` and writes `received.pgm|ppm` and
/// `reception.csv`.
pub fn cmd_recv(spec: &ExperimentSpec, listen: &str, agreement_wait: Duration) -> Result<ReceptionReport> {
    let clock = SystemClock::new();
    let mut udp = UdpTransport::bind(listen, clock)?;
    let config = ReceiverConfig {
        fill: spec.fill,
        guard_intervals: spec.guard_intervals,
    };
    let (partial, report) = receive_session(config, &mut udp, &clock, agreement_wait)?;
    let image = partial.image();
    let name = format!("received.{}", image.format().extension());
    write_with(&spec.out_dir.join(name), |out| out.write_all(&encode_pnm(image)))?;
    write_with(&spec.out_dir.join("reception.csv"), |out| report.write_csv(out))?;
    Ok(report)
}

/// Runs the sweep in-process and writes `sim_rows.csv`, `sim_cells.csv` and
/// `sim_blocks.csv`. With `save_images`, every partial image goes to
/// `images/` next to `original.pgm|ppm` and `region.csv`.
pub fn cmd_simulate(spec: &ExperimentSpec) -> Result<SimReport> {
    let workload = Workload::load(spec)?;
    let sim = Simulator {
        spec,
        workload: &workload,
        drop_script: drop_script(spec)?,
    };
    let image_dir = spec.out_dir.join("images");
    if spec.save_images {
        std::fs::create_dir_all(&image_dir).map_err(|e| ExperimentError::io(&image_dir, e))?;
        let original = spec
            .out_dir
            .join(format!("original.{}", workload.image.format().extension()));
        write_with(&original, |out| out.write_all(&encode_pnm(&workload.image)))?;
        let plan = workload.plan(spec.losses[0], spec.ratios[0])?;
        let region = workload.region(&plan);
        let path = spec.out_dir.join("region.csv");
        io::write_region(create(&path)?, &region)?;
    }
    let report = sim.run(spec.save_images.then_some(image_dir.as_path()))?;
    write_with(&spec.out_dir.join("sim_rows.csv"), |out| report.write_rows(out))?;
    write_with(&spec.out_dir.join("sim_cells.csv"), |out| report.write_cells(out))?;
    write_with(&spec.out_dir.join("sim_blocks.csv"), |out| report.write_blocks(out))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub file: String,
    pub unique_blocks: usize,
    /// Blocks whose original content is all fill bytes, so presence cannot be
    /// told from the pixels. Counted as missing.
    pub ambiguous_blocks: usize,
    pub pixel_filling_rate: f64,
    pub region_coverage: f64,
    pub full_region: bool,
}

fn format_of(path: &Path) -> Option<PnmFormat> {
    match path.extension()?.to_str()? {
        "pgm" => Some(PnmFormat::Pgm),
        "ppm" => Some(PnmFormat::Ppm),
        _ => None,
    }
}

/// Recomputes filling rate and region coverage from saved partial images by
/// comparing every block with the original (the spec's `image`), and writes
/// `metrics.csv` to the output directory.
pub fn cmd_metrics(spec: &ExperimentSpec, images: &Path) -> Result<Vec<MetricsRow>> {
    if spec.image.is_none() {
        return Err(ExperimentError::Usage("metrics needs the original image".into()));
    }
    let w = Workload::load(spec)?;
    let (loss, ratio) = (spec.losses[0], spec.ratios[0]);
    let region = w.region(&w.plan(loss, ratio)?);
    let original = w.blocks.as_slice();
    let ambiguous: Vec<bool> = original
        .iter()
        .map(|b| b.bytes.iter().all(|&p| p == spec.fill))
        .collect();

    let mut files: Vec<_> = std::fs::read_dir(images)
        .map_err(|e| ExperimentError::io(images, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && format_of(p).is_some())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ExperimentError::parse(images, "no PGM/PPM images to audit"));
    }

    let mut rows = Vec::with_capacity(files.len());
    for path in files {
        let bytes = std::fs::read(&path).map_err(|e| ExperimentError::io(&path, e))?;
        let image = load_image(&bytes, format_of(&path).expect("filtered"))
            .map_err(|e| ExperimentError::parse(&path, e.to_string()))?;
        let grid = BlockGrid::for_image(&image, w.grid.block_width, w.grid.block_height)?;
        if grid != w.grid {
            return Err(ExperimentError::parse(&path, "geometry differs from the original"));
        }
        let (_, blocks) = tile(&image, grid.block_width, grid.block_height)?;
        let received: Vec<bool> = blocks
            .iter()
            .zip(original)
            .zip(&ambiguous)
            .map(|((got, want), &amb)| !amb && got.bytes == want.bytes)
            .collect();
        let unique = received.iter().filter(|&&r| r).count();
        let in_region = region.iter().filter(|&&id| received[id]).count();
        rows.push(MetricsRow {
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            unique_blocks: unique,
            ambiguous_blocks: ambiguous.iter().filter(|&&a| a).count(),
            pixel_filling_rate: unique as f64 / received.len() as f64,
            region_coverage: if region.is_empty() {
                1.0
            } else {
                in_region as f64 / region.len() as f64
            },
            full_region: in_region == region.len(),
        });
    }
    write_with(&spec.out_dir.join("metrics.csv"), |out| {
        writeln!(out, "# stocoap metrics v1")?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record([
            "file",
            "unique_blocks",
            "ambiguous_blocks",
            "pixel_filling_rate",
            "region_coverage",
            "full_region",
        ])?;
        for r in &rows {
            csv.write_record([
                r.file.clone(),
                r.unique_blocks.to_string(),
                r.ambiguous_blocks.to_string(),
                r.pixel_filling_rate.to_string(),
                r.region_coverage.to_string(),
                (r.full_region as u8).to_string(),
            ])?;
        }
        csv.flush()
    })?;
    Ok(rows)
}
