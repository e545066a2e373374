use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;

use super::config::{ExperimentSpec, ValueSource};
use super::{io, synth, ExperimentError, Result};
use crate::channel::{ChannelConfig, ChannelMode, Clock, VirtualClock};
use crate::image::{
    encode_pnm, load_image, reassemble, region_coverage, tile, BlockGrid, BlockPayload,
    ImageBuffer, PartialImage, PnmFormat,
};
use crate::model::{
    feasibility_check, plan_transmission, region_full_coverage_probability,
    region_independent_coverage, values_from_heatmap, values_from_requirements, BlockIndexSet,
    ChannelParams, ModelError, Requirements, SizingParams, TransmissionPlan, ValueMap,
};
use crate::protocol::{
    InProcessLink, ProtocolError, Receiver, ReceiverConfig, Sender, SenderConfig,
};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable per-trial seed: a splitmix64 chain over the master seed, the bit
/// patterns of loss and ratio, and the trial index.
pub fn derive_seed(master: u64, loss: f64, ratio: f64, trial: u32) -> u64 {
    [loss.to_bits(), ratio.to_bits(), trial as u64]
        .into_iter()
        .fold(splitmix64(master), |acc, x| splitmix64(acc ^ x))
}

/// The loaded or synthesized image, its tiling, and the resolved value source.
#[derive(Debug, Clone)]
pub struct Workload {
    pub image: ImageBuffer,
    pub grid: BlockGrid,
    pub blocks: Arc<Vec<BlockPayload>>,
    pub packet_size: usize,
    source: Source,
    region: Option<BTreeSet<usize>>,
    top_fraction: f64,
}

#[derive(Debug, Clone)]
enum Source {
    Values(ValueMap),
    Requirements(Requirements),
}

impl Workload {
    pub fn load(spec: &ExperimentSpec) -> Result<Self> {
        let image = match &spec.image {
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|e| ExperimentError::io(path, e))?;
                let format = match path.extension().and_then(|e| e.to_str()) {
                    Some("ppm") => PnmFormat::Ppm,
                    _ => PnmFormat::Pgm,
                };
                load_image(&bytes, format)?
            }
            None => synth::synthetic_image(spec.width, spec.height, spec.channels, spec.seed)?,
        };
        let (grid, blocks) = tile(&image, spec.block_width, spec.block_height)?;
        let n = grid.block_count();
        let source = match &spec.values {
            ValueSource::Uniform => Source::Values(ValueMap::uniform(n)?),
            ValueSource::Gaussian => {
                let cols = image.width() / spec.block_width;
                let rows = image.height() / spec.block_height;
                let counts = synth::gaussian_heatmap(cols, rows, spec.sigma, 1000);
                Source::Values(values_from_heatmap(&counts, spec.heatmap_floor)?)
            }
            ValueSource::Heatmap(path) => {
                let raw = io::read_index_values(path)?;
                check_len(path, raw.len(), n)?;
                if raw.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                    return Err(ExperimentError::parse(path, "heatmap counts must be non-negative integers"));
                }
                let counts: Vec<u64> = raw.iter().map(|&v| v as u64).collect();
                Source::Values(values_from_heatmap(&counts, spec.heatmap_floor)?)
            }
            ValueSource::Requirements(path) => {
                let raw = io::read_index_values(path)?;
                check_len(path, raw.len(), n)?;
                Source::Requirements(Requirements::new(raw)?)
            }
        };
        let region = match &spec.region {
            Some(path) => {
                let region = io::read_region(path)?;
                if region.iter().any(|&id| id >= n) {
                    return Err(ExperimentError::parse(path, "region block id out of range"));
                }
                Some(region)
            }
            None => None,
        };
        Ok(Self {
            packet_size: spec.packet_size.unwrap_or(grid.block_bytes()),
            image,
            grid,
            blocks: Arc::new(blocks),
            source,
            region,
            top_fraction: spec.top_fraction,
        })
    }

    /// Plan for one (loss, ratio) cell. Requirement sources are solved with
    /// that cell's N and K and fail with [`ExperimentError::Infeasible`].
    pub fn plan(&self, loss: f64, ratio: f64) -> Result<TransmissionPlan> {
        let n = self.grid.block_count();
        let channel = ChannelParams::new(loss, self.packet_size)?;
        let sizing = SizingParams::from_ratio(self.grid.block_bytes(), n, ratio);
        let set = BlockIndexSet::new(n)?;
        match &self.source {
            Source::Values(v) => Ok(plan_transmission(channel, sizing, v.clone(), set)?),
            Source::Requirements(req) => {
                let probe = plan_transmission(channel, sizing, ValueMap::uniform(n)?, set)?;
                let (k, total) = (probe.fragments_per_block, probe.total_transmissions);
                let report = feasibility_check(req, &channel, k, total);
                if !report.feasible {
                    return Err(ExperimentError::Infeasible(report));
                }
                let values = match values_from_requirements(req, &channel, k, total) {
                    Err(ModelError::Infeasible(r)) => return Err(ExperimentError::Infeasible(r)),
                    other => other?,
                };
                Ok(plan_transmission(channel, sizing, values, set)?)
            }
        }
    }

    /// The region file if one was given, else the top blocks of the plan's values.
    pub fn region(&self, plan: &TransmissionPlan) -> BTreeSet<usize> {
        match &self.region {
            Some(r) => r.clone(),
            None => plan.value_map.top_fraction(self.top_fraction).into_iter().collect(),
        }
    }
}

fn check_len(path: &Path, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(ExperimentError::parse(path, format!("{got} rows for {want} blocks")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub loss: f64,
    pub ratio: f64,
    pub trial: u32,
    pub agreement_ok: bool,
    pub unique_blocks: usize,
    pub pixel_filling_rate: f64,
    pub region_coverage: f64,
    pub full_region: bool,
    pub packets_sent: u64,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub loss: f64,
    pub ratio: f64,
    pub trials: u32,
    pub total_transmissions: u32,
    pub fragments_per_block: u32,
    pub region_blocks: usize,
    pub agreement_failures: u32,
    pub mean_filling_rate: f64,
    pub se_filling_rate: f64,
    pub expected_filling_rate: f64,
    pub mean_region_coverage: f64,
    pub full_region_rate: f64,
    pub se_full_region_rate: f64,
    /// Exact probability that every region block arrives.
    pub predicted_full_region: f64,
    /// Product of the region's per-block arrival probabilities.
    pub predicted_full_region_independent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow {
    pub loss: f64,
    pub ratio: f64,
    pub block_id: usize,
    pub probability: f64,
    /// Arrival probability with block success `1 - L^K`.
    pub analytic: f64,
    /// Arrival probability with block success `(1 - L)^K`.
    pub analytic_all_fragments: f64,
    /// Arrival probability under per-packet loss with fragments combined
    /// across attempts.
    pub analytic_reassembly: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimReport {
    pub rows: Vec<TrialRow>,
    pub cells: Vec<CellSummary>,
    pub blocks: Vec<BlockRow>,
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl SimReport {
    pub fn write_rows<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        writeln!(out, "# stocoap sim-rows v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "loss",
            "ratio",
            "trial",
            "agreement_ok",
            "unique_blocks",
            "pixel_filling_rate",
            "region_coverage",
            "full_region",
            "packets_sent",
            "duration_us",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.loss.to_string(),
                r.ratio.to_string(),
                r.trial.to_string(),
                (r.agreement_ok as u8).to_string(),
                r.unique_blocks.to_string(),
                r.pixel_filling_rate.to_string(),
                r.region_coverage.to_string(),
                (r.full_region as u8).to_string(),
                r.packets_sent.to_string(),
                r.duration.as_micros().to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_cells<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        writeln!(out, "# stocoap sim-cells v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "loss",
            "ratio",
            "trials",
            "n",
            "k",
            "region_blocks",
            "agreement_failures",
            "mean_filling_rate",
            "se_filling_rate",
            "expected_filling_rate",
            "mean_region_coverage",
            "full_region_rate",
            "se_full_region_rate",
            "predicted_full_region",
            "predicted_full_region_independent",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.loss.to_string(),
                c.ratio.to_string(),
                c.trials.to_string(),
                c.total_transmissions.to_string(),
                c.fragments_per_block.to_string(),
                c.region_blocks.to_string(),
                c.agreement_failures.to_string(),
                c.mean_filling_rate.to_string(),
                c.se_filling_rate.to_string(),
                c.expected_filling_rate.to_string(),
                c.mean_region_coverage.to_string(),
                c.full_region_rate.to_string(),
                c.se_full_region_rate.to_string(),
                c.predicted_full_region.to_string(),
                c.predicted_full_region_independent.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_blocks<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        writeln!(out, "# stocoap sim-blocks v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "loss",
            "ratio",
            "block_id",
            "p",
            "rho",
            "rho_all_fragments",
            "rho_reassembly",
            "empirical",
        ])?;
        for b in &self.blocks {
            w.write_record([
                b.loss.to_string(),
                b.ratio.to_string(),
                b.block_id.to_string(),
                b.probability.to_string(),
                b.analytic.to_string(),
                b.analytic_all_fragments.to_string(),
                b.analytic_reassembly.to_string(),
                b.empirical.to_string(),
            ])?;
        }
        w.flush()
    }
}

struct Trial {
    row: TrialRow,
    received: Vec<bool>,
    partial: PartialImage,
}

pub(crate) struct Simulator<'a> {
    pub spec: &'a ExperimentSpec,
    pub workload: &'a Workload,
    pub drop_script: BTreeSet<u64>,
}

impl Simulator<'_> {
    fn channel(&self, loss: f64, seed: u64) -> ChannelConfig {
        ChannelConfig {
            mode: self.spec.channel,
            loss_rate: loss,
            seed,
            delay: None,
            drop_script: self.drop_script.clone(),
        }
    }

    fn trial(
        &self,
        plan: &TransmissionPlan,
        region: &BTreeSet<usize>,
        loss: f64,
        ratio: f64,
        trial: u32,
    ) -> Result<Trial> {
        let seed = derive_seed(self.spec.seed, loss, ratio, trial);
        let w = self.workload;
        let mut sender = Sender::new(
            plan.clone(),
            w.grid,
            Arc::clone(&w.blocks),
            SenderConfig {
                session_id: self.spec.session_id,
                seed,
                send_interval: Duration::from_micros(self.spec.send_interval_us as u64),
                ..SenderConfig::default()
            },
        )?;
        let receiver = Receiver::new(ReceiverConfig {
            fill: self.spec.fill,
            guard_intervals: self.spec.guard_intervals,
        });
        let forward = self.channel(loss, splitmix64(seed ^ 1)).loss_process();
        let reverse = self.channel(loss, splitmix64(seed ^ 2)).loss_process();
        let clock = VirtualClock::new();
        let mut link = InProcessLink::new(receiver, clock.clone(), forward)
            .with_reverse(reverse)
            .with_delay(Duration::from_micros(self.spec.delay_us))
            .with_reliable_control(!self.spec.lossy_agreement);

        let agreed = match sender.run_agreement(&mut link, &clock) {
            Ok(_) => true,
            Err(ProtocolError::AgreementFailed { .. }) => false,
            Err(e) => return Err(e.into()),
        };
        let (packets_sent, duration) = if agreed {
            let log = sender.run_block_phase(&mut link, &clock)?;
            (log.packets_sent, log.duration)
        } else {
            (0, Duration::ZERO)
        };
        let mut receiver = link.into_receiver();
        let (partial, received) = match receiver.deadline() {
            Some(deadline) => {
                let (partial, report) = receiver.finalize(clock.now().max(deadline))?;
                (partial, report.received)
            }
            // The request never arrived: nothing was received.
            None => (
                reassemble(&w.grid, &[], self.spec.fill)?,
                vec![false; w.grid.block_count()],
            ),
        };
        let unique = received.iter().filter(|&&r| r).count();
        let coverage = region_coverage(&partial, region)?;
        Ok(Trial {
            row: TrialRow {
                loss,
                ratio,
                trial,
                agreement_ok: agreed,
                unique_blocks: unique,
                pixel_filling_rate: unique as f64 / received.len() as f64,
                region_coverage: coverage.fraction,
                full_region: coverage.full,
                packets_sent,
                duration,
            },
            received,
            partial,
        })
    }

    pub fn run(&self, image_dir: Option<&Path>) -> Result<SimReport> {
        if self.spec.channel == ChannelMode::Udp {
            return Err(ExperimentError::Usage(
                "simulate runs in-process; choose sim-packet, sim-block or scripted".into(),
            ));
        }
        let mut report = SimReport::default();
        for &loss in &self.spec.losses {
            for &ratio in &self.spec.ratios {
                self.cell(loss, ratio, image_dir, &mut report)?;
            }
        }
        Ok(report)
    }

    fn cell(&self, loss: f64, ratio: f64, image_dir: Option<&Path>, report: &mut SimReport) -> Result<()> {
        let plan = self.workload.plan(loss, ratio)?;
        let region = self.workload.region(&plan);
        let trials: Vec<Trial> = (0..self.spec.trials)
            .into_par_iter()
            .map(|t| {
                let trial = self.trial(&plan, &region, loss, ratio, t)?;
                if let Some(dir) = image_dir {
                    let path = image_path(dir, loss, ratio, t, trial.partial.image().format());
                    std::fs::write(&path, encode_pnm(trial.partial.image()))
                        .map_err(|e| ExperimentError::io(path, e))?;
                }
                Ok(trial)
            })
            .collect::<Result<_>>()?;

        let n_blocks = plan.block_count();
        let mut hits = vec![0u32; n_blocks];
        for t in &trials {
            for (h, &r) in hits.iter_mut().zip(&t.received) {
                *h += r as u32;
            }
        }
        let count = trials.len() as f64;
        let all_fragments = plan.fragment_faithful_arrival_probs();
        let reassembly = plan.reassembly_arrival_probs();
        for id in 0..n_blocks {
            report.blocks.push(BlockRow {
                loss,
                ratio,
                block_id: id,
                probability: plan.probabilities()[id],
                analytic: plan.arrival_probs[id],
                analytic_all_fragments: all_fragments[id],
                analytic_reassembly: reassembly[id],
                empirical: hits[id] as f64 / count,
            });
        }

        let region_probs: Vec<f64> = region.iter().map(|&id| plan.probabilities()[id]).collect();
        let (r_blk, n) = (plan.block_success(), plan.total_transmissions);
        let (mean_fill, se_fill) = mean_se(trials.iter().map(|t| t.row.pixel_filling_rate));
        let (full_rate, full_se) =
            mean_se(trials.iter().map(|t| t.row.full_region as u8 as f64));
        report.cells.push(CellSummary {
            loss,
            ratio,
            trials: self.spec.trials,
            total_transmissions: n,
            fragments_per_block: plan.fragments_per_block,
            region_blocks: region.len(),
            agreement_failures: trials.iter().filter(|t| !t.row.agreement_ok).count() as u32,
            mean_filling_rate: mean_fill,
            se_filling_rate: se_fill,
            expected_filling_rate: plan.expected_filling_rate(),
            mean_region_coverage: mean_se(trials.iter().map(|t| t.row.region_coverage)).0,
            full_region_rate: full_rate,
            se_full_region_rate: full_se,
            predicted_full_region: region_full_coverage_probability(&region_probs, r_blk, n),
            predicted_full_region_independent: region_independent_coverage(&region_probs, r_blk, n),
        });
        report.rows.extend(trials.into_iter().map(|t| t.row));
        Ok(())
    }
}

pub(crate) fn image_path(dir: &Path, loss: f64, ratio: f64, trial: u32, format: PnmFormat) -> PathBuf {
    dir.join(format!("loss{loss}_ratio{ratio}_trial{trial:05}.{}", format.extension()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(7, 0.25, 1.0, 3);
        assert_eq!(a, derive_seed(7, 0.25, 1.0, 3));
        let others = [
            derive_seed(8, 0.25, 1.0, 3),
            derive_seed(7, 0.5, 1.0, 3),
            derive_seed(7, 0.25, 2.0, 3),
            derive_seed(7, 0.25, 1.0, 4),
            derive_seed(7, 1.0, 0.25, 3),
        ];
        assert!(others.iter().all(|&s| s != a));
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se([1.0, 0.0, 1.0, 0.0].into_iter());
        assert_eq!(m, 0.5);
        // Sample variance 1/3, divided by 4.
        assert!((se - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se([0.3].into_iter()), (0.3, 0.0));
    }

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            width: 32,
            height: 32,
            trials: 40,
            losses: vec![0.0, 0.5],
            ratios: vec![0.5, 2.0],
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn lossless_large_budget_fills_image() {
        let spec = ExperimentSpec {
            ratios: vec![20.0],
            trials: 20,
            ..small_spec()
        };
        let w = Workload::load(&spec).unwrap();
        let sim = Simulator {
            spec: &spec,
            workload: &w,
            drop_script: BTreeSet::new(),
        };
        let report = sim.run(None).unwrap();
        let lossless = &report.cells[0];
        assert!(lossless.mean_filling_rate > 0.99);
        assert!((lossless.expected_filling_rate - 1.0).abs() < 0.01);
    }

    #[test]
    fn report_shape() {
        let spec = small_spec();
        let w = Workload::load(&spec).unwrap();
        let sim = Simulator {
            spec: &spec,
            workload: &w,
            drop_script: BTreeSet::new(),
        };
        let report = sim.run(None).unwrap();
        assert_eq!(report.rows.len(), 4 * 40);
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.blocks.len(), 4 * 16);
        let keys: Vec<(f64, f64, u32)> = report.rows.iter().map(|r| (r.loss, r.ratio, r.trial)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
        assert!(report.blocks.iter().all(|b| (0.0..=1.0).contains(&b.empirical)));
        assert!(report.rows.iter().all(|r| r.agreement_ok));
    }
}
