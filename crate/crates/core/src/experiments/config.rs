use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ExperimentError, Result};
use crate::channel::ChannelMode;

#[derive(Debug, Clone, PartialEq)]
pub enum ValueSource {
    Uniform,
    /// Synthetic 2-D Gaussian heatmap over the block grid.
    Gaussian,
    /// `block_id,value` CSV of appearance counts.
    Heatmap(PathBuf),
    /// `block_id,value` CSV of required reception probabilities.
    Requirements(PathBuf),
}

/// Everything one run of the tool needs. Keys accepted by [`ExperimentSpec::set`]
/// are the field names; lists are comma separated.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// PGM or PPM input; a seeded synthetic image is used when absent.
    pub image: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub block_width: usize,
    pub block_height: usize,
    pub values: ValueSource,
    /// Gaussian spread as a fraction of the grid's columns and rows.
    pub sigma: f64,
    pub heatmap_floor: f64,
    /// Defaults to the block size, one fragment per block.
    pub packet_size: Option<usize>,
    pub channel: ChannelMode,
    pub drop_script: Option<PathBuf>,
    pub delay_us: u64,
    pub ratios: Vec<f64>,
    pub losses: Vec<f64>,
    pub trials: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub send_interval_us: u32,
    pub guard_intervals: u32,
    pub fill: u8,
    pub session_id: u16,
    /// Region file of block ids; defaults to the top `top_fraction` blocks by value.
    pub region: Option<PathBuf>,
    pub top_fraction: f64,
    /// Send the agreement exchange through the lossy channel in simulations.
    pub lossy_agreement: bool,
    pub save_images: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            image: None,
            width: 256,
            height: 144,
            channels: 1,
            block_width: 8,
            block_height: 8,
            values: ValueSource::Uniform,
            sigma: 0.12,
            heatmap_floor: 0.01,
            packet_size: None,
            channel: ChannelMode::SimPacket,
            drop_script: None,
            delay_us: 0,
            ratios: vec![1.0],
            losses: vec![0.0],
            trials: 1000,
            seed: 0,
            out_dir: PathBuf::from("out"),
            send_interval_us: 1000,
            guard_intervals: 50,
            fill: 0,
            session_id: 1,
            region: None,
            top_fraction: 0.1,
            lossy_agreement: false,
            save_images: false,
        }
    }
}

fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Usage(msg.into())
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| usage(format!("{key}: cannot parse {value:?}")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| number(key, s))
        .collect()
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(usage(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

fn dims(key: &str, value: &str) -> Result<(usize, usize)> {
    let (w, h) = value
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("{key}: expected WxH, got {value:?}")))?;
    Ok((number(key, w)?, number(key, h)?))
}

impl ExperimentSpec {
    /// Applies one `key = value` setting. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value.trim());
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "image" => self.image = Some(path()),
            "width" => self.width = number(&key, value)?,
            "height" => self.height = number(&key, value)?,
            "channels" => self.channels = number(&key, value)?,
            "block" => (self.block_width, self.block_height) = dims(&key, value)?,
            "block_width" => self.block_width = number(&key, value)?,
            "block_height" => self.block_height = number(&key, value)?,
            "values" => {
                let v = value.trim();
                self.values = match v.split_once(':') {
                    None if v == "uniform" => ValueSource::Uniform,
                    None if v == "gaussian" => ValueSource::Gaussian,
                    Some(("heatmap", p)) => ValueSource::Heatmap(base.join(p)),
                    Some(("requirements", p)) => ValueSource::Requirements(base.join(p)),
                    _ => {
                        return Err(usage(format!(
                            "values: expected uniform, gaussian, heatmap:<csv> or requirements:<csv>, got {v:?}"
                        )))
                    }
                }
            }
            "sigma" => self.sigma = number(&key, value)?,
            "heatmap_floor" => self.heatmap_floor = number(&key, value)?,
            "packet_size" => self.packet_size = Some(number(&key, value)?),
            "channel" => {
                self.channel = value
                    .trim()
                    .parse()
                    .map_err(|e: crate::channel::ChannelError| usage(e.to_string()))?
            }
            "drop_script" => self.drop_script = Some(path()),
            "delay_us" => self.delay_us = number(&key, value)?,
            "ratio" | "ratios" => self.ratios = list(&key, value)?,
            "loss" | "losses" => self.losses = list(&key, value)?,
            "trials" => self.trials = number(&key, value)?,
            "seed" => self.seed = number(&key, value)?,
            "out_dir" | "out" => self.out_dir = path(),
            "send_interval_us" => self.send_interval_us = number(&key, value)?,
            "guard_intervals" => self.guard_intervals = number(&key, value)?,
            "fill" => self.fill = number(&key, value)?,
            "session_id" => self.session_id = number(&key, value)?,
            "region" => self.region = Some(path()),
            "top_fraction" => self.top_fraction = number(&key, value)?,
            "lossy_agreement" => self.lossy_agreement = flag(&key, value)?,
            "save_images" => self.save_images = flag(&key, value)?,
            other => return Err(usage(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value, base)?;
        }
        Ok(())
    }

    /// Defaults, then the config file, then `overrides` in order.
    pub fn load(config: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut spec = Self::default();
        if let Some(path) = config {
            let text =
                std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new(""));
            spec.apply_text(&text, base)?;
        }
        for (key, value) in overrides {
            spec.set(key, value, Path::new(""))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(usage("trials must be at least 1"));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(usage("ratios must be a non-empty list of positive numbers"));
        }
        if self.losses.is_empty() || self.losses.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(usage("losses must be a non-empty list within [0, 1]"));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(usage("top_fraction must be in (0, 1]"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(usage("sigma must be positive"));
        }
        if self.send_interval_us == 0 {
            return Err(usage("send_interval_us must be positive"));
        }
        if self.channel == ChannelMode::Scripted && self.drop_script.is_none() {
            return Err(usage("scripted channel needs drop_script"));
        }
        let files = [
            self.image.as_ref(),
            self.drop_script.as_ref(),
            self.region.as_ref(),
            match &self.values {
                ValueSource::Heatmap(p) | ValueSource::Requirements(p) => Some(p),
                _ => None,
            },
        ];
        for file in files.into_iter().flatten() {
            if !file.is_file() {
                return Err(usage(format!("{} does not exist", file.display())));
            }
        }
        Ok(())
    }
}
