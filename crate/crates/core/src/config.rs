//! Plain `key=value` configuration for the simulator, the contact
//! ensemble, the metric thresholds and the episode loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{FoldError, Result};
use crate::executor::EpisodeConfig;
use crate::metrics::parse_kv;

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| FoldError::BadParam { field: "config", reason: format!("bad value `{raw}` for `{key}`") })
}

/// Applies every entry of `map` to `config`. Unknown keys are rejected so
/// typos do not pass silently. The result is validated.
pub fn apply(config: &mut EpisodeConfig, map: &BTreeMap<String, String>) -> Result<()> {
    for (key, raw) in map {
        let k = key.as_str();
        match k {
            "sim.dt" => config.sim.dt = value(k, raw)?,
            "sim.substeps" => config.sim.substeps = value(k, raw)?,
            "sim.iterations" => config.sim.iterations = value(k, raw)?,
            "sim.stretch_compliance" => config.sim.stretch_compliance = value(k, raw)?,
            "sim.bend_compliance" => config.sim.bend_compliance = value(k, raw)?,
            "sim.damping" => config.sim.damping = value(k, raw)?,
            "sim.friction" => config.sim.friction = value(k, raw)?,
            "sim.thickness" => config.sim.thickness = value(k, raw)?,
            "sim.areal_density" => config.sim.areal_density = value(k, raw)?,
            "ensemble.seeds" => config.ensemble.seeds = value(k, raw)?,
            "ensemble.epsilon" => config.ensemble.epsilon = value(k, raw)?,
            "ensemble.beta" => config.ensemble.beta = value(k, raw)?,
            "thresholds.min_rectangularity" => config.thresholds.min_rectangularity = value(k, raw)?,
            "thresholds.max_area_ratio" => config.thresholds.max_area_ratio = value(k, raw)?,
            "episode.mode" => config.mode = raw.parse()?,
            "episode.backend" => config.backend = raw.parse()?,
            "episode.cadence" => config.cadence = value(k, raw)?,
            "episode.delta" => config.delta = value(k, raw)?,
            "episode.budget" => config.budget = value(k, raw)?,
            "episode.horizon" => config.horizon = value(k, raw)?,
            "episode.n_points" => config.n_points = value(k, raw)?,
            "episode.frame_period" => config.frame_period = value(k, raw)?,
            "episode.max_step" => config.max_step = value(k, raw)?,
            "episode.arc_alpha" => config.arc_alpha = value(k, raw)?,
            "episode.settle_frames" => config.settle_frames = value(k, raw)?,
            "episode.release_frames" => config.release_frames = value(k, raw)?,
            _ => return Err(FoldError::BadParam { field: "config", reason: format!("unknown key `{key}`") }),
        }
    }
    config.validate()
}

pub fn parse(text: &str) -> Result<EpisodeConfig> {
    let mut config = EpisodeConfig::default();
    apply(&mut config, &parse_kv(text)?)?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<EpisodeConfig> {
    parse(&std::fs::read_to_string(path)?)
}

/// Every key `apply` understands, with the current values. Floats use the
/// shortest round-trip representation, so `parse(&snapshot(c)) == c`.
pub fn snapshot(config: &EpisodeConfig) -> String {
    let s = &config.sim;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    put("sim.dt", s.dt.to_string());
    put("sim.substeps", s.substeps.to_string());
    put("sim.iterations", s.iterations.to_string());
    put("sim.stretch_compliance", s.stretch_compliance.to_string());
    put("sim.bend_compliance", s.bend_compliance.to_string());
    put("sim.damping", s.damping.to_string());
    put("sim.friction", s.friction.to_string());
    put("sim.thickness", s.thickness.to_string());
    put("sim.areal_density", s.areal_density.to_string());
    put("ensemble.seeds", config.ensemble.seeds.to_string());
    put("ensemble.epsilon", config.ensemble.epsilon.to_string());
    put("ensemble.beta", config.ensemble.beta.to_string());
    put("thresholds.min_rectangularity", config.thresholds.min_rectangularity.to_string());
    put("thresholds.max_area_ratio", config.thresholds.max_area_ratio.to_string());
    put("episode.mode", config.mode.to_string());
    put("episode.backend", config.backend.to_string());
    put("episode.cadence", config.cadence.to_string());
    put("episode.delta", config.delta.to_string());
    put("episode.budget", config.budget.to_string());
    put("episode.horizon", config.horizon.to_string());
    put("episode.n_points", config.n_points.to_string());
    put("episode.frame_period", config.frame_period.to_string());
    put("episode.max_step", config.max_step.to_string());
    put("episode.arc_alpha", config.arc_alpha.to_string());
    put("episode.settle_frames", config.settle_frames.to_string());
    put("episode.release_frames", config.release_frames.to_string());
    out
}
