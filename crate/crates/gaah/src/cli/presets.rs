//! Named desk-scale pipelines for each figure's data.

use std::path::PathBuf;

use super::{Experiment, PathSpec, RunConfig, TimeSpec};
use crate::error::{Error, Result};

const NAMES: [&str; 15] = [
    "fig1c", "fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig2f", "fig3a", "fig3b", "fig3c", "fig4a", "fig4b",
    "fig4c", "fig4d", "figS5",
];

pub fn preset_names() -> &'static [&'static str] {
    &NAMES
}

fn base(experiment: Experiment, name: &str) -> RunConfig {
    RunConfig { experiment, name: Some(name.to_string()), out: PathBuf::from("out"), ..RunConfig::default() }
}

fn pe(name: &str, mu: f64, v: f64) -> RunConfig {
    RunConfig { mu, v, ..base(Experiment::PeSeries, name) }
}

fn sweep(name: &str, path: &str, l: usize, n_delta: usize) -> RunConfig {
    RunConfig {
        l,
        n_delta,
        path: Some(PathSpec::Named(path.into())),
        rescale_to: (l != 10).then_some(10),
        ..base(Experiment::PathSweep, name)
    }
}

/// Configurations making up a preset, in run order.
pub fn preset(name: &str) -> Result<Vec<RunConfig>> {
    let quench = |mu: f64, v: f64, init: &str| RunConfig {
        mu,
        v,
        initial_states: Some(vec![init.to_string()]),
        time: TimeSpec { start: 0.0, stop: 500.0, step: 2.0 },
        ..base(Experiment::Quench, name)
    };
    let single = "1000000000";
    let neel = "1010101010";
    Ok(match name {
        "fig1c" => vec![RunConfig { l: 1000, n_delta: 100, ..base(Experiment::PhaseMap, name) }],
        "fig2a" => vec![quench(0.5, 0.5, single)],
        "fig2b" => vec![quench(2.0, 0.5, single)],
        "fig2c" => vec![quench(0.5, 4.0, single)],
        "fig2d" => vec![quench(0.5, 0.5, neel)],
        "fig2e" => vec![quench(2.0, 0.5, neel)],
        "fig2f" => vec![quench(0.5, 4.0, neel)],
        "fig3a" => vec![
            pe("fig3a_extended", 0.5, 1.0),
            pe("fig3a_critical", 2.0, 1.0),
            pe("fig3a_localized", 0.5, 4.0),
        ],
        "fig3b" => [1.0, 2.0, 3.0, 4.0].iter().map(|&v| pe(&format!("fig3b_V{v}"), 0.5, v)).collect(),
        "fig3c" => [0.5, 1.0, 1.5, 2.0].iter().map(|&mu| pe(&format!("fig3c_mu{mu}"), mu, 1.0)).collect(),
        "fig4a" => {
            let pts = (0..=20).flat_map(|i| (0..=20).map(move |k| (0.1 * i as f64, 0.2 * k as f64))).collect();
            vec![RunConfig { n_delta: 10, path: Some(PathSpec::Points(pts)), ..base(Experiment::PathSweep, name) }]
        }
        "fig4b" => vec![sweep("fig4b", "I", 10, 50), sweep("fig4b_L14", "I", 14, 20)],
        "fig4c" => vec![sweep("fig4c", "II", 10, 50), sweep("fig4c_L14", "II", 14, 20)],
        "fig4d" => vec![sweep("fig4d", "III", 10, 50), sweep("fig4d_L14", "III", 14, 20)],
        "figS5" => vec![RunConfig { n_delta: 50, ..base(Experiment::ScalingFit, name) }],
        other => {
            return Err(Error::UnknownPreset { name: other.to_string(), available: NAMES.join(", ") });
        }
    })
}
