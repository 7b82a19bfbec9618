//! Batch runner: JSON run configurations, experiment dispatch and presets.

mod presets;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    late_time_average, path_sweep, rescale_factor, scaling_study, NamedPath, SweepProtocol, SWEEP_DENSE_THRESHOLD,
};
use crate::basis::{state_from_string, FockState, MAX_SITES};
use crate::device::{compensate_crosstalk, load_device, map_profile, synthetic_device, DeviceConfig};
use crate::dynamics::{
    default_initial_states, quench_occupancy, quench_pe_series, time_grid, EvolveOptions, QuenchOptions, ShotNoise,
    TimeSeries,
};
use crate::error::{param, Error, Result};
use crate::model::{coupling_profile, golden_alpha, wrap_phase, ModelParams, DEFAULT_LAMBDA};
use crate::opensys::{lindblad_quench, LindbladOptions, NoiseModel, DEFAULT_T1, DEFAULT_T2};
use crate::output::{fmt_f64, write_csv, write_json};
use crate::seeding::phase_draws;
use crate::spectral::{ipr_phase_map_with, linspace, IprStatistic};

pub use presets::{preset, preset_names};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PhaseMap,
    #[default]
    Quench,
    PeSeries,
    PathSweep,
    Lindblad,
    ScalingFit,
    DeviceMap,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::PhaseMap,
        Experiment::Quench,
        Experiment::PeSeries,
        Experiment::PathSweep,
        Experiment::Lindblad,
        Experiment::ScalingFit,
        Experiment::DeviceMap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::PhaseMap => "phase-map",
            Experiment::Quench => "quench",
            Experiment::PeSeries => "pe-series",
            Experiment::PathSweep => "path-sweep",
            Experiment::Lindblad => "lindblad",
            Experiment::ScalingFit => "scaling-fit",
            Experiment::DeviceMap => "device-map",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| param("experiment", format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self { start: 0.0, stop: 500.0, step: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub mu: Axis,
    #[serde(rename = "V")]
    pub v: Axis,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { mu: Axis { start: 0.0, stop: 2.0, n: 41 }, v: Axis { start: 0.0, stop: 4.0, n: 81 } }
    }
}

impl GridSpec {
    /// (μ, V) pairs, μ-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let vs = linspace(self.v.start, self.v.stop, self.v.n);
        linspace(self.mu.start, self.mu.stop, self.mu.n)
            .into_iter()
            .flat_map(|mu| vs.iter().map(move |&v| (mu, v)))
            .collect()
    }
}

/// A named path (`"I"`, `"II"`, `"III"`) or explicit (μ, V) points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSpec {
    Named(String),
    Points(Vec<(f64, f64)>),
}

/// Device constants from a JSON file or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceSource {
    File(PathBuf),
    Inline(DeviceConfig),
}

fn default_noise() -> NoiseModel {
    NoiseModel { t1: vec![DEFAULT_T1], t2: vec![DEFAULT_T2] }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Output file stem; defaults to the experiment id.
    pub name: Option<String>,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub lambda: f64,
    pub mu: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub alpha: f64,
    /// Fock states as strings, leftmost character = site 1.
    pub initial_states: Option<Vec<String>>,
    /// Explicit phase offsets; otherwise `n_delta` seeded draws.
    pub deltas: Option<Vec<f64>>,
    pub n_delta: usize,
    pub seed: u64,
    pub time: TimeSpec,
    pub window: (f64, f64),
    pub q: Vec<f64>,
    pub grid: GridSpec,
    pub statistic: IprStatistic,
    pub path: Option<PathSpec>,
    /// Parameter points of a scaling fit.
    pub points: Option<Vec<(f64, f64)>>,
    pub sizes: Vec<usize>,
    /// Rescale sweep entropies to this chain length.
    pub rescale_to: Option<usize>,
    pub noise: NoiseModel,
    pub lindblad: LindbladOptions,
    /// Propagation settings; sweeps and fits default to a lower dense threshold.
    pub evolve: Option<EvolveOptions>,
    pub shot_noise: Option<ShotNoise>,
    pub device: Option<DeviceSource>,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::default(),
            name: None,
            l: 10,
            m: None,
            lambda: DEFAULT_LAMBDA,
            mu: 0.5,
            v: 1.0,
            alpha: golden_alpha(),
            initial_states: None,
            deltas: None,
            n_delta: 50,
            seed: 0,
            time: TimeSpec::default(),
            window: (350.0, 450.0),
            q: vec![2.0],
            grid: GridSpec::default(),
            statistic: IprStatistic::default(),
            path: None,
            points: None,
            sizes: vec![8, 10, 12, 14],
            rescale_to: None,
            noise: default_noise(),
            lindblad: LindbladOptions::default(),
            evolve: None,
            shot_noise: None,
            device: None,
            workers: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Files written by one run.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| param("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Param { msg, .. } => param(path.display().to_string(), msg),
            e => e,
        })
    }

    pub fn stem(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.id().to_string())
    }

    pub fn model(&self) -> ModelParams {
        ModelParams { l: self.l, lambda: self.lambda, mu: self.mu, v: self.v, alpha: self.alpha, delta: 0.0 }
    }

    /// Lowercase hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn needs_sector(&self) -> bool {
        matches!(self.experiment, Experiment::Quench | Experiment::PeSeries | Experiment::Lindblad)
    }

    /// Checks every field the selected experiment reads.
    pub fn validate(&self) -> Result<()> {
        let e = self.experiment;
        if self.l < 1 {
            return Err(param("L", "must be at least 1"));
        }
        let basis_limit = match e {
            Experiment::PhaseMap | Experiment::DeviceMap => usize::MAX,
            Experiment::Lindblad => 12,
            _ => MAX_SITES,
        };
        if self.l > basis_limit {
            return Err(param("L", format!("{} supports L <= {basis_limit}, got {}", e.id(), self.l)));
        }
        if let Some(m) = self.m {
            if m > self.l {
                return Err(param("M", format!("must not exceed L (M = {m}, L = {})", self.l)));
            }
        }
        self.model().validate()?;
        if self.deltas.is_none() && self.n_delta == 0 {
            return Err(param("n_delta", "must be at least 1"));
        }
        if let Some(ds) = &self.deltas {
            if ds.is_empty() {
                return Err(param("deltas", "must not be empty"));
            }
            if let Some(i) = ds.iter().position(|d| !d.is_finite()) {
                return Err(param(format!("deltas[{i}]"), "must be finite"));
            }
        }
        for (i, &q) in self.q.iter().enumerate() {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(param(format!("q[{i}]"), format!("order must be at least 1, got {q}")));
            }
        }
        if self.q.is_empty() {
            return Err(param("q", "at least one order is required"));
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(param("workers", "must be at least 1"));
            }
        }
        if matches!(e, Experiment::Quench | Experiment::PeSeries | Experiment::Lindblad) {
            time_grid(self.time.start, self.time.stop, self.time.step)
                .map_err(|_| param("time", "need 0 <= start <= stop and step > 0"))?;
        }
        if matches!(e, Experiment::PathSweep | Experiment::ScalingFit) {
            let (a, b) = self.window;
            if !(a >= 0.0 && b >= a && b.is_finite()) {
                return Err(param("window", format!("invalid window ({a}, {b})")));
            }
            if !(self.time.step > 0.0) {
                return Err(param("time.step", "must be positive"));
            }
        }
        if e == Experiment::PhaseMap {
            if self.l < 2 {
                return Err(param("L", "phase map needs L >= 2"));
            }
            for (name, ax) in [("grid.mu", &self.grid.mu), ("grid.V", &self.grid.v)] {
                if ax.n == 0 {
                    return Err(param(format!("{name}.n"), "must be at least 1"));
                }
                if !(ax.start >= 0.0 && ax.stop >= ax.start && ax.stop.is_finite()) {
                    return Err(param(name, "need 0 <= start <= stop"));
                }
            }
        }
        if e == Experiment::PathSweep {
            self.path_points()?;
            if let Some(l) = self.rescale_to {
                rescale_factor(self.l, l).map_err(|e| param("rescale_to", e.to_string()))?;
            }
        }
        if e == Experiment::ScalingFit {
            if self.sizes.len() < 3 {
                return Err(param("sizes", "a fit needs at least three sizes"));
            }
            if let Some(i) = self.sizes.iter().position(|&l| l < 2 || l % 2 == 1 || l > MAX_SITES) {
                return Err(param(format!("sizes[{i}]"), format!("must be even and in 2..={MAX_SITES}")));
            }
        }
        if e == Experiment::Lindblad {
            self.noise.for_sites(self.l)?;
            if !(self.lindblad.tol > 0.0) {
                return Err(param("lindblad.tol", "must be positive"));
            }
        }
        if self.needs_sector() || (e == Experiment::PathSweep && self.initial_states.is_some()) {
            self.initial()?;
        }
        if let Some(s) = &self.shot_noise {
            if s.shots == 0 {
                return Err(param("shot_noise.shots", "must be at least 1"));
            }
        }
        Ok(())
    }

    fn initial(&self) -> Result<Vec<FockState>> {
        let states = match &self.initial_states {
            Some(list) => {
                if list.is_empty() {
                    return Err(param("initial_states", "must not be empty"));
                }
                let mut out = Vec::with_capacity(list.len());
                for (i, s) in list.iter().enumerate() {
                    let field = format!("initial_states[{i}]");
                    let st = state_from_string(s).map_err(|e| param(field.as_str(), e.to_string()))?;
                    if st.len != self.l {
                        return Err(param(field, format!("has {} sites, expected L = {}", st.len, self.l)));
                    }
                    out.push(st);
                }
                let m0 = out[0].popcount();
                if let Some(i) = out.iter().position(|s| s.popcount() != m0) {
                    return Err(param(format!("initial_states[{i}]"), "all initial states must have the same excitation number"));
                }
                out
            }
            None => {
                let m = self.m.unwrap_or(self.l / 2);
                if 2 * m != self.l {
                    return Err(param("initial_states", "required unless L = 2M"));
                }
                default_initial_states(self.l, m)?
            }
        };
        if let Some(m) = self.m {
            if states[0].popcount() != m {
                return Err(param("M", format!("initial states carry {} excitations, M = {m}", states[0].popcount())));
            }
        }
        Ok(states)
    }

    fn deltas(&self) -> Vec<f64> {
        match &self.deltas {
            Some(d) => d.iter().map(|&x| wrap_phase(x)).collect(),
            None => phase_draws(self.seed, 0, self.n_delta),
        }
    }

    fn n_traj_deltas(&self) -> usize {
        self.deltas.as_ref().map_or(self.n_delta, Vec::len)
    }

    fn path_points(&self) -> Result<(String, Vec<(f64, f64)>)> {
        match &self.path {
            None => Err(param("path", "required for path-sweep")),
            Some(PathSpec::Named(n)) => {
                let p = NamedPath::parse(n)?;
                Ok((p.id().to_string(), p.points()))
            }
            Some(PathSpec::Points(pts)) if pts.is_empty() => Err(param("path", "no points given")),
            Some(PathSpec::Points(pts)) => Ok(("custom".to_string(), pts.clone())),
        }
    }

    fn evolve_opts(&self, sweep: bool) -> EvolveOptions {
        self.evolve.clone().unwrap_or_else(|| {
            if sweep {
                EvolveOptions { dense_threshold: SWEEP_DENSE_THRESHOLD, ..EvolveOptions::default() }
            } else {
                EvolveOptions::default()
            }
        })
    }

    fn protocol(&self) -> SweepProtocol {
        SweepProtocol {
            n_delta: self.n_delta,
            seed: self.seed,
            window: self.window,
            time_step: self.time.step,
            q: self.q.clone(),
            evolve: self.evolve_opts(true),
        }
    }
}

/// Integers print without a fractional part, everything else round-trips.
fn fmt_index(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        fmt_f64(x)
    }
}

fn series_rows(series: &[(String, String, &TimeSeries)], extra: &[Vec<f64>]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let Some((_, _, first)) = series.first() else { return rows };
    let stats: Vec<Vec<(f64, f64)>> = series.iter().map(|(_, _, s)| s.stats()).collect();
    for (t, &time) in first.times.iter().enumerate() {
        for (k, (obs, idx, s)) in series.iter().enumerate() {
            let (m, e) = stats[k][t];
            let mut r = vec![fmt_f64(time), obs.clone(), idx.clone(), fmt_f64(m), fmt_f64(e), s.n_traj().to_string()];
            r.extend(extra.iter().map(|col| fmt_f64(col[t])));
            rows.push(r);
        }
    }
    rows
}

const SERIES_HEADER: [&str; 6] = ["t_ns", "observable", "index", "mean", "stderr", "n_traj"];

fn late_rows(series: &[(String, String, &TimeSeries)], window: (f64, f64)) -> Result<Vec<Vec<String>>> {
    series
        .iter()
        .map(|(obs, idx, s)| {
            let st = late_time_average(s, window)?;
            Ok(vec![
                obs.clone(),
                idx.clone(),
                fmt_f64(st.mean),
                fmt_f64(st.stderr),
                fmt_f64(window.0),
                fmt_f64(window.1),
                st.n_traj.to_string(),
                st.n_samples.to_string(),
            ])
        })
        .collect()
}

const LATE_HEADER: [&str; 8] =
    ["observable", "index", "mean", "stderr", "window_start", "window_end", "n_traj", "n_samples"];

struct Ctx<'a> {
    cfg: &'a RunConfig,
    started: Instant,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn meta(&self, extra: Value) -> Value {
        let mut m = json!({
            "experiment": self.cfg.experiment.id(),
            "version": VERSION,
            "config_sha256": self.cfg.hash(),
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "config": self.cfg,
        });
        if let (Value::Object(m), Value::Object(x)) = (&mut m, extra) {
            m.extend(x);
        }
        m
    }

    fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        self.cfg.out.join(format!("{}{suffix}.{ext}", self.cfg.stem()))
    }

    fn csv(&mut self, suffix: &str, extra: Value, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(suffix, "csv");
        write_csv(&p, &self.meta(extra), header, rows)?;
        self.files.push(p);
        Ok(())
    }

    fn json(&mut self, extra: Value, data: Value) -> Result<()> {
        let p = self.path("", "json");
        write_json(&p, &self.meta(extra), data)?;
        self.files.push(p);
        Ok(())
    }
}

/// Validate, compute and write the outputs of one configuration.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Domain(format!("worker pool: {e}")))?;
    let mut ctx = Ctx { cfg, started: Instant::now(), files: Vec::new() };
    pool.install(|| dispatch(&mut ctx))?;
    Ok(RunReport { files: ctx.files })
}

fn dispatch(ctx: &mut Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    match cfg.experiment {
        Experiment::PhaseMap => {
            let map = ipr_phase_map_with(&cfg.grid.points(), &cfg.model(), cfg.n_delta, cfg.seed, cfg.statistic)?;
            let value_col = match cfg.statistic {
                IprStatistic::MeanNegLn => "mean_neg_ln_ipr",
                IprStatistic::NegLnMean => "neg_ln_mean_ipr",
            };
            let rows: Vec<Vec<String>> = map
                .points
                .iter()
                .map(|p| {
                    vec![
                        fmt_f64(p.mu),
                        fmt_f64(p.v),
                        fmt_f64(p.value),
                        fmt_f64(p.stderr),
                        map.n_delta.to_string(),
                        map.l.to_string(),
                        map.seed.to_string(),
                    ]
                })
                .collect();
            ctx.csv("", json!({}), &["mu", "V", value_col, "stderr", "n_delta", "L", "seed"], &rows)
        }
        Experiment::Quench => {
            let times = time_grid(cfg.time.start, cfg.time.stop, cfg.time.step)?;
            let opts = QuenchOptions { evolve: cfg.evolve_opts(false), shot_noise: cfg.shot_noise.clone() };
            let series = quench_occupancy(&cfg.model(), &cfg.initial()?, &cfg.deltas(), &times, &opts)?;
            let named: Vec<_> = series.iter().enumerate().map(|(j, s)| ("P".to_string(), (j + 1).to_string(), s)).collect();
            let meta = json!({ "n_delta": cfg.n_traj_deltas(), "evolve": opts.evolve });
            ctx.csv("", meta, &SERIES_HEADER, &series_rows(&named, &[]))
        }
        Experiment::PeSeries => {
            let times = time_grid(cfg.time.start, cfg.time.stop, cfg.time.step)?;
            let opts = QuenchOptions { evolve: cfg.evolve_opts(false), shot_noise: cfg.shot_noise.clone() };
            let series = quench_pe_series(&cfg.model(), &cfg.initial()?, &cfg.deltas(), &times, &cfg.q, &opts)?;
            let named: Vec<_> = series.iter().zip(&cfg.q).map(|(s, &q)| ("S".to_string(), fmt_index(q), s)).collect();
            let meta = json!({ "n_delta": cfg.n_traj_deltas(), "evolve": opts.evolve });
            ctx.csv("", meta.clone(), &SERIES_HEADER, &series_rows(&named, &[]))?;
            if cfg.window.0 >= cfg.time.start && cfg.window.1 <= cfg.time.stop {
                ctx.csv("_late", meta, &LATE_HEADER, &late_rows(&named, cfg.window)?)?;
            }
            Ok(())
        }
        Experiment::Lindblad => {
            let times = time_grid(cfg.time.start, cfg.time.stop, cfg.time.step)?;
            let res = lindblad_quench(
                &cfg.model(),
                &cfg.initial()?,
                &cfg.deltas(),
                &times,
                &cfg.noise,
                &cfg.q,
                &cfg.lindblad,
            )?;
            let mut named: Vec<_> =
                res.occupancy.iter().enumerate().map(|(j, s)| ("P".to_string(), (j + 1).to_string(), s)).collect();
            let n_occ = named.len();
            named.extend(res.entropy.iter().zip(&cfg.q).map(|(s, &q)| ("S".to_string(), fmt_index(q), s)));
            let extra = vec![res.sector_weight.mean(), res.discarded_weight.mean()];
            let mut header = SERIES_HEADER.to_vec();
            header.extend(["sector_weight", "discarded_weight"]);
            let steps: usize = res.stats.iter().map(|s| s.accepted).sum();
            let trace_err = res.stats.iter().map(|s| s.max_trace_error).fold(0.0, f64::max);
            let meta = json!({
                "n_delta": cfg.n_traj_deltas(),
                "accepted_steps": steps,
                "max_trace_error": trace_err,
            });
            ctx.csv("", meta.clone(), &header, &series_rows(&named, &extra))?;
            if cfg.window.0 >= cfg.time.start && cfg.window.1 <= cfg.time.stop {
                ctx.csv("_late", meta, &LATE_HEADER, &late_rows(&named[n_occ..], cfg.window)?)?;
            }
            Ok(())
        }
        Experiment::PathSweep => {
            let (id, points) = cfg.path_points()?;
            let init = match cfg.initial_states {
                Some(_) => Some(cfg.initial()?),
                None => None,
            };
            let res = path_sweep(&id, &points, &cfg.model(), &cfg.protocol(), init.as_deref())?;
            let factor = cfg.rescale_to.map(|l| rescale_factor(cfg.l, l)).transpose()?;
            let mut header = vec![
                "path_id", "mu", "V", "q", "mean", "stderr", "window_start", "window_end", "L", "n_delta", "seed",
            ];
            if factor.is_some() {
                header.extend(["rescaled_mean", "rescaled_stderr"]);
            }
            let rows: Vec<Vec<String>> = res
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.path_id.clone(),
                        fmt_f64(r.mu),
                        fmt_f64(r.v),
                        fmt_index(r.q),
                        fmt_f64(r.stat.mean),
                        fmt_f64(r.stat.stderr),
                        fmt_f64(r.stat.window.0),
                        fmt_f64(r.stat.window.1),
                        r.l.to_string(),
                        res.n_delta.to_string(),
                        res.seed.to_string(),
                    ];
                    if let Some(f) = factor {
                        row.push(fmt_f64(f * r.stat.mean));
                        row.push(fmt_f64(f * r.stat.stderr));
                    }
                    row
                })
                .collect();
            let meta = match (factor, cfg.rescale_to) {
                (Some(f), Some(l)) => json!({ "rescale_to": l, "rescale_factor": f }),
                _ => json!({}),
            };
            ctx.csv("", meta, &header, &rows)
        }
        Experiment::ScalingFit => {
            let points = cfg.points.clone().unwrap_or_else(|| vec![(0.5, 1.0), (2.0, 1.0), (1.0, 3.0)]);
            let protocol = cfg.protocol();
            let mut fits = Vec::new();
            for &pt in &points {
                for st in scaling_study(pt, &cfg.sizes, &cfg.model(), &protocol)? {
                    fits.push(json!({
                        "point": { "mu": st.point.0, "V": st.point.1 },
                        "q": st.q,
                        "a": st.fit.a,
                        "b": st.fit.b,
                        "residual": st.fit.residual,
                        "sizes": st.sizes,
                        "ln_dim": st.ln_dim,
                        "mean": st.values.iter().map(|v| v.mean).collect::<Vec<_>>(),
                        "stderr": st.values.iter().map(|v| v.stderr).collect::<Vec<_>>(),
                    }));
                }
            }
            ctx.json(json!({ "n_delta": cfg.n_delta }), json!({ "fits": fits }))
        }
        Experiment::DeviceMap => {
            let dev = match &cfg.device {
                None => synthetic_device(cfg.l.saturating_sub(1)),
                Some(DeviceSource::File(p)) => load_device(p).map_err(|e| param("device", e.to_string()))?,
                Some(DeviceSource::Inline(d)) => d.clone(),
            };
            let mut rows = Vec::new();
            for (k, &delta) in cfg.deltas().iter().enumerate() {
                // The coupler realises the hopping with the opposite sign; on an
                // open chain the gauge a_j -> (-1)^j a_j makes the two equivalent.
                let targets: Vec<f64> =
                    coupling_profile(&ModelParams { delta, ..cfg.model() }).into_iter().map(|j| -j).collect();
                for s in map_profile(&targets, &dev)? {
                    rows.push(vec![
                        k.to_string(),
                        fmt_f64(delta),
                        s.index.to_string(),
                        fmt_f64(s.target_j),
                        fmt_f64(s.omega_c),
                        fmt_f64(s.achieved_j),
                    ]);
                }
            }
            let meta = json!({ "synthetic_device": dev.synthetic, "device_note": dev.note });
            ctx.csv("", meta.clone(), &["draw", "delta", "coupler", "target_j", "omega_c", "achieved_j"], &rows)?;
            if let (Some(x), Some(zpa)) = (&dev.crosstalk, &dev.intended_zpa) {
                let applied = compensate_crosstalk(zpa, x)?;
                let rows: Vec<Vec<String>> = (0..zpa.len())
                    .map(|i| {
                        let label = x.labels.get(i).cloned().unwrap_or_else(|| format!("Z{}", i + 1));
                        vec![i.to_string(), label, fmt_f64(zpa[i]), fmt_f64(applied[i])]
                    })
                    .collect();
                ctx.csv("_zpa", meta, &["line", "label", "intended", "applied"], &rows)?;
            }
            Ok(())
        }
    }
}

/// Run every configuration of a named preset.
pub fn reproduce(name: &str, overrides: &Overrides) -> Result<RunReport> {
    let mut report = RunReport::default();
    for mut cfg in preset(name)? {
        overrides.apply(&mut cfg);
        report.files.extend(run(&cfg)?.files);
    }
    Ok(report)
}

/// Command-line values that take precedence over file fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub q: Option<Vec<f64>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(q) = &self.q {
            cfg.q = q.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let cfg = RunConfig::from_json(r#"{"experiment": "path-sweep", "path": "II", "L": 12}"#).unwrap();
        assert_eq!(cfg.path, Some(PathSpec::Named("II".into())));
        assert_eq!(cfg.l, 12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_json(r#"{"experiment": "quench", "mu_typo": 1}"#).unwrap_err();
        assert!(e.to_string().contains("mu_typo"));
    }

    #[test]
    fn validation_names_field() {
        let cfg = RunConfig { m: Some(12), ..RunConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("M:"));
        let cfg = RunConfig { initial_states: Some(vec!["1010".into()]), ..RunConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("initial_states[0]"));
        let cfg = RunConfig { experiment: Experiment::PathSweep, ..RunConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("path"));
        let cfg = RunConfig { q: vec![2.0, 0.5], ..RunConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("q[1]"));
    }

    #[test]
    fn grid_is_mu_major() {
        let g = GridSpec { mu: Axis { start: 0.0, stop: 1.0, n: 2 }, v: Axis { start: 0.0, stop: 4.0, n: 3 } };
        assert_eq!(g.points(), vec![(0.0, 0.0), (0.0, 2.0), (0.0, 4.0), (1.0, 0.0), (1.0, 2.0), (1.0, 4.0)]);
        assert_eq!(GridSpec::default().points().len(), 81 * 41);
    }
}
