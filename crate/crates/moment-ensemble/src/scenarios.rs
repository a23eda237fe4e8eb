//! Canned simulation scenarios, their configs, and CSV reports.
//!
//! Three presets are compiled in:
//!
//! * `bloch-paper` — steer 300 magnetization systems with a 10% field
//!   dispersion from `(0, 0, 1)` to `(1, 0, 0)` under the explicit
//!   two-channel moment-feedback law at truncation order 35, co-simulating
//!   the moment chain;
//! * `nonlinear-paper` — steer 500 planar sine-drift systems with labels in
//!   `[0.5, 1]` from `(2, 1)` to `(1, 0)` under the fixed linear moment law
//!   at order 50, co-simulating the pushforward moment system;
//! * `output-moment-demo` — the two half-interval indicators: distinct
//!   profiles (unit apart in `L^2`) with identical output moments.
//!
//! A config file is `key = value` text; a `preset = <name>` line starts
//! from a preset and later keys override it field by field.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::controller::{FeedbackController, FeedbackLaw, QuadraticLyapunov, SingularityStatus};
use crate::ensemble::{lp_distance, ControlSignal, EnsembleProfile};
use crate::error::Error;
use crate::grid::ParameterGrid;
use crate::io;
use crate::moment_dynamics::{
    chain_sequence, integrate_moment_chain, integrate_pushforward, BlochMomentChain, Closure,
    PushforwardMomentSystem,
};
use crate::moments::{compute_output_moments, radical_distance, MomentSequence};
use crate::numeric::euclidean_norm;
use crate::systems::{bloch_ensemble_on, sine_ensemble_on};
use crate::Result;

/// Initial/target profile specification.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    /// The same point at every node.
    Constant(Vec<f64>),
}

impl ProfileSpec {
    fn constant_point(&self) -> &[f64] {
        match self {
            ProfileSpec::Constant(p) => p,
        }
    }

    fn serialize(&self) -> String {
        match self {
            ProfileSpec::Constant(p) => format!(
                "constant({})",
                p.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }

    fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let inner = text
            .strip_prefix("constant(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| {
                Error::Parse(format!("expected constant(v1, v2, ...), got '{text}'"))
            })?;
        let values = inner
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("malformed number '{}'", v.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::Parse("profile needs at least one component".into()));
        }
        Ok(ProfileSpec::Constant(values))
    }
}

/// Which feedback law the scenario applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    GradientDamping,
    ExplicitBloch,
    ExplicitNonlinear,
}

impl ControllerKind {
    fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::GradientDamping => "gradient-damping",
            ControllerKind::ExplicitBloch => "explicit-bloch",
            ControllerKind::ExplicitNonlinear => "explicit-nonlinear",
        }
    }

    fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "gradient-damping" => Ok(ControllerKind::GradientDamping),
            "explicit-bloch" => Ok(ControllerKind::ExplicitBloch),
            "explicit-nonlinear" => Ok(ControllerKind::ExplicitNonlinear),
            other => Err(Error::Parse(format!("unknown controller kind '{other}'"))),
        }
    }
}

/// Controller block of a scenario config.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Scales the law output; the damping gain for `gradient-damping`.
    pub gain: f64,
    /// Channel coefficients of the fixed linear law.
    pub c1: f64,
    pub c2: f64,
    pub u_max: Option<f64>,
    pub singularity_threshold: f64,
}

/// Full description of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid_points: usize,
    pub param_bounds: Vec<(f64, f64)>,
    /// Moment truncation order `N`.
    pub moment_order: usize,
    pub dt: f64,
    pub horizon: f64,
    pub initial_profile: ProfileSpec,
    pub target_profile: ProfileSpec,
    pub controller: ControllerConfig,
    /// Thinning stride for trajectory and moment-trace CSV output.
    pub record_stride: usize,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Compiled-in presets: `bloch-paper`, `nonlinear-paper`,
    /// `output-moment-demo`.
    pub fn preset(name: &str) -> Option<ScenarioConfig> {
        match name {
            "bloch-paper" => Some(ScenarioConfig {
                name: "bloch-paper".into(),
                grid_points: 300,
                param_bounds: vec![(0.9, 1.1)],
                moment_order: 35,
                dt: 1e-3,
                // Smallest round horizon at which the terminal tolerance is
                // met with margin; the error plateaus well before this.
                horizon: 2.0,
                initial_profile: ProfileSpec::Constant(vec![0.0, 0.0, 1.0]),
                target_profile: ProfileSpec::Constant(vec![1.0, 0.0, 0.0]),
                controller: ControllerConfig {
                    kind: ControllerKind::ExplicitBloch,
                    gain: 1.0,
                    c1: 5.0,
                    c2: 1.0,
                    u_max: None,
                    singularity_threshold: 1e-9,
                },
                record_stride: 20,
                output_dir: None,
            }),
            "nonlinear-paper" => Some(ScenarioConfig {
                name: "nonlinear-paper".into(),
                grid_points: 500,
                param_bounds: vec![(0.5, 1.0)],
                moment_order: 50,
                dt: 1e-3,
                horizon: 20.0,
                initial_profile: ProfileSpec::Constant(vec![2.0, 1.0]),
                target_profile: ProfileSpec::Constant(vec![1.0, 0.0]),
                controller: ControllerConfig {
                    kind: ControllerKind::ExplicitNonlinear,
                    gain: 1.0,
                    c1: 5.0,
                    c2: 1.0,
                    u_max: None,
                    singularity_threshold: 1e-9,
                },
                record_stride: 200,
                output_dir: None,
            }),
            "output-moment-demo" => Some(ScenarioConfig {
                name: "output-moment-demo".into(),
                grid_points: 1000,
                param_bounds: vec![(0.0, 1.0)],
                moment_order: 12,
                dt: 1e-3,
                horizon: 1.0,
                initial_profile: ProfileSpec::Constant(vec![0.0]),
                target_profile: ProfileSpec::Constant(vec![0.0]),
                controller: ControllerConfig {
                    kind: ControllerKind::GradientDamping,
                    gain: 1.0,
                    c1: 5.0,
                    c2: 1.0,
                    u_max: None,
                    singularity_threshold: 1e-9,
                },
                record_stride: 1,
                output_dir: None,
            }),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["bloch-paper", "nonlinear-paper", "output-moment-demo"]
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidArgument("scenario needs a name".into()));
        }
        if self.grid_points == 0 {
            return Err(Error::InvalidArgument("grid_points must be >= 1".into()));
        }
        if self.param_bounds.is_empty() {
            return Err(Error::InvalidArgument("param_bounds must be set".into()));
        }
        for &(a, b) in &self.param_bounds {
            if !a.is_finite() || !b.is_finite() || b < a {
                return Err(Error::InvalidArgument(format!(
                    "invalid parameter bounds [{a}, {b}]"
                )));
            }
        }
        if self.moment_order == 0 {
            return Err(Error::InvalidArgument("moment_order must be >= 1".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument(
                "dt and horizon must be positive".into(),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        let c = &self.controller;
        if !(c.gain >= 0.0) {
            return Err(Error::InvalidArgument("controller gain must be >= 0".into()));
        }
        if c.kind == ControllerKind::GradientDamping && c.gain == 0.0 {
            return Err(Error::InvalidArgument(
                "gradient damping needs a positive gain".into(),
            ));
        }
        if !(c.singularity_threshold > 0.0) {
            return Err(Error::InvalidArgument(
                "singularity threshold must be positive".into(),
            ));
        }
        if let Some(cap) = c.u_max {
            if !(cap > 0.0) {
                return Err(Error::InvalidArgument("u_max must be positive".into()));
            }
        }
        for spec in [&self.initial_profile, &self.target_profile] {
            if spec.constant_point().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("profile specification".into()));
            }
        }
        Ok(())
    }

    /// Serializes to the `key = value` text form; `parse` inverts this
    /// exactly.
    pub fn serialize(&self) -> String {
        let bounds = self
            .param_bounds
            .iter()
            .map(|(a, b)| format!("{a}..{b}"))
            .collect::<Vec<_>>()
            .join(", ");
        let mut out = String::new();
        out.push_str(&format!("name = {}\n", self.name));
        out.push_str(&format!("grid_points = {}\n", self.grid_points));
        out.push_str(&format!("param_bounds = {bounds}\n"));
        out.push_str(&format!("moment_order = {}\n", self.moment_order));
        out.push_str(&format!("dt = {}\n", self.dt));
        out.push_str(&format!("horizon = {}\n", self.horizon));
        out.push_str(&format!(
            "initial_profile = {}\n",
            self.initial_profile.serialize()
        ));
        out.push_str(&format!(
            "target_profile = {}\n",
            self.target_profile.serialize()
        ));
        out.push_str(&format!("record_stride = {}\n", self.record_stride));
        out.push_str(&format!("controller.kind = {}\n", self.controller.kind.as_str()));
        out.push_str(&format!("controller.gain = {}\n", self.controller.gain));
        out.push_str(&format!("controller.c1 = {}\n", self.controller.c1));
        out.push_str(&format!("controller.c2 = {}\n", self.controller.c2));
        out.push_str(&format!(
            "controller.u_max = {}\n",
            self.controller
                .u_max
                .map_or("none".to_string(), |v| v.to_string())
        ));
        out.push_str(&format!(
            "controller.singularity_threshold = {}\n",
            self.controller.singularity_threshold
        ));
        out.push_str(&format!(
            "output_dir = {}\n",
            self.output_dir
                .as_ref()
                .map_or("none".to_string(), |p| p.display().to_string())
        ));
        out
    }

    /// Parses `key = value` text. A `preset = <name>` line selects the base
    /// config; remaining keys override it one by one. Without a preset every
    /// mandatory key must be present.
    pub fn parse(text: &str) -> Result<ScenarioConfig> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value'", idx + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }

        let preset_name = pairs
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone());
        // Field-by-field overlay onto the preset (or onto a blank slate).
        let mut cfg = match &preset_name {
            Some(name) => ScenarioConfig::preset(name).ok_or_else(|| {
                Error::Parse(format!(
                    "unknown preset '{name}' (expected one of {:?})",
                    ScenarioConfig::preset_names()
                ))
            })?,
            None => ScenarioConfig {
                name: String::new(),
                grid_points: 0,
                param_bounds: Vec::new(),
                moment_order: 0,
                dt: 0.0,
                horizon: 0.0,
                initial_profile: ProfileSpec::Constant(vec![0.0]),
                target_profile: ProfileSpec::Constant(vec![0.0]),
                controller: ControllerConfig {
                    kind: ControllerKind::GradientDamping,
                    gain: 1.0,
                    c1: 5.0,
                    c2: 1.0,
                    u_max: None,
                    singularity_threshold: 1e-9,
                },
                record_stride: 1,
                output_dir: None,
            },
        };
        let mut mandatory_seen = [false; 8];
        for (key, value) in &pairs {
            apply_key(&mut cfg, key, value, &mut mandatory_seen)?;
        }
        if preset_name.is_none() {
            const NAMES: [&str; 8] = [
                "name",
                "grid_points",
                "param_bounds",
                "moment_order",
                "dt",
                "horizon",
                "initial_profile",
                "target_profile",
            ];
            for (seen, name) in mandatory_seen.iter().zip(NAMES) {
                if !seen {
                    return Err(Error::Parse(format!(
                        "missing mandatory key '{name}' (or use 'preset = <name>')"
                    )));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_key(
    cfg: &mut ScenarioConfig,
    key: &str,
    value: &str,
    mandatory_seen: &mut [bool; 8],
) -> Result<()> {
    let parse_f64 = |v: &str| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|_| Error::Parse(format!("malformed number '{v}' for key '{key}'")))
    };
    let parse_usize = |v: &str| -> Result<usize> {
        v.parse::<usize>()
            .map_err(|_| Error::Parse(format!("malformed integer '{v}' for key '{key}'")))
    };
    match key {
        "preset" => {} // handled by the caller
        "name" => {
            cfg.name = value.to_string();
            mandatory_seen[0] = true;
        }
        "grid_points" => {
            cfg.grid_points = parse_usize(value)?;
            mandatory_seen[1] = true;
        }
        "param_bounds" => {
            let mut bounds = Vec::new();
            for chunk in value.split(',') {
                let (a, b) = chunk.trim().split_once("..").ok_or_else(|| {
                    Error::Parse(format!("expected 'a..b' bounds, got '{}'", chunk.trim()))
                })?;
                bounds.push((parse_f64(a.trim())?, parse_f64(b.trim())?));
            }
            cfg.param_bounds = bounds;
            mandatory_seen[2] = true;
        }
        "moment_order" => {
            cfg.moment_order = parse_usize(value)?;
            mandatory_seen[3] = true;
        }
        "dt" => {
            cfg.dt = parse_f64(value)?;
            mandatory_seen[4] = true;
        }
        "horizon" => {
            cfg.horizon = parse_f64(value)?;
            mandatory_seen[5] = true;
        }
        "initial_profile" => {
            cfg.initial_profile = ProfileSpec::parse(value)?;
            mandatory_seen[6] = true;
        }
        "target_profile" => {
            cfg.target_profile = ProfileSpec::parse(value)?;
            mandatory_seen[7] = true;
        }
        "record_stride" => cfg.record_stride = parse_usize(value)?,
        "controller.kind" => cfg.controller.kind = ControllerKind::parse(value)?,
        "controller.gain" => cfg.controller.gain = parse_f64(value)?,
        "controller.c1" => cfg.controller.c1 = parse_f64(value)?,
        "controller.c2" => cfg.controller.c2 = parse_f64(value)?,
        "controller.u_max" => {
            cfg.controller.u_max = if value == "none" {
                None
            } else {
                Some(parse_f64(value)?)
            };
        }
        "controller.singularity_threshold" => {
            cfg.controller.singularity_threshold = parse_f64(value)?;
        }
        "output_dir" => {
            cfg.output_dir = if value == "none" {
                None
            } else {
                Some(PathBuf::from(value))
            };
        }
        other => {
            return Err(Error::Parse(format!("unknown config key '{other}'")));
        }
    }
    Ok(())
}

/// Closed-form moments of a constant profile: the point scaled by the
/// monomial masses of the box (a degenerate axis contributes `a^k` with
/// unit mass).
pub fn constant_profile_moments(
    point: &[f64],
    bounds: &[(f64, f64)],
    max_order: usize,
) -> MomentSequence {
    MomentSequence::from_fn(bounds.len(), point.len(), max_order, |k, ch| {
        let mut mass = 1.0;
        for (axis, &(a, b)) in bounds.iter().enumerate() {
            let kj = k.entry(axis) as i32;
            mass *= if b > a {
                (b.powi(kj + 1) - a.powi(kj + 1)) / (kj as f64 + 1.0)
            } else {
                a.powi(kj)
            };
        }
        point[ch] * mass
    })
}

/// Outcome of a feedback reproduction run.
pub struct RunResult {
    pub name: String,
    /// Step times and the Lyapunov value at each of them.
    pub times: Vec<f64>,
    pub v_trace: Vec<f64>,
    pub control_times: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    /// Integrated moment-system state at every step time.
    pub moment_trace: Vec<MomentSequence>,
    /// Strided profile snapshots (flat node-major states).
    pub profile_times: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub final_profile: EnsembleProfile,
    /// Max over nodes of the Euclidean terminal error to the target point.
    pub final_sup_error: f64,
    /// Quadrature `L^2` terminal error — the ensemble metric.
    pub final_l2_error: f64,
    /// Sup over moment orders of the Euclidean terminal error of the
    /// integrated moment system to its analytic target.
    pub final_moment_error: f64,
    /// Max over nodes of the change in state norm over the run (meaningful
    /// for the rotation-generated magnetization ensemble).
    pub max_norm_drift: Option<f64>,
    pub written: Vec<PathBuf>,
}

fn build_controller(cfg: &ScenarioConfig, lyapunov: QuadraticLyapunov) -> Result<FeedbackController> {
    let law = match cfg.controller.kind {
        ControllerKind::GradientDamping => FeedbackLaw::GradientDamping,
        ControllerKind::ExplicitBloch => FeedbackLaw::ExplicitBloch,
        ControllerKind::ExplicitNonlinear => FeedbackLaw::ExplicitNonlinear {
            c1: cfg.controller.c1,
            c2: cfg.controller.c2,
        },
    };
    Ok(FeedbackController {
        law,
        lyapunov,
        gain: cfg.controller.gain,
        u_max: cfg.controller.u_max,
        singularity_threshold: cfg.controller.singularity_threshold,
    })
}

fn one_dimensional_bounds(cfg: &ScenarioConfig) -> Result<(f64, f64)> {
    if cfg.param_bounds.len() != 1 {
        return Err(Error::InvalidArgument(
            "this scenario uses a one-dimensional parameter".into(),
        ));
    }
    Ok(cfg.param_bounds[0])
}

fn terminal_errors(
    final_profile: &EnsembleProfile,
    target_point: &[f64],
    grid: &ParameterGrid,
) -> Result<(f64, f64)> {
    let target = EnsembleProfile::constant(grid, target_point)?;
    let sup = lp_distance(final_profile, &target, grid, f64::INFINITY)?;
    let l2 = lp_distance(final_profile, &target, grid, 2.0)?;
    Ok((sup, l2))
}

/// Sup over orders `<= N` of the per-order Euclidean error of a terminal
/// moment state to the target sequence.
fn moment_sup_error(m: &MomentSequence, target: &MomentSequence) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for k in 0..=target.max_order() {
        let mut sq = 0.0;
        for ch in 0..target.state_dim() {
            let e = m.get1(k, ch).ok_or(Error::OrderOverflow {
                needed: k,
                max_order: m.max_order(),
            })? - target.get1(k, ch).expect("dense sequence");
            sq += e * e;
        }
        sup = sup.max(sq.sqrt());
    }
    Ok(sup)
}

fn strided_indices(len: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if let Some(&last) = idx.last() {
        if last != len - 1 {
            idx.push(len - 1);
        }
    }
    idx
}

/// Steers the magnetization ensemble by moment feedback, co-simulating the
/// truncated moment chain (from-ensemble closure). Errors on integration
/// blow-up and on a feedback stall.
pub fn run_bloch(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let (a, b) = one_dimensional_bounds(cfg)?;
    let x0_point = cfg.initial_profile.constant_point().to_vec();
    let target_point = cfg.target_profile.constant_point().to_vec();
    if x0_point.len() != 3 || target_point.len() != 3 {
        return Err(Error::InvalidArgument(
            "magnetization profiles have three components".into(),
        ));
    }
    if cfg.controller.kind == ControllerKind::ExplicitNonlinear {
        return Err(Error::InvalidArgument(
            "the fixed linear law does not apply to the magnetization ensemble".into(),
        ));
    }

    let grid = ParameterGrid::uniform_midpoint(&cfg.param_bounds, cfg.grid_points)?;
    let ens = bloch_ensemble_on(grid.clone());
    let profile0 = EnsembleProfile::constant(&grid, &x0_point)?;
    let n = cfg.moment_order;

    // Analytic moment target for the constant target profile.
    let m_target = constant_profile_moments(&target_point, &[(a, b)], n);
    let lyapunov = QuadraticLyapunov::new(m_target);
    let v_eval = lyapunov.clone();
    let controller = build_controller(cfg, lyapunov)?;

    let chain = BlochMomentChain::from_profile(n, Closure::FromEnsemble, &profile0, &grid)?;
    // A stall is a mid-run collapse of the control gradient: the check arms
    // once the gradient has been active, so starting at (or numerically
    // indistinguishable from) the target stays a clean zero-control run.
    let mut armed = false;
    let mut signal = ControlSignal::Feedback {
        moment_order: n + 1,
        law: Box::new(move |m, t| {
            match controller.monitor(m)? {
                SingularityStatus::NearSingular {
                    gradient_norm,
                    error_norm,
                } if armed => {
                    return Err(Error::Stall {
                        time: t,
                        gradient_norm,
                        error_norm,
                    });
                }
                SingularityStatus::NearSingular { .. } => {}
                SingularityStatus::Ok => armed = true,
            }
            controller.control(m)
        }),
    };
    let traj = integrate_moment_chain(
        &chain,
        &mut signal,
        cfg.dt,
        cfg.horizon,
        Some((&ens, &profile0)),
        cfg.record_stride,
    )?;

    let final_profile = traj.final_profile.clone().expect("co-simulated run");
    let (sup, l2) = terminal_errors(&final_profile, &target_point, &grid)?;
    let mut v_trace = Vec::with_capacity(traj.moments.len());
    let mut moment_trace = Vec::with_capacity(traj.moments.len());
    for m in &traj.moments {
        let seq = chain_sequence(m);
        v_trace.push(v_eval.value(&seq)?);
        moment_trace.push(seq);
    }
    let final_moment_error =
        moment_sup_error(moment_trace.last().expect("non-empty run"), v_eval.target())?;
    let initial_norms: Vec<f64> = (0..grid.len())
        .map(|p| euclidean_norm(profile0.node_state(p)))
        .collect();
    let mut drift: f64 = 0.0;
    for p in 0..grid.len() {
        let norm = euclidean_norm(final_profile.node_state(p));
        drift = drift.max((norm - initial_norms[p]).abs());
    }

    let mut result = RunResult {
        name: cfg.name.clone(),
        times: traj.times.clone(),
        v_trace,
        control_times: traj.control_times.clone(),
        controls: traj.controls.iter().map(|&(u, v)| vec![u, v]).collect(),
        moment_trace,
        profile_times: traj.profile_times.clone(),
        profiles: traj.profiles.clone(),
        final_profile,
        final_sup_error: sup,
        final_l2_error: l2,
        final_moment_error,
        max_norm_drift: Some(drift),
        written: Vec::new(),
    };
    if let Some(dir) = &cfg.output_dir {
        result.written = emit_run(cfg, &grid, 3, &result, dir)?;
    }
    Ok(result)
}

/// Steers the planar sine-drift ensemble with the fixed linear moment law,
/// co-simulating the (unclosed) pushforward moment system.
pub fn run_nonlinear(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let (a, b) = one_dimensional_bounds(cfg)?;
    let x0_point = cfg.initial_profile.constant_point().to_vec();
    let target_point = cfg.target_profile.constant_point().to_vec();
    if x0_point.len() != 2 || target_point.len() != 2 {
        return Err(Error::InvalidArgument(
            "planar profiles have two components".into(),
        ));
    }
    if cfg.controller.kind != ControllerKind::ExplicitNonlinear {
        return Err(Error::InvalidArgument(
            "the planar scenario uses the fixed linear law".into(),
        ));
    }

    let grid = ParameterGrid::uniform_midpoint(&cfg.param_bounds, cfg.grid_points)?;
    let ens = sine_ensemble_on(grid.clone());
    let profile0 = EnsembleProfile::constant(&grid, &x0_point)?;
    let n = cfg.moment_order;

    let m_target = constant_profile_moments(&target_point, &[(a, b)], n);
    let lyapunov = QuadraticLyapunov::new(m_target);
    let v_eval = lyapunov.clone();
    let controller = build_controller(cfg, lyapunov)?;

    let sys = PushforwardMomentSystem::new(&ens, n);
    let mut signal = ControlSignal::Feedback {
        moment_order: n,
        law: Box::new(move |m, _t| controller.control(m)),
    };
    let traj = integrate_pushforward(
        &sys,
        &profile0,
        &mut signal,
        cfg.dt,
        cfg.horizon,
        cfg.record_stride,
    )?;

    let (sup, l2) = terminal_errors(&traj.final_profile, &target_point, &grid)?;
    let final_moment_error =
        moment_sup_error(traj.moments.last().expect("non-empty run"), v_eval.target())?;
    let mut v_trace = Vec::with_capacity(traj.moments.len());
    for m in &traj.moments {
        v_trace.push(v_eval.value(m)?);
    }

    let mut result = RunResult {
        name: cfg.name.clone(),
        times: traj.times.clone(),
        v_trace,
        control_times: traj.control_times.clone(),
        controls: traj.controls.clone(),
        moment_trace: traj.moments,
        profile_times: traj.profile_times.clone(),
        profiles: traj.profiles.clone(),
        final_profile: traj.final_profile,
        final_sup_error: sup,
        final_l2_error: l2,
        final_moment_error,
        max_norm_drift: None,
        written: Vec::new(),
    };
    if let Some(dir) = &cfg.output_dir {
        result.written = emit_run(cfg, &grid, 2, &result, dir)?;
    }
    Ok(result)
}

fn emit_run(
    cfg: &ScenarioConfig,
    grid: &ParameterGrid,
    state_dim: usize,
    result: &RunResult,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    // Controls aligned to the strided profile sample times (fixed dt).
    let control_at = |t: f64| -> Vec<f64> {
        if result.controls.is_empty() {
            return Vec::new();
        }
        let idx = ((t - result.times[0]) / cfg.dt).round() as usize;
        result.controls[idx.min(result.controls.len() - 1)].clone()
    };
    let sampled_controls: Vec<Vec<f64>> = result
        .profile_times
        .iter()
        .map(|&t| control_at(t))
        .collect();

    let trajectory = dir.join("trajectory.csv");
    let mut w = BufWriter::new(File::create(&trajectory)?);
    io::write_trajectory_csv(
        grid,
        state_dim,
        &result.profile_times,
        &result.profiles,
        &sampled_controls,
        &mut w,
    )?;
    w.flush()?;
    written.push(trajectory);

    let idx = strided_indices(result.times.len(), cfg.record_stride);
    let moment_times: Vec<f64> = idx.iter().map(|&i| result.times[i]).collect();
    let moment_seqs: Vec<MomentSequence> =
        idx.iter().map(|&i| result.moment_trace[i].clone()).collect();
    let moments = dir.join("moments.csv");
    let mut w = BufWriter::new(File::create(&moments)?);
    io::write_moment_trace_csv(&moment_times, &moment_seqs, &mut w)?;
    w.flush()?;
    written.push(moments);

    let controls = dir.join("controls.csv");
    let mut w = BufWriter::new(File::create(&controls)?);
    io::write_controls_csv(&result.control_times, &result.controls, &mut w)?;
    w.flush()?;
    written.push(controls);

    let lyapunov = dir.join("lyapunov.csv");
    let mut w = BufWriter::new(File::create(&lyapunov)?);
    io::write_lyapunov_csv(&result.times, &result.v_trace, &mut w)?;
    w.flush()?;
    written.push(lyapunov);

    let config = dir.join("config.txt");
    fs::write(&config, cfg.serialize())?;
    written.push(config);

    let manifest = io::write_manifest(dir, &cfg.name, &written)?;
    written.push(manifest);
    Ok(written)
}

/// Report of the output-moment demonstration.
pub struct DemoReport {
    pub moments_first: MomentSequence,
    pub moments_second: MomentSequence,
    /// Radical distance between the two output moment sequences.
    pub radical_distance: f64,
    /// Quadrature `L^2` distance between the two profiles.
    pub l2_distance: f64,
    /// Radical distance from the first indicator to the constant-one profile.
    pub radical_to_constant_one: f64,
    pub written: Vec<PathBuf>,
}

/// Output moments of the two half-interval indicators on `[0, 1]`: the
/// profiles are unit `L^2` distance apart yet share one output moment
/// sequence (mass 1, all higher moments 1/2).
pub fn run_output_moment_demo(cfg: &ScenarioConfig) -> Result<DemoReport> {
    cfg.validate()?;
    let grid = ParameterGrid::uniform_midpoint(&cfg.param_bounds, cfg.grid_points)?;
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument(
            "the demo uses a one-dimensional parameter".into(),
        ));
    }
    let lower = EnsembleProfile::from_fn(&grid, 1, |beta| {
        vec![if beta[0] <= 0.5 { 1.0 } else { 0.0 }]
    })?;
    let upper = EnsembleProfile::from_fn(&grid, 1, |beta| {
        vec![if beta[0] >= 0.5 { 1.0 } else { 0.0 }]
    })?;
    let ones = EnsembleProfile::constant(&grid, &[1.0])?;

    let n = cfg.moment_order;
    let m_lower = compute_output_moments(&lower, &grid, n)?;
    let m_upper = compute_output_moments(&upper, &grid, n)?;
    let m_ones = compute_output_moments(&ones, &grid, n)?;

    let radical = radical_distance(&m_lower, &m_upper)?;
    let l2 = lp_distance(&lower, &upper, &grid, 2.0)?;
    let radical_one = radical_distance(&m_lower, &m_ones)?;

    let mut written = Vec::new();
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        for (name, m) in [
            ("output_moments_lower.csv", &m_lower),
            ("output_moments_upper.csv", &m_upper),
        ] {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path)?);
            io::write_moments_csv(m, &mut w)?;
            w.flush()?;
            written.push(path);
        }
        let report = dir.join("report.txt");
        let mut body = String::new();
        body.push_str(&format!(
            "radical_distance = {}\n",
            io::format_value(radical)
        ));
        body.push_str(&format!("l2_distance = {}\n", io::format_value(l2)));
        body.push_str(&format!(
            "radical_distance_to_constant_one = {}\n",
            io::format_value(radical_one)
        ));
        fs::write(&report, body)?;
        written.push(report);
        let manifest = io::write_manifest(dir, &cfg.name, &written)?;
        written.push(manifest);
    }

    Ok(DemoReport {
        moments_first: m_lower,
        moments_second: m_upper,
        radical_distance: radical,
        l2_distance: l2,
        radical_to_constant_one: radical_one,
        written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_text() {
        for name in ScenarioConfig::preset_names() {
            let cfg = ScenarioConfig::preset(name).unwrap();
            let text = cfg.serialize();
            let back = ScenarioConfig::parse(&text).unwrap();
            assert_eq!(cfg, back, "round trip failed for {name}");
        }
    }

    #[test]
    fn preset_overrides_merge_key_by_key() {
        let text = "preset = bloch-paper\nhorizon = 0.5\ngrid_points = 12\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.horizon, 0.5);
        assert_eq!(cfg.grid_points, 12);
        assert_eq!(cfg.moment_order, 35);
    }

    #[test]
    fn parse_rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioConfig::parse("preset = bloch-paper\nbogus = 1\n").is_err());
        assert!(ScenarioConfig::parse("preset = bloch-paper\ndt = fast\n").is_err());
        assert!(ScenarioConfig::parse("preset = no-such-preset\n").is_err());
        assert!(ScenarioConfig::parse("name = x\n").is_err(), "missing keys");
    }

    #[test]
    fn constant_profile_moments_match_quadrature() {
        let bounds = [(0.9, 1.1)];
        let m = constant_profile_moments(&[0.0, 0.0, 1.0], &bounds, 6);
        let grid = ParameterGrid::gauss_legendre(&bounds, 12).unwrap();
        for k in 0..=6usize {
            let direct = grid.integrate(|x| x[0].powi(k as i32));
            assert!((m.get1(k, 2).unwrap() - direct).abs() < 1e-14);
            assert_eq!(m.get1(k, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn already_at_target_produces_zero_control() {
        let mut cfg = ScenarioConfig::preset("bloch-paper").unwrap();
        cfg.grid_points = 20;
        cfg.horizon = 0.05;
        cfg.initial_profile = ProfileSpec::Constant(vec![1.0, 0.0, 0.0]);
        let result = run_bloch(&cfg).unwrap();
        assert!(result
            .controls
            .iter()
            .all(|u| u.iter().all(|&v| v == 0.0)));
        assert!(result.final_sup_error < 1e-12);
        // V only carries the constant quadrature-vs-analytic target offset.
        let v0 = result.v_trace[0];
        assert!(result.v_trace.iter().all(|&v| v == v0));
        assert!(v0 < 1e-3, "target offset {v0}");
    }

    #[test]
    fn single_system_limit_reaches_the_exact_rotation() {
        // Degenerate interval: one node at label 1, no dispersion floor.
        let mut cfg = ScenarioConfig::preset("bloch-paper").unwrap();
        cfg.param_bounds = vec![(1.0, 1.0)];
        cfg.grid_points = 1;
        cfg.moment_order = 8;
        cfg.horizon = 2.0;
        let result = run_bloch(&cfg).unwrap();
        assert!(
            result.final_sup_error < 1e-3,
            "single-system error {}",
            result.final_sup_error
        );
    }

    #[test]
    fn magnetization_descent_is_monotone_on_a_short_run() {
        let mut cfg = ScenarioConfig::preset("bloch-paper").unwrap();
        cfg.grid_points = 40;
        cfg.moment_order = 12;
        cfg.horizon = 0.3;
        let result = run_bloch(&cfg).unwrap();
        for w in result.v_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * cfg.dt, "V increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_gain_matches_open_loop_integration() {
        let mut cfg = ScenarioConfig::preset("nonlinear-paper").unwrap();
        cfg.grid_points = 30;
        cfg.moment_order = 10;
        cfg.horizon = 0.5;
        cfg.controller.gain = 0.0;
        let fed = run_nonlinear(&cfg).unwrap();

        let grid = ParameterGrid::uniform_midpoint(&cfg.param_bounds, cfg.grid_points).unwrap();
        let ens = sine_ensemble_on(grid.clone());
        let profile0 = EnsembleProfile::constant(&grid, &[2.0, 1.0]).unwrap();
        let mut signal = ControlSignal::constant(vec![0.0]);
        let open = crate::ensemble::simulate(
            &ens,
            &profile0,
            &mut signal,
            cfg.dt,
            cfg.horizon,
            &[],
            usize::MAX,
            None,
        )
        .unwrap();
        assert_eq!(
            fed.final_profile.states(),
            open.states.last().unwrap().as_slice()
        );
    }

    #[test]
    fn uncontrolled_run_from_the_drift_equilibrium_stays_put() {
        // The planar field vanishes at the origin, so the zero-control run
        // is exactly stationary.
        let mut cfg = ScenarioConfig::preset("nonlinear-paper").unwrap();
        cfg.grid_points = 15;
        cfg.moment_order = 6;
        cfg.horizon = 0.5;
        cfg.controller.gain = 0.0;
        cfg.initial_profile = ProfileSpec::Constant(vec![0.0, 0.0]);
        let result = run_nonlinear(&cfg).unwrap();
        assert!(result.final_profile.states().iter().all(|&v| v == 0.0));
        assert!(result.controls.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn demo_reports_equal_moments_and_unit_profile_distance() {
        let cfg = ScenarioConfig::preset("output-moment-demo").unwrap();
        let report = run_output_moment_demo(&cfg).unwrap();
        assert_eq!(report.radical_distance, 0.0);
        assert!((report.l2_distance - 1.0).abs() < 1e-2);
        assert!((report.moments_first.get1(0, 0).unwrap() - 1.0).abs() < 1e-12);
        for k in 1..=cfg.moment_order {
            assert!((report.moments_first.get1(k, 0).unwrap() - 0.5).abs() < 1e-3);
        }
        // sup_k |1 - (1/2)^{1/k}| is attained at k = 1.
        assert!((report.radical_to_constant_one - 0.5).abs() < 1e-12);
    }
}
