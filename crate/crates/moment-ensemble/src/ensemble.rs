//! Control-affine ensembles discretized over a parameter grid, and their
//! fixed-step RK4 time integration.
//!
//! An ensemble couples every grid node `beta_p` to a copy of
//! `dx/dt = f(x, beta_p) + sum_i u_i g_i(x, beta_p)` driven by the shared
//! input `u(t)`. The input is held constant over each step (zero-order
//! hold); per-node stages are independent, and all reductions over nodes
//! use pairwise summation so runs are bit-reproducible.

use crate::error::Error;
use crate::grid::ParameterGrid;
use crate::moments::{compute_ensemble_moments, MomentSequence};
use crate::numeric::{euclidean_norm, pairwise_sum};
use crate::Result;

/// States above this magnitude abort the integration.
pub const STATE_BOUND: f64 = 1e6;

/// A vector field `(x, beta) -> R^n`, written into the output slice.
pub type FieldFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// The discretized ensemble state: one `R^n` row per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleProfile {
    state_dim: usize,
    /// Flat row-major storage, `len = nodes * state_dim`.
    states: Vec<f64>,
    time: f64,
}

impl EnsembleProfile {
    /// Builds a profile by evaluating `f` at every grid node at time 0.
    pub fn from_fn<F: Fn(&[f64]) -> Vec<f64>>(
        grid: &ParameterGrid,
        state_dim: usize,
        f: F,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(grid.len() * state_dim);
        for p in 0..grid.len() {
            let x = f(grid.node(p));
            if x.len() != state_dim {
                return Err(Error::DimensionMismatch(format!(
                    "profile function returned {} components, expected {state_dim}",
                    x.len()
                )));
            }
            states.extend_from_slice(&x);
        }
        let profile = Self {
            state_dim,
            states,
            time: 0.0,
        };
        profile.check_finite()?;
        Ok(profile)
    }

    /// A profile equal to `point` at every node.
    pub fn constant(grid: &ParameterGrid, point: &[f64]) -> Result<Self> {
        Self::from_fn(grid, point.len(), |_| point.to_vec())
    }

    pub fn from_raw(state_dim: usize, states: Vec<f64>, time: f64) -> Result<Self> {
        if state_dim == 0 || states.len() % state_dim != 0 {
            return Err(Error::DimensionMismatch(
                "profile storage does not match state dimension".into(),
            ));
        }
        let profile = Self {
            state_dim,
            states,
            time,
        };
        profile.check_finite()?;
        Ok(profile)
    }

    fn check_finite(&self) -> Result<()> {
        for p in 0..self.len() {
            if self.node_state(p).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("profile state at node {p}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn node_state(&self, p: usize) -> &[f64] {
        &self.states[p * self.state_dim..(p + 1) * self.state_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub(crate) fn states_mut(&mut self) -> &mut [f64] {
        &mut self.states
    }
}

/// Drift and control fields of a control-affine ensemble over a grid.
pub struct ControlAffineEnsemble {
    state_dim: usize,
    drift: FieldFn,
    controls: Vec<FieldFn>,
    grid: ParameterGrid,
}

impl ControlAffineEnsemble {
    pub fn new(
        state_dim: usize,
        grid: ParameterGrid,
        drift: FieldFn,
        controls: Vec<FieldFn>,
    ) -> Self {
        Self {
            state_dim,
            drift,
            controls,
            grid,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.controls.len()
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    /// `out = f(x, beta) + sum_i u_i g_i(x, beta)`.
    pub fn eval_rhs(&self, x: &[f64], beta: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, beta, out);
        let mut scratch = vec![0.0; self.state_dim];
        for (ui, g) in u.iter().zip(&self.controls) {
            g(x, beta, &mut scratch);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += ui * s;
            }
        }
    }

    /// Writes the full profile derivative (all nodes) into `out`.
    pub(crate) fn profile_rhs(&self, states: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.state_dim;
        let mut drift_buf = vec![0.0; n];
        let mut ctrl_buf = vec![0.0; n];
        for p in 0..self.grid.len() {
            let x = &states[p * n..(p + 1) * n];
            let beta = self.grid.node(p);
            let row = &mut out[p * n..(p + 1) * n];
            (self.drift)(x, beta, &mut drift_buf);
            row.copy_from_slice(&drift_buf);
            for (ui, g) in u.iter().zip(&self.controls) {
                g(x, beta, &mut ctrl_buf);
                for (o, s) in row.iter_mut().zip(&ctrl_buf) {
                    *o += ui * s;
                }
            }
        }
    }

    fn check_shapes(&self, profile: &EnsembleProfile, u: &[f64]) -> Result<()> {
        if profile.state_dim() != self.state_dim {
            return Err(Error::DimensionMismatch(format!(
                "profile state dimension {} vs ensemble {}",
                profile.state_dim(),
                self.state_dim
            )));
        }
        if profile.len() != self.grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "profile has {} nodes, grid has {}",
                profile.len(),
                self.grid.len()
            )));
        }
        if u.len() != self.control_dim() {
            return Err(Error::DimensionMismatch(format!(
                "control vector has {} entries, ensemble has {} control fields",
                u.len(),
                self.control_dim()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control input".into()));
        }
        Ok(())
    }
}

/// One classical RK4 step with `u` held constant. Time advances by `dt`.
pub fn step(
    ens: &ControlAffineEnsemble,
    profile: &EnsembleProfile,
    u: &[f64],
    dt: f64,
) -> Result<EnsembleProfile> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    ens.check_shapes(profile, u)?;
    let mut ws = Rk4Workspace::new(profile.states().len());
    let mut next = profile.clone();
    rk4_step_into(ens, &mut next, u, dt, &mut ws);
    check_states(&next)?;
    Ok(next)
}

pub(crate) struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4Workspace {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            stage: vec![0.0; len],
        }
    }
}

/// In-place RK4 update of the profile states (shape checks done by callers).
pub(crate) fn rk4_step_into(
    ens: &ControlAffineEnsemble,
    profile: &mut EnsembleProfile,
    u: &[f64],
    dt: f64,
    ws: &mut Rk4Workspace,
) {
    let y0: Vec<f64> = profile.states().to_vec();
    ens.profile_rhs(&y0, u, &mut ws.k1);
    axpy(&y0, 0.5 * dt, &ws.k1, &mut ws.stage);
    ens.profile_rhs(&ws.stage, u, &mut ws.k2);
    axpy(&y0, 0.5 * dt, &ws.k2, &mut ws.stage);
    ens.profile_rhs(&ws.stage, u, &mut ws.k3);
    axpy(&y0, dt, &ws.k3, &mut ws.stage);
    ens.profile_rhs(&ws.stage, u, &mut ws.k4);
    let states = profile.states_mut();
    for i in 0..states.len() {
        states[i] = y0[i] + dt / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
    let t = profile.time();
    profile.set_time(t + dt);
}

fn axpy(base: &[f64], scale: f64, delta: &[f64], out: &mut [f64]) {
    for i in 0..base.len() {
        out[i] = base[i] + scale * delta[i];
    }
}

pub(crate) fn check_states(profile: &EnsembleProfile) -> Result<()> {
    for p in 0..profile.len() {
        for &v in profile.node_state(p) {
            if !v.is_finite() || v.abs() > STATE_BOUND {
                return Err(Error::BlowUp {
                    node: p,
                    time: profile.time(),
                    bound: STATE_BOUND,
                });
            }
        }
    }
    Ok(())
}

/// The shared input applied to the ensemble: open-loop in time, or moment
/// feedback evaluated on the current profile's moments. Feedback laws may
/// fail (e.g. to report a stall), which aborts the run.
pub enum ControlSignal {
    OpenLoop(Box<dyn FnMut(f64) -> Vec<f64>>),
    Feedback {
        /// Truncation order of the moment sequence handed to the law.
        moment_order: usize,
        law: Box<dyn FnMut(&MomentSequence, f64) -> Result<Vec<f64>>>,
    },
}

impl ControlSignal {
    pub fn constant(u: Vec<f64>) -> Self {
        ControlSignal::OpenLoop(Box::new(move |_| u.clone()))
    }

    pub(crate) fn evaluate(
        &mut self,
        profile: &EnsembleProfile,
        grid: &ParameterGrid,
        t: f64,
    ) -> Result<Vec<f64>> {
        match self {
            ControlSignal::OpenLoop(f) => Ok(f(t)),
            ControlSignal::Feedback { moment_order, law } => {
                let m = compute_ensemble_moments(profile, grid, *moment_order)?;
                law(&m, t)
            }
        }
    }

    /// Evaluates the signal on externally supplied moments (used when the
    /// moment system itself is the integrated state).
    pub(crate) fn evaluate_on_moments(&mut self, m: &MomentSequence, t: f64) -> Result<Vec<f64>> {
        match self {
            ControlSignal::OpenLoop(f) => Ok(f(t)),
            ControlSignal::Feedback { law, .. } => law(m, t),
        }
    }
}

/// A named scalar functional of the profile, sampled along the trajectory.
pub struct Observer {
    pub name: String,
    pub eval: Box<dyn Fn(&EnsembleProfile) -> f64>,
}

/// Time series produced by [`simulate`].
pub struct TrajectoryRecord {
    pub state_dim: usize,
    pub control_dim: usize,
    /// Sample times (stride-thinned, always including first and last).
    pub times: Vec<f64>,
    /// Profile snapshot (flat nodes x state) per sample time.
    pub states: Vec<Vec<f64>>,
    /// Control applied over the step starting at each *step* time.
    pub control_times: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    /// Profile moments per sample time when requested.
    pub moments: Vec<MomentSequence>,
    pub observers: Vec<(String, Vec<f64>)>,
}

/// Iterates [`step`] over the horizon `T`, evaluating the signal once per
/// step; with a feedback signal the loop is closed through the profile's
/// moments. Records states (and observers) every `stride` steps.
pub fn simulate(
    ens: &ControlAffineEnsemble,
    profile0: &EnsembleProfile,
    signal: &mut ControlSignal,
    dt: f64,
    horizon: f64,
    observers: &[Observer],
    stride: usize,
    record_moments: Option<usize>,
) -> Result<TrajectoryRecord> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(
            "dt and horizon must be positive".into(),
        ));
    }
    let stride = stride.max(1);
    let n_steps = (horizon / dt).round().max(1.0) as usize;
    ens.check_shapes(profile0, &vec![0.0; ens.control_dim()])?;

    let mut profile = profile0.clone();
    let mut ws = Rk4Workspace::new(profile.states().len());
    let mut record = TrajectoryRecord {
        state_dim: ens.state_dim(),
        control_dim: ens.control_dim(),
        times: Vec::new(),
        states: Vec::new(),
        control_times: Vec::new(),
        controls: Vec::new(),
        moments: Vec::new(),
        observers: observers
            .iter()
            .map(|o| (o.name.clone(), Vec::new()))
            .collect(),
    };
    let sample = |record: &mut TrajectoryRecord, profile: &EnsembleProfile| -> Result<()> {
        record.times.push(profile.time());
        record.states.push(profile.states().to_vec());
        if let Some(order) = record_moments {
            record
                .moments
                .push(compute_ensemble_moments(profile, ens.grid(), order)?);
        }
        for (slot, obs) in record.observers.iter_mut().zip(observers) {
            slot.1.push((obs.eval)(profile));
        }
        Ok(())
    };

    sample(&mut record, &profile)?;
    for s in 0..n_steps {
        let u = signal.evaluate(&profile, ens.grid(), profile.time())?;
        if u.len() != ens.control_dim() {
            return Err(Error::DimensionMismatch(format!(
                "control signal returned {} entries, expected {}",
                u.len(),
                ens.control_dim()
            )));
        }
        record.control_times.push(profile.time());
        record.controls.push(u.clone());
        rk4_step_into(ens, &mut profile, &u, dt, &mut ws);
        check_states(&profile)?;
        if (s + 1) % stride == 0 || s + 1 == n_steps {
            sample(&mut record, &profile)?;
        }
    }
    Ok(record)
}

/// Quadrature `L^p` distance between two profiles over the grid; per-node
/// differences are measured in the Euclidean norm, and `p = infinity` takes
/// the max over nodes.
pub fn lp_distance(
    a: &EnsembleProfile,
    b: &EnsembleProfile,
    grid: &ParameterGrid,
    p: f64,
) -> Result<f64> {
    if a.state_dim() != b.state_dim() || a.len() != b.len() || a.len() != grid.len() {
        return Err(Error::DimensionMismatch(
            "profiles and grid must share shape".into(),
        ));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be >= 1 or infinity, got {p}"
        )));
    }
    let node_norm = |q: usize| -> f64 {
        let diff: Vec<f64> = a
            .node_state(q)
            .iter()
            .zip(b.node_state(q))
            .map(|(x, y)| x - y)
            .collect();
        euclidean_norm(&diff)
    };
    if p.is_infinite() {
        let mut best: f64 = 0.0;
        for q in 0..a.len() {
            best = best.max(node_norm(q));
        }
        return Ok(best);
    }
    let terms: Vec<f64> = (0..a.len())
        .map(|q| grid.weight(q) * node_norm(q).powf(p))
        .collect();
    Ok(pairwise_sum(&terms).powf(1.0 / p))
}
