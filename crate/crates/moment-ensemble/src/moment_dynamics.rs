//! Dynamics of moment sequences.
//!
//! For the magnetization ensemble the moments obey the closed chain
//! `dm_k/dt = (u OMEGA_Y + v OMEGA_X) m_{k+1}`: order `k` couples only to
//! order `k + 1`, so a finite truncation needs a closure rule for the moment
//! just past the top. For a general control-affine ensemble the moment
//! dynamics is still control-affine — its drift and control images are the
//! moment sequences of `f(x(t, .), .)` and `g_i(x(t, .), .)` — but not a
//! closed function of the moments, so it is integrated alongside the
//! ensemble profile that generates it.

use crate::ensemble::{check_states, ControlAffineEnsemble, ControlSignal, EnsembleProfile};
use crate::error::Error;
use crate::grid::ParameterGrid;
use crate::moments::{moments_of_states, MomentSequence};
use crate::numeric::pairwise_accumulate;
use crate::systems::rotation_rhs;
use crate::Result;

/// Rule supplying the moment one order past the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    /// The co-simulated ensemble supplies the top moment (at every stage).
    FromEnsemble,
    /// Repeat the highest stored moment. Reasonable when the parameter
    /// interval sits near 1, where adjacent moment orders nearly coincide.
    HoldLast,
    /// Close with zero.
    Zero,
}

/// Truncated moment chain of the magnetization ensemble. Orders `0..=N+1`
/// are stored so a feedback law of order `N` can read `m_{j+1}` for every
/// `j <= N`; the closure only enters at the very top.
#[derive(Debug, Clone)]
pub struct BlochMomentChain {
    max_order: usize,
    interval: (f64, f64),
    closure: Closure,
    moments: Vec<[f64; 3]>,
    injected_top: Option<[f64; 3]>,
    time: f64,
}

impl BlochMomentChain {
    /// An all-zero chain of feedback order `max_order`.
    pub fn new(max_order: usize, interval: (f64, f64), closure: Closure) -> Self {
        Self {
            max_order,
            interval,
            closure,
            moments: vec![[0.0; 3]; max_order + 2],
            injected_top: None,
            time: 0.0,
        }
    }

    /// Chain initialized with the quadrature moments of a profile.
    pub fn from_profile(
        max_order: usize,
        closure: Closure,
        profile: &EnsembleProfile,
        grid: &ParameterGrid,
    ) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::DimensionMismatch(
                "the moment chain is indexed by a scalar label".into(),
            ));
        }
        if profile.state_dim() != 3 {
            return Err(Error::DimensionMismatch(
                "the moment chain tracks three-component states".into(),
            ));
        }
        let seq = moments_of_states(profile.states(), 3, grid, max_order + 1)?;
        let mut moments = vec![[0.0; 3]; max_order + 2];
        for (k, slot) in moments.iter_mut().enumerate() {
            for i in 0..3 {
                slot[i] = seq.get1(k, i).expect("order within truncation");
            }
        }
        let &(a, b) = &grid.bounds()[0];
        Ok(Self {
            max_order,
            interval: (a, b),
            closure,
            moments,
            injected_top: None,
            time: profile.time(),
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Highest stored order, `N + 1`.
    pub fn stored_order(&self) -> usize {
        self.max_order + 1
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn moments(&self) -> &[[f64; 3]] {
        &self.moments
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Supplies the externally computed top moment `m_{N+2}` used by the
    /// from-ensemble closure.
    pub fn set_injected_top(&mut self, top: [f64; 3]) {
        self.injected_top = Some(top);
    }

    /// The chain state as a dense moment sequence (orders `0..=N+1`).
    pub fn to_moment_sequence(&self) -> MomentSequence {
        chain_sequence(&self.moments)
    }
}

/// Converts chain storage into a scalar-label, three-channel sequence.
pub fn chain_sequence(moments: &[[f64; 3]]) -> MomentSequence {
    let mut values = Vec::with_capacity(moments.len() * 3);
    for m in moments {
        values.extend_from_slice(m);
    }
    MomentSequence::from_values(1, 3, moments.len() - 1, values)
        .expect("chain storage is dense and finite")
}

fn chain_rhs_with_top(moments: &[[f64; 3]], u: f64, v: f64, top: [f64; 3]) -> Vec<[f64; 3]> {
    let len = moments.len();
    let mut out = vec![[0.0; 3]; len];
    for k in 0..len - 1 {
        out[k] = rotation_rhs(u, v, &moments[k + 1]);
    }
    out[len - 1] = rotation_rhs(u, v, &top);
    out
}

fn closure_top(moments: &[[f64; 3]], closure: Closure, injected: Option<[f64; 3]>) -> Result<[f64; 3]> {
    match closure {
        Closure::HoldLast => Ok(*moments.last().expect("chain is non-empty")),
        Closure::Zero => Ok([0.0; 3]),
        Closure::FromEnsemble => injected.ok_or_else(|| {
            Error::InvalidArgument(
                "from-ensemble closure needs an injected top moment or a co-simulated ensemble"
                    .into(),
            )
        }),
    }
}

/// `d m_k / dt = (u OMEGA_Y + v OMEGA_X) m_{k+1}` for `k = 0..=N+1`, with
/// `m_{N+2}` supplied by the closure policy.
pub fn bloch_moment_rhs(chain: &BlochMomentChain, u: f64, v: f64) -> Result<Vec<[f64; 3]>> {
    let top = closure_top(&chain.moments, chain.closure, chain.injected_top)?;
    Ok(chain_rhs_with_top(&chain.moments, u, v, top))
}

/// Quadrature moment of a given order of raw three-component states.
fn grid_moment(states: &[f64], grid: &ParameterGrid, order: usize) -> [f64; 3] {
    let acc = pairwise_accumulate(grid.len(), 3, &|p, acc: &mut [f64]| {
        let w_pw = grid.weight(p) * grid.node(p)[0].powi(order as i32);
        let x = &states[3 * p..3 * p + 3];
        acc[0] += w_pw * x[0];
        acc[1] += w_pw * x[1];
        acc[2] += w_pw * x[2];
    });
    [acc[0], acc[1], acc[2]]
}

/// Moment trajectory produced by [`integrate_moment_chain`].
pub struct ChainTrajectory {
    /// Step times, including the initial one.
    pub times: Vec<f64>,
    /// Chain snapshot (orders `0..=N+1`) at each step time.
    pub moments: Vec<Vec<[f64; 3]>>,
    pub control_times: Vec<f64>,
    /// `(u, v)` applied over each step.
    pub controls: Vec<(f64, f64)>,
    /// Strided co-simulated profile snapshots (empty without co-simulation).
    pub profile_times: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub final_profile: Option<EnsembleProfile>,
}

impl ChainTrajectory {
    pub fn moments_at(&self, idx: usize) -> MomentSequence {
        chain_sequence(&self.moments[idx])
    }
}

/// RK4 integration of the chain over `horizon`. With a co-simulated
/// ensemble the profile advances jointly and, under the from-ensemble
/// closure, supplies the top moment at every RK4 stage; the feedback signal
/// reads the integrated chain state once per step (zero-order hold).
pub fn integrate_moment_chain(
    chain: &BlochMomentChain,
    signal: &mut ControlSignal,
    dt: f64,
    horizon: f64,
    co_ensemble: Option<(&ControlAffineEnsemble, &EnsembleProfile)>,
    profile_stride: usize,
) -> Result<ChainTrajectory> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(
            "dt and horizon must be positive".into(),
        ));
    }
    let n_steps = (horizon / dt).round().max(1.0) as usize;
    let profile_stride = profile_stride.max(1);

    let mut state = chain.moments.to_vec();
    let mut t = chain.time;
    let mut profile = match co_ensemble {
        Some((ens, p0)) => {
            if p0.state_dim() != 3 || p0.len() != ens.grid().len() || ens.grid().dim() != 1 {
                return Err(Error::DimensionMismatch(
                    "co-simulated profile must be three-component over the ensemble grid".into(),
                ));
            }
            Some(p0.clone())
        }
        None => {
            if chain.closure == Closure::FromEnsemble && chain.injected_top.is_none() {
                return Err(Error::InvalidArgument(
                    "from-ensemble closure needs a co-simulated ensemble".into(),
                ));
            }
            None
        }
    };

    let mut traj = ChainTrajectory {
        times: vec![t],
        moments: vec![state.clone()],
        control_times: Vec::new(),
        controls: Vec::new(),
        profile_times: Vec::new(),
        profiles: Vec::new(),
        final_profile: None,
    };
    if let Some(p) = &profile {
        traj.profile_times.push(p.time());
        traj.profiles.push(p.states().to_vec());
    }

    let top_order = chain.stored_order() + 1;
    for s in 0..n_steps {
        let seq = chain_sequence(&state);
        let uv = signal.evaluate_on_moments(&seq, t)?;
        if uv.len() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "chain feedback must return (u, v), got {} entries",
                uv.len()
            )));
        }
        let (u, v) = (uv[0], uv[1]);
        traj.control_times.push(t);
        traj.controls.push((u, v));

        match (&mut profile, co_ensemble) {
            (Some(p), Some((ens, _))) => {
                // Joint RK4: the stage profile supplies the top moment.
                let grid = ens.grid();
                let y0 = p.states().to_vec();
                let m0 = state.clone();
                let stage_top = |states: &[f64]| grid_moment(states, grid, top_order);

                let mut kp = vec![0.0; y0.len()];
                ens.profile_rhs(&y0, &uv, &mut kp);
                let top = match chain.closure {
                    Closure::FromEnsemble => stage_top(&y0),
                    other => closure_top(&m0, other, None)?,
                };
                let km = chain_rhs_with_top(&m0, u, v, top);

                let y1 = vec_axpy(&y0, 0.5 * dt, &kp);
                let m1 = chain_axpy(&m0, 0.5 * dt, &km);
                let mut kp2 = vec![0.0; y0.len()];
                ens.profile_rhs(&y1, &uv, &mut kp2);
                let top2 = match chain.closure {
                    Closure::FromEnsemble => stage_top(&y1),
                    other => closure_top(&m1, other, None)?,
                };
                let km2 = chain_rhs_with_top(&m1, u, v, top2);

                let y2 = vec_axpy(&y0, 0.5 * dt, &kp2);
                let m2 = chain_axpy(&m0, 0.5 * dt, &km2);
                let mut kp3 = vec![0.0; y0.len()];
                ens.profile_rhs(&y2, &uv, &mut kp3);
                let top3 = match chain.closure {
                    Closure::FromEnsemble => stage_top(&y2),
                    other => closure_top(&m2, other, None)?,
                };
                let km3 = chain_rhs_with_top(&m2, u, v, top3);

                let y3 = vec_axpy(&y0, dt, &kp3);
                let m3 = chain_axpy(&m0, dt, &km3);
                let mut kp4 = vec![0.0; y0.len()];
                ens.profile_rhs(&y3, &uv, &mut kp4);
                let top4 = match chain.closure {
                    Closure::FromEnsemble => stage_top(&y3),
                    other => closure_top(&m3, other, None)?,
                };
                let km4 = chain_rhs_with_top(&m3, u, v, top4);

                let states = p.states_mut();
                for i in 0..states.len() {
                    states[i] =
                        y0[i] + dt / 6.0 * (kp[i] + 2.0 * kp2[i] + 2.0 * kp3[i] + kp4[i]);
                }
                for k in 0..state.len() {
                    for i in 0..3 {
                        state[k][i] = m0[k][i]
                            + dt / 6.0
                                * (km[k][i] + 2.0 * km2[k][i] + 2.0 * km3[k][i] + km4[k][i]);
                    }
                }
                p.set_time(t + dt);
                check_states(p)?;
            }
            _ => {
                // Chain-only RK4 under the closure policy.
                let m0 = state.clone();
                let stage = |m: &Vec<[f64; 3]>| -> Result<Vec<[f64; 3]>> {
                    let top = closure_top(m, chain.closure, chain.injected_top)?;
                    Ok(chain_rhs_with_top(m, u, v, top))
                };
                let km = stage(&m0)?;
                let m1 = chain_axpy(&m0, 0.5 * dt, &km);
                let km2 = stage(&m1)?;
                let m2 = chain_axpy(&m0, 0.5 * dt, &km2);
                let km3 = stage(&m2)?;
                let m3 = chain_axpy(&m0, dt, &km3);
                let km4 = stage(&m3)?;
                for k in 0..state.len() {
                    for i in 0..3 {
                        state[k][i] = m0[k][i]
                            + dt / 6.0
                                * (km[k][i] + 2.0 * km2[k][i] + 2.0 * km3[k][i] + km4[k][i]);
                    }
                }
            }
        }

        t += dt;
        if state.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("chain moments at t = {t}")));
        }
        traj.times.push(t);
        traj.moments.push(state.clone());
        if let Some(p) = &profile {
            if (s + 1) % profile_stride == 0 || s + 1 == n_steps {
                traj.profile_times.push(p.time());
                traj.profiles.push(p.states().to_vec());
            }
        }
    }
    traj.final_profile = profile;
    Ok(traj)
}

fn vec_axpy(base: &[f64], scale: f64, delta: &[f64]) -> Vec<f64> {
    base.iter()
        .zip(delta)
        .map(|(b, d)| b + scale * d)
        .collect()
}

fn chain_axpy(base: &[[f64; 3]], scale: f64, delta: &[[f64; 3]]) -> Vec<[f64; 3]> {
    base.iter()
        .zip(delta)
        .map(|(b, d)| [b[0] + scale * d[0], b[1] + scale * d[1], b[2] + scale * d[2]])
        .collect()
}

/// Moment dynamics of a general control-affine ensemble, evaluated from the
/// co-simulated profile (the system is not closed in moment space).
pub struct PushforwardMomentSystem<'a> {
    pub ensemble: &'a ControlAffineEnsemble,
    pub max_order: usize,
}

impl<'a> PushforwardMomentSystem<'a> {
    pub fn new(ensemble: &'a ControlAffineEnsemble, max_order: usize) -> Self {
        Self {
            ensemble,
            max_order,
        }
    }
}

/// `dm/dt` at the given profile:
/// `moments(f(x(t,.),.)) + sum_i u_i moments(g_i(x(t,.),.))`, evaluated by
/// quadrature on the profile.
pub fn pushforward_rhs(
    sys: &PushforwardMomentSystem<'_>,
    profile: &EnsembleProfile,
    u: &[f64],
) -> Result<MomentSequence> {
    let ens = sys.ensemble;
    if profile.len() != ens.grid().len() || profile.state_dim() != ens.state_dim() {
        return Err(Error::DimensionMismatch(
            "profile does not match the ensemble grid".into(),
        ));
    }
    if u.len() != ens.control_dim() {
        return Err(Error::DimensionMismatch(format!(
            "control vector has {} entries, expected {}",
            u.len(),
            ens.control_dim()
        )));
    }
    let mut deriv = vec![0.0; profile.states().len()];
    ens.profile_rhs(profile.states(), u, &mut deriv);
    moments_of_states(&deriv, ens.state_dim(), ens.grid(), sys.max_order)
}

/// Trajectory of the jointly integrated (profile, moment-state) pair.
pub struct PushforwardTrajectory {
    pub times: Vec<f64>,
    /// Integrated moment state at every step time.
    pub moments: Vec<MomentSequence>,
    pub control_times: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    pub profile_times: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub final_profile: EnsembleProfile,
}

/// Joint RK4 integration of ensemble and pushforward moment system; the
/// feedback signal reads the integrated moment state once per step.
pub fn integrate_pushforward(
    sys: &PushforwardMomentSystem<'_>,
    profile0: &EnsembleProfile,
    signal: &mut ControlSignal,
    dt: f64,
    horizon: f64,
    profile_stride: usize,
) -> Result<PushforwardTrajectory> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(
            "dt and horizon must be positive".into(),
        ));
    }
    let ens = sys.ensemble;
    if profile0.len() != ens.grid().len() || profile0.state_dim() != ens.state_dim() {
        return Err(Error::DimensionMismatch(
            "profile does not match the ensemble grid".into(),
        ));
    }
    let n_steps = (horizon / dt).round().max(1.0) as usize;
    let profile_stride = profile_stride.max(1);
    let n = ens.state_dim();
    let grid = ens.grid();

    let mut profile = profile0.clone();
    let m0_seq = moments_of_states(profile.states(), n, grid, sys.max_order)?;
    let mut m_state: Vec<f64> = m0_seq.values().to_vec();
    let mut t = profile.time();

    let to_seq = |values: &[f64]| {
        MomentSequence::from_values(grid.dim(), n, sys.max_order, values.to_vec())
    };

    let mut traj = PushforwardTrajectory {
        times: vec![t],
        moments: vec![m0_seq],
        control_times: Vec::new(),
        controls: Vec::new(),
        profile_times: vec![t],
        profiles: vec![profile.states().to_vec()],
        final_profile: profile.clone(),
    };

    for s in 0..n_steps {
        let seq = to_seq(&m_state)?;
        let u = signal.evaluate_on_moments(&seq, t)?;
        if u.len() != ens.control_dim() {
            return Err(Error::DimensionMismatch(format!(
                "control signal returned {} entries, expected {}",
                u.len(),
                ens.control_dim()
            )));
        }
        traj.control_times.push(t);
        traj.controls.push(u.clone());

        // The moment derivative at each stage is the moment image of the
        // stage profile derivative (linearity of the quadrature).
        let y0 = profile.states().to_vec();
        let mut kp1 = vec![0.0; y0.len()];
        ens.profile_rhs(&y0, &u, &mut kp1);
        let km1 = moments_of_states(&kp1, n, grid, sys.max_order)?;

        let y1 = vec_axpy(&y0, 0.5 * dt, &kp1);
        let mut kp2 = vec![0.0; y0.len()];
        ens.profile_rhs(&y1, &u, &mut kp2);
        let km2 = moments_of_states(&kp2, n, grid, sys.max_order)?;

        let y2 = vec_axpy(&y0, 0.5 * dt, &kp2);
        let mut kp3 = vec![0.0; y0.len()];
        ens.profile_rhs(&y2, &u, &mut kp3);
        let km3 = moments_of_states(&kp3, n, grid, sys.max_order)?;

        let y3 = vec_axpy(&y0, dt, &kp3);
        let mut kp4 = vec![0.0; y0.len()];
        ens.profile_rhs(&y3, &u, &mut kp4);
        let km4 = moments_of_states(&kp4, n, grid, sys.max_order)?;

        let states = profile.states_mut();
        for i in 0..states.len() {
            states[i] = y0[i] + dt / 6.0 * (kp1[i] + 2.0 * kp2[i] + 2.0 * kp3[i] + kp4[i]);
        }
        for i in 0..m_state.len() {
            m_state[i] += dt / 6.0
                * (km1.values()[i]
                    + 2.0 * km2.values()[i]
                    + 2.0 * km3.values()[i]
                    + km4.values()[i]);
        }
        profile.set_time(t + dt);
        t += dt;
        check_states(&profile)?;

        traj.times.push(t);
        traj.moments.push(to_seq(&m_state)?);
        if (s + 1) % profile_stride == 0 || s + 1 == n_steps {
            traj.profile_times.push(t);
            traj.profiles.push(profile.states().to_vec());
        }
    }
    traj.final_profile = profile;
    Ok(traj)
}
