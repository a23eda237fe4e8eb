//! Moment-feedback synthesis from a quadratic Lyapunov function.
//!
//! `V(m) = sum_{|k| <= N} w_{|k|} |m_k - mF_k|^2` measures the truncated
//! moment error to a target sequence. Along the moment dynamics
//! `dm/dt = fbar(m) + sum_i u_i gbar_i(m)` the choice
//! `u_i = -gamma sum_k w_k e_k . gbar_i(m)_k` makes the drift-free part of
//! `dV/dt` equal to `-2 gamma^-1 sum_i u_i^2 <= 0`, so `V` descends whenever
//! the drift contribution is nonpositive (always, for drift-free systems).
//! For the magnetization chain with unit gain this selection coincides with
//! the explicit two-channel law implemented in
//! [`explicit_bloch_control`].

use crate::error::Error;
use crate::moments::MomentSequence;
use crate::multiindex::enumerate_multiindices;
use crate::systems::rotation_rhs;
use crate::Result;

/// Quadratic form over truncated moment errors.
#[derive(Debug, Clone)]
pub struct QuadraticLyapunov {
    target: MomentSequence,
    /// Per-order positive weights (length `N + 1`); all ones by default.
    weights: Option<Vec<f64>>,
}

impl QuadraticLyapunov {
    pub fn new(target: MomentSequence) -> Self {
        Self {
            target,
            weights: None,
        }
    }

    pub fn with_weights(target: MomentSequence, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != target.max_order() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "need one weight per order 0..={}, got {}",
                target.max_order(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        Ok(Self {
            target,
            weights: Some(weights),
        })
    }

    /// Truncation order `N` of the error.
    pub fn order(&self) -> usize {
        self.target.max_order()
    }

    pub fn target(&self) -> &MomentSequence {
        &self.target
    }

    fn weight(&self, order: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[order])
    }

    fn check_compatible(&self, m: &MomentSequence) -> Result<()> {
        if m.param_dim() != self.target.param_dim()
            || m.state_dim() != self.target.state_dim()
            || m.max_order() < self.target.max_order()
        {
            return Err(Error::DimensionMismatch(
                "moment state does not cover the Lyapunov truncation".into(),
            ));
        }
        Ok(())
    }

    /// Truncated error `e = m - mF` (orders `0..=N`).
    pub fn error(&self, m: &MomentSequence) -> Result<MomentSequence> {
        self.check_compatible(m)?;
        let mut e = self.target.clone();
        let mut values = Vec::with_capacity(e.values().len());
        for k in enumerate_multiindices(self.target.param_dim(), self.order()) {
            for ch in 0..self.target.state_dim() {
                values.push(m.try_get(&k, ch)? - self.target.try_get(&k, ch)?);
            }
        }
        e.values_mut().copy_from_slice(&values);
        Ok(e)
    }

    /// `V(m) = sum w_{|k|} (m_k - mF_k)^2`, zero exactly on the target
    /// truncation.
    pub fn value(&self, m: &MomentSequence) -> Result<f64> {
        let e = self.error(m)?;
        let mut total = 0.0;
        for k in enumerate_multiindices(e.param_dim(), e.max_order()) {
            let w = self.weight(k.order());
            for ch in 0..e.state_dim() {
                let v = e.try_get(&k, ch)?;
                total += w * v * v;
            }
        }
        Ok(total)
    }

    /// Gradient of [`Self::value`] with respect to the moment entries:
    /// `2 w_{|k|} e_k`.
    pub fn gradient(&self, m: &MomentSequence) -> Result<MomentSequence> {
        let mut e = self.error(m)?;
        for k in enumerate_multiindices(self.target.param_dim(), self.order()) {
            let w = self.weight(k.order());
            for ch in 0..self.target.state_dim() {
                let v = e.try_get(&k, ch)?;
                e.set(&k, ch, 2.0 * w * v);
            }
        }
        Ok(e)
    }
}

/// Free-function form of [`QuadraticLyapunov::value`].
pub fn lyapunov_value(lyapunov: &QuadraticLyapunov, m: &MomentSequence) -> Result<f64> {
    lyapunov.value(m)
}

/// Weighted inner products `S_i = sum_k w_{|k|} e_k . gbar_i(m)_k` between
/// the moment error and each control field's moment image.
pub fn damping_inner_products(
    lyapunov: &QuadraticLyapunov,
    m: &MomentSequence,
    bar_g: &[MomentSequence],
) -> Result<Vec<f64>> {
    let e = lyapunov.error(m)?;
    let mut out = Vec::with_capacity(bar_g.len());
    for g in bar_g {
        if g.param_dim() != e.param_dim()
            || g.state_dim() != e.state_dim()
            || g.max_order() < e.max_order()
        {
            return Err(Error::DimensionMismatch(
                "control moment image does not cover the Lyapunov truncation".into(),
            ));
        }
        let mut s = 0.0;
        for k in enumerate_multiindices(e.param_dim(), e.max_order()) {
            let w = lyapunov.weight(k.order());
            for ch in 0..e.state_dim() {
                s += w * e.try_get(&k, ch)? * g.try_get(&k, ch)?;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Damping selection `u_i = -gain * S_i`; at the target the gradient
/// vanishes and the control is zero.
pub fn gradient_damping_control(
    lyapunov: &QuadraticLyapunov,
    gain: f64,
    m: &MomentSequence,
    bar_g: &[MomentSequence],
) -> Result<Vec<f64>> {
    if !(gain > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "damping gain must be positive, got {gain}"
        )));
    }
    Ok(damping_inner_products(lyapunov, m, bar_g)?
        .into_iter()
        .map(|s| -gain * s)
        .collect())
}

/// Moment images of the two magnetization control fields at the state `m`:
/// `gbar_u(m)_k = OMEGA_Y m_{k+1}` and `gbar_v(m)_k = OMEGA_X m_{k+1}` for
/// `k` up to `m.max_order() - 1`.
pub fn bloch_control_fields(m: &MomentSequence) -> Result<[MomentSequence; 2]> {
    if m.param_dim() != 1 || m.state_dim() != 3 {
        return Err(Error::DimensionMismatch(
            "magnetization moment state must be scalar-label with three channels".into(),
        ));
    }
    if m.max_order() == 0 {
        return Err(Error::OrderOverflow {
            needed: 1,
            max_order: 0,
        });
    }
    let order = m.max_order() - 1;
    let mut gu = MomentSequence::zeros(1, 3, order);
    let mut gv = MomentSequence::zeros(1, 3, order);
    for k in 0..=order {
        let next = [
            m.get1(k + 1, 0).expect("within truncation"),
            m.get1(k + 1, 1).expect("within truncation"),
            m.get1(k + 1, 2).expect("within truncation"),
        ];
        let u_dir = rotation_rhs(1.0, 0.0, &next);
        let v_dir = rotation_rhs(0.0, 1.0, &next);
        let idx = crate::multiindex::MultiIndex::new(vec![k]);
        for i in 0..3 {
            gu.set(&idx, i, u_dir[i]);
            gv.set(&idx, i, v_dir[i]);
        }
    }
    Ok([gu, gv])
}

/// Direct transcription of the two-channel magnetization law:
/// `u = -sum_j w_j (e1_j m3_{j+1} - e3_j m1_{j+1})` and the structurally
/// analogous `v = -sum_j w_j (e3_j m2_{j+1} - e2_j m3_{j+1})`, summed over
/// the Lyapunov truncation. The `v` channel vanishes identically along
/// trajectories whose second component stays zero.
pub fn explicit_bloch_control(
    lyapunov: &QuadraticLyapunov,
    m: &MomentSequence,
) -> Result<(f64, f64)> {
    if m.param_dim() != 1 || m.state_dim() != 3 {
        return Err(Error::DimensionMismatch(
            "magnetization moment state must be scalar-label with three channels".into(),
        ));
    }
    if m.max_order() < lyapunov.order() + 1 {
        return Err(Error::OrderOverflow {
            needed: lyapunov.order() + 1,
            max_order: m.max_order(),
        });
    }
    let e = lyapunov.error(m)?;
    let mut u = 0.0;
    let mut v = 0.0;
    for j in 0..=lyapunov.order() {
        let w = lyapunov.weight(j);
        let e1 = e.get1(j, 0).expect("within truncation");
        let e2 = e.get1(j, 1).expect("within truncation");
        let e3 = e.get1(j, 2).expect("within truncation");
        let m1 = m.get1(j + 1, 0).expect("within truncation");
        let m2 = m.get1(j + 1, 1).expect("within truncation");
        let m3 = m.get1(j + 1, 2).expect("within truncation");
        u -= w * (e1 * m3 - e3 * m1);
        v -= w * (e3 * m2 - e2 * m3);
    }
    Ok((u, v))
}

/// The fixed linear law for the planar sine ensemble:
/// `u = -sum_{j=1}^{N} (c1 e1_j + c2 e2_j)`.
pub fn explicit_nonlinear_control(
    lyapunov: &QuadraticLyapunov,
    m: &MomentSequence,
    c1: f64,
    c2: f64,
) -> Result<f64> {
    if m.param_dim() != 1 || m.state_dim() != 2 {
        return Err(Error::DimensionMismatch(
            "planar moment state must be scalar-label with two channels".into(),
        ));
    }
    let e = lyapunov.error(m)?;
    let mut u = 0.0;
    for j in 1..=lyapunov.order() {
        u -= c1 * e.get1(j, 0).expect("within truncation")
            + c2 * e.get1(j, 1).expect("within truncation");
    }
    Ok(u)
}

/// Outcome of the stall check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingularityStatus {
    Ok,
    /// The control gradient vanished while the moment error did not: the
    /// damping law can make no further progress from here.
    NearSingular { gradient_norm: f64, error_norm: f64 },
}

/// Reports [`SingularityStatus::NearSingular`] when the inner-product vector
/// is below `threshold` while the error norm is above it.
pub fn singularity_monitor(
    lyapunov: &QuadraticLyapunov,
    m: &MomentSequence,
    bar_g: &[MomentSequence],
    threshold: f64,
) -> Result<SingularityStatus> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(
            "singularity threshold must be positive".into(),
        ));
    }
    let s = damping_inner_products(lyapunov, m, bar_g)?;
    let gradient_norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let e = lyapunov.error(m)?;
    let error_norm = e.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    if gradient_norm < threshold && error_norm > threshold {
        Ok(SingularityStatus::NearSingular {
            gradient_norm,
            error_norm,
        })
    } else {
        Ok(SingularityStatus::Ok)
    }
}

/// Which feedback law a controller applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackLaw {
    /// `u_i = -gain * <w e, gbar_i>` for the magnetization chain.
    GradientDamping,
    /// The explicit two-channel magnetization law.
    ExplicitBloch,
    /// The fixed linear law with channel coefficients `(c1, c2)`.
    ExplicitNonlinear { c1: f64, c2: f64 },
}

/// A feedback law bound to its Lyapunov function and runtime limits.
pub struct FeedbackController {
    pub law: FeedbackLaw,
    pub lyapunov: QuadraticLyapunov,
    /// Scales the law output (the damping gain for [`FeedbackLaw::GradientDamping`]).
    pub gain: f64,
    /// Optional symmetric clamp `|u_i| <= u_max`.
    pub u_max: Option<f64>,
    pub singularity_threshold: f64,
}

impl FeedbackController {
    /// Evaluates the law on a moment state (which must extend one order past
    /// the Lyapunov truncation for the magnetization laws).
    pub fn control(&self, m: &MomentSequence) -> Result<Vec<f64>> {
        let mut u = match self.law {
            FeedbackLaw::GradientDamping => {
                let fields = bloch_control_fields(m)?;
                gradient_damping_control(&self.lyapunov, self.gain, m, &fields)?
            }
            FeedbackLaw::ExplicitBloch => {
                let (u, v) = explicit_bloch_control(&self.lyapunov, m)?;
                vec![self.gain * u, self.gain * v]
            }
            FeedbackLaw::ExplicitNonlinear { c1, c2 } => {
                vec![self.gain * explicit_nonlinear_control(&self.lyapunov, m, c1, c2)?]
            }
        };
        if let Some(cap) = self.u_max {
            for ui in &mut u {
                *ui = ui.clamp(-cap, cap);
            }
        }
        Ok(u)
    }

    /// Stall check for the gradient-based magnetization laws.
    pub fn monitor(&self, m: &MomentSequence) -> Result<SingularityStatus> {
        match self.law {
            FeedbackLaw::GradientDamping | FeedbackLaw::ExplicitBloch => {
                let fields = bloch_control_fields(m)?;
                singularity_monitor(&self.lyapunov, m, &fields, self.singularity_threshold)
            }
            FeedbackLaw::ExplicitNonlinear { .. } => Ok(SingularityStatus::Ok),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentSequence;

    fn constant_moments(orders: usize, point: &[f64], interval: (f64, f64)) -> MomentSequence {
        // Closed-form moments of a constant profile on an interval.
        let (a, b) = interval;
        MomentSequence::from_fn(1, point.len(), orders, |k, ch| {
            let j = k.order() as i32;
            point[ch] * (b.powi(j + 1) - a.powi(j + 1)) / (j as f64 + 1.0)
        })
    }

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) as f64 / u64::MAX as f64) * 2.0 - 1.0
    }

    #[test]
    fn value_is_zero_at_the_target() {
        let target = constant_moments(5, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::new(target.clone());
        assert_eq!(lyap.value(&target).unwrap(), 0.0);
    }

    #[test]
    fn scalar_quadratic_form() {
        let target = MomentSequence::zeros(1, 1, 0);
        let lyap = QuadraticLyapunov::new(target);
        let m = MomentSequence::from_fn(1, 1, 0, |_, _| 2.0);
        assert_eq!(lyap.value(&m).unwrap(), 4.0);
    }

    #[test]
    fn magnetization_initial_value_matches_closed_form() {
        // Initial (0,0,1) against target (1,0,0) on [0.9, 1.1], order 35:
        // V(0) = sum_{j=0}^{35} 2 c_j^2 with c_j the interval monomial mass.
        let n = 35usize;
        let m0 = constant_moments(n, &[0.0, 0.0, 1.0], (0.9, 1.1));
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::new(target);
        let got = lyap.value(&m0).unwrap();
        let expect: f64 = (0..=n as i32)
            .map(|j| {
                let c = (1.1f64.powi(j + 1) - 0.9f64.powi(j + 1)) / (j as f64 + 1.0);
                2.0 * c * c
            })
            .sum();
        assert!((got - expect).abs() < 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let n = 6usize;
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::with_weights(
            target,
            (0..=n).map(|j| 1.0 + 0.1 * j as f64).collect(),
        )
        .unwrap();
        let mut rng = 42u64;
        for _ in 0..20 {
            let m = MomentSequence::from_fn(1, 3, n, |_, _| splitmix(&mut rng));
            let grad = lyap.gradient(&m).unwrap();
            let h = 1e-6;
            for flat in 0..m.values().len() {
                let mut plus = m.values().to_vec();
                let mut minus = m.values().to_vec();
                plus[flat] += h;
                minus[flat] -= h;
                let vp = lyap
                    .value(&MomentSequence::from_values(1, 3, n, plus).unwrap())
                    .unwrap();
                let vm = lyap
                    .value(&MomentSequence::from_values(1, 3, n, minus).unwrap())
                    .unwrap();
                let fd = (vp - vm) / (2.0 * h);
                let an = grad.values()[flat];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                    "entry {flat}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn damping_control_is_zero_at_the_target() {
        let n = 8usize;
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let state = constant_moments(n + 1, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::new(target);
        let fields = bloch_control_fields(&state).unwrap();
        let u = gradient_damping_control(&lyap, 1.0, &state, &fields).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn damping_formula_evaluates_the_inner_product() {
        // Single control with <w e, gbar> = 3 and gain 2 gives u = -6.
        let target = MomentSequence::zeros(1, 1, 0);
        let lyap = QuadraticLyapunov::new(target);
        let m = MomentSequence::from_fn(1, 1, 0, |_, _| 1.5);
        let g = MomentSequence::from_fn(1, 1, 0, |_, _| 2.0);
        let s = damping_inner_products(&lyap, &m, std::slice::from_ref(&g)).unwrap();
        assert_eq!(s, vec![3.0]);
        let u = gradient_damping_control(&lyap, 2.0, &m, &[g]).unwrap();
        assert_eq!(u, vec![-6.0]);
    }

    #[test]
    fn unit_gain_damping_reproduces_the_explicit_law() {
        let n = 10usize;
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::new(target);
        let mut rng = 7u64;
        for _ in 0..50 {
            let m = MomentSequence::from_fn(1, 3, n + 1, |_, _| splitmix(&mut rng));
            let fields = bloch_control_fields(&m).unwrap();
            let damping = gradient_damping_control(&lyap, 1.0, &m, &fields).unwrap();
            let (u, v) = explicit_bloch_control(&lyap, &m).unwrap();
            assert!((damping[0] - u).abs() <= 1e-12 * (1.0 + u.abs()));
            assert!((damping[1] - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn damping_output_scales_exactly_with_the_gain() {
        let n = 6usize;
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::new(target);
        let mut rng = 11u64;
        let m = MomentSequence::from_fn(1, 3, n + 1, |_, _| splitmix(&mut rng));
        let fields = bloch_control_fields(&m).unwrap();
        let base = gradient_damping_control(&lyap, 1.0, &m, &fields).unwrap();
        for c in [2.0, 4.0, 0.5] {
            let scaled = gradient_damping_control(&lyap, c, &m, &fields).unwrap();
            for (s, b) in scaled.iter().zip(&base) {
                assert_eq!(*s, c * b);
            }
        }
    }

    #[test]
    fn linear_law_examples() {
        let n = 4usize;
        let target = MomentSequence::zeros(1, 2, n);
        let lyap = QuadraticLyapunov::new(target);
        let zero = MomentSequence::zeros(1, 2, n);
        assert_eq!(explicit_nonlinear_control(&lyap, &zero, 5.0, 1.0).unwrap(), 0.0);

        // Error (1, 0) at a single order j >= 1.
        let mut m = MomentSequence::zeros(1, 2, n);
        m.set(&crate::multiindex::MultiIndex::new(vec![2]), 0, 1.0);
        assert_eq!(explicit_nonlinear_control(&lyap, &m, 5.0, 1.0).unwrap(), -5.0);

        // Error (0, 2) at a single order.
        let mut m = MomentSequence::zeros(1, 2, n);
        m.set(&crate::multiindex::MultiIndex::new(vec![3]), 1, 2.0);
        assert_eq!(explicit_nonlinear_control(&lyap, &m, 5.0, 1.0).unwrap(), -2.0);

        // Order zero is excluded by the law.
        let mut m = MomentSequence::zeros(1, 2, n);
        m.set(&crate::multiindex::MultiIndex::new(vec![0]), 0, 1.0);
        assert_eq!(explicit_nonlinear_control(&lyap, &m, 5.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn monitor_is_benign_at_the_target_and_flags_a_stall() {
        let n = 3usize;
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let lyap = QuadraticLyapunov::new(target.clone());
        let at_target = constant_moments(n + 1, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let fields = bloch_control_fields(&at_target).unwrap();
        assert_eq!(
            singularity_monitor(&lyap, &at_target, &fields, 1e-6).unwrap(),
            SingularityStatus::Ok
        );

        // Zero moment state: every gbar_k = OMEGA m_{k+1} = 0 while e != 0.
        let stalled = MomentSequence::zeros(1, 3, n + 1);
        let fields = bloch_control_fields(&stalled).unwrap();
        match singularity_monitor(&lyap, &stalled, &fields, 1e-6).unwrap() {
            SingularityStatus::NearSingular { gradient_norm, .. } => {
                assert_eq!(gradient_norm, 0.0)
            }
            other => panic!("expected a stall, got {other:?}"),
        }
    }

    #[test]
    fn controller_clamps_to_u_max() {
        let n = 4usize;
        let target = constant_moments(n, &[1.0, 0.0, 0.0], (0.9, 1.1));
        let controller = FeedbackController {
            law: FeedbackLaw::ExplicitBloch,
            lyapunov: QuadraticLyapunov::new(target),
            gain: 1.0,
            u_max: Some(0.1),
            singularity_threshold: 1e-9,
        };
        let m0 = constant_moments(n + 1, &[0.0, 0.0, 1.0], (0.9, 1.1));
        let u = controller.control(&m0).unwrap();
        assert!(u.iter().all(|x| x.abs() <= 0.1));
    }
}
