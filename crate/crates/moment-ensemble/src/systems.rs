//! The two reference ensembles exercised by the simulations.

use crate::ensemble::ControlAffineEnsemble;
use crate::grid::ParameterGrid;
use crate::Result;

/// Generator of rotations about the x-axis.
pub const OMEGA_X: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]];

/// Generator of rotations about the y-axis.
pub const OMEGA_Y: [[f64; 3]; 3] = [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];

/// `(u * OMEGA_Y + v * OMEGA_X) m`.
pub fn rotation_rhs(u: f64, v: f64, m: &[f64; 3]) -> [f64; 3] {
    [u * m[2], -v * m[2], v * m[1] - u * m[0]]
}

/// Rodrigues rotation of `x` by `angle` about the unit axis `n`.
pub fn rotate_about(n: [f64; 3], angle: f64, x: [f64; 3]) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let cross = [
        n[1] * x[2] - n[2] * x[1],
        n[2] * x[0] - n[0] * x[2],
        n[0] * x[1] - n[1] * x[0],
    ];
    let dot = n[0] * x[0] + n[1] * x[1] + n[2] * x[2];
    [
        x[0] * c + cross[0] * s + n[0] * dot * (1.0 - c),
        x[1] * c + cross[1] * s + n[1] * dot * (1.0 - c),
        x[2] * c + cross[2] * s + n[2] * dot * (1.0 - c),
    ]
}

/// Exact flow of `dM/dt = eps (u OMEGA_Y + v OMEGA_X) M` over time `t` with
/// constant inputs: a rotation by `eps t sqrt(u^2 + v^2)` about `(v, u, 0)`.
pub fn bloch_exact_flow(eps: f64, u: f64, v: f64, t: f64, m0: [f64; 3]) -> [f64; 3] {
    let rate = (u * u + v * v).sqrt();
    if rate == 0.0 {
        return m0;
    }
    let axis = [v / rate, u / rate, 0.0];
    rotate_about(axis, eps * rate * t, m0)
}

/// The magnetization ensemble `dM/dt = eps [u OMEGA_Y + v OMEGA_X] M` on a
/// grid over `eps in [1 - delta, 1 + delta]`: drift-free, two control fields.
pub fn bloch_ensemble(delta: f64, points: usize) -> Result<(ControlAffineEnsemble, (f64, f64))> {
    let interval = (1.0 - delta, 1.0 + delta);
    let grid = ParameterGrid::uniform_midpoint(&[interval], points)?;
    Ok((bloch_ensemble_on(grid), interval))
}

/// Bloch ensemble over an explicit (one-dimensional) grid.
pub fn bloch_ensemble_on(grid: ParameterGrid) -> ControlAffineEnsemble {
    assert_eq!(grid.dim(), 1, "the magnetization ensemble has a scalar label");
    ControlAffineEnsemble::new(
        3,
        grid,
        Box::new(|_m, _b, out| out.fill(0.0)),
        vec![
            Box::new(|m, b, out| {
                out[0] = b[0] * m[2];
                out[1] = 0.0;
                out[2] = -b[0] * m[0];
            }),
            Box::new(|m, b, out| {
                out[0] = 0.0;
                out[1] = -b[0] * m[2];
                out[2] = b[0] * m[1];
            }),
        ],
    )
}

/// Planar ensemble `d(x, y)/dt = beta (y, -y - sin x) + beta (0, 1) u` over
/// an explicit grid: a damped sine-restoring system whose label scales the
/// whole field.
pub fn sine_ensemble_on(grid: ParameterGrid) -> ControlAffineEnsemble {
    assert_eq!(grid.dim(), 1, "the sine ensemble has a scalar label");
    ControlAffineEnsemble::new(
        2,
        grid,
        Box::new(|z, b, out| {
            out[0] = b[0] * z[1];
            out[1] = b[0] * (-z[1] - z[0].sin());
        }),
        vec![Box::new(|_z, b, out| {
            out[0] = 0.0;
            out[1] = b[0];
        })],
    )
}

/// Sine ensemble on a midpoint grid over `[lo, hi]`.
pub fn sine_ensemble(lo: f64, hi: f64, points: usize) -> Result<ControlAffineEnsemble> {
    let grid = ParameterGrid::uniform_midpoint(&[(lo, hi)], points)?;
    Ok(sine_ensemble_on(grid))
}
