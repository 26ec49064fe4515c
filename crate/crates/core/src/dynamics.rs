//! Classical propagation of phase-space seeds with action, stability matrix and
//! the Herman–Kluk prefactor.
//!
//! One Störmer–Verlet step (kick-drift-kick) for h(q, p) = |p|²/2 + V(q) is applied
//! to the trajectory and, with the Hessian at the same stage positions, to every
//! column of the stability matrix. The action uses the trapezoid rule on the
//! Lagrangian at the stage values.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dim, HkError, Result};
use crate::phasespace::{DoublePhasePoint, PhaseSpacePoint, WidthMatrix};
use crate::potential::Potential;

/// Largest admissible change of arg det(Z) between two consecutive evaluations
/// before the branch of the square root is considered ambiguous.
pub const BRANCH_JUMP_LIMIT: f64 = 0.9 * PI;

/// Steps whose determinant argument moves by more than this are re-tracked along
/// the straight line between the old and new prefactor matrices.
const REFINE_THRESHOLD: f64 = 0.5 * PI;
const REFINE_POINTS: usize = 16;

/// Bound on ‖MᵀJM − J‖_max per unit of simulated time for the Verlet stability matrix.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Bound on ||R_t| − 1| for the harmonic oscillator with Γ = Id and steps τ ≤ 0.05.
/// Verlet is not exactly a rotation, so |R_t| − 1 = O(τ⁴).
pub const UNIT_PREFACTOR_TOL: f64 = 1e-6;
/// Admissible deviation of the fitted step-halving order from 2.
pub const ORDER_TOL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub z: PhaseSpacePoint,
    pub action: f64,
    /// M = ∂z(t)/∂z(0), 2D×2D, blocks [[M_qq, M_qp], [M_pq, M_pp]].
    pub stability: DMatrix<f64>,
    pub prefactor: Complex64,
    /// Unwrapped arg det(Z); R = 2^{−D/2} |det Z|^{1/2} e^{i·branch_phase/2}.
    pub branch_phase: f64,
    pub t: f64,
}

impl TrajectoryState {
    pub fn initial(z: PhaseSpacePoint) -> Self {
        let d = z.dim();
        Self {
            z,
            action: 0.0,
            stability: DMatrix::identity(2 * d, 2 * d),
            prefactor: Complex64::new(1.0, 0.0),
            branch_phase: 0.0,
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    pub fn energy(&self, potential: &Potential) -> f64 {
        hamiltonian(&self.z, potential)
    }
}

pub fn hamiltonian(z: &PhaseSpacePoint, potential: &Potential) -> f64 {
    0.5 * z.p.iter().map(|p| p * p).sum::<f64>() + potential.value(&z.q)
}

/// J = [[0, Id], [−Id, 0]]
pub fn symplectic_j(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * dim, 2 * dim);
    for k in 0..dim {
        j[(k, dim + k)] = 1.0;
        j[(dim + k, k)] = -1.0;
    }
    j
}

/// max |MᵀJM − J|
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = symplectic_j(m.nrows() / 2);
    (m.transpose() * &j * m - j).amax()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    step: f64,
    save_stride: usize,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, step: f64, save_stride: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(HkError::InvalidArgument(format!("time step must be positive, got {step}")));
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(HkError::InvalidArgument(format!("t_final must be >= 0, got {t_final}")));
        }
        if save_stride == 0 {
            return Err(HkError::InvalidArgument("save stride must be >= 1".into()));
        }
        let n = (t_final / step).round();
        if (n * step - t_final).abs() > 1e-9 * t_final.max(1.0) {
            return Err(HkError::InvalidArgument(format!(
                "t_final = {t_final} is not an integer multiple of the step {step}"
            )));
        }
        Ok(Self {
            t_final,
            step,
            save_stride,
            n_steps: n as usize,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn save_stride(&self) -> usize {
        self.save_stride
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Step indices at which states are saved: 0, stride, 2·stride, … and always the last step.
    pub fn save_steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = (0..=self.n_steps).step_by(self.save_stride).collect();
        if *s.last().unwrap() != self.n_steps {
            s.push(self.n_steps);
        }
        s
    }

    pub fn save_times(&self) -> Vec<f64> {
        self.save_steps().into_iter().map(|k| k as f64 * self.step).collect()
    }
}

/// 2^{−D/2} det(M_qq + Γ⁻¹M_ppΓ − iM_qpΓ + iΓ⁻¹M_pq)^{1/2} on the branch continuous
/// with `branch_phase_prev`. Returns (R, new accumulated phase).
pub fn hk_prefactor(
    m: &DMatrix<f64>,
    width: &WidthMatrix,
    branch_phase_prev: f64,
) -> Result<(Complex64, f64)> {
    let d = width.dim();
    check_dim(2 * d, m.nrows())?;
    check_dim(2 * d, m.ncols())?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(HkError::InvalidArgument("stability matrix has non-finite entries".into()));
    }
    let mut z = vec![Complex64::default(); d * d];
    prefactor_matrix(m.as_slice(), d, width, &mut z);
    let det = complex_det(&mut z, d);
    continue_branch(det, d, branch_phase_prev)
}

fn continue_branch(det: Complex64, d: usize, prev: f64) -> Result<(Complex64, f64)> {
    let (r, arg) = det.to_polar();
    if !(r > 0.0 && r.is_finite()) {
        return Err(HkError::InvalidArgument(format!("prefactor determinant is {det}")));
    }
    let jump = wrap_angle(arg - prev);
    if jump.abs() > BRANCH_JUMP_LIMIT {
        return Err(HkError::BranchAmbiguity { jump });
    }
    let phase = prev + jump;
    let modulus = (r * 0.5f64.powi(d as i32)).sqrt();
    Ok((Complex64::from_polar(modulus, 0.5 * phase), phase))
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Z written row-major into `z` from the column-major stability matrix `m`.
fn prefactor_matrix(m: &[f64], d: usize, width: &WidthMatrix, z: &mut [Complex64]) {
    let n = 2 * d;
    let at = |r: usize, c: usize| m[c * n + r];
    match width.diagonal_entries() {
        Some(g) => {
            for a in 0..d {
                for b in 0..d {
                    let re = at(a, b) + g[b] / g[a] * at(d + a, d + b);
                    let im = -at(a, d + b) * g[b] + at(d + a, b) / g[a];
                    z[a * d + b] = Complex64::new(re, im);
                }
            }
        }
        None => {
            let gm = width.matrix();
            let gi = width.inverse();
            let mqq = DMatrix::from_fn(d, d, &at);
            let mqp = DMatrix::from_fn(d, d, |r, c| at(r, d + c));
            let mpq = DMatrix::from_fn(d, d, |r, c| at(d + r, c));
            let mpp = DMatrix::from_fn(d, d, |r, c| at(d + r, d + c));
            let re = mqq + gi * mpp * gm;
            let im = gi * mpq - mqp * gm;
            for a in 0..d {
                for b in 0..d {
                    z[a * d + b] = Complex64::new(re[(a, b)], im[(a, b)]);
                }
            }
        }
    }
}

/// Determinant by LU with partial pivoting; destroys `a` (row-major d×d).
fn complex_det(a: &mut [Complex64], d: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..d {
        let mut piv = k;
        let mut best = a[k * d + k].norm_sqr();
        for r in k + 1..d {
            let v = a[r * d + k].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Complex64::default();
        }
        if piv != k {
            for c in 0..d {
                a.swap(k * d + c, piv * d + c);
            }
            det = -det;
        }
        let pivot = a[k * d + k];
        det *= pivot;
        let inv = pivot.inv();
        for r in k + 1..d {
            let f = a[r * d + k] * inv;
            if f != Complex64::default() {
                for c in k + 1..d {
                    let u = a[k * d + c];
                    a[r * d + c] -= f * u;
                }
            }
        }
    }
    det
}

/// Reusable buffers for stepping trajectories of one potential and width.
pub struct Propagator<'a> {
    potential: Potential,
    width: &'a WidthMatrix,
    tau: f64,
    d: usize,
    grad: Vec<f64>,
    hdiag: Vec<f64>,
    hoff: Vec<f64>,
    zmat: Vec<Complex64>,
    zprev: Vec<Complex64>,
    znew: Vec<Complex64>,
}

impl<'a> Propagator<'a> {
    pub fn new(potential: Potential, width: &'a WidthMatrix, tau: f64) -> Self {
        let d = width.dim();
        Self {
            potential,
            width,
            tau,
            d,
            grad: vec![0.0; d],
            hdiag: vec![0.0; d],
            hoff: vec![0.0; d.saturating_sub(1).max(1)],
            zmat: vec![Complex64::default(); d * d],
            zprev: vec![Complex64::default(); d * d],
            znew: vec![Complex64::default(); d * d],
        }
    }

    fn half_kick_columns(&mut self, q: &[f64], m: &mut [f64]) {
        let d = self.d;
        let h = 0.5 * self.tau;
        self.potential.hessian_tridiagonal(q, &mut self.hdiag, &mut self.hoff[..d - 1]);
        for col in m.chunks_exact_mut(2 * d) {
            let (dq, dp) = col.split_at_mut(d);
            for j in 0..d {
                let mut hv = self.hdiag[j] * dq[j];
                if j > 0 {
                    hv += self.hoff[j - 1] * dq[j - 1];
                }
                if j + 1 < d {
                    hv += self.hoff[j] * dq[j + 1];
                }
                dp[j] -= h * hv;
            }
        }
    }

    /// Advances `state` by one step in place. On error the state is left partially updated.
    pub fn step(&mut self, state: &mut TrajectoryState) -> Result<()> {
        let d = self.d;
        let tau = self.tau;
        let t_next = state.t + tau;
        let blow = |reason: &str| HkError::Propagation {
            t: t_next,
            reason: reason.to_string(),
        };

        prefactor_matrix(state.stability.as_slice(), d, self.width, &mut self.zprev);
        let v0 = self.potential.value(&state.z.q);
        self.potential.gradient_into(&state.z.q, &mut self.grad);
        for j in 0..d {
            state.z.p[j] -= 0.5 * tau * self.grad[j];
        }
        self.half_kick_columns(&state.z.q, state.stability.as_mut_slice());
        let kin: f64 = state.z.p.iter().map(|p| 0.5 * p * p).sum();
        for j in 0..d {
            state.z.q[j] += tau * state.z.p[j];
        }
        for col in state.stability.as_mut_slice().chunks_exact_mut(2 * d) {
            let (dq, dp) = col.split_at_mut(d);
            for j in 0..d {
                dq[j] += tau * dp[j];
            }
        }
        let v1 = self.potential.value(&state.z.q);
        self.potential.gradient_into(&state.z.q, &mut self.grad);
        for j in 0..d {
            state.z.p[j] -= 0.5 * tau * self.grad[j];
        }
        self.half_kick_columns(&state.z.q, state.stability.as_mut_slice());
        state.action += tau * (kin - 0.5 * (v0 + v1));
        state.t = t_next;

        if !(v1.is_finite() && state.action.is_finite())
            || state.z.q.iter().chain(&state.z.p).any(|x| !x.is_finite())
        {
            return Err(blow("non-finite phase-space state"));
        }
        if state.stability.iter().any(|x| !x.is_finite()) {
            return Err(blow("non-finite stability matrix"));
        }
        prefactor_matrix(state.stability.as_slice(), d, self.width, &mut self.znew);
        self.zmat.copy_from_slice(&self.znew);
        let det = complex_det(&mut self.zmat, d);
        let prev = state.branch_phase;
        let (r, phase) = if wrap_angle(det.arg() - prev).abs() <= REFINE_THRESHOLD {
            continue_branch(det, d, prev)
        } else {
            self.refine_branch(det, prev)
        }
        .map_err(|e| blow(&e.to_string()))?;
        state.prefactor = r;
        state.branch_phase = phase;
        Ok(())
    }

    /// Follows arg det along Z(s) = (1−s)Z_n + sZ_{n+1} in small increments.
    fn refine_branch(&mut self, det_new: Complex64, prev: f64) -> Result<(Complex64, f64)> {
        let d = self.d;
        let mut phase = prev;
        for k in 1..REFINE_POINTS {
            let s = k as f64 / REFINE_POINTS as f64;
            for ((z, a), b) in self.zmat.iter_mut().zip(&self.zprev).zip(&self.znew) {
                *z = a * (1.0 - s) + b * s;
            }
            let det = complex_det(&mut self.zmat, d);
            phase = continue_branch(det, d, phase)?.1;
        }
        continue_branch(det_new, d, phase)
    }
}

pub fn verlet_step(
    state: &TrajectoryState,
    tau: f64,
    potential: &Potential,
    width: &WidthMatrix,
) -> Result<TrajectoryState> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(HkError::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    check_dim(width.dim(), state.dim())?;
    let mut next = state.clone();
    Propagator::new(*potential, width, tau).step(&mut next)?;
    Ok(next)
}

/// Propagates one seed over `grid`, calling `on_save(save_index, state)` at each save point.
pub fn propagate_with<F>(
    z: &PhaseSpacePoint,
    grid: &TimeGrid,
    potential: &Potential,
    width: &WidthMatrix,
    mut on_save: F,
) -> Result<()>
where
    F: FnMut(usize, &TrajectoryState),
{
    check_dim(width.dim(), z.dim())?;
    let mut prop = Propagator::new(*potential, width, grid.step());
    let mut state = TrajectoryState::initial(z.clone());
    let saves = grid.save_steps();
    let mut next_save = 0;
    for k in 0..=grid.n_steps() {
        if k > 0 {
            prop.step(&mut state)?;
            state.t = k as f64 * grid.step();
        }
        if saves.get(next_save) == Some(&k) {
            on_save(next_save, &state);
            next_save += 1;
        }
    }
    Ok(())
}

/// Propagates y and z in lockstep, calling `on_save(save_index, y_state, z_state)`.
/// Errors name the seed (`y` or `z`) that failed.
pub fn propagate_pair_with<F>(
    w: &DoublePhasePoint,
    grid: &TimeGrid,
    potential: &Potential,
    width: &WidthMatrix,
    mut on_save: F,
) -> Result<()>
where
    F: FnMut(usize, &TrajectoryState, &TrajectoryState),
{
    check_dim(width.dim(), w.dim())?;
    let mut prop = Propagator::new(*potential, width, grid.step());
    let mut sy = TrajectoryState::initial(w.y.clone());
    let mut sz = TrajectoryState::initial(w.z.clone());
    let saves = grid.save_steps();
    let mut next_save = 0;
    let tag = |seed: &str, e: HkError| match e {
        HkError::Propagation { t, reason } => HkError::Propagation {
            t,
            reason: format!("{seed} seed: {reason}"),
        },
        other => other,
    };
    for k in 0..=grid.n_steps() {
        if k > 0 {
            prop.step(&mut sy).map_err(|e| tag("y", e))?;
            prop.step(&mut sz).map_err(|e| tag("z", e))?;
            let t = k as f64 * grid.step();
            sy.t = t;
            sz.t = t;
        }
        if saves.get(next_save) == Some(&k) {
            on_save(next_save, &sy, &sz);
            next_save += 1;
        }
    }
    Ok(())
}

pub fn propagate_pair(
    w: &DoublePhasePoint,
    grid: &TimeGrid,
    potential: &Potential,
    width: &WidthMatrix,
) -> Result<Vec<(TrajectoryState, TrajectoryState)>> {
    let mut out = Vec::with_capacity(grid.save_steps().len());
    propagate_pair_with(w, grid, potential, width, |_, y, z| out.push((y.clone(), z.clone())))?;
    Ok(out)
}

/// Φ_t = conj(R_t(y)) R_t(z) exp[i(S_t(z) − S_t(y))/ε]
pub fn phase_factor(y: &TrajectoryState, z: &TrajectoryState, eps: f64) -> Result<Complex64> {
    if (y.t - z.t).abs() > 1e-9 * y.t.abs().max(1.0) {
        return Err(HkError::InvalidArgument(format!(
            "phase factor needs states at equal times, got {} and {}",
            y.t, z.t
        )));
    }
    if y.t == 0.0 && z.t == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(phase_factor_raw(y, z, eps))
}

pub(crate) fn phase_factor_raw(y: &TrajectoryState, z: &TrajectoryState, eps: f64) -> Complex64 {
    if y.t == 0.0 && z.t == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    y.prefactor.conj() * z.prefactor * Complex64::from_polar(1.0, (z.action - y.action) / eps)
}
