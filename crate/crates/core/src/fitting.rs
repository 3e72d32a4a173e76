//! Least-squares recovery of `(δθ, α, β)` from target joints and vertices.
//!
//! The objective is the layer loss `L_J + 𝟙 L_V` plus a quadratic prior
//! `½ w Σ δθ_k²` over the rotational DoFs. The prior resolves gauge freedoms
//! such as finger twist that joint positions cannot observe. Root translation
//! is excluded so that translating the targets translates the solution.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::hpsl::{hpsl_forward, hpsl_jacobians, loss, mean_point_error, HandState};
use crate::kinematics::{ParamVector, DEFAULT_ALPHA_RANGE};
use crate::math::{self, Vec3};
use crate::model::{DofKind, HandModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Levenberg–Marquardt damped Gauss-Newton.
    GaussNewton,
    /// Jacobi-preconditioned steepest descent with backtracking.
    GradientDescent,
}

/// Which parameter blocks the optimizer may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FreeBlocks {
    pub delta_theta: bool,
    pub alpha: bool,
    pub beta: bool,
}

impl FreeBlocks {
    pub const ALL: Self = Self {
        delta_theta: true,
        alpha: true,
        beta: true,
    };
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub method: FitMethod,
    /// Initial Marquardt damping.
    pub damping: f64,
    /// Damping multiplier after a rejected step; accepted steps divide by it.
    pub damping_factor: f64,
    /// Stop once the mean joint error (and mean vertex error, when vertex
    /// targets are given) is at most this many mm.
    pub tolerance: f64,
    pub free: FreeBlocks,
    /// Clamp α into `alpha_range` and DoFs into their limits after every step.
    /// Without it, flexion angles can wrap past their limits while α
    /// compensates, which stalls a few percent of random fits.
    pub project_bounds: bool,
    pub alpha_range: (f64, f64),
    /// Weight `w` of the rotational δθ prior.
    pub prior_weight: f64,
    /// Start from a rigid alignment of the palm joints to the targets.
    pub rigid_init: bool,
    /// Normal equations whose Jacobi-scaled condition number exceeds this
    /// fall back to a gradient step.
    pub condition_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            method: FitMethod::GaussNewton,
            damping: 1e-3,
            damping_factor: 4.0,
            tolerance: 1e-5,
            free: FreeBlocks::ALL,
            project_bounds: true,
            alpha_range: DEFAULT_ALPHA_RANGE,
            prior_weight: 1e-4,
            rigid_init: true,
            condition_limit: 1e10,
        }
    }
}

impl FitOptions {
    fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Argument("fit tolerance must be positive".into()));
        }
        if !(self.free.delta_theta || self.free.alpha || self.free.beta) {
            return Err(Error::Argument("at least one parameter block must be free".into()));
        }
        if !(self.damping > 0.0 && self.damping_factor > 1.0) {
            return Err(Error::Argument("damping must be positive and its factor above 1".into()));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::Argument("prior weight must be finite and non-negative".into()));
        }
        if !(self.alpha_range.0 > 0.0 && self.alpha_range.0 <= self.alpha_range.1) {
            return Err(Error::Argument("alpha range must be positive and ordered".into()));
        }
        Ok(())
    }
}

/// Target joints and optional target vertices (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct FitTargets {
    pub joints: Vec<Vec3>,
    pub vertices: Option<Vec<Vec3>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParamVector,
    pub joint_loss: f64,
    pub vertex_loss: f64,
    /// Objective value (layer loss plus prior) at the start and after every
    /// accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean per-joint distance to the targets (mm).
    pub mean_joint_error: f64,
    /// Mean per-vertex distance to the targets (mm), when vertex targets were given.
    pub mean_vertex_error: Option<f64>,
    pub prior_weight: f64,
    /// Steps taken by the gradient fallback instead of Gauss-Newton.
    pub gradient_steps: usize,
    /// Whether β was frozen because no vertex targets were given.
    pub beta_frozen: bool,
}

struct Problem<'a> {
    model: &'a HandModel,
    targets: &'a FitTargets,
    opts: &'a FitOptions,
    /// Free parameter indices into the flat `[δθ | α | β]` layout.
    cols: Vec<usize>,
    /// Free-column positions subject to the prior.
    prior_cols: Vec<usize>,
}

struct Eval {
    params: ParamVector,
    state: HandState,
    joint_loss: f64,
    vertex_loss: f64,
    objective: f64,
}

impl Problem<'_> {
    fn evaluate(&self, params: ParamVector) -> Result<Eval> {
        let state = hpsl_forward(self.model, &params)?;
        let l = loss(&state, &self.targets.joints, self.targets.vertices.as_deref())?;
        let prior: f64 = self
            .prior_cols
            .iter()
            .map(|&c| params.delta_theta[self.cols[c]].powi(2))
            .sum::<f64>();
        let objective = l.total + 0.5 * self.opts.prior_weight * prior;
        Ok(Eval {
            params,
            state,
            joint_loss: l.joint_loss,
            vertex_loss: l.vertex_loss,
            objective,
        })
    }

    fn errors(&self, e: &Eval) -> (f64, Option<f64>) {
        let j = mean_point_error(&e.state.joints, &self.targets.joints);
        let v = self.targets.vertices.as_ref().map(|v| mean_point_error(&e.state.vertices, v));
        (j, v)
    }

    fn within_tolerance(&self, e: &Eval) -> bool {
        let (j, v) = self.errors(e);
        j <= self.opts.tolerance && v.is_none_or(|v| v <= self.opts.tolerance)
    }

    /// Gauss-Newton system `(JᵀJ + P, Jᵀr + P x)` over the free columns.
    fn normal_equations(&self, e: &Eval) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let (_, jac) = hpsl_jacobians(self.model, &e.params)?;
        let nd = self.model.num_dofs();
        let ns = self.model.num_scales();
        let n = self.cols.len();
        let nj = 3 * self.model.num_joints();
        let nv = if self.targets.vertices.is_some() { 3 * self.model.num_vertices() } else { 0 };

        let mut j = DMatrix::zeros(nj + nv, n);
        let mut r = DVector::zeros(nj + nv);
        for (k, (p, t)) in e.state.joints.iter().zip(&self.targets.joints).enumerate() {
            r.fixed_rows_mut::<3>(3 * k).copy_from(&(p - t));
        }
        if let Some(vt) = &self.targets.vertices {
            for (k, (p, t)) in e.state.vertices.iter().zip(vt).enumerate() {
                r.fixed_rows_mut::<3>(nj + 3 * k).copy_from(&(p - t));
            }
        }
        for (c, &col) in self.cols.iter().enumerate() {
            if col < nd {
                j.view_mut((0, c), (nj, 1)).copy_from(&jac.joints.d_theta.column(col));
                if nv > 0 {
                    j.view_mut((nj, c), (nv, 1)).copy_from(&jac.vertices.d_theta.column(col));
                }
            } else if col < nd + ns {
                j.view_mut((0, c), (nj, 1)).copy_from(&jac.joints.d_alpha.column(col - nd));
                if nv > 0 {
                    j.view_mut((nj, c), (nv, 1)).copy_from(&jac.vertices.d_alpha.column(col - nd));
                }
            } else if nv > 0 {
                j.view_mut((nj, c), (nv, 1)).copy_from(&jac.vertices.d_beta.column(col - nd - ns));
            }
        }
        let mut h = j.tr_mul(&j);
        let mut g = j.tr_mul(&r);
        let w = self.opts.prior_weight;
        for &c in &self.prior_cols {
            h[(c, c)] += w;
            g[c] += w * e.params.delta_theta[self.cols[c]];
        }
        Ok((h, g))
    }

    fn apply(&self, base: &ParamVector, step: &DVector<f64>) -> ParamVector {
        let mut flat = base.to_flat();
        for (c, &col) in self.cols.iter().enumerate() {
            flat[col] += step[c];
        }
        let mut p = ParamVector::from_flat(self.model, &flat).expect("flat layout matches model");
        if self.opts.project_bounds {
            p.project_to_bounds(self.model, self.opts.alpha_range);
        }
        p
    }

    /// Evaluates a candidate; `None` when it leaves the admissible domain.
    fn try_step(&self, base: &ParamVector, step: &DVector<f64>, iteration: usize) -> Result<Option<Eval>> {
        let p = self.apply(base, step);
        if p.alpha.iter().any(|&a| !(a > 0.0)) || p.to_flat().iter().any(|x| !x.is_finite()) {
            return Ok(None);
        }
        let e = self.evaluate(p)?;
        if !e.objective.is_finite() {
            return Err(Error::Diverged {
                iteration,
                last_good: Box::new(base.clone()),
            });
        }
        Ok(Some(e))
    }
}

/// Condition number of `h` after symmetric Jacobi scaling.
fn scaled_condition(h: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = h.diagonal().iter().map(|&x| x.sqrt()).collect();
    if d.iter().any(|&x| !(x > 0.0)) {
        return f64::INFINITY;
    }
    let scaled = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Joints whose position depends on the root DoFs only.
fn palm_joints(model: &HandModel) -> Vec<usize> {
    (0..model.num_joints())
        .filter(|&j| {
            let mut p = model.joints()[j].parent;
            while let Some(a) = p {
                if a != 0 && !model.joint_dofs(a).is_empty() {
                    return false;
                }
                p = model.joints()[a].parent;
            }
            true
        })
        .collect()
}

/// Root DoFs laid out as translations along x, y, z then rotations about z, y, x.
fn has_standard_root(model: &HandModel) -> bool {
    let r = model.joint_dofs(0);
    if r.len() != 6 {
        return false;
    }
    let expected = [
        (DofKind::Translation, Vec3::x()),
        (DofKind::Translation, Vec3::y()),
        (DofKind::Translation, Vec3::z()),
        (DofKind::Rotation, Vec3::z()),
        (DofKind::Rotation, Vec3::y()),
        (DofKind::Rotation, Vec3::x()),
    ];
    model.dofs()[r].iter().zip(expected).all(|(d, (k, a))| d.kind == k && d.axis == a)
}

/// Replaces the root pose of `params` with the rigid motion that best maps
/// the palm joints onto their targets (Kabsch).
fn rigid_alignment(model: &HandModel, params: &ParamVector, targets: &[Vec3]) -> Result<Option<ParamVector>> {
    let joints = palm_joints(model);
    if joints.len() < 3 || !has_standard_root(model) {
        return Ok(None);
    }
    let kin = crate::kinematics::forward_kinematics(model, params)?;
    let root_inv = math::rigid_inverse(&kin.global[0]);
    let src: Vec<Vec3> = joints
        .iter()
        .map(|&j| math::transform_point(&root_inv, &kin.joint_positions[j]))
        .collect();
    let dst: Vec<Vec3> = joints.iter().map(|&j| targets[j]).collect();
    let n = joints.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(&dst) {
        cov += (s - cs) * (d - cd).transpose();
    }
    let svd = cov.svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return Ok(None);
    };
    let v = vt.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, sign)) * u.transpose();
    let t = cd - r * cs;

    // R = Rz(a) Ry(b) Rx(c).
    let b = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let a = r[(1, 0)].atan2(r[(0, 0)]);
    let c = r[(2, 1)].atan2(r[(2, 2)]);
    let theta = [t.x, t.y, t.z, a, b, c];
    if theta.iter().any(|x| !x.is_finite()) {
        return Ok(None);
    }
    let mut out = params.clone();
    for (k, th) in theta.iter().enumerate() {
        out.delta_theta[k] = th - model.theta_init()[k];
    }
    Ok(Some(out))
}

/// Fits the layer parameters to the targets starting from `init`.
pub fn fit(model: &HandModel, targets: &FitTargets, init: &ParamVector, opts: &FitOptions) -> Result<FitResult> {
    opts.check()?;
    init.check(model)?;
    check_len("joint targets", model.num_joints(), targets.joints.len())?;
    if let Some(v) = &targets.vertices {
        check_len("vertex targets", model.num_vertices(), v.len())?;
    }
    let finite = |pts: &[Vec3]| pts.iter().all(|p| p.iter().all(|c| c.is_finite()));
    if !finite(&targets.joints) || !targets.vertices.as_deref().is_none_or(finite) {
        return Err(Error::Argument("targets must be finite".into()));
    }

    let nd = model.num_dofs();
    let ns = model.num_scales();
    let beta_frozen = opts.free.beta && targets.vertices.is_none();
    let mut cols = Vec::new();
    if opts.free.delta_theta {
        cols.extend(0..nd);
    }
    if opts.free.alpha {
        cols.extend(nd..nd + ns);
    }
    if opts.free.beta && !beta_frozen {
        cols.extend(nd + ns..nd + ns + model.num_shapes());
    }
    if cols.is_empty() {
        return Err(Error::Argument("no free parameters remain".into()));
    }
    let prior_cols = cols
        .iter()
        .enumerate()
        .filter(|&(_, &col)| col < nd && model.dofs()[col].kind == DofKind::Rotation)
        .map(|(c, _)| c)
        .collect();
    let problem = Problem {
        model,
        targets,
        opts,
        cols,
        prior_cols,
    };

    let mut start = init.clone();
    if opts.project_bounds {
        start.project_to_bounds(model, opts.alpha_range);
    }
    let mut current = problem.evaluate(start)?;
    if !current.objective.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            last_good: Box::new(init.clone()),
        });
    }
    if opts.rigid_init && opts.free.delta_theta && !problem.within_tolerance(&current) {
        if let Some(p) = rigid_alignment(model, &current.params, &targets.joints)? {
            let zero = DVector::zeros(problem.cols.len());
            if let Some(e) = problem.try_step(&p, &zero, 0)? {
                if e.objective < current.objective {
                    current = e;
                }
            }
        }
    }

    let mut history = vec![current.objective];
    let mut lambda = opts.damping;
    let mut gd_step = 1.0;
    let mut gradient_steps = 0;
    let mut converged = problem.within_tolerance(&current);
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let (h, g) = problem.normal_equations(&current)?;
        let use_gradient = opts.method == FitMethod::GradientDescent || scaled_condition(&h) > opts.condition_limit;
        let accepted = if use_gradient {
            gradient_steps += 1;
            gradient_step(&problem, &current, &h, &g, &mut gd_step, iterations)?
        } else {
            damped_step(&problem, &current, &h, &g, &mut lambda, iterations)?
        };
        match accepted {
            Some(next) => {
                let decrease = current.objective - next.objective;
                current = next;
                history.push(current.objective);
                if problem.within_tolerance(&current) {
                    converged = true;
                } else if decrease <= 1e-15 * current.objective.max(1e-300) {
                    converged = true;
                    log::debug!("fit stalled at iteration {iterations}");
                }
            }
            None => {
                // No descent direction left at machine precision.
                converged = true;
                log::debug!("fit reached a stationary point at iteration {iterations}");
            }
        }
    }

    let (mean_joint_error, mean_vertex_error) = problem.errors(&current);
    Ok(FitResult {
        params: current.params,
        joint_loss: current.joint_loss,
        vertex_loss: current.vertex_loss,
        history,
        iterations,
        converged,
        mean_joint_error,
        mean_vertex_error,
        prior_weight: opts.prior_weight,
        gradient_steps,
        beta_frozen,
    })
}

const MAX_REJECTIONS: usize = 30;

fn damped_step(
    problem: &Problem,
    current: &Eval,
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: &mut f64,
    iteration: usize,
) -> Result<Option<Eval>> {
    let factor = problem.opts.damping_factor;
    for _ in 0..MAX_REJECTIONS {
        let mut a = h.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += *lambda * h[(i, i)].max(1e-12);
        }
        if let Some(chol) = a.cholesky() {
            let step = -chol.solve(g);
            if let Some(e) = problem.try_step(&current.params, &step, iteration)? {
                if e.objective < current.objective {
                    *lambda = (*lambda / factor).max(1e-12);
                    return Ok(Some(e));
                }
            }
        }
        *lambda *= factor;
    }
    Ok(None)
}

fn gradient_step(
    problem: &Problem,
    current: &Eval,
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    step_size: &mut f64,
    iteration: usize,
) -> Result<Option<Eval>> {
    let dir = DVector::from_fn(g.len(), |i, _| -g[i] / h[(i, i)].max(1e-12));
    let slope = g.dot(&dir);
    if !(slope < 0.0) {
        return Ok(None);
    }
    let mut t = (*step_size * 2.0).min(1.0);
    for _ in 0..MAX_REJECTIONS * 2 {
        if let Some(e) = problem.try_step(&current.params, &(&dir * t), iteration)? {
            if e.objective <= current.objective + 1e-4 * t * slope && e.objective < current.objective {
                *step_size = t;
                return Ok(Some(e));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::three_link;

    fn targets_for(model: &HandModel, p: &ParamVector, with_vertices: bool) -> FitTargets {
        let s = hpsl_forward(model, p).unwrap();
        FitTargets {
            joints: s.joints,
            vertices: with_vertices.then_some(s.vertices),
        }
    }

    fn truth(model: &HandModel) -> ParamVector {
        let mut p = ParamVector::neutral(model);
        p.delta_theta = vec![4.0, -2.0, 3.0, 0.3, -0.2, 0.25, 0.4, -0.3, 0.5];
        p.alpha = vec![1.15, 0.9];
        p.beta = vec![0.3, -0.2];
        p
    }

    #[test]
    fn neutral_targets_converge_immediately() {
        let m = three_link();
        let p = ParamVector::neutral(&m);
        let r = fit(&m, &targets_for(&m, &p, true), &p, &FitOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(r.joint_loss + r.vertex_loss, 0.0);
    }

    #[test]
    fn recovers_known_parameters() {
        let m = three_link();
        let t = targets_for(&m, &truth(&m), true);
        let r = fit(&m, &t, &ParamVector::neutral(&m), &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.mean_joint_error < 1e-3, "{}", r.mean_joint_error);
        assert!(r.mean_vertex_error.unwrap() < 1e-3);
    }

    #[test]
    fn history_is_non_increasing() {
        let m = three_link();
        let t = targets_for(&m, &truth(&m), true);
        let opts = FitOptions { rigid_init: false, ..Default::default() };
        let r = fit(&m, &t, &ParamVector::neutral(&m), &opts).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn joints_only_freezes_beta() {
        let m = three_link();
        let t = targets_for(&m, &truth(&m), false);
        let init = ParamVector { beta: vec![0.5, 0.25], ..ParamVector::neutral(&m) };
        let r = fit(&m, &t, &init, &FitOptions::default()).unwrap();
        assert!(r.beta_frozen);
        assert_eq!(r.params.beta, init.beta);
    }

    #[test]
    fn bound_projection_keeps_alpha_in_range() {
        let m = three_link();
        let mut p = truth(&m);
        p.alpha = vec![1.9, 1.9];
        let t = targets_for(&m, &p, true);
        let opts = FitOptions {
            project_bounds: true,
            alpha_range: (0.8, 1.2),
            ..Default::default()
        };
        let r = fit(&m, &t, &ParamVector::neutral(&m), &opts).unwrap();
        assert!(r.params.alpha.iter().all(|&a| (0.8..=1.2).contains(&a)));
    }

    #[test]
    fn rejects_bad_options() {
        let m = three_link();
        let p = ParamVector::neutral(&m);
        let t = targets_for(&m, &p, false);
        let opts = FitOptions { tolerance: 0.0, ..Default::default() };
        assert!(fit(&m, &t, &p, &opts).is_err());
        let opts = FitOptions {
            free: FreeBlocks { delta_theta: false, alpha: false, beta: false },
            ..Default::default()
        };
        assert!(fit(&m, &t, &p, &opts).is_err());
    }

    #[test]
    fn non_finite_targets_are_rejected() {
        let m = three_link();
        let p = ParamVector::neutral(&m);
        let mut t = targets_for(&m, &p, false);
        t.joints[1].x = f64::NAN;
        assert!(matches!(fit(&m, &t, &p, &FitOptions::default()), Err(Error::Argument(_))));
    }

    #[test]
    fn condition_of_singular_matrix_is_infinite() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(scaled_condition(&h) > 1e15);
        assert!((scaled_condition(&DMatrix::identity(3, 3)) - 1.0).abs() < 1e-12);
    }
}
