//! Pseudo-arclength continuation of the augmented system, branch point
//! detection and switching.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::augmented::{eval_f_real, eval_jacobian_real, set_reference, ReferencePhase};
use crate::error::{ChoreoError, Result};
use crate::model::ModelParams;
use crate::solver::{
    condition_estimate, dot, kernel_basis, lu_det_sign, newton_correct, norm2, sup_norm,
    NewtonReport, NewtonSettings, NonlinearSystem,
};
use crate::state::StateVector;

use faer::prelude::*;

/// Scalar plotted against ω in bifurcation diagrams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMeasure {
    /// `max_t |u₃(t)|`.
    #[default]
    SupVertical,
    /// `max_t |u(t) - mean(u)|`.
    SupDeviation,
}

impl AmplitudeMeasure {
    pub fn evaluate(&self, x: &StateVector) -> f64 {
        const SAMPLES: usize = 256;
        match self {
            Self::SupVertical => {
                x.u.component(2).sample(SAMPLES).iter().fold(0.0, |a, v| a.max(v.abs()))
            }
            Self::SupDeviation => {
                let cols: Vec<Vec<f64>> = (0..3)
                    .map(|c| {
                        let s = x.u.component(c);
                        let mean = s.coeff(0).re;
                        s.sample(SAMPLES).into_iter().map(|v| v - mean).collect()
                    })
                    .collect();
                (0..SAMPLES)
                    .map(|i| (cols[0][i].powi(2) + cols[1][i].powi(2) + cols[2][i].powi(2)).sqrt())
                    .fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub cond_threshold: f64,
    pub bisect_tol: f64,
    pub max_steps: usize,
    pub amplitude_measure: AmplitudeMeasure,
    /// Step growth factor after an easy corrector run.
    pub growth: f64,
    /// Corrector iterations that still count as easy.
    pub easy_iterations: usize,
    /// Smallest overlap accepted between consecutive tangents.
    pub min_tangent_overlap: f64,
    pub newton: NewtonSettings,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ds: 1e-3,
            ds_min: 1e-6,
            ds_max: 1e-2,
            cond_threshold: 1e3,
            bisect_tol: 1e-8,
            max_steps: 5000,
            amplitude_measure: AmplitudeMeasure::default(),
            growth: 1.3,
            easy_iterations: 3,
            min_tangent_overlap: 0.95,
            newton: NewtonSettings::default(),
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.ds_min
            && self.ds_min <= self.ds
            && self.ds <= self.ds_max
            && self.growth >= 1.0
            && self.bisect_tol > 0.0
            && self.cond_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ChoreoError::InvalidInput(format!(
                "step sizes must satisfy 0 < ds_min ≤ ds ≤ ds_max, got {} / {} / {}",
                self.ds_min, self.ds, self.ds_max
            )))
        }
    }
}

/// Archived summary of one accepted continuation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub step: usize,
    /// 0 for the vertical family, 1 after the switch, 2 for a discarded side.
    pub segment: usize,
    pub omega: f64,
    pub arclength: f64,
    pub amplitude: f64,
    pub det_sign: i32,
    /// Condition number of the bordered Jacobian; only evaluated where the
    /// determinant sign changes.
    pub condition: Option<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
    pub step_size: f64,
    pub morse_index: Option<usize>,
    pub state_ref: String,
}

/// Located simple branch point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub x_bif: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub switch_tangent: Vec<f64>,
    /// Tangent of the branch the point was found on.
    pub incoming_tangent: Vec<f64>,
    /// Three smallest singular values of the row-equilibrated `D_X F` at
    /// `x_bif`, ascending.
    pub trailing_singular_values: [f64; 3],
    pub largest_singular_value: f64,
}

/// A converged point together with everything needed to step from it.
#[derive(Clone, Debug)]
pub struct BranchState {
    pub x: Vec<f64>,
    pub tangent: Vec<f64>,
    pub reference: ReferencePhase,
    /// Sign of `det [tangent; D_X F]`.
    pub det_sign: i32,
}

fn bordered(row: &[f64], jac: &Mat<f64>) -> Mat<f64> {
    let n = jac.nrows();
    Mat::from_fn(n + 1, n + 1, |i, j| if i == 0 { row[j] } else { jac[(i - 1, j)] })
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = norm2(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Tangent with its determinant sign, from one factorization of
/// `[orient; D_X F]`. `det [t; D_X F]` has the sign of `det [orient; D_X F]`
/// because `⟨t, orient⟩ > 0`.
fn bordered_tangent(jac: &Mat<f64>, orient: &[f64]) -> Option<(Vec<f64>, i32)> {
    let b = bordered(orient, jac);
    let lu = b.partial_piv_lu();
    let sign = lu_det_sign(&lu);
    if sign == 0 {
        return None;
    }
    let mut rhs = Mat::<f64>::zeros(b.nrows(), 1);
    rhs[(0, 0)] = 1.0;
    let t = lu.solve(&rhs);
    let t: Vec<f64> = (0..b.nrows()).map(|i| t[(i, 0)]).collect();
    if t.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((normalized(t), sign))
}

/// Unit tangent of the solution curve through `x`.
///
/// With `previous` the tangent is oriented so that its overlap with
/// `previous` is positive, and a kernel of dimension above one is reported as
/// [`ChoreoError::NearBranchPoint`]. Without `previous`, `seed` is projected
/// onto the numerical kernel of `D_X F`, which also works where that kernel
/// is larger (as at the polygon).
pub fn tangent_vector(
    x: &[f64],
    previous: Option<&[f64]>,
    seed: &[f64],
    reference: &ReferencePhase,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let jac = eval_jacobian_real(x, reference, params)?;
    match previous {
        Some(prev) => bordered_tangent(&jac, prev).map(|(t, _)| t).ok_or_else(|| {
            ChoreoError::NearBranchPoint("bordered Jacobian is singular".to_string())
        }),
        None => seed_tangent(&jac, seed),
    }
}

fn seed_tangent(jac: &Mat<f64>, seed: &[f64]) -> Result<Vec<f64>> {
    let svd = jac
        .svd()
        .map_err(|e| ChoreoError::InvalidInput(format!("SVD did not converge: {e:?}")))?;
    let (rows, cols) = (jac.nrows(), jac.ncols());
    let s = svd.S();
    let max = s[0];
    let v = svd.V();
    let mut t = vec![0.0; cols];
    for k in 0..cols {
        let sigma = if k < rows { s[k] } else { 0.0 };
        if sigma > 1e-8 * max {
            continue;
        }
        let coef: f64 = (0..cols).map(|i| v[(i, k)] * seed[i]).sum();
        for (i, ti) in t.iter_mut().enumerate() {
            *ti += coef * v[(i, k)];
        }
    }
    if norm2(&t) < 1e-6 * norm2(seed) {
        return Err(ChoreoError::InvalidInput("seed direction is orthogonal to the kernel".into()));
    }
    Ok(normalized(t))
}

/// `(E, F)` with `E(X) = ⟨X - X̂, Ẋ⟩`, the corrector of a pseudo-arclength step.
pub struct ArclengthSystem<'a> {
    pub params: &'a ModelParams,
    pub reference: &'a ReferencePhase,
    pub predictor: &'a [f64],
    pub tangent: &'a [f64],
}

impl NonlinearSystem for ArclengthSystem<'_> {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let e: f64 = x.iter().zip(self.predictor).zip(self.tangent).map(|((a, b), t)| (a - b) * t).sum();
        let mut r = Vec::with_capacity(x.len());
        r.push(e);
        r.extend(eval_f_real(x, self.reference, self.params)?);
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat<f64>> {
        Ok(bordered(self.tangent, &eval_jacobian_real(x, self.reference, self.params)?))
    }
}

/// `F(·, ω)` at fixed ω, a square system in the first `N` coordinates.
pub struct FixedFrequencySystem<'a> {
    pub params: &'a ModelParams,
    pub reference: &'a ReferencePhase,
    pub omega: f64,
}

impl FixedFrequencySystem<'_> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut full = x.to_vec();
        full.push(self.omega);
        full
    }
}

impl NonlinearSystem for FixedFrequencySystem<'_> {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        eval_f_real(&self.full(x), self.reference, self.params)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Mat<f64>> {
        let jac = eval_jacobian_real(&self.full(x), self.reference, self.params)?;
        let n = jac.nrows();
        Ok(jac.subcols(0, n).to_owned())
    }
}

/// Outcome of one accepted pseudo-arclength step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: BranchState,
    pub report: NewtonReport,
    /// Step length that was accepted.
    pub ds_used: f64,
    /// Suggested length for the next step.
    pub ds_next: f64,
}

/// Predictor-corrector step of nominal length `ds` from `from`.
///
/// Halves the step on corrector failure, on a corrector that moved farther
/// than the step itself, or on a tangent that turned too sharply. Grows the
/// next step after easy convergence. The phase reference is refreshed from the
/// accepted point, which keeps that point a solution.
pub fn step(
    from: &BranchState,
    ds: f64,
    params: &ModelParams,
    config: &ContinuationConfig,
) -> Result<StepOutcome> {
    let mut ds = ds.clamp(config.ds_min, config.ds_max);
    let mut last_reason;
    loop {
        match try_step(from, ds, params, config)? {
            Ok((state, report)) => {
                let ds_next = if report.iterations <= config.easy_iterations {
                    (ds * config.growth).min(config.ds_max)
                } else {
                    ds
                };
                return Ok(StepOutcome { state, report, ds_used: ds, ds_next });
            }
            Err(reason) => last_reason = reason,
        }
        ds /= 2.0;
        if ds < config.ds_min {
            return Err(ChoreoError::StepUnderflow { ds, reason: last_reason });
        }
    }
}

type Attempt = std::result::Result<(BranchState, NewtonReport), String>;

fn try_step(from: &BranchState, ds: f64, params: &ModelParams, config: &ContinuationConfig) -> Result<Attempt> {
    let predictor: Vec<f64> = from.x.iter().zip(&from.tangent).map(|(x, t)| x + ds * t).collect();
    let system = ArclengthSystem { params, reference: &from.reference, predictor: &predictor, tangent: &from.tangent };
    let (x, report) = newton_correct(&system, &predictor, &config.newton)?;
    if !report.converged {
        return Ok(Err(format!(
            "corrector: {} (residual {:.3e})",
            report.failure.clone().unwrap_or_default(),
            report.final_residual
        )));
    }
    let moved: Vec<f64> = x.iter().zip(&predictor).map(|(a, b)| a - b).collect();
    if norm2(&moved) > ds {
        return Ok(Err(format!("corrector moved {:.3e} for a step of {ds:.3e}", norm2(&moved))));
    }
    match finish_point(x, &from.tangent, params) {
        Ok(state) => {
            let overlap = dot(&state.tangent, &from.tangent);
            if overlap < config.min_tangent_overlap {
                return Ok(Err(format!("tangent turned, overlap {overlap:.4}")));
            }
            Ok(Ok((state, report)))
        }
        Err(ChoreoError::NearBranchPoint(why)) => Ok(Err(why)),
        Err(e) => Err(e),
    }
}

/// Refreshes the reference at a converged `x` and computes tangent and
/// determinant sign there.
pub fn finish_point(x: Vec<f64>, previous_tangent: &[f64], params: &ModelParams) -> Result<BranchState> {
    let reference = set_reference(&StateVector::from_real(&x, params)?)?;
    let jac = eval_jacobian_real(&x, &reference, params)?;
    let (tangent, det_sign) = bordered_tangent(&jac, previous_tangent)
        .ok_or_else(|| ChoreoError::NearBranchPoint("bordered Jacobian is singular".into()))?;
    Ok(BranchState { x, tangent, reference, det_sign })
}

/// Condition number of `[tangent; D_X F]` at a branch state.
pub fn bordered_condition(state: &BranchState, params: &ModelParams) -> Result<f64> {
    let jac = eval_jacobian_real(&state.x, &state.reference, params)?;
    Ok(condition_estimate(&bordered(&state.tangent, &jac)))
}

/// Determinant sign of `[t; D_X F]` after correcting from `from` with a step
/// of length `s`, using `from`'s reference and tangent throughout.
fn probe_sign(from: &BranchState, s: f64, params: &ModelParams, config: &ContinuationConfig) -> Result<(Vec<f64>, i32)> {
    let predictor: Vec<f64> = from.x.iter().zip(&from.tangent).map(|(x, t)| x + s * t).collect();
    let system = ArclengthSystem { params, reference: &from.reference, predictor: &predictor, tangent: &from.tangent };
    let (x, report) = newton_correct(&system, &predictor, &config.newton)?;
    if !report.converged {
        return Err(ChoreoError::NewtonFailed(format!(
            "bisection corrector at s = {s:.3e}: {}",
            report.failure.unwrap_or_default()
        )));
    }
    let jac = eval_jacobian_real(&x, &from.reference, params)?;
    let sign = bordered_tangent(&jac, &from.tangent).map(|(_, s)| s).unwrap_or(0);
    Ok((x, sign))
}

/// Bisects on arclength between `before` and a point `ds` further along
/// `before.tangent` where the determinant sign has changed, then extracts
/// the two-dimensional kernel and the switching direction.
///
/// Errors with [`ChoreoError::NotSimpleBranchPoint`] when the flip does not
/// reproduce from `before` or the kernel is not two-dimensional.
pub fn locate_branch_point(
    before: &BranchState,
    ds: f64,
    params: &ModelParams,
    config: &ContinuationConfig,
) -> Result<BranchPoint> {
    let sign_a = {
        let jac = eval_jacobian_real(&before.x, &before.reference, params)?;
        bordered_tangent(&jac, &before.tangent).map(|(_, s)| s).unwrap_or(0)
    };
    let (mut lo, mut hi) = (0.0, ds);
    let (mut x_hi, sign_b) = probe_sign(before, hi, params, config)?;
    if sign_a == 0 || sign_b == 0 || sign_a == sign_b {
        return Err(ChoreoError::NotSimpleBranchPoint(format!(
            "determinant signs {sign_a} and {sign_b} across the bracket do not reproduce a flip"
        )));
    }
    while hi - lo > config.bisect_tol {
        let mid = 0.5 * (lo + hi);
        let (x_mid, sign) = probe_sign(before, mid, params, config)?;
        if sign == sign_a {
            lo = mid;
        } else {
            hi = mid;
            x_hi = x_mid;
        }
    }
    let x_bif = x_hi;
    let jac = equilibrate_rows(eval_jacobian_real(&x_bif, &before.reference, params)?);
    let kernel = kernel_basis(&jac, 2)?;
    let n = jac.nrows();
    let sv = &kernel.singular_values;
    let (phi1, phi2) = (kernel.vectors[0].clone(), kernel.vectors[1].clone());
    let switch: Vec<f64> = phi1.iter().zip(&phi2).map(|(a, b)| phi2[n] * a - phi1[n] * b).collect();
    if norm2(&switch) < 1e-12 {
        return Err(ChoreoError::NotSimpleBranchPoint("kernel has no ω component".into()));
    }
    Ok(BranchPoint {
        x_bif,
        phi1,
        phi2,
        switch_tangent: normalized(switch),
        incoming_tangent: before.tangent.clone(),
        trailing_singular_values: [sv[n], sv[n - 1], sv[n - 2]],
        largest_singular_value: sv[0],
    })
}

/// Scales every row to unit Euclidean norm. The kernel is unchanged, but
/// singular values no longer grow with the frequency content of the
/// derivative rows, so rank gaps become comparable across `n`, `m` and ω.
pub fn equilibrate_rows(mut a: Mat<f64>) -> Mat<f64> {
    for i in 0..a.nrows() {
        let norm = (0..a.ncols()).map(|j| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..a.ncols() {
                a[(i, j)] /= norm;
            }
        }
    }
    a
}

/// Starting state on the bifurcating branch: `X_bif` with the switching
/// direction (or its negative for the other side of the pitchfork).
pub fn switch_branch(bp: &BranchPoint, params: &ModelParams, mirror: bool) -> Result<BranchState> {
    let reference = set_reference(&StateVector::from_real(&bp.x_bif, params)?)?;
    let sign = if mirror { -1.0 } else { 1.0 };
    let tangent: Vec<f64> = bp.switch_tangent.iter().map(|v| sign * v).collect();
    Ok(BranchState { x: bp.x_bif.clone(), tangent, reference, det_sign: 0 })
}

/// Solves `F(x, ω_target) = 0` from `near` with ω frozen.
pub fn solve_at_frequency(
    near: &[f64],
    omega_target: f64,
    reference: &ReferencePhase,
    params: &ModelParams,
    settings: &NewtonSettings,
) -> Result<(StateVector, NewtonReport)> {
    let n = near.len() - 1;
    let system = FixedFrequencySystem { params, reference, omega: omega_target };
    let (x, report) = newton_correct(&system, &near[..n], settings)?;
    if !report.converged {
        return Err(ChoreoError::NewtonFailed(format!(
            "fixed-frequency solve at ω = {omega_target}: {} (residual {:.3e})",
            report.failure.clone().unwrap_or_default(),
            report.final_residual
        )));
    }
    let mut full = x;
    full.push(omega_target);
    Ok((StateVector::from_real(&full, params)?, report))
}

/// Residual sup norm of `F` at `x`.
pub fn residual_norm(x: &[f64], reference: &ReferencePhase, params: &ModelParams) -> Result<f64> {
    Ok(sup_norm(&eval_f_real(x, reference, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmented::initial_reference;
    use crate::model::{polygon_state, vertical_tangent_unit};

    fn polygon_branch(params: &ModelParams) -> BranchState {
        let x = polygon_state(params).to_real(params).unwrap();
        let reference = initial_reference(params);
        let tangent = tangent_vector(&x, None, &vertical_tangent_unit(params), &reference, params).unwrap();
        BranchState { x, tangent, reference, det_sign: 0 }
    }

    #[test]
    fn polygon_tangent_is_the_vertical_direction() {
        for n in [3, 5] {
            let params = ModelParams::new(n, 2, 8).unwrap();
            let start = polygon_branch(&params);
            let overlap = dot(&start.tangent, &vertical_tangent_unit(&params));
            assert!(overlap > 0.99, "n={n}: {overlap}");
        }
    }

    #[test]
    fn seed_orthogonal_to_the_kernel_is_rejected() {
        let params = ModelParams::new(3, 2, 6).unwrap();
        let x = polygon_state(&params).to_real(&params).unwrap();
        // unfolding multipliers are not free at a solution
        let mut seed = vec![0.0; x.len()];
        seed[0] = 1.0;
        let r = tangent_vector(&x, None, &seed, &initial_reference(&params), &params);
        assert!(r.is_err());
    }

    #[test]
    fn step_off_the_polygon_lands_on_the_family() {
        let params = ModelParams::new(3, 2, 8).unwrap();
        let config = ContinuationConfig::default();
        let start = polygon_branch(&params);
        let out = step(&start, config.ds, &params, &config).unwrap();
        assert!(out.report.converged);
        assert!(residual_norm(&out.state.x, &out.state.reference, &params).unwrap() < 1e-10);
        // the arclength constraint holds at the accepted point
        let e: f64 = out.state.x.iter().zip(&start.x).zip(&start.tangent).map(|((a, b), t)| (a - b) * t).sum();
        assert!((e - out.ds_used).abs() < 1e-12, "{e} vs {}", out.ds_used);
        assert!(dot(&out.state.tangent, &start.tangent) > 0.99);
        assert!(out.ds_next >= out.ds_used);
        assert_ne!(out.state.det_sign, 0);
    }

    #[test]
    fn corrector_is_idempotent_at_a_solution() {
        let params = ModelParams::new(3, 2, 8).unwrap();
        let config = ContinuationConfig::default();
        let out = step(&polygon_branch(&params), 5e-3, &params, &config).unwrap();
        let s = &out.state;
        let system = ArclengthSystem { params: &params, reference: &s.reference, predictor: &s.x, tangent: &s.tangent };
        let (x, report) = newton_correct(&system, &s.x, &config.newton).unwrap();
        assert!(report.iterations <= 1);
        let diff = x.iter().zip(&s.x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn tangent_follows_the_orientation_of_previous() {
        let params = ModelParams::new(3, 2, 8).unwrap();
        let config = ContinuationConfig::default();
        let s = step(&polygon_branch(&params), 5e-3, &params, &config).unwrap().state;
        let flipped: Vec<f64> = s.tangent.iter().map(|v| -v).collect();
        let t = tangent_vector(&s.x, Some(&flipped), &[], &s.reference, &params).unwrap();
        assert!((dot(&t, &s.tangent) + 1.0).abs() < 1e-10);
        // the determinant sign flips with the border row
        let again = finish_point(s.x.clone(), &flipped, &params).unwrap();
        assert_eq!(again.det_sign, -s.det_sign);
    }

    #[test]
    fn solving_at_a_recorded_frequency_recovers_the_point() {
        let params = ModelParams::new(3, 2, 8).unwrap();
        let config = ContinuationConfig::default();
        let mut s = polygon_branch(&params);
        for _ in 0..4 {
            s = step(&s, 5e-3, &params, &config).unwrap().state;
        }
        let omega = s.x[s.x.len() - 1];
        let guess: Vec<f64> = s.x.iter().enumerate().map(|(i, v)| if i + 1 < s.x.len() { v + 1e-4 * (i as f64).sin() } else { *v }).collect();
        let (sol, report) = solve_at_frequency(&guess, omega, &s.reference, &params, &config.newton).unwrap();
        assert!(report.converged);
        let x = sol.to_real(&params).unwrap();
        let diff = x.iter().zip(&s.x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn config_validation() {
        assert!(ContinuationConfig::default().validate().is_ok());
        let bad = ContinuationConfig { ds: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ContinuationConfig { ds_min: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn amplitude_measures_at_the_polygon() {
        let params = ModelParams::new(5, 2, 6).unwrap();
        let mut x = polygon_state(&params);
        assert_eq!(AmplitudeMeasure::SupVertical.evaluate(&x), 0.0);
        assert!(AmplitudeMeasure::SupDeviation.evaluate(&x) < 1e-15);
        *x.u.component_mut(2) = crate::fourier::FourierScalar::sine(6, 1, 0.25);
        assert!((AmplitudeMeasure::SupVertical.evaluate(&x) - 0.25).abs() < 1e-4);
        assert!((AmplitudeMeasure::SupDeviation.evaluate(&x) - 0.25).abs() < 1e-4);
    }

    #[test]
    fn equilibration_keeps_the_kernel() {
        let a = Mat::<f64>::from_fn(3, 4, |i, j| ((i + 1) * (j + 2)) as f64 + if i == j { 1.0 } else { 0.0 } * 100.0f64.powi(i as i32));
        let e = equilibrate_rows(a.clone());
        for i in 0..3 {
            let norm: f64 = (0..4).map(|j| e[(i, j)] * e[(i, j)]).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-14);
        }
        let k = kernel_basis(&e, 1).unwrap();
        let v = &k.vectors[0];
        for i in 0..3 {
            let r: f64 = (0..4).map(|j| a[(i, j)] * v[j]).sum();
            assert!(r.abs() < 1e-9 * 100.0f64.powi(i as i32), "{r}");
        }
    }
}
