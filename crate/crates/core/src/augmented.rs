//! The finite-dimensional augmented map `F = (η, γ, f, g, h)` and its
//! Jacobian in real coordinates.
//!
//! With `d_j = u - R_j u(·+τ_j)` and `e_j = v - R_j v(·+τ_j)`:
//!
//! ```text
//! f   = ∂u - v
//! g   = ω²∂v + 2ω√s₁ J̄v - s₁Īu + Σ_j w_j³ d_j + λ₁J̄u + λ₂v + λ₃e₃
//! h_j = ∂w_j + w_j³ ⟨e_j, d_j⟩ + α_j w_j³
//! η   = (∫u·J̄ũ, ∫u·ũ', ∫u₃)
//! γ_j = w_j(0)² |d_j(0)|² - 1
//! ```
//!
//! Every product is truncated back to order `m` right after it is formed,
//! and the Jacobian differentiates exactly that truncated map.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};
use crate::fourier::{real_ops, FourierScalar, FourierVec3};
use crate::model::{ModelParams, I_BAR, J_BAR};
use crate::state::{Layout, StateVector};

/// Reference orbit `ũ` of the phase conditions, with its derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePhase {
    pub u: FourierVec3,
    pub du: FourierVec3,
}

impl ReferencePhase {
    pub fn new(u: FourierVec3) -> Self {
        let du = u.differentiate();
        Self { u, du }
    }

    pub fn order(&self) -> usize {
        self.u.order()
    }
}

/// Reference taken from a converged state: its `u` with the z-mean removed.
pub fn set_reference(x: &StateVector) -> Result<ReferencePhase> {
    let mut u = x.u.clone();
    let z = u.component(2);
    let mut params = z.to_real();
    params[0] = 0.0;
    *u.component_mut(2) = FourierScalar::from_real(&params);
    let reference = ReferencePhase::new(u);
    let size = reference.du.components().iter().map(|s| s.max_abs()).fold(0.0, f64::max);
    if size < 1e-10 {
        return Err(ChoreoError::DegenerateReference(format!(
            "reference derivative has size {size:.3e}; the orbit has collapsed to an equilibrium"
        )));
    }
    Ok(reference)
}

/// Reference used when leaving the polygon: `polygon + x₁`, i.e.
/// `ũ = (1, 0, sin t)`.
///
/// The planar mean is what makes the rotational section `∫u·J̄ũ`
/// non-degenerate; with the bare kernel vector `ũ = (0, 0, sin t)` that row
/// of the Jacobian vanishes identically.
pub fn initial_reference(params: &ModelParams) -> ReferencePhase {
    let mut u = FourierVec3::constant(params.m, [1.0, 0.0, 0.0]);
    *u.component_mut(2) = FourierScalar::sine(params.m, 1, 1.0);
    ReferencePhase::new(u)
}

/// Value of the augmented map, block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub eta: [f64; 3],
    pub gamma: Vec<f64>,
    pub f: FourierVec3,
    pub g: FourierVec3,
    pub h: Vec<FourierScalar>,
    /// Set when some `w_j` has non-positive mean or a `γ_j` is far off,
    /// which signals an approaching collision or a broken regularization.
    pub warning: Option<String>,
}

impl Residual {
    pub fn to_real(&self, params: &ModelParams) -> Vec<f64> {
        let layout = Layout::new(params);
        let s = layout.series;
        let mut r = vec![0.0; layout.dim()];
        r[..3].copy_from_slice(&self.eta);
        r[3..3 + layout.pairs].copy_from_slice(&self.gamma);
        for c in 0..3 {
            self.f.component(c).write_real(&mut r[layout.f(c)..layout.f(c) + s]);
            self.g.component(c).write_real(&mut r[layout.g(c)..layout.g(c) + s]);
        }
        for (j, hj) in self.h.iter().enumerate() {
            hj.write_real(&mut r[layout.h(j)..layout.h(j) + s]);
        }
        r
    }

    pub fn sup_norm(&self, params: &ModelParams) -> f64 {
        self.to_real(params).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn len(&self, params: &ModelParams) -> usize {
        Layout::new(params).dim()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-pair intermediate series shared by the map and its Jacobian.
struct PairTerms {
    d: FourierVec3,
    e: FourierVec3,
    w2: FourierScalar,
    w3: FourierScalar,
    ip: FourierScalar,
}

fn pair_terms(x: &StateVector, params: &ModelParams, j: usize) -> Result<PairTerms> {
    let (r, tau) = (&params.rotations[j], params.delays[j]);
    let d = x.u.sub(&x.u.delay_shift(tau).apply_matrix(r));
    let e = x.v.sub(&x.v.delay_shift(tau).apply_matrix(r));
    let w = &x.w[j];
    let w2 = w.product(w)?;
    let w3 = w2.product(w)?;
    let ip = d.dot(&e)?;
    Ok(PairTerms { d, e, w2, w3, ip })
}

fn check_shapes(x: &StateVector, reference: &ReferencePhase, params: &ModelParams) -> Result<()> {
    if x.order() != params.m || reference.order() != params.m {
        return Err(ChoreoError::OrderMismatch { left: x.order(), right: params.m });
    }
    if x.w.len() != params.pairs() || x.alpha.len() != params.pairs() {
        return Err(ChoreoError::InvalidInput("state has the wrong number of pairs".into()));
    }
    Ok(())
}

/// Evaluates the truncated augmented map at `x`.
pub fn eval_f(x: &StateVector, reference: &ReferencePhase, params: &ModelParams) -> Result<Residual> {
    check_shapes(x, reference, params)?;
    let m = params.m;
    let sqrt_s1 = params.s1.sqrt();
    let omega = x.omega;

    let f = x.u.differentiate().sub(&x.v);

    let mut g = x
        .v
        .differentiate()
        .scale(omega * omega)
        .add(&x.v.apply_matrix(&J_BAR).scale(2.0 * omega * sqrt_s1))
        .sub(&x.u.apply_matrix(&I_BAR).scale(params.s1))
        .add(&x.u.apply_matrix(&J_BAR).scale(x.lambda[0]))
        .add(&x.v.scale(x.lambda[1]))
        .add(&FourierVec3::constant(m, [0.0, 0.0, x.lambda[2]]));

    let mut h = Vec::with_capacity(params.pairs());
    let mut gamma = Vec::with_capacity(params.pairs());
    let mut warning = None;
    for j in 0..params.pairs() {
        let t = pair_terms(x, params, j)?;
        g = g.add(&t.d.times_scalar(&t.w3)?);
        h.push(
            x.w[j]
                .differentiate()
                .add(&t.w3.product(&t.ip)?)
                .axpy(x.alpha[j], &t.w3),
        );
        let w0 = x.w[j].evaluate_at(0.0);
        let d0 = t.d.evaluate_at(0.0);
        let gj = w0 * w0 * (d0[0] * d0[0] + d0[1] * d0[1] + d0[2] * d0[2]) - 1.0;
        gamma.push(gj);
        let mean = x.w[j].coeff(0).re;
        if mean <= 0.0 || gj.abs() > 10.0 {
            warning = Some(format!(
                "pair {}: mean of w = {mean:.3e}, γ = {gj:.3e}; approaching collision?",
                j + 1
            ));
        }
    }

    let jr = reference.u.apply_matrix(&J_BAR);
    let eta = [
        x.u.integral_pairing(&jr)?,
        x.u.integral_pairing(&reference.du)?,
        2.0 * PI * x.u.component(2).coeff(0).re,
    ];

    Ok(Residual { eta, gamma, f, g, h, warning })
}

/// Real residual vector of [`eval_f`] at real coordinates `x` (with ω last).
pub fn eval_f_real(x: &[f64], reference: &ReferencePhase, params: &ModelParams) -> Result<Vec<f64>> {
    let state = StateVector::from_real(x, params)?;
    Ok(eval_f(&state, reference, params)?.to_real(params))
}

fn put_block(target: &mut Mat<f64>, row: usize, col: usize, block: &Mat<f64>, factor: f64) {
    for j in 0..block.ncols() {
        for i in 0..block.nrows() {
            target[(row + i, col + j)] += factor * block[(i, j)];
        }
    }
}

fn put_identity(target: &mut Mat<f64>, row: usize, col: usize, size: usize, factor: f64) {
    for i in 0..size {
        target[(row + i, col + i)] += factor;
    }
}

fn put_column(target: &mut Mat<f64>, row: usize, col: usize, values: &[f64], factor: f64) {
    for (i, v) in values.iter().enumerate() {
        target[(row + i, col)] += factor * v;
    }
}

fn put_row(target: &mut Mat<f64>, row: usize, col: usize, values: &[f64], factor: f64) {
    for (i, v) in values.iter().enumerate() {
        target[(row, col + i)] += factor * v;
    }
}

fn mat_mul(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    a * b
}

/// Dense Jacobian `D_X F = [D_x F | ∂F/∂ω]`, of size `N × (N+1)`.
pub fn eval_jacobian(
    x: &StateVector,
    reference: &ReferencePhase,
    params: &ModelParams,
) -> Result<Mat<f64>> {
    check_shapes(x, reference, params)?;
    let layout = Layout::new(params);
    let (m, s) = (params.m, layout.series);
    let n_rows = layout.dim();
    let mut jac = Mat::<f64>::zeros(n_rows, n_rows + 1);
    let omega = x.omega;
    let sqrt_s1 = params.s1.sqrt();
    let dt = real_ops::derivative(m);

    // f = ∂u - v
    for c in 0..3 {
        put_block(&mut jac, layout.f(c), layout.u(c), &dt, 1.0);
        put_identity(&mut jac, layout.f(c), layout.v(c), s, -1.0);
    }

    // Linear part of g.
    for c in 0..3 {
        let row = layout.g(c);
        put_block(&mut jac, row, layout.v(c), &dt, omega * omega);
        put_identity(&mut jac, row, layout.v(c), s, x.lambda[1]);
        for cp in 0..3 {
            let coupling = 2.0 * omega * sqrt_s1 * J_BAR[c][cp];
            if coupling != 0.0 {
                put_identity(&mut jac, row, layout.v(cp), s, coupling);
            }
            let diag = -params.s1 * I_BAR[c][cp] + x.lambda[0] * J_BAR[c][cp];
            if diag != 0.0 {
                put_identity(&mut jac, row, layout.u(cp), s, diag);
            }
        }
        let ju = x.u.apply_matrix(&J_BAR);
        put_column(&mut jac, row, layout.lambda(0), &ju.component(c).to_real(), 1.0);
        put_column(&mut jac, row, layout.lambda(1), &x.v.component(c).to_real(), 1.0);
        // ∂g/∂ω = 2ω∂v + 2√s₁J̄v
        let dg_domega = x
            .v
            .component(c)
            .differentiate()
            .scale(2.0 * omega)
            .add(&x.v.apply_matrix(&J_BAR).component(c).scale(2.0 * sqrt_s1));
        put_column(&mut jac, row, layout.omega(), &dg_domega.to_real(), 1.0);
    }
    jac[(layout.g(2), layout.lambda(2))] += 1.0;

    let ev0 = real_ops::evaluation_row(m, 0.0);
    for j in 0..params.pairs() {
        let t = pair_terms(x, params, j)?;
        let (r, tau) = (&params.rotations[j], params.delays[j]);
        let shift = real_ops::shift(m, tau);
        let tw = real_ops::multiplication(&x.w[j]);
        let tw2 = real_ops::multiplication(&t.w2);
        let tw3 = real_ops::multiplication(&t.w3);
        // δ(w³) = (2 T_w T_w + T_{w²}) δw under per-product truncation.
        let mut dw3 = mat_mul(&tw, &tw);
        dw3 *= faer::Scale(2.0);
        dw3 += &tw2;

        // g ← Σ_j w_j³ d_j
        let tw3_shift = mat_mul(&tw3, &shift);
        for c in 0..3 {
            put_block(&mut jac, layout.g(c), layout.u(c), &tw3, 1.0);
            for cp in 0..3 {
                if r[c][cp] != 0.0 {
                    put_block(&mut jac, layout.g(c), layout.u(cp), &tw3_shift, -r[c][cp]);
                }
            }
            let td = real_ops::multiplication(t.d.component(c));
            put_block(&mut jac, layout.g(c), layout.w(j), &mat_mul(&td, &dw3), 1.0);
        }

        // h_j = ∂w_j + w_j³⟨e_j, d_j⟩ + α_j w_j³
        let row = layout.h(j);
        let transpose = [[r[0][0], r[1][0], r[2][0]], [r[0][1], r[1][1], r[2][1]], [r[0][2], r[1][2], r[2][2]]];
        let rt_e = t.e.apply_matrix(&transpose);
        let rt_d = t.d.apply_matrix(&transpose);
        for cp in 0..3 {
            // ∂⟨e, d⟩/∂u_c' = T_{e_c'} - T_{(Rᵀe)_c'} S_τ, symmetric for v.
            let mut du = real_ops::multiplication(t.e.component(cp));
            du -= mat_mul(&real_ops::multiplication(rt_e.component(cp)), &shift);
            put_block(&mut jac, row, layout.u(cp), &mat_mul(&tw3, &du), 1.0);
            let mut dv = real_ops::multiplication(t.d.component(cp));
            dv -= mat_mul(&real_ops::multiplication(rt_d.component(cp)), &shift);
            put_block(&mut jac, row, layout.v(cp), &mat_mul(&tw3, &dv), 1.0);
        }
        put_block(&mut jac, row, layout.w(j), &dt, 1.0);
        let tip = real_ops::multiplication(&t.ip);
        put_block(&mut jac, row, layout.w(j), &mat_mul(&tip, &dw3), 1.0);
        put_block(&mut jac, row, layout.w(j), &dw3, x.alpha[j]);
        put_column(&mut jac, row, layout.alpha(j), &t.w3.to_real(), 1.0);

        // γ_j = w_j(0)² |d_j(0)|² - 1
        let row = layout.gamma(j);
        let w0 = x.w[j].evaluate_at(0.0);
        let d0 = t.d.evaluate_at(0.0);
        let d2 = d0.iter().map(|v| v * v).sum::<f64>();
        put_row(&mut jac, row, layout.w(j), &ev0, 2.0 * w0 * d2);
        let ev_tau = real_ops::evaluation_row(m, tau);
        for cp in 0..3 {
            let rt_d0: f64 = (0..3).map(|c| r[c][cp] * d0[c]).sum();
            put_row(&mut jac, row, layout.u(cp), &ev0, 2.0 * w0 * w0 * d0[cp]);
            put_row(&mut jac, row, layout.u(cp), &ev_tau, -2.0 * w0 * w0 * rt_d0);
        }
    }

    // Phase conditions.
    let jr = reference.u.apply_matrix(&J_BAR);
    for c in 0..3 {
        put_row(&mut jac, layout.eta(0), layout.u(c), &real_ops::pairing_row(jr.component(c)), 1.0);
        put_row(
            &mut jac,
            layout.eta(1),
            layout.u(c),
            &real_ops::pairing_row(reference.du.component(c)),
            1.0,
        );
    }
    jac[(layout.eta(2), layout.u(2))] += 2.0 * PI;

    Ok(jac)
}

/// Jacobian at real coordinates `x` (with ω last).
pub fn eval_jacobian_real(
    x: &[f64],
    reference: &ReferencePhase,
    params: &ModelParams,
) -> Result<Mat<f64>> {
    let state = StateVector::from_real(x, params)?;
    eval_jacobian(&state, reference, params)
}

/// Residual of the delay equation `(ω∂ + √s₁J̄)²u + G(u) = 0` on a uniform
/// grid, with the exact nonlinearity
/// `G(u) = Σ_j (u - R_j u(·+τ_j)) / |u - R_j u(·+τ_j)|³`.
///
/// Returns the largest pointwise Euclidean norm of the residual.
pub fn dde_residual_on_grid(u: &FourierVec3, omega: f64, params: &ModelParams, points: usize) -> f64 {
    let sqrt_s1 = params.s1.sqrt();
    let du = u.differentiate();
    let ddu = du.differentiate();
    let mut worst = 0.0f64;
    for i in 0..points {
        let t = 2.0 * PI * i as f64 / points as f64;
        let x = u.evaluate_at(t);
        let dx = du.evaluate_at(t);
        let ddx = ddu.evaluate_at(t);
        let g = nonlinearity_at(u, params, t);
        let mut res = [0.0; 3];
        for c in 0..3 {
            let jdx: f64 = (0..3).map(|k| J_BAR[c][k] * dx[k]).sum();
            let ix: f64 = (0..3).map(|k| I_BAR[c][k] * x[k]).sum();
            res[c] = omega * omega * ddx[c] + 2.0 * omega * sqrt_s1 * jdx - params.s1 * ix + g[c];
        }
        worst = worst.max(res.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    worst
}

/// `G(u)(t)` evaluated directly from the series of `u`.
pub fn nonlinearity_at(u: &FourierVec3, params: &ModelParams, t: f64) -> [f64; 3] {
    let x = u.evaluate_at(t);
    let mut g = [0.0; 3];
    for j in 0..params.pairs() {
        let y = u.evaluate_at(t + params.delays[j]);
        let r = &params.rotations[j];
        let d: [f64; 3] = std::array::from_fn(|c| x[c] - (0..3).map(|k| r[c][k] * y[k]).sum::<f64>());
        let dist = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in 0..3 {
            g[c] += d[c] / dist.powi(3);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{polygon_state, vertical_tangent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sup(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    fn perturbed_polygon(params: &ModelParams, rng: &mut ChaCha8Rng, size: f64) -> StateVector {
        let mut x = polygon_state(params).to_real(params).unwrap();
        let layout = Layout::new(params);
        for (i, v) in x.iter_mut().enumerate().take(layout.dim()) {
            let mode = if i < 3 + layout.pairs { 0 } else { ((i - 3 - layout.pairs) % layout.series + 1) / 2 };
            *v += size * rng.gen_range(-1.0..1.0) * 0.5f64.powi(mode as i32);
        }
        StateVector::from_real(&x, params).unwrap()
    }

    #[test]
    fn polygon_is_a_zero_for_every_frequency() {
        for n in [3, 5, 7] {
            let params = ModelParams::new(n, 2, 8).unwrap();
            let reference = initial_reference(&params);
            let mut x0 = polygon_state(&params);
            for omega in [0.5, 1.0, params.sk.sqrt(), params.omega_eight()] {
                x0.omega = omega;
                let r = eval_f(&x0, &reference, &params).unwrap();
                assert!(r.sup_norm(&params) < 1e-12, "n={n} ω={omega}: {}", r.sup_norm(&params));
                assert!(r.warning.is_none());
            }
        }
    }

    #[test]
    fn residual_length_matches_unknown_count() {
        for n in [3, 5, 7] {
            for m in [4, 8, 16] {
                let params = ModelParams::new(n, 2, m).unwrap();
                let r = eval_f(&polygon_state(&params), &initial_reference(&params), &params).unwrap();
                assert_eq!(r.to_real(&params).len(), 2 * m * (n + 5) - 3);
            }
        }
    }

    #[test]
    fn kernel_direction_gives_quadratic_residual() {
        let params = ModelParams::new(5, 2, 10).unwrap();
        let reference = initial_reference(&params);
        let x0 = polygon_state(&params).to_real(&params).unwrap();
        let x1 = vertical_tangent(&params).to_real(&params).unwrap();
        let norms: Vec<f64> = [1e-4, 1e-6]
            .iter()
            .map(|eps| {
                let x: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a + eps * b).collect();
                sup(&eval_f_real(&x, &reference, &params).unwrap())
            })
            .collect();
        // O(ε²): shrinking ε by 100 shrinks the residual by ~10⁴.
        assert!(norms[0] < 1e-6, "{norms:?}");
        assert!(norms[1] < 1e-10, "{norms:?}");
        assert!(norms[0] / norms[1] > 5e3, "{norms:?}");
    }

    #[test]
    fn lambda3_only_moves_the_z_mean_of_g() {
        let params = ModelParams::new(3, 2, 6).unwrap();
        let reference = initial_reference(&params);
        let x0 = polygon_state(&params);
        let mut x = x0.clone();
        x.lambda[2] = 1.0;
        let a = eval_f(&x0, &reference, &params).unwrap().to_real(&params);
        let b = eval_f(&x, &reference, &params).unwrap().to_real(&params);
        let layout = Layout::new(&params);
        for i in 0..a.len() {
            let expected = if i == layout.g(2) { 1.0 } else { 0.0 };
            assert!((b[i] - a[i] - expected).abs() < 1e-15, "index {i}");
        }
        let jac = eval_jacobian(&x0, &reference, &params).unwrap();
        for i in 0..a.len() {
            let expected = if i == layout.g(2) { 1.0 } else { 0.0 };
            assert_eq!(jac[(i, layout.lambda(2))], expected);
        }
    }

    #[test]
    fn jacobian_annihilates_vertical_tangent_at_polygon() {
        for n in [3, 5, 7] {
            let params = ModelParams::new(n, 2, 10).unwrap();
            let jac = eval_jacobian(&polygon_state(&params), &initial_reference(&params), &params).unwrap();
            let x1 = vertical_tangent(&params).to_real(&params).unwrap();
            let prod: Vec<f64> = (0..jac.nrows())
                .map(|i| (0..jac.ncols()).map(|k| jac[(i, k)] * x1[k]).sum())
                .collect();
            assert!(sup(&prod) < 1e-10, "n={n}: {}", sup(&prod));
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let params = ModelParams::new(3, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let state = perturbed_polygon(&params, &mut rng, 0.05);
        let reference = set_reference(&perturbed_polygon(&params, &mut rng, 0.2)).unwrap();
        let x = state.to_real(&params).unwrap();
        let jac = eval_jacobian(&state, &reference, &params).unwrap();
        let step = 1e-6;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let fp = eval_f_real(&xp, &reference, &params).unwrap();
            let fm = eval_f_real(&xm, &reference, &params).unwrap();
            for i in 0..fp.len() {
                let fd = (fp[i] - fm[i]) / (2.0 * step);
                diff2 += (fd - jac[(i, k)]).powi(2);
                norm2 += jac[(i, k)].powi(2);
            }
        }
        let rel = (diff2 / norm2).sqrt();
        assert!(rel < 5e-6, "relative Frobenius error {rel:.3e}");
    }

    #[test]
    fn directional_derivatives_are_second_order_consistent() {
        let params = ModelParams::new(5, 2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let state = perturbed_polygon(&params, &mut rng, 0.03);
        let reference = set_reference(&perturbed_polygon(&params, &mut rng, 0.3)).unwrap();
        let x = state.to_real(&params).unwrap();
        let jac = eval_jacobian(&state, &reference, &params).unwrap();
        for _ in 0..20 {
            let d: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let jd: Vec<f64> = (0..jac.nrows())
                .map(|i| (0..jac.ncols()).map(|k| jac[(i, k)] * d[k]).sum())
                .collect();
            let err = |eps: f64| {
                let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
                let xm: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - eps * b).collect();
                let fp = eval_f_real(&xp, &reference, &params).unwrap();
                let fm = eval_f_real(&xm, &reference, &params).unwrap();
                let diff: Vec<f64> = (0..fp.len()).map(|i| (fp[i] - fm[i]) / (2.0 * eps) - jd[i]).collect();
                diff.iter().map(|v| v * v).sum::<f64>().sqrt()
            };
            let (e1, e2) = (err(1e-3), err(1e-4));
            assert!(e1 / e2 > 50.0, "ratio {}", e1 / e2);
        }
    }

    #[test]
    fn reference_from_tangent_perturbation() {
        let params = ModelParams::new(3, 2, 6).unwrap();
        let x0 = polygon_state(&params).to_real(&params).unwrap();
        let x1 = vertical_tangent(&params).to_real(&params).unwrap();
        let amp = 0.3;
        let x: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a + amp * b).collect();
        let state = StateVector::from_real(&x, &params).unwrap();
        let r = set_reference(&state).unwrap();
        let expected = FourierScalar::cosine(params.m, 1, amp);
        for (a, b) in r.du.component(2).coeffs().iter().zip(expected.coeffs()) {
            assert!((a - b).norm() < 1e-15);
        }
        assert_eq!(set_reference(&state).unwrap(), r);
    }

    #[test]
    fn refreshed_reference_zeroes_its_own_sections() {
        let params = ModelParams::new(5, 2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut state = perturbed_polygon(&params, &mut rng, 0.2);
        // Only the z-mean has to vanish for the third section.
        let mut z = state.u.component(2).to_real();
        z[0] = 0.0;
        *state.u.component_mut(2) = FourierScalar::from_real(&z);
        let r = set_reference(&state).unwrap();
        let res = eval_f(&state, &r, &params).unwrap();
        assert!(res.eta.iter().all(|v| v.abs() < 1e-13), "{:?}", res.eta);
    }

    #[test]
    fn polygon_reference_is_degenerate() {
        let params = ModelParams::new(3, 2, 6).unwrap();
        assert!(matches!(
            set_reference(&polygon_state(&params)),
            Err(ChoreoError::DegenerateReference(_))
        ));
    }

    #[test]
    fn residual_of_real_state_is_real() {
        let params = ModelParams::new(3, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let state = perturbed_polygon(&params, &mut rng, 0.1);
        let r = eval_f(&state, &initial_reference(&params), &params).unwrap();
        for s in r.f.components().iter().chain(r.g.components()).chain(&r.h) {
            assert!(s.reality_defect() < 1e-15);
        }
    }

    #[test]
    fn polygon_solves_the_delay_equation() {
        let params = ModelParams::new(7, 2, 6).unwrap();
        let x0 = polygon_state(&params);
        assert!(dde_residual_on_grid(&x0.u, 1.3, &params, 64) < 1e-12);
    }
}
