//! Closed-form data of the symmetric n-body problem in the rotating frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};
use crate::fourier::{FourierScalar, FourierVec3};
use crate::state::StateVector;

/// Rotation by `angle` about the z-axis, `e^{angle·J̄}` with `J̄ = J ⊕ 0`.
pub fn rotation_z(angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// `J̄ = J ⊕ 0`, the generator of counter-clockwise rotations about z.
pub const J_BAR: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];

/// `Ī = diag(1, 1, 0) = -J̄²`.
pub const I_BAR: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];

/// `s_k = ¼ Σ_{j=1}^{n-1} sin²(kjζ/2) / sin³(jζ/2)` with `ζ = 2π/n`.
pub fn compute_sk(n: usize, k: usize) -> Result<f64> {
    if n < 3 {
        return Err(ChoreoError::InvalidInput(format!("n = {n} must be at least 3")));
    }
    if k < 1 || k > n - 1 {
        return Err(ChoreoError::InvalidInput(format!("k = {k} outside [1, {}]", n - 1)));
    }
    // sin²(kjπ/n) only depends on kj mod n folded into [0, n/2], which keeps
    // the arguments small and makes k and n - k sum identical terms
    let angle = |i: usize| PI * i as f64 / n as f64;
    Ok(0.25
        * (1..n)
            .map(|j| {
                let r = (k * j) % n;
                let num = angle(r.min(n - r)).sin();
                num * num / angle(j).sin().powi(3)
            })
            .sum::<f64>())
}

/// `s₁ = ¼ Σ_{j=1}^{n-1} 1 / sin(jπ/n)`.
pub fn compute_s1(n: usize) -> f64 {
    0.25 * (1..n).map(|j| 1.0 / (PI * j as f64 / n as f64).sin()).sum::<f64>()
}

/// Parameters of one continuation problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub zeta: f64,
    pub s1: f64,
    pub sk: f64,
    /// `τ_j = j k ζ` for `j = 1..n-1`.
    pub delays: Vec<f64>,
    /// `R_j = e^{jζJ̄}` for `j = 1..n-1`.
    pub rotations: Vec<[[f64; 3]; 3]>,
}

impl ModelParams {
    /// Validates `(n, k, m)` and precomputes the model constants.
    ///
    /// Even `n` is rejected: no figure-eight choreography exists there.
    pub fn new(n: usize, k: usize, m: usize) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(ChoreoError::InvalidInput(format!(
                "n = {n}: the body count must be odd and at least 3"
            )));
        }
        // For n = 3 the only branch index ≥ 2 is k = 2 = n - 1.
        let k_max = (n / 2).max(2);
        if k < 2 || k > k_max {
            return Err(ChoreoError::InvalidInput(format!(
                "k = {k}: the branch index must lie in [2, {k_max}] (n = {n})"
            )));
        }
        if m < 2 {
            return Err(ChoreoError::InvalidInput(format!("truncation order m = {m} < 2")));
        }
        let zeta = 2.0 * PI / n as f64;
        Ok(Self {
            n,
            k,
            m,
            zeta,
            s1: compute_s1(n),
            sk: compute_sk(n, k)?,
            delays: (1..n).map(|j| (j * k) as f64 * zeta).collect(),
            rotations: (1..n).map(|j| rotation_z(j as f64 * zeta)).collect(),
        })
    }

    /// Same model at a different truncation order.
    pub fn with_order(&self, m: usize) -> Result<Self> {
        Self::new(self.n, self.k, m)
    }

    /// Number of delayed interaction terms, `n - 1`.
    pub fn pairs(&self) -> usize {
        self.n - 1
    }

    /// Real length of one scalar series, `2m - 1`.
    pub fn series_len(&self) -> usize {
        2 * self.m - 1
    }

    /// Number of unknowns `x = (λ, α, u, v, w)`, which equals `2m(n+5) - 3`.
    pub fn unknowns(&self) -> usize {
        3 + self.pairs() + (6 + self.pairs()) * self.series_len()
    }

    pub fn omega_start(&self) -> f64 {
        self.sk.sqrt()
    }

    /// Frequency at which the (2,1) torus knot, the figure eight, occurs.
    pub fn omega_eight(&self) -> f64 {
        2.0 * self.s1.sqrt()
    }

    /// Regularized reciprocal distance at the polygon, `1 / (2 sin(jπ/n))`.
    pub fn polygon_w(&self, j: usize) -> f64 {
        1.0 / (2.0 * (PI * j as f64 / self.n as f64).sin())
    }
}

/// Winding numbers of a torus-knot choreography.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnotClass {
    pub p: i64,
    pub q: i64,
    /// Whether `k q - p ∈ nℤ`, i.e. the orbit is an inertial-frame choreography.
    pub is_choreography: bool,
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub const KNOT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_QMAX: i64 = 64;

/// Finds the coprime `(p, q)`, `q ≤ qmax`, with `ω/√s₁ = p/q`.
///
/// Returns `None` when no fraction matches to [`KNOT_TOLERANCE`]; otherwise
/// the smallest-denominator match, flagged by whether it satisfies the
/// choreography congruence `k q - p ∈ nℤ`.
pub fn classify_frequency(omega: f64, params: &ModelParams, qmax: i64) -> Option<KnotClass> {
    let ratio = omega / params.s1.sqrt();
    if !(ratio.is_finite() && ratio > 0.0) {
        return None;
    }
    (1..=qmax.max(1)).find_map(|q| {
        let p = (ratio * q as f64).round() as i64;
        if p < 1 || gcd(p, q) != 1 || (ratio - p as f64 / q as f64).abs() >= KNOT_TOLERANCE {
            return None;
        }
        let n = params.n as i64;
        Some(KnotClass { p, q, is_choreography: (params.k as i64 * q - p).rem_euclid(n) == 0 })
    })
}

/// The polygon relative equilibrium `x₀ = (0, 0, u₀, 0, w₀)` with `ω = √s_k`.
///
/// `u₀ = (1, 0, 0)` and `w_{j,0} = 1/(2 sin(jπ/n))`; the augmented map
/// vanishes at `x₀` for every ω.
pub fn polygon_state(params: &ModelParams) -> StateVector {
    let m = params.m;
    StateVector {
        lambda: [0.0; 3],
        alpha: vec![0.0; params.pairs()],
        u: FourierVec3::constant(m, [1.0, 0.0, 0.0]),
        v: FourierVec3::zeros(m),
        w: (1..params.n).map(|j| FourierScalar::constant(m, params.polygon_w(j))).collect(),
        omega: params.omega_start(),
    }
}

/// Kernel direction `x₁ = (0, 0, u₁, v₁, 0)` at the polygon, with
/// `u₁ = (0, 0, sin t)`, `v₁ = (0, 0, cos t)` and a zero ω entry.
pub fn vertical_tangent(params: &ModelParams) -> StateVector {
    let m = params.m;
    let mut x1 = StateVector::zeros(params);
    *x1.u.component_mut(2) = FourierScalar::sine(m, 1, 1.0);
    *x1.v.component_mut(2) = FourierScalar::cosine(m, 1, 1.0);
    x1
}

/// Unit-norm real coordinates of [`vertical_tangent`].
pub fn vertical_tangent_unit(params: &ModelParams) -> Vec<f64> {
    let mut t = vertical_tangent(params).to_real(params).expect("shape is consistent");
    let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    t.iter_mut().for_each(|v| *v /= norm);
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn three_body_frequencies() {
        assert_relative_eq!(compute_sk(3, 1).unwrap(), 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(compute_sk(3, 2).unwrap(), compute_sk(3, 1).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn five_body_second_frequency() {
        // Independent evaluation of the four-term sum.
        let z = 2.0 * PI / 5.0;
        let direct: f64 = 0.25
            * [1.0f64, 2.0, 3.0, 4.0]
                .iter()
                .map(|&j| (j * z).sin().powi(2) / (j * z / 2.0).sin().powi(3))
                .sum::<f64>();
        let sk = compute_sk(5, 2).unwrap();
        assert_relative_eq!(sk, direct, epsilon = 1e-14);
        assert!((sk - 2.4278).abs() < 5e-5, "{sk}");
    }

    #[test]
    fn sk_is_symmetric_and_s1_matches() {
        for n in (3..=15).step_by(2) {
            for k in 1..n {
                let a = compute_sk(n, k).unwrap();
                let b = compute_sk(n, n - k).unwrap();
                assert!((a - b).abs() <= 1e-14 * a.abs());
            }
            assert_relative_eq!(compute_sk(n, 1).unwrap(), compute_s1(n), max_relative = 1e-14);
        }
    }

    #[test]
    fn sk_rejects_bad_index() {
        assert!(compute_sk(5, 0).is_err());
        assert!(compute_sk(5, 5).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(4, 2, 10).is_err());
        assert!(ModelParams::new(5, 3, 10).is_err());
        assert!(ModelParams::new(5, 1, 10).is_err());
        assert!(ModelParams::new(5, 2, 1).is_err());
        // n = 3 admits k = 2 = n - 1 (the only second branch; s₂ = s₁).
        let p = ModelParams::new(3, 2, 10).unwrap();
        assert_eq!(p.delays.len(), 2);
    }

    #[test]
    fn rotations_are_proper_and_pair_up() {
        let p = ModelParams::new(7, 2, 4).unwrap();
        for (j, r) in p.rotations.iter().enumerate() {
            let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
            assert_relative_eq!(det, 1.0, epsilon = 1e-15);
            assert_eq!(r[2][2], 1.0);
            assert_eq!((r[0][2], r[1][2], r[2][0], r[2][1]), (0.0, 0.0, 0.0, 0.0));
            let other = &p.rotations[p.n - 2 - j];
            for a in 0..3 {
                for b in 0..3 {
                    let prod: f64 = (0..3).map(|c| r[a][c] * other[c][b]).sum();
                    let id = if a == b { 1.0 } else { 0.0 };
                    assert!((prod - id).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn polygon_state_structure() {
        let p = ModelParams::new(5, 2, 6).unwrap();
        let x0 = polygon_state(&p);
        assert_eq!(x0.u.component(0).coeff(0).re, 1.0);
        for c in 0..3 {
            for l in -5..6i64 {
                if (c, l) != (0, 0) {
                    assert_eq!(x0.u.component(c).coeff(l).norm(), 0.0);
                }
            }
        }
        assert_eq!(x0.omega, p.sk.sqrt());
        assert_relative_eq!(x0.w[0].coeff(0).re, p.polygon_w(1));
    }

    #[test]
    fn vertical_tangent_is_sine_in_z() {
        let p = ModelParams::new(3, 2, 4).unwrap();
        let x1 = vertical_tangent(&p);
        assert_relative_eq!(x1.u.component(2).evaluate_at(PI / 2.0), 1.0, epsilon = 1e-15);
        assert_eq!(x1.u.component(0).max_abs(), 0.0);
        assert_eq!(x1.u.component(1).max_abs(), 0.0);
        assert_eq!(x1.u.component(2).coeff(-1), num_complex::Complex64::new(0.0, 0.5));
        assert_eq!(x1.v.component(2).coeff(1), num_complex::Complex64::new(0.5, 0.0));
        assert_eq!(x1.omega, 0.0);
        let unit = vertical_tangent_unit(&p);
        assert_relative_eq!(unit.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn polygon_weights() {
        let p3 = ModelParams::new(3, 2, 4).unwrap();
        assert_relative_eq!(p3.polygon_w(1), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(p3.polygon_w(2), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let p5 = ModelParams::new(5, 2, 4).unwrap();
        assert!((p5.polygon_w(1) - 0.8506508).abs() < 1e-7);
    }

    #[test]
    fn unknown_count() {
        for n in [3, 5, 7] {
            for m in [4, 8, 16] {
                let p = ModelParams::new(n, 2, m).unwrap();
                assert_eq!(p.unknowns(), 2 * m * (n + 5) - 3);
            }
        }
    }

    #[test]
    fn eight_frequency_classifies_as_two_one() {
        for n in (3..=15).step_by(2) {
            let p = ModelParams::new(n, 2, 4).unwrap();
            let kc = classify_frequency(p.omega_eight(), &p, DEFAULT_QMAX).unwrap();
            assert_eq!((kc.p, kc.q, kc.is_choreography), (2, 1, true));
        }
    }

    #[test]
    fn nineteen_over_forty_one() {
        let p = ModelParams::new(3, 2, 4).unwrap();
        let kc = classify_frequency(p.s1.sqrt() * 19.0 / 41.0, &p, DEFAULT_QMAX).unwrap();
        assert_eq!((kc.p, kc.q, kc.is_choreography), (19, 41, true));
    }

    #[test]
    fn irrational_ratio_has_no_class() {
        let p = ModelParams::new(5, 2, 4).unwrap();
        assert!(classify_frequency(p.s1.sqrt() * PI, &p, 100).is_none());
    }

    #[test]
    fn exhaustive_small_denominators() {
        for n in [3usize, 5, 7] {
            let params = ModelParams::new(n, 2, 4).unwrap();
            for q in 1..=20i64 {
                for p in 1..=3 * q {
                    if gcd(p, q) != 1 || (2 * q - p).rem_euclid(n as i64) != 0 {
                        continue;
                    }
                    let omega = params.s1.sqrt() * p as f64 / q as f64;
                    let kc = classify_frequency(omega, &params, DEFAULT_QMAX).unwrap();
                    assert_eq!((kc.p, kc.q), (p, q));
                    assert!(kc.is_choreography);
                }
            }
        }
    }
}
