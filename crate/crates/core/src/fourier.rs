//! Truncated Fourier series of real 2π-periodic functions.
//!
//! A [`FourierScalar`] of order `m` stores the two-sided coefficient sequence
//! `c_ℓ`, `|ℓ| < m`, with the reality constraint `c_{-ℓ} = conj(c_ℓ)`. In this
//! representation differentiation and time shifts are diagonal and products
//! are truncated convolutions.
//!
//! Linear algebra elsewhere in the crate works on the equivalent real
//! parameterization `(c₀, Re c₁, Im c₁, …, Re c_{m-1}, Im c_{m-1})`; the
//! conversions and the real matrices of the basic operators live here too.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};

/// Tolerance used when checking the conjugate symmetry of raw coefficients.
const REALITY_TOL: f64 = 1e-12;

/// Truncated Fourier series of a real 2π-periodic scalar function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierScalar {
    coeffs: Vec<Complex64>,
}

impl FourierScalar {
    /// Zero series of order `m` (`2m - 1` coefficients).
    pub fn zeros(m: usize) -> Self {
        assert!(m >= 1, "order must be positive");
        Self { coeffs: vec![Complex64::new(0.0, 0.0); 2 * m - 1] }
    }

    /// Constant function `value`.
    pub fn constant(m: usize, value: f64) -> Self {
        let mut s = Self::zeros(m);
        s.coeffs[m - 1] = Complex64::new(value, 0.0);
        s
    }

    /// `amplitude · sin(ℓ t)`.
    pub fn sine(m: usize, mode: usize, amplitude: f64) -> Self {
        let mut s = Self::zeros(m);
        if mode == 0 {
            return s;
        }
        assert!(mode < m, "mode {mode} outside order {m}");
        s.coeffs[m - 1 + mode] = Complex64::new(0.0, -0.5 * amplitude);
        s.coeffs[m - 1 - mode] = Complex64::new(0.0, 0.5 * amplitude);
        s
    }

    /// `amplitude · cos(ℓ t)`.
    pub fn cosine(m: usize, mode: usize, amplitude: f64) -> Self {
        let mut s = Self::zeros(m);
        if mode == 0 {
            s.coeffs[m - 1] = Complex64::new(amplitude, 0.0);
            return s;
        }
        assert!(mode < m, "mode {mode} outside order {m}");
        s.coeffs[m - 1 + mode] = Complex64::new(0.5 * amplitude, 0.0);
        s.coeffs[m - 1 - mode] = Complex64::new(0.5 * amplitude, 0.0);
        s
    }

    /// Builds a series from the full two-sided sequence `c_{-(m-1)} … c_{m-1}`.
    ///
    /// The sequence must have odd length and be conjugate symmetric up to
    /// round-off; the stored coefficients are symmetrized exactly.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(ChoreoError::InvalidInput(format!(
                "series length {} is not odd",
                coeffs.len()
            )));
        }
        let m = (coeffs.len() + 1) / 2;
        let scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        for l in 0..m {
            let a = coeffs[m - 1 + l];
            let b = coeffs[m - 1 - l];
            if (a - b.conj()).norm() > REALITY_TOL * scale {
                return Err(ChoreoError::InvalidInput(format!(
                    "coefficients at ±{l} are not conjugate symmetric"
                )));
            }
        }
        let mut s = Self { coeffs };
        s.symmetrize();
        Ok(s)
    }

    /// Builds a series from the real parameterization
    /// `(c₀, Re c₁, Im c₁, …)` of length `2m - 1`.
    pub fn from_real(params: &[f64]) -> Self {
        assert!(params.len() % 2 == 1, "real parameter length must be odd");
        let m = (params.len() + 1) / 2;
        let mut s = Self::zeros(m);
        s.coeffs[m - 1] = Complex64::new(params[0], 0.0);
        for l in 1..m {
            let c = Complex64::new(params[2 * l - 1], params[2 * l]);
            s.coeffs[m - 1 + l] = c;
            s.coeffs[m - 1 - l] = c.conj();
        }
        s
    }

    /// Writes the real parameterization into `out` (length `2m - 1`).
    pub fn write_real(&self, out: &mut [f64]) {
        let m = self.order();
        debug_assert_eq!(out.len(), 2 * m - 1);
        out[0] = self.coeffs[m - 1].re;
        for l in 1..m {
            let c = self.coeffs[m - 1 + l];
            out[2 * l - 1] = c.re;
            out[2 * l] = c.im;
        }
    }

    pub fn to_real(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs.len()];
        self.write_real(&mut out);
        out
    }

    /// Truncation order `m`.
    pub fn order(&self) -> usize {
        (self.coeffs.len() + 1) / 2
    }

    /// Number of real degrees of freedom, `2m - 1`.
    pub fn real_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient `c_ℓ`; zero outside the truncation.
    pub fn coeff(&self, l: i64) -> Complex64 {
        let m = self.order() as i64;
        if l.abs() >= m {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(l + m - 1) as usize]
        }
    }

    /// Maximum over `ℓ` of `|c_{ℓ} - conj(c_{-ℓ})|`.
    pub fn reality_defect(&self) -> f64 {
        let m = self.order();
        (0..m)
            .map(|l| (self.coeffs[m - 1 + l] - self.coeffs[m - 1 - l].conj()).norm())
            .fold(0.0, f64::max)
    }

    fn symmetrize(&mut self) {
        let m = self.order();
        self.coeffs[m - 1].im = 0.0;
        for l in 1..m {
            let avg = 0.5 * (self.coeffs[m - 1 + l] + self.coeffs[m - 1 - l].conj());
            self.coeffs[m - 1 + l] = avg;
            self.coeffs[m - 1 - l] = avg.conj();
        }
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(ChoreoError::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    fn map_diag(&self, f: impl Fn(i64) -> Complex64) -> Self {
        let m = self.order() as i64;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| f(i as i64 - (m - 1)) * c)
            .collect();
        Self { coeffs }
    }

    /// Time derivative: `c_ℓ ↦ iℓ c_ℓ`.
    pub fn differentiate(&self) -> Self {
        self.map_diag(|l| Complex64::new(0.0, l as f64))
    }

    /// Time shift `a(t) ↦ a(t + τ)`: `c_ℓ ↦ e^{iℓτ} c_ℓ`.
    pub fn delay_shift(&self, tau: f64) -> Self {
        self.map_diag(|l| Complex64::from_polar(1.0, l as f64 * tau))
    }

    /// Product of two series truncated back to the common order.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(fft_product(self, other))
    }

    /// Direct `O(m²)` truncated convolution.
    pub fn product_direct(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let m = self.order() as i64;
        let mut out = Self::zeros(self.order());
        for l in -(m - 1)..m {
            let mut acc = Complex64::new(0.0, 0.0);
            let lo = (l - (m - 1)).max(-(m - 1));
            let hi = (l + (m - 1)).min(m - 1);
            for l1 in lo..=hi {
                acc += self.coeff(l1) * other.coeff(l - l1);
            }
            out.coeffs[(l + m - 1) as usize] = acc;
        }
        out.symmetrize();
        Ok(out)
    }

    /// `∫₀^{2π} a(t) b(t) dt = 2π Σ_ℓ a_ℓ b_{-ℓ}`.
    pub fn integral_pairing(&self, other: &Self) -> Result<f64> {
        self.check_order(other)?;
        let m = self.order() as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for l in -(m - 1)..m {
            acc += self.coeff(l) * other.coeff(-l);
        }
        let value = 2.0 * PI * acc;
        assert!(
            value.im.abs() < 1e-10 * (1.0 + value.re.abs()),
            "pairing of reality-symmetric series has imaginary part {}",
            value.im
        );
        Ok(value.re)
    }

    /// Point value `Σ_ℓ c_ℓ e^{iℓt}`.
    pub fn evaluate_at(&self, t: f64) -> f64 {
        let m = self.order();
        let mut value = self.coeffs[m - 1].re;
        let mut imag = self.coeffs[m - 1].im;
        for l in 1..m {
            let e = Complex64::from_polar(1.0, l as f64 * t);
            let z = self.coeffs[m - 1 + l] * e + self.coeffs[m - 1 - l] * e.conj();
            value += z.re;
            imag += z.im;
        }
        assert!(
            imag.abs() < 1e-10 * (1.0 + value.abs()),
            "evaluation of a non-real series (imaginary part {imag})"
        );
        value
    }

    /// Samples on the uniform grid `t_i = 2πi/count`.
    pub fn sample(&self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| self.evaluate_at(2.0 * PI * i as f64 / count as f64))
            .collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + factor · other`.
    pub fn axpy(&self, factor: f64, other: &Self) -> Self {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b * factor)
                .collect(),
        }
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest coefficient modulus over modes `|ℓ| ≥ from`.
    pub fn tail_max_abs(&self, from: usize) -> f64 {
        let m = self.order();
        (from..m).map(|l| self.coeffs[m - 1 + l].norm()).fold(0.0, f64::max)
    }

    /// Same function represented at order `m` (zero padding or truncation).
    pub fn resize(&self, m: usize) -> Self {
        let mut out = Self::zeros(m);
        let keep = m.min(self.order()) as i64;
        for l in -(keep - 1)..keep {
            out.coeffs[(l + m as i64 - 1) as usize] = self.coeff(l);
        }
        out
    }
}

thread_local! {
    static FFT_PLANS: RefCell<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>> =
        RefCell::new(HashMap::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    FFT_PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry(len)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
            })
            .clone()
    })
}

/// Zero-padded FFT convolution, truncated to `|ℓ| < m`.
fn fft_product(a: &FourierScalar, b: &FourierScalar) -> FourierScalar {
    let m = a.order();
    let len = (2 * (2 * m - 1)).next_power_of_two();
    let (fwd, inv) = plans(len);
    // Coefficient ℓ sits at index ℓ mod len; the linear convolution of two
    // sequences supported on |ℓ| ≤ m-1 is supported on |ℓ| ≤ 2m-2 < len/2,
    // so the circular wrap never aliases.
    let load = |s: &FourierScalar| {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for l in -(m as i64 - 1)..m as i64 {
            buf[l.rem_euclid(len as i64) as usize] = s.coeff(l);
        }
        buf
    };
    let mut fa = load(a);
    let mut fb = load(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let norm = 1.0 / len as f64;
    let mut out = FourierScalar::zeros(m);
    for l in -(m as i64 - 1)..m as i64 {
        out.coeffs[(l + m as i64 - 1) as usize] = fa[l.rem_euclid(len as i64) as usize] * norm;
    }
    out.symmetrize();
    out
}

/// Three real periodic functions of a common order (a point in ℝ³ over time).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierVec3 {
    components: [FourierScalar; 3],
}

impl FourierVec3 {
    pub fn new(components: [FourierScalar; 3]) -> Result<Self> {
        let m = components[0].order();
        if components.iter().any(|c| c.order() != m) {
            return Err(ChoreoError::OrderMismatch {
                left: m,
                right: components.iter().map(|c| c.order()).find(|&o| o != m).unwrap(),
            });
        }
        Ok(Self { components })
    }

    pub fn zeros(m: usize) -> Self {
        Self { components: std::array::from_fn(|_| FourierScalar::zeros(m)) }
    }

    /// Constant vector.
    pub fn constant(m: usize, value: [f64; 3]) -> Self {
        Self { components: value.map(|v| FourierScalar::constant(m, v)) }
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn components(&self) -> &[FourierScalar; 3] {
        &self.components
    }

    pub fn component(&self, c: usize) -> &FourierScalar {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut FourierScalar {
        &mut self.components[c]
    }

    pub fn map(&self, f: impl Fn(&FourierScalar) -> FourierScalar) -> Self {
        Self { components: std::array::from_fn(|c| f(&self.components[c])) }
    }

    pub fn differentiate(&self) -> Self {
        self.map(FourierScalar::differentiate)
    }

    pub fn delay_shift(&self, tau: f64) -> Self {
        self.map(|s| s.delay_shift(tau))
    }

    /// Applies a constant 3×3 matrix pointwise in time.
    pub fn apply_matrix(&self, r: &[[f64; 3]; 3]) -> Self {
        let m = self.order();
        Self {
            components: std::array::from_fn(|row| {
                let mut acc = FourierScalar::zeros(m);
                for col in 0..3 {
                    if r[row][col] != 0.0 {
                        acc = acc.axpy(r[row][col], &self.components[col]);
                    }
                }
                acc
            }),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { components: std::array::from_fn(|c| self.components[c].add(&other.components[c])) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { components: std::array::from_fn(|c| self.components[c].sub(&other.components[c])) }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|s| s.scale(factor))
    }

    /// Componentwise product with a scalar series.
    pub fn times_scalar(&self, s: &FourierScalar) -> Result<Self> {
        Ok(Self {
            components: [
                self.components[0].product(s)?,
                self.components[1].product(s)?,
                self.components[2].product(s)?,
            ],
        })
    }

    /// Pointwise Euclidean inner product `⟨a(t), b(t)⟩` as a series.
    pub fn dot(&self, other: &Self) -> Result<FourierScalar> {
        let mut acc = self.components[0].product(&other.components[0])?;
        for c in 1..3 {
            acc = acc.add(&self.components[c].product(&other.components[c])?);
        }
        Ok(acc)
    }

    /// `∫₀^{2π} ⟨a(t), b(t)⟩ dt`.
    pub fn integral_pairing(&self, other: &Self) -> Result<f64> {
        let mut acc = 0.0;
        for c in 0..3 {
            acc += self.components[c].integral_pairing(&other.components[c])?;
        }
        Ok(acc)
    }

    pub fn evaluate_at(&self, t: f64) -> [f64; 3] {
        std::array::from_fn(|c| self.components[c].evaluate_at(t))
    }

    pub fn resize(&self, m: usize) -> Self {
        self.map(|s| s.resize(m))
    }
}

/// Real-parameter matrices of the linear operators used by the Jacobian.
pub mod real_ops {
    use super::*;

    /// Real matrix of the diagonal operator `c_ℓ ↦ d(ℓ) c_ℓ`, where the
    /// multiplier satisfies `d(-ℓ) = conj(d(ℓ))`.
    pub fn diagonal(m: usize, d: impl Fn(i64) -> Complex64) -> Mat<f64> {
        let s = 2 * m - 1;
        let mut out = Mat::<f64>::zeros(s, s);
        out[(0, 0)] = d(0).re;
        for l in 1..m {
            let z = d(l as i64);
            let (re, im) = (2 * l - 1, 2 * l);
            out[(re, re)] = z.re;
            out[(re, im)] = -z.im;
            out[(im, re)] = z.im;
            out[(im, im)] = z.re;
        }
        out
    }

    pub fn derivative(m: usize) -> Mat<f64> {
        diagonal(m, |l| Complex64::new(0.0, l as f64))
    }

    pub fn shift(m: usize, tau: f64) -> Mat<f64> {
        diagonal(m, |l| Complex64::from_polar(1.0, l as f64 * tau))
    }

    /// Real matrix of `a ↦ trunc(c · a)`.
    pub fn multiplication(c: &FourierScalar) -> Mat<f64> {
        let m = c.order();
        let s = 2 * m - 1;
        let mut out = Mat::<f64>::zeros(s, s);
        let put = |out: &mut Mat<f64>, col: usize, value: &dyn Fn(i64) -> Complex64| {
            out[(0, col)] = value(0).re;
            for l in 1..m {
                let z = value(l as i64);
                out[(2 * l - 1, col)] = z.re;
                out[(2 * l, col)] = z.im;
            }
        };
        put(&mut out, 0, &|l| c.coeff(l));
        for lp in 1..m as i64 {
            let i = Complex64::new(0.0, 1.0);
            put(&mut out, 2 * lp as usize - 1, &|l| c.coeff(l - lp) + c.coeff(l + lp));
            put(&mut out, 2 * lp as usize, &|l| i * (c.coeff(l - lp) - c.coeff(l + lp)));
        }
        out
    }

    /// Row vector `r` with `r · params(a) = a(t)`.
    pub fn evaluation_row(m: usize, t: f64) -> Vec<f64> {
        let mut row = vec![0.0; 2 * m - 1];
        row[0] = 1.0;
        for l in 1..m {
            let (s, c) = (l as f64 * t).sin_cos();
            row[2 * l - 1] = 2.0 * c;
            row[2 * l] = -2.0 * s;
        }
        row
    }

    /// Row vector `r` with `r · params(a) = ∫₀^{2π} a(t) b(t) dt`.
    pub fn pairing_row(b: &FourierScalar) -> Vec<f64> {
        let p = b.to_real();
        let mut row = vec![0.0; p.len()];
        row[0] = 2.0 * PI * p[0];
        for i in 1..p.len() {
            row[i] = 4.0 * PI * p[i];
        }
        row
    }
}
