//! Unknowns of the augmented system and their real coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};
use crate::fourier::{FourierScalar, FourierVec3};
use crate::model::ModelParams;

/// `X = (λ, α, u, v, w, ω)`.
///
/// `u` is the position of body `n` in the rotating frame, `v` its velocity
/// variable and `w_j` the regularized reciprocal distance to its `j`-th
/// delayed image. `λ` and `α` are unfolding multipliers that vanish on true
/// solutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub lambda: [f64; 3],
    pub alpha: Vec<f64>,
    pub u: FourierVec3,
    pub v: FourierVec3,
    pub w: Vec<FourierScalar>,
    pub omega: f64,
}

/// Offsets of each block inside the real coordinate vector.
///
/// Unknowns are ordered `λ, α, u₁..u₃, v₁..v₃, w₁..w_{n-1}, ω`; residuals
/// `η, γ, f₁..f₃, g₁..g₃, h₁..h_{n-1}` use the same offsets for the matching
/// blocks, so the square part of the Jacobian is block-aligned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub pairs: usize,
    pub series: usize,
}

impl Layout {
    pub fn new(params: &ModelParams) -> Self {
        Self { pairs: params.pairs(), series: params.series_len() }
    }

    pub fn lambda(&self, i: usize) -> usize {
        i
    }

    pub fn alpha(&self, j: usize) -> usize {
        3 + j
    }

    pub fn u(&self, c: usize) -> usize {
        3 + self.pairs + c * self.series
    }

    pub fn v(&self, c: usize) -> usize {
        3 + self.pairs + (3 + c) * self.series
    }

    pub fn w(&self, j: usize) -> usize {
        3 + self.pairs + (6 + j) * self.series
    }

    /// Number of residuals (= unknowns without ω).
    pub fn dim(&self) -> usize {
        3 + self.pairs + (6 + self.pairs) * self.series
    }

    pub fn omega(&self) -> usize {
        self.dim()
    }

    // Residual blocks share offsets with the unknown blocks.
    pub fn eta(&self, i: usize) -> usize {
        self.lambda(i)
    }

    pub fn gamma(&self, j: usize) -> usize {
        self.alpha(j)
    }

    pub fn f(&self, c: usize) -> usize {
        self.u(c)
    }

    pub fn g(&self, c: usize) -> usize {
        self.v(c)
    }

    pub fn h(&self, j: usize) -> usize {
        self.w(j)
    }
}

impl StateVector {
    pub fn zeros(params: &ModelParams) -> Self {
        let m = params.m;
        Self {
            lambda: [0.0; 3],
            alpha: vec![0.0; params.pairs()],
            u: FourierVec3::zeros(m),
            v: FourierVec3::zeros(m),
            w: vec![FourierScalar::zeros(m); params.pairs()],
            omega: 0.0,
        }
    }

    pub fn order(&self) -> usize {
        self.u.order()
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        let m = params.m;
        let ok = self.alpha.len() == params.pairs()
            && self.w.len() == params.pairs()
            && self.u.order() == m
            && self.v.order() == m
            && self.w.iter().all(|s| s.order() == m);
        if ok {
            Ok(())
        } else {
            Err(ChoreoError::InvalidInput(format!(
                "state shape does not match n = {}, m = {}",
                params.n, params.m
            )))
        }
    }

    /// Real coordinates, length `2m(n+5) - 3 + 1` (ω last).
    pub fn to_real(&self, params: &ModelParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let layout = Layout::new(params);
        let s = layout.series;
        let mut x = vec![0.0; layout.dim() + 1];
        x[..3].copy_from_slice(&self.lambda);
        x[3..3 + layout.pairs].copy_from_slice(&self.alpha);
        for c in 0..3 {
            self.u.component(c).write_real(&mut x[layout.u(c)..layout.u(c) + s]);
            self.v.component(c).write_real(&mut x[layout.v(c)..layout.v(c) + s]);
        }
        for (j, wj) in self.w.iter().enumerate() {
            wj.write_real(&mut x[layout.w(j)..layout.w(j) + s]);
        }
        x[layout.omega()] = self.omega;
        Ok(x)
    }

    pub fn from_real(x: &[f64], params: &ModelParams) -> Result<Self> {
        let layout = Layout::new(params);
        if x.len() != layout.dim() + 1 {
            return Err(ChoreoError::InvalidInput(format!(
                "real state has length {}, expected {}",
                x.len(),
                layout.dim() + 1
            )));
        }
        let s = layout.series;
        let series = |off: usize| FourierScalar::from_real(&x[off..off + s]);
        let vec3 = |f: &dyn Fn(usize) -> usize| {
            FourierVec3::new([series(f(0)), series(f(1)), series(f(2))])
        };
        Ok(Self {
            lambda: [x[0], x[1], x[2]],
            alpha: x[3..3 + layout.pairs].to_vec(),
            u: vec3(&|c| layout.u(c))?,
            v: vec3(&|c| layout.v(c))?,
            w: (0..layout.pairs).map(|j| series(layout.w(j))).collect(),
            omega: x[layout.omega()],
        })
    }

    /// Same orbit at another truncation order.
    pub fn resize(&self, m: usize) -> Self {
        Self {
            lambda: self.lambda,
            alpha: self.alpha.clone(),
            u: self.u.resize(m),
            v: self.v.resize(m),
            w: self.w.iter().map(|s| s.resize(m)).collect(),
            omega: self.omega,
        }
    }

    /// Largest coefficient modulus over the top tenth of the modes, relative
    /// to the largest coefficient of the same series, maximized over `u`, `v`
    /// and `w`.
    pub fn spectral_tail_ratio(&self) -> f64 {
        let m = self.order();
        let from = m - (m / 10).max(1);
        self.u
            .components()
            .iter()
            .chain(self.v.components())
            .chain(&self.w)
            .filter(|s| s.max_abs() > 0.0)
            .map(|s| s.tail_max_abs(from) / s.max_abs())
            .fold(0.0, f64::max)
    }
}
