//! Linear stability of a computed orbit as a solution of the full n-body
//! problem in the rotating frame.

use faer::Mat;
use num_complex::Complex64;
use ode_solvers::{DVector, Dop853, System};
use serde::{Deserialize, Serialize};

use crate::error::{ChoreoError, Result};
use crate::fourier::FourierVec3;
use crate::model::{rotation_z, ModelParams};

/// Positions and velocities of all bodies in the rotating frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

/// Distance below which bodies are considered to collide.
pub const COLLISION_DISTANCE: f64 = 1e-8;

/// Series of every body: entry `j - 1` is body `j`, the last entry is `u`.
pub fn reconstruct_bodies(u: &FourierVec3, params: &ModelParams) -> Vec<FourierVec3> {
    let n = params.n;
    (1..=n)
        .map(|j| {
            if j == n {
                u.clone()
            } else {
                u.delay_shift(params.delays[j - 1]).apply_matrix(&params.rotations[j - 1])
            }
        })
        .collect()
}

/// Initial condition at `t = 0` of the orbit `u` traversed with frequency ω:
/// positions `u_j(0)`, velocities `ω u_j'(0)`.
pub fn initial_state(u: &FourierVec3, omega: f64, params: &ModelParams) -> FullState {
    let bodies = reconstruct_bodies(u, params);
    FullState {
        positions: bodies.iter().map(|b| b.evaluate_at(0.0)).collect(),
        velocities: bodies
            .iter()
            .map(|b| {
                let d = b.differentiate().evaluate_at(0.0);
                [omega * d[0], omega * d[1], omega * d[2]]
            })
            .collect(),
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn check_collisions(positions: &[[f64; 3]]) -> Result<()> {
    for j in 0..positions.len() {
        for i in 0..j {
            let r = norm(&sub(&positions[j], &positions[i]));
            if !(r >= COLLISION_DISTANCE) {
                return Err(ChoreoError::Collision(format!("bodies {} and {} at distance {r:.3e}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Accelerations `-2√s₁J̄ẋ + s₁Īx - Σ (x_j - x_i)/|x_j - x_i|³`, unchecked.
fn accelerations(positions: &[[f64; 3]], velocities: &[[f64; 3]], s1: f64) -> Vec<[f64; 3]> {
    let sqrt_s1 = s1.sqrt();
    let n = positions.len();
    let mut acc: Vec<[f64; 3]> = (0..n)
        .map(|j| {
            let (x, v) = (positions[j], velocities[j]);
            // -2√s₁ J̄ v = -2√s₁ (-v_y, v_x, 0)
            [2.0 * sqrt_s1 * v[1] + s1 * x[0], -2.0 * sqrt_s1 * v[0] + s1 * x[1], 0.0]
        })
        .collect();
    for j in 0..n {
        for i in 0..j {
            let d = sub(&positions[j], &positions[i]);
            let r = norm(&d);
            let f = 1.0 / (r * r * r);
            for c in 0..3 {
                acc[j][c] -= d[c] * f;
                acc[i][c] += d[c] * f;
            }
        }
    }
    acc
}

/// Time derivative `(velocities, accelerations)` of the rotating-frame
/// Newton equations with unit masses.
pub fn rotating_vector_field(state: &FullState, params: &ModelParams) -> Result<FullState> {
    check_collisions(&state.positions)?;
    Ok(FullState {
        positions: state.velocities.clone(),
        velocities: accelerations(&state.positions, &state.velocities, params.s1),
    })
}

/// Jacobi integral `½Σ|ẋ|² - ½s₁Σ|Īx|² - Σ_{i<j} 1/|x_i - x_j|`, conserved
/// by the rotating-frame flow.
pub fn jacobi_integral(state: &FullState, params: &ModelParams) -> f64 {
    let kinetic: f64 = state.velocities.iter().map(|v| 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).sum();
    let centrifugal: f64 = state.positions.iter().map(|x| 0.5 * params.s1 * (x[0] * x[0] + x[1] * x[1])).sum();
    let mut potential = 0.0;
    for j in 0..state.positions.len() {
        for i in 0..j {
            potential += 1.0 / norm(&sub(&state.positions[j], &state.positions[i]));
        }
    }
    kinetic - centrifugal - potential
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonodromySettings {
    pub rtol: f64,
    pub atol: f64,
    /// A multiplier counts as unstable when `|λ| > 1 + unstable_cutoff`.
    pub unstable_cutoff: f64,
    /// Radius of the cluster around 1 treated as trivial multipliers.
    pub trivial_radius: f64,
    pub max_steps: u32,
}

impl Default for MonodromySettings {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, unstable_cutoff: 1e-6, trivial_radius: 1e-3, max_steps: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonodromyResult {
    /// All `6n` eigenvalues of `M(T)`, by decreasing modulus.
    pub multipliers: Vec<Complex64>,
    /// Multipliers with `|λ| > 1 + cutoff`, excluding the trivial cluster.
    pub morse_index: usize,
    pub symplectic_defect: f64,
    /// `max ||λ| - 1|` over the multipliers within `trivial_radius` of 1.
    pub unit_circle_defect: f64,
    /// `max ||λ| - 1|` over all multipliers.
    pub max_modulus_defect: f64,
    /// `|γ(T) - γ(0)|_∞`: how well the integrated orbit closes.
    pub closure_defect: f64,
    /// Relative drift of the Jacobi integral over one period.
    pub energy_drift: f64,
    pub period: f64,
}

struct Variational {
    n: usize,
    s1: f64,
    with_matrix: bool,
}

impl Variational {
    fn unpack(&self, y: &DVector<f64>) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let n = self.n;
        let pos = (0..n).map(|j| [y[3 * j], y[3 * j + 1], y[3 * j + 2]]).collect();
        let vel = (0..n).map(|j| [y[3 * n + 3 * j], y[3 * n + 3 * j + 1], y[3 * n + 3 * j + 2]]).collect();
        (pos, vel)
    }
}

/// `K(d) = ∂(-d/|d|³)/∂d = -(I/|d|³ - 3ddᵀ/|d|⁵)`.
fn tidal(d: &[f64; 3]) -> [[f64; 3]; 3] {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r = r2.sqrt();
    let r3 = r2 * r;
    let r5 = r3 * r2;
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = 3.0 * d[a] * d[b] / r5 - if a == b { 1.0 / r3 } else { 0.0 };
        }
    }
    k
}

impl System<f64, DVector<f64>> for Variational {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = self.n;
        let dim = 6 * n;
        let (pos, vel) = self.unpack(y);
        let acc = accelerations(&pos, &vel, self.s1);
        for j in 0..n {
            for c in 0..3 {
                dy[3 * j + c] = vel[j][c];
                dy[3 * n + 3 * j + c] = acc[j][c];
            }
        }
        if !self.with_matrix {
            return;
        }
        // Position block of Df: A_pos = s₁Ī ⊕ … + tidal couplings.
        let mut a_pos = vec![0.0; 3 * n * 3 * n];
        let idx = |r: usize, c: usize| r * 3 * n + c;
        for j in 0..n {
            a_pos[idx(3 * j, 3 * j)] += self.s1;
            a_pos[idx(3 * j + 1, 3 * j + 1)] += self.s1;
            for i in 0..n {
                if i == j {
                    continue;
                }
                let k = tidal(&sub(&pos[j], &pos[i]));
                for a in 0..3 {
                    for b in 0..3 {
                        a_pos[idx(3 * j + a, 3 * j + b)] += k[a][b];
                        a_pos[idx(3 * j + a, 3 * i + b)] -= k[a][b];
                    }
                }
            }
        }
        let c = 2.0 * self.s1.sqrt();
        // M is stored column-major after the orbit: entry (r, col) at dim + col*dim + r.
        for col in 0..dim {
            let base = dim + col * dim;
            for r in 0..3 * n {
                dy[base + r] = y[base + 3 * n + r];
            }
            for r in 0..3 * n {
                let mut s = 0.0;
                for q in 0..3 * n {
                    s += a_pos[idx(r, q)] * y[base + q];
                }
                dy[base + 3 * n + r] = s;
            }
            // -2√s₁ J̄ δv = 2√s₁ (δv_y, -δv_x, 0)
            for j in 0..n {
                let vx = y[base + 3 * n + 3 * j];
                let vy = y[base + 3 * n + 3 * j + 1];
                dy[base + 3 * n + 3 * j] += c * vy;
                dy[base + 3 * n + 3 * j + 1] -= c * vx;
            }
        }
    }
}

fn pack(state: &FullState) -> Vec<f64> {
    state.positions.iter().flatten().chain(state.velocities.iter().flatten()).copied().collect()
}

fn unpack_state(y: &[f64], n: usize) -> FullState {
    FullState {
        positions: (0..n).map(|j| [y[3 * j], y[3 * j + 1], y[3 * j + 2]]).collect(),
        velocities: (0..n).map(|j| [y[3 * n + 3 * j], y[3 * n + 3 * j + 1], y[3 * n + 3 * j + 2]]).collect(),
    }
}

/// Integrates the rotating-frame equations from `start` over `[0, t_end]`,
/// optionally with the first variation, returning the final vector.
fn integrate(start: &FullState, t_end: f64, params: &ModelParams, settings: &MonodromySettings, with_matrix: bool) -> Result<Vec<f64>> {
    check_collisions(&start.positions)?;
    let n = params.n;
    let dim = 6 * n;
    let mut y0 = pack(start);
    if with_matrix {
        y0.resize(dim + dim * dim, 0.0);
        for i in 0..dim {
            y0[dim + i * dim + i] = 1.0;
        }
    }
    let system = Variational { n, s1: params.s1, with_matrix };
    let mut solver = Dop853::from_param(
        system,
        0.0,
        t_end,
        t_end,
        DVector::from_vec(y0),
        settings.rtol,
        settings.atol,
        0.9,
        0.0,
        0.333,
        6.0,
        t_end,
        0.0,
        settings.max_steps,
        1000,
        // the dense interpolant at the final point is unreliable when the
        // output spacing equals the whole interval; take the last step instead
        ode_solvers::OutputType::Sparse,
    );
    let outcome = solver.integrate();
    let y_out = solver.y_out();
    let x_out = solver.x_out();
    if let Err(e) = outcome {
        let time = x_out.last().copied().unwrap_or(0.0);
        return Err(ChoreoError::Integration { time, reason: e.to_string() });
    }
    let last = y_out.last().ok_or_else(|| ChoreoError::Integration { time: 0.0, reason: "no output".into() })?;
    if (x_out.last().copied().unwrap_or(0.0) - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(ChoreoError::Integration {
            time: x_out.last().copied().unwrap_or(0.0),
            reason: "integration stopped before the end of the period".into(),
        });
    }
    let y: Vec<f64> = last.iter().copied().collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ChoreoError::Integration { time: t_end, reason: "non-finite state".into() });
    }
    check_collisions(&unpack_state(&y, n).positions)
        .map_err(|e| ChoreoError::Integration { time: t_end, reason: e.to_string() })?;
    Ok(y)
}

/// Flows `start` for time `t` without the variational equations.
pub fn flow(start: &FullState, t: f64, params: &ModelParams, settings: &MonodromySettings) -> Result<FullState> {
    Ok(unpack_state(&integrate(start, t, params, settings, false)?, params.n))
}

/// Monodromy matrix over one period `T = 2π/ω` and its multipliers.
pub fn monodromy(u: &FourierVec3, omega: f64, params: &ModelParams, settings: &MonodromySettings) -> Result<MonodromyResult> {
    if !(omega > 0.0) {
        return Err(ChoreoError::InvalidInput(format!("frequency must be positive, got {omega}")));
    }
    let n = params.n;
    let dim = 6 * n;
    let period = 2.0 * std::f64::consts::PI / omega;
    let start = initial_state(u, omega, params);
    let y = integrate(&start, period, params, settings, true)?;
    let m = Mat::<f64>::from_fn(dim, dim, |r, c| y[dim + c * dim + r]);
    let end = unpack_state(&y[..dim], n);
    let closure_defect = pack(&end).iter().zip(pack(&start)).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let h0 = jacobi_integral(&start, params);
    let energy_drift = (jacobi_integral(&end, params) - h0).abs() / h0.abs().max(1e-300);
    let symplectic_defect = (m.determinant() - 1.0).abs();
    let mut multipliers = m
        .eigenvalues()
        .map_err(|e| ChoreoError::Integration { time: period, reason: format!("eigenvalues: {e:?}") })?;
    multipliers.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let trivial = |l: &Complex64| (l - Complex64::new(1.0, 0.0)).norm() < settings.trivial_radius;
    let morse_index =
        multipliers.iter().filter(|l| !trivial(l) && l.norm() > 1.0 + settings.unstable_cutoff).count();
    let unit_circle_defect =
        multipliers.iter().filter(|l| trivial(l)).map(|l| (l.norm() - 1.0).abs()).fold(0.0, f64::max);
    let max_modulus_defect = multipliers.iter().map(|l| (l.norm() - 1.0).abs()).fold(0.0, f64::max);
    Ok(MonodromyResult {
        multipliers,
        morse_index,
        symplectic_defect,
        unit_circle_defect,
        max_modulus_defect,
        closure_defect,
        energy_drift,
        period,
    })
}

/// Residual of the rotating-frame Newton equations along the reconstructed
/// orbit on a uniform grid of `points` phases, maximized over bodies.
pub fn newton_residual_on_grid(u: &FourierVec3, omega: f64, params: &ModelParams, points: usize) -> Result<f64> {
    let bodies = reconstruct_bodies(u, params);
    let d1: Vec<FourierVec3> = bodies.iter().map(|b| b.differentiate()).collect();
    let d2: Vec<FourierVec3> = d1.iter().map(|b| b.differentiate()).collect();
    let mut worst = 0.0f64;
    for k in 0..points {
        let t = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let positions: Vec<[f64; 3]> = bodies.iter().map(|b| b.evaluate_at(t)).collect();
        let velocities: Vec<[f64; 3]> = d1.iter().map(|b| b.evaluate_at(t).map(|v| omega * v)).collect();
        check_collisions(&positions)?;
        let acc = accelerations(&positions, &velocities, params.s1);
        for (j, a) in acc.iter().enumerate() {
            let xdd = d2[j].evaluate_at(t);
            for c in 0..3 {
                worst = worst.max((omega * omega * xdd[c] - a[c]).abs());
            }
        }
    }
    Ok(worst)
}

/// Inertial-frame samples `q_j(t) = e^{√s₁tJ̄} u_j(ωt)` of every body at
/// `count` equally spaced times over `[0, t_end)`.
pub fn inertial_samples(u: &FourierVec3, omega: f64, params: &ModelParams, t_end: f64, count: usize) -> Vec<Vec<[f64; 3]>> {
    let bodies = reconstruct_bodies(u, params);
    let sqrt_s1 = params.s1.sqrt();
    bodies
        .iter()
        .map(|b| {
            (0..count)
                .map(|i| {
                    let t = t_end * i as f64 / count as f64;
                    inertial_point(b, omega, sqrt_s1, t)
                })
                .collect()
        })
        .collect()
}

fn inertial_point(body: &FourierVec3, omega: f64, sqrt_s1: f64, t: f64) -> [f64; 3] {
    let p = body.evaluate_at(omega * t);
    let r = rotation_z(sqrt_s1 * t);
    [r[0][0] * p[0] + r[0][1] * p[1], r[1][0] * p[0] + r[1][1] * p[1], p[2]]
}

/// Period of the inertial motion when `ω/√s₁ = p/q` in lowest terms: the
/// time `2πq/√s₁ = 2πp/ω` after which every body is back where it started.
pub fn inertial_period(omega: f64, p: i64) -> f64 {
    2.0 * std::f64::consts::PI * p as f64 / omega
}

/// Rotating-frame samples of every body over one period of `u`.
pub fn rotating_samples(u: &FourierVec3, params: &ModelParams, count: usize) -> Vec<Vec<[f64; 3]>> {
    reconstruct_bodies(u, params)
        .iter()
        .map(|b| {
            (0..count)
                .map(|i| b.evaluate_at(2.0 * std::f64::consts::PI * i as f64 / count as f64))
                .collect()
        })
        .collect()
}

/// Distance from `point` to the inertial curve of `body`, `t ∈ [0, t_end)`:
/// the local minima among `grid` samples, refined by golden-section search.
pub fn distance_to_inertial_curve(
    point: &[f64; 3],
    body: &FourierVec3,
    omega: f64,
    params: &ModelParams,
    t_end: f64,
    grid: usize,
) -> f64 {
    let sqrt_s1 = params.s1.sqrt();
    let dist2 = |t: f64| {
        let q = inertial_point(body, omega, sqrt_s1, t);
        let d = sub(&q, point);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    };
    let h = t_end / grid as f64;
    let d: Vec<f64> = (0..grid).map(|i| dist2(h * i as f64)).collect();
    // Every local minimum of the samples is refined: near a self-crossing the
    // closest sample can sit on the wrong strand.
    let mut minima: Vec<usize> = (0..grid)
        .filter(|&i| d[i] <= d[(i + grid - 1) % grid] && d[i] <= d[(i + 1) % grid])
        .collect();
    minima.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut best = d.iter().copied().fold(f64::INFINITY, f64::min);
    for &i in minima.iter().take(4) {
        best = best.min(golden_section(&dist2, h * i as f64 - h, h * i as f64 + h));
    }
    best.sqrt()
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Largest distance from the sampled points of one curve to another curve
/// and back: a Hausdorff distance between the inertial paths of bodies `a`
/// and `b`, using `samples` points on each.
pub fn inertial_hausdorff(
    u: &FourierVec3,
    omega: f64,
    params: &ModelParams,
    t_end: f64,
    samples: usize,
    a: usize,
    b: usize,
) -> f64 {
    let bodies = reconstruct_bodies(u, params);
    let pts = inertial_samples(u, omega, params, t_end, samples);
    let one_way = |from: usize, to: usize| {
        pts[from]
            .iter()
            .map(|p| distance_to_inertial_curve(p, &bodies[to], omega, params, t_end, samples))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Largest distance of a point cloud to its least-squares plane, divided by
/// the diameter of the cloud.
pub fn planarity_defect(points: &[[f64; 3]]) -> f64 {
    let k = points.len() as f64;
    let mean = points.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0] / k, acc[1] + p[1] / k, acc[2] + p[2] / k]);
    let cov = Mat::<f64>::from_fn(3, 3, |a, b| points.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>());
    let eig = cov.self_adjoint_eigen(faer::Side::Lower).expect("3×3 symmetric eigenproblem");
    let u = eig.U();
    // eigenvalues ascend: the first column is the plane normal
    let normal = [u[(0, 0)], u[(1, 0)], u[(2, 0)]];
    let offset = points
        .iter()
        .map(|p| ((p[0] - mean[0]) * normal[0] + (p[1] - mean[1]) * normal[1] + (p[2] - mean[2]) * normal[2]).abs())
        .fold(0.0, f64::max);
    let mut diameter = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            diameter = diameter.max(norm(&sub(p, q)));
        }
    }
    if diameter == 0.0 {
        0.0
    } else {
        offset / diameter
    }
}

/// Morse index of each `(step, orbit)` pair, computed on up to `threads`
/// worker threads. Failed computations are recorded as `None`.
pub fn morse_profile(
    orbits: &[(usize, FourierVec3, f64)],
    params: &ModelParams,
    settings: &MonodromySettings,
    threads: usize,
) -> Vec<(usize, Option<usize>)> {
    let threads = threads.max(1).min(orbits.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, Option<usize>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some((step, u, omega)) = orbits.get(i) else { break };
                        let index = monodromy(u, *omega, params, settings).ok().map(|r| r.morse_index);
                        local.push((*step, index));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(step, _)| *step);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::polygon_state;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn last_body_is_the_unknown_itself() {
        let params = ModelParams::new(5, 2, 6).unwrap();
        let mut u = FourierVec3::constant(6, [1.0, 0.2, 0.0]);
        *u.component_mut(2) = crate::fourier::FourierScalar::sine(6, 1, 0.3);
        let bodies = reconstruct_bodies(&u, &params);
        assert_eq!(bodies.len(), 5);
        assert_eq!(bodies[4], u);
    }

    #[test]
    fn polygon_bodies_sit_on_the_unit_circle() {
        for n in [3, 5, 7] {
            let params = ModelParams::new(n, 2, 4).unwrap();
            let start = initial_state(&polygon_state(&params).u, params.omega_start(), &params);
            let mut distances: Vec<f64> = Vec::new();
            for (j, p) in start.positions.iter().enumerate() {
                assert_relative_eq!(norm(p), 1.0, epsilon = 1e-14);
                assert!(norm(&start.velocities[j]) < 1e-14);
                for q in &start.positions[..j] {
                    distances.push(norm(&sub(p, q)));
                }
            }
            // every chord length 2 sin(dπ/n) occurs
            for d in 1..=n / 2 {
                let chord = 2.0 * (PI * d as f64 / n as f64).sin();
                assert!(distances.iter().any(|r| (r - chord).abs() < 1e-13), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn polygon_is_an_equilibrium_of_the_rotating_field() {
        for n in [3, 5, 7, 9] {
            let params = ModelParams::new(n, 2, 4).unwrap();
            let start = initial_state(&polygon_state(&params).u, params.omega_start(), &params);
            let field = rotating_vector_field(&start, &params).unwrap();
            let worst = field.velocities.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(worst < 1e-13, "n={n}: {worst}");
            assert!(newton_residual_on_grid(&polygon_state(&params).u, 1.3, &params, 16).unwrap() < 1e-13);
        }
    }

    #[test]
    fn collisions_are_reported() {
        let params = ModelParams::new(3, 2, 4).unwrap();
        let u = FourierVec3::zeros(4);
        let start = initial_state(&u, 1.0, &params);
        assert!(matches!(rotating_vector_field(&start, &params), Err(ChoreoError::Collision(_))));
        assert!(monodromy(&u, 1.0, &params, &MonodromySettings::default()).is_err());
        assert!(monodromy(&polygon_state(&params).u, 0.0, &params, &MonodromySettings::default()).is_err());
    }

    #[test]
    fn jacobi_integral_is_conserved() {
        let params = ModelParams::new(3, 2, 4).unwrap();
        let mut start = initial_state(&polygon_state(&params).u, 1.0, &params);
        start.velocities[0] = [0.05, -0.02, 0.1];
        start.velocities[1] = [-0.03, 0.04, -0.05];
        let h0 = jacobi_integral(&start, &params);
        let end = flow(&start, 3.0, &params, &MonodromySettings::default()).unwrap();
        assert!((jacobi_integral(&end, &params) - h0).abs() < 1e-8 * h0.abs());
    }

    #[test]
    fn polygon_monodromy_is_symplectic() {
        let params = ModelParams::new(3, 2, 4).unwrap();
        let res = monodromy(&polygon_state(&params).u, params.omega_start(), &params, &MonodromySettings::default()).unwrap();
        assert_eq!(res.multipliers.len(), 18);
        assert!(res.symplectic_defect < 1e-6, "{}", res.symplectic_defect);
        assert!(res.closure_defect < 1e-12);
        // reciprocal pairing: for each λ, 1/λ̄ is also a multiplier
        for l in &res.multipliers {
            let r = Complex64::new(1.0, 0.0) / l.conj();
            let nearest = res.multipliers.iter().map(|q| (q - r).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-5 * l.norm().max(1.0), "{l} has no partner");
        }
    }

    #[test]
    fn planarity_of_simple_clouds() {
        let circle: Vec<[f64; 3]> =
            (0..64).map(|i| { let t = 2.0 * PI * i as f64 / 64.0; [t.cos(), t.sin(), 0.3] }).collect();
        assert!(planarity_defect(&circle) < 1e-14);
        let tilted: Vec<[f64; 3]> = circle.iter().map(|p| [p[0], p[1], 0.5 * p[0]]).collect();
        assert!(planarity_defect(&tilted) < 1e-14);
        let tetra = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
        assert!(planarity_defect(&tetra) > 0.1);
        assert_eq!(planarity_defect(&[[1.0, 2.0, 3.0]]), 0.0);
    }

    #[test]
    fn polygon_bodies_share_one_inertial_circle() {
        let params = ModelParams::new(5, 2, 4).unwrap();
        let u = polygon_state(&params).u;
        let t_end = 2.0 * PI / params.s1.sqrt();
        assert!(inertial_hausdorff(&u, 1.0, &params, t_end, 128, 0, 3) < 1e-10);
        let pts = inertial_samples(&u, 1.0, &params, t_end, 32);
        assert!(pts.iter().flatten().all(|p| (norm(p) - 1.0).abs() < 1e-14));
    }

    #[test]
    fn distance_to_curve_finds_offsets() {
        let params = ModelParams::new(3, 2, 4).unwrap();
        let u = polygon_state(&params).u;
        let t_end = 2.0 * PI / params.s1.sqrt();
        let d = distance_to_inertial_curve(&[0.3, 1.1, 0.4], &u, 1.0, &params, t_end, 64);
        let exact = (((0.3f64).hypot(1.1) - 1.0).powi(2) + 0.16).sqrt();
        assert_relative_eq!(d, exact, epsilon = 1e-9);
    }

    #[test]
    fn distance_near_a_self_crossing() {
        // a lemniscate crosses itself at the origin; points on one strand
        // near the crossing must still be at distance zero
        let m = 8;
        let mut u = FourierVec3::zeros(m);
        *u.component_mut(0) = crate::fourier::FourierScalar::sine(m, 1, 1.0);
        *u.component_mut(1) = crate::fourier::FourierScalar::sine(m, 2, 0.5);
        let params = ModelParams { s1: 0.0, ..ModelParams::new(3, 2, m).unwrap() };
        for k in 0..50 {
            let t = 1e-3 * k as f64;
            let p = u.evaluate_at(t);
            let d = distance_to_inertial_curve(&p, &u, 1.0, &params, 2.0 * PI, 64);
            assert!(d < 1e-9, "t={t}: {d}");
        }
    }

    #[test]
    fn morse_profile_keeps_order_and_failures() {
        let params = ModelParams::new(3, 2, 4).unwrap();
        let poly = polygon_state(&params).u;
        let orbits = vec![
            (7, poly.clone(), params.omega_start()),
            (2, FourierVec3::zeros(4), 1.0),
            (5, poly, params.omega_start()),
        ];
        let out = morse_profile(&orbits, &params, &MonodromySettings::default(), 2);
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 5, 7]);
        assert_eq!(out[0].1, None);
        assert!(out[1].1.is_some());
        assert_eq!(out[1], out.iter().find(|p| p.0 == 7).map(|p| (5, p.1)).unwrap());
    }
}
