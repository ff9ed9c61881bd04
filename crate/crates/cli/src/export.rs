//! Orbit samples and coefficient tables as CSV.

use std::f64::consts::PI;
use std::io::Write;

use anyhow::{Context, Result};
use choreo_core::archive::Archive;
use choreo_core::model::{classify_frequency, ModelParams, DEFAULT_QMAX};
use choreo_core::stability::{inertial_period, inertial_samples, rotating_samples};
use choreo_core::state::StateVector;
use clap::ValueEnum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Frame {
    Rotating,
    Inertial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Time samples of every body: t, body, x, y, z.
    Csv,
    /// Complex Fourier coefficients of the last body.
    Coeffs,
}

/// Which archived orbit to read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selector {
    Step(usize),
    Eight,
}

impl std::str::FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("eight") {
            return Ok(Self::Eight);
        }
        s.parse().map(Self::Step).map_err(|_| format!("`{s}` is neither a step number nor `eight`"))
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Step(s) => write!(f, "{s}"),
            Self::Eight => write!(f, "eight"),
        }
    }
}

pub fn load(archive: &Archive, which: &Selector) -> Result<StateVector> {
    match which {
        Selector::Step(s) => archive.state(*s).with_context(|| format!("step {s} is not in the archive")),
        Selector::Eight => archive.eight().context("no eight in the archive"),
    }
}

/// Length of the sampled time window: one rotating period `2π/ω`, or the
/// inertial period when ω/√s₁ is a recognizable fraction.
pub fn time_window(state: &StateVector, params: &ModelParams, frame: Frame) -> f64 {
    match frame {
        Frame::Rotating => 2.0 * PI / state.omega,
        Frame::Inertial => match classify_frequency(state.omega, params, DEFAULT_QMAX) {
            Some(c) => inertial_period(state.omega, c.p),
            None => 2.0 * PI / state.omega,
        },
    }
}

/// `(t, positions of every body)` at `samples` equally spaced times.
pub fn samples(state: &StateVector, params: &ModelParams, frame: Frame, samples: usize) -> (Vec<f64>, Vec<Vec<[f64; 3]>>) {
    let window = time_window(state, params, frame);
    let times = (0..samples).map(|i| window * i as f64 / samples as f64).collect();
    let points = match frame {
        Frame::Rotating => rotating_samples(&state.u, params, samples),
        Frame::Inertial => inertial_samples(&state.u, state.omega, params, window, samples),
    };
    (times, points)
}

pub fn write_samples<W: Write>(out: W, state: &StateVector, params: &ModelParams, frame: Frame, count: usize) -> Result<()> {
    let (times, points) = samples(state, params, frame, count);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "body", "x", "y", "z"])?;
    for (i, t) in times.iter().enumerate() {
        for (j, body) in points.iter().enumerate() {
            let p = body[i];
            w.serialize((t, j + 1, p[0], p[1], p[2]))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_coeffs<W: Write>(out: W, state: &StateVector) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "x_re", "x_im", "y_re", "y_im", "z_re", "z_im"])?;
    let m = state.u.order() as i64;
    for l in -(m - 1)..m {
        let c: Vec<_> = (0..3).map(|k| state.u.component(k).coeff(l)).collect();
        w.serialize((l, c[0].re, c[0].im, c[1].re, c[1].im, c[2].re, c[2].im))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use choreo_core::model::polygon_state;

    #[test]
    fn selector_parsing() {
        assert_eq!("eight".parse::<Selector>().unwrap(), Selector::Eight);
        assert_eq!("Eight".parse::<Selector>().unwrap(), Selector::Eight);
        assert_eq!("12".parse::<Selector>().unwrap(), Selector::Step(12));
        assert!("-1".parse::<Selector>().is_err());
        assert!("eighth".parse::<Selector>().is_err());
    }

    #[test]
    fn polygon_samples_do_not_move_in_the_rotating_frame() {
        let params = ModelParams::new(5, 2, 4).unwrap();
        let state = polygon_state(&params);
        let mut buf = Vec::new();
        write_samples(&mut buf, &state, &params, Frame::Rotating, 3).unwrap();
        let mut rows = csv::Reader::from_reader(buf.as_slice());
        let rows: Vec<(f64, usize, f64, f64, f64)> = rows.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 15);
        for r in &rows {
            let first = rows.iter().find(|q| q.1 == r.1).unwrap();
            assert!((r.2 - first.2).abs() + (r.3 - first.3).abs() + r.4.abs() < 1e-15);
        }
    }

    #[test]
    fn coefficient_table_has_every_mode() {
        let params = ModelParams::new(3, 2, 5).unwrap();
        let mut buf = Vec::new();
        write_coeffs(&mut buf, &polygon_state(&params)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 9);
        assert!(text.lines().any(|l| l.starts_with("0,1.0,0.0,")));
    }
}
