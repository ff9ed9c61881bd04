//! The full run: polygon → vertical family → branch switch → figure eight.

use serde::{Deserialize, Serialize};

use crate::augmented::{initial_reference, set_reference};
use crate::continuation::{
    bordered_condition, finish_point, locate_branch_point, residual_norm, solve_at_frequency, step,
    switch_branch, tangent_vector, BranchPoint, BranchRecord, BranchState, ContinuationConfig,
};
use crate::error::{ChoreoError, Result};
use crate::model::{polygon_state, vertical_tangent_unit, ModelParams};
use crate::solver::{dot, NewtonReport};
use crate::state::StateVector;

/// Segment index of the vertical family.
pub const SEGMENT_VERTICAL: usize = 0;
/// Segment index of the first pitchfork side tried after the switch; the
/// other side, if it is needed, gets the next index.
pub const SEGMENT_SWITCHED: usize = 1;

/// Everything needed to resume a run after its last accepted point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub segment: usize,
    pub arclength: f64,
    pub ds_next: f64,
    pub x: Vec<f64>,
    pub tangent: Vec<f64>,
    pub det_sign: i32,
    /// Located branch point once the switch has happened.
    pub branch_point: Option<BranchPoint>,
    /// `+1` or `-1`: which side of the pitchfork the switched segment follows.
    pub side: Option<i8>,
    pub switches: usize,
}

/// Receives every accepted point as it is produced.
pub trait BranchSink {
    fn accept(&mut self, record: &BranchRecord, state: &StateVector, checkpoint: &Checkpoint) -> Result<()>;

    fn note(&mut self, _message: &str) {}
}

/// Sink that keeps everything in memory.
#[derive(Default)]
pub struct MemorySink {
    pub records: Vec<BranchRecord>,
    pub states: Vec<StateVector>,
    pub notes: Vec<String>,
    pub last_checkpoint: Option<Checkpoint>,
}

impl BranchSink for MemorySink {
    fn accept(&mut self, record: &BranchRecord, state: &StateVector, checkpoint: &Checkpoint) -> Result<()> {
        self.records.push(record.clone());
        self.states.push(state.clone());
        self.last_checkpoint = Some(checkpoint.clone());
        Ok(())
    }

    fn note(&mut self, message: &str) {
        self.notes.push(message.to_string());
    }
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub eight: StateVector,
    pub eight_report: NewtonReport,
    pub branch_point: BranchPoint,
    pub switches: usize,
    /// Steps of the switched segment between which ω crossed the target.
    pub bracket: (usize, usize),
}

pub fn state_key(step: usize) -> String {
    format!("orbit_{step}.coeffs")
}

fn stage(name: &str, step: usize) -> impl FnOnce(ChoreoError) -> ChoreoError + '_ {
    move |e| ChoreoError::Stage { stage: name.to_string(), step, source: Box::new(e) }
}

struct Runner<'a, S: BranchSink> {
    params: &'a ModelParams,
    config: &'a ContinuationConfig,
    sink: &'a mut S,
    target: f64,
    last_step: Option<usize>,
}

/// Starts a run at the polygon: the first archived point.
pub fn start_at_polygon<S: BranchSink>(params: &ModelParams, config: &ContinuationConfig, sink: &mut S) -> Result<Checkpoint> {
    config.validate()?;
    let x0 = polygon_state(params).to_real(params)?;
    let reference = initial_reference(params);
    let seed = vertical_tangent_unit(params);
    let tangent = tangent_vector(&x0, None, &seed, &reference, params).map_err(stage("initiate", 0))?;
    let state = BranchState { x: x0, tangent, reference, det_sign: 0 };
    let checkpoint = Checkpoint {
        step: 0,
        segment: SEGMENT_VERTICAL,
        arclength: 0.0,
        ds_next: config.ds,
        x: state.x.clone(),
        tangent: state.tangent.clone(),
        det_sign: 0,
        branch_point: None,
        side: None,
        switches: 0,
    };
    let mut runner = Runner { params, config, sink, target: params.omega_eight(), last_step: None };
    runner.emit(&state, &checkpoint, 0, 0.0, None)?;
    Ok(checkpoint)
}

fn restore(checkpoint: &Checkpoint, params: &ModelParams) -> Result<BranchState> {
    let reference = if checkpoint.step == 0 {
        initial_reference(params)
    } else {
        set_reference(&StateVector::from_real(&checkpoint.x, params)?)?
    };
    Ok(BranchState {
        x: checkpoint.x.clone(),
        tangent: checkpoint.tangent.clone(),
        reference,
        det_sign: checkpoint.det_sign,
    })
}

/// Runs (or resumes) the pipeline up to the eight.
pub fn run_polygon_to_eight<S: BranchSink>(
    params: &ModelParams,
    config: &ContinuationConfig,
    sink: &mut S,
    resume: Option<Checkpoint>,
) -> Result<PipelineResult> {
    config.validate()?;
    let checkpoint = match resume {
        Some(c) => c,
        None => start_at_polygon(params, config, sink)?,
    };
    let mut runner = Runner { params, config, sink, target: params.omega_eight(), last_step: None };
    let (checkpoint, bp) = if checkpoint.branch_point.is_none() {
        runner.vertical(checkpoint)?
    } else {
        let bp = checkpoint.branch_point.clone().expect("checked");
        (checkpoint, bp)
    };
    runner.switched(checkpoint, bp)
}

impl<S: BranchSink> Runner<'_, S> {
    /// Follows the vertical family until a confirmed branch point, then
    /// archives that point as the first one of the switched segment.
    fn vertical(&mut self, mut cp: Checkpoint) -> Result<(Checkpoint, BranchPoint)> {
        let params = self.params;
        let config = self.config;
        let mut state = restore(&cp, params)?;
        while cp.step < config.max_steps {
            let out = step(&state, cp.ds_next, params, config).map_err(stage("vertical family", cp.step + 1))?;
            let flipped = state.det_sign != 0 && out.state.det_sign != state.det_sign;
            let mut condition = None;
            if flipped {
                let c = bordered_condition(&out.state, params)?;
                condition = Some(c);
            }
            let before = state;
            state = out.state;
            cp.step += 1;
            cp.arclength += out.ds_used;
            cp.ds_next = out.ds_next;
            cp.x = state.x.clone();
            cp.tangent = state.tangent.clone();
            cp.det_sign = state.det_sign;
            self.emit(&state, &cp, out.report.iterations, out.ds_used, condition)?;
            let Some(c) = condition else { continue };
            if c <= config.cond_threshold {
                self.sink.note(&format!(
                    "step {}: determinant sign changed with condition {c:.3e} below threshold; ignored",
                    cp.step
                ));
                continue;
            }
            match locate_branch_point(&before, out.ds_used, params, config) {
                Ok(bp) => {
                    let overlap = dot(&bp.switch_tangent, &bp.incoming_tangent);
                    self.sink.note(&format!(
                        "step {}: branch point at ω = {:.12}, trailing singular values {:.3e} {:.3e} {:.3e} (σ_max {:.3e}), switch/incoming overlap {overlap:.3e}",
                        cp.step,
                        bp.x_bif[bp.x_bif.len() - 1],
                        bp.trailing_singular_values[0],
                        bp.trailing_singular_values[1],
                        bp.trailing_singular_values[2],
                        bp.largest_singular_value
                    ));
                    return Ok((cp, bp));
                }
                Err(ChoreoError::NotSimpleBranchPoint(why)) => {
                    self.sink.note(&format!("step {}: determinant flip not bisected: {why}", cp.step));
                }
                Err(e) => return Err(stage("locate branch point", cp.step)(e)),
            }
        }
        Err(ChoreoError::Stage {
            stage: "vertical family".into(),
            step: cp.step,
            source: Box::new(ChoreoError::InvalidInput(format!(
                "no branch point within {} steps",
                config.max_steps
            ))),
        })
    }

    fn emit(&mut self, state: &BranchState, cp: &Checkpoint, iterations: usize, ds: f64, condition: Option<f64>) -> Result<BranchRecord> {
        let sv = StateVector::from_real(&state.x, self.params)?;
        let residual = residual_norm(&state.x, &state.reference, self.params)?;
        if residual >= self.config.newton.tol_residual {
            return Err(ChoreoError::NewtonFailed(format!(
                "accepted point at step {} has residual {residual:.3e}",
                cp.step
            )));
        }
        let record = BranchRecord {
            step: cp.step,
            segment: cp.segment,
            omega: sv.omega,
            arclength: cp.arclength,
            amplitude: self.config.amplitude_measure.evaluate(&sv),
            det_sign: state.det_sign,
            condition,
            residual,
            newton_iterations: iterations,
            step_size: ds,
            morse_index: None,
            state_ref: state_key(cp.step),
        };
        self.sink.accept(&record, &sv, cp)?;
        self.last_step = Some(cp.step);
        Ok(record)
    }

    /// Follows the switched branch until ω crosses the target, then solves
    /// at the target frequency.
    fn switched(&mut self, cp: Checkpoint, bp: BranchPoint) -> Result<PipelineResult> {
        let sides: Vec<i8> = match cp.side {
            Some(s) => vec![s, -s],
            None => vec![1, -1],
        };
        let mut last_err = None;
        let resumed = cp.side.is_some();
        let mut cp = cp;
        for (i, side) in sides.into_iter().enumerate() {
            if i > 0 || !resumed {
                let state = switch_branch(&bp, self.params, side < 0)?;
                cp.step += 1;
                cp.segment = SEGMENT_SWITCHED + i;
                cp.x = state.x.clone();
                cp.tangent = state.tangent.clone();
                cp.det_sign = 0;
                cp.branch_point = Some(bp.clone());
                cp.side = Some(side);
                cp.switches = 1;
                cp.ds_next = self.config.ds;
                self.emit(&state, &cp, 0, 0.0, None)?;
                self.sink.note(&format!("step {}: switched branch, side {side:+}", cp.step));
            }
            match self.follow_side(cp.clone(), &bp) {
                Ok(result) => return Ok(result),
                Err(e) => {
                    if let Some(last) = self.last_step {
                        cp.step = last;
                    }
                    self.sink.note(&format!("side {side:+} abandoned: {e}"));
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.unwrap_or(ChoreoError::SwitchFailed("no side attempted".into())))
    }

    fn follow_side(&mut self, mut cp: Checkpoint, bp: &BranchPoint) -> Result<PipelineResult> {
        let params = self.params;
        let config = self.config;
        let mut state = restore(&cp, params)?;
        let mut first = cp.x == bp.x_bif;
        while cp.step < config.max_steps {
            let out = step(&state, cp.ds_next, params, config).map_err(stage("switched branch", cp.step + 1))?;
            if first {
                let overlap = dot(&out.state.tangent, &bp.incoming_tangent).abs();
                if overlap > 0.999 {
                    return Err(ChoreoError::SwitchFailed(format!(
                        "first step fell back onto the incoming branch (tangent overlap {overlap:.5}); try another step size"
                    )));
                }
                first = false;
            }
            let flipped = state.det_sign != 0 && out.state.det_sign != state.det_sign;
            let condition = if flipped { Some(bordered_condition(&out.state, params)?) } else { None };
            let prev = state;
            state = out.state;
            cp.step += 1;
            cp.arclength += out.ds_used;
            cp.ds_next = out.ds_next;
            cp.x = state.x.clone();
            cp.tangent = state.tangent.clone();
            cp.det_sign = state.det_sign;
            self.emit(&state, &cp, out.report.iterations, out.ds_used, condition)?;
            if let Some(c) = condition {
                self.sink.note(&format!(
                    "step {}: determinant sign changed on the switched branch (condition {c:.3e}); not followed",
                    cp.step
                ));
            }
            let (wa, wb) = (prev.x[prev.x.len() - 1], state.x[state.x.len() - 1]);
            if (self.target - wa) * (self.target - wb) <= 0.0 && wa != wb {
                let theta = (self.target - wa) / (wb - wa);
                let guess: Vec<f64> = prev.x.iter().zip(&state.x).map(|(a, b)| a + theta * (b - a)).collect();
                let (eight, report) = solve_at_frequency(&guess, self.target, &state.reference, params, &config.newton)
                    .map_err(stage("solve at ω = 2√s₁", cp.step))?;
                return Ok(PipelineResult {
                    eight,
                    eight_report: report,
                    branch_point: bp.clone(),
                    switches: cp.switches,
                    bracket: (cp.step - 1, cp.step),
                });
            }
        }
        Err(ChoreoError::Stage {
            stage: "switched branch".into(),
            step: cp.step,
            source: Box::new(ChoreoError::InvalidInput(format!(
                "ω did not reach {} within {} steps",
                self.target, config.max_steps
            ))),
        })
    }
}

/// Refreshed branch state at a converged point, for callers that step by hand.
pub fn branch_state_at(x: Vec<f64>, previous_tangent: &[f64], params: &ModelParams) -> Result<BranchState> {
    finish_point(x, previous_tangent, params)
}
