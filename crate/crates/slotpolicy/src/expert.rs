//! Scripted oracle-state experts: phase-based proportional controllers that
//! read the symbolic world state and emit successful demonstrations.

use tensor_core::RngStream;
use thiserror::Error;

use crate::action::Action;
use crate::sim::{Goal, SimParams, Task, WorldState};

#[derive(Error, Debug)]
pub enum ExpertError {
    #[error("expert phase {0:?} timed out")]
    PhaseTimeout(ExpertPhase),
}

/// Controller phase. Push tasks run up to two push legs (dominant axis
/// first); pick and place build on the grasp phases.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExpertPhase {
    /// Travel above the scene toward a standoff waypoint.
    ApproachOver { leg: u8 },
    /// Drop to pushing height behind the cube.
    DescendBehind { leg: u8 },
    /// Drive the cube along one axis toward the target.
    PushLeg { leg: u8 },
    /// Rise between push legs.
    LiftBetween { leg: u8 },
    /// Travel above the cube (pick/place).
    ApproachAbove,
    /// Drop to grasp height.
    DescendToGrasp,
    /// Close the gripper.
    CloseGrip,
    /// Carry the cube to the lift goal (pick) or carry height (place).
    Lift,
    /// Keep the cube at the lift goal until the hold streak completes.
    Hold,
    /// Carry the cube over the bin.
    Transport,
    /// Release over the bin.
    Open,
    /// Nothing left to do.
    Done,
}

const TRAVEL_Z: f64 = 0.25;
const PUSH_Z: f64 = 0.02;
const GRASP_Z: f64 = 0.03;
const CARRY_Z: f64 = 0.45;
const APPROACH_MARGIN: f64 = 0.04;
const PUSH_AXIS_TOL: f64 = 0.02;
const XY_SETTLE_TOL: f64 = 0.02;

fn timeout(phase: ExpertPhase) -> u32 {
    match phase {
        ExpertPhase::ApproachOver { .. } | ExpertPhase::ApproachAbove => 45,
        ExpertPhase::DescendBehind { .. } | ExpertPhase::DescendToGrasp => 18,
        ExpertPhase::PushLeg { .. } => 45,
        ExpertPhase::LiftBetween { .. } => 12,
        ExpertPhase::CloseGrip => 5,
        ExpertPhase::Lift => 16,
        ExpertPhase::Hold => 14,
        ExpertPhase::Transport => 45,
        ExpertPhase::Open => 6,
        ExpertPhase::Done => u32::MAX,
    }
}

/// Phase-based scripted expert for one episode.
pub struct Expert {
    task: Task,
    phase: ExpertPhase,
    steps_in_phase: u32,
    /// Optional waypoint jitter magnitude (diversifies demonstrations;
    /// zero for benchmark runs).
    jitter: f64,
    rng: RngStream,
}

impl Expert {
    pub fn new(task: Task, seed: u64) -> Self {
        let phase = match task {
            // leg 2 = sentinel: the first leg's axis is chosen on first call.
            Task::Push => ExpertPhase::ApproachOver { leg: 2 },
            Task::Pick | Task::Place => ExpertPhase::ApproachAbove,
        };
        Expert { task, phase, steps_in_phase: 0, jitter: 0.0, rng: RngStream::seed(seed) }
    }

    pub fn with_jitter(mut self, magnitude: f64) -> Self {
        self.jitter = magnitude;
        self
    }

    pub fn phase(&self) -> ExpertPhase {
        self.phase
    }

    fn enter(&mut self, phase: ExpertPhase) {
        self.phase = phase;
        self.steps_in_phase = 0;
    }

    fn jittered(&mut self, p: [f64; 2]) -> [f64; 2] {
        if self.jitter == 0.0 {
            return p;
        }
        [
            p[0] + self.rng.range(-self.jitter, self.jitter),
            p[1] + self.rng.range(-self.jitter, self.jitter),
        ]
    }

    /// Proportional move toward a 3-D waypoint, clamped to max_step.
    fn toward(&self, state: &WorldState, params: &SimParams, w: [f64; 3], grip: f64) -> Action {
        Action {
            dpos: [w[0] - state.ee[0], w[1] - state.ee[1], w[2] - state.ee[2]],
            drot: [0.0; 3],
            gripper: grip,
        }
        .clamped(params.max_step)
    }

    fn at(state: &WorldState, w: [f64; 3], tol: f64) -> bool {
        (state.ee[0] - w[0]).abs() < tol
            && (state.ee[1] - w[1]).abs() < tol
            && (state.ee[2] - w[2]).abs() < tol
    }

    /// Next action for the current state. Errors when a phase times out
    /// (such episodes are discarded from datasets).
    pub fn action(&mut self, state: &WorldState, params: &SimParams) -> Result<Action, ExpertError> {
        self.steps_in_phase += 1;
        if self.steps_in_phase > timeout(self.phase) {
            return Err(ExpertError::PhaseTimeout(self.phase));
        }
        match self.task {
            Task::Push => self.push_action(state, params),
            Task::Pick => self.pick_action(state, params),
            Task::Place => self.place_action(state, params),
        }
    }

    /// Remaining dominant axis (0 = x, 1 = y), or None when both components
    /// are within the per-axis push tolerance.
    fn dominant_axis(state: &WorldState) -> Option<usize> {
        let c = state.cube();
        let Goal::TargetPoint { x, y } = state.goal else { return None };
        let dx = (x - c.x).abs();
        let dy = (y - c.y).abs();
        if dx.max(dy) <= PUSH_AXIS_TOL {
            return None;
        }
        Some(if dx >= dy { 0 } else { 1 })
    }

    fn push_action(&mut self, state: &WorldState, params: &SimParams) -> Result<Action, ExpertError> {
        let Goal::TargetPoint { x: tx, y: ty } = state.goal else {
            return Ok(Action::zero());
        };
        let cube = state.cube().clone();
        let target = [tx, ty];
        let cube_pos = [cube.x, cube.y];
        let dist = ((cube.x - tx).powi(2) + (cube.y - ty).powi(2)).sqrt();
        if dist < params.eps_target {
            self.enter(ExpertPhase::Done);
            return Ok(Action::zero());
        }
        // The axis is chosen when a leg starts and stays fixed for the whole
        // leg (sentinel 2 = "pick the dominant axis now").
        if let ExpertPhase::ApproachOver { leg: 2 } = self.phase {
            match Self::dominant_axis(state) {
                Some(axis) => self.enter(ExpertPhase::ApproachOver { leg: axis as u8 }),
                None => self.enter(ExpertPhase::Done),
            }
        }
        let standoff = cube.half_size + params.ee_radius + APPROACH_MARGIN;
        loop {
            match self.phase {
                ExpertPhase::ApproachOver { leg } => {
                    let axis = leg as usize;
                    let delta = target[axis] - cube_pos[axis];
                    if delta.abs() <= PUSH_AXIS_TOL {
                        match Self::dominant_axis(state) {
                            Some(next) => self.enter(ExpertPhase::ApproachOver { leg: next as u8 }),
                            None => self.enter(ExpertPhase::Done),
                        }
                        continue;
                    }
                    let dir = delta.signum();
                    let mut behind = cube_pos;
                    behind[axis] -= dir * standoff;
                    let behind = self.jittered(behind);
                    let w = [behind[0], behind[1], TRAVEL_Z];
                    if Self::at(state, w, 0.02) {
                        self.enter(ExpertPhase::DescendBehind { leg });
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::DescendBehind { leg } => {
                    let axis = leg as usize;
                    let delta = target[axis] - cube_pos[axis];
                    let dir = delta.signum();
                    let mut behind = cube_pos;
                    behind[axis] -= dir * standoff;
                    let w = [behind[0], behind[1], PUSH_Z];
                    if Self::at(state, w, 0.015) {
                        self.enter(ExpertPhase::PushLeg { leg });
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::PushLeg { leg } => {
                    let axis = leg as usize;
                    let delta = target[axis] - cube_pos[axis];
                    if delta.abs() <= PUSH_AXIS_TOL {
                        match Self::dominant_axis(state) {
                            Some(_) => self.enter(ExpertPhase::LiftBetween { leg }),
                            None => self.enter(ExpertPhase::Done),
                        }
                        continue;
                    }
                    let dir = delta.signum();
                    // Stop point: gripper tip where the cube face sits once
                    // the cube center reaches the target on this axis.
                    let mut stop = [cube.x, cube.y];
                    stop[axis] = target[axis] - dir * cube.half_size;
                    // Keep the off-axis aligned with the cube center so the
                    // contact normal stays on the push axis.
                    stop[1 - axis] = cube_pos[1 - axis];
                    let w = [stop[0], stop[1], PUSH_Z];
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::LiftBetween { .. } => {
                    let w = [state.ee[0], state.ee[1], TRAVEL_Z];
                    if state.ee[2] >= TRAVEL_Z - 0.01 {
                        match Self::dominant_axis(state) {
                            Some(axis) => self.enter(ExpertPhase::ApproachOver { leg: axis as u8 }),
                            None => self.enter(ExpertPhase::Done),
                        }
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::Done => return Ok(Action::zero()),
                _ => unreachable!("push task phase {:?}", self.phase),
            }
        }
    }

    fn pick_action(&mut self, state: &WorldState, params: &SimParams) -> Result<Action, ExpertError> {
        let Goal::LiftPose { x, y, z } = state.goal else {
            return Ok(Action::zero());
        };
        loop {
            match self.phase {
                ExpertPhase::ApproachAbove => {
                    let c = state.cube();
                    let w = [c.x, c.y, TRAVEL_Z];
                    if Self::at(state, w, XY_SETTLE_TOL) {
                        self.enter(ExpertPhase::DescendToGrasp);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::DescendToGrasp => {
                    let c = state.cube();
                    let w = [c.x, c.y, GRASP_Z];
                    if Self::at(state, w, 0.015) {
                        self.enter(ExpertPhase::CloseGrip);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::CloseGrip => {
                    if state.held.is_some() {
                        self.enter(ExpertPhase::Lift);
                        continue;
                    }
                    return Ok(Action { dpos: [0.0; 3], drot: [0.0; 3], gripper: 1.0 });
                }
                ExpertPhase::Lift => {
                    let w = [x, y, z];
                    if Self::at(state, w, params.eps_lift * 0.5) {
                        self.enter(ExpertPhase::Hold);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, 1.0));
                }
                ExpertPhase::Hold => {
                    let w = [x, y, z];
                    return Ok(self.toward(state, params, w, 1.0));
                }
                ExpertPhase::Done => return Ok(Action::zero()),
                _ => unreachable!("pick task phase {:?}", self.phase),
            }
        }
    }

    fn place_action(&mut self, state: &WorldState, params: &SimParams) -> Result<Action, ExpertError> {
        let Goal::BinRect { x: bx, y: by, half } = state.goal else {
            return Ok(Action::zero());
        };
        loop {
            match self.phase {
                ExpertPhase::ApproachAbove => {
                    let c = state.cube();
                    let w = [c.x, c.y, TRAVEL_Z];
                    if Self::at(state, w, XY_SETTLE_TOL) {
                        self.enter(ExpertPhase::DescendToGrasp);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::DescendToGrasp => {
                    let c = state.cube();
                    let w = [c.x, c.y, GRASP_Z];
                    if Self::at(state, w, 0.015) {
                        self.enter(ExpertPhase::CloseGrip);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, -1.0));
                }
                ExpertPhase::CloseGrip => {
                    if state.held.is_some() {
                        self.enter(ExpertPhase::Lift);
                        continue;
                    }
                    return Ok(Action { dpos: [0.0; 3], drot: [0.0; 3], gripper: 1.0 });
                }
                ExpertPhase::Lift => {
                    let w = [state.ee[0], state.ee[1], CARRY_Z];
                    if state.ee[2] >= CARRY_Z - 0.01 {
                        self.enter(ExpertPhase::Transport);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, 1.0));
                }
                ExpertPhase::Transport => {
                    let w = [bx, by, CARRY_Z];
                    if Self::at(state, w, (half * 0.4).min(XY_SETTLE_TOL * 2.0)) {
                        self.enter(ExpertPhase::Open);
                        continue;
                    }
                    return Ok(self.toward(state, params, w, 1.0));
                }
                ExpertPhase::Open => {
                    if state.held.is_none() {
                        self.enter(ExpertPhase::Done);
                        return Ok(Action::zero());
                    }
                    return Ok(Action { dpos: [0.0; 3], drot: [0.0; 3], gripper: -1.0 });
                }
                ExpertPhase::Done => return Ok(Action::zero()),
                _ => unreachable!("place task phase {:?}", self.phase),
            }
        }
    }
}

/// Run one expert episode to completion. Returns the per-step frames and
/// actions plus the success flag; expert timeouts surface as errors.
pub struct EpisodeRollout {
    pub frames: Vec<Vec<u8>>,
    pub actions: Vec<Action>,
    pub success: bool,
    pub length: u32,
}

pub fn run_expert_episode(
    task: Task,
    level: &crate::sim::LevelConfig,
    params: &SimParams,
    seed: u64,
) -> Result<EpisodeRollout, crate::sim::SimError> {
    let (mut state, first) = crate::sim::reset(task, level, params, seed)?;
    let mut expert = Expert::new(task, seed ^ 0xEE);
    let mut frames = vec![first];
    let mut actions = Vec::new();
    loop {
        let action = match expert.action(&state, params) {
            Ok(a) => a,
            Err(_) => {
                // Timed out: mark failed, stop collecting.
                return Ok(EpisodeRollout {
                    length: actions.len() as u32,
                    frames: frames[..actions.len()].to_vec(),
                    actions,
                    success: false,
                });
            }
        };
        let out = crate::sim::step(&mut state, params, &action)?;
        actions.push(action);
        if out.done {
            // frames holds the observation before each action; drop the
            // final post-terminal image.
            return Ok(EpisodeRollout {
                length: actions.len() as u32,
                frames,
                actions,
                success: out.success,
            });
        }
        frames.push(out.image);
    }
}
