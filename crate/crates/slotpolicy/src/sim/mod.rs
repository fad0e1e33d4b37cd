//! MiniShape: a deterministic, seeded 2.5D top-down tabletop simulator.
//!
//! Three tasks over a planar workspace with a height axis for the gripper:
//! push the red cube to a target, pick it up and hold it at a lift goal,
//! and place it into the green bin. Dynamics are quasi-static: the
//! end-effector moves by clamped deltas, pushes the cube by minimal
//! penetration resolution, and grasping attaches the cube to the gripper.

pub mod render;

use tensor_core::RngStream;
use thiserror::Error;

use crate::action::Action;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("action contains non-finite components")]
    NanAction,
    #[error("step() called on a finished episode")]
    EpisodeDone,
    #[error("could not place objects without overlap after {0} rejection samples")]
    PlacementFailed(usize),
    #[error("penetration resolution did not converge")]
    Unresolvable,
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Task {
    Push,
    Pick,
    Place,
}

impl Task {
    pub fn parse(s: &str) -> Result<Task, SimError> {
        match s {
            "push" => Ok(Task::Push),
            "pick" => Ok(Task::Pick),
            "place" => Ok(Task::Place),
            other => Err(SimError::UnknownTask(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Push => "push",
            Task::Pick => "pick",
            Task::Place => "place",
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            Task::Push => 0,
            Task::Pick => 1,
            Task::Place => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Task> {
        match id {
            0 => Some(Task::Push),
            1 => Some(Task::Pick),
            2 => Some(Task::Place),
            _ => None,
        }
    }
}

/// Generalization level: in-distribution, or one shifted axis.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Level {
    InDist,
    L1,
    L2,
    L3,
}

impl Level {
    pub fn parse(s: &str) -> Result<Level, SimError> {
        match s {
            "none" | "indist" | "0" => Ok(Level::InDist),
            "L1" | "l1" => Ok(Level::L1),
            "L2" | "l2" => Ok(Level::L2),
            "L3" | "l3" => Ok(Level::L3),
            other => Err(SimError::UnknownLevel(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Level::InDist => "none",
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            Level::InDist => 0,
            Level::L1 => 1,
            Level::L2 => 2,
            Level::L3 => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Level> {
        match id {
            0 => Some(Level::InDist),
            1 => Some(Level::L1),
            2 => Some(Level::L2),
            3 => Some(Level::L3),
            _ => None,
        }
    }

    pub fn all() -> [Level; 4] {
        [Level::InDist, Level::L1, Level::L2, Level::L3]
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Cube,
    Sphere,
    Triangle,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Role {
    TargetObject,
    Distractor,
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Rgb(pub f64, pub f64, pub f64);

impl Rgb {
    pub fn to_u8(&self) -> [u8; 3] {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        [q(self.0), q(self.1), q(self.2)]
    }
}

#[derive(Clone, Debug)]
pub struct SceneObject {
    pub id: u32,
    pub shape: Shape,
    pub half_size: f64,
    pub color: Rgb,
    pub x: f64,
    pub y: f64,
    pub role: Role,
    pub in_bin: bool,
}

/// Task-specific goal.
#[derive(Clone, Copy, Debug)]
pub enum Goal {
    /// Push: a visible target point on the table.
    TargetPoint { x: f64, y: f64 },
    /// Pick: an (invisible) pose above the cube's start position.
    LiftPose { x: f64, y: f64, z: f64 },
    /// Place: the green bin footprint.
    BinRect { x: f64, y: f64, half: f64 },
}

// Training palettes. The target object is always the red cube.
pub const RED_CUBE: Rgb = Rgb(0.90, 0.10, 0.10);

pub const DISTRACTOR_TRAIN: [Rgb; 7] = [
    Rgb(0.50, 0.50, 0.50), // gray
    Rgb(0.20, 0.30, 0.90), // blue
    Rgb(0.20, 0.80, 0.30), // green
    Rgb(0.55, 0.35, 0.20), // brown
    Rgb(0.20, 0.80, 0.80), // cyan
    Rgb(0.60, 0.30, 0.80), // purple
    Rgb(0.90, 0.90, 0.20), // yellow
];

pub const DISTRACTOR_UNSEEN: [Rgb; 7] = [
    Rgb(0.95, 0.60, 0.75), // pink
    Rgb(0.95, 0.55, 0.10), // orange
    Rgb(0.70, 0.95, 0.20), // lime
    Rgb(0.05, 0.05, 0.05), // black
    Rgb(0.05, 0.35, 0.10), // dark green
    Rgb(0.05, 0.10, 0.40), // dark blue
    Rgb(0.45, 0.05, 0.05), // dark red
];

pub const BACKGROUND_TRAIN: [Rgb; 5] = [
    Rgb(0.70, 0.15, 0.15), // red
    Rgb(0.15, 0.55, 0.20), // green
    Rgb(0.15, 0.25, 0.65), // blue
    Rgb(0.92, 0.92, 0.92), // white
    Rgb(0.05, 0.05, 0.05), // black
];

pub const BACKGROUND_UNSEEN: [Rgb; 5] = [
    Rgb(0.90, 0.85, 0.15), // yellow
    Rgb(0.90, 0.55, 0.70), // pink
    Rgb(0.15, 0.75, 0.80), // cyan
    Rgb(0.90, 0.50, 0.10), // orange
    Rgb(0.05, 0.30, 0.10), // dark green
];

pub const TABLE_BLACK: Rgb = Rgb(0.12, 0.12, 0.12);
pub const TABLE_WHITE: Rgb = Rgb(0.85, 0.85, 0.85);

pub const SIZE_TRAIN: (f64, f64) = (0.08, 0.13);
pub const SIZE_EXTENDED: (f64, f64) = (0.05, 0.18);

/// Geometry and tolerance constants. Defaults are the ones used throughout
/// the benchmark; the config file can override individual fields.
#[derive(Clone, Debug)]
pub struct SimParams {
    pub image_size: usize,
    pub horizon: u32,
    pub max_step: f64,
    /// Push success tolerance (strict).
    pub eps_target: f64,
    /// Lift-pose tolerance (strict).
    pub eps_lift: f64,
    pub grasp_radius: f64,
    pub contact_height: f64,
    pub grasp_height: f64,
    /// Consecutive in-tolerance steps required for pick success.
    pub hold_steps: u32,
    pub cube_half: f64,
    pub lift_height: f64,
    pub bin_half: f64,
    /// Visual radius of the gripper ring; also the expert's standoff.
    pub ee_radius: f64,
    /// Placement sampling range for object centers.
    pub spawn_extent: f64,
    /// Workspace extent rendered around the table.
    pub view_extent: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            image_size: 64,
            horizon: 120,
            max_step: 0.05,
            eps_target: 0.05,
            eps_lift: 0.04,
            grasp_radius: 0.06,
            contact_height: 0.08,
            grasp_height: 0.08,
            hold_steps: 5,
            cube_half: 0.12,
            lift_height: 0.35,
            bin_half: 0.16,
            ee_radius: 0.085,
            spawn_extent: 0.6,
            view_extent: 1.25,
        }
    }
}

/// Randomization distribution for one (preset, level) combination.
///
/// A level shifts exactly one axis of the base preset: L1 swaps the
/// distractor palette for unseen colors, L2 the background palette, L3
/// extends the size range (guaranteeing at least one out-of-range size).
#[derive(Clone, Debug)]
pub struct LevelConfig {
    pub level: Level,
    pub distractor_palette: Vec<Rgb>,
    pub background_palette: Vec<Rgb>,
    pub table_palette: Vec<Rgb>,
    pub size_range: (f64, f64),
    pub train_size_range: (f64, f64),
    pub count_range: (u32, u32),
    /// L3 only: force at least one distractor size outside the train range.
    pub force_outside_size: bool,
}

/// Base randomization preset the levels shift away from.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Preset {
    /// Full randomization: 1-3 distractors, all training palettes.
    Full,
    /// Reduced: one distractor, fixed background and table color.
    Reduced,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Preset> {
        match s {
            "full" => Some(Preset::Full),
            "reduced" => Some(Preset::Reduced),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::Reduced => "reduced",
        }
    }
}

impl LevelConfig {
    pub fn new(level: Level, preset: Preset) -> Self {
        let (background, table, counts) = match preset {
            Preset::Full => (
                BACKGROUND_TRAIN.to_vec(),
                vec![TABLE_BLACK, TABLE_WHITE],
                (1, 3),
            ),
            Preset::Reduced => (
                vec![BACKGROUND_TRAIN[2]],
                vec![TABLE_WHITE],
                (1, 1),
            ),
        };
        let mut cfg = LevelConfig {
            level,
            distractor_palette: DISTRACTOR_TRAIN.to_vec(),
            background_palette: background,
            table_palette: table,
            size_range: SIZE_TRAIN,
            train_size_range: SIZE_TRAIN,
            count_range: counts,
            force_outside_size: false,
        };
        match level {
            Level::InDist => {}
            Level::L1 => cfg.distractor_palette = DISTRACTOR_UNSEEN.to_vec(),
            Level::L2 => cfg.background_palette = BACKGROUND_UNSEEN.to_vec(),
            Level::L3 => {
                cfg.size_range = SIZE_EXTENDED;
                cfg.force_outside_size = true;
            }
        }
        cfg
    }
}

/// Full symbolic simulator state.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub task: Task,
    pub ee: [f64; 3],
    pub grip_closed: bool,
    pub held: Option<u32>,
    pub objects: Vec<SceneObject>,
    pub goal: Goal,
    pub background: Rgb,
    pub table: Rgb,
    pub step_count: u32,
    pub hold_streak: u32,
    pub done: bool,
    pub rng: RngStream,
}

impl WorldState {
    pub fn cube(&self) -> &SceneObject {
        self.objects.iter().find(|o| o.role == Role::TargetObject).expect("cube present")
    }

    fn cube_mut(&mut self) -> &mut SceneObject {
        self.objects.iter_mut().find(|o| o.role == Role::TargetObject).expect("cube present")
    }

    /// Cube position in 3-D: at gripper height while held, on the table
    /// otherwise.
    pub fn cube_pos3(&self) -> [f64; 3] {
        let c = self.cube();
        if self.held.is_some() {
            [self.ee[0], self.ee[1], self.ee[2]]
        } else {
            [c.x, c.y, 0.0]
        }
    }
}

pub struct StepOutcome {
    pub image: Vec<u8>,
    pub success: bool,
    pub done: bool,
}

const PLACEMENT_TRIES: usize = 100;
const OBJECT_GAP: f64 = 0.04;
const GOAL_CLEARANCE: f64 = 0.20;
const MIN_PUSH_DIST: f64 = 0.35;
const MIN_CARRY_DIST: f64 = 0.40;

/// Deterministically sample a fresh episode from the seed alone and render
/// its first frame.
pub fn reset(
    task: Task,
    level: &LevelConfig,
    params: &SimParams,
    seed: u64,
) -> Result<(WorldState, Vec<u8>), SimError> {
    // Fold task and level into the stream so distinct settings never share
    // sample sequences even at equal seeds.
    let root = RngStream::seed(seed ^ (0x1000_0000u64.wrapping_mul(task.id() as u64 + 1)))
        .split(level.level.id() as u64);
    let mut rng = root.split(0);

    let background = *rng.choose(&level.background_palette);
    let table = *rng.choose(&level.table_palette);
    let span = params.spawn_extent;

    let n_distractors =
        level.count_range.0 + rng.below((level.count_range.1 - level.count_range.0 + 1) as usize) as u32;

    // Cube first, then the goal, then distractors by rejection sampling.
    let cube_pos = [rng.range(-span, span), rng.range(-span, span)];

    let goal = match task {
        Task::Push => {
            let mut tries = 0;
            loop {
                let gx = rng.range(-span, span);
                let gy = rng.range(-span, span);
                let d = ((gx - cube_pos[0]).powi(2) + (gy - cube_pos[1]).powi(2)).sqrt();
                if d >= MIN_PUSH_DIST {
                    break Goal::TargetPoint { x: gx, y: gy };
                }
                tries += 1;
                if tries >= PLACEMENT_TRIES {
                    return Err(SimError::PlacementFailed(PLACEMENT_TRIES));
                }
            }
        }
        Task::Pick => Goal::LiftPose { x: cube_pos[0], y: cube_pos[1], z: params.lift_height },
        Task::Place => {
            let half = params.bin_half;
            let lim = span - half;
            let mut tries = 0;
            loop {
                let gx = rng.range(-lim, lim);
                let gy = rng.range(-lim, lim);
                let d = ((gx - cube_pos[0]).powi(2) + (gy - cube_pos[1]).powi(2)).sqrt();
                if d >= MIN_CARRY_DIST {
                    break Goal::BinRect { x: gx, y: gy, half };
                }
                tries += 1;
                if tries >= PLACEMENT_TRIES {
                    return Err(SimError::PlacementFailed(PLACEMENT_TRIES));
                }
            }
        }
    };

    let mut objects = vec![SceneObject {
        id: 0,
        shape: Shape::Cube,
        half_size: params.cube_half,
        color: RED_CUBE,
        x: cube_pos[0],
        y: cube_pos[1],
        role: Role::TargetObject,
        in_bin: false,
    }];

    // L3 forces the first distractor outside the training size range; the
    // rest draw from the full (possibly extended) range.
    for i in 0..n_distractors {
        let shape = *rng.choose(&[Shape::Cube, Shape::Sphere, Shape::Triangle]);
        let color = *rng.choose(&level.distractor_palette);
        let half_size = if level.force_outside_size && i == 0 {
            sample_outside(&mut rng, level.size_range, level.train_size_range)
        } else {
            rng.range(level.size_range.0, level.size_range.1)
        };
        let mut tries = 0;
        let (x, y) = loop {
            let x = rng.range(-span, span);
            let y = rng.range(-span, span);
            if placement_ok(x, y, half_size, &objects, &goal, task) {
                break (x, y);
            }
            tries += 1;
            if tries >= PLACEMENT_TRIES {
                return Err(SimError::PlacementFailed(PLACEMENT_TRIES));
            }
        };
        objects.push(SceneObject {
            id: i + 1,
            shape,
            half_size,
            color,
            x,
            y,
            role: Role::Distractor,
            in_bin: false,
        });
    }

    let ee = [rng.range(-span, span), rng.range(-span, span), 0.5];

    let state = WorldState {
        task,
        ee,
        grip_closed: false,
        held: None,
        objects,
        goal,
        background,
        table,
        step_count: 0,
        hold_streak: 0,
        done: false,
        rng: root.split(1),
    };
    let image = render::render(&state, params);
    Ok((state, image))
}

fn sample_outside(rng: &mut RngStream, extended: (f64, f64), train: (f64, f64)) -> f64 {
    let below = (train.0 - extended.0).max(0.0);
    let above = (extended.1 - train.1).max(0.0);
    let u = rng.range(0.0, below + above);
    if u < below {
        extended.0 + u
    } else {
        train.1 + (u - below)
    }
}

fn placement_ok(
    x: f64,
    y: f64,
    half: f64,
    objects: &[SceneObject],
    goal: &Goal,
    task: Task,
) -> bool {
    for o in objects {
        let d = ((x - o.x).powi(2) + (y - o.y).powi(2)).sqrt();
        if d < half + o.half_size + OBJECT_GAP {
            return false;
        }
    }
    match (task, goal) {
        (Task::Push, Goal::TargetPoint { x: gx, y: gy }) => {
            let d = ((x - gx).powi(2) + (y - gy).powi(2)).sqrt();
            d >= half + GOAL_CLEARANCE
        }
        (Task::Place, Goal::BinRect { x: gx, y: gy, half: bh }) => {
            // Keep distractors clear of the bin footprint.
            (x - gx).abs() > half + bh + OBJECT_GAP || (y - gy).abs() > half + bh + OBJECT_GAP
        }
        _ => true,
    }
}

/// Advance one step: move the gripper, handle grasp/release transitions,
/// resolve pushing contacts, evaluate success.
pub fn step(
    state: &mut WorldState,
    params: &SimParams,
    action: &Action,
) -> Result<StepOutcome, SimError> {
    if !action.is_finite() {
        return Err(SimError::NanAction);
    }
    if state.done {
        return Err(SimError::EpisodeDone);
    }
    let a = action.clamped(params.max_step);

    let pre = state.ee;
    state.ee[0] = (state.ee[0] + a.dpos[0]).clamp(-1.0, 1.0);
    state.ee[1] = (state.ee[1] + a.dpos[1]).clamp(-1.0, 1.0);
    state.ee[2] = (state.ee[2] + a.dpos[2]).clamp(0.0, 1.0);

    if let Some(id) = state.held {
        let (ex, ey) = (state.ee[0], state.ee[1]);
        let o = state.objects.iter_mut().find(|o| o.id == id).expect("held object");
        o.x = ex;
        o.y = ey;
    }

    let close_cmd = a.gripper >= 0.0;
    if close_cmd && !state.grip_closed {
        state.grip_closed = true;
        if state.held.is_none() && state.ee[2] < params.grasp_height {
            let (ex, ey) = (state.ee[0], state.ee[1]);
            let cube = state.cube_mut();
            let d = ((ex - cube.x).powi(2) + (ey - cube.y).powi(2)).sqrt();
            if d < params.grasp_radius && !cube.in_bin {
                cube.x = ex;
                cube.y = ey;
                let id = cube.id;
                state.held = Some(id);
            }
        }
    } else if !close_cmd && state.grip_closed {
        state.grip_closed = false;
        if state.held.take().is_some() {
            // Drop: into the bin if centered over it, else settle on the table.
            let over_bin = match state.goal {
                Goal::BinRect { x, y, half } => {
                    let c = state.cube();
                    (c.x - x).abs() < half && (c.y - y).abs() < half
                }
                _ => false,
            };
            if over_bin {
                state.cube_mut().in_bin = true;
            } else {
                settle_dropped_cube(state)?;
            }
        }
    }

    // Pushing: the gripper tip displaces the cube when it drives into it
    // laterally at table height. A vertical descent onto the cube (the
    // grasp approach) is not a push; contact is quasi-static and needs
    // sideways motion below contact height.
    let lateral = pre[0] != state.ee[0] || pre[1] != state.ee[1];
    if state.held.is_none()
        && lateral
        && pre[2] < params.contact_height
        && state.ee[2] < params.contact_height
    {
        let (ex, ey) = (state.ee[0], state.ee[1]);
        let mtv = {
            let cube = state.cube();
            if cube.in_bin {
                None
            } else {
                point_square_mtv(ex, ey, cube.x, cube.y, cube.half_size)
            }
        };
        if let Some((dx, dy)) = mtv {
            {
                let cube = state.cube_mut();
                cube.x += dx;
                cube.y += dy;
            }
            resolve_push_chain(state)?;
        }
    }

    state.step_count += 1;

    // Pick-task hold streak.
    if state.task == Task::Pick {
        let in_tolerance = state.held.is_some() && {
            let p = state.cube_pos3();
            if let Goal::LiftPose { x, y, z } = state.goal {
                dist3(p, [x, y, z]) < params.eps_lift
            } else {
                false
            }
        };
        state.hold_streak = if in_tolerance { state.hold_streak + 1 } else { 0 };
    }

    let succeeded = success(state, params);
    state.done = succeeded || state.step_count >= params.horizon;
    let image = render::render(state, params);
    Ok(StepOutcome { image, success: succeeded, done: state.done })
}

/// Task success predicate (pure; strict inequalities throughout).
pub fn success(state: &WorldState, params: &SimParams) -> bool {
    match (state.task, &state.goal) {
        (Task::Push, Goal::TargetPoint { x, y }) => {
            let c = state.cube();
            let d = ((c.x - x).powi(2) + (c.y - y).powi(2)).sqrt();
            d < params.eps_target
        }
        (Task::Pick, Goal::LiftPose { x, y, z }) => {
            state.held.is_some()
                && state.hold_streak >= params.hold_steps
                && dist3(state.cube_pos3(), [*x, *y, *z]) < params.eps_lift
        }
        (Task::Place, Goal::BinRect { x, y, half }) => {
            let c = state.cube();
            state.held.is_none()
                && c.in_bin
                && (c.x - x).abs() < *half
                && (c.y - y).abs() < *half
        }
        _ => false,
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Minimal translation that moves square (cx, cy, half) so the point ends up
/// on its boundary; None when the point is outside.
pub fn point_square_mtv(px: f64, py: f64, cx: f64, cy: f64, half: f64) -> Option<(f64, f64)> {
    let left = px - (cx - half);
    let right = (cx + half) - px;
    let bottom = py - (cy - half);
    let top = (cy + half) - py;
    if left <= 0.0 || right <= 0.0 || bottom <= 0.0 || top <= 0.0 {
        return None;
    }
    let min = left.min(right).min(bottom).min(top);
    if min == right {
        Some((-right, 0.0)) // point near right face: cube slides -x
    } else if min == left {
        Some((left, 0.0))
    } else if min == top {
        Some((0.0, -top))
    } else {
        Some((0.0, bottom))
    }
}

fn circle_overlap(a: &SceneObject, b: &SceneObject) -> Option<(f64, f64, f64)> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let d = (dx * dx + dy * dy).sqrt();
    let need = a.half_size + b.half_size;
    if d >= need {
        return None;
    }
    if d < 1e-12 {
        return Some((1.0, 0.0, need));
    }
    Some((dx / d, dy / d, need - d))
}

fn clamp_to_table(o: &mut SceneObject) {
    let lim = 1.0 - o.half_size;
    o.x = o.x.clamp(-lim, lim);
    o.y = o.y.clamp(-lim, lim);
}

/// Displace `b` out of `a`, sliding along a wall when the direct push is
/// blocked by the table edge. Returns whether `b` moved.
fn separate_pair(a: &SceneObject, b: &mut SceneObject) -> bool {
    let Some((nx, ny, depth)) = circle_overlap(a, b) else {
        return false;
    };
    b.x += nx * depth;
    b.y += ny * depth;
    clamp_to_table(b);
    if circle_overlap(a, b).is_some() {
        // Blocked: keep one axis, solve the other for tangency.
        let need = a.half_size + b.half_size + 1e-9;
        let lim = 1.0 - b.half_size;
        let dx = b.x - a.x;
        if dx.abs() < need {
            let dy = (need * need - dx * dx).sqrt();
            let sign = if b.y >= a.y { 1.0 } else { -1.0 };
            let candidate = (a.y + sign * dy).clamp(-lim, lim);
            b.y = candidate;
        }
        if circle_overlap(a, b).is_some() {
            let dy = b.y - a.y;
            if dy.abs() < need {
                let dx = (need * need - dy * dy).sqrt();
                let sign = if b.x >= a.x { 1.0 } else { -1.0 };
                b.x = (a.x + sign * dx).clamp(-lim, lim);
            }
        }
    }
    true
}

fn bin_obstacle_mtv(o: &SceneObject, bx: f64, by: f64, bh: f64) -> Option<(f64, f64)> {
    // Disc vs. solid rectangle: push the disc out along the shallowest axis.
    let qx = o.x.clamp(bx - bh, bx + bh);
    let qy = o.y.clamp(by - bh, by + bh);
    let dx = o.x - qx;
    let dy = o.y - qy;
    let d2 = dx * dx + dy * dy;
    let r = o.half_size;
    if d2 >= r * r {
        return None;
    }
    if d2 > 1e-24 {
        let d = d2.sqrt();
        let push = r - d;
        return Some((dx / d * push, dy / d * push));
    }
    // Center inside the rectangle: exit along the cheapest face.
    let exits = [
        ((bx + bh + r) - o.x, (1.0, 0.0)),
        (o.x - (bx - bh - r), (-1.0, 0.0)),
        ((by + bh + r) - o.y, (0.0, 1.0)),
        (o.y - (by - bh - r), (0.0, -1.0)),
    ];
    let (dist, dir) = exits
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .copied()
        .unwrap();
    Some((dir.0 * dist, dir.1 * dist))
}

/// After the cube was pushed: shove distractors out of its way (and out of
/// each other), keep everything on the table, and keep the cube out of the
/// bin walls.
///
/// Displacement propagates outward from the cube: an object only pushes
/// objects farther from the contact root than itself, which keeps chains
/// like cube -> d2 -> d1 from oscillating.
fn resolve_push_chain(state: &mut WorldState) -> Result<(), SimError> {
    let bin = match state.goal {
        Goal::BinRect { x, y, half } => Some((x, y, half)),
        _ => None,
    };
    let n = state.objects.len();
    let mut rank: Vec<u32> = state
        .objects
        .iter()
        .map(|o| if o.role == Role::TargetObject { 0 } else { u32::MAX })
        .collect();
    for _ in 0..50 {
        let mut moved = false;

        {
            let cube = state.cube_mut();
            let before = (cube.x, cube.y);
            clamp_to_table(cube);
            if !cube.in_bin {
                if let Some((bx, by, bh)) = bin {
                    if let Some((dx, dy)) = bin_obstacle_mtv(cube, bx, by, bh) {
                        cube.x += dx;
                        cube.y += dy;
                    }
                }
            }
            if (cube.x, cube.y) != before {
                moved = true;
            }
        }

        for i in 0..n {
            if rank[i] == u32::MAX {
                continue;
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pushes = rank[i] < rank[j] || (rank[i] == rank[j] && i < j);
                if !pushes {
                    continue;
                }
                let (a, b) = if i < j {
                    let (lo, hi) = state.objects.split_at_mut(j);
                    (&lo[i], &mut hi[0])
                } else {
                    let (lo, hi) = state.objects.split_at_mut(i);
                    (&hi[0], &mut lo[j])
                };
                if a.in_bin || b.in_bin {
                    continue;
                }
                if separate_pair(a, b) {
                    moved = true;
                    rank[j] = rank[j].min(rank[i].saturating_add(1));
                }
            }
        }

        if !moved {
            return Ok(());
        }
    }
    Err(SimError::Unresolvable)
}

/// After a release away from the bin: the dropped cube slides off whatever it
/// landed on until it rests overlap-free.
fn settle_dropped_cube(state: &mut WorldState) -> Result<(), SimError> {
    let bin = match state.goal {
        Goal::BinRect { x, y, half } => Some((x, y, half)),
        _ => None,
    };
    for _ in 0..50 {
        let mut moved = false;
        let cube_id = state.cube().id;
        let others: Vec<SceneObject> =
            state.objects.iter().filter(|o| o.id != cube_id).cloned().collect();
        {
            let cube = state.cube_mut();
            for o in &others {
                if separate_pair(o, cube) {
                    moved = true;
                }
            }
            if let Some((bx, by, bh)) = bin {
                if !cube.in_bin {
                    if let Some((dx, dy)) = bin_obstacle_mtv(cube, bx, by, bh) {
                        cube.x += dx;
                        cube.y += dy;
                        moved = true;
                    }
                }
            }
            let before = (cube.x, cube.y);
            clamp_to_table(cube);
            if (cube.x, cube.y) != before {
                moved = true;
            }
        }
        if !moved {
            return Ok(());
        }
    }
    Err(SimError::Unresolvable)
}

/// Largest pairwise penetration between resting objects (diagnostic; used by
/// the non-penetration invariant tests).
pub fn max_penetration(state: &WorldState) -> f64 {
    let mut worst: f64 = 0.0;
    let n = state.objects.len();
    for i in 0..n {
        if Some(state.objects[i].id) == state.held || state.objects[i].in_bin {
            continue;
        }
        for j in (i + 1)..n {
            if Some(state.objects[j].id) == state.held || state.objects[j].in_bin {
                continue;
            }
            if let Some((_, _, depth)) = circle_overlap(&state.objects[i], &state.objects[j]) {
                worst = worst.max(depth);
            }
        }
        let o = &state.objects[i];
        worst = worst.max((o.x.abs() + o.half_size - 1.0).max(0.0));
        worst = worst.max((o.y.abs() + o.half_size - 1.0).max(0.0));
    }
    worst
}
