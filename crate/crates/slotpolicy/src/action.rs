//! The 7-dimensional action shared by policy, simulator, expert and dataset.

/// Relative end-effector command: translation, rotation, gripper.
///
/// Translations are workspace units per step; rotations are radians per
/// step (recorded for format fidelity, ignored by the planar dynamics);
/// gripper is in [-1, 1] where >= 0 commands the gripper closed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub dpos: [f64; 3],
    pub drot: [f64; 3],
    pub gripper: f64,
}

impl Action {
    pub const DIM: usize = 7;

    pub fn zero() -> Self {
        Action { dpos: [0.0; 3], drot: [0.0; 3], gripper: -1.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.dpos.iter().chain(self.drot.iter()).all(|v| v.is_finite())
            && self.gripper.is_finite()
    }

    /// Clamp translation components to `max_step` and gripper to [-1, 1].
    pub fn clamped(mut self, max_step: f64) -> Self {
        for v in &mut self.dpos {
            *v = v.clamp(-max_step, max_step);
        }
        self.gripper = self.gripper.clamp(-1.0, 1.0);
        self
    }

    pub fn to_f32(&self) -> [f32; 7] {
        [
            self.dpos[0] as f32,
            self.dpos[1] as f32,
            self.dpos[2] as f32,
            self.drot[0] as f32,
            self.drot[1] as f32,
            self.drot[2] as f32,
            self.gripper as f32,
        ]
    }

    pub fn from_f32(a: &[f32; 7]) -> Self {
        Action {
            dpos: [a[0] as f64, a[1] as f64, a[2] as f64],
            drot: [a[3] as f64, a[4] as f64, a[5] as f64],
            gripper: a[6] as f64,
        }
    }

    /// Scale translations into roughly unit range for the action head;
    /// rotation and gripper components are already order one.
    pub fn to_normalized(&self, max_step: f64) -> [f64; 7] {
        [
            self.dpos[0] / max_step,
            self.dpos[1] / max_step,
            self.dpos[2] / max_step,
            self.drot[0],
            self.drot[1],
            self.drot[2],
            self.gripper,
        ]
    }

    /// Inverse of [`Action::to_normalized`], applying the emission clamps.
    pub fn from_normalized(v: &[f64; 7], max_step: f64) -> Self {
        Action {
            dpos: [v[0] * max_step, v[1] * max_step, v[2] * max_step],
            drot: [v[3], v[4], v[5]],
            gripper: v[6],
        }
        .clamped(max_step)
    }
}
