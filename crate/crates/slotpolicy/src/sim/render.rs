//! Flat-shaded orthographic top-down rasterizer.
//!
//! Draw order (bottom to top): background, table, bin, target marker,
//! resting objects, held cube, gripper ring. Pixels sample their center
//! point only, so silhouettes are exact shape-membership tests.

use super::{Goal, Rgb, SceneObject, Shape, SimParams, Task, WorldState};

const TARGET_RING: Rgb = Rgb(0.85, 0.10, 0.15);
const BIN_GREEN: Rgb = Rgb(0.10, 0.65, 0.20);
const EE_GRAY: Rgb = Rgb(0.35, 0.35, 0.35);
const TARGET_RING_OUTER: f64 = 0.10;
const TARGET_RING_INNER: f64 = 0.05;

/// Workspace coordinates of a pixel center.
fn pixel_center(px: usize, py: usize, size: usize, extent: f64) -> (f64, f64) {
    let s = 2.0 * extent / size as f64;
    (-extent + (px as f64 + 0.5) * s, -extent + (py as f64 + 0.5) * s)
}

/// Exact membership test for an object silhouette at a workspace point.
pub fn inside_object(o: &SceneObject, x: f64, y: f64) -> bool {
    let dx = x - o.x;
    let dy = y - o.y;
    let h = o.half_size;
    match o.shape {
        Shape::Cube => dx.abs() <= h && dy.abs() <= h,
        Shape::Sphere => dx * dx + dy * dy <= h * h,
        Shape::Triangle => {
            // Equilateral, apex toward -y, circumradius h.
            let (ax, ay) = (0.0, -h);
            let (bx, by) = (-0.866_025_403_784_438_6 * h, 0.5 * h);
            let (cx, cy) = (0.866_025_403_784_438_6 * h, 0.5 * h);
            let sign = |x1: f64, y1: f64, x2: f64, y2: f64| (dx - x2) * (y1 - y2) - (x1 - x2) * (dy - y2);
            let d1 = sign(ax, ay, bx, by);
            let d2 = sign(bx, by, cx, cy);
            let d3 = sign(cx, cy, ax, ay);
            let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
            let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
            !(has_neg && has_pos)
        }
    }
}

fn ee_ring_thickness(z: f64) -> f64 {
    0.04 + 0.05 * (1.0 - z.clamp(0.0, 1.0))
}

/// Render the state into a row-major H x W x 3 u8 image.
pub fn render(state: &WorldState, params: &SimParams) -> Vec<u8> {
    let size = params.image_size;
    let extent = params.view_extent;
    let mut img = vec![0u8; size * size * 3];

    let held_id = state.held;
    let ee = state.ee;
    let ring_r = params.ee_radius;
    let ring_t = ee_ring_thickness(ee[2]);

    for py in 0..size {
        for px in 0..size {
            let (x, y) = pixel_center(px, py, size, extent);
            let mut color = state.background;

            if x.abs() <= 1.0 && y.abs() <= 1.0 {
                color = state.table;

                if let Goal::BinRect { x: bx, y: by, half } = state.goal {
                    if (x - bx).abs() <= half && (y - by).abs() <= half {
                        color = BIN_GREEN;
                    }
                }

                if state.task == Task::Push {
                    if let Goal::TargetPoint { x: tx, y: ty } = state.goal {
                        let d = ((x - tx).powi(2) + (y - ty).powi(2)).sqrt();
                        if d <= TARGET_RING_OUTER && d >= TARGET_RING_INNER {
                            color = TARGET_RING;
                        }
                    }
                }

                for o in &state.objects {
                    if Some(o.id) == held_id {
                        continue;
                    }
                    if inside_object(o, x, y) {
                        color = o.color;
                    }
                }
            }

            // Held cube travels with the gripper and draws above the scene.
            if let Some(id) = held_id {
                if let Some(o) = state.objects.iter().find(|o| o.id == id) {
                    if inside_object(o, x, y) {
                        color = o.color;
                    }
                }
            }

            // Gripper ring: thickness encodes height, fill encodes grip.
            let d = ((x - ee[0]).powi(2) + (y - ee[1]).powi(2)).sqrt();
            if (d - ring_r).abs() <= ring_t * 0.5 || (state.grip_closed && d < ring_r) {
                color = EE_GRAY;
            }

            let [r, g, b] = color.to_u8();
            let at = (py * size + px) * 3;
            img[at] = r;
            img[at + 1] = g;
            img[at + 2] = b;
        }
    }
    img
}

/// The set of pixels whose centers fall inside one object's silhouette.
pub fn silhouette_mask(o: &SceneObject, params: &SimParams) -> Vec<bool> {
    let size = params.image_size;
    let mut mask = vec![false; size * size];
    for py in 0..size {
        for px in 0..size {
            let (x, y) = pixel_center(px, py, size, params.view_extent);
            mask[py * size + px] = inside_object(o, x, y);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{self, Level, LevelConfig, Preset};

    #[test]
    fn renders_are_bit_identical() {
        let p = SimParams::default();
        let cfg = LevelConfig::new(Level::InDist, Preset::Full);
        let (state, img) = sim::reset(Task::Push, &cfg, &p, 7).unwrap();
        let again = render(&state, &p);
        assert_eq!(img, again);
    }

    #[test]
    fn pixel_at_object_center_has_object_color() {
        let p = SimParams::default();
        let cfg = LevelConfig::new(Level::InDist, Preset::Full);
        let (state, img) = sim::reset(Task::Push, &cfg, &p, 11).unwrap();
        let size = p.image_size;
        let s = 2.0 * p.view_extent / size as f64;
        for o in &state.objects {
            // Skip objects the gripper ring happens to cover.
            let dee = ((o.x - state.ee[0]).powi(2) + (o.y - state.ee[1]).powi(2)).sqrt();
            if dee < p.ee_radius + 0.08 {
                continue;
            }
            let px = ((o.x + p.view_extent) / s - 0.5).round() as usize;
            let py = ((o.y + p.view_extent) / s - 0.5).round() as usize;
            let at = (py * size + px) * 3;
            assert_eq!([img[at], img[at + 1], img[at + 2]], o.color.to_u8(), "object {}", o.id);
        }
    }
}
