use slotpolicy::expert::Expert;
use slotpolicy::sim::{self, Goal, Level, LevelConfig, Preset, SimParams, Task};

fn main() {
    let p = SimParams::default();
    let cfg = LevelConfig::new(Level::InDist, Preset::Full);
    let (mut s, _) = sim::reset(Task::Push, &cfg, &p, 135).unwrap();
    println!("cube at ({:.3},{:.3}) goal {:?}", s.cube().x, s.cube().y, s.goal);
    for o in &s.objects {
        println!("  obj {} {:?} half {:.3} at ({:.3},{:.3})", o.id, o.shape, o.half_size, o.x, o.y);
    }
    let mut expert = Expert::new(Task::Push, 135);
    for step in 0..p.horizon {
        let a = match expert.action(&s, &p) { Ok(a) => a, Err(e) => { println!("expert err {e}"); break } };
        match sim::step(&mut s, &p, &a) {
            Ok(out) => {
                if let Goal::TargetPoint{x,y} = s.goal {
                    let c = s.cube();
                    let d = ((c.x-x).powi(2)+(c.y-y).powi(2)).sqrt();
                    if step % 10 == 0 || out.done { println!("step {step}: phase {:?} ee ({:.3},{:.3},{:.3}) cube ({:.3},{:.3}) dist {:.3}", expert.phase(), s.ee[0], s.ee[1], s.ee[2], c.x, c.y, d); }
                }
                if out.done { println!("done success={}", out.success); break; }
            }
            Err(e) => {
                println!("SIM ERR at step {step}: {e}");
                println!("  ee ({:.4},{:.4},{:.4})", s.ee[0], s.ee[1], s.ee[2]);
                for o in &s.objects { println!("  obj {} half {:.3} at ({:.4},{:.4})", o.id, o.half_size, o.x, o.y); }
                break;
            }
        }
    }
}
