use slotpolicy::config::Config;
use slotpolicy::dataset::{self, DatasetIndex, SplitKind};
use slotpolicy::encoder::{SaviConfig, SaviEncoder};
use slotpolicy::sim::{Level, LevelConfig, Preset};
use slotpolicy::trainer::{clip_batch_bytes, pretrain_step};
use tensor_core::{AdamConfig, AdamState, RngStream};
use std::time::Instant;

fn main() {
    let dir = std::path::Path::new("/tmp/bench_data");
    if !dir.join("episodes.rshp").exists() {
        let cfg = Config::default();
        let params = cfg.sim_params().unwrap();
        let lvl = LevelConfig::new(Level::InDist, Preset::Reduced);
        let t0 = Instant::now();
        let (_, stats) = dataset::generate(
            slotpolicy::sim::Task::Push, &lvl, &params, 30, 1000, dir, "episodes.rshp",
        ).unwrap();
        println!("gen 30 episodes: {:.1}s ({} attempted)", t0.elapsed().as_secs_f64(), stats.attempted);
    }
    let index = DatasetIndex::open(&dir.join("episodes.rshp")).unwrap();
    let cfg = Config::default();
    let enc_cfg = SaviConfig::from_config(&cfg).unwrap();
    let mut rng = RngStream::seed(1);
    let enc = SaviEncoder::<f32>::new(enc_cfg.clone(), &mut rng);
    let params = enc.params();
    println!("encoder params: {} tensors, {} values", params.len(), params.num_values());
    let mut adam = AdamState::new(&params, AdamConfig { lr: 4e-4, ..Default::default() });
    let (batch, t) = (8usize, 4usize);
    let mut data_rng = RngStream::seed(5);
    // warmup + timed steps
    for step in 0..6 {
        let clips = dataset::sample_clips(&index, SplitKind::Train, t, batch, &mut data_rng).unwrap();
        let bytes = clip_batch_bytes(&clips, t);
        let mut noise = RngStream::seed(100 + step);
        let t0 = Instant::now();
        let (loss, gnorm) = pretrain_step(&enc, &params, &mut adam, &bytes, batch, t, &mut noise, 4e-4).unwrap();
        println!("step {step}: loss {loss:.5} gnorm {gnorm:.3} dt {:.3}s", t0.elapsed().as_secs_f64());
    }
}
