use slotpolicy::config::Config;
use slotpolicy::dataset::{self, DatasetIndex, SplitKind};
use slotpolicy::encoder::{SaviConfig, SaviEncoder};
use slotpolicy::trainer::clip_batch_bytes;
use tensor_core::{Graph, RngStream, Tensor};
use std::time::Instant;

fn main() {
    let dir = std::path::Path::new("/tmp/bench_data");
    let index = DatasetIndex::open(&dir.join("episodes.rshp")).unwrap();
    let cfg = Config::default();
    let enc_cfg = SaviConfig::from_config(&cfg).unwrap();
    let mut rng = RngStream::seed(1);
    let enc = SaviEncoder::<f32>::new(enc_cfg.clone(), &mut rng);
    let (batch, t) = (8usize, 4usize);
    let mut data_rng = RngStream::seed(5);
    let clips = dataset::sample_clips(&index, SplitKind::Train, t, batch, &mut data_rng).unwrap();
    let bytes = clip_batch_bytes(&clips, t);

    for round in 0..3 {
        // encode only
        let g = Graph::<f32>::new();
        let frames = enc.frames_to_tensor(&bytes, batch * t);
        let t0 = Instant::now();
        let feats = enc.encode_frames(&g, &frames, batch * t).unwrap();
        let enc_t = t0.elapsed().as_secs_f64();
        drop(feats); drop(g);

        // full forward unroll
        let g = Graph::<f32>::new();
        let mut noise = RngStream::seed(10 + round);
        let t0 = Instant::now();
        let out = enc.unroll(&g, &frames, batch, t, &mut noise).unwrap();
        let fwd_t = t0.elapsed().as_secs_f64();

        // loss + backward
        let refs: Vec<&Tensor<f32>> = out.decode.composites.iter().collect();
        let loss = enc.recon_loss(&g, &refs, &frames).unwrap();
        let t0 = Instant::now();
        g.backward(&loss).unwrap();
        let bwd_t = t0.elapsed().as_secs_f64();
        println!("round {round}: encode {enc_t:.3}s | full fwd {fwd_t:.3}s | backward {bwd_t:.3}s | nodes {}", 0);
    }
}
