use std::time::Instant;
use pedloc_core::clusterloc::{self, ClusterConfig};
use pedloc_core::evalkit::*;
use pedloc_core::gridnet::*;
use pedloc_core::patchlib::silhouettes::*;
use pedloc_core::synth::*;
fn main() {
    let a: Vec<String> = std::env::args().collect();
    let n: usize = a[1].parse().unwrap();
    let epochs: usize = a[2].parse().unwrap();
    let conv: Vec<usize> = a[3].split(',').map(|s| s.parse().unwrap()).collect();
    let dense: Vec<usize> = if a[4] == "none" { vec![] } else { a[4].split(',').map(|s| s.parse().unwrap()).collect() };
    let every: usize = a[5].parse().unwrap();
    let cfg = SynthConfig::with_grid(5, 0.5);
    let lib = synthetic_library(LibraryCounts::default(), 7, cfg.native_pitch(), 4.0).unwrap();
    let t = Instant::now();
    let train: Vec<TrainSample> = (0..n as u64).map(|i| TrainSample::from_scene(&generate_scene(&cfg, &lib, i).unwrap())).collect();
    let eval = generate_scenes(&cfg, &lib, 1_000_000, 200).unwrap();
    let val = samples_from_scenes(&eval);
    let cc = ClusterConfig::for_floor(4.0);
    let cl: Vec<FrameResult> = eval.iter().map(|s| evaluate_frame(&clusterloc::localize(&s.image, &cc).unwrap(), &s.truth, &cfg.grid, 0.5).unwrap()).collect();
    let mut arch = NetArch::for_grid(5);
    arch.conv_channels = conv;
    arch.dense = dense;
    let mut tc = TrainConfig { epochs, batch_size: 16, seed: 7, ..Default::default() };
    tc.loss_weights.lambda_l2 = a[6].parse().unwrap();
    let mut tr = Trainer::new(init(&arch, 7).unwrap(), tc).unwrap();
    let g = cfg.grid;
    while !tr.is_done() {
        let r = tr.run_epoch(&train, &[]).unwrap();
        if r.epoch % every != 0 && !tr.is_done() { continue; }
        let vl = dataset_loss(&tr.params, &val, &tr.config.loss_weights).unwrap();
        let mut err = [0.0f64; 4];
        let mut k = 0.0;
        for s in &eval {
            let p = forward(&tr.params, &s.image).unwrap();
            for (pc, tc) in p.cells.iter().zip(&s.truth.cells) {
                if tc.p == 1.0 && pc.p > 0.5 {
                    k += 1.0;
                    err[0] += ((pc.x - tc.x) as f64 * g.extent_x / 5.0).abs();
                    err[1] += ((pc.y - tc.y) as f64 * g.extent_y / 5.0).abs();
                    err[2] += ((pc.w - tc.w) as f64 * g.extent_x).abs();
                    err[3] += ((pc.h - tc.h) as f64 * g.extent_y).abs();
                }
            }
        }
        let cnn: Vec<FrameResult> = eval.iter().map(|s| evaluate_frame(&localize(&tr.params, &s.image, 0.5).unwrap(), &s.truth, &cfg.grid, 0.5).unwrap()).collect();
        let cr = report(&cnn, 0.5);
        let (x, y, _) = shared_tp_iou(&cnn, &cl).unwrap();
        println!("ep {} train {:.3} val {:.3} t {:.0}s R {:.3} iou {:.3}/{:.3} mae m x {:.3} y {:.3} w {:.3} h {:.3}", r.epoch, r.train_loss, vl, t.elapsed().as_secs_f64(), cr.overall.recall.unwrap_or(0.0), x.unwrap_or(0.0), y.unwrap_or(0.0), err[0]/k, err[1]/k, err[2]/k, err[3]/k);
    }
}
