use pedloc_core::patchlib::silhouettes::*;
use pedloc_core::synth::*;
fn main() {
    let cfg = SynthConfig::with_grid(5, 0.5);
    let lib = synthetic_library(LibraryCounts::default(), 7, cfg.native_pitch(), 4.0).unwrap();
    let (mut w, mut h) = (vec![], vec![]);
    for s in generate_scenes(&cfg, &lib, 0, 300).unwrap() {
        for c in s.truth.cells.iter().filter(|c| c.p == 1.0) { w.push(c.w as f64 * 2.9); h.push(c.h as f64 * 2.175); }
    }
    for (n, v) in [("w", &w), ("h", &h)] {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let mut s = v.clone(); s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = s[s.len() / 2];
        let mae = v.iter().map(|x| (x - med).abs()).sum::<f64>() / v.len() as f64;
        println!("{n} mean {m:.3} median {med:.3} mae-to-median {mae:.3} min {:.3} max {:.3}", s[0], s[s.len()-1]);
    }
}
