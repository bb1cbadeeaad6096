//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria can be selected by name: `cargo test --test acceptance -- A3 A5`.
//! Set `PEDLOC_SKIP_SLOW=1` to skip the long generalization run (A7).

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pedloc_core::clusterloc::{self, complete_linkage, ClusterConfig};
use pedloc_core::depth::DepthMap;
use pedloc_core::detection::{Detection, DetectionSource};
use pedloc_core::evalkit::{evaluate, evaluate_frame, iou, report, shared_tp_iou, truth_detections, BoxM, ConfusionCounts, FrameResult};
use pedloc_core::grid::{min_center_distance, nominal_scene_area, CellVector, GridSpec};
use pedloc_core::gridnet::{
    dataset_loss, decode, forward, init, localize, loss, loss_and_grad, GridPrediction, LossWeights, NetArch,
    NetworkParams, TrainConfig, TrainSample, Trainer,
};
use pedloc_core::patchlib::silhouettes::{synthetic_library, LibraryCounts};
use pedloc_core::synth::{generate_dataset, generate_scene, GroundTruthGrid, SynthConfig};
use pedloc_core::PatchLibrary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::brute_linkage;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
    }
}

fn bits(m: &DepthMap) -> Vec<u32> {
    m.depths().iter().map(|d| d.to_bits()).collect()
}

fn same(a: &DepthMap, b: &DepthMap) -> bool {
    (a.width(), a.height(), a.pixel_pitch().to_bits(), a.floor_depth().to_bits())
        == (b.width(), b.height(), b.pixel_pitch().to_bits(), b.floor_depth().to_bits())
        && bits(a) == bits(b)
}

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> DepthMap {
    let depths = (0..w * h)
        .map(|_| if rng.random_bool(0.5) { 4.0 } else { rng.random_range(0.05f32..4.0) })
        .collect();
    DepthMap::from_depths(w, h, 0.01, 4.0, depths).unwrap()
}

fn a1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let (w, h) = (rng.random_range(1..=40), rng.random_range(1..=30));
        let (a, b, c) = (random_map(&mut rng, w, h), random_map(&mut rng, w, h), random_map(&mut rng, w, h));
        let floor = DepthMap::new_background(w, h, 0.01, 4.0).unwrap();
        let ab = a.compose_min(&b).unwrap();
        let laws = [
            ("commutative", same(&ab, &b.compose_min(&a).unwrap())),
            (
                "associative",
                same(&ab.compose_min(&c).unwrap(), &a.compose_min(&b.compose_min(&c).unwrap()).unwrap()),
            ),
            ("idempotent", same(&a.compose_min(&a).unwrap(), &a)),
            ("floor identity", same(&a.compose_min(&floor).unwrap(), &a) && same(&floor.compose_min(&a).unwrap(), &a)),
        ];
        for (name, ok) in laws {
            if !ok {
                failures.push(format!("case {i}: {name}"));
            }
        }
    }
    if !failures.is_empty() {
        return Err(format!("{} violations, first: {}", failures.len(), failures[0]));
    }
    within(t.elapsed(), 10.0)?;
    Ok(format!("1000 triples bit-exact in {:.2} s", t.elapsed().as_secs_f64()))
}

fn library(seed: u64) -> PatchLibrary {
    let cfg = SynthConfig::default();
    synthetic_library(LibraryCounts::default(), seed, cfg.native_pitch(), cfg.floor_depth).unwrap()
}

fn count_stats(cfg: &SynthConfig, lib: &PatchLibrary, base: u64, m: usize) -> (f64, f64) {
    let (mut peds, mut dis) = (0usize, 0usize);
    for i in 0..m as u64 {
        let s = generate_scene(cfg, lib, base + i).unwrap();
        peds += s.pedestrian_count;
        dis += s.distractor_count;
    }
    (peds as f64 / m as f64, dis as f64 / m as f64)
}

fn a2() -> Outcome {
    let t = Instant::now();
    let lib = library(2);
    // Scene noise is drawn after every placement, so counts do not depend on it;
    // it is switched off for speed and the claim is spot-checked below.
    let quiet = |s: usize, q: f64| SynthConfig {
        noise_sigma: 0.0,
        ..SynthConfig::with_grid(s, q)
    };
    for seed in 0..50 {
        let noisy = generate_scene(&SynthConfig::with_grid(5, 0.5), &lib, seed).unwrap();
        let plain = generate_scene(&quiet(5, 0.5), &lib, seed).unwrap();
        if (noisy.pedestrian_count, noisy.distractor_count, &noisy.truth)
            != (plain.pedestrian_count, plain.distractor_count, &plain.truth)
        {
            return Err(format!("noise changed the layout of seed {seed}"));
        }
    }
    let m = 10_000;
    let cfg5 = quiet(5, 0.5);
    let (mean5, dis5) = count_stats(&cfg5, &lib, 0, m);
    let (mean10, _) = count_stats(&quiet(10, 0.2), &lib, 50_000, m);
    let lambda = cfg5.lambda;
    let dis_tol = 5.0 * (lambda / m as f64).sqrt();
    let detail = format!(
        "S=5 mean {mean5:.4} in [12.37, 12.63]; S=10 mean {mean10:.4} in [19.8, 20.2]; distractors {dis5:.4} vs {lambda} +- {dis_tol:.4}; {:.1} s",
        t.elapsed().as_secs_f64()
    );
    let ok = (12.37..=12.63).contains(&mean5) && (19.8..=20.2).contains(&mean10) && (dis5 - lambda).abs() <= dis_tol;
    within(t.elapsed(), 120.0).map_err(|e| format!("{detail}; {e}"))?;
    check(ok, detail)
}

fn a3() -> Outcome {
    let d5 = min_center_distance(&GridSpec::with_cells(5));
    let area = nominal_scene_area();
    let native = DepthMap::new_background(640, 480, 2.9 / 640.0, 4.0).unwrap();
    let small = native.downsample(4).unwrap();
    let scene = generate_scene(&SynthConfig::default(), &library(3), 0).unwrap();
    let detail = format!(
        "min centre distance {d5}, area {area}, downsample {}x{}, scene {}x{}",
        small.width(),
        small.height(),
        scene.image.width(),
        scene.image.height()
    );
    check(
        d5 == 0.58
            && area == 6.38
            && (small.width(), small.height()) == (160, 120)
            && (scene.image.width(), scene.image.height()) == (160, 120),
        detail,
    )
}

fn a4() -> Outcome {
    let t = Instant::now();
    let arch = NetArch {
        input_width: 16,
        input_height: 12,
        conv_channels: vec![2, 2],
        dense: vec![16],
        grid: 2,
    };
    let grid = GridSpec {
        s: 2,
        width: 16,
        height: 12,
        extent_x: 1.0,
        extent_y: 0.75,
    };
    // ReLU and max-pool kinks are crossed by a fair share of coordinates at
    // steps near 1e-3; 1e-5 keeps the difference quotient on one linear piece.
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = NetworkParams::<f64>::init(&arch, 4).unwrap();
    for l in &mut params.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.05);
    }
    let xs: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..arch.input_len()).map(|_| if rng.random_bool(0.4) { rng.random_range(0.05..0.6) } else { 0.0 }).collect())
        .collect();
    let ts: Vec<GroundTruthGrid> = (0..2)
        .map(|_| {
            let mut t = GroundTruthGrid::empty(grid);
            for c in &mut t.cells {
                if rng.random_bool(0.5) {
                    *c = CellVector::occupied(rng.random(), rng.random(), rng.random_range(0.05..0.4), rng.random_range(0.05..0.4));
                }
            }
            t
        })
        .collect();
    let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let truths: Vec<&GroundTruthGrid> = ts.iter().collect();
    let w = LossWeights::default();
    let (_, grads) = loss_and_grad(&params, &inputs, &truths, &w).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..params.len());
        let orig = params.get_flat(i);
        params.set_flat(i, orig + h);
        let up = loss_and_grad(&params, &inputs, &truths, &w).unwrap().0;
        params.set_flat(i, orig - h);
        let down = loss_and_grad(&params, &inputs, &truths, &w).unwrap().0;
        params.set_flat(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get_flat(i);
        worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6));
    }
    let detail = format!("max relative error {worst:.2e} over 100 coordinates (step {h:e})");
    within(t.elapsed(), 60.0).map_err(|e| format!("{detail}; {e}"))?;
    check(worst < 1e-4, detail)
}

fn a5() -> Outcome {
    let grid = GridSpec {
        s: 2,
        ..GridSpec::with_cells(2)
    };
    let w = LossWeights::default();
    let mut truth = GroundTruthGrid::empty(grid);
    truth.cells[3] = CellVector::occupied(0.0, 0.5, 0.25, 0.5);
    let exact = GridPrediction {
        s: 2,
        cells: truth.cells.clone(),
    };
    let zero = loss(&exact, &truth, &w).unwrap();

    let mut wild = exact.clone();
    for c in [0, 1, 2] {
        wild.cells[c].x = 7.0;
        wild.cells[c].y = -3.0;
        wild.cells[c].w = 100.0;
        wild.cells[c].h = 0.5;
    }
    let switched = loss(&wild, &truth, &w).unwrap();

    let mut off = exact.clone();
    off.cells[3].x = 0.1;
    let single = loss(&off, &truth, &w).unwrap();
    // 0.1 is not representable; the tolerance covers its f32 rounding only
    let detail = format!("exact match {zero}, empty-cell spatial term {switched}, single-cell fixture {single}");
    check(zero == 0.0 && switched == 0.0 && (single - 0.05).abs() < 1e-8, detail)
}

fn frame_counts(results: &[FrameResult]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for r in results {
        c += r.counts;
    }
    c
}

fn a6() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig::with_grid(5, 0.5);
    let lib = library(6);
    if lib.len() < 10 {
        return Err("library too small".into());
    }
    let samples: Vec<TrainSample> = (0..32).map(|i| TrainSample::from_scene(&generate_scene(&cfg, &lib, 600 + i).unwrap())).collect();
    let arch = NetArch::for_grid(5);
    let tc = TrainConfig {
        epochs: 400,
        batch_size: 8,
        seed: 6,
        ..TrainConfig::default()
    };
    let w = tc.loss_weights;
    let mut trainer = Trainer::new(init(&arch, 6).unwrap(), tc).map_err(|e| e.to_string())?;
    let initial = dataset_loss(&trainer.params, &samples, &w).unwrap();
    let mut last = initial;
    while !trainer.is_done() {
        trainer.run_epoch(&samples, &[]).map_err(|e| e.to_string())?;
        if trainer.epoch % 10 == 0 {
            last = dataset_loss(&trainer.params, &samples, &w).unwrap();
            if last < 0.05 * initial {
                break;
            }
        }
    }
    let results: Vec<FrameResult> = samples
        .iter()
        .map(|s| {
            let pred = pedloc_core::gridnet::forward_raw(&trainer.params, &s.input).unwrap();
            let pred = pedloc_core::gridnet::outputs_to_prediction(&pred, 5);
            let dets = decode(&pred, &cfg.grid, 0.5).unwrap();
            evaluate_frame(&dets, &s.truth, &cfg.grid, 0.5).unwrap()
        })
        .collect();
    let c = frame_counts(&results);
    let precision = c.tp as f64 / (c.tp + c.fp).max(1) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_).max(1) as f64;
    let ratio = last / initial;
    let detail = format!(
        "loss {initial:.3} -> {last:.4} ({:.2}%) after {} epochs; precision {precision:.3}, recall {recall:.3}; {:.0} s",
        100.0 * ratio,
        trainer.epoch,
        t.elapsed().as_secs_f64()
    );
    check(ratio < 0.05 && precision >= 0.9 && recall >= 0.9, detail)
}

/// Training budget for the generalization run.
const A7_TRAIN: usize = 5000;
const A7_EVAL: usize = 500;
const A7_EPOCHS: usize = 25;
const A7_BATCH: usize = 16;
/// A third conv block shrinks the dense fan-in fourfold and trains faster per
/// second than the default widths.
const A7_CONV: [usize; 3] = [16, 32, 32];

fn a7() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig::with_grid(5, 0.5);
    let lib = library(7);
    let train: Vec<TrainSample> = (0..A7_TRAIN as u64)
        .map(|i| TrainSample::from_scene(&generate_scene(&cfg, &lib, i).unwrap()))
        .collect();
    let eval: Vec<_> = (0..A7_EVAL as u64).map(|i| generate_scene(&cfg, &lib, 1_000_000 + i).unwrap()).collect();
    let tc = TrainConfig {
        epochs: A7_EPOCHS,
        batch_size: A7_BATCH,
        seed: 7,
        ..TrainConfig::default()
    };
    let arch = NetArch {
        conv_channels: A7_CONV.to_vec(),
        ..NetArch::for_grid(5)
    };
    let mut trainer = Trainer::new(init(&arch, 7).unwrap(), tc).map_err(|e| e.to_string())?;
    while !trainer.is_done() {
        let r = trainer.run_epoch(&train, &[]).map_err(|e| e.to_string())?;
        eprintln!("A7 epoch {} loss {:.3} ({:.0} s)", r.epoch, r.train_loss, t.elapsed().as_secs_f64());
    }
    drop(train);

    let cl_cfg = ClusterConfig::for_floor(cfg.floor_depth as f64);
    let mut cnn = Vec::new();
    let mut cl = Vec::new();
    for s in &eval {
        let d = localize(&trainer.params, &s.image, 0.5).unwrap();
        cnn.push(evaluate_frame(&d, &s.truth, &cfg.grid, 0.5).unwrap());
        let d = clusterloc::localize(&s.image, &cl_cfg).unwrap();
        cl.push(evaluate_frame(&d, &s.truth, &cfg.grid, 0.5).unwrap());
    }
    let (rc, rl) = (report(&cnn, 0.5), report(&cl, 0.5));
    let mut worse = Vec::new();
    let mut checked = 0;
    for b in rc.buckets.iter().filter(|b| b.pedestrians.is_some_and(|n| n >= 8)) {
        let n = b.pedestrians.unwrap();
        let other = rl.bucket(n).unwrap();
        checked += 1;
        if b.recall < other.recall {
            worse.push(format!("n={n}: {:.3} < {:.3}", b.recall.unwrap_or(0.0), other.recall.unwrap_or(0.0)));
        }
    }
    let (ic, il, shared) = shared_tp_iou(&cnn, &cl).unwrap();
    let (ic, il) = (ic.unwrap_or(0.0), il.unwrap_or(0.0));
    let detail = format!(
        "recall cnn {:.3} / cl {:.3} overall; {} of {checked} buckets with >= 8 pedestrians below cl{}; shared-TP IoU cnn {ic:.3} / cl {il:.3} over {shared}; {:.0} s",
        rc.overall.recall.unwrap_or(0.0),
        rl.overall.recall.unwrap_or(0.0),
        worse.len(),
        if worse.is_empty() { String::new() } else { format!(" ({})", worse.join(", ")) },
        t.elapsed().as_secs_f64()
    );
    check(worse.is_empty() && checked > 0 && (ic - il).abs() <= 0.15, detail)
}

fn blob_map(centres: &[(usize, usize)]) -> DepthMap {
    DepthMap::from_fn(160, 120, 2.9 / 160.0, 4.0, |x, y| {
        if centres.iter().any(|&(cx, cy)| x.abs_diff(cx) <= 1 && y.abs_diff(cy) <= 1) {
            1.8
        } else {
            4.0
        }
    })
    .unwrap()
}

fn a8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..500 {
        let n = rng.random_range(0..=8);
        let lattice = trial % 2 == 0;
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                if lattice {
                    (rng.random_range(0..5) as f64 * 0.2, rng.random_range(0..5) as f64 * 0.2)
                } else {
                    (rng.random_range(0.0..1.5), rng.random_range(0.0..1.5))
                }
            })
            .collect();
        let cutoff = rng.random_range(0.1..0.9);
        if complete_linkage(&points, cutoff) != brute_linkage(&points, cutoff) {
            return Err(format!("instance {trial} differs from the oracle"));
        }
    }
    let cfg = ClusterConfig::default();
    let pitch = 2.9 / 160.0;
    let mut found = Vec::new();
    for sep in [0.30f64, 0.60] {
        let dx = (sep / pitch).round() as usize;
        found.push(clusterloc::localize(&blob_map(&[(40, 60), (40 + dx, 60)]), &cfg).unwrap().len());
    }
    let detail = format!(
        "500 instances match the oracle; blobs 0.30 m / 0.60 m apart at cutoff {} give {} / {} detections",
        cfg.cutoff, found[0], found[1]
    );
    check(found == [1, 2], detail)
}

fn det(cx: f64, cy: f64, w: f64, h: f64) -> Detection {
    Detection {
        cx,
        cy,
        w,
        h,
        confidence: 1.0,
        source: DetectionSource::Cluster,
    }
}

fn a9() -> Outcome {
    let g = GridSpec {
        s: 3,
        width: 30,
        height: 30,
        extent_x: 3.0,
        extent_y: 3.0,
    };
    let truth = |cells: &[usize]| {
        let mut t = GroundTruthGrid::empty(g);
        for &c in cells {
            t.cells[c] = CellVector::occupied(0.5, 0.5, 0.2, 0.2);
        }
        t
    };
    // frame 1: tp 1, fp 1, fn 1; frame 2: tp 2, fp 0, fn 0
    let frames = vec![
        (vec![det(0.5, 0.5, 0.6, 0.6), det(2.5, 2.5, 0.5, 0.5)], truth(&[0, 4])),
        (vec![det(1.5, 0.5, 0.6, 0.6), det(2.5, 0.5, 0.6, 0.6)], truth(&[1, 2])),
    ];
    let r = evaluate(&frames, &g, 0.5).unwrap();
    let b = r.bucket(2).unwrap();
    let want = (0.5 + 1.0) / 2.0;
    let formulas = b.precision == Some(want) && b.recall == Some(want) && (b.counts.tp, b.counts.fp, b.counts.fn_) == (3, 1, 1);

    let unit = iou(&BoxM { cx: 0.5, cy: 0.5, w: 1.0, h: 1.0 }, &BoxM { cx: 1.0, cy: 0.5, w: 1.0, h: 1.0 }).unwrap();

    let perfect: Vec<(Vec<Detection>, GroundTruthGrid)> = [vec![0, 4, 8], vec![1], vec![2, 3, 5, 6]]
        .iter()
        .map(|c| {
            let t = truth(c);
            (truth_detections(&t), t)
        })
        .collect();
    let p = evaluate(&perfect, &g, 0.5).unwrap();
    let all_one = p
        .buckets
        .iter()
        .chain([&p.overall])
        .all(|b| b.precision == Some(1.0) && b.recall == Some(1.0) && b.mean_iou.is_some_and(|v| (v - 1.0).abs() < 1e-6));
    let detail = format!(
        "fixture precision {:?} recall {:?} (want {want}); unit-square IoU {unit}; perfect report all ones: {all_one}",
        b.precision, b.recall
    );
    check(formulas && (unit - 1.0 / 3.0).abs() < 1e-12 && all_one, detail)
}

fn a10() -> Outcome {
    let cfg = SynthConfig::with_grid(5, 0.5);
    let lib = library(10);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut manifests = Vec::new();
    for d in &dirs {
        manifests.push(generate_dataset(&cfg, &lib, 77, 8, d.path()).unwrap());
    }
    let files = |p: &std::path::Path| -> Vec<Vec<u8>> {
        let mut names: Vec<_> = walk(p);
        names.sort();
        names.iter().map(|n| std::fs::read(n).unwrap()).collect()
    };
    let synth_same = manifests[0] == manifests[1] && files(dirs[0].path()) == files(dirs[1].path());

    let samples: Vec<TrainSample> = (0..8).map(|i| TrainSample::from_scene(&generate_scene(&cfg, &lib, 77 + i).unwrap())).collect();
    let run = || {
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 10,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(init(&NetArch::for_grid(5), 10).unwrap(), tc).unwrap();
        t.run(&samples, &samples[..2]).unwrap();
        t
    };
    let (t1, t2) = (run(), run());
    let param_bits = |p: &NetworkParams<f32>| -> Vec<u32> { p.tensors().flat_map(|t| t.iter().map(|v| v.to_bits())).collect() };
    let train_same = param_bits(&t1.params) == param_bits(&t2.params) && t1.history == t2.history;

    let eval_once = || -> String {
        let scenes: Vec<_> = (0..6).map(|i| generate_scene(&cfg, &lib, 900 + i).unwrap()).collect();
        let cl_cfg = ClusterConfig {
            seed: 3,
            ..ClusterConfig::default()
        };
        let mut out = String::new();
        for s in &scenes {
            let _ = forward(&t1.params, &s.image).unwrap();
            let cnn = evaluate_frame(&localize(&t1.params, &s.image, 0.5).unwrap(), &s.truth, &cfg.grid, 0.5).unwrap();
            let cl = evaluate_frame(&clusterloc::localize(&s.image, &cl_cfg).unwrap(), &s.truth, &cfg.grid, 0.5).unwrap();
            out.push_str(&report(&[cnn], 0.5).to_json().unwrap());
            out.push_str(&report(&[cl], 0.5).to_json().unwrap());
        }
        out
    };
    let eval_same = eval_once() == eval_once();
    check(
        synth_same && train_same && eval_same,
        format!("synth identical: {synth_same}, train identical: {train_same}, eval identical: {eval_same}"),
    )
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("A1", "min-composition laws", a1),
        ("A2", "generator statistics", a2),
        ("A3", "geometry constants", a3),
        ("A4", "gradient check", a4),
        ("A5", "loss contract", a5),
        ("A6", "overfit", a6),
        ("A7", "generalization versus clustering", a7),
        ("A8", "clustering oracle", a8),
        ("A9", "metric fixtures", a9),
        ("A10", "determinism", a10),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let skip_slow = std::env::var("PEDLOC_SKIP_SLOW").is_ok_and(|v| v == "1");
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        if id == "A7" && skip_slow {
            println!("{id:<3} SKIP {name}: PEDLOC_SKIP_SLOW=1");
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("{id:<3} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id:<3} FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
