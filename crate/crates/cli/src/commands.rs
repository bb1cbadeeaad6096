use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pedloc_core::clusterloc::{self, ClusterConfig};
use pedloc_core::detection::to_jsonl;
use pedloc_core::evalkit::{evaluate_frame, report, shared_tp_iou, EvalReport, FrameResult};
use pedloc_core::gridnet::{self, init, Checkpoint, LossWeights, NetArch, NetworkParams, Optimizer, TrainConfig, TrainSample, Trainer};
use pedloc_core::patchlib::silhouettes::{fill_library, LibraryCounts};
use pedloc_core::synth::{generate_dataset, Dataset, GridSpec, SynthConfig};
use pedloc_core::{DepthMap, Detection, PatchLibrary};
use rayon::prelude::*;
use serde::de::DeserializeOwned;

use crate::{
    ClusterArgs, EvalArgs, LocalizeArgs, Method, OptimizerChoice, SeedLibraryArgs, ServeArgs, SynthArgs, TrainArgs,
    UsageError,
};

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub(crate) fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.grid {
        cfg.grid = GridSpec::with_cells(s);
    }
    if let Some(q) = a.q {
        cfg.q = q;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = a.noise_sigma {
        cfg.noise_sigma = s;
    }
    if a.count_range.is_some() {
        cfg.count_range = a.count_range;
    }
    if a.no_augment {
        cfg.augment = pedloc_core::augment::AugmentConfig::disabled();
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let lib = PatchLibrary::load(&a.patches).with_context(|| format!("loading library {}", a.patches.display()))?;
    for w in lib.warnings() {
        log::warn!("{w}");
    }
    let m = generate_dataset(&cfg, &lib, a.seed, a.count as usize, &a.out)?;
    let distractors = m.distractor_counts.iter().sum::<usize>() as f64 / m.count as f64;
    println!(
        "wrote {} scenes to {} (seeds {}..={}, S={}, mean pedestrians {:.3}, mean distractors {:.3})",
        m.count,
        a.out.display(),
        m.seeds.0,
        m.seeds.1,
        cfg.grid.s,
        m.mean_pedestrians(),
        distractors
    );
    Ok(())
}

fn load_samples(dir: &Path) -> Result<(Vec<TrainSample>, usize, (usize, usize))> {
    let ds = Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    if ds.is_empty() {
        bail!("dataset {} is empty", dir.display());
    }
    let s = ds.truths[0].grid.s;
    let size = (ds.images[0].width(), ds.images[0].height());
    let samples = ds
        .images
        .iter()
        .zip(ds.truths)
        .map(|(img, t)| TrainSample::new(img, t))
        .collect();
    Ok((samples, s, size))
}

fn apply_train_flags(cfg: &mut TrainConfig, a: &TrainArgs) {
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    match a.optimizer {
        Some(OptimizerChoice::Adam) => cfg.optimizer = Optimizer::adam(),
        Some(OptimizerChoice::Sgd) => cfg.optimizer = Optimizer::sgd(),
        None => {}
    }
    if let (Some(m), Optimizer::Sgd { momentum }) = (a.momentum, &mut cfg.optimizer) {
        *momentum = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let w: &mut LossWeights = &mut cfg.loss_weights;
    if let Some(h) = a.lambda_h {
        w.lambda_h = h;
    }
    if let Some(l) = a.lambda_l2 {
        w.lambda_l2 = l;
    }
}

pub(crate) fn train(a: TrainArgs) -> Result<()> {
    if a.momentum.is_some() && a.optimizer == Some(OptimizerChoice::Adam) {
        return Err(usage("--momentum applies to sgd only"));
    }
    let (train_set, s, (width, height)) = load_samples(&a.data)?;
    let val_set = match &a.val {
        Some(v) => load_samples(v)?.0,
        None => Vec::new(),
    };
    let mut trainer = match &a.resume {
        Some(path) => {
            if a.conv.is_some() || a.dense.is_some() {
                return Err(usage("--conv and --dense cannot change a resumed network"));
            }
            let ckpt = Checkpoint::load(path)?;
            let mut cfg = match &a.config {
                Some(p) => read_config(Some(p))?,
                None => ckpt.config.clone().unwrap_or_default(),
            };
            apply_train_flags(&mut cfg, &a);
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            ckpt.into_trainer(Some(cfg))?
        }
        None => {
            let mut cfg: TrainConfig = read_config(a.config.as_deref())?;
            apply_train_flags(&mut cfg, &a);
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let mut arch = NetArch::for_grid(s);
            (arch.input_width, arch.input_height) = (width, height);
            if let Some(c) = &a.conv {
                arch.conv_channels = c.clone();
            }
            if let Some(d) = &a.dense {
                arch.dense = d.clone();
            }
            arch.validate().map_err(|e| usage(e.to_string()))?;
            Trainer::new(init(&arch, cfg.seed)?, cfg)?
        }
    };
    let arch = &trainer.params.arch;
    if (arch.input_width, arch.input_height, arch.grid) != (width, height, s) {
        bail!(
            "network takes {}x{} with S={}, dataset has {width}x{height} with S={s}",
            arch.input_width,
            arch.input_height,
            arch.grid
        );
    }
    let history = a.history.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    let save = |t: &Trainer| -> Result<()> {
        Checkpoint::from_trainer(t).save(&a.out)?;
        t.history.write_csv(&history)?;
        Ok(())
    };
    while !trainer.is_done() {
        let rec = trainer.run_epoch(&train_set, &val_set)?;
        match rec.val_loss {
            Some(v) => log::info!("epoch {} train {:.6} val {:.6}", rec.epoch, rec.train_loss, v),
            None => log::info!("epoch {} train {:.6}", rec.epoch, rec.train_loss),
        }
        if rec.epoch as u64 % a.checkpoint_every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)?;
    println!("trained {} epochs; checkpoint {}", trainer.epoch, a.out.display());
    Ok(())
}

fn cluster_config(a: &ClusterArgs, seed: Option<u64>, floor: f32) -> Result<ClusterConfig> {
    let mut cfg = match &a.config {
        Some(p) => read_config(Some(p))?,
        None => ClusterConfig::for_floor(floor as f64),
    };
    if let Some(t) = a.depth_threshold {
        cfg.depth_threshold = t;
    }
    if let Some(n) = a.n_samples {
        cfg.n_samples = n;
    }
    if let Some(c) = a.cutoff {
        cfg.cutoff = c;
    }
    if let Some(m) = a.min_cluster_size {
        cfg.min_cluster_size = m;
    }
    cfg.seed = seed.ok_or_else(|| usage("--seed is required for the cluster method"))?;
    cfg.validate(floor as f64).map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn load_model(path: Option<&PathBuf>) -> Result<NetworkParams<f32>> {
    let path = path.ok_or_else(|| usage("--checkpoint is required for the cnn method"))?;
    Ok(Checkpoint::load(path)?.params)
}

fn cnn_detect(params: &NetworkParams<f32>, image: &DepthMap, threshold: f64) -> Result<Vec<Detection>> {
    Ok(gridnet::localize(params, &gridnet::fit_input(params, image)?, threshold)?)
}

fn write_report(dir: &Path, name: &str, r: &EvalReport) -> Result<()> {
    fs::write(dir.join(format!("{name}_report.json")), r.to_json()?)?;
    fs::write(dir.join(format!("{name}_report.csv")), r.to_csv())?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{name}: precision {} recall {} iou {} over {} frames",
        fmt(r.overall.precision),
        fmt(r.overall.recall),
        fmt(r.overall.mean_iou),
        r.overall.n_frames
    );
    Ok(())
}

pub(crate) fn eval(a: EvalArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(usage("--threshold must be in (0, 1)"));
    }
    let run_cnn = matches!(a.method, Method::Cnn | Method::Both);
    let run_cl = matches!(a.method, Method::Cluster | Method::Both);
    let model = if run_cnn { Some(load_model(a.checkpoint.as_ref())?) } else { None };
    let ds = Dataset::load(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let floor = ds.manifest.config.floor_depth;
    let cl_cfg = if run_cl { Some(cluster_config(&a.cluster, a.seed, floor)?) } else { None };
    fs::create_dir_all(&a.out)?;

    let frames: Vec<usize> = (0..ds.len()).collect();
    let run = |detect: &(dyn Fn(&DepthMap) -> Result<Vec<Detection>> + Sync)| -> Result<Vec<FrameResult>> {
        frames
            .par_iter()
            .map(|&i| {
                let truth = &ds.truths[i];
                Ok(evaluate_frame(&detect(&ds.images[i])?, truth, &truth.grid, a.threshold)?)
            })
            .collect()
    };
    let cnn = match &model {
        Some(p) => Some(run(&|img| cnn_detect(p, img, a.threshold))?),
        None => None,
    };
    let cl = match &cl_cfg {
        Some(c) => Some(run(&|img| Ok(clusterloc::localize(img, c)?))?),
        None => None,
    };
    if let Some(r) = &cnn {
        write_report(&a.out, "cnn", &report(r, a.threshold))?;
    }
    if let Some(r) = &cl {
        write_report(&a.out, "cluster", &report(r, a.threshold))?;
    }
    if let (Some(x), Some(y)) = (&cnn, &cl) {
        let (ci, li, n) = shared_tp_iou(x, y)?;
        let v = serde_json::json!({ "shared_true_positives": n, "cnn_mean_iou": ci, "cluster_mean_iou": li });
        fs::write(a.out.join("shared_iou.json"), serde_json::to_string_pretty(&v)?)?;
        println!("shared true positives {n}: cnn iou {ci:?}, cluster iou {li:?}");
    }
    Ok(())
}

fn frame_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("dfm"))
        .collect();
    files.sort();
    Ok(files)
}

pub(crate) fn localize(a: LocalizeArgs) -> Result<()> {
    if a.method == Method::Both {
        return Err(usage("localize takes --method cnn or --method cluster"));
    }
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(usage("--threshold must be in (0, 1)"));
    }
    let model = if a.method == Method::Cnn { Some(load_model(a.checkpoint.as_ref())?) } else { None };
    if a.method == Method::Cluster && a.seed.is_none() {
        return Err(usage("--seed is required for the cluster method"));
    }
    let mut out = String::new();
    for path in frame_files(&a.input)? {
        let map = DepthMap::load_dfm(&path)?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let dets = match &model {
            Some(p) => cnn_detect(p, &map, a.threshold)?,
            None => clusterloc::localize(&map, &cluster_config(&a.cluster, a.seed, map.floor_depth())?)?,
        };
        out.push_str(&to_jsonl(&id, &dets)?);
    }
    match &a.out {
        Some(p) => fs::write(p, out).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

pub(crate) fn serve(a: ServeArgs) -> Result<()> {
    pedloc_service::run(pedloc_service::ServiceConfig {
        port: a.port,
        frames: a.frames,
        patches: a.patches,
        checkpoint: a.checkpoint,
        ui_dir: a.ui,
    })?;
    Ok(())
}

pub(crate) fn seed_library(a: SeedLibraryArgs) -> Result<()> {
    let cfg = SynthConfig::with_grid(a.grid, 0.5);
    fs::create_dir_all(&a.out)?;
    let mut lib = PatchLibrary::open_or_create(&a.out)?;
    let counts = LibraryCounts {
        pedestrians: a.pedestrians,
        objects: a.objects,
        artifacts: a.artifacts,
    };
    fill_library(&mut lib, counts, a.seed, cfg.native_pitch(), cfg.floor_depth)?;
    println!("library {} now holds {} patches", a.out.display(), lib.len());
    Ok(())
}
