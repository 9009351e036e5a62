use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use poolnet::checkpoint::Checkpoint;
use poolnet::data::{load_image, save_map, synth_dataset, DatasetManifest, Sample, SampleKind, PAD_MULTIPLE};
use poolnet::infer::{map_pair, predict};
use poolnet::metrics::{evaluate, MetricsRecord};
use poolnet::model::{AblationRow, PoolNet};
use poolnet::train::{write_log_rows, Trainer, LOG_HEADER};
use poolnet::{par, Error, Result, Tensor};

use crate::config::{required, RunConfig};

pub const THREADS_ENV: &str = "POOLNET_THREADS";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Data { .. } | Error::Io { .. } | Error::Checkpoint(_) => 3,
        Error::Numeric(_) => 4,
        _ => 1,
    }
}

pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        par::init_global_threads(n);
    }
    Ok(())
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn load_set(path: &Path, kind: SampleKind) -> Result<Vec<Sample>> {
    let samples = DatasetManifest::read(path, kind)?.load_all()?;
    if samples.is_empty() {
        return Err(Error::data(path, "manifest has no entries"));
    }
    Ok(samples)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "map".into())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let sal_path = required(&cfg.paths.saliency_manifest, "saliency_manifest")?;
    let out = required(&cfg.paths.output_dir, "output_dir")?;
    if cfg.train.joint_edge && !cfg.model.enable_edge {
        return Err(Error::Config("joint_edge requires enable_edge = true".into()));
    }
    let edge_path = if cfg.train.joint_edge { Some(required(&cfg.paths.edge_manifest, "edge_manifest")?) } else { None };

    let sal = load_set(sal_path, SampleKind::Saliency)?;
    let edge = match edge_path {
        Some(p) => load_set(p, SampleKind::Edge)?,
        None => Vec::new(),
    };
    let model = PoolNet::<f32>::new(&cfg.model, cfg.train.seed)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    if let Some(r) = &cfg.paths.resume {
        trainer.resume(&Checkpoint::load(r)?)?;
    }

    io(out, fs::create_dir_all(out))?;
    let cfg_path = out.join("config.txt");
    io(&cfg_path, fs::write(&cfg_path, cfg.to_text()))?;
    let log_path = out.join("train_log.csv");
    let fresh = cfg.paths.resume.is_none() || !log_path.exists();
    let file = io(&log_path, OpenOptions::new().create(true).append(!fresh).write(true).truncate(fresh).open(&log_path))?;
    let mut log = BufWriter::new(file);
    if fresh {
        io(&log_path, writeln!(log, "{LOG_HEADER}"))?;
    }

    eprintln!(
        "training {} parameters on {} saliency / {} edge samples, epochs {}..{}",
        trainer.model.parameter_count(),
        sal.len(),
        edge.len(),
        trainer.epoch,
        cfg.train.epochs
    );
    while trainer.epoch < cfg.train.epochs {
        let summary = trainer.train_epoch(&sal, &edge)?;
        io(&log_path, write_log_rows(&mut log, &summary.records).and_then(|_| log.flush()))?;
        let ck = out.join(format!("epoch_{:03}.ckpt", summary.epoch + 1));
        trainer.to_checkpoint().save(&ck)?;
        let edge_loss = summary.mean_loss(poolnet::model::StepKind::Edge);
        eprintln!(
            "epoch {} step {} saliency loss {:.5}{}",
            summary.epoch + 1,
            trainer.step_count(),
            summary.mean_loss(poolnet::model::StepKind::Saliency).unwrap_or(f64::NAN),
            edge_loss.map(|l| format!(" edge loss {l:.5}")).unwrap_or_default()
        );
    }
    let final_path = out.join("final.ckpt");
    trainer.to_checkpoint().save(&final_path)?;
    println!("{}", final_path.display());
    Ok(())
}

pub fn infer(cfg: &RunConfig) -> Result<()> {
    let ck = required(&cfg.paths.checkpoint, "checkpoint")?;
    let manifest_path = required(&cfg.paths.eval_manifest, "eval_manifest")?;
    let out = required(&cfg.paths.output_dir, "output_dir")?;
    let model = PoolNet::<f32>::load(&cfg.model, ck)?;
    let manifest = DatasetManifest::read(manifest_path, SampleKind::Saliency)?;
    manifest.check_files()?;

    io(out, fs::create_dir_all(out))?;
    for (i, entry) in manifest.entries.iter().enumerate() {
        let sample = manifest.load_sample(i)?;
        let p = predict(&model, &sample)?;
        let name = stem(&entry.image);
        save_map(&p.saliency, &out.join(format!("{name}.pgm")))?;
        for (k, e) in p.edges.iter().flatten().enumerate() {
            save_map(e, &out.join(format!("{name}_edge{}.pgm", k + 2)))?;
        }
    }
    eprintln!("wrote {} maps to {}", manifest.len(), out.display());
    Ok(())
}

fn single_channel(path: &Path) -> Result<Vec<f64>> {
    let t = load_image(path)?;
    if t.channels() != 1 {
        return Err(Error::data(path, "expected a single-channel PGM"));
    }
    Ok(t.to_f64_vec())
}

fn write_or_print(output: Option<&Path>, write: impl Fn(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match output {
        Some(p) => {
            let mut f = BufWriter::new(io(p, File::create(p))?);
            io(p, write(&mut f).and_then(|_| f.flush()))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            io(Path::new("<stdout>"), write(&mut lock))
        }
    }
}

pub fn eval(pred_dir: &Path, manifest_path: &Path, output: Option<&Path>) -> Result<()> {
    let manifest = DatasetManifest::read(manifest_path, SampleKind::Saliency)?;
    manifest.check_files()?;
    if manifest.is_empty() {
        return Err(Error::data(manifest_path, "manifest has no entries"));
    }
    let mut pairs = Vec::with_capacity(manifest.len());
    for (i, entry) in manifest.entries.iter().enumerate() {
        let gt_path = manifest.gt_path(i);
        let pred_path = pred_dir.join(format!("{}.pgm", stem(&entry.image)));
        if !pred_path.exists() {
            return Err(Error::data(&pred_path, "prediction not found"));
        }
        let gt = single_channel(&gt_path)?;
        let pred = single_channel(&pred_path)?;
        let (gs, ps) = (load_image(&gt_path)?.shape(), load_image(&pred_path)?.shape());
        if gs != ps {
            return Err(Error::data(&pred_path, format!("size {:?} differs from ground truth {:?}", &ps[2..], &gs[2..])));
        }
        pairs.push((pred, gt));
    }
    let refs: Vec<(&[f64], &[f64])> = pairs.iter().map(|(s, g)| (s.as_slice(), g.as_slice())).collect();
    let record = evaluate(&refs)?;
    report(&record, &manifest);
    write_or_print(output, |w| record.write_csv(w))
}

fn report(record: &MetricsRecord, manifest: &DatasetManifest) {
    eprintln!("MaxF {:.4}  MAE {:.4}  ({} images)", record.max_f, record.mae, manifest.len());
    for &i in &record.curve.empty_gt {
        eprintln!("warning: {} has empty ground truth; excluded from recall", manifest.gt_path(i).display());
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

pub fn ablate(cfg: &RunConfig, seeds: u64, output: Option<&Path>) -> Result<()> {
    if seeds == 0 {
        return Err(Error::Config("--seeds must be >= 1".into()));
    }
    if cfg.train.joint_edge {
        return Err(Error::Config("ablate trains saliency only; unset joint_edge".into()));
    }
    let train_path = required(&cfg.paths.saliency_manifest, "saliency_manifest")?;
    let eval_path: PathBuf = cfg.paths.eval_manifest.clone().unwrap_or_else(|| train_path.to_owned());
    let train_set = load_set(train_path, SampleKind::Saliency)?;
    let eval_set = load_set(&eval_path, SampleKind::Saliency)?;
    for row in AblationRow::ALL {
        PoolNet::<f32>::new(&cfg.model.clone().with_row(row), 0)?;
    }

    let mut rows = Vec::new();
    for row in AblationRow::ALL {
        let model_cfg = cfg.model.clone().with_row(row);
        let mut max_fs = Vec::new();
        let mut maes = Vec::new();
        for s in 0..seeds {
            let mut tc = cfg.train.clone();
            tc.seed = cfg.train.seed + s;
            let mut t = Trainer::new(PoolNet::<f32>::new(&model_cfg, tc.seed)?, tc)?;
            while t.epoch < cfg.train.epochs {
                t.train_epoch(&train_set, &[])?;
            }
            let pairs = eval_set.iter().map(|s| map_pair(&t.model, s)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<(&[f64], &[f64])> = pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
            let m = evaluate(&refs)?;
            eprintln!("row {} ({}) seed {}: MaxF {:.4} MAE {:.4}", row.number(), row, cfg.train.seed + s, m.max_f, m.mae);
            max_fs.push(m.max_f);
            maes.push(m.mae);
        }
        rows.push((row, median(&max_fs), median(&maes), max_fs));
    }
    write_or_print(output, |w| {
        writeln!(w, "row,name,ppm,ggfs,fams,max_f,mae,max_f_by_seed")?;
        for (row, f, m, all) in &rows {
            let (p, g, a) = row.switches();
            let seeds: Vec<String> = all.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "{},{},{p},{g},{a},{f:.6},{m:.6},{}", row.number(), row, seeds.join(";"))?;
        }
        Ok(())
    })
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn bench(cfg: &RunConfig, (width, height): (usize, usize), iters: usize, warmup: usize) -> Result<()> {
    if iters == 0 || width == 0 || height == 0 {
        return Err(Error::Config("bench needs iters, width and height >= 1".into()));
    }
    let model = match &cfg.paths.checkpoint {
        Some(ck) => PoolNet::<f32>::load(&cfg.model, ck)?,
        None => PoolNet::<f32>::new(&cfg.model, cfg.train.seed)?,
    };
    let image = Tensor::from_fn([1, 3, height, width], |i| ((i * 2654435761) % 1000) as f32 / 1000.0);
    let sample = Sample::new(image, Tensor::zeros([1, 1, height, width]))?.pad_to_multiple(PAD_MULTIPLE);
    let x = sample.image.detach();
    for _ in 0..warmup {
        model.forward(&x)?;
    }
    let mut ms: Vec<f64> = (0..iters)
        .map(|_| {
            let t = Instant::now();
            model.forward(&x).map(|_| t.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_>>()?;
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    ms.sort_by(f64::total_cmp);
    println!(
        "input {width}x{height} (padded {}x{}), {} threads, {iters} iters after {warmup} warm-up",
        x.width(),
        x.height(),
        par::current_threads()
    );
    println!(
        "mean {mean:.2} ms  p50 {:.2} ms  p95 {:.2} ms  ({:.1} FPS)",
        percentile(&ms, 0.5),
        percentile(&ms, 0.95),
        1e3 / mean
    );
    Ok(())
}

pub fn synth(kind: SampleKind, count: usize, size: usize, seed: u64, out: &Path) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("--count must be >= 1".into()));
    }
    let m = synth_dataset(out, kind, count, size, seed)?;
    println!("{}", out.join(poolnet::data::MANIFEST_FILE).display());
    eprintln!("wrote {} {kind} samples of {size}x{size}", m.len());
    Ok(())
}
