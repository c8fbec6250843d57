use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use afromnist_core::checkpoint;
use afromnist_core::dataset::{build_dataset, write_dataset, DatasetSpec};
use afromnist_core::exemplar::load_exemplar_set;
use afromnist_core::idx::IdxDataset;
use afromnist_core::lenet::{
    evaluate, train_with, ConfusionMatrix, LeNetModel, TrainConfig, LAYER_NAMES,
};
use afromnist_core::manifest::RunManifest;
use afromnist_core::morpho::{
    class_mean_images, export_csv, measure, pearson, write_montage, MeasuredImage,
};
use afromnist_core::synthesis::DeformParams;
use afromnist_core::Error;

use crate::data::{require_split, Loaded};
use crate::{EvalArgs, GenerateArgs, InspectArgs, TrainArgs};

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn finish(w: BufWriter<File>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| e.into_error())
        .and_then(|f| f.sync_all())
        .with_context(|| format!("cannot write {}", path.display()))
}

fn write_manifest(m: &RunManifest, path: &Path) -> Result<()> {
    m.write(path).context("cannot write run manifest")
}

fn accuracy_line(cm: &ConfusionMatrix) -> String {
    format!(
        "{:.2}% ({}/{})",
        100.0 * cm.accuracy(),
        cm.trace(),
        cm.total()
    )
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let exemplars = load_exemplar_set(&a.exemplars, &a.manifest)?;
    let spec = DatasetSpec {
        train_total: a.train,
        test_total: a.test,
        deform: DeformParams {
            alpha: a.alpha,
            gamma_lo: a.gamma[0],
            gamma_hi: a.gamma[1],
            corruptions: a.corruptions.clone(),
            master_seed: a.seed,
        },
        shuffle: !a.no_shuffle,
    };
    let (train, test) = build_dataset(&exemplars, &spec)?;
    let paths = write_dataset(&a.out, &a.name, &train, &test)?;

    let mut m = RunManifest::new("generate");
    m.set("exemplars", a.exemplars.display())
        .set("exemplar_manifest", a.manifest.display());
    for e in exemplars.classes() {
        m.set(&format!("glyph.{}", e.label), &e.glyph_name);
    }
    m.set("train", a.train)
        .set("test", a.test)
        .set("alpha", a.alpha)
        .set("gamma_lo", a.gamma[0])
        .set("gamma_hi", a.gamma[1])
        .set(
            "corruptions",
            a.corruptions
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        )
        .set("seed", a.seed)
        .set("shuffle", spec.shuffle);
    for (key, p) in ["train_images", "train_labels", "test_images", "test_labels"]
        .iter()
        .zip(&paths)
    {
        m.set(key, p.display());
    }
    let manifest_path = a.out.join(format!("{}.manifest", a.name));
    write_manifest(&m, &manifest_path)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", manifest_path.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let train_set = require_split(&a.data, "train")?;
    let test_set = crate::data::load_split(&a.data, "test")?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch as usize,
        max_epochs: a.epochs as usize,
        plateau: a.plateau,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let (model, history) = train_with(&train_set.dataset, &cfg, |s| {
        eprintln!(
            "epoch {:>2}  loss {:.6}  train_acc {:.4}",
            s.epoch, s.loss, s.train_acc
        );
    })?;

    let mut w = create(&a.out)?;
    checkpoint::write_checkpoint(&model, &mut w)
        .with_context(|| format!("cannot write {}", a.out.display()))?;
    finish(w, &a.out)?;

    let history_path = a.history.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    let mut w = create(&history_path)?;
    writeln!(w, "epoch,loss,train_acc")?;
    for s in &history {
        writeln!(w, "{},{},{}", s.epoch, s.loss, s.train_acc)?;
    }
    finish(w, &history_path)?;

    let (_, train_cm) = evaluate(&model, &train_set.dataset)?;
    let test_cm = match &test_set {
        Some(t) => Some(evaluate(&model, &t.dataset)?.1),
        None => None,
    };

    let mut m = RunManifest::new("train");
    m.set("data", a.data.display())
        .set("train_images", train_set.images.display())
        .set("train_labels", train_set.labels.display())
        .set("learning_rate", cfg.learning_rate)
        .set("beta1", cfg.beta1)
        .set("beta2", cfg.beta2)
        .set("epsilon", cfg.epsilon)
        .set("batch", cfg.batch_size)
        .set("max_epochs", cfg.max_epochs)
        .set("plateau", cfg.plateau)
        .set("seed", cfg.seed)
        .set("epochs_run", history.len())
        .set("checkpoint", a.out.display())
        .set("history", history_path.display())
        .set("train_accuracy", train_cm.accuracy());
    if let (Some(t), Some(cm)) = (&test_set, &test_cm) {
        m.set("test_images", t.images.display())
            .set("test_labels", t.labels.display())
            .set("test_accuracy", cm.accuracy());
    }
    write_manifest(&m, &sidecar(&a.out))?;

    println!("parameters: {}", model.params.len());
    println!("epochs: {}", history.len());
    println!("train accuracy: {}", accuracy_line(&train_cm));
    match &test_cm {
        Some(cm) => println!("test accuracy: {}", accuracy_line(cm)),
        None => println!("test accuracy: no test split in {}", a.data.display()),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<LeNetModel> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    checkpoint::decode(&bytes).with_context(|| format!("{}", path.display()))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let Loaded {
        dataset,
        images,
        labels,
    } = require_split(&a.data, &a.split)?;
    let (_, cm) = evaluate(&model, &dataset)?;
    println!("{} accuracy: {}", a.split, accuracy_line(&cm));
    let counts = dataset.class_counts();
    for (label, (row, n)) in cm.counts.iter().zip(counts).enumerate() {
        let hits = row[label];
        let rate = if n == 0 {
            0.0
        } else {
            100.0 * hits as f64 / n as f64
        };
        println!("class {label}: {hits}/{n} ({rate:.2}%)");
    }
    if let Some(path) = &a.cm {
        let mut w = create(path)?;
        w.write_all(cm.to_csv().as_bytes())?;
        finish(w, path)?;
        let mut m = RunManifest::new("eval");
        m.set("model", a.model.display())
            .set("data", a.data.display())
            .set("split", &a.split)
            .set("images", images.display())
            .set("labels", labels.display())
            .set("accuracy", cm.accuracy())
            .set("confusion", path.display());
        write_manifest(&m, &sidecar(path))?;
    }
    Ok(())
}

fn measure_all(ds: &IdxDataset) -> (Vec<MeasuredImage>, usize) {
    let measured: Vec<Option<MeasuredImage>> = (0..ds.len())
        .into_par_iter()
        .map(|i| match measure(&ds.image(i)) {
            Ok(record) => Some(MeasuredImage {
                index: i,
                label: ds.labels()[i],
                record,
            }),
            Err(Error::NoForeground) => None,
            Err(e) => unreachable!("measuring a valid image failed: {e}"),
        })
        .collect();
    let blank = measured.iter().filter(|m| m.is_none()).count();
    (measured.into_iter().flatten().collect(), blank)
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    if a.avg.is_none() && a.morph.is_none() && a.exemplars.is_none() {
        bail!("nothing to do: pass --avg, --morph or --exemplars");
    }
    let Loaded {
        dataset,
        images,
        labels,
    } = require_split(&a.data, &a.split)?;
    if dataset.is_empty() {
        bail!("{} holds no images", images.display());
    }
    let means = class_mean_images(&dataset)?;
    let base = |cmd: &str| {
        let mut m = RunManifest::new(cmd);
        m.set("data", a.data.display())
            .set("split", &a.split)
            .set("images", images.display())
            .set("labels", labels.display());
        m
    };

    if let Some(path) = &a.avg {
        let mut w = create(path)?;
        write_montage(&means, &mut w)?;
        finish(w, path)?;
        let mut m = base("inspect");
        m.set("montage", path.display());
        write_manifest(&m, &sidecar(path))?;
        println!("wrote {}", path.display());
    }

    if let Some(path) = &a.morph {
        let (rows, blank) = measure_all(&dataset);
        if blank > 0 {
            eprintln!("skipped {blank} blank images");
        }
        let mut w = create(path)?;
        export_csv(&rows, &mut w).with_context(|| format!("cannot write {}", path.display()))?;
        finish(w, path)?;
        let mut m = base("inspect");
        m.set("morphometrics", path.display())
            .set("skipped_blank", blank);
        write_manifest(&m, &sidecar(path))?;
        println!("wrote {} ({} rows)", path.display(), rows.len());
    }

    if let (Some(dir), Some(manifest)) = (&a.exemplars, &a.manifest) {
        let set = load_exemplar_set(dir, manifest)?;
        for e in set.classes() {
            let r = pearson(&means[e.label as usize], &e.image);
            println!("class {} ({}): pearson {:.4}", e.label, e.glyph_name, r);
        }
    }
    Ok(())
}

/// Per-layer parameter arithmetic, weights then biases.
const AUDIT: [(&str, &str); 5] = [
    ("conv1", "6*1*5*5 + 6"),
    ("conv2", "16*6*5*5 + 16"),
    ("dense1", "120*256 + 120"),
    ("dense2", "84*120 + 84"),
    ("dense3", "10*84 + 10"),
];

pub fn params() -> Result<()> {
    let model = LeNetModel::zeroed();
    let counts = model.layer_counts();
    println!("{:<8} {:>7}  formula", "layer", "params");
    for ((name, count), (audit_name, formula)) in LAYER_NAMES.iter().zip(counts).zip(AUDIT) {
        debug_assert_eq!(*name, audit_name);
        println!("{name:<8} {count:>7}  {formula}");
    }
    println!("{:<8} {:>7}", "total", counts.iter().sum::<usize>());
    println!("note: dense1 is 120*256 + 120 = 30840; the figure 30804 quoted for this layer elsewhere transposes two digits.");
    Ok(())
}
