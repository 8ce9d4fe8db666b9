use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use meshmark::attacks::{self, AttackInstance, AttackKind};
use meshmark::graph::MeshGraph;
use meshmark::mesh::write_obj;
use meshmark::metrics::DistortionReport;
use meshmark::synth::{generate_one, SynthSpec};
use meshmark::train::{
    default_grid, evaluate, log_csv, sweep_csv, train_with, Checkpoint, LogRow, Precision, TrainConfig,
};
use meshmark::watermark::{decode_bits, Watermark};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{read_dataset, read_mesh, read_normalized, sha256_hex, with_suffix, write};
use crate::{AttackArgs, Axis, EmbedArgs, ExtractArgs, MetricsArgs, PrecisionArg, SweepArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "checkpoint.mmk";
pub const LOG_FILE: &str = "train_log.csv";
pub const RUN_FILE: &str = "run.json";

#[derive(Serialize)]
struct SynthManifest<'a> {
    spec: &'a SynthSpec,
    files: Vec<String>,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        level: a.level,
        count: a.count,
        amplitude: a.amplitude,
        frequency: a.frequency,
        seed: a.seed,
    };
    spec.validate()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let width = a.count.saturating_sub(1).to_string().len().max(4);
    let mut files = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let name = format!("mesh_{i:0width$}.obj");
        write(&a.out.join(&name), write_obj(&generate_one(&spec, i)?))?;
        files.push(name);
    }
    let manifest = SynthManifest { spec: &spec, files };
    write(&a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} meshes to {}", a.count, a.out.display());
    Ok(())
}

/// Contents of a `--config` file: training settings plus optional paths.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    #[serde(flatten)]
    train: TrainConfig,
}

fn read_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let toml = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("toml"));
    let parsed = if toml {
        toml::from_str(&text).map_err(|e| anyhow!("{}", e.message()))
    } else {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a TrainConfig,
    meshes: usize,
    final_epoch: Option<&'a LogRow>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => read_run_config(p)?,
        None => RunConfig::default(),
    };
    let c = &mut run.train;
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = a.bits {
        c.model.bits = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.lambda_w {
        c.weights.w = v;
    }
    if let Some(v) = a.lambda_cur {
        c.weights.cur = v;
    }
    if let Some(v) = a.lambda_m {
        c.weights.m = v;
    }
    if let Some(p) = a.precision {
        c.precision = match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    c.ablations.no_attack_layers |= a.no_attack_layers;
    c.ablations.no_degree_norm |= a.no_degree_norm;
    c.ablations.no_batch_norm |= a.no_batch_norm;
    c.ablations.no_curvature_loss |= a.no_curvature_loss;
    c.validate()?;

    let data_dir = a.data.or(run.data).ok_or_else(|| anyhow!("no dataset: pass --data or set `data` in the config"))?;
    let out = a.out.or(run.out).ok_or_else(|| anyhow!("no output directory: pass --out or set `out` in the config"))?;
    let dataset = read_dataset(&data_dir)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let config = run.train;
    let quiet = a.quiet;
    let progress = |row: &LogRow| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  total {:.6}  l_w {:.6}  l_m {:.3e}  l_cur {:.3e}  bit_acc {:.2}",
                row.epoch, row.total, row.l_w, row.l_m, row.l_cur, row.bit_acc
            );
        }
    };
    let (ckpt, log) = match config.precision {
        Precision::F32 => {
            let r = train_with::<f32>(&config, &dataset, progress)?;
            (Checkpoint::of_run(&r), r.log)
        }
        Precision::F64 => {
            let r = train_with::<f64>(&config, &dataset, progress)?;
            (Checkpoint::of_run(&r), r.log)
        }
    };
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    write(&out.join(LOG_FILE), log_csv(&log))?;
    let record = RunRecord {
        config: &config,
        meshes: dataset.len(),
        final_epoch: log.last(),
    };
    write(&out.join(RUN_FILE), serde_json::to_string_pretty(&record)?)?;
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

#[derive(Serialize, Deserialize)]
pub struct Sidecar {
    pub bits: String,
    pub length: usize,
    pub checkpoint_sha256: String,
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = &ckpt.model;
    let bits = model.bits();
    let w = match (&a.bits, a.seed) {
        (Some(hex), _) => Watermark::from_hex(hex, bits)?,
        (None, Some(seed)) => Watermark::random(bits, &mut ChaCha8Rng::seed_from_u64(seed)),
        (None, None) => bail!("pass --bits or --random --seed"),
    };
    let (mesh, frame) = read_normalized(&a.input)?;
    let marked = model.embed(&mesh, &MeshGraph::new(&mesh), &w)?;
    write(&a.output, write_obj(&frame.denormalize(&marked)))?;
    let sidecar = Sidecar {
        bits: w.to_hex(),
        length: bits,
        checkpoint_sha256: sha256_hex(&a.checkpoint)?,
    };
    let sidecar_path = a.sidecar.unwrap_or_else(|| with_suffix(&a.output, ".json"));
    write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    println!("{}", w.to_hex());
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct ExtractReport {
    pub bits: String,
    pub length: usize,
    /// Raw extractor outputs; bit k is set when entry k exceeds 0.5.
    pub confidences: Vec<f64>,
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let (mesh, _) = read_normalized(&a.input)?;
    let raw = ckpt.model.extract(&mesh, &MeshGraph::new(&mesh))?;
    let w = decode_bits(&raw)?;
    if let Some(path) = &a.report {
        let report = ExtractReport {
            bits: w.to_hex(),
            length: w.len(),
            confidences: raw,
        };
        write(path, serde_json::to_string_pretty(&report)?)?;
    }
    println!("{}", w.to_hex());
    Ok(())
}

fn attack_instance(a: &AttackArgs) -> Result<AttackInstance> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| anyhow!("{} attack needs --{flag}", a.kind));
    let inst = match AttackKind::parse(&a.kind)? {
        AttackKind::Identity => AttackInstance::Identity,
        AttackKind::Rotation => {
            let t = need(a.theta, "theta")?;
            let degrees = match a.axis {
                Axis::X => [t, 0.0, 0.0],
                Axis::Y => [0.0, t, 0.0],
                Axis::Z => [0.0, 0.0, t],
                Axis::All => [t; 3],
            };
            AttackInstance::Rotation { degrees }
        }
        AttackKind::Noise => AttackInstance::Noise { sigma: need(a.sigma, "sigma")? },
        AttackKind::Smoothing => AttackInstance::Smoothing { alpha: need(a.alpha, "alpha")? },
        AttackKind::Cropping => AttackInstance::Cropping { beta: need(a.beta, "beta")? },
    };
    inst.validate()?;
    Ok(inst)
}

/// Attacks act in the unit-cube frame of the input; the result is mapped back.
pub fn attack(a: AttackArgs) -> Result<()> {
    let inst = attack_instance(&a)?;
    let (mesh, frame) = read_normalized(&a.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let out = attacks::apply(&mesh, &MeshGraph::new(&mesh), &inst, &mut rng)?;
    write(&a.output, write_obj(&frame.denormalize(&out.mesh)))?;
    println!("{} vertices, {} faces", out.mesh.vertex_count(), out.mesh.face_count());
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let dataset = read_dataset(&a.data)?;
    let overrides = [
        (AttackKind::Rotation, &a.rotation),
        (AttackKind::Noise, &a.noise),
        (AttackKind::Smoothing, &a.smoothing),
        (AttackKind::Cropping, &a.cropping),
    ];
    let mut grid = Vec::new();
    for (kind, values) in overrides {
        match values {
            Some(vs) => grid.extend(vs.iter().map(|&v| (kind, v))),
            None => grid.extend(default_grid().into_iter().filter(|(k, _)| *k == kind)),
        }
    }
    let rows = evaluate(&ckpt.model, &dataset, &grid, a.seed)?;
    let csv = sweep_csv(&rows);
    match &a.out {
        Some(p) => write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct MetricsReport {
    pub hd: f64,
    pub mrms: f64,
    pub l_cur: f64,
    pub vertices: usize,
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let reference = read_mesh(&a.reference)?;
    let other = read_mesh(&a.other)?;
    let report = DistortionReport::between(&reference, &other)?;
    let summary = MetricsReport {
        hd: report.hd,
        mrms: report.mrms,
        l_cur: report.l_cur,
        vertices: reference.vertex_count(),
    };
    if let Some(p) = &a.per_vertex {
        let mut csv = String::from("vertex,displacement\n");
        for (i, d) in report.displacement.iter().enumerate() {
            csv.push_str(&format!("{i},{d}\n"));
        }
        write(p, csv)?;
    }
    let json = serde_json::to_string_pretty(&summary)?;
    match &a.out {
        Some(p) => write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}
