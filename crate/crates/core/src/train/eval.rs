//! Fixed-intensity robustness evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, AttackInstance, AttackKind};
use crate::diff::Real;
use crate::graph::MeshGraph;
use crate::mesh::Mesh;
use crate::metrics::{bit_accuracy, curvature_distortion, hausdorff, mrms};
use crate::model::Model;
use crate::watermark::{decode_bits, Watermark};
use crate::{Error, Result};

pub const SWEEP_HEADER: &str = "attack,intensity,bit_acc_mean,bit_acc_std,hd_mean,mrms_mean,lcur_mean";

/// Anything that can embed and blindly extract a watermark.
pub trait Watermarker {
    fn bits(&self) -> usize;
    fn embed(&self, mesh: &Mesh, graph: &MeshGraph, w: &Watermark) -> Result<Mesh>;
    fn extract(&self, mesh: &Mesh, graph: &MeshGraph) -> Result<Vec<f64>>;
}

impl<T: Real> Watermarker for Model<T> {
    fn bits(&self) -> usize {
        Model::bits(self)
    }

    fn embed(&self, mesh: &Mesh, graph: &MeshGraph, w: &Watermark) -> Result<Mesh> {
        Model::embed(self, mesh, graph, w)
    }

    fn extract(&self, mesh: &Mesh, graph: &MeshGraph) -> Result<Vec<f64>> {
        Model::extract(self, mesh, graph)
    }
}

/// One row of a sweep. Distortion columns compare the watermarked mesh with its original.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub attack: AttackKind,
    pub intensity: f64,
    pub bit_acc_mean: f64,
    pub bit_acc_std: f64,
    pub hd_mean: f64,
    pub mrms_mean: f64,
    pub lcur_mean: f64,
    /// Bit accuracy of each mesh, in dataset order.
    pub per_mesh: Vec<f64>,
}

impl EvalRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.attack.name(),
            self.intensity,
            self.bit_acc_mean,
            self.bit_acc_std,
            self.hd_mean,
            self.mrms_mean,
            self.lcur_mean
        )
    }
}

pub fn sweep_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Rotation in degrees (about every axis), noise σ, smoothing α, cropping β.
pub fn default_grid() -> Vec<(AttackKind, f64)> {
    let mut grid = Vec::new();
    grid.extend([0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0].map(|v| (AttackKind::Rotation, v)));
    grid.extend([0.0, 0.01, 0.02, 0.03, 0.04, 0.05].map(|v| (AttackKind::Noise, v)));
    grid.extend([0.0, 0.2, 0.4, 0.6, 0.8, 1.0].map(|v| (AttackKind::Smoothing, v)));
    grid.extend([0.3, 0.5, 0.7, 0.8, 0.9, 1.0].map(|v| (AttackKind::Cropping, v)));
    grid
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Watermark used for mesh `index` in evaluations seeded with `seed`.
pub fn evaluation_watermark(bits: usize, seed: u64, index: usize) -> Watermark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    Watermark::random(bits, &mut rng)
}

/// Embeds a seeded watermark in every mesh, then for each grid point attacks
/// at exactly that intensity, extracts and decodes.
pub fn evaluate(
    model: &impl Watermarker,
    dataset: &[Mesh],
    grid: &[(AttackKind, f64)],
    seed: u64,
) -> Result<Vec<EvalRow>> {
    if dataset.is_empty() {
        return Err(Error::Config("empty evaluation set".into()));
    }
    let mut marked = Vec::with_capacity(dataset.len());
    let (mut hd, mut rms, mut cur) = (Vec::new(), Vec::new(), Vec::new());
    for (i, mesh) in dataset.iter().enumerate() {
        let graph = MeshGraph::new(mesh);
        let w = evaluation_watermark(model.bits(), seed, i);
        let wm = model.embed(mesh, &graph, &w)?;
        hd.push(hausdorff(mesh, &wm)?);
        rms.push(mrms(mesh, &wm)?);
        cur.push(curvature_distortion(mesh, &wm)?);
        marked.push((wm, graph, w));
    }
    let (hd, rms, cur) = (mean_std(&hd).0, mean_std(&rms).0, mean_std(&cur).0);
    let mut rows = Vec::with_capacity(grid.len());
    for (g, &(kind, intensity)) in grid.iter().enumerate() {
        let inst = AttackInstance::at(kind, intensity)?;
        let mut per_mesh = Vec::with_capacity(dataset.len());
        for (i, (wm, graph, w)) in marked.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((g as u64 + 1) << 32) | i as u64);
            let attacked = attacks::apply(wm, graph, &inst, &mut rng)?;
            let att_graph = match attacked.kept {
                Some(_) => MeshGraph::new(&attacked.mesh),
                None => graph.clone(),
            };
            let raw = model.extract(&attacked.mesh, &att_graph)?;
            per_mesh.push(bit_accuracy(w, &decode_bits(&raw)?)?);
        }
        let (mean, std) = mean_std(&per_mesh);
        rows.push(EvalRow {
            attack: kind,
            intensity,
            bit_acc_mean: mean,
            bit_acc_std: std,
            hd_mean: hd,
            mrms_mean: rms,
            lcur_mean: cur,
            per_mesh,
        });
    }
    Ok(rows)
}
