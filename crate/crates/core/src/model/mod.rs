//! The watermarking network: embedder, extractor and the end-to-end pass
//! embed → attack → extract with its three losses on one tape.


use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_tape, AttackInstance};
use crate::diff::{Real, Tensor, Var};
use crate::graph::{MeshGraph, Topology};
use crate::mesh::{Mesh, Point};
use crate::nn::{residual_stack, Encoder, GraphConv, Mlp2, Mode, ParamStore, ResidualBlock, Session};
use crate::watermark::Watermark;
use crate::{Error, Result};

/// How the output branch produces watermarked coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    /// `V_wm = V_in + Δ`.
    Residual,
    /// `V_wm` is the branch output itself.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Watermark length `L`.
    pub bits: usize,
    /// Feature width of the residual blocks.
    pub width: usize,
    /// Width of the latent watermark code.
    pub code_width: usize,
    /// Hidden width of the extractor head.
    pub hidden: usize,
    /// Share the feature module between embedder and extractor.
    pub tied: bool,
    pub output: OutputMode,
    /// Start the output convolution at zero so training begins from `V_wm = V_in`
    /// (residual mode); otherwise it gets the same uniform init as every other layer.
    pub zero_init_output: bool,
    pub degree_norm: bool,
    pub batch_norm: bool,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            bits: 64,
            width: 64,
            code_width: 64,
            hidden: 128,
            tied: true,
            output: OutputMode::Residual,
            zero_init_output: true,
            degree_norm: true,
            batch_norm: true,
            seed: 0,
        }
    }
}

const FEATURE_BLOCKS: usize = 5;
const AGGREGATION_BLOCKS: usize = 2;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bits", self.bits),
            ("width", self.width),
            ("code_width", self.code_width),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Parameters and layer layout of the network.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub feature: Vec<ResidualBlock>,
    /// Same ids as `feature` when tied.
    pub feature_ext: Vec<ResidualBlock>,
    pub encoder: Encoder,
    pub aggregation: Vec<ResidualBlock>,
    pub output: GraphConv,
    pub head: Mlp2,
}

impl<T: Real> Model<T> {
    /// Fresh parameters from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let c = &config;
        let feature_module = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str| {
            (0..FEATURE_BLOCKS)
                .map(|k| {
                    let input = if k == 0 { 3 } else { c.width };
                    ResidualBlock::new(store, &format!("{prefix}.{k}"), input, c.width, c.batch_norm, rng)
                })
                .collect::<Vec<_>>()
        };
        let feature = feature_module(&mut store, &mut rng, "feature");
        let encoder = Encoder::new(&mut store, "encoder", c.bits, c.code_width, &mut rng);
        let aggregation = (0..AGGREGATION_BLOCKS)
            .map(|k| {
                let input = if k == 0 { 3 + c.width + c.code_width } else { c.width };
                ResidualBlock::new(&mut store, &format!("aggregation.{k}"), input, c.width, c.batch_norm, &mut rng)
            })
            .collect();
        let output = GraphConv::new(&mut store, "output", c.width, 3, &mut rng);
        if c.zero_init_output {
            for id in [output.w0, output.w1] {
                *store.value_mut(id) = Tensor::zeros(&[c.width, 3]);
            }
        }
        let head = Mlp2::new(&mut store, "head", c.width, c.hidden, c.bits, &mut rng);
        let feature_ext = if c.tied {
            feature.clone()
        } else {
            feature_module(&mut store, &mut rng, "feature_ext")
        };
        Ok(Self {
            config,
            store,
            feature,
            feature_ext,
            encoder,
            aggregation,
            output,
            head,
        })
    }

    /// Layout from `config` with values taken by name from `store`.
    pub fn with_store(config: ModelConfig, store: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config)?;
        if store.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} entries, found {}",
                model.store.len(),
                store.len()
            )));
        }
        for id in store.ids() {
            let name = store.name(id);
            let target = model
                .store
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected entry {name}")))?;
            model
                .store
                .set(target, store.value(id).clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            feature: self.feature.clone(),
            feature_ext: self.feature_ext.clone(),
            encoder: self.encoder.clone(),
            aggregation: self.aggregation.clone(),
            output: self.output.clone(),
            head: self.head.clone(),
        }
    }

    pub fn bits(&self) -> usize {
        self.config.bits
    }

    pub fn topology(&self, graphs: &[&MeshGraph]) -> Result<Topology<T>> {
        Topology::stack(graphs, self.config.degree_norm)
    }

    /// Watermarked positions `ΣN×3` for stacked vertices `v` and one `B×L` watermark row per mesh.
    pub fn embed_tape(&self, s: &mut Session<'_, T>, v: Var, w: Var, topo: &Topology<T>) -> Result<Var> {
        let f = residual_stack(s, &self.feature, v, &topo.agg)?;
        let z = self.encoder.encode(s, w)?;
        let code = s.tape.gather_rows(z, topo.owner.clone())?;
        let h = s.tape.concat(&[v, f, code], 1)?;
        let h = residual_stack(s, &self.aggregation, h, &topo.agg)?;
        let out = self.output.forward(s, h, &topo.agg)?;
        Ok(match self.config.output {
            OutputMode::Residual => s.tape.add(v, out)?,
            OutputMode::Literal => out,
        })
    }

    /// Extractor outputs `B×L` for stacked (possibly attacked) vertices.
    pub fn extract_tape(&self, s: &mut Session<'_, T>, v: Var, topo: &Topology<T>) -> Result<Var> {
        let f = residual_stack(s, &self.feature_ext, v, &topo.agg)?;
        let pooled = s.tape.sparse_matmul(topo.pool.clone(), f)?;
        self.head.forward(s, pooled)
    }

    /// Embeds `w` into a normalized mesh (inference statistics).
    pub fn embed(&self, mesh: &Mesh, graph: &MeshGraph, w: &Watermark) -> Result<Mesh> {
        if !mesh.is_normalized() {
            return Err(Error::Config("embedding requires a unit-cube normalized mesh".into()));
        }
        self.check_bits(w)?;
        let topo = self.topology(&[graph])?;
        let mut s = Session::new(&self.store, Mode::Infer);
        let v = s.tape.constant(coords(mesh)?);
        let wv = s.tape.constant(bits_row(&[w]));
        let out = self.embed_tape(&mut s, v, wv, &topo)?;
        // offsets are added in f64 so a zero offset reproduces the input exactly
        let delta = s.tape.sub(out, v)?;
        let delta = s.tape.value(delta);
        let points = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = delta.row(i);
                match self.config.output {
                    OutputMode::Residual => [p[0] + d[0].f64(), p[1] + d[1].f64(), p[2] + d[2].f64()],
                    OutputMode::Literal => {
                        let o = s.tape.value(out).row(i);
                        [o[0].f64(), o[1].f64(), o[2].f64()]
                    }
                }
            })
            .collect();
        Ok(mesh.with_vertices(points)?)
    }

    /// Raw extractor outputs for one mesh.
    pub fn extract(&self, mesh: &Mesh, graph: &MeshGraph) -> Result<Vec<f64>> {
        if mesh.vertex_count() == 0 {
            return Err(Error::Dimension("cannot extract from an empty mesh".into()));
        }
        let topo = self.topology(&[graph])?;
        let mut s = Session::new(&self.store, Mode::Infer);
        let v = s.tape.constant(coords(mesh)?);
        let out = self.extract_tape(&mut s, v, &topo)?;
        Ok(s.tape.value(out).data().iter().map(|x| x.f64()).collect())
    }

    fn check_bits(&self, w: &Watermark) -> Result<()> {
        if w.len() != self.bits() {
            return Err(Error::Config(format!(
                "watermark has {} bits, model expects {}",
                w.len(),
                self.bits()
            )));
        }
        Ok(())
    }
}

/// `N×3` tensor of mesh coordinates.
pub fn coords<T: Real>(mesh: &Mesh) -> Result<Tensor<T>> {
    Ok(Tensor::matrix(
        mesh.vertex_count(),
        3,
        mesh.flat_coords().into_iter().map(T::of).collect(),
    )?)
}

/// `B×L` matrix of watermark bits as reals.
pub fn bits_row<T: Real>(ws: &[&Watermark]) -> Tensor<T> {
    let l = ws.first().map_or(0, |w| w.len());
    let data = ws.iter().flat_map(|w| w.as_reals()).map(T::of).collect();
    Tensor::matrix(ws.len(), l, data).expect("equal watermark lengths")
}

fn points_of<T: Real>(t: &Tensor<T>) -> Vec<Point> {
    t.data().chunks(3).map(|c| [c[0].f64(), c[1].f64(), c[2].f64()]).collect()
}

/// Tape handles of one end-to-end pass over a batch.
pub struct Pass {
    pub v_in: Var,
    pub v_wm: Var,
    pub v_att: Var,
    pub w_in: Var,
    pub w_ext: Var,
    pub l_w: Var,
    pub l_m: Var,
    pub l_cur: Var,
    /// Connectivity of each attacked mesh (differs from the input only under cropping).
    pub attacked: Vec<MeshGraph>,
    /// Retained input indices per mesh, when cropped.
    pub kept: Vec<Option<Vec<usize>>>,
}

/// Embed → attack → extract with all losses, for a batch of meshes.
///
/// `attacks[b]` is applied to mesh `b`; noise draws come from `rng` in mesh order.
pub fn forward_batch<T: Real>(
    model: &Model<T>,
    s: &mut Session<'_, T>,
    meshes: &[&Mesh],
    graphs: &[&MeshGraph],
    watermarks: &[&Watermark],
    attacks: &[AttackInstance],
    rng: &mut impl Rng,
) -> Result<Pass> {
    let b = meshes.len();
    if graphs.len() != b || watermarks.len() != b || attacks.len() != b {
        return Err(Error::Dimension("batch components differ in length".into()));
    }
    for w in watermarks {
        model.check_bits(w)?;
    }
    let topo = model.topology(graphs)?;
    let stacked: Vec<f64> = meshes.iter().flat_map(|m| m.flat_coords()).collect();
    let v_in = s.tape.constant(Tensor::matrix(topo.rows(), 3, stacked.into_iter().map(T::of).collect())?);
    let w_in = s.tape.constant(bits_row(watermarks));
    let v_wm = model.embed_tape(s, v_in, w_in, &topo)?;

    let mut parts = Vec::with_capacity(b);
    let mut attacked = Vec::with_capacity(b);
    let mut kept = Vec::with_capacity(b);
    for (k, attack) in attacks.iter().enumerate() {
        let rows = s.tape.gather_rows(v_wm, topo.segment(k))?;
        let (out, cropped) = apply_tape(&mut s.tape, rows, graphs[k], attack, rng)?;
        parts.push(out);
        match cropped {
            Some(c) => {
                attacked.push(c.graph);
                kept.push(Some(c.kept));
            }
            None => {
                attacked.push(graphs[k].clone());
                kept.push(None);
            }
        }
    }
    let v_att = if attacks.iter().all(|a| *a == AttackInstance::Identity) {
        v_wm
    } else {
        s.tape.concat(&parts, 0)?
    };
    let att_topo = if kept.iter().all(Option::is_none) {
        topo.clone()
    } else {
        model.topology(&attacked.iter().collect::<Vec<_>>())?
    };
    let w_ext = model.extract_tape(s, v_att, &att_topo)?;
    let (l_w, l_m, l_cur) = losses(s, &topo, v_in, v_wm, w_in, w_ext)?;
    Ok(Pass {
        v_in,
        v_wm,
        v_att,
        w_in,
        w_ext,
        l_w,
        l_m,
        l_cur,
        attacked,
        kept,
    })
}

fn losses<T: Real>(
    s: &mut Session<'_, T>,
    topo: &Topology<T>,
    v_in: Var,
    v_wm: Var,
    w_in: Var,
    w_ext: Var,
) -> Result<(Var, Var, Var)> {
    let l_w = crate::train::loss_w(&mut s.tape, w_in, w_ext)?;
    let l_m = crate::train::loss_m(&mut s.tape, v_in, v_wm, &topo.pool)?;
    let l_cur = crate::train::loss_cur(&mut s.tape, &topo.stencil, v_in, v_wm, &topo.pool)?;
    Ok((l_w, l_m, l_cur))
}

/// Scalar losses of one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub l_w: f64,
    pub l_m: f64,
    pub l_cur: f64,
}

/// Result of [`end_to_end`] for a single mesh.
#[derive(Clone, Debug)]
pub struct EndToEnd {
    pub watermarked: Mesh,
    pub attacked: Mesh,
    pub kept: Option<Vec<usize>>,
    pub w_ext: Vec<f64>,
    pub losses: Losses,
}

/// One mesh through embed → attack → extract.
pub fn end_to_end<T: Real>(
    model: &Model<T>,
    mesh: &Mesh,
    graph: &MeshGraph,
    w: &Watermark,
    attack: &AttackInstance,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<EndToEnd> {
    let mut s = Session::new(&model.store, mode);
    let pass = forward_batch(model, &mut s, &[mesh], &[graph], &[w], std::slice::from_ref(attack), rng)?;
    let t = &s.tape;
    let watermarked = mesh.with_vertices(points_of(t.value(pass.v_wm)))?;
    let attacked = Mesh::new(points_of(t.value(pass.v_att)), pass.attacked[0].faces.clone())?;
    Ok(EndToEnd {
        watermarked,
        attacked,
        kept: pass.kept[0].clone(),
        w_ext: t.value(pass.w_ext).data().iter().map(|x| x.f64()).collect(),
        losses: Losses {
            l_w: t.value(pass.l_w).item().f64(),
            l_m: t.value(pass.l_m).item().f64(),
            l_cur: t.value(pass.l_cur).item().f64(),
        },
    })
}
