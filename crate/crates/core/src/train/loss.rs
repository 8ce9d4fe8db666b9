use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diff::{Csr, Real, Tape, Var};
use crate::mesh::CurvatureStencil;
use crate::{Error, Result};

fn same_shape<T: Real>(tape: &Tape<T>, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::Dimension(format!(
            "{what}: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

/// Watermark reconstruction: `mean((w_in - w_ext)²)`.
pub fn loss_w<T: Real>(tape: &mut Tape<T>, w_in: Var, w_ext: Var) -> Result<Var> {
    same_shape(tape, w_in, w_ext, "watermark loss")?;
    let d = tape.sub(w_ext, w_in)?;
    let sq = tape.square(d)?;
    Ok(tape.mean_all(sq)?)
}

/// Mean squared vertex displacement per mesh, averaged over the batch.
/// `pool` is the per-mesh averaging matrix of the stacked rows.
pub fn loss_m<T: Real>(tape: &mut Tape<T>, v_in: Var, v_wm: Var, pool: &Arc<Csr<T>>) -> Result<Var> {
    same_shape(tape, v_in, v_wm, "displacement loss")?;
    let d = tape.sub(v_wm, v_in)?;
    let sq = tape.square(d)?;
    let per_vertex = tape.sum(sq, 1)?;
    let per_mesh = tape.sparse_matmul(pool.clone(), per_vertex)?;
    Ok(tape.mean_all(per_mesh)?)
}

/// Mean squared curvature change; normals of `v_wm` are recomputed on the tape.
pub fn loss_cur<T: Real>(
    tape: &mut Tape<T>,
    stencil: &CurvatureStencil,
    v_in: Var,
    v_wm: Var,
    pool: &Arc<Csr<T>>,
) -> Result<Var> {
    same_shape(tape, v_in, v_wm, "curvature loss")?;
    // the reference side goes through the same routine so identical inputs give exactly 0
    let cur_in = {
        let value = tape.value(v_in).clone();
        let c = tape.constant(value);
        stencil.curvature(tape, c)?
    };
    let cur_wm = stencil.curvature(tape, v_wm)?;
    let d = tape.sub(cur_wm, cur_in)?;
    let sq = tape.square(d)?;
    let per_mesh = tape.sparse_matmul(pool.clone(), sq)?;
    Ok(tape.mean_all(per_mesh)?)
}

/// Weights of the combined objective `λ1·l_w + λ2·l_cur + λ3·l_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w: f64,
    pub cur: f64,
    pub m: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w: 1.0, cur: 1.0, m: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_w", self.w), ("lambda_cur", self.cur), ("lambda_m", self.m)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be a non-negative number")));
            }
        }
        Ok(())
    }

    pub fn total(&self, l_w: f64, l_cur: f64, l_m: f64) -> f64 {
        self.w * l_w + self.cur * l_cur + self.m * l_m
    }

    pub fn total_tape<T: Real>(&self, tape: &mut Tape<T>, l_w: Var, l_cur: Var, l_m: Var) -> Result<Var> {
        let a = tape.scale(l_w, T::of(self.w))?;
        let b = tape.scale(l_cur, T::of(self.cur))?;
        let c = tape.scale(l_m, T::of(self.m))?;
        let ab = tape.add(a, b)?;
        Ok(tape.add(ab, c)?)
    }
}
