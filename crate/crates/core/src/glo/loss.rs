use super::{concat, LatentCode, Model};
use crate::density::DensitySampleSet;
use crate::error::{Error, Result};
use crate::geom::{trilinear_weights, Aabb};

/// Raw summed losses of one scene.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossParts {
    pub scene: f64,
    pub trans: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.scene + self.trans
    }
}

/// `‖z‖² / σ_z²`
pub fn regularizer(z: &LatentCode, sigma_z: f64) -> f64 {
    z.norm_squared() / (sigma_z * sigma_z)
}

/// Samples of a set used in one evaluation; `None` means all of them.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Batch<'a> {
    pub set: &'a DensitySampleSet,
    pub subset: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn all(set: &'a DensitySampleSet) -> Self {
        Self { set, subset: None }
    }

    pub fn len(&self) -> usize {
        self.subset.map_or(self.set.len(), |s| s.len())
    }
}

/// `Σ_j (grid(x_j) − σ_j)²`, accumulating `∂/∂grid` when asked.
fn data_term(
    values: &[f64],
    dims: [usize; 3],
    bounds: &Aabb,
    batch: Batch<'_>,
    mut dgrid: Option<&mut [f64]>,
) -> f64 {
    let mut visit = |j: usize| {
        let w = trilinear_weights(dims, bounds, &batch.set.points[j]);
        let pred: f64 = w.iter().map(|&(i, a)| a * values[i]).sum();
        let r = pred - batch.set.densities[j];
        if let Some(g) = dgrid.as_deref_mut() {
            for &(i, a) in &w {
                g[i] += 2.0 * r * a;
            }
        }
        r * r
    };
    match batch.subset {
        Some(idx) => idx.iter().map(|&j| visit(j)).sum(),
        None => (0..batch.set.len()).map(visit).sum(),
    }
}

fn non_empty(set: &DensitySampleSet, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidInput(format!("{what} sample set is empty")));
    }
    Ok(())
}

/// `Σ_j ‖f^s_θ(z^s, x_j) − σ_j‖² + ‖z^s‖²/σ_z²`
pub fn loss_scene(model: &Model, z_s: &LatentCode, xs: &DensitySampleSet) -> Result<f64> {
    non_empty(xs, "scene")?;
    let grid = model.decode_scene(z_s)?;
    let data = data_term(grid.values(), grid.dims(), &model.bounds, Batch::all(xs), None);
    Ok(data + regularizer(z_s, model.sigma_z))
}

/// `Σ_j ‖f^t_φ(z^t ⊕ z^s, x_j) − σ_j‖² + ‖z^t‖²/σ_z²`
pub fn loss_trans(model: &Model, z_t: &LatentCode, z_s: &LatentCode, xt: &DensitySampleSet) -> Result<f64> {
    non_empty(xt, "transparent")?;
    let grid = model.decode_trans(z_t, z_s)?;
    let data = data_term(grid.values(), grid.dims(), &model.bounds, Batch::all(xt), None);
    Ok(data + regularizer(z_t, model.sigma_z))
}

pub fn loss_train(
    model: &Model,
    z_s: &LatentCode,
    z_t: &LatentCode,
    xs: &DensitySampleSet,
    xt: &DensitySampleSet,
) -> Result<LossParts> {
    Ok(LossParts {
        scene: loss_scene(model, z_s, xs)?,
        trans: loss_trans(model, z_t, z_s, xt)?,
    })
}

/// Gradients of the raw summed loss.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grads {
    pub scene: Option<Vec<f64>>,
    pub trans: Option<Vec<f64>>,
    pub z_s: Vec<f64>,
    pub z_t: Vec<f64>,
}

/// Loss and gradients for one scene; weight gradients only when
/// `weights` is set. An empty transparent batch contributes only its
/// regularizer.
pub(crate) fn loss_and_grad(
    model: &Model,
    z_s: &LatentCode,
    z_t: &LatentCode,
    xs: Batch<'_>,
    xt: Batch<'_>,
    weights: bool,
) -> Result<(LossParts, Grads)> {
    model.check_codes(z_s, Some(z_t))?;
    let dims = model.grid_dims();
    let inv = 1.0 / (model.sigma_z * model.sigma_z);
    let ns = model.scene_latent();

    let acts = model.scene.forward_cached(&z_s.values)?;
    let mut dgrid = vec![0.0; acts.out.len()];
    let scene = data_term(&acts.out, dims, &model.bounds, xs, Some(&mut dgrid)) + z_s.norm_squared() * inv;
    let mut dzs: Vec<f64> = z_s.values.iter().map(|v| 2.0 * v * inv).collect();
    let scene_grad = if weights {
        let mut g = vec![0.0; model.scene.num_params()];
        model.scene.backward(&z_s.values, &acts, &dgrid, &mut g, &mut dzs);
        Some(g)
    } else {
        model.scene.backward_latent(&z_s.values, &acts, &dgrid, &mut dzs);
        None
    };
    drop(acts);

    let zc = concat(z_t, z_s);
    let mut dzt: Vec<f64> = z_t.values.iter().map(|v| 2.0 * v * inv).collect();
    let mut trans = z_t.norm_squared() * inv;
    let mut trans_grad = weights.then(|| vec![0.0; model.trans.num_params()]);
    if xt.len() > 0 {
        let acts = model.trans.forward_cached(&zc)?;
        dgrid.iter_mut().for_each(|g| *g = 0.0);
        trans += data_term(&acts.out, dims, &model.bounds, xt, Some(&mut dgrid));
        let mut dzc = vec![0.0; zc.len()];
        match trans_grad.as_deref_mut() {
            Some(g) => model.trans.backward(&zc, &acts, &dgrid, g, &mut dzc),
            None => model.trans.backward_latent(&zc, &acts, &dgrid, &mut dzc),
        }
        let nt = zc.len() - ns;
        for (d, g) in dzt.iter_mut().zip(&dzc[..nt]) {
            *d += g;
        }
        for (d, g) in dzs.iter_mut().zip(&dzc[nt..]) {
            *d += g;
        }
    }
    Ok((
        LossParts { scene, trans },
        Grads {
            scene: scene_grad,
            trans: trans_grad,
            z_s: dzs,
            z_t: dzt,
        },
    ))
}
