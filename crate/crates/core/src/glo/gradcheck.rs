use super::loss::{loss_and_grad, Batch};
use super::{LatentCode, Model};
use crate::density::DensitySampleSet;
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::index;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name of the coordinate with the largest error, e.g. `trans[17]`.
    pub worst: String,
    pub checked: usize,
    pub loss: f64,
}

/// Compares analytic gradients of the summed training loss with central
/// differences of step `delta`.
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, f)` with
/// floor `f = 1e-8·(1 + |L|)`, so coordinates whose true gradient is zero
/// are judged on an absolute scale tied to the loss. When `max_coords` is
/// set, a seeded random subset of that many coordinates is checked.
pub fn grad_check(
    model: &Model,
    z_s: &LatentCode,
    z_t: &LatentCode,
    xs: &DensitySampleSet,
    xt: &DensitySampleSet,
    delta: f64,
    max_coords: Option<(usize, u64)>,
) -> Result<GradCheckReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let (bs, bt) = (Batch::all(xs), Batch::all(xt));
    let (parts, g) = loss_and_grad(model, z_s, z_t, bs, bt, true)?;
    let loss = parts.total();
    let floor = 1e-8 * (1.0 + loss.abs());
    let (gs, gt) = (g.scene.expect("weights"), g.trans.expect("weights"));

    let ns = gs.len();
    let nt = gt.len();
    let nzs = z_s.len();
    let total = ns + nt + nzs + z_t.len();
    let coords: Vec<usize> = match max_coords {
        Some((k, seed)) if k < total => {
            let mut idx = index::sample(&mut rng::substream(seed, "glo.gradcheck", 0), total, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };

    let eval = |m: &Model, zs: &LatentCode, zt: &LatentCode| -> Result<f64> {
        Ok(loss_and_grad(m, zs, zt, bs, bt, false)?.0.total())
    };
    let mut worst = (0.0f64, String::new());
    let mut m = model.clone();
    let (mut zs, mut zt) = (z_s.clone(), z_t.clone());
    for &c in &coords {
        let (name, analytic, orig) = if c < ns {
            (format!("scene[{c}]"), gs[c], m.scene.params[c])
        } else if c < ns + nt {
            let j = c - ns;
            (format!("trans[{j}]"), gt[j], m.trans.params[j])
        } else if c < ns + nt + nzs {
            let j = c - ns - nt;
            (format!("z_s[{j}]"), g.z_s[j], zs.values[j])
        } else {
            let j = c - ns - nt - nzs;
            (format!("z_t[{j}]"), g.z_t[j], zt.values[j])
        };
        set_coord(&mut m, &mut zs, &mut zt, c, ns, nt, nzs, orig + delta);
        let plus = eval(&m, &zs, &zt)?;
        set_coord(&mut m, &mut zs, &mut zt, c, ns, nt, nzs, orig - delta);
        let minus = eval(&m, &zs, &zt)?;
        set_coord(&mut m, &mut zs, &mut zt, c, ns, nt, nzs, orig);
        let numeric = (plus - minus) / (2.0 * delta);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, name);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst: worst.1,
        checked: coords.len(),
        loss,
    })
}

#[allow(clippy::too_many_arguments)]
fn set_coord(
    m: &mut Model,
    zs: &mut LatentCode,
    zt: &mut LatentCode,
    c: usize,
    ns: usize,
    nt: usize,
    nzs: usize,
    value: f64,
) {
    if c < ns {
        m.scene.params[c] = value;
    } else if c < ns + nt {
        m.trans.params[c - ns] = value;
    } else if c < ns + nt + nzs {
        zs.values[c - ns - nt] = value;
    } else {
        zt.values[c - ns - nt - nzs] = value;
    }
}
