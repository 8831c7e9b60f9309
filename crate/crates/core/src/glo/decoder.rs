//! Latent-to-voxel-grid convolutional decoder with analytic gradients.
//!
//! `z → affine → C₀×4³ → [×2 nearest upsample → 3×3×3 conv → SiLU]ⁿ →
//! 1×1×1 conv → σ_max·sigmoid`. Feature maps are channel-major with x
//! varying fastest, matching [`DensityGrid`](crate::geom::DensityGrid).

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASE_RES: usize = 4;
const TAPS: usize = 27;
// output voxels per im2col block
const BLOCK_VOXELS: usize = 4096;
/// `max_x |d/dx (x·sigmoid(x))|`
pub const SILU_LIPSCHITZ: f64 = 1.099_839_264_0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderArch {
    pub latent_dim: usize,
    /// Output nodes per axis; `4·2ⁿ`.
    pub grid: usize,
    pub widths: Vec<usize>,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvLayout {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
    /// input resolution; output is twice this
    res: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    fc_w: usize,
    fc_b: usize,
    fc_out: usize,
    convs: Vec<ConvLayout>,
    out_w: usize,
    out_b: usize,
    out_c: usize,
    total: usize,
}

impl DecoderArch {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidInput("latent size must be ≥ 1".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidInput(format!("bad channel widths {:?}", self.widths)));
        }
        if self.grid < BASE_RES || self.grid % BASE_RES != 0 || !(self.grid / BASE_RES).is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid {} must be {BASE_RES}·2ⁿ",
                self.grid
            )));
        }
        if !(self.sigma_max > 0.0 && self.sigma_max.is_finite()) {
            return Err(Error::InvalidInput("sigma_max must be positive".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        (self.grid / BASE_RES).trailing_zeros() as usize
    }

    /// Channels after the affine layer and after each stage.
    pub fn channels(&self) -> Vec<usize> {
        let w = &self.widths;
        (0..=self.stages()).map(|i| w[i.min(w.len() - 1)]).collect()
    }

    fn layout(&self) -> Layout {
        let ch = self.channels();
        let cube = BASE_RES.pow(3);
        let fc_out = ch[0] * cube;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let fc_w = take(fc_out * self.latent_dim);
        let fc_b = take(fc_out);
        let convs = (0..self.stages())
            .map(|s| {
                let (cin, cout) = (ch[s], ch[s + 1]);
                ConvLayout {
                    w: take(cout * cin * TAPS),
                    b: take(cout),
                    cin,
                    cout,
                    res: BASE_RES << s,
                }
            })
            .collect();
        let out_c = *ch.last().unwrap();
        let out_w = take(out_c);
        let out_b = take(1);
        Layout {
            fc_w,
            fc_b,
            fc_out,
            convs,
            out_w,
            out_b,
            out_c,
            total: at,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }

    pub fn num_outputs(&self) -> usize {
        self.grid.pow(3)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Intermediate values kept by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Pre-activation of the affine layer and of each conv stage.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
    pub out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    arch: DecoderArch,
    layout: Layout,
    pub params: Vec<f64>,
}

/// Fills `col` (`cin·27 × nc`) with the zero-padded 3×3×3 neighbourhoods of
/// the ×2 nearest-upsampled `input` for output planes `z0..z1`.
fn im2col(input: &[f64], cin: usize, res: usize, z0: usize, z1: usize, col: &mut [f64]) {
    let big = 2 * res;
    let plane = big * big;
    let nc = (z1 - z0) * plane;
    let cube = res * res * res;
    for ci in 0..cin {
        let src = &input[ci * cube..(ci + 1) * cube];
        for t in 0..TAPS {
            let (kx, ky, kz) = ((t % 3) as isize - 1, ((t / 3) % 3) as isize - 1, (t / 9) as isize - 1);
            let row = &mut col[(ci * TAPS + t) * nc..(ci * TAPS + t + 1) * nc];
            for z in z0..z1 {
                let zz = z as isize + kz;
                for y in 0..big {
                    let yy = y as isize + ky;
                    let dst = &mut row[(z - z0) * plane + y * big..(z - z0) * plane + (y + 1) * big];
                    if zz < 0 || zz >= big as isize || yy < 0 || yy >= big as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let base = (zz as usize / 2) * res * res + (yy as usize / 2) * res;
                    let line = &src[base..base + res];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let xx = x as isize + kx;
                        *d = if xx < 0 || xx >= big as isize {
                            0.0
                        } else {
                            line[xx as usize / 2]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `grad_input`.
fn col2im(col: &[f64], cin: usize, res: usize, z0: usize, z1: usize, grad_input: &mut [f64]) {
    let big = 2 * res;
    let plane = big * big;
    let nc = (z1 - z0) * plane;
    let cube = res * res * res;
    for ci in 0..cin {
        let dst = &mut grad_input[ci * cube..(ci + 1) * cube];
        for t in 0..TAPS {
            let (kx, ky, kz) = ((t % 3) as isize - 1, ((t / 3) % 3) as isize - 1, (t / 9) as isize - 1);
            let row = &col[(ci * TAPS + t) * nc..(ci * TAPS + t + 1) * nc];
            for z in z0..z1 {
                let zz = z as isize + kz;
                if zz < 0 || zz >= big as isize {
                    continue;
                }
                for y in 0..big {
                    let yy = y as isize + ky;
                    if yy < 0 || yy >= big as isize {
                        continue;
                    }
                    let base = (zz as usize / 2) * res * res + (yy as usize / 2) * res;
                    let src = &row[(z - z0) * plane + y * big..(z - z0) * plane + (y + 1) * big];
                    let lo = if kx < 0 { 1 } else { 0 };
                    let hi = if kx > 0 { big - 1 } else { big };
                    for x in lo..hi {
                        dst[base + (x as isize + kx) as usize / 2] += src[x];
                    }
                }
            }
        }
    }
}

fn plane_blocks(big: usize) -> impl Iterator<Item = (usize, usize)> {
    let per = (BLOCK_VOXELS / (big * big)).max(1);
    (0..big).step_by(per).map(move |z0| (z0, (z0 + per).min(big)))
}

/// `c (m×n) = alpha·a (m×k)·b (k×n) + beta·c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, cs: usize, rows: usize, cols: usize| (rows - 1) * r + (cols - 1) * cs;
    assert!(k == 0 || last(rsa, csa, m, k) < a.len());
    assert!(k == 0 || last(rsb, csb, k, n) < b.len());
    assert!(last(rsc, csc, m, n) < c.len());
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl Decoder {
    /// Weights `~ N(0, 2/fan_in)`, biases zero.
    pub fn init(arch: DecoderArch, rng: &mut impl rand::Rng) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut params = vec![0.0; layout.total];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut dyn rand::RngCore| {
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut params[range] {
                *p = d.sample(rng);
            }
        };
        fill(layout.fc_w..layout.fc_b, arch.latent_dim, rng);
        for c in &layout.convs {
            fill(c.w..c.b, c.cin * TAPS, rng);
        }
        fill(layout.out_w..layout.out_b, layout.out_c, rng);
        Ok(Self { arch, layout, params })
    }

    pub fn from_params(arch: DecoderArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if params.len() != layout.total {
            return Err(Error::Mismatch(format!(
                "decoder needs {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { arch, layout, params })
    }

    pub fn arch(&self) -> &DecoderArch {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.arch.latent_dim {
            return Err(Error::Mismatch(format!(
                "decoder expects a latent of length {}, got {}",
                self.arch.latent_dim,
                z.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(z)?.out)
    }

    pub fn forward_cached(&self, z: &[f64]) -> Result<Activations> {
        self.check_latent(z)?;
        let l = &self.layout;
        let p = &self.params;
        let dim = self.arch.latent_dim;

        let mut pre0 = p[l.fc_b..l.fc_b + l.fc_out].to_vec();
        for (m, y) in pre0.iter_mut().enumerate() {
            let row = &p[l.fc_w + m * dim..l.fc_w + (m + 1) * dim];
            *y += row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
        }
        let mut pre = vec![pre0];
        let mut act: Vec<f64> = pre[0].iter().map(|&y| silu(y)).collect();

        let mut col = Vec::new();
        for c in &l.convs {
            let big = 2 * c.res;
            let n = big * big * big;
            let k = c.cin * TAPS;
            let mut y = vec![0.0; c.cout * n];
            for (z0, z1) in plane_blocks(big) {
                let nc = (z1 - z0) * big * big;
                col.resize(k * nc, 0.0);
                im2col(&act, c.cin, c.res, z0, z1, &mut col);
                let v0 = z0 * big * big;
                gemm(
                    c.cout,
                    k,
                    nc,
                    &p[c.w..c.b],
                    (k, 1),
                    &col,
                    (nc, 1),
                    0.0,
                    &mut y[v0..],
                    (n, 1),
                );
            }
            for co in 0..c.cout {
                let b = p[c.b + co];
                y[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += b);
            }
            act = y.iter().map(|&v| silu(v)).collect();
            pre.push(y);
        }

        let n = self.arch.num_outputs();
        let mut logits = vec![p[l.out_b]; n];
        for ch in 0..l.out_c {
            let w = p[l.out_w + ch];
            for (o, a) in logits.iter_mut().zip(&act[ch * n..(ch + 1) * n]) {
                *o += w * a;
            }
        }
        let s = self.arch.sigma_max;
        let out = logits.iter().map(|&o| s * sigmoid(o)).collect();
        Ok(Activations { pre, logits, out })
    }

    /// Accumulates `∂L/∂params` into `dparams` and `∂L/∂z` into `dz`, given
    /// `dout = ∂L/∂out`.
    pub fn backward(&self, z: &[f64], acts: &Activations, dout: &[f64], dparams: &mut [f64], dz: &mut [f64]) {
        assert_eq!(dparams.len(), self.layout.total);
        self.backward_impl(z, acts, dout, Some(dparams), dz);
    }

    /// Like [`backward`](Self::backward) but only for the latent; weights
    /// gradients are never formed.
    pub fn backward_latent(&self, z: &[f64], acts: &Activations, dout: &[f64], dz: &mut [f64]) {
        self.backward_impl(z, acts, dout, None, dz);
    }

    fn backward_impl(
        &self,
        z: &[f64],
        acts: &Activations,
        dout: &[f64],
        mut dparams: Option<&mut [f64]>,
        dz: &mut [f64],
    ) {
        let l = &self.layout;
        let p = &self.params;
        let n = self.arch.num_outputs();
        assert_eq!(dout.len(), n);
        assert_eq!(dz.len(), self.arch.latent_dim);

        let s = self.arch.sigma_max;
        let dlogit: Vec<f64> = acts
            .logits
            .iter()
            .zip(dout)
            .map(|(&o, &g)| {
                let q = sigmoid(o);
                g * s * q * (1.0 - q)
            })
            .collect();
        if let Some(dp) = dparams.as_deref_mut() {
            dp[l.out_b] += dlogit.iter().sum::<f64>();
        }

        // gradient wrt the last post-activation, turned into pre-activation
        let last = acts.pre.last().unwrap();
        let mut dpre = vec![0.0; l.out_c * n];
        for ch in 0..l.out_c {
            let w = p[l.out_w + ch];
            let pre = &last[ch * n..(ch + 1) * n];
            let mut dw = 0.0;
            for ((d, &y), &g) in dpre[ch * n..(ch + 1) * n].iter_mut().zip(pre).zip(&dlogit) {
                dw += g * silu(y);
                *d = w * g * silu_grad(y);
            }
            if let Some(dp) = dparams.as_deref_mut() {
                dp[l.out_w + ch] += dw;
            }
        }

        let mut col = Vec::new();
        let mut dcol = Vec::new();
        for (si, c) in l.convs.iter().enumerate().rev() {
            let big = 2 * c.res;
            let nout = big * big * big;
            let k = c.cin * TAPS;
            let input_pre = &acts.pre[si];
            let input: Vec<f64> = input_pre.iter().map(|&y| silu(y)).collect();
            let mut dinput = vec![0.0; input.len()];
            if let Some(dp) = dparams.as_deref_mut() {
                for co in 0..c.cout {
                    dp[c.b + co] += dpre[co * nout..(co + 1) * nout].iter().sum::<f64>();
                }
            }
            for (z0, z1) in plane_blocks(big) {
                let nc = (z1 - z0) * big * big;
                let v0 = z0 * big * big;
                col.resize(k * nc, 0.0);
                dcol.resize(k * nc, 0.0);
                if let Some(dp) = dparams.as_deref_mut() {
                    im2col(&input, c.cin, c.res, z0, z1, &mut col);
                    // dW += dY · colᵀ
                    gemm(
                        c.cout,
                        nc,
                        k,
                        &dpre[v0..],
                        (nout, 1),
                        &col,
                        (1, nc),
                        1.0,
                        &mut dp[c.w..c.b],
                        (k, 1),
                    );
                }
                // dcol = Wᵀ · dY
                gemm(
                    k,
                    c.cout,
                    nc,
                    &p[c.w..c.b],
                    (1, k),
                    &dpre[v0..],
                    (nout, 1),
                    0.0,
                    &mut dcol,
                    (nc, 1),
                );
                col2im(&dcol, c.cin, c.res, z0, z1, &mut dinput);
            }
            dpre = dinput
                .iter()
                .zip(input_pre)
                .map(|(&g, &y)| g * silu_grad(y))
                .collect();
        }

        let dim = self.arch.latent_dim;
        for (m, &g) in dpre.iter().enumerate() {
            let row = l.fc_w + m * dim;
            if let Some(dp) = dparams.as_deref_mut() {
                dp[l.fc_b + m] += g;
                for j in 0..dim {
                    dp[row + j] += g * z[j];
                }
            }
            for j in 0..dim {
                dz[j] += g * p[row + j];
            }
        }
    }

    /// Upper bound on `‖Δout‖∞ / ‖Δz‖∞` from the layer ∞-norms and the
    /// activation Lipschitz constants.
    pub fn lipschitz_bound(&self) -> f64 {
        let l = &self.layout;
        let p = &self.params;
        let dim = self.arch.latent_dim;
        let row_norm = |start: usize, rows: usize, cols: usize| {
            (0..rows)
                .map(|r| p[start + r * cols..start + (r + 1) * cols].iter().map(|w| w.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let mut bound = row_norm(l.fc_w, l.fc_out, dim) * SILU_LIPSCHITZ;
        for c in &l.convs {
            bound *= row_norm(c.w, c.cout, c.cin * TAPS) * SILU_LIPSCHITZ;
        }
        bound * row_norm(l.out_w, 1, l.out_c) * self.arch.sigma_max / 4.0
    }
}
