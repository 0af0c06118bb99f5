use crate::error::{shape_err, Result};
use crate::ops::Op;
use crate::real::Real;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Output extent of a window of size `k` with stride `s` and symmetric
/// padding `p`, or `None` when the padded input is smaller than the window.
pub fn window_out(input: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let padded = input + 2 * p;
    (padded >= k).then(|| (padded - k) / s + 1)
}

struct Geom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

fn im2col<T: Real>(x: &[T], g: &Geom, cols: &mut [T]) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.cin {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        dst[oy * g.wo + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                            x[(c * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geom, dx: &mut [T]) {
    let hw_out = g.ho * g.wo;
    for c in 0..g.cin {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dx[(c * g.h + iy as usize) * g.w + ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn geometry(xs: &[usize], ws: &[usize], stride: usize, pad: usize) -> Result<Geom> {
    if xs.len() != 4 || ws.len() != 4 {
        return shape_err("conv2d", format!("expected NCHW input and OIKK kernel, got {xs:?} and {ws:?}"));
    }
    if xs[1] != ws[1] {
        return shape_err("conv2d", format!("input channels {} vs kernel channels {}", xs[1], ws[1]));
    }
    if ws[2] != ws[3] {
        return shape_err("conv2d", format!("kernel must be square, got {}x{}", ws[2], ws[3]));
    }
    let k = ws[2];
    let ho = window_out(xs[2], k, stride, pad);
    let wo = window_out(xs[3], k, stride, pad);
    match (ho, wo) {
        (Some(ho), Some(wo)) => Ok(Geom { cin: xs[1], h: xs[2], w: xs[3], k, stride, pad, ho, wo }),
        (None, _) => shape_err("conv2d", format!("height {} too small for kernel {k} with padding {pad}", xs[2])),
        (_, None) => shape_err("conv2d", format!("width {} too small for kernel {k} with padding {pad}", xs[3])),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    g: &[T],
    ix: usize,
    iw: usize,
    acc: &mut dyn FnMut(usize, Vec<T>),
) {
    let geo = geometry(x.shape(), w.shape(), stride, pad).expect("validated in forward");
    let n = x.dim(0);
    let cout = w.dim(0);
    let ckk = geo.cin * geo.k * geo.k;
    let hw_out = geo.ho * geo.wo;
    let in_sz = geo.cin * geo.h * geo.w;
    let mut dw = vec![T::zero(); w.numel()];
    let mut dx = vec![T::zero(); x.numel()];
    let mut cols = vec![T::zero(); ckk * hw_out];
    let mut dcols = vec![T::zero(); ckk * hw_out];
    for b in 0..n {
        let gb = &g[b * cout * hw_out..(b + 1) * cout * hw_out];
        im2col(&x.data()[b * in_sz..(b + 1) * in_sz], &geo, &mut cols);
        T::gemm(cout, hw_out, ckk, gb, false, &cols, true, T::one(), &mut dw);
        T::gemm(ckk, cout, hw_out, w.data(), true, gb, false, T::zero(), &mut dcols);
        col2im(&dcols, &geo, &mut dx[b * in_sz..(b + 1) * in_sz]);
    }
    acc(ix, dx);
    acc(iw, dw);
}

impl<'t, T: Real> Var<'t, T> {
    /// 2-D cross-correlation of an NCHW input with an `[out, in, k, k]` kernel
    /// and symmetric zero padding.
    pub fn conv2d(&self, w: &Var<'t, T>, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        let (x, wv) = (self.value(), w.value());
        let geo = geometry(x.shape(), wv.shape(), stride, pad)?;
        let n = x.dim(0);
        let cout = wv.dim(0);
        let ckk = geo.cin * geo.k * geo.k;
        let hw_out = geo.ho * geo.wo;
        let in_sz = geo.cin * geo.h * geo.w;
        let mut out = vec![T::zero(); n * cout * hw_out];
        let mut cols = vec![T::zero(); ckk * hw_out];
        for b in 0..n {
            im2col(&x.data()[b * in_sz..(b + 1) * in_sz], &geo, &mut cols);
            T::gemm(cout, ckk, hw_out, wv.data(), false, &cols, false, T::zero(), &mut out[b * cout * hw_out..(b + 1) * cout * hw_out]);
        }
        let t = Tensor::new(vec![n, cout, geo.ho, geo.wo], out)?;
        Ok(self.tape.push(t, Op::Conv2d { x: self.id, w: w.id, stride, pad }))
    }

    /// `k x k` max pooling with stride `s`, no padding.
    pub fn max_pool2d(&self, k: usize, s: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let sh = x.shape();
        if sh.len() != 4 {
            return shape_err("max_pool2d", format!("expected NCHW, got {sh:?}"));
        }
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let (Some(ho), Some(wo)) = (window_out(h, k, s, 0), window_out(w, k, s, 0)) else {
            return shape_err("max_pool2d", format!("spatial extent {h}x{w} smaller than pool {k}"));
        };
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * s * w + ox * s;
                    for ki in 0..k {
                        for kj in 0..k {
                            let j = base + (oy * s + ki) * w + ox * s + kj;
                            if x.data()[j] > x.data()[best] {
                                best = j;
                            }
                        }
                    }
                    out.push(x.data()[best]);
                    argmax.push(best);
                }
            }
        }
        let t = Tensor::new(vec![n, c, ho, wo], out)?;
        Ok(self.tape.push(t, Op::MaxPool { x: self.id, argmax }))
    }

    /// Mean over the spatial dimensions: `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let sh = x.shape();
        if sh.len() != 4 {
            return shape_err("global_avg_pool", format!("expected NCHW, got {sh:?}"));
        }
        let hw = sh[2] * sh[3];
        let inv = T::one() / T::of(hw as f64);
        let out = x.data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let t = Tensor::new(vec![sh[0], sh[1]], out)?;
        Ok(self.tape.push(t, Op::GlobalAvgPool { x: self.id }))
    }
}
