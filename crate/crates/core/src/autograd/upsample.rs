//! Integer-factor bilinear upsampling (half-pixel centers, edge clamp),
//! edge-replicating padding, and their adjoints, applied plane by plane.

use super::Float;

struct Taps<T> {
    lo: Vec<usize>,
    hi: Vec<usize>,
    w_lo: Vec<T>,
    w_hi: Vec<T>,
}

fn taps<T: Float>(len: usize, factor: usize) -> Taps<T> {
    let out = len * factor;
    let mut t = Taps {
        lo: Vec::with_capacity(out),
        hi: Vec::with_capacity(out),
        w_lo: Vec::with_capacity(out),
        w_hi: Vec::with_capacity(out),
    };
    for o in 0..out {
        let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        let frac = src - i0 as f64;
        t.lo.push(i0);
        t.hi.push(i1);
        t.w_lo.push(T::from_f64(1.0 - frac).unwrap());
        t.w_hi.push(T::from_f64(frac).unwrap());
    }
    t
}

pub(crate) fn upsample_forward<T: Float>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    factor: usize,
) -> Vec<T> {
    let (oh, ow) = (h * factor, w * factor);
    let ty = taps::<T>(h, factor);
    let tx = taps::<T>(w, factor);
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut tmp = vec![T::zero(); h * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            let dst = &mut tmp[y * ow..(y + 1) * ow];
            for o in 0..ow {
                dst[o] = tx.w_lo[o] * line[tx.lo[o]] + tx.w_hi[o] * line[tx.hi[o]];
            }
        }
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for o in 0..oh {
            let (a, b) = (&tmp[ty.lo[o] * ow..][..ow], &tmp[ty.hi[o] * ow..][..ow]);
            let (wa, wb) = (ty.w_lo[o], ty.w_hi[o]);
            for (d, (&va, &vb)) in dst[o * ow..(o + 1) * ow].iter_mut().zip(a.iter().zip(b)) {
                *d = wa * va + wb * vb;
            }
        }
    }
    out
}

pub(crate) fn pad_edge_forward<T: Float>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    pad: usize,
) -> Vec<T> {
    let (oh, ow) = (h + 2 * pad, w + 2 * pad);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for o in 0..oh {
            let row = &src[o.saturating_sub(pad).min(h - 1) * w..][..w];
            out.extend(std::iter::repeat_n(row[0], pad));
            out.extend_from_slice(row);
            out.extend(std::iter::repeat_n(row[w - 1], pad));
        }
    }
    out
}

pub(crate) fn pad_edge_backward<T: Float>(
    dout: &[T],
    planes: usize,
    h: usize,
    w: usize,
    pad: usize,
) -> Vec<T> {
    let (oh, ow) = (h + 2 * pad, w + 2 * pad);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for (o, g) in dout[p * oh * ow..(p + 1) * oh * ow]
            .chunks_exact(ow)
            .enumerate()
        {
            let row = &mut dst[o.saturating_sub(pad).min(h - 1) * w..][..w];
            for (q, &gv) in g.iter().enumerate() {
                row[q.saturating_sub(pad).min(w - 1)] += gv;
            }
        }
    }
    dx
}

pub(crate) fn upsample_backward<T: Float>(
    dout: &[T],
    planes: usize,
    h: usize,
    w: usize,
    factor: usize,
) -> Vec<T> {
    let (oh, ow) = (h * factor, w * factor);
    let ty = taps::<T>(h, factor);
    let tx = taps::<T>(w, factor);
    let mut dx = vec![T::zero(); planes * h * w];
    let mut tmp = vec![T::zero(); h * ow];
    for p in 0..planes {
        tmp.fill(T::zero());
        let src = &dout[p * oh * ow..(p + 1) * oh * ow];
        for o in 0..oh {
            let g = &src[o * ow..(o + 1) * ow];
            let (wa, wb) = (ty.w_lo[o], ty.w_hi[o]);
            for (x, &gv) in g.iter().enumerate() {
                tmp[ty.lo[o] * ow + x] += wa * gv;
                tmp[ty.hi[o] * ow + x] += wb * gv;
            }
        }
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let line = &tmp[y * ow..(y + 1) * ow];
            let d = &mut dst[y * w..(y + 1) * w];
            for o in 0..ow {
                d[tx.lo[o]] += tx.w_lo[o] * line[o];
                d[tx.hi[o]] += tx.w_hi[o] * line[o];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubles_a_row_with_quarter_weights() {
        let x = [0.0f64, 4.0, 8.0];
        let y = upsample_forward(&x, 1, 1, 3, 2);
        // (o + 0.5)/2 - 0.5 -> 0 (clamped), .25, .75, 1.25, 1.75, 2.25 -> clamps at 2
        let row = [0.0, 1.0, 3.0, 5.0, 7.0, 8.0];
        assert_eq!(y, [row, row].concat());
    }

    #[test]
    fn constants_are_preserved() {
        let x = vec![0.7f64; 2 * 3 * 5];
        let y = upsample_forward(&x, 2, 3, 5, 4);
        assert!(y.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn backward_is_adjoint() {
        let (planes, h, w, f) = (3, 4, 5, 2);
        let x: Vec<f64> = (0..planes * h * w)
            .map(|i| ((i * 37) % 11) as f64 - 5.0)
            .collect();
        let d: Vec<f64> = (0..planes * h * w * f * f)
            .map(|i| ((i * 13) % 7) as f64 - 3.0)
            .collect();
        let y = upsample_forward(&x, planes, h, w, f);
        let dx = upsample_backward(&d, planes, h, w, f);
        let lhs: f64 = y.iter().zip(&d).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn edge_padding_repeats_borders() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y = pad_edge_forward(&x, 1, 2, 2, 1);
        let expected = [
            1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y, expected);
    }

    #[test]
    fn edge_padding_backward_is_adjoint() {
        let (planes, h, w, pad) = (2, 3, 4, 2);
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let x: Vec<f64> = (0..planes * h * w)
            .map(|i| ((i * 29) % 13) as f64 - 6.0)
            .collect();
        let d: Vec<f64> = (0..planes * oh * ow)
            .map(|i| ((i * 17) % 9) as f64 - 4.0)
            .collect();
        let y = pad_edge_forward(&x, planes, h, w, pad);
        let dx = pad_edge_backward(&d, planes, h, w, pad);
        let lhs: f64 = y.iter().zip(&d).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
