//! Convolution kernels on channel-major `[C, N, H, W]` tensors.
//!
//! Both convolutions are computed directly, one view at a time, as long
//! multiply-accumulate runs over contiguous memory. Strided spatial
//! convolutions are rewritten as stride-1 convolutions over the
//! `stride x stride` polyphase components of the zero-padded input. Output
//! rows are laid out with the padded input's row pitch, so every kernel
//! tap becomes a constant offset into a phase plane and a whole output
//! plane is one run; the extra columns are discarded.
//!
//! Runs are processed in [`CHUNK`]-element pieces so the accumulators of
//! every output channel stay in L1 cache. Forward results do not depend on
//! the chunk size.
//!
//! On x86-64 machines with AVX2 and FMA the kernels are compiled a second
//! time with those features and selected at runtime.

use super::Float;

const LANES: usize = 16;

/// Elements per cache block of a run.
const CHUNK: usize = 256;

/// `[lo, hi)` pieces of `0..len`, at most [`CHUNK`] long.
fn chunks(len: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len)
        .step_by(CHUNK)
        .map(move |lo| (lo, (lo + CHUNK).min(len)))
}

/// Multiply-accumulate flavour: fused when the CPU has FMA.
trait Mac {
    fn mac<T: Float>(acc: T, a: T, b: T) -> T;
}

struct Fused;
struct Plain;

impl Mac for Fused {
    #[inline(always)]
    fn mac<T: Float>(acc: T, a: T, b: T) -> T {
        a.fused(b, acc)
    }
}

impl Mac for Plain {
    #[inline(always)]
    fn mac<T: Float>(acc: T, a: T, b: T) -> T {
        acc + a * b
    }
}

#[cfg(target_arch = "x86_64")]
fn has_fma() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

/// Defines `$name` that runs `$imp::<T, Fused>` under AVX2+FMA when
/// available and `$imp::<T, Plain>` otherwise.
macro_rules! dispatch {
    ($vis:vis fn $name:ident / $fast:ident => $imp:ident ( $($arg:ident : $ty:ty),* ) -> $ret:ty) => {
        $vis fn $name<T: Float>($($arg: $ty),*) -> $ret {
            #[cfg(target_arch = "x86_64")]
            if has_fma() {
                // SAFETY: the required target features were detected above.
                return unsafe { $fast::<T>($($arg),*) };
            }
            $imp::<T, Plain>($($arg),*)
        }

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn $fast<T: Float>($($arg: $ty),*) -> $ret {
            $imp::<T, Fused>($($arg),*)
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    /// Padding repeats the edge pixels instead of inserting zeros.
    pub edge: bool,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        x: [usize; 4],
        wshape: [usize; 4],
        stride: usize,
        pad: usize,
    ) -> Result<Self, String> {
        let [cin, n, h, w] = x;
        let [cout, wcin, kh, kw] = wshape;
        if wcin != cin {
            return Err(format!(
                "weight expects {wcin} input channels, input has {cin}"
            ));
        }
        if stride == 0 {
            return Err("stride must be positive".into());
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(format!("{h}x{w} input too small for a {kh}x{kw} kernel"));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            cin,
            cout,
            n,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            edge: false,
            ho,
            wo,
        })
    }

    /// Same geometry with edge-replicating padding.
    pub fn edge_padded(self) -> Self {
        Self { edge: true, ..self }
    }

    /// Valid phase range for offset `q` along an axis of length `len`, and
    /// the input index read at phase position `pos` along that axis.
    fn span(&self, p: &Phases, q: usize, len: usize, count: usize) -> (usize, usize) {
        if self.edge {
            p.valid(q, 0, len + 2 * self.pad, count)
        } else {
            p.valid(q, self.pad, len, count)
        }
    }

    #[inline(always)]
    fn source(&self, pos: usize, len: usize) -> usize {
        if self.edge {
            pos.saturating_sub(self.pad).min(len - 1)
        } else {
            pos - self.pad
        }
    }

    fn taps(&self) -> usize {
        self.kh * self.kw
    }
}

/// `y += a * x`, elementwise.
#[inline(always)]
fn axpy<T: Float, M: Mac>(y: &mut [T], a: T, x: &[T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y = M::mac(*y, a, x);
    }
}

#[inline(always)]
fn dot<T: Float, M: Mac>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] = M::mac(acc[l], x[l], y[l]);
        }
    }
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| M::mac(s, x, y));
    acc.iter().fold(tail, |s, &v| s + v)
}

/// Polyphase staging layout for one view.
struct Phases {
    s: usize,
    ph: usize,
    pw: usize,
    /// Length of one output plane in the staged layout, `ho * pw`.
    run: usize,
    /// Per tap: phase index and flat offset within the phase plane.
    taps: Vec<(usize, usize)>,
}

impl Phases {
    fn new(g: &ConvGeom) -> Self {
        let s = g.stride;
        let pw = g.wo + (g.kw - 1) / s;
        let taps = (0..g.kh)
            .flat_map(|ky| (0..g.kw).map(move |kx| ((ky % s) * s + kx % s, (ky / s) * pw + kx / s)))
            .collect();
        Self {
            s,
            // One spare row absorbs the reads of discarded columns.
            ph: g.ho + (g.kh - 1) / s + 1,
            pw,
            run: g.ho * pw,
            taps,
        }
    }

    fn plane(&self) -> usize {
        self.ph * self.pw
    }

    /// Elements per input channel.
    fn chan(&self) -> usize {
        self.s * self.s * self.plane()
    }

    /// Phase-grid positions along one axis that map into `[0, len)`, given
    /// phase `q`: `p * s + q - pad` in range.
    fn valid(&self, q: usize, pad: usize, len: usize, count: usize) -> (usize, usize) {
        let s = self.s as isize;
        let shift = q as isize - pad as isize;
        let lo = if shift >= 0 { 0 } else { (-shift + s - 1) / s };
        let hi = ((len as isize - 1 - shift).div_euclid(s) + 1).clamp(0, count as isize);
        ((lo as usize).min(hi as usize), hi as usize)
    }

    /// Start of the run read by tap `(q, off)` of input channel `ci`.
    fn at(&self, ci: usize, q: usize, off: usize) -> usize {
        ci * self.chan() + q * self.plane() + off
    }
}

/// Copies view `n` of `x` into padded polyphase planes.
fn stage_input<T: Float>(g: &ConvGeom, p: &Phases, x: &[T], n: usize, xp: &mut [T]) {
    xp.fill(T::zero());
    let plane = g.h * g.w;
    for ci in 0..g.cin {
        let src = &x[(ci * g.n + n) * plane..][..plane];
        for qy in 0..p.s {
            let (py_lo, py_hi) = g.span(p, qy, g.h, p.ph);
            for qx in 0..p.s {
                let (px_lo, px_hi) = g.span(p, qx, g.w, p.pw);
                let dst = &mut xp[ci * p.chan() + (qy * p.s + qx) * p.plane()..][..p.plane()];
                for py in py_lo..py_hi {
                    let row = &src[g.source(py * p.s + qy, g.h) * g.w..][..g.w];
                    let out = &mut dst[py * p.pw..][..p.pw];
                    if p.s == 1 && !g.edge {
                        let ix0 = px_lo + qx - g.pad;
                        out[px_lo..px_hi].copy_from_slice(&row[ix0..ix0 + px_hi - px_lo]);
                    } else {
                        for px in px_lo..px_hi {
                            out[px] = row[g.source(px * p.s + qx, g.w)];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`stage_input`] for gradients: folds the parts of the phase
/// planes that read real pixels back into view `n` of `dx`.
fn unstage<T: Float>(g: &ConvGeom, p: &Phases, dxp: &[T], n: usize, dx: &mut [T]) {
    let plane = g.h * g.w;
    for ci in 0..g.cin {
        let dst = &mut dx[(ci * g.n + n) * plane..][..plane];
        for qy in 0..p.s {
            let (py_lo, py_hi) = g.span(p, qy, g.h, p.ph);
            for qx in 0..p.s {
                let (px_lo, px_hi) = g.span(p, qx, g.w, p.pw);
                let src = &dxp[ci * p.chan() + (qy * p.s + qx) * p.plane()..][..p.plane()];
                for py in py_lo..py_hi {
                    let row = &mut dst[g.source(py * p.s + qy, g.h) * g.w..][..g.w];
                    let from = &src[py * p.pw..][..p.pw];
                    for (px, &d) in (px_lo..px_hi).zip(&from[px_lo..px_hi]) {
                        row[g.source(px * p.s + qx, g.w)] += d;
                    }
                }
            }
        }
    }
}

/// Weights `[cout, cin, taps]` reordered to `[cin, taps, cout]`.
fn weights_cin_tap_cout<T: Float>(w: &[T], cout: usize, cin: usize, taps: usize) -> Vec<T> {
    let mut out = vec![T::zero(); w.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for t in 0..taps {
                out[(ci * taps + t) * cout + co] = w[(co * cin + ci) * taps + t];
            }
        }
    }
    out
}

#[inline(always)]
fn conv2d_forward_impl<T: Float, M: Mac>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
) -> Vec<T> {
    let p = Phases::new(g);
    let ntaps = g.taps();
    let wt = weights_cin_tap_cout(w, g.cout, g.cin, ntaps);
    let mut out = vec![T::zero(); g.cout * g.n * g.ho * g.wo];
    let mut xp = vec![T::zero(); g.cin * p.chan()];
    let mut acc = vec![T::zero(); g.cout * p.run];
    for n in 0..g.n {
        stage_input(g, &p, x, n, &mut xp);
        for (co, row) in acc.chunks_exact_mut(p.run).enumerate() {
            row.fill(b.map_or(T::zero(), |b| b[co]));
        }
        for (lo, hi) in chunks(p.run) {
            for ci in 0..g.cin {
                for (t, &(q, off)) in p.taps.iter().enumerate() {
                    let xs = &xp[p.at(ci, q, off) + lo..][..hi - lo];
                    let wr = &wt[(ci * ntaps + t) * g.cout..][..g.cout];
                    for (row, &wv) in acc.chunks_exact_mut(p.run).zip(wr) {
                        axpy::<T, M>(&mut row[lo..hi], wv, xs);
                    }
                }
            }
        }
        for (co, row) in acc.chunks_exact(p.run).enumerate() {
            let dst = &mut out[(co * g.n + n) * g.ho * g.wo..][..g.ho * g.wo];
            for (d, s) in dst.chunks_exact_mut(g.wo).zip(row.chunks_exact(p.pw)) {
                d.copy_from_slice(&s[..g.wo]);
            }
        }
    }
    out
}

dispatch!(pub(crate) fn conv2d_forward / conv2d_forward_fma => conv2d_forward_impl(g: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T>);

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

#[inline(always)]
fn conv2d_backward_impl<T: Float, M: Mac>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    dout: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_dx, need_dw, need_db) = need;
    let total = g.n * g.ho * g.wo;
    let ntaps = g.taps();
    let p = Phases::new(g);
    let mut dx = need_dx.then(|| vec![T::zero(); g.cin * g.n * g.h * g.w]);
    let mut dw = need_dw.then(|| vec![T::zero(); g.cout * g.cin * ntaps]);
    let db = need_db.then(|| {
        dout.chunks(total)
            .map(|row| row.iter().fold(T::zero(), |a, &v| a + v))
            .collect()
    });
    if !(need_dx || need_dw) {
        return ConvGrads { dx, dw, db };
    }
    let mut xp = vec![T::zero(); g.cin * p.chan()];
    let mut dxp = vec![T::zero(); g.cin * p.chan()];
    // Output gradient in the staged layout, zero in the discarded columns.
    let mut dp = vec![T::zero(); g.cout * p.run];
    for n in 0..g.n {
        for (co, row) in dp.chunks_exact_mut(p.run).enumerate() {
            let src = &dout[(co * g.n + n) * g.ho * g.wo..][..g.ho * g.wo];
            for (d, s) in row.chunks_exact_mut(p.pw).zip(src.chunks_exact(g.wo)) {
                d[..g.wo].copy_from_slice(s);
            }
        }
        if let Some(dw) = dw.as_mut() {
            stage_input(g, &p, x, n, &mut xp);
            for ci in 0..g.cin {
                for (t, &(q, off)) in p.taps.iter().enumerate() {
                    let xs = &xp[p.at(ci, q, off)..][..p.run];
                    for (co, d) in dp.chunks_exact(p.run).enumerate() {
                        dw[(co * g.cin + ci) * ntaps + t] += dot::<T, M>(d, xs);
                    }
                }
            }
        }
        if let Some(dx) = dx.as_mut() {
            dxp.fill(T::zero());
            for (lo, hi) in chunks(p.run) {
                for ci in 0..g.cin {
                    for (t, &(q, off)) in p.taps.iter().enumerate() {
                        let dst = &mut dxp[p.at(ci, q, off) + lo..][..hi - lo];
                        for (co, d) in dp.chunks_exact(p.run).enumerate() {
                            axpy::<T, M>(dst, w[(co * g.cin + ci) * ntaps + t], &d[lo..hi]);
                        }
                    }
                }
            }
            unstage(g, &p, &dxp, n, dx);
        }
    }
    ConvGrads { dx, dw, db }
}

dispatch!(pub(crate) fn conv2d_backward / conv2d_backward_fma => conv2d_backward_impl(g: &ConvGeom, x: &[T], w: &[T], dout: &[T], need: (bool, bool, bool)) -> ConvGrads<T>);

/// Layout of the view axis: `N = batch * u * v`, views ordered `(b, u, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngularGrid {
    pub u: usize,
    pub v: usize,
}

impl AngularGrid {
    pub fn views(&self) -> usize {
        self.u * self.v
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AngularGeom {
    pub cin: usize,
    pub cout: usize,
    pub batch: usize,
    pub grid: AngularGrid,
    pub plane: usize,
}

impl AngularGeom {
    fn n(&self) -> usize {
        self.batch * self.grid.views()
    }

    /// Every view with the `(tap, neighbour view)` pairs that fall inside
    /// its grid.
    fn neighbourhoods(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        let (un, vn) = (self.grid.u as isize, self.grid.v as isize);
        let mut out = Vec::with_capacity(self.n());
        for b in 0..self.batch as isize {
            for u in 0..un {
                for v in 0..vn {
                    let mut taps = Vec::with_capacity(9);
                    for ku in 0..3isize {
                        for kv in 0..3isize {
                            let (ui, vi) = (u + ku - 1, v + kv - 1);
                            if ui >= 0 && vi >= 0 && ui < un && vi < vn {
                                taps.push((
                                    (ku * 3 + kv) as usize,
                                    ((b * un + ui) * vn + vi) as usize,
                                ));
                            }
                        }
                    }
                    out.push((((b * un + u) * vn + v) as usize, taps));
                }
            }
        }
        out
    }
}

/// `out[co, view] = bias[co] + sum over ci and taps of wt[ci, t, co] * x[ci, neighbour(view, t)]`.
#[inline(always)]
fn angular_apply<T: Float, M: Mac>(
    g: &AngularGeom,
    cin: usize,
    cout: usize,
    x: &[T],
    wt: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let (n, plane) = (g.n(), g.plane);
    let mut out = vec![T::zero(); cout * n * plane];
    for (view, taps) in g.neighbourhoods() {
        for co in 0..cout {
            out[(co * n + view) * plane..][..plane].fill(bias.map_or(T::zero(), |b| b[co]));
        }
        for (lo, hi) in chunks(plane) {
            for ci in 0..cin {
                for &(t, iv) in &taps {
                    let xs = &x[(ci * n + iv) * plane + lo..][..hi - lo];
                    let wr = &wt[(ci * 9 + t) * cout..][..cout];
                    for (co, &wv) in wr.iter().enumerate() {
                        axpy::<T, M>(&mut out[(co * n + view) * plane + lo..][..hi - lo], wv, xs);
                    }
                }
            }
        }
    }
    out
}

#[inline(always)]
fn angular_forward_impl<T: Float, M: Mac>(
    g: &AngularGeom,
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
) -> Vec<T> {
    let wt = weights_cin_tap_cout(w, g.cout, g.cin, 9);
    angular_apply::<T, M>(g, g.cin, g.cout, x, &wt, b)
}

dispatch!(pub(crate) fn angular_forward / angular_forward_fma => angular_forward_impl(g: &AngularGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T>);

#[inline(always)]
fn angular_backward_impl<T: Float, M: Mac>(
    g: &AngularGeom,
    x: &[T],
    w: &[T],
    dout: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_dx, need_dw, need_db) = need;
    let (n, plane) = (g.n(), g.plane);
    let db = need_db.then(|| {
        dout.chunks(n * plane)
            .map(|row| row.iter().fold(T::zero(), |a, &v| a + v))
            .collect()
    });
    // The input gradient is an angular convolution of `dout` with the
    // kernel mirrored in (u, v) and its channel axes swapped.
    let dx = need_dx.then(|| {
        let mut wt = vec![T::zero(); w.len()];
        for co in 0..g.cout {
            for ci in 0..g.cin {
                for t in 0..9 {
                    wt[(co * 9 + 8 - t) * g.cin + ci] = w[(co * g.cin + ci) * 9 + t];
                }
            }
        }
        angular_apply::<T, M>(g, g.cout, g.cin, dout, &wt, None)
    });
    let dw = need_dw.then(|| {
        let mut dw = vec![T::zero(); g.cout * g.cin * 9];
        for (view, taps) in g.neighbourhoods() {
            for co in 0..g.cout {
                let d = &dout[(co * n + view) * plane..][..plane];
                for ci in 0..g.cin {
                    for &(t, iv) in &taps {
                        let xs = &x[(ci * n + iv) * plane..][..plane];
                        dw[(co * g.cin + ci) * 9 + t] += dot::<T, M>(d, xs);
                    }
                }
            }
        }
        dw
    });
    ConvGrads { dx, dw, db }
}

dispatch!(pub(crate) fn angular_backward / angular_backward_fma => angular_backward_impl(g: &AngularGeom, x: &[T], w: &[T], dout: &[T], need: (bool, bool, bool)) -> ConvGrads<T>);
