//! Raw compute kernels on `[C, D, H, W]` buffers. Convolutions use "same"
//! zero padding, stride 1 and odd kernel sizes.

use matrixmultiply::sgemm;

use crate::direct::{self, Direct};

/// Upper bound on im2col buffer size, in floats.
const COL_BUDGET: usize = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub groups: usize,
    pub k: [usize; 3],
    pub sp: [usize; 3],
}

impl ConvGeom {
    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }
    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }
    /// Reduction length per output element.
    pub fn kdim(&self) -> usize {
        self.cin_g() * self.k[0] * self.k[1] * self.k[2]
    }
    fn p(&self) -> usize {
        self.sp[0] * self.sp[1] * self.sp[2]
    }
    fn plane(&self) -> usize {
        self.sp[1] * self.sp[2]
    }
    fn pointwise(&self) -> bool {
        self.k == [1, 1, 1]
    }
    /// Narrow or grouped convolutions run faster without GEMM packing.
    fn use_direct(&self) -> bool {
        !self.pointwise() && (self.groups > 1 || self.cout_g() <= 32 || self.p() >= 2048)
    }
    fn direct(&self) -> Direct {
        Direct {
            cin_g: self.cin_g(),
            cout: self.cout,
            groups: self.groups,
            k: self.k,
            sp: self.sp,
        }
    }
    fn half_k(&self) -> [usize; 3] {
        [self.k[0] / 2, self.k[1] / 2, self.k[2] / 2]
    }
    fn chunk_planes(&self) -> usize {
        (COL_BUDGET / (self.kdim() * self.plane()).max(1)).clamp(1, self.sp[0])
    }
}

fn offset_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// Fill `col` (`kdim × (z1-z0)·H·W`) from `x` (the group's input channels).
fn im2col(x: &[f32], g: &ConvGeom, z0: usize, z1: usize, col: &mut [f32]) {
    let [d, h, w] = g.sp;
    let [kd, kh, kw] = g.k;
    let (p, plane) = (g.p(), g.plane());
    let ncols = (z1 - z0) * plane;
    let mut row = 0;
    for c in 0..g.cin_g() {
        let xc = &x[c * p..(c + 1) * p];
        for a in 0..kd {
            let dz = a as isize - (kd / 2) as isize;
            for b in 0..kh {
                let dy = b as isize - (kh / 2) as isize;
                for e in 0..kw {
                    let dx = e as isize - (kw / 2) as isize;
                    let (xlo, xhi) = offset_range(w, dx);
                    let dst = &mut col[row * ncols..(row + 1) * ncols];
                    for (zi, z) in (z0..z1).enumerate() {
                        let iz = z as isize + dz;
                        let dplane = &mut dst[zi * plane..(zi + 1) * plane];
                        if iz < 0 || iz >= d as isize {
                            dplane.fill(0.0);
                            continue;
                        }
                        for y in 0..h {
                            let iy = y as isize + dy;
                            let drow = &mut dplane[y * w..(y + 1) * w];
                            if iy < 0 || iy >= h as isize {
                                drow.fill(0.0);
                                continue;
                            }
                            let base = (iz as usize * h + iy as usize) * w;
                            drow[..xlo].fill(0.0);
                            drow[xhi..].fill(0.0);
                            let s0 = (base as isize + xlo as isize + dx) as usize;
                            drow[xlo..xhi].copy_from_slice(&xc[s0..s0 + (xhi - xlo)]);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate `col` into `dx`.
fn col2im(col: &[f32], g: &ConvGeom, z0: usize, z1: usize, dx_buf: &mut [f32]) {
    let [d, h, w] = g.sp;
    let [kd, kh, kw] = g.k;
    let (p, plane) = (g.p(), g.plane());
    let ncols = (z1 - z0) * plane;
    let mut row = 0;
    for c in 0..g.cin_g() {
        let xc = &mut dx_buf[c * p..(c + 1) * p];
        for a in 0..kd {
            let dz = a as isize - (kd / 2) as isize;
            for b in 0..kh {
                let dy = b as isize - (kh / 2) as isize;
                for e in 0..kw {
                    let dxo = e as isize - (kw / 2) as isize;
                    let (xlo, xhi) = offset_range(w, dxo);
                    let src = &col[row * ncols..(row + 1) * ncols];
                    row += 1;
                    for (zi, z) in (z0..z1).enumerate() {
                        let iz = z as isize + dz;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for y in 0..h {
                            let iy = y as isize + dy;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = (iz as usize * h + iy as usize) * w;
                            let s0 = (base as isize + xlo as isize + dxo) as usize;
                            let srow = &src[zi * plane + y * w..zi * plane + (y + 1) * w];
                            for (o, v) in xc[s0..s0 + (xhi - xlo)].iter_mut().zip(&srow[xlo..xhi]) {
                                *o += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Grouped "same" convolution. `w` is `[cout, cin/groups, kd, kh, kw]`.
pub fn conv_forward(x: &[f32], w: &[f32], bias: Option<&[f32]>, g: &ConvGeom) -> Vec<f32> {
    let mut out = if g.use_direct() {
        let xp = direct::pad(x, g.cin, g.sp, g.half_k());
        direct::forward(&xp, w, &g.direct())
    } else {
        conv_gemm(x, w, g)
    };
    let p = g.p();
    if let Some(b) = bias {
        for (co, &bv) in b.iter().enumerate() {
            out[co * p..(co + 1) * p].iter_mut().for_each(|v| *v += bv);
        }
    }
    out
}

fn conv_gemm(x: &[f32], w: &[f32], g: &ConvGeom) -> Vec<f32> {
    let (p, plane, kdim) = (g.p(), g.plane(), g.kdim());
    let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
    let mut out = vec![0.0f32; g.cout * p];
    let chunk = g.chunk_planes();
    let mut col = if g.pointwise() {
        Vec::new()
    } else {
        vec![0.0f32; kdim * chunk * plane]
    };
    for grp in 0..g.groups {
        let xg = &x[grp * cin_g * p..(grp + 1) * cin_g * p];
        let wg = &w[grp * cout_g * kdim..(grp + 1) * cout_g * kdim];
        let mut z0 = 0;
        while z0 < g.sp[0] {
            let z1 = (z0 + chunk).min(g.sp[0]);
            let ncols = (z1 - z0) * plane;
            let off = z0 * plane;
            let (bptr, rsb) = if g.pointwise() {
                (xg[off..].as_ptr(), p as isize)
            } else {
                im2col(xg, g, z0, z1, &mut col);
                (col.as_ptr(), ncols as isize)
            };
            let optr = out[grp * cout_g * p + off..].as_mut_ptr();
            // SAFETY: all strides address within the slices borrowed above.
            unsafe {
                sgemm(
                    cout_g,
                    kdim,
                    ncols,
                    1.0,
                    wg.as_ptr(),
                    kdim as isize,
                    1,
                    bptr,
                    rsb,
                    1,
                    0.0,
                    optr,
                    p as isize,
                    1,
                );
            }
            z0 = z1;
        }
    }
    out
}

/// Accumulates weight/bias gradients and optionally returns the input gradient.
pub fn conv_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    dw: &mut [f32],
    db: Option<&mut [f32]>,
    want_dx: bool,
) -> Option<Vec<f32>> {
    if let Some(db) = db {
        let p = g.p();
        for (co, d) in db.iter_mut().enumerate() {
            *d += dy[co * p..(co + 1) * p].iter().sum::<f32>();
        }
    }
    if g.use_direct() {
        let d = g.direct();
        let xp = direct::pad(x, g.cin, g.sp, g.half_k());
        direct::weight_grad(&xp, dy, &d, dw);
        return want_dx.then(|| {
            let dyp = direct::pad(dy, g.cout, g.sp, g.half_k());
            let adj = Direct {
                cin_g: g.cout_g(),
                cout: g.cin,
                groups: g.groups,
                k: g.k,
                sp: g.sp,
            };
            direct::forward(&dyp, &direct::flip_weights(w, &d), &adj)
        });
    }
    conv_backward_gemm(x, w, dy, g, dw, want_dx)
}

fn conv_backward_gemm(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    dw: &mut [f32],
    want_dx: bool,
) -> Option<Vec<f32>> {
    let (p, plane, kdim) = (g.p(), g.plane(), g.kdim());
    let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
    let chunk = g.chunk_planes();
    let mut dx = want_dx.then(|| vec![0.0f32; g.cin * p]);
    let (mut col, mut dcol) = if g.pointwise() {
        (Vec::new(), Vec::new())
    } else {
        let n = kdim * chunk * plane;
        (vec![0.0f32; n], if want_dx { vec![0.0f32; n] } else { Vec::new() })
    };
    for grp in 0..g.groups {
        let xg = &x[grp * cin_g * p..(grp + 1) * cin_g * p];
        let wg = &w[grp * cout_g * kdim..(grp + 1) * cout_g * kdim];
        let dwg = &mut dw[grp * cout_g * kdim..(grp + 1) * cout_g * kdim];
        let mut z0 = 0;
        while z0 < g.sp[0] {
            let z1 = (z0 + chunk).min(g.sp[0]);
            let ncols = (z1 - z0) * plane;
            let off = z0 * plane;
            let dyptr = dy[grp * cout_g * p + off..].as_ptr();
            let (cptr, ccs) = if g.pointwise() {
                (xg[off..].as_ptr(), p as isize)
            } else {
                im2col(xg, g, z0, z1, &mut col);
                (col.as_ptr(), ncols as isize)
            };
            // SAFETY: strides stay within the borrowed slices.
            unsafe {
                sgemm(
                    cout_g,
                    ncols,
                    kdim,
                    1.0,
                    dyptr,
                    p as isize,
                    1,
                    cptr,
                    1,
                    ccs,
                    1.0,
                    dwg.as_mut_ptr(),
                    kdim as isize,
                    1,
                );
            }
            if let Some(dx) = dx.as_mut() {
                let dxg = &mut dx[grp * cin_g * p..(grp + 1) * cin_g * p];
                if g.pointwise() {
                    // SAFETY: as above.
                    unsafe {
                        sgemm(
                            kdim,
                            cout_g,
                            ncols,
                            1.0,
                            wg.as_ptr(),
                            1,
                            kdim as isize,
                            dyptr,
                            p as isize,
                            1,
                            1.0,
                            dxg[off..].as_mut_ptr(),
                            p as isize,
                            1,
                        );
                    }
                } else {
                    // SAFETY: as above.
                    unsafe {
                        sgemm(
                            kdim,
                            cout_g,
                            ncols,
                            1.0,
                            wg.as_ptr(),
                            1,
                            kdim as isize,
                            dyptr,
                            p as isize,
                            1,
                            0.0,
                            dcol.as_mut_ptr(),
                            ncols as isize,
                            1,
                        );
                    }
                    col2im(&dcol, g, z0, z1, dxg);
                }
            }
            z0 = z1;
        }
    }
    dx
}

/// Transposed convolution with kernel equal to stride `f`.
/// `w` is `[cin, cout, fd, fh, fw]`; output spatial is `sp * f`.
pub fn upconv_forward(
    x: &[f32],
    w: &[f32],
    bias: Option<&[f32]>,
    cin: usize,
    cout: usize,
    sp: [usize; 3],
    f: [usize; 3],
) -> Vec<f32> {
    let p = sp.iter().product::<usize>();
    let nf = f.iter().product::<usize>();
    let m = cout * nf;
    let mut tmp = vec![0.0f32; m * p];
    // SAFETY: tmp is m×p, w is cin×m, x is cin×p.
    unsafe {
        sgemm(
            m,
            cin,
            p,
            1.0,
            w.as_ptr(),
            1,
            m as isize,
            x.as_ptr(),
            p as isize,
            1,
            0.0,
            tmp.as_mut_ptr(),
            p as isize,
            1,
        );
    }
    let osp = [sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]];
    let op = osp.iter().product::<usize>();
    let mut out = vec![0.0f32; cout * op];
    scatter_up(&tmp, &mut out, cout, sp, f, |o, t| *o = t);
    if let Some(b) = bias {
        for (co, &bv) in b.iter().enumerate() {
            out[co * op..(co + 1) * op].iter_mut().for_each(|v| *v += bv);
        }
    }
    out
}

/// Visit `(out, tmp)` pairs where `tmp` is `[cout·F, P]` and `out` the upsampled grid.
fn scatter_up(tmp: &[f32], out: &mut [f32], cout: usize, sp: [usize; 3], f: [usize; 3], op: impl Fn(&mut f32, f32)) {
    let p = sp.iter().product::<usize>();
    let nf = f.iter().product::<usize>();
    let (oh, ow) = (sp[1] * f[1], sp[2] * f[2]);
    let op_len = sp[0] * f[0] * oh * ow;
    for co in 0..cout {
        for a in 0..f[0] {
            for b in 0..f[1] {
                for e in 0..f[2] {
                    let j = co * nf + (a * f[1] + b) * f[2] + e;
                    let t = &tmp[j * p..(j + 1) * p];
                    for z in 0..sp[0] {
                        for y in 0..sp[1] {
                            let obase = co * op_len + ((z * f[0] + a) * oh + y * f[1] + b) * ow + e;
                            let tbase = (z * sp[1] + y) * sp[2];
                            for x in 0..sp[2] {
                                op(&mut out[obase + x * f[2]], t[tbase + x]);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn gather_up(dy: &[f32], cout: usize, sp: [usize; 3], f: [usize; 3]) -> Vec<f32> {
    let p = sp.iter().product::<usize>();
    let nf = f.iter().product::<usize>();
    let (oh, ow) = (sp[1] * f[1], sp[2] * f[2]);
    let op_len = sp[0] * f[0] * oh * ow;
    let mut tmp = vec![0.0f32; cout * nf * p];
    for co in 0..cout {
        for a in 0..f[0] {
            for b in 0..f[1] {
                for e in 0..f[2] {
                    let j = co * nf + (a * f[1] + b) * f[2] + e;
                    let t = &mut tmp[j * p..(j + 1) * p];
                    for z in 0..sp[0] {
                        for y in 0..sp[1] {
                            let obase = co * op_len + ((z * f[0] + a) * oh + y * f[1] + b) * ow + e;
                            let tbase = (z * sp[1] + y) * sp[2];
                            for x in 0..sp[2] {
                                t[tbase + x] = dy[obase + x * f[2]];
                            }
                        }
                    }
                }
            }
        }
    }
    tmp
}

#[allow(clippy::too_many_arguments)]
pub fn upconv_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    cin: usize,
    cout: usize,
    sp: [usize; 3],
    f: [usize; 3],
    dw: &mut [f32],
    db: Option<&mut [f32]>,
    want_dx: bool,
) -> Option<Vec<f32>> {
    let p = sp.iter().product::<usize>();
    let m = cout * f.iter().product::<usize>();
    let dtmp = gather_up(dy, cout, sp, f);
    // SAFETY: dw is cin×m; x is cin×p; dtmp is m×p.
    unsafe {
        sgemm(
            cin,
            p,
            m,
            1.0,
            x.as_ptr(),
            p as isize,
            1,
            dtmp.as_ptr(),
            1,
            p as isize,
            1.0,
            dw.as_mut_ptr(),
            m as isize,
            1,
        );
    }
    if let Some(db) = db {
        let op = dy.len() / cout;
        for (co, d) in db.iter_mut().enumerate() {
            *d += dy[co * op..(co + 1) * op].iter().sum::<f32>();
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0f32; cin * p];
        // SAFETY: as above.
        unsafe {
            sgemm(
                cin,
                m,
                p,
                1.0,
                w.as_ptr(),
                m as isize,
                1,
                dtmp.as_ptr(),
                p as isize,
                1,
                0.0,
                dx.as_mut_ptr(),
                p as isize,
                1,
            );
        }
        dx
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeom {
    pub k: [usize; 3],
    pub s: [usize; 3],
    pub pad: [usize; 3],
}

impl PoolGeom {
    pub fn out_spatial(&self, sp: [usize; 3]) -> [usize; 3] {
        let mut o = [0; 3];
        for a in 0..3 {
            o[a] = (sp[a] + 2 * self.pad[a] - self.k[a]) / self.s[a] + 1;
        }
        o
    }
}

/// Max pooling; padded positions never win. Returns output and argmax (flat
/// index within the channel plane).
pub fn maxpool_forward(x: &[f32], c: usize, sp: [usize; 3], g: &PoolGeom) -> (Vec<f32>, Vec<u32>) {
    let o = g.out_spatial(sp);
    let p = sp.iter().product::<usize>();
    let op = o.iter().product::<usize>();
    let mut out = vec![0.0f32; c * op];
    let mut arg = vec![0u32; c * op];
    for ch in 0..c {
        let xc = &x[ch * p..(ch + 1) * p];
        let mut oi = ch * op;
        for oz in 0..o[0] {
            for oy in 0..o[1] {
                for ox in 0..o[2] {
                    let mut best = f32::NEG_INFINITY;
                    let mut bi = 0usize;
                    for a in 0..g.k[0] {
                        let iz = (oz * g.s[0] + a) as isize - g.pad[0] as isize;
                        if iz < 0 || iz >= sp[0] as isize {
                            continue;
                        }
                        for b in 0..g.k[1] {
                            let iy = (oy * g.s[1] + b) as isize - g.pad[1] as isize;
                            if iy < 0 || iy >= sp[1] as isize {
                                continue;
                            }
                            for e in 0..g.k[2] {
                                let ix = (ox * g.s[2] + e) as isize - g.pad[2] as isize;
                                if ix < 0 || ix >= sp[2] as isize {
                                    continue;
                                }
                                let idx = (iz as usize * sp[1] + iy as usize) * sp[2] + ix as usize;
                                if xc[idx] > best {
                                    best = xc[idx];
                                    bi = idx;
                                }
                            }
                        }
                    }
                    out[oi] = best;
                    arg[oi] = bi as u32;
                    oi += 1;
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward(dy: &[f32], arg: &[u32], c: usize, p: usize) -> Vec<f32> {
    let op = dy.len() / c;
    let mut dx = vec![0.0f32; c * p];
    for ch in 0..c {
        for i in 0..op {
            dx[ch * p + arg[ch * op + i] as usize] += dy[ch * op + i];
        }
    }
    dx
}

/// Nearest-neighbour upsampling by integer factors.
pub fn upsample_forward(x: &[f32], c: usize, sp: [usize; 3], f: [usize; 3]) -> Vec<f32> {
    let o = [sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]];
    let p = sp.iter().product::<usize>();
    let op = o.iter().product::<usize>();
    let mut out = vec![0.0f32; c * op];
    for ch in 0..c {
        let mut i = ch * op;
        for z in 0..o[0] {
            for y in 0..o[1] {
                let base = ch * p + ((z / f[0]) * sp[1] + y / f[1]) * sp[2];
                for xo in 0..o[2] {
                    out[i] = x[base + xo / f[2]];
                    i += 1;
                }
            }
        }
    }
    out
}

pub fn upsample_backward(dy: &[f32], c: usize, sp: [usize; 3], f: [usize; 3]) -> Vec<f32> {
    let o = [sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]];
    let p = sp.iter().product::<usize>();
    let op = o.iter().product::<usize>();
    let mut dx = vec![0.0f32; c * p];
    for ch in 0..c {
        let mut i = ch * op;
        for z in 0..o[0] {
            for y in 0..o[1] {
                let base = ch * p + ((z / f[0]) * sp[1] + y / f[1]) * sp[2];
                for xo in 0..o[2] {
                    dx[base + xo / f[2]] += dy[i];
                    i += 1;
                }
            }
        }
    }
    dx
}
