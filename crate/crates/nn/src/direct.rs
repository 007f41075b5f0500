//! Direct "same" convolution for narrow layers. The padded input is read
//! through flat offsets: output voxel `(z, y, x)` lives at
//! `q = z·plane + y·pw + x` in padded strides, so every kernel tap is a
//! constant shift of `q` and each inner loop runs over long contiguous spans.
//! Positions with `x ≥ W` or `y ≥ H` are computed and discarded.

/// Copy `x` (`[c, D, H, W]`) into a zero-padded buffer.
pub fn pad(x: &[f32], c: usize, sp: [usize; 3], p: [usize; 3]) -> Vec<f32> {
    let ps = [sp[0] + 2 * p[0], sp[1] + 2 * p[1], sp[2] + 2 * p[2]];
    let mut out = vec![0.0f32; c * ps[0] * ps[1] * ps[2]];
    for ch in 0..c {
        for z in 0..sp[0] {
            for y in 0..sp[1] {
                let src = ((ch * sp[0] + z) * sp[1] + y) * sp[2];
                let dst = ((ch * ps[0] + z + p[0]) * ps[1] + y + p[1]) * ps[2] + p[2];
                out[dst..dst + sp[2]].copy_from_slice(&x[src..src + sp[2]]);
            }
        }
    }
    out
}

/// Geometry of one grouped convolution on a padded input.
#[derive(Debug, Clone, Copy)]
pub struct Direct {
    pub cin_g: usize,
    pub cout: usize,
    pub groups: usize,
    pub k: [usize; 3],
    pub sp: [usize; 3],
}

impl Direct {
    fn psp(&self) -> [usize; 3] {
        [
            self.sp[0] + self.k[0] - 1,
            self.sp[1] + self.k[1] - 1,
            self.sp[2] + self.k[2] - 1,
        ]
    }
    fn kdim(&self) -> usize {
        self.cin_g * self.k[0] * self.k[1] * self.k[2]
    }
    fn plane(&self) -> usize {
        let p = self.psp();
        p[1] * p[2]
    }
    /// Length of the flat output span.
    fn qlen(&self) -> usize {
        let [d, h, w] = self.sp;
        (d - 1) * self.plane() + (h - 1) * self.psp()[2] + w
    }
    fn cstride(&self) -> usize {
        self.psp().iter().product()
    }
    fn tap(&self, a: usize, b: usize) -> usize {
        a * self.plane() + b * self.psp()[2]
    }
}

const CHUNK: usize = 2048;

#[inline(always)]
fn fwd_body(xp: &[f32], w: &[f32], g: &Direct, out: &mut [f32]) {
    let [d, h, wd] = g.sp;
    let [kd, kh, kw] = g.k;
    let (cs, qlen, pw, plane) = (g.cstride(), g.qlen(), g.psp()[2], g.plane());
    let p = d * h * wd;
    let cout_g = g.cout / g.groups;
    let kdim = g.kdim();
    let mut acc = vec![0.0f32; CHUNK];
    let mut q0 = 0;
    while q0 < qlen {
        let n = CHUNK.min(qlen - q0);
        for co in 0..g.cout {
            let grp = co / cout_g;
            let wco = &w[co * kdim..(co + 1) * kdim];
            let acc = &mut acc[..n];
            acc.fill(0.0);
            for ci in 0..g.cin_g {
                let xc = &xp[(grp * g.cin_g + ci) * cs..][..cs];
                for a in 0..kd {
                    for b in 0..kh {
                        let base = q0 + g.tap(a, b);
                        let wk = &wco[((ci * kd + a) * kh + b) * kw..][..kw];
                        if kw == 3 {
                            let (w0, w1, w2) = (wk[0], wk[1], wk[2]);
                            let xs = &xc[base..base + n + 2];
                            let (x0, x1, x2) = (&xs[..n], &xs[1..n + 1], &xs[2..n + 2]);
                            for i in 0..n {
                                acc[i] += w0 * x0[i] + w1 * x1[i] + w2 * x2[i];
                            }
                        } else {
                            for (e, &wv) in wk.iter().enumerate() {
                                let xs = &xc[base + e..base + e + n];
                                for i in 0..n {
                                    acc[i] += wv * xs[i];
                                }
                            }
                        }
                    }
                }
            }
            // Keep only positions inside the output grid.
            let oc = &mut out[co * p..(co + 1) * p];
            let mut q = q0;
            while q < q0 + n {
                let (z, r) = (q / plane, q % plane);
                let (y, x) = (r / pw, r % pw);
                if y >= h {
                    q += plane - r;
                    continue;
                }
                if x >= wd {
                    q += pw - x;
                    continue;
                }
                let len = (wd - x).min(q0 + n - q);
                let o = (z * h + y) * wd + x;
                oc[o..o + len].copy_from_slice(&acc[q - q0..q - q0 + len]);
                q += len;
            }
        }
        q0 += n;
    }
}

#[inline(always)]
fn dw_body(xp: &[f32], dyq: &[f32], g: &Direct, dw: &mut [f32]) {
    let [kd, kh, kw] = g.k;
    let (cs, qlen) = (g.cstride(), g.qlen());
    let cout_g = g.cout / g.groups;
    let kdim = g.kdim();
    let mut part = vec![[0.0f32; 8]; g.cout * kdim];
    let mut q0 = 0;
    while q0 < qlen {
        let n = CHUNK.min(qlen - q0);
        let main = n - n % 32;
        for co in 0..g.cout {
            let grp = co / cout_g;
            let dyc = &dyq[co * qlen + q0..][..n];
            for ci in 0..g.cin_g {
                let xc = &xp[(grp * g.cin_g + ci) * cs..][..cs];
                for a in 0..kd {
                    for b in 0..kh {
                        let base = q0 + g.tap(a, b);
                        for e in 0..kw {
                            let xs = &xc[base + e..base + e + n];
                            // Four independent accumulators hide add latency.
                            let mut acc = [[0.0f32; 8]; 4];
                            for (dc, xv) in dyc[..main].chunks_exact(32).zip(xs[..main].chunks_exact(32)) {
                                let dc: &[f32; 32] = dc.try_into().unwrap();
                                let xv: &[f32; 32] = xv.try_into().unwrap();
                                for u in 0..4 {
                                    for l in 0..8 {
                                        acc[u][l] += dc[u * 8 + l] * xv[u * 8 + l];
                                    }
                                }
                            }
                            let s = &mut part[co * kdim + ((ci * kd + a) * kh + b) * kw + e];
                            for l in 0..8 {
                                s[l] += (acc[0][l] + acc[1][l]) + (acc[2][l] + acc[3][l]);
                            }
                            for i in main..n {
                                s[i % 8] += dyc[i] * xs[i];
                            }
                        }
                    }
                }
            }
        }
        q0 += n;
    }
    for (d, s) in dw.iter_mut().zip(&part) {
        *d += s.iter().sum::<f32>();
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn fwd_avx2(xp: &[f32], w: &[f32], g: &Direct, out: &mut [f32]) {
    fwd_body(xp, w, g, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dw_avx2(xp: &[f32], dyq: &[f32], g: &Direct, dw: &mut [f32]) {
    dw_body(xp, dyq, g, dw)
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Convolution of the padded input `xp`; `w` is `[cout, cin_g, kd, kh, kw]`.
pub fn forward(xp: &[f32], w: &[f32], g: &Direct) -> Vec<f32> {
    let mut out = vec![0.0f32; g.cout * g.sp.iter().product::<usize>()];
    if has_avx2() {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: the CPU supports avx2, checked above.
        unsafe {
            fwd_avx2(xp, w, g, &mut out)
        }
    } else {
        fwd_body(xp, w, g, &mut out)
    }
    out
}

/// `dy` (`[cout, D, H, W]`) laid out on the flat output span, zero at
/// discarded positions.
fn to_span(dy: &[f32], g: &Direct) -> Vec<f32> {
    let [d, h, w] = g.sp;
    let (qlen, pw, plane) = (g.qlen(), g.psp()[2], g.plane());
    let p = d * h * w;
    let mut out = vec![0.0f32; g.cout * qlen];
    for co in 0..g.cout {
        for z in 0..d {
            for y in 0..h {
                let src = co * p + (z * h + y) * w;
                let dst = co * qlen + z * plane + y * pw;
                out[dst..dst + w].copy_from_slice(&dy[src..src + w]);
            }
        }
    }
    out
}

/// Accumulate the weight gradient into `dw`.
pub fn weight_grad(xp: &[f32], dy: &[f32], g: &Direct, dw: &mut [f32]) {
    let dyq = to_span(dy, g);
    if has_avx2() {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: the CPU supports avx2, checked above.
        unsafe {
            dw_avx2(xp, &dyq, g, dw)
        }
    } else {
        dw_body(xp, &dyq, g, dw)
    }
}

/// Weights of the adjoint convolution: channels swapped within each group
/// and kernel flipped, so that `dx = forward(pad(dy), flipped)`.
pub fn flip_weights(w: &[f32], g: &Direct) -> Vec<f32> {
    let [kd, kh, kw] = g.k;
    let kn = kd * kh * kw;
    let cout_g = g.cout / g.groups;
    let mut out = vec![0.0f32; w.len()];
    for grp in 0..g.groups {
        for col in 0..cout_g {
            let co = grp * cout_g + col;
            for ci in 0..g.cin_g {
                let src = (co * g.cin_g + ci) * kn;
                let dst = ((grp * g.cin_g + ci) * cout_g + col) * kn;
                for i in 0..kn {
                    out[dst + kn - 1 - i] = w[src + i];
                }
            }
        }
    }
    out
}
