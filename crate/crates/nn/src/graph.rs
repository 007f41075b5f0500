//! Tape of tensor operations with reverse-mode gradients. Each network
//! forward pass records into a fresh [`Graph`]; [`Graph::backward`] then
//! accumulates parameter gradients into a [`Grads`] buffer.

use crate::error::{NnError, Result};
use crate::kernels::{self, ConvGeom, PoolGeom};
use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::Tensor;

pub type NodeId = usize;

const NORM_EPS: f32 = 1e-5;

#[derive(Debug)]
enum Op {
    Input,
    Conv {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
        geom: ConvGeom,
    },
    UpConv {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
        f: [usize; 3],
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<u32>,
    },
    Upsample {
        x: NodeId,
        f: [usize; 3],
    },
    InstanceNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
    },
    LeakyRelu {
        x: NodeId,
        slope: f32,
    },
    Sigmoid {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Concat {
        xs: Vec<NodeId>,
    },
    GlobalAvg {
        x: NodeId,
    },
    ChannelScale {
        x: NodeId,
        s: NodeId,
    },
    MaskMul {
        x: NodeId,
        mask: Vec<f32>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn shape(&self, id: NodeId) -> [usize; 4] {
        self.nodes[id].value.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input, false)
    }

    /// "Same" convolution; `w` has shape `[cout, cin/groups, kd, kh, kw]`.
    pub fn conv(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>, groups: usize) -> Result<NodeId> {
        let xs = self.shape(x);
        let ws = &self.params.get(w).shape;
        if ws.len() != 5 || groups == 0 || xs[0] % groups != 0 || ws[0] % groups != 0 || ws[1] * groups != xs[0] {
            return Err(NnError::Shape(format!(
                "conv weight {:?} incompatible with input {:?} (groups {groups})",
                ws, xs
            )));
        }
        if ws[2..].iter().any(|k| k % 2 == 0) {
            return Err(NnError::Shape("conv kernel sizes must be odd".into()));
        }
        let geom = ConvGeom {
            cin: xs[0],
            cout: ws[0],
            groups,
            k: [ws[2], ws[3], ws[4]],
            sp: [xs[1], xs[2], xs[3]],
        };
        let out = kernels::conv_forward(
            &self.nodes[x].value.data,
            self.params.value(w),
            b.map(|b| self.params.value(b)),
            &geom,
        );
        let t = Tensor::from_vec([geom.cout, xs[1], xs[2], xs[3]], out)?;
        Ok(self.push(t, Op::Conv { x, w, b, geom }, true))
    }

    /// Transposed convolution with kernel = stride; `w` is `[cin, cout, fd, fh, fw]`.
    pub fn upconv(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> Result<NodeId> {
        let xs = self.shape(x);
        let ws = self.params.get(w).shape.clone();
        if ws.len() != 5 || ws[0] != xs[0] {
            return Err(NnError::Shape(format!("upconv weight {ws:?} vs input {xs:?}")));
        }
        let f = [ws[2], ws[3], ws[4]];
        let sp = [xs[1], xs[2], xs[3]];
        let out = kernels::upconv_forward(
            &self.nodes[x].value.data,
            self.params.value(w),
            b.map(|b| self.params.value(b)),
            xs[0],
            ws[1],
            sp,
            f,
        );
        let t = Tensor::from_vec([ws[1], sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]], out)?;
        Ok(self.push(t, Op::UpConv { x, w, b, f }, true))
    }

    pub fn maxpool(&mut self, x: NodeId, geom: PoolGeom) -> Result<NodeId> {
        let xs = self.shape(x);
        let sp = [xs[1], xs[2], xs[3]];
        for a in 0..3 {
            if geom.s[a] == 0 || geom.k[a] == 0 || geom.pad[a] >= geom.k[a] || sp[a] + 2 * geom.pad[a] < geom.k[a] {
                return Err(NnError::Shape(format!("pool {geom:?} on spatial {sp:?}")));
            }
        }
        let (out, argmax) = kernels::maxpool_forward(&self.nodes[x].value.data, xs[0], sp, &geom);
        let o = geom.out_spatial(sp);
        let t = Tensor::from_vec([xs[0], o[0], o[1], o[2]], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::MaxPool { x, argmax }, ng))
    }

    pub fn upsample(&mut self, x: NodeId, f: [usize; 3]) -> Result<NodeId> {
        let xs = self.shape(x);
        if f.contains(&0) {
            return Err(NnError::Shape("zero upsampling factor".into()));
        }
        if f == [1, 1, 1] {
            return Ok(x);
        }
        let sp = [xs[1], xs[2], xs[3]];
        let out = kernels::upsample_forward(&self.nodes[x].value.data, xs[0], sp, f);
        let t = Tensor::from_vec([xs[0], sp[0] * f[0], sp[1] * f[1], sp[2] * f[2]], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::Upsample { x, f }, ng))
    }

    /// Per-channel normalisation over the spatial extent with affine parameters.
    pub fn instance_norm(&mut self, x: NodeId, gamma: ParamId, beta: ParamId) -> Result<NodeId> {
        let xt = &self.nodes[x].value;
        let (c, n) = (xt.channels(), xt.spatial_len());
        if self.params.value(gamma).len() != c || self.params.value(beta).len() != c {
            return Err(NnError::Shape("norm parameter length".into()));
        }
        let (g, b) = (self.params.value(gamma), self.params.value(beta));
        let mut xhat = vec![0.0f32; c * n];
        let mut inv_std = vec![0.0f32; c];
        let mut out = vec![0.0f32; c * n];
        for ch in 0..c {
            let xc = xt.channel(ch);
            let mean = xc.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let var = xc.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var as f32 + NORM_EPS).sqrt();
            inv_std[ch] = is;
            for i in 0..n {
                let h = (xc[i] - mean as f32) * is;
                xhat[ch * n + i] = h;
                out[ch * n + i] = g[ch] * h + b[ch];
            }
        }
        let t = Tensor::from_vec(xt.shape, out)?;
        Ok(self.push(
            t,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            true,
        ))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f32) -> NodeId {
        let xt = &self.nodes[x].value;
        let data = xt.data.iter().map(|&v| v.max(0.0) + slope * v.min(0.0)).collect();
        let t = Tensor { shape: xt.shape, data };
        let ng = self.ng(x);
        self.push(t, Op::LeakyRelu { x, slope }, ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let xt = &self.nodes[x].value;
        let data = xt.data.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let t = Tensor { shape: xt.shape, data };
        let ng = self.ng(x);
        self.push(t, Op::Sigmoid { x }, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (at, bt) = (&self.nodes[a].value, &self.nodes[b].value);
        if at.shape != bt.shape {
            return Err(NnError::Shape(format!("add {:?} + {:?}", at.shape, bt.shape)));
        }
        let data = at.data.iter().zip(&bt.data).map(|(x, y)| x + y).collect();
        let t = Tensor { shape: at.shape, data };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = *xs.first().ok_or_else(|| NnError::Shape("empty concat".into()))?;
        let sp = self.nodes[first].value.spatial();
        let mut c = 0;
        let mut data = Vec::new();
        for &x in xs {
            let t = &self.nodes[x].value;
            if t.spatial() != sp {
                return Err(NnError::Shape(format!("concat spatial {:?} vs {sp:?}", t.spatial())));
            }
            c += t.channels();
            data.extend_from_slice(&t.data);
        }
        let t = Tensor::from_vec([c, sp[0], sp[1], sp[2]], data)?;
        let ng = xs.iter().any(|&x| self.ng(x));
        Ok(self.push(t, Op::Concat { xs: xs.to_vec() }, ng))
    }

    /// `[C, D, H, W]` to `[C, 1, 1, 1]` by spatial mean.
    pub fn global_avg(&mut self, x: NodeId) -> NodeId {
        let xt = &self.nodes[x].value;
        let n = xt.spatial_len() as f32;
        let data = (0..xt.channels())
            .map(|c| xt.channel(c).iter().sum::<f32>() / n)
            .collect();
        let t = Tensor {
            shape: [xt.channels(), 1, 1, 1],
            data,
        };
        let ng = self.ng(x);
        self.push(t, Op::GlobalAvg { x }, ng)
    }

    /// Multiply channel `c` of `x` by scalar `s[c]` (`s` is `[C, 1, 1, 1]`).
    pub fn channel_scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (xt, st) = (&self.nodes[x].value, &self.nodes[s].value);
        if st.shape != [xt.channels(), 1, 1, 1] {
            return Err(NnError::Shape(format!(
                "channel scale {:?} for {:?}",
                st.shape, xt.shape
            )));
        }
        let n = xt.spatial_len();
        let mut data = xt.data.clone();
        for c in 0..xt.channels() {
            data[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= st.data[c]);
        }
        let t = Tensor { shape: xt.shape, data };
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(t, Op::ChannelScale { x, s }, ng))
    }

    /// Elementwise product with a constant mask of the same shape.
    pub fn mask_mul(&mut self, x: NodeId, mask: Vec<f32>) -> Result<NodeId> {
        let xt = &self.nodes[x].value;
        if mask.len() != xt.data.len() {
            return Err(NnError::Shape("mask length".into()));
        }
        let data = xt.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor { shape: xt.shape, data };
        let ng = self.ng(x);
        Ok(self.push(t, Op::MaskMul { x, mask }, ng))
    }

    /// Reverse sweep seeded with `d(loss)/d(node)` for each `(node, grad)`;
    /// parameter gradients are added into `grads`.
    pub fn backward(&self, seeds: &[(NodeId, &[f32])], grads: &mut Grads) -> Result<()> {
        if grads.data.len() != self.params.len() {
            return Err(NnError::Shape("gradient buffer does not match parameters".into()));
        }
        let mut g: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        let mut top = 0;
        for &(id, s) in seeds {
            if s.len() != self.nodes[id].value.data.len() {
                return Err(NnError::Shape(format!("seed length for node {id}")));
            }
            accum(&mut g[id], s);
            top = top.max(id);
        }
        for id in (0..=top).rev() {
            let Some(dy) = g[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Conv { x, w, b, geom } => {
                    let want = self.ng(*x);
                    let (dw, db) = split_wb(grads, *w, *b);
                    let dx = kernels::conv_backward(
                        &self.nodes[*x].value.data,
                        self.params.value(*w),
                        &dy,
                        geom,
                        dw,
                        db,
                        want,
                    );
                    if let Some(dx) = dx {
                        accum_owned(&mut g[*x], dx);
                    }
                }
                Op::UpConv { x, w, b, f } => {
                    let xs = self.shape(*x);
                    let want = self.ng(*x);
                    let (dw, db) = split_wb(grads, *w, *b);
                    let dx = kernels::upconv_backward(
                        &self.nodes[*x].value.data,
                        self.params.value(*w),
                        &dy,
                        xs[0],
                        node.value.shape[0],
                        [xs[1], xs[2], xs[3]],
                        *f,
                        dw,
                        db,
                        want,
                    );
                    if let Some(dx) = dx {
                        accum_owned(&mut g[*x], dx);
                    }
                }
                Op::MaxPool { x, argmax } => {
                    let xt = &self.nodes[*x].value;
                    let dx = kernels::maxpool_backward(&dy, argmax, xt.channels(), xt.spatial_len());
                    accum_owned(&mut g[*x], dx);
                }
                Op::Upsample { x, f } => {
                    let xt = &self.nodes[*x].value;
                    let dx = kernels::upsample_backward(&dy, xt.channels(), xt.spatial(), *f);
                    accum_owned(&mut g[*x], dx);
                }
                Op::InstanceNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let shape = node.value.shape;
                    let (c, n) = (shape[0], shape[1] * shape[2] * shape[3]);
                    let gv = self.params.value(*gamma);
                    let mut dgam = vec![0.0f32; c];
                    let mut dbet = vec![0.0f32; c];
                    let want = self.ng(*x);
                    let mut dx = if want { vec![0.0f32; c * n] } else { Vec::new() };
                    for ch in 0..c {
                        let r = ch * n..(ch + 1) * n;
                        let (dyc, hc) = (&dy[r.clone()], &xhat[r.clone()]);
                        let mut s1 = 0.0f64;
                        let mut s2 = 0.0f64;
                        for i in 0..n {
                            s1 += dyc[i] as f64;
                            s2 += (dyc[i] * hc[i]) as f64;
                        }
                        dgam[ch] = s2 as f32;
                        dbet[ch] = s1 as f32;
                        if want {
                            let k = gv[ch] * inv_std[ch];
                            let (m1, m2) = ((s1 / n as f64) as f32, (s2 / n as f64) as f32);
                            for i in 0..n {
                                dx[ch * n + i] = k * (dyc[i] - m1 - hc[i] * m2);
                            }
                        }
                    }
                    add_into(&mut grads.data[*gamma], &dgam);
                    add_into(&mut grads.data[*beta], &dbet);
                    if want {
                        accum_owned(&mut g[*x], dx);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = &self.nodes[*x].value.data;
                    let dx = dy
                        .iter()
                        .zip(xv)
                        .map(|(&d, &v)| d * if v > 0.0 { 1.0 } else { *slope })
                        .collect();
                    accum_owned(&mut g[*x], dx);
                }
                Op::Sigmoid { x } => {
                    let dx = dy
                        .iter()
                        .zip(&node.value.data)
                        .map(|(&d, &s)| d * s * (1.0 - s))
                        .collect();
                    accum_owned(&mut g[*x], dx);
                }
                Op::Add { a, b } => {
                    if self.ng(*a) {
                        accum(&mut g[*a], &dy);
                    }
                    if self.ng(*b) {
                        accum_owned(&mut g[*b], dy);
                    }
                }
                Op::Concat { xs } => {
                    let mut off = 0;
                    for &x in xs {
                        let len = self.nodes[x].value.data.len();
                        if self.ng(x) {
                            accum(&mut g[x], &dy[off..off + len]);
                        }
                        off += len;
                    }
                }
                Op::GlobalAvg { x } => {
                    let xt = &self.nodes[*x].value;
                    let n = xt.spatial_len();
                    let mut dx = vec![0.0f32; xt.data.len()];
                    for c in 0..xt.channels() {
                        let v = dy[c] / n as f32;
                        dx[c * n..(c + 1) * n].fill(v);
                    }
                    accum_owned(&mut g[*x], dx);
                }
                Op::ChannelScale { x, s } => {
                    let xt = &self.nodes[*x].value;
                    let st = &self.nodes[*s].value;
                    let n = xt.spatial_len();
                    if self.ng(*s) {
                        let ds = (0..xt.channels())
                            .map(|c| {
                                xt.channel(c)
                                    .iter()
                                    .zip(&dy[c * n..(c + 1) * n])
                                    .map(|(a, b)| a * b)
                                    .sum::<f32>()
                            })
                            .collect();
                        accum_owned(&mut g[*s], ds);
                    }
                    if self.ng(*x) {
                        let mut dx = dy;
                        for c in 0..xt.channels() {
                            dx[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= st.data[c]);
                        }
                        accum_owned(&mut g[*x], dx);
                    }
                }
                Op::MaskMul { x, mask } => {
                    let dx = dy.iter().zip(mask).map(|(a, m)| a * m).collect();
                    accum_owned(&mut g[*x], dx);
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn accum(slot: &mut Option<Vec<f32>>, src: &[f32]) {
    match slot {
        Some(v) => add_into(v, src),
        None => *slot = Some(src.to_vec()),
    }
}

fn accum_owned(slot: &mut Option<Vec<f32>>, src: Vec<f32>) {
    match slot {
        Some(v) => add_into(v, &src),
        None => *slot = Some(src),
    }
}

/// Disjoint mutable borrows of a weight gradient and its optional bias gradient.
fn split_wb(grads: &mut Grads, w: ParamId, b: Option<ParamId>) -> (&mut [f32], Option<&mut [f32]>) {
    match b {
        None => (&mut grads.data[w], None),
        Some(b) => {
            assert_ne!(w, b);
            if w < b {
                let (lo, hi) = grads.data.split_at_mut(b);
                (&mut lo[w], Some(&mut hi[0]))
            } else {
                let (lo, hi) = grads.data.split_at_mut(w);
                (&mut hi[0], Some(&mut lo[b]))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use ctvseg_core::CounterRng;

    fn rand_tensor(shape: [usize; 4], rng: &mut CounterRng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.normal() as f32).collect()).unwrap()
    }

    /// Builds a graph touching every op and returns (loss, output id) with loss = <r, out>.
    fn build<'a>(ps: &'a ParamStore, ids: &[ParamId], x: &Tensor, r: &[f32], mask: &[f32]) -> (Graph<'a>, NodeId, f64) {
        let mut g = Graph::new(ps);
        let i = g.input(x.clone());
        let c1 = g.conv(i, ids[0], Some(ids[1]), 1).unwrap();
        let n1 = g.instance_norm(c1, ids[2], ids[3]).unwrap();
        let a1 = g.leaky_relu(n1, 0.01);
        let p = g
            .maxpool(
                a1,
                PoolGeom {
                    k: [1, 2, 2],
                    s: [1, 2, 2],
                    pad: [0; 3],
                },
            )
            .unwrap();
        let c2 = g.conv(p, ids[4], None, 2).unwrap();
        let gap = g.global_avg(c2);
        let se = g.conv(gap, ids[5], Some(ids[6]), 1).unwrap();
        let sg = g.sigmoid(se);
        let sc = g.channel_scale(c2, sg).unwrap();
        let u = g.upconv(sc, ids[7], Some(ids[8])).unwrap();
        let mp = g
            .maxpool(
                u,
                PoolGeom {
                    k: [3; 3],
                    s: [1; 3],
                    pad: [1; 3],
                },
            )
            .unwrap();
        let up = g.upsample(p, [1, 2, 2]).unwrap();
        let cat = g.concat(&[mp, up]).unwrap();
        let m = g.mask_mul(cat, mask.to_vec()).unwrap();
        let add = g.add(m, m).unwrap();
        let out = g.sigmoid(add);
        let loss = g
            .value(out)
            .data
            .iter()
            .zip(r)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        (g, out, loss)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = CounterRng::new(3);
        let mut ps = ParamStore::new();
        let ids = vec![
            ps.add("c1.w", &[4, 2, 3, 3, 3], Init::He { fan_in: 54, gain: 1.0 }, &mut rng),
            ps.add("c1.b", &[4], Init::He { fan_in: 1, gain: 0.1 }, &mut rng),
            ps.add("n1.g", &[4], Init::He { fan_in: 1, gain: 0.5 }, &mut rng),
            ps.add("n1.b", &[4], Init::He { fan_in: 1, gain: 0.1 }, &mut rng),
            ps.add("c2.w", &[4, 2, 1, 3, 3], Init::He { fan_in: 18, gain: 1.0 }, &mut rng),
            ps.add("se.w", &[4, 4, 1, 1, 1], Init::He { fan_in: 4, gain: 1.0 }, &mut rng),
            ps.add("se.b", &[4], Init::He { fan_in: 1, gain: 0.1 }, &mut rng),
            ps.add("up.w", &[4, 3, 1, 2, 2], Init::He { fan_in: 4, gain: 1.0 }, &mut rng),
            ps.add("up.b", &[3], Init::He { fan_in: 1, gain: 0.1 }, &mut rng),
        ];
        for v in ps.value_mut(2) {
            *v += 1.0;
        }
        let x = rand_tensor([2, 3, 4, 4], &mut rng);
        let r: Vec<f32> = (0..7 * 48).map(|_| rng.normal() as f32).collect();
        let mask: Vec<f32> = (0..7 * 48)
            .map(|_| if rng.bernoulli(0.8) { 1.25 } else { 0.0 })
            .collect();
        let (g, out, _) = build(&ps, &ids, &x, &r, &mask);
        let mut grads = ps.zero_grads();
        g.backward(&[(out, &r)], &mut grads).unwrap();
        drop(g);
        let h = 1e-2f32;
        for (pid, &id) in ids.iter().enumerate() {
            for k in [0, ps.value(id).len() / 2, ps.value(id).len() - 1] {
                let mut pp = ps.clone();
                pp.value_mut(id)[k] += h;
                let lp = build(&pp, &ids, &x, &r, &mask).2;
                pp.value_mut(id)[k] -= 2.0 * h;
                let lm = build(&pp, &ids, &x, &r, &mask).2;
                let fd = (lp - lm) / (2.0 * h as f64);
                let an = grads.data[id][k] as f64;
                assert!(
                    (fd - an).abs() < 2e-2 * fd.abs().max(an.abs()).max(0.05),
                    "param {pid} index {k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = CounterRng::new(1);
        let mut ps = ParamStore::new();
        let w = ps.add("w", &[4, 3, 3, 3, 3], Init::Zeros, &mut rng);
        let we = ps.add("we", &[4, 2, 2, 2, 2], Init::Zeros, &mut rng);
        let mut g = Graph::new(&ps);
        let x = g.input(Tensor::zeros([2, 2, 2, 2]));
        assert!(g.conv(x, w, None, 1).is_err());
        assert!(g.conv(x, we, None, 1).is_err());
        let y = g.input(Tensor::zeros([3, 2, 2, 2]));
        assert!(g.add(x, y).is_err());
        let z = g.input(Tensor::zeros([1, 1, 2, 2]));
        assert!(g.concat(&[x, z]).is_err());
        assert!(g.mask_mul(x, vec![1.0; 3]).is_err());
    }
}
