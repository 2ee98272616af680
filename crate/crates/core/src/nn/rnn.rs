//! Recurrent encoders that summarize a `[T, in]` sequence as its final hidden
//! state. Sequences are processed one sample at a time; only the first
//! `len` rows are read.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, join, sigmoid, Module, NnError, Real, Slot, Tensor};

/// One affine gate pre-activation `x·W + h·U + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<S = f32> {
    pub w: Tensor<S>,
    pub u: Tensor<S>,
    pub b: Tensor<S>,
}

#[derive(Default)]
struct GateAcc {
    w: Vec<f64>,
    u: Vec<f64>,
    b: Vec<f64>,
}

impl<S: Real> Gate<S> {
    fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize, bias: f64) -> Self {
        Gate {
            w: glorot(rng, input, hidden),
            u: glorot(rng, hidden, hidden),
            b: Tensor::filled(&[hidden], S::lit(bias)),
        }
    }

    fn hidden(&self) -> usize {
        self.b.len()
    }

    /// `x_t·W + b` for the first `len` rows, row-major `[len, hidden]`.
    fn input_proj(&self, seq: &Tensor<S>, len: usize) -> Vec<f64> {
        let h = self.hidden();
        let bias = self.b.to_f64_vec();
        let mut out = Vec::with_capacity(len * h);
        for t in 0..len {
            let mut acc = bias.clone();
            super::tensor::vec_mat_acc(seq.row(t), self.w.data(), h, &mut acc);
            out.extend(acc);
        }
        out
    }

    /// `acc += v·U`.
    fn add_hidden_proj(&self, v: &[f64], acc: &mut [f64]) {
        let h = self.hidden();
        let u = self.u.data();
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (a, w) in acc.iter_mut().zip(&u[i * h..(i + 1) * h]) {
                *a += vi * w.f64();
            }
        }
    }

    /// `out += U·da`, the gradient flowing back into the hidden input.
    fn backprop_hidden(&self, da: &[f64], out: &mut [f64]) {
        let h = self.hidden();
        let u = self.u.data();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &u[i * h..(i + 1) * h];
            *o += row.iter().zip(da).map(|(w, d)| w.f64() * d).sum::<f64>();
        }
    }

    fn acc(&self) -> GateAcc {
        GateAcc {
            w: vec![0.0; self.w.len()],
            u: vec![0.0; self.u.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    fn accumulate(acc: &mut GateAcc, x: &[S], h_in: &[f64], da: &[f64]) {
        let n = da.len();
        for (i, xv) in x.iter().enumerate() {
            let xv = xv.f64();
            if xv == 0.0 {
                continue;
            }
            for (o, d) in acc.w[i * n..(i + 1) * n].iter_mut().zip(da) {
                *o += xv * d;
            }
        }
        for (i, &hv) in h_in.iter().enumerate() {
            if hv == 0.0 {
                continue;
            }
            for (o, d) in acc.u[i * n..(i + 1) * n].iter_mut().zip(da) {
                *o += hv * d;
            }
        }
        for (o, d) in acc.b.iter_mut().zip(da) {
            *o += d;
        }
    }

    fn flush(acc: GateAcc, grad: &mut Gate<S>) {
        for (t, a) in [(&mut grad.w, acc.w), (&mut grad.u, acc.u), (&mut grad.b, acc.b)] {
            for (g, v) in t.data_mut().iter_mut().zip(a) {
                *g = S::lit(g.f64() + v);
            }
        }
    }
}

impl<S: Real> Module<S> for Gate<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        out.push((join(prefix, "w"), Slot::Param, &self.w));
        out.push((join(prefix, "u"), Slot::Param, &self.u));
        out.push((join(prefix, "b"), Slot::Param, &self.b));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        out.push((join(prefix, "w"), Slot::Param, &mut self.w));
        out.push((join(prefix, "u"), Slot::Param, &mut self.u));
        out.push((join(prefix, "b"), Slot::Param, &mut self.b));
    }
}

/// Rounds an `f64` through the storage type.
#[inline]
fn store<S: Real>(v: f64) -> f64 {
    S::lit(v).f64()
}

fn check_len<S: Real>(seq: &Tensor<S>, input: usize, len: usize) -> Result<(), NnError> {
    if seq.shape().len() != 2 || seq.cols() != input {
        return Err(NnError::shape("rnn input", seq.shape(), &[len, input]));
    }
    if len == 0 || len > seq.rows() {
        return Err(NnError::MaskOutOfRange { len, max: seq.rows() });
    }
    Ok(())
}

/// Gated recurrent unit:
///
/// ```text
/// z = σ(x·W_z + h·U_z + b_z)
/// r = σ(x·W_r + h·U_r + b_r)
/// h̃ = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
/// h' = z ⊙ h + (1 − z) ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<S = f32> {
    pub update: Gate<S>,
    pub reset: Gate<S>,
    pub candidate: Gate<S>,
}

#[derive(Debug, Clone)]
struct GruStep {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    steps: Vec<GruStep>,
}

impl<S: Real> Gru<S> {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Gru {
            update: Gate::new(rng, input, hidden, 0.0),
            reset: Gate::new(rng, input, hidden, 0.0),
            candidate: Gate::new(rng, input, hidden, 0.0),
        }
    }

    pub fn input_size(&self) -> usize {
        self.update.w.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.update.hidden()
    }

    /// Final hidden state after `len` steps from `h_0 = 0`.
    pub fn forward(&self, seq: &Tensor<S>, len: usize) -> Result<(Vec<S>, GruCache), NnError> {
        check_len(seq, self.input_size(), len)?;
        let hs = self.hidden_size();
        let xz = self.update.input_proj(seq, len);
        let xr = self.reset.input_proj(seq, len);
        let xh = self.candidate.input_proj(seq, len);
        let mut h = vec![0f64; hs];
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let span = t * hs..(t + 1) * hs;
            let mut az = xz[span.clone()].to_vec();
            self.update.add_hidden_proj(&h, &mut az);
            let mut ar = xr[span.clone()].to_vec();
            self.reset.add_hidden_proj(&h, &mut ar);
            let z: Vec<f64> = az.iter().map(|&a| store::<S>(sigmoid(a))).collect();
            let r: Vec<f64> = ar.iter().map(|&a| store::<S>(sigmoid(a))).collect();
            let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
            let mut ah = xh[span].to_vec();
            self.candidate.add_hidden_proj(&rh, &mut ah);
            let cand: Vec<f64> = ah.iter().map(|&a| store::<S>(a.tanh())).collect();
            let next: Vec<f64> = (0..hs)
                .map(|i| store::<S>(z[i] * h[i] + (1.0 - z[i]) * cand[i]))
                .collect();
            steps.push(GruStep {
                h_prev: std::mem::replace(&mut h, next),
                z,
                r,
                cand,
            });
        }
        Ok((h.into_iter().map(S::lit).collect(), GruCache { steps }))
    }

    /// Backpropagates `dL/dh_len` through time, accumulating into `grad`.
    pub fn backward(&self, seq: &Tensor<S>, cache: &GruCache, d_out: &[f64], grad: &mut Gru<S>) {
        let hs = self.hidden_size();
        let (mut gz, mut gr, mut gh) = (self.update.acc(), self.reset.acc(), self.candidate.acc());
        let mut dh = d_out.to_vec();
        for (t, step) in cache.steps.iter().enumerate().rev() {
            let x = seq.row(t);
            let mut dh_prev: Vec<f64> = (0..hs).map(|i| dh[i] * step.z[i]).collect();
            let da_z: Vec<f64> = (0..hs)
                .map(|i| {
                    let dz = dh[i] * (step.h_prev[i] - step.cand[i]);
                    dz * step.z[i] * (1.0 - step.z[i])
                })
                .collect();
            let da_h: Vec<f64> = (0..hs)
                .map(|i| dh[i] * (1.0 - step.z[i]) * (1.0 - step.cand[i] * step.cand[i]))
                .collect();
            let rh: Vec<f64> = (0..hs).map(|i| step.r[i] * step.h_prev[i]).collect();
            Gate::accumulate(&mut gh, x, &rh, &da_h);
            let mut d_rh = vec![0f64; hs];
            self.candidate.backprop_hidden(&da_h, &mut d_rh);
            let da_r: Vec<f64> = (0..hs)
                .map(|i| {
                    dh_prev[i] += d_rh[i] * step.r[i];
                    let dr = d_rh[i] * step.h_prev[i];
                    dr * step.r[i] * (1.0 - step.r[i])
                })
                .collect();
            Gate::accumulate(&mut gz, x, &step.h_prev, &da_z);
            Gate::accumulate(&mut gr, x, &step.h_prev, &da_r);
            self.update.backprop_hidden(&da_z, &mut dh_prev);
            self.reset.backprop_hidden(&da_r, &mut dh_prev);
            dh = dh_prev;
        }
        Gate::flush(gz, &mut grad.update);
        Gate::flush(gr, &mut grad.reset);
        Gate::flush(gh, &mut grad.candidate);
    }
}

impl<S: Real> Module<S> for Gru<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        self.update.collect(&join(prefix, "update"), out);
        self.reset.collect(&join(prefix, "reset"), out);
        self.candidate.collect(&join(prefix, "candidate"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        self.update.collect_mut(&join(prefix, "update"), out);
        self.reset.collect_mut(&join(prefix, "reset"), out);
        self.candidate.collect_mut(&join(prefix, "candidate"), out);
    }
}

/// Long short-term memory cell with input, forget and output gates.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<S = f32> {
    pub input: Gate<S>,
    pub forget: Gate<S>,
    pub cell: Gate<S>,
    pub output: Gate<S>,
}

#[derive(Debug, Clone)]
struct LstmStep {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<LstmStep>,
}

impl<S: Real> Lstm<S> {
    /// Forget-gate bias starts at 1.
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        Lstm {
            input: Gate::new(rng, input, hidden, 0.0),
            forget: Gate::new(rng, input, hidden, 1.0),
            cell: Gate::new(rng, input, hidden, 0.0),
            output: Gate::new(rng, input, hidden, 0.0),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input.w.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.input.hidden()
    }

    pub fn forward(&self, seq: &Tensor<S>, len: usize) -> Result<(Vec<S>, LstmCache), NnError> {
        check_len(seq, self.input_size(), len)?;
        let hs = self.hidden_size();
        let proj = [
            self.input.input_proj(seq, len),
            self.forget.input_proj(seq, len),
            self.cell.input_proj(seq, len),
            self.output.input_proj(seq, len),
        ];
        let gates = [&self.input, &self.forget, &self.cell, &self.output];
        let mut h = vec![0f64; hs];
        let mut c = vec![0f64; hs];
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let span = t * hs..(t + 1) * hs;
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(4);
            for (k, gate) in gates.iter().enumerate() {
                let mut a = proj[k][span.clone()].to_vec();
                gate.add_hidden_proj(&h, &mut a);
                let act: Vec<f64> = if k == 2 {
                    a.iter().map(|&v| store::<S>(v.tanh())).collect()
                } else {
                    a.iter().map(|&v| store::<S>(sigmoid(v))).collect()
                };
                acts.push(act);
            }
            let (i, f, g, o) = (&acts[0], &acts[1], &acts[2], &acts[3]);
            let c_next: Vec<f64> = (0..hs).map(|j| store::<S>(f[j] * c[j] + i[j] * g[j])).collect();
            let tanh_c: Vec<f64> = c_next.iter().map(|v| store::<S>(v.tanh())).collect();
            let h_next: Vec<f64> = (0..hs).map(|j| store::<S>(o[j] * tanh_c[j])).collect();
            let mut it = acts.into_iter();
            steps.push(LstmStep {
                h_prev: std::mem::replace(&mut h, h_next),
                c_prev: std::mem::replace(&mut c, c_next),
                i: it.next().unwrap(),
                f: it.next().unwrap(),
                g: it.next().unwrap(),
                o: it.next().unwrap(),
                tanh_c,
            });
        }
        Ok((h.into_iter().map(S::lit).collect(), LstmCache { steps }))
    }

    pub fn backward(&self, seq: &Tensor<S>, cache: &LstmCache, d_out: &[f64], grad: &mut Lstm<S>) {
        let hs = self.hidden_size();
        let gates = [&self.input, &self.forget, &self.cell, &self.output];
        let mut accs: Vec<GateAcc> = gates.iter().map(|g| g.acc()).collect();
        let mut dh = d_out.to_vec();
        let mut dc = vec![0f64; hs];
        for (t, s) in cache.steps.iter().enumerate().rev() {
            let x = seq.row(t);
            let mut da = [vec![0f64; hs], vec![0f64; hs], vec![0f64; hs], vec![0f64; hs]];
            for j in 0..hs {
                let d_o = dh[j] * s.tanh_c[j];
                let dcj = dc[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                let d_i = dcj * s.g[j];
                let d_g = dcj * s.i[j];
                let d_f = dcj * s.c_prev[j];
                dc[j] = dcj * s.f[j];
                da[0][j] = d_i * s.i[j] * (1.0 - s.i[j]);
                da[1][j] = d_f * s.f[j] * (1.0 - s.f[j]);
                da[2][j] = d_g * (1.0 - s.g[j] * s.g[j]);
                da[3][j] = d_o * s.o[j] * (1.0 - s.o[j]);
            }
            let mut dh_prev = vec![0f64; hs];
            for (k, gate) in gates.iter().enumerate() {
                Gate::accumulate(&mut accs[k], x, &s.h_prev, &da[k]);
                gate.backprop_hidden(&da[k], &mut dh_prev);
            }
            dh = dh_prev;
        }
        let targets = [&mut grad.input, &mut grad.forget, &mut grad.cell, &mut grad.output];
        for (acc, target) in accs.into_iter().zip(targets) {
            Gate::flush(acc, target);
        }
    }
}

impl<S: Real> Module<S> for Lstm<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        self.input.collect(&join(prefix, "input"), out);
        self.forget.collect(&join(prefix, "forget"), out);
        self.cell.collect(&join(prefix, "cell"), out);
        self.output.collect(&join(prefix, "output"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        self.input.collect_mut(&join(prefix, "input"), out);
        self.forget.collect_mut(&join(prefix, "forget"), out);
        self.cell.collect_mut(&join(prefix, "cell"), out);
        self.output.collect_mut(&join(prefix, "output"), out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    #[default]
    Gru,
    Lstm,
    Bigru,
}

impl std::fmt::Display for RnnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RnnKind::Gru => "gru",
            RnnKind::Lstm => "lstm",
            RnnKind::Bigru => "bigru",
        })
    }
}

impl std::str::FromStr for RnnKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(RnnKind::Gru),
            "lstm" => Ok(RnnKind::Lstm),
            "bigru" | "bi-gru" => Ok(RnnKind::Bigru),
            other => Err(format!("unknown rnn kind {other:?}; expected gru, lstm or bigru")),
        }
    }
}

/// Sequence encoder selected by [`RnnKind`].
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Rnn<S = f32> {
    Gru(Gru<S>),
    Lstm(Lstm<S>),
    /// Forward and reversed passes, final states concatenated.
    BiGru { forward: Gru<S>, backward: Gru<S> },
}

#[derive(Debug, Clone)]
pub enum RnnCache {
    Gru(GruCache),
    Lstm(LstmCache),
    BiGru(GruCache, GruCache),
}

fn reversed_prefix<S: Real>(seq: &Tensor<S>, len: usize) -> Tensor<S> {
    let data: Vec<S> = (0..len).rev().flat_map(|t| seq.row(t).iter().copied()).collect();
    Tensor::from_vec(&[len, seq.cols()], data).expect("rows copied whole")
}

impl<S: Real> Rnn<S> {
    pub fn new<R: Rng>(kind: RnnKind, rng: &mut R, input: usize, hidden: usize) -> Self {
        match kind {
            RnnKind::Gru => Rnn::Gru(Gru::new(rng, input, hidden)),
            RnnKind::Lstm => Rnn::Lstm(Lstm::new(rng, input, hidden)),
            RnnKind::Bigru => Rnn::BiGru {
                forward: Gru::new(rng, input, hidden),
                backward: Gru::new(rng, input, hidden),
            },
        }
    }

    pub fn kind(&self) -> RnnKind {
        match self {
            Rnn::Gru(_) => RnnKind::Gru,
            Rnn::Lstm(_) => RnnKind::Lstm,
            Rnn::BiGru { .. } => RnnKind::Bigru,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Rnn::Gru(g) => g.input_size(),
            Rnn::Lstm(l) => l.input_size(),
            Rnn::BiGru { forward, .. } => forward.input_size(),
        }
    }

    /// Width of the summary vector.
    pub fn output_size(&self) -> usize {
        match self {
            Rnn::Gru(g) => g.hidden_size(),
            Rnn::Lstm(l) => l.hidden_size(),
            Rnn::BiGru { forward, .. } => 2 * forward.hidden_size(),
        }
    }

    pub fn forward(&self, seq: &Tensor<S>, len: usize) -> Result<(Vec<S>, RnnCache), NnError> {
        match self {
            Rnn::Gru(g) => g.forward(seq, len).map(|(h, c)| (h, RnnCache::Gru(c))),
            Rnn::Lstm(l) => l.forward(seq, len).map(|(h, c)| (h, RnnCache::Lstm(c))),
            Rnn::BiGru { forward, backward } => {
                let (mut hf, cf) = forward.forward(seq, len)?;
                let (hb, cb) = backward.forward(&reversed_prefix(seq, len), len)?;
                hf.extend(hb);
                Ok((hf, RnnCache::BiGru(cf, cb)))
            }
        }
    }

    pub fn backward(&self, seq: &Tensor<S>, cache: &RnnCache, d_out: &[f64], grad: &mut Rnn<S>) {
        match (self, cache, grad) {
            (Rnn::Gru(g), RnnCache::Gru(c), Rnn::Gru(dg)) => g.backward(seq, c, d_out, dg),
            (Rnn::Lstm(l), RnnCache::Lstm(c), Rnn::Lstm(dl)) => l.backward(seq, c, d_out, dl),
            (
                Rnn::BiGru { forward, backward },
                RnnCache::BiGru(cf, cb),
                Rnn::BiGru {
                    forward: gf,
                    backward: gb,
                },
            ) => {
                let hs = forward.hidden_size();
                forward.backward(seq, cf, &d_out[..hs], gf);
                let len = cb.steps.len();
                backward.backward(&reversed_prefix(seq, len), cb, &d_out[hs..], gb);
            }
            _ => panic!("rnn cache/gradient variant mismatch"),
        }
    }
}

impl<S: Real> Module<S> for Rnn<S> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot, &'a Tensor<S>)>) {
        match self {
            Rnn::Gru(g) => g.collect(&join(prefix, "gru"), out),
            Rnn::Lstm(l) => l.collect(&join(prefix, "lstm"), out),
            Rnn::BiGru { forward, backward } => {
                forward.collect(&join(prefix, "bigru_fwd"), out);
                backward.collect(&join(prefix, "bigru_bwd"), out);
            }
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot, &'a mut Tensor<S>)>) {
        match self {
            Rnn::Gru(g) => g.collect_mut(&join(prefix, "gru"), out),
            Rnn::Lstm(l) => l.collect_mut(&join(prefix, "lstm"), out),
            Rnn::BiGru { forward, backward } => {
                forward.collect_mut(&join(prefix, "bigru_fwd"), out);
                backward.collect_mut(&join(prefix, "bigru_bwd"), out);
            }
        }
    }
}
