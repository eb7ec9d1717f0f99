//! A feed-forward feature stack, one GRU cell and a feed-forward head, with
//! parameters in one flat array and a hand-written reverse pass.
//!
//! Parameters are held as `f64` for the arithmetic but are kept
//! representable as `f32` (initialisation and optimiser steps round), so
//! checkpoints store them exactly.

use serde::{Deserialize, Serialize};

use leader_core::ScenarioStream;

use crate::NeuralError;

/// Layer widths. `feature` are ReLU layers before the GRU, `head` are ReLU
/// layers after it, followed by a linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input: usize,
    pub feature: Vec<usize>,
    pub hidden: usize,
    pub head: Vec<usize>,
    pub output: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    fn apply(&self, p: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.rows {
            let row = &p[self.w + i * self.cols..self.w + (i + 1) * self.cols];
            out.push(p[self.b + i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }

    /// Accumulates parameter gradients and adds `Wᵀ·dy` into `dx`.
    fn back(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: &mut [f64]) {
        for (i, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.b + i] += g;
            let w0 = self.w + i * self.cols;
            for j in 0..self.cols {
                grad[w0 + j] += g * x[j];
                dx[j] += g * p[w0 + j];
            }
        }
    }
}

/// Offsets of the nine GRU blocks: `W_u, U_u, b_u, W_r, U_r, b_r, W_h, U_h,
/// b_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Gru {
    offset: usize,
    input: usize,
    hidden: usize,
}

impl Gru {
    fn len(&self) -> usize {
        3 * (self.hidden * self.input + self.hidden * self.hidden + self.hidden)
    }

    /// `(W, U, b)` offsets of gate `g` (0 update, 1 reset, 2 candidate).
    fn gate(&self, g: usize) -> (usize, usize, usize) {
        let block = self.hidden * self.input + self.hidden * self.hidden + self.hidden;
        let w = self.offset + g * block;
        let u = w + self.hidden * self.input;
        (w, u, u + self.hidden * self.hidden)
    }

    fn affine(&self, p: &[f64], g: usize, x: &[f64], h: &[f64]) -> Vec<f64> {
        let (w, u, b) = self.gate(g);
        (0..self.hidden)
            .map(|i| {
                let wx: f64 = p[w + i * self.input..w + (i + 1) * self.input]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum();
                let uh: f64 = p[u + i * self.hidden..u + (i + 1) * self.hidden]
                    .iter()
                    .zip(h)
                    .map(|(a, b)| a * b)
                    .sum();
                wx + uh + p[b + i]
            })
            .collect()
    }

    fn forward(&self, p: &[f64], x: &[f64], h: &[f64]) -> GruCache {
        let u: Vec<f64> = self.affine(p, 0, x, h).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = self.affine(p, 1, x, h).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let c: Vec<f64> = self.affine(p, 2, x, &rh).into_iter().map(f64::tanh).collect();
        let out = (0..self.hidden).map(|i| (1.0 - u[i]) * h[i] + u[i] * c[i]).collect();
        GruCache {
            x: x.to_vec(),
            h: h.to_vec(),
            u,
            r,
            rh,
            c,
            out,
        }
    }

    fn gate_back(&self, p: &[f64], g: usize, x: &[f64], h: &[f64], da: &[f64], grad: &mut [f64], dx: &mut [f64], dh: &mut [f64]) {
        let (w, u, b) = self.gate(g);
        for (i, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[b + i] += d;
            for j in 0..self.input {
                grad[w + i * self.input + j] += d * x[j];
                dx[j] += d * p[w + i * self.input + j];
            }
            for j in 0..self.hidden {
                grad[u + i * self.hidden + j] += d * h[j];
                dh[j] += d * p[u + i * self.hidden + j];
            }
        }
    }

    fn backward(&self, p: &[f64], c: &GruCache, dout: &[f64], grad: &mut [f64], dx: &mut [f64], dh: &mut [f64]) {
        let n = self.hidden;
        let mut du = vec![0.0; n];
        let mut dc = vec![0.0; n];
        for i in 0..n {
            du[i] = dout[i] * (c.c[i] - c.h[i]) * c.u[i] * (1.0 - c.u[i]);
            dc[i] = dout[i] * c.u[i] * (1.0 - c.c[i] * c.c[i]);
            dh[i] += dout[i] * (1.0 - c.u[i]);
        }
        let mut drh = vec![0.0; n];
        self.gate_back(p, 2, &c.x, &c.rh, &dc, grad, dx, &mut drh);
        let dr: Vec<f64> = (0..n).map(|i| drh[i] * c.h[i] * c.r[i] * (1.0 - c.r[i])).collect();
        for i in 0..n {
            dh[i] += drh[i] * c.r[i];
        }
        self.gate_back(p, 0, &c.x, &c.h, &du, grad, dx, dh);
        self.gate_back(p, 1, &c.x, &c.h, &dr, grad, dx, dh);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
struct GruCache {
    x: Vec<f64>,
    h: Vec<f64>,
    u: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    c: Vec<f64>,
    out: Vec<f64>,
}

/// Parameter count of a standalone GRU cell.
pub fn gru_param_count(input: usize, hidden: usize) -> usize {
    Gru { offset: 0, input, hidden }.len()
}

/// One GRU step with parameters laid out as `W_u, U_u, b_u, W_r, U_r, b_r,
/// W_h, U_h, b_h` (row-major matrices).
pub fn gru_step(params: &[f64], x: &[f64], h: &[f64]) -> Result<Vec<f64>, NeuralError> {
    let (input, hidden) = (x.len(), h.len());
    let cell = Gru { offset: 0, input, hidden };
    if params.len() != cell.len() {
        return Err(NeuralError::Shape(format!(
            "GRU with input {input} and hidden {hidden} needs {} parameters, got {}",
            cell.len(),
            params.len()
        )));
    }
    Ok(cell.forward(params, x, h).out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Plan {
    feature: Vec<Dense>,
    gru: Gru,
    head: Vec<Dense>,
    out: Dense,
    len: usize,
}

impl NetSpec {
    fn plan(&self) -> Plan {
        let mut offset = 0;
        let mut dense = |rows: usize, cols: usize| {
            let d = Dense {
                w: offset,
                b: offset + rows * cols,
                rows,
                cols,
            };
            offset += d.len();
            d
        };
        let mut width = self.input;
        let mut feature = Vec::new();
        for &w in &self.feature {
            feature.push(dense(w, width));
            width = w;
        }
        let gru = Gru {
            offset,
            input: width,
            hidden: self.hidden,
        };
        offset += gru.len();
        let mut dense = |rows: usize, cols: usize| {
            let d = Dense {
                w: offset,
                b: offset + rows * cols,
                rows,
                cols,
            };
            offset += d.len();
            d
        };
        let mut width = self.hidden;
        let mut head = Vec::new();
        for &w in &self.head {
            head.push(dense(w, width));
            width = w;
        }
        let out = dense(self.output, width);
        Plan {
            feature,
            gru,
            head,
            out,
            len: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.plan().len
    }

    /// Names and element counts of the parameter arrays in storage order.
    pub fn arrays(&self) -> Vec<(String, usize)> {
        let p = self.plan();
        let mut out = Vec::new();
        for (i, d) in p.feature.iter().enumerate() {
            out.push((format!("feature{i}.weight"), d.rows * d.cols));
            out.push((format!("feature{i}.bias"), d.rows));
        }
        let (i, h) = (p.gru.input, p.gru.hidden);
        for gate in ["update", "reset", "candidate"] {
            out.push((format!("gru.{gate}.input_weight"), h * i));
            out.push((format!("gru.{gate}.hidden_weight"), h * h));
            out.push((format!("gru.{gate}.bias"), h));
        }
        for (i, d) in p.head.iter().enumerate() {
            out.push((format!("head{i}.weight"), d.rows * d.cols));
            out.push((format!("head{i}.bias"), d.rows));
        }
        out.push(("output.weight".into(), p.out.rows * p.out.cols));
        out.push(("output.bias".into(), p.out.rows));
        out
    }
}

/// Round to the nearest `f32`.
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: NetSpec,
    data: Vec<f64>,
    version: u64,
}

impl NetworkParams {
    pub fn zeros(spec: NetSpec) -> Self {
        let n = spec.param_count();
        Self {
            spec,
            data: vec![0.0; n],
            version: 0,
        }
    }

    /// Uniform fan-in initialisation `U(-1/√fan_in, 1/√fan_in)`, biases zero.
    pub fn init(spec: NetSpec, seed: u64) -> Self {
        let mut p = Self::zeros(spec);
        let plan = p.spec.plan();
        let mut s = ScenarioStream::new(seed);
        let mut fill = |data: &mut [f64], start: usize, count: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in &mut data[start..start + count] {
                *v = round_f32((2.0 * s.next_uniform() - 1.0) * bound);
            }
        };
        for d in plan.feature.iter().chain(&plan.head).chain(std::iter::once(&plan.out)) {
            fill(&mut p.data, d.w, d.rows * d.cols, d.cols);
        }
        let g = plan.gru;
        for gate in 0..3 {
            let (w, u, _) = g.gate(gate);
            fill(&mut p.data, w, g.hidden * g.input, g.input + g.hidden);
            fill(&mut p.data, u, g.hidden * g.hidden, g.input + g.hidden);
        }
        p
    }

    /// Wraps existing values; they are rounded to `f32`.
    pub fn from_values(spec: NetSpec, values: Vec<f64>, version: u64) -> Result<Self, NeuralError> {
        if values.len() != spec.param_count() {
            return Err(NeuralError::Shape(format!(
                "spec needs {} parameters, got {}",
                spec.param_count(),
                values.len()
            )));
        }
        Ok(Self {
            spec,
            data: values.into_iter().map(round_f32).collect(),
            version,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Raw mutable access (gradient checks, hand-set fixtures). Values
    /// written here need not be `f32`-representable.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Output, new memory and the cache needed by [`NetworkParams::backward`].
    pub fn forward(&self, x: &[f64], h: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Cache), NeuralError> {
        if x.len() != self.spec.input || h.len() != self.spec.hidden {
            return Err(NeuralError::Shape(format!(
                "expected input {} and memory {}, got {} and {}",
                self.spec.input,
                self.spec.hidden,
                x.len(),
                h.len()
            )));
        }
        let plan = self.spec.plan();
        let p = &self.data;
        let mut acts = vec![x.to_vec()];
        let mut buf = Vec::new();
        let mut layer = 0;
        for d in &plan.feature {
            d.apply(p, acts.last().unwrap(), &mut buf);
            check(&buf, layer)?;
            acts.push(buf.iter().map(|v| v.max(0.0)).collect());
            layer += 1;
        }
        let gru = plan.gru.forward(p, acts.last().unwrap(), h);
        check(&gru.out, layer)?;
        layer += 1;
        let mut head_acts = vec![gru.out.clone()];
        for d in &plan.head {
            d.apply(p, head_acts.last().unwrap(), &mut buf);
            check(&buf, layer)?;
            head_acts.push(buf.iter().map(|v| v.max(0.0)).collect());
            layer += 1;
        }
        let mut out = Vec::new();
        plan.out.apply(p, head_acts.last().unwrap(), &mut out);
        check(&out, layer)?;
        let memory = gru.out.clone();
        Ok((
            out,
            memory,
            Cache {
                acts,
                gru,
                head_acts,
            },
        ))
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output` and `∂L/∂memory'`,
    /// and returns `(∂L/∂input, ∂L/∂memory)`.
    pub fn backward(&self, cache: &Cache, d_out: &[f64], d_memory: Option<&[f64]>, grad: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let plan = self.spec.plan();
        let p = &self.data;
        let mut dy = d_out.to_vec();
        let mut dx = vec![0.0; plan.out.cols];
        plan.out.back(p, cache.head_acts.last().unwrap(), &dy, grad, &mut dx);
        for (k, d) in plan.head.iter().enumerate().rev() {
            // head_acts[k + 1] is the ReLU output of head layer k
            dy = dx
                .iter()
                .zip(&cache.head_acts[k + 1])
                .map(|(g, a)| if *a > 0.0 { *g } else { 0.0 })
                .collect();
            dx = vec![0.0; d.cols];
            d.back(p, &cache.head_acts[k], &dy, grad, &mut dx);
        }
        let mut dh_out = dx;
        if let Some(m) = d_memory {
            for (a, b) in dh_out.iter_mut().zip(m) {
                *a += b;
            }
        }
        let mut dx = vec![0.0; plan.gru.input];
        let mut dh = vec![0.0; plan.gru.hidden];
        plan.gru.backward(p, &cache.gru, &dh_out, grad, &mut dx, &mut dh);
        for (k, d) in plan.feature.iter().enumerate().rev() {
            dy = dx
                .iter()
                .zip(&cache.acts[k + 1])
                .map(|(g, a)| if *a > 0.0 { *g } else { 0.0 })
                .collect();
            dx = vec![0.0; d.cols];
            d.back(p, &cache.acts[k], &dy, grad, &mut dx);
        }
        (dx, dh)
    }
}

fn check(values: &[f64], layer: usize) -> Result<(), NeuralError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NeuralError::NonFinite { layer })
    }
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
    gru: GruCache,
    head_acts: Vec<Vec<f64>>,
}

impl Cache {
    /// Which ReLU units were active, in layer order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.acts[1..]
            .iter()
            .chain(&self.head_acts[1..])
            .flat_map(|layer| layer.iter().map(|&a| a > 0.0))
            .collect()
    }
}
