use rand::Rng;

use super::{uniform_fill, Activation, ParameterSet, Slot};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y += W x` for a row-major `rows × cols` matrix.
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (row, out) in w.chunks_exact(cols).zip(y.iter_mut()) {
        *out += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += Wᵀ dy` and `dW += dy xᵀ`.
fn matvec_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], dx: &mut [f64]) {
    let cols = x.len();
    for ((row, drow), g) in w.chunks_exact(cols).zip(dw.chunks_exact_mut(cols)).zip(dy) {
        if *g == 0.0 {
            continue;
        }
        for j in 0..cols {
            drow[j] += g * x[j];
            dx[j] += g * row[j];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    w: Slot,
    b: Slot,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl Dense {
    pub(crate) fn alloc(
        params: &mut ParameterSet,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
    ) -> Self {
        let w = params.alloc(format!("{name}.w"), &[output, input]);
        let b = params.alloc(format!("{name}.b"), &[output]);
        Self {
            input,
            output,
            activation,
            w,
            b,
        }
    }

    pub(crate) fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng) {
        let bound = 1.0 / (self.input as f64).sqrt();
        uniform_fill(params.get_mut(self.w), bound, rng);
        uniform_fill(params.get_mut(self.b), bound, rng);
    }

    pub fn forward(&self, params: &ParameterSet, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if x.len() != self.input {
            return Err(Error::Dimension {
                layer: format!("dense {}x{}", self.output, self.input),
                expected: self.input,
                got: x.len(),
            });
        }
        let mut z = params.get(self.b).to_vec();
        matvec_acc(params.get(self.w), x, &mut z);
        let y = match self.activation {
            Activation::Identity => z.clone(),
            Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Softmax => super::softmax(&z),
        };
        Ok((
            y.clone(),
            DenseCache {
                x: x.to_vec(),
                z,
                y,
            },
        ))
    }

    pub fn backward(
        &self,
        params: &ParameterSet,
        cache: &DenseCache,
        dy: &[f64],
        grads: &mut ParameterSet,
    ) -> Vec<f64> {
        let dz: Vec<f64> = match self.activation {
            Activation::Identity => dy.to_vec(),
            Activation::Relu => dy
                .iter()
                .zip(&cache.z)
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect(),
            Activation::Tanh => dy
                .iter()
                .zip(&cache.y)
                .map(|(g, y)| g * (1.0 - y * y))
                .collect(),
            Activation::Softmax => {
                let dot: f64 = dy.iter().zip(&cache.y).map(|(g, y)| g * y).sum();
                dy.iter()
                    .zip(&cache.y)
                    .map(|(g, y)| y * (g - dot))
                    .collect()
            }
        };
        for (gb, d) in grads.get_mut(self.b).iter_mut().zip(&dz) {
            *gb += d;
        }
        let mut dx = vec![0.0; self.input];
        matvec_backward(
            params.get(self.w),
            &cache.x,
            &dz,
            grads.get_mut(self.w),
            &mut dx,
        );
        dx
    }
}

/// Standard LSTM cell unrolled over a sequence; gate blocks ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    wx: Slot,
    wh: Slot,
    b: Slot,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    xs: Vec<f64>,
    /// `h_0 ..= h_T`, each `hidden` wide.
    hs: Vec<f64>,
    /// `c_0 ..= c_T`.
    cs: Vec<f64>,
    /// Post-nonlinearity gates `[i, f, g, o]` per step.
    gates: Vec<f64>,
    steps: usize,
}

impl Lstm {
    pub(crate) fn alloc(
        params: &mut ParameterSet,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let wx = params.alloc(format!("{name}.wx"), &[4 * hidden, input]);
        let wh = params.alloc(format!("{name}.wh"), &[4 * hidden, hidden]);
        let b = params.alloc(format!("{name}.b"), &[4 * hidden]);
        Self {
            input,
            hidden,
            wx,
            wh,
            b,
        }
    }

    pub(crate) fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng) {
        let bound = 1.0 / ((self.input + self.hidden) as f64).sqrt();
        uniform_fill(params.get_mut(self.wx), bound, rng);
        uniform_fill(params.get_mut(self.wh), bound, rng);
        let h = self.hidden;
        let b = params.get_mut(self.b);
        uniform_fill(b, bound, rng);
        b[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
    }

    /// Runs the sequence from zero state and returns the last hidden state.
    pub fn forward(
        &self,
        params: &ParameterSet,
        sequence: &[f64],
    ) -> Result<(Vec<f64>, LstmCache)> {
        if sequence.is_empty() || !sequence.len().is_multiple_of(self.input) {
            return Err(Error::Dimension {
                layer: "lstm".into(),
                expected: self.input,
                got: sequence.len(),
            });
        }
        let h = self.hidden;
        let steps = sequence.len() / self.input;
        let wx = params.get(self.wx);
        let wh = params.get(self.wh);
        let bias = params.get(self.b);
        let mut hs = vec![0.0; (steps + 1) * h];
        let mut cs = vec![0.0; (steps + 1) * h];
        let mut gates = vec![0.0; steps * 4 * h];
        for t in 0..steps {
            let x = &sequence[t * self.input..(t + 1) * self.input];
            let mut z = bias.to_vec();
            matvec_acc(wx, x, &mut z);
            matvec_acc(wh, &hs[t * h..(t + 1) * h], &mut z);
            let g = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                g[k] = sigmoid(z[k]);
                g[h + k] = sigmoid(z[h + k]);
                g[2 * h + k] = z[2 * h + k].tanh();
                g[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c_prev = cs[t * h + k];
                let c = g[h + k] * c_prev + g[k] * g[2 * h + k];
                cs[(t + 1) * h + k] = c;
                hs[(t + 1) * h + k] = g[3 * h + k] * c.tanh();
            }
        }
        let last = hs[steps * h..].to_vec();
        Ok((
            last,
            LstmCache {
                xs: sequence.to_vec(),
                hs,
                cs,
                gates,
                steps,
            },
        ))
    }

    /// Backpropagation through time from `∂loss/∂h_T`; returns `∂loss/∂x`.
    pub fn backward(
        &self,
        params: &ParameterSet,
        cache: &LstmCache,
        dh_last: &[f64],
        grads: &mut ParameterSet,
    ) -> Vec<f64> {
        let h = self.hidden;
        let wx = params.get(self.wx);
        let wh = params.get(self.wh);
        let mut dwx = vec![0.0; wx.len()];
        let mut dwh = vec![0.0; wh.len()];
        let mut db = vec![0.0; 4 * h];
        let mut dxs = vec![0.0; cache.xs.len()];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..cache.steps).rev() {
            let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            let c = &cache.cs[(t + 1) * h..(t + 2) * h];
            let c_prev = &cache.cs[t * h..(t + 1) * h];
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let tc = c[k].tanh();
                let d_o = dh[k] * tc;
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                let d_i = dc[k] * gg;
                let d_g = dc[k] * i;
                let d_f = dc[k] * c_prev[k];
                dz[k] = d_i * i * (1.0 - i);
                dz[h + k] = d_f * f * (1.0 - f);
                dz[2 * h + k] = d_g * (1.0 - gg * gg);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc[k] *= f;
            }
            let x = &cache.xs[t * self.input..(t + 1) * self.input];
            let h_prev = &cache.hs[t * h..(t + 1) * h];
            for (a, b) in db.iter_mut().zip(&dz) {
                *a += b;
            }
            matvec_backward(
                wx,
                x,
                &dz,
                &mut dwx,
                &mut dxs[t * self.input..(t + 1) * self.input],
            );
            let mut dh_prev = vec![0.0; h];
            matvec_backward(wh, h_prev, &dz, &mut dwh, &mut dh_prev);
            dh = dh_prev;
        }
        for (a, b) in grads.get_mut(self.wx).iter_mut().zip(&dwx) {
            *a += b;
        }
        for (a, b) in grads.get_mut(self.wh).iter_mut().zip(&dwh) {
            *a += b;
        }
        for (a, b) in grads.get_mut(self.b).iter_mut().zip(&db) {
            *a += b;
        }
        dxs
    }
}
