//! Fully connected nets stored as offsets into the flow's flat parameter buffer.

use rand::Rng;

/// A dense layer `y = W x + b`, `W` row-major `out x inp`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Dense {
    pub inp: usize,
    pub out: usize,
    pub w: usize,
    pub b: usize,
}

impl Dense {
    fn param_count(inp: usize, out: usize) -> usize {
        inp * out + out
    }

    fn forward(&self, params: &[f64], x: &[f64], y: &mut Vec<f64>) {
        let w = &params[self.w..self.w + self.inp * self.out];
        let b = &params[self.b..self.b + self.out];
        y.clear();
        y.extend(w.chunks_exact(self.inp).zip(b).map(|(row, &bias)| {
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }));
    }

    /// Accumulate parameter gradients and return `dL/dx`.
    fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let row = self.w + o * self.inp;
            let gw = &mut grad[row..row + self.inp];
            for (gwi, &xi) in gw.iter_mut().zip(x) {
                *gwi += g * xi;
            }
            let w = &params[row..row + self.inp];
            for (dxi, &wi) in dx.iter_mut().zip(w) {
                *dxi += g * wi;
            }
        }
        dx
    }
}

/// Two tanh hidden layers and a linear head.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Mlp {
    pub layers: [Dense; 3],
}

#[derive(Clone, Debug, Default)]
pub(crate) struct MlpCache {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl Mlp {
    /// Lay out a net starting at `offset`; returns the net and the next free offset.
    pub fn allocate(offset: usize, inp: usize, hidden: usize, out: usize) -> (Mlp, usize) {
        let mut next = offset;
        let mut dense = |i: usize, o: usize| {
            let d = Dense {
                inp: i,
                out: o,
                w: next,
                b: next + i * o,
            };
            next += Dense::param_count(i, o);
            d
        };
        let layers = [dense(inp, hidden), dense(hidden, hidden), dense(hidden, out)];
        (Mlp { layers }, next)
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        let last = &self.layers[2];
        self.layers[0].w..last.b + last.out
    }

    /// Uniform `(-k, k)` with `k = scale / sqrt(fan_in)` on hidden layers; the
    /// head is zeroed unless `randomize_head` is set.
    pub fn init<R: Rng>(&self, params: &mut [f64], rng: &mut R, scale: f64, randomize_head: bool) {
        for (i, layer) in self.layers.iter().enumerate() {
            let range = layer.w..layer.b + layer.out;
            if i == 2 && !randomize_head {
                params[range].fill(0.0);
                continue;
            }
            let k = scale / (layer.inp as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-k..k);
            }
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64], cache: &mut MlpCache) -> Vec<f64> {
        cache.input.clear();
        cache.input.extend_from_slice(x);
        self.layers[0].forward(params, x, &mut cache.h1);
        cache.h1.iter_mut().for_each(|v| *v = v.tanh());
        self.layers[1].forward(params, &cache.h1, &mut cache.h2);
        cache.h2.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = Vec::with_capacity(self.layers[2].out);
        self.layers[2].forward(params, &cache.h2, &mut out);
        out
    }

    pub fn eval(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(params, x, &mut MlpCache::default())
    }

    pub fn backward(&self, params: &[f64], cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut dh2 = self.layers[2].backward(params, &cache.h2, d_out, grad);
        for (d, h) in dh2.iter_mut().zip(&cache.h2) {
            *d *= 1.0 - h * h;
        }
        let mut dh1 = self.layers[1].backward(params, &cache.h1, &dh2, grad);
        for (d, h) in dh1.iter_mut().zip(&cache.h1) {
            *d *= 1.0 - h * h;
        }
        self.layers[0].backward(params, &cache.input, &dh1, grad)
    }
}
