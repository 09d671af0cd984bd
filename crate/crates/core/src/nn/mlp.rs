//! Two-hidden-layer ReLU perceptron over a flat parameter vector.
//!
//! Parameters are laid out as `W1 b1 W2 b2 W3 b3`, each weight matrix stored
//! row-major with shape `(fan_in, fan_out)` so a batch forward pass is
//! `relu(x W1 + b1)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpLayout {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl MlpLayout {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        MlpLayout { input, hidden, output }
    }

    fn spans(&self) -> [Span; 3] {
        let dims = [(self.input, self.hidden), (self.hidden, self.hidden), (self.hidden, self.output)];
        let mut offset = 0;
        dims.map(|(fan_in, fan_out)| {
            let span = Span {
                w: offset,
                b: offset + fan_in * fan_out,
                fan_in,
                fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            span
        })
    }

    pub fn num_params(&self) -> usize {
        let s = self.spans()[2];
        s.b + s.fan_out
    }

    /// Orthogonal weights scaled by `sqrt(2)` for hidden layers and
    /// `output_gain` for the last layer; zero biases.
    pub fn init<R: Rng + ?Sized>(&self, output_gain: f64, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for (layer, span) in self.spans().iter().enumerate() {
            let gain = if layer == 2 { output_gain } else { 2f64.sqrt() };
            let w = orthogonal(span.fan_in, span.fan_out, gain, rng);
            params[span.w..span.b].copy_from_slice(w.as_slice().expect("standard layout"));
        }
        params
    }

    fn weight<'a>(&self, params: &'a [f64], span: Span) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((span.fan_in, span.fan_out), &params[span.w..span.b]).expect("weight span")
    }

    fn bias<'a>(&self, params: &'a [f64], span: Span) -> ArrayView1<'a, f64> {
        ArrayView1::from(&params[span.b..span.b + span.fan_out])
    }

    fn check(&self, params: &[f64], x: &ArrayView2<f64>) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        if x.ncols() != self.input {
            return Err(Error::Shape {
                expected: self.input,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(params, x)?.output)
    }

    pub fn forward_cached(&self, params: &[f64], x: ArrayView2<f64>) -> Result<Cache> {
        self.check(params, &x)?;
        let [s1, s2, s3] = self.spans();
        let mut h1 = x.dot(&self.weight(params, s1)) + self.bias(params, s1);
        h1.mapv_inplace(|v| v.max(0.0));
        let mut h2 = h1.dot(&self.weight(params, s2)) + self.bias(params, s2);
        h2.mapv_inplace(|v| v.max(0.0));
        let output = h2.dot(&self.weight(params, s3)) + self.bias(params, s3);
        Ok(Cache {
            input: x.to_owned(),
            h1,
            h2,
            output,
        })
    }

    /// Accumulates `d(sum of grad_out * output) / d params` into `grads`.
    pub fn backward(&self, params: &[f64], cache: &Cache, grad_out: ArrayView2<f64>, grads: &mut [f64]) {
        let [s1, s2, s3] = self.spans();
        let mut acc = |span: Span, input: &Array2<f64>, delta: &Array2<f64>| {
            let dw = input.t().dot(delta);
            for (g, d) in grads[span.w..span.b].iter_mut().zip(dw.iter()) {
                *g += d;
            }
            let db: Array1<f64> = delta.sum_axis(Axis(0));
            for (g, d) in grads[span.b..span.b + span.fan_out].iter_mut().zip(db.iter()) {
                *g += d;
            }
        };
        let d3 = grad_out.to_owned();
        acc(s3, &cache.h2, &d3);
        let mut d2 = d3.dot(&self.weight(params, s3).t());
        d2.zip_mut_with(&cache.h2, |d, h| {
            if *h <= 0.0 {
                *d = 0.0
            }
        });
        acc(s2, &cache.h1, &d2);
        let mut d1 = d2.dot(&self.weight(params, s2).t());
        d1.zip_mut_with(&cache.h1, |d, h| {
            if *h <= 0.0 {
                *d = 0.0
            }
        });
        acc(s1, &cache.input, &d1);
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    input: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    pub output: Array2<f64>,
}

/// `(rows, cols)` matrix with orthonormal rows or columns, whichever are fewer.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // Gram-Schmidt on `short` random vectors of length `long`.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (vec, pos) = if rows >= cols { (c, r) } else { (r, c) };
        gain * basis[vec][pos]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_give_bias() {
        let layout = MlpLayout::new(3, 4, 2);
        let mut params = vec![0.0; layout.num_params()];
        let n = params.len();
        params[n - 2] = 0.7;
        params[n - 1] = -1.5;
        let x = Array2::from_elem((2, 3), 1.3);
        let y = layout.forward(&params, x.view()).unwrap();
        assert_eq!(y.row(0).to_vec(), vec![0.7, -1.5]);
        assert_eq!(y.row(1).to_vec(), vec![0.7, -1.5]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let layout = MlpLayout::new(3, 4, 2);
        let params = vec![0.0; layout.num_params()];
        let x = Array2::zeros((1, 5));
        assert!(matches!(layout.forward(&params, x.view()), Err(Error::Shape { expected: 3, got: 5 })));
    }

    #[test]
    fn orthogonal_columns() {
        let mut rng = SimRng::seed_from_u64(0);
        let w = orthogonal(6, 3, 1.0, &mut rng);
        let gram = w.t().dot(&w);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - target).abs() < 1e-12);
            }
        }
        let w = orthogonal(2, 5, 1.0, &mut rng);
        let gram = w.dot(&w.t());
        assert!((gram[[0, 0]] - 1.0).abs() < 1e-12 && gram[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SimRng::seed_from_u64(7);
        let layout = MlpLayout::new(4, 5, 3);
        let params = layout.init(1.0, &mut rng);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let weights = Array2::from_shape_fn((3, 3), |(i, j)| ((i + 2 * j) as f64 * 0.91).cos());
        let loss = |p: &[f64]| (layout.forward(p, x.view()).unwrap() * &weights).sum();
        let cache = layout.forward_cached(&params, x.view()).unwrap();
        let mut grads = vec![0.0; params.len()];
        layout.backward(&params, &cache, weights.view(), &mut grads);
        let h = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let up = loss(&p);
            p[k] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grads[k].abs()).max(1e-6);
            assert!((fd - grads[k]).abs() / scale < 1e-5, "param {k}: fd {fd} vs {}", grads[k]);
        }
    }
}
