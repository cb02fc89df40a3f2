//! Fully connected network with SiLU activations over batched rows.
//!
//! Parameters are one flat vector. Each layer stores its weight matrix
//! (`out x in`, row-major) followed by its bias.

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use crate::rng::{Role, Stream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

impl MlpShape {
    /// `depth` hidden layers of `width` units between `d_in` inputs and `d_out` outputs.
    pub fn new(d_in: usize, width: usize, depth: usize, d_out: usize) -> Self {
        let mut sizes = vec![d_in];
        sizes.extend(std::iter::repeat_n(width, depth));
        sizes.push(d_out);
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layer sizes")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// `(offset, fan_in, fan_out)` of layer `l`.
    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let offset = self
            .sizes
            .windows(2)
            .take(l)
            .map(|w| w[1] * w[0] + w[1])
            .sum();
        (offset, self.sizes[l], self.sizes[l + 1])
    }

    fn views<'a>(&self, params: &'a [f64], l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (off, fan_in, fan_out) = self.layer(l);
        let w = ArrayView2::from_shape((fan_out, fan_in), &params[off..off + fan_in * fan_out])
            .expect("layer slice matches its shape");
        let b = ArrayView1::from(&params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]);
        (w, b)
    }

    /// Hidden layers uniform in `+-1/sqrt(fan_in)` with zero biases; output layer all zeros.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let mut stream = Stream::new(seed, Role::Init, &[]);
        for l in 0..self.num_layers() - 1 {
            let (off, fan_in, fan_out) = self.layer(l);
            let bound = (fan_in as f64).recip().sqrt();
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = stream.uniform_in(-bound, bound);
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: Array2<f64>) -> (Array2<f64>, MlpCache) {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.ncols(), self.input_dim());
        let last = self.num_layers() - 1;
        let mut pre = Vec::with_capacity(last);
        let mut post = vec![input];
        for l in 0..=last {
            let (w, b) = self.views(params, l);
            let mut z = post[l].dot(&w.t());
            z += &b;
            if l == last {
                return (z, MlpCache { pre, post });
            }
            post.push(z.mapv(silu));
            pre.push(z);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Accumulates `d(sum(upstream * output))/d(params)` into `grad`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        upstream: Array2<f64>,
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut delta = upstream;
        for l in (0..self.num_layers()).rev() {
            let (off, fan_in, fan_out) = self.layer(l);
            {
                let (gw, gb) =
                    grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw)
                    .expect("layer slice matches its shape");
                gw += &delta.t().dot(&cache.post[l]);
                for (g, d) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.views(params, l);
            let mut back = delta.dot(&w);
            back.zip_mut_with(&cache.pre[l - 1], |d, &z| *d *= silu_grad(z));
            delta = back;
        }
    }
}

/// Intermediate activations of one forward pass; `post[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

pub fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_layout() {
        let shape = MlpShape::new(3, 5, 2, 2);
        assert_eq!(shape.param_count(), 3 * 5 + 5 + 5 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(shape.layer(2), (20 + 30, 5, 2));
    }

    #[test]
    fn zero_output_layer_at_init() {
        let shape = MlpShape::new(3, 8, 2, 2);
        let p = shape.init_params(7);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let (out, _) = shape.forward(&p, x);
        assert!(out.iter().all(|v| *v == 0.0));
        assert_eq!(p, shape.init_params(7));
        assert_ne!(p, shape.init_params(8));
    }

    #[test]
    fn silu_derivative() {
        for z in [-30.0, -2.0, -0.1, 0.0, 0.7, 4.0, 40.0] {
            let h = 1e-6;
            let fd = (silu(z + h) - silu(z - h)) / (2.0 * h);
            assert!((fd - silu_grad(z)).abs() < 1e-8, "z = {z}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let shape = MlpShape::new(3, 6, 2, 2);
        let mut p = shape.init_params(3);
        let mut s = Stream::new(11, Role::Study, &[]);
        for v in p.iter_mut() {
            *v += 0.3 * s.normal();
        }
        let x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let up = Array2::from_shape_fn((5, 2), |(i, j)| ((i * 2 + j) as f64).cos());
        let objective = |p: &[f64]| (shape.forward(p, x.clone()).0 * &up).sum();
        let (_, cache) = shape.forward(&p, x.clone());
        let mut g = vec![0.0; p.len()];
        shape.backward(&p, &cache, up.clone(), &mut g);
        for i in 0..p.len() {
            let h = 1e-6;
            let mut a = p.clone();
            a[i] += h;
            let mut b = p.clone();
            b[i] -= h;
            let fd = (objective(&a) - objective(&b)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "coordinate {i}: {fd} vs {}",
                g[i]
            );
        }
    }
}
