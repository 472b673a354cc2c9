//! Two-hidden-layer tanh perceptron with a bounded output.

use rand::Rng;
use serde::{Deserialize, Serialize};
use softgrad_core::{Real, RngState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: [usize; 2],
    /// Scale of the uniform weight initialisation relative to `1/√fan_in`.
    pub init_scale: f64,
    /// Seed of the initial weights.
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { hidden: [64, 64], init_scale: 1.0, seed: 0 }
    }
}

/// `a = mid + half ⊙ tanh(W₃ tanh(W₂ tanh(W₁ o + b₁) + b₂) + b₃)`, so every
/// output lies inside `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams<T> {
    pub sizes: [usize; 4],
    pub theta: Vec<T>,
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct PolicyCache<T> {
    input: Vec<T>,
    h: [Vec<T>; 2],
    out: Vec<T>,
}

fn layer_offsets(sizes: &[usize; 4]) -> [(usize, usize, usize, usize); 3] {
    let mut off = 0;
    std::array::from_fn(|l| {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = off;
        let b = w + n_in * n_out;
        off = b + n_out;
        (w, b, n_in, n_out)
    })
}

impl<T: Real> PolicyParams<T> {
    pub fn new(obs: usize, lo: &[T], hi: &[T], cfg: &PolicyConfig, rng: RngState) -> Self {
        let sizes = [obs, cfg.hidden[0], cfg.hidden[1], lo.len()];
        let mut s = rng.stream();
        let mut theta = Vec::new();
        for (_, _, n_in, n_out) in layer_offsets(&sizes) {
            let r = cfg.init_scale / (n_in as f64).sqrt();
            theta.extend((0..n_in * n_out).map(|_| T::lit(s.random_range(-r..=r))));
            theta.extend(std::iter::repeat_n(T::zero(), n_out));
        }
        Self { sizes, theta, lo: lo.to_vec(), hi: hi.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn act(&self, obs: &[T]) -> Vec<T> {
        self.forward(&self.theta, obs).0
    }

    /// Forward pass with parameters `theta` (same layout as `self.theta`).
    pub fn forward(&self, theta: &[T], obs: &[T]) -> (Vec<T>, PolicyCache<T>) {
        let offs = layer_offsets(&self.sizes);
        let dense = |l: usize, x: &[T]| -> Vec<T> {
            let (w, b, n_in, n_out) = offs[l];
            (0..n_out)
                .map(|j| {
                    let row = &theta[w + j * n_in..w + (j + 1) * n_in];
                    (row.iter().zip(x).map(|(a, b)| *a * *b).sum::<T>() + theta[b + j]).tanh()
                })
                .collect()
        };
        let h0 = dense(0, obs);
        let h1 = dense(1, &h0);
        let out = dense(2, &h1);
        let half = T::lit(0.5);
        let a = out.iter().enumerate().map(|(k, u)| (self.lo[k] + self.hi[k]) * half + (self.hi[k] - self.lo[k]) * half * *u).collect();
        (a, PolicyCache { input: obs.to_vec(), h: [h0, h1], out })
    }

    /// `(θ̄, ō)` for an action cotangent `a_bar`.
    pub fn vjp(&self, theta: &[T], cache: &PolicyCache<T>, a_bar: &[T]) -> (Vec<T>, Vec<T>) {
        let offs = layer_offsets(&self.sizes);
        let half = T::lit(0.5);
        let mut theta_bar = vec![T::zero(); theta.len()];
        let mut g: Vec<T> =
            cache.out.iter().enumerate().map(|(k, u)| a_bar[k] * (self.hi[k] - self.lo[k]) * half * (T::one() - *u * *u)).collect();
        let inputs: [&[T]; 3] = [&cache.input, &cache.h[0], &cache.h[1]];
        for l in (0..3).rev() {
            let (w, b, n_in, n_out) = offs[l];
            let x = inputs[l];
            let mut x_bar = vec![T::zero(); n_in];
            for j in 0..n_out {
                theta_bar[b + j] += g[j];
                for i in 0..n_in {
                    theta_bar[w + j * n_in + i] += g[j] * x[i];
                    x_bar[i] += g[j] * theta[w + j * n_in + i];
                }
            }
            g = if l > 0 { x_bar.iter().zip(x).map(|(xb, h)| *xb * (T::one() - *h * *h)).collect() } else { x_bar };
        }
        (theta_bar, g)
    }
}
