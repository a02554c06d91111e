use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

use super::uniform_fill;

/// Fully connected network with ReLU hidden layers and a linear output.
/// Layer weights are stored `[in, out]` row-major followed by the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Post-activation inputs of every layer, plus the network output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    weight: usize,
    bias: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Mlp {
    /// `sizes` = [input, hidden..., output].
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let layer = Layer {
                weight: offset,
                bias: offset + w[0] * w[1],
                fan_in: w[0],
                fan_out: w[1],
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for l in self.layers() {
            uniform_fill(rng, l.fan_in, &mut params[l.weight..l.bias + l.fan_out]);
        }
        params
    }

    /// Named `[in, out]` weight and `[out]` bias slices, for checkpoints.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>, std::ops::Range<usize>)> {
        self.layers()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("l{i}.weight"), vec![l.fan_in, l.fan_out], l.weight..l.bias),
                    (format!("l{i}.bias"), vec![l.fan_out], l.bias..l.bias + l.fan_out),
                ]
            })
            .collect()
    }

    pub fn forward(&self, params: &[f64], x: Array2<f64>) -> MlpCache {
        debug_assert_eq!(params.len(), self.num_params());
        debug_assert_eq!(x.ncols(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut current = x;
        for (i, l) in self.layers().enumerate() {
            let w = weight_view(params, l);
            let b = ArrayView1::from(&params[l.bias..l.bias + l.fan_out]);
            let mut z = Array2::zeros((current.nrows(), l.fan_out));
            general_mat_mul(1.0, &current, &w, 0.0, &mut z);
            z += &b;
            if i + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(current);
            current = z;
        }
        MlpCache {
            inputs,
            output: current,
        }
    }

    pub fn predict(&self, params: &[f64], x: Array2<f64>) -> Array2<f64> {
        self.forward(params, x).output
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, d_output: Array2<f64>, grads: &mut [f64]) -> Array2<f64> {
        debug_assert_eq!(grads.len(), self.num_params());
        let layers: Vec<Layer> = self.layers().collect();
        let mut dz = d_output;
        for (i, l) in layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            {
                let mut gw = ArrayViewMut2::from_shape((l.fan_in, l.fan_out), &mut grads[l.weight..l.bias])
                    .expect("weight slice shape");
                general_mat_mul(1.0, &input.t(), &dz, 1.0, &mut gw);
            }
            {
                let mut gb = ArrayViewMut1::from(&mut grads[l.bias..l.bias + l.fan_out]);
                gb += &dz.sum_axis(Axis(0));
            }
            let w = weight_view(params, *l);
            let mut d_input = Array2::zeros((dz.nrows(), l.fan_in));
            general_mat_mul(1.0, &dz, &w.t(), 0.0, &mut d_input);
            if i > 0 {
                // input to this layer is a ReLU output
                ndarray::Zip::from(&mut d_input)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
            }
            dz = d_input;
        }
        dz
    }
}

fn weight_view(params: &[f64], l: Layer) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((l.fan_in, l.fan_out), &params[l.weight..l.bias]).expect("weight slice shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_layer_forward() {
        let net = Mlp::new(vec![2, 1]);
        let params = vec![2.0, -1.0, 0.5];
        let y = net.predict(&params, array![[1.0, 3.0], [0.0, 0.0]]);
        assert_eq!(y, array![[-0.5], [0.5]]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(vec![3, 5, 4, 2]);
        let params = net.init(&mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let target = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64 * 0.1);
        let loss = |p: &[f64], x: &Array2<f64>| -> f64 {
            let y = net.predict(p, x.clone());
            (&y - &target).mapv(|v| v * v).sum()
        };
        let cache = net.forward(&params, x.clone());
        let d_out = (&cache.output - &target) * 2.0;
        let mut grads = vec![0.0; net.num_params()];
        let dx = net.backward(&params, &cache, d_out, &mut grads);
        let h = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = loss(&p, &x);
            p[i] -= 2.0 * h;
            let down = loss(&p, &x);
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - grads[i]).abs() <= 1e-6 * (1.0 + numeric.abs()), "param {i}: {numeric} vs {}", grads[i]);
        }
        for r in 0..4 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[[r, c]] += h;
                let up = loss(&params, &xp);
                xp[[r, c]] -= 2.0 * h;
                let numeric = (up - loss(&params, &xp)) / (2.0 * h);
                assert!((numeric - dx[[r, c]]).abs() <= 1e-6 * (1.0 + numeric.abs()));
            }
        }
    }

    #[test]
    fn tensor_layout_covers_all_params() {
        let net = Mlp::new(vec![3, 4, 2]);
        let total: usize = net.tensor_layout().iter().map(|(_, _, r)| r.len()).sum();
        assert_eq!(total, net.num_params());
    }
}
