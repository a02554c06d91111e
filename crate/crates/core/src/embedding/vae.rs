//! Convolutional VAE: stride-2 convolutions down to a small grid, a linear
//! map to the Gaussian posterior, and a mirrored transposed-convolution
//! decoder with a sigmoid output.

use std::ops::Range;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::check_image;
use crate::error::{Error, Result};
use crate::nn::conv::{ConvCache, ConvTransposeCache, Extent};
use crate::nn::{uniform_fill, Conv2d, ConvTranspose2d, Mlp};
use crate::types::Observation;

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;

/// Loss decomposition, all averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub loss: f64,
    /// Per-image sum of squared pixel errors.
    pub reconstruction: f64,
    pub kl: f64,
}

/// KL(N(mu, exp(logvar)) || N(0, I)) for one diagonal Gaussian.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeArch {
    input: [usize; 3],
    channels: Vec<usize>,
    latent_dim: usize,
    encoder: Vec<Conv2d>,
    decoder: Vec<ConvTranspose2d>,
    to_posterior: Mlp,
    from_latent: Mlp,
    bottleneck: [usize; 3],
    offsets: Offsets,
}

#[derive(Debug, Clone, PartialEq)]
struct Offsets {
    encoder: Vec<(Range<usize>, Range<usize>)>,
    to_posterior: Range<usize>,
    from_latent: Range<usize>,
    decoder: Vec<(Range<usize>, Range<usize>)>,
    total: usize,
}

struct Forward {
    enc_caches: Vec<ConvCache>,
    enc_outputs: Vec<Vec<f64>>,
    posterior_cache: crate::nn::MlpCache,
    latent_cache: crate::nn::MlpCache,
    dec_caches: Vec<ConvTransposeCache>,
    dec_outputs: Vec<Vec<f64>>,
    mu: Array2<f64>,
    logvar: Array2<f64>,
    reconstruction: Vec<f64>,
}

impl VaeArch {
    pub fn new(input: [usize; 3], channels: Vec<usize>, latent_dim: usize) -> Result<Self> {
        let [h, w, c] = input;
        let depth = channels.len();
        let divisor = STRIDE.pow(depth as u32);
        if depth == 0 || h % divisor != 0 || w % divisor != 0 || h < divisor || w < divisor {
            return Err(Error::Config(format!(
                "input {h}x{w} cannot be halved {depth} times by the encoder"
            )));
        }
        if latent_dim == 0 || c == 0 {
            return Err(Error::Config("latent_dim and input channels must be positive".into()));
        }
        let mut encoder = Vec::with_capacity(depth);
        let mut cin = c;
        for &cout in &channels {
            encoder.push(Conv2d::new(cin, cout, KERNEL, STRIDE, PAD));
            cin = cout;
        }
        let mut decoder = Vec::with_capacity(depth);
        for i in (0..depth).rev() {
            let cout = if i == 0 { c } else { channels[i - 1] };
            decoder.push(ConvTranspose2d::new(channels[i], cout, KERNEL, STRIDE, PAD));
        }
        let bottleneck = [h / divisor, w / divisor, channels[depth - 1]];
        let flat = bottleneck.iter().product();
        let to_posterior = Mlp::new(vec![flat, 2 * latent_dim]);
        let from_latent = Mlp::new(vec![latent_dim, flat]);

        let mut offset = 0;
        let mut take = |n: usize| {
            let r = offset..offset + n;
            offset += n;
            r
        };
        let enc_off = encoder.iter().map(|l| (take(l.weight_len()), take(l.out_channels))).collect();
        let post_off = take(to_posterior.num_params());
        let lat_off = take(from_latent.num_params());
        let dec_off = decoder.iter().map(|l| (take(l.weight_len()), take(l.out_channels))).collect();
        let offsets = Offsets {
            encoder: enc_off,
            to_posterior: post_off,
            from_latent: lat_off,
            decoder: dec_off,
            total: offset,
        };
        Ok(Self {
            input,
            channels,
            latent_dim,
            encoder,
            decoder,
            to_posterior,
            from_latent,
            bottleneck,
            offsets,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn num_params(&self) -> usize {
        self.offsets.total
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for (layer, (w, b)) in self.encoder.iter().zip(&self.offsets.encoder) {
            uniform_fill(rng, layer.fan_in(), &mut params[w.clone()]);
            uniform_fill(rng, layer.fan_in(), &mut params[b.clone()]);
        }
        let post = self.to_posterior.init(rng);
        params[self.offsets.to_posterior.clone()].copy_from_slice(&post);
        let lat = self.from_latent.init(rng);
        params[self.offsets.from_latent.clone()].copy_from_slice(&lat);
        for (layer, (w, b)) in self.decoder.iter().zip(&self.offsets.decoder) {
            uniform_fill(rng, layer.fan_in(), &mut params[w.clone()]);
            uniform_fill(rng, layer.fan_in(), &mut params[b.clone()]);
        }
        params
    }

    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>, Range<usize>)> {
        let mut out = Vec::new();
        for (i, (layer, (w, b))) in self.encoder.iter().zip(&self.offsets.encoder).enumerate() {
            out.push((format!("enc{i}.weight"), layer.weight_shape().to_vec(), w.clone()));
            out.push((format!("enc{i}.bias"), vec![layer.out_channels], b.clone()));
        }
        for (name, net, range) in [
            ("posterior", &self.to_posterior, &self.offsets.to_posterior),
            ("latent", &self.from_latent, &self.offsets.from_latent),
        ] {
            for (t, shape, r) in net.tensor_layout() {
                out.push((format!("{name}.{t}"), shape, range.start + r.start..range.start + r.end));
            }
        }
        for (i, (layer, (w, b))) in self.decoder.iter().zip(&self.offsets.decoder).enumerate() {
            out.push((format!("dec{i}.weight"), layer.weight_shape().to_vec(), w.clone()));
            out.push((format!("dec{i}.bias"), vec![layer.out_channels], b.clone()));
        }
        out
    }

    fn stack(&self, batch: &[&Observation]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(batch.len() * self.input.iter().product::<usize>());
        for obs in batch {
            check_image(self, obs)?;
            x.extend_from_slice(obs.data());
        }
        Ok(x)
    }

    fn input_extent(&self, batch: usize) -> Extent {
        Extent {
            batch,
            height: self.input[0],
            width: self.input[1],
            channels: self.input[2],
        }
    }

    /// Encoder trunk and posterior head. Returns post-ReLU conv outputs,
    /// their caches, the posterior head cache and (mu, logvar).
    fn encode_stats(
        &self,
        params: &[f64],
        x: &[f64],
        batch: usize,
    ) -> (Vec<ConvCache>, Vec<Vec<f64>>, crate::nn::MlpCache, Array2<f64>, Array2<f64>) {
        let mut ext = self.input_extent(batch);
        let mut caches = Vec::with_capacity(self.encoder.len());
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.encoder.len());
        for (layer, (w, b)) in self.encoder.iter().zip(&self.offsets.encoder) {
            let input = outputs.last().map(|v| v.as_slice()).unwrap_or(x);
            let (mut y, cache) = layer.forward(&params[w.clone()], &params[b.clone()], input, ext);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            ext = layer.output_extent(ext);
            caches.push(cache);
            outputs.push(y);
        }
        let flat: usize = self.bottleneck.iter().product();
        let h = Array2::from_shape_vec((batch, flat), outputs.last().expect("at least one conv").clone())
            .expect("bottleneck shape");
        let post_cache = self.to_posterior.forward(&params[self.offsets.to_posterior.clone()], h);
        let l = self.latent_dim;
        let mu = post_cache.output.slice(ndarray::s![.., ..l]).to_owned();
        let logvar = post_cache.output.slice(ndarray::s![.., l..]).to_owned();
        (caches, outputs, post_cache, mu, logvar)
    }

    /// Posterior means, one vector per observation.
    pub fn posterior_mean(&self, params: &[f64], batch: &[&Observation]) -> Result<Vec<Vec<f64>>> {
        let x = self.stack(batch)?;
        let (_, _, _, mu, _) = self.encode_stats(params, &x, batch.len());
        Ok(mu.outer_iter().map(|r| r.to_vec()).collect())
    }

    fn decode_forward(&self, params: &[f64], z: Array2<f64>) -> (crate::nn::MlpCache, Vec<ConvTransposeCache>, Vec<Vec<f64>>) {
        let batch = z.nrows();
        let latent_cache = self.from_latent.forward(&params[self.offsets.from_latent.clone()], z);
        let [bh, bw, bc] = self.bottleneck;
        let mut ext = Extent {
            batch,
            height: bh,
            width: bw,
            channels: bc,
        };
        let mut caches = Vec::with_capacity(self.decoder.len());
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.decoder.len());
        let last = self.decoder.len() - 1;
        for (i, (layer, (w, b))) in self.decoder.iter().zip(&self.offsets.decoder).enumerate() {
            let input = outputs
                .last()
                .map(|v| v.as_slice())
                .unwrap_or_else(|| latent_cache.output.as_slice().expect("standard layout"));
            let (mut y, cache) = layer.forward(&params[w.clone()], &params[b.clone()], input, ext);
            if i == last {
                y.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            ext = layer.output_extent(ext);
            caches.push(cache);
            outputs.push(y);
        }
        (latent_cache, caches, outputs)
    }

    /// Decoder mean image for each latent row, flattened per image.
    pub fn decode(&self, params: &[f64], z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = Array2::from_shape_fn((z.len(), self.latent_dim), |(i, j)| z[i][j]);
        let (_, _, outputs) = self.decode_forward(params, m);
        let per: usize = self.input.iter().product();
        outputs.last().expect("decoder output").chunks(per).map(|c| c.to_vec()).collect()
    }

    /// Reconstructs from the posterior mean (no sampling).
    pub fn reconstruct(&self, params: &[f64], batch: &[&Observation]) -> Result<Vec<Vec<f64>>> {
        let mu = self.posterior_mean(params, batch)?;
        Ok(self.decode(params, &mu))
    }

    fn forward_with_noise(&self, params: &[f64], x: &[f64], batch: usize, noise: &Array2<f64>) -> Forward {
        let (enc_caches, enc_outputs, posterior_cache, mu, logvar) = self.encode_stats(params, x, batch);
        let z = &mu + &(logvar.mapv(|lv| (0.5 * lv).exp()) * noise);
        let (latent_cache, dec_caches, dec_outputs) = self.decode_forward(params, z);
        let reconstruction = dec_outputs.last().expect("decoder output").clone();
        Forward {
            enc_caches,
            enc_outputs,
            posterior_cache,
            latent_cache,
            dec_caches,
            dec_outputs,
            mu,
            logvar,
            reconstruction,
        }
    }

    /// ELBO loss and its gradient with a single reparameterized sample per
    /// element, noise drawn from `rng`.
    pub fn elbo_loss<R: Rng + ?Sized>(
        &self,
        params: &[f64],
        batch: &[&Observation],
        beta: f64,
        rng: &mut R,
    ) -> Result<(ElboTerms, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Config("ELBO needs a nonempty batch".into()));
        }
        let noise = Array2::from_shape_simple_fn((batch.len(), self.latent_dim), || rng.sample(StandardNormal));
        self.elbo_with_noise(params, batch, beta, &noise)
    }

    /// As [`Self::elbo_loss`] with caller-supplied standard-normal noise.
    pub fn elbo_with_noise(
        &self,
        params: &[f64],
        batch: &[&Observation],
        beta: f64,
        noise: &Array2<f64>,
    ) -> Result<(ElboTerms, Vec<f64>)> {
        let n = batch.len();
        if noise.dim() != (n, self.latent_dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("noise {:?}", (n, self.latent_dim)),
                actual: format!("{:?}", noise.dim()),
            });
        }
        let x = self.stack(batch)?;
        let fwd = self.forward_with_noise(params, &x, n, noise);
        let scale = 1.0 / n as f64;

        let reconstruction: f64 = fwd.reconstruction.iter().zip(&x).map(|(r, t)| (r - t) * (r - t)).sum::<f64>() * scale;
        let kl: f64 = fwd
            .mu
            .outer_iter()
            .zip(fwd.logvar.outer_iter())
            .map(|(m, lv)| gaussian_kl(m.as_slice().unwrap(), lv.as_slice().unwrap()))
            .sum::<f64>()
            * scale;
        let terms = ElboTerms {
            loss: reconstruction + beta * kl,
            reconstruction,
            kl,
        };

        let mut grads = vec![0.0; self.num_params()];
        // sigmoid output: d/dlogit of (r - t)^2 is 2 (r - t) r (1 - r)
        let mut d: Vec<f64> = fwd
            .reconstruction
            .iter()
            .zip(&x)
            .map(|(r, t)| 2.0 * (r - t) * r * (1.0 - r) * scale)
            .collect();
        for i in (0..self.decoder.len()).rev() {
            let layer = &self.decoder[i];
            let (w, b) = &self.offsets.decoder[i];
            let (gw, gb) = split_two(&mut grads, w.clone(), b.clone());
            let mut dx = layer.backward(&params[w.clone()], &fwd.dec_caches[i], &d, gw, gb);
            if i > 0 {
                relu_mask(&mut dx, &fwd.dec_outputs[i - 1]);
            }
            d = dx;
        }
        let [bh, bw, bc] = self.bottleneck;
        let d_flat = Array2::from_shape_vec((n, bh * bw * bc), d).expect("bottleneck grad shape");
        let dz = self.from_latent.backward(
            &params[self.offsets.from_latent.clone()],
            &fwd.latent_cache,
            d_flat,
            &mut grads[self.offsets.from_latent.clone()],
        );

        let l = self.latent_dim;
        let mut d_stats = Array2::zeros((n, 2 * l));
        for r in 0..n {
            for k in 0..l {
                let mu = fwd.mu[[r, k]];
                let lv = fwd.logvar[[r, k]];
                let std = (0.5 * lv).exp();
                d_stats[[r, k]] = dz[[r, k]] + beta * scale * mu;
                d_stats[[r, l + k]] = dz[[r, k]] * noise[[r, k]] * 0.5 * std + beta * scale * 0.5 * (lv.exp() - 1.0);
            }
        }
        let d_h = self.to_posterior.backward(
            &params[self.offsets.to_posterior.clone()],
            &fwd.posterior_cache,
            d_stats,
            &mut grads[self.offsets.to_posterior.clone()],
        );
        let mut d = d_h.into_raw_vec_and_offset().0;
        relu_mask(&mut d, fwd.enc_outputs.last().expect("encoder output"));
        for i in (0..self.encoder.len()).rev() {
            let layer = &self.encoder[i];
            let (w, b) = &self.offsets.encoder[i];
            let (gw, gb) = split_two(&mut grads, w.clone(), b.clone());
            let mut dx = layer.backward(&params[w.clone()], &fwd.enc_caches[i], &d, gw, gb);
            if i > 0 {
                relu_mask(&mut dx, &fwd.enc_outputs[i - 1]);
            }
            d = dx;
        }
        Ok((terms, grads))
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Two disjoint mutable subslices; `first` precedes `second`.
fn split_two(buf: &mut [f64], first: Range<usize>, second: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(first.end <= second.start);
    let (head, tail) = buf.split_at_mut(second.start);
    (&mut head[first], &mut tail[..second.end - second.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (VaeArch, Vec<f64>, Vec<Observation>) {
        let arch = VaeArch::new([4, 4, 1], vec![2], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = arch.init(&mut rng);
        let obs = (0..3)
            .map(|i| {
                let data = (0..16).map(|p| ((p * 7 + i * 5) % 11) as f64 / 10.0).collect();
                Observation::image(data, [4, 4, 1], 0, 0).unwrap()
            })
            .collect();
        (arch, params, obs)
    }

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_kl(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(gaussian_kl(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]), 0.5);
    }

    #[test]
    fn beta_zero_is_pure_reconstruction() {
        let (arch, params, obs) = tiny();
        let refs: Vec<&Observation> = obs.iter().collect();
        let noise = Array2::from_elem((3, 2), 0.3);
        let (terms, _) = arch.elbo_with_noise(&params, &refs, 0.0, &noise).unwrap();
        assert_eq!(terms.loss, terms.reconstruction);
        assert!(terms.kl > 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let (arch, params, obs) = tiny();
        let refs: Vec<&Observation> = obs.iter().collect();
        let noise = Array2::from_shape_fn((3, 2), |(i, j)| [0.4, -1.1, 0.7, 0.2, -0.5, 1.3][i * 2 + j]);
        let (_, grads) = arch.elbo_with_noise(&params, &refs, 0.1, &noise).unwrap();
        let h = 1e-5;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = arch.elbo_with_noise(&p, &refs, 0.1, &noise).unwrap().0.loss;
            p[i] -= 2.0 * h;
            let down = arch.elbo_with_noise(&p, &refs, 0.1, &noise).unwrap().0.loss;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - grads[i]).abs() / numeric.abs().max(grads[i].abs()).max(1e-8);
            assert!(rel <= 1e-4 || (numeric - grads[i]).abs() < 1e-9, "param {i}: {numeric} vs {}", grads[i]);
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let arch = VaeArch::new([16, 16, 1], vec![4, 8], 3).unwrap();
        let mut covered: Vec<Range<usize>> = arch.tensor_layout().into_iter().map(|(_, _, r)| r).collect();
        covered.sort_by_key(|r| r.start);
        let mut end = 0;
        for r in covered {
            assert_eq!(r.start, end);
            end = r.end;
        }
        assert_eq!(end, arch.num_params());
        assert!(VaeArch::new([12, 12, 1], vec![4, 4, 4], 3).is_err());
    }
}
