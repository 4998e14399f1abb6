use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, WeightedGrid};
use crate::net::arch::{Architecture, ConvShape, ParamBlock};
use crate::net::layers::{col2im, gemm, im2col, max_pool, sigmoid};

/// Probability clamp applied inside the loss.
pub const LOSS_CLAMP: f64 = 1e-7;

/// Largest double strictly below one.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

/// Adam moment estimates. The vectors stay empty until the first update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    shapes: Vec<ConvShape>,
    blocks: Vec<ParamBlock>,
    pub params: Vec<f64>,
    pub adam: AdamState,
}

#[derive(Default)]
struct ConvCache {
    inputs: Vec<Vec<f64>>,
    relu: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
}

impl Model {
    /// All parameters zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        Self::from_params(arch, Vec::new())
    }

    /// Wrap an explicit parameter vector; an empty vector means all zeros.
    pub fn from_params(arch: Architecture, mut params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let blocks = arch.blocks();
        let n = blocks.last().map_or(0, |b| b.end());
        if params.is_empty() {
            params = vec![0.0; n];
        } else if params.len() != n {
            return Err(Error::invalid(format!(
                "parameter count {} does not match architecture ({n})",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            shapes: arch.conv_shapes(),
            arch,
            blocks,
            params,
            adam: AdamState::default(),
        })
    }

    /// He-normal weights for ReLU layers, Glorot-uniform for the final
    /// sigmoid layer, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = m.blocks.len() - 1;
        for (i, b) in m.blocks.clone().iter().enumerate() {
            let w = &mut m.params[b.weights..b.weights + b.weight_len()];
            if i == last {
                let a = (6.0 / (b.fan_in + b.fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
                w.iter_mut().for_each(|p| *p = dist.sample(&mut rng));
            } else {
                let dist = Normal::new(0.0, (2.0 / b.fan_in as f64).sqrt()).expect("finite sigma");
                w.iter_mut().for_each(|p| *p = dist.sample(&mut rng));
            }
        }
        Ok(m)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn input_side(&self) -> usize {
        self.arch.input_side
    }

    fn check_input(&self, x: &OccupancyGrid) -> Result<()> {
        let g = self.arch.input_side;
        if x.dims() != [g; 3] {
            return Err(Error::DimMismatch {
                expected: [g; 3],
                got: x.dims(),
            });
        }
        Ok(())
    }

    fn weights(&self, b: &ParamBlock) -> &[f64] {
        &self.params[b.weights..b.weights + b.weight_len()]
    }

    fn bias(&self, b: &ParamBlock) -> &[f64] {
        &self.params[b.bias..b.bias + b.fan_out]
    }

    fn conv_forward(&self, x: &[f64], mut cache: Option<&mut ConvCache>) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut cols = Vec::new();
        for (s, b) in self.shapes.iter().zip(&self.blocks) {
            im2col(s, &a, &mut cols);
            let p = s.conv_side.pow(3);
            let k = s.fan_in();
            let mut z = vec![0.0; s.out_channels * p];
            for (c, row) in z.chunks_mut(p).enumerate() {
                row.fill(self.bias(b)[c]);
            }
            gemm(
                s.out_channels,
                k,
                p,
                self.weights(b),
                (k, 1),
                &cols,
                (p, 1),
                1.0,
                &mut z,
                (p, 1),
            );
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            let out = if s.pool > 1 {
                let mut out = vec![0.0; s.out_len()];
                let mut arg = vec![0u32; s.out_len()];
                max_pool(s, &z, &mut out, &mut arg);
                if let Some(c) = cache.as_deref_mut() {
                    c.argmax.push(arg);
                }
                out
            } else {
                if let Some(c) = cache.as_deref_mut() {
                    c.argmax.push(Vec::new());
                }
                z.clone()
            };
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(std::mem::replace(&mut a, out));
                c.relu.push(z);
            } else {
                a = out;
            }
        }
        a
    }

    /// Dense stage over a row-major `batch x in` matrix. Returns the input of
    /// every dense layer followed by the final probabilities.
    fn dense_forward(&self, h0: Vec<f64>, batch: usize) -> Vec<Vec<f64>> {
        let nconv = self.shapes.len();
        let last = self.blocks.len() - 1;
        let mut acts = vec![h0];
        for (i, b) in self.blocks[nconv..].iter().enumerate() {
            let h = acts.last().unwrap();
            let mut z = vec![0.0; batch * b.fan_out];
            for row in z.chunks_mut(b.fan_out) {
                row.copy_from_slice(self.bias(b));
            }
            gemm(
                batch,
                b.fan_in,
                b.fan_out,
                h,
                (b.fan_in, 1),
                self.weights(b),
                (1, b.fan_in),
                1.0,
                &mut z,
                (b.fan_out, 1),
            );
            if nconv + i == last {
                z.iter_mut()
                    .for_each(|v| *v = sigmoid(*v).clamp(f64::MIN_POSITIVE, ONE_MINUS));
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn forward_raw(&self, inputs: &[&[f64]], caches: Option<&mut Vec<ConvCache>>) -> Vec<Vec<f64>> {
        let flat = self.arch.flat_len();
        let batch = inputs.len();
        let mut h0 = vec![0.0; batch * flat];
        match caches {
            Some(caches) => {
                let results: Vec<(Vec<f64>, ConvCache)> = inputs
                    .par_iter()
                    .map(|x| {
                        let mut c = ConvCache::default();
                        let f = self.conv_forward(x, Some(&mut c));
                        (f, c)
                    })
                    .collect();
                for (i, (f, c)) in results.into_iter().enumerate() {
                    h0[i * flat..(i + 1) * flat].copy_from_slice(&f);
                    caches.push(c);
                }
            }
            None => {
                let results: Vec<Vec<f64>> = inputs.par_iter().map(|x| self.conv_forward(x, None)).collect();
                for (i, f) in results.into_iter().enumerate() {
                    h0[i * flat..(i + 1) * flat].copy_from_slice(&f);
                }
            }
        }
        self.dense_forward(h0, batch)
    }

    /// Probabilities for real-valued inputs of length `input_side^3`.
    pub fn predict_raw(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let n = self.arch.output_len();
        if let Some(x) = inputs.iter().find(|x| x.len() != n) {
            return Err(Error::invalid(format!("input length {} != {n}", x.len())));
        }
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let probs = self.forward_raw(inputs, None).pop().unwrap();
        Ok(probs.chunks(n).map(|c| c.to_vec()).collect())
    }

    pub fn forward(&self, x: &OccupancyGrid) -> Result<WeightedGrid> {
        Ok(self.forward_batch(&[x])?.pop().unwrap())
    }

    pub fn forward_batch(&self, xs: &[&OccupancyGrid]) -> Result<Vec<WeightedGrid>> {
        for x in xs {
            self.check_input(x)?;
        }
        let inputs: Vec<Vec<f64>> = xs.iter().map(|x| grid_values(x)).collect();
        let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let g = self.arch.input_side;
        Ok(self
            .predict_raw(&refs)?
            .into_iter()
            .map(|data| WeightedGrid { dims: [g; 3], data })
            .collect())
    }

    /// Mean cross-entropy over voxels and examples, and its gradient with
    /// respect to every parameter. Targets may be real-valued in [0, 1].
    pub fn batch_gradient(&self, inputs: &[&[f64]], targets: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        let n = self.arch.output_len();
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::invalid("inputs and targets must be non-empty and paired"));
        }
        if inputs.iter().chain(targets).any(|v| v.len() != n) {
            return Err(Error::invalid(format!("every input and target must hold {n} values")));
        }
        let batch = inputs.len();
        let mut caches = Vec::with_capacity(batch);
        let acts = self.forward_raw(inputs, Some(&mut caches));
        let probs = acts.last().unwrap();

        let mut loss = 0.0;
        let scale = 1.0 / (n * batch) as f64;
        let mut dz: Vec<f64> = Vec::with_capacity(probs.len());
        for (i, &p) in probs.iter().enumerate() {
            let y = targets[i / n][i % n];
            loss += point_loss(y, p);
            // d/dz of the loss through the sigmoid
            dz.push((p - y) * scale);
        }
        loss *= scale;

        let mut grad = vec![0.0; self.params.len()];
        let nconv = self.shapes.len();
        for l in (0..self.blocks.len() - nconv).rev() {
            let b = self.blocks[nconv + l];
            let h = &acts[l];
            {
                let gw = &mut grad[b.weights..b.weights + b.weight_len()];
                gemm(
                    b.fan_out,
                    batch,
                    b.fan_in,
                    &dz,
                    (1, b.fan_out),
                    h,
                    (b.fan_in, 1),
                    1.0,
                    gw,
                    (b.fan_in, 1),
                );
            }
            let gb = &mut grad[b.bias..b.bias + b.fan_out];
            for row in dz.chunks(b.fan_out) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if l == 0 && nconv == 0 {
                break;
            }
            let mut dh = vec![0.0; batch * b.fan_in];
            gemm(
                batch,
                b.fan_out,
                b.fan_in,
                &dz,
                (b.fan_out, 1),
                self.weights(&b),
                (b.fan_in, 1),
                0.0,
                &mut dh,
                (b.fan_in, 1),
            );
            // every dense input is a ReLU (or ReLU-then-pool) output
            for (d, &a) in dh.iter_mut().zip(h) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            dz = dh;
        }

        if nconv > 0 {
            let flat = self.arch.flat_len();
            let conv_end = self.blocks[nconv - 1].end();
            let per_example: Vec<Vec<f64>> = caches
                .into_par_iter()
                .enumerate()
                .map(|(e, c)| self.conv_backward(&c, &dz[e * flat..(e + 1) * flat], conv_end))
                .collect();
            // fixed-order reduction keeps the result scheduling-independent
            for g in per_example {
                for (a, b) in grad[..conv_end].iter_mut().zip(&g) {
                    *a += b;
                }
            }
        }
        Ok((loss, grad))
    }

    fn conv_backward(&self, cache: &ConvCache, d_out: &[f64], len: usize) -> Vec<f64> {
        let mut grad = vec![0.0; len];
        let mut g = d_out.to_vec();
        let mut cols = Vec::new();
        for l in (0..self.shapes.len()).rev() {
            let s = &self.shapes[l];
            let b = &self.blocks[l];
            let p = s.conv_side.pow(3);
            let k = s.fan_in();
            let relu = &cache.relu[l];
            let mut dz = if s.pool > 1 {
                let mut d = vec![0.0; s.out_channels * p];
                for (o, &at) in cache.argmax[l].iter().enumerate() {
                    d[at as usize] += g[o];
                }
                d
            } else {
                g
            };
            for (d, &r) in dz.iter_mut().zip(relu) {
                if r <= 0.0 {
                    *d = 0.0;
                }
            }
            im2col(s, &cache.inputs[l], &mut cols);
            gemm(
                s.out_channels,
                p,
                k,
                &dz,
                (p, 1),
                &cols,
                (1, p),
                1.0,
                &mut grad[b.weights..b.weights + b.weight_len()],
                (k, 1),
            );
            for (c, row) in dz.chunks(p).enumerate() {
                grad[b.bias + c] += row.iter().sum::<f64>();
            }
            if l == 0 {
                break;
            }
            let mut dcols = vec![0.0; k * p];
            gemm(
                k,
                s.out_channels,
                p,
                self.weights(b),
                (1, k),
                &dz,
                (p, 1),
                0.0,
                &mut dcols,
                (p, 1),
            );
            let mut gin = vec![0.0; s.in_channels * s.in_side.pow(3)];
            col2im(s, &dcols, &mut gin);
            g = gin;
        }
        grad
    }

    /// Gradient of the mean voxel cross-entropy for one example.
    pub fn backward(&self, x: &OccupancyGrid, y: &OccupancyGrid) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_input(y)?;
        let (xv, yv) = (grid_values(x), grid_values(y));
        Ok(self.batch_gradient(&[&xv], &[&yv])?.1)
    }
}

/// Occupancy as 0/1 reals.
pub fn grid_values(g: &OccupancyGrid) -> Vec<f64> {
    g.data().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
}

#[inline]
fn point_loss(y: f64, p: f64) -> f64 {
    let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean voxel cross-entropy, with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn cross_entropy(y: &OccupancyGrid, y_pred: &WeightedGrid) -> Result<f64> {
    if y.dims() != y_pred.dims {
        return Err(Error::DimMismatch {
            expected: y.dims(),
            got: y_pred.dims,
        });
    }
    let n = y.len() as f64;
    Ok(y.data()
        .iter()
        .zip(&y_pred.data)
        .map(|(&t, &p)| point_loss(if t { 1.0 } else { 0.0 }, p))
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::arch::ConvSpec;

    #[test]
    fn zero_model_outputs_one_half() {
        let arch = Architecture::new(6, vec![ConvSpec::new(2, 3, 2)], vec![5, 216]).unwrap();
        let m = Model::zeros(arch).unwrap();
        let mut x = OccupancyGrid::cube(6);
        x.set(1, 2, 3, true);
        let y = m.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn wrong_input_side_is_rejected() {
        let m = Model::init(Architecture::compact(24).unwrap(), 0).unwrap();
        assert!(matches!(
            m.forward(&OccupancyGrid::cube(20)),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn tiny_conv_matches_hand_arithmetic() {
        // 2^3 input, one 2^3 kernel (a single dot product), dense 1 -> 8
        let arch = Architecture::new(2, vec![ConvSpec::new(1, 2, 1)], vec![8]).unwrap();
        let mut m = Model::zeros(arch).unwrap();
        let kernel: Vec<f64> = (0..8).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        m.params[..8].copy_from_slice(&kernel);
        m.params[8] = -0.3; // conv bias
        let dense_w: Vec<f64> = (0..8).map(|i| 0.5 - 0.2 * i as f64).collect();
        m.params[9..17].copy_from_slice(&dense_w);
        let dense_b: Vec<f64> = (0..8).map(|i| 0.05 * i as f64).collect();
        m.params[17..25].copy_from_slice(&dense_b);

        let x: Vec<f64> = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let out = m.predict_raw(&[&x]).unwrap().pop().unwrap();
        // conv: sum(k_i x_i) + b = 0.1 + 0.3 + 0.4 + 0.7 - 0.3 = 1.2 -> ReLU 1.2
        let h = (0.1 * 1.0 + 0.3 + 0.4 + 0.7 - 0.3f64).max(0.0);
        for i in 0..8 {
            let z = dense_w[i] * h + dense_b[i];
            let want = 1.0 / (1.0 + (-z).exp());
            assert!((out[i] - want).abs() < 1e-12, "{i}: {} vs {want}", out[i]);
        }
    }

    #[test]
    fn he_and_glorot_statistics() {
        let arch = Architecture::compact(24).unwrap();
        let m = Model::init(arch, 7).unwrap();
        let blocks = m.blocks().to_vec();
        for (i, b) in blocks.iter().enumerate() {
            let w = &m.params[b.weights..b.weights + b.weight_len()];
            assert!(m.params[b.bias..b.end()].iter().all(|&v| v == 0.0));
            let n = w.len() as f64;
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if i + 1 == blocks.len() {
                let a = (6.0 / (b.fan_in + b.fan_out) as f64).sqrt();
                assert!(w.iter().all(|v| v.abs() <= a));
                let want = a * a / 3.0;
                assert!((var - want).abs() / want < 0.1, "glorot var {var} vs {want}");
            } else if w.len() >= 10_000 {
                let want = 2.0 / b.fan_in as f64;
                assert!((var - want).abs() / want < 0.1, "layer {i} var {var} vs {want}");
            }
        }
        assert_eq!(m, Model::init(Architecture::compact(24).unwrap(), 7).unwrap());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut y = OccupancyGrid::cube(1);
        y.set(0, 0, 0, true);
        let p = WeightedGrid::new([1; 3], 1.0 - 1e-7);
        assert!((cross_entropy(&y, &p).unwrap() - 1e-7).abs() < 1e-12);
        let p = WeightedGrid::new([1; 3], 1.0);
        assert!(cross_entropy(&y, &p).unwrap() > 0.0);
        let y0 = OccupancyGrid::cube(1);
        let half = WeightedGrid::new([1; 3], 0.5);
        assert!((cross_entropy(&y0, &half).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(cross_entropy(&OccupancyGrid::cube(2), &half).is_err());
    }

    #[test]
    fn linear_sigmoid_gradient_closed_form() {
        // one input voxel, one output: p = s(w x + b), dL/dw = (p - y) x
        let arch = Architecture::new(1, vec![], vec![1]).unwrap();
        let m = Model::from_params(arch, vec![0.7, -0.2]).unwrap();
        let (x, y) = (0.9, 1.0);
        let (_, g) = m.batch_gradient(&[&[x]], &[&[y]]).unwrap();
        let p = 1.0 / (1.0 + (-(0.7 * x - 0.2f64)).exp());
        assert!((g[0] - (p - y) * x).abs() < 1e-10);
        assert!((g[1] - (p - y)).abs() < 1e-10);
    }

    #[test]
    fn gradient_vanishes_at_own_prediction() {
        let arch = Architecture::new(4, vec![ConvSpec::new(2, 2, 1)], vec![3, 64]).unwrap();
        let m = Model::init(arch, 3).unwrap();
        let x: Vec<f64> = (0..64).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        let target = m.predict_raw(&[&x]).unwrap().pop().unwrap();
        let (_, g) = m.batch_gradient(&[&x], &[&target]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }
}
