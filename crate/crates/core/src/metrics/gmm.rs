//! One-dimensional Gaussian mixtures fitted by expectation maximization.

use std::f64::consts::{LN_2, PI};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERS: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
pub const MIN_VARIANCE: f64 = 1e-12;
/// Quadrature points over [0, 1] for the divergence.
pub const QUADRATURE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    pub components: Vec<Component>,
}

impl Gmm {
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_pdf(x, c.mean, c.variance))
            .sum()
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

enum Fit {
    Done(Gmm),
    Degenerate,
}

fn run_em(data: &[f64], mut comps: Vec<Component>) -> Fit {
    let n = data.len();
    let k = comps.len();
    let mut resp = vec![0.0; n * k];
    let mut logp = vec![0.0; k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..MAX_ITERS {
        let mut ll = 0.0;
        for (i, &x) in data.iter().enumerate() {
            for (j, c) in comps.iter().enumerate() {
                logp[j] =
                    c.weight.ln() - 0.5 * (2.0 * PI * c.variance).ln() - (x - c.mean).powi(2) / (2.0 * c.variance);
            }
            let lse = log_sum_exp(&logp);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logp[j] - lse).exp();
            }
        }
        for (j, c) in comps.iter_mut().enumerate() {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if !(nk > 0.0) {
                return Fit::Degenerate;
            }
            let mean = (0..n).map(|i| resp[i * k + j] * data[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + j] * (data[i] - mean).powi(2)).sum::<f64>() / nk;
            if !(var >= MIN_VARIANCE) {
                return Fit::Degenerate;
            }
            *c = Component {
                weight: nk / n as f64,
                mean,
                variance: var,
            };
        }
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= total);
        if (ll - prev).abs() <= TOLERANCE * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    Fit::Done(Gmm { components: comps })
}

/// Fit `k` components. Means start at evenly spaced quantiles; a degenerate
/// fit is retried once from means drawn at random data points.
pub fn fit_gmm(data: &[f64], k: usize, seed: u64) -> Result<Gmm> {
    if k == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    if data.len() < 2 * k {
        return Err(Error::invalid(format!(
            "{} values are too few for {k} components",
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var >= MIN_VARIANCE) {
        return Err(Error::DegenerateFit(format!(
            "data variance {var:e} is below {MIN_VARIANCE:e}"
        )));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let init = |means: Vec<f64>| -> Vec<Component> {
        means
            .into_iter()
            .map(|m| Component {
                weight: 1.0 / k as f64,
                mean: m,
                variance: var,
            })
            .collect()
    };
    let quantiles = (0..k)
        .map(|j| sorted[((j as f64 + 0.5) / k as f64 * sorted.len() as f64) as usize])
        .collect();
    if let Fit::Done(g) = run_em(data, init(quantiles)) {
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, data.len(), k).into_iter().map(|i| data[i]).collect();
    match run_em(data, init(picks)) {
        Fit::Done(g) => Ok(g),
        Fit::Degenerate => Err(Error::DegenerateFit("mixture component collapsed twice".into())),
    }
}

/// Jensen-Shannon divergence (natural log) of two densities on [0, 1],
/// each normalized to a discrete distribution over midpoint samples.
pub fn js_divergence(p: &Gmm, q: &Gmm) -> f64 {
    let n = QUADRATURE;
    let xs = (0..n).map(|i| (i as f64 + 0.5) / n as f64);
    let (pv, qv): (Vec<f64>, Vec<f64>) = xs.map(|x| (p.density(x), q.density(x))).unzip();
    let sp: f64 = pv.iter().sum();
    let sq: f64 = qv.iter().sum();
    if !(sp > 0.0) || !(sq > 0.0) {
        return LN_2;
    }
    let mut js = 0.0;
    for (a, b) in pv.iter().zip(&qv) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        // both masses subnormal: the halved sum rounds to zero
        if m == 0.0 {
            continue;
        }
        if a > 0.0 {
            js += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).ln();
        }
    }
    js.clamp(0.0, LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn recovers_two_separated_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Normal::new(0.2, 0.03).unwrap();
        let b = Normal::new(0.7, 0.05).unwrap();
        let data: Vec<f64> = (0..2000)
            .map(|i| {
                if i % 4 == 0 {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect();
        let g = fit_gmm(&data, 2, 0).unwrap();
        let mut c = g.components.clone();
        c.sort_by(|x, y| x.mean.total_cmp(&y.mean));
        assert!((c[0].mean - 0.2).abs() < 0.01 && (c[1].mean - 0.7).abs() < 0.01);
        assert!((c[0].weight - 0.25).abs() < 0.03);
        assert!((c[1].variance.sqrt() - 0.05).abs() < 0.005);
        let w: f64 = g.components.iter().map(|c| c.weight).sum();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..300).map(|_| rng.random_range(0.3..0.6)).collect();
        let g = fit_gmm(&data, 3, 0).unwrap();
        assert!(js_divergence(&g, &g) < 1e-12);
        let far = Gmm {
            components: vec![Component {
                weight: 1.0,
                mean: 0.95,
                variance: 1e-5,
            }],
        };
        let near = Gmm {
            components: vec![Component {
                weight: 1.0,
                mean: 0.05,
                variance: 1e-5,
            }],
        };
        let d = js_divergence(&near, &far);
        assert!(d <= LN_2 + 1e-9 && d > LN_2 - 1e-6, "{d}");
    }

    #[test]
    fn narrow_mixtures_in_the_tail_stay_finite() {
        let mix = |c: [(f64, f64, f64); 3]| Gmm {
            components: c
                .iter()
                .map(|&(weight, mean, variance)| Component { weight, mean, variance })
                .collect(),
        };
        // far tails underflow to subnormal masses on both sides
        let p = mix([
            (0.3699, 0.9037, 1.8018e-4),
            (0.4722, 0.9406, 2.5494e-4),
            (0.1579, 0.9801, 9.4053e-5),
        ]);
        let q = mix([
            (0.1511, 0.8817, 5.9895e-5),
            (0.3978, 0.9152, 2.2645e-4),
            (0.4511, 0.9595, 2.1646e-4),
        ]);
        let js = js_divergence(&p, &q);
        assert!(js.is_finite() && (0.0..=LN_2).contains(&js), "{js}");
        assert!(js > 0.0);
    }

    #[test]
    fn constant_data_is_degenerate() {
        assert!(matches!(fit_gmm(&[0.5; 50], 2, 0), Err(Error::DegenerateFit(_))));
    }
}
