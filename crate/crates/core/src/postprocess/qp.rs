//! Constrained smoothing of a binary voxel grid.
//!
//! The embedding function `f` minimizes the sum over voxels and axes of
//! squared second differences (central inside, one-sided at the faces),
//! subject to `v * f >= 0` with `v = +1` on occupied and `-1` on empty
//! voxels. Voxels farther than [`QpConfig::band`] (Chebyshev) from a voxel
//! of opposite sign stay fixed at `v`; the rest are optimized.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, WeightedGrid};
use crate::postprocess::MergeState;

/// Upper bound on the Hessian's largest eigenvalue: rows have absolute
/// coefficient sum 4, voxels appear with absolute weight at most 5 per axis.
pub const LIPSCHITZ_BOUND: f64 = 2.0 * 4.0 * 15.0;
pub const MAX_HALVINGS: usize = 10;
/// A spectral step is never tried beyond this multiple of the safe step.
const MAX_STEP_FACTOR: f64 = 512.0;
/// Largest grid the dense reference accepts.
pub const DENSE_MAX_VOXELS: usize = 216;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpConfig {
    pub iters: usize,
    /// First trial step. Later trials use the spectral step length.
    pub step: f64,
    pub tolerance: f64,
    pub band: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            step: 1.0 / LIPSCHITZ_BOUND,
            tolerance: 1e-8,
            band: 2,
        }
    }
}

impl QpConfig {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::invalid("at least one smoothing iteration is needed"));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::invalid(format!("smoothing step {} must be positive", self.step)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("smoothing tolerance must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub f: WeightedGrid,
    /// Energy of the start point, then after every accepted step.
    pub energies: Vec<f64>,
    pub free: usize,
}

impl QpSolution {
    pub fn energy(&self) -> f64 {
        *self.energies.last().expect("at least the start energy")
    }
}

/// One second-difference row: three voxel indices with weights 1, -2, 1.
type Row = [usize; 3];

struct Problem {
    free: Vec<usize>,
    rows: Vec<Row>,
    /// For each free voxel, the rows it appears in and its coefficient.
    uses: Vec<Vec<(usize, f64)>>,
    constant: f64,
    sign: Vec<f64>,
}

const COEF: [f64; 3] = [1.0, -2.0, 1.0];

fn second(f: &[f64], r: &Row) -> f64 {
    f[r[0]] - 2.0 * f[r[1]] + f[r[2]]
}

fn all_rows(dims: [usize; 3]) -> Vec<Row> {
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    let mut rows = Vec::new();
    for (a, &n) in dims.iter().enumerate() {
        if n < 3 {
            continue;
        }
        for i in 0..nx * ny * nz {
            let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
            let c = p[a];
            let s = c.saturating_sub(1).min(n - 3);
            let base = i - c * strides[a] + s * strides[a];
            rows.push([base, base + strides[a], base + 2 * strides[a]]);
        }
    }
    rows
}

/// Voxels within Chebyshev distance `band` of a voxel of opposite sign.
fn band_mask(v: &OccupancyGrid, band: usize) -> Vec<bool> {
    let dims = v.dims();
    let dilate = |mut m: Vec<bool>| -> Vec<bool> {
        for a in 0..3 {
            let src = m.clone();
            for (i, out) in m.iter_mut().enumerate() {
                let mut p = v.coords(i);
                let c = p[a];
                let lo = c.saturating_sub(band);
                let hi = (c + band).min(dims[a] - 1);
                *out = (lo..=hi).any(|k| {
                    p[a] = k;
                    src[v.index(p[0], p[1], p[2])]
                });
            }
        }
        m
    };
    let occ = dilate(v.data().to_vec());
    let emp = dilate(v.data().iter().map(|&b| !b).collect());
    v.data()
        .iter()
        .enumerate()
        .map(|(i, &b)| if b { emp[i] } else { occ[i] })
        .collect()
}

fn build(v: &OccupancyGrid, band: usize) -> Problem {
    let sign: Vec<f64> = v.data().iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let mask = band_mask(v, band);
    let free: Vec<usize> = (0..sign.len()).filter(|&i| mask[i]).collect();
    let mut slot = vec![usize::MAX; sign.len()];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let mut rows = Vec::new();
    let mut uses = vec![Vec::new(); free.len()];
    let mut constant = 0.0;
    for r in all_rows(v.dims()) {
        if r.iter().any(|&i| mask[i]) {
            let id = rows.len();
            for (j, &i) in r.iter().enumerate() {
                if mask[i] {
                    uses[slot[i]].push((id, COEF[j]));
                }
            }
            rows.push(r);
        } else {
            constant += second(&sign, &r).powi(2);
        }
    }
    Problem {
        free,
        rows,
        uses,
        constant,
        sign,
    }
}

impl Problem {
    fn residuals(&self, f: &[f64]) -> Vec<f64> {
        self.rows.par_iter().map(|r| second(f, r)).collect()
    }

    fn energy(&self, res: &[f64]) -> f64 {
        self.constant + res.iter().map(|r| r * r).sum::<f64>()
    }

    fn gradient(&self, res: &[f64]) -> Vec<f64> {
        self.uses
            .par_iter()
            .map(|u| 2.0 * u.iter().map(|&(row, c)| c * res[row]).sum::<f64>())
            .collect()
    }

    fn project(&self, i: usize, x: f64) -> f64 {
        if self.sign[i] > 0.0 {
            x.max(0.0)
        } else {
            x.min(0.0)
        }
    }
}

/// Smooth the embedding of a binary grid by projected gradient descent
/// started at `f = v`. Steps that raise the energy are halved, so the
/// energy sequence never increases; the solver stops after `iters` steps
/// or when the relative energy change drops below `tolerance`.
pub fn smooth(v: &OccupancyGrid, cfg: &QpConfig) -> Result<QpSolution> {
    cfg.validate()?;
    let p = build(v, cfg.band);
    let mut f = p.sign.clone();
    let mut res = p.residuals(&f);
    let mut e = p.energy(&res);
    let mut energies = vec![e];
    let safe = 1.0 / LIPSCHITZ_BOUND;
    let mut step = cfg.step;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..cfg.iters {
        if p.free.is_empty() {
            break;
        }
        let g = p.gradient(&res);
        if let Some((px, pg)) = &prev {
            let (mut ss, mut sy) = (0.0, 0.0);
            for (k, &i) in p.free.iter().enumerate() {
                let s = f[i] - px[k];
                ss += s * s;
                sy += s * (g[k] - pg[k]);
            }
            if sy > 0.0 && ss > 0.0 {
                step = (ss / sy).clamp(safe * 1e-6, safe * MAX_STEP_FACTOR);
            }
        }
        let x0: Vec<f64> = p.free.iter().map(|&i| f[i]).collect();
        let mut accepted = None;
        let mut stalled = false;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = f.clone();
            for (k, &i) in p.free.iter().enumerate() {
                trial[i] = p.project(i, x0[k] - step * g[k]);
            }
            let tres = p.residuals(&trial);
            let te = p.energy(&tres);
            if te <= e {
                accepted = Some((trial, tres, te));
                break;
            }
            if te - e <= 1e-13 * e.max(f64::MIN_POSITIVE) {
                // no representable progress left
                stalled = true;
                break;
            }
            step *= 0.5;
        }
        let Some((trial, tres, te)) = accepted else {
            // below the safe step a failed decrease is roundoff at the optimum
            if !stalled && step * 2.0 > safe {
                return Err(Error::StepTooLarge);
            }
            break;
        };
        prev = Some((x0, g));
        let change = (e - te).abs();
        f = trial;
        res = tres;
        e = te;
        energies.push(e);
        if change <= cfg.tolerance * energies[energies.len() - 2].max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(solution(v, f, energies, p.free.len()))
}

fn solution(v: &OccupancyGrid, f: Vec<f64>, energies: Vec<f64>, free: usize) -> QpSolution {
    QpSolution {
        f: WeightedGrid {
            dims: v.dims(),
            data: f,
        },
        energies,
        free,
    }
}

/// Smooth the merged high-resolution grid.
pub fn qp_smooth(ms: &MergeState, iters: usize, step: f64) -> Result<WeightedGrid> {
    let cfg = QpConfig {
        iters,
        step,
        ..QpConfig::default()
    };
    Ok(smooth(&ms.grid, &cfg)?.f)
}

/// Energy of an arbitrary embedding of `dims`.
pub fn energy(f: &WeightedGrid) -> f64 {
    all_rows(f.dims).iter().map(|r| second(&f.data, r).powi(2)).sum()
}

/// Exact solution of the same problem on a small grid by Lawson-Hanson
/// nonnegative least squares in the variables `g = v * f`.
pub fn solve_dense(v: &OccupancyGrid, band: usize) -> Result<(WeightedGrid, f64)> {
    if v.len() > DENSE_MAX_VOXELS {
        return Err(Error::invalid(format!(
            "dense solve limited to {DENSE_MAX_VOXELS} voxels"
        )));
    }
    let p = build(v, band);
    let n = p.free.len();
    let rows = all_rows(v.dims());
    let mut slot = vec![usize::MAX; v.len()];
    for (k, &i) in p.free.iter().enumerate() {
        slot[i] = k;
    }
    // residual = M g - b
    let mut m = DMatrix::<f64>::zeros(rows.len(), n);
    let mut b = DVector::<f64>::zeros(rows.len());
    for (ri, r) in rows.iter().enumerate() {
        for (j, &i) in r.iter().enumerate() {
            if slot[i] == usize::MAX {
                b[ri] -= COEF[j] * p.sign[i];
            } else {
                m[(ri, slot[i])] += COEF[j] * p.sign[i];
            }
        }
    }
    let g = nnls(&m, &b);
    let mut f = p.sign.clone();
    for (k, &i) in p.free.iter().enumerate() {
        f[i] = p.sign[i] * g[k];
    }
    let r = &m * &g - &b;
    Ok((
        WeightedGrid {
            dims: v.dims(),
            data: f,
        },
        r.norm_squared(),
    ))
}

fn nnls(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = m.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * m.norm().max(1.0) * b.norm().max(1.0);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = m.select_columns(&idx);
        let sol = sub.svd(true, true).solve(b, 1e-13).expect("svd with vectors");
        let mut s = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            s[j] = sol[k];
        }
        s
    };
    for _ in 0..3 * n + 10 {
        let w = m.transpose() * (b - m * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive);
            let bad: Vec<usize> = (0..n).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if bad.is_empty() {
                x = s;
                break;
            }
            let alpha = bad.iter().map(|&i| x[i] / (x[i] - s[i])).fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}
