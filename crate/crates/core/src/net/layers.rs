//! Dense kernels for the conv and dense stages. Tensors are flat `f64`
//! slices; a `C x S^3` volume stores channel `c` at `c * S^3` with the
//! grid memory order inside each channel.

use crate::net::arch::ConvShape;

/// `C = alpha * A * B + beta * C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= span(m, k, rsa, csa));
    assert!(b.len() >= span(k, n, rsb, csb));
    assert!(c.len() >= span(m, n, rsc, csc));
    // SAFETY: the assertions above keep every strided access in bounds and
    // `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Unfold a `C x S^3` input into a `(C k^3) x P` patch matrix, `P = Sc^3`.
/// Row `c k^3 + dx + k (dy + k dz)` holds the input shifted by `(dx, dy, dz)`.
pub(crate) fn im2col(s: &ConvShape, input: &[f64], cols: &mut Vec<f64>) {
    let (k, n, sc) = (s.kernel, s.in_side, s.conv_side);
    let p = sc * sc * sc;
    cols.clear();
    cols.resize(s.fan_in() * p, 0.0);
    let mut row = 0;
    for c in 0..s.in_channels {
        let chan = &input[c * n * n * n..(c + 1) * n * n * n];
        for dz in 0..k {
            for dy in 0..k {
                for dx in 0..k {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oz in 0..sc {
                        for oy in 0..sc {
                            let src = dx + n * ((oy + dy) + n * (oz + dz));
                            let d = sc * (oy + sc * oz);
                            dst[d..d + sc].copy_from_slice(&chan[src..src + sc]);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate patch gradients into `grad_in`.
pub(crate) fn col2im(s: &ConvShape, cols: &[f64], grad_in: &mut [f64]) {
    let (k, n, sc) = (s.kernel, s.in_side, s.conv_side);
    let p = sc * sc * sc;
    let mut row = 0;
    for c in 0..s.in_channels {
        let chan = &mut grad_in[c * n * n * n..(c + 1) * n * n * n];
        for dz in 0..k {
            for dy in 0..k {
                for dx in 0..k {
                    let src = &cols[row * p..(row + 1) * p];
                    for oz in 0..sc {
                        for oy in 0..sc {
                            let dst = dx + n * ((oy + dy) + n * (oz + dz));
                            let d = sc * (oy + sc * oz);
                            for (g, v) in chan[dst..dst + sc].iter_mut().zip(&src[d..d + sc]) {
                                *g += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Non-overlapping max pool over each channel of a `C x Sc^3` volume.
/// Records the flat argmax (first maximum in scan order) per output.
pub(crate) fn max_pool(s: &ConvShape, input: &[f64], out: &mut [f64], argmax: &mut [u32]) {
    let (sc, p, so) = (s.conv_side, s.pool, s.out_side);
    let vol_in = sc * sc * sc;
    let vol_out = so * so * so;
    for c in 0..s.out_channels {
        let base = c * vol_in;
        for oz in 0..so {
            for oy in 0..so {
                for ox in 0..so {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for dz in 0..p {
                        for dy in 0..p {
                            for dx in 0..p {
                                let i = base + (ox * p + dx) + sc * ((oy * p + dy) + sc * (oz * p + dz));
                                if input[i] > best {
                                    best = input[i];
                                    at = i;
                                }
                            }
                        }
                    }
                    let o = c * vol_out + ox + so * (oy + so * oz);
                    out[o] = best;
                    argmax[o] = at as u32;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(cin: usize, n: usize, k: usize) -> ConvShape {
        ConvShape {
            in_channels: cin,
            in_side: n,
            out_channels: 1,
            kernel: k,
            conv_side: n - k + 1,
            pool: 1,
            out_side: n - k + 1,
        }
    }

    #[test]
    fn gemm_matches_naive_product() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5 - 1.0).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm(2, 3, 4, &a, (3, 1), &b, (4, 1), 0.0, &mut c, (4, 1));
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|t| a[i * 3 + t] * b[t * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let s = shape(2, 5, 3);
        let x: Vec<f64> = (0..2 * 125).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut cols = Vec::new();
        im2col(&s, &x, &mut cols);
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&s, &y, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pooling_picks_block_maxima() {
        let s = ConvShape {
            in_channels: 1,
            in_side: 5,
            out_channels: 1,
            kernel: 1,
            conv_side: 5,
            pool: 2,
            out_side: 2,
        };
        let input: Vec<f64> = (0..125).map(|i| i as f64).collect();
        let mut out = vec![0.0; 8];
        let mut arg = vec![0; 8];
        max_pool(&s, &input, &mut out, &mut arg);
        // block (0,0,0) covers x,y,z in {0,1}; its max is at (1,1,1)
        assert_eq!(out[0], (1 + 5 + 25) as f64);
        assert_eq!(arg[7] as usize, 3 + 5 * 3 + 25 * 3);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
