//! Separable orthonormal transforms for patch groups.

/// Orthonormal DCT-II basis for `n`-point signals, row `k` = frequency `k`.
#[derive(Clone, Debug)]
pub struct Dct {
    n: usize,
    basis: Vec<f64>,
    transposed: Vec<f64>,
}

impl Dct {
    pub fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for i in 0..n {
                basis[k * n + i] = scale
                    * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        let mut transposed = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                transposed[i * n + k] = basis[k * n + i];
            }
        }
        Self {
            n,
            basis,
            transposed,
        }
    }

    /// 2D forward transform `C·P·Cᵀ` of an `n × n` patch; `tmp` is scratch of `n²`.
    pub fn forward_2d(&self, patch: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        matmul(&self.basis, patch, tmp, self.n);
        matmul(tmp, &self.transposed, out, self.n);
    }

    /// `Cᵀ·X·C`.
    pub fn inverse_2d(&self, coef: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        matmul(&self.transposed, coef, tmp, self.n);
        matmul(tmp, &self.basis, out, self.n);
    }
}

/// `out = a·b` for row-major `n × n` matrices.
fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    if n == 8 {
        return matmul_fixed::<8>(a, b, out);
    }
    for (arow, orow) in a.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        orow.fill(0.0);
        for (&aik, brow) in arow.iter().zip(b.chunks_exact(n)) {
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

fn matmul_fixed<const N: usize>(a: &[f64], b: &[f64], out: &mut [f64]) {
    let a: &[[f64; N]] = as_rows(a);
    let b: &[[f64; N]] = as_rows(b);
    for (i, orow) in out.chunks_exact_mut(N).take(N).enumerate() {
        let mut acc = [0.0; N];
        for k in 0..N {
            let aik = a[i][k];
            for j in 0..N {
                acc[j] += aik * b[k][j];
            }
        }
        orow.copy_from_slice(&acc);
    }
}

fn as_rows<const N: usize>(m: &[f64]) -> &[[f64; N]] {
    let (rows, _) = m[..N * N].as_chunks::<N>();
    rows
}

/// In-place orthonormal multi-level Haar transform along the group axis.
///
/// `data` holds `depth` vectors of length `stride` back to back; `depth`
/// must be a power of two. `tmp` is scratch of `depth · stride`.
pub fn haar_forward(data: &mut [f64], depth: usize, stride: usize, tmp: &mut [f64]) {
    debug_assert!(depth.is_power_of_two());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut len = depth;
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            for c in 0..stride {
                let a = data[2 * i * stride + c];
                let b = data[(2 * i + 1) * stride + c];
                tmp[i * stride + c] = (a + b) * s;
                tmp[(half + i) * stride + c] = (a - b) * s;
            }
        }
        data[..len * stride].copy_from_slice(&tmp[..len * stride]);
        len = half;
    }
}

pub fn haar_inverse(data: &mut [f64], depth: usize, stride: usize, tmp: &mut [f64]) {
    debug_assert!(depth.is_power_of_two());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut len = 2;
    while len <= depth {
        let half = len / 2;
        for i in 0..half {
            for c in 0..stride {
                let a = data[i * stride + c];
                let d = data[(half + i) * stride + c];
                tmp[2 * i * stride + c] = (a + d) * s;
                tmp[(2 * i + 1) * stride + c] = (a - d) * s;
            }
        }
        data[..len * stride].copy_from_slice(&tmp[..len * stride]);
        len *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_is_orthonormal() {
        let d = Dct::new(8);
        for a in 0..8 {
            for b in 0..8 {
                let dot: f64 = (0..8)
                    .map(|i| d.basis[a * 8 + i] * d.basis[b * 8 + i])
                    .sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dct_round_trip_and_dc() {
        let d = Dct::new(8);
        let patch: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let mut coef = vec![0.0; 64];
        let mut back = vec![0.0; 64];
        let mut tmp = vec![0.0; 64];
        d.forward_2d(&patch, &mut coef, &mut tmp);
        // DC of an orthonormal 2D DCT is sum / n.
        assert!((coef[0] - patch.iter().sum::<f64>() / 8.0).abs() < 1e-12);
        let energy: f64 = patch.iter().map(|v| v * v).sum();
        let coef_energy: f64 = coef.iter().map(|v| v * v).sum();
        assert!((energy - coef_energy).abs() < 1e-12);
        d.inverse_2d(&coef, &mut back, &mut tmp);
        for (a, b) in patch.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn haar_round_trip() {
        for depth in [1, 2, 4, 16] {
            let stride = 3;
            let orig: Vec<f64> = (0..depth * stride).map(|i| (i as f64).sin()).collect();
            let mut data = orig.clone();
            let mut tmp = vec![0.0; depth * stride];
            haar_forward(&mut data, depth, stride, &mut tmp);
            let e0: f64 = orig.iter().map(|v| v * v).sum();
            let e1: f64 = data.iter().map(|v| v * v).sum();
            assert!((e0 - e1).abs() < 1e-12);
            haar_inverse(&mut data, depth, stride, &mut tmp);
            for (a, b) in orig.iter().zip(&data) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
}
