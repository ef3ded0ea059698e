// Raw loops over row-major slices. Callers validate shapes.

/// c[n,m] = a[n,k] * b[k,m]
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * m];
    for i in 0..n {
        let crow = &mut c[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// c[n,k] = g[n,m] * b[k,m]^T
pub(crate) fn matmul_bt(g: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * k];
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            c[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// c[k,m] = a[n,k]^T * g[n,m]
pub(crate) fn matmul_at(a: &[f64], g: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * m];
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * m..(p + 1) * m];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
    c
}

pub(crate) struct ConvDims {
    pub height: usize,
    pub width: usize,
    pub cin: usize,
    pub cout: usize,
    pub ksize: usize,
}

impl ConvDims {
    fn taps(&self) -> impl Iterator<Item = (usize, usize, isize, isize)> + '_ {
        let half = (self.ksize / 2) as isize;
        (0..self.ksize).flat_map(move |ky| {
            (0..self.ksize).map(move |kx| (ky, kx, ky as isize - half, kx as isize - half))
        })
    }

    fn source(&self, y: usize, x: usize, dy: isize, dx: isize) -> Option<usize> {
        let sy = y as isize + dy;
        let sx = x as isize + dx;
        if sy < 0 || sx < 0 || sy >= self.height as isize || sx >= self.width as isize {
            None
        } else {
            Some(sy as usize * self.width + sx as usize)
        }
    }
}

/// Same-padded stride-1 convolution. input [H,W,Cin], kernel [K,K,Cin,Cout], bias [Cout].
pub(crate) fn conv2d(input: &[f64], kernel: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let mut out = Vec::with_capacity(d.height * d.width * d.cout);
    for _ in 0..d.height * d.width {
        out.extend_from_slice(bias);
    }
    for y in 0..d.height {
        for x in 0..d.width {
            let o = (y * d.width + x) * d.cout;
            for (ky, kx, dy, dx) in d.taps() {
                let Some(src) = d.source(y, x, dy, dx) else {
                    continue;
                };
                for c in 0..d.cin {
                    let v = input[src * d.cin + c];
                    if v == 0.0 {
                        continue;
                    }
                    let k0 = ((ky * d.ksize + kx) * d.cin + c) * d.cout;
                    for (ov, kv) in out[o..o + d.cout].iter_mut().zip(&kernel[k0..k0 + d.cout]) {
                        *ov += v * kv;
                    }
                }
            }
        }
    }
    out
}

/// Returns (d_input, d_kernel, d_bias).
pub(crate) fn conv2d_backward(
    input: &[f64],
    kernel: &[f64],
    grad: &[f64],
    d: &ConvDims,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gin = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernel.len()];
    let mut gb = vec![0.0; d.cout];
    for y in 0..d.height {
        for x in 0..d.width {
            let o = (y * d.width + x) * d.cout;
            let g = &grad[o..o + d.cout];
            for (b, gv) in gb.iter_mut().zip(g) {
                *b += gv;
            }
            for (ky, kx, dy, dx) in d.taps() {
                let Some(src) = d.source(y, x, dy, dx) else {
                    continue;
                };
                for c in 0..d.cin {
                    let k0 = ((ky * d.ksize + kx) * d.cin + c) * d.cout;
                    let krow = &kernel[k0..k0 + d.cout];
                    gin[src * d.cin + c] += krow.iter().zip(g).map(|(k, gv)| k * gv).sum::<f64>();
                    let v = input[src * d.cin + c];
                    for (gkv, gv) in gk[k0..k0 + d.cout].iter_mut().zip(g) {
                        *gkv += v * gv;
                    }
                }
            }
        }
    }
    (gin, gk, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5; 6] = [17; 39]
        assert_eq!(matmul(&[1., 2., 3., 4.], &[5., 6.], 2, 2, 1), vec![17., 39.]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = [1., 2., 3., 4., 5., 6.]; // 2x3
        let g = [1., -1., 2., 0.5]; // 2x2
        // a^T g : 3x2
        let at = [1., 4., 2., 5., 3., 6.];
        assert_eq!(matmul_at(&a, &g, 2, 3, 2), matmul(&at, &g, 3, 2, 2));
        // g b^T with b = a (2x3)? use b 3x2 -> g[2,2] * b[3,2]^T = [2,3]
        let b = [1., 2., 3., 4., 5., 6.];
        let bt = [1., 3., 5., 2., 4., 6.];
        assert_eq!(matmul_bt(&g, &b, 2, 3, 2), matmul(&g, &bt, 2, 2, 3));
    }
}
