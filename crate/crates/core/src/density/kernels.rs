//! Dense row-major primitives used by the encoder. `x` is `[n, din]`,
//! weights are `[din, dout]`.

pub(crate) fn linear(x: &[f64], n: usize, w: &[f64], b: &[f64], din: usize, dout: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * dout];
    for r in 0..n {
        let yr = &mut y[r * dout..(r + 1) * dout];
        yr.copy_from_slice(b);
        let xr = &x[r * din..(r + 1) * din];
        for (a, &xa) in xr.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let wa = &w[a * dout..(a + 1) * dout];
            for (yv, wv) in yr.iter_mut().zip(wa) {
                *yv += xa * wv;
            }
        }
    }
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    w: &[f64],
    din: usize,
    dout: usize,
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; n * din];
    for r in 0..n {
        let dyr = &dy[r * dout..(r + 1) * dout];
        for (g, d) in gb.iter_mut().zip(dyr) {
            *g += d;
        }
        let xr = &x[r * din..(r + 1) * din];
        let dxr = &mut dx[r * din..(r + 1) * din];
        for a in 0..din {
            let wa = &w[a * dout..(a + 1) * dout];
            let gwa = &mut gw[a * dout..(a + 1) * dout];
            let xa = xr[a];
            let mut acc = 0.0;
            for ((g, wv), d) in gwa.iter_mut().zip(wa).zip(dyr) {
                *g += xa * d;
                acc += wv * d;
            }
            dxr[a] = acc;
        }
    }
    dx
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], n: usize, h: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; n * h];
    let mut xhat = vec![0.0; n * h];
    let mut rstd = vec![0.0; n];
    for r in 0..n {
        let xr = &x[r * h..(r + 1) * h];
        let mean = xr.iter().sum::<f64>() / h as f64;
        let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..h {
            let xh = (xr[c] - mean) * rs;
            xhat[r * h + c] = xh;
            y[r * h + c] = gain[c] * xh + bias[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    n: usize,
    h: usize,
    gain: &[f64],
    ggain: &mut [f64],
    gbias: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; n * h];
    let hf = h as f64;
    for r in 0..n {
        let dyr = &dy[r * h..(r + 1) * h];
        let xh = &cache.xhat[r * h..(r + 1) * h];
        let mut dxhat = vec![0.0; h];
        for c in 0..h {
            ggain[c] += dyr[c] * xh[c];
            gbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / hf;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / hf;
        for c in 0..h {
            dx[r * h + c] = cache.rstd[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}
