//! Single causal self-attention block with pre-layer-normalization,
//! residual connections and a position-wise feed-forward layer.
//!
//! ```text
//! z0 = x + P[pos]
//! a  = LN1(z0);  q, k, v = Wq a, Wk a, Wv a
//! o_t = Σ_{j≤t} softmax_j(q_t·k_j / √d_h) v_j        (per head)
//! z1 = z0 + Wo o
//! f  = W2 relu(W1 LN2(z1) + b1) + b2
//! out = z1 + f
//! ```

use super::linalg::{dot, matvec, matvec_t_acc, outer_acc};

pub(crate) const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub pos: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub end: usize,
}

pub(crate) fn layout(d: usize, max_len: usize) -> Layout {
    let dd = d * d;
    let pos = 0;
    let ln1_g = pos + max_len * d;
    let ln1_b = ln1_g + d;
    let wq = ln1_b + d;
    let wk = wq + dd;
    let wv = wk + dd;
    let wo = wv + dd;
    let ln2_g = wo + dd;
    let ln2_b = ln2_g + d;
    let w1 = ln2_b + d;
    let b1 = w1 + dd;
    let w2 = b1 + d;
    let b2 = w2 + dd;
    Layout {
        pos,
        ln1_g,
        ln1_b,
        wq,
        wk,
        wv,
        wo,
        ln2_g,
        ln2_b,
        w1,
        b1,
        w2,
        b2,
        end: b2 + d,
    }
}

pub(crate) fn param_count(d: usize, max_len: usize) -> usize {
    layout(d, max_len).end
}

/// Square weight ranges plus the position table (Xavier-initialized); the
/// layer-norm gains (initialized to one) are returned separately.
pub(crate) fn init_ranges(
    d: usize,
    max_len: usize,
) -> (Vec<std::ops::Range<usize>>, Vec<std::ops::Range<usize>>) {
    let l = layout(d, max_len);
    let weights = vec![
        l.pos..l.ln1_g,
        l.wq..l.wk,
        l.wk..l.wv,
        l.wv..l.wo,
        l.wo..l.ln2_g,
        l.w1..l.b1,
        l.w2..l.b2,
    ];
    let gains = vec![l.ln1_g..l.ln1_b, l.ln2_g..l.ln2_b];
    (weights, gains)
}

pub(crate) struct LnCache {
    xhat: Vec<f64>,
    inv_std: f64,
}

pub(crate) fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = xhat
        .iter()
        .zip(g)
        .zip(b)
        .map(|((xh, g), b)| g * xh + b)
        .collect();
    (y, LnCache { xhat, inv_std })
}

/// Returns dx; accumulates gain and bias gradients.
fn layer_norm_backward(
    dy: &[f64],
    g: &[f64],
    cache: &LnCache,
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let d = dy.len() as f64;
    let dxhat: Vec<f64> = dy.iter().zip(g).map(|(dy, g)| dy * g).collect();
    for k in 0..dy.len() {
        dg[k] += dy[k] * cache.xhat[k];
        db[k] += dy[k];
    }
    let mean_dxhat = dxhat.iter().sum::<f64>() / d;
    let mean_dxhat_xhat = dxhat
        .iter()
        .zip(&cache.xhat)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / d;
    dxhat
        .iter()
        .zip(&cache.xhat)
        .map(|(dxh, xh)| cache.inv_std * (dxh - mean_dxhat - xh * mean_dxhat_xhat))
        .collect()
}

pub(crate) struct Cache {
    t_len: usize,
    ln1: Vec<LnCache>,
    a: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Attention weights per head: `alpha[h][t]` has `t + 1` entries.
    alpha: Vec<Vec<Vec<f64>>>,
    o: Vec<Vec<f64>>,
    ln2: Vec<LnCache>,
    b: Vec<Vec<f64>>,
    f1: Vec<Vec<f64>>,
    relu: Vec<Vec<f64>>,
}

pub(crate) fn forward(
    params: &[f64],
    d: usize,
    max_len: usize,
    heads: usize,
    inputs: &[f64],
) -> (Vec<f64>, Cache) {
    let l = layout(d, max_len);
    let t_len = inputs.len() / d;
    debug_assert!(t_len <= max_len);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let p = |r: std::ops::Range<usize>| &params[r];

    let mut z0 = Vec::with_capacity(t_len);
    let mut ln1 = Vec::with_capacity(t_len);
    let mut a = Vec::with_capacity(t_len);
    let (mut q, mut k, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..t_len {
        let row: Vec<f64> = inputs[t * d..(t + 1) * d]
            .iter()
            .zip(&params[l.pos + t * d..l.pos + (t + 1) * d])
            .map(|(x, pe)| x + pe)
            .collect();
        let (at, cache) = layer_norm(&row, p(l.ln1_g..l.ln1_b), p(l.ln1_b..l.wq));
        q.push(matvec(p(l.wq..l.wk), d, d, &at));
        k.push(matvec(p(l.wk..l.wv), d, d, &at));
        v.push(matvec(p(l.wv..l.wo), d, d, &at));
        z0.push(row);
        ln1.push(cache);
        a.push(at);
    }

    let mut alpha = vec![Vec::with_capacity(t_len); heads];
    let mut o = vec![vec![0.0; d]; t_len];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for t in 0..t_len {
            let mut w: Vec<f64> = (0..=t)
                .map(|j| dot(&q[t][cols.clone()], &k[j][cols.clone()]) * scale)
                .collect();
            super::linalg::softmax_in_place(&mut w);
            for (j, wj) in w.iter().enumerate() {
                for c in cols.clone() {
                    o[t][c] += wj * v[j][c];
                }
            }
            alpha[h].push(w);
        }
    }

    let mut out = Vec::with_capacity(t_len * d);
    let mut ln2 = Vec::with_capacity(t_len);
    let (mut b, mut f1, mut relu) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..t_len {
        let att = matvec(p(l.wo..l.ln2_g), d, d, &o[t]);
        let z1: Vec<f64> = z0[t].iter().zip(&att).map(|(x, y)| x + y).collect();
        let (bt, cache) = layer_norm(&z1, p(l.ln2_g..l.ln2_b), p(l.ln2_b..l.w1));
        let mut hidden = matvec(p(l.w1..l.b1), d, d, &bt);
        for (x, bias) in hidden.iter_mut().zip(p(l.b1..l.w2)) {
            *x += bias;
        }
        let r: Vec<f64> = hidden.iter().map(|x| x.max(0.0)).collect();
        let f = matvec(p(l.w2..l.b2), d, d, &r);
        out.extend(
            z1.iter()
                .zip(&f)
                .zip(p(l.b2..l.end))
                .map(|((z, f), b2)| z + f + b2),
        );
        ln2.push(cache);
        b.push(bt);
        f1.push(hidden);
        relu.push(r);
    }

    let cache = Cache {
        t_len,
        ln1,
        a,
        q,
        k,
        v,
        alpha,
        o,
        ln2,
        b,
        f1,
        relu,
    };
    (out, cache)
}

pub(crate) fn backward(
    params: &[f64],
    d: usize,
    max_len: usize,
    heads: usize,
    cache: &Cache,
    d_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let l = layout(d, max_len);
    let t_len = cache.t_len;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // Feed-forward sub-layer and second residual.
    let mut dz1 = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        let df = &d_out[t * d..(t + 1) * d];
        for (acc, g) in grad[l.b2..l.end].iter_mut().zip(df) {
            *acc += g;
        }
        outer_acc(&mut grad[l.w2..l.b2], df, &cache.relu[t]);
        let mut dr = vec![0.0; d];
        matvec_t_acc(&params[l.w2..l.b2], d, d, df, &mut dr);
        let dhidden: Vec<f64> = dr
            .iter()
            .zip(&cache.f1[t])
            .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
            .collect();
        for (acc, g) in grad[l.b1..l.w2].iter_mut().zip(&dhidden) {
            *acc += g;
        }
        outer_acc(&mut grad[l.w1..l.b1], &dhidden, &cache.b[t]);
        let mut db = vec![0.0; d];
        matvec_t_acc(&params[l.w1..l.b1], d, d, &dhidden, &mut db);
        let (g2, rest) = grad[l.ln2_g..].split_at_mut(d);
        let dx = layer_norm_backward(
            &db,
            &params[l.ln2_g..l.ln2_b],
            &cache.ln2[t],
            g2,
            &mut rest[..d],
        );
        for k in 0..d {
            dz1[t][k] = df[k] + dx[k];
        }
    }

    // Output projection and attention.
    let mut d_o = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        outer_acc(&mut grad[l.wo..l.ln2_g], &dz1[t], &cache.o[t]);
        matvec_t_acc(&params[l.wo..l.ln2_g], d, d, &dz1[t], &mut d_o[t]);
    }
    let mut dq = vec![vec![0.0; d]; t_len];
    let mut dk = vec![vec![0.0; d]; t_len];
    let mut dv = vec![vec![0.0; d]; t_len];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for t in 0..t_len {
            let alpha = &cache.alpha[h][t];
            let dalpha: Vec<f64> = (0..=t)
                .map(|j| dot(&d_o[t][cols.clone()], &cache.v[j][cols.clone()]))
                .collect();
            let inner: f64 = alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
            for j in 0..=t {
                for c in cols.clone() {
                    dv[j][c] += alpha[j] * d_o[t][c];
                }
                let ds = alpha[j] * (dalpha[j] - inner) * scale;
                for c in cols.clone() {
                    dq[t][c] += ds * cache.k[j][c];
                    dk[j][c] += ds * cache.q[t][c];
                }
            }
        }
    }

    // Projections, first layer norm and first residual.
    let mut d_inputs = vec![0.0; t_len * d];
    for t in 0..t_len {
        outer_acc(&mut grad[l.wq..l.wk], &dq[t], &cache.a[t]);
        outer_acc(&mut grad[l.wk..l.wv], &dk[t], &cache.a[t]);
        outer_acc(&mut grad[l.wv..l.wo], &dv[t], &cache.a[t]);
        let mut da = vec![0.0; d];
        matvec_t_acc(&params[l.wq..l.wk], d, d, &dq[t], &mut da);
        matvec_t_acc(&params[l.wk..l.wv], d, d, &dk[t], &mut da);
        matvec_t_acc(&params[l.wv..l.wo], d, d, &dv[t], &mut da);
        let (g1, rest) = grad[l.ln1_g..].split_at_mut(d);
        let dx = layer_norm_backward(
            &da,
            &params[l.ln1_g..l.ln1_b],
            &cache.ln1[t],
            g1,
            &mut rest[..d],
        );
        for k in 0..d {
            let dz0 = dz1[t][k] + dx[k];
            d_inputs[t * d + k] = dz0;
            grad[l.pos + t * d + k] += dz0;
        }
    }
    d_inputs
}
