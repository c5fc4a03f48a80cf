//! Gated recurrent encoder with square `d -> d` gates.
//!
//! Parameter layout (row-major, gates ordered reset, update, candidate):
//! `W` (3d × d) input weights, `U` (3d × d) recurrent weights, `b` (3d)
//! input biases, `b_hn` (d) recurrent bias of the candidate gate.
//!
//! ```text
//! r  = σ(W_r x + b_r + U_r h)
//! z  = σ(W_z x + b_z + U_z h)
//! n  = tanh(W_n x + b_n + r ⊙ (U_n h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```

use super::linalg::{matvec, matvec_t_acc, outer_acc, sigmoid};

pub(crate) fn param_count(d: usize) -> usize {
    6 * d * d + 4 * d
}

struct Layout {
    w: usize,
    u: usize,
    b: usize,
    bhn: usize,
    end: usize,
}

fn layout(d: usize) -> Layout {
    let w = 0;
    let u = w + 3 * d * d;
    let b = u + 3 * d * d;
    let bhn = b + 3 * d;
    Layout {
        w,
        u,
        b,
        bhn,
        end: bhn + d,
    }
}

/// Weight-matrix ranges (used for initialization).
pub(crate) fn weight_ranges(d: usize) -> Vec<std::ops::Range<usize>> {
    let l = layout(d);
    vec![l.w..l.u, l.u..l.b]
}

pub(crate) struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

pub(crate) struct Cache {
    steps: Vec<StepCache>,
}

/// Runs the recurrence over `t` inputs (row-major `t × d`) and returns every
/// hidden state.
pub(crate) fn forward(params: &[f64], d: usize, inputs: &[f64]) -> (Vec<f64>, Cache) {
    let l = layout(d);
    debug_assert_eq!(params.len(), l.end);
    let w = &params[l.w..l.u];
    let u = &params[l.u..l.b];
    let b = &params[l.b..l.bhn];
    let bhn = &params[l.bhn..l.end];
    let mut h = vec![0.0; d];
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(inputs.len() / d.max(1));
    for x in inputs.chunks_exact(d) {
        let a = matvec(w, 3 * d, d, x);
        let c = matvec(u, 3 * d, d, &h);
        let mut r = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut n = vec![0.0; d];
        let mut hn = vec![0.0; d];
        let mut h_next = vec![0.0; d];
        for k in 0..d {
            r[k] = sigmoid(a[k] + b[k] + c[k]);
            z[k] = sigmoid(a[d + k] + b[d + k] + c[d + k]);
            hn[k] = c[2 * d + k] + bhn[k];
            n[k] = (a[2 * d + k] + b[2 * d + k] + r[k] * hn[k]).tanh();
            h_next[k] = (1.0 - z[k]) * n[k] + z[k] * h[k];
        }
        outputs.extend_from_slice(&h_next);
        steps.push(StepCache {
            x: x.to_vec(),
            h_prev: std::mem::replace(&mut h, h_next),
            r,
            z,
            n,
            hn,
        });
    }
    (outputs, Cache { steps })
}

/// Back-propagates output gradients (`t × d`); accumulates parameter
/// gradients into `grad` and returns input gradients (`t × d`).
pub(crate) fn backward(
    params: &[f64],
    d: usize,
    cache: &Cache,
    d_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let l = layout(d);
    let w = &params[l.w..l.u];
    let u = &params[l.u..l.b];
    let t_len = cache.steps.len();
    let mut d_inputs = vec![0.0; t_len * d];
    let mut dh_next = vec![0.0; d];
    let mut g_a = vec![0.0; 3 * d];
    let mut g_c = vec![0.0; 3 * d];
    for t in (0..t_len).rev() {
        let s = &cache.steps[t];
        let mut dh_prev = vec![0.0; d];
        for k in 0..d {
            let dh = d_out[t * d + k] + dh_next[k];
            let dn = dh * (1.0 - s.z[k]);
            let dz = dh * (s.h_prev[k] - s.n[k]);
            dh_prev[k] = dh * s.z[k];
            let dan = dn * (1.0 - s.n[k] * s.n[k]);
            let dr = dan * s.hn[k];
            let dar = dr * s.r[k] * (1.0 - s.r[k]);
            let daz = dz * s.z[k] * (1.0 - s.z[k]);
            g_a[k] = dar;
            g_a[d + k] = daz;
            g_a[2 * d + k] = dan;
            g_c[k] = dar;
            g_c[d + k] = daz;
            g_c[2 * d + k] = dan * s.r[k];
        }
        outer_acc(&mut grad[l.w..l.u], &g_a, &s.x);
        outer_acc(&mut grad[l.u..l.b], &g_c, &s.h_prev);
        for (acc, g) in grad[l.b..l.bhn].iter_mut().zip(&g_a) {
            *acc += g;
        }
        for (acc, g) in grad[l.bhn..l.end].iter_mut().zip(&g_c[2 * d..]) {
            *acc += g;
        }
        matvec_t_acc(w, 3 * d, d, &g_a, &mut d_inputs[t * d..(t + 1) * d]);
        matvec_t_acc(u, 3 * d, d, &g_c, &mut dh_prev);
        dh_next = dh_prev;
    }
    d_inputs
}
