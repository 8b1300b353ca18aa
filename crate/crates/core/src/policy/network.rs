//! The attention scoring network and its hand-written backward pass.
//!
//! Per lot `i` with normalized features `x_i`:
//!
//! ```text
//! e_i = tanh(W_e x_i + b_e)
//! q_i, k_i, v_i = W_{q,k,v} e_i + b_{q,k,v}
//! a_ij = softmax_j(q_i . k_j / sqrt(d_k))
//! h_i = e_i + sum_j a_ij v_j
//! s_i = w_2 . tanh(W_1 h_i + b_1) + b_2
//! ```
//!
//! The critic reads `mean_i h_i` concatenated with the fab-state features
//! through one tanh hidden layer.
//!
//! Rows are processed in a canonical order (lexicographic on features), so
//! a permuted queue yields bit-identically permuted scores.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticShape {
    pub fab_features: usize,
    pub hidden: usize,
}

/// Layer widths. The flat parameter layout is, in order: embedding, query,
/// key, value, hidden, score, then critic hidden and critic output. Each
/// layer stores its row-major `out x in` weights followed by its bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub lot_features: usize,
    pub embed: usize,
    pub key: usize,
    pub hidden: usize,
    pub critic: Option<CriticShape>,
}

impl Descriptor {
    pub const ES: Descriptor = Descriptor {
        lot_features: super::LOT_FEATURES,
        embed: 16,
        key: 16,
        hidden: 32,
        critic: None,
    };

    pub const PPO: Descriptor = Descriptor {
        critic: Some(CriticShape {
            fab_features: super::FAB_FEATURES,
            hidden: 32,
        }),
        ..Descriptor::ES
    };

    pub fn layout(&self) -> Layout {
        let mut off = 0;
        let mut lin = |out: usize, inp: usize| {
            let l = Linear { off, out, inp };
            off += out * inp + out;
            l
        };
        let embed = lin(self.embed, self.lot_features);
        let query = lin(self.key, self.embed);
        let key = lin(self.key, self.embed);
        let value = lin(self.embed, self.embed);
        let ff1 = lin(self.hidden, self.embed);
        let ff2 = lin(1, self.hidden);
        let critic = self.critic.map(|c| (lin(c.hidden, self.embed + c.fab_features), lin(1, c.hidden)));
        Layout {
            embed,
            query,
            key,
            value,
            ff1,
            ff2,
            critic,
            len: off,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }

    /// Parameters of the scoring path only.
    pub fn actor_count(&self) -> usize {
        let l = self.layout();
        l.ff2.off + l.ff2.out * l.ff2.inp + l.ff2.out
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "attn1:{}-{}-{}-{}", self.lot_features, self.embed, self.key, self.hidden)?;
        if let Some(c) = self.critic {
            write!(f, "+critic:{}-{}", c.fab_features, c.hidden)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub off: usize,
    pub out: usize,
    pub inp: usize,
}

impl Linear {
    fn w(&self, o: usize, i: usize) -> usize {
        self.off + o * self.inp + i
    }

    fn b(&self, o: usize) -> usize {
        self.off + self.out * self.inp + o
    }

    fn apply(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        for o in 0..self.out {
            let row = &p[self.w(o, 0)..self.w(o, 0) + self.inp];
            let mut acc = p[self.b(o)];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out[o] = acc;
        }
    }

    /// Accumulates weight and bias gradients for output gradient `dy` and
    /// input `x`, and adds `W^T dy` to `dx` when given.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        for o in 0..self.out {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            let base = self.w(o, 0);
            for i in 0..self.inp {
                grad[base + i] += g * x[i];
            }
            grad[self.b(o)] += g;
        }
        if let Some(dx) = dx {
            for o in 0..self.out {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                let base = self.w(o, 0);
                for i in 0..self.inp {
                    dx[i] += p[base + i] * g;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub embed: Linear,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub ff1: Linear,
    pub ff2: Linear,
    pub critic: Option<(Linear, Linear)>,
    pub len: usize,
}

/// Descriptor plus flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub descriptor: Descriptor,
    theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(descriptor: Descriptor) -> Self {
        PolicyParams {
            theta: vec![0.0; descriptor.param_count()],
            descriptor,
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: rand::Rng>(descriptor: Descriptor, rng: &mut R) -> Self {
        let mut p = Self::zeros(descriptor);
        let layout = descriptor.layout();
        let mut layers = vec![layout.embed, layout.query, layout.key, layout.value, layout.ff1, layout.ff2];
        if let Some((c1, c2)) = layout.critic {
            layers.extend([c1, c2]);
        }
        for l in layers {
            let bound = 1.0 / (l.inp as f64).sqrt();
            for i in 0..l.out * l.inp {
                p.theta[l.off + i] = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn unflatten(descriptor: Descriptor, theta: Vec<f64>) -> Result<Self> {
        let expected = descriptor.param_count();
        if theta.len() != expected {
            return Err(Error::ParamLength {
                expected,
                actual: theta.len(),
            });
        }
        Ok(PolicyParams { descriptor, theta })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Scores of a queue of normalized lot features, in input order.
    pub fn scores<Q: AsRef<[f64]>>(&self, queue: &[Q]) -> Vec<f64> {
        let mut fwd = Forward::default();
        fwd.run(self, queue);
        fwd.scores()
    }

    /// Critic estimate for a queue and normalized fab-state features.
    pub fn value<Q: AsRef<[f64]>>(&self, queue: &[Q], fab: &[f64]) -> Result<f64> {
        let mut fwd = Forward::default();
        fwd.run(self, queue);
        fwd.value(self, fab)
    }
}

fn row_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Intermediate values of one forward pass, kept for the backward pass.
/// Reusable across calls to avoid reallocations.
#[derive(Debug, Clone, Default)]
pub struct Forward {
    n: usize,
    /// `order[c]` is the input index of canonical row `c`.
    order: Vec<usize>,
    x: Vec<f64>,
    e: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    h: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    critic_in: Vec<f64>,
    critic_hidden: Vec<f64>,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn run<Q: AsRef<[f64]>>(&mut self, params: &PolicyParams, queue: &[Q]) {
        let d = params.descriptor;
        let l = d.layout();
        let p = params.as_slice();
        let n = queue.len();
        let (f, de, dk, dh) = (d.lot_features, d.embed, d.key, d.hidden);
        self.n = n;
        self.order.clear();
        self.order.extend(0..n);
        self.order.sort_by(|&i, &j| row_cmp(queue[i].as_ref(), queue[j].as_ref()));

        resize(&mut self.x, n * f);
        resize(&mut self.e, n * de);
        resize(&mut self.q, n * dk);
        resize(&mut self.k, n * dk);
        resize(&mut self.v, n * de);
        resize(&mut self.a, n * n);
        resize(&mut self.h, n * de);
        resize(&mut self.z, n * dh);
        resize(&mut self.s, n);

        for (c, &i) in self.order.iter().enumerate() {
            self.x[c * f..(c + 1) * f].copy_from_slice(&queue[i].as_ref()[..f]);
        }
        for c in 0..n {
            let e = &mut self.e[c * de..(c + 1) * de];
            l.embed.apply(p, &self.x[c * f..(c + 1) * f], e);
            e.iter_mut().for_each(|v| *v = v.tanh());
            l.query.apply(p, e, &mut self.q[c * dk..(c + 1) * dk]);
            l.key.apply(p, e, &mut self.k[c * dk..(c + 1) * dk]);
            l.value.apply(p, e, &mut self.v[c * de..(c + 1) * de]);
        }
        let scale = 1.0 / (dk as f64).sqrt();
        for i in 0..n {
            let qi = &self.q[i * dk..(i + 1) * dk];
            let row = &mut self.a[i * n..(i + 1) * n];
            for j in 0..n {
                let kj = &self.k[j * dk..(j + 1) * dk];
                row[j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
            let h = &mut self.h[i * de..(i + 1) * de];
            h.copy_from_slice(&self.e[i * de..(i + 1) * de]);
            for j in 0..n {
                let aij = row[j];
                for (hv, vv) in h.iter_mut().zip(&self.v[j * de..(j + 1) * de]) {
                    *hv += aij * vv;
                }
            }
            let z = &mut self.z[i * dh..(i + 1) * dh];
            l.ff1.apply(p, h, z);
            z.iter_mut().for_each(|v| *v = v.tanh());
            let mut s = [0.0];
            l.ff2.apply(p, z, &mut s);
            self.s[i] = s[0];
        }
    }

    /// Scores in input order.
    pub fn scores(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (c, &i) in self.order.iter().enumerate() {
            out[i] = self.s[c];
        }
        out
    }

    /// Attention weights of canonical row `c` over canonical rows.
    pub fn attention_row(&self, c: usize) -> &[f64] {
        &self.a[c * self.n..(c + 1) * self.n]
    }

    /// Critic output; requires the forward pass to have run with the same
    /// parameters.
    pub fn value(&mut self, params: &PolicyParams, fab: &[f64]) -> Result<f64> {
        let d = params.descriptor;
        let (c1, c2) = d.layout().critic.ok_or(Error::MissingCritic)?;
        let shape = d.critic.expect("layout has critic");
        let de = d.embed;
        resize(&mut self.critic_in, de + shape.fab_features);
        resize(&mut self.critic_hidden, shape.hidden);
        let inv_n = 1.0 / self.n as f64;
        for c in 0..self.n {
            for (m, h) in self.critic_in[..de].iter_mut().zip(&self.h[c * de..(c + 1) * de]) {
                *m += h;
            }
        }
        self.critic_in[..de].iter_mut().for_each(|m| *m *= inv_n);
        self.critic_in[de..].copy_from_slice(&fab[..shape.fab_features]);
        let p = params.as_slice();
        c1.apply(p, &self.critic_in, &mut self.critic_hidden);
        self.critic_hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = [0.0];
        c2.apply(p, &self.critic_hidden, &mut out);
        Ok(out[0])
    }

    /// Adds to `grad` the gradient of a loss whose partial derivatives are
    /// `dscores` (input order) and `dvalue` (for the last [`Forward::value`]
    /// call; pass 0 when the critic was not used).
    pub fn backward(&self, params: &PolicyParams, dscores: &[f64], dvalue: f64, grad: &mut [f64]) {
        let d = params.descriptor;
        let l = d.layout();
        let p = params.as_slice();
        let n = self.n;
        let (f, de, dk, dh) = (d.lot_features, d.embed, d.key, d.hidden);
        let mut dhid = vec![0.0; n * de];

        // Score head.
        let mut dz = vec![0.0; dh];
        for (c, &i) in self.order.iter().enumerate() {
            let ds = dscores[i];
            if ds == 0.0 {
                continue;
            }
            let z = &self.z[c * dh..(c + 1) * dh];
            dz.iter_mut().for_each(|v| *v = 0.0);
            l.ff2.backward(p, z, &[ds], grad, Some(&mut dz));
            for (g, zv) in dz.iter_mut().zip(z) {
                *g *= 1.0 - zv * zv;
            }
            l.ff1.backward(p, &self.h[c * de..(c + 1) * de], &dz, grad, Some(&mut dhid[c * de..(c + 1) * de]));
        }

        // Critic.
        if dvalue != 0.0 {
            if let Some((c1, c2)) = l.critic {
                let ch = d.critic.expect("layout has critic").hidden;
                let mut du = vec![0.0; ch];
                l2_backward(c2, p, &self.critic_hidden, dvalue, grad, &mut du);
                for (g, u) in du.iter_mut().zip(&self.critic_hidden) {
                    *g *= 1.0 - u * u;
                }
                let mut din = vec![0.0; self.critic_in.len()];
                c1.backward(p, &self.critic_in, &du, grad, Some(&mut din));
                let inv_n = 1.0 / n as f64;
                for c in 0..n {
                    for (g, m) in dhid[c * de..(c + 1) * de].iter_mut().zip(&din[..de]) {
                        *g += m * inv_n;
                    }
                }
            }
        }

        // Attention.
        let mut de_ = dhid.clone();
        let mut dq = vec![0.0; n * dk];
        let mut dkk = vec![0.0; n * dk];
        let mut dv = vec![0.0; n * de];
        let mut da = vec![0.0; n];
        let scale = 1.0 / (dk as f64).sqrt();
        for i in 0..n {
            let dh_i = &dhid[i * de..(i + 1) * de];
            let row = &self.a[i * n..(i + 1) * n];
            let mut dot = 0.0;
            for j in 0..n {
                let vj = &self.v[j * de..(j + 1) * de];
                da[j] = dh_i.iter().zip(vj).map(|(a, b)| a * b).sum();
                dot += row[j] * da[j];
                for (g, h) in dv[j * de..(j + 1) * de].iter_mut().zip(dh_i) {
                    *g += row[j] * h;
                }
            }
            for j in 0..n {
                let dlogit = row[j] * (da[j] - dot) * scale;
                if dlogit == 0.0 {
                    continue;
                }
                for t in 0..dk {
                    dq[i * dk + t] += dlogit * self.k[j * dk + t];
                    dkk[j * dk + t] += dlogit * self.q[i * dk + t];
                }
            }
        }
        for c in 0..n {
            let e = &self.e[c * de..(c + 1) * de];
            let dec = &mut de_[c * de..(c + 1) * de];
            l.query.backward(p, e, &dq[c * dk..(c + 1) * dk], grad, Some(dec));
            l.key.backward(p, e, &dkk[c * dk..(c + 1) * dk], grad, Some(dec));
            l.value.backward(p, e, &dv[c * de..(c + 1) * de], grad, Some(dec));
            for (g, ev) in dec.iter_mut().zip(e) {
                *g *= 1.0 - ev * ev;
            }
            l.embed.backward(p, &self.x[c * f..(c + 1) * f], dec, grad, None);
        }
    }
}

fn l2_backward(l: Linear, p: &[f64], x: &[f64], dy: f64, grad: &mut [f64], dx: &mut [f64]) {
    l.backward(p, x, &[dy], grad, Some(dx));
}

fn resize(v: &mut Vec<f64>, n: usize) {
    v.clear();
    v.resize(n, 0.0);
}

/// Numerically stable softmax, summed in index order.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

/// `log softmax(x)`.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts() {
        let per_layer = |o: usize, i: usize| o * i + o;
        let es = per_layer(16, 11) + 3 * per_layer(16, 16) + per_layer(32, 16) + per_layer(1, 32);
        assert_eq!(Descriptor::ES.param_count(), es);
        assert_eq!(es, 1585);
        let critic = per_layer(32, 16 + 8) + per_layer(1, 32);
        assert_eq!(Descriptor::PPO.param_count(), es + critic);
        assert_eq!(Descriptor::PPO.actor_count(), es);
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let err = PolicyParams::unflatten(Descriptor::ES, vec![0.0; 10]).unwrap_err();
        assert!(matches!(err, Error::ParamLength { expected: 1585, actual: 10 }));
    }

    #[test]
    fn single_lot_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::init(Descriptor::ES, &mut rng);
        let mut fwd = Forward::default();
        fwd.run(&p, &[[0.5; 11]]);
        assert_eq!(fwd.attention_row(0), &[1.0]);
        assert!(fwd.scores()[0].is_finite());
    }

    #[test]
    fn identical_lots_score_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolicyParams::init(Descriptor::ES, &mut rng);
        let lot: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let s = p.scores(&[lot.clone(), lot]);
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn zero_critic_gives_zero_value() {
        let p = PolicyParams::zeros(Descriptor::PPO);
        assert_eq!(p.value(&[[1.0; 11]], &[2.0; 8]).unwrap(), 0.0);
        let es = PolicyParams::zeros(Descriptor::ES);
        assert!(matches!(es.value(&[[1.0; 11]], &[0.0; 8]), Err(Error::MissingCritic)));
    }

    #[test]
    fn descriptor_string() {
        assert_eq!(Descriptor::ES.to_string(), "attn1:11-16-16-32");
        assert_eq!(Descriptor::PPO.to_string(), "attn1:11-16-16-32+critic:8-32");
    }
}
