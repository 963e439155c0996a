use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::multiview::fusion::check_pair;
use crate::types::{floored_ln, ProbabilityStream, SegmentPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    /// Frames in the causal window ending at the current frame.
    pub window: usize,
    /// Temporal convolution width.
    pub kernel: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        ConfidenceConfig {
            window: 21,
            kernel: 3,
            embed_dim: 64,
            hidden: 32,
        }
    }
}

/// Per-frame view confidence `c_t` from two synchronized feature streams.
///
/// Each view's causal window is embedded by a temporal convolution followed
/// by max pooling over time. The comparison stage scores the concatenated
/// embeddings in both orders with the same two fully connected layers and
/// returns `c_t = softmax(s(i, j), s(j, i))[0]`, so equal embeddings always
/// give `c_t = 0.5`. The same struct holds parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceNet {
    pub window: usize,
    pub kernel: usize,
    /// `embed_dim x (kernel * feature_dim)`, taps ordered oldest first.
    pub conv_w: Array2<f64>,
    pub conv_b: Array1<f64>,
    /// `hidden x (2 * embed_dim)`.
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array1<f64>,
    /// Cancels between the two orderings; kept for the two-logit form.
    pub fc2_b: f64,
}

struct Embedding {
    values: Array2<f64>,
    /// Convolution position that won the max pool, per (frame, channel).
    argmax: Array2<usize>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ConfidenceNet {
    /// Random convolution and first layer, zero final layer (`c_t = 0.5` everywhere).
    pub fn new<R: Rng + ?Sized>(feature_dim: usize, config: &ConfidenceConfig, rng: &mut R) -> Result<Self> {
        if config.kernel == 0 || config.window < config.kernel {
            return Err(SegError::Config(format!(
                "window {} must be at least the kernel width {} (>= 1)",
                config.window, config.kernel
            )));
        }
        if feature_dim == 0 || config.embed_dim == 0 || config.hidden == 0 {
            return Err(SegError::Config(
                "confidence network dimensions must be positive".into(),
            ));
        }
        let conv_in = config.kernel * feature_dim;
        let normal = |fan_in: usize| Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
        let nc = normal(conv_in);
        let conv_w = Array2::from_shape_simple_fn((config.embed_dim, conv_in), || nc.sample(rng));
        let n1 = normal(2 * config.embed_dim);
        let fc1_w = Array2::from_shape_simple_fn((config.hidden, 2 * config.embed_dim), || n1.sample(rng));
        Ok(ConfidenceNet {
            window: config.window,
            kernel: config.kernel,
            conv_w,
            conv_b: Array1::zeros(config.embed_dim),
            fc1_w,
            fc1_b: Array1::zeros(config.hidden),
            fc2_w: Array1::zeros(config.hidden),
            fc2_b: 0.0,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.conv_w.ncols() / self.kernel
    }

    pub fn embed_dim(&self) -> usize {
        self.conv_w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.fc1_w.nrows()
    }

    /// A zero-valued network of the same shape (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        ConfidenceNet {
            window: self.window,
            kernel: self.kernel,
            conv_w: Array2::zeros(self.conv_w.dim()),
            conv_b: Array1::zeros(self.conv_b.len()),
            fc1_w: Array2::zeros(self.fc1_w.dim()),
            fc1_b: Array1::zeros(self.fc1_b.len()),
            fc2_w: Array1::zeros(self.fc2_w.len()),
            fc2_b: 0.0,
        }
    }

    /// `self += alpha * other`.
    pub fn scaled_add(&mut self, alpha: f64, other: &ConfidenceNet) {
        self.conv_w.scaled_add(alpha, &other.conv_w);
        self.conv_b.scaled_add(alpha, &other.conv_b);
        self.fc1_w.scaled_add(alpha, &other.fc1_w);
        self.fc1_b.scaled_add(alpha, &other.fc1_b);
        self.fc2_w.scaled_add(alpha, &other.fc2_w);
        self.fc2_b += alpha * other.fc2_b;
    }

    /// All parameters in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.conv_w.iter());
        v.extend(self.conv_b.iter());
        v.extend(self.fc1_w.iter());
        v.extend(self.fc1_b.iter());
        v.extend(self.fc2_w.iter());
        v.push(self.fc2_b);
        v
    }

    /// Inverse of [`ConfidenceNet::flatten`].
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let n = self.flatten().len();
        if values.len() != n {
            return Err(SegError::Dimension {
                what: "confidence parameters",
                expected: n,
                got: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for x in self
            .conv_w
            .iter_mut()
            .chain(self.conv_b.iter_mut())
            .chain(self.fc1_w.iter_mut())
            .chain(self.fc1_b.iter_mut())
            .chain(self.fc2_w.iter_mut())
        {
            *x = it.next().expect("length checked");
        }
        self.fc2_b = it.next().expect("length checked");
        Ok(())
    }

    fn check_features(&self, f: &ArrayView2<'_, f64>) -> Result<()> {
        if f.ncols() != self.feature_dim() {
            return Err(SegError::Dimension {
                what: "feature width",
                expected: self.feature_dim(),
                got: f.ncols(),
            });
        }
        Ok(())
    }

    /// Padded input row `q`: frames before the start repeat the first frame.
    fn padded_row(q: usize, pad: usize) -> usize {
        q.saturating_sub(pad)
    }

    fn embed(&self, x: &ArrayView2<'_, f64>) -> Embedding {
        let (t_len, f_dim) = x.dim();
        let pad = self.window - 1;
        let k = self.kernel;
        let n_pos = t_len + self.window - k;
        let e_dim = self.embed_dim();
        // conv[p] reads padded rows p..p+k
        let mut conv = Array2::zeros((n_pos, e_dim));
        let mut tap = vec![0.0; k * f_dim];
        for p in 0..n_pos {
            for j in 0..k {
                let row = x.row(Self::padded_row(p + j, pad));
                tap[j * f_dim..(j + 1) * f_dim]
                    .iter_mut()
                    .zip(row.iter())
                    .for_each(|(d, &s)| *d = s);
            }
            for c in 0..e_dim {
                let w = self.conv_w.row(c);
                conv[[p, c]] = self.conv_b[c] + w.iter().zip(&tap).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let span = self.window - k + 1;
        let mut values = Array2::zeros((t_len, e_dim));
        let mut argmax = Array2::zeros((t_len, e_dim));
        for t in 0..t_len {
            for c in 0..e_dim {
                let (mut bp, mut bv) = (t, conv[[t, c]]);
                for p in t + 1..t + span {
                    if conv[[p, c]] > bv {
                        bv = conv[[p, c]];
                        bp = p;
                    }
                }
                values[[t, c]] = bv;
                argmax[[t, c]] = bp;
            }
        }
        Embedding { values, argmax }
    }

    /// `s(u)` for `u = [e_first, e_second]`, with the hidden activations.
    fn score(&self, first: ndarray::ArrayView1<'_, f64>, second: ndarray::ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
        let e = first.len();
        let pre = Array1::from_shape_fn(self.hidden(), |h| {
            let w = self.fc1_w.row(h);
            self.fc1_b[h] + w.slice(ndarray::s![..e]).dot(&first) + w.slice(ndarray::s![e..]).dot(&second)
        });
        let hid = pre.mapv(f64::tanh);
        (self.fc2_w.dot(&hid) + self.fc2_b, hid)
    }

    /// `c_t` for every frame: the weight of the anchor view.
    pub fn forward(&self, anchor: ArrayView2<'_, f64>, auxiliary: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_features(&anchor)?;
        self.check_features(&auxiliary)?;
        if anchor.nrows() != auxiliary.nrows() {
            return Err(SegError::Dimension {
                what: "auxiliary feature rows",
                expected: anchor.nrows(),
                got: auxiliary.nrows(),
            });
        }
        let ei = self.embed(&anchor);
        let ej = self.embed(&auxiliary);
        Ok((0..anchor.nrows())
            .map(|t| {
                let (sij, _) = self.score(ei.values.row(t), ej.values.row(t));
                let (sji, _) = self.score(ej.values.row(t), ei.values.row(t));
                sigmoid(sij - sji)
            })
            .collect())
    }

    /// `c_t` from explicit embeddings (for testing the comparison stage).
    pub fn compare(&self, anchor_embedding: &Array1<f64>, auxiliary_embedding: &Array1<f64>) -> f64 {
        let (sij, _) = self.score(anchor_embedding.view(), auxiliary_embedding.view());
        let (sji, _) = self.score(auxiliary_embedding.view(), anchor_embedding.view());
        sigmoid(sij - sji)
    }

    /// Parameter gradient of a loss whose derivative with respect to `c_t` is `dl_dc[t]`.
    pub fn backward(
        &self,
        anchor: ArrayView2<'_, f64>,
        auxiliary: ArrayView2<'_, f64>,
        dl_dc: &[f64],
    ) -> Result<ConfidenceNet> {
        let c = self.forward(anchor, auxiliary)?;
        if dl_dc.len() != c.len() {
            return Err(SegError::Dimension {
                what: "confidence gradient",
                expected: c.len(),
                got: dl_dc.len(),
            });
        }
        let ei = self.embed(&anchor);
        let ej = self.embed(&auxiliary);
        let e_dim = self.embed_dim();
        let mut grad = self.zeros_like();
        let mut de_i = Array2::<f64>::zeros(ei.values.dim());
        let mut de_j = Array2::<f64>::zeros(ej.values.dim());
        for t in 0..c.len() {
            let d_delta = dl_dc[t] * c[t] * (1.0 - c[t]);
            if d_delta == 0.0 {
                continue;
            }
            for (sign, first, second, swap) in [(1.0, &ei, &ej, false), (-1.0, &ej, &ei, true)] {
                let (u1, u2) = (first.values.row(t), second.values.row(t));
                let (_, hid) = self.score(u1, u2);
                let ds = sign * d_delta;
                grad.fc2_w.scaled_add(ds, &hid);
                grad.fc2_b += ds;
                let dpre = Array1::from_shape_fn(hid.len(), |h| ds * self.fc2_w[h] * (1.0 - hid[h] * hid[h]));
                grad.fc1_b += &dpre;
                for (h, &dp) in dpre.iter().enumerate() {
                    if dp == 0.0 {
                        continue;
                    }
                    let mut row = grad.fc1_w.row_mut(h);
                    row.slice_mut(ndarray::s![..e_dim]).scaled_add(dp, &u1);
                    row.slice_mut(ndarray::s![e_dim..]).scaled_add(dp, &u2);
                }
                let du = self.fc1_w.t().dot(&dpre);
                let (d_first, d_second) = du.view().split_at(Axis(0), e_dim);
                let (dst_first, dst_second) = if swap {
                    (&mut de_j, &mut de_i)
                } else {
                    (&mut de_i, &mut de_j)
                };
                dst_first.row_mut(t).scaled_add(1.0, &d_first);
                dst_second.row_mut(t).scaled_add(1.0, &d_second);
            }
        }
        self.embed_backward(&anchor, &ei, &de_i, &mut grad);
        self.embed_backward(&auxiliary, &ej, &de_j, &mut grad);
        Ok(grad)
    }

    fn embed_backward(&self, x: &ArrayView2<'_, f64>, emb: &Embedding, de: &Array2<f64>, grad: &mut ConfidenceNet) {
        let f_dim = x.ncols();
        let pad = self.window - 1;
        for ((t, c), &g) in de.indexed_iter() {
            if g == 0.0 {
                continue;
            }
            let p = emb.argmax[[t, c]];
            grad.conv_b[c] += g;
            let mut w = grad.conv_w.row_mut(c);
            for j in 0..self.kernel {
                let row = x.row(Self::padded_row(p + j, pad));
                w.slice_mut(ndarray::s![j * f_dim..(j + 1) * f_dim]).scaled_add(g, &row);
            }
        }
    }
}

/// Value, confidence-network gradient and weights of the view-confidence loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewConfidenceLoss {
    pub value: f64,
    pub grad: ConfidenceNet,
    pub c: Vec<f64>,
}

/// `L_vc = -sum_t [c_t ln p(a_t | x_t^i) + (1 - c_t) ln p(a_t | x_t^j)]` on the
/// pseudo-label path, differentiated through `c_t` only. The frame classifier
/// is frozen for this term: the posteriors enter as constants.
pub fn loss_view_confidence(
    anchor: &ProbabilityStream,
    auxiliary: &ProbabilityStream,
    anchor_features: ArrayView2<'_, f64>,
    auxiliary_features: ArrayView2<'_, f64>,
    net: &ConfidenceNet,
    path: &SegmentPath,
) -> Result<ViewConfidenceLoss> {
    check_pair(anchor, auxiliary)?;
    if path.total_frames() != anchor.num_frames() {
        return Err(SegError::Dimension {
            what: "path frames",
            expected: anchor.num_frames(),
            got: path.total_frames(),
        });
    }
    let c = net.forward(anchor_features, auxiliary_features)?;
    let labels = path.expand();
    let mut value = 0.0;
    let mut dl_dc = Vec::with_capacity(labels.len());
    for (t, &a) in labels.iter().enumerate() {
        let li = floored_ln(anchor.row(t)[a]);
        let lj = floored_ln(auxiliary.row(t)[a]);
        value -= c[t] * li + (1.0 - c[t]) * lj;
        dl_dc.push(lj - li);
    }
    let grad = net.backward(anchor_features, auxiliary_features, &dl_dc)?;
    Ok(ViewConfidenceLoss { value, grad, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> ConfidenceNet {
        let cfg = ConfidenceConfig {
            window: 4,
            kernel: 2,
            embed_dim: 3,
            hidden: 4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = ConfidenceNet::new(2, &cfg, &mut rng).unwrap();
        let normal = Normal::new(0.0, 0.5).unwrap();
        net.fc2_w.mapv_inplace(|_| normal.sample(&mut rng));
        net
    }

    #[test]
    fn fresh_network_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ConfidenceNet::new(3, &ConfidenceConfig::default(), &mut rng).unwrap();
        let a = Array2::from_shape_fn((7, 3), |(t, f)| (t * 3 + f) as f64 * 0.1);
        let b = Array2::from_shape_fn((7, 3), |(t, f)| ((t + f) % 2) as f64);
        assert!(net.forward(a.view(), b.view()).unwrap().iter().all(|&c| c == 0.5));
    }

    #[test]
    fn equal_embeddings_give_one_half() {
        let net = small_net(3);
        let e = Array1::from(vec![0.3, -1.0, 2.0]);
        assert_eq!(net.compare(&e, &e), 0.5);
        let f = Array1::from(vec![1.0, 0.0, -0.5]);
        let c = net.compare(&e, &f);
        assert!((c + net.compare(&f, &e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_round_trip() {
        let net = small_net(4);
        let mut other = net.zeros_like();
        other.set_flat(&net.flatten()).unwrap();
        assert_eq!(other, net);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = small_net(5);
        let a = Array2::from_shape_fn((6, 2), |(t, f)| ((t * 7 + f * 3) % 5) as f64 * 0.3 - 0.5);
        let b = Array2::from_shape_fn((6, 2), |(t, f)| ((t * 2 + f * 5) % 7) as f64 * 0.2 - 0.4);
        let w = [0.3, -1.0, 0.7, 0.2, -0.4, 1.1];
        let loss = |n: &ConfidenceNet| -> f64 {
            n.forward(a.view(), b.view())
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(c, w)| c * w)
                .sum()
        };
        let grad = net.backward(a.view(), b.view(), &w).unwrap().flatten();
        let base = net.flatten();
        let h = 1e-5;
        let mut probe = net.clone();
        for i in 0..base.len() {
            let mut x = base.clone();
            x[i] += h;
            probe.set_flat(&x).unwrap();
            let up = loss(&probe);
            x[i] -= 2.0 * h;
            probe.set_flat(&x).unwrap();
            let down = loss(&probe);
            let num = (up - down) / (2.0 * h);
            let err = (num - grad[i]).abs() / 1f64.max(num.abs()).max(grad[i].abs());
            assert!(err < 1e-6, "param {i}: analytic {} numeric {num}", grad[i]);
        }
    }

    #[test]
    fn equally_confident_views_have_no_gradient() {
        let net = small_net(6);
        let p = ProbabilityStream::new(Array2::from_shape_fn(
            (5, 2),
            |(t, a)| if (t + a) % 2 == 0 { 0.8 } else { 0.2 },
        ))
        .unwrap();
        let fa = Array2::from_shape_fn((5, 2), |(t, f)| (t + f) as f64);
        let fb = Array2::from_shape_fn((5, 2), |(t, f)| (t * f) as f64);
        let path = SegmentPath::from_pairs(&[(0, 2), (1, 3)]).unwrap();
        let l = loss_view_confidence(&p, &p, fa.view(), fb.view(), &net, &path).unwrap();
        assert!(l.grad.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn better_anchor_raises_confidence() {
        let net = small_net(7);
        let good =
            ProbabilityStream::new(Array2::from_shape_fn((5, 2), |(_, a)| if a == 0 { 0.9 } else { 0.1 })).unwrap();
        let bad =
            ProbabilityStream::new(Array2::from_shape_fn((5, 2), |(_, a)| if a == 0 { 0.4 } else { 0.6 })).unwrap();
        let fa = Array2::from_shape_fn((5, 2), |(t, f)| (t + 2 * f) as f64 * 0.1);
        let fb = Array2::from_shape_fn((5, 2), |(t, f)| (t * f) as f64 * 0.2);
        let path = SegmentPath::from_pairs(&[(0, 5)]).unwrap();
        let l = loss_view_confidence(&good, &bad, fa.view(), fb.view(), &net, &path).unwrap();
        let mut stepped = net.clone();
        stepped.scaled_add(-1e-3, &l.grad);
        let after = stepped.forward(fa.view(), fb.view()).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&after) > mean(&l.c));
        let l2 = loss_view_confidence(&good, &bad, fa.view(), fb.view(), &stepped, &path).unwrap();
        assert!(l2.value < l.value);
    }
}
