//! Incremental online decoding.
//!
//! Hypotheses are keyed by (trie node, start frame of the open segment).
//! For every node only the best way of reaching a given start frame is kept,
//! which makes the recurrence an exact Viterbi merge. The stored score of a
//! hypothesis covers the frame terms of all observed frames and the full
//! Poisson terms of its closed segments; the half-Poisson term of the open
//! segment is added only when the current label is queried, so the stored
//! value stays exact when the segment later closes.

use std::cmp::Ordering;

use ndarray::ArrayView1;

use crate::duration::{DurationModel, DurationScorer};
use crate::error::{Result, SegError};
use crate::grammar::{Grammar, NodeId, ROOT};
use crate::scores::frame_log_likelihoods;
use crate::types::{cmp_scores, floored_ln, ProbabilityStream, Segment, SegmentPath};

const NO_BACK: usize = usize::MAX;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OnlineConfig {
    /// Keep only this many hypotheses per frame. `None` decodes exactly.
    pub beam_width: Option<usize>,
}

/// One live hypothesis of the frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct DpHypothesis {
    pub node: NodeId,
    pub action: usize,
    /// 0-based first frame of the open segment.
    pub start: usize,
    pub segment_len: usize,
    /// Frame terms plus closed-segment Poisson terms; excludes the open segment's duration term.
    pub log_score: f64,
    /// Parent node and the start frame of the previous segment.
    pub backpointer: Option<(NodeId, usize)>,
}

/// Streaming decoder state. Feed one frame at a time with [`OnlineDecoder::step`].
#[derive(Debug, Clone)]
pub struct OnlineDecoder<'g> {
    grammar: &'g Grammar,
    dur: DurationScorer,
    ln_prior: Vec<f64>,
    n_act: usize,
    beam_width: Option<usize>,
    cum: Vec<Vec<f64>>,
    open: Vec<Vec<f64>>,
    back: Vec<Vec<usize>>,
    close_scratch: Vec<(f64, usize)>,
    history: Vec<usize>,
    best: Option<(NodeId, usize)>,
}

impl<'g> OnlineDecoder<'g> {
    pub fn new(dm: &DurationModel, grammar: &'g Grammar) -> Result<Self> {
        Self::with_config(dm, grammar, &OnlineConfig::default())
    }

    pub fn with_config(dm: &DurationModel, grammar: &'g Grammar, config: &OnlineConfig) -> Result<Self> {
        let n_act = dm.num_actions();
        if grammar.action_bound() > n_act {
            return Err(SegError::Precondition(format!(
                "grammar references action {} but the duration model covers {n_act} actions",
                grammar.action_bound() - 1
            )));
        }
        if config.beam_width == Some(0) {
            return Err(SegError::Config("beam width must be at least 1".into()));
        }
        let n_nodes = grammar.num_nodes();
        Ok(OnlineDecoder {
            grammar,
            dur: DurationScorer::new(dm, 64),
            ln_prior: dm.priors().iter().map(|&p| floored_ln(p)).collect(),
            n_act,
            beam_width: config.beam_width,
            cum: vec![vec![0.0]; n_act],
            open: vec![Vec::new(); n_nodes],
            back: vec![Vec::new(); n_nodes],
            close_scratch: vec![(f64::NEG_INFINITY, NO_BACK); n_nodes],
            history: Vec::new(),
            best: None,
        })
    }

    /// Number of frames consumed so far.
    pub fn t(&self) -> usize {
        self.history.len()
    }

    /// Labels emitted so far, one per consumed frame.
    pub fn history(&self) -> &[usize] {
        &self.history
    }

    /// Consumes one frame of posteriors (converted with the model's priors).
    pub fn step_posteriors(&mut self, row: ArrayView1<'_, f64>) -> Result<usize> {
        if row.len() != self.n_act {
            return Err(SegError::Dimension {
                what: "posterior row",
                expected: self.n_act,
                got: row.len(),
            });
        }
        let scores: Vec<f64> = row
            .iter()
            .zip(&self.ln_prior)
            .map(|(&p, lp)| floored_ln(p) - lp)
            .collect();
        self.step(&scores)
    }

    /// Consumes one frame of log-likelihood scores and returns the label of
    /// that frame: the open-segment action of the best prefix hypothesis.
    pub fn step(&mut self, frame_scores: &[f64]) -> Result<usize> {
        if frame_scores.len() != self.n_act {
            return Err(SegError::Dimension {
                what: "frame scores",
                expected: self.n_act,
                got: frame_scores.len(),
            });
        }
        if frame_scores.iter().any(|v| !v.is_finite()) {
            return Err(SegError::Precondition("frame scores must be finite".into()));
        }
        let t = self.history.len();
        for (a, &v) in frame_scores.iter().enumerate() {
            let last = self.cum[a][t];
            self.cum[a].push(last + v);
        }
        self.dur.reserve(t + 1);

        let g = self.grammar;
        // close every parent's hypotheses at frame t - 1
        if t > 0 {
            for p in 1..g.num_nodes() {
                if g.node(p).has_children() {
                    self.close_scratch[p] = self.best_closing(p, t);
                }
            }
        }
        for k in 1..g.num_nodes() {
            let parent = g.node(k).parent.expect("non-root node has a parent");
            let (v, b) = if parent == ROOT {
                (if t == 0 { 0.0 } else { f64::NEG_INFINITY }, NO_BACK)
            } else if t == 0 {
                (f64::NEG_INFINITY, NO_BACK)
            } else {
                self.close_scratch[parent]
            };
            self.open[k].push(v);
            self.back[k].push(b);
        }

        if let Some(width) = self.beam_width {
            self.prune(width);
        }

        let (node, start) = self
            .query()
            .ok_or_else(|| SegError::Infeasible(format!("no grammar-consistent hypothesis at frame {t}")))?;
        let action = g.node(node).action;
        self.best = Some((node, start));
        self.history.push(action);
        Ok(action)
    }

    /// Best hypothesis of node `p` whose segment ends right before frame `e`,
    /// including its full Poisson duration term. Shorter segments win ties.
    fn best_closing(&self, p: NodeId, e: usize) -> (f64, usize) {
        let a = self.grammar.node(p).action;
        let cum = &self.cum[a];
        let open = &self.open[p];
        let mut bv = f64::NEG_INFINITY;
        let mut bs = NO_BACK;
        for s in (0..e).rev() {
            let prev = open[s];
            if prev == f64::NEG_INFINITY {
                continue;
            }
            let v = prev + (cum[e] - cum[s]) + self.dur.poisson(a, e - s);
            if bs == NO_BACK || cmp_scores(v, bv) == Ordering::Greater {
                bv = v;
                bs = s;
            }
        }
        (bv, bs)
    }

    /// Argmax of stored score plus half-Poisson over the frontier. Ties go to
    /// the lower action, then the shorter open segment, then the lower node id.
    fn query(&self) -> Option<(NodeId, usize)> {
        let g = self.grammar;
        let e = self.history.len() + 1;
        let mut best: Option<(f64, usize, usize, NodeId, usize)> = None;
        for k in 1..g.num_nodes() {
            let a = g.node(k).action;
            let cum = &self.cum[a];
            let open = &self.open[k];
            for s in (0..e).rev() {
                let prev = open[s];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let len = e - s;
                let v = prev + (cum[e] - cum[s]) + self.dur.half_poisson(a, len);
                let better = match best {
                    None => true,
                    Some((bv, ba, bl, _, _)) => match cmp_scores(v, bv) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => (a, len) < (ba, bl),
                    },
                };
                if better {
                    best = Some((v, a, len, k, s));
                }
            }
        }
        best.map(|(_, _, _, k, s)| (k, s))
    }

    fn prune(&mut self, width: usize) {
        let e = self.history.len() + 1;
        let mut live: Vec<(f64, NodeId, usize)> = Vec::new();
        for k in 1..self.grammar.num_nodes() {
            let a = self.grammar.node(k).action;
            for s in 0..e {
                let prev = self.open[k][s];
                if prev != f64::NEG_INFINITY {
                    let v = prev + self.cum[a][e] - self.cum[a][s] + self.dur.half_poisson(a, e - s);
                    live.push((v, k, s));
                }
            }
        }
        if live.len() <= width {
            return;
        }
        live.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(y.2.cmp(&x.2)));
        for &(_, k, s) in &live[width..] {
            self.open[k][s] = f64::NEG_INFINITY;
        }
    }

    /// All live hypotheses after the last consumed frame.
    pub fn frontier(&self) -> Vec<DpHypothesis> {
        let g = self.grammar;
        let e = self.history.len();
        let mut out = Vec::new();
        if e == 0 {
            return out;
        }
        for k in 1..g.num_nodes() {
            let node = g.node(k);
            for s in 0..e {
                let prev = self.open[k][s];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                let back = self.back[k][s];
                out.push(DpHypothesis {
                    node: k,
                    action: node.action,
                    start: s,
                    segment_len: e - s,
                    log_score: prev + self.cum[node.action][e] - self.cum[node.action][s],
                    backpointer: (back != NO_BACK).then(|| (node.parent.unwrap(), back)),
                });
            }
        }
        out
    }

    /// The current best prefix segmentation of frames `0..t` (the path whose
    /// last action was emitted at the latest step).
    pub fn current_path(&self) -> SegmentPath {
        let Some((mut k, mut s)) = self.best else {
            return SegmentPath::default();
        };
        let g = self.grammar;
        let mut e = self.history.len();
        let mut segments = Vec::new();
        loop {
            segments.push(Segment {
                action: g.node(k).action,
                len: e - s,
            });
            let b = self.back[k][s];
            if b == NO_BACK {
                break;
            }
            e = s;
            s = b;
            k = g.node(k).parent.expect("non-root node has a parent");
        }
        segments.reverse();
        SegmentPath::new(segments).expect("decoded segments are non-empty")
    }

    /// Node of the current best hypothesis.
    pub fn current_node(&self) -> Option<NodeId> {
        self.best.map(|(k, _)| k)
    }
}

/// Result of decoding a whole stream online.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutput {
    /// Label emitted at each frame.
    pub labels: Vec<usize>,
    /// `paths[t]` is the best prefix path after consuming frames `0..=t`.
    pub paths: Vec<SegmentPath>,
}

/// Runs the online decoder over precomputed frame log-likelihoods.
pub fn online_decode_scores(
    scores: &ndarray::Array2<f64>,
    dm: &DurationModel,
    g: &Grammar,
    config: &OnlineConfig,
) -> Result<OnlineOutput> {
    if scores.ncols() != dm.num_actions() {
        return Err(SegError::Dimension {
            what: "actions in duration model",
            expected: scores.ncols(),
            got: dm.num_actions(),
        });
    }
    let mut dec = OnlineDecoder::with_config(dm, g, config)?;
    let mut paths = Vec::with_capacity(scores.nrows());
    let mut row = vec![0.0; scores.ncols()];
    for r in scores.rows() {
        row.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
        dec.step(&row)?;
        paths.push(dec.current_path());
    }
    Ok(OnlineOutput {
        labels: dec.history,
        paths,
    })
}

/// Online decoding of a full stream, also returning every intermediate path.
pub fn online_decode_full(stream: &ProbabilityStream, dm: &DurationModel, g: &Grammar) -> Result<OnlineOutput> {
    let scores = frame_log_likelihoods(stream, dm)?;
    online_decode_scores(&scores, dm, g, &OnlineConfig::default())
}
