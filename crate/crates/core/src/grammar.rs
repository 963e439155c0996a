//! Finite transcript grammar backed by a prefix trie.
//!
//! A sequence is admitted as a prefix iff it is a contiguous prefix of at
//! least one stored transcript, and as a full sequence iff it equals one.

use std::collections::BTreeMap;

use crate::error::{Result, SegError};
use crate::types::Transcript;

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrieNode {
    /// Action of the last symbol on the path from the root (unused for the root).
    pub action: usize,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub terminal: bool,
    children: BTreeMap<usize, NodeId>,
}

impl TrieNode {
    /// Children in ascending action order.
    pub fn children(&self) -> impl Iterator<Item = (usize, NodeId)> + '_ {
        self.children.iter().map(|(&a, &n)| (a, n))
    }

    pub fn has_children(&self) -> bool {
        !self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    transcripts: Vec<Transcript>,
    nodes: Vec<TrieNode>,
}

impl Grammar {
    /// Builds the trie from a set of transcripts. Duplicates are dropped and
    /// insertion happens in sorted order, so node ids do not depend on the
    /// order the transcripts were supplied in.
    pub fn new(transcripts: impl IntoIterator<Item = Transcript>) -> Result<Self> {
        let mut transcripts: Vec<Transcript> = transcripts.into_iter().collect();
        transcripts.sort();
        transcripts.dedup();
        if transcripts.is_empty() {
            return Err(SegError::Precondition("grammar needs at least one transcript".into()));
        }
        let mut nodes = vec![TrieNode {
            action: usize::MAX,
            parent: None,
            depth: 0,
            terminal: false,
            children: BTreeMap::new(),
        }];
        for tr in &transcripts {
            let mut cur = ROOT;
            for &a in tr.actions() {
                cur = match nodes[cur].children.get(&a) {
                    Some(&n) => n,
                    None => {
                        let id = nodes.len();
                        let depth = nodes[cur].depth + 1;
                        nodes.push(TrieNode {
                            action: a,
                            parent: Some(cur),
                            depth,
                            terminal: false,
                            children: BTreeMap::new(),
                        });
                        nodes[cur].children.insert(a, id);
                        id
                    }
                };
            }
            nodes[cur].terminal = true;
        }
        Ok(Grammar { transcripts, nodes })
    }

    pub fn single(transcript: Transcript) -> Self {
        Self::new([transcript]).expect("one transcript is always a valid grammar")
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TrieNode {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_transcript_len(&self) -> usize {
        self.transcripts.iter().map(Transcript::len).max().unwrap_or(0)
    }

    pub fn min_transcript_len(&self) -> usize {
        self.transcripts.iter().map(Transcript::len).min().unwrap_or(0)
    }

    /// Largest action index referenced plus one.
    pub fn action_bound(&self) -> usize {
        self.nodes.iter().skip(1).map(|n| n.action + 1).max().unwrap_or(0)
    }

    pub fn child(&self, node: NodeId, action: usize) -> Option<NodeId> {
        self.nodes[node].children.get(&action).copied()
    }

    fn walk(&self, s: &[usize]) -> Option<NodeId> {
        s.iter().try_fold(ROOT, |cur, &a| self.child(cur, a))
    }

    pub fn is_valid_prefix(&self, s: &[usize]) -> bool {
        self.walk(s).is_some()
    }

    pub fn is_valid_full(&self, s: &[usize]) -> bool {
        self.walk(s).is_some_and(|n| self.nodes[n].terminal)
    }

    /// Action sequence spelled by the path from the root to `node`.
    pub fn prefix_of(&self, node: NodeId) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[node].depth);
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            out.push(self.nodes[cur].action);
            cur = p;
        }
        out.reverse();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr(v: &[usize]) -> Transcript {
        Transcript::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prefix_examples() {
        let (a, b, c) = (0, 1, 2);
        let g = Grammar::new([tr(&[a, b, c])]).unwrap();
        assert!(g.is_valid_prefix(&[a, b]));
        assert!(!g.is_valid_prefix(&[b, a]));
        assert!(g.is_valid_prefix(&[]));
        let g = Grammar::new([tr(&[a, b, c]), tr(&[a, c])]).unwrap();
        assert!(g.is_valid_prefix(&[a, c]));
        assert!(g.is_valid_full(&[a, c]));
        assert!(!g.is_valid_full(&[a, b]));
    }

    #[test]
    fn shared_prefixes_share_nodes() {
        let g = Grammar::new([tr(&[0, 1]), tr(&[0, 1, 2]), tr(&[0, 1])]).unwrap();
        assert_eq!(g.transcripts().len(), 2);
        assert_eq!(g.num_nodes(), 4);
        let n = g.child(g.child(ROOT, 0).unwrap(), 1).unwrap();
        assert!(g.node(n).terminal && g.node(n).has_children());
        assert_eq!(g.prefix_of(n), vec![0, 1]);
    }

    #[test]
    fn node_ids_ignore_input_order() {
        let g1 = Grammar::new([tr(&[2, 1]), tr(&[0, 1])]).unwrap();
        let g2 = Grammar::new([tr(&[0, 1]), tr(&[2, 1])]).unwrap();
        assert_eq!(g1, g2);
        assert!(Grammar::new(Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn prefix_relation_is_monotone(
            ts in prop::collection::vec(prop::collection::vec(0usize..3, 1..5), 1..4),
            s in prop::collection::vec(0usize..3, 0..6),
        ) {
            let g = Grammar::new(ts.iter().map(|t| tr(t))).unwrap();
            if g.is_valid_full(&s) {
                prop_assert!(g.is_valid_prefix(&s));
            }
            if g.is_valid_prefix(&s) {
                for k in 0..=s.len() {
                    prop_assert!(g.is_valid_prefix(&s[..k]));
                }
            }
            let brute = ts.iter().any(|t| t.len() >= s.len() && t[..s.len()] == s[..]);
            prop_assert_eq!(g.is_valid_prefix(&s), brute);
        }
    }
}
