//! Grammar-constrained decoders: offline Viterbi, incremental online
//! inference, the greedy sliding-window baseline and fixed-delay decoding.

mod greedy;
mod offline;
mod online;
mod semi;

pub use greedy::greedy_decode;
pub use offline::{decode_scores, offline_decode, path_objective, Decoded};
pub use online::{online_decode_full, online_decode_scores, DpHypothesis, OnlineConfig, OnlineDecoder, OnlineOutput};
pub use semi::{semi_online_decode, semi_online_labels};
