use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{rank_hits, Channel, EvidenceHit};

pub const DEFAULT_K_RRF: u32 = 60;

/// Reciprocal-rank fusion: score(d) = sum of 1/(k_rrf + rank) over the lists
/// that contain d. Lists are summed in the order given.
pub fn rrf_fuse(lists: &[Vec<EvidenceHit>], k_rrf: u32) -> Vec<EvidenceHit> {
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for list in lists {
        for hit in list {
            *scores.entry(hit.doc_id.as_str()).or_default() +=
                1.0 / (k_rrf as f64 + hit.rank as f64);
        }
    }
    let scored: Vec<(String, f64)> = scores
        .into_iter()
        .map(|(d, s)| (String::from(d), s))
        .collect();
    rank_hits(scored, Channel::Fused, usize::MAX)
}
