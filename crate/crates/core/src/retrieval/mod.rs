//! Hybrid passage retrieval: BM25 plus a dense channel, merged with
//! reciprocal-rank fusion.

pub mod dense;
pub mod fusion;
pub mod sparse;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dense::{cosine, Embedder, HashEmbedder};
pub use fusion::{rrf_fuse, DEFAULT_K_RRF};
pub use sparse::SparseIndex;

pub const DEFAULT_K_CAND: usize = 20;
pub const DEFAULT_TOP_M: usize = 5;

/// Lowercases, splits on non-alphanumerics and drops tokens shorter than
/// two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// What both channels index: title, then body.
    pub fn indexed_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{}\n{}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Sparse,
    Dense,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceHit {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
    pub channel: Channel,
}

/// One retrieved passage in the retriever's output schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub source: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub query: String,
    pub hits: Vec<EvidenceHit>,
    pub items: Vec<EvidenceItem>,
}

impl EvidenceSet {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.doc_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
    #[error("`{0}` was never retrieved")]
    NotRetrieved(String),
}

/// Sorts by descending score, ties by ascending id, keeps `k` and assigns
/// ranks 1..=k.
pub(crate) fn rank_hits(mut scored: Vec<(String, f64)>, channel: Channel, k: usize) -> Vec<EvidenceHit> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (doc_id, score))| EvidenceHit {
            doc_id,
            score,
            rank: i + 1,
            channel,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieveParams {
    pub top_m: usize,
    pub k_cand: usize,
    pub k_rrf: u32,
}

impl Default for RetrieveParams {
    fn default() -> Self {
        RetrieveParams {
            top_m: DEFAULT_TOP_M,
            k_cand: DEFAULT_K_CAND,
            k_rrf: DEFAULT_K_RRF,
        }
    }
}

/// Immutable after ingest.
pub struct Index {
    docs: Vec<Document>,
    by_id: BTreeMap<String, usize>,
    sparse: SparseIndex,
    dense: Vec<Vec<f64>>,
    embedder: Box<dyn Embedder>,
}

impl core::fmt::Debug for Index {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Index")
            .field("docs", &self.docs.len())
            .field("dim", &self.embedder.dim())
            .finish()
    }
}

impl Index {
    pub fn ingest(docs: impl IntoIterator<Item = Document>) -> Result<Self, RetrievalError> {
        Self::ingest_with(docs, Box::new(HashEmbedder::default()))
    }

    pub fn ingest_with(
        docs: impl IntoIterator<Item = Document>,
        embedder: Box<dyn Embedder>,
    ) -> Result<Self, RetrievalError> {
        let docs: Vec<Document> = docs.into_iter().collect();
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut by_id = BTreeMap::new();
        for (i, d) in docs.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateDocId(d.id.clone()));
            }
        }
        let texts: Vec<String> = docs.iter().map(Document::indexed_text).collect();
        let sparse = SparseIndex::build(texts.iter().map(String::as_str));
        let dense = texts
            .iter()
            .map(|t| embedder.embed(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Index {
            docs,
            by_id,
            sparse,
            dense,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn sparse(&self) -> &SparseIndex {
        &self.sparse
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.by_id.get(id).map(|&i| self.dense[i].as_slice())
    }

    pub fn dense_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    fn sparse_ranked(&self, q: &str, k: usize, exclude: &BTreeSet<String>) -> Vec<EvidenceHit> {
        let scored = self
            .sparse
            .score(q)
            .into_iter()
            .map(|(i, s)| (self.docs[i].id.clone(), s))
            .filter(|(id, _)| !exclude.contains(id))
            .collect();
        rank_hits(scored, Channel::Sparse, k)
    }

    fn dense_ranked(
        &self,
        q: &str,
        k: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<EvidenceHit>, RetrievalError> {
        let qv = self.embedder.embed(q)?;
        let scored = self
            .docs
            .iter()
            .zip(&self.dense)
            .filter(|(d, _)| !exclude.contains(&d.id))
            .map(|(d, v)| (d.id.clone(), cosine(&qv, v).max(0.0)))
            .collect();
        Ok(rank_hits(scored, Channel::Dense, k))
    }

    /// Top-k documents by BM25. Documents without a query term are omitted.
    pub fn sparse_query(&self, q: &str, k: usize) -> Vec<EvidenceHit> {
        self.sparse_ranked(q, k, &BTreeSet::new())
    }

    /// Top-k documents by cosine similarity to the embedded query.
    pub fn dense_query(&self, q: &str, k: usize) -> Result<Vec<EvidenceHit>, RetrievalError> {
        self.dense_ranked(q, k, &BTreeSet::new())
    }

    /// Fused top-M evidence for `q`, skipping `exclude` in both channels.
    pub fn retrieve_excluding(
        &self,
        q: &str,
        params: RetrieveParams,
        exclude: &BTreeSet<String>,
    ) -> Result<EvidenceSet, RetrievalError> {
        let sparse = self.sparse_ranked(q, params.k_cand, exclude);
        let dense = self.dense_ranked(q, params.k_cand, exclude)?;
        let mut fused = rrf_fuse(&[sparse, dense], params.k_rrf);
        fused.truncate(params.top_m);
        let max = fused.iter().map(|h| h.score).fold(0.0, f64::max);
        let items = fused
            .iter()
            .map(|h| EvidenceItem {
                source: h.doc_id.clone(),
                content: self.document(&h.doc_id).map(|d| d.text.clone()).unwrap_or_default(),
                confidence: Some(if max > 0.0 { h.score / max } else { 0.0 }),
            })
            .collect();
        Ok(EvidenceSet {
            query: String::from(q),
            hits: fused,
            items,
        })
    }

    pub fn retrieve(&self, q: &str, params: RetrieveParams) -> Result<EvidenceSet, RetrievalError> {
        self.retrieve_excluding(q, params, &BTreeSet::new())
    }
}

/// Per-run evidence store, one set per sub-question.
#[derive(Debug, Clone, Default)]
pub struct Retriever {
    params: RetrieveParams,
    results: BTreeMap<String, EvidenceSet>,
    invalidated: BTreeMap<String, BTreeSet<String>>,
}

impl Retriever {
    pub fn new(params: RetrieveParams) -> Self {
        Retriever {
            params,
            ..Self::default()
        }
    }

    pub fn params(&self) -> RetrieveParams {
        self.params
    }

    pub fn retrieve(&mut self, index: &Index, q: &str) -> Result<&EvidenceSet, RetrievalError> {
        let exclude = self.invalidated.get(q).cloned().unwrap_or_default();
        let set = index.retrieve_excluding(q, self.params, &exclude)?;
        self.results.insert(String::from(q), set);
        Ok(&self.results[q])
    }

    /// Re-runs retrieval for `q` alone with `invalidated` (plus anything
    /// invalidated earlier for `q`) removed from the candidates.
    pub fn invalidate_and_requery(
        &mut self,
        index: &Index,
        q: &str,
        invalidated: &BTreeSet<String>,
    ) -> Result<&EvidenceSet, RetrievalError> {
        if !self.results.contains_key(q) {
            return Err(RetrievalError::NotRetrieved(String::from(q)));
        }
        self.invalidated
            .entry(String::from(q))
            .or_default()
            .extend(invalidated.iter().cloned());
        self.retrieve(index, q)
    }

    pub fn result(&self, q: &str) -> Option<&EvidenceSet> {
        self.results.get(q)
    }

    pub fn results(&self) -> &BTreeMap<String, EvidenceSet> {
        &self.results
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, "", text)
    }

    fn ids(hits: &[EvidenceHit]) -> Vec<&str> {
        hits.iter().map(|h| h.doc_id.as_str()).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| String::from(*s)).collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("The 1984 Summer-Olympics, a U.S. event!"),
            vec!["the", "1984", "summer", "olympics", "event"]
        );
        assert!(tokenize("a b c").is_empty());
    }

    #[test]
    fn ingest_counts_and_errors() {
        let idx = Index::ingest(vec![doc("d1", "x1 aa"), doc("d2", "bb"), doc("d3", "cc")]).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.dense_ids().count(), 3);
        assert_eq!(idx.sparse().num_docs(), 3);
        assert_eq!(
            Index::ingest(vec![doc("d1", "aa"), doc("d1", "bb")]).unwrap_err(),
            RetrievalError::DuplicateDocId("d1".into())
        );
        assert_eq!(Index::ingest(Vec::new()).unwrap_err(), RetrievalError::EmptyCorpus);
    }

    #[test]
    fn sparse_basics() {
        let idx = Index::ingest(vec![doc("d1", "capital of california is sacramento")]).unwrap();
        assert!(idx.sparse_query("zebra crossing", 5).is_empty());
        let hits = idx.sparse_query("capital of california is sacramento", 5);
        assert_eq!(ids(&hits), vec!["d1"]);
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn dense_self_similarity_and_orthogonality() {
        let e = HashEmbedder::default();
        let (a, b) = ("alpha", "omega");
        assert_ne!(e.bucket(a), e.bucket(b));
        let idx = Index::ingest(vec![doc("d1", a), doc("d2", b)]).unwrap();
        let hits = idx.dense_query(a, 2).unwrap();
        assert_eq!(hits[0].doc_id, "d1");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert_eq!(hits[1].score, 0.0);
    }

    #[test]
    fn zero_dim_embedder_fails() {
        let err = Index::ingest_with(vec![doc("d1", "aa")], Box::new(HashEmbedder { dim: 0 })).unwrap_err();
        assert!(matches!(err, RetrievalError::EmbedderFailure(_)));
    }

    #[test]
    fn rrf_examples() {
        let hit = |d: &str, r: usize| EvidenceHit {
            doc_id: d.into(),
            score: 0.0,
            rank: r,
            channel: Channel::Sparse,
        };
        let single = rrf_fuse(&[vec![hit("b", 1), hit("a", 2)]], 60);
        assert_eq!(ids(&single), vec!["b", "a"]);

        let fused = rrf_fuse(&[vec![hit("d1", 1), hit("d2", 2)], vec![hit("d2", 1), hit("d1", 2)]], 60);
        assert_eq!(ids(&fused), vec!["d1", "d2"]);
        assert_eq!(fused[0].score, 1.0 / 61.0 + 1.0 / 62.0);
        assert_eq!(fused[0].score, fused[1].score);

        let fused = rrf_fuse(
            &[vec![hit("x", 1), hit("y", 2)], vec![hit("z", 1), hit("y", 2)]],
            60,
        );
        assert_eq!(fused[0].doc_id, "y");
        assert!((fused[0].score - 2.0 / 62.0).abs() < 1e-15);
        assert_eq!(fused.iter().map(|h| h.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    fn olympics_corpus() -> Vec<Document> {
        vec![
            Document::new("p1", "1984 Summer Olympics", "The 1984 Summer Olympics were held primarily in Los Angeles, California."),
            Document::new("p2", "Sacramento", "Sacramento is the capital city of the U.S. state of California."),
            Document::new("p3", "Los Angeles", "Los Angeles is the most populous city in California."),
            Document::new("p4", "Kansas", "Kansas is a state in the Midwestern United States."),
            Document::new("p5", "Olympic Games", "The Olympic Games are held every four years."),
            Document::new("p6", "Sacramento population", "Sacramento has a population of about 508,000."),
        ]
    }

    #[test]
    fn olympics_passage_ranks_first() {
        let idx = Index::ingest(olympics_corpus()).unwrap();
        let e = idx
            .retrieve("Which U.S. state hosted the 1984 Summer Olympics?", RetrieveParams::default())
            .unwrap();
        assert_eq!(e.items[0].source, "p1");
        assert!(e.items[0].content.contains("1984 Summer Olympics were held primarily in Los Angeles"));
        assert_eq!(e.items[0].confidence, Some(1.0));
        assert!(e.items.len() <= DEFAULT_TOP_M);
    }

    #[test]
    fn top_m_larger_than_corpus() {
        let idx = Index::ingest(olympics_corpus()).unwrap();
        let params = RetrieveParams {
            top_m: 50,
            ..RetrieveParams::default()
        };
        let e = idx.retrieve("california", params).unwrap();
        assert_eq!(e.items.len(), 6);
    }

    #[test]
    fn requery_promotes_next_hit_and_isolates_others() {
        let idx = Index::ingest(olympics_corpus()).unwrap();
        let mut r = Retriever::new(RetrieveParams::default());
        let q1 = "Which state hosted the 1984 Summer Olympics?";
        let q2 = "What is the capital of California?";
        let before = r.retrieve(&idx, q1).unwrap().clone();
        let other = r.retrieve(&idx, q2).unwrap().clone();

        let same = r.invalidate_and_requery(&idx, q1, &BTreeSet::new()).unwrap().clone();
        assert_eq!(same, before);

        let top = before.hits[0].doc_id.clone();
        let after = r.invalidate_and_requery(&idx, q1, &set(&[&top])).unwrap().clone();
        assert_eq!(after.hits[0].doc_id, before.hits[1].doc_id);
        assert!(!after.doc_ids().contains(&top.as_str()));
        assert_eq!(r.result(q2), Some(&other));

        let all: BTreeSet<String> = idx.dense_ids().map(String::from).collect();
        let empty = r.invalidate_and_requery(&idx, q1, &all).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(
            r.invalidate_and_requery(&idx, "never asked", &BTreeSet::new()),
            Err(RetrievalError::NotRetrieved(_))
        ));
    }
}
