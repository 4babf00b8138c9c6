//! Okapi BM25 over an inverted index.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::tokenize;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, Default)]
pub struct SparseIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_len: Vec<u32>,
    avgdl: f64,
}

impl SparseIndex {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_len = Vec::new();
        for (doc, text) in texts.into_iter().enumerate() {
            let tokens = tokenize(text);
            doc_len.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf: n });
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avgdl = if doc_len.is_empty() {
            0.0
        } else {
            total as f64 / doc_len.len() as f64
        };
        SparseIndex {
            postings,
            doc_len,
            avgdl,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_len[doc]
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.postings(term).len() as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    /// BM25 score for every document with at least one query term.
    pub fn score(&self, query: &str) -> BTreeMap<usize, f64> {
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for term in &terms {
            let idf = self.idf(term);
            for p in self.postings(term) {
                let tf = p.tf as f64;
                let dl = self.doc_len[p.doc] as f64;
                let norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 0.0 };
                let s = idf * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * norm));
                *scores.entry(p.doc).or_default() += s;
            }
        }
        scores
    }
}
