//! Benchmark runner: sample, index the sampled contexts, answer every
//! question, aggregate.

use revqa_core::agents::Backend;
use revqa_core::engine::{run_question, EngineConfig, EvidenceSource, RunContext, Sequential};
use revqa_core::evalkit::{corpus, sample, BenchReport, BenchRow, QAExample};
use revqa_core::kstore::PredicateRegistry;
use revqa_core::retrieval::{Index, RetrievalError};

use crate::executor::par_map;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub name: String,
    pub n: usize,
    pub seed: u64,
    /// Rows run in parallel, one engine instance each.
    pub workers: usize,
    pub registry: PredicateRegistry,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            name: "bench".into(),
            n: usize::MAX,
            seed: 0,
            workers: 1,
            registry: PredicateRegistry::new(),
        }
    }
}

/// The sampled contexts form one shared corpus. Engine failures become
/// DISCLAIMED rows with the error recorded; they do not stop the batch.
pub fn run_benchmark(
    examples: &[QAExample],
    cfg: &EngineConfig,
    backend: &dyn Backend,
    opts: &BenchOptions,
) -> Result<BenchReport, RetrievalError> {
    let picked = sample(examples, opts.n, opts.seed);
    if picked.is_empty() {
        return Ok(BenchReport::aggregate(&opts.name, Vec::new()));
    }
    let index = Index::ingest(corpus(&picked))?;
    let rows: Vec<BenchRow> = par_map(opts.workers, picked.len(), |i| {
        let ex = &picked[i];
        let ctx = RunContext::new(backend, EvidenceSource::Index(&index))
            .with_registry(opts.registry.clone())
            .with_executor(&Sequential);
        BenchRow::from_run(ex, &run_question(&ex.question, cfg, &ctx))
    });
    Ok(BenchReport::aggregate(&opts.name, rows))
}
