use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use harmony_core::bench::measure_overhead;
use harmony_core::eval::{load_corpus, report, run_corpus, score, ReportFormat, ScoreMode};

use crate::backend::BackendFactory;
use crate::PipelineArgs;

#[derive(clap::Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Routine corpus (JSON); the bundled 25-case corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Score executed commands or every proposed candidate.
    #[arg(long, default_value = "executed")]
    mode: ScoreMode,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Measure pipeline overhead (excluding backend time) over the corpus.
    #[arg(long)]
    bench: bool,
    /// Passes over the corpus when benchmarking.
    #[arg(long, default_value_t = 20)]
    bench_rounds: usize,
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let home = args.pipeline.load_home()?;
    let scenarios = args.pipeline.load_scenarios()?;
    let corpus_text = match &args.corpus {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => harmony_core::assets::CORPUS_JSON.to_string(),
    };
    let cases = load_corpus(&corpus_text, &home)?;
    let factory = BackendFactory::from_args(&args.pipeline)?;

    let start = Instant::now();
    let results = run_corpus(&cases, &home, &scenarios, || factory.build());
    let metrics = score(&cases, &results, &home, args.mode)?;
    tracing::info!("evaluated {} cases in {:?}", cases.len(), start.elapsed());

    let text = report(&metrics, args.format);
    print!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }

    if args.bench {
        let stats = measure_overhead(&cases, &home, &scenarios, || factory.build(), args.bench_rounds.max(1));
        println!(
            "overhead per message: p50 {:.3} ms, p95 {:.3} ms, max {:.3} ms over {} messages",
            stats.p50_ms, stats.p95_ms, stats.max_ms, stats.samples
        );
    }
    Ok(())
}
