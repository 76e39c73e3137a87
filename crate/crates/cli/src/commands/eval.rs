use std::io::Write;

use conv_core::eval::{emit_report, emit_roc_svg, evaluate, ReportFormat};

use crate::args::EvalArgs;
use crate::inputs::{read_scores, scored_samples};

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let rows = read_scores(&args.scores)?;
    let samples = scored_samples(&args.scores, &rows)?;
    let report = evaluate(&samples)?;
    let format = args
        .format
        .or_else(|| args.out.as_deref().map(ReportFormat::for_path))
        .unwrap_or(ReportFormat::Json);
    let text = emit_report(&report, format)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
            println!(
                "AUROC {:.4}  AP {:.4}  ACC {:.4} at threshold {}; wrote {}",
                report.auroc,
                report.ap,
                report.acc,
                report.threshold,
                path.display()
            );
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                writeln!(out)?;
            }
        }
    }
    if let Some(path) = &args.roc {
        emit_roc_svg(&samples, path)?;
    }
    Ok(())
}
