use anyhow::Context;
use conv_core::lab::{
    check_orthogonality, circle_point, random_probe, residual_ratio, separation_csv, separation_experiment,
    SyntheticManifold,
};
use conv_core::seed::rng;

use super::usage;
use crate::args::LabArgs;

/// Step used for the residual-ratio probe.
const RATIO_EPSILON: f64 = 0.01;

pub fn run(args: LabArgs) -> anyhow::Result<()> {
    if args.points == 0 {
        return Err(usage("--points must be positive"));
    }
    let (manifold, pair) = args.fixture.build(args.seed, args.dtheta)?;
    let report = check_orthogonality(&pair, &manifold, args.points, args.tol, args.seed);
    let rows = separation_experiment(&pair, &manifold, &args.epsilons, args.points, args.seed)?;

    let (x_m, dir) = match manifold {
        SyntheticManifold::Circle => (circle_point(0.0), circle_point(0.0)),
        _ => random_probe(&manifold, &mut rng(args.seed)),
    };
    let ratio = residual_ratio(&pair, &manifold, &x_m, &dir, RATIO_EPSILON)?;

    let names = ["tangential grad f1", "f1 - f2 on manifold", "grad f2 . p"];
    let maxima = [report.max_tangent_gradient, report.max_value_gap, report.max_gradient_dot_p];
    let mut summary = format!(
        "fixture {} ({} points, tol {:e})\n",
        args.fixture.name(),
        report.samples,
        report.tol
    );
    for ((name, max), (fails, ok)) in names.iter().zip(maxima).zip(report.failures.iter().zip(report.passes())) {
        summary.push_str(&format!(
            "  {name:<22} max {max:.3e}  failures {fails:>5}  {}\n",
            if ok { "ok" } else { "FAIL" }
        ));
    }
    if let Some(gap) = report.max_closed_form_gap {
        summary.push_str(&format!("  closed-form gradient gap {gap:.3e}\n"));
    }
    summary.push_str(&format!("  residual ratio at eps={RATIO_EPSILON}: {ratio:.4}\n"));

    let csv = separation_csv(&rows);
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            print!("{summary}");
            println!("wrote {}", path.display());
        }
        None => {
            eprint!("{summary}");
            print!("{csv}");
        }
    }
    Ok(())
}
