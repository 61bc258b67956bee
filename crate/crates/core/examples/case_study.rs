use std::path::PathBuf;
use std::time::Instant;

use uqnet::pipeline::{run_case_study, CaseStudyConfig};

fn main() -> uqnet::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/case_study.json")
    });
    let cfg = CaseStudyConfig::load(&path)?;
    let start = Instant::now();
    let run = run_case_study(&cfg)?;
    eprintln!("fitted and forecast in {:.1?}", start.elapsed());
    for (name, d) in [("heat", &run.models.heat_validation), ("cost", &run.models.cost_validation)] {
        eprintln!("{name} holdout coverage {:.3}", uqnet::gp::coverage(d));
    }
    eprintln!("gas V={:.4e} w={:.4e}", run.models.gas.fit.v, run.models.gas.fit.w);
    eprintln!("elec V={:.4e} w={:.4e}", run.models.elec.fit.v, run.models.elec.fit.w);
    uqnet::pipeline::write_rows_csv(std::io::stdout(), &run.rows)
}
