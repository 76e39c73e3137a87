use std::path::Path;

use conv_core::flow::load_flow;

pub fn info(path: &Path) -> anyhow::Result<()> {
    let flow = load_flow(path)?;
    println!("dim          {}", flow.dim());
    println!("hidden       {}", flow.hidden());
    println!("params       {}", flow.param_count());
    println!("s_max        {}", flow.s_max());
    match flow.calibration() {
        Some(c) => println!("calibration  median {} iqr {}", c.median, c.iqr),
        None => println!("calibration  none"),
    }
    Ok(())
}
