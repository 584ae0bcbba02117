//! Load a feeder description and print a structural summary.
//!
//! Usage: cargo run --example parse_feeder -- feeders/ieee123_analog.json

use anyhow::{Context, Result};
use gridtopo::parse_feeder;

fn main() -> Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "feeders/ieee123_analog.json".to_string());
    let net = parse_feeder(&path).with_context(|| format!("loading {path}"))?;

    let n_loads = net.loads.len();
    let metered = net.loads.iter().filter(|d| d.metered).count();
    let total_p: f64 = net.loads.iter().flat_map(|d| d.nominal_p.iter()).sum();
    let total_q: f64 = net.loads.iter().flat_map(|d| d.nominal_q.iter()).sum();

    println!("feeder        : {path}");
    println!("base          : {} kV / {} kVA", net.base.kv, net.base.kva);
    println!("buses         : {}", net.n_buses());
    println!("lines         : {}", net.lines.len());
    println!("switches      : {}", net.n_switches());
    println!("loads         : {n_loads} ({metered} metered in the file)");
    println!("nominal load  : {total_p:.1} kW / {total_q:.1} kvar");
    println!("load phases   : {}", net.load_phases().len());
    for (i, sw) in (0..net.n_switches()).map(|i| (i, net.switch_line(i))) {
        let (f, t) = net.line_endpoints(sw);
        println!(
            "  switch {i:2} on line {} ({} - {})",
            net.lines[sw].id, net.buses[f].id, net.buses[t].id
        );
    }
    Ok(())
}
