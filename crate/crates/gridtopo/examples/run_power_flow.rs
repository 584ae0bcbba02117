//! Solve a three-phase power flow on a feeder and print summary statistics.
//!
//! Usage: cargo run --example run_power_flow -- feeders/ieee123_analog.json [truth-bits] [rx-scale]

use anyhow::{Context, Result};
use gridtopo::netmodel::energized_set;
use gridtopo::{parse_feeder, InjectionState, PfConfig, SwitchVector};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().context("usage: run_power_flow <feeder.json> [bits] [rx-scale]")?;
    let bits = args.next();
    let rx: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1.0);

    let mut net = parse_feeder(&path)?;
    if rx != 1.0 {
        net = net.with_rx_scaled(rx);
    }
    let b = match bits {
        Some(s) => SwitchVector::parse(&s).context("bad switch vector")?,
        None => SwitchVector::all_closed(net.n_switches()),
    };
    let s = InjectionState::nominal(&net);
    let sol = gridtopo::powerflow::solve(&net, &b, &s, &PfConfig::default())?;

    let energized = energized_set(&net, &b)?;
    let mut vmin = f64::INFINITY;
    let mut vmax: f64 = 0.0;
    for t in 0..net.n_terminals() {
        let (bus, _) = net.terminal_of(t);
        if bus != net.source_bus() && energized.contains(bus) {
            let m = sol.voltages[t].norm();
            vmin = vmin.min(m);
            vmax = vmax.max(m);
        }
    }
    let (src_p, src_q) = sol.source_power(&net);
    let served_p: f64 = sol.served_p.iter().sum();
    let served_q: f64 = sol.served_q.iter().sum();

    println!("feeder          : {path}");
    println!("switch vector   : {b}");
    println!("converged       : {} in {} iterations", sol.converged, sol.iterations);
    println!("max residual    : {:.3e}", sol.max_residual);
    println!("energized buses : {} / {}", energized.count(), net.n_buses());
    println!("|V| range (pu)  : {vmin:.4} .. {vmax:.4}");
    println!("source P,Q (kW) : {src_p:.1}, {src_q:.1}");
    println!("served P,Q (kW) : {served_p:.1}, {served_q:.1}");
    println!("losses (kW)     : {:.1} ({:.2}%)", src_p - served_p, 100.0 * (src_p - served_p) / src_p);
    println!("energy balance  : {:.3e}", sol.energy_balance_error(&net));
    let head = gridtopo::powerflow::observables(&sol, &net, &[])
        .context("head observables")?;
    println!("head P/Q (kW)   : {:?}", head.iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>());
    Ok(())
}
