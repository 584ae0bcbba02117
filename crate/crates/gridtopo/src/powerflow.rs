//! Three-phase power flow on the energized subnetwork: the forward model that
//! maps (switch vector, injections) to the quantities meters observe.
//!
//! Fixed-point current-injection scheme: Y_nn is factorized once per
//! topology and reused while load currents I = conj(S/V) are iterated from a
//! flat start. Candidate topologies whose iteration does not converge are
//! reported as failures, never panics.

use crate::netmodel::{
    active_topology, EnergizedSet, NetError, Network, Phase, SwitchVector,
};
use crate::sparse::{LdlFactor, SparseError};
use crate::ybus::{self, PartitionedY};
use num_complex::Complex64;
use std::collections::VecDeque;
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum PfError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("structurally singular energized subsystem: {0}")]
    Singular(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PfConfig {
    /// Convergence tolerance on the per-unit current mismatch / voltage update.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfConfig {
    fn default() -> Self {
        PfConfig {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Per-load-phase active/reactive injections in kW / kvar, aligned with
/// `Network::load_phases()`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InjectionState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionState {
    pub fn zeros(net: &Network) -> InjectionState {
        let n = net.load_phases().len();
        InjectionState {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn nominal(net: &Network) -> InjectionState {
        let mut s = InjectionState::zeros(net);
        for (i, lp) in net.load_phases().iter().enumerate() {
            let load = &net.loads[lp.load];
            let off = load.phases.offset_of(lp.phase).unwrap();
            s.p[i] = load.nominal_p[off];
            s.q[i] = load.nominal_q[off];
        }
        s
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

fn phase_rotation(p: Phase) -> Complex64 {
    match p {
        Phase::A => Complex64::new(1.0, 0.0),
        Phase::B => Complex64::from_polar(1.0, -2.0 * PI / 3.0),
        Phase::C => Complex64::from_polar(1.0, 2.0 * PI / 3.0),
    }
}

/// Everything that depends on (network, switch vector) but not on injections.
/// Factorized once and shared across the many injection samples that the
/// inference engine evaluates per topology.
pub struct TopologyModel {
    pub bus_energized: Vec<bool>,
    /// global terminal per local system index (reverse-BFS elimination order)
    sys_terms: Vec<usize>,
    src_terms: Vec<usize>,
    y: PartitionedY,
    factor: Option<LdlFactor>,
    active_lines: Vec<usize>,
    v_src: Vec<Complex64>,
    /// -Y_ns V_s
    b_const: Vec<Complex64>,
    /// per load phase: Some(local index) when the load phase is served
    load_slot: Vec<Option<usize>>,
}

impl TopologyModel {
    pub fn new(net: &Network, b: &SwitchVector) -> Result<TopologyModel, PfError> {
        let topo = active_topology(net, b)?;
        // BFS from the source over buses, recording dequeue order
        let mut order = Vec::with_capacity(net.n_buses());
        let mut seen = vec![false; net.n_buses()];
        let mut queue = VecDeque::new();
        seen[net.source_bus()] = true;
        queue.push_back(net.source_bus());
        while let Some(bus) = queue.pop_front() {
            order.push(bus);
            let mut nbrs: Vec<(usize, usize)> = topo.adjacency[bus].clone();
            nbrs.sort_unstable();
            for (nb, _) in nbrs {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        let bus_energized = seen;

        // a terminal is live when some active line carries its phase
        let mut term_live = vec![false; net.n_terminals()];
        for &li in &topo.active_lines {
            let (f, t) = net.line_endpoints(li);
            for p in net.lines[li].phases.iter() {
                if let Some(tf) = net.terminal(f, p) {
                    term_live[tf] = true;
                }
                if let Some(tt) = net.terminal(t, p) {
                    term_live[tt] = true;
                }
            }
        }

        // elimination order: deepest buses first, source last (excluded)
        let mut sys_terms = Vec::new();
        for &bus in order.iter().rev() {
            if bus == net.source_bus() {
                continue;
            }
            for p in net.buses[bus].phases.iter() {
                let t = net.terminal(bus, p).unwrap();
                if term_live[t] {
                    sys_terms.push(t);
                }
            }
        }
        let mut sys_of_term = vec![usize::MAX; net.n_terminals()];
        for (i, &t) in sys_terms.iter().enumerate() {
            sys_of_term[t] = i;
        }
        let mut src_terms = Vec::new();
        let mut src_of_term = vec![usize::MAX; net.n_terminals()];
        for p in net.buses[net.source_bus()].phases.iter() {
            let t = net.terminal(net.source_bus(), p).unwrap();
            src_of_term[t] = src_terms.len();
            src_terms.push(t);
        }

        let y = ybus::assemble_partitioned(
            net,
            &topo.active_lines,
            &sys_of_term,
            &src_of_term,
            sys_terms.len(),
            src_terms.len(),
        );
        let factor = if sys_terms.is_empty() {
            None
        } else {
            Some(LdlFactor::new(&y.y_nn)?)
        };

        let v_src: Vec<Complex64> = src_terms
            .iter()
            .map(|&t| {
                let (_, p) = net.terminal_of(t);
                phase_rotation(p) * net.base.source_vpu
            })
            .collect();
        let mut b_const = vec![Complex64::ZERO; sys_terms.len()];
        y.y_ns.mul_add(&v_src, &mut b_const);
        for v in b_const.iter_mut() {
            *v = -*v;
        }

        let load_slot: Vec<Option<usize>> = net
            .load_phases()
            .iter()
            .map(|lp| {
                let bus = net.bus_idx(&net.loads[lp.load].bus_id).unwrap();
                if !bus_energized[bus] {
                    return None;
                }
                let t = net.terminal(bus, lp.phase)?;
                if sys_of_term[t] != usize::MAX {
                    Some(sys_of_term[t])
                } else {
                    None
                }
            })
            .collect();

        Ok(TopologyModel {
            bus_energized,
            sys_terms,
            src_terms,
            y,
            factor,
            active_lines: topo.active_lines,
            v_src,
            b_const,
            load_slot,
        })
    }

    fn load_currents(
        &self,
        net: &Network,
        s: &InjectionState,
        v: &[Complex64],
        out: &mut [Complex64],
    ) {
        for c in out.iter_mut() {
            *c = Complex64::ZERO;
        }
        let s_base = net.s_base_phase_kw();
        for (i, slot) in self.load_slot.iter().enumerate() {
            if let Some(k) = *slot {
                let s_pu = Complex64::new(s.p[i], s.q[i]) / s_base;
                // consumption: injected power is -S_load
                out[k] += (-s_pu / v[k]).conj();
            }
        }
    }

    pub fn solve(&self, net: &Network, s: &InjectionState, cfg: &PfConfig) -> PowerFlowSolution {
        assert_eq!(s.len(), net.load_phases().len(), "injection length mismatch");
        let n = self.sys_terms.len();
        let mut v: Vec<Complex64> = self
            .sys_terms
            .iter()
            .map(|&t| {
                let (_, p) = net.terminal_of(t);
                phase_rotation(p) * net.base.source_vpu
            })
            .collect();
        let mut converged = n == 0;
        let mut iterations = 0usize;
        if let Some(factor) = &self.factor {
            let mut i_old = vec![Complex64::ZERO; n];
            let mut i_new = vec![Complex64::ZERO; n];
            self.load_currents(net, s, &v, &mut i_old);
            let mut rhs = vec![Complex64::ZERO; n];
            for it in 1..=cfg.max_iter {
                iterations = it;
                let mut max_dv = 0.0f64;
                for k in 0..n {
                    rhs[k] = i_old[k] + self.b_const[k];
                }
                factor.solve_in_place(&mut rhs);
                for k in 0..n {
                    let dv = (rhs[k] - v[k]).norm();
                    if dv > max_dv {
                        max_dv = dv;
                    }
                    v[k] = rhs[k];
                }
                self.load_currents(net, s, &v, &mut i_new);
                let mut max_di = 0.0f64;
                for k in 0..n {
                    let di = (i_new[k] - i_old[k]).norm();
                    if di > max_di {
                        max_di = di;
                    }
                }
                std::mem::swap(&mut i_old, &mut i_new);
                if !max_dv.is_finite() {
                    break;
                }
                if max_di < cfg.tol || max_dv < cfg.tol {
                    converged = true;
                    break;
                }
            }
        }

        // exact residual ||Y v - I(v)||_inf via one matvec
        let mut max_residual = 0.0f64;
        if n > 0 && converged {
            let mut r = vec![Complex64::ZERO; n];
            self.y.y_nn.mul_add(&v, &mut r);
            let mut i_load = vec![Complex64::ZERO; n];
            self.load_currents(net, s, &v, &mut i_load);
            for k in 0..n {
                let res = (r[k] - self.b_const[k] - i_load[k]).norm();
                if res > max_residual {
                    max_residual = res;
                }
            }
        }

        // scatter to global terminal vector
        let mut voltages = vec![Complex64::ZERO; net.n_terminals()];
        for (k, &t) in self.sys_terms.iter().enumerate() {
            voltages[t] = v[k];
        }
        for (k, &t) in self.src_terms.iter().enumerate() {
            voltages[t] = self.v_src[k];
        }

        let served: Vec<bool> = self.load_slot.iter().map(|s| s.is_some()).collect();
        let mut served_p = vec![0.0; s.len()];
        let mut served_q = vec![0.0; s.len()];
        for i in 0..s.len() {
            if served[i] {
                served_p[i] = s.p[i];
                served_q[i] = s.q[i];
            }
        }

        let flows = if converged {
            self.line_flows(net, &voltages)
        } else {
            vec![None; net.lines.len()]
        };

        PowerFlowSolution {
            converged,
            iterations,
            max_residual,
            voltages,
            bus_energized: self.bus_energized.clone(),
            served,
            served_p,
            served_q,
            flows,
            active_lines: self.active_lines.clone(),
        }
    }

    fn line_flows(&self, net: &Network, voltages: &[Complex64]) -> Vec<Option<LineFlow>> {
        let s_base = net.s_base_phase_kw();
        let mut flows = vec![None; net.lines.len()];
        for &li in &self.active_lines {
            let prim = ybus::line_primitive(net, li);
            let (fb, tb) = net.line_endpoints(li);
            let phases: Vec<Phase> = net.lines[li].phases.iter().collect();
            let np = phases.len();
            let vf: Vec<Complex64> = phases
                .iter()
                .map(|&p| voltages[net.terminal(fb, p).unwrap()])
                .collect();
            let vt: Vec<Complex64> = phases
                .iter()
                .map(|&p| voltages[net.terminal(tb, p).unwrap()])
                .collect();
            let mut flow = LineFlow {
                p_from: vec![0.0; np],
                q_from: vec![0.0; np],
                p_to: vec![0.0; np],
                q_to: vec![0.0; np],
            };
            for i in 0..np {
                let mut i_from = Complex64::ZERO;
                let mut i_to = Complex64::ZERO;
                for j in 0..np {
                    i_from += prim.ff.at(i, j) * vf[j] + prim.ft.at(i, j) * vt[j];
                    i_to += prim.tf.at(i, j) * vf[j] + prim.tt.at(i, j) * vt[j];
                }
                let s_from = vf[i] * i_from.conj() * s_base;
                let s_to = vt[i] * i_to.conj() * s_base;
                flow.p_from[i] = s_from.re;
                flow.q_from[i] = s_from.im;
                flow.p_to[i] = s_to.re;
                flow.q_to[i] = s_to.im;
            }
            flows[li] = Some(flow);
        }
        flows
    }
}

/// Per-phase line power flows in kW / kvar, aligned with the line's phases.
/// Both directions point into the line, so `from + to` is the line's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlow {
    pub p_from: Vec<f64>,
    pub q_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub iterations: usize,
    /// ||Y V - I(V)||_inf in per-unit, from an exact matvec.
    pub max_residual: f64,
    /// Complex voltage per global terminal, per-unit; 0 when de-energized.
    pub voltages: Vec<Complex64>,
    pub bus_energized: Vec<bool>,
    /// Per load phase: whether it is energized and fed.
    pub served: Vec<bool>,
    /// Actually served injections (kW / kvar); 0 where unserved.
    pub served_p: Vec<f64>,
    pub served_q: Vec<f64>,
    pub flows: Vec<Option<LineFlow>>,
    pub active_lines: Vec<usize>,
}

impl PowerFlowSolution {
    /// Line-side flow at the given bus end of a line, (P, Q) per line phase.
    fn flow_at(&self, net: &Network, line: usize, bus: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let f = self.flows[line].as_ref()?;
        let (fb, _tb) = net.line_endpoints(line);
        if bus == fb {
            Some((f.p_from.clone(), f.q_from.clone()))
        } else {
            Some((f.p_to.clone(), f.q_to.clone()))
        }
    }

    /// Total power leaving the source bus, kW / kvar.
    pub fn source_power(&self, net: &Network) -> (f64, f64) {
        let src = net.source_bus();
        let mut p = 0.0;
        let mut q = 0.0;
        for &li in &self.active_lines {
            let (f, t) = net.line_endpoints(li);
            if f == src || t == src {
                if let Some((ps, qs)) = self.flow_at(net, li, src) {
                    p += ps.iter().sum::<f64>();
                    q += qs.iter().sum::<f64>();
                }
            }
        }
        (p, q)
    }

    /// Relative mismatch of source power vs served load plus line losses.
    pub fn energy_balance_error(&self, net: &Network) -> f64 {
        let (p_src, q_src) = self.source_power(net);
        let p_load: f64 = self.served_p.iter().sum();
        let q_load: f64 = self.served_q.iter().sum();
        let mut p_loss = 0.0;
        let mut q_loss = 0.0;
        for &li in &self.active_lines {
            if let Some(f) = &self.flows[li] {
                p_loss += f.p_from.iter().sum::<f64>() + f.p_to.iter().sum::<f64>();
                q_loss += f.q_from.iter().sum::<f64>() + f.q_to.iter().sum::<f64>();
            }
        }
        let scale = p_src.abs().max(q_src.abs()).max(net.base.kva * 1e-3);
        let ep = (p_src - p_load - p_loss).abs();
        let eq = (q_src - q_load - q_loss).abs();
        ep.max(eq) / scale
    }

    pub fn energized(&self) -> EnergizedSet {
        EnergizedSet {
            energized: self.bus_energized.clone(),
        }
    }
}

/// One-shot solve; builds the topology model and discards it.
pub fn solve(
    net: &Network,
    b: &SwitchVector,
    s: &InjectionState,
    cfg: &PfConfig,
) -> Result<PowerFlowSolution, PfError> {
    Ok(TopologyModel::new(net, b)?.solve(net, s, cfg))
}

/// Deterministic measurement layout: feeder-head line P/Q per phase first,
/// then served P/Q per phase of each listed metered load (ascending load
/// index, i.e. load-id order). Returns None for an unconverged solution.
pub fn observables(
    sol: &PowerFlowSolution,
    net: &Network,
    metered_loads: &[usize],
) -> Option<Vec<f64>> {
    if !sol.converged {
        return None;
    }
    let head = net.head_line();
    let src = net.source_bus();
    let np = net.lines[head].phases.len();
    let mut y = Vec::new();
    match sol.flow_at(net, head, src) {
        Some((p, q)) => {
            for i in 0..np {
                y.push(p[i]);
                y.push(q[i]);
            }
        }
        None => {
            y.extend(std::iter::repeat(0.0).take(2 * np));
        }
    }
    for &li in metered_loads {
        debug_assert!(li < net.loads.len());
        for (k, lp) in net.load_phases().iter().enumerate() {
            if lp.load == li {
                y.push(sol.served_p[k]);
                y.push(sol.served_q[k]);
            }
        }
    }
    Some(y)
}

/// Number of observable entries for a metered-load selection.
pub fn observable_dim(net: &Network, metered_loads: &[usize]) -> usize {
    let head_np = net.lines[net.head_line()].phases.len();
    let load_np: usize = metered_loads
        .iter()
        .map(|&li| net.loads[li].phases.len())
        .sum();
    2 * (head_np + load_np)
}
