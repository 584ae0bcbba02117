//! Bus admittance matrix assembly for a network under a given switch vector.
//!
//! Open-switch lines contribute nothing: the whole line (series and shunt) is
//! removed rather than replaced by a large impedance.

use crate::netmodel::{active_topology, CMat, NetError, Network, Phase, Result, SwitchVector};
use crate::sparse::Csc;
use num_complex::Complex64;

/// The four per-phase blocks of a line's pi-model primitive, per-unit:
/// (from-from, from-to, to-from, to-to).
#[derive(Debug, Clone, PartialEq)]
pub struct LinePrimitive {
    pub ff: CMat,
    pub ft: CMat,
    pub tf: CMat,
    pub tt: CMat,
}

/// Per-unit primitive admittance blocks of one line. With the series
/// admittance y = Z^-1 and half-shunt ysh, the blocks are
/// (y+ysh, -y, -y, y+ysh).
pub fn line_primitive(net: &Network, line_index: usize) -> LinePrimitive {
    let pu = net.line_pu(line_index);
    let n = pu.series_adm.dim;
    let mut ff = pu.series_adm.clone();
    let mut ft = CMat::zeros(n);
    for r in 0..n {
        for c in 0..n {
            ff.set(r, c, ff.at(r, c) + pu.shunt_half.at(r, c));
            ft.set(r, c, -pu.series_adm.at(r, c));
        }
    }
    LinePrimitive {
        tf: ft.clone(),
        tt: ff.clone(),
        ff,
        ft,
    }
}

/// Sparse complex bus admittance matrix over all (bus, phase) terminals.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub matrix: Csc,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.matrix.get(r, c)
    }

    pub fn row_sum(&self, r: usize) -> Complex64 {
        let mut s = Complex64::ZERO;
        for c in 0..self.matrix.n_cols {
            s += self.matrix.get(r, c);
        }
        s
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Coordinate text dump, one `row col re im` line per entry, column-major.
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for c in 0..self.matrix.n_cols {
            for p in self.matrix.col_ptr[c]..self.matrix.col_ptr[c + 1] {
                let v = self.matrix.values[p];
                out.push_str(&format!(
                    "{} {} {:.15e} {:.15e}\n",
                    self.matrix.row_idx[p], c, v.re, v.im
                ));
            }
        }
        out
    }
}

fn scatter_line(
    net: &Network,
    line_index: usize,
    term_of: impl Fn(usize, Phase) -> Option<usize>,
    triplets: &mut Vec<(usize, usize, Complex64)>,
) {
    let prim = line_primitive(net, line_index);
    let (fb, tb) = net.line_endpoints(line_index);
    let phases: Vec<Phase> = net.lines[line_index].phases.iter().collect();
    for (i, &pi) in phases.iter().enumerate() {
        for (j, &pj) in phases.iter().enumerate() {
            let pairs = [
                (term_of(fb, pi), term_of(fb, pj), prim.ff.at(i, j)),
                (term_of(fb, pi), term_of(tb, pj), prim.ft.at(i, j)),
                (term_of(tb, pi), term_of(fb, pj), prim.tf.at(i, j)),
                (term_of(tb, pi), term_of(tb, pj), prim.tt.at(i, j)),
            ];
            for (r, c, v) in pairs {
                if let (Some(r), Some(c)) = (r, c) {
                    if v != Complex64::ZERO {
                        triplets.push((r, c, v));
                    }
                }
            }
        }
    }
}

/// Assembles the full admittance matrix: sum of line primitives over all
/// unswitched lines plus closed-switch lines. Assembly order is line-id
/// lexicographic, so identical inputs give bit-identical outputs.
pub fn assemble(net: &Network, b: &SwitchVector) -> Result<AdmittanceMatrix> {
    let topo = active_topology(net, b)?;
    let mut triplets = Vec::new();
    for &li in &topo.active_lines {
        scatter_line(net, li, |bus, ph| net.terminal(bus, ph), &mut triplets);
    }
    Ok(AdmittanceMatrix {
        matrix: Csc::from_triplets(net.n_terminals(), net.n_terminals(), &triplets),
    })
}

/// Admittance blocks of the energized subsystem, partitioned for the power
/// flow: `y_nn` over non-source system terminals in the given elimination
/// order, and `y_ns` coupling them to the source terminals.
pub struct PartitionedY {
    pub y_nn: Csc,
    pub y_ns: Csc,
}

/// `sys_order[t]` is the position of global terminal `t` in the subsystem, or
/// `usize::MAX` when t is excluded; `src_order` likewise for source terminals.
pub fn assemble_partitioned(
    net: &Network,
    active_lines: &[usize],
    sys_order: &[usize],
    src_order: &[usize],
    n_sys: usize,
    n_src: usize,
) -> PartitionedY {
    let mut nn = Vec::new();
    let mut ns = Vec::new();
    for &li in active_lines {
        let prim = line_primitive(net, li);
        let (fb, tb) = net.line_endpoints(li);
        let phases: Vec<Phase> = net.lines[li].phases.iter().collect();
        for (i, &pi) in phases.iter().enumerate() {
            let row_t = [net.terminal(fb, pi), net.terminal(tb, pi)];
            for (j, &pj) in phases.iter().enumerate() {
                let col_t = [net.terminal(fb, pj), net.terminal(tb, pj)];
                let vals = [
                    [prim.ff.at(i, j), prim.ft.at(i, j)],
                    [prim.tf.at(i, j), prim.tt.at(i, j)],
                ];
                for (ri, &rt) in row_t.iter().enumerate() {
                    let Some(rt) = rt else { continue };
                    let r = sys_order[rt];
                    if r == usize::MAX {
                        continue;
                    }
                    for (ci, &ct) in col_t.iter().enumerate() {
                        let Some(ct) = ct else { continue };
                        let v = vals[ri][ci];
                        if v == Complex64::ZERO {
                            continue;
                        }
                        let c = sys_order[ct];
                        if c != usize::MAX {
                            nn.push((r, c, v));
                        } else {
                            let cs = src_order[ct];
                            if cs != usize::MAX {
                                ns.push((r, cs, v));
                            }
                        }
                    }
                }
            }
        }
    }
    PartitionedY {
        y_nn: Csc::from_triplets(n_sys, n_sys, &nn),
        y_ns: Csc::from_triplets(n_sys, n_src, &ns),
    }
}

pub fn check_length(net: &Network, b: &SwitchVector) -> Result<()> {
    if b.len() != net.n_switches() {
        return Err(NetError::LengthMismatch {
            got: b.len(),
            want: net.n_switches(),
        });
    }
    Ok(())
}
