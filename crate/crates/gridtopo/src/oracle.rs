//! Brute-force reference estimator: score every possible switch vector at a
//! fixed injection state and rank topologies by posterior value. Exact (for
//! the conditional posterior over topologies) but exponential in switch
//! count, so capped; used as the independent check on the sampler.

use crate::measurement::{LikelihoodMode, MeasurementSet};
use crate::netmodel::{Network, SwitchVector};
use crate::powerflow::{InjectionState, PfConfig, TopologyModel};

/// Hard cap on switch count (2^20 evaluations); practical use is ≤ 8.
pub const ORACLE_SWITCH_CAP: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("switch count {0} exceeds the exhaustive-search cap {ORACLE_SWITCH_CAP}")]
    CapExceeded(usize),
    #[error(transparent)]
    Meas(#[from] crate::measurement::MeasError),
}

#[derive(Debug, Clone)]
pub struct TopologyScore {
    pub b: SwitchVector,
    pub log_posterior: f64,
    /// 0 = best.
    pub rank: usize,
}

/// Score all 2^N_s topologies at `s_fixed`, ranked best-first.
///
/// Enumeration follows a Gray code so consecutive vectors differ by one bit;
/// ties in score break toward the smaller topology key for determinism.
pub fn exhaustive_map(
    net: &Network,
    ms: &MeasurementSet,
    s_fixed: &InjectionState,
    mode: LikelihoodMode,
    pf: &PfConfig,
) -> Result<Vec<TopologyScore>, OracleError> {
    let n = net.n_switches();
    if n > ORACLE_SWITCH_CAP {
        return Err(OracleError::CapExceeded(n));
    }
    let count: u64 = 1 << n;
    let mut scores = Vec::with_capacity(count as usize);
    for i in 0..count {
        let gray = i ^ (i >> 1);
        let bits: Vec<bool> = (0..n).map(|k| gray & (1 << k) != 0).collect();
        let b = SwitchVector::from_bits(bits);
        let lp = match TopologyModel::new(net, &b) {
            Ok(model) => {
                let sol = model.solve(net, s_fixed, pf);
                ms.score(net, &sol, mode)?
            }
            Err(_) => f64::NEG_INFINITY,
        };
        scores.push(TopologyScore {
            b,
            log_posterior: lp,
            rank: 0,
        });
    }
    scores.sort_by(|a, b| {
        b.log_posterior
            .total_cmp(&a.log_posterior)
            .then(a.b.key().cmp(&b.b.key()))
    });
    for (r, s) in scores.iter_mut().enumerate() {
        s.rank = r;
    }
    Ok(scores)
}

/// Render a ranking as CSV (`rank,topology,log_posterior`).
pub fn ranking_csv(scores: &[TopologyScore]) -> String {
    let mut out = String::from("rank,topology,log_posterior\n");
    for s in scores {
        let bits: String = s.b.bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
        out.push_str(&format!("{},{},{:.12e}\n", s.rank, bits, s.log_posterior));
    }
    out
}
