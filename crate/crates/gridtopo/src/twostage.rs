//! Second-stage island correction: once a topology estimate exists, loads in
//! de-energized islands are forced to zero and switches with both endpoints
//! inside an island are marked inestimable (no measurement can reach them).

use crate::inference::EstimationResult;
use crate::netmodel::{energized_set, EnergizedSet, Network, SwitchVector};
use crate::powerflow::InjectionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    First,
    Second,
}

#[derive(Debug, Clone)]
pub struct CorrectedResult {
    pub b_hat: SwitchVector,
    /// True when the switch's line has no energized endpoint under `b_hat`.
    pub inestimable: Vec<bool>,
    pub s_hat: InjectionState,
    pub energized: EnergizedSet,
    pub p_bino_final: Vec<f64>,
    pub flags: Vec<bool>,
}

/// Apply the island correction to a first-stage estimate.
pub fn correct(net: &Network, result: &EstimationResult) -> CorrectedResult {
    correct_parts(net, &result.b_hat, &result.s_hat, &result.p_bino_final, &result.flags)
}

pub fn correct_parts(
    net: &Network,
    b_hat: &SwitchVector,
    s_hat: &InjectionState,
    p_bino: &[f64],
    flags: &[bool],
) -> CorrectedResult {
    let energized = energized_set(net, b_hat).expect("validated network");
    let inestimable: Vec<bool> = (0..net.n_switches())
        .map(|i| {
            let (f, t) = net.line_endpoints(net.switch_line(i));
            !energized.contains(f) && !energized.contains(t)
        })
        .collect();
    let mut s = s_hat.clone();
    for (i, lp) in net.load_phases().iter().enumerate() {
        let bus = net.bus_idx(&net.loads[lp.load].bus_id).expect("indexed load bus");
        if !energized.contains(bus) {
            s.p[i] = 0.0;
            s.q[i] = 0.0;
        }
    }
    CorrectedResult {
        b_hat: b_hat.clone(),
        inestimable,
        s_hat: s,
        energized,
        p_bino_final: p_bino.to_vec(),
        flags: flags.to_vec(),
    }
}

/// Fraction of switch statuses scored correct.
///
/// First stage: plain bit match over all switches. Second stage: a switch
/// marked inestimable counts correct exactly when its line is truly
/// de-energized under the ground truth (its status is unobservable there);
/// all other switches score by bit match. `strict_accuracy` gives the plain
/// bit match of the corrected vector for comparison.
pub fn accuracy(net: &Network, truth_b: &SwitchVector, corrected: &CorrectedResult, stage: Stage) -> f64 {
    assert_eq!(truth_b.len(), corrected.b_hat.len(), "switch count mismatch");
    let n = truth_b.len();
    if n == 0 {
        return 1.0;
    }
    let correct_count: usize = match stage {
        Stage::First => (0..n)
            .filter(|&i| corrected.b_hat.bits[i] == truth_b.bits[i])
            .count(),
        Stage::Second => {
            let truth_energized = energized_set(net, truth_b).expect("validated network");
            (0..n)
                .filter(|&i| {
                    if corrected.inestimable[i] {
                        let (f, t) = net.line_endpoints(net.switch_line(i));
                        !truth_energized.contains(f) && !truth_energized.contains(t)
                    } else {
                        corrected.b_hat.bits[i] == truth_b.bits[i]
                    }
                })
                .count()
        }
    };
    correct_count as f64 / n as f64
}

/// Plain bit-match accuracy of the corrected vector, ignoring inestimability.
pub fn strict_accuracy(truth_b: &SwitchVector, corrected: &CorrectedResult) -> f64 {
    let n = truth_b.len();
    if n == 0 {
        return 1.0;
    }
    (0..n)
        .filter(|&i| corrected.b_hat.bits[i] == truth_b.bits[i])
        .count() as f64
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_feeder;

    fn net123() -> Network {
        parse_feeder(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../feeders/ieee123_analog.json"
        ))
        .unwrap()
    }

    fn corrected_for(net: &Network, bits: &str) -> CorrectedResult {
        let b = SwitchVector::parse(bits).unwrap();
        let n = b.len();
        correct_parts(net, &b, &InjectionState::nominal(net), &vec![0.9; n], &vec![false; n])
    }

    #[test]
    fn all_closed_corrects_nothing() {
        let net = net123();
        let c = corrected_for(&net, "1111111111111");
        assert!(c.inestimable.iter().all(|x| !x));
        assert_eq!(c.s_hat, InjectionState::nominal(&net));
        let truth = SwitchVector::all_closed(13);
        assert_eq!(accuracy(&net, &truth, &c, Stage::First), 1.0);
        assert_eq!(accuracy(&net, &truth, &c, Stage::Second), 1.0);
    }

    #[test]
    fn open_region_switch_is_inestimable_and_loads_zeroed() {
        let net = net123();
        // reference truth: switch 4 open cuts region C; switch 5 sits inside
        let c = corrected_for(&net, "1101001001101");
        assert!(!c.inestimable[4], "boundary switch stays estimable");
        assert!(c.inestimable[5], "interior switch becomes inestimable");
        let zeroed: f64 = net
            .load_phases()
            .iter()
            .enumerate()
            .filter(|(_, lp)| {
                let bus = net.bus_idx(&net.loads[lp.load].bus_id).unwrap();
                !c.energized.contains(bus)
            })
            .map(|(i, _)| c.s_hat.p[i].abs() + c.s_hat.q[i].abs())
            .sum();
        assert_eq!(zeroed, 0.0);
    }

    #[test]
    fn second_stage_scoring_rewards_true_outage_marking() {
        let net = net123();
        let truth = SwitchVector::parse("1101001001101").unwrap();
        // estimate got switch 5's bit wrong but the region is truly dark:
        // second stage forgives it via the inestimable rule
        let mut est = truth.clone();
        est.bits[5] = true;
        let c = corrected_for(&net, &est.to_string());
        assert!((accuracy(&net, &truth, &c, Stage::First) - 12.0 / 13.0).abs() < 1e-12);
        assert_eq!(accuracy(&net, &truth, &c, Stage::Second), 1.0);
        assert!((strict_accuracy(&truth, &c) - 12.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn correction_is_idempotent() {
        let net = net123();
        let c1 = corrected_for(&net, "1101001001101");
        let c2 = correct_parts(&net, &c1.b_hat, &c1.s_hat, &c1.p_bino_final, &c1.flags);
        assert_eq!(c1.b_hat, c2.b_hat);
        assert_eq!(c1.inestimable, c2.inestimable);
        assert_eq!(c1.s_hat, c2.s_hat);
    }
}
