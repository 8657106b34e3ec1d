//! Doctor-proposing deferred acceptance.
//!
//! Couples take part through their marginal rankings: each member proposes
//! down their own derived post ranking like a single doctor. Hospitals hold
//! the best doctors they have seen, up to capacity; the unemployment post
//! accepts everyone and never rejects, so every run terminates with all
//! doctors held somewhere.

use crate::model::{
    Compiled, DoctorId, Hospital, HospitalId, Instance, Matching, ModelError, Placement,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

/// One proposal round: who proposed where, and each proposed-to hospital's
/// resulting holds and rejections. Hospitals that received no proposal keep
/// their holds and are not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Round {
    pub proposals: Vec<(DoctorId, Placement)>,
    pub holds: Vec<(HospitalId, Vec<DoctorId>)>,
    pub rejections: Vec<(HospitalId, Vec<DoctorId>)>,
}

/// The full history of a run, round by round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub rounds: Vec<Round>,
}

impl Trace {
    /// Line-oriented rendering of the run.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, round) in self.rounds.iter().enumerate() {
            out.push_str(&format!("round {}\n", i + 1));
            for (d, p) in &round.proposals {
                out.push_str(&format!("  propose {d} -> {p}\n"));
            }
            for (h, held) in &round.holds {
                let names: Vec<&str> = held.iter().map(|d| d.0.as_str()).collect();
                out.push_str(&format!("  hold {h}: {}\n", names.join(", ")));
            }
            for (h, rejected) in &round.rejections {
                let names: Vec<&str> = rejected.iter().map(|d| d.0.as_str()).collect();
                out.push_str(&format!("  reject {h}: {}\n", names.join(", ")));
            }
        }
        out
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// A hospital's one-shot choice from a candidate pool: hold the best
/// acceptable candidates up to capacity (best first), reject the rest.
pub fn hospital_choice(
    hospital: &Hospital,
    candidates: &BTreeSet<DoctorId>,
) -> (Vec<DoctorId>, Vec<DoctorId>) {
    let rank =
        |d: &DoctorId| hospital.individual_order.iter().position(|x| x == d);
    let mut acceptable: Vec<(usize, &DoctorId)> = candidates
        .iter()
        .filter_map(|d| rank(d).map(|r| (r, d)))
        .collect();
    acceptable.sort_unstable();
    let k = (hospital.capacity as usize).min(acceptable.len());
    let held: Vec<DoctorId> = acceptable[..k].iter().map(|(_, d)| (*d).clone()).collect();
    let mut rejected: Vec<DoctorId> = candidates
        .iter()
        .filter(|d| !held.contains(d))
        .cloned()
        .collect();
    rejected.sort();
    (held, rejected)
}

struct Engine<'a> {
    c: &'a Compiled,
    /// Next position in each doctor's post ranking to propose to.
    ptr: Vec<usize>,
    held_at: Vec<Option<usize>>,
    rounds: Vec<Round>,
}

impl<'a> Engine<'a> {
    fn new(c: &'a Compiled) -> Self {
        Engine {
            c,
            ptr: vec![0; c.doctor_ids.len()],
            held_at: vec![None; c.doctor_ids.len()],
            rounds: Vec::new(),
        }
    }

    fn unheld(&self) -> Vec<usize> {
        (0..self.c.doctor_ids.len())
            .filter(|&d| self.held_at[d].is_none())
            .collect()
    }

    /// Run one round in which exactly `proposers` propose (simultaneously).
    fn round(&mut self, proposers: &[usize]) {
        let c = self.c;
        let mut proposals = Vec::new();
        let mut new_cands: Vec<Vec<usize>> = vec![Vec::new(); c.n_h];
        for &d in proposers {
            let target = c.pref_order[d][self.ptr[d]];
            proposals.push((c.doctor_ids[d].clone(), c.post_of(target)));
            if target == c.dummy() {
                // Unemployment accepts everyone, permanently.
                self.held_at[d] = Some(c.dummy());
            } else {
                new_cands[target].push(d);
            }
        }
        let mut holds = Vec::new();
        let mut rejections = Vec::new();
        for h in 0..c.n_h {
            if new_cands[h].is_empty() {
                continue;
            }
            let mut candidates: Vec<usize> = (0..c.doctor_ids.len())
                .filter(|&d| self.held_at[d] == Some(h))
                .collect();
            candidates.extend(&new_cands[h]);
            let mut acceptable: Vec<(u32, usize)> = candidates
                .iter()
                .filter_map(|&d| c.ind_rank[h][d].map(|r| (r, d)))
                .collect();
            acceptable.sort_unstable();
            let k = (c.caps[h] as usize).min(acceptable.len());
            let held: Vec<usize> = acceptable[..k].iter().map(|&(_, d)| d).collect();
            let mut rejected: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|d| !held.contains(d))
                .collect();
            rejected.sort_unstable();
            for &d in &held {
                self.held_at[d] = Some(h);
            }
            for &d in &rejected {
                self.held_at[d] = None;
                self.ptr[d] += 1;
            }
            holds.push((
                c.hospital_ids[h].clone(),
                held.iter().map(|&d| c.doctor_ids[d].clone()).collect(),
            ));
            if !rejected.is_empty() {
                rejections.push((
                    c.hospital_ids[h].clone(),
                    rejected.iter().map(|&d| c.doctor_ids[d].clone()).collect(),
                ));
            }
        }
        self.rounds.push(Round {
            proposals,
            holds,
            rejections,
        });
    }

    fn finish(self) -> (Matching, Trace) {
        let c = self.c;
        let assignment: Vec<u8> = self
            .held_at
            .iter()
            .map(|p| p.expect("every doctor is held at termination") as u8)
            .collect();
        (c.export_matching(&assignment), Trace { rounds: self.rounds })
    }
}

/// Run deferred acceptance with simultaneous rounds: every unheld doctor
/// proposes to the next post on their list, then all hospitals choose at
/// once. Hospital set orders are not consulted, so instances may leave them
/// open.
pub fn run_dpda(instance: &Instance) -> Result<(Matching, Trace), ModelError> {
    let c = Compiled::build(instance, false)?;
    let mut engine = Engine::new(&c);
    let budget = c.doctor_ids.len() * c.posts() + 1;
    for _ in 0..budget {
        let proposers = engine.unheld();
        if proposers.is_empty() {
            break;
        }
        engine.round(&proposers);
    }
    assert!(engine.unheld().is_empty(), "deferred acceptance failed to terminate");
    Ok(engine.finish())
}

/// Run deferred acceptance one proposal at a time, picking the proposer
/// uniformly among unheld doctors with a seeded generator. The final
/// matching does not depend on the order, which makes this a useful probe;
/// the trace records each pick as its own round.
pub fn run_dpda_sequential(instance: &Instance, seed: u64) -> Result<(Matching, Trace), ModelError> {
    let c = Compiled::build(instance, false)?;
    let mut engine = Engine::new(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = c.doctor_ids.len() * c.posts() * 2 + 1;
    for _ in 0..budget {
        let unheld = engine.unheld();
        if unheld.is_empty() {
            break;
        }
        let pick = unheld[rng.gen_range(0..unheld.len())];
        engine.round(&[pick]);
    }
    assert!(engine.unheld().is_empty(), "deferred acceptance failed to terminate");
    Ok(engine.finish())
}

/// A counterexample to the rejection guarantee: a doctor the run rejected
/// whose rejecting hospital did not end up full of strictly better doctors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectionViolation {
    pub hospital: HospitalId,
    pub doctor: DoctorId,
    pub detail: String,
}

/// Confirm on a finished run that every rejection was justified: an
/// acceptable doctor is only rejected by a hospital that finishes at full
/// capacity holding doctors it ranks strictly higher. Returns the first
/// counterexample found, or `None` when the guarantee holds.
pub fn verify_dpda_rejection_property(
    instance: &Instance,
    matching: &Matching,
    trace: &Trace,
) -> Result<Option<RejectionViolation>, ModelError> {
    let c = Compiled::build(instance, false)?;
    let m = c.index_matching(matching)?;
    for round in &trace.rounds {
        for (hid, rejected) in &round.rejections {
            let h = c
                .hospital_ix(hid)
                .ok_or_else(|| ModelError::BadMatching(format!("unknown hospital {hid} in trace")))?;
            let final_set = c.mask_doctors(c.matched_mask(&m, h));
            for did in rejected {
                let d = c
                    .doctor_ix(did)
                    .ok_or_else(|| ModelError::BadMatching(format!("unknown doctor {did} in trace")))?;
                let Some(rd) = c.ind_rank[h][d] else {
                    continue; // Unacceptable doctors are always rejected.
                };
                if final_set.len() < c.caps[h] as usize {
                    return Ok(Some(RejectionViolation {
                        hospital: hid.clone(),
                        doctor: did.clone(),
                        detail: format!(
                            "hospital finished with {} of {} seats filled",
                            final_set.len(),
                            c.caps[h]
                        ),
                    }));
                }
                for &e in &final_set {
                    if c.ind_rank[h][e].map_or(true, |re| re >= rd) {
                        return Ok(Some(RejectionViolation {
                            hospital: hid.clone(),
                            doctor: did.clone(),
                            detail: format!(
                                "hospital finished holding {}, not ranked above the rejected doctor",
                                c.doctor_ids[e]
                            ),
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Couple, CoupleId, Hospital};
    use std::collections::BTreeMap;

    fn p(s: &str) -> Placement {
        if s == "@" {
            Placement::Unemployed
        } else {
            Placement::hospital(s)
        }
    }

    fn d(s: &str) -> DoctorId {
        DoctorId::new(s)
    }

    fn ds(names: &[&str]) -> Vec<DoctorId> {
        names.iter().map(|s| d(s)).collect()
    }

    fn ps(names: &[&str]) -> Vec<Placement> {
        names.iter().map(|s| p(s)).collect()
    }

    /// A responsive pair ranking with the given marginals: sort pairs by
    /// rank sum, ties by the first member's rank.
    fn sum_pair_order(f: &[&str], m: &[&str]) -> Vec<(Placement, Placement)> {
        let mut keyed = Vec::new();
        for (i, a) in f.iter().enumerate() {
            for (j, b) in m.iter().enumerate() {
                keyed.push((i + j, i, (p(a), p(b))));
            }
        }
        keyed.sort_by_key(|&(s, i, _)| (s, i));
        keyed.into_iter().map(|(_, _, pair)| pair).collect()
    }

    /// One hospital, capacity two: the couple's first member prefers
    /// unemployment, everyone else wants the hospital.
    fn one_hospital_instance() -> Instance {
        Instance {
            hospitals: vec![Hospital {
                id: HospitalId::new("h1"),
                capacity: 2,
                individual_order: ds(&["f", "d1", "d2", "m"]),
                set_order: None,
                set_constraints: vec![],
            }],
            singles: ds(&["d1", "d2"]),
            couples: vec![Couple {
                id: CoupleId::new("c1"),
                f: d("f"),
                m: d("m"),
                pair_order: vec![
                    (p("@"), p("h1")),
                    (p("h1"), p("h1")),
                    (p("@"), p("@")),
                    (p("h1"), p("@")),
                ],
            }],
            doctor_orders: BTreeMap::from([
                (d("d1"), ps(&["h1", "@"])),
                (d("d2"), ps(&["h1", "@"])),
            ]),
        }
    }

    /// Three hospitals, four singles, one couple; built to exercise
    /// displacement chains.
    fn three_hospital_instance() -> Instance {
        Instance {
            hospitals: vec![
                Hospital {
                    id: HospitalId::new("h1"),
                    capacity: 2,
                    individual_order: ds(&["d3", "d4", "f", "d1", "d2", "m"]),
                    set_order: None,
                    set_constraints: vec![],
                },
                Hospital {
                    id: HospitalId::new("h2"),
                    capacity: 2,
                    individual_order: ds(&["d3", "d4", "f", "d1", "m", "d2"]),
                    set_order: None,
                    set_constraints: vec![],
                },
                Hospital {
                    id: HospitalId::new("h3"),
                    capacity: 2,
                    individual_order: ds(&["d4", "d3", "d1", "f", "m", "d2"]),
                    set_order: None,
                    set_constraints: vec![],
                },
            ],
            singles: ds(&["d1", "d2", "d3", "d4"]),
            couples: vec![Couple {
                id: CoupleId::new("c1"),
                f: d("f"),
                m: d("m"),
                pair_order: sum_pair_order(&["h2", "h1", "h3", "@"], &["h1", "h2", "h3", "@"]),
            }],
            doctor_orders: BTreeMap::from([
                (d("d1"), ps(&["h2", "h1", "h3", "@"])),
                (d("d2"), ps(&["h1", "h2", "h3", "@"])),
                (d("d3"), ps(&["h2", "h1", "h3", "@"])),
                (d("d4"), ps(&["h3", "h1", "h2", "@"])),
            ]),
        }
    }

    fn placements(m: &Matching, names: &[&str]) -> Vec<String> {
        names
            .iter()
            .map(|n| m.placement_of(&d(n)).unwrap().to_string())
            .collect()
    }

    #[test]
    fn one_hospital_run_matches_hand_trace() {
        let inst = one_hospital_instance();
        let (matching, trace) = run_dpda(&inst).unwrap();
        assert_eq!(
            placements(&matching, &["d1", "d2", "f", "m"]),
            vec!["h1", "h1", "@", "@"]
        );
        assert_eq!(trace.rounds.len(), 2);
        let r1 = &trace.rounds[0];
        assert_eq!(
            r1.proposals,
            vec![
                (d("d1"), p("h1")),
                (d("d2"), p("h1")),
                (d("f"), p("@")),
                (d("m"), p("h1")),
            ]
        );
        assert_eq!(r1.holds, vec![(HospitalId::new("h1"), ds(&["d1", "d2"]))]);
        assert_eq!(r1.rejections, vec![(HospitalId::new("h1"), ds(&["m"]))]);
        let r2 = &trace.rounds[1];
        assert_eq!(r2.proposals, vec![(d("m"), p("@"))]);
        assert!(r2.holds.is_empty() && r2.rejections.is_empty());
        let render = trace.render();
        assert!(render.contains("round 1\n"));
        assert!(render.contains("  propose f -> @\n"));
        assert!(render.contains("  reject h1: m\n"));
    }

    #[test]
    fn displacement_chain_run_matches_hand_trace() {
        let inst = three_hospital_instance();
        let (matching, trace) = run_dpda(&inst).unwrap();
        assert_eq!(
            placements(&matching, &["d1", "d2", "d3", "d4", "f", "m"]),
            vec!["h1", "h1", "h2", "h3", "h2", "h3"]
        );
        // Round 1 rejects d1 at h2; round 2 displaces m at h1; m then walks
        // h2 (rejected) to h3 (held).
        assert_eq!(trace.rounds.len(), 4);
        assert_eq!(trace.rounds[0].rejections, vec![(HospitalId::new("h2"), ds(&["d1"]))]);
        assert_eq!(trace.rounds[1].rejections, vec![(HospitalId::new("h1"), ds(&["m"]))]);
        assert_eq!(trace.rounds[2].rejections, vec![(HospitalId::new("h2"), ds(&["m"]))]);
        assert_eq!(trace.rounds[3].holds, vec![(HospitalId::new("h3"), ds(&["d4", "m"]))]);
    }

    #[test]
    fn sequential_runs_reach_the_same_matching() {
        for inst in [one_hospital_instance(), three_hospital_instance()] {
            let (simultaneous, _) = run_dpda(&inst).unwrap();
            for seed in 0..20 {
                let (sequential, trace) = run_dpda_sequential(&inst, seed).unwrap();
                assert_eq!(sequential, simultaneous, "seed {seed}");
                for round in &trace.rounds {
                    assert_eq!(round.proposals.len(), 1);
                }
            }
        }
    }

    #[test]
    fn holds_improve_monotonically() {
        let inst = three_hospital_instance();
        let (_, trace) = run_dpda(&inst).unwrap();
        let c = Compiled::build(&inst, false).unwrap();
        // Replay: per hospital, the sorted rank vector of held doctors must
        // improve componentwise and never shrink.
        let mut held: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for round in &trace.rounds {
            for (hid, doctors) in &round.holds {
                let h = c.hospital_ix(hid).unwrap();
                let mut ranks: Vec<u32> = doctors
                    .iter()
                    .map(|did| c.ind_rank[h][c.doctor_ix(did).unwrap()].unwrap())
                    .collect();
                ranks.sort_unstable();
                if let Some(prev) = held.get(&hid.0) {
                    assert!(ranks.len() >= prev.len(), "held set shrank at {hid}");
                    for (new, old) in ranks.iter().zip(prev.iter()) {
                        assert!(new <= old, "hold at {hid} got worse: {ranks:?} after {prev:?}");
                    }
                }
                held.insert(hid.0.clone(), ranks);
            }
        }
    }

    #[test]
    fn rejection_property_holds_on_runs() {
        for inst in [one_hospital_instance(), three_hospital_instance()] {
            let (matching, trace) = run_dpda(&inst).unwrap();
            let violation = verify_dpda_rejection_property(&inst, &matching, &trace).unwrap();
            assert!(violation.is_none(), "{violation:?}");
        }
    }

    #[test]
    fn rejection_checker_flags_a_doctored_outcome() {
        let inst = three_hospital_instance();
        let (matching, trace) = run_dpda(&inst).unwrap();
        // Claim d1 ended lower than a doctor h2 rejected: move d3 out of h2
        // so the h2 rejection of d1 is no longer justified.
        let mut bad = matching.clone();
        bad.assignment.insert(d("d3"), p("@"));
        bad.assignment.insert(d("d1"), p("h2"));
        let violation = verify_dpda_rejection_property(&inst, &bad, &trace).unwrap();
        assert!(violation.is_some());
    }

    #[test]
    fn hospital_choice_takes_the_best_up_to_capacity() {
        let inst = three_hospital_instance();
        let h1 = inst.hospital(&HospitalId::new("h1")).unwrap();
        let cands: BTreeSet<DoctorId> = ds(&["d1", "d2", "m", "d4"]).into_iter().collect();
        let (held, rejected) = hospital_choice(h1, &cands);
        assert_eq!(held, ds(&["d4", "d1"]));
        assert_eq!(rejected, ds(&["d2", "m"]));
        // Fewer candidates than capacity: hold all acceptable ones.
        let cands: BTreeSet<DoctorId> = ds(&["d2"]).into_iter().collect();
        let (held, rejected) = hospital_choice(h1, &cands);
        assert_eq!(held, ds(&["d2"]));
        assert!(rejected.is_empty());
    }

    /// Against a concrete responsive set order, the greedy choice is the
    /// best feasible subset of any candidate pool.
    #[test]
    fn choice_is_set_order_optimal() {
        let mut inst = one_hospital_instance();
        inst.hospitals[0].set_order = Some(crate::prefs::canonical_set_order(
            &inst.hospitals[0].individual_order,
            2,
        ));
        let c = Compiled::build(&inst, true).unwrap();
        let hosp = &inst.hospitals[0];
        let all = ds(&["d1", "d2", "f", "m"]);
        for pick in 0u32..16 {
            let cands: BTreeSet<DoctorId> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| pick & (1 << i) != 0)
                .map(|(_, x)| x.clone())
                .collect();
            let (held, _) = hospital_choice(hosp, &cands);
            let held_mask: u64 = held
                .iter()
                .map(|x| 1u64 << c.doctor_ix(x).unwrap())
                .sum();
            // Brute force: every feasible subset of the candidates.
            let cand_ixs: Vec<usize> =
                cands.iter().map(|x| c.doctor_ix(x).unwrap()).collect();
            for sub in 0u32..(1 << cand_ixs.len()) {
                if sub.count_ones() > 2 {
                    continue;
                }
                let mask: u64 = cand_ixs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| sub & (1 << i) != 0)
                    .map(|(_, &ix)| 1u64 << ix)
                    .sum();
                assert!(
                    !c.set_prefers(0, mask, held_mask),
                    "candidates {cands:?}: {mask:b} beats held {held_mask:b}"
                );
            }
        }
    }
}
