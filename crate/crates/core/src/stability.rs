//! Blocking analysis: which coalitions would abandon a matching, whether a
//! matching is individually rational or stable, and a brute-force stable
//! set oracle.
//!
//! Hospitals join a deviation when some (possibly empty) group of current
//! hires can be dismissed so that, with the incoming doctors added, they
//! strictly prefer the new set under their responsive set order. The
//! unemployment post never objects. Couples deviate to a post pair they
//! rank above their current one; each member changing posts needs the
//! receiving post's consent.

use crate::model::{
    Compiled, CoupleId, DoctorId, HospitalId, Instance, Matching, ModelError, Placement,
};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

/// How a couple realizes a blocking pair of posts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoupleCase {
    /// Only the first member changes posts.
    MoveF,
    /// Only the second member changes posts.
    MoveM,
    /// Both members change posts, to two different posts.
    MoveBoth,
    /// Both members end at the same post.
    Together,
}

impl fmt::Display for CoupleCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CoupleCase::MoveF => "first member moves",
            CoupleCase::MoveM => "second member moves",
            CoupleCase::MoveBoth => "both members move",
            CoupleCase::Together => "both to one post",
        };
        f.write_str(s)
    }
}

/// A real hospital's consent to a deviation: whom it dismisses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Displacement {
    pub hospital: HospitalId,
    pub displaced: Vec<DoctorId>,
}

/// One blocking coalition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Block {
    /// A single doctor and a post they prefer; the post consents.
    SinglePair {
        doctor: DoctorId,
        post: Placement,
        displaced: Vec<DoctorId>,
    },
    /// A couple and a pair of posts they prefer; every post a member moves
    /// to consents.
    CouplePair {
        couple: CoupleId,
        posts: (Placement, Placement),
        case: CoupleCase,
        displaced: Vec<Displacement>,
    },
    /// A hospital holding doctors it finds unacceptable would rather
    /// dismiss them.
    HospitalEmpty {
        hospital: HospitalId,
        unacceptable: Vec<DoctorId>,
    },
}

fn join_ids(ids: &[DoctorId]) -> String {
    let inner = ids.iter().map(|d| d.0.as_str()).collect::<Vec<_>>().join(", ");
    format!("{{{inner}}}")
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::SinglePair {
                doctor,
                post,
                displaced,
            } => {
                write!(f, "single doctor {doctor} and {post} block")?;
                if !displaced.is_empty() {
                    write!(f, ", displacing {}", join_ids(displaced))?;
                }
                Ok(())
            }
            Block::CouplePair {
                couple,
                posts,
                case,
                displaced,
            } => {
                write!(
                    f,
                    "couple {couple} and posts ({}, {}) block ({case})",
                    posts.0, posts.1
                )?;
                for disp in displaced {
                    write!(f, "; {} displaces {}", disp.hospital, join_ids(&disp.displaced))?;
                }
                Ok(())
            }
            Block::HospitalEmpty {
                hospital,
                unacceptable,
            } => write!(
                f,
                "hospital {hospital} blocks alone: it holds unacceptable doctors {}",
                join_ids(unacceptable)
            ),
        }
    }
}

/// A hospital's best strict improvement when a doctor set comes in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetImprovement {
    /// Current hires dismissed to make room, in id order.
    pub displaced: Vec<DoctorId>,
    /// The resulting doctor set, in id order.
    pub resulting: Vec<DoctorId>,
}

/// Would `post` rather absorb `incoming`, dismissing some of its current
/// hires? Returns the best such improvement under the post's set order, or
/// `None` when no dismissal set yields a strictly preferred feasible set.
/// The unemployment post always consents without dismissing anyone.
pub fn hospital_prefers_set(
    post: &Placement,
    incoming: &BTreeSet<DoctorId>,
    matching: &Matching,
    instance: &Instance,
) -> Result<Option<SetImprovement>, ModelError> {
    let c = Compiled::build(instance, true)?;
    let m = c.index_matching(matching)?;
    let mut incoming_mask = 0u64;
    for d in incoming {
        let dx = c
            .doctor_ix(d)
            .ok_or_else(|| ModelError::BadMatching(format!("unknown doctor {d}")))?;
        incoming_mask |= 1 << dx;
    }
    let px = c
        .post_ix(post)
        .ok_or_else(|| ModelError::BadMatching(format!("unknown post {post}")))?;
    if px == c.dummy() {
        let resulting = c.matched_mask(&m, px) | incoming_mask;
        return Ok(Some(SetImprovement {
            displaced: Vec::new(),
            resulting: ids_of(&c, resulting),
        }));
    }
    Ok(prefers_set_ix(&c, px, incoming_mask, &m).map(|(displaced, resulting)| SetImprovement {
        displaced: ids_of(&c, displaced),
        resulting: ids_of(&c, resulting),
    }))
}

fn ids_of(c: &Compiled, mask: u64) -> Vec<DoctorId> {
    let mut out: Vec<DoctorId> = c
        .mask_doctors(mask)
        .into_iter()
        .map(|d| c.doctor_ids[d].clone())
        .collect();
    out.sort();
    out
}

/// Index-level core of [`hospital_prefers_set`] for a real hospital:
/// `(dismissed, resulting)` masks of the best strict improvement.
pub(crate) fn prefers_set_ix(
    c: &Compiled,
    h: usize,
    incoming: u64,
    m: &[u8],
) -> Option<(u64, u64)> {
    let cur = c.matched_mask(m, h);
    let pool = cur & !incoming;
    let cap = c.caps[h];
    let ranks = c.set_rank[h].as_ref().expect("stability requires set orders");
    let mut best: Option<(u32, u64, u64)> = None;
    let mut sub = pool;
    loop {
        let new = (cur & !sub) | incoming;
        if new.count_ones() <= cap && c.set_prefers(h, new, cur) {
            // Preferred sets are fully acceptable, so they carry a rank.
            let r = ranks[&new];
            if best.map_or(true, |(br, _, _)| r < br) {
                best = Some((r, sub, new));
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & pool;
    }
    best.map(|(_, sub, new)| (sub, new))
}

/// True when the couple ranks pair `(a, b)` strictly above its current one.
fn couple_prefers(c: &Compiled, cx: usize, m: &[u8], a: usize, b: usize) -> bool {
    let (fx, mx) = c.couple_members[cx];
    let cur = c.pair_ix(m[fx] as usize, m[mx] as usize);
    c.pair_rank[cx][c.pair_ix(a, b)] < c.pair_rank[cx][cur]
}

/// Fast existence check, mirroring [`find_blocks`] without building
/// witnesses. Checked in the cheapest order: hospitals holding unacceptable
/// doctors, then single-doctor pairs, then couples.
pub(crate) fn has_block_ix(c: &Compiled, m: &[u8]) -> bool {
    for h in 0..c.n_h {
        if c.matched_mask(m, h) & !c.acceptable[h] != 0 {
            return true;
        }
    }
    for (s, &role) in c.roles.iter().enumerate() {
        if role != crate::model::Role::Single {
            continue;
        }
        let cur_rank = c.pref_rank[s][m[s] as usize];
        for p in 0..c.posts() {
            if p == m[s] as usize || c.pref_rank[s][p] >= cur_rank {
                continue;
            }
            if p == c.dummy() || prefers_set_ix(c, p, 1 << s, m).is_some() {
                return true;
            }
        }
    }
    for cx in 0..c.couple_members.len() {
        let (fx, mx) = c.couple_members[cx];
        for a in 0..c.posts() {
            for b in 0..c.posts() {
                if (a == m[fx] as usize && b == m[mx] as usize)
                    || !couple_prefers(c, cx, m, a, b)
                {
                    continue;
                }
                if couple_block_evidence(c, m, cx, a, b).is_some() {
                    return true;
                }
            }
        }
    }
    false
}

/// The consents a couple's move to `(a, b)` needs, if all are granted.
fn couple_block_evidence(
    c: &Compiled,
    m: &[u8],
    cx: usize,
    a: usize,
    b: usize,
) -> Option<(CoupleCase, Vec<(usize, u64)>)> {
    let (fx, mx) = c.couple_members[cx];
    let bit_f = 1u64 << fx;
    let bit_m = 1u64 << mx;
    let mut displaced = Vec::new();
    if a == b {
        // Both members end at the same post; a real hospital must prefer
        // taking the pair.
        if a != c.dummy() {
            let (sub, _) = prefers_set_ix(c, a, bit_f | bit_m, m)?;
            displaced.push((a, sub));
        }
        return Some((CoupleCase::Together, displaced));
    }
    let f_moves = m[fx] as usize != a;
    let m_moves = m[mx] as usize != b;
    if f_moves && a != c.dummy() {
        let (sub, _) = prefers_set_ix(c, a, bit_f, m)?;
        displaced.push((a, sub));
    }
    if m_moves && b != c.dummy() {
        let (sub, _) = prefers_set_ix(c, b, bit_m, m)?;
        displaced.push((b, sub));
    }
    let case = match (f_moves, m_moves) {
        (true, true) => CoupleCase::MoveBoth,
        (true, false) => CoupleCase::MoveF,
        (false, true) => CoupleCase::MoveM,
        (false, false) => unreachable!("a preferred pair differs from the current one"),
    };
    Some((case, displaced))
}

/// List every blocking coalition of `matching`, in a fixed order: single
/// doctors (document order, posts in document order with unemployment
/// last), couples (document order, post pairs in the first member's major
/// order), then hospitals holding unacceptable doctors.
pub fn find_blocks(matching: &Matching, instance: &Instance) -> Result<Vec<Block>, ModelError> {
    let c = Compiled::build(instance, true)?;
    let m = c.index_matching(matching)?;
    Ok(find_blocks_ix(&c, &m))
}

pub(crate) fn find_blocks_ix(c: &Compiled, m: &[u8]) -> Vec<Block> {
    let mut out = Vec::new();
    for (s, &role) in c.roles.iter().enumerate() {
        if role != crate::model::Role::Single {
            continue;
        }
        let cur_rank = c.pref_rank[s][m[s] as usize];
        for p in 0..c.posts() {
            if p == m[s] as usize || c.pref_rank[s][p] >= cur_rank {
                continue;
            }
            if p == c.dummy() {
                out.push(Block::SinglePair {
                    doctor: c.doctor_ids[s].clone(),
                    post: Placement::Unemployed,
                    displaced: Vec::new(),
                });
            } else if let Some((sub, _)) = prefers_set_ix(c, p, 1 << s, m) {
                out.push(Block::SinglePair {
                    doctor: c.doctor_ids[s].clone(),
                    post: c.post_of(p),
                    displaced: ids_of(c, sub),
                });
            }
        }
    }
    for cx in 0..c.couple_members.len() {
        let (fx, mx) = c.couple_members[cx];
        for a in 0..c.posts() {
            for b in 0..c.posts() {
                if (a == m[fx] as usize && b == m[mx] as usize)
                    || !couple_prefers(c, cx, m, a, b)
                {
                    continue;
                }
                if let Some((case, displaced)) = couple_block_evidence(c, m, cx, a, b) {
                    out.push(Block::CouplePair {
                        couple: c.couple_ids[cx].clone(),
                        posts: (c.post_of(a), c.post_of(b)),
                        case,
                        displaced: displaced
                            .into_iter()
                            .map(|(h, sub)| Displacement {
                                hospital: c.hospital_ids[h].clone(),
                                displaced: ids_of(c, sub),
                            })
                            .collect(),
                    });
                }
            }
        }
    }
    for h in 0..c.n_h {
        let bad = c.matched_mask(m, h) & !c.acceptable[h];
        if bad != 0 {
            out.push(Block::HospitalEmpty {
                hospital: c.hospital_ids[h].clone(),
                unacceptable: ids_of(c, bad),
            });
        }
    }
    out
}

/// True when the matching admits no blocking coalition.
pub fn is_stable(matching: &Matching, instance: &Instance) -> Result<bool, ModelError> {
    let c = Compiled::build(instance, true)?;
    let m = c.index_matching(matching)?;
    Ok(!has_block_ix(&c, &m))
}

/// Why a matching fails individual rationality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IrViolation {
    /// A single doctor ranks unemployment above their post.
    SingleBelowUnemployment { doctor: DoctorId },
    /// A couple ranks both-unemployed above its post pair.
    CoupleBelowUnemployment { couple: CoupleId },
    /// A hospital holds a doctor it finds unacceptable.
    UnacceptableAssignment { hospital: HospitalId, doctor: DoctorId },
}

impl fmt::Display for IrViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrViolation::SingleBelowUnemployment { doctor } => {
                write!(f, "doctor {doctor} prefers unemployment to their post")
            }
            IrViolation::CoupleBelowUnemployment { couple } => {
                write!(f, "couple {couple} prefers both members unemployed")
            }
            IrViolation::UnacceptableAssignment { hospital, doctor } => {
                write!(f, "hospital {hospital} holds unacceptable doctor {doctor}")
            }
        }
    }
}

/// Check individual rationality: no single below unemployment, no couple
/// below joint unemployment, no hospital holding an unacceptable doctor.
/// Returns the first violation in a fixed order (singles, couples,
/// hospitals), or `None`. Set orders are not needed.
pub fn is_individually_rational(
    matching: &Matching,
    instance: &Instance,
) -> Result<Option<IrViolation>, ModelError> {
    let c = Compiled::build(instance, false)?;
    let m = c.index_matching(matching)?;
    for (s, &role) in c.roles.iter().enumerate() {
        if role != crate::model::Role::Single {
            continue;
        }
        if c.pref_rank[s][c.dummy()] < c.pref_rank[s][m[s] as usize] {
            return Ok(Some(IrViolation::SingleBelowUnemployment {
                doctor: c.doctor_ids[s].clone(),
            }));
        }
    }
    for cx in 0..c.couple_members.len() {
        let (fx, mx) = c.couple_members[cx];
        let cur = c.pair_ix(m[fx] as usize, m[mx] as usize);
        let both_out = c.pair_ix(c.dummy(), c.dummy());
        if c.pair_rank[cx][both_out] < c.pair_rank[cx][cur] {
            return Ok(Some(IrViolation::CoupleBelowUnemployment {
                couple: c.couple_ids[cx].clone(),
            }));
        }
    }
    for h in 0..c.n_h {
        let bad = c.matched_mask(&m, h) & !c.acceptable[h];
        if bad != 0 {
            let d = bad.trailing_zeros() as usize;
            return Ok(Some(IrViolation::UnacceptableAssignment {
                hospital: c.hospital_ids[h].clone(),
                doctor: c.doctor_ids[d].clone(),
            }));
        }
    }
    Ok(None)
}

/// Brute force: every capacity-feasible matching that admits no block.
/// `cap` bounds the enumeration as in
/// [`crate::model::feasible_matchings`].
pub fn enumerate_stable(instance: &Instance, cap: u64) -> Result<Vec<Matching>, ModelError> {
    let c = Compiled::build(instance, true)?;
    let all = crate::model::enumerate::feasible_matchings_ix(&c, cap)?;
    Ok(all
        .into_iter()
        .filter(|m| !has_block_ix(&c, m))
        .map(|m| c.export_matching(&m))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Couple, Hospital};
    use crate::prefs::canonical_set_order;
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

    /// One hospital, capacity two; the couple's first member prefers
    /// unemployment; the canonical set order realizes the crowding market.
    fn one_hospital_instance() -> Instance {
        Instance {
            hospitals: vec![Hospital {
                id: HospitalId::new("h1"),
                capacity: 2,
                individual_order: ds(&["f", "d1", "d2", "m"]),
                set_order: Some(canonical_set_order(&ds(&["f", "d1", "d2", "m"]), 2)),
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
                (d("d1"), vec![p("h1"), p("@")]),
                (d("d2"), vec![p("h1"), p("@")]),
            ]),
        }
    }

    fn matching(assign: &[(&str, &str)]) -> Matching {
        Matching {
            assignment: assign.iter().map(|(a, b)| (d(a), p(b))).collect(),
        }
    }

    #[test]
    fn crowding_market_has_no_stable_matching() {
        let inst = one_hospital_instance();
        let stable = enumerate_stable(&inst, 1_000_000).unwrap();
        assert!(stable.is_empty(), "unexpected stable matchings: {stable:?}");
        let all = crate::model::feasible_matchings(&inst, 1_000_000).unwrap();
        assert_eq!(all.len(), 11);
    }

    #[test]
    fn deferred_acceptance_outcome_blocked_only_by_crowding_couple() {
        let inst = one_hospital_instance();
        let m = matching(&[("d1", "h1"), ("d2", "h1"), ("f", "@"), ("m", "@")]);
        assert!(is_individually_rational(&m, &inst).unwrap().is_none());
        assert!(!is_stable(&m, &inst).unwrap());
        let blocks = find_blocks(&m, &inst).unwrap();
        assert_eq!(
            blocks,
            vec![Block::CouplePair {
                couple: CoupleId::new("c1"),
                posts: (p("h1"), p("h1")),
                case: CoupleCase::Together,
                displaced: vec![Displacement {
                    hospital: HospitalId::new("h1"),
                    displaced: ds(&["d1", "d2"]),
                }],
            }]
        );
    }

    #[test]
    fn hospital_prefers_couple_over_current_hires() {
        let inst = one_hospital_instance();
        let m = matching(&[("d1", "h1"), ("d2", "h1"), ("f", "@"), ("m", "@")]);
        let incoming: BTreeSet<DoctorId> = ds(&["f", "m"]).into_iter().collect();
        let imp = hospital_prefers_set(&p("h1"), &incoming, &m, &inst)
            .unwrap()
            .unwrap();
        assert_eq!(imp.displaced, ds(&["d1", "d2"]));
        assert_eq!(imp.resulting, ds(&["f", "m"]));
        // A single incoming doctor h1 ranks low cannot improve the set.
        let incoming: BTreeSet<DoctorId> = ds(&["m"]).into_iter().collect();
        assert!(hospital_prefers_set(&p("h1"), &incoming, &m, &inst)
            .unwrap()
            .is_none());
        // Unemployment always consents.
        assert!(hospital_prefers_set(&p("@"), &incoming, &m, &inst)
            .unwrap()
            .is_some());
    }

    #[test]
    fn blocks_come_out_in_document_order() {
        let inst = one_hospital_instance();
        // d2 idles while a seat is free: single block plus two couple
        // blocks (crowding in together, or the second member joining d1).
        let m = matching(&[("d1", "h1"), ("d2", "@"), ("f", "@"), ("m", "@")]);
        let blocks = find_blocks(&m, &inst).unwrap();
        assert_eq!(
            blocks,
            vec![
                Block::SinglePair {
                    doctor: d("d2"),
                    post: p("h1"),
                    displaced: vec![],
                },
                Block::CouplePair {
                    couple: CoupleId::new("c1"),
                    posts: (p("h1"), p("h1")),
                    case: CoupleCase::Together,
                    displaced: vec![Displacement {
                        hospital: HospitalId::new("h1"),
                        displaced: ds(&["d1"]),
                    }],
                },
                Block::CouplePair {
                    couple: CoupleId::new("c1"),
                    posts: (p("@"), p("h1")),
                    case: CoupleCase::MoveM,
                    displaced: vec![Displacement {
                        hospital: HospitalId::new("h1"),
                        displaced: vec![],
                    }],
                },
            ]
        );
    }

    #[test]
    fn individual_rationality_witnesses() {
        let inst = one_hospital_instance();
        // The couple ranks (h1, @) below (@, @).
        let m = matching(&[("d1", "@"), ("d2", "@"), ("f", "h1"), ("m", "@")]);
        assert_eq!(
            is_individually_rational(&m, &inst).unwrap(),
            Some(IrViolation::CoupleBelowUnemployment {
                couple: CoupleId::new("c1")
            })
        );

        // Make d2 unacceptable to h1 and assign d2 there.
        let mut inst2 = one_hospital_instance();
        inst2.hospitals[0].individual_order = ds(&["f", "d1", "m"]);
        inst2.hospitals[0].set_order = Some(canonical_set_order(&ds(&["f", "d1", "m"]), 2));
        let m = matching(&[("d1", "h1"), ("d2", "h1"), ("f", "@"), ("m", "@")]);
        assert_eq!(
            is_individually_rational(&m, &inst2).unwrap(),
            Some(IrViolation::UnacceptableAssignment {
                hospital: HospitalId::new("h1"),
                doctor: d("d2"),
            })
        );
        let blocks = find_blocks(&m, &inst2).unwrap();
        assert!(blocks.iter().any(|b| matches!(
            b,
            Block::HospitalEmpty { unacceptable, .. } if unacceptable == &ds(&["d2"])
        )));
    }

    #[test]
    fn stable_market_finds_its_matching() {
        // Same market but the couple wants h1: deferred acceptance's
        // outcome {f, d1} at h1 is stable.
        let mut inst = one_hospital_instance();
        inst.couples[0].pair_order = vec![
            (p("h1"), p("h1")),
            (p("h1"), p("@")),
            (p("@"), p("h1")),
            (p("@"), p("@")),
        ];
        let expected = matching(&[("d1", "h1"), ("d2", "@"), ("f", "h1"), ("m", "@")]);
        assert!(is_stable(&expected, &inst).unwrap());
        let stable = enumerate_stable(&inst, 1_000_000).unwrap();
        assert!(stable.contains(&expected));
        for m in &stable {
            assert!(is_stable(m, &inst).unwrap());
        }
    }
}
