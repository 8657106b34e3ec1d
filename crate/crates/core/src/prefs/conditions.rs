//! Checkers for the two preference conditions that drive the existence
//! results: extreme altruism of couples and hospitals' aversion to hiring a
//! couple over intermediate individual candidates.

use crate::model::{Compiled, CoupleId, DoctorId, HospitalId, Instance, ModelError, Placement};
use serde::Serialize;
use std::fmt;

/// Which member of a couple a finding refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoupleMember {
    F,
    M,
}

impl fmt::Display for CoupleMember {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoupleMember::F => fmt.write_str("first member"),
            CoupleMember::M => fmt.write_str("second member"),
        }
    }
}

/// A failure of extreme altruism.
///
/// Extreme altruism demands: whenever one member could do strictly better
/// than hospital `h` at `better` while the partner gets `partner_post` (no
/// worse than the mover's alternative, and acceptable to the partner), the
/// couple prefers that split to both members crowding into `h`. The demand
/// applies to every real hospital whose capacity leaves at least two doctors
/// outside. A violation names the offending comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AltruismViolation {
    pub couple: CoupleId,
    /// The hospital both members would crowd into.
    pub hospital: HospitalId,
    /// Where the moving member would go instead.
    pub better: Placement,
    /// Where the partner would go.
    pub partner_post: Placement,
    /// The member whose solo improvement the couple refuses.
    pub mover: CoupleMember,
}

impl fmt::Display for AltruismViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = match self.mover {
            CoupleMember::F => (self.better.to_string(), self.partner_post.to_string()),
            CoupleMember::M => (self.partner_post.to_string(), self.better.to_string()),
        };
        write!(
            f,
            "couple {} ranks ({h}, {h}) above ({a}, {b}) although its {mover} does strictly \
             better at {better} and the partner accepts {partner}",
            self.couple,
            h = self.hospital,
            mover = self.mover,
            better = self.better,
            partner = self.partner_post,
        )
    }
}

/// Check every couple for extreme altruism. Returns all violations in a
/// fixed order (couples, then hospitals, then alternative posts); an empty
/// list means the instance satisfies the condition.
///
/// Only couple pair rankings and derived marginals are consulted, so the
/// instance may leave hospital set orders open.
pub fn check_extreme_altruism(instance: &Instance) -> Result<Vec<AltruismViolation>, ModelError> {
    let c = Compiled::build(instance, false)?;
    let n_d = c.doctor_ids.len();
    let posts = c.posts();
    let dummy = c.dummy();
    let mut out = Vec::new();
    for (cx, &(fx, mx)) in c.couple_members.iter().enumerate() {
        let f_rank = &c.pref_rank[fx];
        let m_rank = &c.pref_rank[mx];
        let pair = &c.pair_rank[cx];
        for h in 0..c.n_h {
            // Hospitals able to absorb all but at most one other doctor are
            // exempt: the construction needs two doctors left outside.
            if c.caps[h] as usize > n_d.saturating_sub(2) {
                continue;
            }
            let both = pair[c.pair_ix(h, h)];
            for better in 0..posts {
                for partner in 0..posts {
                    // First member moves to `better`, partner to `partner`.
                    if f_rank[better] < f_rank[h]
                        && f_rank[better] <= f_rank[partner]
                        && m_rank[partner] <= m_rank[dummy]
                        && pair[c.pair_ix(better, partner)] > both
                    {
                        out.push(AltruismViolation {
                            couple: c.couple_ids[cx].clone(),
                            hospital: c.hospital_ids[h].clone(),
                            better: c.post_of(better),
                            partner_post: c.post_of(partner),
                            mover: CoupleMember::F,
                        });
                    }
                    // Second member moves to `better`, partner to `partner`.
                    if m_rank[better] < m_rank[h]
                        && m_rank[better] <= m_rank[partner]
                        && f_rank[partner] <= f_rank[dummy]
                        && pair[c.pair_ix(partner, better)] > both
                    {
                        out.push(AltruismViolation {
                            couple: c.couple_ids[cx].clone(),
                            hospital: c.hospital_ids[h].clone(),
                            better: c.post_of(better),
                            partner_post: c.post_of(partner),
                            mover: CoupleMember::M,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A failure of aversion to couple diversity.
///
/// The condition demands: when a hospital ranks one couple member high and
/// the other low — two individual candidates strictly between them, with
/// more acceptable doctors above the low member than the hospital has seats
/// — it prefers the two intermediate candidates to the couple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiversityViolation {
    pub hospital: HospitalId,
    pub couple: CoupleId,
    /// The two intermediate candidates, higher-ranked first.
    pub between: (DoctorId, DoctorId),
    /// The couple member the hospital ranks above the intermediates.
    pub high_member: CoupleMember,
}

impl fmt::Display for DiversityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hospital {} ranks couple {} above intermediate candidates {{{}, {}}} although it \
             ranks its {} high, the other member low, and has more candidates than seats",
            self.hospital, self.couple, self.between.0, self.between.1, self.high_member,
        )
    }
}

/// Check every hospital for aversion to couple diversity. Returns all
/// violations in a fixed order (hospitals, then couples, then intermediate
/// pairs); requires concrete set orders on every hospital.
pub fn check_diversity_aversion(
    instance: &Instance,
) -> Result<Vec<DiversityViolation>, ModelError> {
    let c = Compiled::build(instance, true)?;
    let mut out = Vec::new();
    for h in 0..c.n_h {
        if c.caps[h] < 2 {
            continue;
        }
        let rank = &c.ind_rank[h];
        let above = |d: usize| -> usize {
            // Acceptable doctors the hospital ranks strictly above d.
            let rd = rank[d].unwrap();
            (0..c.doctor_ids.len())
                .filter(|&e| matches!(rank[e], Some(re) if re < rd))
                .count()
        };
        for (cx, &(fx, mx)) in c.couple_members.iter().enumerate() {
            let (Some(rf), Some(rm)) = (rank[fx], rank[mx]) else {
                continue;
            };
            for (high, low, high_member) in
                [(rf, rm, CoupleMember::F), (rm, rf, CoupleMember::M)]
            {
                if high >= low {
                    continue;
                }
                let (hx, lx) = if high_member == CoupleMember::F {
                    (fx, mx)
                } else {
                    (mx, fx)
                };
                if above(lx) <= c.caps[h] as usize {
                    continue;
                }
                let couple_mask = (1u64 << fx) | (1u64 << mx);
                let mids: Vec<usize> = (0..c.doctor_ids.len())
                    .filter(|&e| {
                        matches!(rank[e], Some(re) if re > high && re < low)
                            && e != hx
                            && e != lx
                    })
                    .collect();
                for (i, &d1) in mids.iter().enumerate() {
                    for &d2 in &mids[i + 1..] {
                        // Order the pair by the hospital's ranking.
                        let (a, b) = if rank[d1].unwrap() < rank[d2].unwrap() {
                            (d1, d2)
                        } else {
                            (d2, d1)
                        };
                        let mid_mask = (1u64 << a) | (1u64 << b);
                        if !c.set_prefers(h, mid_mask, couple_mask) {
                            out.push(DiversityViolation {
                                hospital: c.hospital_ids[h].clone(),
                                couple: c.couple_ids[cx].clone(),
                                between: (
                                    c.doctor_ids[a].clone(),
                                    c.doctor_ids[b].clone(),
                                ),
                                high_member,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Couple, DoctorId, Hospital, Instance};
    use std::collections::BTreeMap;

    fn p(s: &str) -> Placement {
        if s == "@" {
            Placement::Unemployed
        } else {
            Placement::hospital(s)
        }
    }

    fn pairs(descr: &[(&str, &str)]) -> Vec<(Placement, Placement)> {
        descr.iter().map(|(a, b)| (p(a), p(b))).collect()
    }

    fn d(s: &str) -> DoctorId {
        DoctorId::new(s)
    }

    /// One hospital, capacity two, couple plus two singles. The couple's
    /// first member prefers unemployment, yet the couple ranks crowding into
    /// h1 above both staying out — the classic extreme-altruism violation.
    fn crowding_instance() -> Instance {
        Instance {
            hospitals: vec![Hospital {
                id: crate::model::HospitalId::new("h1"),
                capacity: 2,
                individual_order: vec![d("f"), d("d1"), d("d2"), d("m")],
                set_order: Some(
                    crate::prefs::canonical_set_order(&[d("f"), d("d1"), d("d2"), d("m")], 2),
                ),
                set_constraints: vec![],
            }],
            singles: vec![d("d1"), d("d2")],
            couples: vec![Couple {
                id: crate::model::CoupleId::new("c1"),
                f: d("f"),
                m: d("m"),
                pair_order: pairs(&[("@", "h1"), ("h1", "h1"), ("@", "@"), ("h1", "@")]),
            }],
            doctor_orders: BTreeMap::from([
                (d("d1"), vec![p("h1"), p("@")]),
                (d("d2"), vec![p("h1"), p("@")]),
            ]),
        }
    }

    #[test]
    fn crowding_couple_violates_extreme_altruism() {
        let inst = crowding_instance();
        let violations = check_extreme_altruism(&inst).unwrap();
        assert!(!violations.is_empty());
        let v = &violations[0];
        assert_eq!(v.hospital.0, "h1");
        assert_eq!(v.mover, CoupleMember::F);
        assert_eq!(v.better, Placement::Unemployed);
    }

    #[test]
    fn deferring_couple_satisfies_extreme_altruism() {
        let mut inst = crowding_instance();
        // Both members staying out now beats crowding in, so every demanded
        // comparison holds. The marginals are unchanged and responsive.
        inst.couples[0].pair_order =
            pairs(&[("@", "h1"), ("@", "@"), ("h1", "h1"), ("h1", "@")]);
        let violations = check_extreme_altruism(&inst).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn roomy_hospitals_are_exempt_from_altruism() {
        let mut inst = crowding_instance();
        // Capacity 3 leaves only one doctor outside, so the demand lapses.
        inst.hospitals[0].capacity = 3;
        inst.hospitals[0].set_order =
            Some(crate::prefs::canonical_set_order(&[d("f"), d("d1"), d("d2"), d("m")], 3));
        let violations = check_extreme_altruism(&inst).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn canonical_order_prefers_couple_and_violates_diversity_aversion() {
        // f ranked top, m ranked last, two candidates in between, and more
        // candidates than seats: aversion demands {d1, d2} above {f, m},
        // but the canonical rank order puts {f, m} above {d1, d2}.
        let inst = crowding_instance();
        let violations = check_diversity_aversion(&inst).unwrap();
        assert_eq!(violations.len(), 1);
        let v = &violations[0];
        assert_eq!(v.hospital.0, "h1");
        assert_eq!(v.high_member, CoupleMember::F);
        assert_eq!(v.between.0 .0, "d1");
        assert_eq!(v.between.1 .0, "d2");
    }

    #[test]
    fn averse_set_order_passes_diversity_check() {
        let mut inst = crowding_instance();
        // Move {f, m} below {d1, d2}: swap their positions in the order.
        let so = inst.hospitals[0].set_order.as_mut().unwrap();
        let fm = so.iter().position(|s| s == &vec![d("f"), d("m")]).unwrap();
        let dd = so.iter().position(|s| s == &vec![d("d1"), d("d2")]).unwrap();
        so.swap(fm, dd);
        let violations = check_diversity_aversion(&inst).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn diversity_guard_needs_more_candidates_than_seats() {
        let mut inst = crowding_instance();
        // With capacity 3 the guard (strictly more acceptable doctors above
        // the low member than seats) fails: 3 above m, 3 seats.
        inst.hospitals[0].capacity = 3;
        inst.hospitals[0].set_order =
            Some(crate::prefs::canonical_set_order(&[d("f"), d("d1"), d("d2"), d("m")], 3));
        let violations = check_diversity_aversion(&inst).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }
}
