//! Bundled example markets: a three-hospital family where crowding blocks
//! the deferred-acceptance outcome, the minimal one-hospital crowding
//! market with no stable matching, and a two-hospital market whose split
//! couple is stable under every responsive completion.

use crate::model::{
    Couple, CoupleId, DoctorId, Hospital, HospitalId, Instance, Matching, Placement,
    SetConstraint,
};
use crate::prefs::{AltruismViolation, CoupleMember};
use crate::prefs::{canonical_set_order, couple_pair_poset, DoctorPref, PosetError};
use crate::stability::{Block, CoupleCase, Displacement};
use std::collections::BTreeMap;

fn d(s: &str) -> DoctorId {
    DoctorId::new(s)
}

fn ds(names: &[&str]) -> Vec<DoctorId> {
    names.iter().map(|s| d(s)).collect()
}

fn p(s: &str) -> Placement {
    if s == "@" {
        Placement::Unemployed
    } else {
        Placement::hospital(s)
    }
}

fn ranking(names: &[&str]) -> Vec<Placement> {
    names.iter().map(|s| p(s)).collect()
}

/// All pairs of real posts, in the order h1, h2, h3 major.
fn full_pairs(hospitals: &[&str]) -> Vec<(Placement, Placement)> {
    let mut out = Vec::new();
    for a in hospitals {
        for b in hospitals {
            out.push((p(a), p(b)));
        }
    }
    out
}

/// All pairs with exactly one member unemployed.
fn half_pairs(hospitals: &[&str]) -> Vec<(Placement, Placement)> {
    let mut out = Vec::new();
    for a in hospitals {
        out.push((p(a), p("@")));
    }
    for b in hospitals {
        out.push((p("@"), p(b)));
    }
    out
}

/// A three-hospital market with four single doctors and one couple whose
/// joint wish — both members at h1 — crowds out two singles. The family
/// fixes the hospitals' individual orders, the singles' orders, and a few
/// couple comparisons; marginals and completions vary.
///
/// In every member of the family, doctor-proposing deferred acceptance
/// ends with d1, d2 at h1, d3 and the couple's first member at h2, and d4
/// with the second member at h3 — and the unique blocking coalition is
/// the couple moving into h1 together, displacing d1 and d2.
pub struct ThreeHospitalFamily;

impl ThreeHospitalFamily {
    /// The couple's first member insists on h2 first; the second ranks h1
    /// above h3. Both find every hospital acceptable. That leaves two
    /// orders for the first member and three for the second.
    pub fn marginal_combos() -> Vec<(Vec<Placement>, Vec<Placement>)> {
        let f_options = [ranking(&["h2", "h1", "h3", "@"]), ranking(&["h2", "h3", "h1", "@"])];
        let m_options = [
            ranking(&["h1", "h2", "h3", "@"]),
            ranking(&["h1", "h3", "h2", "@"]),
            ranking(&["h2", "h1", "h3", "@"]),
        ];
        let mut out = Vec::new();
        for f in &f_options {
            for m in &m_options {
                out.push((f.clone(), m.clone()));
            }
        }
        out
    }

    /// The comparisons every family member honors: the couple prefers
    /// sharing h1 to splitting across h2 and h3, and prefers any pair of
    /// posts to any pair leaving a member unemployed.
    fn pair_extras() -> Vec<((Placement, Placement), (Placement, Placement))> {
        let hs = ["h1", "h2", "h3"];
        let mut extras = vec![((p("h1"), p("h1")), (p("h2"), p("h3")))];
        for full in full_pairs(&hs) {
            for half in half_pairs(&hs) {
                extras.push((full.clone(), half));
            }
        }
        extras
    }

    /// One concrete member of the family: the couple's order is a sampled
    /// responsive completion of the chosen marginals, and each hospital's
    /// set order is a sampled responsive completion (h1's honoring the
    /// couple-over-rivals comparison).
    pub fn instance(
        f_marginal: &[Placement],
        m_marginal: &[Placement],
        seed: u64,
    ) -> Result<Instance, PosetError> {
        let f_pref = DoctorPref::new(f_marginal.to_vec());
        let m_pref = DoctorPref::new(m_marginal.to_vec());
        let poset = couple_pair_poset(&f_pref, &m_pref, &Self::pair_extras())?;
        let pair_order = poset.sample_extension(seed.wrapping_mul(4))?;

        let h1_ind = ds(&["d3", "d4", "f", "d1", "d2", "m"]);
        let h2_ind = ds(&["d3", "d4", "f", "d1", "m", "d2"]);
        let h3_ind = ds(&["d4", "d3", "d1", "f", "m", "d2"]);
        let h1_extras = vec![SetConstraint(ds(&["f", "m"]), ds(&["d1", "d2"]))];
        let sample_sets = |ind: &[DoctorId],
                           extras: &[SetConstraint],
                           sub: u64|
         -> Result<Vec<Vec<DoctorId>>, PosetError> {
            let poset = crate::prefs::hospital_set_poset(ind, 2, extras)?;
            Ok(poset
                .sample_extension(seed.wrapping_mul(4).wrapping_add(sub))?
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect())
        };

        Ok(Instance {
            hospitals: vec![
                Hospital {
                    id: HospitalId::new("h1"),
                    capacity: 2,
                    individual_order: h1_ind.clone(),
                    set_order: Some(sample_sets(&h1_ind, &h1_extras, 1)?),
                    set_constraints: h1_extras,
                },
                Hospital {
                    id: HospitalId::new("h2"),
                    capacity: 2,
                    individual_order: h2_ind.clone(),
                    set_order: Some(sample_sets(&h2_ind, &[], 2)?),
                    set_constraints: vec![],
                },
                Hospital {
                    id: HospitalId::new("h3"),
                    capacity: 2,
                    individual_order: h3_ind.clone(),
                    set_order: Some(sample_sets(&h3_ind, &[], 3)?),
                    set_constraints: vec![],
                },
            ],
            singles: ds(&["d1", "d2", "d3", "d4"]),
            couples: vec![Couple {
                id: CoupleId::new("c1"),
                f: d("f"),
                m: d("m"),
                pair_order,
            }],
            doctor_orders: BTreeMap::from([
                (d("d1"), ranking(&["h2", "h1", "h3", "@"])),
                (d("d2"), ranking(&["h1", "h2", "h3", "@"])),
                (d("d3"), ranking(&["h2", "h1", "h3", "@"])),
                (d("d4"), ranking(&["h3", "h1", "h2", "@"])),
            ]),
        })
    }

    /// The deferred-acceptance outcome shared by the whole family.
    pub fn expected_matching() -> Matching {
        Matching {
            assignment: BTreeMap::from([
                (d("d1"), p("h1")),
                (d("d2"), p("h1")),
                (d("d3"), p("h2")),
                (d("d4"), p("h3")),
                (d("f"), p("h2")),
                (d("m"), p("h3")),
            ]),
        }
    }

    /// The unique blocking coalition of the outcome, in every family
    /// member: the couple moves into h1 together, displacing d1 and d2.
    pub fn expected_blocks() -> Vec<Block> {
        vec![Block::CouplePair {
            couple: CoupleId::new("c1"),
            posts: (p("h1"), p("h1")),
            case: CoupleCase::Together,
            displaced: vec![Displacement {
                hospital: HospitalId::new("h1"),
                displaced: ds(&["d1", "d2"]),
            }],
        }]
    }

    /// The extreme-altruism violation every family member exhibits: the
    /// first member prefers h2 to h1 and would accept h2 with the partner
    /// at h3, yet the couple ranks sharing h1 above that split.
    pub fn expected_altruism_witness() -> AltruismViolation {
        AltruismViolation {
            couple: CoupleId::new("c1"),
            hospital: HospitalId::new("h1"),
            better: p("h2"),
            partner_post: p("h3"),
            mover: CoupleMember::F,
        }
    }

    pub fn describe() -> String {
        "three hospitals with two seats each; four singles and one couple; \
         the couple would crowd into h1 together, displacing the two \
         singles h1 holds, so the deferred-acceptance outcome is blocked"
            .to_string()
    }
}

/// The minimal crowding market: one hospital with two seats, two singles
/// it likes, and a couple whose first member would rather stay home — yet
/// the couple prefers crowding in together to staying out together. No
/// matching of this market is stable.
pub fn crowding_market() -> Instance {
    let ind = ds(&["f", "d1", "d2", "m"]);
    Instance {
        hospitals: vec![Hospital {
            id: HospitalId::new("h1"),
            capacity: 2,
            individual_order: ind.clone(),
            set_order: Some(canonical_set_order(&ind, 2)),
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
            (d("d1"), ranking(&["h1", "@"])),
            (d("d2"), ranking(&["h1", "@"])),
        ]),
    }
}

/// The deferred-acceptance outcome of [`crowding_market`]: both singles
/// hired, the couple unemployed.
pub fn crowding_market_outcome() -> Matching {
    Matching {
        assignment: BTreeMap::from([
            (d("d1"), p("h1")),
            (d("d2"), p("h1")),
            (d("f"), p("@")),
            (d("m"), p("@")),
        ]),
    }
}

/// A two-hospital market whose couple splits across the hospitals and
/// stays stable under every responsive completion — even though h1's set
/// order prefers hiring the couple together over its two singles, the
/// kind of comparison diversity-averse hospitals never make.
pub struct SplitCoupleFamily;

impl SplitCoupleFamily {
    /// The partially specified orders: each doctor's top post is fixed
    /// (s1 and the first member at h1, s2 and the second member at h2);
    /// the two remaining posts may come in either order.
    pub fn tail_combos() -> Vec<[bool; 4]> {
        let mut out = Vec::new();
        for s1 in [false, true] {
            for s2 in [false, true] {
                for f in [false, true] {
                    for m in [false, true] {
                        out.push([s1, s2, f, m]);
                    }
                }
            }
        }
        out
    }

    fn order(top: &str, tail: [&str; 2], flip: bool) -> Vec<Placement> {
        if flip {
            ranking(&[top, tail[1], tail[0]])
        } else {
            ranking(&[top, tail[0], tail[1]])
        }
    }

    /// Every member of the family for one tail combination: one instance
    /// per responsive completion of the couple's order (42 of them), with
    /// canonical set orders honoring h1's couple-over-singles comparison.
    pub fn instances(combo: [bool; 4], cap: u64) -> Result<Vec<Instance>, PosetError> {
        let [s1_flip, s2_flip, f_flip, m_flip] = combo;
        let f_marginal = Self::order("h1", ["h2", "@"], f_flip);
        let m_marginal = Self::order("h2", ["h1", "@"], m_flip);
        let f_pref = DoctorPref::new(f_marginal);
        let m_pref = DoctorPref::new(m_marginal);
        let poset = couple_pair_poset(&f_pref, &m_pref, &[])?;
        let extensions = poset.enumerate_extensions(cap)?;

        let h1_ind = ds(&["f", "s1", "s2", "m"]);
        let h2_ind = ds(&["s2", "m", "f", "s1"]);
        let h1_constraints = vec![SetConstraint(ds(&["f", "m"]), ds(&["s1", "s2"]))];
        Ok(extensions
            .into_iter()
            .map(|pair_order| Instance {
                hospitals: vec![
                    Hospital {
                        id: HospitalId::new("h1"),
                        capacity: 2,
                        individual_order: h1_ind.clone(),
                        set_order: Some(canonical_set_order(&h1_ind, 2)),
                        set_constraints: h1_constraints.clone(),
                    },
                    Hospital {
                        id: HospitalId::new("h2"),
                        capacity: 2,
                        individual_order: h2_ind.clone(),
                        set_order: Some(canonical_set_order(&h2_ind, 2)),
                        set_constraints: vec![],
                    },
                ],
                singles: ds(&["s1", "s2"]),
                couples: vec![Couple {
                    id: CoupleId::new("c1"),
                    f: d("f"),
                    m: d("m"),
                    pair_order,
                }],
                doctor_orders: BTreeMap::from([
                    (d("s1"), Self::order("h1", ["h2", "@"], s1_flip)),
                    (d("s2"), Self::order("h2", ["h1", "@"], s2_flip)),
                ]),
            })
            .collect())
    }

    /// The matching that is stable in every member of the family.
    pub fn proposed_matching() -> Matching {
        Matching {
            assignment: BTreeMap::from([
                (d("f"), p("h1")),
                (d("s1"), p("h1")),
                (d("s2"), p("h2")),
                (d("m"), p("h2")),
            ]),
        }
    }

    pub fn describe() -> String {
        "two hospitals with two seats each; h1 would swap its two singles \
         for the couple, violating aversion to couple diversity, yet the \
         split assignment is stable under every responsive completion"
            .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, ValidationMode};
    use crate::prefs::check_diversity_aversion;
    use crate::stability::{find_blocks, is_stable};

    #[test]
    fn three_hospital_family_members_are_valid_and_behave_identically() {
        let combos = ThreeHospitalFamily::marginal_combos();
        assert_eq!(combos.len(), 6);
        for (f_marg, m_marg) in &combos {
            let inst = ThreeHospitalFamily::instance(f_marg, m_marg, 0).unwrap();
            let report = validate_instance(&inst, ValidationMode::Strict);
            assert!(report.is_valid(), "{report}");
            let (matching, _) = crate::dpda::run_dpda(&inst).unwrap();
            assert_eq!(matching, ThreeHospitalFamily::expected_matching());
            assert_eq!(
                find_blocks(&matching, &inst).unwrap(),
                ThreeHospitalFamily::expected_blocks()
            );
            let violations = crate::prefs::check_extreme_altruism(&inst).unwrap();
            assert!(violations.contains(&ThreeHospitalFamily::expected_altruism_witness()));
        }
    }

    #[test]
    fn crowding_market_is_the_minimal_relaxed_example() {
        let inst = crowding_market();
        let report = validate_instance(&inst, ValidationMode::Relaxed);
        assert!(report.is_valid(), "{report}");
        // Too small for strict mode: a single hospital.
        assert!(!validate_instance(&inst, ValidationMode::Strict).is_valid());
        let (matching, _) = crate::dpda::run_dpda(&inst).unwrap();
        assert_eq!(matching, crowding_market_outcome());
    }

    #[test]
    fn split_couple_family_is_stable_throughout_one_combo() {
        let combo = SplitCoupleFamily::tail_combos()[0];
        let instances = SplitCoupleFamily::instances(combo, 1000).unwrap();
        assert_eq!(instances.len(), 42);
        let proposed = SplitCoupleFamily::proposed_matching();
        for inst in &instances {
            assert!(validate_instance(inst, ValidationMode::Strict).is_valid());
            assert!(is_stable(&proposed, inst).unwrap());
        }
        // The family deliberately violates aversion to couple diversity.
        let violations = check_diversity_aversion(&instances[0]).unwrap();
        assert!(!violations.is_empty());
    }
}
