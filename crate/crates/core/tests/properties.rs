//! Randomized properties over the public API: feasibility of the procedure's
//! outputs, serialization round-trips, and the responsive-dominance laws that
//! every sampled preference completion must respect.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use couplematch::dpda::run_dpda;
use couplematch::model::{DoctorId, HospitalId, Instance, Matching, Placement, SetConstraint};
use couplematch::prefs::{couple_pair_poset, derive_marginals, hospital_set_poset, DoctorPref};
use couplematch::stability::is_individually_rational;
use couplematch::theorems::{altruistic_pair_order, random_market};

fn posts3() -> Vec<Placement> {
    vec![
        Placement::hospital("h1"),
        Placement::hospital("h2"),
        Placement::Unemployed,
    ]
}

proptest! {
    /// Every matching the procedure emits covers each doctor exactly once,
    /// respects hospital capacities, and is individually rational.
    #[test]
    fn procedure_outputs_are_feasible_and_rational(seed in any::<u16>()) {
        let inst = random_market(seed as u64);
        let (matching, _) = run_dpda(&inst).unwrap();
        let covered: BTreeSet<_> = matching.assignment.keys().cloned().collect();
        let everyone: BTreeSet<_> = inst.doctors().into_iter().collect();
        prop_assert_eq!(covered, everyone);
        for h in &inst.hospitals {
            let load = matching
                .assignment
                .values()
                .filter(|p| p.as_hospital() == Some(&h.id))
                .count();
            prop_assert!(load <= h.capacity as usize, "{} over capacity", h.id);
        }
        prop_assert!(is_individually_rational(&matching, &inst).unwrap().is_none());
    }

    /// Instances and matchings survive a JSON round-trip unchanged.
    #[test]
    fn documents_round_trip_through_json(seed in any::<u16>()) {
        let inst = random_market(seed as u64);
        prop_assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst.clone());
        let (matching, _) = run_dpda(&inst).unwrap();
        prop_assert_eq!(Matching::from_json(&matching.to_json()).unwrap(), matching);
    }

    /// A sampled couple completion never places a pair below another pair
    /// that is weakly worse for both members.
    #[test]
    fn couple_completions_respect_marginal_dominance(
        f_order in Just(posts3()).prop_shuffle(),
        m_order in Just(posts3()).prop_shuffle(),
        seed in any::<u16>(),
    ) {
        let f = DoctorPref::new(f_order);
        let m = DoctorPref::new(m_order);
        let completion = couple_pair_poset(&f, &m, &[])
            .unwrap()
            .sample_extension(seed as u64)
            .unwrap();
        let position: BTreeMap<_, usize> = completion
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, pair)| (pair, i))
            .collect();
        prop_assert_eq!(position.len(), 9, "every post pair appears exactly once");
        for (p, &i) in &position {
            for (q, &j) in &position {
                if p == q {
                    continue;
                }
                let f_weakly_better = f.rank_of(&p.0).unwrap() <= f.rank_of(&q.0).unwrap();
                let m_weakly_better = m.rank_of(&p.1).unwrap() <= m.rank_of(&q.1).unwrap();
                if f_weakly_better && m_weakly_better {
                    prop_assert!(
                        i < j,
                        "{p:?} dominates {q:?} but came later in the completion"
                    );
                }
            }
        }
    }

    /// A sampled hospital set-order completion keeps supersets above
    /// subsets, follows the individual ranking on singletons and on
    /// member-by-member comparisons of equal-sized sets, and honors any
    /// extra declared comparison.
    #[test]
    fn set_completions_respect_forced_comparisons(
        names in Just(vec!["a", "b", "c", "d"]).prop_shuffle(),
        seed in any::<u16>(),
    ) {
        let docs: Vec<DoctorId> = names.iter().map(|n| DoctorId::new(*n)).collect();
        let constraint = SetConstraint(
            vec![docs[0].clone(), docs[3].clone()],
            vec![docs[1].clone(), docs[2].clone()],
        );
        let completion = hospital_set_poset(&docs, 2, std::slice::from_ref(&constraint))
            .unwrap()
            .sample_extension(seed as u64)
            .unwrap();
        let position: BTreeMap<BTreeSet<DoctorId>, usize> = completion
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, set)| (set, i))
            .collect();
        prop_assert_eq!(position.len(), 11, "1 empty + 4 singletons + 6 pairs");
        let rank: BTreeMap<&DoctorId, usize> =
            docs.iter().enumerate().map(|(i, d)| (d, i)).collect();
        let at = |set: &[&DoctorId]| -> usize {
            position[&set.iter().map(|d| (*d).clone()).collect::<BTreeSet<_>>()]
        };
        for (s, &i) in &position {
            for (t, &j) in &position {
                if s == t {
                    continue;
                }
                if t.is_subset(s) {
                    prop_assert!(i < j, "{s:?} must beat its subset {t:?}");
                } else if s.len() == t.len() && s.len() > 0 {
                    // Compare coordinatewise after sorting by individual rank.
                    let rs: Vec<usize> = s.iter().map(|d| rank[d]).collect();
                    let rt: Vec<usize> = t.iter().map(|d| rank[d]).collect();
                    let mut rs = rs; rs.sort_unstable();
                    let mut rt = rt; rt.sort_unstable();
                    if rs.iter().zip(&rt).all(|(x, y)| x <= y) {
                        prop_assert!(i < j, "{s:?} dominates {t:?} member by member");
                    }
                }
            }
        }
        prop_assert!(
            at(&[&docs[0], &docs[3]]) < at(&[&docs[1], &docs[2]]),
            "declared comparison must hold in the completion"
        );
    }

    /// The deferring couple order ranks all nine pairs, starts from both
    /// members at their shared favorite, ends at both members at their
    /// shared worst, and induces the very marginal it was built from.
    #[test]
    fn deferring_pair_order_is_grounded_in_its_marginal(
        marginal in Just(posts3()).prop_shuffle(),
    ) {
        let order = altruistic_pair_order(&marginal);
        prop_assert_eq!(order.len(), 9);
        let distinct: BTreeSet<_> = order.iter().cloned().collect();
        prop_assert_eq!(distinct.len(), 9);
        let best = marginal.first().unwrap().clone();
        let worst = marginal.last().unwrap().clone();
        prop_assert_eq!(order.first().unwrap().clone(), (best.clone(), best));
        prop_assert_eq!(order.last().unwrap().clone(), (worst.clone(), worst));
        let hospitals = vec![HospitalId::new("h1"), HospitalId::new("h2")];
        let (f, m) = derive_marginals(&order, &hospitals).unwrap();
        prop_assert_eq!(f.ranking, marginal.clone());
        prop_assert_eq!(m.ranking, marginal);
    }
}
