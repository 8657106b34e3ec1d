//! Brute-force enumeration of capacity-feasible matchings.

use super::{Compiled, Instance, Matching, ModelError};

/// Enumerate every assignment of doctors to posts that respects hospital
/// capacities. The unemployment post absorbs any number of doctors.
///
/// Matchings come out in a fixed lexicographic order: doctors in document
/// order, each trying hospitals in document order and unemployment last.
/// `cap` bounds the number of partial assignments explored; exceeding it
/// aborts with [`ModelError::CapExceeded`] rather than truncating silently.
pub fn feasible_matchings(instance: &Instance, cap: u64) -> Result<Vec<Matching>, ModelError> {
    let compiled = Compiled::build(instance, false)?;
    let indexed = feasible_matchings_ix(&compiled, cap)?;
    Ok(indexed.iter().map(|m| compiled.export_matching(m)).collect())
}

/// Index-level enumeration shared with the stability oracle.
pub(crate) fn feasible_matchings_ix(c: &Compiled, cap: u64) -> Result<Vec<Vec<u8>>, ModelError> {
    let n_d = c.doctor_ids.len();
    let mut load = vec![0u32; c.n_h];
    let mut current = vec![0u8; n_d];
    let mut out = Vec::new();
    let mut visited: u64 = 0;
    dfs(c, 0, &mut load, &mut current, &mut out, &mut visited, cap)?;
    Ok(out)
}

fn dfs(
    c: &Compiled,
    d: usize,
    load: &mut Vec<u32>,
    current: &mut Vec<u8>,
    out: &mut Vec<Vec<u8>>,
    visited: &mut u64,
    cap: u64,
) -> Result<(), ModelError> {
    *visited += 1;
    if *visited > cap {
        return Err(ModelError::CapExceeded { cap });
    }
    if d == current.len() {
        out.push(current.clone());
        return Ok(());
    }
    for p in 0..=c.n_h {
        if p < c.n_h {
            if load[p] >= c.caps[p] {
                continue;
            }
            load[p] += 1;
        }
        current[d] = p as u8;
        let r = dfs(c, d + 1, load, current, out, visited, cap);
        if p < c.n_h {
            load[p] -= 1;
        }
        r?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Couple, CoupleId, DoctorId, Hospital, HospitalId, Placement};
    use std::collections::BTreeMap;

    /// One hospital with capacity 2 and four doctors: of the 16 assignments,
    /// the 5 placing three or four doctors at the hospital are infeasible.
    #[test]
    fn single_hospital_capacity_two_four_doctors() {
        let h1 = HospitalId::new("h1");
        let ph1 = Placement::Hospital(h1.clone());
        let at = Placement::Unemployed;
        let mk = DoctorId::new;
        let inst = Instance {
            hospitals: vec![Hospital {
                id: h1,
                capacity: 2,
                individual_order: vec![mk("f"), mk("d1"), mk("d2"), mk("m")],
                set_order: None,
                set_constraints: vec![],
            }],
            singles: vec![mk("d1"), mk("d2")],
            couples: vec![Couple {
                id: CoupleId::new("c1"),
                f: mk("f"),
                m: mk("m"),
                pair_order: vec![
                    (at.clone(), ph1.clone()),
                    (ph1.clone(), ph1.clone()),
                    (at.clone(), at.clone()),
                    (ph1.clone(), at.clone()),
                ],
            }],
            doctor_orders: BTreeMap::from([
                (mk("d1"), vec![ph1.clone(), at.clone()]),
                (mk("d2"), vec![ph1, at]),
            ]),
        };
        let all = feasible_matchings(&inst, 1_000_000).unwrap();
        assert_eq!(all.len(), 11);
        // Independent check: filter the full 2^4 product by capacity.
        let mut expect = 0;
        for bits in 0u32..16 {
            if bits.count_ones() <= 2 {
                expect += 1;
            }
        }
        assert_eq!(all.len(), expect);
        // Every matching covers all four doctors exactly once.
        for m in &all {
            assert_eq!(m.assignment.len(), 4);
        }
    }

    #[test]
    fn cap_aborts_instead_of_truncating() {
        let inst = {
            let h1 = HospitalId::new("h1");
            let ph1 = Placement::Hospital(h1.clone());
            let at = Placement::Unemployed;
            let mk = DoctorId::new;
            Instance {
                hospitals: vec![Hospital {
                    id: h1,
                    capacity: 2,
                    individual_order: vec![mk("f"), mk("d1"), mk("d2"), mk("m")],
                    set_order: None,
                    set_constraints: vec![],
                }],
                singles: vec![mk("d1"), mk("d2")],
                couples: vec![Couple {
                    id: CoupleId::new("c1"),
                    f: mk("f"),
                    m: mk("m"),
                    pair_order: vec![
                        (at.clone(), ph1.clone()),
                        (ph1.clone(), ph1.clone()),
                        (at.clone(), at.clone()),
                        (ph1.clone(), at.clone()),
                    ],
                }],
                doctor_orders: BTreeMap::from([
                    (mk("d1"), vec![ph1.clone(), at.clone()]),
                    (mk("d2"), vec![ph1, at]),
                ]),
            }
        };
        let err = feasible_matchings(&inst, 3).unwrap_err();
        assert!(matches!(err, ModelError::CapExceeded { cap: 3 }));
    }
}
