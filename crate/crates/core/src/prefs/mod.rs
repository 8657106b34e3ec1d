//! Preference structures: doctor rankings, couple pair rankings and their
//! marginals, hospital set rankings, responsiveness checks, and partial
//! orders over the free choices a responsive family leaves open.

mod conditions;
mod poset;

pub use conditions::{
    check_diversity_aversion, check_extreme_altruism, AltruismViolation, CoupleMember,
    DiversityViolation,
};
pub use poset::{
    canonical_set_order, concretize, couple_pair_poset, diversity_averse_set_order,
    hospital_set_poset, PosetError, ResponsivePoset,
};

use crate::model::{DoctorId, Hospital, HospitalId, Placement};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A strict ranking of the real hospitals and unemployment, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoctorPref {
    pub ranking: Vec<Placement>,
}

impl DoctorPref {
    pub fn new(ranking: Vec<Placement>) -> Self {
        Self { ranking }
    }

    pub fn rank_of(&self, p: &Placement) -> Option<usize> {
        self.ranking.iter().position(|q| q == p)
    }

    /// True when `a` is ranked strictly above `b`.
    pub fn prefers(&self, a: &Placement, b: &Placement) -> bool {
        match (self.rank_of(a), self.rank_of(b)) {
            (Some(ra), Some(rb)) => ra < rb,
            _ => false,
        }
    }
}

/// A hospital's preferences in checkable form: capacity, ranking of
/// acceptable doctors, and a complete ranking of feasible doctor sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HospitalPref {
    pub capacity: u32,
    pub individual: Vec<DoctorId>,
    pub sets: Vec<BTreeSet<DoctorId>>,
}

impl HospitalPref {
    /// Extract the checkable form of a hospital if it carries an explicit
    /// set order.
    pub fn from_hospital(h: &Hospital) -> Option<Self> {
        let sets = h
            .set_order
            .as_ref()?
            .iter()
            .map(|s| s.iter().cloned().collect())
            .collect();
        Some(Self {
            capacity: h.capacity,
            individual: h.individual_order.clone(),
            sets,
        })
    }
}

/// Which coordinate of a couple's pair ranking a finding refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    First,
    Second,
}

/// Two pair comparisons that order the same coordinate values oppositely,
/// so no marginal ranking exists for that coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalConflict {
    pub coordinate: Coordinate,
    /// Comparison placing `a` above `b` in the conflicted coordinate.
    pub supporting: ((Placement, Placement), (Placement, Placement)),
    /// Comparison placing `b` above `a` in the conflicted coordinate.
    pub opposing: ((Placement, Placement), (Placement, Placement)),
}

impl fmt::Display for MarginalConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coord = match self.coordinate {
            Coordinate::First => "first",
            Coordinate::Second => "second",
        };
        let ((a1, a2), (b1, b2)) = &self.supporting;
        let ((c1, c2), (d1, d2)) = &self.opposing;
        write!(
            f,
            "no consistent {coord}-coordinate marginal: ({a1}, {a2}) ranks above ({b1}, {b2}) \
             but ({c1}, {c2}) ranks above ({d1}, {d2})"
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarginalsError {
    #[error("pair ranking is not a permutation of all post pairs: {0}")]
    NotAPermutation(String),
    #[error("{0}")]
    Conflict(MarginalConflict),
}

/// Recover both members' post rankings from a couple's pair ranking.
///
/// A responsive pair ranking orders `(a, y)` versus `(b, y)` the same way
/// for every `y` (and symmetrically in the second coordinate); those common
/// orders are the marginals. Returns the conflicting comparisons when no
/// such order exists.
pub fn derive_marginals(
    pair_order: &[(Placement, Placement)],
    hospitals: &[HospitalId],
) -> Result<(DoctorPref, DoctorPref), MarginalsError> {
    let posts: Vec<Placement> = hospitals
        .iter()
        .map(|h| Placement::Hospital(h.clone()))
        .chain([Placement::Unemployed])
        .collect();
    let n = posts.len();
    let post_ix: BTreeMap<&Placement, usize> = posts.iter().enumerate().map(|(i, p)| (p, i)).collect();

    let mut rank = vec![vec![usize::MAX; n]; n];
    if pair_order.len() != n * n {
        return Err(MarginalsError::NotAPermutation(format!(
            "expected {} pairs, found {}",
            n * n,
            pair_order.len()
        )));
    }
    for (r, (a, b)) in pair_order.iter().enumerate() {
        let (Some(&ai), Some(&bi)) = (post_ix.get(a), post_ix.get(b)) else {
            return Err(MarginalsError::NotAPermutation(format!(
                "pair ({a}, {b}) mentions an unknown post"
            )));
        };
        if rank[ai][bi] != usize::MAX {
            return Err(MarginalsError::NotAPermutation(format!(
                "pair ({a}, {b}) appears twice"
            )));
        }
        rank[ai][bi] = r;
    }

    // First coordinate: the order of (x, y) against (x', y) must not depend
    // on y.
    for x1 in 0..n {
        for x2 in (x1 + 1)..n {
            let mut first: Option<(bool, usize)> = None;
            for y in 0..n {
                let above = rank[x1][y] < rank[x2][y];
                match first {
                    None => first = Some((above, y)),
                    Some((prev, y0)) if prev != above => {
                        let mk = |x: usize, y: usize| (posts[x].clone(), posts[y].clone());
                        let (sup, opp) = if prev {
                            ((mk(x1, y0), mk(x2, y0)), (mk(x2, y), mk(x1, y)))
                        } else {
                            ((mk(x2, y0), mk(x1, y0)), (mk(x1, y), mk(x2, y)))
                        };
                        return Err(MarginalsError::Conflict(MarginalConflict {
                            coordinate: Coordinate::First,
                            supporting: sup,
                            opposing: opp,
                        }));
                    }
                    _ => {}
                }
            }
        }
    }
    // Second coordinate, symmetrically.
    for y1 in 0..n {
        for y2 in (y1 + 1)..n {
            let mut first: Option<(bool, usize)> = None;
            for x in 0..n {
                let above = rank[x][y1] < rank[x][y2];
                match first {
                    None => first = Some((above, x)),
                    Some((prev, x0)) if prev != above => {
                        let mk = |x: usize, y: usize| (posts[x].clone(), posts[y].clone());
                        let (sup, opp) = if prev {
                            ((mk(x0, y1), mk(x0, y2)), (mk(x, y2), mk(x, y1)))
                        } else {
                            ((mk(x0, y2), mk(x0, y1)), (mk(x, y1), mk(x, y2)))
                        };
                        return Err(MarginalsError::Conflict(MarginalConflict {
                            coordinate: Coordinate::Second,
                            supporting: sup,
                            opposing: opp,
                        }));
                    }
                    _ => {}
                }
            }
        }
    }

    let dummy = n - 1;
    let mut f_order: Vec<usize> = (0..n).collect();
    f_order.sort_by_key(|&x| rank[x][dummy]);
    let mut m_order: Vec<usize> = (0..n).collect();
    m_order.sort_by_key(|&y| rank[dummy][y]);
    let to_pref = |order: Vec<usize>| DoctorPref {
        ranking: order.into_iter().map(|i| posts[i].clone()).collect(),
    };
    Ok((to_pref(f_order), to_pref(m_order)))
}

/// Why a hospital's set order fails to be a responsive extension of its
/// doctor ranking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponsivenessViolation {
    /// A feasible set is absent from the set order.
    MissingSet { set: Vec<DoctorId> },
    /// A set appears twice in the set order.
    DuplicateSet { set: Vec<DoctorId> },
    /// A listed set is not a feasible subset of the acceptable doctors.
    InfeasibleSet { set: Vec<DoctorId>, reason: String },
    /// The empty set ranks above a nonempty feasible set.
    EmptySetTooHigh { below: Vec<DoctorId> },
    /// Singleton sets disagree with the doctor ranking.
    SingletonOrderMismatch { better: DoctorId, worse: DoctorId },
    /// Adding the same doctor to two sets reverses their comparison.
    LiftMismatch {
        base_better: Vec<DoctorId>,
        base_worse: Vec<DoctorId>,
        added: DoctorId,
    },
}

impl ResponsivenessViolation {
    /// Structural findings concern the shape of the list rather than the
    /// responsiveness clauses.
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            Self::MissingSet { .. } | Self::DuplicateSet { .. } | Self::InfeasibleSet { .. }
        )
    }
}

fn join_ids(ids: &[DoctorId]) -> String {
    let inner = ids.iter().map(|d| d.0.as_str()).collect::<Vec<_>>().join(", ");
    format!("{{{inner}}}")
}

impl fmt::Display for ResponsivenessViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingSet { set } => {
                write!(f, "set order omits feasible set {}", join_ids(set))
            }
            Self::DuplicateSet { set } => {
                write!(f, "set order lists {} twice", join_ids(set))
            }
            Self::InfeasibleSet { set, reason } => {
                write!(f, "set order lists infeasible set {}: {reason}", join_ids(set))
            }
            Self::EmptySetTooHigh { below } => {
                write!(f, "the empty set ranks above nonempty set {}", join_ids(below))
            }
            Self::SingletonOrderMismatch { better, worse } => write!(
                f,
                "doctor ranking puts {better} above {worse} but the set order ranks {{{worse}}} above {{{better}}}"
            ),
            Self::LiftMismatch {
                base_better,
                base_worse,
                added,
            } => write!(
                f,
                "sets {} and {} compare one way alone and the other way after adding {added}",
                join_ids(base_better),
                join_ids(base_worse)
            ),
        }
    }
}

/// Check that a complete set order is a responsive extension of the
/// hospital's doctor ranking: every feasible set appears exactly once,
/// nonempty sets beat the empty set, singletons follow the doctor ranking,
/// and comparisons are invariant under adding a common doctor to both sides
/// while below capacity.
pub fn check_hospital_responsive(pref: &HospitalPref) -> Result<(), ResponsivenessViolation> {
    let n = pref.individual.len();
    let cap = pref.capacity as usize;
    let ix: BTreeMap<&DoctorId, usize> =
        pref.individual.iter().enumerate().map(|(i, d)| (d, i)).collect();
    let render = |mask: u64| -> Vec<DoctorId> {
        (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| pref.individual[i].clone())
            .collect()
    };

    // Structure: the listed sets must be exactly the feasible subsets.
    let mut rank: BTreeMap<u64, usize> = BTreeMap::new();
    for (r, set) in pref.sets.iter().enumerate() {
        if set.len() > cap {
            return Err(ResponsivenessViolation::InfeasibleSet {
                set: set.iter().cloned().collect(),
                reason: format!("{} doctors, capacity {}", set.len(), pref.capacity),
            });
        }
        let mut mask = 0u64;
        for d in set {
            match ix.get(d) {
                Some(&i) => mask |= 1 << i,
                None => {
                    return Err(ResponsivenessViolation::InfeasibleSet {
                        set: set.iter().cloned().collect(),
                        reason: format!("{d} is not an acceptable doctor"),
                    })
                }
            }
        }
        if rank.insert(mask, r).is_some() {
            return Err(ResponsivenessViolation::DuplicateSet { set: render(mask) });
        }
    }
    let ground = if n == 0 { 0 } else { (!0u64) >> (64 - n) };
    let feasible = crate::model::feasible_subsets(ground, pref.capacity.min(n as u32));
    for mask in &feasible {
        if !rank.contains_key(mask) {
            return Err(ResponsivenessViolation::MissingSet { set: render(*mask) });
        }
    }

    // Clause: every nonempty set beats the empty set.
    let empty_rank = rank[&0];
    for (&mask, &r) in &rank {
        if mask != 0 && r > empty_rank {
            return Err(ResponsivenessViolation::EmptySetTooHigh { below: render(mask) });
        }
    }

    // Clause: singletons follow the doctor ranking.
    for i in 0..n {
        for j in (i + 1)..n {
            if rank[&(1 << i)] > rank[&(1 << j)] {
                return Err(ResponsivenessViolation::SingletonOrderMismatch {
                    better: pref.individual[i].clone(),
                    worse: pref.individual[j].clone(),
                });
            }
        }
    }

    // Clause: comparisons survive adding a common doctor while both sides
    // stay below capacity.
    let small: Vec<u64> = feasible
        .iter()
        .copied()
        .filter(|m| (m.count_ones() as usize) < cap)
        .collect();
    for (ai, &a) in small.iter().enumerate() {
        for &b in &small[ai + 1..] {
            let base = rank[&a] < rank[&b];
            for d in 0..n {
                let bit = 1u64 << d;
                if a & bit != 0 || b & bit != 0 {
                    continue;
                }
                let lifted = rank[&(a | bit)] < rank[&(b | bit)];
                if lifted != base {
                    let (better, worse) = if base { (a, b) } else { (b, a) };
                    return Err(ResponsivenessViolation::LiftMismatch {
                        base_better: render(better),
                        base_worse: render(worse),
                        added: pref.individual[d].clone(),
                    });
                }
            }
        }
    }
    Ok(())
}
