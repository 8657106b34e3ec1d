//! Market model: hospitals, doctors, couples, matchings, and the JSON
//! document format.
//!
//! An [`Instance`] describes one matching market. Hospitals rank the doctors
//! they find acceptable (`individual_order`, best first) and may carry a
//! complete ranking of feasible doctor sets (`set_order`). When `set_order`
//! is omitted the instance describes a *family* of markets — one per
//! responsive completion — and operations that need concrete set rankings
//! either report [`ModelError::MissingSetOrder`] or are run after
//! [`crate::prefs::concretize`].
//!
//! Unemployment is a dummy post written `"@"` in documents. It accepts every
//! doctor, has unbounded effective capacity, and is indifferent between
//! doctors; it is a valid entry anywhere a hospital id may appear in a
//! preference list.

pub(crate) mod enumerate;
mod validate;

pub use enumerate::feasible_matchings;
pub use validate::{
    validate_instance, Severity, ValidationIssue, ValidationMode, ValidationReport,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Identifier of a real hospital. The string `"@"` is reserved for the
/// unemployment post and is rejected by validation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HospitalId(pub String);

/// Identifier of a doctor (single or couple member).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DoctorId(pub String);

/// Identifier of a couple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoupleId(pub String);

impl HospitalId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}
impl DoctorId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}
impl CoupleId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for HospitalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
impl fmt::Display for DoctorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
impl fmt::Display for CoupleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A post a doctor can hold: a real hospital or the unemployment post.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placement {
    Hospital(HospitalId),
    Unemployed,
}

impl Placement {
    pub fn hospital(id: impl Into<String>) -> Self {
        Placement::Hospital(HospitalId::new(id))
    }

    pub fn as_hospital(&self) -> Option<&HospitalId> {
        match self {
            Placement::Hospital(h) => Some(h),
            Placement::Unemployed => None,
        }
    }

    pub fn is_unemployed(&self) -> bool {
        matches!(self, Placement::Unemployed)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Hospital(h) => f.write_str(&h.0),
            Placement::Unemployed => f.write_str("@"),
        }
    }
}

impl Serialize for Placement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Placement::Hospital(h) => s.serialize_str(&h.0),
            Placement::Unemployed => s.serialize_str("@"),
        }
    }
}

impl<'de> Deserialize<'de> for Placement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "@" {
            Placement::Unemployed
        } else {
            Placement::Hospital(HospitalId(s))
        })
    }
}

/// One required comparison between two doctor sets: the first set must rank
/// strictly above the second in any completion of the hospital's set order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetConstraint(pub Vec<DoctorId>, pub Vec<DoctorId>);

impl SetConstraint {
    pub fn better(&self) -> &[DoctorId] {
        &self.0
    }
    pub fn worse(&self) -> &[DoctorId] {
        &self.1
    }
}

/// A hospital: capacity, ranking of acceptable doctors, and (optionally) a
/// complete responsive ranking of feasible doctor sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hospital {
    pub id: HospitalId,
    pub capacity: u32,
    /// Acceptable doctors, best first. Doctors not listed are unacceptable.
    pub individual_order: Vec<DoctorId>,
    /// Complete strict ranking, best first, of every subset of
    /// `individual_order` with at most `capacity` members (including the
    /// empty set). Optional: omitted orders leave the instance a family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_order: Option<Vec<Vec<DoctorId>>>,
    /// Extra comparisons any completion of the set order must honor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_constraints: Vec<SetConstraint>,
}

/// A couple: two distinct doctors and a complete strict ranking of post
/// pairs. The first pair coordinate is `f`'s post, the second is `m`'s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Couple {
    pub id: CoupleId,
    pub f: DoctorId,
    pub m: DoctorId,
    /// All `(|H|+1)²` post pairs, best first.
    pub pair_order: Vec<(Placement, Placement)>,
}

/// A complete market instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub hospitals: Vec<Hospital>,
    pub singles: Vec<DoctorId>,
    pub couples: Vec<Couple>,
    /// For each single doctor, a complete strict ranking of the real
    /// hospitals and `"@"`. Couple members rank through `pair_order` only.
    pub doctor_orders: BTreeMap<DoctorId, Vec<Placement>>,
}

impl Instance {
    /// All doctors in document order: singles first, then each couple's
    /// members in couple order (`f` before `m`). This order fixes the
    /// deterministic iteration order used throughout the crate.
    pub fn doctors(&self) -> Vec<DoctorId> {
        let mut out: Vec<DoctorId> = self.singles.clone();
        for c in &self.couples {
            out.push(c.f.clone());
            out.push(c.m.clone());
        }
        out
    }

    pub fn hospital(&self, id: &HospitalId) -> Option<&Hospital> {
        self.hospitals.iter().find(|h| &h.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }
}

/// An assignment of every doctor to a post. Serialized as a plain JSON map
/// from doctor id to hospital id or `"@"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching {
    pub assignment: BTreeMap<DoctorId, Placement>,
}

impl Matching {
    pub fn placement_of(&self, d: &DoctorId) -> Option<&Placement> {
        self.assignment.get(d)
    }

    /// Doctors assigned to `post`, in id order.
    pub fn assigned_to(&self, post: &Placement) -> BTreeSet<DoctorId> {
        self.assignment
            .iter()
            .filter(|(_, p)| *p == post)
            .map(|(d, _)| d.clone())
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matching serialization cannot fail")
    }
}

/// Errors reported by operations that take whole instances or matchings.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ModelError {
    #[error("instance failed validation:\n{0}")]
    Invalid(String),
    #[error("hospital {0} has no set order; provide one or concretize the instance first")]
    MissingSetOrder(HospitalId),
    #[error("matching is not valid for this instance: {0}")]
    BadMatching(String),
    #[error("search space cap of {cap} exceeded")]
    CapExceeded { cap: u64 },
}

/// Default cap on brute-force matching enumeration, overridable through the
/// `MATCHING_CAP` environment variable.
pub fn matching_cap() -> u64 {
    std::env::var("MATCHING_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(10_000_000)
}

/// Default cap on linear-extension enumeration, overridable through the
/// `EXTENSION_CAP` environment variable.
pub fn extension_cap() -> u64 {
    std::env::var("EXTENSION_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(100_000)
}

// ---------------------------------------------------------------------------
// Compiled index view
// ---------------------------------------------------------------------------

/// Role of a doctor within the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Single,
    /// First member of couple `cx`.
    CoupleF(usize),
    /// Second member of couple `cx`.
    CoupleM(usize),
}

/// Index-based view of a validated instance. Doctors and hospitals are dense
/// indices (document order); the unemployment post is hospital index `n_h`.
/// Doctor sets are bitmasks over doctor indices, which caps supported
/// instances at 64 doctors.
pub(crate) struct Compiled {
    pub hospital_ids: Vec<HospitalId>,
    pub doctor_ids: Vec<DoctorId>,
    pub couple_ids: Vec<CoupleId>,
    /// Number of real hospitals; `n_h` itself is the unemployment post.
    pub n_h: usize,
    pub caps: Vec<u32>,
    pub roles: Vec<Role>,
    /// Couple index -> (f doctor index, m doctor index).
    pub couple_members: Vec<(usize, usize)>,
    /// Doctor -> post -> rank, 0 best. Couple members hold their derived
    /// marginal ranking.
    pub pref_rank: Vec<Vec<u32>>,
    /// Doctor -> posts, best first.
    pub pref_order: Vec<Vec<usize>>,
    /// Couple -> pair index (`a * (n_h+1) + b`) -> rank, 0 best.
    pub pair_rank: Vec<Vec<u32>>,
    /// Hospital -> bitmask of acceptable doctors.
    pub acceptable: Vec<u64>,
    /// Hospital -> doctor -> rank in the individual order (None:
    /// unacceptable).
    pub ind_rank: Vec<Vec<Option<u32>>>,
    /// Hospital -> doctor-set mask -> rank in the set order, 0 best.
    /// `None` when the document omits the hospital's set order.
    pub set_rank: Vec<Option<BTreeMap<u64, u32>>>,
}

impl Compiled {
    pub fn posts(&self) -> usize {
        self.n_h + 1
    }

    pub fn dummy(&self) -> usize {
        self.n_h
    }

    pub fn pair_ix(&self, a: usize, b: usize) -> usize {
        a * self.posts() + b
    }

    pub fn doctor_ix(&self, id: &DoctorId) -> Option<usize> {
        self.doctor_ids.iter().position(|d| d == id)
    }

    pub fn hospital_ix(&self, id: &HospitalId) -> Option<usize> {
        self.hospital_ids.iter().position(|h| h == id)
    }

    pub fn post_ix(&self, p: &Placement) -> Option<usize> {
        match p {
            Placement::Unemployed => Some(self.dummy()),
            Placement::Hospital(h) => self.hospital_ix(h),
        }
    }

    pub fn post_of(&self, ix: usize) -> Placement {
        if ix == self.dummy() {
            Placement::Unemployed
        } else {
            Placement::Hospital(self.hospital_ids[ix].clone())
        }
    }

    /// True when doctor `d` is acceptable to real hospital `h`.
    pub fn is_acceptable(&self, h: usize, d: usize) -> bool {
        self.acceptable[h] & (1 << d) != 0
    }

    /// Members of `mask` in index order.
    pub fn mask_doctors(&self, mask: u64) -> Vec<usize> {
        (0..self.doctor_ids.len())
            .filter(|d| mask & (1 << d) != 0)
            .collect()
    }

    /// Compare two feasible doctor sets for hospital `h`. Returns true when
    /// `a` is strictly preferred to `b`. Sets containing unacceptable
    /// doctors rank below the empty set and are mutually incomparable, so
    /// such an `a` is never preferred and such a `b` loses to any acceptable
    /// `a`.
    pub fn set_prefers(&self, h: usize, a: u64, b: u64) -> bool {
        if a == b {
            return false;
        }
        let ok_a = a & !self.acceptable[h] == 0;
        let ok_b = b & !self.acceptable[h] == 0;
        match (ok_a, ok_b) {
            (true, false) => true,
            (false, _) => false,
            (true, true) => {
                let ranks = self.set_rank[h]
                    .as_ref()
                    .expect("set_prefers requires a concrete set order");
                ranks[&a] < ranks[&b]
            }
        }
    }

    /// Convert a matching into post indices, doctor by doctor, verifying
    /// exact doctor coverage and hospital capacities.
    pub fn index_matching(&self, m: &Matching) -> Result<Vec<u8>, ModelError> {
        let mut out = vec![0u8; self.doctor_ids.len()];
        let mut seen = 0usize;
        for (d, p) in &m.assignment {
            let dx = self
                .doctor_ix(d)
                .ok_or_else(|| ModelError::BadMatching(format!("unknown doctor {d}")))?;
            let px = self
                .post_ix(p)
                .ok_or_else(|| ModelError::BadMatching(format!("unknown hospital {p}")))?;
            out[dx] = px as u8;
            seen += 1;
        }
        if seen != self.doctor_ids.len() {
            return Err(ModelError::BadMatching(format!(
                "matching covers {seen} of {} doctors",
                self.doctor_ids.len()
            )));
        }
        for h in 0..self.n_h {
            let load = out.iter().filter(|&&p| p as usize == h).count();
            if load > self.caps[h] as usize {
                return Err(ModelError::BadMatching(format!(
                    "hospital {} holds {load} doctors, capacity {}",
                    self.hospital_ids[h], self.caps[h]
                )));
            }
        }
        Ok(out)
    }

    /// Doctors matched to post `p` under the indexed matching, as a bitmask.
    pub fn matched_mask(&self, matching: &[u8], p: usize) -> u64 {
        let mut mask = 0u64;
        for (d, &q) in matching.iter().enumerate() {
            if q as usize == p {
                mask |= 1 << d;
            }
        }
        mask
    }

    pub fn export_matching(&self, matching: &[u8]) -> Matching {
        let assignment = matching
            .iter()
            .enumerate()
            .map(|(d, &p)| (self.doctor_ids[d].clone(), self.post_of(p as usize)))
            .collect();
        Matching { assignment }
    }

    /// Build the index view of `instance`, first confirming that relaxed
    /// validation reports no errors. `need_set_orders` additionally demands
    /// a concrete set order on every hospital.
    pub fn build(instance: &Instance, need_set_orders: bool) -> Result<Compiled, ModelError> {
        let report = validate_instance(instance, ValidationMode::Relaxed);
        if !report.is_valid() {
            return Err(ModelError::Invalid(report.render()));
        }

        let hospital_ids: Vec<HospitalId> = instance.hospitals.iter().map(|h| h.id.clone()).collect();
        let n_h = hospital_ids.len();
        let posts = n_h + 1;
        let doctor_ids = instance.doctors();
        let n_d = doctor_ids.len();
        let caps: Vec<u32> = instance.hospitals.iter().map(|h| h.capacity).collect();

        let dix: BTreeMap<&DoctorId, usize> =
            doctor_ids.iter().enumerate().map(|(i, d)| (d, i)).collect();
        let hix: BTreeMap<&HospitalId, usize> =
            hospital_ids.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let post_ix = |p: &Placement| -> usize {
            match p {
                Placement::Unemployed => n_h,
                Placement::Hospital(h) => hix[h],
            }
        };

        let mut roles = vec![Role::Single; n_d];
        let mut couple_members = Vec::new();
        let mut couple_ids = Vec::new();
        for (cx, c) in instance.couples.iter().enumerate() {
            let fx = dix[&c.f];
            let mx = dix[&c.m];
            roles[fx] = Role::CoupleF(cx);
            roles[mx] = Role::CoupleM(cx);
            couple_members.push((fx, mx));
            couple_ids.push(c.id.clone());
        }

        let mut pref_rank = vec![Vec::new(); n_d];
        let mut pref_order = vec![Vec::new(); n_d];
        for (d, ranking) in &instance.doctor_orders {
            let dxi = dix[d];
            let order: Vec<usize> = ranking.iter().map(&post_ix).collect();
            let mut rank = vec![0u32; posts];
            for (r, &p) in order.iter().enumerate() {
                rank[p] = r as u32;
            }
            pref_order[dxi] = order;
            pref_rank[dxi] = rank;
        }

        let mut pair_rank = Vec::new();
        for (cx, c) in instance.couples.iter().enumerate() {
            let mut rank = vec![0u32; posts * posts];
            for (r, (a, b)) in c.pair_order.iter().enumerate() {
                rank[post_ix(a) * posts + post_ix(b)] = r as u32;
            }
            pair_rank.push(rank);

            // Marginal orders: the best pair mentioning a given post in a
            // given coordinate appears in marginal order, so a first-seen
            // scan recovers each member's ranking of posts.
            let (fx, mx) = couple_members[cx];
            let mut f_order = Vec::new();
            let mut m_order = Vec::new();
            for (a, b) in &c.pair_order {
                let (ai, bi) = (post_ix(a), post_ix(b));
                if !f_order.contains(&ai) {
                    f_order.push(ai);
                }
                if !m_order.contains(&bi) {
                    m_order.push(bi);
                }
            }
            for (dxi, order) in [(fx, f_order), (mx, m_order)] {
                let mut rank = vec![0u32; posts];
                for (r, &p) in order.iter().enumerate() {
                    rank[p] = r as u32;
                }
                pref_order[dxi] = order;
                pref_rank[dxi] = rank;
            }
        }

        let mut acceptable = vec![0u64; n_h];
        let mut ind_rank = vec![vec![None; n_d]; n_h];
        let mut set_rank = Vec::with_capacity(n_h);
        for (h, hosp) in instance.hospitals.iter().enumerate() {
            for (r, d) in hosp.individual_order.iter().enumerate() {
                let dxi = dix[d];
                acceptable[h] |= 1 << dxi;
                ind_rank[h][dxi] = Some(r as u32);
            }
            match &hosp.set_order {
                None => {
                    if need_set_orders {
                        return Err(ModelError::MissingSetOrder(hosp.id.clone()));
                    }
                    set_rank.push(None);
                }
                Some(sets) => {
                    let mut ranks = BTreeMap::new();
                    for (r, set) in sets.iter().enumerate() {
                        let mut mask = 0u64;
                        for d in set {
                            mask |= 1 << dix[d];
                        }
                        ranks.insert(mask, r as u32);
                    }
                    set_rank.push(Some(ranks));
                }
            }
        }

        Ok(Compiled {
            hospital_ids,
            doctor_ids,
            couple_ids,
            n_h,
            caps,
            roles,
            couple_members,
            pref_rank,
            pref_order,
            pair_rank,
            acceptable,
            ind_rank,
            set_rank,
        })
    }
}

/// Enumerate every subset of `ground` (a bitmask) with at most `max_size`
/// members, in (size, mask) order starting from the empty set. Grows sets
/// size by size, so large grounds stay cheap as long as the output is small;
/// validation caps the output well below the internal guard.
pub(crate) fn feasible_subsets(ground: u64, max_size: u32) -> Vec<u64> {
    let bits: Vec<u64> = (0..64)
        .filter(|b| ground & (1u64 << b) != 0)
        .map(|b| 1u64 << b)
        .collect();
    let mut out = vec![0u64];
    // (mask, index of its highest chosen bit in `bits`).
    let mut frontier: Vec<(u64, Option<usize>)> = vec![(0, None)];
    for _size in 1..=max_size {
        let mut next = Vec::new();
        for &(mask, last) in &frontier {
            let start = last.map_or(0, |l| l + 1);
            for (i, bit) in bits.iter().enumerate().skip(start) {
                next.push((mask | bit, Some(i)));
            }
        }
        let mut masks: Vec<u64> = next.iter().map(|&(m, _)| m).collect();
        masks.sort_unstable();
        assert!(
            out.len() + masks.len() <= 200_000,
            "feasible subset enumeration exceeded the supported ground size"
        );
        out.extend(masks);
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_round_trips_through_json() {
        let p = Placement::hospital("h1");
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "\"h1\"");
        assert_eq!(serde_json::from_str::<Placement>(&s).unwrap(), p);
        let u = Placement::Unemployed;
        let s = serde_json::to_string(&u).unwrap();
        assert_eq!(s, "\"@\"");
        assert_eq!(serde_json::from_str::<Placement>(&s).unwrap(), u);
    }

    #[test]
    fn feasible_subsets_counts_small_grounds() {
        // Four doctors, sets of size at most two: 1 + 4 + 6.
        assert_eq!(feasible_subsets(0b1111, 2).len(), 11);
        assert_eq!(feasible_subsets(0b1111, 0), vec![0]);
        // Size groups come out in (size, mask) order.
        let sets = feasible_subsets(0b0111, 2);
        assert_eq!(sets, vec![0b000, 0b001, 0b010, 0b100, 0b011, 0b101, 0b110]);
    }
}
