//! Instance validation: structural checks, preference completeness,
//! responsiveness, and market-shape requirements.

use super::{DoctorId, Hospital, Instance, Placement};
use crate::prefs::{self, HospitalPref, MarginalsError};
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;

/// How strictly to enforce market-shape requirements.
///
/// `Strict` demands the regular market shape (at least two hospitals, four
/// doctors, one couple, every capacity at least two); `Relaxed` downgrades
/// those findings to warnings so deliberately small markets can be studied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    #[default]
    Strict,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One finding, with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

/// All findings for one instance, sorted by severity, code, then message.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    /// True when no error-severity issue was found. Warnings do not block.
    pub fn is_valid(&self) -> bool {
        self.issues.iter().all(|i| i.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn render(&self) -> String {
        if self.issues.is_empty() {
            return "ok".to_string();
        }
        self.issues
            .iter()
            .map(|i| {
                let tag = match i.severity {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                format!("{tag}[{}]: {}", i.code, i.message)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

struct Collector {
    issues: Vec<ValidationIssue>,
}

impl Collector {
    fn error(&mut self, code: &'static str, message: String) {
        self.issues.push(ValidationIssue {
            severity: Severity::Error,
            code,
            message,
        });
    }

    fn warn(&mut self, code: &'static str, message: String) {
        self.issues.push(ValidationIssue {
            severity: Severity::Warning,
            code,
            message,
        });
    }

    fn shape(&mut self, mode: ValidationMode, code: &'static str, message: String) {
        match mode {
            ValidationMode::Strict => self.error(code, message),
            ValidationMode::Relaxed => self.warn(code, message),
        }
    }
}

/// Check an instance document and report every problem found.
///
/// Error-severity issues mean the instance cannot be used by the rest of the
/// crate; market-shape findings are errors in [`ValidationMode::Strict`] and
/// warnings in [`ValidationMode::Relaxed`].
pub fn validate_instance(instance: &Instance, mode: ValidationMode) -> ValidationReport {
    let mut c = Collector { issues: Vec::new() };

    // Hospitals: ids and capacities.
    let mut hospital_ids = BTreeSet::new();
    for h in &instance.hospitals {
        if h.id.0 == "@" {
            c.error(
                "reserved-id",
                "hospital id \"@\" is reserved for the unemployment post".into(),
            );
        }
        if !hospital_ids.insert(h.id.clone()) {
            c.error("duplicate-hospital", format!("hospital id {} appears twice", h.id));
        }
        if h.capacity == 0 {
            c.error("zero-capacity", format!("hospital {} has capacity 0", h.id));
        } else if h.capacity < 2 {
            c.shape(
                mode,
                "capacity-below-two",
                format!("hospital {} has capacity {}, below the regular minimum of 2", h.id, h.capacity),
            );
        }
    }

    // Doctors: singles plus couple members, all distinct.
    let mut doctor_ids: BTreeSet<DoctorId> = BTreeSet::new();
    let mut couple_member_ids: BTreeSet<DoctorId> = BTreeSet::new();
    for d in &instance.singles {
        if !doctor_ids.insert(d.clone()) {
            c.error("duplicate-doctor", format!("doctor id {d} appears twice"));
        }
    }
    let mut couple_ids = BTreeSet::new();
    for couple in &instance.couples {
        if !couple_ids.insert(couple.id.clone()) {
            c.error("duplicate-couple", format!("couple id {} appears twice", couple.id));
        }
        if couple.f == couple.m {
            c.error(
                "couple-self-paired",
                format!("couple {} lists {} as both members", couple.id, couple.f),
            );
            continue;
        }
        for d in [&couple.f, &couple.m] {
            couple_member_ids.insert(d.clone());
            if !doctor_ids.insert(d.clone()) {
                c.error(
                    "duplicate-doctor",
                    format!("doctor id {d} (couple {}) appears twice", couple.id),
                );
            }
        }
    }
    let n_doctors = doctor_ids.len();
    if n_doctors > 64 {
        c.error(
            "too-many-doctors",
            format!("{n_doctors} doctors exceed the supported maximum of 64"),
        );
    }

    // Market shape.
    if instance.hospitals.len() < 2 {
        c.shape(
            mode,
            "too-few-hospitals",
            format!("{} hospital(s), below the regular minimum of 2", instance.hospitals.len()),
        );
    }
    if n_doctors < 4 {
        c.shape(
            mode,
            "too-few-doctors",
            format!("{n_doctors} doctor(s), below the regular minimum of 4"),
        );
    }
    if instance.couples.is_empty() {
        c.shape(mode, "no-couples", "instance has no couples".into());
    }

    // Single doctors' rankings: present, complete, and only for singles.
    let posts: Vec<Placement> = instance
        .hospitals
        .iter()
        .map(|h| Placement::Hospital(h.id.clone()))
        .chain([Placement::Unemployed])
        .collect();
    let post_set: BTreeSet<&Placement> = posts.iter().collect();
    for d in &instance.singles {
        match instance.doctor_orders.get(d) {
            None => c.error("missing-doctor-order", format!("single doctor {d} has no ranking")),
            Some(ranking) => check_placement_permutation(
                &mut c,
                &post_set,
                ranking,
                "doctor-order-malformed",
                &format!("ranking of doctor {d}"),
            ),
        }
    }
    for d in instance.doctor_orders.keys() {
        if couple_member_ids.contains(d) {
            c.error(
                "couple-member-doctor-order",
                format!("doctor {d} belongs to a couple; couple members rank through pair_order"),
            );
        } else if !instance.singles.contains(d) {
            c.error("unknown-doctor", format!("doctor_orders lists unknown doctor {d}"));
        }
    }

    // Couples' pair rankings: complete and responsive.
    let hospital_list: Vec<_> = instance.hospitals.iter().map(|h| h.id.clone()).collect();
    for couple in &instance.couples {
        if couple.f == couple.m {
            continue;
        }
        match prefs::derive_marginals(&couple.pair_order, &hospital_list) {
            Ok(_) => {}
            Err(e @ MarginalsError::NotAPermutation { .. }) => {
                c.error("pair-order-malformed", format!("couple {}: {e}", couple.id));
            }
            Err(e @ MarginalsError::Conflict(_)) => {
                c.error("couple-not-responsive", format!("couple {}: {e}", couple.id));
            }
        }
    }

    // Hospitals' doctor and set rankings.
    for h in &instance.hospitals {
        validate_hospital_orders(&mut c, h, &doctor_ids);
    }

    c.issues.sort_by(|a, b| {
        (a.severity, a.code, &a.message).cmp(&(b.severity, b.code, &b.message))
    });
    ValidationReport { issues: c.issues }
}

fn check_placement_permutation(
    c: &mut Collector,
    posts: &BTreeSet<&Placement>,
    ranking: &[Placement],
    code: &'static str,
    what: &str,
) {
    let mut seen = BTreeSet::new();
    for p in ranking {
        if !posts.contains(p) {
            c.error(code, format!("{what} mentions unknown post {p}"));
        }
        if !seen.insert(p) {
            c.error(code, format!("{what} lists post {p} twice"));
        }
    }
    if seen.len() != posts.len() {
        for p in posts {
            if !seen.contains(*p) {
                c.error(code, format!("{what} omits post {p}"));
            }
        }
    }
}

fn validate_hospital_orders(c: &mut Collector, h: &Hospital, doctors: &BTreeSet<DoctorId>) {
    let mut acceptable = BTreeSet::new();
    let mut structural_ok = true;
    for d in &h.individual_order {
        if !doctors.contains(d) {
            c.error(
                "unknown-doctor",
                format!("hospital {} ranks unknown doctor {d}", h.id),
            );
            structural_ok = false;
        }
        if !acceptable.insert(d.clone()) {
            c.error(
                "individual-order-malformed",
                format!("hospital {} ranks doctor {d} twice", h.id),
            );
            structural_ok = false;
        }
    }

    // Keep the feasible-set ground tractable before enumerating it below.
    let ground: u128 = (0..=h.capacity.min(acceptable.len() as u32))
        .map(|k| binomial(acceptable.len() as u64, k as u64))
        .sum();
    if ground > 100_000 {
        c.error(
            "set-ground-too-large",
            format!(
                "hospital {} has {ground} feasible doctor sets; set orders above 100000 sets are unsupported",
                h.id
            ),
        );
        return;
    }

    fn check_side(
        c: &mut Collector,
        h: &Hospital,
        acceptable: &BTreeSet<DoctorId>,
        side: &[DoctorId],
        which: &str,
    ) -> Option<BTreeSet<DoctorId>> {
        let set: BTreeSet<DoctorId> = side.iter().cloned().collect();
        if set.len() != side.len() {
            c.error(
                "set-constraint-malformed",
                format!("hospital {}: {which} side repeats a doctor", h.id),
            );
            return None;
        }
        if set.len() > h.capacity as usize {
            c.error(
                "set-constraint-malformed",
                format!(
                    "hospital {}: {which} side has {} doctors, above capacity {}",
                    h.id,
                    set.len(),
                    h.capacity
                ),
            );
            return None;
        }
        for d in &set {
            if !acceptable.contains(d) {
                c.error(
                    "set-constraint-malformed",
                    format!("hospital {}: {which} side doctor {d} is not acceptable to it", h.id),
                );
                return None;
            }
        }
        Some(set)
    }
    let mut constraint_pairs = Vec::new();
    for sc in &h.set_constraints {
        let better = check_side(c, h, &acceptable, sc.better(), "better");
        let worse = check_side(c, h, &acceptable, sc.worse(), "worse");
        if let (Some(b), Some(w)) = (better, worse) {
            if b == w {
                c.error(
                    "set-constraint-malformed",
                    format!("hospital {}: a set constraint compares a set with itself", h.id),
                );
            } else {
                constraint_pairs.push((b, w));
            }
        }
    }

    if !structural_ok {
        return;
    }

    if let Some(pref) = HospitalPref::from_hospital(h) {
        match prefs::check_hospital_responsive(&pref) {
            Ok(()) => {}
            Err(v) => {
                let code = if v.is_structural() {
                    "set-order-malformed"
                } else {
                    "set-order-not-responsive"
                };
                c.error(code, format!("hospital {}: {v}", h.id));
            }
        }
        // The explicit order must honor any declared constraints.
        let position = |set: &BTreeSet<DoctorId>| pref.sets.iter().position(|s| s == set);
        for (b, w) in &constraint_pairs {
            if let (Some(rb), Some(rw)) = (position(b), position(w)) {
                if rb >= rw {
                    c.error(
                        "set-constraint-violated",
                        format!(
                            "hospital {}: set order ranks {{{}}} no higher than {{{}}} but a constraint requires it above",
                            h.id,
                            join(b),
                            join(w)
                        ),
                    );
                }
            }
        }
    }
}

fn join(set: &BTreeSet<DoctorId>) -> String {
    set.iter().map(|d| d.0.as_str()).collect::<Vec<_>>().join(", ")
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let mut out: u128 = 1;
    for i in 0..k.min(n - k) {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Couple, CoupleId, HospitalId};

    fn tiny_instance() -> Instance {
        // One hospital, capacity 2, two singles and one couple.
        let h1 = HospitalId::new("h1");
        let mk = |s: &str| DoctorId::new(s);
        let at = Placement::Unemployed;
        let ph1 = Placement::Hospital(h1.clone());
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
            doctor_orders: [
                (mk("d1"), vec![ph1.clone(), at.clone()]),
                (mk("d2"), vec![ph1, at]),
            ]
            .into_iter()
            .collect(),
        }
    }

    #[test]
    fn tiny_instance_passes_relaxed_fails_strict() {
        let inst = tiny_instance();
        let relaxed = validate_instance(&inst, ValidationMode::Relaxed);
        assert!(relaxed.is_valid(), "{relaxed}");
        assert!(relaxed.issues.iter().any(|i| i.code == "too-few-hospitals"));
        let strict = validate_instance(&inst, ValidationMode::Strict);
        assert!(!strict.is_valid());
    }

    #[test]
    fn detects_missing_and_duplicate_entries() {
        let mut inst = tiny_instance();
        inst.doctor_orders.remove(&DoctorId::new("d2"));
        inst.singles.push(DoctorId::new("d1"));
        let report = validate_instance(&inst, ValidationMode::Relaxed);
        assert!(!report.is_valid());
        let codes: Vec<_> = report.errors().map(|i| i.code).collect();
        assert!(codes.contains(&"missing-doctor-order"));
        assert!(codes.contains(&"duplicate-doctor"));
    }

    #[test]
    fn rejects_couple_member_in_doctor_orders() {
        let mut inst = tiny_instance();
        inst.doctor_orders.insert(
            DoctorId::new("f"),
            vec![Placement::hospital("h1"), Placement::Unemployed],
        );
        let report = validate_instance(&inst, ValidationMode::Relaxed);
        assert!(report
            .errors()
            .any(|i| i.code == "couple-member-doctor-order"));
    }

    #[test]
    fn rejects_incomplete_pair_order() {
        let mut inst = tiny_instance();
        inst.couples[0].pair_order.pop();
        let report = validate_instance(&inst, ValidationMode::Relaxed);
        assert!(report.errors().any(|i| i.code == "pair-order-malformed"));
    }
}
