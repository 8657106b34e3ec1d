//! Budgeted re-verification of the library's headline properties.
//!
//! Each claim names one property this crate relies on — the behaviour of the
//! reference families, the two stability guarantees, the two impossibility
//! constructions, and the procedural guarantees of deferred acceptance — and
//! [`verify_claim`] re-checks it over a deterministic sweep of instances.
//! Reports are plain data (serialisable, no timestamps), so a fixed claim,
//! budget, and seed always produce byte-identical output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dpda::{
    hospital_choice, run_dpda, run_dpda_sequential, verify_dpda_rejection_property, Trace,
};
use crate::model::{
    feasible_matchings, validate_instance, Compiled, DoctorId, Instance, Matching, Placement,
    ValidationMode,
};
use crate::prefs::{
    check_diversity_aversion, check_extreme_altruism, couple_pair_poset, derive_marginals,
    hospital_set_poset, DoctorPref, PosetError,
};
use crate::stability::{enumerate_stable, find_blocks, is_stable, Block};
use crate::theorems::builders::{
    counterexample_from_altruism_violation, counterexample_from_diversity_violation,
};
use crate::theorems::examples::{
    crowding_market, crowding_market_outcome, SplitCoupleFamily, ThreeHospitalFamily,
};
use crate::theorems::gen::{
    random_altruism_violating_market, random_altruistic_market, random_averse_market,
    random_diversity_violating_market, random_market,
};

/// The verifiable claims, named by what they check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimId {
    ThreeHospitalExample,
    FrozenCounts,
    AltruisticCouplesStable,
    AltruismViolationUnstable,
    AverseHospitalsStable,
    AversionViolationUnstable,
    SplitCoupleExample,
    ProcedureProperties,
}

impl ClaimId {
    pub const ALL: [ClaimId; 8] = [
        ClaimId::ThreeHospitalExample,
        ClaimId::FrozenCounts,
        ClaimId::AltruisticCouplesStable,
        ClaimId::AltruismViolationUnstable,
        ClaimId::AverseHospitalsStable,
        ClaimId::AversionViolationUnstable,
        ClaimId::SplitCoupleExample,
        ClaimId::ProcedureProperties,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClaimId::ThreeHospitalExample => "three-hospital-example",
            ClaimId::FrozenCounts => "frozen-counts",
            ClaimId::AltruisticCouplesStable => "altruistic-couples-stable",
            ClaimId::AltruismViolationUnstable => "altruism-violation-unstable",
            ClaimId::AverseHospitalsStable => "averse-hospitals-stable",
            ClaimId::AversionViolationUnstable => "aversion-violation-unstable",
            ClaimId::SplitCoupleExample => "split-couple-example",
            ClaimId::ProcedureProperties => "procedure-properties",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ClaimId::ThreeHospitalExample => {
                "deferred acceptance on the three-hospital reference family always lands on \
                 the same matching, which the couple then undermines by crowding into h1"
            }
            ClaimId::FrozenCounts => {
                "exact counts for the small reference objects: couple completion grids have \
                 2 and 42 responsive completions, the crowding market has 11 feasible \
                 matchings and no stable one"
            }
            ClaimId::AltruisticCouplesStable => {
                "when every couple defers to its better-off member, the deferred-acceptance \
                 outcome is stable under every sampled hospital set-order completion"
            }
            ClaimId::AltruismViolationUnstable => {
                "every market violating extreme altruism seeds a crowding construction whose \
                 output admits no stable matching"
            }
            ClaimId::AverseHospitalsStable => {
                "when every hospital ranks sets worst-member-first, the deferred-acceptance \
                 outcome is stable under every sampled couple joint-ranking completion"
            }
            ClaimId::AversionViolationUnstable => {
                "every market violating aversion to couple diversity seeds a team \
                 construction whose output admits no stable matching"
            }
            ClaimId::SplitCoupleExample => {
                "the split-couple family stays stable across all tail orders, couple \
                 completions, and hospital set-order completions, although h1 prefers the \
                 couple to its singles"
            }
            ClaimId::ProcedureProperties => {
                "procedural guarantees of deferred acceptance on random markets: justified \
                 rejections, monotone holds, order independence, greedy-optimal hospital \
                 choices, and couple-crowding-only blocks"
            }
        }
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClaimId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClaimId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ClaimId::ALL.iter().map(|c| c.name()).collect();
                format!("unknown claim {s:?}; expected one of: {}", names.join(", "))
            })
    }
}

/// How much work a verification may spend. `None` fields fall back to the
/// claim's own default.
#[derive(Debug, Clone, Copy, Default)]
pub struct Budget {
    /// Instances to sweep (for the family claim: completions per marginal
    /// combination).
    pub instances: Option<u64>,
    /// Preference completions per instance, where the claim samples any.
    pub extensions: Option<u64>,
}

/// How the sweep ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    /// Every check passed and the sweep covered the claim's whole grid.
    Verified,
    /// Every check passed on a sampled portion of an unbounded grid.
    SampledVerified { samples: u64 },
    Failed,
}

/// One failed check, with enough data to reproduce it.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub context: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<Instance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matching: Option<Matching>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<Block>,
}

impl Failure {
    fn new(context: impl Into<String>) -> Self {
        Failure {
            context: context.into(),
            instance: None,
            matching: None,
            block: None,
        }
    }

    fn with_instance(mut self, instance: &Instance) -> Self {
        self.instance = Some(instance.clone());
        self
    }

    fn with_matching(mut self, matching: &Matching) -> Self {
        self.matching = Some(matching.clone());
        self
    }

    fn with_block(mut self, block: &Block) -> Self {
        self.block = Some(block.clone());
        self
    }
}

/// The result of verifying one claim.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub claim: ClaimId,
    pub instances_checked: u64,
    pub extensions_checked: u64,
    pub outcome: Outcome,
    /// At most five failures are kept; the sweep stops once that many
    /// accumulate.
    pub failures: Vec<Failure>,
    pub detail: String,
}

impl WitnessReport {
    pub fn passed(&self) -> bool {
        !matches!(self.outcome, Outcome::Failed)
    }

    /// One human-readable line, plus failure contexts when there are any.
    pub fn render(&self) -> String {
        let verdict = match self.outcome {
            Outcome::Verified => "pass".to_string(),
            Outcome::SampledVerified { samples } => format!("pass ({samples} samples)"),
            Outcome::Failed => "FAIL".to_string(),
        };
        let mut out = format!(
            "claim {}: {verdict} — {} instances, {} extensions checked; {}",
            self.claim, self.instances_checked, self.extensions_checked, self.detail
        );
        for f in &self.failures {
            out.push_str(&format!("\n  failure: {}", f.context));
        }
        out
    }
}

/// Bounded failure collection shared by all sweeps.
struct Tally {
    instances: u64,
    extensions: u64,
    failures: Vec<Failure>,
}

impl Tally {
    const MAX_FAILURES: usize = 5;

    fn new() -> Self {
        Tally {
            instances: 0,
            extensions: 0,
            failures: Vec::new(),
        }
    }

    /// Record a failure; returns whether the sweep should continue.
    fn fail(&mut self, failure: Failure) -> bool {
        self.failures.push(failure);
        self.failures.len() < Self::MAX_FAILURES
    }

    fn done(self, claim: ClaimId, sampled: bool, detail: impl Into<String>) -> WitnessReport {
        let outcome = if !self.failures.is_empty() {
            Outcome::Failed
        } else if sampled {
            Outcome::SampledVerified {
                samples: self.instances.max(self.extensions),
            }
        } else {
            Outcome::Verified
        };
        WitnessReport {
            claim,
            instances_checked: self.instances,
            extensions_checked: self.extensions,
            outcome,
            failures: self.failures,
            detail: detail.into(),
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(a.wrapping_mul(0x85EB_CA6B))
        .wrapping_add(b.wrapping_mul(0xC2B2_AE35))
}

/// Re-check one claim under the given budget. `seed` offsets every random
/// sweep, so different seeds explore different instances while identical
/// arguments reproduce identical reports.
pub fn verify_claim(claim: ClaimId, budget: &Budget, seed: u64) -> WitnessReport {
    match claim {
        ClaimId::ThreeHospitalExample => verify_three_hospital_example(budget, seed),
        ClaimId::FrozenCounts => verify_frozen_counts(),
        ClaimId::AltruisticCouplesStable => verify_altruistic_couples_stable(budget, seed),
        ClaimId::AltruismViolationUnstable => {
            verify_violation_unstable(ClaimId::AltruismViolationUnstable, budget, seed)
        }
        ClaimId::AverseHospitalsStable => verify_averse_hospitals_stable(budget, seed),
        ClaimId::AversionViolationUnstable => {
            verify_violation_unstable(ClaimId::AversionViolationUnstable, budget, seed)
        }
        ClaimId::SplitCoupleExample => verify_split_couple_example(budget, seed),
        ClaimId::ProcedureProperties => verify_procedure_properties(budget, seed),
    }
}

/// Verify every claim in order with one shared budget.
pub fn verify_all(budget: &Budget, seed: u64) -> Vec<WitnessReport> {
    ClaimId::ALL
        .into_iter()
        .map(|c| verify_claim(c, budget, seed))
        .collect()
}

// ---------------------------------------------------------------------------
// Claim 1: the three-hospital family
// ---------------------------------------------------------------------------

fn check_family_member(
    inst: &Instance,
    expected: &Matching,
    expected_blocks: &[Block],
    witness: &crate::prefs::AltruismViolation,
) -> Result<(), Failure> {
    if !validate_instance(inst, ValidationMode::Strict).is_valid() {
        return Err(Failure::new("family member failed strict validation").with_instance(inst));
    }
    match enumerate_stable(inst, 4_096) {
        Ok(stable) if stable.is_empty() => {}
        Ok(stable) => {
            return Err(Failure::new(format!(
                "family member admits {} stable matching(s)",
                stable.len()
            ))
            .with_instance(inst)
            .with_matching(&stable[0]));
        }
        Err(e) => {
            return Err(Failure::new(format!("brute-force enumeration failed: {e}")));
        }
    }
    let (matching, _) =
        run_dpda(inst).map_err(|e| Failure::new(format!("deferred acceptance failed: {e}")))?;
    if &matching != expected {
        return Err(Failure::new("deferred acceptance diverged from the family outcome")
            .with_instance(inst)
            .with_matching(&matching));
    }
    let blocks = find_blocks(&matching, inst)
        .map_err(|e| Failure::new(format!("block search failed: {e}")))?;
    if blocks != expected_blocks {
        let mut failure = Failure::new(format!(
            "expected exactly the couple-crowding block, found {} block(s)",
            blocks.len()
        ))
        .with_instance(inst)
        .with_matching(&matching);
        if let Some(b) = blocks.first() {
            failure = failure.with_block(b);
        }
        return Err(failure);
    }
    let violations = check_extreme_altruism(inst)
        .map_err(|e| Failure::new(format!("altruism check failed: {e}")))?;
    if !violations.contains(witness) {
        return Err(
            Failure::new("the couple's altruism failure was not reported").with_instance(inst)
        );
    }
    Ok(())
}

fn verify_three_hospital_example(budget: &Budget, seed: u64) -> WitnessReport {
    let per_combo = budget.instances.unwrap_or(17);
    let expected = ThreeHospitalFamily::expected_matching();
    let expected_blocks = ThreeHospitalFamily::expected_blocks();
    let witness = ThreeHospitalFamily::expected_altruism_witness();
    let mut t = Tally::new();
    'sweep: for (f_marg, m_marg) in ThreeHospitalFamily::marginal_combos() {
        for s in 0..per_combo {
            t.instances += 1;
            let inst = match ThreeHospitalFamily::instance(&f_marg, &m_marg, seed.wrapping_add(s))
            {
                Ok(i) => i,
                Err(e) => {
                    if !t.fail(Failure::new(format!("completion sampling failed: {e}"))) {
                        break 'sweep;
                    }
                    continue;
                }
            };
            if let Err(f) = check_family_member(&inst, &expected, &expected_blocks, &witness) {
                if !t.fail(f) {
                    break 'sweep;
                }
            }
        }
    }
    t.done(
        ClaimId::ThreeHospitalExample,
        true,
        "all six marginal combinations, sampled preference completions each: no stable \
         matching by brute force, same deferred-acceptance outcome, same single crowding \
         block, altruism failure reported",
    )
}

// ---------------------------------------------------------------------------
// Claim 2: frozen counts
// ---------------------------------------------------------------------------

fn verify_frozen_counts() -> WitnessReport {
    let mut t = Tally::new();
    let p = |s: &str| -> Placement {
        if s == "@" {
            Placement::Unemployed
        } else {
            Placement::hospital(s)
        }
    };
    let grid = |f: &[&str], m: &[&str]| -> Result<usize, PosetError> {
        let f = DoctorPref::new(f.iter().map(|s| p(s)).collect());
        let m = DoctorPref::new(m.iter().map(|s| p(s)).collect());
        Ok(couple_pair_poset(&f, &m, &[])?.enumerate_extensions(10_000)?.len())
    };

    let mut check = |name: &str, got: String, want: String| -> bool {
        t.instances += 1;
        if got == want {
            true
        } else {
            t.fail(Failure::new(format!("{name}: expected {want}, got {got}")))
        }
    };

    let two = grid(&["h1", "@"], &["h1", "@"]).map_or_else(|e| e.to_string(), |n| n.to_string());
    if !check("one-post completion grid", two, "2".into()) {
        return t.done(ClaimId::FrozenCounts, false, "frozen counts diverged");
    }
    let forty_two = grid(&["h1", "h2", "@"], &["h1", "h2", "@"])
        .map_or_else(|e| e.to_string(), |n| n.to_string());
    if !check("two-post completion grid", forty_two, "42".into()) {
        return t.done(ClaimId::FrozenCounts, false, "frozen counts diverged");
    }

    let crowding = crowding_market();
    check(
        "crowding market strict validation",
        validate_instance(&crowding, ValidationMode::Strict)
            .is_valid()
            .to_string(),
        "false".into(),
    );
    check(
        "crowding market relaxed validation",
        validate_instance(&crowding, ValidationMode::Relaxed)
            .is_valid()
            .to_string(),
        "true".into(),
    );
    check(
        "crowding market feasible matchings",
        feasible_matchings(&crowding, 10_000).map_or_else(|e| e.to_string(), |v| v.len().to_string()),
        "11".into(),
    );
    check(
        "crowding market stable matchings",
        enumerate_stable(&crowding, 10_000).map_or_else(|e| e.to_string(), |v| v.len().to_string()),
        "0".into(),
    );
    match run_dpda(&crowding) {
        Ok((matching, _)) => {
            check(
                "crowding market deferred-acceptance outcome",
                format!("{matching:?}"),
                format!("{:?}", crowding_market_outcome()),
            );
            check(
                "crowding market outcome stability",
                is_stable(&matching, &crowding).map_or_else(|e| e.to_string(), |b| b.to_string()),
                "false".into(),
            );
        }
        Err(e) => {
            t.fail(Failure::new(format!("deferred acceptance failed: {e}")));
        }
    }
    t.done(
        ClaimId::FrozenCounts,
        false,
        "completion grids of 2 and 42, crowding market with 11 feasible and 0 stable \
         matchings, hired-singles outcome undone by the couple",
    )
}

// ---------------------------------------------------------------------------
// Claims 3 and 5: the two stability guarantees
// ---------------------------------------------------------------------------

fn verify_altruistic_couples_stable(budget: &Budget, seed: u64) -> WitnessReport {
    let instances = budget.instances.unwrap_or(200);
    let extensions = budget.extensions.unwrap_or(50);
    let mut t = Tally::new();
    'sweep: for i in 0..instances {
        t.instances += 1;
        let inst = random_altruistic_market(seed.wrapping_add(i));
        match check_extreme_altruism(&inst) {
            Ok(v) if v.is_empty() => {}
            Ok(_) => {
                if !t.fail(
                    Failure::new("generator produced a couple violating extreme altruism")
                        .with_instance(&inst),
                ) {
                    break 'sweep;
                }
                continue;
            }
            Err(e) => {
                if !t.fail(Failure::new(format!("altruism check failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        }
        let matching = match run_dpda(&inst) {
            Ok((m, _)) => m,
            Err(e) => {
                if !t.fail(Failure::new(format!("deferred acceptance failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        };
        let posets: Result<Vec<_>, _> = inst
            .hospitals
            .iter()
            .map(|h| hospital_set_poset(&h.individual_order, h.capacity, &h.set_constraints))
            .collect();
        let posets = match posets {
            Ok(p) => p,
            Err(e) => {
                if !t.fail(Failure::new(format!("set-order poset failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        };
        for e in 0..extensions {
            t.extensions += 1;
            let mut concrete = inst.clone();
            let mut sampling_failed = false;
            for (hx, poset) in posets.iter().enumerate() {
                match poset.sample_extension(mix(seed, i * 1000 + e, hx as u64)) {
                    Ok(sets) => {
                        concrete.hospitals[hx].set_order = Some(
                            sets.into_iter()
                                .map(|s| s.into_iter().collect::<Vec<DoctorId>>())
                                .collect(),
                        );
                    }
                    Err(err) => {
                        if !t.fail(Failure::new(format!("set-order sampling failed: {err}"))) {
                            break 'sweep;
                        }
                        sampling_failed = true;
                        break;
                    }
                }
            }
            if sampling_failed {
                continue;
            }
            match is_stable(&matching, &concrete) {
                Ok(true) => {}
                Ok(false) => {
                    let block = find_blocks(&matching, &concrete)
                        .ok()
                        .and_then(|b| b.into_iter().next());
                    let mut failure = Failure::new(format!(
                        "outcome became unstable under set-order completion {e}"
                    ))
                    .with_instance(&concrete)
                    .with_matching(&matching);
                    if let Some(b) = &block {
                        failure = failure.with_block(b);
                    }
                    if !t.fail(failure) {
                        break 'sweep;
                    }
                }
                Err(err) => {
                    if !t.fail(Failure::new(format!("stability check failed: {err}"))) {
                        break 'sweep;
                    }
                }
            }
            // Cross-check the two oracles once per instance: the outcome
            // must appear in the brute-force stable list for this completion.
            if e == 0 {
                match enumerate_stable(&concrete, 100_000) {
                    Ok(stable) if stable.contains(&matching) => {}
                    Ok(_) => {
                        if !t.fail(
                            Failure::new("outcome missing from the brute-force stable list")
                                .with_instance(&concrete)
                                .with_matching(&matching),
                        ) {
                            break 'sweep;
                        }
                    }
                    Err(err) => {
                        if !t.fail(Failure::new(format!("brute-force enumeration failed: {err}")))
                        {
                            break 'sweep;
                        }
                    }
                }
            }
        }
    }
    t.done(
        ClaimId::AltruisticCouplesStable,
        true,
        "random markets with deferring couples: the deferred-acceptance outcome stayed \
         stable under every sampled hospital set-order completion",
    )
}

fn verify_averse_hospitals_stable(budget: &Budget, seed: u64) -> WitnessReport {
    let instances = budget.instances.unwrap_or(200);
    let extensions = budget.extensions.unwrap_or(50);
    let mut t = Tally::new();
    'sweep: for i in 0..instances {
        t.instances += 1;
        let base = random_averse_market(seed.wrapping_add(i));
        match check_diversity_aversion(&base) {
            Ok(v) if v.is_empty() => {}
            Ok(_) => {
                if !t.fail(
                    Failure::new("generator produced a hospital violating diversity aversion")
                        .with_instance(&base),
                ) {
                    break 'sweep;
                }
                continue;
            }
            Err(e) => {
                if !t.fail(Failure::new(format!("aversion check failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        }
        let hospital_ids: Vec<_> = base.hospitals.iter().map(|h| h.id.clone()).collect();
        let mut couple_posets = Vec::new();
        let mut derivation_failed = false;
        for couple in &base.couples {
            let marginals = derive_marginals(&couple.pair_order, &hospital_ids);
            match marginals.map_err(|e| e.to_string()).and_then(|(f, m)| {
                couple_pair_poset(&f, &m, &[]).map_err(|e| e.to_string())
            }) {
                Ok(poset) => couple_posets.push(poset),
                Err(e) => {
                    if !t.fail(Failure::new(format!("couple completion poset failed: {e}"))) {
                        break 'sweep;
                    }
                    derivation_failed = true;
                    break;
                }
            }
        }
        if derivation_failed {
            continue;
        }
        for e in 0..extensions {
            t.extensions += 1;
            let mut variant = base.clone();
            let mut sampling_failed = false;
            for (k, poset) in couple_posets.iter().enumerate() {
                match poset.sample_extension(mix(seed, i * 1000 + e, k as u64)) {
                    Ok(order) => variant.couples[k].pair_order = order,
                    Err(err) => {
                        if !t.fail(Failure::new(format!(
                            "couple completion sampling failed: {err}"
                        ))) {
                            break 'sweep;
                        }
                        sampling_failed = true;
                        break;
                    }
                }
            }
            if sampling_failed {
                continue;
            }
            let verdict = run_dpda(&variant)
                .map_err(|err| err.to_string())
                .and_then(|(matching, _)| {
                    is_stable(&matching, &variant)
                        .map(|ok| (matching, ok))
                        .map_err(|err| err.to_string())
                });
            match verdict {
                Ok((matching, true)) => {
                    // Cross-check the two oracles once per instance: the
                    // outcome must appear in the brute-force stable list.
                    if e == 0 {
                        match enumerate_stable(&variant, 100_000) {
                            Ok(stable) if stable.contains(&matching) => {}
                            Ok(_) => {
                                if !t.fail(
                                    Failure::new(
                                        "outcome missing from the brute-force stable list",
                                    )
                                    .with_instance(&variant)
                                    .with_matching(&matching),
                                ) {
                                    break 'sweep;
                                }
                            }
                            Err(err) => {
                                if !t.fail(Failure::new(format!(
                                    "brute-force enumeration failed: {err}"
                                ))) {
                                    break 'sweep;
                                }
                            }
                        }
                    }
                }
                Ok((matching, false)) => {
                    let block = find_blocks(&matching, &variant)
                        .ok()
                        .and_then(|b| b.into_iter().next());
                    let mut failure = Failure::new(format!(
                        "outcome became unstable under couple completion {e}"
                    ))
                    .with_instance(&variant)
                    .with_matching(&matching);
                    if let Some(b) = &block {
                        failure = failure.with_block(b);
                    }
                    if !t.fail(failure) {
                        break 'sweep;
                    }
                }
                Err(err) => {
                    if !t.fail(Failure::new(format!("run failed: {err}"))) {
                        break 'sweep;
                    }
                }
            }
        }
    }
    t.done(
        ClaimId::AverseHospitalsStable,
        true,
        "random markets with worst-member-first hospitals: the deferred-acceptance outcome \
         stayed stable under every sampled couple joint-ranking completion",
    )
}

// ---------------------------------------------------------------------------
// Claims 4 and 6: the impossibility constructions
// ---------------------------------------------------------------------------

fn verify_violation_unstable(claim: ClaimId, budget: &Budget, seed: u64) -> WitnessReport {
    let instances = budget.instances.unwrap_or(50);
    let mut t = Tally::new();
    'sweep: for i in 0..instances {
        t.instances += 1;
        let (input, built) = if claim == ClaimId::AltruismViolationUnstable {
            let input = random_altruism_violating_market(seed.wrapping_add(i));
            let built = counterexample_from_altruism_violation(&input);
            (input, built)
        } else {
            let input = random_diversity_violating_market(seed.wrapping_add(i));
            let built = counterexample_from_diversity_violation(&input);
            (input, built)
        };
        let (out, _) = match built {
            Ok(pair) => pair,
            Err(e) => {
                if !t.fail(
                    Failure::new(format!("construction failed: {e}")).with_instance(&input),
                ) {
                    break 'sweep;
                }
                continue;
            }
        };
        match enumerate_stable(&out, 500_000) {
            Ok(stable) if stable.is_empty() => {}
            Ok(stable) => {
                if !t.fail(
                    Failure::new(format!(
                        "constructed market admits {} stable matching(s)",
                        stable.len()
                    ))
                    .with_instance(&out)
                    .with_matching(&stable[0]),
                ) {
                    break 'sweep;
                }
            }
            Err(e) => {
                if !t.fail(Failure::new(format!("brute-force enumeration failed: {e}"))) {
                    break 'sweep;
                }
            }
        }
    }
    let detail = if claim == ClaimId::AltruismViolationUnstable {
        "every generated altruism violation seeded a construction that brute-force \
         enumeration confirms has no stable matching"
    } else {
        "every generated diversity-aversion violation seeded a construction that \
         brute-force enumeration confirms has no stable matching"
    };
    t.done(claim, true, detail)
}

// ---------------------------------------------------------------------------
// Claim 7: the split-couple family
// ---------------------------------------------------------------------------

/// Check the split matching against one family member; returns whether the
/// sweep should continue.
fn split_matching_survives(
    t: &mut Tally,
    proposed: &Matching,
    inst: &Instance,
    what: &str,
) -> bool {
    t.instances += 1;
    match is_stable(proposed, inst) {
        Ok(true) => true,
        Ok(false) => {
            let block = find_blocks(proposed, inst)
                .ok()
                .and_then(|b| b.into_iter().next());
            let mut failure = Failure::new(format!("split matching unstable for {what}"))
                .with_instance(inst)
                .with_matching(proposed);
            if let Some(b) = &block {
                failure = failure.with_block(b);
            }
            t.fail(failure)
        }
        Err(e) => t.fail(Failure::new(format!("stability check failed: {e}"))),
    }
}

fn verify_split_couple_example(budget: &Budget, seed: u64) -> WitnessReport {
    let set_order_budget = budget.extensions.unwrap_or(2_000);
    let proposed = SplitCoupleFamily::proposed_matching();
    let mut t = Tally::new();
    let mut exhaustive = true;

    // The couple preferences the claim quantifies over: every responsive
    // completion of every marginal pair that ranks both hospitals above
    // unemployment (either hospital may come first for each member).
    let mut employment_first: Vec<Vec<(Placement, Placement)>> = Vec::new();
    {
        let rank = |a: &str, b: &str| {
            DoctorPref::new(vec![
                Placement::hospital(a),
                Placement::hospital(b),
                Placement::Unemployed,
            ])
        };
        for f in [rank("h1", "h2"), rank("h2", "h1")] {
            for m in [rank("h2", "h1"), rank("h1", "h2")] {
                match couple_pair_poset(&f, &m, &[]).and_then(|p| p.enumerate_extensions(100)) {
                    Ok(exts) => employment_first.extend(exts),
                    Err(e) => {
                        t.fail(Failure::new(format!("couple completion grid failed: {e}")));
                    }
                }
            }
        }
    }

    // Part one: all sixteen tail orders; for each, every couple completion
    // the family enumerates, plus every employment-first couple preference
    // grafted onto that tail order.
    'tails: for combo in SplitCoupleFamily::tail_combos() {
        let members = match SplitCoupleFamily::instances(combo, 100) {
            Ok(m) => m,
            Err(e) => {
                if !t.fail(Failure::new(format!("family enumeration failed: {e}"))) {
                    break 'tails;
                }
                continue;
            }
        };
        for inst in &members {
            let what = format!("tail combination {combo:?}");
            if !split_matching_survives(&mut t, &proposed, inst, &what) {
                break 'tails;
            }
        }
        let Some(base) = members.into_iter().next() else {
            t.fail(Failure::new("family enumeration produced no members"));
            continue;
        };
        for (k, pair_order) in employment_first.iter().enumerate() {
            let mut variant = base.clone();
            variant.couples[0].pair_order = pair_order.clone();
            let what =
                format!("tail combination {combo:?}, employment-first couple preference {k}");
            if !split_matching_survives(&mut t, &proposed, &variant, &what) {
                break 'tails;
            }
        }
    }

    // Part two: the family really contains the taste the claim is about, and
    // the split matching survives every completion of each hospital's set
    // order (enumerated when small enough, sampled otherwise).
    let base = SplitCoupleFamily::instances([false; 4], 100)
        .ok()
        .and_then(|v| v.into_iter().next());
    if let Some(base) = base {
        match check_diversity_aversion(&base) {
            Ok(v) if !v.is_empty() => {}
            Ok(_) => {
                t.fail(
                    Failure::new("h1's taste for the couple went unreported").with_instance(&base),
                );
            }
            Err(e) => {
                t.fail(Failure::new(format!("aversion check failed: {e}")));
            }
        }
        'hospitals: for hx in 0..base.hospitals.len() {
            let h = &base.hospitals[hx];
            let poset = match hospital_set_poset(&h.individual_order, h.capacity, &h.set_constraints)
            {
                Ok(p) => p,
                Err(e) => {
                    t.fail(Failure::new(format!("set poset failed: {e}")));
                    continue;
                }
            };
            let completions: Vec<Vec<BTreeSet<DoctorId>>> =
                match poset.enumerate_extensions(set_order_budget) {
                    Ok(all) => all,
                    Err(PosetError::CapExceeded { .. }) => {
                        exhaustive = false;
                        let mut sampled = Vec::new();
                        for k in 0..set_order_budget {
                            match poset.sample_extension(mix(seed, hx as u64, k)) {
                                Ok(ext) => sampled.push(ext),
                                Err(e) => {
                                    t.fail(Failure::new(format!("sampling failed: {e}")));
                                    continue 'hospitals;
                                }
                            }
                        }
                        sampled
                    }
                    Err(e) => {
                        t.fail(Failure::new(format!("set-order enumeration failed: {e}")));
                        continue;
                    }
                };
            for (k, completion) in completions.into_iter().enumerate() {
                t.extensions += 1;
                let mut variant = base.clone();
                variant.hospitals[hx].set_order = Some(
                    completion
                        .into_iter()
                        .map(|s| s.into_iter().collect::<Vec<DoctorId>>())
                        .collect(),
                );
                match is_stable(&proposed, &variant) {
                    Ok(true) => {}
                    Ok(false) => {
                        let block = find_blocks(&proposed, &variant)
                            .ok()
                            .and_then(|b| b.into_iter().next());
                        let mut failure = Failure::new(format!(
                            "split matching unstable under set-order completion {k} of {}",
                            variant.hospitals[hx].id
                        ))
                        .with_instance(&variant)
                        .with_matching(&proposed);
                        if let Some(b) = &block {
                            failure = failure.with_block(b);
                        }
                        if !t.fail(failure) {
                            break 'hospitals;
                        }
                    }
                    Err(e) => {
                        if !t.fail(Failure::new(format!("stability check failed: {e}"))) {
                            break 'hospitals;
                        }
                    }
                }
            }
        }
    } else {
        t.fail(Failure::new("family enumeration produced no base instance"));
    }

    t.done(
        ClaimId::SplitCoupleExample,
        !exhaustive,
        "the split matching stayed stable across every tail order, every enumerated \
         couple completion including all employment-first marginal pairs, and every \
         checked hospital set-order completion",
    )
}

// ---------------------------------------------------------------------------
// Claim 8: procedural guarantees
// ---------------------------------------------------------------------------

/// Replays a trace and reports the first hospital whose held set shrank or
/// got individually worse between rounds.
fn holds_are_monotone(inst: &Instance, trace: &Trace) -> Result<(), String> {
    let c = Compiled::build(inst, false).map_err(|e| e.to_string())?;
    let mut held: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for round in &trace.rounds {
        for (hid, doctors) in &round.holds {
            let h = c
                .hospital_ix(hid)
                .ok_or_else(|| format!("unknown hospital {hid} in trace"))?;
            let mut ranks = Vec::new();
            for did in doctors {
                let d = c
                    .doctor_ix(did)
                    .ok_or_else(|| format!("unknown doctor {did} in trace"))?;
                ranks.push(
                    c.ind_rank[h][d].ok_or_else(|| format!("{hid} held unacceptable {did}"))?,
                );
            }
            ranks.sort_unstable();
            if let Some(prev) = held.get(&h) {
                if ranks.len() < prev.len() {
                    return Err(format!("held set at {hid} shrank"));
                }
                for (new, old) in ranks.iter().zip(prev.iter()) {
                    if new > old {
                        return Err(format!("held set at {hid} got worse"));
                    }
                }
            }
            held.insert(h, ranks);
        }
    }
    Ok(())
}

/// Every block of a deferred-acceptance outcome must be a couple crowding
/// into one real hospital neither member currently holds, and the crowded
/// hospital cannot rank the improving member above the partner.
fn blocks_are_crowding_only(
    inst: &Instance,
    matching: &Matching,
    blocks: &[Block],
) -> Result<(), (String, Option<Block>)> {
    let c = Compiled::build(inst, true).map_err(|e| (e.to_string(), None))?;
    let m = c.index_matching(matching).map_err(|e| (e.to_string(), None))?;
    for block in blocks {
        let Block::CouplePair {
            couple, posts: (a, b), ..
        } = block
        else {
            return Err((
                "deferred-acceptance outcome blocked by something other than a couple".into(),
                Some(block.clone()),
            ));
        };
        if a != b || a.is_unemployed() {
            return Err((
                "couple block does not crowd into one real hospital".into(),
                Some(block.clone()),
            ));
        }
        let hx = c
            .hospital_ix(a.as_hospital().expect("checked real above"))
            .expect("blocks name hospitals of the instance");
        let cx = c
            .couple_ids
            .iter()
            .position(|id| id == couple)
            .expect("blocks name couples of the instance");
        let (fx, mx) = c.couple_members[cx];
        for moved in [fx, mx] {
            if m[moved] as usize == hx {
                return Err((
                    "crowding block targets a post a member already holds".into(),
                    Some(block.clone()),
                ));
            }
        }
        for (moved, partner) in [(fx, mx), (mx, fx)] {
            let improves = c.pref_rank[moved][hx] < c.pref_rank[moved][m[moved] as usize];
            let ranked_above = match (c.ind_rank[hx][moved], c.ind_rank[hx][partner]) {
                (Some(rm), Some(rp)) => rm < rp,
                (Some(_), None) => true,
                _ => false,
            };
            if improves && ranked_above {
                return Err((
                    "hospital ranks the improving member above the partner, which deferred \
                     acceptance rules out"
                        .into(),
                    Some(block.clone()),
                ));
            }
        }
    }
    Ok(())
}

/// The greedy hospital choice must be the best feasible subset of the pool
/// under the hospital's concrete set order.
fn choices_are_set_order_optimal(inst: &Instance) -> Result<(), String> {
    let c = Compiled::build(inst, true).map_err(|e| e.to_string())?;
    let everyone: BTreeSet<DoctorId> = inst.doctors().into_iter().collect();
    for (hx, h) in inst.hospitals.iter().enumerate() {
        let (held, _) = hospital_choice(h, &everyone);
        let held_mask: u64 = held
            .iter()
            .map(|d| 1u64 << c.doctor_ix(d).expect("doctors of the instance"))
            .sum();
        let pool: Vec<usize> = inst
            .doctors()
            .iter()
            .filter_map(|d| c.doctor_ix(d))
            .filter(|&d| c.is_acceptable(hx, d))
            .collect();
        for sub in 0u32..(1 << pool.len()) {
            if sub.count_ones() > h.capacity {
                continue;
            }
            let mask: u64 = pool
                .iter()
                .enumerate()
                .filter(|(i, _)| sub & (1 << i) != 0)
                .map(|(_, &d)| 1u64 << d)
                .sum();
            if mask != held_mask && c.set_prefers(hx, mask, held_mask) {
                return Err(format!(
                    "hospital {} prefers another feasible subset to its greedy choice",
                    h.id
                ));
            }
        }
    }
    Ok(())
}

fn verify_procedure_properties(budget: &Budget, seed: u64) -> WitnessReport {
    let instances = budget.instances.unwrap_or(500);
    let mut t = Tally::new();
    'sweep: for i in 0..instances {
        t.instances += 1;
        let inst = random_market(seed.wrapping_add(i));
        let (matching, trace) = match run_dpda(&inst) {
            Ok(pair) => pair,
            Err(e) => {
                if !t.fail(Failure::new(format!("deferred acceptance failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        };
        match verify_dpda_rejection_property(&inst, &matching, &trace) {
            Ok(None) => {}
            Ok(Some(v)) => {
                if !t.fail(
                    Failure::new(format!(
                        "unjustified rejection of {} by {}: {}",
                        v.doctor, v.hospital, v.detail
                    ))
                    .with_instance(&inst)
                    .with_matching(&matching),
                ) {
                    break 'sweep;
                }
                continue;
            }
            Err(e) => {
                if !t.fail(Failure::new(format!("rejection audit failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        }
        if let Err(msg) = holds_are_monotone(&inst, &trace) {
            if !t.fail(Failure::new(msg).with_instance(&inst)) {
                break 'sweep;
            }
            continue;
        }
        for s in 0..2 {
            match run_dpda_sequential(&inst, mix(seed, i, s)) {
                Ok((sequential, _)) if sequential == matching => {}
                Ok((sequential, _)) => {
                    if !t.fail(
                        Failure::new("one-at-a-time run reached a different matching")
                            .with_instance(&inst)
                            .with_matching(&sequential),
                    ) {
                        break 'sweep;
                    }
                }
                Err(e) => {
                    if !t.fail(Failure::new(format!("sequential run failed: {e}"))) {
                        break 'sweep;
                    }
                }
            }
        }
        let blocks = match find_blocks(&matching, &inst) {
            Ok(b) => b,
            Err(e) => {
                if !t.fail(Failure::new(format!("block search failed: {e}"))) {
                    break 'sweep;
                }
                continue;
            }
        };
        if let Err((msg, block)) = blocks_are_crowding_only(&inst, &matching, &blocks) {
            let mut failure = Failure::new(msg).with_instance(&inst).with_matching(&matching);
            if let Some(b) = &block {
                failure = failure.with_block(b);
            }
            if !t.fail(failure) {
                break 'sweep;
            }
            continue;
        }
        if let Err(msg) = choices_are_set_order_optimal(&inst) {
            if !t.fail(Failure::new(msg).with_instance(&inst)) {
                break 'sweep;
            }
        }
    }
    t.done(
        ClaimId::ProcedureProperties,
        true,
        "random markets: every rejection was justified, holds only improved, proposal \
         order never changed the outcome, greedy choices were set-order optimal, and \
         the only blocks left were couples crowding into a hospital that prefers them \
         as a pair",
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claim_names_round_trip() {
        for claim in ClaimId::ALL {
            assert_eq!(claim.name().parse::<ClaimId>().unwrap(), claim);
            assert!(!claim.describe().is_empty());
        }
        assert!("no-such-claim".parse::<ClaimId>().is_err());
    }

    #[test]
    fn frozen_counts_verify_exactly() {
        let report = verify_claim(ClaimId::FrozenCounts, &Budget::default(), 0);
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.outcome, Outcome::Verified);
    }

    #[test]
    fn family_claim_passes_on_a_small_budget() {
        let budget = Budget {
            instances: Some(2),
            extensions: None,
        };
        let report = verify_claim(ClaimId::ThreeHospitalExample, &budget, 0);
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.instances_checked, 12);
    }

    #[test]
    fn stability_claims_pass_on_a_small_budget() {
        let budget = Budget {
            instances: Some(8),
            extensions: Some(4),
        };
        for claim in [
            ClaimId::AltruisticCouplesStable,
            ClaimId::AverseHospitalsStable,
        ] {
            let report = verify_claim(claim, &budget, 0);
            assert!(report.passed(), "{}", report.render());
            assert_eq!(report.instances_checked, 8);
            assert_eq!(report.extensions_checked, 32);
        }
    }

    #[test]
    fn construction_claims_pass_on_a_small_budget() {
        let budget = Budget {
            instances: Some(5),
            extensions: None,
        };
        for claim in [
            ClaimId::AltruismViolationUnstable,
            ClaimId::AversionViolationUnstable,
        ] {
            let report = verify_claim(claim, &budget, 0);
            assert!(report.passed(), "{}", report.render());
        }
    }

    #[test]
    fn split_couple_claim_passes_with_a_tight_set_order_budget() {
        let budget = Budget {
            instances: None,
            extensions: Some(25),
        };
        let report = verify_claim(ClaimId::SplitCoupleExample, &budget, 0);
        assert!(report.passed(), "{}", report.render());
        // 16 tail orders, each with 42 family completions plus 4 x 42
        // employment-first couple preferences.
        assert_eq!(report.instances_checked, 16 * (42 + 4 * 42));
    }

    #[test]
    fn procedure_claim_passes_on_a_small_budget() {
        let budget = Budget {
            instances: Some(25),
            extensions: None,
        };
        let report = verify_claim(ClaimId::ProcedureProperties, &budget, 0);
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn reports_serialize_without_volatile_fields() {
        let budget = Budget {
            instances: Some(1),
            extensions: Some(1),
        };
        let a = serde_json::to_string(&verify_claim(ClaimId::FrozenCounts, &budget, 0)).unwrap();
        let b = serde_json::to_string(&verify_claim(ClaimId::FrozenCounts, &budget, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"claim\":\"frozen-counts\""));
    }
}
