//! Constructive counterexamples.
//!
//! Each builder takes a market that violates one of the two sufficient
//! conditions (extreme altruism for couples, aversion to couple diversity for
//! hospitals) and rewires it — keeping the violating preference intact — into
//! a market of the same shape that admits **no** stable matching at all. The
//! output is meant to be handed to [`crate::stability::enumerate_stable`] or
//! any other solver as a certified hard instance.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    validate_instance, Compiled, Couple, CoupleId, DoctorId, Hospital, HospitalId, Instance,
    ModelError, Placement, SetConstraint, ValidationMode,
};
use crate::prefs::{
    canonical_set_order, check_diversity_aversion, check_extreme_altruism, couple_pair_poset,
    AltruismViolation, CoupleMember, DoctorPref, PosetError,
};

/// Why a counterexample could not be built.
#[derive(Debug, Error)]
pub enum BuildError {
    /// The market satisfies the condition, so there is nothing to build from.
    #[error("the market satisfies the condition; no violation to build from")]
    NoViolation,
    /// Every violation fails the side requirements of the construction: the
    /// crowded hospital must have at least two seats and the moving member
    /// must rank the preferred post at least as high as unemployment.
    #[error(
        "none of the {total} violations can seed the construction: each needs \
         the crowded hospital to have at least two seats and the moving member \
         to find the preferred post acceptable"
    )]
    NoUsableWitness { total: usize },
    /// The construction must fill every seat of up to three hospitals and
    /// there are not enough doctors besides the couple to do it.
    #[error(
        "the construction needs {needed} doctors besides the couple, but only \
         {available} are available"
    )]
    InsufficientDoctors { needed: usize, available: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Poset(#[from] PosetError),
}

/// Where the violating comparison points, as seen from the moving member.
///
/// The violation says the couple ranks crowding into one hospital above a
/// split outcome `(better, partner_post)`. The shape records which of those
/// two coordinates are real hospitals, because that decides how many
/// hospitals the construction has to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessShape {
    /// Preferred post and partner's post are two distinct real hospitals.
    RealSplit,
    /// Preferred post is real, partner would be unemployed.
    RealAndUnemployed,
    /// Both coordinates of the preferred pair are unemployment.
    BothUnemployed,
    /// Moving member would be unemployed, partner at a real hospital.
    UnemployedAndReal,
    /// Preferred post and partner's post are the same real hospital.
    SameReal,
}

impl fmt::Display for WitnessShape {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            WitnessShape::RealSplit => "split across two hospitals",
            WitnessShape::RealAndUnemployed => "one hospital, partner unemployed",
            WitnessShape::BothUnemployed => "both unemployed",
            WitnessShape::UnemployedAndReal => "mover unemployed, partner at a hospital",
            WitnessShape::SameReal => "both at the same hospital",
        };
        out.write_str(text)
    }
}

/// What the builder did: which violation seeded the construction and which
/// role every doctor and hospital plays in the output market.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    /// Human-readable restatement of the seed violation.
    pub witness: String,
    /// Geometry of the seed violation; absent for the diversity construction,
    /// which always works from a same-hospital comparison.
    pub shape: Option<WitnessShape>,
    /// The couple whose kept preference drives the instability.
    pub couple: CoupleId,
    /// Which member of the couple is the mover in the seed violation.
    pub mover: CoupleMember,
    /// The hospital the couple crowds into.
    pub crowded_hospital: HospitalId,
    /// Hospital holding the mover's preferred alternative seat, if real.
    pub contested_hospital: Option<HospitalId>,
    /// Hospital holding the partner's alternative seat, if real.
    pub parking_hospital: Option<HospitalId>,
    /// The two candidates the crowded hospital ranks between the members.
    pub rivals: (DoctorId, DoctorId),
    /// Doctors pinned to fixed seats so every hospital starts full.
    pub anchors: Vec<DoctorId>,
    /// One-paragraph explanation of why no stable matching exists.
    pub summary: String,
}

impl fmt::Display for CounterexampleReport {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(out, "seed violation: {}", self.witness)?;
        if let Some(shape) = self.shape {
            writeln!(out, "shape: {shape}")?;
        }
        writeln!(
            out,
            "couple {} (mover: {}), crowded hospital {}",
            self.couple.0, self.mover, self.crowded_hospital.0
        )?;
        if let Some(h) = &self.contested_hospital {
            writeln!(out, "contested hospital: {}", h.0)?;
        }
        if let Some(h) = &self.parking_hospital {
            writeln!(out, "parking hospital: {}", h.0)?;
        }
        writeln!(out, "rivals: {}, {}", self.rivals.0 .0, self.rivals.1 .0)?;
        if !self.anchors.is_empty() {
            let names: Vec<&str> = self.anchors.iter().map(|a| a.0.as_str()).collect();
            writeln!(out, "anchors: {}", names.join(", "))?;
        }
        write!(out, "{}", self.summary)
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Every post of the instance: real hospitals in document order, then
/// unemployment.
fn all_posts(instance: &Instance) -> Vec<Placement> {
    let mut posts: Vec<Placement> = instance
        .hospitals
        .iter()
        .map(|h| Placement::Hospital(h.id.clone()))
        .collect();
    posts.push(Placement::Unemployed);
    posts
}

/// Extends `prefix` to a full ranking over `posts` by appending the missing
/// posts in `posts` order. Posts appearing after unemployment are the
/// doctor's unacceptable ones.
fn complete_ranking(prefix: Vec<Placement>, posts: &[Placement]) -> Vec<Placement> {
    let mut out = prefix;
    for p in posts {
        if !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}

/// A linear extension of the coordinatewise order over two rankings: pairs
/// sorted by rank sum, ties by the first coordinate's rank. If one coordinate
/// strictly improves and the other does not worsen, the sum strictly drops,
/// so the result never contradicts a coordinatewise improvement — i.e. it is
/// a valid joint ranking for a couple with these member rankings.
pub(crate) fn product_pair_order(
    f: &[Placement],
    m: &[Placement],
) -> Vec<(Placement, Placement)> {
    let mut keyed: Vec<(usize, usize, (Placement, Placement))> = Vec::new();
    for (ra, a) in f.iter().enumerate() {
        for (rb, b) in m.iter().enumerate() {
            keyed.push((ra + rb, ra, (a.clone(), b.clone())));
        }
    }
    keyed.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    keyed.into_iter().map(|(_, _, pair)| pair).collect()
}

/// Couple members of `instance`, looked up by couple id.
fn couple_of<'a>(instance: &'a Instance, id: &CoupleId) -> &'a Couple {
    instance
        .couples
        .iter()
        .find(|c| &c.id == id)
        .expect("checkers only name couples present in the instance")
}

/// Builds the output instance: hospitals from `hospital_plan` (individual
/// order plus optional set constraint, canonical set order on top), the
/// witness couple kept verbatim except when `witness_pairs` overrides its
/// joint ranking, every other doctor re-ranked from `desired`.
#[allow(clippy::too_many_arguments)]
fn assemble(
    instance: &Instance,
    witness_couple: &CoupleId,
    witness_pairs: Option<Vec<(Placement, Placement)>>,
    hospital_plan: &BTreeMap<HospitalId, (Vec<DoctorId>, Vec<SetConstraint>)>,
    keep_hospitals: bool,
    desired: &BTreeMap<DoctorId, Vec<Placement>>,
) -> Result<Instance, BuildError> {
    let hospitals: Vec<Hospital> = instance
        .hospitals
        .iter()
        .map(|h| {
            if keep_hospitals {
                return h.clone();
            }
            let (individual, constraints) = hospital_plan
                .get(&h.id)
                .cloned()
                .unwrap_or_else(|| (Vec::new(), Vec::new()));
            Hospital {
                id: h.id.clone(),
                capacity: h.capacity,
                set_order: Some(canonical_set_order(&individual, h.capacity)),
                individual_order: individual,
                set_constraints: constraints,
            }
        })
        .collect();

    let couples: Vec<Couple> = instance
        .couples
        .iter()
        .map(|c| {
            if &c.id == witness_couple {
                let mut out = c.clone();
                if let Some(pairs) = &witness_pairs {
                    out.pair_order = pairs.clone();
                }
                out
            } else {
                Couple {
                    id: c.id.clone(),
                    f: c.f.clone(),
                    m: c.m.clone(),
                    pair_order: product_pair_order(&desired[&c.f], &desired[&c.m]),
                }
            }
        })
        .collect();

    let doctor_orders: BTreeMap<DoctorId, Vec<Placement>> = instance
        .singles
        .iter()
        .map(|s| (s.clone(), desired[s].clone()))
        .collect();

    let out = Instance {
        hospitals,
        singles: instance.singles.clone(),
        couples,
        doctor_orders,
    };
    let report = validate_instance(&out, ValidationMode::Relaxed);
    if !report.is_valid() {
        return Err(ModelError::Invalid(report.render()).into());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Altruism construction
// ---------------------------------------------------------------------------

/// Builds a market with no stable matching from a failure of extreme
/// altruism.
///
/// The checker hands back comparisons in which a couple prefers crowding into
/// one hospital `h` over a pair `(better, partner_post)` whose mover
/// coordinate strictly improves. The builder keeps the couple's joint ranking
/// verbatim and rewires everyone else:
///
/// * `h` ranks `anchors… ≻ mover ≻ rival₁ ≻ rival₂ ≻ partner` and is told to
///   prefer the couple together over the two rivals as a set;
/// * the mover's preferred hospital (when real) keeps one open seat that
///   both the mover and rival₁ want, rival₁ preferring it to `h`;
/// * the partner's hospital (when real) wants only the partner;
/// * every remaining seat is pinned by an anchor, every remaining doctor
///   prefers unemployment.
///
/// Chasing the open seat forces a cycle: whoever holds it is undermined by
/// the couple's kept preference for crowding into `h`, and the crowding
/// outcome is in turn undermined by the mover's wish to leave — so no
/// matching is stable. Fails with [`BuildError::NoUsableWitness`] when no
/// violation satisfies the side requirements (two seats at `h`, preferred
/// post acceptable to the mover), and [`BuildError::InsufficientDoctors`]
/// when the market is too small to pin every seat.
pub fn counterexample_from_altruism_violation(
    instance: &Instance,
) -> Result<(Instance, CounterexampleReport), BuildError> {
    let violations = check_extreme_altruism(instance)?;
    if violations.is_empty() {
        return Err(BuildError::NoViolation);
    }
    let compiled = Compiled::build(instance, false)?;
    let witness = violations
        .iter()
        .find(|v| witness_is_usable(&compiled, instance, v))
        .cloned()
        .ok_or(BuildError::NoUsableWitness {
            total: violations.len(),
        })?;
    build_crowding_market(instance, &witness)
}

/// The construction needs the mover to rank the preferred post at least as
/// high as unemployment (otherwise the mover never claims the open seat) and
/// two seats at the crowded hospital (the couple plus the rivals must fit
/// pairwise). Both coordinates naming the crowded hospital itself would be a
/// checker bug — such comparisons are already forced — so they are skipped
/// defensively.
fn witness_is_usable(compiled: &Compiled, instance: &Instance, v: &AltruismViolation) -> bool {
    let crowded = instance
        .hospital(&v.hospital)
        .expect("checkers only name hospitals present in the instance");
    if crowded.capacity < 2 {
        return false;
    }
    if v.better.as_hospital() == Some(&v.hospital)
        || v.partner_post.as_hospital() == Some(&v.hospital)
    {
        return false;
    }
    match v.better.as_hospital() {
        None => true,
        Some(_) => {
            let couple = couple_of(instance, &v.couple);
            let mover = match v.mover {
                CoupleMember::F => &couple.f,
                CoupleMember::M => &couple.m,
            };
            let mx = compiled
                .doctor_ix(mover)
                .expect("couple members are doctors of the instance");
            let bx = compiled
                .post_ix(&v.better)
                .expect("violations only name posts of the instance");
            compiled.pref_rank[mx][bx] < compiled.pref_rank[mx][compiled.dummy()]
        }
    }
}

fn shape_of(v: &AltruismViolation) -> WitnessShape {
    match (v.better.as_hospital(), v.partner_post.as_hospital()) {
        (Some(a), Some(b)) if a == b => WitnessShape::SameReal,
        (Some(_), Some(_)) => WitnessShape::RealSplit,
        (Some(_), None) => WitnessShape::RealAndUnemployed,
        (None, None) => WitnessShape::BothUnemployed,
        (None, Some(_)) => WitnessShape::UnemployedAndReal,
    }
}

fn build_crowding_market(
    instance: &Instance,
    v: &AltruismViolation,
) -> Result<(Instance, CounterexampleReport), BuildError> {
    let couple = couple_of(instance, &v.couple);
    let (mover, partner) = match v.mover {
        CoupleMember::F => (couple.f.clone(), couple.m.clone()),
        CoupleMember::M => (couple.m.clone(), couple.f.clone()),
    };
    let shape = shape_of(v);
    let crowded = v.hospital.clone();
    // In the same-hospital shape one hospital plays both alternative roles;
    // it is treated as the contested one and gets the single open seat.
    let contested: Option<HospitalId> = v.better.as_hospital().cloned();
    let parking: Option<HospitalId> = match shape {
        WitnessShape::RealSplit | WitnessShape::UnemployedAndReal => {
            v.partner_post.as_hospital().cloned()
        }
        _ => None,
    };

    let cap_of = |id: &HospitalId| -> usize {
        instance
            .hospital(id)
            .expect("violations only name hospitals of the instance")
            .capacity as usize
    };
    let kappa = cap_of(&crowded);
    let needed = (kappa - 2)
        + 2
        + contested.as_ref().map_or(0, |h| cap_of(h) - 1)
        + parking.as_ref().map_or(0, |h| cap_of(h) - 1);
    let pool: Vec<DoctorId> = instance
        .doctors()
        .into_iter()
        .filter(|d| d != &mover && d != &partner)
        .collect();
    if pool.len() < needed {
        return Err(BuildError::InsufficientDoctors {
            needed,
            available: pool.len(),
        });
    }

    let rival1 = pool[0].clone();
    let rival2 = pool[1].clone();
    let mut next = 2;
    let take = |n: usize, next: &mut usize| -> Vec<DoctorId> {
        let slice = pool[*next..*next + n].to_vec();
        *next += n;
        slice
    };
    let anchors_crowded = take(kappa - 2, &mut next);
    let anchors_contested = take(contested.as_ref().map_or(0, |h| cap_of(h) - 1), &mut next);
    let anchors_parking = take(parking.as_ref().map_or(0, |h| cap_of(h) - 1), &mut next);

    let posts = all_posts(instance);
    let own = |id: &HospitalId| Placement::Hospital(id.clone());
    let mut desired: BTreeMap<DoctorId, Vec<Placement>> = BTreeMap::new();
    // Rival one chases the open seat when there is one, then settles at the
    // crowded hospital; rival two goes straight there.
    let rival1_prefix = match &contested {
        Some(c) => vec![own(c), own(&crowded), Placement::Unemployed],
        None => vec![own(&crowded), Placement::Unemployed],
    };
    desired.insert(rival1.clone(), complete_ranking(rival1_prefix, &posts));
    desired.insert(
        rival2.clone(),
        complete_ranking(vec![own(&crowded), Placement::Unemployed], &posts),
    );
    for (anchor_set, home) in [
        (&anchors_crowded, &crowded),
        (&anchors_contested, contested.as_ref().unwrap_or(&crowded)),
        (&anchors_parking, parking.as_ref().unwrap_or(&crowded)),
    ] {
        for a in anchor_set {
            desired.insert(
                a.clone(),
                complete_ranking(vec![own(home), Placement::Unemployed], &posts),
            );
        }
    }
    for d in &pool[next..] {
        desired.insert(
            d.clone(),
            complete_ranking(vec![Placement::Unemployed], &posts),
        );
    }

    let mut plan: BTreeMap<HospitalId, (Vec<DoctorId>, Vec<SetConstraint>)> = BTreeMap::new();
    let mut crowded_order = anchors_crowded.clone();
    crowded_order.extend([mover.clone(), rival1.clone(), rival2.clone(), partner.clone()]);
    // The canonical set order already ranks the couple's pair of seats ahead
    // of the rivals' (the mover outranks rival one); the explicit constraint
    // records the comparison the instability hinges on.
    let crowded_constraint = SetConstraint(
        vec![mover.clone(), partner.clone()],
        vec![rival1.clone(), rival2.clone()],
    );
    plan.insert(crowded.clone(), (crowded_order, vec![crowded_constraint]));
    if let Some(c) = &contested {
        let mut order = anchors_contested.clone();
        order.extend([mover.clone(), rival1.clone()]);
        plan.insert(c.clone(), (order, Vec::new()));
    }
    if let Some(p) = &parking {
        let mut order = anchors_parking.clone();
        order.push(partner.clone());
        plan.insert(p.clone(), (order, Vec::new()));
    }

    let anchors: Vec<DoctorId> = anchors_crowded
        .iter()
        .chain(&anchors_contested)
        .chain(&anchors_parking)
        .cloned()
        .collect();
    let out = assemble(instance, &v.couple, None, &plan, false, &desired)?;

    let witness_text = format!(
        "couple {} ranks ({}, {}) above ({}, {}) although its {} strictly prefers {}",
        v.couple.0, crowded.0, crowded.0, v.better, v.partner_post, v.mover, v.better,
    );
    let summary = format!(
        "Hospital {crowded} prefers the couple together over rivals {r1} and \
         {r2}, yet the couple keeps its original wish to leave: any matching \
         placing the couple at {crowded} is undone by the mover's exit, and \
         any matching without the couple there is undone by the couple \
         crowding back in, so no stable matching exists.",
        crowded = crowded.0,
        r1 = rival1.0,
        r2 = rival2.0,
    );
    let report = CounterexampleReport {
        witness: witness_text,
        shape: Some(shape),
        couple: v.couple.clone(),
        mover: v.mover,
        crowded_hospital: crowded,
        contested_hospital: contested,
        parking_hospital: parking,
        rivals: (rival1, rival2),
        anchors,
        summary,
    };
    Ok((out, report))
}

// ---------------------------------------------------------------------------
// Diversity construction
// ---------------------------------------------------------------------------

/// Builds a market with no stable matching from a failure of aversion to
/// couple diversity.
///
/// The checker hands back a hospital `h` that ranks a couple's two members
/// around two single candidates yet prefers the couple's pair of seats to the
/// candidates' as a set. Hospitals are kept **byte-for-byte unchanged** —
/// including `h` and its set order, which embodies the violation. Doctors are
/// rewired so that the only candidate stable outcome fills `h` with its
/// favourite full team (the two intermediate candidates plus its best other
/// choices above the couple's lower member) and leaves the couple unemployed;
/// the couple is given a joint ranking that prefers crowding into `h`, which
/// `h` welcomes by the violating set comparison. That deviation breaks the
/// last candidate, so no stable matching exists.
///
/// Requires hospital set orders to be materialised (run preference completion
/// first if the document leaves them open). Fails only with
/// [`BuildError::NoViolation`]: the checker's membership guard guarantees
/// enough doctors to fill `h`.
pub fn counterexample_from_diversity_violation(
    instance: &Instance,
) -> Result<(Instance, CounterexampleReport), BuildError> {
    let violations = check_diversity_aversion(instance)?;
    let v = violations.first().cloned().ok_or(BuildError::NoViolation)?;
    let couple = couple_of(instance, &v.couple);
    let (high, low) = match v.high_member {
        CoupleMember::F => (couple.f.clone(), couple.m.clone()),
        CoupleMember::M => (couple.m.clone(), couple.f.clone()),
    };
    let hospital = instance
        .hospital(&v.hospital)
        .expect("checkers only name hospitals present in the instance");
    let kappa = hospital.capacity as usize;

    // Candidates h ranks strictly above the couple's lower member, minus the
    // higher member: the checker's guard says there are at least κ of them,
    // so the team below always fills up.
    let low_pos = hospital
        .individual_order
        .iter()
        .position(|d| d == &low)
        .expect("the violation places both members in the hospital's ranking");
    let above_low: Vec<DoctorId> = hospital.individual_order[..low_pos]
        .iter()
        .filter(|d| *d != &high)
        .cloned()
        .collect();
    let mut team = vec![v.between.0.clone(), v.between.1.clone()];
    for d in &above_low {
        if team.len() == kappa {
            break;
        }
        if !team.contains(d) {
            team.push(d.clone());
        }
    }
    debug_assert_eq!(team.len(), kappa, "membership guard supplies a full team");

    let posts = all_posts(instance);
    let here = Placement::Hospital(v.hospital.clone());
    let mut desired: BTreeMap<DoctorId, Vec<Placement>> = BTreeMap::new();
    for t in &team {
        desired.insert(
            t.clone(),
            complete_ranking(vec![here.clone(), Placement::Unemployed], &posts),
        );
    }
    for d in instance.doctors() {
        if d != high && d != low && !desired.contains_key(&d) {
            desired.insert(d, complete_ranking(vec![Placement::Unemployed], &posts));
        }
    }

    // The witness couple: the higher-ranked member on their own prefers
    // unemployment, the lower-ranked member wants the hospital — and jointly
    // they still prefer crowding in together over both being unemployed.
    let high_marginal = complete_ranking(vec![Placement::Unemployed, here.clone()], &posts);
    let low_marginal = complete_ranking(vec![here.clone(), Placement::Unemployed], &posts);
    let (f_marginal, m_marginal) = match v.high_member {
        CoupleMember::F => (high_marginal, low_marginal),
        CoupleMember::M => (low_marginal, high_marginal),
    };
    let extras = [(
        (here.clone(), here.clone()),
        (Placement::Unemployed, Placement::Unemployed),
    )];
    let poset = couple_pair_poset(
        &DoctorPref::new(f_marginal),
        &DoctorPref::new(m_marginal),
        &extras,
    )?;
    let witness_pairs = poset.sample_extension(0)?;

    let plan = BTreeMap::new();
    let out = assemble(instance, &v.couple, Some(witness_pairs), &plan, true, &desired)?;

    let witness_text = format!(
        "hospital {} ranks {} above {} and {} above {}, yet prefers seating \
         {} and {} together over seating {} and {}",
        v.hospital.0,
        high.0,
        v.between.0 .0,
        v.between.1 .0,
        low.0,
        high.0,
        low.0,
        v.between.0 .0,
        v.between.1 .0,
    );
    let summary = format!(
        "Hospital {h} is unchanged and must end up holding its favourite team \
         {team}, leaving couple {c} unemployed; but the couple now prefers \
         crowding into {h} and the hospital's own set ranking welcomes the \
         swap of {r1} and {r2} for them, so that outcome is unstable too and \
         no stable matching exists.",
        h = v.hospital.0,
        team = team
            .iter()
            .map(|d| d.0.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        c = v.couple.0,
        r1 = v.between.0 .0,
        r2 = v.between.1 .0,
    );
    let anchors: Vec<DoctorId> = team
        .iter()
        .filter(|d| *d != &v.between.0 && *d != &v.between.1)
        .cloned()
        .collect();
    let report = CounterexampleReport {
        witness: witness_text,
        shape: None,
        couple: v.couple.clone(),
        mover: v.high_member,
        crowded_hospital: v.hospital.clone(),
        contested_hospital: None,
        parking_hospital: None,
        rivals: v.between.clone(),
        anchors,
        summary,
    };
    Ok((out, report))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
