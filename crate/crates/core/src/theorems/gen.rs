//! Deterministic random market generators.
//!
//! Every generator is a pure function of its seed (ChaCha8 throughout), so
//! sweeps are reproducible run to run and machine to machine. Four flavours:
//! markets whose couples are built to satisfy extreme altruism, markets whose
//! hospitals are built to satisfy aversion to couple diversity, fully random
//! markets, and markets engineered to *violate* one condition so the
//! counterexample builders have something to chew on.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Couple, CoupleId, DoctorId, Hospital, HospitalId, Instance, Placement};
use crate::prefs::{couple_pair_poset, diversity_averse_set_order, DoctorPref};

/// A joint ranking that always lets the better-off member lead: pairs are
/// sorted by the best of the two posts, then the worst, then the first
/// member's post. Both members share the one `marginal` ranking.
///
/// The order is responsive — improving one coordinate can only improve the
/// (best, worst) key — and the couple it describes is extremely altruistic:
/// whenever a member could take a post ranked above a shared hospital, the
/// pair containing that post has a strictly better "best" component than the
/// shared pair, so the couple never prefers crowding in together.
pub fn altruistic_pair_order(marginal: &[Placement]) -> Vec<(Placement, Placement)> {
    let mut keyed: Vec<((usize, usize, usize), (Placement, Placement))> = Vec::new();
    for (ra, a) in marginal.iter().enumerate() {
        for (rb, b) in marginal.iter().enumerate() {
            keyed.push(((ra.min(rb), ra.max(rb), ra), (a.clone(), b.clone())));
        }
    }
    keyed.sort_by(|x, y| x.0.cmp(&y.0));
    keyed.into_iter().map(|(_, pair)| pair).collect()
}

fn hospital_id(i: usize) -> HospitalId {
    HospitalId::new(format!("h{}", i + 1))
}

fn posts(n_h: usize) -> Vec<Placement> {
    let mut out: Vec<Placement> = (0..n_h).map(|i| Placement::Hospital(hospital_id(i))).collect();
    out.push(Placement::Unemployed);
    out
}

fn random_ranking(rng: &mut ChaCha8Rng, posts: &[Placement]) -> Vec<Placement> {
    let mut out = posts.to_vec();
    out.shuffle(rng);
    out
}

/// A shuffled hospital ranking over the doctors, occasionally leaving the
/// last one out (an unacceptable doctor).
fn random_individual_order(rng: &mut ChaCha8Rng, doctors: &[DoctorId]) -> Vec<DoctorId> {
    let mut out = doctors.to_vec();
    out.shuffle(rng);
    if out.len() > 2 && rng.gen_bool(0.3) {
        out.pop();
    }
    out
}

struct Roster {
    singles: Vec<DoctorId>,
    couple_names: Vec<(CoupleId, DoctorId, DoctorId)>,
    everyone: Vec<DoctorId>,
}

/// Roll a desk-scale market shape: two or three hospitals with two seats
/// each and at most six doctors, at least one of them a couple.
fn desk_scale_roster(rng: &mut ChaCha8Rng) -> (usize, Vec<u32>, Roster) {
    let n_h = rng.gen_range(2..=3);
    let caps = vec![2u32; n_h];
    let n_couples = rng.gen_range(1..=2);
    let n_singles = if n_couples == 2 {
        2
    } else {
        rng.gen_range(2..=4)
    };
    (n_h, caps, roster(n_singles, n_couples))
}

fn roster(n_singles: usize, n_couples: usize) -> Roster {
    let singles: Vec<DoctorId> = (1..=n_singles)
        .map(|i| DoctorId::new(format!("s{i}")))
        .collect();
    let couple_names: Vec<(CoupleId, DoctorId, DoctorId)> = (1..=n_couples)
        .map(|k| {
            (
                CoupleId::new(format!("c{k}")),
                DoctorId::new(format!("f{k}")),
                DoctorId::new(format!("m{k}")),
            )
        })
        .collect();
    let mut everyone = singles.clone();
    for (_, f, m) in &couple_names {
        everyone.push(f.clone());
        everyone.push(m.clone());
    }
    Roster {
        singles,
        couple_names,
        everyone,
    }
}

fn single_orders(
    rng: &mut ChaCha8Rng,
    singles: &[DoctorId],
    posts: &[Placement],
) -> BTreeMap<DoctorId, Vec<Placement>> {
    singles
        .iter()
        .map(|s| (s.clone(), random_ranking(rng, posts)))
        .collect()
}

/// A random desk-scale market (two-seat hospitals, at most six doctors)
/// whose couples all satisfy extreme altruism: each couple's members share
/// one random ranking and follow [`altruistic_pair_order`]. Hospital set
/// orders are left open so callers can sweep completions.
pub fn random_altruistic_market(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_h, caps, who) = desk_scale_roster(&mut rng);
    let posts = posts(n_h);

    let hospitals: Vec<Hospital> = caps
        .iter()
        .enumerate()
        .map(|(i, &capacity)| Hospital {
            id: hospital_id(i),
            capacity,
            individual_order: random_individual_order(&mut rng, &who.everyone),
            set_order: None,
            set_constraints: vec![],
        })
        .collect();
    let couples: Vec<Couple> = who
        .couple_names
        .iter()
        .map(|(id, f, m)| {
            let marginal = random_ranking(&mut rng, &posts);
            Couple {
                id: id.clone(),
                f: f.clone(),
                m: m.clone(),
                pair_order: altruistic_pair_order(&marginal),
            }
        })
        .collect();
    let doctor_orders = single_orders(&mut rng, &who.singles, &posts);
    Instance {
        hospitals,
        singles: who.singles,
        couples,
        doctor_orders,
    }
}

/// A random desk-scale market (two-seat hospitals, at most six doctors)
/// whose hospitals all rank sets worst-member-first, which makes every one
/// of them averse to couple diversity. Couples get random responsive joint
/// rankings; set orders are concrete.
pub fn random_averse_market(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_h, caps, who) = desk_scale_roster(&mut rng);
    let posts = posts(n_h);

    let hospitals: Vec<Hospital> = caps
        .iter()
        .enumerate()
        .map(|(i, &capacity)| {
            let individual = random_individual_order(&mut rng, &who.everyone);
            Hospital {
                id: hospital_id(i),
                capacity,
                set_order: Some(diversity_averse_set_order(&individual, capacity)),
                individual_order: individual,
                set_constraints: vec![],
            }
        })
        .collect();
    let couples = random_couples(&mut rng, &who, &posts);
    let doctor_orders = single_orders(&mut rng, &who.singles, &posts);
    Instance {
        hospitals,
        singles: who.singles,
        couples,
        doctor_orders,
    }
}

fn random_couples(
    rng: &mut ChaCha8Rng,
    who: &Roster,
    posts: &[Placement],
) -> Vec<Couple> {
    who.couple_names
        .iter()
        .map(|(id, f, m)| {
            let f_marginal = DoctorPref::new(random_ranking(rng, posts));
            let m_marginal = DoctorPref::new(random_ranking(rng, posts));
            let pair_order = couple_pair_poset(&f_marginal, &m_marginal, &[])
                .expect("independent marginals are always consistent")
                .sample_extension(rng.gen())
                .expect("product posets always extend");
            Couple {
                id: id.clone(),
                f: f.clone(),
                m: m.clone(),
                pair_order,
            }
        })
        .collect()
}

/// A fully random market: random capacities, random hospital rankings with a
/// concrete set order (best-member-first or worst-member-first, per coin
/// flip), random singles, couples with random responsive joint rankings.
pub fn random_market(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_h = rng.gen_range(2..=3);
    let caps: Vec<u32> = (0..n_h).map(|_| rng.gen_range(2..=3)).collect();
    let who = roster(rng.gen_range(2..=4), rng.gen_range(1..=2));
    let posts = posts(n_h);

    let hospitals: Vec<Hospital> = caps
        .iter()
        .enumerate()
        .map(|(i, &capacity)| {
            let individual = random_individual_order(&mut rng, &who.everyone);
            let set_order = if rng.gen_bool(0.5) {
                crate::prefs::canonical_set_order(&individual, capacity)
            } else {
                diversity_averse_set_order(&individual, capacity)
            };
            Hospital {
                id: hospital_id(i),
                capacity,
                set_order: Some(set_order),
                individual_order: individual,
                set_constraints: vec![],
            }
        })
        .collect();
    let couples = random_couples(&mut rng, &who, &posts);
    let doctor_orders = single_orders(&mut rng, &who.singles, &posts);
    Instance {
        hospitals,
        singles: who.singles,
        couples,
        doctor_orders,
    }
}

/// A random market guaranteed to violate extreme altruism, rotating through
/// the five geometries a violation can take (split across two hospitals,
/// partner unemployed, both unemployed, mover unemployed, same hospital
/// twice). `seed % 5` picks the geometry; the couple's joint ranking pins
/// the first reported violation to it, the rest of the market is random.
pub fn random_altruism_violating_market(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h1 = || Placement::hospital("h1");
    let h2 = || Placement::hospital("h2");
    let h3 = || Placement::hospital("h3");
    let stay = || Placement::Unemployed;

    // (hospital count, f ranking, m ranking, pinned joint comparisons,
    //  doctors the construction will need besides the couple)
    let (n_h, f_ranking, m_ranking, extras, needed): (
        usize,
        Vec<Placement>,
        Vec<Placement>,
        Vec<((Placement, Placement), (Placement, Placement))>,
        usize,
    ) = match seed % 5 {
        0 => (
            3,
            vec![h2(), h1(), h3(), stay()],
            vec![h1(), h2(), h3(), stay()],
            vec![
                ((h1(), h1()), (h2(), h3())),
                ((h2(), h2()), (h1(), h1())),
            ],
            4,
        ),
        1 => (
            2,
            vec![h2(), h1(), stay()],
            vec![h1(), stay(), h2()],
            vec![((h1(), h1()), (h2(), stay()))],
            3,
        ),
        2 => (
            2,
            vec![stay(), h1(), h2()],
            vec![h1(), h2(), stay()],
            vec![
                ((stay(), h2()), (h1(), h1())),
                ((h1(), h1()), (stay(), stay())),
            ],
            2,
        ),
        3 => (
            2,
            vec![stay(), h1(), h2()],
            vec![h1(), h2(), stay()],
            vec![((h1(), h1()), (stay(), h2()))],
            3,
        ),
        _ => (
            2,
            vec![h2(), h1(), stay()],
            vec![h1(), h2(), stay()],
            vec![((h1(), h1()), (h2(), h2()))],
            3,
        ),
    };
    let pair_order = couple_pair_poset(
        &DoctorPref::new(f_ranking),
        &DoctorPref::new(m_ranking),
        &extras,
    )
    .expect("the pinned comparisons are consistent by construction")
    .sample_extension(rng.gen())
    .expect("constrained pair posets still extend");

    let who = roster(needed + rng.gen_range(0..=1), 1);
    let posts = posts(n_h);
    let hospitals: Vec<Hospital> = (0..n_h)
        .map(|i| {
            let mut individual = who.everyone.clone();
            individual.shuffle(&mut rng);
            Hospital {
                id: hospital_id(i),
                capacity: 2,
                individual_order: individual,
                set_order: None,
                set_constraints: vec![],
            }
        })
        .collect();
    let (id, f, m) = who.couple_names[0].clone();
    let doctor_orders = single_orders(&mut rng, &who.singles, &posts);
    Instance {
        hospitals,
        singles: who.singles,
        couples: vec![Couple {
            id,
            f,
            m,
            pair_order,
        }],
        doctor_orders,
    }
}

/// A random market guaranteed to violate aversion to couple diversity: the
/// first hospital ranks one couple member first and the other last, with
/// every single in between, and its best-member-first set order then prefers
/// the couple's seats over the two best singles'. Everything else is random.
pub fn random_diversity_violating_market(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let who = roster(rng.gen_range(3..=4), 1);
    let n_h = 2;
    let posts = posts(n_h);
    let (id, f, m) = who.couple_names[0].clone();

    let mut straddling = vec![f.clone()];
    straddling.extend(who.singles.iter().cloned());
    straddling.push(m.clone());
    let h2_individual = random_individual_order(&mut rng, &who.everyone);
    let hospitals = vec![
        Hospital {
            id: hospital_id(0),
            capacity: 2,
            set_order: Some(crate::prefs::canonical_set_order(&straddling, 2)),
            individual_order: straddling,
            set_constraints: vec![],
        },
        Hospital {
            id: hospital_id(1),
            capacity: 2,
            set_order: Some(crate::prefs::canonical_set_order(&h2_individual, 2)),
            individual_order: h2_individual,
            set_constraints: vec![],
        },
    ];
    let f_marginal = DoctorPref::new(random_ranking(&mut rng, &posts));
    let m_marginal = DoctorPref::new(random_ranking(&mut rng, &posts));
    let pair_order = couple_pair_poset(&f_marginal, &m_marginal, &[])
        .expect("independent marginals are always consistent")
        .sample_extension(rng.gen())
        .expect("product posets always extend");
    let doctor_orders = single_orders(&mut rng, &who.singles, &posts);
    Instance {
        hospitals,
        singles: who.singles,
        couples: vec![Couple {
            id,
            f,
            m,
            pair_order,
        }],
        doctor_orders,
    }
}
