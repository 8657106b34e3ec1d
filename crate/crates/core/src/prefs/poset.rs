//! Partial orders capturing exactly the comparisons a responsive preference
//! family forces, plus enumeration and seeded sampling of their completions.
//!
//! Two grounds occur: a couple's post pairs (the product of the two members'
//! rankings) and a hospital's feasible doctor sets. For doctor sets with
//! capacity at least three, deciding one free comparison can force others
//! (adding a common doctor to both sides must not flip a comparison), so the
//! poset carries *linked classes* of pairs that every completion must decide
//! the same way; enumeration and sampling propagate those links.

use super::DoctorPref;
use crate::model::{feasible_subsets, DoctorId, Instance, Placement, SetConstraint};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PosetError {
    #[error("inconsistent preference constraints: {a} and {b} are each required above the other")]
    Inconsistent { a: String, b: String },
    #[error("a constraint refers to elements outside the ground: {0}")]
    BadConstraint(String),
    #[error("extension enumeration cap of {cap} exceeded")]
    CapExceeded { cap: u64 },
    #[error("the constraints admit no completion")]
    NoExtension,
    #[error("ground of {n} elements exceeds the supported maximum of {max}")]
    TooLarge { n: usize, max: usize },
}

const MAX_ELEMS: usize = 512;

/// Strict-relation matrix over elements, closed under transitivity.
#[derive(Clone, Debug)]
struct Matrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Matrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        Matrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] & (1 << (j % 64)) != 0
    }

    fn close(&mut self) {
        for k in 0..self.n {
            for i in 0..self.n {
                if self.get(i, k) {
                    for w in 0..self.words {
                        let kw = self.bits[k * self.words + w];
                        self.bits[i * self.words + w] |= kw;
                    }
                }
            }
        }
    }

    /// After closing, a self-relation means two elements are forced above
    /// each other; report such a pair.
    fn find_contradiction(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            if self.get(i, i) {
                for j in 0..self.n {
                    if j != i && self.get(i, j) && self.get(j, i) {
                        return Some((i, j));
                    }
                }
                return Some((i, i));
            }
        }
        None
    }
}

/// A partial order over the completions of one responsive family, with the
/// linked decision classes a completion must respect.
#[derive(Debug)]
pub struct ResponsivePoset<T> {
    elems: Vec<T>,
    mat: Matrix,
    /// Groups of ordered pairs decided together; both orientations present.
    classes: Vec<Vec<(u32, u32)>>,
    pair_class: BTreeMap<(u32, u32), u32>,
}

impl<T: Clone + PartialEq> ResponsivePoset<T> {
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elements(&self) -> &[T] {
        &self.elems
    }

    /// True when element `above` is forced above element `below` (indices
    /// into [`Self::elements`]).
    pub fn forced(&self, above: usize, below: usize) -> bool {
        self.mat.get(above, below)
    }

    /// Enumerate all completions, best element first, in a fixed order.
    /// Aborts with [`PosetError::CapExceeded`] when more than `cap`
    /// completions exist rather than truncating.
    pub fn enumerate_extensions(&self, cap: u64) -> Result<Vec<Vec<T>>, PosetError> {
        let n = self.elems.len();
        let mut out: Vec<Vec<u32>> = Vec::new();
        let mut order: Vec<u32> = Vec::with_capacity(n);
        let mut remaining = vec![true; n];
        if self.classes.is_empty() {
            self.rec_plain(&mut order, &mut remaining, &mut out, cap, None)?;
        } else {
            let mat = self.mat.clone();
            self.rec_linked(&mut order, &mut remaining, &mat, &mut out, cap, None)?;
        }
        Ok(out
            .into_iter()
            .map(|o| o.into_iter().map(|i| self.elems[i as usize].clone()).collect())
            .collect())
    }

    /// Draw one completion uniformly enough for sweeps: a seeded random
    /// descent with backtracking. Identical seeds give identical results.
    pub fn sample_extension(&self, seed: u64) -> Result<Vec<T>, PosetError> {
        let n = self.elems.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<Vec<u32>> = Vec::new();
        let mut order: Vec<u32> = Vec::with_capacity(n);
        let mut remaining = vec![true; n];
        if self.classes.is_empty() {
            self.rec_plain(&mut order, &mut remaining, &mut out, u64::MAX, Some(&mut rng))?;
        } else {
            let mat = self.mat.clone();
            self.rec_linked(&mut order, &mut remaining, &mat, &mut out, u64::MAX, Some(&mut rng))?;
        }
        match out.into_iter().next() {
            Some(o) => Ok(o.into_iter().map(|i| self.elems[i as usize].clone()).collect()),
            None => Err(PosetError::NoExtension),
        }
    }

    /// The completion sorting elements by `key`, if that order respects the
    /// forced relations and linked classes. Keys must be strict.
    pub fn canonical_extension_with<K: Ord>(&self, key: impl Fn(&T) -> K) -> Option<Vec<T>> {
        let mut idx: Vec<usize> = (0..self.elems.len()).collect();
        idx.sort_by(|&a, &b| key(&self.elems[a]).cmp(&key(&self.elems[b])));
        if self.is_valid_index_order(&idx) {
            Some(idx.into_iter().map(|i| self.elems[i].clone()).collect())
        } else {
            None
        }
    }

    /// True when `order` (best first) is a completion: it contains every
    /// element once and respects forced relations and linked classes.
    pub fn is_extension(&self, order: &[T]) -> bool {
        if order.len() != self.elems.len() {
            return false;
        }
        let mut idx = Vec::with_capacity(order.len());
        for e in order {
            match self.elems.iter().position(|x| x == e) {
                Some(i) if !idx.contains(&i) => idx.push(i),
                _ => return false,
            }
        }
        self.is_valid_index_order(&idx)
    }

    fn is_valid_index_order(&self, idx: &[usize]) -> bool {
        let n = self.elems.len();
        let mut pos = vec![0usize; n];
        for (p, &i) in idx.iter().enumerate() {
            pos[i] = p;
        }
        for i in 0..n {
            for j in 0..n {
                if self.mat.get(i, j) && pos[i] > pos[j] {
                    return false;
                }
            }
        }
        for class in &self.classes {
            let mut dir: Option<bool> = None;
            for &(a, b) in class {
                let d = pos[a as usize] < pos[b as usize];
                match dir {
                    None => dir = Some(d),
                    Some(prev) if prev != d => return false,
                    _ => {}
                }
            }
        }
        true
    }

    /// Plain descent: no linked classes, so any topological order works.
    fn rec_plain(
        &self,
        order: &mut Vec<u32>,
        remaining: &mut Vec<bool>,
        out: &mut Vec<Vec<u32>>,
        cap: u64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(), PosetError> {
        let n = self.elems.len();
        if order.len() == n {
            if out.len() as u64 >= cap {
                return Err(PosetError::CapExceeded { cap });
            }
            out.push(order.clone());
            return Ok(());
        }
        let mut cands: Vec<usize> = (0..n)
            .filter(|&i| remaining[i] && (0..n).all(|j| !remaining[j] || !self.mat.get(j, i)))
            .collect();
        if let Some(r) = rng.as_deref_mut() {
            cands.shuffle(r);
        }
        for i in cands {
            remaining[i] = false;
            order.push(i as u32);
            let res = self.rec_plain(order, remaining, out, cap, rng.as_deref_mut());
            order.pop();
            remaining[i] = true;
            res?;
            // Sampling needs a single completion.
            if rng.is_some() && !out.is_empty() {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Descent with propagation: placing an element decides it above all
    /// remaining ones, and each decision drags its linked class along.
    /// Branches whose accumulated decisions turn cyclic are pruned.
    fn rec_linked(
        &self,
        order: &mut Vec<u32>,
        remaining: &mut Vec<bool>,
        mat: &Matrix,
        out: &mut Vec<Vec<u32>>,
        cap: u64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(), PosetError> {
        let n = self.elems.len();
        if order.len() == n {
            if out.len() as u64 >= cap {
                return Err(PosetError::CapExceeded { cap });
            }
            out.push(order.clone());
            return Ok(());
        }
        let mut cands: Vec<usize> = (0..n)
            .filter(|&i| remaining[i] && (0..n).all(|j| !remaining[j] || !mat.get(j, i)))
            .collect();
        if let Some(r) = rng.as_deref_mut() {
            cands.shuffle(r);
        }
        for i in cands {
            let mut m2 = mat.clone();
            for r in 0..n {
                if r != i && remaining[r] && !m2.get(i, r) {
                    m2.set(i, r);
                }
            }
            if !self.saturate(&mut m2) {
                continue;
            }
            remaining[i] = false;
            order.push(i as u32);
            let res = self.rec_linked(order, remaining, &m2, out, cap, rng.as_deref_mut());
            order.pop();
            remaining[i] = true;
            res?;
            if rng.is_some() && !out.is_empty() {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Close `m` under transitivity and linked classes until stable.
    /// Returns false when the decisions contradict each other.
    fn saturate(&self, m: &mut Matrix) -> bool {
        loop {
            m.close();
            if m.find_contradiction().is_some() {
                return false;
            }
            let mut changed = false;
            for (&(a, b), &cx) in &self.pair_class {
                if m.get(a as usize, b as usize) {
                    for &(x, y) in &self.classes[cx as usize] {
                        if !m.get(x as usize, y as usize) {
                            m.set(x as usize, y as usize);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }
}

fn finish_build<T: Clone + PartialEq>(
    elems: Vec<T>,
    mut mat: Matrix,
    classes: Vec<Vec<(u32, u32)>>,
    pair_class: BTreeMap<(u32, u32), u32>,
    render: impl Fn(&T) -> String,
) -> Result<ResponsivePoset<T>, PosetError> {
    mat.close();
    if let Some((i, j)) = mat.find_contradiction() {
        return Err(PosetError::Inconsistent {
            a: render(&elems[i]),
            b: render(&elems[j]),
        });
    }
    Ok(ResponsivePoset {
        elems,
        mat,
        classes,
        pair_class,
    })
}

fn render_pair(p: &(Placement, Placement)) -> String {
    format!("({}, {})", p.0, p.1)
}

/// Build the partial order a couple's marginals force over post pairs:
/// `(a, b)` is above `(a', b')` exactly when the first member ranks `a` at
/// least as high as `a'`, the second ranks `b` at least as high as `b'`, and
/// the pairs differ. `extras` add further required comparisons.
///
/// Because the marginals are complete, completions of this order are exactly
/// the responsive couple rankings with those marginals, so no linked classes
/// arise.
pub fn couple_pair_poset(
    f: &DoctorPref,
    m: &DoctorPref,
    extras: &[((Placement, Placement), (Placement, Placement))],
) -> Result<ResponsivePoset<(Placement, Placement)>, PosetError> {
    let fs: BTreeSet<&Placement> = f.ranking.iter().collect();
    let ms: BTreeSet<&Placement> = m.ranking.iter().collect();
    if fs != ms {
        return Err(PosetError::BadConstraint(
            "the two marginals rank different post sets".into(),
        ));
    }
    let nf = f.ranking.len();
    let nm = m.ranking.len();
    let n = nf * nm;
    if n > MAX_ELEMS {
        return Err(PosetError::TooLarge { n, max: MAX_ELEMS });
    }
    let mut elems = Vec::with_capacity(n);
    for a in &f.ranking {
        for b in &m.ranking {
            elems.push((a.clone(), b.clone()));
        }
    }
    let mut mat = Matrix::new(n);
    for ra in 0..nf {
        for rb in 0..nm {
            let i = ra * nm + rb;
            if ra + 1 < nf {
                mat.set(i, (ra + 1) * nm + rb);
            }
            if rb + 1 < nm {
                mat.set(i, ra * nm + rb + 1);
            }
        }
    }
    for (hi, lo) in extras {
        let find = |p: &(Placement, Placement)| elems.iter().position(|e| e == p);
        match (find(hi), find(lo)) {
            (Some(i), Some(j)) if i != j => mat.set(i, j),
            (Some(_), Some(_)) => {
                return Err(PosetError::BadConstraint(format!(
                    "constraint compares {} with itself",
                    render_pair(hi)
                )))
            }
            _ => {
                return Err(PosetError::BadConstraint(format!(
                    "unknown pair in constraint {} above {}",
                    render_pair(hi),
                    render_pair(lo)
                )))
            }
        }
    }
    finish_build(elems, mat, Vec::new(), BTreeMap::new(), render_pair)
}

/// Build the partial order responsiveness forces over a hospital's feasible
/// doctor sets: supersets beat subsets, swapping in a higher-ranked doctor
/// improves a set, and `extras` add required comparisons, which propagate to
/// every pair obtained by adding common doctors while below capacity.
///
/// Free comparisons that responsiveness links together (same two sets plus
/// different common doctors) are recorded as classes; with capacity two no
/// links exist because a two-doctor side cannot grow further.
pub fn hospital_set_poset(
    individual: &[DoctorId],
    capacity: u32,
    extras: &[SetConstraint],
) -> Result<ResponsivePoset<BTreeSet<DoctorId>>, PosetError> {
    let nd = individual.len();
    let cap = capacity.min(nd as u32);
    let ground: u64 = if nd == 0 { 0 } else { (!0u64) >> (64 - nd) };
    let masks = feasible_subsets(ground, cap);
    let n = masks.len();
    if n > MAX_ELEMS {
        return Err(PosetError::TooLarge { n, max: MAX_ELEMS });
    }
    let ix: BTreeMap<u64, usize> = masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let to_set = |mask: u64| -> BTreeSet<DoctorId> {
        (0..nd)
            .filter(|d| mask & (1 << d) != 0)
            .map(|d| individual[d].clone())
            .collect()
    };
    let render = |s: &BTreeSet<DoctorId>| {
        let inner = s.iter().map(|d| d.0.as_str()).collect::<Vec<_>>().join(", ");
        format!("{{{inner}}}")
    };

    let mut mat = Matrix::new(n);
    for (i, &a) in masks.iter().enumerate() {
        // Supersets beat subsets (chains of one-doctor removals).
        let mut rest = a;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            mat.set(i, ix[&(a & !bit)]);
            rest &= rest - 1;
        }
        // Swapping a doctor for a higher-ranked one improves the set.
        if (a.count_ones()) < cap {
            for hi in 0..nd {
                if a & (1 << hi) != 0 {
                    continue;
                }
                for lo in (hi + 1)..nd {
                    if a & (1 << lo) != 0 {
                        continue;
                    }
                    mat.set(ix[&(a | (1 << hi))], ix[&(a | (1 << lo))]);
                }
            }
        }
    }
    for sc in extras {
        let side = |ids: &[DoctorId]| -> Result<usize, PosetError> {
            let mut mask = 0u64;
            for d in ids {
                match individual.iter().position(|x| x == d) {
                    Some(i) => mask |= 1 << i,
                    None => {
                        return Err(PosetError::BadConstraint(format!(
                            "{d} is not an acceptable doctor"
                        )))
                    }
                }
            }
            ix.get(&mask).copied().ok_or_else(|| {
                PosetError::BadConstraint(format!("set {} is not feasible", render(&to_set(mask))))
            })
        };
        let (hi, lo) = (side(sc.better())?, side(sc.worse())?);
        if hi == lo {
            return Err(PosetError::BadConstraint(format!(
                "constraint compares {} with itself",
                render(&to_set(masks[hi]))
            )));
        }
        mat.set(hi, lo);
    }

    // Fixpoint: forced comparisons lift by adding a common doctor (both
    // sides below capacity) and project by removing one; repeat with
    // transitive closure until stable, then check consistency.
    loop {
        mat.close();
        if mat.find_contradiction().is_some() {
            break;
        }
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i == j || !mat.get(i, j) {
                    continue;
                }
                let (a, b) = (masks[i], masks[j]);
                if a.count_ones() < cap && b.count_ones() < cap {
                    for d in 0..nd {
                        let bit = 1u64 << d;
                        if a & bit == 0 && b & bit == 0 {
                            let (li, lj) = (ix[&(a | bit)], ix[&(b | bit)]);
                            if !mat.get(li, lj) {
                                mat.set(li, lj);
                                changed = true;
                            }
                        }
                    }
                }
                let mut common = a & b;
                while common != 0 {
                    let bit = common & common.wrapping_neg();
                    let (ui, uj) = (ix[&(a & !bit)], ix[&(b & !bit)]);
                    if ui != uj && !mat.get(ui, uj) {
                        mat.set(ui, uj);
                        changed = true;
                    }
                    common &= common - 1;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Linked classes: free pairs sharing the same disjoint cores must be
    // decided the same way in any completion.
    let mut groups: BTreeMap<(u64, u64), Vec<(u32, u32)>> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || mat.get(i, j) || mat.get(j, i) {
                continue;
            }
            let (a, b) = (masks[i], masks[j]);
            groups
                .entry((a & !b, b & !a))
                .or_default()
                .push((i as u32, j as u32));
        }
    }
    let mut classes = Vec::new();
    let mut pair_class = BTreeMap::new();
    for (_, members) in groups {
        if members.len() < 2 {
            continue;
        }
        let cx = classes.len() as u32;
        for &p in &members {
            pair_class.insert(p, cx);
        }
        classes.push(members);
    }

    let elems: Vec<BTreeSet<DoctorId>> = masks.iter().map(|&m| to_set(m)).collect();
    finish_build(elems, mat, classes, pair_class, render)
}

/// The canonical responsive set order: larger sets first, ties broken by the
/// sorted vector of doctor ranks (best doctors first).
///
/// For equal-size sets this compares by who owns the best doctor outside the
/// overlap, which is invariant under adding or removing common doctors, so
/// the order satisfies every responsiveness clause.
pub fn canonical_set_order(individual: &[DoctorId], capacity: u32) -> Vec<Vec<DoctorId>> {
    let nd = individual.len();
    let cap = capacity.min(nd as u32);
    let ground: u64 = if nd == 0 { 0 } else { (!0u64) >> (64 - nd) };
    let mut masks = feasible_subsets(ground, cap);
    let key = |mask: u64| {
        let ranks: Vec<usize> = (0..nd).filter(|d| mask & (1 << d) != 0).collect();
        (usize::MAX - ranks.len(), ranks)
    };
    masks.sort_by_key(|&m| key(m));
    masks
        .into_iter()
        .map(|m| {
            (0..nd)
                .filter(|d| m & (1 << d) != 0)
                .map(|d| individual[d].clone())
                .collect()
        })
        .collect()
}

/// A responsive set order for a maximally diversity-averse hospital:
/// larger sets first, ties broken by the sorted vector of doctor ranks
/// compared from the worst doctor down.
///
/// For equal-size sets this compares by who owns the worst doctor outside
/// the overlap (that owner loses), which is invariant under adding or
/// removing common doctors, so the order satisfies every responsiveness
/// clause. Whenever a couple straddles two middle doctors in the
/// individual ranking, the middle pair's worst member beats the couple's
/// worst member, so the hospital prefers the middle pair — the defining
/// trait of aversion to couple diversity.
pub fn diversity_averse_set_order(individual: &[DoctorId], capacity: u32) -> Vec<Vec<DoctorId>> {
    let nd = individual.len();
    let cap = capacity.min(nd as u32);
    let ground: u64 = if nd == 0 { 0 } else { (!0u64) >> (64 - nd) };
    let mut masks = feasible_subsets(ground, cap);
    let key = |mask: u64| {
        let mut ranks: Vec<usize> = (0..nd).filter(|d| mask & (1 << d) != 0).collect();
        ranks.reverse();
        (usize::MAX - ranks.len(), ranks)
    };
    masks.sort_by_key(|&m| key(m));
    masks
        .into_iter()
        .map(|m| {
            (0..nd)
                .filter(|d| m & (1 << d) != 0)
                .map(|d| individual[d].clone())
                .collect()
        })
        .collect()
}

/// Fill in every missing hospital set order: the canonical order when it
/// honors the hospital's declared constraints, otherwise a seeded sample
/// from the constrained poset (seed 0 when none is given). Explicit set
/// orders are kept untouched.
pub fn concretize(instance: &Instance, seed: Option<u64>) -> Result<Instance, PosetError> {
    let mut out = instance.clone();
    for h in &mut out.hospitals {
        if h.set_order.is_some() {
            continue;
        }
        let poset = hospital_set_poset(&h.individual_order, h.capacity, &h.set_constraints)?;
        let rank: BTreeMap<&DoctorId, usize> = h
            .individual_order
            .iter()
            .enumerate()
            .map(|(i, d)| (d, i))
            .collect();
        let key = |s: &BTreeSet<DoctorId>| {
            let mut ranks: Vec<usize> = s.iter().map(|d| rank[d]).collect();
            ranks.sort_unstable();
            (usize::MAX - s.len(), ranks)
        };
        let chosen = match poset.canonical_extension_with(key) {
            Some(order) => order,
            None => poset.sample_extension(seed.unwrap_or(0))?,
        };
        h.set_order = Some(
            chosen
                .iter()
                .map(|s| {
                    let mut ids: Vec<DoctorId> = s.iter().cloned().collect();
                    ids.sort_by_key(|d| rank[d]);
                    ids
                })
                .collect(),
        );
    }
    Ok(out)
}
