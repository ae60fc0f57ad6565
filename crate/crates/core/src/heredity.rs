//! Strong effect heredity over the lattice of (effect set, resolution) pairs.
//!
//! Effect sets hold 0-based input indices internally; `Display` renders them
//! 1-based, matching how inputs are usually named.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A component function `f_u` at resolution level `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EffectResolution {
    u: Vec<u32>,
    r: u32,
}

impl EffectResolution {
    /// Builds a pair from any index list; indices are sorted and deduplicated.
    pub fn new(mut u: Vec<u32>, r: u32) -> Result<Self> {
        u.sort_unstable();
        u.dedup();
        if u.is_empty() || r == 0 {
            return Err(Error::ParameterRange(format!(
                "effect set must be nonempty and level positive (u = {u:?}, r = {r})"
            )));
        }
        Ok(Self { u, r })
    }

    pub fn main(j: u32, r: u32) -> Self {
        Self { u: vec![j], r }
    }

    pub fn effects(&self) -> &[u32] {
        &self.u
    }

    pub fn level(&self) -> u32 {
        self.r
    }

    pub fn order(&self) -> usize {
        self.u.len()
    }

    /// `v ⊆ u` and `s <= r`.
    pub fn is_ancestor_or_self_of(&self, other: &EffectResolution) -> bool {
        self.r <= other.r && is_subset(&self.u, &other.u)
    }

    pub fn parents(&self) -> Vec<EffectResolution> {
        let mut out = Vec::new();
        if self.r > 1 {
            out.push(Self {
                u: self.u.clone(),
                r: self.r - 1,
            });
        }
        if self.u.len() > 1 {
            for skip in 0..self.u.len() {
                let u = self
                    .u
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &j)| j)
                    .collect();
                out.push(Self { u, r: self.r });
            }
        }
        out.sort();
        out
    }

    /// Inverse of [`parents`](Self::parents) inside the lattice bounded by
    /// `d` inputs, interaction order `d_max` and level `r_max`.
    pub fn children(&self, d: usize, d_max: usize, r_max: u32) -> Vec<EffectResolution> {
        let mut out = Vec::new();
        if self.r < r_max {
            out.push(Self {
                u: self.u.clone(),
                r: self.r + 1,
            });
        }
        if self.u.len() < d_max {
            for j in 0..d as u32 {
                if self.u.binary_search(&j).is_err() {
                    let mut u = self.u.clone();
                    u.push(j);
                    u.sort_unstable();
                    out.push(Self { u, r: self.r });
                }
            }
        }
        out.sort();
        out
    }

    /// Every `(v, s)` with nonempty `v ⊆ u` and `s <= r`, in canonical order.
    pub fn down_set(&self) -> Vec<EffectResolution> {
        let m = self.u.len();
        let mut out = Vec::new();
        for mask in 1u64..(1u64 << m) {
            let v: Vec<u32> = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| self.u[b]).collect();
            for s in 1..=self.r {
                out.push(Self { u: v.clone(), r: s });
            }
        }
        out.sort();
        out
    }
}

fn is_subset(small: &[u32], big: &[u32]) -> bool {
    small.iter().all(|j| big.binary_search(j).is_ok())
}

impl Ord for EffectResolution {
    fn cmp(&self, other: &Self) -> Ordering {
        self.u
            .len()
            .cmp(&other.u.len())
            .then_with(|| self.u.cmp(&other.u))
            .then_with(|| self.r.cmp(&other.r))
    }
}

impl PartialOrd for EffectResolution {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EffectResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({{")?;
        for (i, j) in self.u.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}},{})", self.r)
    }
}

/// True iff every member's parents are members too.
pub fn is_heredity_closed<'a, I>(set: I) -> bool
where
    I: IntoIterator<Item = &'a EffectResolution>,
{
    let set: BTreeSet<&EffectResolution> = set.into_iter().collect();
    set.iter()
        .all(|g| g.parents().iter().all(|p| set.contains(p)))
}

/// Smallest heredity-closed superset of `set`.
pub fn heredity_closure<'a, I>(set: I) -> BTreeSet<EffectResolution>
where
    I: IntoIterator<Item = &'a EffectResolution>,
{
    let mut out = BTreeSet::new();
    for g in set {
        out.extend(g.down_set());
    }
    out
}

/// Lattice bounds: `d` inputs, interaction order `d_max`, level `r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeBounds {
    pub d: usize,
    pub d_max: usize,
    pub r_max: u32,
}

/// Groups outside `candidates` all of whose parents are in `active`, in
/// canonical order.
pub fn eligible_children(
    active: &BTreeSet<EffectResolution>,
    candidates: &BTreeSet<EffectResolution>,
    bounds: LatticeBounds,
) -> Vec<EffectResolution> {
    let mut out = BTreeSet::new();
    for a in active {
        for child in a.children(bounds.d, bounds.d_max, bounds.r_max) {
            if !candidates.contains(&child) && child.parents().iter().all(|p| active.contains(p)) {
                out.insert(child);
            }
        }
    }
    out.into_iter().collect()
}

/// `candidates ∪ eligible_children(active, candidates)`.
pub fn expand_candidates(
    active: &BTreeSet<EffectResolution>,
    candidates: &BTreeSet<EffectResolution>,
    bounds: LatticeBounds,
) -> BTreeSet<EffectResolution> {
    let mut out = candidates.clone();
    out.extend(eligible_children(active, candidates, bounds));
    out
}

/// Candidate groups in insertion order, their atom counts, and the active set.
///
/// A group `(u, r)` owns the coefficients of every candidate `(v, s)` with
/// `v ⊆ u`, `s <= r`; its penalty weight is `N_u(r)`, the total atom count
/// over that down-set.
#[derive(Debug, Clone, Default)]
pub struct GroupStructure {
    candidates: Vec<EffectResolution>,
    index: BTreeMap<EffectResolution, usize>,
    atom_counts: BTreeMap<EffectResolution, usize>,
    active: BTreeSet<EffectResolution>,
}

impl GroupStructure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a candidate and its atom count. Returns its candidate index.
    pub fn add_candidate(&mut self, g: EffectResolution, n_atoms: usize) -> usize {
        if let Some(&i) = self.index.get(&g) {
            return i;
        }
        let i = self.candidates.len();
        self.atom_counts.insert(g.clone(), n_atoms);
        self.index.insert(g.clone(), i);
        self.candidates.push(g);
        i
    }

    pub fn register_atom_count(&mut self, g: EffectResolution, n_atoms: usize) {
        self.atom_counts.insert(g, n_atoms);
    }

    pub fn candidates(&self) -> &[EffectResolution] {
        &self.candidates
    }

    pub fn candidate_set(&self) -> BTreeSet<EffectResolution> {
        self.candidates.iter().cloned().collect()
    }

    pub fn index_of(&self, g: &EffectResolution) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn active(&self) -> &BTreeSet<EffectResolution> {
        &self.active
    }

    pub fn set_active(&mut self, active: BTreeSet<EffectResolution>) {
        debug_assert!(active.iter().all(|g| self.index.contains_key(g)));
        self.active = active;
    }

    pub fn atom_count(&self, g: &EffectResolution) -> Option<usize> {
        self.atom_counts.get(g).copied()
    }

    /// `N_u(r) = sum_{v ⊆ u} sum_{s <= r} n_v(s)`.
    pub fn group_weight(&self, g: &EffectResolution) -> Result<usize> {
        g.down_set()
            .iter()
            .map(|v| self.atom_count(v).ok_or_else(|| Error::MissingAtomCount(v.clone())))
            .sum()
    }

    /// Candidate indices of the down-set of candidate `i`, ascending.
    pub fn members(&self, i: usize) -> Vec<usize> {
        let g = &self.candidates[i];
        let mut out: Vec<usize> = g
            .down_set()
            .iter()
            .filter_map(|v| self.index.get(v).copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Number of candidate groups whose down-set contains `v`.
    pub fn replicate_count(&self, v: &EffectResolution) -> usize {
        self.candidates
            .iter()
            .filter(|g| v.is_ancestor_or_self_of(g))
            .count()
    }

    pub fn is_heredity_closed(&self) -> bool {
        is_heredity_closed(self.candidates.iter())
    }
}
