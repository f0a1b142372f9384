//! Weight-preserving permutation actions on the marginals.
//!
//! Every permutation of a finite support is periodic, so orbit averages are
//! finite exact sums. Actions act on index tuples componentwise; the slot
//! shift σ is kept separate because it moves marginals, not points.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMarginal;

/// Default cap on the size of a generated group.
pub const DEFAULT_GROUP_CAP: usize = 100_000;

/// A bijection of `{0, …, m−1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(images: Vec<usize>) -> Result<Self> {
        Self::new(images)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!(
                    "{images:?} is not a bijection of 0..{}",
                    images.len()
                )));
            }
        }
        Ok(Self(images))
    }

    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    /// Cyclic shift `i ↦ i + 1 mod len`.
    pub fn cycle(len: usize) -> Self {
        Self((0..len).map(|i| (i + 1) % len.max(1)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self(other.0.iter().map(|&i| self.0[i]).collect())
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Self(inv)
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::identity(self.len());
        for _ in 0..k {
            out = self.compose(&out);
        }
        out
    }

    /// Cycle decomposition, each cycle starting at its smallest index.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.0.len()];
        let mut out = Vec::new();
        for start in 0..self.0.len() {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                cycle.push(i);
                i = self.0[i];
            }
            out.push(cycle);
        }
        out
    }

    /// Least `m ≥ 1` with `self^m = id`.
    pub fn period(&self) -> usize {
        self.cycles().iter().map(Vec::len).fold(1, lcm)
    }

    pub fn preserves(&self, weights: &[f64]) -> Option<usize> {
        (0..self.0.len()).find(|&i| weights[self.0[i]] != weights[i])
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// A weight-preserving permutation of one marginal's support.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarginalMap {
    pub perm: Permutation,
    pub marginal: usize,
}

impl MarginalMap {
    /// Validates size and exact weight preservation against `m`.
    pub fn new(perm: Permutation, marginal: usize, m: &DiscreteMarginal) -> Result<Self> {
        let map = Self { perm, marginal };
        map.check_against(m)?;
        Ok(map)
    }

    pub fn check_against(&self, m: &DiscreteMarginal) -> Result<()> {
        if self.perm.len() != m.len() {
            return Err(Error::InvalidPermutation(format!(
                "map on marginal {} has {} entries, support has {}",
                self.marginal,
                self.perm.len(),
                m.len()
            )));
        }
        if let Some(index) = self.perm.preserves(&m.weights) {
            return Err(Error::NotMeasurePreserving {
                marginal: self.marginal,
                index,
            });
        }
        Ok(())
    }
}

pub fn period(map: &MarginalMap) -> usize {
    map.perm.period()
}

pub fn orbits(map: &MarginalMap) -> Vec<Vec<usize>> {
    let mut cycles = map.perm.cycles();
    for c in &mut cycles {
        c.sort_unstable();
    }
    cycles
}

/// `(R_1, …, R_n)` acting componentwise on index tuples.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductAction {
    pub maps: Vec<MarginalMap>,
}

impl ProductAction {
    /// Builds an action from raw permutations, one per marginal, in order.
    pub fn from_perms(perms: Vec<Vec<usize>>) -> Result<Self> {
        let maps = perms
            .into_iter()
            .enumerate()
            .map(|(marginal, p)| {
                Ok(MarginalMap {
                    perm: Permutation::new(p)?,
                    marginal,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { maps })
    }

    /// The same permutation on every one of `n` marginals.
    pub fn diagonal(perm: &Permutation, n: usize) -> Self {
        Self {
            maps: (0..n)
                .map(|marginal| MarginalMap {
                    perm: perm.clone(),
                    marginal,
                })
                .collect(),
        }
    }

    pub fn identity(marginals: &[DiscreteMarginal]) -> Self {
        Self {
            maps: marginals
                .iter()
                .enumerate()
                .map(|(marginal, m)| MarginalMap {
                    perm: Permutation::identity(m.len()),
                    marginal,
                })
                .collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.maps.len()
    }

    pub fn check_against(&self, marginals: &[DiscreteMarginal]) -> Result<()> {
        if self.maps.len() != marginals.len() {
            return Err(Error::DimensionMismatch(format!(
                "action has {} components for {} marginals",
                self.maps.len(),
                marginals.len()
            )));
        }
        for (j, (map, m)) in self.maps.iter().zip(marginals).enumerate() {
            if map.marginal != j {
                return Err(Error::InvalidPermutation(format!(
                    "component {j} refers to marginal {}",
                    map.marginal
                )));
            }
            map.check_against(m)?;
        }
        Ok(())
    }

    pub fn perm(&self, j: usize) -> &Permutation {
        &self.maps[j].perm
    }

    pub fn perm_slices(&self) -> Vec<&[usize]> {
        self.maps.iter().map(|m| m.perm.as_slice()).collect()
    }

    /// Image of a tuple.
    pub fn apply_tuple(&self, t: &[usize], out: &mut [usize]) {
        for (j, m) in self.maps.iter().enumerate() {
            out[j] = m.perm.apply(t[j]);
        }
    }

    /// `self ∘ other`, componentwise.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            maps: self
                .maps
                .iter()
                .zip(&other.maps)
                .map(|(a, b)| MarginalMap {
                    perm: a.perm.compose(&b.perm),
                    marginal: a.marginal,
                })
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.maps.iter().all(|m| m.perm.is_identity())
    }

    /// lcm of the component periods.
    pub fn period(&self) -> usize {
        self.maps.iter().map(|m| m.perm.period()).fold(1, lcm)
    }
}

/// True iff `a ∘ b = b ∘ a` componentwise.
pub fn check_commuting(a: &ProductAction, b: &ProductAction) -> bool {
    a.compose(b) == b.compose(a)
}

/// A finite group of product actions together with its generators.
#[derive(Clone, Debug)]
pub struct ActionFamily {
    pub generators: Vec<ProductAction>,
    /// Identity first, then breadth-first by generator index.
    pub elements: Vec<ProductAction>,
    /// Generators commute pairwise.
    pub commuting: bool,
}

impl ActionFamily {
    /// The trivial group on the given marginals.
    pub fn trivial(marginals: &[DiscreteMarginal]) -> Self {
        let id = ProductAction::identity(marginals);
        Self {
            generators: Vec::new(),
            elements: vec![id],
            commuting: true,
        }
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn arity(&self) -> usize {
        self.elements[0].arity()
    }

    pub fn check_against(&self, marginals: &[DiscreteMarginal]) -> Result<()> {
        self.elements
            .iter()
            .try_for_each(|g| g.check_against(marginals))
    }

    /// Orbits of the group's `j`-th component on marginal `j`'s support.
    pub fn orbits(&self, j: usize) -> OrbitPartition {
        let len = self.elements[0].perm(j).len();
        OrbitPartition::generated_by(len, self.generators.iter().map(|g| g.perm(j)))
    }
}

/// Breadth-first closure of `generators` under composition.
pub fn generate_group(generators: &[ProductAction], cap: usize) -> Result<ActionFamily> {
    let first = generators
        .first()
        .ok_or_else(|| Error::InvalidPermutation("no generators given".into()))?;
    if cap == 0 {
        return Err(Error::GroupTooLarge { cap });
    }
    for g in generators {
        if g.arity() != first.arity()
            || g.maps.iter().zip(&first.maps).any(|(a, b)| a.perm.len() != b.perm.len())
        {
            return Err(Error::DimensionMismatch(
                "generators act on different supports".into(),
            ));
        }
    }
    let identity = ProductAction {
        maps: first
            .maps
            .iter()
            .map(|m| MarginalMap {
                perm: Permutation::identity(m.perm.len()),
                marginal: m.marginal,
            })
            .collect(),
    };
    let mut seen: HashSet<ProductAction> = HashSet::new();
    let mut elements = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(identity.clone());
    elements.push(identity.clone());
    queue.push_back(identity);
    while let Some(h) = queue.pop_front() {
        for g in generators {
            let gh = g.compose(&h);
            if seen.insert(gh.clone()) {
                if elements.len() >= cap {
                    return Err(Error::GroupTooLarge { cap });
                }
                elements.push(gh.clone());
                queue.push_back(gh);
            }
        }
    }
    let commuting = generators
        .iter()
        .enumerate()
        .all(|(i, a)| generators[i + 1..].iter().all(|b| check_commuting(a, b)));
    Ok(ActionFamily {
        generators: generators.to_vec(),
        elements,
        commuting,
    })
}

/// Partition of a support into orbits, with each point's orbit representative
/// (the orbit's smallest index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitPartition {
    pub rep: Vec<usize>,
    /// Sorted orbits, ordered by representative.
    pub orbits: Vec<Vec<usize>>,
}

impl OrbitPartition {
    pub fn singletons(len: usize) -> Self {
        Self {
            rep: (0..len).collect(),
            orbits: (0..len).map(|i| vec![i]).collect(),
        }
    }

    /// Connected components of the graph `i -- p(i)` over all `perms`.
    pub fn generated_by<'a>(len: usize, perms: impl IntoIterator<Item = &'a Permutation>) -> Self {
        let mut parent: Vec<usize> = (0..len).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for p in perms {
            for i in 0..len {
                let (a, b) = (find(&mut parent, i), find(&mut parent, p.apply(i)));
                // keep the smaller index as root so roots are representatives
                if a < b {
                    parent[b] = a;
                } else if b < a {
                    parent[a] = b;
                }
            }
        }
        let rep: Vec<usize> = (0..len).map(|i| find(&mut parent, i)).collect();
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; len];
        for (i, &r) in rep.iter().enumerate() {
            if slot[r] == usize::MAX {
                slot[r] = orbits.len();
                orbits.push(Vec::new());
            }
            orbits[slot[r]].push(i);
        }
        Self { rep, orbits }
    }

    /// Copies each orbit representative's value onto the rest of its orbit.
    pub fn replicate(&self, values: &mut [f64]) {
        for (i, &r) in self.rep.iter().enumerate() {
            values[i] = values[r];
        }
    }

    /// Largest spread of `values` within any orbit.
    pub fn max_spread(&self, values: &[f64]) -> f64 {
        self.orbits
            .iter()
            .map(|o| {
                let (lo, hi) = o.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(values[i]), hi.max(values[i]))
                });
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// The slot shift `σ(x_1, …, x_n) = (x_2, …, x_n, x_1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SigmaShift {
    pub n: usize,
}

impl SigmaShift {
    /// Only defined when every marginal is the same measure.
    pub fn new(marginals: &[DiscreteMarginal]) -> Result<Self> {
        let first = marginals.first().ok_or(Error::MarginalsNotIdentical)?;
        if marginals.iter().any(|m| !m.same_measure(first)) {
            return Err(Error::MarginalsNotIdentical);
        }
        Ok(Self { n: marginals.len() })
    }

    pub fn apply_tuple(&self, t: &[usize], out: &mut [usize]) {
        for k in 0..self.n {
            out[k] = t[(k + 1) % self.n];
        }
    }
}
