//! Permutation sets encoded by a partition and their symmetric difference.
//!
//! The set attached to a partition is the union over clusters C of all
//! permutations that move only elements of C. It is not closed under
//! composition and is not treated as a generated group.

use crate::error::{shape_mismatch, Error, Result};

use super::{partition_distance, Partition};

/// Largest K for which all K! permutations are enumerated.
pub const MAX_GROUP_ENUMERATION: usize = 6;

/// A bijection on `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationAction {
    mapping: Vec<usize>,
}

impl PermutationAction {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &m in &mapping {
            if m >= mapping.len() || seen[m] {
                return Err(Error::Malformed(format!("{mapping:?} is not a bijection")));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            mapping: (0..k).collect(),
        }
    }

    /// Transposition of `a` and `b`.
    pub fn swap(k: usize, a: usize, b: usize) -> Result<Self> {
        let mut mapping: Vec<usize> = (0..k).collect();
        if a >= k || b >= k {
            return Err(Error::InvalidArgument(format!("swap({a}, {b}) outside 0..{k}")));
        }
        mapping.swap(a, b);
        Ok(Self { mapping })
    }

    pub fn k(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }
}

/// True iff `pi` is the identity or every element it moves lies in one
/// cluster of `partition`.
pub fn group_member(pi: &PermutationAction, partition: &Partition) -> Result<bool> {
    if pi.k() != partition.k() {
        return Err(shape_mismatch("group_member", partition.k(), pi.k()));
    }
    Ok(moved_within_one_cluster(&pi.mapping, partition.labels()))
}

fn moved_within_one_cluster(mapping: &[usize], labels: &[usize]) -> bool {
    let mut cluster = None;
    for (i, &m) in mapping.iter().enumerate() {
        if i == m {
            continue;
        }
        match cluster {
            None => cluster = Some(labels[i]),
            Some(c) if c != labels[i] => return false,
            Some(_) => {}
        }
    }
    true
}

fn check_group_capacity(k: usize) -> Result<()> {
    if k > MAX_GROUP_ENUMERATION {
        return Err(Error::Capacity {
            what: "permutation enumeration",
            limit: MAX_GROUP_ENUMERATION,
            got: k,
        });
    }
    Ok(())
}

/// Calls `f` on every permutation of `0..k` (Heap's algorithm).
fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut counters = vec![0usize; k];
    f(&perm);
    let mut i = 1;
    while i < k {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            f(&perm);
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
}

/// Number of permutations that belong to exactly one of the two sets.
pub fn symmetric_difference_size(p1: &Partition, p2: &Partition) -> Result<usize> {
    if p1.k() != p2.k() {
        return Err(shape_mismatch("symmetric_difference_size", p1.k(), p2.k()));
    }
    check_group_capacity(p1.k())?;
    let mut count = 0;
    for_each_permutation(p1.k(), |perm| {
        let a = moved_within_one_cluster(perm, p1.labels());
        let b = moved_within_one_cluster(perm, p2.labels());
        if a != b {
            count += 1;
        }
    });
    Ok(count)
}

/// Both sides of `PD ≤ |G1 Δ G2| ≤ (K! − 1)·PD` for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Claim3Check {
    pub distance: usize,
    pub symmetric_difference: usize,
    pub kappa: usize,
}

impl Claim3Check {
    pub fn holds(&self) -> bool {
        self.distance <= self.symmetric_difference
            && self.symmetric_difference <= self.kappa * self.distance
    }
}

pub fn claim3_check(p1: &Partition, p2: &Partition) -> Result<Claim3Check> {
    let symmetric_difference = symmetric_difference_size(p1, p2)?;
    let distance = partition_distance(p1, p2)?;
    let factorial: usize = (1..=p1.k()).product();
    Ok(Claim3Check {
        distance,
        symmetric_difference,
        kappa: factorial - 1,
    })
}

pub fn verify_claim3(p1: &Partition, p2: &Partition) -> Result<bool> {
    Ok(claim3_check(p1, p2)?.holds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::enumerate_partitions;

    fn p(k: usize, clusters: &[&[usize]]) -> Partition {
        let owned: Vec<Vec<usize>> = clusters.iter().map(|c| c.to_vec()).collect();
        Partition::from_clusters(k, &owned).unwrap()
    }

    #[test]
    fn membership_examples() {
        let part = p(3, &[&[0, 1], &[2]]);
        assert!(group_member(&PermutationAction::identity(3), &part).unwrap());
        assert!(group_member(&PermutationAction::swap(3, 0, 1).unwrap(), &part).unwrap());
        assert!(!group_member(&PermutationAction::swap(3, 0, 2).unwrap(), &part).unwrap());
        assert!(PermutationAction::new(vec![0, 0, 1]).is_err());
        assert!(group_member(&PermutationAction::identity(2), &part).is_err());
    }

    #[test]
    fn heap_visits_every_permutation_once() {
        let mut all = Vec::new();
        for_each_permutation(4, |p| all.push(p.to_vec()));
        assert_eq!(all.len(), 24);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 24);
    }

    #[test]
    fn symmetric_difference_examples() {
        let a = p(3, &[&[0, 1], &[2]]);
        assert_eq!(symmetric_difference_size(&a, &a).unwrap(), 0);
        assert_eq!(
            symmetric_difference_size(&Partition::full(2), &Partition::singletons(2)).unwrap(),
            1
        );
        assert_eq!(
            symmetric_difference_size(&Partition::full(3), &Partition::singletons(3)).unwrap(),
            5
        );
        assert!(matches!(
            symmetric_difference_size(&Partition::full(7), &Partition::full(7)),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn claim3_examples() {
        let a = p(3, &[&[0, 1], &[2]]);
        assert!(verify_claim3(&a, &a).unwrap());
        let c = claim3_check(&Partition::full(2), &Partition::singletons(2)).unwrap();
        assert_eq!((c.distance, c.symmetric_difference, c.kappa), (1, 1, 1));
        assert!(c.holds());
    }

    #[test]
    fn claim3_exhaustive_up_to_five() {
        for k in 1..=5 {
            let all: Vec<Partition> = enumerate_partitions(k).unwrap().collect();
            for (i, a) in all.iter().enumerate() {
                for b in &all[i..] {
                    let check = claim3_check(a, b).unwrap();
                    assert!(check.holds(), "{a:?} vs {b:?}: {check:?}");
                    // zero distance means identical permutation sets
                    assert_eq!(check.distance == 0, check.symmetric_difference == 0);
                }
            }
        }
    }
}
