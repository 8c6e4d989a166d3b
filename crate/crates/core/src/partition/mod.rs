//! Set partitions of parameter indices and the sharing schemes they encode.
//!
//! A [`Partition`] is stored as its restricted growth string: element 0 has
//! label 0 and every new label is the smallest unused integer. Clusters are
//! therefore ordered by their minimum element, which makes equality of
//! partitions plain equality of label vectors.

mod assignment;
mod groups;
mod text;

use std::fmt;

use crate::error::{shape_mismatch, Error, Result};
use crate::numerics::{Matrix, Rng};

pub use assignment::max_assignment;
pub use groups::{
    claim3_check, group_member, symmetric_difference_size, verify_claim3, Claim3Check,
    PermutationAction, MAX_GROUP_ENUMERATION,
};
pub use text::{parse_partition, ParseError};

/// Largest K accepted by [`enumerate_partitions`] (Bell(12) = 4 213 597).
pub const MAX_ENUMERATION: usize = 12;

/// A partition of `{0, …, K−1}` in canonical form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Canonicalizes arbitrary labels: elements sharing a label share a
    /// cluster.
    pub fn from_labels<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> Self {
        let mut seen = std::collections::HashMap::new();
        let canonical: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            num_clusters: seen.len(),
            labels: canonical,
        }
    }

    /// Builds from explicit clusters; they must be non-empty, disjoint and
    /// cover `0..k`.
    pub fn from_clusters(k: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; k];
        for (c, cluster) in clusters.iter().enumerate() {
            if cluster.is_empty() {
                return Err(Error::Malformed(format!("cluster {c} is empty")));
            }
            for &i in cluster {
                if i >= k {
                    return Err(Error::Malformed(format!("element {i} outside 0..{k}")));
                }
                if labels[i] != usize::MAX {
                    return Err(Error::Malformed(format!("element {i} appears twice")));
                }
                labels[i] = c;
            }
        }
        if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Malformed(format!("element {missing} is in no cluster")));
        }
        Ok(Self::from_labels(&labels))
    }

    /// Every element in its own cluster.
    pub fn singletons(k: usize) -> Self {
        Self {
            labels: (0..k).collect(),
            num_clusters: k,
        }
    }

    /// One cluster holding everything.
    pub fn full(k: usize) -> Self {
        Self {
            labels: vec![0; k],
            num_clusters: usize::from(k > 0),
        }
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Restricted growth string.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_of(&self, element: usize) -> usize {
        self.labels[element]
    }

    /// Clusters sorted by minimum element, members ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_clusters];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }

    /// True when every cluster of `self` lies inside a cluster of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.k() != coarser.k() {
            return false;
        }
        let mut image = vec![usize::MAX; self.num_clusters];
        self.labels.iter().zip(&coarser.labels).all(|(&a, &b)| {
            if image[a] == usize::MAX {
                image[a] = b;
            }
            image[a] == b
        })
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Partition{:?}", self.clusters())
    }
}

impl fmt::Display for Partition {
    /// The two-line text format: `K <k>` then the label string.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "K {}", self.k())?;
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        writeln!(f, "{}", labels.join(" "))
    }
}

/// Binary row-stochastic assignment matrix: row `i` selects column
/// `columns[i]`, so parameter `i` reads the free parameter in that column.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SharingScheme {
    columns: Vec<usize>,
}

impl SharingScheme {
    /// Validates a dense K×K matrix: entries in {0, 1}, exactly one 1 per row.
    pub fn from_matrix(a: &Matrix) -> Result<Self> {
        let k = a.rows();
        if a.cols() != k {
            return Err(shape_mismatch("SharingScheme", "square matrix", format!("{:?}", a.shape())));
        }
        let mut columns = Vec::with_capacity(k);
        for i in 0..k {
            let row = a.row(i);
            if let Some(bad) = row.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Malformed(format!("row {i} has non-binary entry {bad}")));
            }
            let ones: Vec<usize> = (0..k).filter(|&j| row[j] == 1.0).collect();
            if ones.len() != 1 {
                return Err(Error::Malformed(format!(
                    "row {i} sums to {} instead of 1",
                    ones.len()
                )));
            }
            columns.push(ones[0]);
        }
        Ok(Self { columns })
    }

    /// Scheme from the selected column of each row.
    pub fn from_columns(columns: Vec<usize>) -> Result<Self> {
        let k = columns.len();
        if let Some(&bad) = columns.iter().find(|&&c| c >= k) {
            return Err(Error::Malformed(format!("column {bad} outside 0..{k}")));
        }
        Ok(Self { columns })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            columns: (0..k).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn matrix(&self) -> Matrix {
        let k = self.k();
        Matrix::from_fn(k, k, |i, j| if self.columns[i] == j { 1.0 } else { 0.0 })
    }

    /// Number of distinct active columns, i.e. the rank of the matrix.
    pub fn rank(&self) -> usize {
        let mut active = vec![false; self.k()];
        self.columns.iter().for_each(|&c| active[c] = true);
        active.into_iter().filter(|&a| a).count()
    }

    /// `θ = A ψ`.
    pub fn expand(&self, psi: &[f64]) -> Result<Vec<f64>> {
        if psi.len() != self.k() {
            return Err(shape_mismatch("SharingScheme::expand", self.k(), psi.len()));
        }
        Ok(self.columns.iter().map(|&c| psi[c]).collect())
    }

    pub fn partition(&self) -> Partition {
        partition_from_scheme(self)
    }
}

impl fmt::Debug for SharingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SharingScheme{:?}", self.columns)
    }
}

/// Clusters are the non-empty column supports of the scheme.
pub fn partition_from_scheme(scheme: &SharingScheme) -> Partition {
    Partition::from_labels(&scheme.columns)
}

/// Canonical scheme: the cluster with label ℓ occupies column ℓ.
pub fn scheme_from_partition(partition: &Partition) -> SharingScheme {
    SharingScheme {
        columns: partition.labels.clone(),
    }
}

/// Iterator over every partition of `0..k` in lexicographic order of the
/// restricted growth strings.
pub struct PartitionIter {
    labels: Vec<usize>,
    // prefix_max[i] = max(labels[..i]), with prefix_max[0] unused
    prefix_max: Vec<usize>,
    done: bool,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let current = Partition {
            num_clusters: self.labels.iter().max().map_or(0, |m| m + 1),
            labels: self.labels.clone(),
        };
        let k = self.labels.len();
        let mut advanced = false;
        for i in (1..k).rev() {
            if self.labels[i] <= self.prefix_max[i] {
                self.labels[i] += 1;
                for j in i + 1..k {
                    self.labels[j] = 0;
                    self.prefix_max[j] = self.prefix_max[j - 1].max(self.labels[j - 1]);
                }
                advanced = true;
                break;
            }
        }
        self.done = !advanced;
        Some(current)
    }
}

/// All set partitions of `0..k`, each exactly once.
pub fn enumerate_partitions(k: usize) -> Result<PartitionIter> {
    if k > MAX_ENUMERATION {
        return Err(Error::Capacity {
            what: "partition enumeration",
            limit: MAX_ENUMERATION,
            got: k,
        });
    }
    Ok(PartitionIter {
        labels: vec![0; k],
        prefix_max: vec![0; k],
        done: false,
    })
}

/// Minimum number of elements to move so the two partitions coincide.
pub fn partition_distance(p1: &Partition, p2: &Partition) -> Result<usize> {
    if p1.k() != p2.k() {
        return Err(shape_mismatch("partition_distance", p1.k(), p2.k()));
    }
    let n = p1.num_clusters().max(p2.num_clusters());
    let mut overlap = Matrix::zeros(n, n);
    for (&a, &b) in p1.labels.iter().zip(&p2.labels) {
        overlap.set(a, b, overlap.get(a, b) + 1.0);
    }
    let (matched, _) = max_assignment(&overlap)?;
    Ok(p1.k() - matched.round() as usize)
}

/// Natural log of the Stirling numbers of the second kind, `table[n][j]`
/// for `0 ≤ j ≤ n ≤ k`.
fn ln_stirling2(k: usize) -> Vec<Vec<f64>> {
    let mut table = vec![vec![f64::NEG_INFINITY; k + 1]; k + 1];
    table[0][0] = 0.0;
    for n in 1..=k {
        for j in 1..=n {
            let split = table[n - 1][j - 1];
            let join = table[n - 1][j] + (j as f64).ln();
            table[n][j] = log_add(split, join);
        }
    }
    table
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Uniformly random partition of `0..k` with exactly `blocks` clusters.
pub fn random_partition(k: usize, blocks: usize, rng: &mut Rng) -> Result<Partition> {
    if blocks == 0 || blocks > k {
        return Err(Error::InvalidArgument(format!(
            "cannot split {k} elements into {blocks} clusters"
        )));
    }
    let table = ln_stirling2(k);
    // Walk the recurrence S(n, j) = S(n−1, j−1) + j·S(n−1, j) from the top,
    // recording for each element whether it opens a new cluster.
    let mut opens = vec![false; k];
    let mut j = blocks;
    for n in (1..=k).rev() {
        let p_open = (table[n - 1][j - 1] - table[n][j]).exp();
        if j == n || rng.next_uniform(0.0, 1.0) < p_open {
            opens[n - 1] = true;
            j -= 1;
        }
    }
    let mut labels = vec![0usize; k];
    let mut count = 0;
    for i in 0..k {
        if opens[i] {
            labels[i] = count;
            count += 1;
        } else {
            labels[i] = rng.next_index(count);
        }
    }
    Ok(Partition::from_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(k: usize, clusters: &[&[usize]]) -> Partition {
        let owned: Vec<Vec<usize>> = clusters.iter().map(|c| c.to_vec()).collect();
        Partition::from_clusters(k, &owned).unwrap()
    }

    #[test]
    fn scheme_to_partition_examples() {
        let id = SharingScheme::identity(3);
        assert_eq!(id.partition(), p(3, &[&[0], &[1], &[2]]));
        let full = SharingScheme::from_matrix(&Matrix::from_fn(3, 3, |_, j| (j == 0) as u8 as f64)).unwrap();
        assert_eq!(full.partition(), p(3, &[&[0, 1, 2]]));
        let mixed = SharingScheme::from_columns(vec![0, 1, 0]).unwrap();
        assert_eq!(mixed.partition(), p(3, &[&[0, 2], &[1]]));
        assert_eq!(mixed.rank(), 2);
    }

    #[test]
    fn malformed_schemes_rejected() {
        let two_ones = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(SharingScheme::from_matrix(&two_ones).is_err());
        let fractional = Matrix::from_rows(&[[0.5, 0.5], [0.0, 1.0]]).unwrap();
        assert!(SharingScheme::from_matrix(&fractional).is_err());
        let empty_row = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(SharingScheme::from_matrix(&empty_row).is_err());
    }

    #[test]
    fn partition_to_scheme_examples() {
        assert_eq!(scheme_from_partition(&Partition::singletons(2)).matrix(), Matrix::identity(2));
        let full = scheme_from_partition(&Partition::full(2));
        assert_eq!(full.columns(), &[0, 0]);
    }

    #[test]
    fn invalid_clusters_rejected() {
        assert!(Partition::from_clusters(3, &[vec![0, 1], vec![]]).is_err());
        assert!(Partition::from_clusters(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::from_clusters(3, &[vec![0, 1]]).is_err());
    }

    #[test]
    fn enumeration_counts_are_bell_numbers() {
        let bell = [1usize, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975];
        for (k, &b) in bell.iter().enumerate() {
            let all: Vec<Partition> = enumerate_partitions(k).unwrap().collect();
            assert_eq!(all.len(), b, "K = {k}");
            if k <= 7 {
                let mut uniq = all.clone();
                uniq.sort();
                uniq.dedup();
                assert_eq!(uniq.len(), b);
                // lexicographic order of label strings
                assert!(all.windows(2).all(|w| w[0].labels() < w[1].labels()));
            }
        }
        assert!(matches!(enumerate_partitions(13), Err(Error::Capacity { .. })));
    }

    #[test]
    fn distance_examples() {
        let a = p(3, &[&[0, 1], &[2]]);
        assert_eq!(partition_distance(&a, &a).unwrap(), 0);
        assert_eq!(partition_distance(&a, &Partition::singletons(3)).unwrap(), 1);
        assert_eq!(
            partition_distance(&Partition::full(4), &p(4, &[&[0, 1], &[2, 3]])).unwrap(),
            2
        );
        assert!(partition_distance(&a, &Partition::full(4)).is_err());
    }

    #[test]
    fn random_partition_has_requested_blocks_and_is_uniform() {
        let mut rng = Rng::new(77);
        // K = 4, 2 blocks: S(4, 2) = 7 partitions, each should appear ~1/7
        let mut counts = std::collections::HashMap::new();
        let draws = 70_000;
        for _ in 0..draws {
            let part = random_partition(4, 2, &mut rng).unwrap();
            assert_eq!(part.num_clusters(), 2);
            *counts.entry(part).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        let expected = draws as f64 / 7.0;
        let sd = (expected * (1.0 - 1.0 / 7.0)).sqrt();
        for (part, c) in counts {
            assert!((c as f64 - expected).abs() < 5.0 * sd, "{part:?}: {c}");
        }
        assert_eq!(random_partition(50, 1, &mut rng).unwrap(), Partition::full(50));
        assert_eq!(random_partition(6, 6, &mut rng).unwrap(), Partition::singletons(6));
        assert!(random_partition(3, 4, &mut rng).is_err());
    }

    #[test]
    fn refinement() {
        assert!(Partition::singletons(4).refines(&p(4, &[&[0, 3], &[1, 2]])));
        assert!(!p(4, &[&[0, 1], &[2, 3]]).refines(&p(4, &[&[0, 3], &[1, 2]])));
    }
}
