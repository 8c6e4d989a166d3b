//! Maximum-weight perfect matching on a square weight matrix.

use crate::error::{shape_mismatch, Error, Result};
use crate::numerics::Matrix;

/// Solves the maximum-weight assignment problem in O(n³).
///
/// Returns the optimal total weight and `pairing[row] = column`. Ties are
/// broken arbitrarily; only the total is guaranteed.
pub fn max_assignment(weights: &Matrix) -> Result<(f64, Vec<usize>)> {
    let n = weights.rows();
    if weights.cols() != n {
        return Err(shape_mismatch("max_assignment", "square matrix", format!("{:?}", weights.shape())));
    }
    if weights.as_slice().iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidArgument("assignment weights must be non-negative".into()));
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let top = weights.as_slice().iter().copied().fold(0.0, f64::max);
    let cost = |i: usize, j: usize| top - weights.get(i, j);

    // Shortest augmenting paths with row/column potentials; index 0 is a
    // sentinel column, rows and columns are 1-based inside the loop.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        while j0 != 0 {
            let prev = way[j0];
            owner[j0] = owner[prev];
            j0 = prev;
        }
    }

    let mut pairing = vec![0usize; n];
    for j in 1..=n {
        pairing[owner[j] - 1] = j - 1;
    }
    let total = pairing.iter().enumerate().map(|(i, &j)| weights.get(i, j)).sum();
    Ok((total, pairing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn brute_force(weights: &Matrix) -> f64 {
        fn rec(w: &Matrix, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == w.rows() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for j in 0..w.cols() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w.get(row, j) + rec(w, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(weights, 0, &mut vec![false; weights.cols()])
    }

    #[test]
    fn small_examples() {
        let (w, p) = max_assignment(&Matrix::identity(4)).unwrap();
        assert_eq!(w, 4.0);
        assert_eq!(p, vec![0, 1, 2, 3]);
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(brute_force(&m), 5.0);
        assert_eq!(max_assignment(&m).unwrap().0, 5.0);
        assert!(max_assignment(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = Rng::new(2024);
        for trial in 0..1000 {
            let n = 1 + trial % 7;
            let integral = trial % 2 == 0;
            let m = Matrix::from_fn(n, n, |_, _| {
                if integral {
                    rng.next_index(5) as f64
                } else {
                    rng.next_uniform(0.0, 10.0)
                }
            });
            let (total, pairing) = max_assignment(&m).unwrap();
            let mut seen = pairing.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            assert!((total - brute_force(&m)).abs() < 1e-9, "trial {trial}: {m:?}");
        }
    }
}
