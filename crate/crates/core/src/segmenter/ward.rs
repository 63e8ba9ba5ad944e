use super::DistanceMatrix;
use crate::error::SegmentError;

/// Agglomerative clustering with Ward linkage, stopped at `k` clusters.
///
/// Works on squared distances with the Lance-Williams recurrence
/// `D(m, i+j) = ((n_i+n_m) D(m,i) + (n_j+n_m) D(m,j) - n_m D(i,j)) / (n_i+n_j+n_m)`,
/// so every merge is the one with the smallest increase in within-cluster
/// sum of squares. Among equal candidates the lexicographically lowest pair
/// `(i, j)` of cluster slots merges first; a cluster's slot is the index of its
/// lowest member. Labels are numbered by first occurrence.
pub fn ward_cluster(d: &DistanceMatrix, k: usize) -> Result<Vec<usize>, SegmentError> {
    let n = d.n;
    if k > n || (k == 0 && n > 0) {
        return Err(SegmentError::InvalidClusterCount { k, n });
    }
    let mut dist: Vec<f64> = d.entries.iter().map(|v| v * v).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut clusters = n;

    while clusters > k {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && dist[i * n + j] < best.0 {
                    best = (dist[i * n + j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if !active[m] || m == i || m == j {
                continue;
            }
            let nm = size[m] as f64;
            let updated = ((ni + nm) * dist[m * n + i] + (nj + nm) * dist[m * n + j] - nm * dij) / (ni + nj + nm);
            dist[m * n + i] = updated;
            dist[i * n + m] = updated;
        }
        size[i] += size[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        clusters -= 1;
    }

    let mut renumber = vec![usize::MAX; n];
    let mut next = 0;
    Ok(owner
        .into_iter()
        .map(|o| {
            if renumber[o] == usize::MAX {
                renumber[o] = next;
                next += 1;
            }
            renumber[o]
        })
        .collect())
}
