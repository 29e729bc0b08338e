//! Triangle census by signed-adjacency trace identities.
//!
//! For a symmetric 0/1 adjacency `A` with a subset of edges labeled
//! significant, the counts of triangles with `l = 0..3` significant ties
//! follow from four traces: `T = tr(A^3)/6`, `T3 = tr(A_sig^3)/6`,
//! `T0 = tr((A - A_sig)^3)/6`, and the signed matrix (+1 significant,
//! -1 non-significant) giving `tr(A_signed^3)/6 = (T1 + T3) - (T0 + T2)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Triangle counts of one aggregate network, split by the number of
/// significant ties in the triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangleCensus {
    pub total: i64,
    /// `by_significant[l]` counts triangles with exactly `l` significant ties.
    pub by_significant: [i64; 4],
}

impl TriangleCensus {
    /// Probability that a triangle with two significant ties closes with a
    /// non-significant one: `T2 / (T2 + T3)`.
    pub fn p_nonsig(&self) -> Option<Real> {
        let t2 = self.by_significant[2];
        let t3 = self.by_significant[3];
        if t2 + t3 > 0 {
            Some(t2 as Real / (t2 + t3) as Real)
        } else {
            None
        }
    }
}

/// Trace of the cube of a dense symmetric i64 matrix, divided by six.
fn triangles_of(matrix: &[i64], n: usize) -> i64 {
    // tr(M^3) = sum_{i,j} (M^2)_{ij} * M_{ji}; M symmetric.
    let mut trace = 0i64;
    let mut row_sq = vec![0i64; n];
    for i in 0..n {
        for (j, entry) in row_sq.iter_mut().enumerate() {
            let mut acc = 0i64;
            for k in 0..n {
                acc += matrix[i * n + k] * matrix[k * n + j];
            }
            *entry = acc;
        }
        for j in 0..n {
            trace += row_sq[j] * matrix[j * n + i];
        }
    }
    debug_assert_eq!(trace % 6, 0);
    trace / 6
}

/// Exact triangle census of an aggregate network.
///
/// `edges` are the unordered edges of the network; `significant` must be a
/// subset of them.
pub fn triangle_census(
    n: usize,
    edges: &[(u32, u32)],
    significant: &BTreeSet<(u32, u32)>,
) -> Result<TriangleCensus> {
    let norm = |&(a, b): &(u32, u32)| if a < b { (a, b) } else { (b, a) };
    let edge_set: BTreeSet<(u32, u32)> = edges.iter().map(norm).collect();
    for pair in significant {
        let key = norm(pair);
        if !edge_set.contains(&key) {
            return Err(Error::SignificantEdgeMissing(key.0 as usize, key.1 as usize));
        }
    }

    let mut adjacency = vec![0i64; n * n];
    let mut sig = vec![0i64; n * n];
    let mut signed = vec![0i64; n * n];
    let mut nonsig = vec![0i64; n * n];
    for &(a, b) in &edge_set {
        let (i, j) = (a as usize, b as usize);
        adjacency[i * n + j] = 1;
        adjacency[j * n + i] = 1;
        let is_sig = significant.contains(&(a, b)) || significant.contains(&(b, a));
        let sign = if is_sig { 1 } else { -1 };
        signed[i * n + j] = sign;
        signed[j * n + i] = sign;
        if is_sig {
            sig[i * n + j] = 1;
            sig[j * n + i] = 1;
        } else {
            nonsig[i * n + j] = 1;
            nonsig[j * n + i] = 1;
        }
    }

    let total = triangles_of(&adjacency, n);
    let t3 = triangles_of(&sig, n);
    let t0 = triangles_of(&nonsig, n);
    let t_signed = triangles_of(&signed, n);
    // t_signed = (T1 + T3) - (T0 + T2) and total = T0 + T1 + T2 + T3
    let t1 = (total + t_signed) / 2 - t3;
    let t2 = total - t0 - t1 - t3;

    Ok(TriangleCensus {
        total,
        by_significant: [t0, t1, t2, t3],
    })
}
