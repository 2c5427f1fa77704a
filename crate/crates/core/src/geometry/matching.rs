//! Vertex correspondence between two combinatorially equal polyhedra.

use super::polyhedron::{GeometryError, Polyhedron};

/// An optimal pairing of the vertices of two polyhedra.
#[derive(Clone, Debug)]
pub struct VertexPairing {
    /// `pairs[i] = (i, j)`: vertex `i` of the first polyhedron is matched to
    /// vertex `j` of the second.
    pub pairs: Vec<(usize, usize)>,
    /// Euclidean distance of each matched pair, in the order of `pairs`.
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub total_distance: f64,
}

/// Solves the square assignment problem, minimizing total cost.
///
/// Returns `assign` with `assign[row] = col`. O(n³) shortest augmenting paths
/// with potentials.
pub fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    assert!(cost.iter().all(|r| r.len() == n), "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed potentials; p[j] is the row matched to column j (0 = free).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![usize::MAX; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Matches the vertices of `a` to the vertices of `b` by minimum-total-distance
/// assignment.
///
/// Fails with [`GeometryError::CountMismatch`] if the vertex counts differ,
/// with [`GeometryError::PairTooFar`] if any matched pair is farther apart
/// than `max_pair_distance`, and with [`GeometryError::AmbiguousMatch`] if
/// swapping two assigned pairs changes the total cost by less than the
/// geometric tolerance (the pairing is then not uniquely determined by the
/// geometry).
pub fn match_vertices(
    a: &Polyhedron,
    b: &Polyhedron,
    max_pair_distance: f64,
) -> Result<VertexPairing, GeometryError> {
    if a.vertices().len() != b.vertices().len() {
        return Err(GeometryError::CountMismatch(
            a.vertices().len(),
            b.vertices().len(),
        ));
    }
    let n = a.vertices().len();
    let cost: Vec<Vec<f64>> = a
        .vertices()
        .iter()
        .map(|p| b.vertices().iter().map(|q| (p - q).norm()).collect())
        .collect();
    let assign = assignment(&cost);

    // Uniqueness: every two-pair swap must strictly increase the total cost.
    let scale = a.scale().max(b.scale());
    let tie_tol = 1e-9 * scale;
    for i in 0..n {
        for j in (i + 1)..n {
            let kept = cost[i][assign[i]] + cost[j][assign[j]];
            let swapped = cost[i][assign[j]] + cost[j][assign[i]];
            if swapped - kept < tie_tol {
                return Err(GeometryError::AmbiguousMatch(swapped - kept));
            }
        }
    }

    let mut pairs = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    let mut max_distance = 0.0f64;
    let mut total = 0.0f64;
    for (i, &j) in assign.iter().enumerate() {
        let d = cost[i][j];
        if d > max_pair_distance {
            return Err(GeometryError::PairTooFar {
                index: i,
                distance: d,
                threshold: max_pair_distance,
            });
        }
        pairs.push((i, j));
        distances.push(d);
        max_distance = max_distance.max(d);
        total += d;
    }
    Ok(VertexPairing {
        pairs,
        distances,
        max_distance,
        total_distance: total,
    })
}

/// The matched displacement field: for each vertex of `a`, the vector to its
/// partner in `b`.
pub fn matched_displacements(
    a: &Polyhedron,
    b: &Polyhedron,
    pairing: &VertexPairing,
) -> Vec<nalgebra::Vector3<f64>> {
    pairing
        .pairs
        .iter()
        .map(|&(i, j)| b.vertices()[j] - a.vertices()[i])
        .collect()
}
