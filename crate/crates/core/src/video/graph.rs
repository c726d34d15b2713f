use std::sync::OnceLock;

use ndarray::Array2;

use crate::preprocess::{LEFT_HAND_OFFSET, N_KEYPOINTS, RIGHT_HAND_OFFSET};

/// MediaPipe pose bone list over the 33 body landmarks.
const BODY_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 2), (2, 3), (3, 7), (0, 4), (4, 5), (5, 6), (6, 8), (9, 10),
    (11, 12), (11, 13), (13, 15), (15, 17), (15, 19), (15, 21), (17, 19),
    (12, 14), (14, 16), (16, 18), (16, 20), (16, 22), (18, 20), (11, 23),
    (12, 24), (23, 24), (23, 25), (24, 26), (25, 27), (26, 28), (27, 29),
    (28, 30), (29, 31), (30, 32), (27, 31), (28, 32),
];

/// MediaPipe hand bone list over 21 hand landmarks (0 is the wrist root).
const HAND_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 2), (2, 3), (3, 4), (0, 5), (5, 6), (6, 7), (7, 8), (5, 9),
    (9, 10), (10, 11), (11, 12), (9, 13), (13, 14), (14, 15), (15, 16),
    (13, 17), (0, 17), (17, 18), (18, 19), (19, 20),
];

const BODY_LEFT_WRIST: usize = 15;
const BODY_RIGHT_WRIST: usize = 16;

/// Skeleton over the 75 selected keypoints with self-loops, and its
/// symmetric degree normalization `D^-1/2 (A + I) D^-1/2`.
#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    pub adjacency: Array2<u8>,
    pub normalized: Array2<f64>,
    /// Non-zero entries of `normalized`, per row.
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl SkeletonGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_nodes() {
            for j in i + 1..self.n_nodes() {
                if self.adjacency[[i, j]] != 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn build_skeleton_graph() -> SkeletonGraph {
    let n = N_KEYPOINTS;
    let mut adjacency = Array2::<u8>::zeros((n, n));
    let mut link = |a: usize, b: usize| {
        adjacency[[a, b]] = 1;
        adjacency[[b, a]] = 1;
    };
    for &(a, b) in BODY_EDGES {
        link(a, b);
    }
    for offset in [LEFT_HAND_OFFSET, RIGHT_HAND_OFFSET] {
        for &(a, b) in HAND_EDGES {
            link(offset + a, offset + b);
        }
    }
    link(BODY_LEFT_WRIST, LEFT_HAND_OFFSET);
    link(BODY_RIGHT_WRIST, RIGHT_HAND_OFFSET);
    for i in 0..n {
        adjacency[[i, i]] = 1;
    }

    let degree: Vec<f64> = adjacency
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&v| v as f64).sum())
        .collect();
    let normalized = Array2::from_shape_fn((n, n), |(i, j)| {
        adjacency[[i, j]] as f64 / (degree[i] * degree[j]).sqrt()
    });
    let neighbors = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| adjacency[[i, j]] != 0)
                .map(|j| (j, normalized[[i, j]]))
                .collect()
        })
        .collect();
    SkeletonGraph {
        adjacency,
        normalized,
        neighbors,
    }
}

/// Process-wide shared instance.
pub fn skeleton_graph() -> &'static SkeletonGraph {
    static GRAPH: OnceLock<SkeletonGraph> = OnceLock::new();
    GRAPH.get_or_init(build_skeleton_graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_symmetry() {
        let g = build_skeleton_graph();
        assert_eq!(g.n_nodes(), 75);
        assert_eq!(g.adjacency, g.adjacency.t());
        assert_eq!(g.normalized, g.normalized.t());
        for i in 0..75 {
            assert_eq!(g.adjacency[[i, i]], 1);
            assert!(g.adjacency.row(i).iter().map(|&v| v as u32).sum::<u32>() >= 1);
            assert!(g.normalized.row(i).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn edge_count_and_wrist_links() {
        let g = build_skeleton_graph();
        assert_eq!(g.edges().len(), BODY_EDGES.len() + 2 * HAND_EDGES.len() + 2);
        assert_eq!(g.adjacency[[15, 33]], 1);
        assert_eq!(g.adjacency[[16, 54]], 1);
        assert_eq!(g.adjacency[[15, 54]], 0);
    }

    #[test]
    fn connected() {
        let g = build_skeleton_graph();
        let mut seen = vec![false; 75];
        let mut stack = vec![11];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(g.neighbors[v].iter().map(|&(u, _)| u));
        }
        // The pose topology leaves the face (0-8) and mouth (9-10) landmarks
        // detached from the shoulders; everything else hangs off the torso.
        assert_eq!(seen.iter().filter(|&&s| s).count(), 75 - 9 - 2);
        assert!(seen[33..].iter().all(|&s| s));
    }
}
