//! Batch single-linkage clustering by brute force.

use petgraph::unionfind::UnionFind;

use crate::geom;

/// Component index of every point under the "closer than `d_t`" relation.
/// Components are numbered by first appearance.
pub fn oracle_single_linkage(points: &[[f32; 3]], d_t: f64) -> Vec<usize> {
    let n = points.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if geom::linked(points[i], points[j], d_t) {
                uf.union(i, j);
            }
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut out = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let root = uf.find_mut(i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        out.push(ids[root]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_strict() {
        let near = [[0.0, 0.0, 0.0], [0.69, 0.0, 0.0]];
        assert_eq!(oracle_single_linkage(&near, 0.7), vec![0, 0]);
        let far = [[0.0, 0.0, 0.0], [0.71, 0.0, 0.0]];
        assert_eq!(oracle_single_linkage(&far, 0.7), vec![0, 1]);
    }

    #[test]
    fn chains_are_transitive() {
        let chain: Vec<[f32; 3]> = (0..200).map(|i| [i as f32 * 0.5, 0.0, 0.0]).collect();
        assert!(oracle_single_linkage(&chain, 0.7).iter().all(|&c| c == 0));
    }

    #[test]
    fn zero_threshold_isolates_everything() {
        let pts = [[0.0, 0.0, 0.0]; 3];
        assert_eq!(oracle_single_linkage(&pts, 0.0), vec![0, 1, 2]);
    }
}
