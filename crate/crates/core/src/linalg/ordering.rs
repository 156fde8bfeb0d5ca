//! Reverse Cuthill-McKee ordering on the symmetrized sparsity pattern.

use std::collections::VecDeque;

use super::SparseMatrix;

fn adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    let (ptr, cols) = (a.row_ptr(), a.col_indices());
    for i in 0..n {
        for &j in &cols[ptr[i]..ptr[i + 1]] {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// BFS level structure from `root`; returns (visit order, eccentricity).
fn bfs(adj: &[Vec<usize>], root: usize, seen: &mut [bool], sorted: bool) -> (Vec<usize>, usize) {
    let mut order = vec![root];
    let mut level = vec![0usize; 1];
    seen[root] = true;
    let mut queue = VecDeque::from([(root, 0usize)]);
    let mut depth = 0;
    while let Some((v, l)) = queue.pop_front() {
        depth = depth.max(l);
        let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
        if sorted {
            next.sort_by_key(|&w| (adj[w].len(), w));
        }
        for w in next {
            seen[w] = true;
            order.push(w);
            level.push(l + 1);
            queue.push_back((w, l + 1));
        }
    }
    (order, depth)
}

/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = adjacency(a);
    let mut placed = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut scratch = vec![false; n];
    for start in 0..n {
        if placed[start] {
            continue;
        }
        // pseudo-peripheral root: walk to the far end of the component until
        // the eccentricity stops growing
        let mut root = start;
        let mut ecc = 0;
        for _ in 0..8 {
            scratch.iter_mut().for_each(|s| *s = false);
            let (order, depth) = bfs(&adj, root, &mut scratch, false);
            let far = *order
                .iter()
                .rev()
                .take_while(|&&v| v != root)
                .min_by_key(|&&v| (adj[v].len(), v))
                .unwrap_or(&root);
            if depth <= ecc && ecc > 0 {
                break;
            }
            ecc = depth;
            if far == root {
                break;
            }
            root = far;
        }
        let (order, _) = bfs(&adj, root, &mut placed, true);
        perm.extend(order);
    }
    perm.reverse();
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TripletBuilder;

    #[test]
    fn path_graph_gets_bandwidth_one() {
        // shuffled path 0-3-1-4-2
        let edges = [(0, 3), (3, 1), (1, 4), (4, 2)];
        let mut b = TripletBuilder::new(5, 5);
        for i in 0..5 {
            b.push(i, i, 2.0);
        }
        for (i, j) in edges {
            b.push(i, j, -1.0);
            b.push(j, i, -1.0);
        }
        let a = b.build();
        let perm = reverse_cuthill_mckee(&a);
        let mut inv = vec![0; 5];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        for (i, j) in edges {
            assert_eq!((inv[i] as i64 - inv[j] as i64).abs(), 1);
        }
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..5).collect::<Vec<_>>());
    }

    #[test]
    fn disconnected_components_are_all_placed() {
        let mut b = TripletBuilder::new(4, 4);
        b.push(0, 2, 1.0);
        b.push(1, 3, 1.0);
        let perm = reverse_cuthill_mckee(&b.build());
        let mut sorted = perm;
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }
}
