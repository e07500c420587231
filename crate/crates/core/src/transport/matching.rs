//! Maximum cardinality bipartite matching (Hopcroft–Karp).

use std::collections::VecDeque;

const NIL: usize = usize::MAX;

/// Adjacency of the left side given in CSR form: `adj[offsets[u]..offsets[u+1]]`.
pub struct Bipartite<'a> {
    pub left: usize,
    pub right: usize,
    pub offsets: &'a [usize],
    pub adj: &'a [usize],
}

/// Returns the matched right vertex of each left vertex (`None` if unmatched).
pub fn hopcroft_karp(g: &Bipartite<'_>) -> Vec<Option<usize>> {
    let mut match_l = vec![NIL; g.left];
    let mut match_r = vec![NIL; g.right];
    let mut dist = vec![u32::MAX; g.left];
    let mut queue = VecDeque::with_capacity(g.left);
    let mut it = vec![0usize; g.left];
    let mut stack: Vec<usize> = Vec::new();

    loop {
        // Layered BFS from free left vertices.
        queue.clear();
        for u in 0..g.left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &g.adj[g.offsets[u]..g.offsets[u + 1]] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == u32::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        // Iterative DFS along the layers.
        for u in 0..g.left {
            it[u] = g.offsets[u];
        }
        for root in 0..g.left {
            if match_l[root] != NIL {
                continue;
            }
            stack.clear();
            stack.push(root);
            while let Some(&u) = stack.last() {
                let mut advanced = false;
                while it[u] < g.offsets[u + 1] {
                    let v = g.adj[it[u]];
                    let w = match_r[v];
                    if w == NIL {
                        // Augment along the stack.
                        let mut v_cur = v;
                        for &x in stack.iter().rev() {
                            let prev = match_l[x];
                            match_l[x] = v_cur;
                            match_r[v_cur] = x;
                            v_cur = prev;
                        }
                        stack.clear();
                        advanced = true;
                        break;
                    }
                    if dist[w] == dist[u] + 1 {
                        stack.push(w);
                        it[u] += 1;
                        advanced = true;
                        break;
                    }
                    it[u] += 1;
                }
                if stack.is_empty() {
                    break;
                }
                if !advanced {
                    dist[u] = u32::MAX;
                    stack.pop();
                }
            }
        }
    }
    match_l.into_iter().map(|v| (v != NIL).then_some(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csr(lists: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
        let mut off = vec![0];
        let mut adj = Vec::new();
        for l in lists {
            adj.extend_from_slice(l);
            off.push(adj.len());
        }
        (off, adj)
    }

    #[test]
    fn finds_perfect_matching_requiring_augmentation() {
        let (off, adj) = csr(&[vec![0, 1], vec![0], vec![1, 2]]);
        let m = hopcroft_karp(&Bipartite { left: 3, right: 3, offsets: &off, adj: &adj });
        assert_eq!(m, vec![Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn reports_deficient_matching() {
        let (off, adj) = csr(&[vec![0], vec![0], vec![1]]);
        let m = hopcroft_karp(&Bipartite { left: 3, right: 2, offsets: &off, adj: &adj });
        assert_eq!(m.iter().filter(|x| x.is_some()).count(), 2);
    }
}
