//! Exhaustive reference computations used as test oracles.

use std::collections::BTreeMap;

use super::{next_permutation, Bijection, Graph, NodeId};
use crate::error::{Error, Result};

/// Largest `n` for which permutation enumeration is attempted.
pub const BRUTE_FORCE_CAP: usize = 9;

/// Largest `n` accepted by the pruned backtracking search.
pub const BACKTRACK_CAP: usize = 256;

fn same_size(g: &Graph, h: &Graph) -> Result<()> {
    if g.n() == h.n() {
        Ok(())
    } else {
        Err(Error::SizeMismatch {
            left: g.n(),
            right: h.n(),
        })
    }
}

/// Number of ordered pairs `(i, j)` on which the adjacency matrices differ.
pub fn hamming_distance(g: &Graph, h: &Graph) -> Result<usize> {
    same_size(g, h)?;
    let diff: u32 = g
        .rows
        .iter()
        .zip(&h.rows)
        .map(|(a, b)| (a ^ b).count_ones())
        .sum();
    Ok(diff as usize)
}

fn common_edges(g: &Graph, h: &Graph, perm: &[NodeId]) -> usize {
    g.edges()
        .filter(|&(u, v)| h.has_edge(perm[u], perm[v]))
        .count()
}

/// Some isomorphism `g -> h`, by enumerating all `n!` permutations.
pub fn brute_iso(g: &Graph, h: &Graph) -> Result<Option<Bijection>> {
    same_size(g, h)?;
    if g.n() > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n: g.n(),
            cap: BRUTE_FORCE_CAP,
        });
    }
    if g.edge_count() != h.edge_count() {
        return Ok(None);
    }
    let m = g.edge_count();
    let mut perm: Vec<NodeId> = (0..g.n()).collect();
    loop {
        if common_edges(g, h, &perm) == m {
            return Bijection::new(perm).map(Some);
        }
        if !next_permutation(&mut perm) {
            return Ok(None);
        }
    }
}

/// `min_f hamming_distance(f(g), h)` over all bijections.
pub fn min_bijection_distance(g: &Graph, h: &Graph) -> Result<usize> {
    same_size(g, h)?;
    if g.n() > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n: g.n(),
            cap: BRUTE_FORCE_CAP,
        });
    }
    let total = g.edge_count() + h.edge_count();
    let mut perm: Vec<NodeId> = (0..g.n()).collect();
    let mut best = usize::MAX;
    loop {
        let d = 2 * (total - 2 * common_edges(g, h, &perm));
        best = best.min(d);
        if best == 0 || !next_permutation(&mut perm) {
            return Ok(best);
        }
    }
}

/// Stable colour refinement run on both graphs with a shared palette.
fn refine(g: &Graph, h: &Graph) -> (Vec<usize>, Vec<usize>) {
    let mut cg: Vec<usize> = (0..g.n()).map(|v| g.degree(v)).collect();
    let mut ch: Vec<usize> = (0..h.n()).map(|v| h.degree(v)).collect();
    let mut classes = usize::MAX;
    loop {
        let mut palette: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
        let sig = |graph: &Graph, col: &[usize]| -> Vec<(usize, Vec<usize>)> {
            (0..graph.n())
                .map(|v| {
                    let mut ns: Vec<usize> = graph.neighbors(v).iter().map(|&w| col[w]).collect();
                    ns.sort_unstable();
                    (col[v], ns)
                })
                .collect()
        };
        let sg = sig(g, &cg);
        let sh = sig(h, &ch);
        for s in sg.iter().chain(&sh) {
            let next = palette.len();
            palette.entry(s.clone()).or_insert(next);
        }
        cg = sg.iter().map(|s| palette[s]).collect();
        ch = sh.iter().map(|s| palette[s]).collect();
        if palette.len() == classes {
            return (cg, ch);
        }
        classes = palette.len();
    }
}

/// Exact isomorphism search by backtracking over colour-refined candidates.
/// Complete: returns `None` only when no isomorphism exists.
pub fn find_isomorphism(g: &Graph, h: &Graph) -> Result<Option<Bijection>> {
    same_size(g, h)?;
    let n = g.n();
    if n > BACKTRACK_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BACKTRACK_CAP,
        });
    }
    if g.edge_count() != h.edge_count() || g.degree_sequence() != h.degree_sequence() {
        return Ok(None);
    }
    let (cg, ch) = refine(g, h);
    let mut hist_g = BTreeMap::new();
    let mut hist_h = BTreeMap::new();
    for &c in &cg {
        *hist_g.entry(c).or_insert(0usize) += 1;
    }
    for &c in &ch {
        *hist_h.entry(c).or_insert(0usize) += 1;
    }
    if hist_g != hist_h {
        return Ok(None);
    }

    // Visit order: grow from the rarest colour, preferring nodes with many
    // already-placed neighbours so adjacency checks prune early.
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut links = vec![0usize; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&v| !placed[v])
            .max_by_key(|&v| (links[v], std::cmp::Reverse(hist_g[&cg[v]]), std::cmp::Reverse(v)))
            .expect("unplaced node remains");
        placed[next] = true;
        order.push(next);
        for &w in g.neighbors(next) {
            links[w] += 1;
        }
    }

    let mut by_color: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (u, &c) in ch.iter().enumerate() {
        by_color.entry(c).or_default().push(u);
    }
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    if extend(g, h, &cg, &by_color, &order, 0, &mut map, &mut used) {
        Bijection::new(map).map(Some)
    } else {
        Ok(None)
    }
}

#[allow(clippy::too_many_arguments)]
fn extend(
    g: &Graph,
    h: &Graph,
    cg: &[usize],
    by_color: &BTreeMap<usize, Vec<NodeId>>,
    order: &[NodeId],
    depth: usize,
    map: &mut [NodeId],
    used: &mut [bool],
) -> bool {
    let Some(&v) = order.get(depth) else {
        return true;
    };
    for &u in &by_color[&cg[v]] {
        if used[u] {
            continue;
        }
        let fits = order[..depth]
            .iter()
            .all(|&w| g.has_edge(v, w) == h.has_edge(u, map[w]));
        if !fits {
            continue;
        }
        map[v] = u;
        used[u] = true;
        if extend(g, h, cg, by_color, order, depth + 1, map, used) {
            return true;
        }
        used[u] = false;
        map[v] = usize::MAX;
    }
    false
}
