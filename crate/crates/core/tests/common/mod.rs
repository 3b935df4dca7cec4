#![allow(dead_code)]

use rand::Rng;

/// Generic rigidity by exhaustive Laman search: some set of `2n - 3` edges
/// in which every vertex subset `S` with `|S| >= 2` spans at most
/// `2|S| - 3` edges.
pub fn laman_rigid(n: usize, edges: &[(usize, usize)]) -> bool {
    if n <= 1 {
        return true;
    }
    let need = 2 * n - 3;
    if edges.len() < need {
        return false;
    }
    let masks: Vec<u32> = edges.iter().map(|&(a, b)| (1 << a) | (1 << b)).collect();
    let subsets: Vec<(u32, usize)> = (1u32..1 << n)
        .filter(|s| s.count_ones() >= 2)
        .map(|s| (s, 2 * s.count_ones() as usize - 3))
        .collect();
    let independent = |chosen: &[usize]| {
        subsets.iter().all(|&(s, cap)| chosen.iter().filter(|&&e| masks[e] & s == masks[e]).count() <= cap)
    };
    let mut chosen = Vec::with_capacity(need);
    search(edges.len(), need, 0, &mut chosen, &independent)
}

fn search(m: usize, need: usize, start: usize, chosen: &mut Vec<usize>, ok: &dyn Fn(&[usize]) -> bool) -> bool {
    if !ok(chosen) {
        return false;
    }
    if chosen.len() == need {
        return true;
    }
    for e in start..m {
        if m - e < need - chosen.len() {
            break;
        }
        chosen.push(e);
        if search(m, need, e + 1, chosen, ok) {
            return true;
        }
        chosen.pop();
    }
    false
}

/// Erdos-Renyi graph on `n` vertices with edge probability `p`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Random spanning tree plus extra edges with probability `p`.
pub fn random_connected<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for a in 0..n {
        for b in a + 1..n {
            if !edges.contains(&(a, b)) && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}
