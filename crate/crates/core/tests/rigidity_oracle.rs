mod common;

use iotopo::rigidity::{is_rigid, rigidity_rank, Graph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn pebble_game_matches_laman_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rigid = 0;
    for k in 0..400 {
        let n = 2 + k % 5;
        let p = [0.3, 0.5, 0.7, 0.9][k % 4];
        let edges = common::random_graph(&mut rng, n, p);
        let expect = common::laman_rigid(n, &edges);
        rigid += expect as usize;
        assert_eq!(is_rigid(&Graph::new(n, edges.clone())), expect, "n={n} edges={edges:?}");
    }
    assert!(rigid > 50 && rigid < 350, "sample should mix both outcomes, got {rigid} rigid");
}

#[test]
fn every_six_vertex_graph_with_nine_edges() {
    // All 9-edge graphs on 6 vertices drawn from a fixed enumeration stride.
    let all: Vec<(usize, usize)> = (0..6).flat_map(|a| (a + 1..6).map(move |b| (a, b))).collect();
    let mut checked = 0;
    for mask in (0u32..1 << 15).filter(|m| m.count_ones() == 9).step_by(7) {
        let edges: Vec<_> = (0..15).filter(|e| mask >> e & 1 == 1).map(|e| all[e]).collect();
        assert_eq!(is_rigid(&Graph::new(6, edges.clone())), common::laman_rigid(6, &edges), "{edges:?}");
        checked += 1;
    }
    assert!(checked > 500);
}

proptest! {
    #[test]
    fn rank_never_exceeds_laman_bound(n in 2usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = common::random_graph(&mut rng, n, 0.5);
        let g = Graph::new(n, edges.clone());
        prop_assert!(rigidity_rank(&g) <= (2 * n - 3).min(edges.len()));
    }

    #[test]
    fn adding_edges_keeps_rigidity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = common::random_graph(&mut rng, 6, 0.6);
        let g = Graph::new(6, edges.clone());
        if is_rigid(&g) {
            prop_assert!(is_rigid(&Graph::complete(6)));
            let mut more = edges;
            more.push((0, 5));
            more.sort();
            more.dedup();
            prop_assert!(is_rigid(&Graph::new(6, more)));
        }
    }
}
