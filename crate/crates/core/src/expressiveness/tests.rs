use super::*;

fn star(s: &[usize]) -> HetGraph {
    LinkedStar::new(s.to_vec()).graph()
}

#[test]
fn degrees_follow_the_definition() {
    let ls = LinkedStar::new(vec![3, 1, 2]);
    let g = ls.graph();
    assert_eq!(g.len(), ls.nodes());
    for (a, &leaves) in ls.sizes.iter().enumerate() {
        assert_eq!(g.degree(a), leaves + ls.sizes.len() - 1);
    }
    assert!((3..g.len()).all(|v| g.degree(v) == 1));
}

#[test]
fn enumeration_respects_bounds_and_is_complete() {
    let all = LinkedStar::enumerate(10, 4);
    assert!(all.iter().all(|s| s.nodes() <= 10 && (1..=4).contains(&s.sizes.len())));
    let mut dedup = all.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), all.len());
    // Compositions of m leaves into k parts: C(m-1, k-1), summed over
    // k + m <= 10.
    let choose = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
    let expected: usize = (1..=4usize).map(|k| (k..=10 - k).map(|m| choose(m - 1, k - 1)).sum::<usize>()).sum();
    assert_eq!(all.len(), expected);
}

#[test]
fn reordered_stars_are_isomorphic_and_wl_equal() {
    let (a, b) = (star(&[3, 4]), star(&[4, 3]));
    assert!(isomorphic(&a, &b));
    assert!(!wl_distinguishes(&a, &b));
}

#[test]
fn different_sizes_are_separated() {
    let (a, b) = (star(&[3, 3]), star(&[3, 4]));
    assert!(!isomorphic(&a, &b));
    assert!(wl_distinguishes(&a, &b));
}

#[test]
fn wl_is_invariant_under_relabeling() {
    let g = star(&[2, 1, 3]);
    let n = g.len();
    let perm: Vec<usize> = (0..n).map(|v| (v * 5 + 3) % n).collect();
    let h = g.relabel(&perm);
    assert!(isomorphic(&g, &h));
    let mut r = WlRefiner::new();
    assert_eq!(r.refine(&g).histogram(), r.refine(&h).histogram());
}

#[test]
fn brute_force_respects_kinds() {
    // Same path shape, different kind placement.
    let a = HetGraph::new(vec![NodeKind::Ap, NodeKind::Ap, NodeKind::Sta], &[(0, 1), (1, 2)]);
    let b = HetGraph::new(vec![NodeKind::Ap, NodeKind::Sta, NodeKind::Sta], &[(0, 1), (1, 2)]);
    assert!(!isomorphic(&a, &b));
    assert!(wl_distinguishes(&a, &b));
}

#[test]
fn refinement_reaches_fixpoint_within_node_count() {
    for s in LinkedStar::enumerate(8, 4) {
        let g = s.graph();
        let c = WlRefiner::new().refine(&g);
        assert!(c.rounds.len() <= g.len() + 1);
    }
}

#[test]
fn exhaustive_check_small_bound() {
    let r = wl_check(7);
    assert!(r.passed(), "{r:?}");
    assert!(r.isomorphic_pairs > 0);
    assert_eq!(r.max_diameter, 3);
}

#[test]
fn exhaustive_check_covers_every_star_count() {
    // Ordered compositions of m leaves into k stars with k + m <= 8; the
    // largest k is 4, one leaf each.
    let choose = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
    let expected: usize = (1..=4usize).map(|k| (k..=8 - k).map(|m| choose(m - 1, k - 1)).sum::<usize>()).sum();
    let r = wl_check(8);
    assert_eq!(r.graphs, expected);
    assert_eq!(r.pairs, expected * (expected - 1) / 2);
}

#[test]
fn diameter_examples() {
    assert_eq!(star(&[2]).diameter(), Some(2));
    assert_eq!(star(&[1, 1]).diameter(), Some(3));
    assert_eq!(HetGraph::new(vec![NodeKind::Ap; 2], &[]).diameter(), None);
}
