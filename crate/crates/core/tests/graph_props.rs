use proptest::prelude::*;

use resest::graph::{
    brute_force_strongly_r_robust, build_medag, f_local_check, is_r_reachable, is_strongly_r_robust,
    parse_edge_list, Digraph, NodeSet,
};

fn digraph(max_n: usize) -> impl Strategy<Value = Digraph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * (n - 1)).prop_map(move |bits| {
            let pairs = (0..n).flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (j, i)));
            let edges: Vec<_> = pairs.zip(bits).filter(|(_, b)| *b).map(|(e, _)| e).collect();
            Digraph::from_edges(n, edges).unwrap()
        })
    })
}

fn subset_of(n: usize, mask: u32) -> NodeSet {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// Strong r-robustness straight from the definition: every nonempty subset
/// of the non-sources has a member with at least r in-neighbors outside it.
fn naive_robust(g: &Digraph, s: &NodeSet, r: usize) -> bool {
    let others: Vec<usize> = (0..g.node_count()).filter(|i| !s.contains(i)).collect();
    (1u32..1 << others.len()).all(|mask| {
        let c: NodeSet = others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i).collect();
        c.iter()
            .any(|&i| g.in_neighbors(i).iter().filter(|l| !c.contains(l)).count() >= r)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn peeling_matches_definition(g in digraph(6), mask in 1u32..64, r in 1usize..=3) {
        let s = subset_of(g.node_count(), mask);
        prop_assume!(!s.is_empty());
        let want = naive_robust(&g, &s, r);
        prop_assert_eq!(is_strongly_r_robust(&g, &s, r), want);
        prop_assert_eq!(brute_force_strongly_r_robust(&g, &s, r).unwrap(), want);
    }

    #[test]
    fn medag_exists_iff_robust(g in digraph(6), mask in 1u32..64, f in 0usize..=2) {
        let s = subset_of(g.node_count(), mask);
        prop_assume!(!s.is_empty());
        let built = build_medag(&g, &s, f);
        prop_assert_eq!(built.is_ok(), is_strongly_r_robust(&g, &s, 2 * f + 1));
        if let Ok(m) = built {
            for (l, i) in m.edges() {
                prop_assert!(g.has_edge(l, i));
                prop_assert!(m.levels[l] < m.levels[i]);
            }
            for i in 0..g.node_count() {
                prop_assert_eq!(m.levels[i] == 0, s.contains(&i));
            }
        }
    }

    #[test]
    fn f_locality_is_monotone(g in digraph(6), a in 0u32..64, extra in 0u32..64, f in 0usize..=2) {
        let n = g.node_count();
        let small = subset_of(n, a);
        let big: NodeSet = small.union(&subset_of(n, extra)).copied().collect();
        // A violation seen by a node that stays regular survives growing the
        // adversary set.
        let witness = (0..n).filter(|i| !big.contains(i)).any(|i| {
            g.in_neighbors(i).iter().filter(|l| small.contains(l)).count() > f
        });
        if witness {
            prop_assert!(!f_local_check(&g, &small, f));
            prop_assert!(!f_local_check(&g, &big, f));
        }
        if f_local_check(&g, &big, f) {
            prop_assert!(!witness);
        }
    }

    #[test]
    fn r_reachability_matches_definition(g in digraph(6), mask in 1u32..64, r in 1usize..=3) {
        let c = subset_of(g.node_count(), mask);
        prop_assume!(!c.is_empty());
        let want = c.iter().any(|&i| g.in_neighbors(i).iter().filter(|l| !c.contains(l)).count() >= r);
        prop_assert_eq!(is_r_reachable(&g, &c, r).unwrap(), want);
    }

    #[test]
    fn edge_list_round_trip(g in digraph(7)) {
        let text = g.to_edge_list();
        let back = parse_edge_list(&text, None).unwrap();
        prop_assert_eq!(back.node_count(), g.node_count());
        prop_assert_eq!(back.edges(), g.edges());
    }
}

#[test]
fn sources_out_of_range_are_not_robust() {
    let g = Digraph::complete(3);
    assert!(!is_strongly_r_robust(&g, &NodeSet::from([5]), 1));
    assert!(brute_force_strongly_r_robust(&g, &NodeSet::from([5]), 1).is_err());
}

#[test]
fn absorbing_the_violating_node_restores_f_locality() {
    // Node 2 hears both adversaries; once it is adversarial itself no regular
    // node is left to complain.
    let g = Digraph::from_edges(3, [(0, 2), (1, 2)]).unwrap();
    assert!(!f_local_check(&g, &NodeSet::from([0, 1]), 1));
    assert!(f_local_check(&g, &NodeSet::from([0, 1, 2]), 1));
}

#[test]
fn clique_f_locality_examples() {
    let g = Digraph::complete(5);
    assert!(f_local_check(&g, &NodeSet::new(), 0));
    assert!(f_local_check(&g, &NodeSet::from([3]), 1));
    assert!(!f_local_check(&g, &NodeSet::from([3, 4]), 1));
}
