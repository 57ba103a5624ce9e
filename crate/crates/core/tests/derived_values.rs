mod common;

use treechild::clusters::find_common_clusters;
use treechild::forest::apply_sequence;
use treechild::gen::{random_network, GenParams};
use treechild::newick::parse_instance;
use treechild::oracle::brute_force_htc;
use treechild::search::{solve, SolveOptions};
use treechild::CherryPickingSequence;

#[test]
fn quartet_pair_optimum_is_two() {
    let inst = parse_instance("((a,b),(c,d)); ((a,c),(b,d));").unwrap();
    assert_eq!(brute_force_htc(&inst, 1).min_weight, None);
    assert_eq!(brute_force_htc(&inst, 2).min_weight, Some(2));
    let witness =
        CherryPickingSequence::parse("(b,a)\n(b,d)\n(a,c)\n(c,d)\n(a,d)\n(d,-)\n", &inst.taxa).unwrap();
    assert_eq!(witness.weight(), 2);
    assert!(apply_sequence(&inst, &witness).is_valid_tree_child_cps());
    assert_eq!(solve(&inst, &SolveOptions::default()).unwrap().weight, 2);
}

#[test]
fn shared_clusters_of_five_taxa() {
    let inst = parse_instance("(((a,b),c),(d,e)); (((a,c),b),(d,e));").unwrap();
    let root = find_common_clusters(&inst);
    let clusters: Vec<String> =
        root.proper_clusters().iter().map(|c| c.iter().map(|&t| inst.taxa.label(t)).collect()).collect();
    assert_eq!(clusters, ["abc", "de"]);
    assert_eq!(brute_force_htc(&inst, 3).min_weight, Some(1));
    assert_eq!(solve(&inst, &SolveOptions::default()).unwrap().weight, 1);
}

#[test]
fn cluster_abc_costs_one() {
    let sub = parse_instance("((a,b),c); ((a,c),b);").unwrap();
    assert_eq!(brute_force_htc(&sub, 3).min_weight, Some(1));
    let witness = CherryPickingSequence::parse("(b,a)\n(a,c)\n(b,c)\n(c,-)\n", &sub.taxa).unwrap();
    assert_eq!(witness.weight(), 1);
    assert!(apply_sequence(&sub, &witness).is_valid_tree_child_cps());
    let de = parse_instance("(d,e); (d,e);").unwrap();
    assert_eq!(brute_force_htc(&de, 0).min_weight, Some(0));
}

#[test]
fn four_tree_instance_optimum_is_three() {
    let inst = common::four_trees();
    assert_eq!(brute_force_htc(&inst, 2).min_weight, None);
    assert_eq!(brute_force_htc(&inst, 3).min_weight, Some(3));
}

#[test]
fn seeded_network_passes_checkers() {
    let net = random_network(&GenParams { n: 20, k: 5, t: 1, seed: 42 }).unwrap();
    assert!(net.is_tree_child());
    assert!(!net.has_parallel_edges());
    assert!(net.reticulation_number() <= 5);
    assert_eq!(net.num_leaves(), 20);
}
