#![allow(dead_code)]

use treechild::gen::{generate_instance, GenParams};
use treechild::newick::parse_instance;
use treechild::{Instance, Network, TaxonTable};

pub const FOUR_TREES: &str = "(((a,b),e),(c,d)); (((a,b),(c,e)),d); ((a,(e,(b,c))),d); ((a,(e,b)),(c,d));";

pub fn four_trees() -> Instance {
    parse_instance(FOUR_TREES).unwrap()
}

/// Parameters of corpus instance `i`.
pub fn corpus_params(i: usize) -> GenParams {
    GenParams { n: [4, 5, 6][i % 3], t: [2, 3, 4][(i / 3) % 3], k: [1, 2, 3][(i / 9) % 3], seed: i as u64 }
}

/// The 200 generated instances used across the differential tests, with the reticulation
/// number of each generating network.
pub fn corpus() -> Vec<(Instance, usize)> {
    (0..200)
        .map(|i| {
            let (inst, net) = generate_instance(&corpus_params(i)).unwrap();
            (inst, net.reticulation_number())
        })
        .collect()
}

/// A network with two reticulations displaying all four trees of [`FOUR_TREES`]. Both reticulations
/// hang below the same node, so it is not tree-child.
pub fn two_reticulation_network(taxa: &TaxonTable) -> Network {
    let t = |l: &str| taxa.id(l).unwrap();
    // 0 root, 1 A, 2 CD, 3 AB, 4 BCE, 5 BC, 6 Rb, 7 Rc, 8..=12 leaves a..e
    let edges = [
        (0, 1),
        (0, 2),
        (1, 3),
        (1, 4),
        (3, 8),
        (3, 6),
        (4, 5),
        (4, 12),
        (5, 6),
        (5, 7),
        (2, 11),
        (2, 7),
        (6, 9),
        (7, 10),
    ];
    let leaves = [(8, t("a")), (9, t("b")), (10, t("c")), (11, t("d")), (12, t("e"))];
    Network::from_edges(13, &edges, &leaves).unwrap()
}
