//! Exact tree-child hybridization.
//!
//! Given binary phylogenetic trees on a common leaf set, find a minimum-weight tree-child
//! cherry-picking sequence and build the tree-child network it describes. The network displays
//! every input tree and its reticulation number equals the weight of the sequence.
//!
//! ```
//! use treechild::{newick, search};
//!
//! let inst = newick::parse_instance("((a,b),c); ((a,c),b);").unwrap();
//! let sol = search::solve(&inst, &search::SolveOptions::default()).unwrap();
//! assert_eq!(sol.weight, 1);
//! ```

pub mod cli;
pub mod clusters;
pub mod forest;
pub mod gen;
pub mod network;
pub mod newick;
pub mod oracle;
pub mod scheduler;
pub mod search;
pub mod tree;

pub use forest::{CherryPickingSequence, Pair, SearchState};
pub use network::Network;
pub use tree::{Instance, TaxonId, TaxonTable, Tree};
