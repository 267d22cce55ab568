//! Concrete environments, with closed-form trajectory counts where one exists.

mod bitvec;
mod hypergrid;
mod simple;
mod tree;
mod words;

pub use bitvec::{bitvec_n, BitVectorEnv, Slot};
pub use hypergrid::{hypergrid_target, GridState, HypergridEnv};
pub use simple::{SimpleDagEnv, SimpleState};
pub use tree::{tree_n, LabeledTree, TreeBuildEnv};
pub use words::{words_n, WordsEnv, WordsMode};
