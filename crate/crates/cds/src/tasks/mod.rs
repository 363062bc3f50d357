//! The four bounded reasoning tasks over the interference model: conjunct
//! falsification, lock-set adequacy, program-order validity, and key
//! movement. Synthesis composes their reports into a verdict.

pub mod falsify;
pub mod keymove;
pub mod locks;
pub mod order;

pub use falsify::{task1_unfalsify, ConjunctVerdict, FalsifyReport};
pub use keymove::{search_trail, task4_keymove, KeyMoveReport, KeyMoveWitness};
pub use locks::{lock_order, task2_adequacy, window_heuristic, AdequacyReport};
pub use order::{task3_program_order, OrderReport, OrderVerdict};
