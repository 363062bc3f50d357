//! Synthesis of lock-based concurrent code for heap-linked data structures.

pub mod cli;
pub mod codegen;
pub mod dsl;
pub mod engine;
pub mod heap;
pub mod instance;
pub mod interference;
pub mod oracle;
pub mod tasks;
