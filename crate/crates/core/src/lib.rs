//! Exact counting of first-order definable sets in finite structures, with
//! tools for studying how those counts grow along families of structures.
//!
//! - [`logic`]: signatures, structures, formulas.
//! - [`parser`]: formula text and structure JSON.
//! - [`engine`]: evaluation and exact counting, explicit or block-wise.
//! - [`families`]: structure generators, finite fields, groups, word maps.
//! - [`abelian`]: closed-form counting in homocyclic groups.
//! - [`vs`]: closed-form counting in finite vector spaces.
//! - [`dimension`]: comparison of log-count sequences, chains, spectra.
//! - [`measure`]: finite measure spaces and intersection bounds.

pub mod abelian;
pub mod dimension;
pub mod engine;
pub mod families;
pub mod logic;
pub mod measure;
pub mod parser;
pub mod serde_util;
pub mod vs;

pub use engine::{count, count_with, evaluate, Count, EngineConfig, EngineError, Model};
pub use logic::{Assignment, FiniteStructure, Formula, Signature, Term};
pub use parser::{parse_formula, render_formula};
