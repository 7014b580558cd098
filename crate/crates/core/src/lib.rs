//! Uncertainty relations for quantum processes.
//!
//! A process is measured with a tester (an input state on `R ⊗ A` and a
//! POVM on `R ⊗ B`), which turns every channel `A -> B` into an outcome
//! distribution `p_x = Tr[E_x J]`. For two testers the crate evaluates
//!
//! * the overlap bound `H_α(p') + H_β(q') >= -2 log c` ([`entropy::mu_relation`]),
//! * the majorization bounds `p ⊕ q ≺ F(s) ≺ s` and `p ⊗ q ≺ F(t) ≺ t`
//!   ([`majorization::bound_vectors`]), where each `s_k` is a conditional
//!   min-entropy SDP value,
//!
//! and checks them against random channels ([`harness`]).

pub mod channels;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod io;
pub mod majorization;
pub mod opalg;
pub mod tester;

pub use channels::{DensityOperator, Povm, QuantumChannel};
pub use error::{Error, Result};
pub use opalg::{Hermitian, SystemShape};
pub use tester::{ExtendedTester, OverlapTable, Tester};
