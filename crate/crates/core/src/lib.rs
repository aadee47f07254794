//! Simulation and analysis of repeated quantum non-demolition (QND) measurement chains.
//!
//! The crate is `no_std` with `alloc`. It covers the discrete Bayesian/POVM chain on a
//! finite pointer basis, the relative-entropy convergence rates of that chain, and its
//! diffusive (Belavkin) continuous-time limit.
//!
//! * [`linalg`]: probability vectors, density matrices, stationary distributions.
//! * [`measurement`]: pointer models, measurement methods, phases and sectors.
//! * [`protocol`]: method-selection policies and their invariant measures.
//! * [`discrete`]: trajectories, exact enumeration and collapse reports.
//! * [`analysis`]: relative entropies, decay fits, confidence steps, collapse statistics.
//! * [`continuous`]: noise, SDE steps, closed forms and the scaling-limit check.
//! * [`scenarios`]: built-in models.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod continuous;
pub mod discrete;
pub mod linalg;
pub mod measurement;
pub mod protocol;
pub mod rng;
pub mod scenarios;

pub use num_complex::Complex64 as C64;

pub(crate) mod prelude {
    pub use alloc::string::String;
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    #[allow(unused_imports)]
    pub use num_traits::Float;
}
