//! Engine for non-clairvoyant selfish-migration scheduling on unrelated machines.
//!
//! Machines run the WLAPS(k) weighted processor-sharing policy over a virtual
//! queue; jobs migrate by sequential best response on a virtual utility. The
//! crate simulates the resulting piecewise-constant schedule exactly, in the
//! plain weighted flow-time setting and in the speed-scaled flow-time plus
//! energy setting, and re-derives a dual-fitting certificate from the event log.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, IO and the
//! command line live in the `selfmig` companion crate.

#![no_std]
// `!(x > 0.0)` is the idiom used throughout to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod error;
pub mod game;
pub mod generate;
pub mod instance;
pub mod lp;
mod math;
pub mod oracle;
pub mod power;
pub mod queue;
pub mod sim;

pub use error::{Error, Result};
pub use instance::{Instance, Job, JobId, Mode};
pub use power::PowerFunction;
