//! Record, replay and explore message-passing programs.
//!
//! Programs are written in MMP, a small actor language. The [`runtime`]
//! executes them under the tracing scheduler in [`sched`], which records a
//! trace or replays a log of actions. [`races`] finds message races in a
//! trace and builds the log prefixes that reverse them; [`explore`] iterates
//! that to enumerate distinct behaviours.

pub mod explore;
pub mod interp;
pub mod lang;
pub mod races;
pub mod runtime;
pub mod sched;
pub mod tracemodel;
