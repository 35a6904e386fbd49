//! Synthesis of time-triggered schedule tables that preserve analytic
//! latency guarantees for event-triggered load.
//!
//! The pipeline: bound the admissible burstiness of the TT slot stream from
//! the ET deadlines ([`envelope`]), turn that bound into a budget automaton
//! ([`budget`]), synthesize a conforming table with a laxity-driven scheduler
//! ([`synth`]), and confirm every feasibility verdict by brute-force
//! simulation ([`oracle`]). Polling-style baselines live in [`polling`],
//! batch studies in [`experiment`].

pub mod budget;
pub mod curves;
pub mod envelope;
pub mod experiment;
pub mod formats;
pub mod oracle;
pub mod polling;
pub mod rational;
pub mod synth;
pub mod taskgen;
pub mod taskmodel;
