//! Core of a shared-presence session framework: composition of remote play
//! spaces, an interactive ring polymer, the scripted aesthetic-state
//! machine, the wire protocol, and questionnaire statistics.

pub mod canonical;
pub mod config;
pub mod netdiag;
pub mod protocol;
pub mod psychometrics;
pub mod simdyn;
pub mod spatial;
pub mod states;
