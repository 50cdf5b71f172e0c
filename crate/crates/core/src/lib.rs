//! Cycle-stepped model of a 32-bit MIPS pipeline whose instruction and data
//! streams pass through DES, TDES or AES cores, together with an assembler,
//! a switching-activity power model and a throughput reporter.

pub mod crypto;
pub mod isa;
pub mod machine;
pub mod pipeline;
pub mod power;
pub mod reference;
