//! Switching-activity accounting, the dynamic-power equation and the
//! throughput/latency report.
//!
//! Activity is counted over pipeline-latch bits only: E(sw) is the mean
//! fraction of latch bits that toggle per cycle, so it always lands in
//! [0, 1]. Dynamic power is 0.5 * C * Vdd^2 * E(sw) * F_clk.

use thiserror::Error;

use crate::isa::Format;
use crate::machine::CipherKind;
use crate::pipeline::trace::{Outcome, RunTrace};

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("{name} must be strictly positive (got {value})")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("activity factor must be non-negative (got {0})")]
    NegativeActivity(f64),
    #[error("throughput needs a non-zero {0}")]
    ZeroDivisor(&'static str),
    #[error("trace retired no instructions")]
    EmptyTrace,
}

/// Electrical parameters of the power equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    pub capacitance_f: f64,
    pub vdd_v: f64,
    pub clock_hz: u64,
}

impl PowerParams {
    pub fn new(capacitance_f: f64, vdd_v: f64, clock_hz: u64) -> Result<Self, PowerError> {
        let params = PowerParams {
            capacitance_f,
            vdd_v,
            clock_hz,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), PowerError> {
        if self.capacitance_f <= 0.0 {
            return Err(PowerError::NonPositiveParam {
                name: "capacitance",
                value: self.capacitance_f,
            });
        }
        if self.vdd_v <= 0.0 {
            return Err(PowerError::NonPositiveParam {
                name: "vdd",
                value: self.vdd_v,
            });
        }
        if self.clock_hz == 0 {
            return Err(PowerError::NonPositiveParam {
                name: "clock_hz",
                value: 0.0,
            });
        }
        Ok(())
    }
}

impl Default for PowerParams {
    /// 1 nF at the nominal 1.5 V supply and the DES-pipeline clock.
    fn default() -> Self {
        PowerParams {
            capacitance_f: 1e-9,
            vdd_v: 1.5,
            clock_hz: 218_000_000,
        }
    }
}

/// P = 0.5 * C * Vdd^2 * E(sw) * F_clk, in watts.
pub fn dynamic_power(params: &PowerParams, e_sw: f64) -> Result<f64, PowerError> {
    params.validate()?;
    if e_sw < 0.0 {
        return Err(PowerError::NegativeActivity(e_sw));
    }
    Ok(0.5 * params.capacitance_f * params.vdd_v * params.vdd_v * e_sw * params.clock_hz as f64)
}

/// Data bandwidth in integer Mbit/s: floor(clock * block_bits / latency / 1e6).
pub fn throughput_mbps(
    clock_hz: u64,
    block_bits: u32,
    latency_cycles: u32,
) -> Result<u64, PowerError> {
    if clock_hz == 0 {
        return Err(PowerError::ZeroDivisor("clock"));
    }
    if block_bits == 0 {
        return Err(PowerError::ZeroDivisor("block width"));
    }
    if latency_cycles == 0 {
        return Err(PowerError::ZeroDivisor("latency"));
    }
    Ok((clock_hz as u128 * block_bits as u128 / latency_cycles as u128 / 1_000_000) as u64)
}

/// Toggle counts per stage latch (IF/ID, ID/EX, EX/MEM, MEM/WB), summed
/// Hamming distances of successive latch contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActivityCounters {
    pub latch_toggles: [u64; 4],
    pub cycles: u64,
    pub gated_cycles: u64,
    pub latch_bits: u32,
}

impl ActivityCounters {
    pub fn new(latch_bits: u32) -> Self {
        ActivityCounters {
            latch_bits,
            ..Default::default()
        }
    }

    /// Accumulates one clock edge: per-latch Hamming distance between the
    /// previous and next packed contents. A latch held at zero while gated
    /// contributes nothing, by construction of its packed contents.
    pub fn record_cycle(&mut self, prev: &[[u64; 2]; 4], next: &[[u64; 2]; 4]) {
        for (i, (p, n)) in prev.iter().zip(next.iter()).enumerate() {
            self.latch_toggles[i] += ((p[0] ^ n[0]).count_ones() + (p[1] ^ n[1]).count_ones()) as u64;
        }
        self.cycles += 1;
    }

    pub fn total_toggles(&self) -> u64 {
        self.latch_toggles.iter().sum()
    }

    /// Toggles per latch bit per cycle.
    pub fn e_sw(&self) -> f64 {
        if self.cycles == 0 || self.latch_bits == 0 {
            0.0
        } else {
            self.total_toggles() as f64 / (self.latch_bits as f64 * self.cycles as f64)
        }
    }
}

/// The run summary serialized for scripts: fixed field names, one
/// `name=value` pair per line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub cipher: CipherKind,
    pub clock_hz: u64,
    pub cycles: u64,
    pub retired_r: u64,
    pub retired_i: u64,
    pub retired_j: u64,
    pub latency_r: f64,
    pub latency_i: f64,
    pub latency_j: f64,
    pub e_sw: f64,
    pub power_w: f64,
    pub throughput_mbps: u64,
    pub gating: bool,
    pub halted: bool,
}

/// Aggregates a completed trace into the report. The throughput divisor is
/// the measured I-class latency when the run retired any load/store-class
/// instruction, else the nominal crypt-mode load latency for the cipher.
pub fn make_report(trace: &RunTrace, params: &PowerParams) -> Result<RunReport, PowerError> {
    if trace.retired.is_empty() {
        return Err(PowerError::EmptyTrace);
    }
    let e_sw = trace.counters.e_sw();
    let latency_i = trace.mean_latency(Format::I);
    let block_latency = if trace.retired_by_format(Format::I) > 0 {
        latency_i.round() as u32
    } else {
        5 + trace.crypto_block_cycles
    };
    Ok(RunReport {
        cipher: trace.cipher,
        clock_hz: params.clock_hz,
        cycles: trace.cycle_count(),
        retired_r: trace.retired_by_format(Format::R),
        retired_i: trace.retired_by_format(Format::I),
        retired_j: trace.retired_by_format(Format::J),
        latency_r: trace.mean_latency(Format::R),
        latency_i,
        latency_j: trace.mean_latency(Format::J),
        e_sw,
        power_w: dynamic_power(params, e_sw)?,
        throughput_mbps: throughput_mbps(params.clock_hz, trace.cipher.block_bits(), block_latency)?,
        gating: trace.gating,
        halted: trace.outcome == Outcome::Halted,
    })
}

impl RunReport {
    pub fn to_text(&self) -> String {
        format!(
            "cipher={}\nclock_hz={}\ncycles={}\nretired_r={}\nretired_i={}\nretired_j={}\n\
             latency_r={:.3}\nlatency_i={:.3}\nlatency_j={:.3}\ne_sw={:.6}\npower_w={:.9}\n\
             throughput_mbps={}\ngating={}\n",
            self.cipher.name(),
            self.clock_hz,
            self.cycles,
            self.retired_r,
            self.retired_i,
            self.retired_j,
            self.latency_r,
            self.latency_i,
            self.latency_j,
            self.e_sw,
            self.power_w,
            self.throughput_mbps,
            if self.gating { "on" } else { "off" },
        )
    }
}
