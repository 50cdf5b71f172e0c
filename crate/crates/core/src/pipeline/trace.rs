//! Run traces: one record per clock plus one per retired instruction,
//! with a line-oriented text form (`H`/`C`/`R`/`S` lines) that the
//! reporter can parse back.

use std::fmt::Write as _;

use thiserror::Error;

use crate::isa::Format;
use crate::machine::CipherKind;
use crate::power::ActivityCounters;

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The halt convention fired (a `j` to its own address).
    Halted,
    /// The cycle cap was exhausted before the program halted.
    CycleCapReached,
}

/// Per-cycle pipeline occupancy; stage slots hold the occupant's mnemonic,
/// `-` for a bubble, `*` for a fetch still paying decrypt cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleRecord {
    pub cycle: u64,
    pub stages: [&'static str; 5],
    pub stall: bool,
    pub flush: bool,
    pub crypt: bool,
    pub toggles: u64,
}

/// One retired instruction with its architectural effects and the number
/// of cycles it spent doing stage work (its measured latency).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retired {
    pub seq: u64,
    pub pc: u32,
    pub word: u32,
    pub format: Format,
    pub mnemonic: &'static str,
    pub active_cycles: u32,
    pub rf_write: Option<(u8, u32)>,
    pub key_write: Option<(u8, u32)>,
    pub mem_store: Option<(u32, u32)>,
    pub mem_load: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub cipher: CipherKind,
    pub gating: bool,
    pub crypto_block_cycles: u32,
    pub decrypt_ifetch: bool,
    pub outcome: Outcome,
    pub cycles: Vec<CycleRecord>,
    pub retired: Vec<Retired>,
    pub flushes: u64,
    pub stalls: u64,
    pub counters: ActivityCounters,
}

impl RunTrace {
    pub fn cycle_count(&self) -> u64 {
        self.cycles.len() as u64
    }

    pub fn retired_by_format(&self, format: Format) -> u64 {
        self.retired.iter().filter(|r| r.format == format).count() as u64
    }

    /// Mean measured latency of the retired instructions of one format;
    /// zero when none retired.
    pub fn mean_latency(&self, format: Format) -> f64 {
        let of_format: Vec<u32> = self
            .retired
            .iter()
            .filter(|r| r.format == format)
            .map(|r| r.active_cycles)
            .collect();
        if of_format.is_empty() {
            0.0
        } else {
            of_format.iter().map(|&c| c as f64).sum::<f64>() / of_format.len() as f64
        }
    }

    /// The architectural instruction stream: everything the program did,
    /// independent of how the image was stored or gated.
    pub fn architectural(&self) -> &[Retired] {
        &self.retired
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "H cipher={} gating={} crypto_cycles={} decrypt_ifetch={} latch_bits={}",
            self.cipher.name(),
            self.gating as u8,
            self.crypto_block_cycles,
            self.decrypt_ifetch as u8,
            self.counters.latch_bits,
        );
        for c in &self.cycles {
            let _ = writeln!(
                out,
                "C {} if={} id={} ex={} mem={} wb={} stall={} flush={} crypt={} toggles={}",
                c.cycle,
                c.stages[0],
                c.stages[1],
                c.stages[2],
                c.stages[3],
                c.stages[4],
                c.stall as u8,
                c.flush as u8,
                c.crypt as u8,
                c.toggles,
            );
        }
        for r in &self.retired {
            let _ = writeln!(
                out,
                "R {} pc={:#010x} word={:#010x} fmt={} mn={} cycles={} rf={} key={} st={} ld={}",
                r.seq,
                r.pc,
                r.word,
                format_name(r.format),
                r.mnemonic,
                r.active_cycles,
                pair_text(r.rf_write.map(|(a, b)| (a as u32, b))),
                pair_text(r.key_write.map(|(a, b)| (a as u32, b))),
                pair_text(r.mem_store),
                pair_text(r.mem_load),
            );
        }
        let _ = writeln!(
            out,
            "S outcome={} cycles={} flushes={} stalls={} gated_cycles={} toggles={},{},{},{}",
            match self.outcome {
                Outcome::Halted => "halted",
                Outcome::CycleCapReached => "cap",
            },
            self.cycle_count(),
            self.flushes,
            self.stalls,
            self.counters.gated_cycles,
            self.counters.latch_toggles[0],
            self.counters.latch_toggles[1],
            self.counters.latch_toggles[2],
            self.counters.latch_toggles[3],
        );
        out
    }

    /// Rebuilds a trace from its text form. Stage occupancy strings are
    /// not interned back, so they come back as `?`; everything the
    /// reporter consumes (counters, retire records, flags) round-trips.
    pub fn parse_text(text: &str) -> Result<RunTrace, TraceParseError> {
        let mut cipher = None;
        let mut gating = false;
        let mut crypto_block_cycles = 0;
        let mut decrypt_ifetch = false;
        let mut latch_bits = 0u32;
        let mut outcome = None;
        let mut cycles = Vec::new();
        let mut retired = Vec::new();
        let mut flushes = 0;
        let mut stalls = 0;
        let mut gated_cycles = 0;
        let mut latch_toggles = [0u64; 4];
        let mut total_cycles = 0u64;

        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("H") => {
                    for field in fields {
                        let (k, v) = split_kv(field, n)?;
                        match k {
                            "cipher" => {
                                cipher = Some(match v {
                                    "des" => CipherKind::Des,
                                    "tdes" => CipherKind::Tdes,
                                    "aes" => CipherKind::Aes,
                                    _ => return Err(TraceParseError::bad(n, "cipher")),
                                })
                            }
                            "gating" => gating = v == "1",
                            "crypto_cycles" => crypto_block_cycles = parse(v, n, "crypto_cycles")?,
                            "decrypt_ifetch" => decrypt_ifetch = v == "1",
                            "latch_bits" => latch_bits = parse(v, n, "latch_bits")?,
                            _ => {}
                        }
                    }
                }
                Some("C") => {
                    let cycle = parse(fields.next().unwrap_or(""), n, "cycle")?;
                    let mut record = CycleRecord {
                        cycle,
                        stages: ["?"; 5],
                        stall: false,
                        flush: false,
                        crypt: false,
                        toggles: 0,
                    };
                    for field in fields {
                        let (k, v) = split_kv(field, n)?;
                        match k {
                            "stall" => record.stall = v == "1",
                            "flush" => record.flush = v == "1",
                            "crypt" => record.crypt = v == "1",
                            "toggles" => record.toggles = parse(v, n, "toggles")?,
                            _ => {}
                        }
                    }
                    cycles.push(record);
                }
                Some("R") => {
                    let seq = parse(fields.next().unwrap_or(""), n, "seq")?;
                    let mut r = Retired {
                        seq,
                        pc: 0,
                        word: 0,
                        format: Format::R,
                        mnemonic: "?",
                        active_cycles: 0,
                        rf_write: None,
                        key_write: None,
                        mem_store: None,
                        mem_load: None,
                    };
                    for field in fields {
                        let (k, v) = split_kv(field, n)?;
                        match k {
                            "pc" => r.pc = parse_hex(v, n, "pc")?,
                            "word" => r.word = parse_hex(v, n, "word")?,
                            "fmt" => {
                                r.format = match v {
                                    "R" => Format::R,
                                    "I" => Format::I,
                                    "J" => Format::J,
                                    _ => return Err(TraceParseError::bad(n, "fmt")),
                                }
                            }
                            "cycles" => r.active_cycles = parse(v, n, "cycles")?,
                            "rf" => r.rf_write = parse_pair(v, n)?.map(|(a, b)| (a as u8, b)),
                            "key" => r.key_write = parse_pair(v, n)?.map(|(a, b)| (a as u8, b)),
                            "st" => r.mem_store = parse_pair(v, n)?,
                            "ld" => r.mem_load = parse_pair(v, n)?,
                            _ => {}
                        }
                    }
                    retired.push(r);
                }
                Some("S") => {
                    for field in fields {
                        let (k, v) = split_kv(field, n)?;
                        match k {
                            "outcome" => {
                                outcome = Some(match v {
                                    "halted" => Outcome::Halted,
                                    "cap" => Outcome::CycleCapReached,
                                    _ => return Err(TraceParseError::bad(n, "outcome")),
                                })
                            }
                            "cycles" => total_cycles = parse(v, n, "cycles")?,
                            "flushes" => flushes = parse(v, n, "flushes")?,
                            "stalls" => stalls = parse(v, n, "stalls")?,
                            "gated_cycles" => gated_cycles = parse(v, n, "gated_cycles")?,
                            "toggles" => {
                                for (slot, part) in latch_toggles.iter_mut().zip(v.split(',')) {
                                    *slot = parse(part, n, "toggles")?;
                                }
                            }
                            _ => {}
                        }
                    }
                }
                Some(_) | None => continue,
            }
        }

        let cipher = cipher.ok_or(TraceParseError::MissingHeader)?;
        let outcome = outcome.ok_or(TraceParseError::MissingSummary)?;
        let counters = ActivityCounters {
            latch_toggles,
            cycles: total_cycles,
            gated_cycles,
            latch_bits,
        };
        Ok(RunTrace {
            cipher,
            gating,
            crypto_block_cycles,
            decrypt_ifetch,
            outcome,
            cycles,
            retired,
            flushes,
            stalls,
            counters,
        })
    }
}

pub fn format_name(format: Format) -> &'static str {
    match format {
        Format::R => "R",
        Format::I => "I",
        Format::J => "J",
    }
}

fn pair_text(pair: Option<(u32, u32)>) -> String {
    match pair {
        Some((a, b)) => format!("{a}:{b:#010x}"),
        None => "-".to_string(),
    }
}

fn parse_pair(v: &str, line: usize) -> Result<Option<(u32, u32)>, TraceParseError> {
    if v == "-" {
        return Ok(None);
    }
    let (a, b) = v.split_once(':').ok_or(TraceParseError::bad(line, "pair"))?;
    Ok(Some((parse(a, line, "pair")?, parse_hex(b, line, "pair")?)))
}

fn split_kv(field: &str, line: usize) -> Result<(&str, &str), TraceParseError> {
    field
        .split_once('=')
        .ok_or(TraceParseError::bad(line, "field"))
}

fn parse<T: std::str::FromStr>(
    v: &str,
    line: usize,
    what: &'static str,
) -> Result<T, TraceParseError> {
    v.parse().map_err(|_| TraceParseError::bad(line, what))
}

fn parse_hex(v: &str, line: usize, what: &'static str) -> Result<u32, TraceParseError> {
    let stripped = v.strip_prefix("0x").unwrap_or(v);
    u32::from_str_radix(stripped, 16).map_err(|_| TraceParseError::bad(line, what))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("trace line {line}: bad {what}")]
    Bad { line: usize, what: &'static str },
    #[error("trace has no H header line")]
    MissingHeader,
    #[error("trace has no S summary line")]
    MissingSummary,
}

impl TraceParseError {
    fn bad(line: usize, what: &'static str) -> TraceParseError {
        TraceParseError::Bad { line, what }
    }
}
