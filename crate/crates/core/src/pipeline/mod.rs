//! The five-stage cycle-stepped pipeline: fetch (with optional
//! instruction-stream decryption), decode with ID-stage branch resolution,
//! execute, memory access through the cipher path, and write-back.
//!
//! Hazards follow the classic scheme: full forwarding into ID, a single
//! bubble for load-use, predict-not-taken with one flushed slot per taken
//! branch or jump. When crypt mode is on, every instruction fetch pays the
//! crypto block latency as stall cycles in IF, which is what puts the
//! per-class latencies at base + crypto cycles.

pub mod trace;

use thiserror::Error;

use crate::isa::{Instruction, Mnemonic};
use crate::machine::{CipherKind, MachineError, MachineState, Mode};
use crate::power::ActivityCounters;
use trace::{CycleRecord, Outcome, Retired, RunTrace};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("illegal instruction {word:#010x} at pc {pc:#010x}, cycle {cycle}")]
    IllegalInstruction { word: u32, pc: u32, cycle: u64 },
    #[error("memory fault at pc {pc:#010x}, cycle {cycle}: {source}")]
    Memory {
        source: MachineError,
        pc: u32,
        cycle: u64,
    },
    #[error("machine is not in running mode")]
    NotRunning,
}

/// Static configuration of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub cipher: CipherKind,
    /// Crypto-block latency charged per instruction fetch in crypt mode
    /// (16 for DES/TDES, 43 for AES).
    pub crypto_block_cycles: u32,
    pub gating_enabled: bool,
    /// Route every instruction fetch through the decryption core
    /// (the image in instruction memory is ciphertext).
    pub decrypt_ifetch: bool,
    /// Charge the block latency on every fetch; when false, a decrypted
    /// block is reused for the consecutive words it covers (2 instructions
    /// per DES/TDES block, 4 per AES block).
    pub per_instruction_crypto_charge: bool,
}

impl PipelineConfig {
    pub fn new(cipher: CipherKind) -> Self {
        PipelineConfig {
            cipher,
            crypto_block_cycles: cipher.default_block_cycles(),
            gating_enabled: false,
            decrypt_ifetch: false,
            per_instruction_crypto_charge: true,
        }
    }
}

// Accounted widths of the four stage latches (bits that the activity
// counters watch). Invalid or gated latches pack to all-zero.
const IF_ID_BITS: u32 = 64;
const ID_EX_BITS: u32 = 64 + 32 + 5 + 10;
const EX_MEM_BITS: u32 = 64 + 5 + 10;
const MEM_WB_BITS: u32 = 32 + 5 + 10;
pub const TOTAL_LATCH_BITS: u32 = IF_ID_BITS + ID_EX_BITS + EX_MEM_BITS + MEM_WB_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Nor,
    Slt,
    Sll,
    Srl,
    PassA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WbSrc {
    Alu,
    Mem,
    Link,
}

#[derive(Debug, Clone, Copy)]
struct Control {
    reg_write: bool,
    wb_src: WbSrc,
    dest: u8,
    mem_read: bool,
    mem_write: bool,
    key_slot: Option<u8>,
    alu: AluOp,
    /// Crypt flag latched at decode; memory ops use the mode in force at
    /// their own program point even if a CRYPT is in flight behind them.
    crypt_data: bool,
    /// Zero-held EX/MEM and MEM/WB contents for this instruction
    /// (arithmetic bypass while the gating control signal is asserted).
    gated: bool,
}

impl Control {
    fn inert() -> Control {
        Control {
            reg_write: false,
            wb_src: WbSrc::Alu,
            dest: 0,
            mem_read: false,
            mem_write: false,
            key_slot: None,
            alu: AluOp::PassA,
            crypt_data: false,
            gated: false,
        }
    }

    fn bits(&self) -> u64 {
        let alu = self.alu as u64;
        let wb = self.wb_src as u64;
        self.reg_write as u64
            | (self.mem_read as u64) << 1
            | (self.mem_write as u64) << 2
            | (self.key_slot.is_some() as u64) << 3
            | wb << 4
            | alu << 6
    }
}

/// Per-instruction bookkeeping: fetch issue cycle and the number of
/// cycles spent doing stage work (the measured latency).
#[derive(Debug, Clone, Copy)]
struct Acct {
    seq: u64,
    active: u32,
}

#[derive(Debug, Clone, Copy)]
struct IfSlot {
    pc: u32,
    word: u32,
    acct: Acct,
}

#[derive(Debug, Clone, Copy)]
struct IdExSlot {
    pc: u32,
    word: u32,
    mn: Mnemonic,
    a: u32,
    b: u32,
    store_data: u32,
    ctrl: Control,
    acct: Acct,
}

#[derive(Debug, Clone, Copy)]
struct ExMemSlot {
    pc: u32,
    word: u32,
    mn: Mnemonic,
    alu: u32,
    store_data: u32,
    ctrl: Control,
    acct: Acct,
}

#[derive(Debug, Clone, Copy)]
struct MemWbSlot {
    pc: u32,
    word: u32,
    mn: Mnemonic,
    value: u32,
    mem_store: Option<(u32, u32)>,
    mem_load: Option<(u32, u32)>,
    ctrl: Control,
    acct: Acct,
}

/// An instruction fetch in progress; `cycles_left` covers the base fetch
/// cycle plus any crypto charge.
#[derive(Debug, Clone, Copy)]
struct InFlightFetch {
    pc: u32,
    cycles_left: u32,
    acct: Acct,
}

pub struct Pipeline {
    pub machine: MachineState,
    cfg: PipelineConfig,
    fetch: Option<InFlightFetch>,
    if_id: Option<IfSlot>,
    id_ex: Option<IdExSlot>,
    ex_mem: Option<ExMemSlot>,
    mem_wb: Option<MemWbSlot>,
    /// Last decrypted instruction block (block-cache fetch mode).
    fetched_block: Option<u32>,
    /// The gating control signal: asserted by store/branch/jump, dropped by
    /// the next load.
    gate_on: bool,
    halted: bool,
    cycle: u64,
    next_seq: u64,
    counters: ActivityCounters,
    prev_packs: [[u64; 2]; 4],
    cycle_records: Vec<CycleRecord>,
    retired: Vec<Retired>,
    flushes: u64,
    stalls: u64,
}

impl Pipeline {
    pub fn new(machine: MachineState, cfg: PipelineConfig) -> Pipeline {
        Pipeline {
            machine,
            cfg,
            fetch: None,
            if_id: None,
            id_ex: None,
            ex_mem: None,
            mem_wb: None,
            fetched_block: None,
            gate_on: false,
            halted: false,
            cycle: 0,
            next_seq: 0,
            counters: ActivityCounters::new(TOTAL_LATCH_BITS),
            prev_packs: [[0; 2]; 4],
            cycle_records: Vec::new(),
            retired: Vec::new(),
            flushes: 0,
            stalls: 0,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn cycle_count(&self) -> u64 {
        self.cycle
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    fn drained(&self) -> bool {
        self.fetch.is_none()
            && self.if_id.is_none()
            && self.id_ex.is_none()
            && self.ex_mem.is_none()
            && self.mem_wb.is_none()
    }

    /// Runs to the halt convention or to `max_cycles`, whichever first.
    pub fn run(&mut self, max_cycles: u64) -> Result<RunTrace, SimError> {
        if self.machine.mode != Mode::Running {
            return Err(SimError::NotRunning);
        }
        let mut outcome = Outcome::Halted;
        if self.machine.image_words() > 0 {
            loop {
                if self.halted && self.drained() {
                    break;
                }
                if self.cycle >= max_cycles {
                    outcome = Outcome::CycleCapReached;
                    break;
                }
                self.step()?;
            }
        }
        Ok(RunTrace {
            cipher: self.cfg.cipher,
            gating: self.cfg.gating_enabled,
            crypto_block_cycles: self.cfg.crypto_block_cycles,
            decrypt_ifetch: self.cfg.decrypt_ifetch,
            outcome,
            cycles: std::mem::take(&mut self.cycle_records),
            retired: std::mem::take(&mut self.retired),
            flushes: self.flushes,
            stalls: self.stalls,
            counters: self.counters,
        })
    }

    /// Advances every stage one clock.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.machine.mode != Mode::Running {
            return Err(SimError::NotRunning);
        }
        self.cycle += 1;
        let cycle = self.cycle;
        let mut stage_names = ["-"; 5];
        let mut stall = false;
        let mut flush = false;
        let mut redirect: Option<u32> = None;

        // WB: retire the oldest instruction and apply its writes.
        if let Some(mut wb) = self.mem_wb.take() {
            stage_names[4] = wb.mn.name();
            let mut rf_write = None;
            let mut key_write = None;
            if let Some(slot) = wb.ctrl.key_slot {
                self.machine
                    .load_key_word(slot, wb.value)
                    .expect("key slot decoded in range");
                key_write = Some((slot, wb.value));
                wb.acct.active += 1;
            } else if wb.ctrl.reg_write {
                self.machine.rf.write(wb.ctrl.dest, wb.value);
                if wb.ctrl.dest != 0 {
                    rf_write = Some((wb.ctrl.dest, wb.value));
                }
                // the ISA table counts a write-back cycle only for data
                // produced by the ALU or memory; a jump's link write rides
                // along without one
                if wb.ctrl.wb_src != WbSrc::Link {
                    wb.acct.active += 1;
                }
            }
            self.retired.push(Retired {
                seq: wb.acct.seq,
                pc: wb.pc,
                word: wb.word,
                format: wb.mn.format(),
                mnemonic: wb.mn.name(),
                active_cycles: wb.acct.active,
                rf_write,
                key_write,
                mem_store: wb.mem_store,
                mem_load: wb.mem_load,
            });
        }

        // MEM: data-memory access (through the cipher when the op decoded
        // under crypt mode); everything else passes through.
        if let Some(mut m) = self.ex_mem.take() {
            stage_names[3] = m.mn.name();
            let addr = m.alu;
            let mut mem_store = None;
            let mut mem_load = None;
            let mut value = m.alu;
            if m.ctrl.mem_read {
                m.acct.active += 1;
                let loaded = if m.ctrl.key_slot.is_some() {
                    // key loads bypass the decryption core
                    self.machine.dmem.read_word(addr)
                } else if m.ctrl.crypt_data {
                    self.machine.load_word_ciphered(addr, self.cfg.cipher)
                } else {
                    self.machine.dmem.read_word(addr)
                }
                .map_err(|source| SimError::Memory {
                    source,
                    pc: m.pc,
                    cycle,
                })?;
                mem_load = Some((addr, loaded));
                value = loaded;
            } else if m.ctrl.mem_write {
                m.acct.active += 1;
                if m.ctrl.crypt_data {
                    self.machine
                        .store_word_ciphered(addr, m.store_data, self.cfg.cipher)
                } else {
                    self.machine.dmem.write_word(addr, m.store_data)
                }
                .map_err(|source| SimError::Memory {
                    source,
                    pc: m.pc,
                    cycle,
                })?;
                mem_store = Some((addr, m.store_data));
            }
            self.mem_wb = Some(MemWbSlot {
                pc: m.pc,
                word: m.word,
                mn: m.mn,
                value,
                mem_store,
                mem_load,
                ctrl: m.ctrl,
                acct: m.acct,
            });
        }

        // EX: the ALU.
        if let Some(mut e) = self.id_ex.take() {
            stage_names[2] = e.mn.name();
            e.acct.active += 1;
            let alu = alu_compute(e.ctrl.alu, e.a, e.b);
            self.ex_mem = Some(ExMemSlot {
                pc: e.pc,
                word: e.word,
                mn: e.mn,
                alu,
                store_data: e.store_data,
                ctrl: e.ctrl,
                acct: e.acct,
            });
        }

        // ID: decode, hazard check, operand read with forwarding, branch
        // resolution.
        if let Some(mut slot) = self.if_id.take() {
            let instr = Instruction::decode(slot.word).map_err(|_| SimError::IllegalInstruction {
                word: slot.word,
                pc: slot.pc,
                cycle,
            })?;
            let mn = instr.mnemonic().expect("decoded instruction");
            stage_names[1] = mn.name();
            let sources = id_sources(mn, &instr);

            if self.load_use_hazard(&sources) {
                // one bubble: hold IF and ID, let EX take nothing
                slot.acct.active += 1;
                stall = true;
                self.stalls += 1;
                self.if_id = Some(slot);
            } else {
                slot.acct.active += 1;
                self.update_gate(mn);
                let issued = self.issue(&instr, mn, slot, &mut redirect);
                self.id_ex = Some(issued);
            }
        }

        // IF: redirect handling, then fetch-engine progress.
        if let Some(target) = redirect {
            // squash the one younger fetch slot (in flight or about to
            // issue this cycle)
            self.fetch = None;
            flush = true;
            self.flushes += 1;
            self.machine.pc = target;
        } else {
            if self.fetch.is_none() && self.if_id.is_none() && !self.halted {
                let pc = self.machine.pc;
                let charge = self.fetch_charge(pc);
                self.fetch = Some(InFlightFetch {
                    pc,
                    cycles_left: 1 + charge,
                    acct: Acct {
                        seq: self.next_seq,
                        active: 0,
                    },
                });
                self.next_seq += 1;
                self.machine.pc = pc.wrapping_add(4);
            }
            if let Some(f) = &mut self.fetch {
                if f.cycles_left > 0 {
                    f.cycles_left -= 1;
                    f.acct.active += 1;
                    stage_names[0] = "*";
                }
                if f.cycles_left == 0 && self.if_id.is_none() {
                    let f = self.fetch.take().unwrap();
                    let word = if self.cfg.decrypt_ifetch {
                        self.machine.fetch_word_decrypted(f.pc, self.cfg.cipher)
                    } else {
                        self.machine.fetch_word_plain(f.pc)
                    }
                    .map_err(|source| SimError::Memory {
                        source,
                        pc: f.pc,
                        cycle,
                    })?;
                    self.fetched_block =
                        Some(f.pc & !(self.cfg.cipher.block_bytes() as u32 - 1));
                    stage_names[0] = Instruction::decode(word)
                        .ok()
                        .and_then(|i| i.mnemonic())
                        .map_or("?", |m| m.name());
                    self.if_id = Some(IfSlot {
                        pc: f.pc,
                        word,
                        acct: f.acct,
                    });
                }
            }
        }

        // clock edge: account latch activity
        let next_packs = self.pack_latches();
        let cycle_toggles: u64 = self
            .prev_packs
            .iter()
            .zip(next_packs.iter())
            .map(|(p, n)| ((p[0] ^ n[0]).count_ones() + (p[1] ^ n[1]).count_ones()) as u64)
            .sum();
        self.counters.record_cycle(&self.prev_packs, &next_packs);
        if self.cfg.gating_enabled && self.gate_on {
            self.counters.gated_cycles += 1;
        }
        self.prev_packs = next_packs;
        self.cycle_records.push(CycleRecord {
            cycle,
            stages: stage_names,
            stall,
            flush,
            crypt: self.machine.crypt_enabled,
            toggles: cycle_toggles,
        });
        Ok(())
    }

    /// Crypto stall cycles this fetch pays. Charged whenever crypt mode is
    /// on; in block-cache mode only when the word's block is not the one
    /// already decrypted.
    fn fetch_charge(&self, pc: u32) -> u32 {
        if !self.machine.crypt_enabled {
            return 0;
        }
        if self.cfg.per_instruction_crypto_charge {
            self.cfg.crypto_block_cycles
        } else {
            let block = pc & !(self.cfg.cipher.block_bytes() as u32 - 1);
            if self.fetched_block == Some(block) {
                0
            } else {
                self.cfg.crypto_block_cycles
            }
        }
    }

    /// Load-use: the instruction now in EX/MEM is a register load whose
    /// destination one of the decoding instruction's sources needs.
    fn load_use_hazard(&self, sources: &[u8]) -> bool {
        if let Some(e) = &self.ex_mem {
            if e.ctrl.mem_read && e.ctrl.reg_write && e.ctrl.dest != 0 {
                return sources.contains(&e.ctrl.dest);
            }
        }
        false
    }

    /// Newest in-flight value for a register: EX/MEM beats MEM/WB beats
    /// the register file; `$0` is never forwarded. Loads still in EX/MEM
    /// carry only an address and are excluded (the hazard unit already
    /// stalled any consumer).
    fn forward(&self, reg: u8) -> u32 {
        if reg == 0 {
            return 0;
        }
        if let Some(e) = &self.ex_mem {
            if e.ctrl.reg_write && !e.ctrl.mem_read && e.ctrl.dest == reg {
                return e.alu;
            }
        }
        if let Some(m) = &self.mem_wb {
            if m.ctrl.reg_write && m.ctrl.dest == reg {
                return m.value;
            }
        }
        self.machine.rf.read(reg)
    }

    /// The gating control signal: store/branch/jump asserts, load drops.
    fn update_gate(&mut self, mn: Mnemonic) {
        if mn == Mnemonic::Sw || mn.is_branch() || mn.is_jump() {
            self.gate_on = true;
        } else if mn.is_load() {
            self.gate_on = false;
        }
    }

    fn issue(
        &mut self,
        instr: &Instruction,
        mn: Mnemonic,
        slot: IfSlot,
        redirect: &mut Option<u32>,
    ) -> IdExSlot {
        use Mnemonic::*;
        let gated = self.cfg.gating_enabled && self.gate_on;
        let mut out = IdExSlot {
            pc: slot.pc,
            word: slot.word,
            mn,
            a: 0,
            b: 0,
            store_data: 0,
            ctrl: Control::inert(),
            acct: slot.acct,
        };
        match mn {
            Add | Sub | And | Or | Nor | Slt => {
                out.a = self.forward(instr.rs);
                out.b = self.forward(instr.rt);
                out.ctrl = Control {
                    reg_write: true,
                    dest: instr.rd,
                    alu: alu_for(mn),
                    gated,
                    ..Control::inert()
                };
            }
            Sll | Srl => {
                out.a = self.forward(instr.rs);
                out.b = instr.shamt as u32;
                out.ctrl = Control {
                    reg_write: true,
                    dest: instr.rd,
                    alu: alu_for(mn),
                    gated,
                    ..Control::inert()
                };
            }
            Addi | Subi | Slti | Andi | Ori | Nori => {
                out.a = self.forward(instr.rs);
                out.b = match mn {
                    // logical immediates zero-extend, arithmetic ones
                    // sign-extend
                    Andi | Ori | Nori => instr.immediate as u16 as u32,
                    _ => instr.immediate as i32 as u32,
                };
                out.ctrl = Control {
                    reg_write: true,
                    dest: instr.rt,
                    alu: alu_for(mn),
                    gated,
                    ..Control::inert()
                };
            }
            Lw => {
                out.a = self.forward(instr.rs);
                out.b = instr.immediate as i32 as u32;
                out.ctrl = Control {
                    reg_write: true,
                    wb_src: WbSrc::Mem,
                    dest: instr.rt,
                    mem_read: true,
                    alu: AluOp::Add,
                    crypt_data: self.machine.crypt_enabled,
                    ..Control::inert()
                };
            }
            Lklw | Lkuw => {
                out.a = self.forward(instr.rs);
                out.b = instr.immediate as i32 as u32;
                let base = if mn == Lklw { 0 } else { 2 };
                out.ctrl = Control {
                    wb_src: WbSrc::Mem,
                    mem_read: true,
                    key_slot: Some(base + (instr.rt & 1)),
                    alu: AluOp::Add,
                    ..Control::inert()
                };
            }
            Sw => {
                out.a = self.forward(instr.rs);
                out.b = instr.immediate as i32 as u32;
                out.store_data = self.forward(instr.rt);
                out.ctrl = Control {
                    mem_write: true,
                    alu: AluOp::Add,
                    crypt_data: self.machine.crypt_enabled,
                    ..Control::inert()
                };
            }
            Beq | Bne => {
                let a = self.forward(instr.rs);
                let b = self.forward(instr.rt);
                let taken = (a == b) == (mn == Beq);
                if taken {
                    *redirect = Some(
                        slot.pc
                            .wrapping_add(4)
                            .wrapping_add((instr.immediate as i32 as u32) << 2),
                    );
                }
            }
            J => {
                let target = instr.target * 4;
                if target == slot.pc {
                    // halt convention: a jump to itself
                    self.halted = true;
                } else {
                    *redirect = Some(target);
                }
            }
            Jal => {
                out.a = slot.pc.wrapping_add(4);
                out.ctrl = Control {
                    reg_write: true,
                    wb_src: WbSrc::Link,
                    dest: 31,
                    ..Control::inert()
                };
                *redirect = Some(instr.target * 4);
            }
            Jr => {
                *redirect = Some(self.forward(instr.rs));
            }
            Crypt => {
                // mode change behaves like a jump to pc+4: the one wrongly
                // fetched slot is flushed and refetched under the new mode
                self.machine.set_crypt_enabled(instr.target != 0);
                *redirect = Some(slot.pc.wrapping_add(4));
            }
        }
        out
    }

    fn pack_latches(&self) -> [[u64; 2]; 4] {
        let if_id = match &self.if_id {
            Some(s) => [s.word as u64 | (s.pc as u64) << 32, 0],
            None => [0, 0],
        };
        let id_ex = match &self.id_ex {
            Some(s) => [
                s.a as u64 | (s.b as u64) << 32,
                s.store_data as u64 | (s.ctrl.dest as u64) << 32 | s.ctrl.bits() << 37,
            ],
            None => [0, 0],
        };
        let ex_mem = match &self.ex_mem {
            Some(s) if !s.ctrl.gated => [
                s.alu as u64 | (s.store_data as u64) << 32,
                (s.ctrl.dest as u64) | s.ctrl.bits() << 5,
            ],
            _ => [0, 0],
        };
        let mem_wb = match &self.mem_wb {
            Some(s) if !s.ctrl.gated => {
                [s.value as u64, (s.ctrl.dest as u64) | s.ctrl.bits() << 5]
            }
            _ => [0, 0],
        };
        [if_id, id_ex, ex_mem, mem_wb]
    }
}

fn alu_for(mn: Mnemonic) -> AluOp {
    use Mnemonic::*;
    match mn {
        Add | Addi => AluOp::Add,
        Sub | Subi => AluOp::Sub,
        And | Andi => AluOp::And,
        Or | Ori => AluOp::Or,
        Nor | Nori => AluOp::Nor,
        Slt | Slti => AluOp::Slt,
        Sll => AluOp::Sll,
        Srl => AluOp::Srl,
        _ => AluOp::PassA,
    }
}

fn alu_compute(op: AluOp, a: u32, b: u32) -> u32 {
    match op {
        AluOp::Add => a.wrapping_add(b),
        AluOp::Sub => a.wrapping_sub(b),
        AluOp::And => a & b,
        AluOp::Or => a | b,
        AluOp::Nor => !(a | b),
        AluOp::Slt => ((a as i32) < (b as i32)) as u32,
        AluOp::Sll => a << (b & 31),
        AluOp::Srl => a >> (b & 31),
        AluOp::PassA => a,
    }
}

/// Registers an instruction reads during decode. The rt field of a key
/// load selects a key slot and is not a register read.
fn id_sources(mn: Mnemonic, instr: &Instruction) -> Vec<u8> {
    use Mnemonic::*;
    match mn {
        Add | Sub | And | Or | Nor | Slt | Beq | Bne => vec![instr.rs, instr.rt],
        Sw => vec![instr.rs, instr.rt],
        Sll | Srl | Addi | Subi | Slti | Andi | Ori | Nori | Lw | Lklw | Lkuw | Jr => {
            vec![instr.rs]
        }
        J | Jal | Crypt => Vec::new(),
    }
}
