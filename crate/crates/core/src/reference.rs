//! One-instruction-at-a-time reference interpreter over the same ISA and
//! machine state. No pipeline, no hazards, no timing: the architectural
//! oracle the cycle-stepped simulator is checked against.

use crate::isa::{Instruction, Mnemonic};
use crate::machine::{CipherKind, MachineState, Mode};
use crate::pipeline::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpOutcome {
    Halted,
    StepCapReached,
}

pub struct Interpreter {
    pub machine: MachineState,
    cipher: CipherKind,
    decrypt_ifetch: bool,
    steps: u64,
    halted: bool,
}

impl Interpreter {
    pub fn new(machine: MachineState, cipher: CipherKind, decrypt_ifetch: bool) -> Interpreter {
        Interpreter {
            machine,
            cipher,
            decrypt_ifetch,
            steps: 0,
            halted: false,
        }
    }

    pub fn run(&mut self, max_steps: u64) -> Result<InterpOutcome, SimError> {
        if self.machine.mode != Mode::Running {
            return Err(SimError::NotRunning);
        }
        if self.machine.image_words() == 0 {
            self.halted = true;
        }
        while !self.halted {
            if self.steps >= max_steps {
                return Ok(InterpOutcome::StepCapReached);
            }
            self.step()?;
        }
        Ok(InterpOutcome::Halted)
    }

    fn step(&mut self) -> Result<(), SimError> {
        self.steps += 1;
        let pc = self.machine.pc;
        let word = if self.decrypt_ifetch {
            self.machine.fetch_word_decrypted(pc, self.cipher)
        } else {
            self.machine.fetch_word_plain(pc)
        }
        .map_err(|source| SimError::Memory {
            source,
            pc,
            cycle: self.steps,
        })?;
        let instr = Instruction::decode(word).map_err(|_| SimError::IllegalInstruction {
            word,
            pc,
            cycle: self.steps,
        })?;
        let mn = instr.mnemonic().expect("decoded instruction");
        let rs = self.machine.rf.read(instr.rs);
        let rt = self.machine.rf.read(instr.rt);
        let sext = instr.immediate as i32 as u32;
        let zext = instr.immediate as u16 as u32;
        let mut next_pc = pc.wrapping_add(4);

        use Mnemonic::*;
        match mn {
            Add => self.machine.rf.write(instr.rd, rs.wrapping_add(rt)),
            Sub => self.machine.rf.write(instr.rd, rs.wrapping_sub(rt)),
            And => self.machine.rf.write(instr.rd, rs & rt),
            Or => self.machine.rf.write(instr.rd, rs | rt),
            Nor => self.machine.rf.write(instr.rd, !(rs | rt)),
            Slt => self
                .machine
                .rf
                .write(instr.rd, ((rs as i32) < (rt as i32)) as u32),
            Sll => self.machine.rf.write(instr.rd, rs << instr.shamt),
            Srl => self.machine.rf.write(instr.rd, rs >> instr.shamt),
            Addi => self.machine.rf.write(instr.rt, rs.wrapping_add(sext)),
            Subi => self.machine.rf.write(instr.rt, rs.wrapping_sub(sext)),
            Slti => self
                .machine
                .rf
                .write(instr.rt, ((rs as i32) < (sext as i32)) as u32),
            Andi => self.machine.rf.write(instr.rt, rs & zext),
            Ori => self.machine.rf.write(instr.rt, rs | zext),
            Nori => self.machine.rf.write(instr.rt, !(rs | zext)),
            Lw => {
                let addr = rs.wrapping_add(sext);
                let value = self
                    .machine
                    .encrypted_load_word(addr, self.cipher)
                    .map_err(|source| SimError::Memory {
                        source,
                        pc,
                        cycle: self.steps,
                    })?;
                self.machine.rf.write(instr.rt, value);
            }
            Sw => {
                let addr = rs.wrapping_add(sext);
                self.machine
                    .encrypted_store_word(addr, rt, self.cipher)
                    .map_err(|source| SimError::Memory {
                        source,
                        pc,
                        cycle: self.steps,
                    })?;
            }
            Lklw | Lkuw => {
                let addr = rs.wrapping_add(sext);
                let value = self.machine.dmem.read_word(addr).map_err(|source| {
                    SimError::Memory {
                        source,
                        pc,
                        cycle: self.steps,
                    }
                })?;
                let slot = if mn == Lklw { 0 } else { 2 } + (instr.rt & 1);
                self.machine.load_key_word(slot, value).expect("slot in range");
            }
            Beq | Bne => {
                if (rs == rt) == (mn == Beq) {
                    next_pc = pc.wrapping_add(4).wrapping_add(sext << 2);
                }
            }
            J => {
                let target = instr.target * 4;
                if target == pc {
                    self.halted = true;
                }
                next_pc = target;
            }
            Jal => {
                self.machine.rf.write(31, pc.wrapping_add(4));
                next_pc = instr.target * 4;
            }
            Jr => next_pc = rs,
            Crypt => self.machine.set_crypt_enabled(instr.target != 0),
        }
        self.machine.pc = next_pc;
        Ok(())
    }
}
