//! Instruction set: the 24 implemented mnemonics, their binary encodings
//! and the assembler/disassembler.
//!
//! Words are 32 bits. R-type packs op/rs/rt/rd/shamt/funct, I-type packs
//! op/rs/rt/imm16, J-type packs op/target26. Opcodes follow MIPS-I where
//! a canonical encoding exists; SUBI and NORI take free slots 0b011000 and
//! 0b011001, and the key/crypt extensions sit at the top of the opcode
//! space (LKLW 60, LKUW 62, CRYPT 63).

pub mod asm;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("{field} value {value} exceeds {max}")]
    FieldRange {
        field: &'static str,
        value: u32,
        max: u32,
    },
    #[error("illegal instruction word {word:#010x}")]
    IllegalInstruction { word: u32 },
}

/// The three MIPS instruction formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[derive(Default)]
pub enum Format {
    #[default]
    R,
    I,
    J,
}

macro_rules! mnemonics {
    ($(($variant:ident, $name:literal, $format:ident, $opcode:literal, $funct:expr, $cycles:literal),)+) => {
        /// One of the 24 implemented instructions.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Mnemonic {
            $($variant,)+
        }

        impl Mnemonic {
            pub const ALL: &'static [Mnemonic] = &[$(Mnemonic::$variant,)+];

            pub fn name(self) -> &'static str {
                match self {
                    $(Mnemonic::$variant => $name,)+
                }
            }

            pub fn format(self) -> Format {
                match self {
                    $(Mnemonic::$variant => Format::$format,)+
                }
            }

            pub fn opcode(self) -> u8 {
                match self {
                    $(Mnemonic::$variant => $opcode,)+
                }
            }

            pub fn funct(self) -> Option<u8> {
                match self {
                    $(Mnemonic::$variant => $funct,)+
                }
            }

            /// The ISA table's per-instruction clock-cycle figure.
            pub fn base_cycles(self) -> u32 {
                match self {
                    $(Mnemonic::$variant => $cycles,)+
                }
            }

            pub fn from_name(name: &str) -> Option<Mnemonic> {
                match name {
                    $($name => Some(Mnemonic::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

mnemonics![
    (Add, "add", R, 0x00, Some(0x20), 4),
    (Sub, "sub", R, 0x00, Some(0x22), 4),
    (And, "and", R, 0x00, Some(0x24), 4),
    (Or, "or", R, 0x00, Some(0x25), 4),
    (Nor, "nor", R, 0x00, Some(0x27), 4),
    (Slt, "slt", R, 0x00, Some(0x2A), 4),
    (Sll, "sll", R, 0x00, Some(0x00), 4),
    (Srl, "srl", R, 0x00, Some(0x02), 4),
    (Jr, "jr", R, 0x00, Some(0x08), 3),
    (Addi, "addi", I, 0x08, None, 4),
    (Slti, "slti", I, 0x0A, None, 4),
    (Andi, "andi", I, 0x0C, None, 4),
    (Ori, "ori", I, 0x0D, None, 4),
    (Subi, "subi", I, 0x18, None, 4),
    (Nori, "nori", I, 0x19, None, 4),
    (Beq, "beq", I, 0x04, None, 3),
    (Bne, "bne", I, 0x05, None, 3),
    (Lw, "lw", I, 0x23, None, 5),
    (Sw, "sw", I, 0x2B, None, 4),
    (Lklw, "lklw", I, 0x3C, None, 5),
    (Lkuw, "lkuw", I, 0x3E, None, 5),
    (J, "j", J, 0x02, None, 3),
    (Jal, "jal", J, 0x03, None, 3),
    (Crypt, "crypt", J, 0x3F, None, 3),
];

impl Mnemonic {
    pub fn from_opcode_funct(opcode: u8, funct: u8) -> Option<Mnemonic> {
        Mnemonic::ALL.iter().copied().find(|m| {
            m.opcode() == opcode
                && match m.format() {
                    Format::R => m.funct() == Some(funct),
                    _ => true,
                }
        })
    }

    pub fn is_branch(self) -> bool {
        matches!(self, Mnemonic::Beq | Mnemonic::Bne)
    }

    pub fn is_jump(self) -> bool {
        matches!(self, Mnemonic::J | Mnemonic::Jal | Mnemonic::Jr | Mnemonic::Crypt)
    }

    pub fn is_load(self) -> bool {
        matches!(self, Mnemonic::Lw | Mnemonic::Lklw | Mnemonic::Lkuw)
    }

    pub fn is_key_load(self) -> bool {
        matches!(self, Mnemonic::Lklw | Mnemonic::Lkuw)
    }
}

/// A decoded instruction. Fields that do not belong to the active format
/// are kept at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Instruction {
    pub format: Format,
    pub opcode: u8,
    pub rs: u8,
    pub rt: u8,
    pub rd: u8,
    pub shamt: u8,
    pub funct: u8,
    pub immediate: i16,
    pub target: u32,
}


impl Instruction {
    pub fn nop() -> Instruction {
        Instruction::default()
    }

    /// True for the all-zero word (canonical NOP, an `sll $0, $0, 0`).
    pub fn is_nop(&self) -> bool {
        *self == Instruction::default()
    }

    pub fn r_alu(mn: Mnemonic, rd: u8, rs: u8, rt: u8) -> Instruction {
        debug_assert_eq!(mn.format(), Format::R);
        Instruction {
            format: Format::R,
            opcode: mn.opcode(),
            rs,
            rt,
            rd,
            funct: mn.funct().unwrap_or(0),
            ..Default::default()
        }
    }

    /// `sll`/`srl`; the shifted source register travels in the rs field.
    pub fn shift(mn: Mnemonic, rd: u8, rs: u8, shamt: u8) -> Instruction {
        debug_assert!(matches!(mn, Mnemonic::Sll | Mnemonic::Srl));
        Instruction {
            format: Format::R,
            opcode: 0,
            rs,
            rd,
            shamt,
            funct: mn.funct().unwrap_or(0),
            ..Default::default()
        }
    }

    pub fn jr(rs: u8) -> Instruction {
        Instruction {
            format: Format::R,
            opcode: 0,
            rs,
            funct: Mnemonic::Jr.funct().unwrap(),
            ..Default::default()
        }
    }

    pub fn i_type(mn: Mnemonic, rt: u8, rs: u8, immediate: i16) -> Instruction {
        debug_assert_eq!(mn.format(), Format::I);
        Instruction {
            format: Format::I,
            opcode: mn.opcode(),
            rs,
            rt,
            immediate,
            ..Default::default()
        }
    }

    pub fn j_type(mn: Mnemonic, target: u32) -> Instruction {
        debug_assert_eq!(mn.format(), Format::J);
        Instruction {
            format: Format::J,
            opcode: mn.opcode(),
            target,
            ..Default::default()
        }
    }

    /// Packs the instruction into its 32-bit word.
    pub fn encode(&self) -> Result<u32, IsaError> {
        check("opcode", self.opcode as u32, 63)?;
        let op = (self.opcode as u32) << 26;
        match self.format {
            Format::R => {
                check("rs", self.rs as u32, 31)?;
                check("rt", self.rt as u32, 31)?;
                check("rd", self.rd as u32, 31)?;
                check("shamt", self.shamt as u32, 31)?;
                check("funct", self.funct as u32, 63)?;
                Ok(op
                    | (self.rs as u32) << 21
                    | (self.rt as u32) << 16
                    | (self.rd as u32) << 11
                    | (self.shamt as u32) << 6
                    | self.funct as u32)
            }
            Format::I => {
                check("rs", self.rs as u32, 31)?;
                check("rt", self.rt as u32, 31)?;
                Ok(op
                    | (self.rs as u32) << 21
                    | (self.rt as u32) << 16
                    | (self.immediate as u16) as u32)
            }
            Format::J => {
                check("target", self.target, (1 << 26) - 1)?;
                Ok(op | self.target)
            }
        }
    }

    /// Inverse of [`encode`](Self::encode) on the implemented subset.
    /// Unknown (opcode, funct) combinations are an error, never a NOP.
    pub fn decode(word: u32) -> Result<Instruction, IsaError> {
        let opcode = (word >> 26) as u8;
        let mn = Mnemonic::from_opcode_funct(opcode, (word & 0x3F) as u8)
            .ok_or(IsaError::IllegalInstruction { word })?;
        Ok(match mn.format() {
            Format::R => Instruction {
                format: Format::R,
                opcode,
                rs: ((word >> 21) & 31) as u8,
                rt: ((word >> 16) & 31) as u8,
                rd: ((word >> 11) & 31) as u8,
                shamt: ((word >> 6) & 31) as u8,
                funct: (word & 0x3F) as u8,
                ..Default::default()
            },
            Format::I => Instruction {
                format: Format::I,
                opcode,
                rs: ((word >> 21) & 31) as u8,
                rt: ((word >> 16) & 31) as u8,
                immediate: (word & 0xFFFF) as u16 as i16,
                ..Default::default()
            },
            Format::J => Instruction {
                format: Format::J,
                opcode,
                target: word & 0x03FF_FFFF,
                ..Default::default()
            },
        })
    }

    /// The mnemonic this instruction decodes to, if its opcode/funct pair
    /// is in the table.
    pub fn mnemonic(&self) -> Option<Mnemonic> {
        Mnemonic::from_opcode_funct(self.opcode, self.funct)
    }
}

fn check(field: &'static str, value: u32, max: u32) -> Result<(), IsaError> {
    if value > max {
        Err(IsaError::FieldRange { field, value, max })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_add_example() {
        let add = Instruction::r_alu(Mnemonic::Add, 3, 1, 2);
        assert_eq!(add.encode().unwrap(), 0x0022_1820);
    }

    #[test]
    fn encode_nop_and_plain_j() {
        assert_eq!(Instruction::nop().encode().unwrap(), 0);
        assert_eq!(
            Instruction::j_type(Mnemonic::J, 0).encode().unwrap(),
            0x0800_0000
        );
    }

    #[test]
    fn encode_rejects_out_of_range_field() {
        let mut bad = Instruction::r_alu(Mnemonic::Add, 3, 1, 2);
        bad.rd = 32;
        assert_eq!(
            bad.encode(),
            Err(IsaError::FieldRange {
                field: "rd",
                value: 32,
                max: 31
            })
        );
    }

    #[test]
    fn decode_add_example() {
        let instr = Instruction::decode(0x0022_1820).unwrap();
        assert_eq!(instr, Instruction::r_alu(Mnemonic::Add, 3, 1, 2));
        assert_eq!(instr.mnemonic(), Some(Mnemonic::Add));
    }

    #[test]
    fn decode_zero_word_is_canonical_nop() {
        let instr = Instruction::decode(0).unwrap();
        assert!(instr.is_nop());
        assert_eq!(instr.mnemonic(), Some(Mnemonic::Sll));
    }

    #[test]
    fn decode_crypt_opcode() {
        let instr = Instruction::decode(0xFC00_0001).unwrap();
        assert_eq!(instr.mnemonic(), Some(Mnemonic::Crypt));
        assert_eq!(instr.format, Format::J);
        assert_eq!(instr.target, 1);
    }

    #[test]
    fn decode_reports_unknown_combinations() {
        // opcode 0b111101 is unassigned
        assert_eq!(
            Instruction::decode(0xF400_0000),
            Err(IsaError::IllegalInstruction { word: 0xF400_0000 })
        );
        // R-type funct 0x3F is unassigned
        assert_eq!(
            Instruction::decode(0x0000_003F),
            Err(IsaError::IllegalInstruction { word: 0x0000_003F })
        );
    }

    #[test]
    fn opcode_funct_assignment_is_injective() {
        for (i, a) in Mnemonic::ALL.iter().enumerate() {
            for b in &Mnemonic::ALL[i + 1..] {
                assert!(
                    (a.opcode(), a.funct()) != (b.opcode(), b.funct()),
                    "{} and {} collide",
                    a.name(),
                    b.name()
                );
            }
        }
    }

    #[test]
    fn clock_cycle_column() {
        use Mnemonic::*;
        for m in [Add, Sub, And, Or, Nor, Slt, Sll, Srl, Addi, Subi, Slti, Andi, Ori, Nori] {
            assert_eq!(m.base_cycles(), 4, "{}", m.name());
        }
        for m in [Beq, Bne, J, Jr, Jal, Crypt] {
            assert_eq!(m.base_cycles(), 3, "{}", m.name());
        }
        for m in [Lw, Lkuw, Lklw] {
            assert_eq!(m.base_cycles(), 5, "{}", m.name());
        }
        assert_eq!(Sw.base_cycles(), 4);
        assert!(Mnemonic::ALL.iter().all(|m| (3..=5).contains(&m.base_cycles())));
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        (0..Mnemonic::ALL.len(), any::<(u8, u8, u8, u8, i16, u32)>()).prop_map(
            |(i, (a, b, c, sh, imm, tgt))| {
                let mn = Mnemonic::ALL[i];
                let (rd, rs, rt, shamt) = (a % 32, b % 32, c % 32, sh % 32);
                match mn {
                    Mnemonic::Sll | Mnemonic::Srl => Instruction::shift(mn, rd, rs, shamt),
                    Mnemonic::Jr => Instruction::jr(rs),
                    m if m.format() == Format::R => Instruction::r_alu(m, rd, rs, rt),
                    m if m.format() == Format::I => Instruction::i_type(m, rt, rs, imm),
                    m => Instruction::j_type(m, tgt & 0x03FF_FFFF),
                }
            },
        )
    }

    proptest! {
        #[test]
        fn decode_encode_round_trip(instr in arb_instruction()) {
            let word = instr.encode().unwrap();
            prop_assert_eq!(Instruction::decode(word).unwrap(), instr);
        }
    }
}
