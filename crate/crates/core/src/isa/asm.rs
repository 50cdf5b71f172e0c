//! Two-pass assembler and the matching disassembler.
//!
//! Grammar: one instruction per line, `name:` labels, registers `$0`-`$31`,
//! decimal or `0x` immediates, comments from `#` to end of line, memory
//! operands written `offset($rs)`. `.word 0x...` emits a raw word, which is
//! also what the disassembler falls back to for undecodable words.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Instruction, Mnemonic};

/// Hard image ceiling; matches the largest configurable instruction memory.
pub const MAX_IMAGE_WORDS: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{name}`")]
    UnknownMnemonic { line: usize, name: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: branch offset {offset} does not fit in 16 bits")]
    BranchOffsetRange { line: usize, offset: i64 },
    #[error("image of {words} words exceeds the {MAX_IMAGE_WORDS}-word capacity")]
    ImageOverflow { words: usize },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Assembled image plus the resolved label table (label -> word index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub words: Vec<u32>,
    pub symbols: BTreeMap<String, u32>,
}

struct SourceLine<'a> {
    line_no: usize,
    mnemonic: &'a str,
    operands: Vec<&'a str>,
    word_index: u32,
}

/// Assembles `source` into 32-bit words with all labels resolved.
///
/// Branch immediates are word offsets relative to the instruction after
/// the branch; jump targets are absolute word addresses.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut symbols = BTreeMap::new();
    let mut pending = Vec::new();
    let mut word_index = 0u32;

    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let mut text = raw.split('#').next().unwrap_or("").trim();
        while let Some(colon) = find_label(text) {
            let label = text[..colon].trim();
            if !is_identifier(label) {
                return Err(AsmError::Syntax {
                    line: line_no,
                    msg: format!("bad label `{label}`"),
                });
            }
            if symbols.insert(label.to_string(), word_index).is_some() {
                return Err(AsmError::DuplicateLabel {
                    line: line_no,
                    label: label.to_string(),
                });
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (mnemonic, rest) = match text.find(char::is_whitespace) {
            Some(pos) => (&text[..pos], text[pos..].trim()),
            None => (text, ""),
        };
        let operands: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        pending.push(SourceLine {
            line_no,
            mnemonic,
            operands,
            word_index,
        });
        word_index += 1;
    }

    if word_index as usize > MAX_IMAGE_WORDS {
        return Err(AsmError::ImageOverflow {
            words: word_index as usize,
        });
    }

    let mut words = Vec::with_capacity(pending.len());
    for line in &pending {
        words.push(encode_line(line, &symbols)?);
    }
    Ok(Program { words, symbols })
}

fn encode_line(line: &SourceLine, symbols: &BTreeMap<String, u32>) -> Result<u32, AsmError> {
    let n = line.line_no;
    let name = line.mnemonic.to_ascii_lowercase();

    if name == ".word" {
        expect_operands(line, 1)?;
        let value = parse_number(line.operands[0], n)?;
        return u32::try_from(value).map_err(|_| AsmError::Syntax {
            line: n,
            msg: format!("word value {value} out of range"),
        });
    }
    if name == "nop" {
        expect_operands(line, 0)?;
        return Ok(0);
    }

    let mn = Mnemonic::from_name(&name).ok_or_else(|| AsmError::UnknownMnemonic {
        line: n,
        name: line.mnemonic.to_string(),
    })?;

    let instr = match mn {
        Mnemonic::Add | Mnemonic::Sub | Mnemonic::And | Mnemonic::Or | Mnemonic::Nor
        | Mnemonic::Slt => {
            expect_operands(line, 3)?;
            Instruction::r_alu(
                mn,
                parse_register(line.operands[0], n)?,
                parse_register(line.operands[1], n)?,
                parse_register(line.operands[2], n)?,
            )
        }
        Mnemonic::Sll | Mnemonic::Srl => {
            expect_operands(line, 3)?;
            let shamt = parse_number(line.operands[2], n)?;
            if !(0..=31).contains(&shamt) {
                return Err(AsmError::Syntax {
                    line: n,
                    msg: format!("shift amount {shamt} out of range"),
                });
            }
            Instruction::shift(
                mn,
                parse_register(line.operands[0], n)?,
                parse_register(line.operands[1], n)?,
                shamt as u8,
            )
        }
        Mnemonic::Jr => {
            expect_operands(line, 1)?;
            Instruction::jr(parse_register(line.operands[0], n)?)
        }
        Mnemonic::Addi | Mnemonic::Subi | Mnemonic::Slti | Mnemonic::Andi | Mnemonic::Ori
        | Mnemonic::Nori => {
            expect_operands(line, 3)?;
            Instruction::i_type(
                mn,
                parse_register(line.operands[0], n)?,
                parse_register(line.operands[1], n)?,
                parse_imm16(line.operands[2], n)?,
            )
        }
        Mnemonic::Beq | Mnemonic::Bne => {
            expect_operands(line, 3)?;
            let rs = parse_register(line.operands[0], n)?;
            let rt = parse_register(line.operands[1], n)?;
            let offset = match symbols.get(line.operands[2]) {
                Some(&target) => target as i64 - (line.word_index as i64 + 1),
                None if !is_identifier(line.operands[2]) => parse_number(line.operands[2], n)?,
                None => {
                    return Err(AsmError::UndefinedLabel {
                        line: n,
                        label: line.operands[2].to_string(),
                    })
                }
            };
            let imm = i16::try_from(offset)
                .map_err(|_| AsmError::BranchOffsetRange { line: n, offset })?;
            Instruction::i_type(mn, rt, rs, imm)
        }
        Mnemonic::Lw | Mnemonic::Sw | Mnemonic::Lkuw | Mnemonic::Lklw => {
            expect_operands(line, 2)?;
            let rt = parse_register(line.operands[0], n)?;
            let (offset, base) = parse_mem_operand(line.operands[1], n)?;
            Instruction::i_type(mn, rt, base, offset)
        }
        Mnemonic::J | Mnemonic::Jal => {
            expect_operands(line, 1)?;
            let target = match symbols.get(line.operands[0]) {
                Some(&t) => t as i64,
                None if !is_identifier(line.operands[0]) => parse_number(line.operands[0], n)?,
                None => {
                    return Err(AsmError::UndefinedLabel {
                        line: n,
                        label: line.operands[0].to_string(),
                    })
                }
            };
            if !(0..1 << 26).contains(&target) {
                return Err(AsmError::Syntax {
                    line: n,
                    msg: format!("jump target {target} out of range"),
                });
            }
            Instruction::j_type(mn, target as u32)
        }
        Mnemonic::Crypt => {
            expect_operands(line, 1)?;
            let arg = parse_number(line.operands[0], n)?;
            if !(0..1 << 26).contains(&arg) {
                return Err(AsmError::Syntax {
                    line: n,
                    msg: format!("crypt argument {arg} out of range"),
                });
            }
            Instruction::j_type(mn, arg as u32)
        }
    };

    instr.encode().map_err(|e| AsmError::Syntax {
        line: n,
        msg: e.to_string(),
    })
}

/// Renders words back to source text; undecodable words become `.word`.
/// Total function: every input renders, and reassembling the output
/// reproduces the words exactly.
pub fn disassemble(words: &[u32]) -> String {
    let mut out = String::new();
    for &word in words {
        out.push_str(&disassemble_word(word));
        out.push('\n');
    }
    out
}

fn disassemble_word(word: u32) -> String {
    if word == 0 {
        return "nop".to_string();
    }
    let instr = match Instruction::decode(word) {
        Ok(i) => i,
        Err(_) => return format!(".word {word:#010x}"),
    };
    let mn = instr.mnemonic().expect("decoded word has a mnemonic");
    let name = mn.name();
    match mn {
        Mnemonic::Add | Mnemonic::Sub | Mnemonic::And | Mnemonic::Or | Mnemonic::Nor
        | Mnemonic::Slt => {
            if instr.shamt != 0 {
                return format!(".word {word:#010x}");
            }
            format!("{name} ${}, ${}, ${}", instr.rd, instr.rs, instr.rt)
        }
        Mnemonic::Sll | Mnemonic::Srl => {
            if instr.rt != 0 {
                return format!(".word {word:#010x}");
            }
            format!("{name} ${}, ${}, {}", instr.rd, instr.rs, instr.shamt)
        }
        Mnemonic::Jr => {
            if instr.rt != 0 || instr.rd != 0 || instr.shamt != 0 {
                return format!(".word {word:#010x}");
            }
            format!("{name} ${}", instr.rs)
        }
        Mnemonic::Addi | Mnemonic::Subi | Mnemonic::Slti | Mnemonic::Andi | Mnemonic::Ori
        | Mnemonic::Nori => format!("{name} ${}, ${}, {}", instr.rt, instr.rs, instr.immediate),
        Mnemonic::Beq | Mnemonic::Bne => {
            format!("{name} ${}, ${}, {}", instr.rs, instr.rt, instr.immediate)
        }
        Mnemonic::Lw | Mnemonic::Sw | Mnemonic::Lkuw | Mnemonic::Lklw => {
            format!("{name} ${}, {}(${})", instr.rt, instr.immediate, instr.rs)
        }
        Mnemonic::J | Mnemonic::Jal | Mnemonic::Crypt => format!("{name} {}", instr.target),
    }
}

fn find_label(text: &str) -> Option<usize> {
    let colon = text.find(':')?;
    // a colon inside an operand list is not a label separator
    if text[..colon].chars().any(char::is_whitespace) {
        None
    } else {
        Some(colon)
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn expect_operands(line: &SourceLine, count: usize) -> Result<(), AsmError> {
    if line.operands.len() != count {
        return Err(AsmError::Syntax {
            line: line.line_no,
            msg: format!(
                "`{}` expects {} operand(s), got {}",
                line.mnemonic,
                count,
                line.operands.len()
            ),
        });
    }
    Ok(())
}

fn parse_register(text: &str, line: usize) -> Result<u8, AsmError> {
    let num = text.strip_prefix('$').ok_or_else(|| AsmError::Syntax {
        line,
        msg: format!("expected register, got `{text}`"),
    })?;
    match num.parse::<u8>() {
        Ok(r) if r < 32 => Ok(r),
        _ => Err(AsmError::Syntax {
            line,
            msg: format!("bad register `{text}`"),
        }),
    }
}

fn parse_number(text: &str, line: usize) -> Result<i64, AsmError> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let parsed = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16)
    } else {
        body.parse::<i64>()
    };
    parsed
        .map(|v| if negative { -v } else { v })
        .map_err(|_| AsmError::Syntax {
            line,
            msg: format!("bad number `{text}`"),
        })
}

fn parse_imm16(text: &str, line: usize) -> Result<i16, AsmError> {
    let value = parse_number(text, line)?;
    // accept both signed and unsigned 16-bit spellings
    if !(-32768..=65535).contains(&value) {
        return Err(AsmError::Syntax {
            line,
            msg: format!("immediate {value} does not fit in 16 bits"),
        });
    }
    Ok(value as u16 as i16)
}

fn parse_mem_operand(text: &str, line: usize) -> Result<(i16, u8), AsmError> {
    let open = text.find('(').ok_or_else(|| AsmError::Syntax {
        line,
        msg: format!("expected offset($reg), got `{text}`"),
    })?;
    let close = text.rfind(')').filter(|&c| c > open).ok_or_else(|| AsmError::Syntax {
        line,
        msg: format!("unclosed memory operand `{text}`"),
    })?;
    let offset_text = text[..open].trim();
    let offset = if offset_text.is_empty() {
        0
    } else {
        parse_imm16(offset_text, line)?
    };
    let base = parse_register(text[open + 1..close].trim(), line)?;
    Ok((offset, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Format;
    use proptest::prelude::*;

    #[test]
    fn assembles_single_add() {
        let program = assemble("add $3, $1, $2").unwrap();
        assert_eq!(program.words, vec![0x0022_1820]);
    }

    #[test]
    fn backward_branch_offset_is_minus_one() {
        let program = assemble("loop: beq $1, $1, loop").unwrap();
        assert_eq!(program.words, vec![0x1021_FFFF]);
        assert_eq!(program.symbols["loop"], 0);
    }

    #[test]
    fn empty_source_gives_empty_image() {
        let program = assemble("  # just a comment\n\n").unwrap();
        assert!(program.words.is_empty());
        assert!(program.symbols.is_empty());
    }

    #[test]
    fn unknown_mnemonic_names_the_line() {
        let err = assemble("nop\nfrobnicate $1, $2\n").unwrap_err();
        assert_eq!(
            err,
            AsmError::UnknownMnemonic {
                line: 2,
                name: "frobnicate".into()
            }
        );
    }

    #[test]
    fn duplicate_label_rejected() {
        let err = assemble("x: nop\nx: nop\n").unwrap_err();
        assert!(matches!(err, AsmError::DuplicateLabel { line: 2, .. }));
    }

    #[test]
    fn undefined_label_rejected() {
        let err = assemble("beq $0, $0, nowhere").unwrap_err();
        assert!(matches!(err, AsmError::UndefinedLabel { line: 1, .. }));
    }

    #[test]
    fn branch_offset_range_checked() {
        let err = assemble("beq $0, $0, 40000").unwrap_err();
        assert!(matches!(err, AsmError::BranchOffsetRange { .. }));
    }

    #[test]
    fn image_overflow_rejected() {
        let source = "nop\n".repeat(MAX_IMAGE_WORDS + 1);
        let err = assemble(&source).unwrap_err();
        assert_eq!(
            err,
            AsmError::ImageOverflow {
                words: MAX_IMAGE_WORDS + 1
            }
        );
    }

    #[test]
    fn memory_operands_and_key_loads() {
        let program = assemble("lw $2, 4($1)\nsw $2, -4($1)\nlklw $1, 0($0)\nlkuw $0, 8($0)")
            .unwrap();
        for (i, w) in program.words.iter().enumerate() {
            let instr = Instruction::decode(*w).unwrap();
            assert_eq!(instr.format, Format::I, "word {i}");
        }
        assert_eq!(program.words[0], 0x8C22_0004);
        assert_eq!(program.words[1] & 0xFFFF, 0xFFFC);
    }

    #[test]
    fn disassembles_nop_and_raw_word() {
        assert_eq!(disassemble(&[0]), "nop\n");
        assert_eq!(disassemble(&[0xF400_0000]), ".word 0xf4000000\n");
    }

    #[test]
    fn disassemble_is_inverse_of_assemble() {
        let text = disassemble(&[0x0022_1820]);
        assert_eq!(text, "add $3, $1, $2\n");
        assert_eq!(assemble(&text).unwrap().words, vec![0x0022_1820]);
    }

    #[test]
    fn labels_may_sit_on_their_own_line() {
        let program = assemble("start:\n  addi $1, $0, 5\n  j start\n").unwrap();
        assert_eq!(program.symbols["start"], 0);
        assert_eq!(program.words.len(), 2);
        assert_eq!(program.words[1], 0x0800_0000);
    }

    #[test]
    fn crypt_takes_a_bare_argument() {
        let program = assemble("crypt 1\ncrypt 0\n").unwrap();
        assert_eq!(program.words, vec![0xFC00_0001, 0xFC00_0000]);
    }

    fn arb_word() -> impl Strategy<Value = u32> {
        prop_oneof![any::<u32>(), Just(0u32), (0u32..24).prop_map(sample_word)]
    }

    fn sample_word(i: u32) -> u32 {
        let mn = Mnemonic::ALL[i as usize];
        let instr = match mn {
            Mnemonic::Sll | Mnemonic::Srl => Instruction::shift(mn, 5, 6, 7),
            Mnemonic::Jr => Instruction::jr(9),
            m if m.format() == Format::R => Instruction::r_alu(m, 1, 2, 3),
            m if m.format() == Format::I => Instruction::i_type(m, 4, 5, -3),
            m => Instruction::j_type(m, 77),
        };
        instr.encode().unwrap()
    }

    proptest! {
        #[test]
        fn reassembling_disassembly_reproduces_words(words in proptest::collection::vec(arb_word(), 0..40)) {
            let text = disassemble(&words);
            let program = assemble(&text).unwrap();
            prop_assert_eq!(program.words, words);
        }
    }
}
