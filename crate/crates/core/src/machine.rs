//! Architectural state: register file, 128-bit key register, instruction
//! and data memories, PC, crypt flag, and the reset/run protocol.
//!
//! Memory encryption works on aligned cipher blocks in ECB; a 32-bit word
//! access decrypts the containing block, patches the word and re-encrypts
//! (8-byte blocks for DES/TDES, 16-byte for AES).

use thiserror::Error;

use crate::crypto::aes::{aes_decrypt, aes_encrypt, AesKey128};
use crate::crypto::des::{des_decrypt, des_encrypt, tdes_decrypt, tdes_encrypt, DesKey, TdesKey};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("address {addr:#x} outside the {capacity}-byte memory")]
    OutOfRange { addr: u32, capacity: usize },
    #[error("misaligned word address {addr:#x}")]
    Misaligned { addr: u32 },
    #[error("cipher block at {addr:#x} extends past the {capacity}-byte memory")]
    BlockPastEnd { addr: u32, capacity: usize },
    #[error("{words}-word image does not fit {capacity}-byte memory at base {base:#x}")]
    ImageOverflow {
        words: usize,
        capacity: usize,
        base: u32,
    },
    #[error("operation requires reset mode")]
    NotInReset,
    #[error("processor already running")]
    AlreadyRunning,
    #[error("instruction memory is read-only while running")]
    ImemReadOnly,
    #[error("key slot {slot} out of range")]
    BadKeySlot { slot: u8 },
    #[error("memory capacity {bytes} not a power of two in [{MIN_MEMORY_BYTES}, {MAX_MEMORY_BYTES}]")]
    BadCapacity { bytes: usize },
}

/// Which cipher the crypto block runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipherKind {
    Des,
    Tdes,
    Aes,
}

impl CipherKind {
    pub fn block_bytes(self) -> usize {
        match self {
            CipherKind::Des | CipherKind::Tdes => 8,
            CipherKind::Aes => 16,
        }
    }

    pub fn block_bits(self) -> u32 {
        self.block_bytes() as u32 * 8
    }

    /// Cycles the crypto block needs per cipher block.
    pub fn default_block_cycles(self) -> u32 {
        match self {
            CipherKind::Des | CipherKind::Tdes => 16,
            CipherKind::Aes => 43,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CipherKind::Des => "des",
            CipherKind::Tdes => "tdes",
            CipherKind::Aes => "aes",
        }
    }
}

/// 32 general-purpose registers; `$0` is hard-wired to zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegisterFile {
    regs: [u32; 32],
}

impl RegisterFile {
    pub fn read(&self, index: u8) -> u32 {
        self.regs[index as usize & 31]
    }

    pub fn write(&mut self, index: u8, value: u32) {
        if index != 0 {
            self.regs[index as usize & 31] = value;
        }
    }

    pub fn as_array(&self) -> &[u32; 32] {
        &self.regs
    }
}

/// Four 32-bit key words K0..K3, K3 most significant.
///
/// DES consumes K1||K0; TDES uses k1 = k3 = K1||K0 with k2 = K3||K2
/// (two-key EDE); AES consumes the full K3||K2||K1||K0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KeyRegister {
    pub words: [u32; 4],
}

impl KeyRegister {
    pub fn from_u128(value: u128) -> Self {
        KeyRegister {
            words: [
                value as u32,
                (value >> 32) as u32,
                (value >> 64) as u32,
                (value >> 96) as u32,
            ],
        }
    }

    pub fn to_u128(self) -> u128 {
        (self.words[3] as u128) << 96
            | (self.words[2] as u128) << 64
            | (self.words[1] as u128) << 32
            | self.words[0] as u128
    }

    pub fn des_key(&self) -> DesKey {
        DesKey((self.words[1] as u64) << 32 | self.words[0] as u64)
    }

    pub fn tdes_key(&self) -> TdesKey {
        let low = self.des_key();
        let high = DesKey((self.words[3] as u64) << 32 | self.words[2] as u64);
        TdesKey {
            k1: low,
            k2: high,
            k3: low,
        }
    }

    pub fn aes_key(&self) -> AesKey128 {
        let mut bytes = [0u8; 16];
        for (i, w) in [self.words[3], self.words[2], self.words[1], self.words[0]]
            .into_iter()
            .enumerate()
        {
            bytes[4 * i..4 * i + 4].copy_from_slice(&w.to_be_bytes());
        }
        AesKey128(bytes)
    }

    /// Encrypts one cipher block in place within `buf` (8 or 16 bytes).
    pub fn encrypt_block(&self, kind: CipherKind, buf: &mut [u8]) {
        match kind {
            CipherKind::Des => {
                let block = u64::from_be_bytes(buf.try_into().unwrap());
                buf.copy_from_slice(&des_encrypt(block, self.des_key()).to_be_bytes());
            }
            CipherKind::Tdes => {
                let block = u64::from_be_bytes(buf.try_into().unwrap());
                buf.copy_from_slice(&tdes_encrypt(block, &self.tdes_key()).to_be_bytes());
            }
            CipherKind::Aes => {
                let block: [u8; 16] = buf.try_into().unwrap();
                buf.copy_from_slice(&aes_encrypt(&block, &self.aes_key()));
            }
        }
    }

    pub fn decrypt_block(&self, kind: CipherKind, buf: &mut [u8]) {
        match kind {
            CipherKind::Des => {
                let block = u64::from_be_bytes(buf.try_into().unwrap());
                buf.copy_from_slice(&des_decrypt(block, self.des_key()).to_be_bytes());
            }
            CipherKind::Tdes => {
                let block = u64::from_be_bytes(buf.try_into().unwrap());
                buf.copy_from_slice(&tdes_decrypt(block, &self.tdes_key()).to_be_bytes());
            }
            CipherKind::Aes => {
                let block: [u8; 16] = buf.try_into().unwrap();
                buf.copy_from_slice(&aes_decrypt(&block, &self.aes_key()));
            }
        }
    }
}

/// ECB-encrypts a word image, padding to a whole number of cipher blocks
/// with NOP (zero) words first.
pub fn encrypt_image(words: &[u32], keys: &KeyRegister, cipher: CipherKind) -> Vec<u32> {
    transform_image(words, keys, cipher, true)
}

/// Inverse of [`encrypt_image`] (modulo the NOP padding, which stays).
pub fn decrypt_image(words: &[u32], keys: &KeyRegister, cipher: CipherKind) -> Vec<u32> {
    transform_image(words, keys, cipher, false)
}

fn transform_image(words: &[u32], keys: &KeyRegister, cipher: CipherKind, encrypt: bool) -> Vec<u32> {
    let words_per_block = cipher.block_bytes() / 4;
    let mut padded = words.to_vec();
    while !padded.is_empty() && !padded.len().is_multiple_of(words_per_block) {
        padded.push(0);
    }
    let mut bytes: Vec<u8> = padded.iter().flat_map(|w| w.to_be_bytes()).collect();
    for chunk in bytes.chunks_mut(cipher.block_bytes()) {
        if encrypt {
            keys.encrypt_block(cipher, chunk);
        } else {
            keys.decrypt_block(cipher, chunk);
        }
    }
    bytes
        .chunks(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
        .collect()
}

pub const MIN_MEMORY_BYTES: usize = 16;
pub const MAX_MEMORY_BYTES: usize = 4096;
pub const DEFAULT_MEMORY_BYTES: usize = 256;

/// Byte-addressable memory; word access is big-endian and 4-byte aligned.
/// Out-of-range addresses are errors, never wrapped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    bytes: Vec<u8>,
}

impl Memory {
    pub fn new(capacity: usize) -> Result<Memory, MachineError> {
        if !capacity.is_power_of_two() || !(MIN_MEMORY_BYTES..=MAX_MEMORY_BYTES).contains(&capacity)
        {
            return Err(MachineError::BadCapacity { bytes: capacity });
        }
        Ok(Memory {
            bytes: vec![0; capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.bytes.len()
    }

    pub fn read_word(&self, addr: u32) -> Result<u32, MachineError> {
        self.check_word(addr)?;
        let i = addr as usize;
        Ok(u32::from_be_bytes(self.bytes[i..i + 4].try_into().unwrap()))
    }

    pub fn write_word(&mut self, addr: u32, value: u32) -> Result<(), MachineError> {
        self.check_word(addr)?;
        let i = addr as usize;
        self.bytes[i..i + 4].copy_from_slice(&value.to_be_bytes());
        Ok(())
    }

    pub fn block(&self, addr: u32, len: usize) -> Result<&[u8], MachineError> {
        let start = addr as usize;
        if start + len > self.bytes.len() {
            return Err(MachineError::BlockPastEnd {
                addr,
                capacity: self.bytes.len(),
            });
        }
        Ok(&self.bytes[start..start + len])
    }

    pub fn block_mut(&mut self, addr: u32, len: usize) -> Result<&mut [u8], MachineError> {
        let start = addr as usize;
        if start + len > self.bytes.len() {
            return Err(MachineError::BlockPastEnd {
                addr,
                capacity: self.bytes.len(),
            });
        }
        Ok(&mut self.bytes[start..start + len])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn check_word(&self, addr: u32) -> Result<(), MachineError> {
        if !addr.is_multiple_of(4) {
            return Err(MachineError::Misaligned { addr });
        }
        if addr as usize + 4 > self.bytes.len() {
            return Err(MachineError::OutOfRange {
                addr,
                capacity: self.bytes.len(),
            });
        }
        Ok(())
    }
}

/// Reset writes memory and registers; running locks the instruction memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Reset,
    Running,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub pc: u32,
    pub rf: RegisterFile,
    pub keys: KeyRegister,
    imem: Memory,
    pub dmem: Memory,
    pub crypt_enabled: bool,
    pub mode: Mode,
    image_words: usize,
}

impl MachineState {
    pub fn new(imem_bytes: usize, dmem_bytes: usize) -> Result<MachineState, MachineError> {
        Ok(MachineState {
            pc: 0,
            rf: RegisterFile::default(),
            keys: KeyRegister::default(),
            imem: Memory::new(imem_bytes)?,
            dmem: Memory::new(dmem_bytes)?,
            crypt_enabled: false,
            mode: Mode::Reset,
            image_words: 0,
        })
    }

    pub fn with_default_memories() -> MachineState {
        MachineState::new(DEFAULT_MEMORY_BYTES, DEFAULT_MEMORY_BYTES).unwrap()
    }

    /// Loads the program image and optional data preload, clears registers
    /// and keys, and points the PC at the image base.
    pub fn reset_load(
        &mut self,
        image: &[u32],
        dmem_init: &[u8],
        at: u32,
    ) -> Result<(), MachineError> {
        if self.mode != Mode::Reset {
            return Err(MachineError::NotInReset);
        }
        if !at.is_multiple_of(4) {
            return Err(MachineError::Misaligned { addr: at });
        }
        if at as usize + 4 * image.len() > self.imem.capacity() {
            return Err(MachineError::ImageOverflow {
                words: image.len(),
                capacity: self.imem.capacity(),
                base: at,
            });
        }
        if dmem_init.len() > self.dmem.capacity() {
            return Err(MachineError::ImageOverflow {
                words: dmem_init.len().div_ceil(4),
                capacity: self.dmem.capacity(),
                base: 0,
            });
        }
        self.imem = Memory::new(self.imem.capacity()).unwrap();
        self.dmem = Memory::new(self.dmem.capacity()).unwrap();
        for (i, &word) in image.iter().enumerate() {
            self.imem.write_word(at + 4 * i as u32, word)?;
        }
        self.dmem.block_mut(0, dmem_init.len())?.copy_from_slice(dmem_init);
        self.rf = RegisterFile::default();
        self.keys = KeyRegister::default();
        self.pc = at;
        self.crypt_enabled = false;
        self.image_words = image.len();
        Ok(())
    }

    /// Reset -> Running; the instruction memory becomes read-only.
    pub fn start(&mut self) -> Result<(), MachineError> {
        if self.mode == Mode::Running {
            return Err(MachineError::AlreadyRunning);
        }
        self.mode = Mode::Running;
        Ok(())
    }

    pub fn image_words(&self) -> usize {
        self.image_words
    }

    pub fn imem(&self) -> &Memory {
        &self.imem
    }

    /// Writable only in reset mode.
    pub fn imem_write_word(&mut self, addr: u32, value: u32) -> Result<(), MachineError> {
        if self.mode == Mode::Running {
            return Err(MachineError::ImemReadOnly);
        }
        self.imem.write_word(addr, value)
    }

    pub fn load_key_word(&mut self, slot: u8, value: u32) -> Result<(), MachineError> {
        if slot > 3 {
            return Err(MachineError::BadKeySlot { slot });
        }
        self.keys.words[slot as usize] = value;
        Ok(())
    }

    pub fn set_crypt_enabled(&mut self, enabled: bool) {
        self.crypt_enabled = enabled;
    }

    /// Store honoring the current crypt flag: plain when disabled,
    /// block read-modify-write through the cipher when enabled.
    pub fn encrypted_store_word(
        &mut self,
        addr: u32,
        value: u32,
        cipher: CipherKind,
    ) -> Result<(), MachineError> {
        if self.crypt_enabled {
            self.store_word_ciphered(addr, value, cipher)
        } else {
            self.dmem.write_word(addr, value)
        }
    }

    /// Load honoring the current crypt flag.
    pub fn encrypted_load_word(&self, addr: u32, cipher: CipherKind) -> Result<u32, MachineError> {
        if self.crypt_enabled {
            self.load_word_ciphered(addr, cipher)
        } else {
            self.dmem.read_word(addr)
        }
    }

    /// Always takes the cipher path, regardless of the crypt flag.
    pub fn store_word_ciphered(
        &mut self,
        addr: u32,
        value: u32,
        cipher: CipherKind,
    ) -> Result<(), MachineError> {
        self.dmem.check_word(addr)?;
        let bs = cipher.block_bytes();
        let base = addr & !(bs as u32 - 1);
        let keys = self.keys;
        let block = self.dmem.block_mut(base, bs)?;
        keys.decrypt_block(cipher, block);
        let off = (addr - base) as usize;
        block[off..off + 4].copy_from_slice(&value.to_be_bytes());
        keys.encrypt_block(cipher, block);
        Ok(())
    }

    pub fn load_word_ciphered(&self, addr: u32, cipher: CipherKind) -> Result<u32, MachineError> {
        self.dmem.check_word(addr)?;
        let bs = cipher.block_bytes();
        let base = addr & !(bs as u32 - 1);
        let mut block = self.dmem.block(base, bs)?.to_vec();
        self.keys.decrypt_block(cipher, &mut block);
        let off = (addr - base) as usize;
        Ok(u32::from_be_bytes(block[off..off + 4].try_into().unwrap()))
    }

    /// Decrypts the instruction-memory block containing `addr` and returns
    /// the addressed word (the fetch-path decryption core).
    pub fn fetch_word_decrypted(
        &self,
        addr: u32,
        cipher: CipherKind,
    ) -> Result<u32, MachineError> {
        self.imem.check_word(addr)?;
        let bs = cipher.block_bytes();
        let base = addr & !(bs as u32 - 1);
        let mut block = self.imem.block(base, bs)?.to_vec();
        self.keys.decrypt_block(cipher, &mut block);
        let off = (addr - base) as usize;
        Ok(u32::from_be_bytes(block[off..off + 4].try_into().unwrap()))
    }

    pub fn fetch_word_plain(&self, addr: u32) -> Result<u32, MachineError> {
        self.imem.read_word(addr)
    }
}
