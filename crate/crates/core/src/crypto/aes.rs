//! AES-128 cipher and inverse cipher per FIPS 197.
//!
//! Nk = 4, Nr = 10. The state is the standard 4x4 byte array filled
//! column-major from the 16-byte block; every round transformation is
//! exposed on its own so tests can exercise them individually.

/// 16-byte cipher block.
pub type Block128 = [u8; 16];

/// 128-bit cipher key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AesKey128(pub [u8; 16]);

/// 4x4 state array; `bytes[row][col]`, block byte i sits at `bytes[i % 4][i / 4]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AesState {
    pub bytes: [[u8; 4]; 4],
}

/// The 44-word expanded key schedule, Nb * (Nr + 1) entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundKeys {
    pub words: [u32; 44],
}

const NR: usize = 10;

impl AesState {
    pub fn from_block(block: &Block128) -> Self {
        let mut bytes = [[0u8; 4]; 4];
        for (i, &b) in block.iter().enumerate() {
            bytes[i % 4][i / 4] = b;
        }
        AesState { bytes }
    }

    pub fn to_block(self) -> Block128 {
        let mut out = [0u8; 16];
        for (i, b) in out.iter_mut().enumerate() {
            *b = self.bytes[i % 4][i / 4];
        }
        out
    }
}

/// Product in GF(2^8) modulo m(x) = x^8 + x^4 + x^3 + x + 1.
pub fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut out = 0u8;
    for _ in 0..8 {
        if b & 1 != 0 {
            out ^= a;
        }
        let carry = a & 0x80;
        a <<= 1;
        if carry != 0 {
            a ^= 0x1B;
        }
        b >>= 1;
    }
    out
}

// S-box generated from the definition: multiplicative inverse in GF(2^8)
// (with inverse of 0 taken as 0) followed by the affine transform.
const SBOX: [u8; 256] = build_sbox();
const INV_SBOX: [u8; 256] = build_inv_sbox();

const fn gf_mul_const(mut a: u8, mut b: u8) -> u8 {
    let mut out = 0u8;
    let mut i = 0;
    while i < 8 {
        if b & 1 != 0 {
            out ^= a;
        }
        let carry = a & 0x80;
        a <<= 1;
        if carry != 0 {
            a ^= 0x1B;
        }
        b >>= 1;
        i += 1;
    }
    out
}

const fn build_sbox() -> [u8; 256] {
    let mut table = [0u8; 256];
    table[0] = 0x63;
    let mut x = 1u16;
    while x < 256 {
        // brute-force inverse; exhaustive search is fine at const-eval time
        let mut inv = 1u16;
        while inv < 256 {
            if gf_mul_const(x as u8, inv as u8) == 1 {
                break;
            }
            inv += 1;
        }
        let q = inv as u8;
        let affine = q
            ^ q.rotate_left(1)
            ^ q.rotate_left(2)
            ^ q.rotate_left(3)
            ^ q.rotate_left(4)
            ^ 0x63;
        table[x as usize] = affine;
        x += 1;
    }
    table
}

const fn build_inv_sbox() -> [u8; 256] {
    let sbox = build_sbox();
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        table[sbox[i] as usize] = i as u8;
        i += 1;
    }
    table
}

pub fn sub_bytes(mut s: AesState) -> AesState {
    for row in s.bytes.iter_mut() {
        for b in row.iter_mut() {
            *b = SBOX[*b as usize];
        }
    }
    s
}

pub fn inv_sub_bytes(mut s: AesState) -> AesState {
    for row in s.bytes.iter_mut() {
        for b in row.iter_mut() {
            *b = INV_SBOX[*b as usize];
        }
    }
    s
}

/// Row r rotates left by r bytes.
pub fn shift_rows(mut s: AesState) -> AesState {
    for (r, row) in s.bytes.iter_mut().enumerate() {
        row.rotate_left(r);
    }
    s
}

pub fn inv_shift_rows(mut s: AesState) -> AesState {
    for (r, row) in s.bytes.iter_mut().enumerate() {
        row.rotate_right(r);
    }
    s
}

/// Each column multiplied by {03}x^3 + {01}x^2 + {01}x + {02} mod x^4 + 1.
pub fn mix_columns(s: AesState) -> AesState {
    mix_with(s, [0x02, 0x03, 0x01, 0x01])
}

/// Inverse transform, coefficients {0B}, {0D}, {09}, {0E}.
pub fn inv_mix_columns(s: AesState) -> AesState {
    mix_with(s, [0x0E, 0x0B, 0x0D, 0x09])
}

fn mix_with(s: AesState, coef: [u8; 4]) -> AesState {
    let mut out = s;
    for c in 0..4 {
        for r in 0..4 {
            out.bytes[r][c] = gf_mul(coef[0], s.bytes[r][c])
                ^ gf_mul(coef[1], s.bytes[(r + 1) % 4][c])
                ^ gf_mul(coef[2], s.bytes[(r + 2) % 4][c])
                ^ gf_mul(coef[3], s.bytes[(r + 3) % 4][c]);
        }
    }
    out
}

/// XORs four schedule words into the state columns; self-inverse.
pub fn add_round_key(mut s: AesState, round_key: &[u32]) -> AesState {
    for (c, rk) in round_key.iter().take(4).enumerate() {
        for (r, byte) in rk.to_be_bytes().into_iter().enumerate() {
            s.bytes[r][c] ^= byte;
        }
    }
    s
}

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36];

pub fn key_expansion(key: &AesKey128) -> RoundKeys {
    let mut words = [0u32; 44];
    for (w, chunk) in words.iter_mut().zip(key.0.chunks_exact(4)) {
        *w = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    for i in 4..44 {
        let mut temp = words[i - 1];
        if i % 4 == 0 {
            temp = sub_word(temp.rotate_left(8)) ^ ((RCON[i / 4 - 1] as u32) << 24);
        }
        words[i] = words[i - 4] ^ temp;
    }
    RoundKeys { words }
}

fn sub_word(w: u32) -> u32 {
    let b = w.to_be_bytes();
    u32::from_be_bytes([
        SBOX[b[0] as usize],
        SBOX[b[1] as usize],
        SBOX[b[2] as usize],
        SBOX[b[3] as usize],
    ])
}

pub fn aes_encrypt(block: &Block128, key: &AesKey128) -> Block128 {
    let rk = key_expansion(key);
    let mut s = add_round_key(AesState::from_block(block), &rk.words[0..4]);
    for round in 1..NR {
        s = sub_bytes(s);
        s = shift_rows(s);
        s = mix_columns(s);
        s = add_round_key(s, &rk.words[4 * round..4 * round + 4]);
    }
    s = sub_bytes(s);
    s = shift_rows(s);
    s = add_round_key(s, &rk.words[4 * NR..4 * NR + 4]);
    s.to_block()
}

pub fn aes_decrypt(block: &Block128, key: &AesKey128) -> Block128 {
    let rk = key_expansion(key);
    let mut s = add_round_key(AesState::from_block(block), &rk.words[4 * NR..4 * NR + 4]);
    for round in (1..NR).rev() {
        s = inv_shift_rows(s);
        s = inv_sub_bytes(s);
        s = add_round_key(s, &rk.words[4 * round..4 * round + 4]);
        s = inv_mix_columns(s);
    }
    s = inv_shift_rows(s);
    s = inv_sub_bytes(s);
    add_round_key(s, &rk.words[0..4]).to_block()
}
