//! Command-line driver: assemble, encrypt images, run the pipelined
//! simulator and reformat saved traces into reports.
//!
//! Exit codes: 0 success/halt, 1 usage error, 2 assembly error,
//! 3 simulation fault, 4 cycle cap reached.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use mipscrypt_core::isa::asm::{assemble, disassemble};
use mipscrypt_core::machine::{encrypt_image, CipherKind, KeyRegister, MachineState};
use mipscrypt_core::pipeline::trace::{Outcome, RunTrace};
use mipscrypt_core::pipeline::{Pipeline, PipelineConfig, SimError};
use mipscrypt_core::power::{make_report, PowerParams};

const EXIT_USAGE: u8 = 1;
const EXIT_ASM: u8 = 2;
const EXIT_FAULT: u8 = 3;
const EXIT_CAP: u8 = 4;

#[derive(Parser)]
#[command(name = "mipscrypt", about = "MIPS crypto-pipeline assembler and simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a source file into a big-endian word image
    Asm {
        /// Assembly source file
        input: PathBuf,
        /// Image file to write
        #[arg(short, long)]
        output: PathBuf,
        /// Print an address/word/source listing to stdout
        #[arg(long)]
        listing: bool,
    },
    /// ECB-encrypt an image (padded to whole cipher blocks with NOPs)
    EncryptImage {
        /// Plaintext image file
        input: PathBuf,
        /// Encrypted image file to write
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = CipherArg::Des)]
        cipher: CipherArg,
        /// 128-bit key as 32 hex characters
        #[arg(long)]
        key: String,
    },
    /// Load an image through the reset protocol and run it
    Run {
        /// Image file to execute
        image: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Recompute a report from a saved trace file
    Report {
        /// Trace file produced by `run --trace`
        #[arg(long)]
        trace: PathBuf,
        /// Clock rate in Hz (defaults to the nominal rate for the
        /// trace's cipher)
        #[arg(long)]
        clock_hz: Option<u64>,
        /// Switched capacitance in farads
        #[arg(long, default_value_t = 1e-9)]
        capacitance_f: f64,
        /// Supply voltage in volts
        #[arg(long, default_value_t = 1.5)]
        vdd: f64,
    },
}

#[derive(Args)]
struct RunOpts {
    #[arg(long, value_enum, default_value_t = CipherArg::Des)]
    cipher: CipherArg,
    /// 128-bit key as 32 hex characters, preloaded into the key register
    #[arg(long)]
    key: Option<String>,
    /// Clock rate in Hz (defaults to the nominal rate for the cipher)
    #[arg(long)]
    clock_hz: Option<u64>,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    gating: OnOff,
    /// Override the crypto block latency in cycles
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    crypto_cycles: Option<u32>,
    #[arg(long, default_value_t = 256)]
    imem_bytes: usize,
    #[arg(long, default_value_t = 256)]
    dmem_bytes: usize,
    /// Raw bytes preloaded into data memory at address 0
    #[arg(long)]
    dmem_init: Option<PathBuf>,
    /// Write the per-cycle trace here
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    max_cycles: u64,
    /// Write the report here instead of stdout
    #[arg(long)]
    report: Option<PathBuf>,
    /// The image is ciphertext: fetch through the decryption core
    #[arg(long)]
    decrypt_ifetch: bool,
    /// Boot with crypt mode already enabled
    #[arg(long)]
    crypt_boot: bool,
    /// Charge the crypto latency per instruction or once per fetched block
    #[arg(long, value_enum, default_value_t = ChargeMode::PerInstr)]
    crypto_charge: ChargeMode,
    #[arg(long, default_value_t = 1e-9)]
    capacitance_f: f64,
    #[arg(long, default_value_t = 1.5)]
    vdd: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CipherArg {
    Des,
    Tdes,
    Aes,
}

impl From<CipherArg> for CipherKind {
    fn from(arg: CipherArg) -> CipherKind {
        match arg {
            CipherArg::Des => CipherKind::Des,
            CipherArg::Tdes => CipherKind::Tdes,
            CipherArg::Aes => CipherKind::Aes,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum ChargeMode {
    PerInstr,
    Block,
}

/// Nominal clock rates of the three cipher pipelines.
fn default_clock(cipher: CipherKind) -> u64 {
    match cipher {
        CipherKind::Des => 218_000_000,
        CipherKind::Tdes => 209_000_000,
        CipherKind::Aes => 210_000_000,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Asm {
            input,
            output,
            listing,
        } => cmd_asm(&input, &output, listing),
        Command::EncryptImage {
            input,
            output,
            cipher,
            key,
        } => cmd_encrypt_image(&input, &output, cipher.into(), &key),
        Command::Run { image, opts } => cmd_run(&image, &opts),
        Command::Report {
            trace,
            clock_hz,
            capacitance_f,
            vdd,
        } => cmd_report(&trace, clock_hz, capacitance_f, vdd),
    }
}

fn cmd_asm(input: &PathBuf, output: &PathBuf, listing: bool) -> Result<u8> {
    let source =
        fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let program = match assemble(&source) {
        Ok(program) => program,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_ASM);
        }
    };
    write_image(output, &program.words)?;
    if listing {
        let mut text = String::new();
        for (i, line) in disassemble(&program.words).lines().enumerate() {
            text.push_str(&format!("{:#06x}  {:08x}  {}\n", 4 * i, program.words[i], line));
        }
        for (label, word) in &program.symbols {
            text.push_str(&format!("# {label} = {:#06x}\n", word * 4));
        }
        emit(&text)?;
    }
    Ok(0)
}

/// Writes to stdout, treating a closed pipe as an ordinary end of output.
fn emit(text: &str) -> Result<()> {
    match io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.context("writing stdout"),
    }
}

fn cmd_encrypt_image(
    input: &PathBuf,
    output: &PathBuf,
    cipher: CipherKind,
    key: &str,
) -> Result<u8> {
    let words = read_image(input)?;
    let keys = parse_key(key)?;
    write_image(output, &encrypt_image(&words, &keys, cipher))?;
    Ok(0)
}

fn cmd_run(image: &PathBuf, opts: &RunOpts) -> Result<u8> {
    let cipher: CipherKind = opts.cipher.into();
    let words = read_image(image)?;
    let dmem_init = match &opts.dmem_init {
        Some(path) => fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        None => Vec::new(),
    };
    if (opts.decrypt_ifetch || opts.crypt_boot) && opts.key.is_none() {
        bail!("--decrypt-ifetch and --crypt-boot require --key");
    }

    let mut machine = MachineState::new(opts.imem_bytes, opts.dmem_bytes)?;
    machine.reset_load(&words, &dmem_init, 0)?;
    if let Some(key) = &opts.key {
        machine.keys = parse_key(key)?;
    }
    machine.set_crypt_enabled(opts.crypt_boot);
    machine.start()?;

    let mut cfg = PipelineConfig::new(cipher);
    if let Some(cycles) = opts.crypto_cycles {
        cfg.crypto_block_cycles = cycles;
    }
    cfg.gating_enabled = opts.gating == OnOff::On;
    cfg.decrypt_ifetch = opts.decrypt_ifetch;
    cfg.per_instruction_crypto_charge = opts.crypto_charge == ChargeMode::PerInstr;

    let mut pipeline = Pipeline::new(machine, cfg);
    let trace = match pipeline.run(opts.max_cycles) {
        Ok(trace) => trace,
        Err(e @ (SimError::IllegalInstruction { .. } | SimError::Memory { .. })) => {
            eprintln!("error: {e}");
            return Ok(EXIT_FAULT);
        }
        Err(e) => return Err(e.into()),
    };

    if let Some(path) = &opts.trace {
        fs::write(path, trace.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }

    let clock = opts.clock_hz.unwrap_or_else(|| default_clock(cipher));
    let params = PowerParams::new(opts.capacitance_f, opts.vdd, clock)?;
    if trace.retired.is_empty() {
        eprintln!("note: no instructions retired; no report");
    } else {
        let report = make_report(&trace, &params)?;
        match &opts.report {
            Some(path) => fs::write(path, report.to_text())
                .with_context(|| format!("writing {}", path.display()))?,
            None => emit(&report.to_text())?,
        }
    }

    Ok(match trace.outcome {
        Outcome::Halted => 0,
        Outcome::CycleCapReached => {
            eprintln!("error: cycle cap of {} reached before halt", opts.max_cycles);
            EXIT_CAP
        }
    })
}

fn cmd_report(
    trace_path: &PathBuf,
    clock_hz: Option<u64>,
    capacitance_f: f64,
    vdd: f64,
) -> Result<u8> {
    let text = fs::read_to_string(trace_path)
        .with_context(|| format!("reading {}", trace_path.display()))?;
    let trace = RunTrace::parse_text(&text)?;
    let clock = clock_hz.unwrap_or_else(|| default_clock(trace.cipher));
    let report = make_report(&trace, &PowerParams::new(capacitance_f, vdd, clock)?)?;
    emit(&report.to_text())?;
    Ok(0)
}

fn parse_key(text: &str) -> Result<KeyRegister> {
    if text.len() != 32 || !text.chars().all(|c| c.is_ascii_hexdigit()) {
        bail!("key must be exactly 32 hex characters, got `{text}`");
    }
    let value = u128::from_str_radix(text, 16).expect("validated hex");
    Ok(KeyRegister::from_u128(value))
}

fn read_image(path: &PathBuf) -> Result<Vec<u32>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % 4 != 0 {
        bail!(
            "{} is not a word image: {} bytes is not a multiple of 4",
            path.display(),
            bytes.len()
        );
    }
    Ok(bytes
        .chunks(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_image(path: &PathBuf, words: &[u32]) -> Result<()> {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_be_bytes()).collect();
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
