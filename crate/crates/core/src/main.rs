use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_rational::Rational64;

use picstbc::codes::{build_code, design1_rate, design2_rate, CodeSpec, SHIPPED_CODES};
use picstbc::constellation::Modulation;
use picstbc::detect::Decoder;
use picstbc::diversity::{
    check_difference_rank, check_group_independence, check_sic_independence, probe_channels, Mode,
};
use picstbc::rotation::CyclotomicParams;
use picstbc::sim::{
    parse_snr_grid, run_ber, write_csv, SimConfig, DEFAULT_MAX_TRIALS, DEFAULT_MIN_ERRORS,
};
use picstbc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "picstbc",
    version,
    about = "Layered STBCs with PIC group decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rate table of both code families.
    Rates {
        #[arg(long, default_value_t = 8)]
        max_m: usize,
    },
    /// Show a code's layout, rotation and rate.
    Encode {
        #[command(flatten)]
        code: CodeArgs,
        /// Symbol indices to encode (comma-separated, 4QAM unless --mod).
        #[arg(long)]
        symbols: Option<String>,
        #[arg(long = "mod", default_value = "4qam")]
        modulation: Modulation,
    },
    /// Test the PIC or PIC-SIC independence criterion on probe channels.
    CheckDiversity {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value = "pic")]
        mode: Mode,
        /// 1-based group order for pic-sic, e.g. 3,2,1.
        #[arg(long)]
        order: Option<String>,
        /// Dense random channels on top of the zero-pattern probes.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the codeword-difference rank check with this modulation.
        #[arg(long = "rank-mod")]
        rank_mod: Option<Modulation>,
        /// Emit JSON lines instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo BER simulation; writes CSV.
    Simulate {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 1)]
        rx: usize,
        #[arg(long = "mod", default_value = "4qam")]
        modulation: Modulation,
        /// start:step:stop in dB, or a comma-separated list.
        #[arg(long, default_value = "0:2:24")]
        snr: String,
        #[arg(long, value_delimiter = ',', default_value = "pic")]
        decoder: Vec<Decoder>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MIN_ERRORS)]
        min_errors: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_TRIALS)]
        max_trials: u64,
        /// 1-based group order for pic-sic.
        #[arg(long)]
        order: Option<String>,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CodeArgs {
    /// Code alias (c4-5-2, d2-6, ...), cM-T-P, d1:M,T[,P] or d2:M.
    #[arg(long)]
    code: String,
    /// Cyclotomic rotation parameters m,n,n2,...,nM.
    #[arg(long)]
    rotation: Option<CyclotomicParams>,
}

impl CodeArgs {
    fn build(&self) -> Result<CodeSpec> {
        build_code(&self.code, self.rotation.as_ref())
    }
}

fn parse_order(s: &str, groups: usize) -> Result<Vec<usize>> {
    let order: Vec<usize> = s
        .split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(v) if (1..=groups).contains(&v) => Ok(v - 1),
            _ => Err(Error::Config(format!("invalid group order `{s}`"))),
        })
        .collect::<Result<_>>()?;
    Ok(order)
}

fn fmt_rate(r: Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn rates(max_m: usize, out: &mut impl Write) -> Result<()> {
    writeln!(out, "M  diagonal(P=2)  three-layer")?;
    for m in 2..=max_m {
        writeln!(
            out,
            "{m:<2} {:<14} {}",
            fmt_rate(design1_rate(m, m + 1, 2)),
            fmt_rate(design2_rate(m))
        )?;
    }
    writeln!(out)?;
    writeln!(out, "code    M  T  P  L   rate")?;
    for name in SHIPPED_CODES {
        let spec = build_code(name, None)?;
        writeln!(
            out,
            "{:<7} {:<2} {:<2} {:<2} {:<3} {}",
            name,
            spec.antennas(),
            spec.block_len(),
            spec.layers(),
            spec.symbols(),
            fmt_rate(spec.rate())
        )?;
    }
    Ok(())
}

fn encode(
    spec: &CodeSpec,
    symbols: Option<&str>,
    modulation: Modulation,
    out: &mut impl Write,
) -> Result<()> {
    writeln!(
        out,
        "{}: M={} T={} P={} L={} rate={} rotation={}",
        spec.id(),
        spec.antennas(),
        spec.block_len(),
        spec.layers(),
        spec.symbols(),
        fmt_rate(spec.rate()),
        spec.rotation().kind()
    )?;
    write!(out, "{spec}")?;
    if let Some(list) = symbols {
        let c = modulation.constellation()?;
        let idx: Vec<usize> = list
            .split(',')
            .map(|t| match t.trim().parse::<usize>() {
                Ok(v) if v < c.size() => Ok(v),
                _ => Err(Error::Config(format!("invalid symbol index `{t}`"))),
            })
            .collect::<Result<_>>()?;
        let s: Vec<_> = idx.iter().map(|&i| c.point(i)).collect();
        let cw = spec.encode(&s)?;
        writeln!(out)?;
        for t in 0..cw.matrix().rows() {
            let row: Vec<String> = cw
                .matrix()
                .row(t)
                .iter()
                .map(|z| format!("{:+.4}{:+.4}i", z.re, z.im))
                .collect();
            writeln!(out, "{}", row.join("  "))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Rates { max_m } => rates(max_m, &mut out)?,
        Command::Encode {
            code,
            symbols,
            modulation,
        } => encode(&code.build()?, symbols.as_deref(), modulation, &mut out)?,
        Command::CheckDiversity {
            code,
            mode,
            order,
            trials,
            seed,
            rank_mod,
            json,
        } => {
            let spec = code.build()?;
            let order = order.map(|o| parse_order(&o, spec.layers())).transpose()?;
            let channels = probe_channels(spec.antennas(), trials, seed);
            let report = match mode {
                Mode::Pic => check_group_independence(&spec, &channels)?,
                Mode::PicSic => check_sic_independence(&spec, &channels, order.as_deref())?,
            };
            let rank = rank_mod
                .map(|m| m.constellation().map(|c| check_difference_rank(&spec, &c)))
                .transpose()?;
            if json {
                let line =
                    |v: serde_json::Result<String>| v.map_err(|e| Error::Config(e.to_string()));
                writeln!(out, "{}", line(serde_json::to_string(&report))?)?;
                if let Some(r) = &rank {
                    writeln!(out, "{}", line(serde_json::to_string(r))?)?;
                }
            } else {
                write!(out, "{report}")?;
                if let Some(r) = &rank {
                    writeln!(
                        out,
                        "{} {} difference rank: min {} of {} over {} {} pairs: {}",
                        r.code,
                        r.modulation,
                        r.min_rank,
                        spec.antennas(),
                        r.pairs_checked,
                        if r.sampled { "sampled" } else { "all" },
                        if r.full_rank { "PASS" } else { "FAIL" }
                    )?;
                }
            }
        }
        Command::Simulate {
            code,
            rx,
            modulation,
            snr,
            decoder,
            seed,
            min_errors,
            max_trials,
            order,
            out: path,
        } => {
            let spec = code.build()?;
            let sic_order = order.map(|o| parse_order(&o, spec.layers())).transpose()?;
            let mut cfg = SimConfig::new(spec, rx, modulation, decoder, parse_snr_grid(&snr)?);
            cfg.seed = seed;
            cfg.min_errors = min_errors;
            cfg.max_trials = max_trials;
            cfg.sic_order = sic_order;
            let outcome = run_ber(&cfg)?;
            match path {
                Some(p) => write_csv(&outcome.records, BufWriter::new(File::create(p)?))?,
                None => write_csv(&outcome.records, &mut out)?,
            }
            if !outcome.failures.is_empty() {
                for f in &outcome.failures {
                    eprintln!(
                        "decoder {} stopped at {} dB: {}",
                        f.decoder, f.snr_db, f.error
                    );
                }
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_decoder_guard() { 3 } else { 2 })
        }
    }
}
