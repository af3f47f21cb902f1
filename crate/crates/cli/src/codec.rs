use std::path::PathBuf;

use clap::{Args, Subcommand};

use npas::constellation::AmplitudeAlphabet;
use npas::matchers::{adm_decode, adm_encode, ConditionalDistribution, DistributionSource, EssTrellis};
use npas::neural::{checkpoint, Shaper};
use npas::Error;

#[derive(Subcommand)]
pub enum CodecCommand {
    /// Bits to a sphere-shaped amplitude sequence.
    EssEncode {
        #[command(flatten)]
        trellis: TrellisArgs,
        #[command(flatten)]
        input: BitInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Amplitude sequence back to bits.
    EssDecode {
        #[command(flatten)]
        trellis: TrellisArgs,
        #[command(flatten)]
        input: SymbolInput,
        /// Print bits as hex.
        #[arg(long)]
        hex: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bits to a sequence following a fixed or learned distribution.
    AdmEncode {
        #[command(flatten)]
        source: SourceArgs,
        /// Output symbols.
        #[arg(long)]
        len: usize,
        #[command(flatten)]
        input: BitInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sequence back to the consumed bits.
    AdmDecode {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        input: SymbolInput,
        #[arg(long)]
        hex: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
pub struct TrellisArgs {
    /// Number of odd amplitude levels 1, 3, 5, ...
    #[arg(long)]
    levels: usize,
    /// Sequence length.
    #[arg(long)]
    len: usize,
    /// Energy bound in squared level units.
    #[arg(long, conflicts_with = "rate", required_unless_present = "rate")]
    emax: Option<f64>,
    /// Smallest bound reaching this rate in bits per amplitude.
    #[arg(long)]
    rate: Option<f64>,
}

impl TrellisArgs {
    fn build(&self) -> Result<EssTrellis, Error> {
        let alphabet = AmplitudeAlphabet::odd(self.levels);
        match (self.emax, self.rate) {
            (Some(e), _) => EssTrellis::build(&alphabet, self.len, e),
            (None, Some(r)) => EssTrellis::at_least_rate(&alphabet, self.len, r),
            (None, None) => Err(Error::Config("--emax or --rate is required".into())),
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct BitInput {
    /// Bits as a string of 0 and 1.
    #[arg(long)]
    bits: Option<String>,
    /// Bits as hex digits, most significant first.
    #[arg(long = "hex-bits")]
    hex_bits: Option<String>,
    /// File holding a 0/1 string, or hex when prefixed with 0x.
    #[arg(long)]
    input: Option<PathBuf>,
}

impl BitInput {
    fn read(&self) -> Result<Vec<bool>, Error> {
        if let Some(b) = &self.bits {
            return parse_bits(b);
        }
        if let Some(h) = &self.hex_bits {
            return parse_hex(h);
        }
        let text = std::fs::read_to_string(self.input.as_ref().expect("group is required"))?;
        let t = text.trim();
        match t.strip_prefix("0x") {
            Some(h) => parse_hex(h),
            None => parse_bits(t),
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct SymbolInput {
    /// Comma-separated symbol indices.
    #[arg(long)]
    symbols: Option<String>,
    /// File holding comma- or whitespace-separated indices.
    #[arg(long = "symbols-file")]
    symbols_file: Option<PathBuf>,
}

impl SymbolInput {
    fn read(&self) -> Result<Vec<usize>, Error> {
        let text = match (&self.symbols, &self.symbols_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => std::fs::read_to_string(p)?,
            (None, None) => unreachable!("group is required"),
        };
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|e| Error::Config(format!("symbol '{s}': {e}"))))
            .collect()
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Fixed distribution as comma-separated probabilities.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
    /// Shaper checkpoint supplying the conditional distributions.
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

enum Source {
    Fixed(ConditionalDistribution),
    Learned(Shaper),
}

impl SourceArgs {
    fn load(&self) -> Result<Source, Error> {
        match (&self.probs, &self.ckpt) {
            (Some(p), _) => Ok(Source::Fixed(
                ConditionalDistribution::new(p.clone()).map_err(|e| Error::Config(e.to_string()))?,
            )),
            (None, Some(path)) => Ok(Source::Learned(Shaper::new(checkpoint::load(path)?.0))),
            (None, None) => unreachable!("group is required"),
        }
    }
}

impl Source {
    fn with<T>(&self, f: impl FnOnce(&mut dyn DistributionSource) -> T) -> T {
        match self {
            Source::Fixed(d) => {
                let d = d.clone();
                let mut fixed = move |_: &[usize]| d.clone();
                f(&mut fixed)
            }
            Source::Learned(s) => f(&mut s.source()),
        }
    }
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>, Error> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::Config(format!("'{c}' is not a bit"))),
        })
        .collect()
}

pub fn parse_hex(s: &str) -> Result<Vec<bool>, Error> {
    let mut out = Vec::with_capacity(4 * s.len());
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        let v = c
            .to_digit(16)
            .ok_or_else(|| Error::Config(format!("'{c}' is not a hex digit")))?;
        out.extend((0..4).rev().map(|i| (v >> i) & 1 == 1));
    }
    Ok(out)
}

pub fn render_bits(bits: &[bool], hex: bool) -> Result<String, Error> {
    if !hex {
        return Ok(bits.iter().map(|&b| if b { '1' } else { '0' }).collect());
    }
    if !bits.len().is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!(
            "{} bits do not fill whole hex digits",
            bits.len()
        )));
    }
    Ok(bits
        .chunks(4)
        .map(|c| {
            let v = c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
            char::from_digit(v, 16).expect("nibble")
        })
        .collect())
}

fn join(symbols: &[usize]) -> String {
    symbols.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn run(cmd: CodecCommand) -> Result<(), Error> {
    match cmd {
        CodecCommand::EssEncode { trellis, input, out } => {
            let t = trellis.build()?;
            let bits = input.read()?;
            if bits.len() != t.bits() {
                return Err(Error::Config(format!(
                    "trellis carries {} bits, got {}",
                    t.bits(),
                    bits.len()
                )));
            }
            emit(&out, join(&t.encode_bits(&bits)?))
        }
        CodecCommand::EssDecode {
            trellis,
            input,
            hex,
            out,
        } => {
            let t = trellis.build()?;
            let bits = t.decode_bits(&input.read()?)?;
            emit(&out, render_bits(&bits, hex)?)
        }
        CodecCommand::AdmEncode { source, len, input, out } => {
            let src = source.load()?;
            let bits = input.read()?;
            let res = src.with(|s| adm_encode(&bits, s, len))?;
            let text = serde_json::json!({ "symbols": res.symbols, "consumed": res.consumed });
            emit(&out, text.to_string())
        }
        CodecCommand::AdmDecode { source, input, hex, out } => {
            let src = source.load()?;
            let symbols = input.read()?;
            let bits = src.with(|s| adm_decode(&symbols, s))?;
            emit(&out, render_bits(&bits, hex)?)
        }
    }
}
