//! Options shared by every command, read from flags and an optional TOML file.
//! Flags win over the file; the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Deserializer};

use crate::CliError;

/// Free-form value: `delta = "2^-10"`, `delta = 0.5`, `p = 3` and
/// `r = [2.5, 3]` are all accepted from the file and kept as text.
#[derive(Clone, Debug, PartialEq)]
pub struct Text(pub String);

impl std::str::FromStr for Text {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Text(s.to_string()))
    }
}

impl<'de> Deserialize<'de> for Text {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            I(i64),
            F(f64),
            L(Vec<Raw>),
        }
        fn flat(r: Raw) -> String {
            match r {
                Raw::S(s) => s,
                Raw::I(i) => i.to_string(),
                Raw::F(f) => f.to_string(),
                Raw::L(v) => v.into_iter().map(flat).collect::<Vec<_>>().join(","),
            }
        }
        Raw::deserialize(d).map(|r| Text(flat(r)))
    }
}

macro_rules! options {
    ($( $(#[$meta:meta])* $name:ident : $ty:ty ;)*) => {
        #[derive(Args, Deserialize, Clone, Debug, Default)]
        #[serde(deny_unknown_fields)]
        pub struct Opts {
            $(
                $(#[$meta])*
                #[arg(long)]
                #[serde(default)]
                pub $name: Option<$ty>,
            )*
        }

        impl Opts {
            /// Field-wise `self` if set, else `fallback`.
            pub fn or(self, fallback: Opts) -> Opts {
                Opts { $($name: self.$name.or(fallback.$name),)* }
            }

            pub fn set_keys(&self) -> Vec<&'static str> {
                let mut keys = Vec::new();
                $(if self.$name.is_some() { keys.push(stringify!($name)); })*
                keys
            }
        }
    };
}

options! {
    /// Construction depth N
    n: u32;
    /// sup |u| budget, e.g. 2^-10
    delta: Text;
    /// Error-set budget; defaults to 2^-ceil((N+2) p_hint)
    epsilon: Text;
    /// Exponent the error budget is sized for
    p_hint: f64;
    /// budget[:children] | geometric | fixed:FIRST:CHILDREN | schedule:FIRST:C1,C2,...
    teeth: String;
    /// nested | whitney[:DEPTH]
    refinement: String;
    /// centered | leading
    shape: String;
    max_pieces: usize;
    /// Bundle written by `build`
    bundle: PathBuf;
    /// A_r exponents, comma separated
    r: Text;
    /// A_r exponents attached to sweep rows
    ar: Text;
    frontier: usize;
    grid: usize;
    p: Text;
    s: Text;
    gamma: Text;
    n_max: u32;
    seed: u64;
    /// Working precision in bits
    prec: u32;
    /// Hat tests for the residual checks
    tests: usize;
    /// Weight file (JSON step function)
    w: PathBuf;
    /// Forcing file (JSON step function)
    f: PathBuf;
    /// Allow s outside {1, p/2} in `solve`
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    any_s: bool;
    /// Output directory; stdout when absent
    out: PathBuf;
    /// csv | json
    format: String;
}

pub fn load(path: &Path) -> Result<Opts, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
