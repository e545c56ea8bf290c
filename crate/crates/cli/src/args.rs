//! Minimal flag parser: `--flag value` pairs, boolean switches, and
//! repeatable flags, with unknown flags rejected as usage errors.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::CliError;

/// Parsed flags for one command.
#[derive(Debug, Default)]
pub struct Parsed {
    values: BTreeMap<String, String>,
    repeats: BTreeMap<String, Vec<String>>,
    switches: BTreeSet<String>,
    /// `--help`/`-h` was present; the command should print usage and stop.
    pub help: bool,
}

impl Parsed {
    /// Parse `args` against the allowed flag sets. `values` take exactly one
    /// argument and may appear once, `repeats` take one argument and may
    /// appear any number of times, `switches` take none.
    pub fn parse(
        args: &[String],
        values: &[&str],
        repeats: &[&str],
        switches: &[&str],
    ) -> Result<Parsed, CliError> {
        let mut out = Parsed::default();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            if arg == "--help" || arg == "-h" {
                out.help = true;
                continue;
            }
            let usage = |msg: String| Err(CliError::Usage(msg));
            if !arg.starts_with("--") {
                return usage(format!("unexpected argument `{arg}`"));
            }
            let name = arg.as_str();
            if switches.contains(&name) {
                out.switches.insert(name.to_string());
            } else if values.contains(&name) || repeats.contains(&name) {
                let Some(v) = it.next() else {
                    return usage(format!("flag {name} needs a value"));
                };
                if repeats.contains(&name) {
                    out.repeats.entry(name.to_string()).or_default().push(v.clone());
                } else if out.values.insert(name.to_string(), v.clone()).is_some() {
                    return usage(format!("flag {name} given twice"));
                }
            } else {
                return usage(format!("unknown flag `{name}`"));
            }
        }
        Ok(out)
    }

    pub fn required(&self, flag: &str) -> Result<&str, CliError> {
        self.values
            .get(flag)
            .map(String::as_str)
            .ok_or_else(|| CliError::Usage(format!("missing required flag {flag}")))
    }

    pub fn opt(&self, flag: &str) -> Option<&str> {
        self.values.get(flag).map(String::as_str)
    }

    pub fn switch(&self, flag: &str) -> bool {
        self.switches.contains(flag)
    }

    pub fn repeated(&self, flag: &str) -> &[String] {
        self.repeats.get(flag).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Parse an optional numeric flag, falling back to `default`.
    pub fn num_or<T: FromStr>(&self, flag: &str, default: T) -> Result<T, CliError> {
        match self.opt(flag) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("flag {flag}: cannot parse `{raw}`"))),
        }
    }

    /// Parse a required numeric flag.
    pub fn num<T: FromStr>(&self, flag: &str) -> Result<T, CliError> {
        let raw = self.required(flag)?;
        raw.parse()
            .map_err(|_| CliError::Usage(format!("flag {flag}: cannot parse `{raw}`")))
    }
}
