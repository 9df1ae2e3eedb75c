//! Errors with their exit codes, report envelopes and small parsers.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use robust_sonc::conditions::Tolerance;
use robust_sonc::{Error, Provenance};
use serde::Serialize;

pub const EXIT_VIOLATED: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_NUMERICAL: u8 = 65;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Io(PathBuf, io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(..) => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_USAGE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Every JSON report: the run metadata and the command's payload.
#[derive(Serialize)]
struct Envelope<'a, T> {
    command: &'a str,
    provenance: &'a Provenance,
    report: &'a T,
}

/// Output directory of one run.
pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name` and hands a buffered writer to `body`.
    pub fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let io_err = |e| CliError::Io(path.clone(), e);
        let file = fs::File::create(&path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        Ok(path)
    }

    pub fn json<T: Serialize>(
        &self,
        command: &str,
        provenance: &Provenance,
        report: &T,
    ) -> Result<PathBuf, CliError> {
        let envelope = Envelope {
            command,
            provenance,
            report,
        };
        let text = serde_json::to_string_pretty(&envelope)
            .map_err(|e| CliError::Usage(format!("cannot serialize report: {e}")))?;
        self.write(&format!("{command}.json"), |w| writeln!(w, "{text}"))
    }

    /// Whitespace-separated columns behind a `#` header.
    pub fn gnuplot(
        &self,
        name: &str,
        header: &[String],
        rows: &[Vec<f64>],
    ) -> Result<PathBuf, CliError> {
        self.write(name, |w| {
            for line in header {
                writeln!(w, "# {line}")?;
            }
            for row in rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{}", cells.join(" "))?;
            }
            Ok(())
        })
    }
}

pub fn parse_tolerance(raw: &str) -> Result<Tolerance<f64>, CliError> {
    if raw.eq_ignore_ascii_case("auto") {
        return Ok(Tolerance::Auto);
    }
    match raw.parse::<f64>() {
        Ok(t) if t >= 0.0 && t.is_finite() => Ok(Tolerance::Fixed(t)),
        _ => Err(CliError::Usage(format!(
            "--tol {raw:?} is neither auto nor a nonnegative number"
        ))),
    }
}

pub fn parse_list(raw: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{flag}: {s:?} is not a number")))
        })
        .collect()
}

pub fn parse_vectors(raw: &str, flag: &str, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    raw.split(';')
        .map(|part| {
            let v = parse_list(part, flag)?;
            if v.len() != dim {
                return Err(CliError::Usage(format!(
                    "{flag}: {part:?} has {} components, expected {dim}",
                    v.len()
                )));
            }
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers() {
        assert_eq!(parse_list("0, 0.5,1", "x").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_list("0,a", "x").is_err());
        assert_eq!(
            parse_vectors("1,0;0,1", "v", 2).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        assert!(parse_vectors("1;0,1", "v", 2).is_err());
        assert_eq!(parse_tolerance("auto").unwrap(), Tolerance::Auto);
        assert_eq!(parse_tolerance("0.01").unwrap(), Tolerance::Fixed(0.01));
        assert!(parse_tolerance("-1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), EXIT_USAGE);
        assert_eq!(
            CliError::Core(Error::Config("x".into())).exit_code(),
            EXIT_USAGE
        );
        assert_eq!(
            CliError::Core(Error::NotSingular("x".into())).exit_code(),
            EXIT_NUMERICAL
        );
    }
}
