use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("missing file {path}{hint}")]
    MissingFile { path: PathBuf, hint: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Core {
        path: PathBuf,
        #[source]
        source: conntra::Error,
    },

    #[error(transparent)]
    Pipeline(#[from] conntra::Error),

    #[error("{path}: {message}")]
    Report { path: PathBuf, message: String },
}

/// One-line JSON form of an error, written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorLine<'a> {
    pub error: &'a str,
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            return CliError::MissingFile { path, hint: String::new() };
        }
        CliError::Io { path, source }
    }

    /// Attaches a file path to a core error; a missing file becomes
    /// [`CliError::MissingFile`].
    pub fn at(path: impl Into<PathBuf>, source: conntra::Error) -> Self {
        match source {
            conntra::Error::Io(e) => CliError::io(path, e),
            source => CliError::Core { path: path.into(), source },
        }
    }

    fn core(&self) -> Option<&conntra::Error> {
        match self {
            CliError::Core { source, .. } | CliError::Pipeline(source) => Some(source),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
            CliError::MissingFile { .. } => "missing-file",
            CliError::Io { .. } => "io",
            CliError::Report { .. } => "report",
            CliError::Core { .. } | CliError::Pipeline(_) => self.core().map_or("io", conntra::Error::kind),
        }
    }

    /// Process exit status; each kind has its own.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "config" => 3,
            "missing-file" => 4,
            "io" => 5,
            "format" => 6,
            "invalid-argument" => 7,
            "domain" => 8,
            "training-diverged" => 9,
            "not-positive-definite" => 10,
            "capacity" => 11,
            "invalid-state" => 12,
            _ => 13,
        }
    }

    pub fn to_line(&self) -> String {
        let line = ErrorLine {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string().lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" "),
        };
        serde_json::to_string(&line).expect("error line serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let errors = [
            CliError::Usage("u".into()),
            CliError::Config { path: "c".into(), message: "m".into() },
            CliError::MissingFile { path: "m".into(), hint: String::new() },
            CliError::io("i", std::io::Error::other("x")),
            conntra::Error::Format { location: conntra::Location::Line(1), message: "f".into() }.into(),
            conntra::Error::InvalidArgument("a".into()).into(),
            conntra::Error::Domain("d".into()).into(),
            conntra::Error::TrainingDiverged { epoch: 1 }.into(),
            conntra::Error::NotPositiveDefinite { pivot: 0, value: 0.0 }.into(),
            conntra::Error::Capacity { dimension: 30, limit: 24 }.into(),
            conntra::Error::InvalidState("s".into()).into(),
            CliError::Report { path: "r".into(), message: "m".into() },
        ];
        let mut codes: Vec<i32> = errors.iter().map(CliError::exit_code).collect();
        assert!(codes.iter().all(|&c| c > 1));
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), errors.len());
    }

    #[test]
    fn missing_file_detected() {
        let e = CliError::at("x.wts", conntra::Error::Io(std::io::ErrorKind::NotFound.into()));
        assert_eq!((e.kind(), e.exit_code()), ("missing-file", 4));
    }

    #[test]
    fn single_line_json() {
        let e = CliError::Usage("bad\n  flag\n".into());
        let line = e.to_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "usage");
        assert_eq!(v["exit_code"], 2);
        assert_eq!(v["message"], "bad flag");
    }
}
