use std::fmt::Display;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Data,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Io => 2,
            Kind::Data => 3,
        }
    }
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure { kind: Kind::Usage, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(msg: impl Display) -> Self {
        Failure { kind: Kind::Data, error: anyhow::anyhow!("{msg}") }
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        Failure {
            kind: Kind::Io,
            error: anyhow::anyhow!("{}: {err}", path.display()),
        }
    }
}

impl From<refdec::Error> for Failure {
    fn from(e: refdec::Error) -> Self {
        let kind = match e {
            refdec::Error::Io { .. } => Kind::Io,
            refdec::Error::InvalidParameter { .. } | refdec::Error::OrderOutOfRange { .. } => Kind::Usage,
            _ => Kind::Data,
        };
        Failure { kind, error: e.into() }
    }
}

/// Attaches a context line to a library error.
pub trait Context<T> {
    fn context(self, msg: impl Display) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, refdec::Error> {
    fn context(self, msg: impl Display) -> Result<T, Failure> {
        self.map_err(|e| {
            let mut f = Failure::from(e);
            f.error = f.error.context(msg.to_string());
            f
        })
    }
}
