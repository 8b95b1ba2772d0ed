use std::path::{Path, PathBuf};

use pulse_core::content::ContentError;
use pulse_core::corpus::CorpusError;
use pulse_core::demographics::DemographicsError;
use pulse_core::geo::GazetteerError;
use pulse_core::lexicon::LexiconError;
use pulse_core::registry::RegistryError;
use pulse_core::sidecar::SidecarError;
use pulse_core::stance::StanceError;
use pulse_core::stats::StatsError;
use pulse_core::timeline::TimelineError;

pub const EXIT_CONTRACT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input {0} (run the upstream stage first)")]
    MissingInput(PathBuf),
    #[error("{0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::MissingInput(_) | Self::Contract(_) => EXIT_CONTRACT,
            Self::Io { .. } => EXIT_IO,
        }
    }
}

fn io_or_contract(is_io: bool, msg: String) -> CliError {
    if is_io {
        CliError::Io { path: String::new(), source: std::io::Error::other(msg) }
    } else {
        CliError::Contract(msg)
    }
}

macro_rules! classify {
    ($t:ty, $io:pat) => {
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                io_or_contract(matches!(e, $io), e.to_string())
            }
        }
    };
}

classify!(CorpusError, CorpusError::Io { .. });
classify!(LexiconError, LexiconError::Io { .. });
classify!(GazetteerError, GazetteerError::Io { .. });
classify!(TimelineError, TimelineError::Io { .. });
classify!(StanceError, StanceError::Io { .. } | StanceError::Sidecar(SidecarError::Transport(_) | SidecarError::Spawn { .. }));
classify!(ContentError, ContentError::Io(_) | ContentError::Sidecar(SidecarError::Transport(_) | SidecarError::Spawn { .. }));
classify!(DemographicsError, DemographicsError::Io(_));
classify!(StatsError, StatsError::Io(_));
classify!(SidecarError, SidecarError::Transport(_) | SidecarError::Spawn { .. });

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        CliError::Contract(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        io_or_contract(e.is_io_error(), e.to_string())
    }
}
