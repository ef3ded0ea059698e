//! Movie and raster codecs, city datasets, seed-window sampling and the
//! synthetic city generator.

mod dataset;
mod movie;
mod pgm;
mod synth;

pub use dataset::{
    evaluation_windows, last_valid_start, sample_seed_window, target_frames, CityDataset, DayMovie, SeedWindow,
    HORIZON_OFFSETS, LATEST_START_MINUTE,
};
pub use movie::{mirror_channel, TrafficMovie, CHANNELS, FRAMES_PER_DAY, FRAME_MINUTES};
pub use pgm::{decode_pgm, encode_pgm, read_street_map, write_pgm};
pub use synth::synth_city;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },
    #[error("truncated data: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("expected 8 channels, file declares {0}")]
    Channels(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DataError::Invalid(msg.into())
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
