//! File formats and atomic writers.

pub mod artifact_file;
pub mod atomic;
pub mod corpus;
pub mod frames;
pub mod landmark_file;
pub mod loss_csv;

pub use artifact_file::ArtifactFile;
pub use corpus::{load_corpus, write_corpus, CorpusEntry};
pub use atomic::{sha256_file, sha256_hex, write_atomic, write_json_atomic};
pub use frames::{frame_file_name, load_frames, save_frames};
pub use landmark_file::{FileFormat, LandmarkFile};
pub use loss_csv::{loss_history_csv, write_loss_history};
