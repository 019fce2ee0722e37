//! Datasets: the in-memory batch type, synthetic generators, IDX and CSV
//! containers, and visible corruptions.

mod batch;
mod corrupt;
mod csv;
mod generate;
mod idx;

pub use batch::DataBatch;
pub use corrupt::{corrupt, CorruptionKind};
pub use csv::{read_vectors_csv, vectors_to_csv, write_vectors_csv};
pub use generate::{gen_constant, gen_gaussian_mixture, gen_noise, gen_uniform_box, gray_to_rgb};
pub use idx::{encode_idx, load_idx, parse_idx, IdxError};

use std::path::Path;

use crate::{Error, Result};

/// Loads a batch from an IDX file (any extension other than `.csv`) or a
/// vector CSV file.
pub fn load_dataset(path: &Path) -> Result<DataBatch> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_vectors_csv(path),
        _ => load_idx(path),
    }
}

/// Serialises a batch in its natural container: IDX bytes for images,
/// CSV text for vectors. Returns the bytes and the matching file extension.
pub fn encode_dataset(batch: &DataBatch) -> Result<(Vec<u8>, &'static str)> {
    if batch.is_image() {
        Ok((encode_idx(batch)?, "idx"))
    } else {
        Ok((vectors_to_csv(batch).into_bytes(), "csv"))
    }
}
