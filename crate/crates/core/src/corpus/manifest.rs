use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{CorpusError, ManifestRow};

pub const MANIFEST_HEADER: [&str; 6] = ["path", "label", "dataset", "speaker", "split", "augment_tag"];

/// Writes a manifest as UTF-8 CSV with LF line endings. The header is always
/// written, so an empty manifest is a header-only file.
pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<(), CorpusError> {
    let file = BufWriter::new(File::create(path)?);
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    wtr.write_record(MANIFEST_HEADER)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.into_inner()
        .map_err(|e| CorpusError::Io(e.into_error()))?
        .flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(CorpusError::Schema(format!(
            "expected header {:?}, found {:?}",
            MANIFEST_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rdr.deserialize().collect::<Result<Vec<ManifestRow>, _>>()?)
}
