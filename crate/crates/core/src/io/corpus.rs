use std::path::{Path, PathBuf};

use super::landmark_file::LandmarkFile;
use crate::error::{Error, Result};

/// A landmark file and the stem that names its frame directory.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
    pub file: LandmarkFile,
}

fn is_landmark_file(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e == "json" || e == "kimo")
}

/// Every `.json` / `.kimo` landmark file in `dir`, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    if !dir.is_dir() {
        return Err(Error::CorpusNotFound(dir.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_landmark_file(&p) {
            paths.push(p);
        }
    }
    if paths.is_empty() {
        return Err(Error::CorpusNotFound(dir.to_path_buf()));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let file = LandmarkFile::load(&path)?;
            Ok(CorpusEntry { name, path, file })
        })
        .collect()
}

/// Writes `seq_0000.json`, `seq_0001.json`, ... (or `.kimo`).
pub fn write_corpus(dir: &Path, files: &[LandmarkFile], format: super::FileFormat) -> Result<Vec<PathBuf>> {
    files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(format!("seq_{i:04}.{}", format.extension()));
            f.save(&p, format)?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::FileFormat;
    use crate::synth::SyntheticFaceCorpus;

    #[test]
    fn write_then_load_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let seqs = SyntheticFaceCorpus { sequences: 2, min_length: 4, max_length: 6, ..Default::default() }
            .generate()
            .unwrap();
        let files: Vec<_> = seqs.into_iter().map(|s| s.file).collect();
        write_corpus(dir.path(), &files[..1], FileFormat::Json).unwrap();
        std::fs::create_dir(dir.path().join("ignored.json")).unwrap();
        let p = dir.path().join("seq_0001.kimo");
        files[1].save(&p, FileFormat::Bin).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].name, "seq_0000");
        assert_eq!(loaded[0].file, files[0]);
        assert_eq!(loaded[1].file.frames.len(), files[1].frames.len());
    }

    #[test]
    fn missing_or_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap_err().kind(), "corpus-not-found");
        assert_eq!(load_corpus(&dir.path().join("nope")).unwrap_err().kind(), "corpus-not-found");
    }
}
