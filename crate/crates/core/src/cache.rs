//! Annotated-corpus cache.
//!
//! A cache file is a sequence of records `<byte length>\t<json>\n`. The first
//! record is a [`CacheHeader`]; each following record is one
//! [`AnnotatedDialogue`]. The file name carries the split, the backend name and
//! version, and the format version, e.g. `dev.rule-1.v1.cache`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{annotate_dialogue, AnnotatedDialogue, Annotator};
use crate::corpus::{load_corpus, Dialogue, RelationVocabulary, Split};
use crate::error::{Error, Result};

pub const CACHE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub format: u32,
    pub backend: String,
    pub backend_version: String,
    pub split: Split,
    /// SHA-256 of the corpus file the cache was built from.
    pub source_sha256: String,
    pub dialogues: usize,
}

pub fn cache_file_name(split: Split, backend: &dyn Annotator) -> String {
    format!("{}.{}-{}.v{}.cache", split, backend.name(), backend.version(), CACHE_FORMAT)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn write_record<T: Serialize>(out: &mut impl Write, value: &T) -> std::io::Result<()> {
    let json = serde_json::to_string(value)?;
    write!(out, "{}\t{}\n", json.len(), json)
}

fn read_record<T: DeserializeOwned>(input: &mut impl BufRead, index: usize) -> Result<Option<T>> {
    let bad = |message: String| Error::Parse { record: index, message };
    let mut len = Vec::new();
    if input.read_until(b'\t', &mut len).map_err(|e| bad(e.to_string()))? == 0 {
        return Ok(None);
    }
    if len.pop() != Some(b'\t') {
        return Err(bad("truncated length prefix".into()));
    }
    let len: usize = std::str::from_utf8(&len)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad length prefix".into()))?;
    let mut body = vec![0u8; len + 1];
    input.read_exact(&mut body).map_err(|e| bad(format!("truncated record: {e}")))?;
    if body.pop() != Some(b'\n') {
        return Err(bad("record does not end at its stated length".into()));
    }
    serde_json::from_slice(&body).map(Some).map_err(|e| bad(e.to_string()))
}

pub fn write_cache(path: &Path, header: &CacheHeader, dialogues: &[AnnotatedDialogue]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write_record(out, header)?;
        for d in dialogues {
            write_record(out, d)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<(CacheHeader, Vec<AnnotatedDialogue>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let header: CacheHeader = read_record(&mut input, 0)?.ok_or(Error::EmptyInput("cache file"))?;
    let mut dialogues = Vec::with_capacity(header.dialogues);
    while let Some(d) = read_record(&mut input, dialogues.len() + 1)? {
        dialogues.push(d);
    }
    if dialogues.len() != header.dialogues {
        return Err(Error::Data(format!(
            "{}: header promises {} dialogues, found {}",
            path.display(),
            header.dialogues,
            dialogues.len()
        )));
    }
    Ok((header, dialogues))
}

/// Annotates every dialogue, in parallel when the backend allows it.
pub fn annotate_corpus(dialogues: &[Dialogue], backend: &dyn Annotator) -> Result<Vec<AnnotatedDialogue>> {
    if backend.shareable() {
        dialogues.par_iter().map(|d| annotate_dialogue(d, backend)).collect()
    } else {
        dialogues.iter().map(|d| annotate_dialogue(d, backend)).collect()
    }
}

/// Reads the cache for `source` if it is current, otherwise annotates the
/// corpus and writes a fresh cache. Returns the dialogues and the cache path.
pub fn load_or_annotate(
    source: &Path,
    split: Split,
    labels: &RelationVocabulary,
    backend: &dyn Annotator,
    cache_dir: &Path,
) -> Result<(Vec<AnnotatedDialogue>, PathBuf)> {
    let digest = sha256_file(source)?;
    let path = cache_dir.join(cache_file_name(split, backend));
    if path.exists() {
        match read_cache(&path) {
            Ok((h, d))
                if h.format == CACHE_FORMAT
                    && h.backend == backend.name()
                    && h.backend_version == backend.version()
                    && h.split == split
                    && h.source_sha256 == digest =>
            {
                return Ok((d, path));
            }
            Ok(_) => log::info!("{} is stale; rebuilding", path.display()),
            Err(e) => log::warn!("{} unreadable ({e}); rebuilding", path.display()),
        }
    }
    let dialogues = load_corpus(source, split, labels)?;
    let annotated = annotate_corpus(&dialogues, backend)?;
    let header = CacheHeader {
        format: CACHE_FORMAT,
        backend: backend.name().to_string(),
        backend_version: backend.version().to_string(),
        split,
        source_sha256: digest,
        dialogues: annotated.len(),
    };
    write_cache(&path, &header, &annotated)?;
    Ok((annotated, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::RuleAnnotator;
    use crate::corpus::parse_corpus;

    fn sample() -> String {
        serde_json::json!([
            [["Speaker 1: Hi Emma!", "Speaker 2: Hello."], [{"x": "Speaker 2", "y": "Emma", "r": ["per:alternate_names"], "rid": [30], "t": [""], "x_type": "PER", "y_type": "PER"}]],
            [["Speaker 1: Tab\there"], [{"x": "Speaker 1", "y": "here", "r": ["unanswerable"], "rid": [37], "t": [""], "x_type": "PER", "y_type": "STRING"}]]
        ])
        .to_string()
    }

    #[test]
    fn cache_round_trip_and_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("dev.json");
        std::fs::write(&src, sample()).unwrap();
        let labels = RelationVocabulary::dialogre();
        let backend = RuleAnnotator::new();
        let (first, path) = load_or_annotate(&src, Split::Dev, &labels, &backend, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "dev.rule-1.v1.cache");
        let (header, again) = read_cache(&path).unwrap();
        assert_eq!(header.dialogues, 2);
        assert_eq!(again, first);
        let expected = annotate_corpus(&parse_corpus(&sample(), Split::Dev, &labels).unwrap(), &backend).unwrap();
        assert_eq!(first, expected);
        let (second, _) = load_or_annotate(&src, Split::Dev, &labels, &backend, dir.path()).unwrap();
        assert_eq!(second, first);
    }

    #[test]
    fn corrupt_records_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.cache");
        std::fs::write(&path, "5\t{}\n").unwrap();
        assert!(read_cache(&path).is_err());
        let header = CacheHeader {
            format: 1,
            backend: "rule".into(),
            backend_version: "1".into(),
            split: Split::Dev,
            source_sha256: String::new(),
            dialogues: 1,
        };
        write_cache(&path, &header, &[]).unwrap();
        assert!(matches!(read_cache(&path), Err(Error::Data(_))));
    }
}
