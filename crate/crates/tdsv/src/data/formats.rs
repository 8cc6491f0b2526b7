//! Readers and writers for the on-disk interchange formats.
//!
//! Binary embedding files are little-endian with an explicit magic and are
//! bit-exact under write/read round-trips. The text formats print floats in
//! shortest round-trip notation, so they round-trip bit-exactly as well.

use super::{
    DataError, EmbeddingStore, EnrollmentPolicy, ModelDefinition, PhrasePosterior, ScoreRecord,
    Trial, TrialLabel, PHRASE_COUNT, POSTERIOR_CLASSES, POSTERIOR_SUM_TOLERANCE,
};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Magic bytes opening a binary embedding file.
pub const EMBEDDING_MAGIC: &[u8; 8] = b"TDSVEMB1";

/// On-disk embedding layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    /// `TDSVEMB1` magic, u32 LE dim, u64 LE count, then per record:
    /// u16 LE id byte length, id bytes, dim f32 LE values.
    Binary,
    /// One `id v1 .. vD` line per record, space-separated.
    Text,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sniffs the embedding format from the leading magic bytes.
pub fn detect_embedding_format(path: &Path) -> Result<EmbeddingFormat, DataError> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut head = [0u8; 8];
    let mut got = 0;
    while got < head.len() {
        match file.read(&mut head[got..]).map_err(|e| io_err(path, e))? {
            0 => break,
            n => got += n,
        }
    }
    if got == head.len() && &head == EMBEDDING_MAGIC {
        Ok(EmbeddingFormat::Binary)
    } else {
        Ok(EmbeddingFormat::Text)
    }
}

pub fn read_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingStore, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_embeddings_from(BufReader::new(file), format, path)
}

pub fn read_embeddings_from<R: BufRead>(
    reader: R,
    format: EmbeddingFormat,
    path: &Path,
) -> Result<EmbeddingStore, DataError> {
    match format {
        EmbeddingFormat::Binary => read_embeddings_binary(reader, path),
        EmbeddingFormat::Text => read_embeddings_text(reader, path),
    }
}

pub fn write_embeddings(
    path: &Path,
    store: &EmbeddingStore,
    format: EmbeddingFormat,
) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    write_embeddings_to(&mut writer, store, format).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn write_embeddings_to<W: Write>(
    writer: &mut W,
    store: &EmbeddingStore,
    format: EmbeddingFormat,
) -> std::io::Result<()> {
    match format {
        EmbeddingFormat::Binary => {
            writer.write_all(EMBEDDING_MAGIC)?;
            writer.write_all(&(store.dim() as u32).to_le_bytes())?;
            writer.write_all(&(store.len() as u64).to_le_bytes())?;
            for (id, values) in store.iter() {
                let id_len = u16::try_from(id.len()).map_err(|_| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidInput,
                        format!("id {:?}... exceeds the u16 length field", &id[..32]),
                    )
                })?;
                writer.write_all(&id_len.to_le_bytes())?;
                writer.write_all(id.as_bytes())?;
                for v in values {
                    writer.write_all(&v.to_le_bytes())?;
                }
            }
            Ok(())
        }
        EmbeddingFormat::Text => {
            for (id, values) in store.iter() {
                write!(writer, "{id}")?;
                for v in values {
                    write!(writer, " {v}")?;
                }
                writeln!(writer)?;
            }
            Ok(())
        }
    }
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn read_exact_or(
        &mut self,
        buf: &mut [u8],
        path: &Path,
        record: usize,
        what: &'static str,
    ) -> Result<(), DataError> {
        let start = self.offset;
        let mut got = 0;
        while got < buf.len() {
            let n = self.inner.read(&mut buf[got..]).map_err(|e| io_err(path, e))?;
            if n == 0 {
                return Err(DataError::Truncated {
                    path: path.to_path_buf(),
                    record,
                    offset: start + got as u64,
                    what,
                });
            }
            got += n;
            self.offset += n as u64;
        }
        Ok(())
    }

    fn at_eof(&mut self, path: &Path) -> Result<bool, DataError> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe).map_err(|e| io_err(path, e))? {
            0 => Ok(true),
            _ => {
                self.offset += 1;
                Ok(false)
            }
        }
    }
}

fn read_embeddings_binary<R: BufRead>(reader: R, path: &Path) -> Result<EmbeddingStore, DataError> {
    let mut cur = Cursor {
        inner: reader,
        offset: 0,
    };
    let mut header = [0u8; 20];
    {
        // A short or empty file has no usable header.
        let mut got = 0;
        while got < header.len() {
            let n = cur
                .inner
                .read(&mut header[got..])
                .map_err(|e| io_err(path, e))?;
            if n == 0 {
                return Err(DataError::MissingHeader {
                    path: path.to_path_buf(),
                });
            }
            got += n;
        }
        cur.offset = header.len() as u64;
    }
    if &header[0..8] != EMBEDDING_MAGIC {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            found: header[0..8].to_vec(),
            expected: EMBEDDING_MAGIC,
        });
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap());
    if dim == 0 && count > 0 {
        return Err(DataError::ZeroDimHeader {
            path: path.to_path_buf(),
            count,
        });
    }

    let mut store = EmbeddingStore::new();
    for record in 1..=count as usize {
        let mut len_buf = [0u8; 2];
        cur.read_exact_or(&mut len_buf, path, record, "id length")?;
        let id_len = u16::from_le_bytes(len_buf) as usize;
        let mut id_buf = vec![0u8; id_len];
        cur.read_exact_or(&mut id_buf, path, record, "id bytes")?;
        let id = String::from_utf8(id_buf).map_err(|_| DataError::InvalidId {
            path: path.to_path_buf(),
            record,
        })?;
        let mut values = Vec::with_capacity(dim);
        let mut val_buf = [0u8; 4];
        for _ in 0..dim {
            cur.read_exact_or(&mut val_buf, path, record, "f32 value")?;
            values.push(f32::from_le_bytes(val_buf));
        }
        store.insert(id, values).map_err(|source| DataError::Store {
            path: path.to_path_buf(),
            record,
            source,
        })?;
    }
    if !cur.at_eof(path)? {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            record: count as usize + 1,
            offset: cur.offset - 1,
            what: "end of file (trailing bytes)",
        });
    }
    Ok(store)
}

fn read_embeddings_text<R: BufRead>(reader: R, path: &Path) -> Result<EmbeddingStore, DataError> {
    let mut store = EmbeddingStore::new();
    let mut record = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        record += 1;
        let mut parts = line.split_whitespace();
        let id = parts.next().expect("non-empty line has a first token");
        let mut values = Vec::new();
        for token in parts {
            let v: f32 = token.parse().map_err(|_| DataError::InvalidNumber {
                path: path.to_path_buf(),
                line: lineno + 1,
                token: token.to_string(),
                what: "f32",
            })?;
            values.push(v);
        }
        if store.dim() != 0 && values.len() != store.dim() {
            // Name the offending record, 1-based.
            return Err(DataError::Store {
                path: path.to_path_buf(),
                record,
                source: super::StoreError::DimensionMismatch {
                    id: id.to_string(),
                    expected: store.dim(),
                    found: values.len(),
                },
            });
        }
        store
            .insert(id.to_string(), values)
            .map_err(|source| DataError::Store {
                path: path.to_path_buf(),
                record,
                source,
            })?;
    }
    Ok(store)
}

fn split_tabs(line: &str) -> Vec<&str> {
    line.split('\t').collect()
}

pub fn read_trials(path: &Path) -> Result<Vec<Trial>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_trials_from(BufReader::new(file), path)
}

pub fn read_trials_from<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Trial>, DataError> {
    let mut trials = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let cols = split_tabs(&line);
        if cols.len() != 2 && cols.len() != 3 {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: lineno,
                expected: "2 or 3",
                found: cols.len(),
            });
        }
        for (field, name) in [(cols[0], "model_id"), (cols[1], "test_utt_id")] {
            if field.is_empty() {
                return Err(DataError::EmptyField {
                    path: path.to_path_buf(),
                    line: lineno,
                    field: name,
                });
            }
        }
        let label = if cols.len() == 3 {
            Some(
                TrialLabel::parse(cols[2]).ok_or_else(|| DataError::UnknownLabel {
                    path: path.to_path_buf(),
                    line: lineno,
                    token: cols[2].to_string(),
                })?,
            )
        } else {
            None
        };
        trials.push(Trial {
            model_id: cols[0].to_string(),
            test_utt_id: cols[1].to_string(),
            label,
        });
    }
    Ok(trials)
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    write_trials_to(&mut writer, trials).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn write_trials_to<W: Write>(writer: &mut W, trials: &[Trial]) -> std::io::Result<()> {
    for t in trials {
        match t.label {
            Some(label) => writeln!(writer, "{}\t{}\t{}", t.model_id, t.test_utt_id, label)?,
            None => writeln!(writer, "{}\t{}", t.model_id, t.test_utt_id)?,
        }
    }
    Ok(())
}

pub fn read_models(path: &Path, policy: EnrollmentPolicy) -> Result<Vec<ModelDefinition>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_models_from(BufReader::new(file), path, policy)
}

pub fn read_models_from<R: BufRead>(
    reader: R,
    path: &Path,
    policy: EnrollmentPolicy,
) -> Result<Vec<ModelDefinition>, DataError> {
    let mut models: Vec<ModelDefinition> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let cols = split_tabs(&line);
        if cols.len() != 3 {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: lineno,
                expected: "3",
                found: cols.len(),
            });
        }
        if cols[0].is_empty() {
            return Err(DataError::EmptyField {
                path: path.to_path_buf(),
                line: lineno,
                field: "model_id",
            });
        }
        if !seen.insert(cols[0].to_string()) {
            return Err(DataError::DuplicateLine {
                path: path.to_path_buf(),
                line: lineno,
                id: cols[0].to_string(),
            });
        }
        let phrase: i64 = cols[1].parse().map_err(|_| DataError::InvalidNumber {
            path: path.to_path_buf(),
            line: lineno,
            token: cols[1].to_string(),
            what: "phrase id",
        })?;
        if phrase < 0 || phrase as usize >= PHRASE_COUNT {
            return Err(DataError::PhraseRange {
                path: path.to_path_buf(),
                line: lineno,
                found: phrase,
                max: PHRASE_COUNT - 1,
            });
        }
        let utts: Vec<String> = cols[2].split(',').map(str::to_string).collect();
        if utts.iter().any(String::is_empty) {
            return Err(DataError::EmptyField {
                path: path.to_path_buf(),
                line: lineno,
                field: "enrollment utterance",
            });
        }
        if !policy.check(utts.len()) {
            return Err(DataError::EnrollmentCount {
                path: path.to_path_buf(),
                line: lineno,
                found: utts.len(),
            });
        }
        models.push(ModelDefinition {
            model_id: cols[0].to_string(),
            phrase_id: phrase as usize,
            enrollment_utts: utts,
        });
    }
    Ok(models)
}

pub fn write_models(path: &Path, models: &[ModelDefinition]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    write_models_to(&mut writer, models).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn write_models_to<W: Write>(writer: &mut W, models: &[ModelDefinition]) -> std::io::Result<()> {
    for m in models {
        writeln!(
            writer,
            "{}\t{}\t{}",
            m.model_id,
            m.phrase_id,
            m.enrollment_utts.join(",")
        )?;
    }
    Ok(())
}

pub fn read_posteriors(path: &Path) -> Result<Vec<PhrasePosterior>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_posteriors_from(BufReader::new(file), path)
}

pub fn read_posteriors_from<R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<Vec<PhrasePosterior>, DataError> {
    let mut posteriors = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let cols = split_tabs(&line);
        if cols.len() != 2 {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: lineno,
                expected: "2",
                found: cols.len(),
            });
        }
        let utt_id = cols[0];
        if utt_id.is_empty() {
            return Err(DataError::EmptyField {
                path: path.to_path_buf(),
                line: lineno,
                field: "utt_id",
            });
        }
        if !seen.insert(utt_id.to_string()) {
            return Err(DataError::DuplicateLine {
                path: path.to_path_buf(),
                line: lineno,
                id: utt_id.to_string(),
            });
        }
        let mut probs = Vec::with_capacity(POSTERIOR_CLASSES);
        for token in cols[1].split_whitespace() {
            let p: f64 = token.parse().map_err(|_| DataError::InvalidNumber {
                path: path.to_path_buf(),
                line: lineno,
                token: token.to_string(),
                what: "probability",
            })?;
            probs.push(p);
        }
        if probs.len() != POSTERIOR_CLASSES {
            return Err(DataError::ProbCount {
                path: path.to_path_buf(),
                line: lineno,
                id: utt_id.to_string(),
                expected: POSTERIOR_CLASSES,
                found: probs.len(),
            });
        }
        if let Some(index) = probs.iter().position(|&p| !p.is_finite() || p < 0.0) {
            return Err(DataError::NegativeProb {
                path: path.to_path_buf(),
                line: lineno,
                id: utt_id.to_string(),
                index,
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > POSTERIOR_SUM_TOLERANCE {
            return Err(DataError::ProbSum {
                path: path.to_path_buf(),
                line: lineno,
                id: utt_id.to_string(),
                sum,
                tolerance: POSTERIOR_SUM_TOLERANCE,
            });
        }
        posteriors.push(PhrasePosterior {
            utt_id: utt_id.to_string(),
            probs,
        });
    }
    Ok(posteriors)
}

pub fn write_posteriors(path: &Path, posteriors: &[PhrasePosterior]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    write_posteriors_to(&mut writer, posteriors).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn write_posteriors_to<W: Write>(
    writer: &mut W,
    posteriors: &[PhrasePosterior],
) -> std::io::Result<()> {
    for p in posteriors {
        write!(writer, "{}\t", p.utt_id)?;
        for (i, prob) in p.probs.iter().enumerate() {
            if i > 0 {
                write!(writer, " ")?;
            }
            write!(writer, "{:.6}", prob)?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_scores_from(BufReader::new(file), path)
}

pub fn read_scores_from<R: BufRead>(reader: R, path: &Path) -> Result<Vec<ScoreRecord>, DataError> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let cols = split_tabs(&line);
        if cols.len() != 3 {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: lineno,
                expected: "3",
                found: cols.len(),
            });
        }
        for (field, name) in [(cols[0], "model_id"), (cols[1], "test_utt_id")] {
            if field.is_empty() {
                return Err(DataError::EmptyField {
                    path: path.to_path_buf(),
                    line: lineno,
                    field: name,
                });
            }
        }
        let score: f64 = cols[2].parse().map_err(|_| DataError::InvalidNumber {
            path: path.to_path_buf(),
            line: lineno,
            token: cols[2].to_string(),
            what: "score",
        })?;
        if !score.is_finite() {
            return Err(DataError::NonFiniteScore {
                path: path.to_path_buf(),
                line: lineno,
            });
        }
        records.push(ScoreRecord {
            model_id: cols[0].to_string(),
            test_utt_id: cols[1].to_string(),
            score,
        });
    }
    Ok(records)
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    write_scores_to(&mut writer, records).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

/// Scores are printed with six decimal places.
pub fn write_scores_to<W: Write>(writer: &mut W, records: &[ScoreRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(writer, "{}\t{}\t{:.6}", r.model_id, r.test_utt_id, r.score)?;
    }
    Ok(())
}

/// Speaker map: `utt_id<TAB>speaker_id` per line, order preserved.
pub fn read_speaker_map(path: &Path) -> Result<Vec<(String, String)>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_speaker_map_from(BufReader::new(file), path)
}

pub fn read_speaker_map_from<R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<Vec<(String, String)>, DataError> {
    let mut map = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let cols = split_tabs(&line);
        if cols.len() != 2 {
            return Err(DataError::ColumnCount {
                path: path.to_path_buf(),
                line: lineno,
                expected: "2",
                found: cols.len(),
            });
        }
        for (field, name) in [(cols[0], "utt_id"), (cols[1], "speaker_id")] {
            if field.is_empty() {
                return Err(DataError::EmptyField {
                    path: path.to_path_buf(),
                    line: lineno,
                    field: name,
                });
            }
        }
        if !seen.insert(cols[0].to_string()) {
            return Err(DataError::DuplicateLine {
                path: path.to_path_buf(),
                line: lineno,
                id: cols[0].to_string(),
            });
        }
        map.push((cols[0].to_string(), cols[1].to_string()));
    }
    Ok(map)
}

pub fn write_speaker_map(path: &Path, map: &[(String, String)]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    write_speaker_map_to(&mut writer, map).map_err(|e| io_err(path, e))?;
    writer.flush().map_err(|e| io_err(path, e))
}

pub fn write_speaker_map_to<W: Write>(
    writer: &mut W,
    map: &[(String, String)],
) -> std::io::Result<()> {
    for (utt, spk) in map {
        writeln!(writer, "{utt}\t{spk}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::StoreError;
    use super::*;
    use std::io::Cursor as IoCursor;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("<mem>")
    }

    fn sample_store() -> EmbeddingStore {
        let mut store = EmbeddingStore::new();
        store.insert("utt1", vec![1.0, -2.5, 0.125, 3.0]).unwrap();
        store.insert("utt2", vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        store
            .insert("utt3", vec![-1.0e-7, 42.0, 0.0, -0.0])
            .unwrap();
        store
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let store = sample_store();
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &store, EmbeddingFormat::Binary).unwrap();
        let restored = read_embeddings_from(IoCursor::new(&buf), EmbeddingFormat::Binary, &p()).unwrap();
        assert_eq!(restored.dim(), store.dim());
        assert_eq!(restored.len(), store.len());
        for (id, values) in store.iter() {
            let got = restored.get(id).unwrap();
            assert_eq!(
                got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn text_round_trip_is_bit_identical() {
        let store = sample_store();
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &store, EmbeddingFormat::Text).unwrap();
        let restored = read_embeddings_from(IoCursor::new(&buf), EmbeddingFormat::Text, &p()).unwrap();
        for (id, values) in store.iter() {
            let got = restored.get(id).unwrap();
            assert_eq!(
                got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn binary_empty_file_is_missing_header() {
        let err =
            read_embeddings_from(IoCursor::new(&[][..]), EmbeddingFormat::Binary, &p()).unwrap_err();
        assert!(matches!(err, DataError::MissingHeader { .. }));
    }

    #[test]
    fn binary_bad_magic() {
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &sample_store(), EmbeddingFormat::Binary).unwrap();
        buf[0] = b'X';
        let err =
            read_embeddings_from(IoCursor::new(&buf), EmbeddingFormat::Binary, &p()).unwrap_err();
        assert!(matches!(err, DataError::BadMagic { .. }));
    }

    #[test]
    fn binary_truncated_record() {
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &sample_store(), EmbeddingFormat::Binary).unwrap();
        buf.truncate(buf.len() - 3);
        let err =
            read_embeddings_from(IoCursor::new(&buf), EmbeddingFormat::Binary, &p()).unwrap_err();
        match err {
            DataError::Truncated { record, .. } => assert_eq!(record, 3),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn text_empty_file_gives_empty_store() {
        let store =
            read_embeddings_from(IoCursor::new(&[][..]), EmbeddingFormat::Text, &p()).unwrap();
        assert!(store.is_empty());
        assert_eq!(store.dim(), 0);
    }

    #[test]
    fn text_dimension_mismatch_names_record_two() {
        let data = "a 1 2 3 4\nb 1 2 3 4 5\n";
        let err = read_embeddings_from(IoCursor::new(data.as_bytes()), EmbeddingFormat::Text, &p())
            .unwrap_err();
        match err {
            DataError::Store {
                record,
                source: StoreError::DimensionMismatch { expected, found, .. },
                ..
            } => {
                assert_eq!(record, 2);
                assert_eq!(expected, 4);
                assert_eq!(found, 5);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn text_rejects_nan() {
        let data = "a 1 NaN\n";
        let err = read_embeddings_from(IoCursor::new(data.as_bytes()), EmbeddingFormat::Text, &p())
            .unwrap_err();
        assert!(matches!(
            err,
            DataError::Store {
                source: StoreError::NonFinite { .. },
                ..
            }
        ));
    }

    #[test]
    fn trial_lines_parse() {
        let data = "mdl1\tutt9\tTC\nmdl1\tutt9\n";
        let trials = read_trials_from(IoCursor::new(data.as_bytes()), &p()).unwrap();
        assert_eq!(trials.len(), 2);
        assert_eq!(trials[0].model_id, "mdl1");
        assert_eq!(trials[0].test_utt_id, "utt9");
        assert_eq!(trials[0].label, Some(TrialLabel::Tc));
        assert_eq!(trials[1].label, None);
    }

    #[test]
    fn trial_unknown_label() {
        let data = "mdl1\tutt9\tXX\n";
        let err = read_trials_from(IoCursor::new(data.as_bytes()), &p()).unwrap_err();
        match err {
            DataError::UnknownLabel { line, token, .. } => {
                assert_eq!(line, 1);
                assert_eq!(token, "XX");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn trial_wrong_columns() {
        let data = "only-one-column\n";
        let err = read_trials_from(IoCursor::new(data.as_bytes()), &p()).unwrap_err();
        assert!(matches!(err, DataError::ColumnCount { found: 1, .. }));
    }

    #[test]
    fn trial_order_preserved() {
        let data = "m2\tu2\nm1\tu1\nm3\tu3\n";
        let trials = read_trials_from(IoCursor::new(data.as_bytes()), &p()).unwrap();
        let ids: Vec<&str> = trials.iter().map(|t| t.model_id.as_str()).collect();
        assert_eq!(ids, ["m2", "m1", "m3"]);
    }

    #[test]
    fn model_line_parses() {
        let data = "m1\t3\tu1,u2,u3\n";
        let models =
            read_models_from(IoCursor::new(data.as_bytes()), &p(), EnrollmentPolicy::Strict)
                .unwrap();
        assert_eq!(models[0].model_id, "m1");
        assert_eq!(models[0].phrase_id, 3);
        assert_eq!(models[0].enrollment_utts, ["u1", "u2", "u3"]);
    }

    #[test]
    fn model_strict_enrollment_count() {
        let data = "m1\t3\tu1,u2\n";
        let err = read_models_from(IoCursor::new(data.as_bytes()), &p(), EnrollmentPolicy::Strict)
            .unwrap_err();
        assert!(matches!(err, DataError::EnrollmentCount { found: 2, .. }));
        let models =
            read_models_from(IoCursor::new(data.as_bytes()), &p(), EnrollmentPolicy::Relaxed)
                .unwrap();
        assert_eq!(models[0].enrollment_utts.len(), 2);
    }

    #[test]
    fn model_phrase_out_of_range() {
        let data = "m1\t10\tu1,u2,u3\n";
        let err = read_models_from(IoCursor::new(data.as_bytes()), &p(), EnrollmentPolicy::Strict)
            .unwrap_err();
        assert!(matches!(err, DataError::PhraseRange { found: 10, .. }));
    }

    #[test]
    fn posterior_parses_and_validates_sum() {
        let probs: Vec<String> = (0..11).map(|i| if i == 4 { "1.0" } else { "0.0" }.into()).collect();
        let good = format!("u1\t{}\n", probs.join(" "));
        let read = read_posteriors_from(IoCursor::new(good.as_bytes()), &p()).unwrap();
        assert_eq!(read[0].utt_id, "u1");
        assert_eq!(read[0].probs[4], 1.0);

        let bad = format!("u1\t{}\n", ["0.09"; 10].join(" ") + " 0.0");
        let err = read_posteriors_from(IoCursor::new(bad.as_bytes()), &p()).unwrap_err();
        match err {
            DataError::ProbSum { sum, .. } => assert!((sum - 0.9).abs() < 1e-9),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn posterior_wrong_count() {
        let data = "u1\t0.5 0.5\n";
        let err = read_posteriors_from(IoCursor::new(data.as_bytes()), &p()).unwrap_err();
        assert!(matches!(err, DataError::ProbCount { found: 2, .. }));
    }

    #[test]
    fn score_round_trip_to_printed_precision() {
        let records = vec![ScoreRecord::new("m1", "u1", 0.123456)];
        let mut buf = Vec::new();
        write_scores_to(&mut buf, &records).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "m1\tu1\t0.123456\n");
        let restored = read_scores_from(IoCursor::new(&buf), &p()).unwrap();
        assert_eq!(restored, records);
    }

    #[test]
    fn score_rejects_non_finite() {
        let data = "m1\tu1\tinf\n";
        let err = read_scores_from(IoCursor::new(data.as_bytes()), &p()).unwrap_err();
        assert!(matches!(err, DataError::NonFiniteScore { line: 1, .. }));
    }

    #[test]
    fn speaker_map_round_trip_and_duplicates() {
        let data = "u1\ts1\nu2\ts1\n";
        let map = read_speaker_map_from(IoCursor::new(data.as_bytes()), &p()).unwrap();
        assert_eq!(map.len(), 2);
        let dup = "u1\ts1\nu1\ts2\n";
        let err = read_speaker_map_from(IoCursor::new(dup.as_bytes()), &p()).unwrap_err();
        assert!(matches!(err, DataError::DuplicateLine { line: 2, .. }));
    }
}
