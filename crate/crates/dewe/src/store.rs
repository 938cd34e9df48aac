//! Model archives: the vocabulary and both parameter matrices, in a text
//! and a binary format. Loading what was saved reproduces every vector
//! bit for bit in either format.
//!
//! Text layout, whitespace-separated:
//!
//! ```text
//! <vocab_size> <dim>
//! <token> <count> <link_title or -> <v1> ... <vdim>   (one row per token)
//! #OUTPUT
//! <v1> ... <vdim>                                     (one row per token)
//! ```
//!
//! Floats are printed with Rust's shortest round-trip formatting. The
//! `#OUTPUT` section may be absent, in which case the output matrix loads
//! as zeros. The binary format is little-endian throughout: magic `DEWB`,
//! format version, dimensions, length-prefixed vocabulary entries, then the
//! raw matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{VocabEntry, VocabLink, Vocabulary};
use crate::trainer::EmbeddingModel;

const MAGIC: &[u8; 4] = b"DEWB";
const VERSION: u32 = 1;
const NO_LINK: u32 = u32::MAX;
/// Longest accepted token or title, in bytes; longer lengths in a binary
/// header mean the file is corrupt.
const MAX_NAME_BYTES: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("cannot save: {0}")]
    InvalidInput(String),
}

fn check_saveable(model: &EmbeddingModel, vocab: &Vocabulary) -> Result<(), StoreError> {
    if vocab.len() != model.vocab_size() {
        return Err(StoreError::InvalidInput(format!(
            "vocabulary has {} tokens but the model has {} rows",
            vocab.len(),
            model.vocab_size()
        )));
    }
    if model.input().iter().chain(model.output().iter()).any(|v| !v.is_finite()) {
        return Err(StoreError::InvalidInput("model contains NaN or infinite values".into()));
    }
    Ok(())
}

fn check_text_name(kind: &str, name: &str) -> Result<(), StoreError> {
    if name.is_empty() || name.contains(char::is_whitespace) || name == "-" {
        return Err(StoreError::InvalidInput(format!(
            "{kind} {name:?} cannot be written to the text format"
        )));
    }
    Ok(())
}

/// Writes the text format to `writer`.
pub fn write_text(
    mut writer: impl Write,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
) -> Result<(), StoreError> {
    check_saveable(model, vocab)?;
    writeln!(writer, "{} {}", vocab.len(), model.dim())?;
    for (i, entry) in vocab.entries().iter().enumerate() {
        check_text_name("token", &entry.token)?;
        let link = match &entry.link {
            Some(l) => {
                check_text_name("link title", &l.title)?;
                l.title.as_str()
            }
            None => "-",
        };
        write!(writer, "{} {} {}", entry.token, entry.count, link)?;
        for v in model.input_row(i as u32) {
            write!(writer, " {v}")?;
        }
        writeln!(writer)?;
    }
    writeln!(writer, "#OUTPUT")?;
    for i in 0..vocab.len() as u32 {
        let row = model.output_row(i);
        let mut first = true;
        for v in row {
            if first {
                write!(writer, "{v}")?;
                first = false;
            } else {
                write!(writer, " {v}")?;
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}

fn parse_floats(fields: &[&str], line: usize, out: &mut Vec<f32>) -> Result<(), StoreError> {
    for f in fields {
        let v: f32 = f.parse().map_err(|_| StoreError::Text {
            line,
            message: format!("`{f}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(StoreError::Text {
                line,
                message: format!("`{f}` is not finite"),
            });
        }
        out.push(v);
    }
    Ok(())
}

/// Reads the text format from `reader`.
pub fn read_text(reader: impl BufRead) -> Result<(EmbeddingModel, Vocabulary), StoreError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let at = |i: usize| -> Option<&str> { lines.get(i).map(|l| l.trim_end_matches('\r')) };
    let missing = |i: usize, what: &str| StoreError::Text {
        line: i + 1,
        message: format!("unexpected end of file: expected {what}"),
    };

    let header = at(0).ok_or_else(|| missing(0, "a `<vocab_size> <dim>` header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(StoreError::Text {
            line: 1,
            message: format!("header must be `<vocab_size> <dim>`, found {} fields", head.len()),
        });
    }
    let vocab_size: usize = head[0].parse().map_err(|_| StoreError::Text {
        line: 1,
        message: format!("`{}` is not a vocabulary size", head[0]),
    })?;
    let dim: usize = head[1].parse().map_err(|_| StoreError::Text {
        line: 1,
        message: format!("`{}` is not a dimension", head[1]),
    })?;
    if dim == 0 {
        return Err(StoreError::Text { line: 1, message: "dimension must be positive".into() });
    }

    let mut entries = Vec::with_capacity(vocab_size);
    let mut input = Vec::with_capacity(vocab_size * dim);
    for row in 0..vocab_size {
        let i = 1 + row;
        let line = at(i).ok_or_else(|| {
            missing(i, &format!("vocabulary row {} of {vocab_size}", row + 1))
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 + dim {
            return Err(StoreError::Text {
                line: i + 1,
                message: format!(
                    "expected `token count link` plus {dim} values ({} fields), found {}",
                    3 + dim,
                    fields.len()
                ),
            });
        }
        let count: u64 = fields[1].parse().map_err(|_| StoreError::Text {
            line: i + 1,
            message: format!("`{}` is not a count", fields[1]),
        })?;
        let link = match fields[2] {
            "-" => None,
            title => Some(VocabLink { doc: None, title: title.to_string() }),
        };
        entries.push(VocabEntry { token: fields[0].to_string(), count, link });
        parse_floats(&fields[3..], i + 1, &mut input)?;
    }

    let mut output = Vec::new();
    let mut next = 1 + vocab_size;
    match at(next) {
        Some(marker) if marker.trim() == "#OUTPUT" => {
            for row in 0..vocab_size {
                let i = next + 1 + row;
                let line = at(i).ok_or_else(|| {
                    missing(i, &format!("output row {} of {vocab_size}", row + 1))
                })?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != dim {
                    return Err(StoreError::Text {
                        line: i + 1,
                        message: format!("expected {dim} values, found {}", fields.len()),
                    });
                }
                parse_floats(&fields, i + 1, &mut output)?;
            }
            next += 1 + vocab_size;
        }
        _ => output.resize(vocab_size * dim, 0.0),
    }
    while let Some(line) = at(next) {
        if !line.trim().is_empty() {
            return Err(StoreError::Text {
                line: next + 1,
                message: "unexpected trailing content".into(),
            });
        }
        next += 1;
    }

    let vocab = Vocabulary::from_entries(entries).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    let model = EmbeddingModel::from_vectors(dim, input, output)
        .map_err(|e| StoreError::Corrupt(e.to_string()))?;
    Ok((model, vocab))
}

/// Writes the binary format to `writer`.
pub fn write_binary(
    mut writer: impl Write,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
) -> Result<(), StoreError> {
    check_saveable(model, vocab)?;
    writer.write_all(MAGIC)?;
    writer.write_all(&VERSION.to_le_bytes())?;
    writer.write_all(&(vocab.len() as u64).to_le_bytes())?;
    writer.write_all(&(model.dim() as u64).to_le_bytes())?;
    for entry in vocab.entries() {
        writer.write_all(&(entry.token.len() as u32).to_le_bytes())?;
        writer.write_all(entry.token.as_bytes())?;
        writer.write_all(&entry.count.to_le_bytes())?;
        match &entry.link {
            Some(l) => {
                writer.write_all(&(l.title.len() as u32).to_le_bytes())?;
                writer.write_all(l.title.as_bytes())?;
            }
            None => writer.write_all(&NO_LINK.to_le_bytes())?,
        }
    }
    for v in model.input() {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.write_all(&[1u8])?;
    for v in model.output() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn fill(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), StoreError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            StoreError::Corrupt(format!("unexpected end of file reading {what}"))
        } else {
            StoreError::Io(e)
        }
    })
}

fn read_u32(reader: &mut impl Read, what: &str) -> Result<u32, StoreError> {
    let mut b = [0u8; 4];
    fill(reader, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(reader: &mut impl Read, what: &str) -> Result<u64, StoreError> {
    let mut b = [0u8; 8];
    fill(reader, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_name(reader: &mut impl Read, len: u32, what: &str) -> Result<String, StoreError> {
    if len > MAX_NAME_BYTES {
        return Err(StoreError::Corrupt(format!("{what} length {len} is implausible")));
    }
    let mut buf = vec![0u8; len as usize];
    fill(reader, &mut buf, what)?;
    String::from_utf8(buf).map_err(|_| StoreError::Corrupt(format!("{what} is not UTF-8")))
}

fn read_matrix(
    reader: &mut impl Read,
    len: usize,
    what: &str,
) -> Result<Vec<f32>, StoreError> {
    let mut values = Vec::with_capacity(len);
    let mut b = [0u8; 4];
    for _ in 0..len {
        fill(reader, &mut b, what)?;
        let v = f32::from_le_bytes(b);
        if !v.is_finite() {
            return Err(StoreError::Corrupt(format!("{what} contains a non-finite value")));
        }
        values.push(v);
    }
    Ok(values)
}

/// Reads the binary format from `reader`.
pub fn read_binary(mut reader: impl Read) -> Result<(EmbeddingModel, Vocabulary), StoreError> {
    let mut magic = [0u8; 4];
    fill(&mut reader, &mut magic, "the magic number")?;
    if &magic != MAGIC {
        return Err(StoreError::Corrupt("not a model archive (bad magic number)".into()));
    }
    let version = read_u32(&mut reader, "the format version")?;
    if version != VERSION {
        return Err(StoreError::Corrupt(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let vocab_size = read_u64(&mut reader, "the vocabulary size")? as usize;
    let dim = read_u64(&mut reader, "the dimension")? as usize;
    if dim == 0 {
        return Err(StoreError::Corrupt("dimension must be positive".into()));
    }
    let matrix_len = vocab_size
        .checked_mul(dim)
        .ok_or_else(|| StoreError::Corrupt("matrix dimensions overflow".into()))?;

    let mut entries = Vec::with_capacity(vocab_size);
    for _ in 0..vocab_size {
        let token_len = read_u32(&mut reader, "a token length")?;
        let token = read_name(&mut reader, token_len, "a token")?;
        let count = read_u64(&mut reader, "a token count")?;
        let title_len = read_u32(&mut reader, "a link title length")?;
        let link = if title_len == NO_LINK {
            None
        } else {
            Some(VocabLink { doc: None, title: read_name(&mut reader, title_len, "a link title")? })
        };
        entries.push(VocabEntry { token, count, link });
    }

    let input = read_matrix(&mut reader, matrix_len, "the input matrix")?;
    let mut flag = [0u8; 1];
    fill(&mut reader, &mut flag, "the output-matrix flag")?;
    let output = match flag[0] {
        0 => vec![0.0; matrix_len],
        1 => read_matrix(&mut reader, matrix_len, "the output matrix")?,
        other => {
            return Err(StoreError::Corrupt(format!("output-matrix flag must be 0 or 1, not {other}")))
        }
    };
    let mut extra = [0u8; 1];
    match reader.read(&mut extra)? {
        0 => {}
        _ => return Err(StoreError::Corrupt("trailing bytes after the archive".into())),
    }

    let vocab = Vocabulary::from_entries(entries).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    let model = EmbeddingModel::from_vectors(dim, input, output)
        .map_err(|e| StoreError::Corrupt(e.to_string()))?;
    Ok((model, vocab))
}

pub fn save_text(
    path: impl AsRef<Path>,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
) -> Result<(), StoreError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_text(&mut writer, model, vocab)?;
    writer.flush()?;
    Ok(())
}

pub fn load_text(path: impl AsRef<Path>) -> Result<(EmbeddingModel, Vocabulary), StoreError> {
    read_text(BufReader::new(File::open(path)?))
}

pub fn save_binary(
    path: impl AsRef<Path>,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
) -> Result<(), StoreError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_binary(&mut writer, model, vocab)?;
    writer.flush()?;
    Ok(())
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<(EmbeddingModel, Vocabulary), StoreError> {
    read_binary(BufReader::new(File::open(path)?))
}

/// Loads either format, telling them apart by the binary magic number.
pub fn load_auto(path: impl AsRef<Path>) -> Result<(EmbeddingModel, Vocabulary), StoreError> {
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.starts_with(MAGIC) {
        read_binary(reader)
    } else {
        read_text(reader)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::init_params;
    use std::io::Cursor;

    fn sample() -> (EmbeddingModel, Vocabulary) {
        let mut model = init_params(3, 4, 17);
        model.output_row_mut(0).copy_from_slice(&[0.25, -0.0, 1.0 / 3.0, 1e-30]);
        model.output_row_mut(2).copy_from_slice(&[
            std::f32::consts::PI,
            f32::MIN_POSITIVE,
            -42.5,
            6.0221408e23,
        ]);
        let vocab = Vocabulary::from_entries(vec![
            VocabEntry { token: "alpha".into(), count: 30, link: None },
            VocabEntry {
                token: "beta".into(),
                count: 20,
                link: Some(VocabLink { doc: Some(2), title: "Beta_Topic".into() }),
            },
            VocabEntry { token: "gamma".into(), count: 10, link: None },
        ])
        .unwrap();
        (model, vocab)
    }

    fn assert_model_bits(a: &EmbeddingModel, b: &EmbeddingModel) {
        assert_eq!(a.dim(), b.dim());
        let bits =
            |v: &[f32]| -> Vec<u32> { v.iter().map(|x| x.to_bits()).collect() };
        assert_eq!(bits(a.input()), bits(b.input()), "input matrices differ");
        assert_eq!(bits(a.output()), bits(b.output()), "output matrices differ");
    }

    fn text_of(model: &EmbeddingModel, vocab: &Vocabulary) -> String {
        let mut buf = Vec::new();
        write_text(&mut buf, model, vocab).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let (model, vocab) = sample();
        let text = text_of(&model, &vocab);
        let (loaded_model, loaded_vocab) = read_text(Cursor::new(text)).unwrap();
        assert_model_bits(&model, &loaded_model);
        assert_eq!(loaded_vocab.len(), 3);
        assert_eq!(loaded_vocab.token(0), "alpha");
        assert_eq!(loaded_vocab.count(1), 20);
        // Document indices don't survive an archive; titles do.
        let link = loaded_vocab.link(1).unwrap();
        assert_eq!(link.title, "Beta_Topic");
        assert_eq!(link.doc, None);
        assert_eq!(loaded_vocab.link(0), None);
    }

    #[test]
    fn text_tolerates_crlf_line_endings() {
        let (model, vocab) = sample();
        let crlf = text_of(&model, &vocab).replace('\n', "\r\n");
        let (loaded, _) = read_text(Cursor::new(crlf)).unwrap();
        assert_model_bits(&model, &loaded);
    }

    #[test]
    fn text_without_output_section_loads_zeros() {
        let text = "2 2\nfoo 5 - 0.5 -0.25\nbar 3 Some_Doc 1.5 2.5\n";
        let (model, vocab) = read_text(Cursor::new(text)).unwrap();
        assert_eq!(model.input_row(1), &[1.5, 2.5]);
        assert!(model.output().iter().all(|&v| v == 0.0));
        assert_eq!(vocab.link(1).unwrap().title, "Some_Doc");
    }

    #[test]
    fn text_errors_name_the_offending_line() {
        let cases = [
            ("2 2\nfoo 5 - 0.5 -0.25\n", 3, "expected vocabulary row 2"),
            ("2 2\nfoo 5 - 0.5 -0.25\nbar 3 - 1.5\n", 3, "found 4"),
            ("1 2\nfoo x - 0.5 -0.25\n", 2, "not a count"),
            ("1 2\nfoo 5 - 0.5 oops\n", 2, "not a number"),
            ("1 2\nfoo 5 - 0.5 NaN\n", 2, "not finite"),
            ("1 0\nfoo 5 -\n", 1, "dimension must be positive"),
            ("1 2\nfoo 5 - 0.5 1.0\n#OUTPUT\n0.0 0.0\nleftover\n", 5, "trailing"),
            ("1 2\nfoo 5 - 0.5 1.0\n#OUTPUT\n", 4, "expected output row 1"),
        ];
        for (text, want_line, want_msg) in cases {
            match read_text(Cursor::new(text)) {
                Err(StoreError::Text { line, message }) => {
                    assert_eq!(line, want_line, "wrong line for {text:?}: {message}");
                    assert!(
                        message.contains(want_msg),
                        "message {message:?} should mention {want_msg:?}"
                    );
                }
                other => panic!("expected a text error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let (model, vocab) = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &model, &vocab).unwrap();
        let (loaded_model, loaded_vocab) = read_binary(Cursor::new(&buf)).unwrap();
        assert_model_bits(&model, &loaded_model);
        assert_eq!(loaded_vocab.entries().len(), 3);
        assert_eq!(loaded_vocab.link(1).unwrap().title, "Beta_Topic");
        assert_eq!(loaded_vocab.id("gamma"), Some(2));
    }

    #[test]
    fn binary_rejects_truncation_garbage_and_bad_headers() {
        let (model, vocab) = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &model, &vocab).unwrap();

        for cut in [2, 10, buf.len() / 2, buf.len() - 1] {
            match read_binary(Cursor::new(&buf[..cut])) {
                Err(StoreError::Corrupt(msg)) => {
                    assert!(msg.contains("end of file"), "cut {cut}: {msg}")
                }
                other => panic!("cut {cut}: expected corruption, got {other:?}"),
            }
        }

        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(
            read_binary(Cursor::new(&extra)),
            Err(StoreError::Corrupt(msg)) if msg.contains("trailing")
        ));

        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(
            read_binary(Cursor::new(&wrong_magic)),
            Err(StoreError::Corrupt(msg)) if msg.contains("magic")
        ));

        let mut wrong_version = buf;
        wrong_version[4] = 9;
        assert!(matches!(
            read_binary(Cursor::new(&wrong_version)),
            Err(StoreError::Corrupt(msg)) if msg.contains("version")
        ));
    }

    #[test]
    fn save_rejects_non_finite_models_and_size_mismatches() {
        let (model, vocab) = sample();
        let mut nan_model = model.clone();
        nan_model.input_row_mut(0)[0] = f32::NAN;
        assert!(matches!(
            write_text(Vec::new(), &nan_model, &vocab),
            Err(StoreError::InvalidInput(msg)) if msg.contains("NaN")
        ));
        assert!(matches!(
            write_binary(Vec::new(), &nan_model, &vocab),
            Err(StoreError::InvalidInput(_))
        ));

        let small = init_params(2, 4, 1);
        assert!(matches!(
            write_text(Vec::new(), &small, &vocab),
            Err(StoreError::InvalidInput(msg)) if msg.contains("rows")
        ));
    }

    #[test]
    fn auto_load_detects_both_formats() {
        let (model, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();

        let text_path = dir.path().join("model.txt");
        save_text(&text_path, &model, &vocab).unwrap();
        let (from_text, _) = load_auto(&text_path).unwrap();
        assert_model_bits(&model, &from_text);

        let bin_path = dir.path().join("model.bin");
        save_binary(&bin_path, &model, &vocab).unwrap();
        let (from_bin, _) = load_auto(&bin_path).unwrap();
        assert_model_bits(&model, &from_bin);

        assert!(matches!(load_text(dir.path().join("missing.txt")), Err(StoreError::Io(_))));
    }
}
