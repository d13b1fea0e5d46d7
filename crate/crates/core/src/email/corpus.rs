//! Corpus loaders for `.eml` directories, mbox files and CSV exports.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::compose::MessageBuilder;
use super::{CorpusLabel, EmailError, RawEmail};
use crate::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    EmlDir,
    Mbox,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "eml" | "emldir" | "eml-dir" => Ok(Self::EmlDir),
            "mbox" => Ok(Self::Mbox),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown corpus format `{other}` (expected eml, mbox or csv)")),
        }
    }
}

/// CSV column names. `body` is required; the others are optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvColumns {
    pub body: String,
    pub subject: Option<String>,
    pub sender: Option<String>,
    pub label: Option<String>,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            body: "body".into(),
            subject: Some("subject".into()),
            sender: Some("sender".into()),
            label: Some("label".into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusOptions {
    /// Forces every message to this label, ignoring directory names,
    /// sidecars and label columns.
    pub label: Option<Label>,
    pub csv: CsvColumns,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<RawEmail>, EmailError> {
    load_corpus_with(path, format, &CorpusOptions::default())
}

pub fn load_corpus_with(
    path: &Path,
    format: CorpusFormat,
    options: &CorpusOptions,
) -> Result<Vec<RawEmail>, EmailError> {
    let mut emails = match format {
        CorpusFormat::EmlDir => load_eml_dir(path)?,
        CorpusFormat::Mbox => load_mbox(path)?,
        CorpusFormat::Csv => load_csv(path, &options.csv)?,
    };
    if let Some(label) = options.label {
        emails = emails
            .into_iter()
            .map(|e| RawEmail::new(e.source_id, e.bytes, label.into()))
            .collect();
    }
    Ok(emails)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmailError + '_ {
    move |source| EmailError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

fn load_eml_dir(root: &Path) -> Result<Vec<RawEmail>, EmailError> {
    let mut files = Vec::new();
    collect_eml(root, &mut files)?;
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for file in files {
        let bytes = std::fs::read(&file).map_err(io_err(&file))?;
        let rel = file.strip_prefix(root).unwrap_or(&file);
        out.push(RawEmail::new(
            rel.to_string_lossy().replace('\\', "/"),
            bytes,
            label_from_dirs(rel),
        ));
    }
    Ok(out)
}

fn collect_eml(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), EmailError> {
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_eml(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("eml"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Label of the innermost directory whose name parses as a label.
fn label_from_dirs(rel: &Path) -> CorpusLabel {
    rel.parent()
        .into_iter()
        .flat_map(Path::ancestors)
        .filter_map(|p| p.file_name())
        .find_map(|name| Label::from_str(&name.to_string_lossy()).ok())
        .map_or(CorpusLabel::Unlabeled, CorpusLabel::from)
}

/// Splits on `From ` lines. Quoted `>From ` lines lose one `>`. Labels come
/// from an optional `<file>.labels` sidecar with one label per message.
fn load_mbox(path: &Path) -> Result<Vec<RawEmail>, EmailError> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    let mut messages: Vec<Vec<u8>> = Vec::new();
    let mut current: Option<Vec<u8>> = None;

    for line in data.split_inclusive(|&b| b == b'\n') {
        if line.starts_with(b"From ") {
            if let Some(done) = current.take() {
                messages.push(done);
            }
            current = Some(Vec::new());
            continue;
        }
        match current.as_mut() {
            Some(buf) => {
                let quoted = line.iter().take_while(|&&b| b == b'>').count();
                if quoted > 0 && line[quoted..].starts_with(b"From ") {
                    buf.extend_from_slice(&line[1..]);
                } else {
                    buf.extend_from_slice(line);
                }
            }
            None if line.iter().all(u8::is_ascii_whitespace) => {}
            None => {
                return Err(EmailError::FormatMismatch(format!(
                    "{}: content before the first `From ` separator",
                    path.display()
                )))
            }
        }
    }
    if let Some(done) = current {
        messages.push(done);
    }
    if messages.is_empty() {
        return Err(EmailError::FormatMismatch(format!(
            "{}: no `From ` separator found",
            path.display()
        )));
    }

    let labels = read_sidecar(path, messages.len())?;
    let name = path
        .file_name()
        .map_or_else(|| "mbox".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(messages
        .into_iter()
        .enumerate()
        .map(|(i, bytes)| RawEmail::new(format!("{name}#{i}"), bytes, labels[i]))
        .collect())
}

fn read_sidecar(mbox: &Path, count: usize) -> Result<Vec<CorpusLabel>, EmailError> {
    let mut sidecar = mbox.as_os_str().to_owned();
    sidecar.push(".labels");
    let sidecar = PathBuf::from(sidecar);
    if !sidecar.exists() {
        return Ok(vec![CorpusLabel::Unlabeled; count]);
    }
    let text = std::fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            Label::from_str(l).map(CorpusLabel::from).map_err(|e| {
                EmailError::FormatMismatch(format!("{}: {e}", sidecar.display()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if labels.len() != count {
        return Err(EmailError::FormatMismatch(format!(
            "{} lists {} labels for {} messages",
            sidecar.display(),
            labels.len(),
            count
        )));
    }
    Ok(labels)
}

fn load_csv(path: &Path, columns: &CsvColumns) -> Result<Vec<RawEmail>, EmailError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let csv_err = |e: csv::Error| EmailError::FormatMismatch(format!("{}: {e}", path.display()));

    let header_index: HashMap<String, usize> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
        .collect();
    let find = |name: &Option<String>| {
        name.as_ref()
            .and_then(|n| header_index.get(&n.to_ascii_lowercase()).copied())
    };
    let body_idx = header_index
        .get(&columns.body.to_ascii_lowercase())
        .copied()
        .ok_or_else(|| {
            EmailError::FormatMismatch(format!(
                "{}: required column `{}` not found",
                path.display(),
                columns.body
            ))
        })?;
    let subject_idx = find(&columns.subject);
    let sender_idx = find(&columns.sender);
    let label_idx = find(&columns.label);

    let stem = path
        .file_name()
        .map_or_else(|| "csv".to_string(), |n| n.to_string_lossy().into_owned());
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let cell = |idx: Option<usize>| idx.and_then(|i| record.get(i)).unwrap_or("").trim();
        let label = match cell(label_idx) {
            "" => CorpusLabel::Unlabeled,
            raw => Label::from_str(raw).map(CorpusLabel::from).map_err(|e| {
                EmailError::FormatMismatch(format!("{} row {}: {e}", path.display(), row + 1))
            })?,
        };
        let mut builder = MessageBuilder::new();
        if !cell(sender_idx).is_empty() {
            builder = builder.header("From", cell(sender_idx));
        }
        builder = builder
            .header("Subject", cell(subject_idx))
            .body_text(cell(Some(body_idx)));
        out.push(RawEmail::new(
            format!("{stem}#{row}"),
            builder.build().into_bytes(),
            label,
        ));
    }
    Ok(out)
}
