//! Reading and writing `kvtrace-v1` files.
//!
//! Line 1 is a JSON header, every following non-empty line one step. Input
//! may be gzip-compressed; this is detected from the magic bytes, not the
//! file name. Output is compressed when the path ends in `.gz`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use kvevict_core::trace::FORMAT_TAG;
use kvevict_core::{Planted, StepRecord, Trace, TraceHeader};
use serde::{Deserialize, Serialize};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Open { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("empty trace: no header line")]
    Empty,
    #[error("unsupported trace format {0:?}, expected \"kvtrace-v1\"")]
    Format(String),
    #[error(transparent)]
    Invalid(#[from] kvevict_core::Error),
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    num_heads: usize,
    head_dim: Option<usize>,
    prompt_len: usize,
    provenance: String,
    planted: Option<Planted>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt_values: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    t: usize,
    attn: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Vec<Vec<f64>>>,
}

/// Reads and validates a trace. Rows summing to 1 within the read tolerance
/// are renormalized; anything further off is rejected.
pub fn read_trace<R: Read>(source: R) -> Result<Trace, TraceIoError> {
    let mut buffered = BufReader::new(source);
    let gz = buffered.fill_buf()?.starts_with(&GZIP_MAGIC);
    if gz {
        read_lines(BufReader::new(MultiGzDecoder::new(buffered)))
    } else {
        read_lines(buffered)
    }
}

fn read_lines<R: BufRead>(reader: R) -> Result<Trace, TraceIoError> {
    let mut lines = reader.lines().enumerate();
    let header: HeaderLine = loop {
        match lines.next() {
            None => return Err(TraceIoError::Empty),
            Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
            Some((n, line)) => {
                break serde_json::from_str(&line?)
                    .map_err(|source| TraceIoError::Json { line: n + 1, source })?
            }
        }
    };
    if header.format != FORMAT_TAG {
        return Err(TraceIoError::Format(header.format));
    }
    let mut steps = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: StepLine =
            serde_json::from_str(&line).map_err(|source| TraceIoError::Json { line: n + 1, source })?;
        steps.push(StepRecord {
            t: s.t,
            attn: s.attn,
            value: s.value,
        });
    }
    let mut trace = Trace {
        header: TraceHeader {
            num_heads: header.num_heads,
            head_dim: header.head_dim,
            prompt_len: header.prompt_len,
            provenance: header.provenance,
            planted: header.planted,
            prompt_values: header.prompt_values,
        },
        steps,
    };
    trace.validate_and_normalize()?;
    Ok(trace)
}

/// Writes `trace` uncompressed. Reals use the shortest representation that
/// parses back to the same `f64`.
pub fn write_trace<W: Write>(trace: &Trace, sink: W) -> Result<(), TraceIoError> {
    let mut w = BufWriter::new(sink);
    let h = &trace.header;
    let header = HeaderLine {
        format: FORMAT_TAG.to_string(),
        num_heads: h.num_heads,
        head_dim: h.head_dim,
        prompt_len: h.prompt_len,
        provenance: h.provenance.clone(),
        planted: h.planted.clone(),
        prompt_values: h.prompt_values.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(io::Error::from)?;
    w.write_all(b"\n")?;
    for s in &trace.steps {
        #[derive(Serialize)]
        struct StepRef<'a> {
            t: usize,
            attn: &'a [Vec<f64>],
            #[serde(skip_serializing_if = "Option::is_none")]
            value: Option<&'a [Vec<f64>]>,
        }
        let line = StepRef {
            t: s.t,
            attn: &s.attn,
            value: s.value.as_deref(),
        };
        serde_json::to_writer(&mut w, &line).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Trace, TraceIoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TraceIoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_trace(file)
}

/// Writes `trace` to `path`, gzip-compressed when the name ends in `.gz`.
pub fn write_trace_file(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TraceIoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| TraceIoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        write_trace(trace, &mut enc)?;
        enc.finish()?;
        Ok(())
    } else {
        write_trace(trace, file)
    }
}
