use kvevict::{read_trace, read_trace_file, write_trace, write_trace_file, TraceIoError};
use kvevict_core::{generate, Error, PlantSpec, StepRecord, Trace, TraceHeader};
use proptest::prelude::*;

fn roundtrip(trace: &Trace) -> Trace {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).unwrap();
    read_trace(buf.as_slice()).unwrap()
}

fn assert_close(a: &Trace, b: &Trace) {
    assert_eq!(a.header.num_heads, b.header.num_heads);
    assert_eq!(a.header.head_dim, b.header.head_dim);
    assert_eq!(a.header.prompt_len, b.header.prompt_len);
    assert_eq!(a.header.provenance, b.header.provenance);
    assert_eq!(a.header.planted, b.header.planted);
    assert_eq!(a.steps.len(), b.steps.len());
    let reals = |t: &Trace| -> Vec<f64> {
        let mut v: Vec<f64> = t.steps.iter().flat_map(|s| s.attn.iter().flatten().copied()).collect();
        v.extend(t.steps.iter().flat_map(|s| s.value.iter().flatten().flatten().copied()));
        v.extend(t.header.prompt_values.iter().flatten().flatten().flatten().copied());
        v
    };
    let (ra, rb) = (reals(a), reals(b));
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
    }
    for (sa, sb) in a.steps.iter().zip(&b.steps) {
        assert_eq!(sa.t, sb.t);
    }
}

fn tiny_header() -> TraceHeader {
    TraceHeader {
        num_heads: 1,
        prompt_len: 2,
        provenance: "hand".into(),
        ..Default::default()
    }
}

fn tiny() -> Trace {
    Trace {
        header: tiny_header(),
        steps: vec![
            StepRecord { t: 2, attn: vec![vec![0.2, 0.3, 0.5]], value: None },
            StepRecord { t: 3, attn: vec![vec![0.25; 4]], value: None },
            StepRecord { t: 4, attn: vec![vec![0.2; 5]], value: None },
        ],
    }
}

#[test]
fn hand_written_trace_roundtrips() {
    let t = tiny();
    assert_eq!(roundtrip(&t), t);
}

#[test]
fn header_only_trace() {
    let t = Trace { header: tiny_header(), steps: vec![] };
    let mut buf = Vec::new();
    write_trace(&t, &mut buf).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
    assert_eq!(read_trace(buf.as_slice()).unwrap(), t);
}

#[test]
fn header_line_layout() {
    let mut buf = Vec::new();
    write_trace(&tiny(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["format"], "kvtrace-v1");
    assert_eq!(header["num_heads"], 1);
    assert!(header["head_dim"].is_null());
    assert!(header["planted"].is_null());
    let step: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(step["t"], 2);
    assert!(step.get("value").is_none());
}

#[test]
fn gzip_is_detected_by_content() {
    let trace = generate(&PlantSpec {
        num_tokens: 120,
        prompt_len: 8,
        recurring: 5,
        period_min: 3,
        period_max: 10,
        head_dim: Some(4),
        ..PlantSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let gz = dir.path().join("t.jsonl.gz");
    write_trace_file(&trace, &gz).unwrap();
    let bytes = std::fs::read(&gz).unwrap();
    assert_eq!(&bytes[..2], &[0x1f, 0x8b]);
    // Renamed without the suffix it still reads.
    let plain_name = dir.path().join("renamed.jsonl");
    std::fs::rename(&gz, &plain_name).unwrap();
    assert_eq!(read_trace_file(&plain_name).unwrap(), trace);
}

fn corrupt(line: usize, json: &str) -> Result<Trace, TraceIoError> {
    let mut buf = Vec::new();
    write_trace(&tiny(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[line] = json.to_string();
    read_trace(lines.join("\n").as_bytes())
}

#[test]
fn read_errors() {
    let e = corrupt(1, r#"{"t":2,"attn":[[0.5,0.5]]}"#).unwrap_err();
    assert!(matches!(e, TraceIoError::Invalid(Error::RowLength { .. })), "{e}");
    let e = corrupt(1, r#"{"t":2,"attn":[[0.2,0.2,0.1]]}"#).unwrap_err();
    assert!(matches!(e, TraceIoError::Invalid(Error::Normalization { .. })), "{e}");
    let e = corrupt(1, r#"{"t":7,"attn":[[0.2,0.3,0.5]]}"#).unwrap_err();
    assert!(matches!(e, TraceIoError::Invalid(Error::StepOrder { .. })), "{e}");
    let e = corrupt(1, r#"{"t":2,"attn":[[0.2,0.3,0.5]],"value":[[1.0]]}"#).unwrap_err();
    assert!(matches!(e, TraceIoError::Invalid(Error::Values { .. })), "{e}");
    let e = corrupt(0, r#"{"format":"kvtrace-v2","num_heads":1,"head_dim":null,"prompt_len":2,"provenance":"","planted":null}"#).unwrap_err();
    assert!(matches!(e, TraceIoError::Format(_)), "{e}");
    let e = corrupt(2, "{not json").unwrap_err();
    assert!(matches!(e, TraceIoError::Json { line: 3, .. }), "{e}");
    assert!(matches!(read_trace(&b""[..]), Err(TraceIoError::Empty)));
}

#[test]
fn near_normalized_rows_are_rescaled() {
    let t = corrupt(1, r#"{"t":2,"attn":[[0.2,0.3,0.5004]]}"#).unwrap();
    let sum: f64 = t.steps[0].attn[0].iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn values_without_prompt_values_fall_back_to_weights() {
    let mut buf = Vec::new();
    writeln!(
        buf,
        r#"{{"format":"kvtrace-v1","num_heads":1,"head_dim":2,"prompt_len":1,"provenance":"x","planted":null}}"#
    );
    writeln!(buf, r#"{{"t":1,"attn":[[0.4,0.6]],"value":[[1.0,0.0]]}}"#);
    let t = read_trace(buf.as_slice()).unwrap();
    assert!(!t.has_values());
}

use std::io::Write as _;
fn writeln_impl(buf: &mut Vec<u8>, s: std::fmt::Arguments) {
    buf.write_fmt(s).unwrap();
    buf.push(b'\n');
}
macro_rules! writeln {
    ($buf:expr, $($arg:tt)*) => { writeln_impl(&mut $buf, format_args!($($arg)*)) };
}
use writeln;

fn trace_strategy() -> impl Strategy<Value = Trace> {
    (1usize..4, 1usize..6, 0usize..12, prop::option::of(1usize..5), any::<u64>()).prop_map(
        |(heads, prompt_len, n_steps, head_dim, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vec_of = |d: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let prompt_values = head_dim.map(|d| {
                (0..heads)
                    .map(|_| (0..prompt_len).map(|_| vec_of(d, &mut rng)).collect())
                    .collect()
            });
            let steps = (prompt_len..prompt_len + n_steps)
                .map(|t| {
                    let attn = (0..heads)
                        .map(|_| {
                            let mut row: Vec<f64> = (0..=t).map(|_| rng.random::<f64>() + 1e-3).collect();
                            let z: f64 = row.iter().sum();
                            row.iter_mut().for_each(|a| *a /= z);
                            row
                        })
                        .collect();
                    let value = head_dim.map(|d| (0..heads).map(|_| vec_of(d, &mut rng)).collect());
                    StepRecord { t, attn, value }
                })
                .collect();
            Trace {
                header: TraceHeader {
                    num_heads: heads,
                    head_dim,
                    prompt_len,
                    provenance: format!("prop {seed}"),
                    planted: None,
                    prompt_values,
                },
                steps,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_traces_roundtrip(trace in trace_strategy()) {
        let back = roundtrip(&trace);
        assert_close(&trace, &back);
    }

    #[test]
    fn generated_traces_roundtrip(seed in any::<u64>(), values in any::<bool>()) {
        let trace = generate(&PlantSpec {
            num_tokens: 60,
            prompt_len: 4,
            num_heads: 2,
            head_dim: values.then_some(3),
            recurring: 3,
            period_min: 2,
            period_max: 8,
            seed,
            ..PlantSpec::default()
        }).unwrap();
        let back = roundtrip(&trace);
        assert_close(&trace, &back);
    }
}
