//! Dataset entries, the OCR sidecar, and report output.
//!
//! The dataset file is a JSON array of entries (a lone object is accepted):
//!
//! ```json
//! {"image_id": "img_001", "file_name": "img_001.jpg",
//!  "captions": [{"id": 1, "caption": "biển hiệu quán phở"}]}
//! ```
//!
//! OCR output lives in a separate JSON-lines sidecar, one token per line:
//!
//! ```json
//! {"image_id": "img_001", "text": "phở", "cx": 0.5, "cy": 0.2, "w": 0.1, "h": 0.05, "confidence": 0.93}
//! ```
//!
//! Boxes in pixels are accepted when the line also carries `image_width` and
//! `image_height`; they are normalized on ingestion. `recognition` and
//! `detection` feature vectors are optional number arrays.

mod report;

pub use report::{format_real, save_report, save_table, Cell, Report, ReportFormat, Table};

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::fusion::BoundingBox;

pub const MAX_CAPTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub id: u32,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrToken {
    pub text: String,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub recognition: Option<Vec<f64>>,
    pub detection: Option<Vec<f64>>,
}

impl OcrToken {
    pub fn new(text: &str, bbox: BoundingBox, confidence: f64) -> Self {
        OcrToken {
            text: text.to_string(),
            bbox,
            confidence,
            recognition: None,
            detection: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageRecord {
    pub image_id: String,
    pub file_name: String,
    pub captions: Vec<Caption>,
    pub ocr_tokens: Vec<OcrToken>,
}

impl ImageRecord {
    pub fn new(image_id: &str) -> Self {
        ImageRecord {
            image_id: image_id.to_string(),
            file_name: format!("{image_id}.jpg"),
            ..Default::default()
        }
    }

    /// Appends a caption numbered after the existing ones.
    pub fn with_caption(mut self, text: &str) -> Self {
        let id = self.captions.len() as u32 + 1;
        self.captions.push(Caption { id, caption: text.to_string() });
        self
    }

    pub fn with_ocr(mut self, token: OcrToken) -> Self {
        self.ocr_tokens.push(token);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Reject entries whose caption ids are not exactly 1..N with 1 ≤ N ≤ 5.
    /// When false the same problems are only logged.
    pub strict: bool,
}

#[derive(Serialize, Deserialize)]
struct RawEntry {
    image_id: String,
    file_name: String,
    captions: Vec<Caption>,
}

#[derive(Serialize, Deserialize)]
struct SidecarLine {
    image_id: String,
    text: String,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recognition: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detection: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_height: Option<f64>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), DatasetError> {
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(path: &Path, line_offset: usize, e: serde_json::Error) -> DatasetError {
    DatasetError::Parse {
        path: path.to_path_buf(),
        line: e.line() + line_offset,
        column: e.column(),
        message: e.to_string(),
    }
}

/// Checks the caption numbering of one entry.
pub fn check_captions(record: &ImageRecord) -> Result<(), DatasetError> {
    let violation = |message: String| DatasetError::CaptionCountViolation {
        image_id: record.image_id.clone(),
        message,
    };
    let n = record.captions.len();
    if n == 0 {
        return Err(violation("no captions".into()));
    }
    if n > MAX_CAPTIONS {
        return Err(violation(format!("{n} captions, at most {MAX_CAPTIONS} allowed")));
    }
    for (k, c) in record.captions.iter().enumerate() {
        if c.id as usize != k + 1 {
            return Err(violation(format!("caption at position {} has id {}", k + 1, c.id)));
        }
    }
    Ok(())
}

pub fn parse_dataset(text: &str, path: &Path, options: LoadOptions) -> Result<Vec<ImageRecord>, DatasetError> {
    let entries: Vec<RawEntry> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| json_error(path, 0, e))?
    } else {
        vec![serde_json::from_str(text).map_err(|e| json_error(path, 0, e))?]
    };
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.image_id.clone()) {
            return Err(DatasetError::DuplicateImageId(e.image_id));
        }
        let record = ImageRecord {
            image_id: e.image_id,
            file_name: e.file_name,
            captions: e.captions,
            ocr_tokens: Vec::new(),
        };
        if let Err(err) = check_captions(&record) {
            if options.strict {
                return Err(err);
            }
            log::warn!("{err}");
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path, options: LoadOptions) -> Result<Vec<ImageRecord>, DatasetError> {
    parse_dataset(&read(path)?, path, options)
}

/// Parses sidecar lines into `(image_id, token)` pairs in file order. Blank
/// lines are skipped.
pub fn parse_ocr_sidecar(text: &str, path: &Path) -> Result<Vec<(String, OcrToken)>, DatasetError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = k + 1;
        let raw: SidecarLine = serde_json::from_str(line).map_err(|e| json_error(path, k, e))?;
        let field_error = |message: String| DatasetError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            column: 1,
            message,
        };
        let (sx, sy) = match (raw.image_width, raw.image_height) {
            (None, None) => (1.0, 1.0),
            (Some(iw), Some(ih)) if iw > 0.0 && ih > 0.0 => (iw, ih),
            _ => {
                return Err(field_error(
                    "image_width and image_height must both be given and positive".into(),
                ))
            }
        };
        let bbox = BoundingBox::new(raw.cx / sx, raw.cy / sy, raw.w / sx, raw.h / sy)
            .map_err(|e| field_error(format!("bbox: {e}")))?;
        if !(0.0..=1.0).contains(&raw.confidence) {
            return Err(field_error(format!("confidence {} outside [0, 1]", raw.confidence)));
        }
        let token = OcrToken {
            text: raw.text,
            bbox,
            confidence: raw.confidence,
            recognition: raw.recognition,
            detection: raw.detection,
        };
        out.push((raw.image_id, token));
    }
    Ok(out)
}

/// Attaches sidecar tokens to their records. Tokens naming an unknown image
/// are dropped with a warning.
pub fn merge_ocr(records: &mut [ImageRecord], tokens: Vec<(String, OcrToken)>) {
    let index: HashMap<String, usize> = records
        .iter()
        .enumerate()
        .map(|(k, r)| (r.image_id.clone(), k))
        .collect();
    let mut dropped = 0usize;
    for (id, token) in tokens {
        match index.get(&id) {
            Some(&k) => records[k].ocr_tokens.push(token),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} OCR tokens refer to images absent from the dataset");
    }
}

/// Loads a dataset and, when given, merges its OCR sidecar.
pub fn load_with_ocr(
    dataset: &Path,
    sidecar: Option<&Path>,
    options: LoadOptions,
) -> Result<Vec<ImageRecord>, DatasetError> {
    let mut records = load_dataset(dataset, options)?;
    if let Some(p) = sidecar {
        let tokens = parse_ocr_sidecar(&read(p)?, p)?;
        merge_ocr(&mut records, tokens);
    }
    Ok(records)
}

pub fn dataset_to_json(records: &[ImageRecord]) -> String {
    let entries: Vec<RawEntry> = records
        .iter()
        .map(|r| RawEntry {
            image_id: r.image_id.clone(),
            file_name: r.file_name.clone(),
            captions: r.captions.clone(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("entries serialize");
    s.push('\n');
    s
}

pub fn ocr_to_jsonl(records: &[ImageRecord]) -> String {
    let mut s = String::new();
    for r in records {
        for t in &r.ocr_tokens {
            let line = SidecarLine {
                image_id: r.image_id.clone(),
                text: t.text.clone(),
                cx: t.bbox.cx,
                cy: t.bbox.cy,
                w: t.bbox.w,
                h: t.bbox.h,
                confidence: t.confidence,
                recognition: t.recognition.clone(),
                detection: t.detection.clone(),
                image_width: None,
                image_height: None,
            };
            s.push_str(&serde_json::to_string(&line).expect("sidecar line serializes"));
            s.push('\n');
        }
    }
    s
}

/// Writes the entries and, if a sidecar path is given, their OCR tokens.
pub fn save_dataset(records: &[ImageRecord], dataset: &Path, sidecar: Option<&Path>) -> Result<(), DatasetError> {
    write(dataset, &dataset_to_json(records))?;
    if let Some(p) = sidecar {
        write(p, &ocr_to_jsonl(records))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ENTRY: &str = r#"{
  "image_id": "img_1",
  "file_name": "img_1.jpg",
  "captions": [
    {"id": 1, "caption": "biển hiệu quán phở"},
    {"id": 2, "caption": "quán phở bên đường"},
    {"id": 3, "caption": "tấm biển màu đỏ"},
    {"id": 4, "caption": "một quán ăn nhỏ"},
    {"id": 5, "caption": "chữ phở trên biển"}
  ]
}"#;

    fn p() -> &'static Path {
        Path::new("mem.json")
    }

    #[test]
    fn single_entry_loads() {
        let r = parse_dataset(ENTRY, p(), LoadOptions { strict: true }).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].captions.len(), 5);
        assert_eq!(r[0].captions[2].caption, "tấm biển màu đỏ");
    }

    #[test]
    fn zero_captions_strict_vs_lenient() {
        let text = r#"[{"image_id": "a", "file_name": "a.jpg", "captions": []}]"#;
        assert!(matches!(
            parse_dataset(text, p(), LoadOptions { strict: true }),
            Err(DatasetError::CaptionCountViolation { .. })
        ));
        assert_eq!(parse_dataset(text, p(), LoadOptions::default()).unwrap().len(), 1);
    }

    #[test]
    fn caption_numbering_checked() {
        let r = ImageRecord::new("x").with_caption("a").with_caption("b");
        assert!(check_captions(&r).is_ok());
        let mut bad = r.clone();
        bad.captions[1].id = 7;
        assert!(check_captions(&bad).is_err());
        let mut six = ImageRecord::new("y");
        for _ in 0..6 {
            six = six.with_caption("c");
        }
        assert!(check_captions(&six).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("[{ENTRY}, {ENTRY}]");
        assert!(matches!(
            parse_dataset(&text, p(), LoadOptions::default()),
            Err(DatasetError::DuplicateImageId(id)) if id == "img_1"
        ));
    }

    #[test]
    fn parse_error_carries_position() {
        let text = "[\n  {\"image_id\": \"a\",\n   \"file_name\": 3}\n]";
        match parse_dataset(text, p(), LoadOptions::default()) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sidecar_pixels_are_normalized() {
        let text = concat!(
            r#"{"image_id":"a","text":"phở","cx":50,"cy":20,"w":10,"h":4,"confidence":0.9,"image_width":100,"image_height":40}"#,
            "\n\n",
            r#"{"image_id":"a","text":"ngon","cx":0.2,"cy":0.3,"w":0.1,"h":0.1,"confidence":0.5}"#,
        );
        let toks = parse_ocr_sidecar(text, p()).unwrap();
        assert_eq!(toks.len(), 2);
        let b = toks[0].1.bbox;
        assert_eq!((b.cx, b.cy, b.w, b.h), (0.5, 0.5, 0.1, 0.1));
    }

    #[test]
    fn sidecar_rejects_bad_fields_with_line() {
        let text = concat!(
            r#"{"image_id":"a","text":"x","cx":0,"cy":0,"w":0.1,"h":0.1,"confidence":0.5}"#,
            "\n",
            r#"{"image_id":"a","text":"y","cx":0,"cy":0,"w":0.1,"h":0.1,"confidence":1.5}"#,
        );
        match parse_ocr_sidecar(text, p()) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let zero_w = r#"{"image_id":"a","text":"x","cx":0,"cy":0,"w":0,"h":0.1,"confidence":0.5}"#;
        assert!(parse_ocr_sidecar(zero_w, p()).is_err());
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut tok = OcrToken::new("phở", BoundingBox::new(0.5, 0.25, 0.125, 0.0625).unwrap(), 0.75);
        tok.recognition = Some(vec![0.5, -1.25]);
        let records = vec![
            ImageRecord::new("a").with_caption("quán phở").with_ocr(tok),
            ImageRecord::new("b").with_caption("cửa hàng").with_caption("biển hiệu"),
        ];
        let ds = dir.path().join("ds.json");
        let sc = dir.path().join("ocr.jsonl");
        save_dataset(&records, &ds, Some(&sc)).unwrap();
        let back = load_with_ocr(&ds, Some(&sc), LoadOptions { strict: true }).unwrap();
        assert_eq!(back, records);
    }
}
