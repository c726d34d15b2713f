use std::io::{Read, Write};
use std::path::Path;

use super::FingerspellingAnnotation;
use crate::error::{Error, Result};

const HEADER: [&str; 5] = ["video_id", "annotator_id", "start_s", "end_s", "word"];

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<FingerspellingAnnotation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(file, &path.display().to_string())
}

pub fn parse_annotations(reader: impl Read, source: &str) -> Result<Vec<FingerspellingAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if i == 0 {
            if row.iter().collect::<Vec<_>>() != HEADER {
                return Err(parse_err(line, format!("expected header `{}`", HEADER.join(","))));
            }
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(parse_err(line, format!("expected 5 fields, found {}", row.len())));
        }
        let time = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| parse_err(line, format!("bad time `{s}`")))
        };
        let ann = FingerspellingAnnotation {
            video_id: row[0].to_string(),
            annotator_id: row[1].to_string(),
            start_s: time(&row[2])?,
            end_s: time(&row[3])?,
            word: row[4].to_string(),
        };
        ann.validate().map_err(|e| match e {
            Error::Validation(m) => parse_err(line, m),
            other => other,
        })?;
        out.push(ann);
    }
    Ok(out)
}

pub fn save_annotations(path: impl AsRef<Path>, anns: &[FingerspellingAnnotation]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_annotations(file, anns).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_annotations(w: impl Write, anns: &[FingerspellingAnnotation]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    for a in anns {
        wtr.write_record([
            a.video_id.as_str(),
            a.annotator_id.as_str(),
            &a.start_s.to_string(),
            &a.end_s.to_string(),
            a.word.as_str(),
        ])?;
    }
    wtr.flush()
}
