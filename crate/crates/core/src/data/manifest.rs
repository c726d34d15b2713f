use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::VideoRecord;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 7] = [
    "video_id",
    "article_id",
    "interpreter_id",
    "fps",
    "n_frames",
    "pose_path",
    "sentence",
];

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file, &path.display().to_string())
}

/// Parses a tab-separated manifest. `source` names the input in errors.
pub fn parse_manifest(reader: impl Read, source: &str) -> Result<Vec<VideoRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };

    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{}`", MANIFEST_HEADER.join("\\t")),
        ));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let fps: f64 = row[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad fps `{}`", &row[3])))?;
        let n_frames: usize = row[4]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad n_frames `{}`", &row[4])))?;
        let rec = VideoRecord {
            video_id: row[0].to_string(),
            article_id: row[1].to_string(),
            interpreter_id: row[2].to_string(),
            fps,
            n_frames,
            pose_path: row[5].to_string(),
            sentence: row[6].to_string(),
        };
        rec.validate().map_err(|e| match e {
            Error::Validation(m) => parse_err(line, m),
            other => other,
        })?;
        if !seen.insert(rec.video_id.clone()) {
            return Err(Error::DuplicateId(rec.video_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[VideoRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(file, records).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_manifest(w: impl Write, records: &[VideoRecord]) -> std::io::Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(w);
    wtr.write_record(MANIFEST_HEADER)?;
    for r in records {
        wtr.write_record([
            r.video_id.as_str(),
            r.article_id.as_str(),
            r.interpreter_id.as_str(),
            &r.fps.to_string(),
            &r.n_frames.to_string(),
            r.pose_path.as_str(),
            r.sentence.as_str(),
        ])?;
    }
    wtr.flush()
}

/// Pose paths are relative to the manifest's directory unless absolute.
pub fn resolve_pose_path(manifest_path: impl AsRef<Path>, record: &VideoRecord) -> PathBuf {
    let p = Path::new(&record.pose_path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest_path
        .as_ref()
        .parent()
        .map(|d| d.join(p))
        .unwrap_or_else(|| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "video_id\tarticle_id\tinterpreter_id\tfps\tn_frames\tpose_path\tsentence\n";

    #[test]
    fn rows_in_file_order() {
        let text = format!(
            "{HEADER}v1\tA\ti1\t30\t100\tp/v1.fspz\tThe acid works.\n\
             v2\tA\ti1\t30\t50\tp/v2.fspz\t\"tab\there\"\n\
             v3\tB\ti2\t25.5\t10\tp/v3.fspz\tShort one\n"
        );
        let recs = parse_manifest(text.as_bytes(), "m.tsv").unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].video_id, "v1");
        assert_eq!(recs[1].sentence, "tab\there");
        assert_eq!(recs[2].fps, 25.5);
    }

    #[test]
    fn zero_fps_names_the_line() {
        let text = format!("{HEADER}v1\tA\ti\t30\t10\tp\ts\nv2\tA\ti\t0\t10\tp\ts\n");
        match parse_manifest(text.as_bytes(), "m.tsv").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{HEADER}v1\tA\ti\t30\t10\tp\ts\nv1\tB\ti\t30\t10\tp\ts\n");
        assert!(matches!(
            parse_manifest(text.as_bytes(), "m.tsv"),
            Err(Error::DuplicateId(id)) if id == "v1"
        ));
    }

    #[test]
    fn malformed_row_is_a_parse_error() {
        let text = format!("{HEADER}v1\tA\ti\tthirty\t10\tp\ts\n");
        assert!(matches!(
            parse_manifest(text.as_bytes(), "m.tsv"),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = format!("{HEADER}v1\tA\ti\n");
        assert!(matches!(parse_manifest(text.as_bytes(), "m.tsv"), Err(Error::Parse { .. })));
    }

    fn arb_record() -> impl Strategy<Value = VideoRecord> {
        (
            "[a-z0-9_]{1,8}",
            "[A-Z]{1,3}",
            "[a-z]{1,4}",
            0.5f64..120.0,
            1usize..5000,
            "[a-z/]{1,12}\\.fspz",
            "[A-Za-z][A-Za-z ,.'\t\"]{0,40}",
        )
            .prop_map(|(v, a, i, fps, n, p, s)| VideoRecord {
                video_id: v,
                article_id: a,
                interpreter_id: i,
                fps,
                n_frames: n,
                pose_path: p,
                sentence: s,
            })
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity(recs in proptest::collection::vec(arb_record(), 0..6)) {
            let mut recs = recs;
            for (i, r) in recs.iter_mut().enumerate() {
                r.video_id = format!("{}_{i}", r.video_id);
            }
            let mut buf = Vec::new();
            write_manifest(&mut buf, &recs).unwrap();
            let back = parse_manifest(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
