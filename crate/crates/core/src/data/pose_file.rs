//! `FSPZ` pose arrays: a 16-byte header (magic, version, frame count,
//! keypoint count, all little-endian u32 after the magic) followed by
//! `n_frames * 75 * 2` little-endian f32 coordinates.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::preprocess::{PoseSequence, N_KEYPOINTS};

pub const MAGIC: &[u8; 4] = b"FSPZ";
pub const VERSION: u32 = 1;

pub fn write_pose(w: &mut impl Write, seq: &PoseSequence) -> std::io::Result<()> {
    let n = seq.n_frames();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(N_KEYPOINTS as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(n * N_KEYPOINTS * 2 * 4);
    for v in seq.frames.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_pose(r: &mut impl Read) -> Result<PoseSequence> {
    let bad = |m: String| Error::Validation(format!("pose file: {m}"));
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| bad("truncated header".into()))?;
    if &header[0..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(bad(format!("unsupported version {}", word(4))));
    }
    let n = word(8) as usize;
    if word(12) as usize != N_KEYPOINTS {
        return Err(bad(format!("expected {} keypoints, found {}", N_KEYPOINTS, word(12))));
    }
    if n == 0 {
        return Err(bad("zero frames".into()));
    }
    let mut bytes = vec![0u8; n * N_KEYPOINTS * 2 * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| bad(format!("truncated data for {n} frames")))?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite coordinate".into()));
    }
    let frames = Array3::from_shape_vec((n, N_KEYPOINTS, 2), data).expect("shape checked");
    Ok(PoseSequence::new(frames))
}

pub fn save_pose(path: impl AsRef<Path>, seq: &PoseSequence) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write_pose(&mut f, seq).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_pose(path: impl AsRef<Path>) -> Result<PoseSequence> {
    let path = path.as_ref();
    let mut f = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    read_pose(&mut f)
}
