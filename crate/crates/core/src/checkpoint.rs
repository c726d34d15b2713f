//! `FSPV` parameter files: magic, version, tensor count, then named
//! tensors (name length u32, UTF-8 name, rank u32, dims u32 each,
//! little-endian f32 data). The architecture is recorded in `meta.*`
//! tensors so a file can be loaded without outside configuration.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detection::{DetectionModel, InputShape, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::pretrain::PretrainModel;
use crate::text_encoder::TextEncoderConfig;
use crate::video::{TemporalMixing, VideoEncoderConfig};

pub const MAGIC: &[u8; 4] = b"FSPV";
pub const VERSION: u32 = 1;

const KIND_PRETRAIN: f32 = 0.0;
const KIND_DETECTION: f32 = 1.0;

/// Named tensors in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: Vec<(String, ArrayD<f32>)>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&ArrayD<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.ndim() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let io = |e: std::io::Error| Error::Checkpoint(format!("truncated checkpoint: {e}"));
        let u32_ = |r: &mut dyn Read| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io)?;
            Ok(u32::from_le_bytes(b))
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not an FSPV checkpoint".into()));
        }
        let version = u32_(r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let count = u32_(r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = u32_(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8".into()))?;
            let rank = u32_(r)? as usize;
            let dims = (0..rank).map(|_| u32_(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw).map_err(io)?;
            let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, ArrayD::from_shape_vec(IxDyn(&dims), data).unwrap()));
        }
        Ok(TensorFile { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write(&mut f).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut std::io::BufReader::new(f))
    }
}

fn meta(cfg: &ModelConfig, kind: f32) -> Vec<(String, ArrayD<f32>)> {
    let v = |xs: Vec<f32>| ArrayD::from_shape_vec(IxDyn(&[xs.len()]), xs).unwrap();
    let mixing = match cfg.video.mixing {
        TemporalMixing::Full => 0.0,
        TemporalMixing::Depthwise => 1.0,
    };
    let t = cfg.text;
    vec![
        ("meta.kind".into(), v(vec![kind])),
        (
            "meta.video".into(),
            v(vec![cfg.video.blocks as f32, cfg.video.width as f32, cfg.video.kernel as f32, mixing]),
        ),
        (
            "meta.text".into(),
            v([t.layers, t.heads, t.width, t.ffn_width, t.max_len, t.buckets].map(|x| x as f32).to_vec()),
        ),
        ("meta.input".into(), v(vec![cfg.input.frames as f32, cfg.input.chars as f32])),
    ]
}

fn read_meta(file: &TensorFile) -> Result<(ModelConfig, f32)> {
    let field = |name: &str, len: usize| -> Result<Vec<usize>> {
        let t = file
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing `{name}`")))?;
        if t.len() != len {
            return Err(Error::Checkpoint(format!("`{name}` has {} entries, expected {len}", t.len())));
        }
        Ok(t.iter().map(|&x| x as usize).collect())
    };
    let kind = field("meta.kind", 1)?[0] as f32;
    let v = field("meta.video", 4)?;
    let t = field("meta.text", 6)?;
    let i = field("meta.input", 2)?;
    let cfg = ModelConfig {
        video: VideoEncoderConfig {
            blocks: v[0],
            width: v[1],
            kernel: v[2],
            mixing: if v[3] == 1 { TemporalMixing::Depthwise } else { TemporalMixing::Full },
        },
        text: TextEncoderConfig {
            layers: t[0],
            heads: t[1],
            width: t[2],
            ffn_width: t[3],
            max_len: t[4],
            buckets: t[5],
        },
        input: InputShape { frames: i[0], chars: i[1] },
    };
    cfg.validate().map_err(|e| Error::Checkpoint(format!("invalid architecture: {e}")))?;
    Ok((cfg, kind))
}

fn collect(params: &impl Params<f32>, prefix: &str) -> Vec<(String, ArrayD<f32>)> {
    let mut out = Vec::new();
    params.visit(prefix, &mut |name, a| out.push((name, a.to_owned())));
    out
}

/// Copies every tensor under `prefix` from `file`; shapes must match.
fn fill_from(params: &mut impl Params<f32>, prefix: &str, file: &TensorFile) -> Result<()> {
    let mut err = None;
    params.visit_mut(prefix, &mut |name, mut a| {
        if err.is_some() {
            return;
        }
        match file.get(&name) {
            Some(t) if t.shape() == a.shape() => a.assign(t),
            Some(t) => {
                err = Some(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    a.shape()
                )))
            }
            None => err = Some(Error::Checkpoint(format!("missing tensor `{name}`"))),
        }
    });
    err.map_or(Ok(()), Err)
}

pub fn detection_to_file(model: &DetectionModel<f32>) -> TensorFile {
    let mut tensors = meta(&model.config(), KIND_DETECTION);
    tensors.extend(collect(model, ""));
    TensorFile { tensors }
}

pub fn pretrain_to_file(model: &PretrainModel<f32>, input: InputShape) -> TensorFile {
    let cfg = ModelConfig {
        video: model.video.config(),
        text: model.text.config(),
        input,
    };
    let mut tensors = meta(&cfg, KIND_PRETRAIN);
    tensors.extend(collect(model, ""));
    TensorFile { tensors }
}

pub enum Checkpoint {
    Pretrain(PretrainModel<f32>, InputShape),
    Detection(DetectionModel<f32>),
}

pub fn from_file(file: &TensorFile) -> Result<Checkpoint> {
    let (cfg, kind) = read_meta(file)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    if kind == KIND_DETECTION {
        let mut m = DetectionModel::new(&mut rng, &cfg)?;
        fill_from(&mut m, "", file)?;
        Ok(Checkpoint::Detection(m))
    } else if kind == KIND_PRETRAIN {
        let mut m = PretrainModel::new(&mut rng, &cfg)?;
        fill_from(&mut m, "", file)?;
        Ok(Checkpoint::Pretrain(m, cfg.input))
    } else {
        Err(Error::Checkpoint(format!("unknown checkpoint kind {kind}")))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_file(&TensorFile::load(path)?)
}

/// A detection model, or one built from pretrained encoders with a fresh
/// fusion head drawn from `seed`.
pub fn load_detection(path: impl AsRef<Path>, seed: u64) -> Result<DetectionModel<f32>> {
    match load_checkpoint(path)? {
        Checkpoint::Detection(m) => Ok(m),
        Checkpoint::Pretrain(p, input) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(DetectionModel::from_encoders(&mut rng, p.video, p.text, input))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        let mut c = ModelConfig::desk();
        c.text.buckets = 50;
        c
    }

    #[test]
    fn detection_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DetectionModel::<f32>::new(&mut rng, &cfg()).unwrap();
        let mut buf = Vec::new();
        detection_to_file(&m).write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FSPV");
        let back = TensorFile::read(&mut buf.as_slice()).unwrap();
        match from_file(&back).unwrap() {
            Checkpoint::Detection(d) => assert_eq!(d, m),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn pretrain_round_trip_and_transfer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PretrainModel::<f32>::new(&mut rng, &cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.fspv");
        pretrain_to_file(&p, cfg().input).save(&path).unwrap();
        let d = load_detection(&path, 3).unwrap();
        assert_eq!(d.video, p.video);
        assert_eq!(d.text, p.text);
        assert_eq!(d.input, cfg().input);
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DetectionModel::<f32>::new(&mut rng, &cfg()).unwrap();
        let mut buf = Vec::new();
        detection_to_file(&m).write(&mut buf).unwrap();
        assert!(matches!(TensorFile::read(&mut &buf[..buf.len() - 3]), Err(Error::Checkpoint(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(TensorFile::read(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
        let mut file = detection_to_file(&m);
        file.tensors.retain(|(n, _)| n != "fusion.bias");
        assert!(matches!(from_file(&file), Err(Error::Checkpoint(_))));
    }
}
