//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FSHD" | version u32 | kind u32 | count u32
//! count × ( name_len u32 | name utf-8 | dtype u8 | ndim u32 | ndim × dim u32 )
//! count × raw parameter payload in the manifest dtype
//! crc32 u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{ClassifierModel, Module, UNet};
use crate::error::{Error, Result};
use crate::tensor::{DType, Real};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSHD";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Encoder,
    Classifier,
    Reconstructor,
}

impl ModelKind {
    fn tag(self) -> u32 {
        match self {
            ModelKind::Encoder => 1,
            ModelKind::Classifier => 2,
            ModelKind::Reconstructor => 3,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Encoder),
            2 => Some(ModelKind::Classifier),
            3 => Some(ModelKind::Reconstructor),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Named parameter tensors of one model plus its kind tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    kind: ModelKind,
    entries: Vec<Entry>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Corrupt(format!(
                "truncated at byte {} (wanted {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

impl Checkpoint {
    pub fn from_module<T: Real, M: Module<T>>(kind: ModelKind, model: &M) -> Self {
        let entries = model
            .parameters()
            .into_iter()
            .map(|(name, t)| Entry {
                name,
                dtype: T::DTYPE,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        Self { kind, entries }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    fn shape_of(&self, name: &str) -> Result<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.shape.as_slice())
            .ok_or_else(|| Error::Corrupt(format!("checkpoint has no tensor named {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.tag());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for e in &self.entries {
            match e.dtype {
                DType::F32 => e.data.iter().for_each(|&x| (x as f32).write_le(&mut out)),
                DType::F64 => e.data.iter().for_each(|&x| x.write_le(&mut out)),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("bad magic, expected \"FSHD\"".into()));
        }
        let mut r = Reader { buf: bytes, pos: 4 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if bytes.len() < 16 {
            return Err(Error::Corrupt("file too short".into()));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Corrupt(format!(
                "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let kind = ModelKind::from_tag(r.u32()?)
            .ok_or_else(|| Error::Corrupt("unknown model kind tag".into()))?;
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Corrupt("tensor name is not utf-8".into()))?
                .to_owned();
            let dtype = DType::from_tag(r.u8()?)
                .ok_or_else(|| Error::Corrupt(format!("unknown dtype for {name}")))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            manifest.push((name, dtype, shape));
        }
        let mut entries = Vec::with_capacity(manifest.len());
        for (name, dtype, shape) in manifest {
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * dtype.size())?;
            let data = match dtype {
                DType::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
                DType::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
            };
            entries.push(Entry {
                name,
                dtype,
                shape,
                data,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after payload",
                body.len() - r.pos
            )));
        }
        Ok(Self { kind, entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Copies the stored tensors into `model`, checking names and shapes.
    pub fn load_into<T: Real, M: Module<T>>(&self, model: &mut M) -> Result<()> {
        let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.entries.len() {
            return Err(Error::Corrupt(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.entries.len(),
                names.len()
            )));
        }
        for ((name, p), e) in names.iter().zip(model.parameters_mut()).zip(&self.entries) {
            if *name != e.name || p.shape() != e.shape.as_slice() {
                return Err(Error::Corrupt(format!(
                    "tensor {} {:?} does not match model tensor {name} {:?}",
                    e.name,
                    e.shape,
                    p.shape()
                )));
            }
            for (dst, &src) in p.data_mut().iter_mut().zip(&e.data) {
                *dst = T::of(src);
            }
        }
        Ok(())
    }

    pub fn to_unet<T: Real>(&self) -> Result<UNet<T>> {
        if self.kind == ModelKind::Classifier {
            return Err(Error::Corrupt("checkpoint holds a classifier, not a U-Net".into()));
        }
        let s = self.shape_of("down1.0.weight")?;
        let mut m = UNet::new(s[1], s[0]);
        self.load_into(&mut m)?;
        Ok(m)
    }

    pub fn to_classifier<T: Real>(&self) -> Result<ClassifierModel<T>> {
        if self.kind != ModelKind::Classifier {
            return Err(Error::Corrupt("checkpoint does not hold a classifier".into()));
        }
        let mut widths = [0; 4];
        for (i, w) in widths.iter_mut().enumerate() {
            *w = self.shape_of(&format!("block{i}.weight"))?[0];
        }
        let in_c = self.shape_of("block0.weight")?[1];
        let classes = self.shape_of("head.weight")?[0];
        let mut m = ClassifierModel::with_widths(in_c, widths, classes);
        self.load_into(&mut m)?;
        Ok(m)
    }
}

