//! Binary model files.
//!
//! Layout: `SPDMODEL` magic, `u32` version, `u64` payload length, payload,
//! then the SHA-256 of everything before it. All integers and floats are
//! little-endian; floats are stored bit-exact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Preprocess, RecognitionModel};
use crate::network::{ConvKernel, FcLayer, FeatureVector, Gallery, NetworkParams};
use crate::online::{DetectorMode, DetectorModel};
use crate::skeleton::{Convention, JointLayout, LayoutKind, PartitionScheme};
use crate::spd::StiefelWeight;

pub const MAGIC: &[u8; 8] = b"SPDMODEL";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Classifier(RecognitionModel),
    Detector(DetectorModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Classifier(_) => "classifier",
            SavedModel::Detector(_) => "detector",
        }
    }

    pub fn into_classifier(self) -> Result<RecognitionModel> {
        match self {
            SavedModel::Classifier(m) => Ok(m),
            SavedModel::Detector(_) => Err(Error::InvalidArgument("expected a classifier model, found a detector".into())),
        }
    }

    pub fn into_detector(self) -> Result<DetectorModel> {
        match self {
            SavedModel::Detector(d) => Ok(d),
            SavedModel::Classifier(_) => Err(Error::InvalidArgument("expected a detector model, found a classifier".into())),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    /// Row-major entries after the shape.
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.len(m.nrows());
        self.len(m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Parse(format!("model payload: {}", msg.into()))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() {
            return Err(corrupt("unexpected end of data"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("bad boolean byte {b}"))),
        }
    }
    /// A count whose items take at least `item_size` bytes each, checked
    /// against the bytes left so corrupt counts cannot trigger huge
    /// allocations.
    fn count(&mut self, item_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| corrupt("count overflows"))?;
        if n.checked_mul(item_size.max(1)).is_none_or(|bytes| bytes > self.buf.len()) {
            return Err(corrupt(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8"))
    }
    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.count(0)?;
        let cols = self.count(0)?;
        let n = rows.checked_mul(cols).filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.buf.len())).ok_or_else(|| corrupt("matrix larger than remaining data"))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

fn kind_code(k: LayoutKind) -> u8 {
    match k {
        LayoutKind::Hand => 0,
        LayoutKind::Body => 1,
        LayoutKind::Custom => 2,
    }
}

fn convention_code(c: Option<Convention>) -> u8 {
    match c {
        None => 0,
        Some(Convention::Hand22) => 1,
        Some(Convention::Body25) => 2,
        Some(Convention::Body20) => 3,
    }
}

fn write_recognition(w: &mut Writer, m: &RecognitionModel) {
    let l = &m.layout;
    w.len(l.joint_count);
    w.u8(kind_code(l.kind));
    w.u8(convention_code(l.convention));
    w.len(l.root);
    match &l.names {
        None => w.u8(0),
        Some(names) => {
            w.u8(1);
            w.len(names.len());
            names.iter().for_each(|n| w.str(n));
        }
    }

    w.len(m.scheme.parts.len());
    for part in &m.scheme.parts {
        w.len(part.len());
        part.iter().for_each(|&j| w.len(j));
    }

    w.len(m.preprocess.frames);
    w.u8(m.preprocess.derivative as u8);

    let p = &m.params;
    w.f64(p.epsilon);
    w.f64(p.margin);
    w.len(p.conv.len());
    for k in &p.conv {
        k.weights.iter().flatten().for_each(|&v| w.f64(v));
        w.f64(k.bias);
    }
    w.len(p.stiefel.len());
    p.stiefel.iter().for_each(|s| w.matrix(s.as_matrix()));
    w.matrix(&p.fc.weight);
    w.len(p.fc.bias.len());
    p.fc.bias.iter().for_each(|&v| w.f64(v));

    w.len(m.gallery.len());
    w.len(m.gallery.dim().unwrap_or(0));
    for (f, label) in &m.gallery.entries {
        w.u32(*label);
        f.0.iter().for_each(|&v| w.f64(v));
    }

    w.len(m.class_names.len());
    m.class_names.iter().for_each(|n| w.str(n));
}

fn read_recognition(r: &mut Reader) -> Result<RecognitionModel> {
    let joint_count = r.count(0)?;
    let kind = match r.u8()? {
        0 => LayoutKind::Hand,
        1 => LayoutKind::Body,
        2 => LayoutKind::Custom,
        b => return Err(corrupt(format!("unknown layout kind {b}"))),
    };
    let convention = match r.u8()? {
        0 => None,
        1 => Some(Convention::Hand22),
        2 => Some(Convention::Body25),
        3 => Some(Convention::Body20),
        b => return Err(corrupt(format!("unknown convention {b}"))),
    };
    let root = r.count(0)?;
    let names = if r.bool()? {
        let n = r.count(8)?;
        Some((0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let layout = JointLayout {
        joint_count,
        names,
        kind,
        convention,
        root,
    };

    let parts = r.count(8)?;
    let mut scheme = Vec::with_capacity(parts);
    for _ in 0..parts {
        let n = r.count(8)?;
        scheme.push((0..n).map(|_| r.count(0)).collect::<Result<Vec<_>>>()?);
    }
    let scheme = PartitionScheme { parts: scheme };

    let preprocess = Preprocess {
        frames: r.count(0)?,
        derivative: r.bool()?,
    };

    let epsilon = r.f64()?;
    let margin = r.f64()?;
    let n_conv = r.count(80)?;
    let mut conv = Vec::with_capacity(n_conv);
    for _ in 0..n_conv {
        let mut k = ConvKernel::default();
        for v in k.weights.iter_mut().flatten() {
            *v = r.f64()?;
        }
        k.bias = r.f64()?;
        conv.push(k);
    }
    let n_stiefel = r.count(16)?;
    let stiefel = (0..n_stiefel)
        .map(|_| StiefelWeight::new(r.matrix()?).map_err(|e| corrupt(format!("stiefel weight: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let weight = r.matrix()?;
    let n_bias = r.count(8)?;
    let bias = DVector::from_vec((0..n_bias).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
    let params = NetworkParams {
        conv,
        stiefel,
        fc: FcLayer { weight, bias },
        epsilon,
        margin,
    };

    let entries = r.count(4)?;
    let dim = r.count(0)?;
    if entries > 0 && dim.checked_mul(8).is_none_or(|b| b > r.buf.len()) {
        return Err(corrupt("gallery dimension exceeds remaining data"));
    }
    let mut gallery = Vec::with_capacity(entries);
    for _ in 0..entries {
        let label = r.u32()?;
        let f = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        gallery.push((FeatureVector(f), label));
    }
    let gallery = Gallery::new(gallery)?;

    let n_names = r.count(8)?;
    let class_names = (0..n_names).map(|_| r.str()).collect::<Result<Vec<_>>>()?;

    let model = RecognitionModel {
        layout,
        scheme,
        preprocess,
        params,
        gallery,
        class_names,
    };
    model.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(model)
}

/// Payload bytes without framing.
fn encode_payload(model: &SavedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match model {
        SavedModel::Classifier(m) => {
            w.u8(0);
            write_recognition(&mut w, m);
        }
        SavedModel::Detector(d) => {
            w.u8(1);
            w.u8(match d.mode {
                DetectorMode::Binary => 0,
                DetectorMode::Multiclass => 1,
            });
            w.len(d.ws);
            write_recognition(&mut w, &d.model);
        }
    }
    w.0
}

fn decode_payload(buf: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { buf };
    let model = match r.u8()? {
        0 => SavedModel::Classifier(read_recognition(&mut r)?),
        1 => {
            let mode = match r.u8()? {
                0 => DetectorMode::Binary,
                1 => DetectorMode::Multiclass,
                b => return Err(corrupt(format!("unknown detector mode {b}"))),
            };
            let ws = r.count(0)?;
            let d = DetectorModel {
                mode,
                ws,
                model: read_recognition(&mut r)?,
            };
            d.validate().map_err(|e| corrupt(e.to_string()))?;
            SavedModel::Detector(d)
        }
        b => return Err(corrupt(format!("unknown model kind {b}"))),
    };
    if !r.buf.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(model)
}

pub fn encode_model(model: &SavedModel) -> Vec<u8> {
    let payload = encode_payload(model);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<SavedModel> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Parse("not a model file (bad magic)".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let body_end = usize::try_from(len).ok().and_then(|l| l.checked_add(HEADER_LEN));
    let Some(body_end) = body_end.filter(|&e| e.checked_add(CHECKSUM_LEN) == Some(bytes.len())) else {
        return Err(Error::Checksum);
    };
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest.as_slice() != &bytes[body_end..] {
        return Err(Error::Checksum);
    }
    decode_payload(&bytes[HEADER_LEN..body_end])
}

pub fn save_model(path: impl AsRef<Path>, model: &SavedModel) -> Result<()> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    decode_model(&std::fs::read(path)?)
}
