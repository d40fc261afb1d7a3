//! Versioned binary checkpoints of a [`TrainState`].
//!
//! Layout (little-endian): 8-byte magic, `u32` version, the canonical
//! training configuration as text, the per-sample input shape, the epoch
//! counter, all model tensors, every optimizer state, the per-epoch records
//! and a closing marker. Floats are stored as raw bits, so a load
//! reproduces every tensor exactly.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use genksc_core::geometry::ClusterCodes;
use genksc_core::objective::Model;
use genksc_core::optim::{AdamState, StiefelState};
use genksc_core::train::{EpochRecord, TrainState};
use genksc_core::Tensor;

use crate::config::{train_config_from_text, train_config_to_text};
use crate::FormatError;

pub const MAGIC: &[u8; 8] = b"GENKSCCK";
pub const VERSION: u32 = 1;
const END: &[u8; 4] = b"END.";

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.write_u32::<LE>(v).expect("vec write");
    }
    fn u64(&mut self, v: u64) {
        self.0.write_u64::<LE>(v).expect("vec write");
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.ndim() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
    fn tensors(&mut self, ts: &[Tensor]) {
        self.u32(ts.len() as u32);
        for t in ts {
            self.tensor(t);
        }
    }
}

struct Reader<'a>(Cursor<&'a [u8]>);

fn truncated() -> FormatError {
    FormatError::Truncated("checkpoint".into())
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32, FormatError> {
        self.0.read_u32::<LE>().map_err(|_| truncated())
    }
    fn u64(&mut self) -> Result<u64, FormatError> {
        self.0.read_u64::<LE>().map_err(|_| truncated())
    }
    fn usize(&mut self) -> Result<usize, FormatError> {
        usize::try_from(self.u64()?).map_err(|_| FormatError::Invalid("checkpoint count overflows".into()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn remaining(&self) -> usize {
        self.0.get_ref().len() - self.0.position() as usize
    }
    fn take(&mut self, n: usize) -> Result<Vec<u8>, FormatError> {
        if n > self.remaining() {
            return Err(truncated());
        }
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b).map_err(|_| truncated())?;
        Ok(b)
    }
    fn bytes(&mut self) -> Result<Vec<u8>, FormatError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn tensor(&mut self) -> Result<Tensor, FormatError> {
        let ndim = self.u32()? as usize;
        let shape = (0..ndim).map(|_| self.usize()).collect::<Result<Vec<_>, _>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(truncated)?;
        if len.saturating_mul(8) > self.remaining() {
            return Err(truncated());
        }
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Ok(Tensor::new(&shape, data)?)
    }
    fn tensors(&mut self) -> Result<Vec<Tensor>, FormatError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.tensor()).collect()
    }
}

pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.bytes(train_config_to_text(&state.config).as_bytes());
    let shape = state.model.input_shape();
    w.u32(shape.len() as u32);
    for &d in shape {
        w.u64(d as u64);
    }
    w.u64(state.epoch as u64);

    let m = &state.model;
    w.tensors(&m.encoder_params);
    w.tensors(&m.decoder_params);
    w.tensor(&m.projection);
    w.tensor(m.codes.matrix());
    w.tensor(&m.center);
    w.tensor(&Tensor::vector(m.anchors.clone()));

    for opts in [&state.encoder_opt, &state.decoder_opt] {
        w.u32(opts.len() as u32);
        for o in opts {
            w.tensor(&o.m);
            w.tensor(&o.v);
            w.u64(o.t);
        }
    }
    let p = &state.projection_opt;
    w.tensor(&p.momentum);
    w.f64(p.second_moment);
    w.u64(p.t);
    w.u64(p.reorthonormalizations);

    w.u32(state.records.len() as u32);
    for r in &state.records {
        w.u64(r.epoch as u64);
        for v in [r.variance, r.regularizer, r.reconstruction, r.cluster, r.total, r.cluster_weight] {
            w.f64(v);
        }
        w.u64(r.batches as u64);
        w.u64(r.clamped as u64);
        w.f64(r.orthonormality);
    }
    w.0.extend_from_slice(END);
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<TrainState, FormatError> {
    let mut r = Reader(Cursor::new(bytes));
    let magic = r.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(FormatError::Invalid("not a genksc checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version {
            found: version,
            supported: VERSION,
        });
    }
    let text = String::from_utf8(r.bytes()?).map_err(|_| FormatError::Invalid("checkpoint config is not UTF-8".into()))?;
    let config = train_config_from_text(&text)?;
    let ndim = r.u32()? as usize;
    let shape = (0..ndim).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
    let epoch = r.usize()?;

    let encoder_params = r.tensors()?;
    let decoder_params = r.tensors()?;
    let projection = r.tensor()?;
    let codes = ClusterCodes::from_matrix(r.tensor()?)?;
    let center = r.tensor()?;
    let anchors = r.tensor()?.into_data();
    let (encoder, decoder) = config.arch.build(&shape, config.feature_dim, config.leaky_slope, config.bounded_output)?;
    let model = Model::from_parts(encoder, decoder, encoder_params, decoder_params, projection, codes, center, anchors)?;

    let mut adam = |params: &[Tensor]| -> Result<Vec<AdamState>, FormatError> {
        let n = r.u32()? as usize;
        if n != params.len() {
            return Err(FormatError::Invalid(format!("{n} optimizer states for {} parameters", params.len())));
        }
        params
            .iter()
            .map(|p| {
                let (m, v, t) = (r.tensor()?, r.tensor()?, r.u64()?);
                if m.shape() != p.shape() || v.shape() != p.shape() {
                    return Err(FormatError::Invalid("optimizer state shape differs from its parameter".into()));
                }
                Ok(AdamState { m, v, t, config: config.adam })
            })
            .collect()
    };
    let encoder_opt = adam(&model.encoder_params)?;
    let decoder_opt = adam(&model.decoder_params)?;
    let momentum = r.tensor()?;
    if momentum.shape() != model.projection.shape() {
        return Err(FormatError::Invalid("Stiefel momentum shape differs from U".into()));
    }
    let projection_opt = StiefelState {
        momentum,
        second_moment: r.f64()?,
        t: r.u64()?,
        config: config.stiefel,
        reorthonormalizations: r.u64()?,
    };

    let n = r.u32()? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let epoch = r.usize()?;
        let mut v = [0.0; 6];
        for x in &mut v {
            *x = r.f64()?;
        }
        records.push(EpochRecord {
            epoch,
            variance: v[0],
            regularizer: v[1],
            reconstruction: v[2],
            cluster: v[3],
            total: v[4],
            cluster_weight: v[5],
            batches: r.usize()?,
            clamped: r.usize()?,
            orthonormality: r.f64()?,
        });
    }
    if r.take(END.len())? != END || r.remaining() != 0 {
        return Err(FormatError::Invalid("checkpoint has a bad trailer".into()));
    }
    Ok(TrainState {
        config,
        model,
        encoder_opt,
        decoder_opt,
        projection_opt,
        epoch,
        records,
    })
}

pub fn save(state: &TrainState, path: &Path) -> Result<(), FormatError> {
    fs::write(path, encode(state)).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<TrainState, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
