//! Bit-exact checkpoint serialization ("NICECKP1").
//!
//! Single binary file with explicit section lengths: header (dimensions,
//! prior, architecture descriptor), parameter payload, optional whitening
//! record, optional optimizer state, and a UTF-8 echo of the resolved config.
//! All integers little-endian; all floats little-endian f64, written and read
//! without any conversion so round trips are bitwise. Writes go through a
//! temp file plus rename, so a crashed save never leaves a partial file at
//! the final path. The layout is documented field-by-field in
//! `docs/formats.md`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{CouplingLaw, CouplingLayer, FlowModel, Partition, ScalingLayer};
use crate::mlp::{DenseLayer, MlpParams};
use crate::prior::PriorKind;
use crate::tensor::Tensor;
use crate::train::adam::OptimizerState;
use crate::data::whitening::{WhiteningKind, WhiteningRecord};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NICECKP1";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLAG_OPTIMIZER: u8 = 1 << 0;
const FLAG_WHITENING: u8 = 1 << 1;

/// Everything needed to resume or reproduce evaluation bitwise.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FlowModel,
    pub prior: PriorKind,
    pub whitening: Option<WhiteningRecord>,
    pub optimizer: Option<OptimizerState>,
    pub step_counter: u64,
    pub config_echo: String,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        save(self, path)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        load(path)
    }
}

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { bytes: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn tensor_data(&mut self, t: &Tensor) {
        for v in t.data() {
            self.f64(*v);
        }
    }

    fn indices(&mut self, idx: &[usize]) {
        self.u32(idx.len() as u32);
        for &i in idx {
            self.u32(i as u32);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(len).ok_or_else(|| {
            Error::format(self.offset as u64, format!("{what}: length overflows"))
        })?;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.offset as u64,
                format!(
                    "truncated while reading {what}: need {len} bytes, {} left",
                    self.bytes.len() - self.offset
                ),
            ));
        }
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self, rows: usize, cols: usize, what: &str) -> Result<Tensor> {
        let raw = self.take(rows * cols * 8, what)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(rows, cols, data)
    }

    fn indices(&mut self, dim: usize, what: &str) -> Result<Vec<usize>> {
        let n = self.u32(what)? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let i = self.u32(what)? as usize;
            if i >= dim {
                return Err(Error::format(
                    self.offset as u64,
                    format!("{what}: index {i} out of range for dim {dim}"),
                ));
            }
            out.push(i);
        }
        Ok(out)
    }
}

fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let dim = model.dim();

    let mut header = Writer::new();
    header.u32(dim as u32);
    header.u8(match ckpt.prior {
        PriorKind::Logistic => 0,
        PriorKind::Gaussian => 1,
    });
    let mut flags = 0u8;
    if ckpt.optimizer.is_some() {
        flags |= FLAG_OPTIMIZER;
    }
    if ckpt.whitening.is_some() {
        flags |= FLAG_WHITENING;
    }
    header.u8(flags);
    header.u16(0);
    header.u64(ckpt.step_counter);
    header.u32(model.couplings.len() as u32);
    for c in &model.couplings {
        header.indices(&c.partition.unchanged);
        header.indices(&c.partition.transformed);
        header.u32(c.coupling_fn.layers.len() as u32);
        for layer in &c.coupling_fn.layers {
            header.u32(layer.in_dim() as u32);
            header.u32(layer.out_dim() as u32);
        }
    }

    let mut params = Writer::new();
    for c in &model.couplings {
        for layer in &c.coupling_fn.layers {
            params.tensor_data(&layer.weight);
            params.tensor_data(&layer.bias);
        }
    }
    params.tensor_data(&model.scaling.log_scale);

    let mut whitening = Writer::new();
    if let Some(rec) = &ckpt.whitening {
        whitening.u8(match rec.kind {
            WhiteningKind::None => 0,
            WhiteningKind::Zca => 1,
            WhiteningKind::Approximate => 2,
        });
        whitening.u32(rec.dim() as u32);
        whitening.tensor_data(&rec.transform);
        whitening.tensor_data(&rec.offset);
        whitening.f64(rec.log_abs_det);
    }

    let mut optimizer = Writer::new();
    if let Some(state) = &ckpt.optimizer {
        optimizer.u64(state.step);
        optimizer.f64(state.beta1_product);
        for t in &state.first_moment {
            optimizer.tensor_data(t);
        }
        for t in &state.second_moment {
            optimizer.tensor_data(t);
        }
    }

    let mut out = Writer::new();
    out.bytes.extend_from_slice(CHECKPOINT_MAGIC);
    out.u32(CHECKPOINT_VERSION);
    out.u64(header.bytes.len() as u64);
    out.bytes.extend_from_slice(&header.bytes);
    out.u64(params.bytes.len() as u64);
    out.bytes.extend_from_slice(&params.bytes);
    out.u64(whitening.bytes.len() as u64);
    out.bytes.extend_from_slice(&whitening.bytes);
    out.u64(optimizer.bytes.len() as u64);
    out.bytes.extend_from_slice(&optimizer.bytes);
    out.u64(ckpt.config_echo.len() as u64);
    out.bytes.extend_from_slice(ckpt.config_echo.as_bytes());
    out.bytes
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    let magic = r.take(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad magic, expected NICECKP1"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }

    // Header.
    let header_len = r.u64("header length")? as usize;
    let header_end = r.offset + header_len;
    let dim = r.u32("dim")? as usize;
    let prior = match r.u8("prior")? {
        0 => PriorKind::Logistic,
        1 => PriorKind::Gaussian,
        other => {
            return Err(Error::format(
                r.offset as u64 - 1,
                format!("unknown prior code {other}"),
            ))
        }
    };
    let flags = r.u8("flags")?;
    r.u16("reserved")?;
    let step_counter = r.u64("step counter")?;
    let n_couplings = r.u32("coupling count")? as usize;
    let mut arch = Vec::with_capacity(n_couplings);
    for _ in 0..n_couplings {
        let unchanged = r.indices(dim, "partition")?;
        let transformed = r.indices(dim, "partition")?;
        let n_layers = r.u32("layer count")? as usize;
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let i = r.u32("layer in")? as usize;
            let o = r.u32("layer out")? as usize;
            dims.push((i, o));
        }
        arch.push((unchanged, transformed, dims));
    }
    if r.offset != header_end {
        return Err(Error::format(
            r.offset as u64,
            format!("header length {header_len} does not match parsed size"),
        ));
    }

    // Parameters.
    let params_len = r.u64("params length")? as usize;
    let params_end = r.offset + params_len;
    let mut couplings = Vec::with_capacity(n_couplings);
    for (unchanged, transformed, dims) in arch {
        let mut layers = Vec::with_capacity(dims.len());
        for (in_dim, out_dim) in dims {
            let weight = r.tensor(out_dim, in_dim, "weights")?;
            let bias = r.tensor(out_dim, 1, "bias")?;
            layers.push(DenseLayer { weight, bias });
        }
        let partition = Partition::new(unchanged, transformed, dim)?;
        couplings.push(CouplingLayer::new(
            partition,
            MlpParams::new(layers)?,
            CouplingLaw::Additive,
        )?);
    }
    let log_scale = r.tensor(dim, 1, "log scale")?;
    if r.offset != params_end {
        return Err(Error::format(
            r.offset as u64,
            format!("params length {params_len} does not match parsed size"),
        ));
    }
    let model = FlowModel::new(couplings, ScalingLayer { log_scale })?;

    // Whitening.
    let whitening_len = r.u64("whitening length")? as usize;
    let whitening_end = r.offset + whitening_len;
    let whitening = if flags & FLAG_WHITENING != 0 {
        let kind = match r.u8("whitening kind")? {
            0 => WhiteningKind::None,
            1 => WhiteningKind::Zca,
            2 => WhiteningKind::Approximate,
            other => {
                return Err(Error::format(
                    r.offset as u64 - 1,
                    format!("unknown whitening kind {other}"),
                ))
            }
        };
        let wd = r.u32("whitening dim")? as usize;
        let transform = r.tensor(wd, wd, "whitening transform")?;
        let offset = r.tensor(wd, 1, "whitening offset")?;
        let log_abs_det = r.f64("whitening log det")?;
        Some(WhiteningRecord::from_parts(
            kind,
            transform,
            offset,
            log_abs_det,
        )?)
    } else {
        None
    };
    if r.offset != whitening_end {
        return Err(Error::format(
            r.offset as u64,
            "whitening length does not match parsed size",
        ));
    }

    // Optimizer.
    let optimizer_len = r.u64("optimizer length")? as usize;
    let optimizer_end = r.offset + optimizer_len;
    let optimizer = if flags & FLAG_OPTIMIZER != 0 {
        let step = r.u64("optimizer step")?;
        let beta1_product = r.f64("beta1 product")?;
        let shapes: Vec<(usize, usize)> = {
            let mut s = Vec::new();
            for c in &model.couplings {
                for layer in &c.coupling_fn.layers {
                    s.push(layer.weight.shape());
                    s.push(layer.bias.shape());
                }
            }
            s.push(model.scaling.log_scale.shape());
            s
        };
        let mut first = Vec::with_capacity(shapes.len());
        for &(rows, cols) in &shapes {
            first.push(r.tensor(rows, cols, "first moment")?);
        }
        let mut second = Vec::with_capacity(shapes.len());
        for &(rows, cols) in &shapes {
            second.push(r.tensor(rows, cols, "second moment")?);
        }
        Some(OptimizerState {
            step,
            beta1_product,
            first_moment: first,
            second_moment: second,
        })
    } else {
        None
    };
    if r.offset != optimizer_end {
        return Err(Error::format(
            r.offset as u64,
            "optimizer length does not match parsed size",
        ));
    }

    // Config echo.
    let config_len = r.u64("config length")? as usize;
    let config_bytes = r.take(config_len, "config echo")?;
    let config_echo = String::from_utf8(config_bytes.to_vec())
        .map_err(|e| Error::format(r.offset as u64, format!("config echo not UTF-8: {e}")))?;
    if r.offset != bytes.len() {
        return Err(Error::format(
            r.offset as u64,
            format!("{} trailing bytes", bytes.len() - r.offset),
        ));
    }

    Ok(Checkpoint {
        model,
        prior,
        whitening,
        optimizer,
        step_counter,
        config_echo,
    })
}

/// Atomic write: serialize to `<path>.tmp`, then rename over the target.
pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode(ckpt);
    let tmp = path.with_extension("ckpt.tmp");
    if let Err(e) = fs::write(&tmp, &bytes) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}
