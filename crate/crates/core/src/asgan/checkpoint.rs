//! Binary model files.
//!
//! Layout, all little-endian: the magic `ASG1`; a `u64` header length in
//! bytes; the header as `i64` fields (version, kind, n, v, noise_dim,
//! generator layers, generator hidden width, heads, head width, critic
//! hidden width, scaler channels) followed by `f64` fields (attention score
//! scale, scaler minima, scaler maxima); then one block per parameter in
//! declaration order, each `i64 rows, i64 cols` and `rows * cols` `f64`s.

use std::fs;
use std::path::Path;

use super::model::{Affine, Critic, Generator, GeneratorShape};
use super::ModelKind;
use crate::attention::{AttentionHead, MultiHeadAttention};
use crate::data::Scaler;
use crate::error::{CheckpointError, Error, Result};
use crate::ndcore::{Parameterized, Tensor};

pub const MAGIC: [u8; 4] = *b"ASG1";
pub const FORMAT_VERSION: u64 = 1;

const HEADER_INTS: usize = 11;

/// Everything needed to regenerate windows in signal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub generator: Generator,
    pub critic: Critic,
    pub scaler: Option<Scaler>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.generator.shape();
        let (heads, head_width) = shape.attention.unwrap_or((0, 0));
        let channels = self.scaler.as_ref().map_or(0, |s| s.channels());
        let ints = [
            FORMAT_VERSION as i64,
            self.kind.code(),
            shape.n as i64,
            shape.v as i64,
            shape.noise_dim as i64,
            shape.layers as i64,
            shape.hidden as i64,
            heads as i64,
            head_width as i64,
            self.critic.hidden_width() as i64,
            channels as i64,
        ];
        let mut header = Vec::new();
        for x in ints {
            header.extend_from_slice(&x.to_le_bytes());
        }
        let d_scale = self.generator.attention().map_or(0.0, |a| a.d_scale());
        header.extend_from_slice(&d_scale.to_le_bytes());
        if let Some(s) = &self.scaler {
            for x in s.min().iter().chain(s.max()) {
                header.extend_from_slice(&x.to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(12 + header.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.generator.parameters().into_iter().chain(self.critic.parameters()) {
            out.extend_from_slice(&(p.rows() as i64).to_le_bytes());
            out.extend_from_slice(&(p.cols() as i64).to_le_bytes());
            for x in p.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks the window geometry against `(n, v)`.
    pub fn load_for(path: impl AsRef<Path>, n: usize, v: usize) -> Result<Self> {
        let ck = Self::load(path)?;
        let found = (ck.generator.n(), ck.generator.v());
        if found != (n, v) {
            return Err(CheckpointError::ShapeMismatch {
                what: "window n x v".into(),
                expected: format!("{n}x{v}"),
                found: format!("{}x{}", found.0, found.1),
            }
            .into());
        }
        Ok(ck)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::Magic(magic).into());
        }
        let header_len = r.u64("header length")? as usize;
        let header = r.take(header_len, "header")?;
        let mut h = Reader { bytes: header, pos: 0 };
        let version = h.i64("version")?;
        if version != FORMAT_VERSION as i64 {
            return Err(CheckpointError::Version {
                expected: FORMAT_VERSION,
                found: version as u64,
            }
            .into());
        }
        let mut ints = [0usize; HEADER_INTS - 1];
        let kind_code = h.i64("model kind")?;
        let kind = ModelKind::from_code(kind_code).ok_or_else(|| malformed(format!("unknown model kind {kind_code}")))?;
        for (i, slot) in ints.iter_mut().enumerate().skip(1) {
            let x = h.i64("header field")?;
            *slot = usize::try_from(x).map_err(|_| malformed(format!("negative header field {i}: {x}")))?;
        }
        let [_, n, v, noise_dim, layers, hidden, heads, head_width, critic_hidden, channels] = ints;
        let d_scale = h.f64("attention scale")?;
        let scaler = if channels > 0 {
            let min = (0..channels).map(|_| h.f64("scaler min")).collect::<Result<Vec<_>>>()?;
            let max = (0..channels).map(|_| h.f64("scaler max")).collect::<Result<Vec<_>>>()?;
            Some(Scaler::new(min, max).map_err(|e| malformed(format!("scaler: {e}")))?)
        } else {
            None
        };
        if h.pos != header.len() {
            return Err(malformed(format!("{} unread header bytes", header.len() - h.pos)));
        }
        if (heads == 0) != (kind != ModelKind::AsGan) || (heads == 0) != (head_width == 0) {
            return Err(malformed(format!("{} model with {heads} heads of width {head_width}", kind.name())));
        }

        let shape = GeneratorShape {
            n,
            v,
            noise_dim,
            layers,
            hidden,
            attention: (heads > 0).then_some((heads, head_width)),
        };
        let attention = if heads > 0 {
            let mut hs = Vec::with_capacity(heads);
            for i in 0..heads {
                let wq = r.block(&format!("head {i} W_Q"), (v, head_width))?;
                let wk = r.block(&format!("head {i} W_K"), (v, head_width))?;
                let wv = r.block(&format!("head {i} W_V"), (v, head_width))?;
                hs.push(AttentionHead::new(wq, wk, wv)?);
            }
            let wo = r.block("W_O", (heads * head_width, v))?;
            let att = MultiHeadAttention::from_parts(hs, wo, n)?;
            Some(att.with_d_scale(d_scale)?)
        } else {
            None
        };
        let mut gen_layers = Vec::with_capacity(layers);
        for (i, (inputs, outputs)) in shape.layer_dims().into_iter().enumerate() {
            gen_layers.push(Affine {
                weight: r.block(&format!("generator layer {i} weight"), (inputs, outputs))?,
                bias: r.block(&format!("generator layer {i} bias"), (1, outputs))?,
            });
        }
        let generator = Generator::from_parts(attention, gen_layers, noise_dim, n, v)?;
        let width = n * v;
        let critic = Critic {
            hidden: Affine {
                weight: r.block("critic hidden weight", (width, critic_hidden))?,
                bias: r.block("critic hidden bias", (1, critic_hidden))?,
            },
            output: Affine {
                weight: r.block("critic output weight", (critic_hidden, 1))?,
                bias: r.block("critic output bias", (1, 1))?,
            },
            head: kind.critic_head(),
        };
        if r.pos != bytes.len() {
            return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            kind,
            generator,
            critic,
            scaler,
        })
    }
}

fn malformed(msg: String) -> Error {
    CheckpointError::Malformed(msg).into()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(CheckpointError::Truncated(what).into()),
        }
    }

    fn word(&mut self, what: &'static str) -> Result<[u8; 8]> {
        Ok(self.take(8, what)?.try_into().expect("8 bytes"))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.word(what)?))
    }

    fn i64(&mut self, what: &'static str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.word(what)?))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.word(what)?))
    }

    fn block(&mut self, what: &str, expected: (usize, usize)) -> Result<Tensor> {
        let rows = self.i64("block rows")?;
        let cols = self.i64("block columns")?;
        if (rows, cols) != (expected.0 as i64, expected.1 as i64) {
            return Err(CheckpointError::ShapeMismatch {
                what: what.to_string(),
                expected: format!("{}x{}", expected.0, expected.1),
                found: format!("{rows}x{cols}"),
            }
            .into());
        }
        let count = expected.0 * expected.1;
        let raw = self.take(count * 8, "weight block")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::from_vec(expected.0, expected.1, data)
    }
}
