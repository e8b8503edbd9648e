use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{Layer, Network};
use crate::encoder::{EncoderContext, FeatureGroupMask, Reader};
use crate::error::{FormatError, PolicyError};

const MODEL_MAGIC: &[u8; 4] = b"BNMD";
const MODEL_VERSION: u32 = 1;

/// Pipeline configuration a network was trained against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelMeta {
    pub catalog_hash: [u8; 32],
    pub norms_hash: [u8; 32],
    pub mask: FeatureGroupMask,
}

impl ModelMeta {
    pub fn for_context(ctx: &EncoderContext, mask: FeatureGroupMask) -> Self {
        ModelMeta { catalog_hash: ctx.catalog_hash(), norms_hash: ctx.norms_hash(), mask }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub network: Network,
    pub meta: ModelMeta,
}

impl Model {
    pub fn check_compatible(&self, ctx: &EncoderContext) -> Result<(), PolicyError> {
        if self.meta.catalog_hash != ctx.catalog_hash() {
            return Err(PolicyError::Incompatible("catalog"));
        }
        if self.meta.norms_hash != ctx.norms_hash() {
            return Err(PolicyError::Incompatible("normalization table"));
        }
        Ok(())
    }

    /// Layout, little-endian: magic `BNMD`, version u32, layer count u32 and
    /// sizes (u32 each), catalog hash (32 bytes), normalization hash (32
    /// bytes), mask bits u8; then per layer the weights as an `out x in`
    /// row-major f64 matrix followed by the biases.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.network.topology().layer_sizes();
        let mut out = Vec::with_capacity(80 + 4 * sizes.len() + 8 * self.network.topology().parameter_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.meta.catalog_hash);
        out.extend_from_slice(&self.meta.norms_hash);
        out.push(self.meta.mask.to_bits());
        for layer in &self.network.layers {
            for o in 0..layer.outputs {
                for i in 0..layer.inputs {
                    out.extend_from_slice(&layer.weight(o, i).to_le_bytes());
                }
            }
            for b in &layer.biases {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MODEL_MAGIC {
            return Err(FormatError::Magic);
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(FormatError::Version(version));
        }
        let n_sizes = r.u32()? as usize;
        if !(3..=64).contains(&n_sizes) {
            return Err(FormatError::Shape(format!("{n_sizes} layer sizes")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            let s = r.u32()? as usize;
            if s == 0 || s > 1 << 16 {
                return Err(FormatError::Shape(format!("layer size {s}")));
            }
            sizes.push(s);
        }
        let catalog_hash = r.array()?;
        let norms_hash = r.array()?;
        let mask = FeatureGroupMask::from_bits(r.array::<1>()?[0])
            .ok_or_else(|| FormatError::Invalid("mask bits".into()))?;
        let mut layers = Vec::with_capacity(n_sizes - 1);
        for w in sizes.windows(2) {
            let mut layer = Layer::zeros(w[0], w[1]);
            for o in 0..layer.outputs {
                for i in 0..layer.inputs {
                    *layer.weight_mut(o, i) = r.f64()?;
                }
            }
            for b in layer.biases.iter_mut() {
                *b = r.f64()?;
            }
            layers.push(layer);
        }
        if !r.is_empty() {
            return Err(FormatError::Invalid("trailing bytes".into()));
        }
        let network = Network::from_layers(layers).map_err(|e| FormatError::Shape(format!("{e}")))?;
        if !network.is_finite() {
            return Err(FormatError::Invalid("non-finite parameter".into()));
        }
        Ok(Model { network, meta: ModelMeta { catalog_hash, norms_hash, mask } })
    }

    /// Short content hash of the serialized model, used as its version tag.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}
