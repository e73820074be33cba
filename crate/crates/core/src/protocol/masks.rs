//! Offline precomputation of one-time pads, cancellation masks and
//! Freivalds verification matrices.

use alloc::vec::Vec;

use rand::Rng;

use super::{Mode, ProtocolError};
use crate::decompose::Decomposition;
use crate::matrix::{random_vector, FieldMatrix};
use crate::rng;

/// `Z_{i-1}` (`k x d_{i+1}`, uniform) and `V_{i-1} = Z_{i-1} · W_i^D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckMatrices {
    pub z: FieldMatrix,
    pub v: FieldMatrix,
}

/// Material for one layer `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerMasks {
    /// `r_{i-1}`, uniform over `Z_p^{d_i}`; absent for layer 1 and in insecure mode.
    pub pad: Option<Vec<u64>>,
    /// `c_i = W_i^D · r_{i-1}`.
    pub cancel: Option<Vec<u64>>,
    /// Present in malicious mode for every layer, including layer 1.
    pub check: Option<CheckMatrices>,
}

/// Per-inference material after it has been claimed by a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMaterial {
    pub inference_id: u64,
    pub mode: Mode,
    pub check_count: usize,
    pub layers: Vec<LayerMasks>,
}

/// Masks for exactly one inference. Claiming them marks the set consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    inference_id: u64,
    mode: Mode,
    check_count: usize,
    layers: Vec<LayerMasks>,
    consumed: bool,
}

impl MaskSet {
    pub fn inference_id(&self) -> u64 {
        self.inference_id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn layers(&self) -> &[LayerMasks] {
        &self.layers
    }

    /// Hands the material to a session; any later call fails.
    pub fn take(&mut self) -> Result<MaskMaterial, ProtocolError> {
        if self.consumed {
            return Err(ProtocolError::MaskReuse(self.inference_id));
        }
        self.consumed = true;
        Ok(MaskMaterial {
            inference_id: self.inference_id,
            mode: self.mode,
            check_count: self.check_count,
            layers: core::mem::take(&mut self.layers),
        })
    }
}

/// Draws `n_inferences` independent mask sets.
///
/// Inference `j` uses the substreams `(seed, "masks", j)` for pads and
/// `(seed, "checks", j)` for Freivalds matrices.
pub fn precompute(
    d: &Decomposition,
    mode: Mode,
    check_count: usize,
    n_inferences: usize,
    seed: u64,
) -> Result<Vec<MaskSet>, ProtocolError> {
    if n_inferences == 0 {
        return Err(ProtocolError::NoInferences);
    }
    (0..n_inferences as u64)
        .map(|j| precompute_one(d, mode, check_count, seed, j))
        .collect()
}

/// The mask set for inference `inference_id` under `seed`.
pub fn precompute_one(
    d: &Decomposition,
    mode: Mode,
    check_count: usize,
    seed: u64,
    inference_id: u64,
) -> Result<MaskSet, ProtocolError> {
    if mode == Mode::Malicious && check_count == 0 {
        return Err(ProtocolError::CheckCount);
    }
    let mut pad_rng = rng::substream(seed, rng::MASKS, inference_id);
    let mut check_rng = rng::substream(seed, rng::CHECKS, inference_id);
    let layers = d
        .layers()
        .iter()
        .enumerate()
        .map(|(idx, split)| layer_masks(d, idx, &split.david_field, mode, check_count, &mut pad_rng, &mut check_rng))
        .collect();
    Ok(MaskSet {
        inference_id,
        mode,
        check_count: if mode == Mode::Malicious { check_count } else { 0 },
        layers,
        consumed: false,
    })
}

fn layer_masks<R: Rng>(
    d: &Decomposition,
    idx: usize,
    w_d: &FieldMatrix,
    mode: Mode,
    check_count: usize,
    pad_rng: &mut R,
    check_rng: &mut R,
) -> LayerMasks {
    let field = d.codec().field();
    let mut out = LayerMasks::default();
    if mode.masks_inputs() && idx > 0 {
        let r = random_vector(field, w_d.cols(), pad_rng);
        out.cancel = Some(w_d.matvec(field, &r).expect("pad width equals layer input width"));
        out.pad = Some(r);
    }
    if mode == Mode::Malicious {
        let z = FieldMatrix::random(field, check_count, w_d.rows(), check_rng);
        let v = z.matmul(field, w_d).expect("Z columns equal layer output width");
        out.check = Some(CheckMatrices { z, v });
    }
    out
}
