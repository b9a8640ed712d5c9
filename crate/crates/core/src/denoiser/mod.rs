//! Time-conditioned U-Net `eps(x_t, t)` over stacked texture/reflectance maps.
//!
//! | stage            | resolution | channels                  |
//! |------------------|------------|---------------------------|
//! | stem conv 3x3    | R          | C -> w0                   |
//! | down level l     | R / 2^l    | 2 res-blocks -> w_l, conv stride 2 |
//! | middle           | R / 2^depth| 1 res-block w_{depth-1}   |
//! | up level l       | R / 2^l    | upsample, concat skip, 2 res-blocks -> w_l |
//! | head             | R          | GN, SiLU, conv 3x3 w0 -> C (zero init) |
//!
//! with `w_l = base_width * 2^l`. A res-block is
//! `GN -> SiLU -> conv3x3 -> +proj(temb) -> GN -> SiLU -> conv3x3`, plus a 1x1
//! shortcut when the width changes. The time embedding is a sinusoidal code
//! passed through a two-layer MLP, then projected per block.

mod check;
mod embedding;
mod unet;

pub use check::{gradcheck_end_to_end, perturbed_denoiser};
pub use embedding::timestep_embedding;
pub use unet::{Denoiser, DenoiserConfig, ParamSpec};

use crate::ndtensor::{Real, Tape, Tensor, Var};
use crate::Result;

/// A noise-prediction network.
pub trait EpsModel<F: Real = f32>: Sync {
    fn channels(&self) -> usize;

    /// Spatial extents must be a multiple of this value.
    fn size_multiple(&self) -> usize;

    /// `t` holds one timestep per batch item, or a single shared one.
    fn predict(&self, x: &Tensor<F>, t: &[usize]) -> Result<Tensor<F>> {
        let mut tape = Tape::no_grad();
        let xv = tape.constant(x.clone());
        let out = self.predict_on(&mut tape, xv, t)?;
        Ok(tape.value(out).clone())
    }

    /// Records the forward pass on `tape` with frozen parameters so that
    /// gradients can flow to `x`.
    fn predict_on(&self, tape: &mut Tape<F>, x: Var, t: &[usize]) -> Result<Var>;
}
