//! 2D DFT, centered circular masks and the band-limiting filter.
//!
//! Spectra are stored with the zero frequency at `(H/2, W/2)`. Radii are
//! normalized so that the center maps to 0 and the corner `(0, 0)` to 1.

mod fft;
mod filter;
mod mask;
mod pad;

pub use fft::{fft2, ifft2, Fft2Plan, Spectrum};
pub use filter::{apply_filter, band_energy_ratio, SpectralFilter};
pub use mask::{make_mask, normalized_distance, FilterKind, FilterSpec, MaskGrid};
pub use pad::{crop_to, pad_to_pow2, Extent};
