//! Simulation and analysis of two remote qubits entangled by a shared
//! two-mode squeezed microwave reservoir.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod detection;
pub mod entanglement;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod lindblad;
pub mod network;
pub mod ops;
pub mod sparse;
pub mod sweep;
pub mod tomography;
pub mod validate;

pub use error::{Error, Result};
pub use lindblad::{build_liouvillian, CascadePair, Dissipator, Liouvillian, LiouvillianBuilder, SteadyState};
pub use ops::{CMatrix, CVector, DensityMatrix, SpaceLayout, C64};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::ops::{c, CMatrix, DensityMatrix};
    use rand::Rng;

    pub(crate) fn random_density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::from_matrix_unchecked(m / tr)
    }
}
