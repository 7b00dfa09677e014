//! Random streams for the simulation.
//!
//! Every dataset is driven by a xoshiro256++ generator seeded from a single
//! 64-bit value (the seed is expanded into the 256-bit state with SplitMix64).
//! Uniforms take the top 53 bits of each output. Normals come from the
//! Marsaglia polar method, which yields two variates per accepted pair; the
//! second is kept and returned by the next call.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// SplitMix64 output function: a bijective 64-bit mixer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r`: `root ⊕ splitmix64(r)`.
pub fn replication_seed(root: u64, replication: u64) -> u64 {
    root ^ splitmix64(replication)
}

/// Uniform, normal and Student-t variates from one seeded stream.
#[derive(Debug, Clone)]
pub struct NormalSource {
    rng: SimRng,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SimRng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    /// Chi-square with `dof` degrees of freedom as a sum of squared normals.
    pub fn chi_square(&mut self, dof: u32) -> f64 {
        (0..dof).map(|_| self.normal().powi(2)).sum()
    }

    /// `Z / sqrt(χ²_ν / ν)`.
    pub fn student_t(&mut self, dof: u32) -> f64 {
        let z = self.normal();
        let chi = self.chi_square(dof);
        z / (chi / dof as f64).sqrt()
    }
}
