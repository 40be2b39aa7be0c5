//! Half-integer-order modified Bessel functions and the free heat kernels of
//! the sector Laplacians.
//!
//! The heat semigroup of `-Δ_{(ℓ)} = -∂_r² - (2/r)∂_r + ℓ(ℓ+1)/r²` on
//! `(0, ∞)` with measure `r² dr` has the classical integral kernel
//!
//! ```text
//! e^{tΔ_{(ℓ)}}(r,s) = (1/2t) (rs)^{-1/2} e^{-(r²+s²)/4t} I_{ℓ+1/2}(rs/2t),
//! ```
//!
//! which is strictly positive — the analytic input behind Perron–Frobenius
//! arguments for the sector linearizations. This module evaluates the kernel
//! stably (log-space combination for large `rs/2t`) and packages it as a
//! dense matrix acting on grid profiles. It is diagnostic machinery:
//! production resolvents elsewhere in the crate use direct linear solves.

use crate::grid::{RadialGrid, RadialProfile};
use crate::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Largest supported order offset ℓ in `I_{ℓ+1/2}`.
pub const MAX_BESSEL_ELL: usize = 64;

/// `Γ(ℓ + 3/2)` by the recurrence from `Γ(3/2) = √π/2`.
fn gamma_ell_threehalf(ell: usize) -> f64 {
    let mut g = 0.5 * PI.sqrt();
    for k in 1..=ell {
        g *= k as f64 + 0.5;
    }
    g
}

/// Ascending power series `I_ν(z) = (z/2)^ν Σ_k (z²/4)^k / (k! Γ(ν+k+1))`,
/// ν = ℓ + 1/2 (DLMF 10.25.2). Every term is positive, so there is no
/// cancellation at small `z`; used below the recurrence threshold.
fn i_half_series(ell: usize, z: f64) -> f64 {
    let nu = ell as f64 + 0.5;
    let q = z * z / 4.0;
    let mut term = (z / 2.0).powf(nu) / gamma_ell_threehalf(ell);
    let mut sum = term;
    for k in 1..500 {
        term *= q / (k as f64 * (nu + k as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Closed forms `I_{1/2} = √(2/πz) sinh z`, `I_{3/2} = √(2/πz)(cosh z − sinh z / z)`.
/// Only called for z well above 1, where the subtraction is benign.
fn i_half_seeds(z: f64) -> (f64, f64) {
    let c = (2.0 / (PI * z)).sqrt();
    (c * z.sinh(), c * (z.cosh() - z.sinh() / z))
}

/// Seeds for `e^{-z} I_{ν}(z)`, safe for arbitrarily large z.
fn i_half_seeds_scaled(z: f64) -> (f64, f64) {
    let c = (1.0 / (2.0 * PI * z)).sqrt();
    let em = (-2.0 * z).exp();
    (c * (1.0 - em), c * ((1.0 + em) - (1.0 - em) / z))
}

/// Upward recurrence `I_{ν+1} = I_{ν-1} - (2ν/z) I_ν` from the two seeds.
/// Stable only for `z ≳ ν`, which the series threshold guarantees.
fn recur_up(ell: usize, z: f64, mut a: f64, mut b: f64) -> f64 {
    if ell == 0 {
        return a;
    }
    let mut nu = 1.5;
    for _ in 1..ell {
        let next = a - (2.0 * nu / z) * b;
        a = b;
        b = next;
        nu += 1.0;
    }
    b
}

fn check_bessel_args(ell: usize, z: f64) -> Result<()> {
    if ell > MAX_BESSEL_ELL {
        return Err(Error::InvalidArgument(format!(
            "Bessel order offset {ell} exceeds supported cap {MAX_BESSEL_ELL}"
        )));
    }
    if !(z > 0.0) {
        return Err(Error::Domain(format!(
            "modified Bessel function needs z > 0, got {z}"
        )));
    }
    Ok(())
}

/// Modified Bessel function of the first kind at half-integer order,
/// `I_{ℓ+1/2}(z)` for `z > 0`; always strictly positive.
///
/// Below `z = ℓ + 20` the ascending series is used (all-positive terms, no
/// cancellation); above, the closed forms for ν = 1/2, 3/2 seed the upward
/// recurrence, which is stable there because `z` dominates the order.
pub fn bessel_i_half(ell: usize, z: f64) -> Result<f64> {
    check_bessel_args(ell, z)?;
    if z < ell as f64 + 20.0 {
        Ok(i_half_series(ell, z))
    } else {
        let (a, b) = i_half_seeds(z);
        Ok(recur_up(ell, z, a, b))
    }
}

/// Exponentially scaled variant `e^{-z} I_{ℓ+1/2}(z)`, finite for all `z > 0`
/// however large. Same evaluation strategy as [`bessel_i_half`]; scaling
/// commutes with the linear recurrence.
pub fn bessel_i_half_scaled(ell: usize, z: f64) -> Result<f64> {
    check_bessel_args(ell, z)?;
    if z < ell as f64 + 20.0 {
        Ok(i_half_series(ell, z) * (-z).exp())
    } else {
        let (a, b) = i_half_seeds_scaled(z);
        Ok(recur_up(ell, z, a, b))
    }
}

/// Dense discretization of the sector heat semigroup `e^{tΔ_{(ℓ)}}` on a
/// radial grid: entry `(i,j)` is `e^{tΔ_{(ℓ)}}(r_i, r_j) · r_j² h`, so that
/// `H f` approximates `∫₀^∞ e^{tΔ_{(ℓ)}}(r,s) f(s) s² ds`.
///
/// The underlying scalar kernel is symmetric by formula; the matrix carries
/// the quadrature factor on the column index and is symmetric under
/// conjugation by `diag(r_j² h)^{1/2}`. All entries are strictly positive
/// within f64 range (on very large domains the ultra-far corners may
/// underflow to zero; the Gaussian factor there is below 1e-300).
pub struct HeatKernelSector {
    ell: usize,
    t: f64,
    grid: RadialGrid,
    entries: Vec<f64>,
}

/// Build the dense sector heat kernel for time `t > 0`.
///
/// The Gaussian and Bessel factors are combined in log space when
/// `rs/2t > 500`: there `e^{-(r²+s²)/4t} I_{ℓ+1/2}(rs/2t)` is evaluated as
/// `e^{-(r-s)²/4t} · [e^{-z} I_{ℓ+1/2}(z)]`, which never overflows.
pub fn heat_kernel_sector(ell: usize, t: f64, grid: &RadialGrid) -> Result<HeatKernelSector> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "heat kernel needs t > 0, got {t}"
        )));
    }
    if ell > MAX_BESSEL_ELL {
        return Err(Error::InvalidArgument(format!(
            "heat kernel sector {ell} exceeds supported cap {MAX_BESSEL_ELL}"
        )));
    }
    let n = grid.n();
    let r = grid.nodes();
    let h = grid.h();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let z = r[i] * r[j] / (2.0 * t);
            let pref = 1.0 / (2.0 * t * (r[i] * r[j]).sqrt());
            let kernel = if z > 500.0 {
                let d = r[i] - r[j];
                pref * (-d * d / (4.0 * t)).exp() * bessel_i_half_scaled(ell, z)?
            } else {
                pref * (-(r[i] * r[i] + r[j] * r[j]) / (4.0 * t)).exp() * bessel_i_half(ell, z)?
            };
            entries[i * n + j] = kernel * r[j] * r[j] * h;
            entries[j * n + i] = kernel * r[i] * r[i] * h;
        }
    }
    Ok(HeatKernelSector {
        ell,
        t,
        grid: grid.clone(),
        entries,
    })
}

impl HeatKernelSector {
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Operator entry `e^{tΔ_{(ℓ)}}(r_i, r_j) · r_j² h`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.grid.n() + j]
    }

    /// Row-major operator matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.entries
    }

    /// Scalar kernel value `e^{tΔ_{(ℓ)}}(r_i, r_j)` (quadrature factor
    /// removed); symmetric in `(i, j)`.
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        let rj = self.grid.nodes()[j];
        self.entry(i, j) / (rj * rj * self.grid.h())
    }

    /// Apply the semigroup to a profile.
    pub fn apply(&self, f: &RadialProfile) -> RadialProfile {
        assert!(
            f.grid().same_grid(&self.grid),
            "heat kernel applied across grids"
        );
        let n = self.grid.n();
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let row = &self.entries[i * n..(i + 1) * n];
                row.iter().zip(f.values()).map(|(&a, &b)| a * b).sum()
            })
            .collect();
        RadialProfile::new(&self.grid, out).expect("heat image of a finite profile is finite")
    }
}
