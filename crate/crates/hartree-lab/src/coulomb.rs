//! Coulomb potentials of radial densities via Newton's theorem, and the
//! sector-wise multipole kernels entering linearized nonlocal terms.
//!
//! Everything here is a piece of the multipole expansion
//! `1/|x−y| = Σ_ℓ (4π/(2ℓ+1)) (r_<^ℓ/r_>^{ℓ+1}) Σ_m Y_{ℓm}(x̂) conj(Y_{ℓm}(ŷ))`
//! (Jackson, Classical Electrodynamics, §3.6). For radial densities only the
//! ℓ = 0 term survives, which is Newton's theorem; for the linearization
//! around a radial ground state every sector ℓ contributes one rank-structured
//! kernel. Production evaluation is O(n) prefix sums; dense O(n²) kernels are
//! kept in the tests as oracles.

use crate::grid::{check_same_grid, RadialProfile};
use crate::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Largest supported multipole index. Power evaluations are organized so that
/// every intermediate stays inside f64 range up to this cap.
pub const MAX_MULTIPOLE: usize = 64;

/// Newton's-theorem kernel `K(r,s) = 4πs(1 − s/r)` for `0 ≤ s ≤ r`, the
/// weight with which a shell at radius `s` acts at radius `r` after the
/// constant far-field part has been split off. `K(0,0) = 0` by limit.
pub fn kernel_k(r: f64, s: f64) -> Result<f64> {
    if s < 0.0 || s > r {
        return Err(Error::Domain(format!(
            "kernel_k needs 0 <= s <= r, got r = {r}, s = {s}"
        )));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(4.0 * PI * s * (1.0 - s / r))
}

/// One sector of the multipole expansion:
/// `k_ℓ(r,s) = (4π/(2ℓ+1)) · r_<^ℓ / r_>^{ℓ+1}`.
#[derive(Clone, Copy, Debug)]
pub struct MultipoleKernel {
    ell: usize,
}

impl MultipoleKernel {
    pub fn new(ell: usize) -> Result<Self> {
        if ell > MAX_MULTIPOLE {
            return Err(Error::InvalidArgument(format!(
                "multipole index {ell} exceeds supported cap {MAX_MULTIPOLE}"
            )));
        }
        Ok(MultipoleKernel { ell })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Evaluate `k_ℓ(r,s)` for `r, s > 0`. The ratio form
    /// `exp(ℓ·log(r_</r_>))/r_>` keeps the value finite for all supported ℓ.
    pub fn eval(&self, r: f64, s: f64) -> f64 {
        let lo = r.min(s);
        let hi = r.max(s);
        let ratio = if self.ell == 0 {
            1.0
        } else {
            (self.ell as f64 * (lo / hi).ln()).exp()
        };
        4.0 * PI / (2 * self.ell + 1) as f64 * ratio / hi
    }
}

/// Trapezoid prefix integrals `P_i = ∫₀^{x_i} v dx` on uniform spacing,
/// assuming the integrand vanishes at `x = 0`:
/// `P_i = h (v_1 + … + v_{i-1} + v_i/2)`.
fn trapezoid_prefix(vals: &[f64], h: f64) -> Vec<f64> {
    let mut acc = 0.0;
    vals.iter()
        .map(|&v| {
            let p = h * (acc + v / 2.0);
            acc += v;
            p
        })
        .collect()
}

/// Trapezoid suffix integrals `S_i = ∫_{x_i}^{x_{n+1}} v dx`, assuming the
/// integrand vanishes at the right endpoint.
fn trapezoid_suffix(vals: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; vals.len()];
    let mut acc = 0.0;
    for (i, &v) in vals.iter().enumerate().rev() {
        out[i] = h * (acc + v / 2.0);
        acc += v;
    }
    out
}

/// Positive Coulomb potential `Φ = |x|⁻¹ ∗ ρ` of a radial density:
/// `Φ(r) = (4π/r) ∫₀^r ρ s² ds + 4π ∫_r^{r_max} ρ s ds`.
///
/// Cost is O(n) via two prefix sums. For ρ ≥ 0 the result is nonincreasing
/// and `r·Φ(r)` tends to the total mass of ρ. The grid truncates the outer
/// integral at `r_max`, so a density that has not decayed there loses tail
/// mass; that situation gets a stderr warning rather than an error.
pub fn newton_potential(rho: &RadialProfile) -> RadialProfile {
    let g = rho.grid().clone();
    let r = g.nodes();
    let v = rho.values();
    let peak = v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    if peak > 0.0 && v[v.len() - 1].abs() > 1e-8 * peak {
        eprintln!(
            "warning: newton_potential: density at r_max = {} is {:.3e} of its peak; \
             truncated tail will bias the potential",
            g.r_max(),
            v[v.len() - 1].abs() / peak
        );
    }
    let a: Vec<f64> = r.iter().zip(v).map(|(&ri, &d)| d * ri * ri).collect();
    let b: Vec<f64> = r.iter().zip(v).map(|(&ri, &d)| d * ri).collect();
    let inner = trapezoid_prefix(&a, g.h());
    let outer = trapezoid_suffix(&b, g.h());
    let phi: Vec<f64> = (0..g.n())
        .map(|i| 4.0 * PI * (inner[i] / r[i] + outer[i]))
        .collect();
    RadialProfile::new(&g, phi).expect("potential of a finite profile is finite")
}

/// Shared prefix-sum core of [`apply_w_sector`]; also covers the ℓ = 0 case
/// used by the monopole consistency check against
/// [`apply_newton_linearized`]. Radii are normalized to `t = r/r_max` so the
/// power laws `t^{ℓ+2}` and `t^{1−ℓ}` stay inside f64 range for every
/// supported ℓ.
pub(crate) fn w_sector_any(ell: usize, q: &RadialProfile, f: &RadialProfile) -> RadialProfile {
    assert!(ell <= MAX_MULTIPOLE, "multipole index {ell} exceeds cap");
    check_same_grid(q, f);
    let g = q.grid().clone();
    let n = g.n();
    let r_max = g.r_max();
    let ht = g.h() / r_max;
    let qf: Vec<f64> = q.values().iter().zip(f.values()).map(|(&a, &b)| a * b).collect();
    let t: Vec<f64> = g.nodes().iter().map(|&r| r / r_max).collect();
    let lo: Vec<f64> = (0..n).map(|i| t[i].powi(ell as i32 + 2) * qf[i]).collect();
    let hi: Vec<f64> = (0..n).map(|i| t[i].powi(1 - ell as i32) * qf[i]).collect();
    let p = trapezoid_prefix(&lo, ht);
    let s = trapezoid_suffix(&hi, ht);
    let coeff = -8.0 * PI / (2 * ell + 1) as f64 * r_max * r_max;
    let out: Vec<f64> = (0..n)
        .map(|i| {
            coeff * q.values()[i] * (p[i] * t[i].powi(-(ell as i32) - 1) + s[i] * t[i].powi(ell as i32))
        })
        .collect();
    RadialProfile::new(&g, out).expect("sector kernel of finite profiles is finite")
}

/// Sector nonlocal operator of the linearization,
/// `(W_{(ℓ)} f)(r) = −(8π/(2ℓ+1)) Q(r) ∫ (r_<^ℓ/r_>^{ℓ+1}) Q(s) f(s) s² ds`,
/// for ℓ ≥ 1, evaluated in O(n) by splitting the integral at `s = r` into
/// prefix sums of `s^{2+ℓ}Qf` and `s^{1−ℓ}Qf`.
///
/// The induced bilinear form `⟨f, W_{(ℓ)} f⟩_w` is strictly negative for
/// `f ≢ 0` and `Q > 0`, because `r_<^ℓ/r_>^{ℓ+1}` is a positive-definite
/// kernel. Panics if `ell = 0` (use [`apply_newton_linearized`]) or
/// `ell > MAX_MULTIPOLE`.
pub fn apply_w_sector(ell: usize, q: &RadialProfile, f: &RadialProfile) -> RadialProfile {
    assert!(ell >= 1, "sector operator needs ell >= 1; the ell = 0 case is apply_newton_linearized");
    w_sector_any(ell, q, f)
}

/// Rank-one coefficient of the far part of the linearized radial term,
/// `σ = Σ w_i Q_i ξ_i / r_i ≈ ∫_{R³} Qξ/|x|`.
pub fn monopole_coefficient(q: &RadialProfile, xi: &RadialProfile) -> f64 {
    check_same_grid(q, xi);
    let g = q.grid();
    g.weights()
        .iter()
        .zip(g.nodes())
        .zip(q.values().iter().zip(xi.values()))
        .map(|((&w, &r), (&a, &b))| w * a * b / r)
        .sum()
}

/// Full radial (ℓ = 0) nonlocal term of the linearization,
/// `−2Q·(|x|⁻¹ ∗ (Qξ))`, in split form: the interior part
/// `2Q(r) ∫₀^r K(r,s) Q(s) ξ(s) ds` through the Newton kernel, minus the
/// rank-one far term `2Q·σ` with σ = [`monopole_coefficient`]. The split is
/// algebraically equal to `−2Q·newton_potential(Qξ)` under the shared
/// trapezoid convention.
pub fn apply_newton_linearized(q: &RadialProfile, xi: &RadialProfile) -> RadialProfile {
    check_same_grid(q, xi);
    let g = q.grid().clone();
    let r = g.nodes();
    let rho: Vec<f64> = q.values().iter().zip(xi.values()).map(|(&a, &b)| a * b).collect();
    let b: Vec<f64> = r.iter().zip(&rho).map(|(&ri, &d)| d * ri).collect();
    let a: Vec<f64> = r.iter().zip(&rho).map(|(&ri, &d)| d * ri * ri).collect();
    let pb = trapezoid_prefix(&b, g.h());
    let pa = trapezoid_prefix(&a, g.h());
    let sigma = monopole_coefficient(q, xi);
    let out: Vec<f64> = (0..g.n())
        .map(|i| {
            let interior = 4.0 * PI * (pb[i] - pa[i] / r[i]); // ∫₀^r K(r,s)ρ ds
            2.0 * q.values()[i] * (interior - sigma)
        })
        .collect();
    RadialProfile::new(&g, out).expect("linearized term of finite profiles is finite")
}
