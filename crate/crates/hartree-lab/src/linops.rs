//! Dense linearized operators around a ground state, their spectra, and the
//! nondegeneracy diagnostics built on them.
//!
//! Linearizing the Choquard equation at `Q` in the sector of spherical
//! harmonics of degree ℓ gives
//!
//! ```text
//! L₊,(ℓ) f = -f″ - (2/r)f′ + (ℓ(ℓ+1)/r²) f + (λ + V) f + (W₍ℓ₎ f),
//! V = -(|x|⁻¹ ∗ Q²),
//! ```
//!
//! with the nonlocal sector term `W₍ℓ₎` from the multipole reduction of
//! `-2Q(|x|⁻¹ ∗ Qf)`; `L₋ = -Δ + λ + V` acts on the phase direction and has
//! `Q` itself as its kernel. The relativistic linearization replaces the
//! Laplacian by `√(-c²Δ + m²c⁴)` and λ by μ. Everything here is dense: for
//! n ≤ 4000 an O(n³) symmetric eigensolve is tractable and leaves no
//! convergence ambiguity near the zero modes being counted.
//!
//! Operators are symmetrized by conjugation with `diag(r)` (equivalently
//! `diag(√w)`, the weighted-inner-product symmetrization — the two differ by
//! a scalar multiple that cancels), so standard symmetric eigensolvers apply
//! and eigenfunctions come out orthonormal in `⟨f, g⟩_w`.

use std::fmt;

use faer::Mat;

use crate::coulomb::{
    apply_newton_linearized, apply_w_sector, monopole_coefficient, newton_potential,
    MultipoleKernel,
};
use crate::grid::{
    apply_sector_laplacian, central_value, inner_w, radial_derivative, CubicSpline, RadialGrid,
    RadialProfile,
};
use crate::solve::dense::sym_eigen;
use crate::solve::{sqrt_operator_sector, GroundState, Model};
use crate::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Which linearized operator a matrix or report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// Nonrelativistic L₊ sector.
    NrPlus,
    /// Nonrelativistic L₋ (ℓ = 0 only).
    NrMinus,
    /// Relativistic L₊ sector.
    RelPlus,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::NrPlus => write!(f, "nr_plus"),
            OperatorKind::NrMinus => write!(f, "nr_minus"),
            OperatorKind::RelPlus => write!(f, "rel_plus"),
        }
    }
}

/// A dense sector operator, stored as the symmetric matrix in `u = r·f`
/// coordinates together with the ground state it linearizes.
/// [`SectorOperator::apply`] and [`SectorOperator::eigs`] both go through
/// this one matrix, so the spectral object and the apply path agree by
/// construction.
pub struct SectorOperator {
    kind: OperatorKind,
    ell: usize,
    grid: RadialGrid,
    mat_u: Mat<f64>,
    state: Option<GroundState>,
}

fn wnorm(f: &RadialProfile) -> f64 {
    inner_w(f, f).sqrt()
}

/// Assemble `diag(r) · A · diag(1/r)` column-by-column from applications of
/// the operator to coordinate basis vectors.
fn assemble_u(grid: &RadialGrid, apply: impl Fn(&RadialProfile) -> RadialProfile) -> Mat<f64> {
    let n = grid.n();
    let r = grid.nodes();
    let mut a = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let basis = RadialProfile::new(grid, e.clone()).expect("basis vector is finite");
        let col = apply(&basis);
        for i in 0..n {
            a[(i, j)] = r[i] * col.values()[i] / r[j];
        }
        e[j] = 0.0;
    }
    a
}

fn attractive_potential(state: &GroundState) -> RadialProfile {
    let q2 = RadialProfile::new(
        state.grid(),
        state.q.values().iter().map(|&v| v * v).collect(),
    )
    .unwrap();
    let phi = newton_potential(&q2);
    RadialProfile::new(state.grid(), phi.values().iter().map(|&p| -p).collect()).unwrap()
}

/// Nonrelativistic sector linearization
/// `L₊,(ℓ) = -(1/2m)Δ₍ℓ₎ + λ + V + W₍ℓ₎` around a converged state
/// (coefficient 1 on the Laplacian in the normalized m = 1/2 convention).
/// At ℓ = 0 the nonlocal term carries the rank-one far-field part; for
/// ℓ ≥ 1 it is the multipole sector term.
pub fn assemble_sector_nr(ell: usize, state: &GroundState) -> Result<SectorOperator> {
    assert_eq!(
        state.params.model,
        Model::Nonrelativistic,
        "nonrelativistic assembly needs a nonrelativistic state"
    );
    if ell >= 1 {
        MultipoleKernel::new(ell)?; // surface the sector cap before assembling
    }
    let g = state.grid();
    let v = attractive_potential(state);
    let kin = 1.0 / (2.0 * state.params.m);
    let lambda = state.multiplier;
    let mat_u = assemble_u(g, |xi| {
        let lap = apply_sector_laplacian(xi, ell);
        let nonlocal = if ell == 0 {
            apply_newton_linearized(&state.q, xi)
        } else {
            apply_w_sector(ell, &state.q, xi)
        };
        let vals: Vec<f64> = (0..g.n())
            .map(|i| {
                kin * lap.values()[i]
                    + (lambda + v.values()[i]) * xi.values()[i]
                    + nonlocal.values()[i]
            })
            .collect();
        RadialProfile::new(g, vals).unwrap()
    });
    Ok(SectorOperator {
        kind: OperatorKind::NrPlus,
        ell,
        grid: g.clone(),
        mat_u,
        state: Some(state.clone()),
    })
}

/// The phase-direction operator `L₋ = -(1/2m)Δ + λ + V` at ℓ = 0; its
/// kernel is spanned by `Q` itself.
pub fn assemble_lminus(state: &GroundState) -> Result<SectorOperator> {
    assert_eq!(
        state.params.model,
        Model::Nonrelativistic,
        "L₋ is defined for nonrelativistic states"
    );
    let g = state.grid();
    let v = attractive_potential(state);
    let kin = 1.0 / (2.0 * state.params.m);
    let lambda = state.multiplier;
    let mat_u = assemble_u(g, |xi| {
        let lap = apply_sector_laplacian(xi, 0);
        let vals: Vec<f64> = (0..g.n())
            .map(|i| kin * lap.values()[i] + (lambda + v.values()[i]) * xi.values()[i])
            .collect();
        RadialProfile::new(g, vals).unwrap()
    });
    Ok(SectorOperator {
        kind: OperatorKind::NrMinus,
        ell: 0,
        grid: g.clone(),
        mat_u,
        state: Some(state.clone()),
    })
}

/// Relativistic sector linearization
/// `L₊,c,(ℓ) = √(-c²Δ₍ℓ₎ + m²c⁴) + μ + V + W₍ℓ₎`.
///
/// The local and nonlocal parts are assembled column-by-column as in the
/// nonrelativistic case; the kinetic part is the dense
/// [`sqrt_operator_sector`] matrix added directly (it is already the u-space
/// symmetric matrix the basis applications would reproduce).
pub fn assemble_sector_rel(ell: usize, state: &GroundState) -> Result<SectorOperator> {
    assert_eq!(
        state.params.model,
        Model::Relativistic,
        "relativistic assembly needs a relativistic state"
    );
    if ell >= 1 {
        MultipoleKernel::new(ell)?;
    }
    let g = state.grid();
    let m = state.params.m;
    let c = state.params.c.expect("relativistic state carries c");
    let sqrt_op = sqrt_operator_sector(g, ell, m, c)?;
    let v = attractive_potential(state);
    let mu = state.multiplier;
    let rest = assemble_u(g, |xi| {
        let nonlocal = if ell == 0 {
            apply_newton_linearized(&state.q, xi)
        } else {
            apply_w_sector(ell, &state.q, xi)
        };
        let vals: Vec<f64> = (0..g.n())
            .map(|i| (mu + v.values()[i]) * xi.values()[i] + nonlocal.values()[i])
            .collect();
        RadialProfile::new(g, vals).unwrap()
    });
    let mat_u = &rest + sqrt_op.mat_u();
    Ok(SectorOperator {
        kind: OperatorKind::RelPlus,
        ell,
        grid: g.clone(),
        mat_u,
        state: Some(state.clone()),
    })
}

impl SectorOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Symmetric matrix in u-coordinates.
    pub fn mat_u(&self) -> &Mat<f64> {
        &self.mat_u
    }

    #[cfg(test)]
    pub(crate) fn from_mat_u(
        kind: OperatorKind,
        ell: usize,
        grid: &RadialGrid,
        mat_u: Mat<f64>,
    ) -> Self {
        SectorOperator {
            kind,
            ell,
            grid: grid.clone(),
            mat_u,
            state: None,
        }
    }

    pub fn apply(&self, f: &RadialProfile) -> RadialProfile {
        assert!(
            f.grid().same_grid(&self.grid),
            "sector operator applied across grids"
        );
        let n = self.grid.n();
        let r = self.grid.nodes();
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = (0..n).map(|j| self.mat_u[(i, j)] * r[j] * f.values()[j]).sum();
                s / r[i]
            })
            .collect();
        RadialProfile::new(&self.grid, vals).expect("operator image is finite")
    }

    /// Full symmetric eigendecomposition; returns the `k` lowest eigenpairs.
    ///
    /// Eigenfunctions are orthonormal in the weighted inner product and
    /// sign-normalized so the first entry of material size is positive. The
    /// simplicity gap, unit-interval count, and Perron flag are computed from
    /// the full spectrum; for nonrelativistic sectors with ℓ ≥ 2 the report
    /// also carries the [`k_ell_gap`] lower bound on the ground eigenvalue.
    pub fn eigs(&self, k: usize) -> Result<SpectralReport> {
        let n = self.grid.n();
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "requested {k} eigenpairs from an {n}-point sector"
            )));
        }
        let (vals, vecs) = sym_eigen(&self.mat_u)?;
        let scale = 1.0 / (4.0 * PI * self.grid.h()).sqrt();
        let phi_column = |j: usize| -> Result<RadialProfile> {
            let mut phi: Vec<f64> = (0..n)
                .map(|i| scale * vecs[(i, j)] / self.grid.nodes()[i])
                .collect();
            let peak = phi.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            let lead = phi.iter().find(|&&v| v.abs() > 1e-12 * peak);
            if let Some(&lead) = lead {
                if lead < 0.0 {
                    for p in phi.iter_mut() {
                        *p = -*p;
                    }
                }
            }
            RadialProfile::new(&self.grid, phi)
        };
        let mut eigenfunctions = Vec::with_capacity(k);
        for j in 0..k {
            eigenfunctions.push(phi_column(j)?);
        }
        let simple_gap = if n >= 2 { vals[1] - vals[0] } else { 0.0 };
        let gap_bound = match (&self.state, self.kind) {
            (Some(state), OperatorKind::NrPlus) if self.ell >= 2 => {
                let phi0 = match eigenfunctions.first() {
                    Some(p) => p.clone(),
                    None => phi_column(0)?,
                };
                k_ell_gap(self.ell, state, &phi0)?
            }
            _ => 0.0,
        };
        let count_in_unit_interval = vals.iter().filter(|&&e| e > 0.0 && e < 1.0).count();
        let sign_definite = eigenfunctions
            .first()
            .map(|phi| one_signed(phi) && simple_gap > 1e-6)
            .unwrap_or(false);
        Ok(SpectralReport {
            ell: self.ell,
            kind: self.kind,
            eigenvalues: vals[..k].to_vec(),
            eigenfunctions,
            sign_definite,
            simple_gap,
            gap_bound,
            count_in_unit_interval,
        })
    }
}

/// Spectral summary of one sector operator.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub ell: usize,
    pub kind: OperatorKind,
    /// The k lowest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenfunctions, w-orthonormal, sign-normalized.
    pub eigenfunctions: Vec<RadialProfile>,
    /// Ground eigenfunction strictly one-signed and simple (gap > 1e-6).
    pub sign_definite: bool,
    /// Simplicity witness e₁ − e₀ from the full spectrum.
    pub simple_gap: f64,
    /// Quadrature lower bound K₍ℓ₎ on the ground eigenvalue (nonrelativistic
    /// sectors with ℓ ≥ 2; zero otherwise).
    pub gap_bound: f64,
    /// Number of eigenvalues of the full spectrum in the open interval (0,1).
    pub count_in_unit_interval: usize,
}

impl SpectralReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "l": self.ell,
            "kind": self.kind.to_string(),
            "eigenvalues": self.eigenvalues,
            "sign_definite": self.sign_definite,
            "gap_bound": self.gap_bound,
            "count_in_unit_interval": self.count_in_unit_interval,
        })
    }

    /// Eigenfunctions as CSV columns `r, phi0, phi1, …`.
    pub fn eigenfunctions_csv(&self) -> String {
        let mut out = String::from("r");
        for j in 0..self.eigenfunctions.len() {
            out.push_str(&format!(",phi{j}"));
        }
        out.push('\n');
        if let Some(first) = self.eigenfunctions.first() {
            let g = first.grid();
            for i in 0..g.n() {
                out.push_str(&format!("{}", g.nodes()[i]));
                for phi in &self.eigenfunctions {
                    out.push_str(&format!(",{}", phi.values()[i]));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn one_signed(phi: &RadialProfile) -> bool {
    let pos = phi.values().iter().all(|&v| v > 0.0);
    let neg = phi.values().iter().all(|&v| v < 0.0);
    pos || neg
}

/// Result of the Perron–Frobenius check on a report's ground eigenfunction.
#[derive(Clone, Copy, Debug)]
pub struct PerronResult {
    /// Strictly one-signed on the grid interior, with a simple ground
    /// eigenvalue (gap > 1e-6).
    pub sign_definite: bool,
    /// min |φᵢ| / max |φᵢ| over the grid interior.
    pub margin: f64,
}

/// Perron–Frobenius property of the ground eigenfunction: each sector's
/// lowest eigenfunction should be strictly positive (after sign
/// normalization) with a simple eigenvalue.
pub fn perron_check(report: &SpectralReport) -> PerronResult {
    let Some(phi) = report.eigenfunctions.first() else {
        return PerronResult {
            sign_definite: false,
            margin: 0.0,
        };
    };
    let mut min_abs = f64::INFINITY;
    let mut max_abs = 0.0_f64;
    for &v in phi.values() {
        min_abs = min_abs.min(v.abs());
        max_abs = max_abs.max(v.abs());
    }
    let margin = if max_abs > 0.0 { min_abs / max_abs } else { 0.0 };
    PerronResult {
        sign_definite: one_signed(phi) && report.simple_gap > 1e-6,
        margin,
    }
}

/// The explicit positive lower bound `K₍ℓ₎ ≤ e₀,(ℓ)` for ℓ ≥ 2, evaluated on
/// the sector's ground eigenfunction φ (w-normalized internally):
///
/// ```text
/// K₍ℓ₎ = (1/2m)(ℓ(ℓ+1) - 2) ⟨φ, φ/r²⟩_w
///      + 32π² ∬ (Qφ)(r) [ (1/3) r_</r_>² - (1/(2ℓ+1)) r_<^ℓ/r_>^{ℓ+1} ] (Qφ)(s) r²s² dr ds,
/// ```
///
/// the two terms being what is gained over the ℓ = 1 sector from the
/// centrifugal barrier and from the multipole-kernel monotonicity. The
/// double integral is evaluated as a plain O(n²) quadrature, deliberately
/// independent of the prefix-sum route used by the operator applies.
pub fn k_ell_gap(ell: usize, state: &GroundState, phi: &RadialProfile) -> Result<f64> {
    if ell < 2 {
        return Err(Error::InvalidArgument(format!(
            "the sector lower bound needs ℓ ≥ 2, got {ell}"
        )));
    }
    crate::grid::check_same_grid(&state.q, phi);
    let g = state.grid();
    let n = g.n();
    let r = g.nodes();
    let h = g.h();
    let norm = wnorm(phi);
    let cf = (ell * (ell + 1) - 2) as f64 / (2.0 * state.params.m);
    let mut t1 = 0.0;
    for i in 0..n {
        let p = phi.values()[i] / norm;
        t1 += g.weights()[i] * p * p / (r[i] * r[i]);
    }
    t1 *= cf;

    let k1 = MultipoleKernel::new(1)?;
    let kl = MultipoleKernel::new(ell)?;
    let qp: Vec<f64> = (0..n)
        .map(|i| r[i] * r[i] * state.q.values()[i] * phi.values()[i] / norm)
        .collect();
    let mut t2 = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            // k̂_ℓ = (4π/(2ℓ+1)) r_<^ℓ/r_>^{ℓ+1} already carries the multipole
            // weight, so 8π (k̂₁ - k̂_ℓ) is the documented 32π² difference.
            let diff = k1.eval(r[i], r[j]) - kl.eval(r[i], r[j]);
            row += diff * qp[j];
        }
        t2 += qp[i] * row;
    }
    t2 *= 8.0 * PI * h * h;
    Ok(t1 + t2)
}

/// Dimension of the discrete kernel of L₊ across sectors ℓ ≤ `l_max`:
/// eigenvalues in `(-r₀, r₀)` counted with spherical multiplicity `2ℓ+1`.
/// For the true ground states this is 3 — exactly the translation modes at
/// ℓ = 1 — which is the nondegeneracy statement the count verifies.
///
/// Errors with `AmbiguousCount` if any sector eigenvalue falls within 10% of
/// ±r₀, since the count would then flip under harmless perturbations.
pub fn kernel_count(state: &GroundState, l_max: usize, r0: f64) -> Result<usize> {
    if l_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "kernel counting needs l_max ≥ 2 to see past the translation sector, got {l_max}"
        )));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "counting radius must be positive, got {r0}"
        )));
    }
    let mut total = 0usize;
    for ell in 0..=l_max {
        let op = match state.params.model {
            Model::Nonrelativistic => assemble_sector_nr(ell, state)?,
            Model::Relativistic => assemble_sector_rel(ell, state)?,
        };
        let (vals, _) = sym_eigen(op.mat_u())?;
        for &e in &vals {
            let d = e.abs();
            if d >= 0.9 * r0 && d <= 1.1 * r0 {
                return Err(Error::AmbiguousCount(format!(
                    "sector ℓ = {ell} has an eigenvalue {e:.6e} within 10% of the counting \
                     radius {r0:.3e}"
                )));
            }
            if d < r0 {
                total += 2 * ell + 1;
            }
        }
    }
    Ok(total)
}

/// Nondegeneracy diagnostics around a nonrelativistic state.
#[derive(Clone, Debug)]
pub struct NullspaceDiagnostics {
    /// Scaling generator R = 2Q + rQ′, sampled on the grid.
    pub r_profile: RadialProfile,
    /// ‖L₊R + 2Q‖_w / ‖Q‖_w (continuum identity: L₊R = −2Q).
    pub resid_r: f64,
    /// ‖L₊,(1) Q′‖_w / ‖Q′‖_w (continuum identity: L₊,(1)Q′ = 0).
    pub resid_translation: f64,
    /// τ = σ(R) = ∫ Q R / |x|; the nondegeneracy argument needs τ ≠ 1.
    pub tau: f64,
    /// Whether |τ − 1| > 0.05.
    pub tau_separated: bool,
    /// Near-zero eigenvalue counts per sector ℓ = 0, 1, …, filled by
    /// [`nullspace_diagnostics_full`]; empty from the cheap entry point.
    pub kernel_counts: Vec<usize>,
    q: RadialProfile,
}

impl NullspaceDiagnostics {
    /// The linear functional σ(ξ) = ∫ Q ξ / |x| entering the nondegeneracy
    /// argument (so `tau == sigma(&r_profile)` up to roundoff).
    pub fn sigma(&self, xi: &RadialProfile) -> f64 {
        monopole_coefficient(&self.q, xi)
    }
}

/// Evaluate the two kernel identities and the τ coefficient for a converged
/// nonrelativistic state, through the fast apply path (no assembly).
pub fn nullspace_diagnostics(state: &GroundState) -> NullspaceDiagnostics {
    assert_eq!(
        state.params.model,
        Model::Nonrelativistic,
        "nullspace diagnostics are for nonrelativistic states"
    );
    let g = state.grid();
    let n = g.n();
    let v = attractive_potential(state);
    let kin = 1.0 / (2.0 * state.params.m);
    let lambda = state.multiplier;
    let apply = |xi: &RadialProfile, ell: usize| -> RadialProfile {
        let lap = apply_sector_laplacian(xi, ell);
        let nonlocal = if ell == 0 {
            apply_newton_linearized(&state.q, xi)
        } else {
            apply_w_sector(ell, &state.q, xi)
        };
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                kin * lap.values()[i]
                    + (lambda + v.values()[i]) * xi.values()[i]
                    + nonlocal.values()[i]
            })
            .collect();
        RadialProfile::new(g, vals).unwrap()
    };

    let qp = radial_derivative(&state.q);
    let rr = RadialProfile::new(
        g,
        (0..n)
            .map(|i| 2.0 * state.q.values()[i] + g.nodes()[i] * qp.values()[i])
            .collect(),
    )
    .unwrap();

    let lr = apply(&rr, 0);
    let defect = RadialProfile::new(
        g,
        (0..n)
            .map(|i| lr.values()[i] + 2.0 * state.q.values()[i])
            .collect(),
    )
    .unwrap();
    let resid_r = wnorm(&defect) / wnorm(&state.q);

    let ltq = apply(&qp, 1);
    let resid_translation = wnorm(&ltq) / wnorm(&qp);

    let tau = monopole_coefficient(&state.q, &rr);
    NullspaceDiagnostics {
        r_profile: rr,
        resid_r,
        resid_translation,
        tau,
        tau_separated: (tau - 1.0).abs() > 0.05,
        kernel_counts: Vec::new(),
        q: state.q.clone(),
    }
}

/// [`nullspace_diagnostics`] plus, per sector ℓ = 0, …, `l_max`, the count of
/// eigenvalues inside (−`r0`, `r0`) — one dense eigendecomposition per
/// sector, so markedly more expensive than the cheap entry point.
pub fn nullspace_diagnostics_full(
    state: &GroundState,
    l_max: usize,
    r0: f64,
) -> Result<NullspaceDiagnostics> {
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "counting radius must be positive, got {r0}"
        )));
    }
    let mut diag = nullspace_diagnostics(state);
    for ell in 0..=l_max {
        let op = assemble_sector_nr(ell, state)?;
        let (vals, _) = sym_eigen(op.mat_u())?;
        diag.kernel_counts
            .push(vals.iter().filter(|e| e.abs() < r0).count());
    }
    Ok(diag)
}

/// The running nonlocal term of the linearized operator,
/// `(Wv)(r) = 2Q(r)∫₀^r K(r,s)Q(s)v(s)ds = 8πQ(r)(J₂ - J₁/r)` with
/// `J₁ = ∫₀^r s²Qv ds`, `J₂ = ∫₀^r sQv ds` (trapezoid prefix sums).
pub fn running_kernel_term(q: &RadialProfile, v: &RadialProfile) -> RadialProfile {
    crate::grid::check_same_grid(q, v);
    let g = q.grid();
    let n = g.n();
    let h = g.h();
    let r = g.nodes();
    let mut out = vec![0.0; n];
    let mut j1 = 0.0;
    let mut j2 = 0.0;
    for i in 0..n {
        if i > 0 {
            let fa1 = r[i - 1] * r[i - 1] * q.values()[i - 1] * v.values()[i - 1];
            let fb1 = r[i] * r[i] * q.values()[i] * v.values()[i];
            j1 += 0.5 * h * (fa1 + fb1);
            let fa2 = r[i - 1] * q.values()[i - 1] * v.values()[i - 1];
            let fb2 = r[i] * q.values()[i] * v.values()[i];
            j2 += 0.5 * h * (fa2 + fb2);
        }
        out[i] = 8.0 * PI * q.values()[i] * (j2 - j1 / r[i]);
    }
    RadialProfile::new(g, out).expect("kernel term of finite profiles is finite")
}

/// Solution of the radial linearized IVP up to the radius where it exceeds
/// 1e8 in magnitude, with the growth rate fitted over the final decade.
pub struct LinearizedShoot {
    values: Vec<f64>,
    growth_rate: f64,
    grid: RadialGrid,
}

impl LinearizedShoot {
    /// Samples on the grid nodes `r_1, …, r_len`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Least-squares slope of ln|v| over the final decade of growth.
    pub fn growth_rate(&self) -> f64 {
        self.growth_rate
    }

    /// Radius reached before the magnitude guard stopped the integration.
    pub fn reach(&self) -> f64 {
        self.grid.nodes()[self.values.len() - 1]
    }

    /// Full-grid profile, zero beyond the reached radius (for quadrature
    /// diagnostics restricted to smaller radii).
    pub fn padded_profile(&self) -> RadialProfile {
        let mut vals = self.values.clone();
        vals.resize(self.grid.n(), 0.0);
        RadialProfile::new(&self.grid, vals).expect("shot values are finite below the guard")
    }
}

/// Integrate the ℓ = 0 linearized equation `L₊v = 0` as an IVP with
/// `v(0) = v₀`, `v′(0) = 0`:
///
/// ```text
/// v″ = -(2/r)v′ + (1 - Φ[Q²](r))v + (Wv)(r),
/// ```
///
/// carrying the running moments `J₁, J₂` of the kernel term in the RK4
/// state. Any such solution with `v(0) ≠ 0` grows exponentially (rate
/// approaching the linearization's essential rate 1 from below), which is
/// the shooting-side witness of radial nondegeneracy: no decaying radial
/// zero mode exists.
pub fn linearized_shoot(state: &GroundState, v0: f64) -> Result<LinearizedShoot> {
    if v0 == 0.0 {
        return Err(Error::InvalidArgument(
            "linearized shooting needs v(0) ≠ 0".into(),
        ));
    }
    if state.params.model != Model::Nonrelativistic || (state.multiplier - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "linearized shooting runs on the normalized (λ = 1) state".into(),
        ));
    }
    let g = state.grid();
    let n = g.n();
    let h = g.h();
    let q_sp = CubicSpline::from_profile(&state.q);

    // Potential spline with the exact r = 0 value 4π∫ρ s ds and a far-field
    // 1/r continuation knot at r_max (the potential does not vanish there).
    let q2 = RadialProfile::new(g, state.q.values().iter().map(|&v| v * v).collect()).unwrap();
    let phi = newton_potential(&q2);
    let phi0: f64 = state
        .q
        .values()
        .iter()
        .zip(g.nodes())
        .map(|(&qv, &r)| 4.0 * PI * qv * qv * r * h)
        .sum();
    let mut phi_knots = Vec::with_capacity(n + 2);
    phi_knots.push(phi0);
    phi_knots.extend_from_slice(phi.values());
    phi_knots.push(phi.values()[n - 1] * g.nodes()[n - 1] / g.r_max());
    let phi_sp = CubicSpline::from_samples(0.0, h, phi_knots)?;

    // State y = (v, v′, J₁ = ∫s²Qv, J₂ = ∫sQv).
    let rhs = |r: f64, y: &[f64; 4]| -> [f64; 4] {
        let qv = q_sp.eval(r);
        let wv = 8.0 * PI * qv * (y[3] - y[2] / r);
        [
            y[1],
            -(2.0 / r) * y[1] + (1.0 - phi_sp.eval(r)) * y[0] + wv,
            r * r * qv * y[0],
            r * qv * y[0],
        ]
    };
    let q0 = central_value(&state.q);
    let a = (1.0 - phi0) * v0 / 6.0;
    let mut y = [
        v0 + a * h * h,
        2.0 * a * h,
        q0 * v0 * h * h * h / 3.0,
        q0 * v0 * h * h / 2.0,
    ];
    let mut vs = Vec::with_capacity(n);
    vs.push(y[0]);
    let mut r = h;
    for _ in 1..n {
        let k1 = rhs(r, &y);
        let y2 = step4(&y, &k1, h / 2.0);
        let k2 = rhs(r + h / 2.0, &y2);
        let y3 = step4(&y, &k2, h / 2.0);
        let k3 = rhs(r + h / 2.0, &y3);
        let y4 = step4(&y, &k3, h);
        let k4 = rhs(r + h, &y4);
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
        vs.push(y[0]);
        if y[0].abs() > 1e8 {
            break;
        }
    }

    let i_hi = vs.len() - 1;
    let v_hi = vs[i_hi].abs();
    let i_lo = vs
        .iter()
        .position(|&v| v.abs() > v_hi / 10.0)
        .unwrap_or(0);
    let (mut sx, mut sy, mut sxx, mut sxy, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in i_lo..=i_hi {
        let x = g.nodes()[i];
        let yv = vs[i].abs().ln();
        sx += x;
        sy += yv;
        sxx += x * x;
        sxy += x * yv;
        k += 1.0;
    }
    let growth_rate = (k * sxy - sx * sy) / (k * sxx - sx * sx);

    Ok(LinearizedShoot {
        values: vs,
        growth_rate,
        grid: g.clone(),
    })
}

fn step4(y: &[f64; 4], k: &[f64; 4], s: f64) -> [f64; 4] {
    [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2], y[3] + s * k[3]]
}
