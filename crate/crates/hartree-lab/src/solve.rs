//! Ground-state solvers and their diagnostics.
//!
//! Two equations are solved on the radial grid. The normalized Choquard
//! (Schrödinger–Newton) equation
//!
//! ```text
//! -ΔQ - (|x|⁻¹ ∗ Q²) Q = -Q
//! ```
//!
//! is handled both by a Petviashvili-stabilized fixed-point iteration
//! ([`solve_nr_normalized`]) and by threshold shooting on the equivalent
//! initial-value problem ([`shoot_threshold`]); the two routes cross-validate
//! each other. The pseudo-relativistic Hartree equation
//!
//! ```text
//! √(-c²Δ + m²c⁴) Q - (|x|⁻¹ ∗ Q²) Q = -μQ,   ∫Q² = N,
//! ```
//!
//! is solved by the same inner iteration with the kinetic multiplier applied
//! diagonally in the DST basis and an outer secant iteration on the shift
//! `z = μ + mc²` that drives the mass to `N` ([`solve_rel`]).
//!
//! The normalized equation corresponds to mass parameter `m = 1/2` in the
//! physical form `-(1/2m)Δψ - (|x|⁻¹∗ψ²)ψ = -λψ`; general `(m, N)`
//! nonrelativistic states are exact rescalings of it ([`nr_ground_at_mass`]).

use std::fmt;

use crate::coulomb::newton_potential;
use crate::grid::{
    central_value, dirichlet_form, mass, radial_derivative, CubicSpline, Dst1, RadialGrid,
    RadialProfile,
};
use crate::{Error, Result};

#[cfg(feature = "dense")]
pub use dense::{sqrt_operator_sector, SqrtOperator};

const PI: f64 = std::f64::consts::PI;

/// Which equation a ground state solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Nonrelativistic,
    Relativistic,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Nonrelativistic => write!(f, "nonrelativistic"),
            Model::Relativistic => write!(f, "relativistic"),
        }
    }
}

/// What the solver was asked to hit: a Lagrange multiplier or an L² mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Multiplier(f64),
    Mass(f64),
}

/// Physical parameters of a solve.
#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    pub model: Model,
    /// Mass parameter m > 0.
    pub m: f64,
    /// Speed of light; present only for the relativistic model.
    pub c: Option<f64>,
    pub target: Target,
}

/// A converged ground state: nonnegative nonincreasing profile, multiplier,
/// energy, and the measured Euler–Lagrange defect.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub q: RadialProfile,
    /// λ (> 0) for the nonrelativistic model, μ (< 0) for the relativistic.
    pub multiplier: f64,
    pub params: ModelParams,
    /// Discrete L² mass ∫Q².
    pub mass: f64,
    /// Value of the matching energy functional.
    pub energy: f64,
    /// Weighted relative L² norm of the Euler–Lagrange defect.
    pub residual: f64,
}

impl GroundState {
    pub fn grid(&self) -> &RadialGrid {
        self.q.grid()
    }

    /// JSON summary `{model, m, c, N, multiplier, energy, residual, grid}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.params.model.to_string(),
            "m": self.params.m,
            "c": self.params.c,
            "N": self.mass,
            "multiplier": self.multiplier,
            "energy": self.energy,
            "residual": self.residual,
            "grid": { "n": self.grid().n(), "r_max": self.grid().r_max() },
        })
    }

    /// Profile CSV with header `r,value`.
    pub fn profile_csv(&self) -> String {
        self.q.to_csv_string()
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-14..=1e-4).contains(&tol) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance must lie in [1e-14, 1e-4], got {tol}"
        )));
    }
    Ok(())
}

/// Hartree interaction double integral `D(f) = ∫ (|x|⁻¹ ∗ f²) f²`.
pub fn hartree_term(f: &RadialProfile) -> f64 {
    let f2 = RadialProfile::new(
        f.grid(),
        f.values().iter().map(|&v| v * v).collect(),
    )
    .expect("square of a finite profile is finite");
    let phi = newton_potential(&f2);
    f.grid()
        .weights()
        .iter()
        .zip(phi.values().iter().zip(f2.values()))
        .map(|(&w, (&p, &d))| w * p * d)
        .sum()
}

/// Nonrelativistic Hartree energy
/// `E(ψ) = (1/2m) ∫|∇ψ|² - (1/2) ∫ (|x|⁻¹ ∗ ψ²) ψ²`,
/// with the kinetic term from centered differences.
pub fn energy_nr(psi: &RadialProfile, m: f64) -> f64 {
    let dp = radial_derivative(psi);
    mass(&dp) / (2.0 * m) - 0.5 * hartree_term(psi)
}

/// Pseudo-relativistic Hartree energy
/// `E(ψ) = ⟨ψ, √(-c²Δ + m²c⁴) ψ⟩ - (1/2) ∫ (|x|⁻¹ ∗ ψ²) ψ²`.
///
/// The kinetic term is evaluated in the ℓ = 0 half-wave basis: `u = rψ` is
/// expanded in DST modes with continuum wavenumbers `k_j = jπ/r_max`, and the
/// multiplier `√(c²k_j² + m²c⁴)` applied diagonally.
pub fn energy_rel(psi: &RadialProfile, m: f64, c: f64) -> f64 {
    let g = psi.grid();
    let dst = Dst1::new(g.n());
    let u: Vec<f64> = g
        .nodes()
        .iter()
        .zip(psi.values())
        .map(|(&r, &v)| r * v)
        .collect();
    let uhat = dst.apply(&u);
    let kin: f64 = g
        .wavenumbers()
        .iter()
        .zip(&uhat)
        .map(|(&k, &a)| (c * c * k * k + m * m * c.powi(4)).sqrt() * a * a)
        .sum::<f64>()
        * 4.0
        * PI
        * g.h();
    kin - 0.5 * hartree_term(psi)
}

/// Action of the normalized equation,
/// `A(f) = (1/2)⟨f, -Δf⟩ + (1/2)∫f² - (1/4)D(f)`;
/// converged normalized ground states are its critical points.
pub fn normalized_action(f: &RadialProfile) -> f64 {
    0.5 * dirichlet_form(f, 0) + 0.5 * mass(f) - 0.25 * hartree_term(f)
}

/// Apply the ℓ = 0 Laplacian through the DST diagonalization (the route the
/// fixed-point solvers use internally, exact on grid modes).
fn apply_lap_dst(dst: &Dst1, lam: &[f64], g: &RadialGrid, f: &[f64]) -> Vec<f64> {
    let u: Vec<f64> = g.nodes().iter().zip(f).map(|(&r, &v)| r * v).collect();
    let mut c = dst.apply(&u);
    for (ci, &l) in c.iter_mut().zip(lam) {
        *ci *= l;
    }
    let lu = dst.apply(&c);
    lu.iter().zip(g.nodes()).map(|(&v, &r)| v / r).collect()
}

/// Weighted relative L² Euler–Lagrange defect of the nonrelativistic
/// equation `-(1/2m)Δf + λf - (|x|⁻¹∗f²)f = 0`.
pub fn el_residual_nr(f: &RadialProfile, m: f64, lambda: f64) -> f64 {
    let g = f.grid();
    let dst = Dst1::new(g.n());
    let lam = g.dirichlet_eigenvalues();
    let lap = apply_lap_dst(&dst, &lam, g, f.values());
    let f2 = RadialProfile::new(g, f.values().iter().map(|&v| v * v).collect()).unwrap();
    let phi = newton_potential(&f2);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..g.n() {
        let r = lap[i] / (2.0 * m) + lambda * f.values()[i] - phi.values()[i] * f.values()[i];
        num += g.weights()[i] * r * r;
        den += g.weights()[i] * f.values()[i] * f.values()[i];
    }
    (num / den).sqrt()
}

/// Relativistic kinetic multiplier on the discrete Dirichlet spectrum, in the
/// subtracted form `A(λ) = √(c²λ + m²c⁴) - mc² = c²λ/(√(c²λ + m²c⁴) + mc²)`,
/// which is accurate for c²λ ≪ m²c⁴.
fn rel_multiplier(lam: &[f64], m: f64, c: f64) -> Vec<f64> {
    let a = m * c * c;
    lam.iter()
        .map(|&l| {
            let x = c * c * l;
            x / ((x + a * a).sqrt() + a)
        })
        .collect()
}

/// Weighted relative L² Euler–Lagrange defect of the relativistic equation
/// `√(-c²Δ + m²c⁴)f + μf - (|x|⁻¹∗f²)f = 0`, with the kinetic term applied
/// through the discrete DST symbol (the form the solver satisfies).
pub fn el_residual_rel(f: &RadialProfile, m: f64, c: f64, mu: f64) -> f64 {
    let g = f.grid();
    let dst = Dst1::new(g.n());
    let a = rel_multiplier(&g.dirichlet_eigenvalues(), m, c);
    let z = mu + m * c * c;
    let u: Vec<f64> = g.nodes().iter().zip(f.values()).map(|(&r, &v)| r * v).collect();
    let mut ch = dst.apply(&u);
    for (ci, &ai) in ch.iter_mut().zip(&a) {
        *ci *= ai;
    }
    let op = dst.apply(&ch);
    let f2 = RadialProfile::new(g, f.values().iter().map(|&v| v * v).collect()).unwrap();
    let phi = newton_potential(&f2);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..g.n() {
        let r = op[i] / g.nodes()[i] + z * f.values()[i] - phi.values()[i] * f.values()[i];
        num += g.weights()[i] * r * r;
        den += g.weights()[i] * f.values()[i] * f.values()[i];
    }
    (num / den).sqrt()
}

/// Least-squares slope of `ln f` over nodes with `r ∈ [r_lo, r_hi]`; the
/// decay-rate diagnostic for exponentially decaying profiles.
pub fn log_slope(f: &RadialProfile, r_lo: f64, r_hi: f64) -> f64 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut k = 0.0;
    for (&r, &v) in f.grid().nodes().iter().zip(f.values()) {
        if r < r_lo || r > r_hi || v <= 0.0 {
            continue;
        }
        let y = v.ln();
        sx += r;
        sy += y;
        sxx += r * r;
        sxy += r * y;
        k += 1.0;
    }
    (k * sxy - sx * sy) / (k * sxx - sx * sx)
}

/// Solve the normalized Choquard equation `-ΔQ - (|x|⁻¹∗Q²)Q = -Q` by the
/// Petviashvili-stabilized fixed point
///
/// ```text
/// u ← γ^{3/2} (-Δ + 1)⁻¹ [(|x|⁻¹ ∗ u²) u],
/// γ = ⟨u, (-Δ+1)u⟩ / ⟨u, (|x|⁻¹∗u²)u⟩,
/// ```
///
/// with initial guess `e^{-r²}` and the resolvent applied diagonally in the
/// DST basis. The exponent 3/2 is the standard `p/(p-1)` stabilization for a
/// degree-3 homogeneous nonlinearity. Iterates until the relative L∞ update
/// falls below `tol` (at most 5000 iterations); at the fixed point γ = 1.
pub fn solve_nr_normalized(grid: &RadialGrid, tol: f64) -> Result<GroundState> {
    check_tol(tol)?;
    let n = grid.n();
    let dst = Dst1::new(n);
    let lam = grid.dirichlet_eigenvalues();
    let w = grid.weights();
    let r = grid.nodes();
    let four_pi_h = 4.0 * PI * grid.h();

    let mut f: Vec<f64> = r.iter().map(|&x| (-x * x).exp()).collect();
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;
    let mut converged = false;
    while iterations < 5000 {
        iterations += 1;
        let fp = RadialProfile::new(grid, f.clone()).unwrap();
        let f2 = RadialProfile::new(grid, f.iter().map(|&v| v * v).collect()).unwrap();
        let phi = newton_potential(&f2);
        let rhs: Vec<f64> = phi.values().iter().zip(&f).map(|(&p, &v)| p * v).collect();
        let u: Vec<f64> = r.iter().zip(&f).map(|(&x, &v)| x * v).collect();
        let uhat = dst.apply(&u);
        let num: f64 = uhat
            .iter()
            .zip(&lam)
            .map(|(&a, &l)| (l + 1.0) * a * a)
            .sum::<f64>()
            * four_pi_h;
        let den: f64 = w
            .iter()
            .zip(fp.values().iter().zip(&rhs))
            .map(|(&wi, (&a, &b))| wi * a * b)
            .sum();
        if !(den > 0.0) {
            return Err(Error::Collapse(format!(
                "interaction form lost positivity (⟨u, Φu⟩ = {den}) at iteration {iterations}"
            )));
        }
        let gamma = num / den;
        if !gamma.is_finite() || gamma > 1e6 {
            return Err(Error::Collapse(format!(
                "stabilization factor diverged (γ = {gamma}) at iteration {iterations}"
            )));
        }
        let ur: Vec<f64> = r.iter().zip(&rhs).map(|(&x, &v)| x * v).collect();
        let mut ch = dst.apply(&ur);
        for (ci, &l) in ch.iter_mut().zip(&lam) {
            *ci /= l + 1.0;
        }
        let unew = dst.apply(&ch);
        let scale = gamma.powf(1.5);
        let fnew: Vec<f64> = unew
            .iter()
            .zip(r)
            .map(|(&v, &x)| scale * v / x)
            .collect();
        let peak = fnew.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        last_update = f
            .iter()
            .zip(&fnew)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
            / peak;
        f = fnew;
        if last_update < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last_update,
        });
    }
    let q = RadialProfile::new(grid, f)?;
    let residual = el_residual_nr(&q, 0.5, 1.0);
    let energy = energy_nr(&q, 0.5);
    Ok(GroundState {
        mass: mass(&q),
        multiplier: 1.0,
        params: ModelParams {
            model: Model::Nonrelativistic,
            m: 0.5,
            c: None,
            target: Target::Multiplier(1.0),
        },
        energy,
        residual,
        q,
    })
}

/// Exact rescaling `Q ↦ b²Q(b·)` of a nonrelativistic state, resampled onto
/// the same grid by cubic interpolation. The multiplier scales as `λ' = b²λ`
/// and the mass as `N' = bN`.
///
/// The stored residual is the measured Euler–Lagrange defect of the resampled
/// profile under the λ'-equation. Resampling through a cubic interpolant
/// carries an O(h²)-level defect even though the underlying rescaling is
/// exact, so this residual sits at the grid's discretization floor rather
/// than at the original solve tolerance; it shrinks ~4× per h-halving.
pub fn rescale(state: &GroundState, b: f64) -> Result<GroundState> {
    if state.params.model != Model::Nonrelativistic {
        return Err(Error::InvalidArgument(
            "rescale applies to nonrelativistic states".into(),
        ));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rescale factor must be positive, got {b}"
        )));
    }
    if b == 1.0 {
        return Ok(state.clone());
    }
    let g = state.grid();
    let peak = state.q.values().iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let support = state
        .q
        .values()
        .iter()
        .zip(g.nodes())
        .rev()
        .find(|(&v, _)| v.abs() > 1e-10 * peak)
        .map(|(_, &r)| r)
        .unwrap_or(0.0);
    if b * g.r_max() < support {
        return Err(Error::ResampleOutOfRange {
            b,
            support_ratio: support / g.r_max(),
        });
    }
    let sp = CubicSpline::from_profile(&state.q);
    let vals: Vec<f64> = g.nodes().iter().map(|&r| b * b * sp.eval(b * r)).collect();
    let q = RadialProfile::new(g, vals)?;
    let lambda = b * b * state.multiplier;
    let m = state.params.m;
    Ok(GroundState {
        mass: mass(&q),
        multiplier: lambda,
        params: ModelParams {
            target: Target::Multiplier(lambda),
            ..state.params
        },
        energy: energy_nr(&q, m),
        residual: el_residual_nr(&q, m, lambda),
        q,
    })
}

/// The mass-`N` ground state of `-(1/2m)Δψ - (|x|⁻¹∗ψ²)ψ = -λψ`, obtained
/// from the normalized state by the exact scaling `ψ = (b²/√(2m)) Q̂(b·)`
/// with `b = 2mN/N̂` and `λ = b²/(2m)`; `N̂` is the normalized state's mass.
pub fn nr_ground_at_mass(normalized: &GroundState, m: f64, n_target: f64) -> Result<GroundState> {
    if normalized.params.model != Model::Nonrelativistic
        || (normalized.multiplier - 1.0).abs() > 1e-12
    {
        return Err(Error::InvalidArgument(
            "mass scaling starts from the normalized (λ = 1) state".into(),
        ));
    }
    if !(m > 0.0) || !(n_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mass scaling needs m > 0 and N > 0, got m = {m}, N = {n_target}"
        )));
    }
    let g = normalized.grid();
    let b = 2.0 * m * n_target / normalized.mass;
    let lambda = b * b / (2.0 * m);
    let amp = b * b / (2.0 * m).sqrt();
    let sp = CubicSpline::from_profile(&normalized.q);
    let vals: Vec<f64> = g.nodes().iter().map(|&r| amp * sp.eval(b * r)).collect();
    let q = RadialProfile::new(g, vals)?;
    Ok(GroundState {
        mass: mass(&q),
        multiplier: lambda,
        params: ModelParams {
            model: Model::Nonrelativistic,
            m,
            c: None,
            target: Target::Mass(n_target),
        },
        energy: energy_nr(&q, m),
        residual: el_residual_nr(&q, m, lambda),
        q,
    })
}

// ---------------------------------------------------------------------------
// Threshold shooting on the initial-value problem
// ---------------------------------------------------------------------------

/// Integration controls for [`shoot_threshold`].
#[derive(Clone, Copy, Debug)]
pub struct ShootParams {
    /// RK4 step.
    pub step: f64,
    /// Integration horizon.
    pub r_end: f64,
}

impl ShootParams {
    /// Match the step and horizon of a grid (the usual choice, so shot
    /// samples land on grid nodes).
    pub fn for_grid(grid: &RadialGrid) -> Self {
        ShootParams {
            step: grid.h(),
            r_end: grid.r_max(),
        }
    }
}

/// Outcome of integrating the IVP at one initial value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShootClass {
    /// `v` changed sign: the attraction accumulated so far is too weak.
    CrossedZero,
    /// `v` exceeded `10·v₀` while increasing: overshot into growth.
    BlewUp,
    /// Neither happened before `r_end`.
    Undecided,
}

/// One probed initial value and its classification.
#[derive(Clone, Copy, Debug)]
pub struct ShootProbe {
    pub v0: f64,
    pub class: ShootClass,
}

/// Fitted exponential tail `v(r) ≈ C e^{-κr} r^ν` beyond the trust radius.
#[derive(Clone, Copy, Debug)]
pub struct TailFit {
    pub c: f64,
    pub kappa: f64,
    pub nu: f64,
    /// Radius where the tail takes over from the integrated samples.
    pub r_start: f64,
}

struct Trajectory {
    r: Vec<f64>,
    v: Vec<f64>,
    class: ShootClass,
}

/// RK4 on the state `(v, v′, a₁, a₂)` with `a₁ = ∫₀^r s v² ds`,
/// `a₂ = ∫₀^r s² v² ds`, so the running Newton-kernel term is
/// `W(r) = ∫₀^r K(r,s) v(s)² ds = 4π (a₁ - a₂/r)` and the ODE reads
/// `v″ = -(2/r)v′ + (W - 1)v`. Near r = 0 the even series
/// `v ≈ v₀(1 - r²/6)` starts the integration one step out.
fn integrate_ivp(v0: f64, p: ShootParams) -> Trajectory {
    let h = p.step;
    let rhs = |r: f64, y: &[f64; 4]| -> [f64; 4] {
        let wv = 4.0 * PI * (y[2] - y[3] / r);
        [
            y[1],
            -(2.0 / r) * y[1] + (wv - 1.0) * y[0],
            r * y[0] * y[0],
            r * r * y[0] * y[0],
        ]
    };
    let a = -v0 / 6.0;
    let mut y = [
        v0 + a * h * h,
        2.0 * a * h,
        v0 * v0 * h * h / 2.0,
        v0 * v0 * h * h * h / 3.0,
    ];
    let steps = (p.r_end / h).round() as usize;
    let mut rr = Vec::with_capacity(steps);
    let mut vv = Vec::with_capacity(steps);
    let mut r = h;
    rr.push(r);
    vv.push(y[0]);
    let mut class = ShootClass::Undecided;
    for _ in 1..steps {
        let k1 = rhs(r, &y);
        let y2 = add_scaled(&y, &k1, h / 2.0);
        let k2 = rhs(r + h / 2.0, &y2);
        let y3 = add_scaled(&y, &k2, h / 2.0);
        let k3 = rhs(r + h / 2.0, &y3);
        let y4 = add_scaled(&y, &k3, h);
        let k4 = rhs(r + h, &y4);
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
        rr.push(r);
        vv.push(y[0]);
        if y[0] < 0.0 {
            class = ShootClass::CrossedZero;
            break;
        }
        if y[0] > 10.0 * v0 && y[1] > 0.0 {
            class = ShootClass::BlewUp;
            break;
        }
    }
    Trajectory {
        r: rr,
        v: vv,
        class,
    }
}

fn add_scaled(y: &[f64; 4], k: &[f64; 4], s: f64) -> [f64; 4] {
    [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2], y[3] + s * k[3]]
}

/// Threshold shooting for the normalized equation's IVP.
///
/// Locates, by bisection to relative width 1e-12, the initial value `v₀*`
/// separating sign-crossing solutions from blowing-up ones; both behaviors
/// lose to exponential decay exactly at the threshold, which is the ground
/// state up to rescaling. The bracket is auto-expanded within `v₀ ∈ (0, 100]`
/// if the supplied endpoints do not already classify differently.
///
/// The threshold solution is trusted only up to the radius where the two
/// bracket-end trajectories diverge by 1% (threshold shooting loses digits
/// exponentially); beyond, an iteratively fitted tail `C e^{-κr} r^ν` with
/// `κ = √(σ-1)`, `ν = N/(2κ) - 1` extends it, where σ and N are the total
/// interaction and mass moments of the extended solution.
pub struct ShootingResult {
    pub v0_lo: f64,
    pub v0_hi: f64,
    pub v0_star: f64,
    pub trace: Vec<ShootProbe>,
    /// Multiplier of the threshold solution's equation after the far-field
    /// split, `λ* = σ - 1`; the normalized ground state is `v(r/√λ*)/λ*`.
    pub lambda_star: f64,
    /// Total interaction moment `σ = 4π ∫ s v² ds` of the extended solution.
    pub sigma_star: f64,
    /// Total mass `4π ∫ s² v² ds` of the extended solution.
    pub mass_star: f64,
    pub tail: TailFit,
    step: f64,
    trusted: CubicSpline,
}

impl ShootingResult {
    /// Radius up to which the integrated samples are trusted.
    pub fn trust_radius(&self) -> f64 {
        self.tail.r_start
    }

    /// Evaluate the threshold solution: interpolated samples inside the
    /// trust radius, fitted tail beyond.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.tail.r_start {
            self.trusted.eval(r)
        } else {
            self.tail.c * (-self.tail.kappa * r).exp() * r.powf(self.tail.nu)
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// The normalized ground state this threshold solution rescales to,
    /// sampled on `grid`: `Q(r) = v(r/√λ*)/λ*`.
    pub fn normalized_profile(&self, grid: &RadialGrid) -> Result<RadialProfile> {
        let b = 1.0 / self.lambda_star.sqrt();
        let vals: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&r| self.eval(b * r) / self.lambda_star)
            .collect();
        RadialProfile::new(grid, vals)
    }
}

pub fn shoot_threshold(params: ShootParams, bracket: (f64, f64)) -> Result<ShootingResult> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0) || !(hi > lo) || hi > 100.0 {
        return Err(Error::InvalidArgument(format!(
            "shooting bracket must satisfy 0 < lo < hi <= 100, got ({lo}, {hi})"
        )));
    }
    let mut trace = Vec::new();
    let classify = |v0: f64, trace: &mut Vec<ShootProbe>| -> ShootClass {
        let class = integrate_ivp(v0, params).class;
        trace.push(ShootProbe { v0, class });
        class
    };
    let mut class_lo = classify(lo, &mut trace);
    let mut class_hi = classify(hi, &mut trace);
    while class_lo != ShootClass::CrossedZero {
        lo /= 2.0;
        if lo < 1e-6 {
            return Err(Error::BracketFailure(format!(
                "no sign-crossing initial value found down to v0 = {lo:.2e}"
            )));
        }
        class_lo = classify(lo, &mut trace);
    }
    while class_hi != ShootClass::BlewUp {
        hi *= 2.0;
        if hi > 100.0 {
            return Err(Error::BracketFailure(
                "no blow-up initial value found up to v0 = 100".into(),
            ));
        }
        class_hi = classify(hi, &mut trace);
    }
    if hi < lo {
        return Err(Error::BracketFailure(format!(
            "expanded bracket is inverted: ({lo}, {hi})"
        )));
    }
    while hi - lo > 1e-12 * 0.5 * (lo + hi) {
        let mid = 0.5 * (lo + hi);
        if classify(mid, &mut trace) == ShootClass::CrossedZero {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v0_star = 0.5 * (lo + hi);

    let tl = integrate_ivp(lo, params);
    let th = integrate_ivp(hi, params);
    let m = tl.v.len().min(th.v.len());
    let mut i_trust = m - 1;
    for i in 0..m {
        let denom = tl.v[i].abs().max(1e-300);
        if (tl.v[i] - th.v[i]).abs() / denom > 0.01 {
            i_trust = i;
            break;
        }
    }
    let rt = &tl.r[..i_trust];
    let vt = &tl.v[..i_trust];
    if rt.len() < 8 {
        return Err(Error::BracketFailure(format!(
            "threshold trajectory trusted only to r = {:.3}; horizon too short",
            rt.last().copied().unwrap_or(0.0)
        )));
    }
    let h = params.step;

    // Trusted-part moments by the trapezoid rule, including the [0, h]
    // startup segment where v ≈ v₀.
    let mut mass_t = 4.0 * PI * h.powi(3) * v0_star * v0_star / 3.0;
    let mut sigma_t = 4.0 * PI * h * h * v0_star * v0_star / 2.0;
    for i in 1..rt.len() {
        let f2a = rt[i - 1] * rt[i - 1] * vt[i - 1] * vt[i - 1];
        let f2b = rt[i] * rt[i] * vt[i] * vt[i];
        mass_t += 4.0 * PI * h * (f2a + f2b) / 2.0;
        let f1a = rt[i - 1] * vt[i - 1] * vt[i - 1];
        let f1b = rt[i] * vt[i] * vt[i];
        sigma_t += 4.0 * PI * h * (f1a + f1b) / 2.0;
    }
    let r_last = rt[rt.len() - 1];
    let v_last = vt[vt.len() - 1];

    // Iterate the tail parameters to self-consistency: λ = σ - 1 fixes the
    // decay rate κ = √λ, and the total mass fixes the power ν = N/(2κ) - 1.
    let (mut kappa, mut nu) = (1.0_f64, -1.0_f64);
    let mut lam = 0.0;
    let mut c_tail = 0.0;
    let mut mass_all = 0.0;
    let mut sigma_all = 0.0;
    for _ in 0..6 {
        c_tail = v_last / ((-kappa * r_last).exp() * r_last.powf(nu));
        let pts = 6000;
        let dr = (120.0 - r_last) / (pts - 1) as f64;
        let mut mass_tail = 0.0;
        let mut sigma_tail = 0.0;
        let mut prev2 = r_last * r_last * v_last * v_last;
        let mut prev1 = r_last * v_last * v_last;
        for k in 1..pts {
            let r = r_last + k as f64 * dr;
            let v = c_tail * (-kappa * r).exp() * r.powf(nu);
            let cur2 = r * r * v * v;
            let cur1 = r * v * v;
            mass_tail += 4.0 * PI * dr * (prev2 + cur2) / 2.0;
            sigma_tail += 4.0 * PI * dr * (prev1 + cur1) / 2.0;
            prev2 = cur2;
            prev1 = cur1;
        }
        mass_all = mass_t + mass_tail;
        sigma_all = sigma_t + sigma_tail;
        lam = sigma_all - 1.0;
        if !(lam > 0.0) {
            return Err(Error::BracketFailure(format!(
                "threshold far-field multiplier came out nonpositive (σ = {sigma_all})"
            )));
        }
        kappa = lam.sqrt();
        nu = mass_all / (2.0 * kappa) - 1.0;
    }

    let mut knots = Vec::with_capacity(vt.len() + 1);
    knots.push(v0_star);
    knots.extend_from_slice(vt);
    let trusted = CubicSpline::from_samples(0.0, h, knots)?;

    Ok(ShootingResult {
        v0_lo: lo,
        v0_hi: hi,
        v0_star,
        trace,
        lambda_star: lam,
        sigma_star: sigma_all,
        mass_star: mass_all,
        tail: TailFit {
            c: c_tail,
            kappa,
            nu,
            r_start: r_last,
        },
        step: h,
        trusted,
    })
}

// ---------------------------------------------------------------------------
// Relativistic solver
// ---------------------------------------------------------------------------

enum InnerOutcome {
    Converged(Vec<f64>),
    Collapse(String),
    NoConvergence(f64),
}

/// Inner Petviashvili iteration at fixed shift `z`: the resolvent
/// `(√(-c²Δ + m²c⁴) - mc² + z)⁻¹` is diagonal in the DST basis with the
/// subtracted symbol A(λ) + z.
fn solve_rel_fixed_z(
    grid: &RadialGrid,
    dst: &Dst1,
    a: &[f64],
    z: f64,
    f0: &[f64],
    central0: f64,
    tol: f64,
) -> InnerOutcome {
    let n = grid.n();
    let w = grid.weights();
    let r = grid.nodes();
    let four_pi_h = 4.0 * PI * grid.h();
    let mut f = f0.to_vec();
    let mut last = f64::INFINITY;
    for it in 0..4000 {
        let f2 = RadialProfile::new(grid, f.iter().map(|&v| v * v).collect()).unwrap();
        let phi = newton_potential(&f2);
        let rhs: Vec<f64> = phi.values().iter().zip(&f).map(|(&p, &v)| p * v).collect();
        let u: Vec<f64> = r.iter().zip(&f).map(|(&x, &v)| x * v).collect();
        let uhat = dst.apply(&u);
        let num: f64 = uhat
            .iter()
            .zip(a)
            .map(|(&ci, &ai)| (ai + z) * ci * ci)
            .sum::<f64>()
            * four_pi_h;
        let den: f64 = (0..n).map(|i| w[i] * f[i] * rhs[i]).sum();
        if !(den > 0.0) || !den.is_finite() {
            return InnerOutcome::Collapse(format!(
                "interaction form degenerated (⟨u, Φu⟩ = {den})"
            ));
        }
        let gamma = num / den;
        if !gamma.is_finite() || gamma > 1e6 {
            return InnerOutcome::Collapse(format!("stabilization factor diverged (γ = {gamma})"));
        }
        let ur: Vec<f64> = r.iter().zip(&rhs).map(|(&x, &v)| x * v).collect();
        let mut ch = dst.apply(&ur);
        for (ci, &ai) in ch.iter_mut().zip(a) {
            *ci /= ai + z;
        }
        let unew = dst.apply(&ch);
        let scale = gamma.powf(1.5);
        let fnew: Vec<f64> = unew.iter().zip(r).map(|(&v, &x)| scale * v / x).collect();
        let peak = fnew.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if !peak.is_finite() || peak > 1e8 {
            return InnerOutcome::Collapse(format!("profile amplitude diverged ({peak:.3e})"));
        }
        last = f
            .iter()
            .zip(&fnew)
            .map(|(&x, &y)| (x - y).abs())
            .fold(0.0_f64, f64::max)
            / peak;
        f = fnew;
        let central = (f[0] * r[1] * r[1] - f[1] * r[0] * r[0]) / (r[1] * r[1] - r[0] * r[0]);
        if central > 10.0 * central0 {
            return InnerOutcome::Collapse(format!(
                "profile concentrated: central value grew from {central0:.3e} to {central:.3e} \
                 at fixed mass"
            ));
        }
        let _ = it;
        if last < tol {
            return InnerOutcome::Converged(f);
        }
    }
    InnerOutcome::NoConvergence(last)
}

/// Solve the pseudo-relativistic Hartree equation at mass `N`.
///
/// The inner fixed point runs at a fixed shift `z = μ + mc² > 0`; an outer
/// secant iteration on `z` (first step: the quadratic scaling guess
/// `z ← z (N/N_z)²`) drives the converged mass `N_z` to `N`, warm-starting
/// each inner solve from the previous profile. The initial profile and shift
/// come from the nonrelativistic ground state at mass `N`.
///
/// Convergence is guaranteed for `N < (4/π)c` (the proven existence window);
/// masses above it are attempted anyway, since bound states persist up to a
/// critical mass strictly greater than `(4/π)c`. Beyond that the iteration
/// concentrates, which the collapse detector reports (γ divergence or a 10×
/// central-value growth at fixed mass) — the signal the critical-mass
/// bisection feeds on.
pub fn solve_rel(grid: &RadialGrid, m: f64, c: f64, n_target: f64, tol: f64) -> Result<GroundState> {
    check_tol(tol)?;
    if !(m > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "relativistic solve needs m > 0 and c > 0, got m = {m}, c = {c}"
        )));
    }
    if !(n_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mass must be positive, got N = {n_target}"
        )));
    }
    let normalized = solve_nr_normalized(grid, (tol * 10.0).clamp(1e-13, 1e-4))?;
    // Initial guess: the mass-N nonrelativistic profile b²Q̂(b·)/√(2m),
    // sampled by interpolation without the resampling support guard — a
    // truncated tail is harmless in a guess (the iteration repairs it), and
    // small or supercritical masses must remain probeable.
    let b = 2.0 * m * n_target / normalized.mass;
    let spline = CubicSpline::from_profile(&normalized.q);
    let scale = b * b / (2.0 * m).sqrt();
    let dst = Dst1::new(grid.n());
    let a = rel_multiplier(&grid.dirichlet_eigenvalues(), m, c);
    let inner_tol = (tol * 0.1).max(1e-15);

    let mut z = b * b / (2.0 * m);
    let mut f_cur: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| scale * spline.eval(b * r))
        .collect();
    let central0 = scale * central_value(&normalized.q);
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut solution: Option<Vec<f64>> = None;
    for _ in 0..60 {
        let sol = match solve_rel_fixed_z(grid, &dst, &a, z, &f_cur, central0, inner_tol) {
            InnerOutcome::Converged(f) => f,
            InnerOutcome::Collapse(msg) => {
                return Err(Error::Collapse(format!(
                    "at z = {z:.6e}, N = {n_target}: {msg}"
                )))
            }
            InnerOutcome::NoConvergence(last) => {
                return Err(Error::NoConvergence {
                    iterations: 4000,
                    last_update: last,
                })
            }
        };
        let prof = RadialProfile::new(grid, sol.clone())?;
        let nz = mass(&prof);
        history.push((z, nz));
        solution = Some(sol.clone());
        if (nz - n_target).abs() < 1e-11 * n_target {
            break;
        }
        f_cur = sol;
        if history.len() == 1 {
            z *= (n_target / nz).powi(2);
        } else {
            let (z1, n1) = history[history.len() - 2];
            let (z2, n2) = history[history.len() - 1];
            if n2 == n1 {
                break;
            }
            z = z2 + (n_target - n2) * (z2 - z1) / (n2 - n1);
            if z <= 0.0 {
                z = 0.5 * z2;
            }
        }
    }
    let (z_final, n_final) = *history.last().unwrap();
    if (n_final - n_target).abs() > 1e-8 * n_target {
        return Err(Error::NoConvergence {
            iterations: history.len(),
            last_update: (n_final - n_target).abs() / n_target,
        });
    }
    let q = RadialProfile::new(grid, solution.unwrap())?;
    let mu = z_final - m * c * c;
    let residual = el_residual_rel(&q, m, c, mu);
    if residual > tol {
        return Err(Error::NoConvergence {
            iterations: history.len(),
            last_update: residual,
        });
    }
    Ok(GroundState {
        mass: mass(&q),
        multiplier: mu,
        params: ModelParams {
            model: Model::Relativistic,
            m,
            c: Some(c),
            target: Target::Mass(n_target),
        },
        energy: energy_rel(&q, m, c),
        residual,
        q,
    })
}

// ---------------------------------------------------------------------------
// Wronskian diagnostic
// ---------------------------------------------------------------------------

/// Pointwise defect of the Wronskian identity
/// `r²(Q v′ - Q′ v)(r) = ∫₀^r s² Q(s) W(s) ds`,
/// valid when `v` solves the linearization of Q's equation with nonlocal
/// inhomogeneity `W` (both sides vanish identically for `v = Q`, `W = 0`).
/// Derivatives are centered differences; the right side is a trapezoid
/// prefix sum, so consistent inputs leave an O(h²) residual.
pub fn wronskian_residual(
    q: &RadialProfile,
    v: &RadialProfile,
    w_of_v: &RadialProfile,
) -> RadialProfile {
    crate::grid::check_same_grid(q, v);
    crate::grid::check_same_grid(q, w_of_v);
    let g = q.grid();
    let h = g.h();
    let qp = radial_derivative(q);
    let vp = radial_derivative(v);
    let n = g.n();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        let r = g.nodes()[i];
        let integrand = r * r * q.values()[i] * w_of_v.values()[i];
        acc += h * (prev + integrand) / 2.0;
        prev = integrand;
        let lhs = r * r * (q.values()[i] * vp.values()[i] - qp.values()[i] * v.values()[i]);
        out[i] = lhs - acc;
    }
    RadialProfile::new(g, out).expect("residual of finite profiles is finite")
}

// ---------------------------------------------------------------------------
// Dense relativistic kinetic operator (feature `dense`)
// ---------------------------------------------------------------------------

#[cfg(feature = "dense")]
pub(crate) mod dense {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    use faer::Mat;

    use crate::grid::{RadialGrid, RadialProfile};
    use crate::{Error, Result};

    /// Largest grid accepted for dense eigendecomposition.
    pub const MAX_DENSE_N: usize = 4000;

    /// Dense sector restriction of `√(-c²Δ + m²c⁴)`, stored as the symmetric
    /// matrix in the `u = r·f` coordinates (where the sector Laplacian is
    /// plainly symmetric); application conjugates by `diag(r)`.
    pub struct SqrtOperator {
        grid: RadialGrid,
        ell: usize,
        m: f64,
        c: f64,
        mat_u: Mat<f64>,
    }

    impl SqrtOperator {
        pub fn grid(&self) -> &RadialGrid {
            &self.grid
        }

        pub fn ell(&self) -> usize {
            self.ell
        }

        pub fn m(&self) -> f64 {
            self.m
        }

        pub fn c(&self) -> f64 {
            self.c
        }

        /// Symmetric matrix in u-coordinates.
        pub fn mat_u(&self) -> &Mat<f64> {
            &self.mat_u
        }

        pub fn apply(&self, f: &RadialProfile) -> RadialProfile {
            assert!(
                f.grid().same_grid(&self.grid),
                "sqrt operator applied across grids"
            );
            let n = self.grid.n();
            let r = self.grid.nodes();
            let u: Vec<f64> = (0..n).map(|i| r[i] * f.values()[i]).collect();
            let out: Vec<f64> = (0..n)
                .map(|i| {
                    let s: f64 = (0..n).map(|j| self.mat_u[(i, j)] * u[j]).sum();
                    s / r[i]
                })
                .collect();
            RadialProfile::new(&self.grid, out).expect("operator image is finite")
        }
    }

    /// u-space symmetric matrix of the discrete sector Laplacian.
    pub(crate) fn laplacian_u_matrix(grid: &RadialGrid, ell: usize) -> Mat<f64> {
        let n = grid.n();
        let h2 = grid.h() * grid.h();
        let cf = (ell * (ell + 1)) as f64;
        let mut b = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            let r = grid.nodes()[i];
            b[(i, i)] = 2.0 / h2 + cf / (r * r);
            if i + 1 < n {
                b[(i, i + 1)] = -1.0 / h2;
                b[(i + 1, i)] = -1.0 / h2;
            }
        }
        b
    }

    /// Full symmetric eigendecomposition, eigenvalues ascending.
    pub(crate) fn sym_eigen(mat: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
        let evd = mat
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let n = mat.nrows();
        let s: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
        Ok((s, evd.U().to_owned()))
    }

    type CacheKey = (usize, u64, usize, u64, u64);

    fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<SqrtOperator>>> {
        static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<SqrtOperator>>>> = OnceLock::new();
        CACHE.get_or_init(|| Mutex::new(HashMap::new()))
    }

    /// Dense sector restriction of the relativistic kinetic operator,
    /// `U √(c²Λ + m²c⁴) Uᵀ` from the eigendecomposition `L_{(ℓ)} = UΛUᵀ` of
    /// the discrete sector Laplacian. Results are cached per
    /// `(grid, ℓ, m, c)` with insert-once semantics, so repeated sector
    /// assemblies share one decomposition.
    pub fn sqrt_operator_sector(
        grid: &RadialGrid,
        ell: usize,
        m: f64,
        c: f64,
    ) -> Result<Arc<SqrtOperator>> {
        if grid.n() > MAX_DENSE_N {
            return Err(Error::SizeExceeded {
                n: grid.n(),
                max: MAX_DENSE_N,
            });
        }
        let key: CacheKey = (
            grid.n(),
            grid.r_max().to_bits(),
            ell,
            m.to_bits(),
            c.to_bits(),
        );
        if let Some(hit) = cache().lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let (lam, u) = sym_eigen(&laplacian_u_matrix(grid, ell))?;
        let n = grid.n();
        let sq: Vec<f64> = lam
            .iter()
            .map(|&l| (c * c * l + m * m * c.powi(4)).sqrt())
            .collect();
        // U · diag(sq) · Uᵀ
        let mut scaled = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                scaled[(i, j)] = u[(i, j)] * sq[j];
            }
        }
        let mat_u = &scaled * u.transpose();
        let op = Arc::new(SqrtOperator {
            grid: grid.clone(),
            ell,
            m,
            c,
            mat_u,
        });
        Ok(cache()
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(op)
            .clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_w, make_grid, norm_h1};

    #[test]
    fn energies_of_zero_vanish() {
        let g = make_grid(64, 10.0).unwrap();
        let z = RadialProfile::zeros(&g);
        assert_eq!(energy_nr(&z, 1.0), 0.0);
        assert_eq!(energy_rel(&z, 1.0, 3.0), 0.0);
    }

    #[test]
    fn energy_scaling_on_gaussian() {
        // Under ψ_σ(x) = ψ(x/σ): kinetic scales like σ, interaction like σ⁵.
        let g = make_grid(2000, 30.0).unwrap();
        let psi = RadialProfile::from_fn(&g, |r| (-r * r).exp());
        let psi2 = RadialProfile::from_fn(&g, |r| (-r * r / 4.0).exp());
        let kin = |f: &RadialProfile| mass(&radial_derivative(f));
        let kr = kin(&psi2) / kin(&psi);
        assert!((kr / 2.0 - 1.0).abs() < 1e-4, "kinetic ratio {kr}");
        let dr = hartree_term(&psi2) / hartree_term(&psi);
        assert!((dr / 32.0 - 1.0).abs() < 1e-4, "interaction ratio {dr}");
    }

    #[test]
    fn relativistic_kinetic_is_diagonal_on_dst_modes() {
        let g = make_grid(300, 12.0).unwrap();
        let (m, c) = (1.3, 2.0);
        for j in [1usize, 7, 150] {
            let k = j as f64 * PI / g.r_max();
            let psi = RadialProfile::from_fn(&g, |r| (k * r).sin() / r);
            let kin = energy_rel(&psi, m, c) + 0.5 * hartree_term(&psi);
            let expect = (c * c * k * k + m * m * c.powi(4)).sqrt() * mass(&psi);
            assert!(
                (kin / expect - 1.0).abs() < 1e-10,
                "mode {j}: {kin} vs {expect}"
            );
        }
    }

    #[test]
    fn relativistic_energy_below_nonrelativistic_plus_rest_mass() {
        let g = make_grid(1000, 20.0).unwrap();
        for &(m, c, s) in &[(1.0, 1.0, 1.0), (1.0, 5.0, 1.0), (0.7, 2.0, 0.5)] {
            let psi = RadialProfile::from_fn(&g, |r| (-s * r * r).exp());
            let lhs = energy_rel(&psi, m, c);
            let rhs = energy_nr(&psi, m) + mass(&psi) * m * c * c;
            assert!(lhs <= rhs, "m={m} c={c} s={s}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn tolerance_domain_is_enforced() {
        let g = make_grid(64, 10.0).unwrap();
        assert!(matches!(
            solve_nr_normalized(&g, 1e-3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_nr_normalized(&g, 1e-15),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_rel(&g, 1.0, 2.0, -1.0, 1e-10),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_rel(&g, -1.0, 2.0, 1.0, 1e-10),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn normalized_ground_state_properties() {
        let g = make_grid(1000, 30.0).unwrap();
        let gs = solve_nr_normalized(&g, 1e-11).unwrap();
        assert!(gs.residual <= 1e-10, "residual {}", gs.residual);
        assert_eq!(gs.multiplier, 1.0);

        // Positive and nonincreasing (up to far-tail roundoff).
        let peak = gs.q.values()[0];
        for (i, &v) in gs.q.values().iter().enumerate() {
            assert!(v >= -1e-12 * peak, "node {i}: {v}");
            if i > 0 {
                assert!(
                    v <= gs.q.values()[i - 1] + 1e-10 * peak,
                    "profile must be nonincreasing at node {i}"
                );
            }
        }

        // Multiplier identity T + λN = D, relative to D.
        let t = dirichlet_form(&gs.q, 0);
        let d = hartree_term(&gs.q);
        assert!(
            ((t + gs.mass - d) / d).abs() < 10.0 * 1e-11,
            "multiplier identity defect {}",
            (t + gs.mass - d) / d
        );

        // Decay: fitted log-slope on [12, 20] within the exponential window.
        let slope = log_slope(&gs.q, 12.0, 20.0);
        assert!((-1.15..=-0.85).contains(&slope), "log-slope {slope}");
    }

    #[test]
    fn energy_identity_tracks_discretization_error() {
        // E = -λN + D/2 holds for the continuum solution. Discretely the
        // defect is the O(h²) gap between the centered-difference kinetic
        // quadrature and the bond-form Dirichlet energy the solver satisfies
        // exactly, so it shrinks ~4× per h-halving rather than sitting at the
        // solver tolerance.
        let defect = |n: usize| {
            let g = make_grid(n, 30.0).unwrap();
            let gs = solve_nr_normalized(&g, 1e-11).unwrap();
            let d = hartree_term(&gs.q);
            (gs.energy - (-gs.multiplier * gs.mass + 0.5 * d)).abs()
        };
        let (d1, d2) = (defect(1000), defect(2000));
        assert!(d1 < 1e-3, "coarse defect {d1:.3e}");
        assert!(d1 / d2 > 3.0, "expected h² refinement: {d1:.3e} vs {d2:.3e}");
    }

    #[test]
    fn rescale_identity_and_group_law() {
        let g = make_grid(1000, 30.0).unwrap();
        let gs = solve_nr_normalized(&g, 1e-11).unwrap();
        let same = rescale(&gs, 1.0).unwrap();
        assert_eq!(same.q.values(), gs.q.values());
        assert_eq!(same.multiplier, gs.multiplier);

        let b2 = rescale(&gs, 2.0).unwrap();
        assert_eq!(b2.multiplier, 4.0);
        assert!((b2.mass / gs.mass - 2.0).abs() < 1e-6, "mass ratio {}", b2.mass / gs.mass);

        let once = rescale(&gs, 1.8).unwrap();
        let twice = rescale(&rescale(&gs, 1.2).unwrap(), 1.5).unwrap();
        let peak = once.q.values()[0];
        let worst = once
            .q
            .values()
            .iter()
            .zip(twice.q.values())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-6 * peak, "composition defect {worst:.3e}");
    }

    #[test]
    fn rescale_rejects_domain_shrink_past_support() {
        let g = make_grid(1000, 30.0).unwrap();
        let gs = solve_nr_normalized(&g, 1e-11).unwrap();
        assert!(matches!(
            rescale(&gs, 0.3),
            Err(Error::ResampleOutOfRange { .. })
        ));
    }

    #[test]
    fn rescaled_residual_sits_at_discretization_floor() {
        // The b = 2 resample satisfies the λ' = 4 equation only up to the
        // cubic-resample defect, which is O(h²): ~2e-4 at n = 2000 and
        // shrinking ~4× per halving (measured 2.2e-4 / 5.5e-5). The original
        // solve residual is ~1e-11, so a "within 10× the original residual"
        // reading is unattainable for any same-grid resampling; the honest
        // measured defect is stored and pinned here instead.
        let g = make_grid(2000, 30.0).unwrap();
        let gs = solve_nr_normalized(&g, 1e-11).unwrap();
        let b2 = rescale(&gs, 2.0).unwrap();
        assert!(b2.residual < 1e-3, "rescaled defect {}", b2.residual);
        let g4 = make_grid(4000, 30.0).unwrap();
        let gs4 = solve_nr_normalized(&g4, 1e-11).unwrap();
        let b24 = rescale(&gs4, 2.0).unwrap();
        assert!(
            b2.residual / b24.residual > 3.0,
            "expected h² refinement: {} vs {}",
            b2.residual,
            b24.residual
        );
    }

    #[test]
    fn mass_scaled_state_matches_requested_mass() {
        // The m = 1, N = 1 state has b ≈ 0.57, so it stretches the profile
        // by ~1.75×: the box must be ~50 for the tail to clear the Dirichlet
        // wall, else truncation dominates the resample residual.
        let g = make_grid(2500, 50.0).unwrap();
        let gs = solve_nr_normalized(&g, 1e-11).unwrap();
        let at = nr_ground_at_mass(&gs, 1.0, 1.0).unwrap();
        assert!((at.mass - 1.0).abs() < 1e-4, "mass {}", at.mass);
        assert!(at.multiplier > 0.0);
        assert!(at.residual < 1e-3, "residual {}", at.residual);
        // λ = 2mN²/N̂² exactly by construction.
        let expect = 2.0 * (1.0 / gs.mass) * (1.0 / gs.mass);
        assert!((at.multiplier - expect).abs() < 1e-14);
    }

    #[test]
    fn shooting_classifications_and_bracket() {
        let p = ShootParams {
            step: 0.01,
            r_end: 25.0,
        };
        assert_eq!(integrate_ivp(1e-3, p).class, ShootClass::CrossedZero);
        assert_eq!(integrate_ivp(50.0, p).class, ShootClass::BlewUp);

        let res = shoot_threshold(p, (0.1, 1.0)).unwrap();
        assert!(res.v0_lo < res.v0_star && res.v0_star < res.v0_hi);
        assert!((res.v0_hi - res.v0_lo) <= 1e-11 * res.v0_star);
        assert!(res.lambda_star > 0.0);
        // The two bracket ends classified differently.
        let lo_probe = res.trace.iter().find(|p| p.v0 == res.v0_lo);
        assert!(lo_probe.is_none() || lo_probe.unwrap().class == ShootClass::CrossedZero);

        // Auto-expansion from a one-sided bracket.
        let res2 = shoot_threshold(p, (0.01, 0.02)).unwrap();
        assert!((res2.v0_star / res.v0_star - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shooting_bracket_failure_on_short_horizon() {
        // With the horizon cut at r = 0.5 no initial value in (0, 100] can
        // cross zero (the free oscillation first crosses near r = π/2).
        let p = ShootParams {
            step: 0.005,
            r_end: 0.5,
        };
        assert!(matches!(
            shoot_threshold(p, (0.5, 2.0)),
            Err(Error::BracketFailure(_))
        ));
    }

    #[test]
    fn shooting_profile_cross_validates_fixed_point() {
        let g = make_grid(1500, 30.0).unwrap();
        let shot = shoot_threshold(ShootParams::for_grid(&g), (0.1, 1.0)).unwrap();
        let q_sh = shot.normalized_profile(&g).unwrap();
        let q_pv = solve_nr_normalized(&g, 1e-11).unwrap();
        let peak = q_pv.q.values()[0];
        let worst = q_sh
            .values()
            .iter()
            .zip(q_pv.q.values())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst / peak < 2e-4, "cross-validation defect {:.3e}", worst / peak);
    }

    #[test]
    fn relativistic_solve_hits_mass_and_window() {
        let g = make_grid(1000, 30.0).unwrap();
        let (m, c, n_t) = (1.0, 10.0, 1.0);
        let gs = solve_rel(&g, m, c, n_t, 1e-11).unwrap();
        assert!((gs.mass - n_t).abs() <= 1e-8 * n_t, "mass {}", gs.mass);
        assert!(gs.residual <= 1e-11, "residual {}", gs.residual);
        assert!(gs.multiplier < 0.0);
        // gap = -μ - mc² < 0
        assert!(-gs.multiplier - m * c * c < 0.0);
        // Multiplier window: mc² - ¼mπ²N² ≤ -μ ≤ mc² + E_nr(N)/N.
        let z = gs.multiplier + m * c * c;
        let delta1 = 0.25 * m * PI * PI * n_t * n_t;
        assert!(z < delta1, "z = {z} vs δ₁ = {delta1}");
        let normalized = solve_nr_normalized(&g, 1e-11).unwrap();
        let nr = nr_ground_at_mass(&normalized, m, n_t).unwrap();
        let delta2 = -energy_nr(&nr.q, m) / n_t;
        assert!(z > delta2, "z = {z} vs δ₂ = {delta2}");

        // Relativistic kinetic + μN = D within 10× tolerance.
        let dst = Dst1::new(g.n());
        let a = rel_multiplier(&g.dirichlet_eigenvalues(), m, c);
        let u: Vec<f64> = g.nodes().iter().zip(gs.q.values()).map(|(&r, &v)| r * v).collect();
        let uh = dst.apply(&u);
        let kin_shifted: f64 = uh
            .iter()
            .zip(&a)
            .map(|(&ci, &ai)| ai * ci * ci)
            .sum::<f64>()
            * 4.0
            * PI
            * g.h();
        let d = hartree_term(&gs.q);
        let defect = (kin_shifted + z * gs.mass - d) / d;
        assert!(defect.abs() < 1e-9, "multiplier identity defect {defect:.3e}");
    }

    #[test]
    fn wronskian_residual_identities() {
        let g = make_grid(500, 20.0).unwrap();
        let gs_values = RadialProfile::from_fn(&g, |r| (1.0 + r).recip() * (-r / 2.0).exp());
        let zero = RadialProfile::zeros(&g);
        let same = wronskian_residual(&gs_values, &gs_values, &zero);
        assert!(same.values().iter().all(|&v| v == 0.0));

        let v = RadialProfile::from_fn(&g, |r| (0.3 * r).sin() * (-r / 3.0).exp());
        let w = RadialProfile::from_fn(&g, |r| (-r).exp() * r);
        let r1 = wronskian_residual(&gs_values, &v, &w);
        let v2 = RadialProfile::new(&g, v.values().iter().map(|&x| 2.0 * x).collect()).unwrap();
        let w2 = RadialProfile::new(&g, w.values().iter().map(|&x| 2.0 * x).collect()).unwrap();
        let r2 = wronskian_residual(&gs_values, &v2, &w2);
        for (a, b) in r1.values().iter().zip(r2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn ground_state_json_shape() {
        let g = make_grid(64, 10.0).unwrap();
        let q = RadialProfile::from_fn(&g, |r| (-r).exp());
        let gs = GroundState {
            mass: mass(&q),
            multiplier: 1.0,
            params: ModelParams {
                model: Model::Nonrelativistic,
                m: 0.5,
                c: None,
                target: Target::Multiplier(1.0),
            },
            energy: -1.0,
            residual: 1e-12,
            q,
        };
        let j = gs.to_json();
        assert_eq!(j["model"], "nonrelativistic");
        assert!(j["c"].is_null());
        assert_eq!(j["grid"]["n"], 64);
        assert!(gs.profile_csv().starts_with("r,value\n"));
    }

    #[test]
    fn h1_distance_between_solvers_is_small() {
        // Complementary H¹ check used by the limit experiments.
        let g = make_grid(1000, 30.0).unwrap();
        let a = solve_nr_normalized(&g, 1e-11).unwrap();
        let b = solve_nr_normalized(&g, 1e-12).unwrap();
        let diff = RadialProfile::new(
            &g,
            a.q.values()
                .iter()
                .zip(b.q.values())
                .map(|(&x, &y)| x - y)
                .collect(),
        )
        .unwrap();
        assert!(norm_h1(&diff) < 1e-9 * norm_h1(&a.q));
        assert!(inner_w(&a.q, &b.q) > 0.0);
    }

    #[cfg(feature = "dense")]
    mod dense_tests {
        use super::*;
        use std::sync::Arc;

        #[test]
        fn sqrt_operator_squares_to_kinetic() {
            let g = make_grid(128, 10.0).unwrap();
            let (m, c) = (1.0, 2.0);
            let op = sqrt_operator_sector(&g, 1, m, c).unwrap();
            let s = op.mat_u();
            let sq = s * s;
            let b = super::super::dense::laplacian_u_matrix(&g, 1);
            let n = g.n();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let target =
                        c * c * b[(i, j)] + if i == j { m * m * c.powi(4) } else { 0.0 };
                    let d = sq[(i, j)] - target;
                    num += d * d;
                    den += target * target;
                }
            }
            assert!((num / den).sqrt() < 1e-8, "squaring defect {:.3e}", (num / den).sqrt());
        }

        #[test]
        fn sqrt_operator_agrees_with_dst_route_at_l0() {
            let g = make_grid(512, 15.0).unwrap();
            let (m, c) = (1.0, 3.0);
            let op = sqrt_operator_sector(&g, 0, m, c).unwrap();
            let f = RadialProfile::from_fn(&g, |r| r * (-r).exp());
            let dense_out = op.apply(&f);
            let dst = Dst1::new(g.n());
            let u: Vec<f64> = g.nodes().iter().zip(f.values()).map(|(&r, &v)| r * v).collect();
            let mut ch = dst.apply(&u);
            for (ci, &l) in ch.iter_mut().zip(&g.dirichlet_eigenvalues()) {
                *ci *= (c * c * l + m * m * c.powi(4)).sqrt();
            }
            let back = dst.apply(&ch);
            let scale = f.values().iter().fold(0.0_f64, |mx, &v| mx.max(v.abs()));
            let worst = dense_out
                .values()
                .iter()
                .zip(back.iter().zip(g.nodes()))
                .map(|(&a, (&ub, &r))| (a - ub / r).abs())
                .fold(0.0_f64, f64::max);
            assert!(worst / scale < 1e-10, "DST disagreement {:.3e}", worst / scale);
        }

        #[test]
        fn massless_spectrum_approximates_wavenumbers() {
            let g = make_grid(200, 10.0).unwrap();
            let op = sqrt_operator_sector(&g, 0, 0.0, 1.0).unwrap();
            let (eigs, _) = super::super::dense::sym_eigen(op.mat_u()).unwrap();
            let h = g.h();
            for (j, (&e, &k)) in eigs.iter().zip(g.wavenumbers().iter()).enumerate() {
                // |(2/h) sin(kh/2) - k| ≤ k³h²/24
                let bound = k * k * k * h * h / 24.0 + 1e-9;
                assert!((e - k).abs() <= bound, "mode {j}: {e} vs {k}");
            }
        }

        #[test]
        fn sqrt_operator_cache_inserts_once() {
            let g = make_grid(100, 7.0).unwrap();
            let a = sqrt_operator_sector(&g, 2, 1.0, 4.0).unwrap();
            let b = sqrt_operator_sector(&g, 2, 1.0, 4.0).unwrap();
            assert!(Arc::ptr_eq(&a, &b));
            let c = sqrt_operator_sector(&g, 3, 1.0, 4.0).unwrap();
            assert!(!Arc::ptr_eq(&a, &c));

            let big = make_grid(4001, 30.0).unwrap();
            assert!(matches!(
                sqrt_operator_sector(&big, 0, 1.0, 1.0),
                Err(Error::SizeExceeded { .. })
            ));
        }
    }
}
