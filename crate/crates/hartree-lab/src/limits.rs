//! The nonrelativistic limit, studied experimentally.
//!
//! Everything here orbits one question: how does the relativistic ground
//! state at fixed mass `N` behave as the light speed `c` grows? The multiplier
//! satisfies `-μ_c - mc² → -λ` where `λ` is the nonrelativistic multiplier at
//! the same mass, the profiles converge in H¹, and explicit windows pin `-μ_c`
//! from both sides at every finite `c` (a Herbst-type lower bound and an
//! energy-comparison upper bound). At the other end sits the critical mass:
//! above `N ≈ 2.6·c` (in units `m = 1`) the solver's iterates concentrate
//! instead of converging, and bisecting on that dichotomy brackets the
//! critical constant, which is provably larger than `4c/π`.

use std::f64::consts::PI;

use crate::grid::{norm_h1, CubicSpline, RadialGrid, RadialProfile};
use crate::solve::{nr_ground_at_mass, solve_nr_normalized, solve_rel, GroundState};
use crate::{Error, Result};

/// Truth values of the multiplier and uniformity bounds for one sweep record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundFlags {
    /// Sharper Herbst lower bound `-μ_c ≥ mc²√(1 - (πN/2c)²)`; reported as
    /// false outside its regime `N < (2/π)c`.
    pub herbst_ok: bool,
    /// Lower window edge `-μ_c ≥ mc² - (1/4)mπ²N²`.
    pub delta1_ok: bool,
    /// Upper window edge `-μ_c ≤ mc² + E_nr(N)/N` (note `E_nr(N) < 0`).
    pub delta2_ok: bool,
    /// Sweep-level flag: the running maximum of `‖Q_c‖_{H¹}` has stabilized.
    /// Filled after the sweep completes; false on isolated records.
    pub h1_uniform_ok: bool,
}

/// One converged point of a `c`-sweep at fixed mass.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub c: f64,
    pub m: f64,
    /// Multiplier μ_c of the relativistic state (so `-μ_c` is the ground
    /// energy of the linear operator, slightly below `mc²`).
    pub mu: f64,
    /// `-μ_c - mc²`, negative for every bound state and converging to `-λ`.
    pub gap: f64,
    /// `‖Q_c - Q_∞,N‖_{H¹}` against the mass-N nonrelativistic state.
    pub h1_dist: f64,
    /// `‖Q_c‖_{H¹}`, the quantity that stays uniformly bounded in `c`.
    pub h1_norm: f64,
    /// Relativistic energy functional value.
    pub energy: f64,
    /// Mass of the converged profile (≈ the requested N).
    pub mass: f64,
    pub residual: f64,
    pub bound_flags: BoundFlags,
}

impl SweepRecord {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "c": self.c,
            "m": self.m,
            "mu": self.mu,
            "gap": self.gap,
            "h1_dist": self.h1_dist,
            "h1_norm": self.h1_norm,
            "energy": self.energy,
            "N": self.mass,
            "residual": self.residual,
            "bound_flags": {
                "herbst_ok": self.bound_flags.herbst_ok,
                "delta1_ok": self.bound_flags.delta1_ok,
                "delta2_ok": self.bound_flags.delta2_ok,
                "h1_uniform_ok": self.bound_flags.h1_uniform_ok,
            },
        })
    }
}

/// One sweep position: solver failures are carried per point rather than
/// aborting the remaining points.
#[derive(Debug)]
pub struct SweepPoint {
    pub c: f64,
    pub result: Result<SweepRecord>,
}

/// Bracket around the critical mass at normalization `c` (and `m = 1` by
/// default): the largest mass that still converged and the smallest that
/// collapsed.
#[derive(Clone, Copy, Debug)]
pub struct CriticalMassEstimate {
    pub n_lo: f64,
    pub n_hi: f64,
    pub width: f64,
    pub c: f64,
}

impl CriticalMassEstimate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "N_lo": self.n_lo,
            "N_hi": self.n_hi,
            "width": self.width,
            "c": self.c,
        })
    }
}

/// Evaluate the multiplier-window flags for a solved record, given
/// `E_nr(N)`, the energy of the mass-N nonrelativistic ground state.
///
/// The `h1_uniform_ok` flag is a sweep-level property and is left false here;
/// [`fill_uniform_flags`] sets it once all records of a sweep are in hand.
pub fn mu_bounds_check(record: &SweepRecord, e_nr_n: f64) -> BoundFlags {
    let (m, c, n) = (record.m, record.c, record.mass);
    let neg_mu = -record.mu;
    let mc2 = m * c * c;
    let herbst_ok = if n < (2.0 / PI) * c {
        let s = PI * n / (2.0 * c);
        neg_mu >= mc2 * (1.0 - s * s).sqrt()
    } else {
        false
    };
    BoundFlags {
        herbst_ok,
        delta1_ok: neg_mu >= mc2 - 0.25 * m * PI * PI * n * n,
        delta2_ok: neg_mu <= mc2 + e_nr_n / n,
        h1_uniform_ok: false,
    }
}

/// Solve one sweep point and assemble its record. `reference` is the mass-N
/// nonrelativistic ground state on the same grid and `e_nr_n` its energy;
/// computing them once per sweep keeps the limit comparison non-circular
/// (the target of the convergence claims never comes from the sweep itself).
pub fn sweep_point(
    grid: &RadialGrid,
    m: f64,
    c: f64,
    n_target: f64,
    tol: f64,
    reference: &GroundState,
    e_nr_n: f64,
) -> Result<SweepRecord> {
    let state = solve_rel(grid, m, c, n_target, tol)?;
    let diff = RadialProfile::new(
        grid,
        state
            .q
            .values()
            .iter()
            .zip(reference.q.values())
            .map(|(&a, &b)| a - b)
            .collect(),
    )?;
    let mut record = SweepRecord {
        c,
        m,
        mu: state.multiplier,
        gap: -state.multiplier - m * c * c,
        h1_dist: norm_h1(&diff),
        h1_norm: norm_h1(&state.q),
        energy: state.energy,
        mass: state.mass,
        residual: state.residual,
        bound_flags: BoundFlags::default(),
    };
    record.bound_flags = mu_bounds_check(&record, e_nr_n);
    Ok(record)
}

/// Validate a sweep request: a nonempty `c` list, positive parameters, and
/// the safety margin `N < (2/π)c·0.9` at every requested `c`.
pub fn check_sweep_preconditions(cs: &[f64], m: f64, n_target: f64) -> Result<()> {
    if cs.is_empty() {
        return Err(Error::InvalidArgument("empty sweep list".into()));
    }
    if !(m > 0.0) || !(n_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sweep needs m > 0 and N > 0, got m = {m}, N = {n_target}"
        )));
    }
    for &c in cs {
        if !(n_target < (2.0 / PI) * c * 0.9) {
            return Err(Error::InvalidArgument(format!(
                "c = {c} violates the sweep margin N < (2/π)c·0.9 at N = {n_target}"
            )));
        }
    }
    Ok(())
}

/// Sweep the light speed over `cs` at fixed mass `N`, recording the
/// multiplier gap, the H¹ distance to the nonrelativistic state, and all
/// window flags. Points are returned in ascending `c`; per-point solver
/// failures are carried in the point's `result` without aborting the sweep.
///
/// Every requested `c` must satisfy the safety margin `N < (2/π)c·0.9`, well
/// inside the window where the Herbst bound keeps the linear operator
/// semibounded.
pub fn sweep_c(
    cs: &[f64],
    m: f64,
    n_target: f64,
    grid: &RadialGrid,
    tol: f64,
) -> Result<Vec<SweepPoint>> {
    check_sweep_preconditions(cs, m, n_target)?;
    let mut order = cs.to_vec();
    order.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));

    let normalized = solve_nr_normalized(grid, (tol * 10.0).clamp(1e-13, 1e-4))?;
    let reference = nr_ground_at_mass(&normalized, m, n_target)?;
    let e_nr_n = reference.energy;

    let mut points: Vec<SweepPoint> = order
        .into_iter()
        .map(|c| SweepPoint {
            c,
            result: sweep_point(grid, m, c, n_target, tol, &reference, e_nr_n),
        })
        .collect();
    fill_uniform_flags(&mut points);
    Ok(points)
}

/// Set `h1_uniform_ok` on every converged record of a finished sweep from the
/// stabilization of the running maximum of `‖Q_c‖_{H¹}`.
pub fn fill_uniform_flags(points: &mut [SweepPoint]) {
    let norms: Vec<f64> = points
        .iter()
        .filter_map(|p| p.result.as_ref().ok().map(|r| r.h1_norm))
        .collect();
    let flag = running_max_stable(&norms);
    for p in points.iter_mut() {
        if let Ok(r) = p.result.as_mut() {
            r.bound_flags.h1_uniform_ok = flag;
        }
    }
}

fn running_max_stable(norms: &[f64]) -> bool {
    if norms.len() < 2 {
        return false;
    }
    let mut running = Vec::with_capacity(norms.len());
    let mut cur = f64::NEG_INFINITY;
    for &v in norms {
        cur = cur.max(v);
        running.push(cur);
    }
    let last = running[running.len() - 1];
    let prev = running[running.len() - 2];
    last <= 1.05 * prev
}

/// Uniform H¹ bound over a set of converged records: the maximum norm `M`,
/// and whether the running maximum has stabilized (last two within 5%).
/// A single record yields its own norm with the flag false (stabilization
/// cannot be attested from one point).
pub fn h1_uniform_check(records: &[SweepRecord]) -> Result<(bool, f64)> {
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "uniform-bound check needs at least one record".into(),
        ));
    }
    let norms: Vec<f64> = records.iter().map(|r| r.h1_norm).collect();
    let m = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((running_max_stable(&norms), m))
}

/// Richardson extrapolation of the multiplier gap in `c⁻²` from the two
/// largest-`c` records: with `gap(c) = g∞ + a/c² + o(c⁻²)`,
/// `g∞ ≈ (c₂²·gap₂ - c₁²·gap₁)/(c₂² - c₁²)`. The result should land within a
/// few percent of `-λ` from the nonrelativistic solve at the same mass.
pub fn richardson_gap(records: &[SweepRecord]) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(
            "Richardson extrapolation needs at least two records".into(),
        ));
    }
    let r1 = &records[records.len() - 2];
    let r2 = &records[records.len() - 1];
    let (c1, c2) = (r1.c, r2.c);
    if c1 == c2 {
        return Err(Error::InvalidArgument(
            "Richardson extrapolation needs distinct c values".into(),
        ));
    }
    let (w1, w2) = (c1 * c1, c2 * c2);
    Ok((w2 * r2.gap - w1 * r1.gap) / (w2 - w1))
}

/// Minimized energy at each requested mass, ascending in `N`; per-point
/// failures are recorded in place of the energy. The ground-state energy
/// curve `N ↦ E_c(N)` is strictly concave, which
/// [`second_differences`] makes checkable at sample scale.
pub fn energy_curve(
    ns: &[f64],
    c: f64,
    m: f64,
    grid: &RadialGrid,
    tol: f64,
) -> Result<Vec<(f64, Result<f64>)>> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty mass list".into()));
    }
    for &n in ns {
        if !(n > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "energy curve needs positive masses, got {n}"
            )));
        }
    }
    let mut order = ns.to_vec();
    order.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    Ok(order
        .into_iter()
        .map(|n| (n, solve_rel(grid, m, c, n, tol).map(|s| s.energy)))
        .collect())
}

/// Second divided differences (×2, so they estimate `E″`) over consecutive
/// converged triples of an energy curve; all of them negative is the discrete
/// face of strict concavity.
pub fn second_differences(curve: &[(f64, Result<f64>)]) -> Vec<f64> {
    let ok: Vec<(f64, f64)> = curve
        .iter()
        .filter_map(|(n, e)| e.as_ref().ok().map(|&e| (*n, e)))
        .collect();
    let mut out = Vec::new();
    for w in ok.windows(3) {
        let [(x0, f0), (x1, f1), (x2, f2)] = [w[0], w[1], w[2]];
        let d01 = (f1 - f0) / (x1 - x0);
        let d12 = (f2 - f1) / (x2 - x1);
        out.push(2.0 * (d12 - d01) / (x2 - x0));
    }
    out
}

/// Bracket the critical mass at fixed `(c, m)` by bisecting between the last
/// converged and the first collapsed solve. Starting from `N = c` (deep in
/// the existence window) the mass is doubled until the collapse detector
/// fires; if it never fires below `10·(4/π)·c` — or a probe fails in a way
/// the dichotomy cannot classify — the estimate is inconclusive. The
/// returned lower edge always exceeds the proven bound `4c/π`.
pub fn critical_mass_estimate(
    c: f64,
    m: f64,
    grid: &RadialGrid,
    bracket_tol: f64,
    tol: f64,
) -> Result<CriticalMassEstimate> {
    if !(c > 0.0) || !(m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "critical-mass estimate needs c > 0 and m > 0, got c = {c}, m = {m}"
        )));
    }
    if !(bracket_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bracket tolerance must be positive, got {bracket_tol}"
        )));
    }
    enum Probe {
        Converged,
        Collapsed,
    }
    let classify = |n: f64| -> Result<Probe> {
        match solve_rel(grid, m, c, n, tol) {
            Ok(_) => Ok(Probe::Converged),
            Err(Error::Collapse(_)) => Ok(Probe::Collapsed),
            Err(Error::NoConvergence { last_update, .. }) => Err(Error::Inconclusive(format!(
                "probe at N = {n} neither converged nor collapsed (last update {last_update:.3e}); \
                 nonexistence and solver failure cannot be distinguished"
            ))),
            Err(e) => Err(e),
        }
    };

    let mut lo = c;
    match classify(lo)? {
        Probe::Converged => {}
        Probe::Collapsed => {
            return Err(Error::Inconclusive(format!(
                "the subcritical probe at N = {lo} already collapsed; no bracket exists"
            )))
        }
    }
    let cap = 10.0 * (4.0 / PI) * c;
    let mut hi = None;
    let mut n = 2.0 * lo;
    while n <= cap {
        match classify(n)? {
            Probe::Converged => {
                lo = n;
                n *= 2.0;
            }
            Probe::Collapsed => {
                hi = Some(n);
                break;
            }
        }
    }
    let Some(mut hi) = hi else {
        return Err(Error::Inconclusive(format!(
            "collapse detector never fired below {cap:.3}"
        )));
    };

    let mut guard = 0;
    while hi - lo > bracket_tol {
        let mid = 0.5 * (lo + hi);
        match classify(mid)? {
            Probe::Converged => lo = mid,
            Probe::Collapsed => hi = mid,
        }
        guard += 1;
        if guard > 200 {
            return Err(Error::Inconclusive(
                "bisection failed to narrow the bracket in 200 steps".into(),
            ));
        }
    }
    if !(lo > (4.0 / PI) * c) {
        return Err(Error::Inconclusive(format!(
            "bracket lower edge {lo:.6} fell inside the proven existence window (4/π)c = {:.6}",
            (4.0 / PI) * c
        )));
    }
    Ok(CriticalMassEstimate {
        n_lo: lo,
        n_hi: hi,
        width: hi - lo,
        c,
    })
}

/// Scaling equivalence between normalizations: the minimizer at `(c, cN)`
/// rescaled by `Q = c⁻²Q̃(c⁻¹·)` reproduces the minimizer at `(c = 1, N)`.
/// Returns the relative L∞ defect between the two routes.
pub fn scaling_equivalence_defect(
    c: f64,
    m: f64,
    n_target: f64,
    grid: &RadialGrid,
    tol: f64,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scaling check needs c > 0, got {c}"
        )));
    }
    let base = solve_rel(grid, m, 1.0, n_target, tol)?;
    let scaled = solve_rel(grid, m, c, c * n_target, tol)?;
    let spline = CubicSpline::from_profile(&scaled.q);
    let peak = base
        .q
        .values()
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let mut worst = 0.0_f64;
    for (i, &r) in grid.nodes().iter().enumerate() {
        let mapped = spline.eval(r / c) / (c * c);
        worst = worst.max((base.q.values()[i] - mapped).abs());
    }
    Ok(worst / peak)
}

/// Converged sweep records as CSV (failures are skipped; the caller sees them
/// on the corresponding [`SweepPoint`]s).
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("c,mu,gap,h1_dist,energy,residual,herbst_ok,delta1_ok,delta2_ok\n");
    for p in points {
        if let Ok(r) = &p.result {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.c,
                r.mu,
                r.gap,
                r.h1_dist,
                r.energy,
                r.residual,
                r.bound_flags.herbst_ok,
                r.bound_flags.delta1_ok,
                r.bound_flags.delta2_ok
            ));
        }
    }
    out
}
