//! Uniform radial grids and the discrete calculus built on them: quadrature
//! of 3D radial integrals, sector Laplacians through the `u = r·f`
//! substitution, centered-difference derivatives, an orthonormal DST-I, and
//! cubic-spline resampling.
//!
//! A profile `f` samples a radial function at the interior nodes
//! `r_i = i·h`, `i = 1..n`, `h = r_max/(n+1)`. The quadrature weight
//! `w_i = 4π r_i² h` turns plain sums into 3D radial integrals,
//! `Σ w_i f_i ≈ 4π ∫₀^{r_max} f(r) r² dr`, with second-order accuracy for
//! smooth integrands vanishing at both ends.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

#[derive(Debug)]
struct GridInner {
    n: usize,
    r_max: f64,
    h: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Uniform radial grid with interior nodes `r_i = i·h` and 3D quadrature
/// weights. Cheap to clone; all data is immutable and shared.
#[derive(Clone, Debug)]
pub struct RadialGrid(Arc<GridInner>);

impl RadialGrid {
    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn r_max(&self) -> f64 {
        self.0.r_max
    }

    /// Node spacing `h = r_max/(n+1)`.
    pub fn h(&self) -> f64 {
        self.0.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    /// Two grids are interchangeable iff they have identical `n` and `r_max`.
    pub fn same_grid(&self, other: &RadialGrid) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.n == other.0.n && self.0.r_max.to_bits() == other.0.r_max.to_bits())
    }

    /// Eigenvalues of the discrete Dirichlet second-difference operator in
    /// the `u = r·f` coordinates: `λ_j = (4/h²) sin²(jπ/(2(n+1)))`,
    /// `j = 1..n`. DST-I modes diagonalize the ℓ = 0 sector Laplacian with
    /// exactly these values.
    pub fn dirichlet_eigenvalues(&self) -> Vec<f64> {
        let np1 = (self.0.n + 1) as f64;
        (1..=self.0.n)
            .map(|j| {
                let s = (j as f64 * std::f64::consts::PI / (2.0 * np1)).sin();
                4.0 / (self.0.h * self.0.h) * s * s
            })
            .collect()
    }

    /// Continuum half-wave wavenumbers `k_j = jπ/r_max` of the DST-I modes.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (1..=self.0.n)
            .map(|j| j as f64 * std::f64::consts::PI / self.0.r_max)
            .collect()
    }
}

impl Serialize for RadialGrid {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("RadialGrid", 2)?;
        s.serialize_field("n", &self.0.n)?;
        s.serialize_field("r_max", &self.0.r_max)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for RadialGrid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            r_max: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        make_grid(raw.n, raw.r_max).map_err(serde::de::Error::custom)
    }
}

/// Build a uniform radial grid with `n` interior nodes on `(0, r_max)`.
///
/// Intended for `n ≥ 16` and `r_max ≥ 1`; rejects `n < 16` and `r_max ≤ 0`.
pub fn make_grid(n: usize, r_max: f64) -> Result<RadialGrid> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 16 interior nodes, got {n}"
        )));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid radius must be positive, got {r_max}"
        )));
    }
    let h = r_max / (n + 1) as f64;
    let nodes: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&r| 4.0 * std::f64::consts::PI * r * r * h)
        .collect();
    Ok(RadialGrid(Arc::new(GridInner {
        n,
        r_max,
        h,
        nodes,
        weights,
    })))
}

/// Samples of a radial function on a [`RadialGrid`].
#[derive(Clone, Debug)]
pub struct RadialProfile {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialProfile {
    /// Wrap explicit samples. Fails if the length does not match the grid or
    /// any value is non-finite.
    pub fn new(grid: &RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "profile length {} does not match grid n = {}",
                values.len(),
                grid.n()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "profile contains non-finite value {bad}"
            )));
        }
        Ok(RadialProfile {
            grid: grid.clone(),
            values,
        })
    }

    /// Sample a function at the grid nodes.
    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        RadialProfile {
            grid: grid.clone(),
            values: grid.nodes().iter().map(|&r| f(r)).collect(),
        }
    }

    pub fn zeros(grid: &RadialGrid) -> Self {
        RadialProfile {
            grid: grid.clone(),
            values: vec![0.0; grid.n()],
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// CSV serialization with header `r,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("r,value\n");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            out.push_str(&format!("{r},{v}\n"));
        }
        out
    }

    /// JSON serialization as an array of `[r, value]` pairs.
    pub fn to_json_pairs(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.grid
                .nodes()
                .iter()
                .zip(&self.values)
                .map(|(&r, &v)| serde_json::json!([r, v]))
                .collect(),
        )
    }
}

/// Panic with a clear message if two profiles live on different grids.
/// Combining profiles across grids is a programming error, not a runtime
/// condition, so this is an assertion rather than a `Result`.
pub fn check_same_grid(a: &RadialProfile, b: &RadialProfile) {
    assert!(
        a.grid.same_grid(&b.grid),
        "profiles on different grids combined: (n={}, r_max={}) vs (n={}, r_max={})",
        a.grid.n(),
        a.grid.r_max(),
        b.grid.n(),
        b.grid.r_max()
    );
}

/// Discrete L² mass `Σ w_i f_i² ≈ ∫_{R³} f²`.
pub fn mass(f: &RadialProfile) -> f64 {
    f.grid
        .weights()
        .iter()
        .zip(f.values())
        .map(|(&w, &v)| w * v * v)
        .sum()
}

/// Weighted inner product `Σ w_i f_i g_i ≈ ∫_{R³} f g`.
pub fn inner_w(f: &RadialProfile, g: &RadialProfile) -> f64 {
    check_same_grid(f, g);
    f.grid
        .weights()
        .iter()
        .zip(f.values().iter().zip(g.values()))
        .map(|(&w, (&a, &b))| w * a * b)
        .sum()
}

/// Apply the sector Laplacian `-f″ - (2/r)f′ + ℓ(ℓ+1) f / r²`.
///
/// Works in the `u = r·f` coordinates, where the radial part is the
/// Dirichlet second difference `(2u_i - u_{i-1} - u_{i+1})/h²` with
/// `u(0) = u(r_max) = 0`; the centrifugal term stays diagonal. The resulting
/// operator is symmetric in the `w`-weighted inner product and positive
/// semidefinite for every ℓ ≥ 0.
pub fn apply_sector_laplacian(f: &RadialProfile, ell: usize) -> RadialProfile {
    let g = &f.grid;
    let n = g.n();
    let h2 = g.h() * g.h();
    let r = g.nodes();
    let v = f.values();
    let cf = (ell * (ell + 1)) as f64;
    let u = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            r[i as usize] * v[i as usize]
        }
    };
    let mut out = vec![0.0; n];
    for i in 0..n {
        let ii = i as isize;
        let lap_u = (2.0 * u(ii) - u(ii - 1) - u(ii + 1)) / h2;
        out[i] = lap_u / r[i] + cf * v[i] / (r[i] * r[i]);
    }
    RadialProfile {
        grid: g.clone(),
        values: out,
    }
}

/// Dirichlet quadratic form `⟨f, (-Δ_{(ℓ)}) f⟩_w`, evaluated as the stable
/// bond sum `4πh [ Σ_{i=0..n} (u_{i+1} - u_i)²/h² + Σ ℓ(ℓ+1) u_i²/r_i² ]`
/// with `u = r·f` and `u_0 = u_{n+1} = 0`.
pub fn dirichlet_form(f: &RadialProfile, ell: usize) -> f64 {
    let g = &f.grid;
    let n = g.n();
    let h = g.h();
    let r = g.nodes();
    let v = f.values();
    let cf = (ell * (ell + 1)) as f64;
    let mut bonds = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        let u = r[i] * v[i];
        let d = u - prev;
        bonds += d * d;
        prev = u;
    }
    bonds += prev * prev; // bond to u_{n+1} = 0
    let mut cent = 0.0;
    if ell > 0 {
        for i in 0..n {
            let u = r[i] * v[i];
            cent += cf * u * u / (r[i] * r[i]);
        }
    }
    4.0 * std::f64::consts::PI * h * (bonds / (h * h) + cent)
}

/// Value at `r = 0` by even-parabolic extrapolation through the first two
/// nodes: `f(0) ≈ (f₁ r₂² - f₂ r₁²)/(r₂² - r₁²)`.
pub fn central_value(f: &RadialProfile) -> f64 {
    let r = f.grid.nodes();
    let v = f.values();
    (v[0] * r[1] * r[1] - v[1] * r[0] * r[0]) / (r[1] * r[1] - r[0] * r[0])
}

/// Centered-difference radial derivative.
///
/// Ghost values close the stencil at both ends: at `r = 0` the even-parabolic
/// extrapolated `f(0)` (radial functions are even in `r`), at `r_max` the
/// Dirichlet zero. This keeps the truncation error `O(h²)` uniformly, which
/// matters because downstream operators weight the first nodes by `1/h²`.
pub fn radial_derivative(f: &RadialProfile) -> RadialProfile {
    let g = &f.grid;
    let n = g.n();
    let h2 = 2.0 * g.h();
    let v = f.values();
    let mut out = vec![0.0; n];
    let f0 = central_value(f);
    out[0] = (v[1] - f0) / h2;
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / h2;
    }
    out[n - 1] = (0.0 - v[n - 2]) / h2;
    RadialProfile {
        grid: g.clone(),
        values: out,
    }
}

/// Discrete H¹ norm `sqrt( mass(f) + Σ w_i f′(r_i)² )` with the
/// centered-difference derivative.
pub fn norm_h1(f: &RadialProfile) -> f64 {
    let fp = radial_derivative(f);
    (mass(f) + mass(&fp)).sqrt()
}

/// Orthonormal DST-I of length `n`, realized through a complex FFT of length
/// `2(n+1)` on the odd extension. Self-inverse: applying it twice returns the
/// input. The transform diagonalizes the ℓ = 0 sector Laplacian in the
/// `u = r·f` coordinates with eigenvalues [`RadialGrid::dirichlet_eigenvalues`].
pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let m = 2 * (n + 1);
        let fft = FftPlanner::new().plan_fft_forward(m);
        Dst1 {
            n,
            fft,
            scale: (2.0 / (n + 1) as f64).sqrt() * 0.5,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Apply the orthonormal DST-I to a slice of length `n`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let m = 2 * (self.n + 1);
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1].re = v;
            buf[m - 1 - j].re = -v;
        }
        self.fft.process(&mut buf);
        // FFT of the odd extension gives Y_k = -2i Σ x_j sin(πjk/(n+1)).
        (1..=self.n).map(|k| -buf[k].im * self.scale).collect()
    }
}

/// Cubic spline on uniform knots with not-a-knot end conditions.
///
/// Knots are `x_k = x0 + k·h`, `k = 0..K-1`, `K ≥ 4`. Evaluation beyond the
/// last knot returns 0 (profiles vanish at and beyond `r_max`); evaluation
/// before the first knot extrapolates the first polynomial piece.
pub struct CubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Interpolate uniform samples `y_k = f(x0 + k·h)`.
    pub fn from_samples(x0: f64, h: f64, y: Vec<f64>) -> Result<Self> {
        let k = y.len();
        if k < 4 {
            return Err(Error::InvalidArgument(format!(
                "cubic spline needs at least 4 knots, got {k}"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cubic spline needs positive spacing, got {h}"
            )));
        }
        let d = |i: usize| 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1]) / (h * h);
        let mut m = vec![0.0; k];
        // Not-a-knot collapses the first and last moment equations:
        // m_0 = 2m_1 - m_2 turns row 1 into 6 m_1 = d_1, same at the far end.
        m[1] = d(1) / 6.0;
        m[k - 2] = d(k - 2) / 6.0;
        if k > 4 {
            // Thomas solve for m_2..m_{k-3}: m_{i-1} + 4 m_i + m_{i+1} = d_i.
            let len = k - 4;
            let mut diag = vec![4.0; len];
            let mut rhs: Vec<f64> = (2..k - 2).map(d).collect();
            rhs[0] -= m[1];
            rhs[len - 1] -= m[k - 2];
            for i in 1..len {
                let f = 1.0 / diag[i - 1];
                diag[i] -= f;
                rhs[i] -= rhs[i - 1] * f;
            }
            m[k - 3] = rhs[len - 1] / diag[len - 1];
            for i in (0..len - 1).rev() {
                m[i + 2] = (rhs[i] - m[i + 3]) / diag[i];
            }
        }
        m[0] = 2.0 * m[1] - m[2];
        m[k - 1] = 2.0 * m[k - 2] - m[k - 3];
        Ok(CubicSpline { x0, h, y, m })
    }

    /// Interpolant of a profile over `[0, r_max]`: prepends the extrapolated
    /// central value at `r = 0` and appends the Dirichlet zero at `r_max`.
    pub fn from_profile(f: &RadialProfile) -> Self {
        let g = f.grid();
        let mut y = Vec::with_capacity(g.n() + 2);
        y.push(central_value(f));
        y.extend_from_slice(f.values());
        y.push(0.0);
        CubicSpline::from_samples(0.0, g.h(), y).expect("profile grids have n ≥ 16 knots")
    }

    pub fn x_last(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x > self.x_last() {
            return 0.0;
        }
        let t = (x - self.x0) / self.h;
        let k = (t.floor() as isize).clamp(0, self.y.len() as isize - 2) as usize;
        let a = x - (self.x0 + self.h * k as f64); // x - x_k
        let b = self.h - a; // x_{k+1} - x
        let h = self.h;
        (self.m[k] * b * b * b + self.m[k + 1] * a * a * a) / (6.0 * h)
            + (self.y[k] / h - self.m[k] * h / 6.0) * b
            + (self.y[k + 1] / h - self.m[k + 1] * h / 6.0) * a
    }
}
