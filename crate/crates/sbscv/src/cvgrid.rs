//! Midpoint grids for the continuous variable, wavefunctions and kernel
//! densities.
//!
//! A density is stored as its kernel K(x_i, x_j) (units 1/length); the
//! trace-class operator it stands for is `M = K·dx`.

use crate::error::{Error, Result};
use crate::numkit::{c, hermitian_defect, CMatrix, CVector, DensityMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Invalid(format!("bad grid [{x_min}, {x_max}] with {n} points")));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }
}

/// Half-open interval [a, b) on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Invalid(format!("interval needs a < b, got [{a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x < self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Contiguous range of grid indices inside the interval.
    pub fn indices(&self, grid: &Grid) -> Result<std::ops::Range<usize>> {
        let eps = 1e-12 * (grid.x_max - grid.x_min);
        if self.a < grid.x_min - eps || self.b > grid.x_max + eps {
            return Err(Error::Invalid(format!(
                "interval [{}, {}) leaves the grid [{}, {}]",
                self.a, self.b, grid.x_min, grid.x_max
            )));
        }
        let idx: Vec<usize> = (0..grid.n).filter(|&j| self.contains(grid.x(j))).collect();
        match (idx.first(), idx.last()) {
            (Some(&lo), Some(&hi)) => Ok(lo..hi + 1),
            _ => Err(Error::EmptyInterval { a: self.a, b: self.b }),
        }
    }
}

/// Density operator on a grid, stored as its kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct CvDensity {
    grid: Grid,
    kernel: CMatrix,
}

impl CvDensity {
    /// Validates Hermiticity, the discrete trace and positivity of `K·dx`.
    pub fn new(grid: Grid, kernel: CMatrix) -> Result<Self> {
        let s = Self::from_parts(grid, kernel)?;
        s.density_matrix()?.validate()?;
        Ok(s)
    }

    pub fn from_parts(grid: Grid, kernel: CMatrix) -> Result<Self> {
        if kernel.nrows() != grid.n || kernel.ncols() != grid.n {
            return Err(Error::Dimension(format!(
                "kernel is {}x{}, grid has {} points",
                kernel.nrows(),
                kernel.ncols(),
                grid.n
            )));
        }
        Ok(Self { grid, kernel })
    }

    pub fn from_density_matrix(grid: Grid, m: &DensityMatrix) -> Result<Self> {
        let k = m.mat() * c(1.0 / grid.dx(), 0.0);
        Self::from_parts(grid, k)
    }

    /// Pure state from a wavefunction normalised in the discrete L² sense.
    pub fn pure(grid: Grid, psi: &CVector) -> Result<Self> {
        if psi.len() != grid.n {
            return Err(Error::Dimension("wavefunction length differs from grid".into()));
        }
        Ok(Self { grid, kernel: psi * psi.adjoint() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &CMatrix {
        &self.kernel
    }

    /// M = K·dx.
    pub fn matrix(&self) -> CMatrix {
        &self.kernel * c(self.grid.dx(), 0.0)
    }

    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        let d = hermitian_defect(&self.kernel) * self.grid.dx();
        if d > 1e-10 {
            return Err(Error::NotHermitian { defect: d });
        }
        DensityMatrix::from_parts(self.matrix(), vec![self.grid.n])
    }

    pub fn trace(&self) -> f64 {
        self.kernel.diagonal().iter().map(|z| z.re).sum::<f64>() * self.grid.dx()
    }

    /// Diagonal K(x_j, x_j), the position density.
    pub fn density(&self) -> Vec<f64> {
        self.kernel.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        let mass: f64 = self.density().iter().sum::<f64>() * dx;
        let first: f64 = self.density().iter().enumerate().map(|(j, p)| self.grid.x(j) * p).sum::<f64>() * dx;
        first / mass
    }
}

/// Unnormalised packet exp(-(x-c)²/(4w²)) e^{ipx} on the grid.
fn packet(grid: &Grid, center: f64, width: f64, momentum: f64) -> CVector {
    CVector::from_fn(grid.n, |j, _| {
        let x = grid.x(j);
        let amp = (-(x - center).powi(2) / (4.0 * width * width)).exp();
        C64::from_polar(amp, momentum * x)
    })
}

fn normalise(grid: &Grid, psi: CVector) -> Result<CVector> {
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dx();
    if !(norm2 > 0.0) {
        return Err(Error::Invalid("wavefunction vanishes on the grid".into()));
    }
    Ok(psi / c(norm2.sqrt(), 0.0))
}

/// Mass sitting on the three outermost points at each end.
fn edge_mass(grid: &Grid, psi: &CVector) -> f64 {
    let n = grid.n;
    let k = 3.min(n / 2);
    let idx = (0..k).chain(n - k..n);
    idx.map(|j| psi[j].norm_sqr()).sum::<f64>() * grid.dx()
}

fn check_margin(grid: &Grid, center: f64, width: f64) -> Result<()> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::Invalid(format!("width must be positive, got {width}")));
    }
    if center - 5.0 * width < grid.x_min || center + 5.0 * width > grid.x_max {
        return Err(Error::Invalid(format!(
            "packet at {center} with width {width} is within 5 widths of the grid edge"
        )));
    }
    Ok(())
}

/// ψ(x) ∝ exp(-(x-c)²/(4w²)) e^{ipx}, normalised so Σ|ψ|² dx = 1.
pub fn gaussian_wavepacket(grid: &Grid, center: f64, width: f64, momentum: f64) -> Result<CVector> {
    check_margin(grid, center, width)?;
    let psi = normalise(grid, packet(grid, center, width, momentum))?;
    let mass = edge_mass(grid, &psi);
    if mass > 1e-12 {
        return Err(Error::Boundary { mass });
    }
    Ok(psi)
}

/// Normalised superposition Σ w_m packet_m of real packets.
pub fn cat_wavefunction(grid: &Grid, centers: &[f64], weights: &[C64], width: f64) -> Result<CVector> {
    if centers.is_empty() || centers.len() != weights.len() {
        return Err(Error::Invalid("centers and weights must be non-empty and of equal length".into()));
    }
    for (i, a) in centers.iter().enumerate() {
        if centers[..i].iter().any(|b| b == a) {
            return Err(Error::Invalid(format!("center {a} appears twice")));
        }
    }
    if weights.iter().all(|w| w.norm() == 0.0) {
        return Err(Error::Invalid("all weights are zero".into()));
    }
    let mut psi = CVector::zeros(grid.n);
    for (&ctr, &w) in centers.iter().zip(weights) {
        check_margin(grid, ctr, width)?;
        psi += packet(grid, ctr, width, 0.0) * w;
    }
    let psi = normalise(grid, psi)?;
    let mass = edge_mass(grid, &psi);
    if mass > 1e-12 {
        return Err(Error::Boundary { mass });
    }
    Ok(psi)
}

pub fn cat_state(grid: &Grid, centers: &[f64], weights: &[C64], width: f64) -> Result<CvDensity> {
    let psi = cat_wavefunction(grid, centers, weights, width)?;
    CvDensity::pure(*grid, &psi)
}

pub fn position_operator(grid: &Grid) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_fn(grid.n, |j, _| c(grid.x(j), 0.0)))
}

/// Diagonal 0/1 projector onto the grid points in `delta`.
pub fn interval_projector(grid: &Grid, delta: &Interval) -> Result<CMatrix> {
    let range = delta.indices(grid)?;
    Ok(CMatrix::from_diagonal(&CVector::from_fn(grid.n, |j, _| {
        if range.contains(&j) {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })))
}
