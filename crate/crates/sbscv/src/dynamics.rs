//! Joint system–environment evolution under X ⊗ Σ g_k B_k, the decoherence
//! kernel Γ and the two routes to the reduced state.

use crate::cvgrid::{CvDensity, Grid};
use crate::envmodel::{characteristic_function, EnvEnsemble, EnvModel};
use crate::error::{Error, Result};
use crate::numkit::{c, eigh, expm_from_eig, kron, max_abs_diff, partial_trace, CMatrix, DensityMatrix, C64};

/// Joint state with factor order (system, env 1, ..., env N). The system
/// factor carries `K·dx`.
#[derive(Clone, Debug)]
pub struct JointState {
    grid: Grid,
    env_dims: Vec<usize>,
    mat: DensityMatrix,
}

impl JointState {
    pub fn new(grid: Grid, env_dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        let mut dims = vec![grid.n()];
        dims.extend_from_slice(&env_dims);
        let mat = DensityMatrix::from_parts(mat, dims)?;
        Ok(Self { grid, env_dims, mat })
    }

    /// ρ_S ⊗ ρ_1 ⊗ ... ⊗ ρ_N.
    pub fn product(rho_s: &CvDensity, envs: &[&DensityMatrix], cap: usize) -> Result<Self> {
        let mut m = rho_s.matrix();
        let mut dims = Vec::new();
        for e in envs {
            m = kron(&m, e.mat(), cap)?;
            dims.push(e.dim());
        }
        Self::new(*rho_s.grid(), dims, m)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn env_dims(&self) -> &[usize] {
        &self.env_dims
    }

    /// Product of the environment dimensions.
    pub fn env_dim(&self) -> usize {
        self.env_dims.iter().product()
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.mat
    }

    pub fn mat(&self) -> &CMatrix {
        self.mat.mat()
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn validate(&self) -> Result<()> {
        self.mat.validate()
    }

    /// Reduced state of the system as a kernel density.
    pub fn system_state(&self) -> Result<CvDensity> {
        let r = partial_trace(&self.mat, &[0])?;
        CvDensity::from_density_matrix(self.grid, &r)
    }

    /// Reduced state of all environments.
    pub fn env_state(&self) -> Result<DensityMatrix> {
        let keep: Vec<usize> = (1..=self.env_dims.len()).collect();
        partial_trace(&self.mat, &keep)
    }
}

/// One multiplicative factor of Γ as a function of the offset x - y.
#[derive(Clone, Debug)]
pub enum GammaFactor {
    /// e^{-tⁿ α (x-y)²}.
    Gaussian { alpha: f64, n_exp: f64 },
    /// γ(t (x-y) g) of a traced environment.
    Env(EnvModel),
}

impl GammaFactor {
    fn value(&self, t: f64, d: f64) -> C64 {
        match self {
            Self::Gaussian { alpha, n_exp } => c((-t.powf(*n_exp) * alpha * d * d).exp(), 0.0),
            Self::Env(env) => characteristic_function(env, t * d * env.coupling()),
        }
    }
}

/// Decoherence kernel Γ(t, x_i, x_j) on a grid.
#[derive(Clone, Debug)]
pub struct GammaKernel {
    grid: Grid,
    t: f64,
    values: CMatrix,
    /// `None` for a kernel given only by its values.
    factors: Option<Vec<GammaFactor>>,
}

/// ∂_yΓ on the grid with an error estimate (0 for the closed form).
#[derive(Clone, Debug)]
pub struct GammaDerivative {
    pub values: CMatrix,
    pub error: f64,
    pub analytic: bool,
}

impl GammaKernel {
    pub fn from_factors(grid: &Grid, t: f64, factors: Vec<GammaFactor>) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Invalid(format!("time must be finite and >= 0, got {t}")));
        }
        let n = grid.n();
        let dx = grid.dx();
        // Γ depends on i - j only; tabulate the 2n-1 offsets once.
        let table: Vec<C64> = (0..2 * n - 1)
            .map(|k| {
                let d = (k as f64 - (n as f64 - 1.0)) * dx;
                factors.iter().map(|f| f.value(t, d)).product()
            })
            .collect();
        let values = CMatrix::from_fn(n, n, |i, j| table[i + n - 1 - j]);
        Ok(Self { grid: *grid, t, values, factors: Some(factors) })
    }

    /// Kernel with no functional form; it has no derivative.
    pub fn tabulated(grid: &Grid, t: f64, values: CMatrix) -> Result<Self> {
        if values.nrows() != grid.n() || values.ncols() != grid.n() {
            return Err(Error::Dimension("kernel shape differs from grid".into()));
        }
        Ok(Self { grid: *grid, t, values, factors: None })
    }

    /// Replaces the tabulated values while keeping the functional form.
    /// Used to build corrupted kernels for mutation tests.
    pub fn with_values(mut self, values: CMatrix) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::Dimension("kernel shape differs from grid".into()));
        }
        self.values = values;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn factors(&self) -> Option<&[GammaFactor]> {
        self.factors.as_deref()
    }

    /// Closed form: every factor Gaussian.
    pub fn is_closed_form(&self) -> bool {
        self.factors
            .as_ref()
            .is_some_and(|f| f.iter().all(|g| matches!(g, GammaFactor::Gaussian { .. })))
    }

    /// Γ at an arbitrary offset x - y.
    pub fn at_offset(&self, d: f64) -> Option<C64> {
        self.factors.as_ref().map(|fs| fs.iter().map(|f| f.value(self.t, d)).product())
    }

    /// d/dd of Γ(d) at offset d, with an error estimate. ∂_yΓ = -this.
    pub fn offset_derivative(&self, d: f64) -> Option<(C64, f64, bool)> {
        let fs = self.factors.as_ref()?;
        let h0 = self.grid.dx();
        let mut total = c(0.0, 0.0);
        let mut err = 0.0;
        let mut analytic = true;
        for (k, f) in fs.iter().enumerate() {
            let rest: C64 = fs.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, g)| g.value(self.t, d)).product();
            let (df, e) = match f {
                GammaFactor::Gaussian { alpha, n_exp } => {
                    let a = self.t.powf(*n_exp) * alpha;
                    (f.value(self.t, d) * c(-2.0 * a * d, 0.0), 0.0)
                }
                GammaFactor::Env(_) => {
                    analytic = false;
                    richardson(|z| f.value(self.t, z), d, h0)
                }
            };
            total += df * rest;
            err += e * rest.norm();
        }
        Some((total, err, analytic))
    }

    /// ∂_yΓ(t, x_i, y_j) on the grid.
    pub fn d_dy(&self) -> Result<GammaDerivative> {
        if self.factors.is_none() {
            return Err(Error::Precondition("kernel has no derivative".into()));
        }
        let n = self.grid.n();
        let dx = self.grid.dx();
        let mut table = Vec::with_capacity(2 * n - 1);
        let mut error: f64 = 0.0;
        let mut analytic = true;
        for k in 0..2 * n - 1 {
            let d = (k as f64 - (n as f64 - 1.0)) * dx;
            let (v, e, a) = self.offset_derivative(d).expect("factors present");
            table.push(-v);
            error = error.max(e);
            analytic &= a;
        }
        let values = CMatrix::from_fn(n, n, |i, j| table[i + n - 1 - j]);
        Ok(GammaDerivative { values, error, analytic })
    }

    /// Largest defect among the kernel invariants: Γ(x,x) = 1, |Γ| ≤ 1,
    /// Γ(x,y) = conj Γ(y,x) and dependence on x - y only.
    pub fn invariant_defect(&self) -> f64 {
        let v = &self.values;
        let n = v.nrows();
        let mut d: f64 = 0.0;
        for i in 0..n {
            d = d.max((v[(i, i)] - c(1.0, 0.0)).norm());
            for j in 0..n {
                d = d.max(v[(i, j)].norm() - 1.0);
                d = d.max((v[(i, j)] - v[(j, i)].conj()).norm());
            }
        }
        for off in 0..n {
            let diag: Vec<C64> = (0..n - off).map(|i| v[(i + off, i)]).collect();
            let mean: C64 = diag.iter().sum::<C64>() / c(diag.len() as f64, 0.0);
            for z in &diag {
                d = d.max((z - mean).norm());
            }
        }
        d.max(0.0)
    }
}

/// Central difference with one Richardson step; returns (estimate, error).
fn richardson<F: Fn(f64) -> C64>(f: F, d: f64, h: f64) -> (C64, f64) {
    let central = |h: f64| (f(d + h) - f(d - h)) / c(2.0 * h, 0.0);
    let coarse = central(h);
    let fine = central(h / 2.0);
    let refined = (fine * c(4.0, 0.0) - coarse) / c(3.0, 0.0);
    (refined, (refined - fine).norm())
}

/// Γ = Π_k Tr{e^{-it(x-y)g_k B_k} ρ_k}.
pub fn gamma_from_envs(traced: &[EnvModel], t: f64, grid: &Grid) -> Result<GammaKernel> {
    GammaKernel::from_factors(grid, t, traced.iter().cloned().map(GammaFactor::Env).collect())
}

/// Γ = e^{-tⁿ α (x-y)²}.
pub fn gaussian_gamma(t: f64, alpha: f64, n_exp: f64, grid: &Grid) -> Result<GammaKernel> {
    if !(alpha > 0.0) || !(n_exp > 0.0) {
        return Err(Error::Invalid(format!("gaussian kernel needs alpha, n_exp > 0, got {alpha}, {n_exp}")));
    }
    GammaKernel::from_factors(grid, t, vec![GammaFactor::Gaussian { alpha, n_exp }])
}

/// K ↦ K ∘ Γ.
pub fn apply_decoherence(rho: &CvDensity, gamma: &GammaKernel) -> Result<CvDensity> {
    if rho.grid() != gamma.grid() {
        return Err(Error::Dimension("state and kernel live on different grids".into()));
    }
    let k = rho.kernel().component_mul(gamma.values());
    CvDensity::from_parts(*rho.grid(), k)
}

/// Σ g_k B_k embedded on the tensor product of `envs`.
pub fn coupling_generator(envs: &[EnvModel], cap: usize) -> Result<CMatrix> {
    let dims: Vec<usize> = envs.iter().map(|e| e.dim()).collect();
    let total: usize = dims.iter().product();
    if total > cap {
        return Err(Error::Resource { dim: total, cap });
    }
    let mut s = CMatrix::zeros(total, total);
    for (k, env) in envs.iter().enumerate() {
        let left: usize = dims[..k].iter().product();
        let right: usize = dims[k + 1..].iter().product();
        let gb = env.generator() * c(env.coupling(), 0.0);
        let term = kron(&kron(&CMatrix::identity(left, left), &gb, cap)?, &CMatrix::identity(right, right), cap)?;
        s += term;
    }
    Ok(s)
}

/// Blocks e^{-i t x_j S} of the conditional unitary, one per grid point.
pub fn conditional_blocks(grid: &Grid, envs: &[EnvModel], t: f64, cap: usize) -> Result<Vec<CMatrix>> {
    let s = coupling_generator(envs, cap)?;
    let d = s.nrows();
    if grid.n() * d > cap {
        return Err(Error::Resource { dim: grid.n() * d, cap });
    }
    let (vals, vecs) = eigh(&s);
    Ok((0..grid.n()).map(|j| expm_from_eig(&vals, &vecs, t * grid.x(j))).collect())
}

/// Block-diagonal unitary e^{-itX ⊗ S} on grid ⊗ envs.
pub fn conditional_unitary(grid: &Grid, observed: &[EnvModel], t: f64, cap: usize) -> Result<CMatrix> {
    let blocks = conditional_blocks(grid, observed, t, cap)?;
    let d = blocks.first().map_or(1, |b| b.nrows());
    let n = grid.n() * d;
    let mut u = CMatrix::zeros(n, n);
    for (j, b) in blocks.iter().enumerate() {
        u.view_mut((j * d, j * d), (d, d)).copy_from(b);
    }
    Ok(u)
}

/// U ρ U† for block-diagonal U, touching only the non-zero blocks.
pub fn conjugate_block_diagonal(blocks: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let d = blocks.first().map_or(1, |b| b.nrows());
    let n = blocks.len();
    assert_eq!(rho.nrows(), n * d);
    let adj: Vec<CMatrix> = blocks.iter().map(|b| b.adjoint()).collect();
    let mut out = CMatrix::zeros(n * d, n * d);
    for j in 0..n {
        for k in 0..n {
            let blk = rho.view((j * d, k * d), (d, d));
            let v = &blocks[j] * blk * &adj[k];
            out.view_mut((j * d, k * d), (d, d)).copy_from(&v);
        }
    }
    out
}

/// Multiplies block (j, k) of a joint matrix by Γ(x_j, x_k).
pub fn decohere_joint(rho: &CMatrix, gamma: &GammaKernel, env_dim: usize) -> CMatrix {
    let g = gamma.values();
    CMatrix::from_fn(rho.nrows(), rho.ncols(), |r, s| rho[(r, s)] * g[(r / env_dim, s / env_dim)])
}

/// Simulates every environment and traces out the traced ones.
pub fn evolve_full(rho_s: &CvDensity, ensemble: &EnvEnsemble, t: f64, cap: usize) -> Result<JointState> {
    let all: Vec<EnvModel> = ensemble.observed.iter().chain(&ensemble.traced).cloned().collect();
    let states: Vec<&DensityMatrix> = all.iter().map(|e| e.rho0()).collect();
    let init = JointState::product(rho_s, &states, cap)?;
    let blocks = conditional_blocks(rho_s.grid(), &all, t, cap)?;
    let evolved = conjugate_block_diagonal(&blocks, init.mat());
    let mut dims = vec![rho_s.grid().n()];
    dims.extend(all.iter().map(|e| e.dim()));
    let full = DensityMatrix::from_parts(evolved, dims)?;
    let keep: Vec<usize> = (0..=ensemble.observed.len()).collect();
    let reduced = partial_trace(&full, &keep)?;
    JointState::new(*rho_s.grid(), ensemble.observed_dims(), reduced.into_mat())
}

/// 𝒰(ℰ(ρ_S) ⊗ ρ_obs) with ℰ from the kernel of the traced environments.
pub fn lemma_rhs(rho_s: &CvDensity, ensemble: &EnvEnsemble, t: f64, cap: usize) -> Result<JointState> {
    let gamma = gamma_from_envs(&ensemble.traced, t, rho_s.grid())?;
    evolve_with_kernel(rho_s, &gamma, &ensemble.observed, t, cap)
}

/// 𝒰(ℰ_Γ(ρ_S) ⊗ ρ_obs) for a given kernel.
pub fn evolve_with_kernel(
    rho_s: &CvDensity,
    gamma: &GammaKernel,
    observed: &[EnvModel],
    t: f64,
    cap: usize,
) -> Result<JointState> {
    let decohered = apply_decoherence(rho_s, gamma)?;
    let states: Vec<&DensityMatrix> = observed.iter().map(|e| e.rho0()).collect();
    let init = JointState::product(&decohered, &states, cap)?;
    if observed.is_empty() {
        return Ok(init);
    }
    let blocks = conditional_blocks(rho_s.grid(), observed, t, cap)?;
    let evolved = conjugate_block_diagonal(&blocks, init.mat());
    JointState::new(*rho_s.grid(), init.env_dims().to_vec(), evolved)
}

/// Max entrywise gap between 𝒰∘(ℰ⊗I) and (ℰ⊗I)∘𝒰 on ρ_S ⊗ ρ_E.
///
/// The first order applies ℰ through its kernel; the second dilates ℰ by
/// coupling the traced environment after 𝒰 and tracing it out.
pub fn check_commutation(rho_s: &CvDensity, observed: &EnvModel, traced: &EnvModel, t: f64, cap: usize) -> Result<f64> {
    let grid = *rho_s.grid();
    let first = lemma_rhs(rho_s, &EnvEnsemble::new(vec![traced.clone()], vec![observed.clone()])?, t, cap)?;

    let init = JointState::product(rho_s, &[observed.rho0()], cap)?;
    let u_obs = conditional_blocks(&grid, std::slice::from_ref(observed), t, cap)?;
    let after_u = conjugate_block_diagonal(&u_obs, init.mat());
    let dilated = kron(&after_u, traced.rho0().mat(), cap)?;
    // V acts on (system, traced) and trivially on the observed factor.
    let s_tr = traced.generator() * c(traced.coupling(), 0.0);
    let (vals, vecs) = eigh(&s_tr);
    let eye = CMatrix::identity(observed.dim(), observed.dim());
    let v_blocks: Vec<CMatrix> = (0..grid.n())
        .map(|j| kron(&eye, &expm_from_eig(&vals, &vecs, t * grid.x(j)), cap))
        .collect::<Result<_>>()?;
    let evolved = conjugate_block_diagonal(&v_blocks, &dilated);
    let full = DensityMatrix::from_parts(evolved, vec![grid.n(), observed.dim(), traced.dim()])?;
    let second = partial_trace(&full, &[0, 1])?;
    Ok(max_abs_diff(first.mat(), second.mat()))
}
