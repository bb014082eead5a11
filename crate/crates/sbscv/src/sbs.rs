//! Partitions, environment PVMs, the candidate SBS state and its
//! diagnostics.

use crate::cvgrid::{interval_projector, CvDensity, Grid, Interval};
use crate::dynamics::JointState;
use crate::envmodel::{branch_state, EnvModel};
use crate::error::{Error, Result};
use crate::numkit::{
    c, eigh, fidelity, hermitian_part, kron_all, max_abs, max_abs_diff, partial_trace, trace_norm_compressed, CMatrix,
    DensityMatrix,
};

/// Cells with weight below this are dropped from the candidate.
pub const MIN_WEIGHT: f64 = 1e-12;

/// Fidelity at or below which a branch pair is reported distinguishable.
pub const DISTINGUISHABLE_F: f64 = 0.05;

/// Ordered cells [a_0, a_1), [a_1, a_2), ... covering the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    grid: Grid,
    cells: Vec<Interval>,
    /// Grid-index range of each cell.
    ranges: Vec<std::ops::Range<usize>>,
}

impl Partition {
    pub fn new(grid: &Grid, cells: Vec<Interval>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Invalid("partition has no cells".into()));
        }
        let tol = 1e-12 * (grid.x_max() - grid.x_min());
        if (cells[0].a - grid.x_min()).abs() > tol || (cells[cells.len() - 1].b - grid.x_max()).abs() > tol {
            return Err(Error::Invalid("partition does not cover the grid".into()));
        }
        for w in cells.windows(2) {
            if w[0].b != w[1].a {
                return Err(Error::Invalid(format!("cells [{}, {}) and [{}, {}) are not adjacent", w[0].a, w[0].b, w[1].a, w[1].b)));
            }
        }
        let ranges = cells.iter().map(|c| c.indices(grid)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: *grid, cells, ranges })
    }

    /// `k` cells of equal width.
    pub fn uniform(grid: &Grid, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("need at least one cell".into()));
        }
        let w = (grid.x_max() - grid.x_min()) / k as f64;
        let edges: Vec<f64> = (0..=k)
            .map(|i| if i == k { grid.x_max() } else { grid.x_min() + i as f64 * w })
            .collect();
        Self::from_edges(grid, &edges)
    }

    /// Cells split at the given interior cut points.
    pub fn cuts(grid: &Grid, cuts: &[f64]) -> Result<Self> {
        let mut edges = vec![grid.x_min()];
        edges.extend_from_slice(cuts);
        edges.push(grid.x_max());
        Self::from_edges(grid, &edges)
    }

    fn from_edges(grid: &Grid, edges: &[f64]) -> Result<Self> {
        let cells = edges.windows(2).map(|w| Interval::new(w[0], w[1])).collect::<Result<Vec<_>>>()?;
        Self::new(grid, cells)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[Interval] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.ranges[i].clone()
    }

    /// Cell index of every grid point.
    pub fn cell_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.grid.n()];
        for (i, r) in self.ranges.iter().enumerate() {
            for j in r.clone() {
                out[j] = i;
            }
        }
        out
    }

    pub fn projectors(&self) -> Result<Vec<CMatrix>> {
        self.cells.iter().map(|d| interval_projector(&self.grid, d)).collect()
    }
}

/// Projectors P_i on one environment, one per cell, plus the remainder.
#[derive(Clone, Debug)]
pub struct EnvProjectors {
    pub projectors: Vec<CMatrix>,
    pub remainder: Option<CMatrix>,
}

impl EnvProjectors {
    pub fn dim(&self) -> usize {
        self.projectors[0].nrows()
    }

    /// Largest violation of idempotence, Hermiticity, orthogonality and
    /// completeness.
    pub fn defect(&self) -> f64 {
        let d = self.dim();
        let mut all: Vec<&CMatrix> = self.projectors.iter().collect();
        if let Some(r) = &self.remainder {
            all.push(r);
        }
        let mut worst: f64 = 0.0;
        let mut sum = CMatrix::zeros(d, d);
        for (i, p) in all.iter().enumerate() {
            worst = worst.max(max_abs_diff(&(*p * *p), p));
            worst = worst.max(max_abs_diff(&p.adjoint(), p));
            for q in &all[i + 1..] {
                worst = worst.max(max_abs(&(*p * *q)));
            }
            sum += *p;
        }
        worst.max(max_abs_diff(&sum, &CMatrix::identity(d, d)))
    }
}

/// Per-environment projector families aligned with the partition cells.
#[derive(Clone, Debug)]
pub struct EnvPvm {
    pub envs: Vec<EnvProjectors>,
    pub warnings: Vec<String>,
}

impl EnvPvm {
    pub fn new(envs: Vec<EnvProjectors>) -> Result<Self> {
        let pvm = Self { envs, warnings: Vec::new() };
        pvm.validate()?;
        Ok(pvm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() {
            return Err(Error::Invalid("PVM covers no environment".into()));
        }
        let cells = self.envs[0].projectors.len();
        for (k, e) in self.envs.iter().enumerate() {
            if e.projectors.len() != cells {
                return Err(Error::Invalid(format!("environment {k} has {} projectors, expected {cells}", e.projectors.len())));
            }
            let d = e.defect();
            if d > 1e-10 {
                return Err(Error::Invalid(format!("environment {k} projectors have defect {d:.3e}")));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.envs[0].projectors.len()
    }

    /// ⊗_k P_i^k.
    pub fn joint_projector(&self, i: usize, cap: usize) -> Result<CMatrix> {
        let fs: Vec<&CMatrix> = self.envs.iter().map(|e| &e.projectors[i]).collect();
        kron_all(&fs, cap)
    }

    /// Identity on every environment for a single cell.
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            envs: dims
                .iter()
                .map(|&d| EnvProjectors { projectors: vec![CMatrix::identity(d, d)], remainder: None })
                .collect(),
            warnings: Vec::new(),
        }
    }

    /// Projectors onto Fock-basis index sets: `assignment[k][i]` lists the
    /// basis vectors of environment k given to cell i.
    pub fn fixed(dims: &[usize], assignment: &[Vec<Vec<usize>>]) -> Result<Self> {
        if assignment.len() != dims.len() {
            return Err(Error::Invalid(format!("assignment covers {} environments, expected {}", assignment.len(), dims.len())));
        }
        let mut envs = Vec::new();
        for (&d, cells) in dims.iter().zip(assignment) {
            let mut used = vec![false; d];
            let mut projectors = Vec::new();
            for idx in cells {
                let mut p = CMatrix::zeros(d, d);
                for &k in idx {
                    if k >= d || used[k] {
                        return Err(Error::Invalid(format!("basis index {k} is out of range or repeated")));
                    }
                    used[k] = true;
                    p[(k, k)] = c(1.0, 0.0);
                }
                projectors.push(p);
            }
            let rest: Vec<usize> = (0..d).filter(|&k| !used[k]).collect();
            let remainder = (!rest.is_empty()).then(|| {
                let mut r = CMatrix::zeros(d, d);
                for k in rest {
                    r[(k, k)] = c(1.0, 0.0);
                }
                r
            });
            envs.push(EnvProjectors { projectors, remainder });
        }
        Self::new(envs)
    }
}

/// Per-cell data of a branch: weight, conditional state and reduced
/// environment states Λ_i.
#[derive(Clone, Debug)]
pub struct Branch {
    pub cell: usize,
    pub weight: f64,
    pub mean: f64,
    pub state: CvDensity,
    /// Λ_i(ρ0) on each observed environment.
    pub lambdas: Vec<DensityMatrix>,
}

pub fn branch_weight(rho_s: &CvDensity, delta: &Interval) -> Result<f64> {
    let r = delta.indices(rho_s.grid())?;
    let k = rho_s.kernel();
    Ok(r.map(|j| k[(j, j)].re).sum::<f64>() * rho_s.grid().dx())
}

/// P_Δ ρ P_Δ / Tr.
pub fn conditional_branch_state(rho_s: &CvDensity, delta: &Interval) -> Result<CvDensity> {
    let w = branch_weight(rho_s, delta)?;
    if w < MIN_WEIGHT {
        return Err(Error::EmptyBranch);
    }
    let r = delta.indices(rho_s.grid())?;
    let k = rho_s.kernel();
    let n = k.nrows();
    let out = CMatrix::from_fn(n, n, |i, j| {
        if r.contains(&i) && r.contains(&j) {
            k[(i, j)] / c(w, 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    CvDensity::from_parts(*rho_s.grid(), out)
}

/// Σ_j K(x_j,x_j) dx · e^{-itx_j S} ρ0 e^{itx_j S} on the joint observed
/// space, S = Σ g_k B_k.
pub fn lambda_map(branch: &CvDensity, observed: &[EnvModel], t: f64, cap: usize) -> Result<DensityMatrix> {
    if observed.is_empty() {
        return Err(Error::Invalid("no observed environment".into()));
    }
    let grid = branch.grid();
    let blocks = crate::dynamics::conditional_blocks(grid, observed, t, cap)?;
    let states: Vec<&CMatrix> = observed.iter().map(|e| e.rho0().mat()).collect();
    let rho0 = kron_all(&states, cap)?;
    let d = rho0.nrows();
    let dx = grid.dx();
    let mut acc = CMatrix::zeros(d, d);
    for (j, p) in branch.density().iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let u = &blocks[j];
        acc += u * &rho0 * u.adjoint() * c(p * dx, 0.0);
    }
    DensityMatrix::from_parts(hermitian_part(&acc), observed.iter().map(|e| e.dim()).collect())
}

/// Λ_i for one environment.
pub fn lambda_single(branch: &CvDensity, env: &EnvModel, t: f64) -> DensityMatrix {
    let grid = branch.grid();
    let dx = grid.dx();
    let d = env.dim();
    let mut acc = CMatrix::zeros(d, d);
    for (j, p) in branch.density().iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        acc += branch_state(env, t, grid.x(j)).mat() * c(p * dx, 0.0);
    }
    DensityMatrix::from_parts(hermitian_part(&acc), vec![d]).expect("square")
}

/// Branch data for every cell of weight at least [`MIN_WEIGHT`].
pub fn branches(rho_s: &CvDensity, partition: &Partition, observed: &[EnvModel], t: f64) -> Result<Vec<Branch>> {
    let mut out = Vec::new();
    for (i, cell) in partition.cells().iter().enumerate() {
        let weight = branch_weight(rho_s, cell)?;
        if weight < MIN_WEIGHT {
            continue;
        }
        let state = conditional_branch_state(rho_s, cell)?;
        let lambdas = observed.iter().map(|e| lambda_single(&state, e, t)).collect();
        out.push(Branch { cell: i, weight, mean: state.mean_position(), state, lambdas });
    }
    Ok(out)
}

/// (Σ_i (P_Δi ⊗ I) ρ (P_Δi ⊗ I), ρ − that).
pub fn split_diag_offdiag(rho: &JointState, partition: &Partition) -> (CMatrix, CMatrix) {
    let d = rho.env_dim();
    let cell = partition.cell_of();
    let m = rho.mat();
    let diag = CMatrix::from_fn(m.nrows(), m.ncols(), |r, s| {
        if cell[r / d] == cell[s / d] {
            m[(r, s)]
        } else {
            c(0.0, 0.0)
        }
    });
    let off = m - &diag;
    (diag, off)
}

#[derive(Clone, Debug)]
pub struct SbsCandidate {
    pub state: JointState,
    pub norm_const: f64,
    pub partition: Partition,
    pub env_pvm: EnvPvm,
    /// p̄_i for every cell (dropped cells included).
    pub branch_weights: Vec<f64>,
    /// Reduced branch states on each environment before projection,
    /// `branch_env_states[k][i]`; `None` for dropped cells.
    pub branch_env_states: Vec<Vec<Option<DensityMatrix>>>,
}

impl SbsCandidate {
    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.branch_weights.len()).filter(|&i| self.branch_weights[i] >= MIN_WEIGHT).collect()
    }
}

/// (1/𝒩) Σ_i (P_Δi ⊗ P_i) ρ_t (P_Δi ⊗ P_i).
pub fn build_sbs_candidate(rho_t: &JointState, partition: &Partition, env_pvm: &EnvPvm, cap: usize) -> Result<SbsCandidate> {
    if env_pvm.cells() != partition.len() {
        return Err(Error::Invalid(format!("PVM has {} cells, partition has {}", env_pvm.cells(), partition.len())));
    }
    if env_pvm.envs.len() != rho_t.env_dims().len() {
        return Err(Error::Invalid("PVM and state disagree on the number of environments".into()));
    }
    let d = rho_t.env_dim();
    let n = rho_t.grid().n();
    let m = rho_t.mat();
    let weights: Vec<f64> = (0..partition.len())
        .map(|i| partition.range(i).map(|j| (0..d).map(|a| m[(j * d + a, j * d + a)].re).sum::<f64>()).sum())
        .collect();
    let projectors: Vec<Option<CMatrix>> = (0..partition.len())
        .map(|i| if weights[i] >= MIN_WEIGHT { env_pvm.joint_projector(i, cap).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let cell = partition.cell_of();
    let mut out = CMatrix::zeros(n * d, n * d);
    for j in 0..n {
        let Some(p) = &projectors[cell[j]] else { continue };
        for k in partition.range(cell[j]) {
            let blk = m.view((j * d, k * d), (d, d));
            let v = p * blk * p;
            out.view_mut((j * d, k * d), (d, d)).copy_from(&v);
        }
    }
    let norm = out.trace().re;
    if !(norm >= MIN_WEIGHT) {
        return Err(Error::DegenerateCandidate { norm });
    }
    out /= c(norm, 0.0);
    let state = JointState::new(*rho_t.grid(), rho_t.env_dims().to_vec(), hermitian_part(&out))?;

    let nenv = rho_t.env_dims().len();
    let mut branch_env_states = vec![vec![None; partition.len()]; nenv];
    for i in 0..partition.len() {
        if weights[i] < MIN_WEIGHT {
            continue;
        }
        let mut acc = CMatrix::zeros(d, d);
        for j in partition.range(i) {
            acc += m.view((j * d, j * d), (d, d));
        }
        acc /= c(weights[i], 0.0);
        let joint = DensityMatrix::from_parts(hermitian_part(&acc), rho_t.env_dims().to_vec())?;
        for (k, slot) in branch_env_states.iter_mut().enumerate() {
            slot[i] = Some(if nenv == 1 { joint.clone() } else { partial_trace(&joint, &[k])? });
        }
    }
    Ok(SbsCandidate {
        state,
        norm_const: norm,
        partition: partition.clone(),
        env_pvm: env_pvm.clone(),
        branch_weights: weights,
        branch_env_states,
    })
}

/// Half trace norm of a Hermitian matrix on grid ⊗ envs, with the error
/// bound from support compression.
pub fn half_norm(a: &CMatrix, n: usize, d: usize) -> Result<(f64, f64)> {
    let r = trace_norm_compressed(a, n, d)?;
    Ok((0.5 * r.value, 0.5 * r.error_bound))
}

/// ½‖ρ_t − candidate‖₁.
pub fn sbs_distance(rho_t: &JointState, candidate: &SbsCandidate) -> Result<f64> {
    if rho_t.dim() != candidate.state.dim() {
        return Err(Error::Dimension("state and candidate differ in dimension".into()));
    }
    let diff = rho_t.mat() - candidate.state.mat();
    Ok(half_norm(&diff, rho_t.grid().n(), rho_t.env_dim())?.0)
}

/// ½‖Σ_i (P_Δi⊗I)ρ_t(P_Δi⊗I) − candidate‖₁, evaluated cell by cell since
/// both operators are block diagonal in the partition.
pub fn diagonal_distance(rho_t: &JointState, candidate: &SbsCandidate) -> Result<f64> {
    let d = rho_t.env_dim();
    let diff = rho_t.mat() - candidate.state.mat();
    let mut total = 0.0;
    for i in 0..candidate.partition.len() {
        let r = candidate.partition.range(i);
        let len = r.len();
        let blk = diff.view((r.start * d, r.start * d), (len * d, len * d)).into_owned();
        total += half_norm(&blk, len, d)?.0;
    }
    Ok(total)
}

/// ½‖ρ_t − Σ_i (P_Δi⊗I)ρ_t(P_Δi⊗I)‖₁.
pub fn offdiag_half_norm(rho_t: &JointState, partition: &Partition) -> Result<f64> {
    let (_, off) = split_diag_offdiag(rho_t, partition);
    Ok(half_norm(&off, rho_t.grid().n(), rho_t.env_dim())?.0)
}

fn orthonormal_columns(vs: &[nalgebra::DVector<crate::numkit::C64>]) -> Vec<nalgebra::DVector<crate::numkit::C64>> {
    let mut out: Vec<nalgebra::DVector<crate::numkit::C64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for u in &out {
            let proj = u.dotc(&w);
            w -= u * proj;
        }
        let n = w.norm();
        if n > 1e-12 {
            out.push(w / c(n, 0.0));
        }
    }
    out
}

fn projector_from(vs: &[nalgebra::DVector<crate::numkit::C64>], d: usize) -> CMatrix {
    let mut p = CMatrix::zeros(d, d);
    for v in vs {
        p += v * v.adjoint();
    }
    p
}

/// Greedy spectral PVM: cells in descending weight claim the leading
/// eigenvectors of Λ_i restricted to what earlier cells left over.
pub fn heuristic_env_pvm(branches: &[Branch], cells: usize) -> Result<EnvPvm> {
    if branches.is_empty() {
        return Err(Error::Invalid("no branch data".into()));
    }
    let nenv = branches[0].lambdas.len();
    let mut order: Vec<usize> = (0..branches.len()).collect();
    order.sort_by(|&a, &b| branches[b].weight.total_cmp(&branches[a].weight).then(a.cmp(&b)));
    let mut envs = Vec::with_capacity(nenv);
    let mut warnings = Vec::new();
    for k in 0..nenv {
        let d = branches[0].lambdas[k].dim();
        if d < branches.len() {
            return Err(Error::RankStarvation { dim: d, cells: branches.len() });
        }
        for a in 0..branches.len() {
            for b in a + 1..branches.len() {
                let f = fidelity(&branches[a].lambdas[k], &branches[b].lambdas[k])?;
                if f > 1.0 - 1e-9 {
                    warnings.push(format!(
                        "environment {k}: cells {} and {} have overlapping branch states (F = {f:.12}); assigned by order",
                        branches[a].cell, branches[b].cell
                    ));
                }
            }
        }
        let mut projectors = vec![CMatrix::zeros(d, d); cells];
        // Orthonormal basis of the unassigned subspace, as columns.
        let mut free = CMatrix::identity(d, d);
        for (pos, &bi) in order.iter().enumerate() {
            let later = &order[pos + 1..];
            let br = &branches[bi];
            let lam = br.lambdas[k].mat();
            let restricted = free.adjoint() * lam * &free;
            let (vals, vecs) = eigh(&restricted);
            let m = free.ncols();
            let max_take = m - later.len();
            let mut taken = Vec::new();
            let mut left = Vec::new();
            for idx in (0..m).rev() {
                let v = &free * vecs.column(idx);
                let gain = br.weight * vals[idx];
                let rival = later
                    .iter()
                    .map(|&o| branches[o].weight * v.dotc(&(branches[o].lambdas[k].mat() * &v)).re)
                    .fold(0.0, f64::max);
                let wins = vals[idx] > 1e-14 && gain >= rival;
                if taken.len() < max_take && (taken.is_empty() || wins) {
                    taken.push(v);
                } else {
                    left.push(v);
                }
            }
            let taken = orthonormal_columns(&taken);
            projectors[br.cell] = projector_from(&taken, d);
            let left = orthonormal_columns(&left);
            free = CMatrix::from_fn(d, left.len(), |r, col| left[col][r]);
        }
        let remainder = (free.ncols() > 0).then(|| &free * free.adjoint());
        envs.push(EnvProjectors { projectors, remainder });
    }
    let mut pvm = EnvPvm::new(envs)?;
    pvm.warnings = warnings;
    Ok(pvm)
}

/// 𝒩 for one environment: Σ_i p̄_i Tr{P_i Λ_i}.
fn success(branches: &[Branch], k: usize, projectors: &[CMatrix]) -> f64 {
    branches
        .iter()
        .map(|b| b.weight * (&projectors[b.cell] * b.lambdas[k].mat()).trace().re)
        .sum()
}

/// Best assignment of the vectors of several candidate bases to cells, per
/// environment of dimension at most 6.
///
/// Bases tried: the eigenbasis of every Λ_i and of every p̄_iΛ_i − p̄_jΛ_j.
/// For two cells the latter contains the Helstrom projector, so the search
/// attains the optimum.
pub fn exhaustive_env_pvm(branches: &[Branch], cells: usize) -> Result<EnvPvm> {
    if branches.is_empty() {
        return Err(Error::Invalid("no branch data".into()));
    }
    let nenv = branches[0].lambdas.len();
    let nb = branches.len();
    let mut envs = Vec::new();
    for k in 0..nenv {
        let d = branches[0].lambdas[k].dim();
        if d > 6 {
            return Err(Error::Precondition(format!("exhaustive PVM search needs env dim <= 6, got {d}")));
        }
        if d < nb {
            return Err(Error::RankStarvation { dim: d, cells: nb });
        }
        let mut bases = Vec::new();
        for b in branches {
            bases.push(eigh(b.lambdas[k].mat()).1);
        }
        for a in 0..nb {
            for b in a + 1..nb {
                let diff = branches[a].lambdas[k].mat() * c(branches[a].weight, 0.0)
                    - branches[b].lambdas[k].mat() * c(branches[b].weight, 0.0);
                bases.push(eigh(&diff).1);
            }
        }
        let mut best: Option<(f64, Vec<CMatrix>)> = None;
        let combos = nb.pow(d as u32);
        for basis in &bases {
            for code in 0..combos {
                let mut owner = vec![0usize; d];
                let mut x = code;
                for o in owner.iter_mut() {
                    *o = x % nb;
                    x /= nb;
                }
                if (0..nb).any(|b| !owner.contains(&b)) {
                    continue;
                }
                let mut projectors = vec![CMatrix::zeros(d, d); cells];
                for (col, &o) in owner.iter().enumerate() {
                    let v = basis.column(col);
                    projectors[branches[o].cell] += &v * v.adjoint();
                }
                let s = success(branches, k, &projectors);
                if best.as_ref().map_or(true, |(b, _)| s > *b + 1e-15) {
                    best = Some((s, projectors));
                }
            }
        }
        let (_, projectors) = best.expect("at least one admissible assignment");
        envs.push(EnvProjectors { projectors, remainder: None });
    }
    EnvPvm::new(envs)
}

/// F between the reduced branch states of every pair of cells, one matrix
/// per environment. `None` marks dropped cells.
pub fn branch_fidelity_matrix(candidate: &SbsCandidate) -> Result<Vec<Vec<Vec<Option<f64>>>>> {
    let mut out = Vec::new();
    for states in &candidate.branch_env_states {
        let n = states.len();
        let mut m = vec![vec![None; n]; n];
        for i in 0..n {
            for j in i..n {
                if let (Some(a), Some(b)) = (&states[i], &states[j]) {
                    let f = if i == j { 1.0 } else { fidelity(a, b)? };
                    m[i][j] = Some(f);
                    m[j][i] = Some(f);
                }
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// p_E = 1 − Σ_i p_i Tr{M_i ρ_i M_i†}. Outcomes beyond the number of states
/// count as errors.
pub fn qsd_error(weights: &[f64], states: &[DensityMatrix], measurement: &[CMatrix]) -> Result<f64> {
    if weights.len() != states.len() || states.is_empty() {
        return Err(Error::Invalid("need one weight per state".into()));
    }
    if measurement.len() < states.len() {
        return Err(Error::Invalid("fewer outcomes than states".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 || weights.iter().any(|&p| p < 0.0) {
        return Err(Error::Invalid(format!("weights must be a distribution, sum is {total}")));
    }
    let d = states[0].dim();
    let mut sum = CMatrix::zeros(d, d);
    for m in measurement {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Dimension("measurement operator has wrong shape".into()));
        }
        sum += m.adjoint() * m;
    }
    let defect = max_abs_diff(&sum, &CMatrix::identity(d, d));
    if defect > 1e-8 {
        return Err(Error::Invalid(format!("measurement does not resolve the identity (defect {defect:.3e})")));
    }
    let ok: f64 = weights
        .iter()
        .zip(states)
        .zip(measurement)
        .map(|((p, rho), m)| p * (m * rho.mat() * m.adjoint()).trace().re)
        .sum();
    Ok((1.0 - ok).clamp(0.0, 1.0))
}

/// Helstrom projectors (P, I − P) with P the positive part of p₁ρ₁ − p₂ρ₂.
pub fn helstrom_measurement(p1: f64, rho1: &DensityMatrix, p2: f64, rho2: &DensityMatrix) -> (CMatrix, CMatrix) {
    let diff = rho1.mat() * c(p1, 0.0) - rho2.mat() * c(p2, 0.0);
    let (vals, vecs) = eigh(&diff);
    let d = vals.len();
    let mut p = CMatrix::zeros(d, d);
    for (i, &l) in vals.iter().enumerate() {
        if l > 0.0 {
            let v = vecs.column(i);
            p += &v * v.adjoint();
        }
    }
    let q = CMatrix::identity(d, d) - &p;
    (p, q)
}
