//! Dense complex linear algebra used by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Tensor factors are ordered
//! (system, env 1, ..., env N) with the first factor most significant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues in [-CLIP_TOL, 0) are treated as zero.
pub const CLIP_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// max |A - A†|.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            d = d.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    d
}

/// Hermitian within `1e-12 * (1 + max|A|)`.
pub fn is_hermitian(a: &CMatrix) -> bool {
    hermitian_defect(a) <= 1e-12 * (1.0 + max_abs(a))
}

fn check_finite(a: &CMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Invalid("matrix has non-finite entries".into()))
    }
}

fn require_hermitian(a: &CMatrix, tol_scale: f64) -> Result<()> {
    let defect = hermitian_defect(a);
    if defect <= tol_scale * (1.0 + max_abs(a)) {
        Ok(())
    } else {
        Err(Error::NotHermitian { defect })
    }
}

/// (A + A†)/2, used to strip rounding noise before an eigendecomposition.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// A / max|A_ij| with entries below 1e-250 of the maximum set to zero, and
/// the scale, so that squared entries stay representable.
fn normalised(a: &CMatrix) -> (CMatrix, f64) {
    let s = max_abs(a);
    if s == 0.0 || !s.is_finite() {
        return (a.clone(), 1.0);
    }
    let m = a.map(|z| {
        let w = z / s;
        if w.norm() < 1e-250 {
            c(0.0, 0.0)
        } else {
            w
        }
    });
    (m, s)
}

/// The QL iteration in nalgebra can return NaN on matrices with exactly
/// zero diagonal blocks; a diagonal shift moves it off that path and leaves
/// the eigenvectors unchanged.
const RETRY_SHIFTS: [f64; 3] = [0.0, 0.5, -0.73];

fn shifted(m: &CMatrix, sigma: f64) -> CMatrix {
    if sigma == 0.0 {
        m.clone()
    } else {
        m + CMatrix::identity(m.nrows(), m.ncols()) * c(sigma, 0.0)
    }
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (m, scale) = normalised(&hermitian_part(a));
    let mut eig = SymmetricEigen::new(m.clone());
    let mut sigma = 0.0;
    for &s in &RETRY_SHIFTS[1..] {
        if eig.eigenvalues.iter().all(|l| l.is_finite()) && eig.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            break;
        }
        eig = SymmetricEigen::new(shifted(&m, s));
        sigma = s;
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| (eig.eigenvalues[i] - sigma) * scale).collect();
    let vecs = CMatrix::from_fn(a.nrows(), a.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let (m, scale) = normalised(&hermitian_part(a));
    let mut v = Vec::new();
    for &s in &RETRY_SHIFTS {
        v = shifted(&m, s).symmetric_eigenvalues().iter().map(|l| (l - s) * scale).collect();
        if v.iter().all(|l: &f64| l.is_finite()) {
            break;
        }
    }
    v.sort_by(f64::total_cmp);
    v
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let (m, scale) = normalised(a);
    m.singular_values().iter().map(|x| x * scale).collect()
}

/// Sum of singular values, from a full SVD.
pub fn trace_norm(a: &CMatrix) -> Result<f64> {
    check_finite(a)?;
    Ok(singular_values(a).iter().sum())
}

/// Trace norm of a Hermitian matrix as the sum of |eigenvalues|.
///
/// For Hermitian input the singular values are exactly the moduli of the
/// eigenvalues, and the symmetric solver is several times faster.
pub fn trace_norm_hermitian(a: &CMatrix) -> Result<f64> {
    check_finite(a)?;
    require_hermitian(a, 1e-10)?;
    Ok(eigvalsh(a).iter().map(|l| l.abs()).sum())
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    singular_values(a).iter().fold(0.0, |m: f64, &s| m.max(s))
}

/// Result of [`trace_norm_compressed`].
#[derive(Clone, Copy, Debug)]
pub struct CompressedNorm {
    pub value: f64,
    /// Rigorous bound on |value - ‖A‖₁| from the discarded directions.
    pub error_bound: f64,
    /// Dimension after compression.
    pub rank: usize,
}

/// Trace norm of a Hermitian matrix on `outer ⊗ inner`, restricted to its
/// block support.
///
/// For every outer index j the block row `A[j, :]` is factored by SVD and its
/// left singular vectors with non-negligible singular values span a subspace
/// S_j of the inner factor. The support of A lies in ⊕_j S_j, so
/// `‖A‖₁ = ‖Q†AQ‖₁` with Q the block-diagonal isometry onto ⊕_j S_j. Dropping
/// singular values σ moves the norm by at most 2Σσ, returned as
/// `error_bound`.
pub fn trace_norm_compressed(a: &CMatrix, outer: usize, inner: usize) -> Result<CompressedNorm> {
    check_finite(a)?;
    require_hermitian(a, 1e-10)?;
    let n = outer * inner;
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, expected {n}x{n}",
            a.nrows(),
            a.ncols()
        )));
    }
    if inner == 1 {
        return Ok(CompressedNorm { value: trace_norm_hermitian(a)?, error_bound: 0.0, rank: n });
    }
    let (a, scale) = normalised(a);
    let a = &a;
    let mut bases = Vec::with_capacity(outer);
    let mut sigma_all: Vec<Vec<f64>> = Vec::with_capacity(outer);
    let mut global_max: f64 = 0.0;
    for j in 0..outer {
        let row = a.rows(j * inner, inner).into_owned();
        let svd = row.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        global_max = s.iter().fold(global_max, |m, &x| m.max(x));
        bases.push(u);
        sigma_all.push(s);
    }
    let thr = 1e-14 * global_max;
    let mut dropped = 0.0;
    let mut kept: Vec<CMatrix> = Vec::with_capacity(outer);
    let mut offsets = Vec::with_capacity(outer + 1);
    offsets.push(0usize);
    for (u, s) in bases.iter().zip(&sigma_all) {
        let cols: Vec<usize> = (0..s.len()).filter(|&k| s[k] > thr).collect();
        dropped += s.iter().filter(|&&x| x <= thr).sum::<f64>();
        let q = CMatrix::from_fn(inner, cols.len(), |r, k| u[(r, cols[k])]);
        offsets.push(offsets.last().unwrap() + cols.len());
        kept.push(q);
    }
    let r = *offsets.last().unwrap();
    if r == 0 {
        return Ok(CompressedNorm { value: 0.0, error_bound: 2.0 * dropped * scale, rank: 0 });
    }
    let mut small = CMatrix::zeros(r, r);
    for j in 0..outer {
        let qj = &kept[j];
        if qj.ncols() == 0 {
            continue;
        }
        for k in 0..outer {
            let qk = &kept[k];
            if qk.ncols() == 0 {
                continue;
            }
            let blk = a.view((j * inner, k * inner), (inner, inner));
            let piece = qj.adjoint() * blk * qk;
            small.view_mut((offsets[j], offsets[k]), (qj.ncols(), qk.ncols())).copy_from(&piece);
        }
    }
    let value = eigvalsh(&small).iter().map(|l| l.abs()).sum::<f64>() * scale;
    Ok(CompressedNorm { value, error_bound: 2.0 * dropped * scale, rank: r })
}

/// Square root of a PSD Hermitian matrix, clipping eigenvalues in [-1e-10, 0).
pub fn sqrt_psd(a: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = eigh(a);
    let min = vals.first().copied().unwrap_or(0.0);
    if min < -CLIP_TOL {
        return Err(Error::NotPsd { min_eig: min });
    }
    let d = CVector::from_iterator(vals.len(), vals.iter().map(|&l| c(l.max(0.0).sqrt(), 0.0)));
    Ok(&vecs * CMatrix::from_diagonal(&d) * vecs.adjoint())
}

/// F(ρ, σ) = ‖√ρ √σ‖₁².
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "fidelity of {}-dim and {}-dim states",
            rho.dim(),
            sigma.dim()
        )));
    }
    let prod = sqrt_psd(rho.mat())? * sqrt_psd(sigma.mat())?;
    let f = trace_norm(&prod)?.powi(2);
    Ok(f.clamp(0.0, 1.0))
}

/// e^{-isH} from the eigendecomposition of H.
pub fn herm_expm(h: &CMatrix, s: f64) -> Result<CMatrix> {
    check_finite(h)?;
    require_hermitian(h, 1e-12)?;
    let (vals, vecs) = eigh(h);
    Ok(expm_from_eig(&vals, &vecs, s))
}

/// e^{-isH} given H = V diag(λ) V†.
pub fn expm_from_eig(vals: &[f64], vecs: &CMatrix, s: f64) -> CMatrix {
    if s == 0.0 {
        return CMatrix::identity(vals.len(), vals.len());
    }
    let d = CVector::from_iterator(vals.len(), vals.iter().map(|&l| C64::from_polar(1.0, -s * l)));
    vecs * CMatrix::from_diagonal(&d) * vecs.adjoint()
}

/// Kronecker product with a dimension cap on the result.
pub fn kron(a: &CMatrix, b: &CMatrix, cap: usize) -> Result<CMatrix> {
    let rows = a.nrows() * b.nrows();
    let cols = a.ncols() * b.ncols();
    let dim = rows.max(cols);
    if dim > cap {
        return Err(Error::Resource { dim, cap });
    }
    Ok(a.kronecker(b))
}

pub fn kron_all(factors: &[&CMatrix], cap: usize) -> Result<CMatrix> {
    let mut acc = CMatrix::identity(1, 1);
    for f in factors {
        acc = kron(&acc, f, cap)?;
    }
    Ok(acc)
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.trace()
}

/// Outer product |u⟩⟨v|.
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

/// A density operator with declared tensor factors.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Validates Hermiticity, positivity and unit trace to 1e-10.
    pub fn new(mat: CMatrix, dims: Vec<usize>) -> Result<Self> {
        let dm = Self::from_parts(mat, dims)?;
        dm.validate()?;
        Ok(dm)
    }

    /// Checks only shape; for states that are valid by construction.
    pub fn from_parts(mat: CMatrix, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || dims.iter().any(|&d| d == 0) || mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Dimension(format!(
                "dims {dims:?} do not match a {}x{} matrix",
                mat.nrows(),
                mat.ncols()
            )));
        }
        check_finite(&mat)?;
        Ok(Self { mat, dims })
    }

    pub fn single(mat: CMatrix) -> Result<Self> {
        let n = mat.nrows();
        Self::new(mat, vec![n])
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::Invalid("zero vector".into()));
        }
        let u = psi / c(norm, 0.0);
        Self::new(outer(&u, &u), vec![psi.len()])
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = CMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0);
        Self { mat: m, dims: vec![dim] }
    }

    pub fn validate(&self) -> Result<()> {
        let defect = hermitian_defect(&self.mat);
        if defect > 1e-10 {
            return Err(Error::NotHermitian { defect });
        }
        let tr = self.mat.trace();
        if (tr - c(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Invalid(format!("trace is {tr}")));
        }
        let min = eigvalsh(&self.mat).first().copied().unwrap_or(0.0);
        if min < -CLIP_TOL {
            return Err(Error::NotPsd { min_eig: min });
        }
        Ok(())
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> CMatrix {
        self.mat
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// Tensor product, concatenating dims.
    pub fn tensor(&self, other: &DensityMatrix, cap: usize) -> Result<DensityMatrix> {
        let m = kron(&self.mat, &other.mat, cap)?;
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(DensityMatrix { mat: m, dims })
    }
}

/// Reduce onto the factors listed in `keep` (0-based, any order; the output
/// keeps the original factor order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let dims = rho.dims();
    let nf = dims.len();
    if keep.is_empty() {
        return Err(Error::Invalid("keep set is empty".into()));
    }
    let mut kept = vec![false; nf];
    for &k in keep {
        if k >= nf {
            return Err(Error::Invalid(format!("factor {k} out of range for {nf} factors")));
        }
        kept[k] = true;
    }
    let out_dims: Vec<usize> = (0..nf).filter(|&k| kept[k]).map(|k| dims[k]).collect();
    let n = rho.dim();
    let n_out: usize = out_dims.iter().product();
    // For each full index: (kept index, traced index).
    let mut split = vec![(0usize, 0usize); n];
    for (idx, slot) in split.iter_mut().enumerate() {
        let mut rem = idx;
        let mut kidx = 0usize;
        let mut kmul = 1usize;
        let mut tidx = 0usize;
        let mut tmul = 1usize;
        for f in (0..nf).rev() {
            let digit = rem % dims[f];
            rem /= dims[f];
            if kept[f] {
                kidx += digit * kmul;
                kmul *= dims[f];
            } else {
                tidx += digit * tmul;
                tmul *= dims[f];
            }
        }
        *slot = (kidx, tidx);
    }
    let m = rho.mat();
    let mut out = CMatrix::zeros(n_out, n_out);
    for r in 0..n {
        let (kr, tr) = split[r];
        for col in 0..n {
            let (kc, tc) = split[col];
            if tr == tc {
                out[(kr, kc)] += m[(r, col)];
            }
        }
    }
    DensityMatrix::from_parts(out, out_dims)
}

/// Random instances shared by tests and the verify suite.
pub mod random {
    use super::*;
    use rand_distr::StandardNormal;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        c(standard_normal(rng), standard_normal(rng)) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0)
    }

    pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
    }

    pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
        let v = CVector::from_fn(dim, |_, _| complex_normal(rng));
        let n = v.norm();
        v / c(n, 0.0)
    }

    pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
        let g = ginibre(rng, dim, dim);
        hermitian_part(&g)
    }

    /// Random density matrix of the given rank (Wishart construction).
    pub fn density<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> DensityMatrix {
        let g = ginibre(rng, dim, rank.max(1));
        let w = &g * g.adjoint();
        let tr = w.trace().re;
        let m = hermitian_part(&(w / c(tr, 0.0)));
        DensityMatrix::from_parts(m, vec![dim]).expect("square by construction")
    }

    pub fn unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
        let h = hermitian(rng, dim);
        herm_expm(&h, 1.0).expect("Hermitian by construction")
    }
}
