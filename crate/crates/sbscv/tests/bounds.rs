use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbscv::bounds::{
    diagonal_bound, diagonal_bound_multi, further_diagonal_bound, gaussian_offdiag_bound, jensen_sides, kupsch_offdiag_bound,
    kupsch_parts_residual, offdiag_total_bound, pure_distance_formula_check, stolz_product_bound, telescopic_bound,
    trace_distance_rescale, DEFAULT_TOL,
};
use sbscv::cvgrid::{cat_state, CvDensity, Grid, Interval};
use sbscv::dynamics::{evolve_with_kernel, gamma_from_envs, gaussian_gamma, GammaKernel, JointState};
use sbscv::envmodel::{branch_state, make_oscillator_env, EnvModel, OscillatorKind};
use sbscv::numkit::{c, random, CMatrix, CVector, DensityMatrix};
use sbscv::sbs::{
    branches, build_sbs_candidate, diagonal_distance, heuristic_env_pvm, offdiag_half_norm, Branch, EnvProjectors, EnvPvm,
    Partition, SbsCandidate,
};
use std::f64::consts::PI;

const CAP: usize = 8192;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn svd_trace_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

fn cat3() -> (Grid, CvDensity) {
    let g = Grid::new(-8.0, 8.0, 128).unwrap();
    let rho = cat_state(&g, &[-3.0, 3.0], &[c(1.0, 0.0), c(1.0, 0.0)], 0.5).unwrap();
    (g, rho)
}

fn iv(a: f64, b: f64) -> Interval {
    Interval::new(a, b).unwrap()
}

/// Block of K(x,y)e^{-c(x-y)²}dx read straight from the kernel.
fn gaussian_block_oracle(rho: &CvDensity, cc: f64, di: &Interval, dj: &Interval) -> f64 {
    let g = rho.grid();
    let ri = di.indices(g).unwrap();
    let rj = dj.indices(g).unwrap();
    let k = rho.kernel();
    let m = CMatrix::from_fn(ri.len(), rj.len(), |a, b| {
        let (i, j) = (ri.start + a, rj.start + b);
        k[(i, j)] * c((-cc * (g.x(i) - g.x(j)).powi(2)).exp() * g.dx(), 0.0)
    });
    svd_trace_norm(&m)
}

#[test]
fn kupsch_vanishing_block() {
    let g = Grid::new(-8.0, 8.0, 64).unwrap();
    let rho = cat_state(&g, &[-3.0], &[c(1.0, 0.0)], 0.4).unwrap();
    // Zero the kernel tail so nothing reaches the right half.
    let mut k = rho.kernel().clone();
    for i in 0..64 {
        for j in 0..64 {
            if g.x(i) > -0.5 || g.x(j) > -0.5 {
                k[(i, j)] = c(0.0, 0.0);
            }
        }
    }
    let tr: f64 = (0..64).map(|j| k[(j, j)].re).sum::<f64>() * g.dx();
    let rho = CvDensity::new(g, k * c(1.0 / tr, 0.0)).unwrap();
    let gamma = gaussian_gamma(1.0, 1.0, 1.0, &g).unwrap();
    let r = kupsch_offdiag_bound(&gamma, &rho, &iv(-8.0, 0.0), &iv(0.0, 8.0), DEFAULT_TOL).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.rhs, 0.0);
    assert!(r.satisfied);
}

#[test]
fn kupsch_trivial_kernel() {
    let (g, rho) = cat3();
    let gamma = gamma_from_envs(&[], 1.0, &g).unwrap();
    let r = kupsch_offdiag_bound(&gamma, &rho, &iv(-8.0, 0.0), &iv(0.0, 8.0), DEFAULT_TOL).unwrap();
    assert!((r.rhs - 2.0).abs() < 1e-12);
    assert!(r.lhs <= 2.0 && r.satisfied);
}

#[test]
fn kupsch_gaussian_sweep() {
    let (g, rho) = cat3();
    let (di, dj) = (iv(-5.0, -1.0), iv(1.0, 5.0));
    for t in [0.5, 1.0, 2.0, 4.0] {
        let gamma = gaussian_gamma(t, 1.0, 1.0, &g).unwrap();
        let r = kupsch_offdiag_bound(&gamma, &rho, &di, &dj, DEFAULT_TOL).unwrap();
        assert!(r.margin > 0.0, "t = {t}");
        assert!((r.lhs - gaussian_block_oracle(&rho, t, &di, &dj)).abs() < 1e-10);
        assert_eq!(r.get("analytic_derivative"), Some(1.0));
    }
}

#[test]
fn kupsch_needs_distinct_cells() {
    let (g, rho) = cat3();
    let gamma = gaussian_gamma(1.0, 1.0, 1.0, &g).unwrap();
    assert!(kupsch_offdiag_bound(&gamma, &rho, &iv(-5.0, -1.0), &iv(-5.0, -1.0), DEFAULT_TOL).is_err());
    let tab = GammaKernel::tabulated(&g, 1.0, gamma.values().clone()).unwrap();
    assert!(kupsch_offdiag_bound(&tab, &rho, &iv(-5.0, -1.0), &iv(1.0, 5.0), DEFAULT_TOL).is_err());
}

#[test]
fn summation_by_parts_identity() {
    let g = Grid::new(-8.0, 8.0, 24).unwrap();
    let rho = cat_state(&g, &[-2.0, 2.0], &[c(1.0, 0.0), c(0.0, 1.0)], 0.4).unwrap();
    let gamma = gaussian_gamma(0.7, 1.0, 1.0, &g).unwrap();
    assert!(kupsch_parts_residual(&gamma, &rho, &iv(-8.0, 0.0), &iv(0.0, 8.0)).unwrap() < 1e-12);
}

#[test]
fn stolz_delta_kernels() {
    let mut r = rng(5);
    let (n, dx, dz, dy) = (12, 0.3, 0.3, 0.3);
    let a = CMatrix::identity(n, n) * c(1.0 / dz, 0.0);
    let diag: Vec<_> = (0..n).map(|_| random::complex_normal(&mut r)).collect();
    let b = CMatrix::from_diagonal(&CVector::from_vec(diag)) * c(1.0 / dz, 0.0);
    let rep = stolz_product_bound(&a, &b, dx, dz, dy, DEFAULT_TOL).unwrap();
    assert!((rep.lhs / rep.rhs - 1.0).abs() < 1e-8);
}

#[test]
fn stolz_rank_one() {
    let g = Grid::new(-8.0, 8.0, 200).unwrap();
    let f: Vec<f64> = g.points().iter().map(|x| (-x * x / 2.0).exp()).collect();
    let gz: Vec<f64> = g.points().iter().map(|z| (-z * z).exp()).collect();
    let h: Vec<f64> = g.points().iter().map(|y| (-(y - 1.0).powi(2)).exp()).collect();
    let n = g.n();
    let a = CMatrix::from_fn(n, n, |i, k| c(f[i] * gz[k], 0.0));
    let b = CMatrix::from_fn(n, n, |k, j| c(gz[k] * h[j], 0.0));
    let d = g.dx();
    let rep = stolz_product_bound(&a, &b, d, d, d, DEFAULT_TOL).unwrap();
    // ‖f‖² = √π, ‖h‖² = √(π/2), ∫g² = √(π/2).
    let want = PI.powf(0.25) * (PI / 2.0).powf(0.25) * (PI / 2.0).sqrt();
    assert!((rep.lhs - want).abs() < 1e-6);
    assert!((rep.rhs - want).abs() < 1e-6);
}

#[test]
fn stolz_gaussian_mixtures() {
    let mut r = rng(6);
    let g = Grid::new(-5.0, 5.0, 60).unwrap();
    let d = g.dx();
    let n = g.n();
    for _ in 0..3 {
        let mix = |r: &mut ChaCha8Rng| {
            let terms: Vec<(f64, f64, f64, f64)> =
                (0..3).map(|_| (r.gen_range(-1.0..1.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0), r.gen_range(0.3..1.5))).collect();
            CMatrix::from_fn(n, n, |i, k| {
                let (x, z) = (g.x(i), g.x(k));
                c(terms.iter().map(|&(w, a, b, s)| w * (-((x - a).powi(2) + (z - b).powi(2)) / (2.0 * s * s)).exp()).sum(), 0.0)
            })
        };
        let a = mix(&mut r);
        let b = mix(&mut r);
        let rep = stolz_product_bound(&a, &b, d, d, d, DEFAULT_TOL).unwrap();
        assert!(rep.margin >= 0.0);
        assert!((rep.lhs - svd_trace_norm(&(&a * &b * c(d * d, 0.0)))).abs() < 1e-10);
    }
}

#[test]
fn stolz_shape_mismatch() {
    let a = CMatrix::identity(3, 4);
    let b = CMatrix::identity(3, 3);
    assert!(stolz_product_bound(&a, &b, 1.0, 1.0, 1.0, DEFAULT_TOL).is_err());
}

#[test]
fn gaussian_bound_vanishes_at_large_time() {
    let (_, rho) = cat3();
    let r = gaussian_offdiag_bound(&rho, 50.0, 1.0, 1.0, &iv(-8.0, -1.0), &iv(1.0, 8.0), DEFAULT_TOL).unwrap();
    assert!(r.rhs < 1e-10);
    assert!(r.satisfied);
}

#[test]
fn gaussian_double_integral_below_sup() {
    let (g, rho) = cat3();
    let (di, dj) = (iv(-5.0, -1.0), iv(1.0, 5.0));
    let dens = rho.density();
    let mass = |iv: &Interval| iv.indices(&g).unwrap().map(|j| dens[j]).sum::<f64>() * g.dx();
    // Closest grid points of the two cells.
    let delta = g.x(dj.indices(&g).unwrap().start) - g.x(di.indices(&g).unwrap().end - 1);
    for t in [0.1, 0.25, 1.0] {
        let r = gaussian_offdiag_bound(&rho, t, 1.0, 1.0, &di, &dj, DEFAULT_TOL).unwrap();
        let sup = (2.0 * t / PI).sqrt() * (-2.0 * t * delta * delta).exp() * mass(&di) * mass(&dj);
        assert!(r.get("double_integral").unwrap() <= sup + 1e-10);
    }
}

/// ∫√(a(z)b(z))dz by composite Simpson on a fine z grid.
fn sqrt_form_oracle(rho: &CvDensity, cc: f64, di: &Interval, dj: &Interval) -> f64 {
    let g = rho.grid();
    let dens = rho.density();
    let phi2 = |x: f64, z: f64| 2.0 * (cc / PI).sqrt() * (-4.0 * cc * (x - z).powi(2)).exp();
    let side = |iv: &Interval, z: f64| iv.indices(g).unwrap().map(|j| phi2(g.x(j), z) * dens[j]).sum::<f64>() * g.dx();
    let (lo, hi, m) = (-12.0, 12.0, 12000);
    let h = (hi - lo) / m as f64;
    let mut s = 0.0;
    for k in 0..=m {
        let z = lo + k as f64 * h;
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * (side(di, z) * side(dj, z)).sqrt();
    }
    s * h / 3.0
}

#[test]
fn gaussian_cat_sweep() {
    let (_, rho) = cat3();
    let (di, dj) = (iv(-5.0, -1.0), iv(1.0, 5.0));
    let mut last = f64::INFINITY;
    for t in [0.25, 1.0, 4.0] {
        let r = gaussian_offdiag_bound(&rho, t, 1.0, 1.0, &di, &dj, DEFAULT_TOL).unwrap();
        assert!(r.satisfied, "t = {t}: {} > {}", r.lhs, r.rhs);
        assert!(r.rhs < last);
        assert!((r.lhs - gaussian_block_oracle(&rho, t, &di, &dj)).abs() < 1e-10);
        let oracle = sqrt_form_oracle(&rho, t, &di, &dj);
        assert!((r.rhs - oracle).abs() <= 1e-8 * oracle.max(1e-300) + 1e-14, "{} vs {oracle}", r.rhs);
        last = r.rhs;
    }
}

#[test]
fn gaussian_bound_rejects_overlap() {
    let (_, rho) = cat3();
    assert!(gaussian_offdiag_bound(&rho, 1.0, 1.0, 1.0, &iv(-5.0, 1.0), &iv(0.0, 5.0), DEFAULT_TOL).is_err());
}

/// Two point masses at ±1.5 and a qubit whose branch states end up orthogonal.
fn orthogonal_branches() -> (JointState, Partition, Vec<Branch>, Vec<EnvModel>) {
    let g = Grid::new(-3.0, 3.0, 6).unwrap();
    let mut k = CMatrix::zeros(6, 6);
    k[(1, 1)] = c(0.4 / g.dx(), 0.0);
    k[(4, 4)] = c(0.6 / g.dx(), 0.0);
    let rho = CvDensity::new(g, k).unwrap();
    let plus = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let q = EnvModel::qubit(PI / 3.0).unwrap();
    let env = EnvModel::new(q.generator().clone(), PI / 3.0, DensityMatrix::pure(&plus).unwrap()).unwrap();
    let obs = vec![env];
    let gamma = gamma_from_envs(&[], 1.0, &g).unwrap();
    let rho_t = evolve_with_kernel(&rho, &gamma, &obs, 1.0, CAP).unwrap();
    let part = Partition::uniform(&g, 2).unwrap();
    let brs = branches(&rho, &part, &obs, 1.0).unwrap();
    (rho_t, part, brs, obs)
}

#[test]
fn diagonal_bound_orthogonal_supports() {
    let (rho_t, part, brs, _) = orthogonal_branches();
    let proj: Vec<CMatrix> = brs.iter().map(|b| b.lambdas[0].mat().clone()).collect();
    assert!((proj[0].clone() * &proj[1]).iter().all(|z| z.norm() < 1e-12));
    let pvm = EnvPvm::new(vec![EnvProjectors { projectors: proj, remainder: None }]).unwrap();
    let cand = build_sbs_candidate(&rho_t, &part, &pvm, CAP).unwrap();
    let r = diagonal_bound(&rho_t, &cand, &brs, DEFAULT_TOL).unwrap();
    assert!(r.rhs < 1e-6 && r.lhs < 1e-6);
}

fn cat_case(n: usize, dim: usize, t: f64) -> (JointState, SbsCandidate, Vec<Branch>, Vec<EnvModel>, CvDensity) {
    let g = Grid::new(-8.0, 8.0, n).unwrap();
    let rho = cat_state(&g, &[-2.0, 2.0], &[c(1.0, 0.0), c(1.0, 0.0)], 0.4).unwrap();
    // Weak coupling keeps the displaced vacuum inside the truncation up to t = 8.
    let obs = vec![make_oscillator_env(dim, OscillatorKind::Position, 0.0).unwrap().with_coupling(0.1)];
    let gamma = gamma_from_envs(&[], t, &g).unwrap();
    let rho_t = evolve_with_kernel(&rho, &gamma, &obs, t, CAP).unwrap();
    let part = Partition::uniform(&g, 2).unwrap();
    let brs = branches(&rho, &part, &obs, t).unwrap();
    let pvm = heuristic_env_pvm(&brs, 2).unwrap();
    let cand = build_sbs_candidate(&rho_t, &part, &pvm, CAP).unwrap();
    (rho_t, cand, brs, obs, rho)
}

/// Diagonal distance by full SVD of the padded difference.
fn diagonal_oracle(rho_t: &JointState, cand: &SbsCandidate) -> f64 {
    let d = rho_t.env_dim();
    let n = rho_t.grid().n();
    let mut blockdiag = CMatrix::zeros(n * d, n * d);
    for cell in cand.partition.cells() {
        let r = cell.indices(rho_t.grid()).unwrap();
        let (s, l) = (r.start * d, r.len() * d);
        blockdiag.view_mut((s, s), (l, l)).copy_from(&rho_t.mat().view((s, s), (l, l)));
    }
    0.5 * svd_trace_norm(&(blockdiag - cand.state.mat()))
}

#[test]
fn diagonal_bound_at_zero_time() {
    let (rho_t, _, brs, _, _) = cat_case(24, 8, 0.0);
    let g = *rho_t.grid();
    let part = Partition::uniform(&g, 2).unwrap();
    let pvm = EnvPvm::fixed(&[8], &[vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7]]]).unwrap();
    let cand = build_sbs_candidate(&rho_t, &part, &pvm, CAP).unwrap();
    let r = diagonal_bound(&rho_t, &cand, &brs, DEFAULT_TOL).unwrap();
    assert!(r.satisfied);
    assert!(r.rhs > 1.0);
}

#[test]
fn diagonal_bound_sweep() {
    let mut last = f64::INFINITY;
    for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let (rho_t, cand, brs, _, _) = cat_case(24, 8, t);
        let r = diagonal_bound(&rho_t, &cand, &brs, DEFAULT_TOL).unwrap();
        assert!(r.satisfied, "t = {t}: {} > {}", r.lhs, r.rhs);
        assert!((r.lhs - diagonal_oracle(&rho_t, &cand)).abs() < 1e-10);
        assert!(r.lhs < last, "t = {t}: {} not below {last}", r.lhs);
        last = r.lhs;
    }
}

#[test]
fn multi_reduces_to_single() {
    let t = 1.5;
    let (rho_t, cand, brs, obs, _) = cat_case(16, 6, t);
    let one = diagonal_bound(&rho_t, &cand, &brs, DEFAULT_TOL).unwrap();
    let multi = diagonal_bound_multi(&rho_t, &cand, &brs, &obs, t, CAP, DEFAULT_TOL).unwrap();
    assert!((one.lhs - multi.lhs).abs() < 1e-12);
    assert!((one.rhs - multi.rhs).abs() < 1e-12);
}

fn two_env_case(t: f64) -> (JointState, SbsCandidate, Vec<Branch>, Vec<EnvModel>) {
    let g = Grid::new(-8.0, 8.0, 16).unwrap();
    let rho = cat_state(&g, &[-2.0, 2.0], &[c(1.0, 0.0), c(1.0, 0.0)], 0.4).unwrap();
    let e = make_oscillator_env(6, OscillatorKind::Position, 0.0).unwrap().with_coupling(0.25);
    let obs = vec![e.clone(), e];
    let gamma = gamma_from_envs(&[], t, &g).unwrap();
    let rho_t = evolve_with_kernel(&rho, &gamma, &obs, t, CAP).unwrap();
    let part = Partition::uniform(&g, 2).unwrap();
    let brs = branches(&rho, &part, &obs, t).unwrap();
    let pvm = heuristic_env_pvm(&brs, 2).unwrap();
    let cand = build_sbs_candidate(&rho_t, &part, &pvm, CAP).unwrap();
    (rho_t, cand, brs, obs)
}

#[test]
fn multi_identical_envs() {
    for t in [0.5, 1.0, 2.0, 4.0] {
        let (rho_t, cand, brs, obs) = two_env_case(t);
        let r = diagonal_bound_multi(&rho_t, &cand, &brs, &obs, t, CAP, DEFAULT_TOL).unwrap();
        assert!(r.get("route_gap").unwrap() <= 1e-8);
        assert!(r.satisfied, "t = {t}: {} > {}", r.lhs, r.rhs);
    }
}

#[test]
fn multi_mixed_env_has_no_closed_form() {
    let t = 1.0;
    let (rho_t, cand, brs, _) = two_env_case(t);
    let e = make_oscillator_env(6, OscillatorKind::Position, 0.0).unwrap().with_coupling(0.25);
    let m = make_oscillator_env(6, OscillatorKind::Position, 0.2).unwrap().with_coupling(0.25);
    let r = diagonal_bound_multi(&rho_t, &cand, &brs, &[e, m], t, CAP, DEFAULT_TOL).unwrap();
    assert!(r.get("route_gap").unwrap().is_nan());
}

#[test]
fn further_bound_point_branch() {
    let (rho_t, part, brs, obs) = orthogonal_branches();
    let pvm = heuristic_env_pvm(&brs, 2).unwrap();
    let cand = build_sbs_candidate(&rho_t, &part, &pvm, CAP).unwrap();
    let lhs = diagonal_distance(&rho_t, &cand).unwrap();
    let r = further_diagonal_bound(&brs, &obs, &pvm, 1.0, lhs, DEFAULT_TOL).unwrap();
    assert!(r.get("first_term").unwrap() < 1e-10);
    assert_eq!(r.get("means_outside_cell"), Some(0.0));
}

#[test]
fn further_bound_support_projector() {
    let t = 1.2;
    let (rho_t, _, _, obs, rho) = cat_case(24, 8, t);
    let g = *rho_t.grid();
    let one = Partition::uniform(&g, 1).unwrap();
    let brs = branches(&rho, &one, &obs, t).unwrap();
    let psi = branch_state(&obs[0], t, brs[0].mean);
    let p = psi.mat().clone();
    let rem = CMatrix::identity(8, 8) - &p;
    let pvm = EnvPvm::new(vec![EnvProjectors { projectors: vec![p], remainder: Some(rem) }]).unwrap();
    let cand = build_sbs_candidate(&rho_t, &one, &pvm, CAP).unwrap();
    let lhs = diagonal_distance(&rho_t, &cand).unwrap();
    let r = further_diagonal_bound(&brs, &obs, &pvm, t, lhs, DEFAULT_TOL).unwrap();
    // The term is 4√s; s is a trace norm of roundoff, so the check is on s.
    let s = (r.get("second_term").unwrap() / 4.0).powi(2);
    assert!(s < 1e-14, "{s}");
    assert!(r.satisfied);
}

#[test]
fn further_bound_wide_branch() {
    for t in [0.5, 2.0] {
        let (rho_t, cand, brs, obs, _) = cat_case(24, 8, t);
        let lhs = diagonal_distance(&rho_t, &cand).unwrap();
        let r = further_diagonal_bound(&brs, &obs, &cand.env_pvm, t, lhs, DEFAULT_TOL).unwrap();
        assert!(r.rhs >= lhs);
        assert!((r.rhs - r.get("first_term").unwrap() - r.get("second_term").unwrap()).abs() < 1e-12);
    }
}

fn kron3(a: &CMatrix, b: &CMatrix, d: &CMatrix) -> CMatrix {
    a.kronecker(b).kronecker(d)
}

#[test]
fn telescopic_trivial_cases() {
    let mut r = rng(7);
    let a = vec![random::density(&mut r, 2, 2).into_mat(), random::density(&mut r, 3, 2).into_mat()];
    let rep = telescopic_bound(&a, &a, CAP, DEFAULT_TOL).unwrap();
    assert!(rep.lhs < 1e-14 && rep.rhs < 1e-14);
    let x = vec![random::density(&mut r, 4, 4).into_mat()];
    let y = vec![random::density(&mut r, 4, 4).into_mat()];
    let rep = telescopic_bound(&x, &y, CAP, DEFAULT_TOL).unwrap();
    assert!((rep.lhs - rep.rhs).abs() < 1e-12);
    assert!(telescopic_bound(&x, &a[..1], CAP, DEFAULT_TOL).is_err());
}

#[test]
fn telescopic_random_triples() {
    let mut r = rng(8);
    for _ in 0..100 {
        let a: Vec<CMatrix> = [2, 3, 2].iter().map(|&d| random::density(&mut r, d, d).into_mat()).collect();
        let b: Vec<CMatrix> = [2, 3, 2].iter().map(|&d| random::density(&mut r, d, d).into_mat()).collect();
        let rep = telescopic_bound(&a, &b, CAP, DEFAULT_TOL).unwrap();
        assert!(rep.satisfied);
        let direct = svd_trace_norm(&(kron3(&a[0], &a[1], &a[2]) - kron3(&b[0], &b[1], &b[2])));
        assert!((rep.lhs - direct).abs() < 1e-10);
    }
}

#[test]
fn rescale_rejects_bad_eta() {
    assert!(trace_distance_rescale(0.1, -0.1).is_err());
    assert!(trace_distance_rescale(0.1, 1.5).is_err());
    assert!(trace_distance_rescale(-0.1, 0.5).is_err());
    assert_eq!(trace_distance_rescale(0.0, 1.0).unwrap(), 0.0);
}

#[test]
fn rescale_random_triples() {
    let mut r = rng(9);
    for _ in 0..500 {
        let rho = random::density(&mut r, 6, 6).into_mat();
        let sigma = random::density(&mut r, 6, 6).into_mat();
        let eta: f64 = r.gen_range(0.0..=1.0);
        let l = svd_trace_norm(&(&rho - &sigma * c(eta, 0.0)));
        let d = svd_trace_norm(&(&rho - &sigma));
        assert!(d <= trace_distance_rescale(l, eta).unwrap() + 1e-10);
    }
}

#[test]
fn pure_distance_cases() {
    let mut r = rng(10);
    let e = |k: usize| {
        let mut v = CVector::zeros(12);
        v[k] = c(1.0, 0.0);
        v
    };
    let same = pure_distance_formula_check(&e(0), &e(0), DEFAULT_TOL).unwrap();
    assert!(same.lhs < 1e-12 && same.rhs < 1e-12);
    let orth = pure_distance_formula_check(&e(0), &e(5), DEFAULT_TOL).unwrap();
    assert!((orth.lhs - 1.0).abs() < 1e-12 && (orth.rhs - 1.0).abs() < 1e-12);
    assert!(pure_distance_formula_check(&(e(0) * c(2.0, 0.0)), &e(1), DEFAULT_TOL).is_err());
    for _ in 0..100 {
        let a = random::unit_vector(&mut r, 12);
        let b = random::unit_vector(&mut r, 12);
        assert!(pure_distance_formula_check(&a, &b, DEFAULT_TOL).unwrap().get("gap").unwrap() <= 1e-10);
    }
}

#[test]
fn offdiag_total_covers_blocks() {
    let g = Grid::new(-8.0, 8.0, 24).unwrap();
    let rho = cat_state(&g, &[-2.5, 0.0, 2.5], &[c(1.0, 0.0), c(0.5, 0.5), c(0.0, 1.0)], 0.4).unwrap();
    let obs = vec![make_oscillator_env(6, OscillatorKind::Position, 0.0).unwrap().with_coupling(0.25)];
    let part = Partition::cuts(&g, &[-1.25, 1.25]).unwrap();
    for t in [0.2, 1.0, 3.0] {
        let gamma = gaussian_gamma(t, 1.0, 1.0, &g).unwrap();
        let rho_t = evolve_with_kernel(&rho, &gamma, &obs, t, CAP).unwrap();
        let off = offdiag_half_norm(&rho_t, &part).unwrap();
        let (total, blocks) = offdiag_total_bound(off, &gamma, &rho, &part, DEFAULT_TOL).unwrap();
        assert_eq!(blocks.len(), 6);
        assert!(total.lhs <= total.rhs + 1e-9);
        assert!(total.lhs <= total.get("block_trace_norm_sum").unwrap() + 1e-9);
        assert!(blocks.iter().all(|b| b.satisfied));
    }
}

#[test]
fn reports_satisfy_jensen() {
    for t in [0.3, 1.0, 3.0] {
        let (rho_t, cand, brs, _, _) = cat_case(16, 6, t);
        let r = diagonal_bound(&rho_t, &cand, &brs, DEFAULT_TOL).unwrap();
        assert!(r.get("jensen_lhs").unwrap() <= r.get("jensen_rhs").unwrap() + 1e-12);
        assert!((r.get("norm_const").unwrap() - cand.norm_const).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jensen_holds(raw in prop::collection::vec((0.01f64..1.0, 0.0f64..1.0), 1..6)) {
        let total: f64 = raw.iter().map(|(w, _)| w).sum();
        let w: Vec<f64> = raw.iter().map(|(w, _)| w / total).collect();
        let n: Vec<f64> = raw.iter().map(|(_, n)| *n).collect();
        let (l, r) = jensen_sides(&w, &n);
        prop_assert!(l <= r + 1e-12);
    }

    #[test]
    fn rescale_implication(seed in any::<u64>(), eta in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let rho = random::density(&mut r, 4, 3).into_mat();
        let sigma = random::density(&mut r, 4, 2).into_mat();
        let l = svd_trace_norm(&(&rho - &sigma * c(eta, 0.0)));
        prop_assert!(svd_trace_norm(&(&rho - &sigma)) <= trace_distance_rescale(l, eta).unwrap() + 1e-10);
    }

    #[test]
    fn telescopic_holds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a: Vec<CMatrix> = [2, 2].iter().map(|&d| random::density(&mut r, d, 2).into_mat()).collect();
        let b: Vec<CMatrix> = [2, 2].iter().map(|&d| random::density(&mut r, d, 1).into_mat()).collect();
        prop_assert!(telescopic_bound(&a, &b, CAP, DEFAULT_TOL).unwrap().satisfied);
    }
}

#[test]
fn diagonal_bounds_hold_on_random_times() {
    let mut r = rng(11);
    for _ in 0..6 {
        let t = r.gen_range(0.0..5.0);
        let (rho_t, cand, brs, obs, _) = cat_case(16, 6, t);
        assert!(diagonal_bound(&rho_t, &cand, &brs, DEFAULT_TOL).unwrap().satisfied);
        let lhs = diagonal_distance(&rho_t, &cand).unwrap();
        assert!(further_diagonal_bound(&brs, &obs, &cand.env_pvm, t, lhs, DEFAULT_TOL).unwrap().satisfied);
    }
}
