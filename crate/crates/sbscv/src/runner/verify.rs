//! Randomised regression suite over the module invariants and bounds.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    EnsembleConfig, EnvConfig, GeneratorKind, GridConfig, PartitionConfig, PvmConfig, Scenario, ScenarioConfig, SystemConfig,
    Tolerances,
};
use super::run::{evaluate_time, run};
use crate::bounds::{
    diagonal_bound, diagonal_bound_multi, further_diagonal_bound, gaussian_offdiag_bound, kupsch_offdiag_bound_on,
    kupsch_parts_residual, pure_distance_formula_check, stolz_product_bound, telescopic_bound, trace_distance_rescale,
    BoundReport,
};
use crate::cvgrid::{cat_state, gaussian_wavepacket, CvDensity, Grid, Interval};
use crate::dynamics::{
    apply_decoherence, check_commutation, evolve_full, evolve_with_kernel, gamma_from_envs, gaussian_gamma, lemma_rhs,
    GammaKernel,
};
use crate::envmodel::{make_oscillator_env, EnvEnsemble, EnvModel, OscillatorKind};
use crate::error::Result;
use crate::numkit::{
    c, fidelity, max_abs_diff, op_norm, partial_trace, random, trace_norm, trace_norm_hermitian, CMatrix, DensityMatrix, C64,
};
use crate::sbs::{
    branches, build_sbs_candidate, diagonal_distance, heuristic_env_pvm, helstrom_measurement, qsd_error, Partition,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Fast,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fast" => Some(Self::Fast),
            "all" => Some(Self::All),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fast => "fast",
            Self::All => "all",
        }
    }

    fn scale(&self) -> usize {
        match self {
            Self::Fast => 1,
            Self::All => 4,
        }
    }
}

/// Deliberate defects for mutation testing of the suite itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the Gaussian exponent in the tabulated Γ used to
    /// evolve the state, leaving the functional form untouched.
    GammaSign,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gamma-sign" => Some(Self::GammaSign),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub seed: u64,
    pub fault: Option<Fault>,
    pub cap: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { suite: Suite::Fast, seed: 0, fault: None, cap: crate::DEFAULT_CAP }
    }
}

#[derive(Clone, Debug)]
pub struct CheckTally {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    pub failures: Vec<String>,
}

impl CheckTally {
    fn new(name: &'static str) -> Self {
        Self { name, passed: 0, total: 0, failures: Vec::new() }
    }

    fn record(&mut self, ok: Result<Option<String>>) {
        self.total += 1;
        match ok {
            Ok(None) => self.passed += 1,
            Ok(Some(msg)) => self.failures.push(format!("trial {}: {msg}", self.total)),
            Err(e) => self.failures.push(format!("trial {}: error: {e}", self.total)),
        }
    }

    fn report(&mut self, r: Result<BoundReport>) {
        self.record(r.map(|b| (!b.satisfied).then(|| describe(&b))));
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.total > 0
    }
}

fn describe(b: &BoundReport) -> String {
    let ctx = if b.context.is_empty() { String::new() } else { format!(" [{}]", b.context) };
    format!("{}: lhs {:.6e} exceeds rhs {:.6e} + tol {:.1e}{ctx}", b.name, b.lhs, b.rhs, b.tol)
}

fn gap(name: &str, value: f64, limit: f64) -> Option<String> {
    (!(value <= limit)).then(|| format!("{name} {value:.3e} above {limit:.1e}"))
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<CheckTally>,
    pub wall_time: f64,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok())
    }

    pub fn failed(&self) -> Vec<&CheckTally> {
        self.checks.iter().filter(|c| !c.ok()).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for ch in &self.checks {
            let status = if ch.ok() { "ok" } else { "FAIL" };
            writeln!(s, "{:<24} {:>4}/{:<4} {status}", ch.name, ch.passed, ch.total).unwrap();
        }
        for ch in self.failed() {
            for f in ch.failures.iter().take(3) {
                writeln!(s, "FAIL {}: {f}", ch.name).unwrap();
            }
        }
        writeln!(
            s,
            "verify {}: {} checks, {} failed, {:.1} s",
            self.suite.name(),
            self.checks.len(),
            self.failed().len(),
            self.wall_time
        )
        .unwrap();
        s
    }
}

struct Ctx {
    rng: ChaCha8Rng,
    trials: usize,
    fault: Option<Fault>,
    cap: usize,
}

impl Ctx {
    fn n(&self, base: usize) -> usize {
        base * self.trials
    }
}

fn random_cat(rng: &mut ChaCha8Rng, grid: &Grid) -> Result<CvDensity> {
    let c1 = rng.gen_range(-3.0..-1.0);
    let c2 = rng.gen_range(1.0..3.0);
    let w = rng.gen_range(0.4..0.6);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let a = rng.gen_range(0.3..1.0);
    cat_state(grid, &[c1, c2], &[c(a, 0.0), C64::from_polar(1.0, phase)], w)
}

fn random_env(rng: &mut ChaCha8Rng, dim: usize) -> Result<EnvModel> {
    let b = random::hermitian(rng, dim);
    let rank = rng.gen_range(1..=dim);
    let rho = random::density(rng, dim, rank);
    EnvModel::new(b, rng.gen_range(0.3..1.5), rho)
}

fn two_cells(grid: &Grid, cut: f64) -> Result<(Interval, Interval)> {
    Ok((Interval::new(grid.x_min(), cut)?, Interval::new(cut, grid.x_max())?))
}

fn check_trace_norm(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("trace_norm");
    for _ in 0..ctx.n(30) {
        let d = ctx.rng.gen_range(2..9);
        let a = random::ginibre(&mut ctx.rng, d, d);
        let b = random::ginibre(&mut ctx.rng, d, d);
        let r = (|| {
            let (na, nb, nab) = (trace_norm(&a)?, trace_norm(&b)?, trace_norm(&(&a + &b))?);
            let h = random::hermitian(&mut ctx.rng, d);
            let herm_gap = (trace_norm(&h)? - trace_norm_hermitian(&h)?).abs();
            Ok(gap("triangle excess", nab - na - nb, 1e-10)
                .or_else(|| gap("operator norm excess", op_norm(&a) - na, 1e-10))
                .or_else(|| gap("hermitian route gap", herm_gap, 1e-10)))
        })();
        t.record(r);
    }
    t
}

fn check_fidelity(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("fidelity");
    for _ in 0..ctx.n(30) {
        let d = ctx.rng.gen_range(2..7);
        let (ra, rb) = (ctx.rng.gen_range(1..=d), ctx.rng.gen_range(1..=d));
        let a = random::density(&mut ctx.rng, d, ra);
        let b = random::density(&mut ctx.rng, d, rb);
        let r = (|| {
            let (fab, fba, faa) = (fidelity(&a, &b)?, fidelity(&b, &a)?, fidelity(&a, &a)?);
            Ok(gap("range", if (0.0..=1.0).contains(&fab) { 0.0 } else { 1.0 }, 0.0)
                .or_else(|| gap("asymmetry", (fab - fba).abs(), 1e-8))
                .or_else(|| gap("self-fidelity defect", (1.0 - faa).abs(), 1e-8)))
        })();
        t.record(r);
    }
    t
}

fn check_partial_trace(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("partial_trace");
    for _ in 0..ctx.n(20) {
        let (da, db) = (ctx.rng.gen_range(2..5), ctx.rng.gen_range(2..5));
        let a = random::density(&mut ctx.rng, da, da);
        let b = random::density(&mut ctx.rng, db, 1);
        let cap = ctx.cap;
        let r = (|| {
            let ab = a.tensor(&b, cap)?;
            let ra = partial_trace(&ab, &[0])?;
            let rb = partial_trace(&ab, &[1])?;
            Ok(gap("first factor", max_abs_diff(ra.mat(), a.mat()), 1e-12)
                .or_else(|| gap("second factor", max_abs_diff(rb.mat(), b.mat()), 1e-12)))
        })();
        t.record(r);
    }
    t
}

fn check_kernel_invariants(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("kernel_invariants");
    let grid = Grid::new(-4.0, 4.0, 24).expect("fixed grid");
    for _ in 0..ctx.n(10) {
        let tt = ctx.rng.gen_range(0.0..3.0);
        let alpha = ctx.rng.gen_range(0.1..2.0);
        let r = (|| {
            let g1 = gaussian_gamma(tt, alpha, ctx.rng.gen_range(0.5..2.0), &grid)?;
            let env = random_env(&mut ctx.rng, 3)?;
            let g2 = gamma_from_envs(&[env], tt, &grid)?;
            Ok(gap("gaussian kernel defect", g1.invariant_defect(), 1e-10)
                .or_else(|| gap("environment kernel defect", g2.invariant_defect(), 1e-10)))
        })();
        t.record(r);
    }
    t
}

fn small_system(rng: &mut ChaCha8Rng, grid: &Grid) -> Result<CvDensity> {
    let center = rng.gen_range(-1.0..1.0);
    let psi = gaussian_wavepacket(grid, center, 0.5, rng.gen_range(-1.0..1.0))?;
    CvDensity::pure(*grid, &psi)
}

fn check_lemma_equivalence(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("lemma_equivalence");
    let grid = Grid::new(-8.0, 8.0, 16).expect("fixed grid");
    for _ in 0..ctx.n(4) {
        let tt = ctx.rng.gen_range(0.1..2.0);
        let cap = ctx.cap;
        let r = (|| {
            let rho = small_system(&mut ctx.rng, &grid)?;
            let traced = EnvModel::qubit(ctx.rng.gen_range(0.3..1.5))?;
            let observed = random_env(&mut ctx.rng, 4)?;
            let ens = EnvEnsemble::new(vec![traced], vec![observed])?;
            let a = evolve_full(&rho, &ens, tt, cap)?;
            let b = lemma_rhs(&rho, &ens, tt, cap)?;
            Ok(gap("route gap", max_abs_diff(a.mat(), b.mat()), 1e-10))
        })();
        t.record(r);
    }
    t
}

fn check_commutation_lemma(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("commutation");
    let grid = Grid::new(-8.0, 8.0, 16).expect("fixed grid");
    for _ in 0..ctx.n(4) {
        let tt = ctx.rng.gen_range(0.1..2.0);
        let cap = ctx.cap;
        let r = (|| {
            let rho = small_system(&mut ctx.rng, &grid)?;
            let observed = random_env(&mut ctx.rng, 4)?;
            let traced = random_env(&mut ctx.rng, 3)?;
            Ok(gap("commutator", check_commutation(&rho, &observed, &traced, tt, cap)?, 1e-10))
        })();
        t.record(r);
    }
    t
}

/// Γ with the Gaussian exponent's sign flipped in its table only.
fn inject_gamma_sign(gamma: GammaKernel, t: f64, alpha: f64, n_exp: f64) -> Result<GammaKernel> {
    let grid = *gamma.grid();
    let c0 = t.powf(n_exp) * alpha;
    let values = CMatrix::from_fn(grid.n(), grid.n(), |i, j| c((c0 * (grid.x(i) - grid.x(j)).powi(2)).exp(), 0.0));
    gamma.with_values(values)
}

fn check_kupsch(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("kupsch_offdiag");
    let grid = Grid::new(-8.0, 8.0, 64).expect("fixed grid");
    for k in 0..ctx.n(12) {
        let tt = ctx.rng.gen_range(0.05..3.0);
        let cut = ctx.rng.gen_range(-1.0..1.0);
        let fault = ctx.fault;
        let r = (|| {
            let rho = random_cat(&mut ctx.rng, &grid)?;
            let (d1, d2) = two_cells(&grid, cut)?;
            let gamma = if k % 2 == 0 {
                let alpha = ctx.rng.gen_range(0.2..2.0);
                let g = gaussian_gamma(tt, alpha, 1.0, &grid)?;
                match fault {
                    Some(Fault::GammaSign) => inject_gamma_sign(g, tt, alpha, 1.0)?,
                    None => g,
                }
            } else {
                gamma_from_envs(&[EnvModel::qubit(ctx.rng.gen_range(0.3..1.5))?], tt, &grid)?
            };
            let evolved = apply_decoherence(&rho, &gamma)?;
            for (a, b) in [(&d1, &d2), (&d2, &d1)] {
                let rep = kupsch_offdiag_bound_on(&evolved, &gamma, a, b, crate::bounds::DEFAULT_TOL)?;
                if !rep.satisfied {
                    return Ok(Some(describe(&rep)));
                }
            }
            Ok(None)
        })();
        t.record(r);
    }
    t
}

fn check_kupsch_parts(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("kupsch_parts");
    let grid = Grid::new(-8.0, 8.0, 16).expect("fixed grid");
    for _ in 0..ctx.n(4) {
        let tt = ctx.rng.gen_range(0.05..2.0);
        let r = (|| {
            let psi = gaussian_wavepacket(&grid, ctx.rng.gen_range(-1.0..1.0), 0.5, 0.0)?;
            let rho = CvDensity::pure(grid, &psi)?;
            let gamma = gaussian_gamma(tt, 1.0, 1.0, &grid)?;
            let (d1, d2) = two_cells(&grid, 0.0)?;
            Ok(gap("summation-by-parts residual", kupsch_parts_residual(&gamma, &rho, &d1, &d2)?, 1e-12))
        })();
        t.record(r);
    }
    t
}

fn check_stolz(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("stolz_product");
    for _ in 0..ctx.n(20) {
        let (m, k, p) = (ctx.rng.gen_range(2..10), ctx.rng.gen_range(2..10), ctx.rng.gen_range(2..10));
        let a = random::ginibre(&mut ctx.rng, m, k);
        let b = random::ginibre(&mut ctx.rng, k, p);
        let (dx, dz, dy) = (ctx.rng.gen_range(0.05..0.5), ctx.rng.gen_range(0.05..0.5), ctx.rng.gen_range(0.05..0.5));
        t.report(stolz_product_bound(&a, &b, dx, dz, dy, crate::bounds::DEFAULT_TOL));
    }
    t
}

fn check_gaussian(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("gaussian_offdiag");
    let grid = Grid::new(-8.0, 8.0, 64).expect("fixed grid");
    for _ in 0..ctx.n(6) {
        let tt = ctx.rng.gen_range(0.05..3.0);
        let alpha = ctx.rng.gen_range(0.2..2.0);
        let cut = ctx.rng.gen_range(-1.0..1.0);
        let r = (|| {
            let rho = random_cat(&mut ctx.rng, &grid)?;
            let (d1, d2) = two_cells(&grid, cut)?;
            gaussian_offdiag_bound(&rho, tt, alpha, 1.0, &d1, &d2, crate::bounds::DEFAULT_TOL)
        })();
        t.report(r);
    }
    t
}

/// Diagonal, further and Jensen checks on small single-environment instances.
fn check_diagonal(ctx: &mut Ctx) -> Vec<CheckTally> {
    let mut diag = CheckTally::new("diagonal");
    let mut further = CheckTally::new("further_diagonal");
    let mut jensen = CheckTally::new("jensen");
    let grid = Grid::new(-8.0, 8.0, 32).expect("fixed grid");
    for _ in 0..ctx.n(6) {
        let tt = ctx.rng.gen_range(0.2..1.5);
        let cap = ctx.cap;
        let kind = [OscillatorKind::Position, OscillatorKind::Momentum, OscillatorKind::Number][ctx.rng.gen_range(0..3)];
        let occupation = if ctx.rng.gen_bool(0.5) { 0.0 } else { ctx.rng.gen_range(0.0..0.5) };
        let center = ctx.rng.gen_range(1.5..2.5);
        let r = (|| -> Result<(BoundReport, BoundReport)> {
            let rho = cat_state(&grid, &[-center, center], &[c(1.0, 0.0), c(1.0, 0.0)], 0.4)?;
            let env = make_oscillator_env(6, kind, occupation)?;
            let observed = vec![env];
            let gamma = gamma_from_envs(&[], tt, &grid)?;
            let rho_t = evolve_with_kernel(&rho, &gamma, &observed, tt, cap)?;
            let partition = Partition::uniform(&grid, 2)?;
            let brs = branches(&rho, &partition, &observed, tt)?;
            let pvm = heuristic_env_pvm(&brs, 2)?;
            let cand = build_sbs_candidate(&rho_t, &partition, &pvm, cap)?;
            let d = diagonal_bound(&rho_t, &cand, &brs, crate::bounds::DEFAULT_TOL)?;
            let lhs = diagonal_distance(&rho_t, &cand)?;
            let f = further_diagonal_bound(&brs, &observed, &pvm, tt, lhs, crate::bounds::DEFAULT_TOL)?;
            Ok((d, f))
        })();
        match r {
            Ok((d, f)) => {
                let (jl, jr) = (d.get("jensen_lhs").unwrap_or(f64::NAN), d.get("jensen_rhs").unwrap_or(f64::NAN));
                diag.report(Ok(d));
                further.report(Ok(f));
                jensen.report(Ok(BoundReport::new("jensen", jl, jr, 1e-12)));
            }
            Err(e) => {
                let msg = e.to_string();
                for tally in [&mut diag, &mut further, &mut jensen] {
                    tally.record(Err(crate::Error::Precondition(msg.clone())));
                }
            }
        }
    }
    vec![diag, further, jensen]
}

fn check_diagonal_multi(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("diagonal_multi");
    let grid = Grid::new(-8.0, 8.0, 16).expect("fixed grid");
    for _ in 0..ctx.n(3) {
        let tt = ctx.rng.gen_range(0.2..1.5);
        let cap = ctx.cap;
        let r = (|| {
            let rho = cat_state(&grid, &[-2.0, 2.0], &[c(1.0, 0.0), c(1.0, 0.0)], 0.4)?;
            let observed = vec![
                make_oscillator_env(4, OscillatorKind::Position, 0.0)?,
                make_oscillator_env(4, OscillatorKind::Position, 0.0)?.with_coupling(ctx.rng.gen_range(0.5..1.5)),
            ];
            let gamma = gamma_from_envs(&[], tt, &grid)?;
            let rho_t = evolve_with_kernel(&rho, &gamma, &observed, tt, cap)?;
            let partition = Partition::uniform(&grid, 2)?;
            let brs = branches(&rho, &partition, &observed, tt)?;
            let pvm = heuristic_env_pvm(&brs, 2)?;
            let cand = build_sbs_candidate(&rho_t, &partition, &pvm, cap)?;
            let rep = diagonal_bound_multi(&rho_t, &cand, &brs, &observed, tt, cap, crate::bounds::DEFAULT_TOL)?;
            let g = rep.get("route_gap").unwrap_or(f64::NAN);
            Ok(if rep.satisfied { gap("route gap", g, 1e-8) } else { Some(describe(&rep)) })
        })();
        t.record(r);
    }
    t
}

fn check_helpers(ctx: &mut Ctx) -> Vec<CheckTally> {
    let cap = ctx.cap;
    let mut tele = CheckTally::new("telescopic");
    for _ in 0..ctx.n(20) {
        let dims = [2, 3, 2];
        let a: Vec<CMatrix> = dims.iter().map(|&d| random::density(&mut ctx.rng, d, d).into_mat()).collect();
        let b: Vec<CMatrix> = dims.iter().map(|&d| random::density(&mut ctx.rng, d, d).into_mat()).collect();
        tele.report(telescopic_bound(&a, &b, cap, 1e-10));
    }

    let mut rescale = CheckTally::new("trace_distance_rescale");
    for _ in 0..ctx.n(100) {
        let rho = random::density(&mut ctx.rng, 6, 6);
        let sigma = random::density(&mut ctx.rng, 6, 6);
        let eta = ctx.rng.gen_range(0.0..=1.0);
        let r = (|| {
            let l = trace_norm(&(rho.mat() - sigma.mat() * c(eta, 0.0)))?;
            let bound = trace_distance_rescale(l, eta)?;
            Ok(gap("rescaled distance excess", trace_norm(&(rho.mat() - sigma.mat()))? - bound, 1e-10))
        })();
        rescale.record(r);
    }

    let mut pure = CheckTally::new("pure_distance_formula");
    for _ in 0..ctx.n(20) {
        let psi = random::unit_vector(&mut ctx.rng, 12);
        let phi = random::unit_vector(&mut ctx.rng, 12);
        pure.record(pure_distance_formula_check(&psi, &phi, 1e-10).map(|r| gap("formula gap", r.get("gap").unwrap_or(f64::NAN), 1e-10)));
    }
    vec![tele, rescale, pure]
}

fn check_qsd(ctx: &mut Ctx) -> Vec<CheckTally> {
    let mut hel = CheckTally::new("helstrom");
    for _ in 0..ctx.n(20) {
        let d = ctx.rng.gen_range(2..5);
        let (ra, rb) = (ctx.rng.gen_range(1..=d), ctx.rng.gen_range(1..=d));
        let a = random::density(&mut ctx.rng, d, ra);
        let b = random::density(&mut ctx.rng, d, rb);
        let p = ctx.rng.gen_range(0.1..0.9);
        let u = random::unitary(&mut ctx.rng, d);
        let k = ctx.rng.gen_range(1..d);
        let r = (|| {
            let (m1, m2) = helstrom_measurement(p, &a, 1.0 - p, &b);
            let pe = qsd_error(&[p, 1.0 - p], &[a.clone(), b.clone()], &[m1, m2])?;
            let closed = 0.5 * (1.0 - trace_norm(&(a.mat() * c(p, 0.0) - b.mat() * c(1.0 - p, 0.0)))?);
            // Any projective two-outcome measurement does no better.
            let mut q = CMatrix::zeros(d, d);
            for i in 0..k {
                let v = u.column(i);
                q += &v * v.adjoint();
            }
            let other = qsd_error(&[p, 1.0 - p], &[a.clone(), b.clone()], &[q.clone(), CMatrix::identity(d, d) - q])?;
            Ok(gap("closed-form gap", (pe - closed).abs(), 1e-10).or_else(|| gap("beaten by", pe - other, 1e-12)))
        })();
        hel.record(r);
    }

    let mut orth = CheckTally::new("qsd_orthogonal");
    for _ in 0..ctx.n(5) {
        let d = 6;
        let u = random::unitary(&mut ctx.rng, d);
        let split = ctx.rng.gen_range(1..d);
        let r = (|| {
            let proj = |lo: usize, hi: usize| {
                let mut p = CMatrix::zeros(d, d);
                for i in lo..hi {
                    let v = u.column(i);
                    p += &v * v.adjoint();
                }
                p
            };
            let (p1, p2) = (proj(0, split), proj(split, d));
            let r1 = DensityMatrix::single(&p1 / c(split as f64, 0.0))?;
            let r2 = DensityMatrix::single(&p2 / c((d - split) as f64, 0.0))?;
            let pe = qsd_error(&[0.5, 0.5], &[r1, r2], &[p1, p2])?;
            Ok(gap("error probability", pe, 1e-10))
        })();
        orth.record(r);
    }
    vec![hel, orth]
}

fn scenario(system: SystemConfig, traced: Vec<EnvConfig>, observed: Vec<EnvConfig>, grid: GridConfig, times: Vec<f64>) -> ScenarioConfig {
    ScenarioConfig {
        schema: 1,
        name: None,
        grid,
        system,
        ensemble: EnsembleConfig { traced, observed },
        times,
        partition: PartitionConfig::Cuts { cuts: vec![0.0] },
        partition_schedule: Vec::new(),
        pvm: PvmConfig::Heuristic,
        tolerances: Tolerances::default(),
        seed: 0,
        cap: None,
    }
}

/// Canonical cat: centres ±3, width 0.5 on [-8, 8] with 128 points.
pub fn canonical_cat() -> SystemConfig {
    SystemConfig::Cat { centers: vec![-3.0, 3.0], weights: None, width: 0.5 }
}

pub const CANONICAL_TIMES: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// Kupsch scenario: Gaussian Γ with α = 1, n = 1, no observed environment.
pub fn canonical_kupsch_scenario() -> ScenarioConfig {
    scenario(
        canonical_cat(),
        vec![EnvConfig::GaussianGamma { alpha: 1.0, n_exp: 1.0 }],
        Vec::new(),
        GridConfig::default(),
        CANONICAL_TIMES.to_vec(),
    )
}

/// Diagonal scenario: one observed dim-12 position oscillator, g = 1.
pub fn canonical_diagonal_scenario() -> ScenarioConfig {
    scenario(
        canonical_cat(),
        Vec::new(),
        vec![EnvConfig::Oscillator { dim: 12, generator: GeneratorKind::Position, coupling: 1.0, occupation: 0.0 }],
        GridConfig::default(),
        CANONICAL_TIMES.to_vec(),
    )
}

/// Every emitted row of small random scenarios holds.
fn check_scenarios(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("scenario_rows");
    for k in 0..ctx.n(3) {
        let tt = ctx.rng.gen_range(0.1..2.0);
        let center = ctx.rng.gen_range(1.5..2.5);
        let traced = if k % 2 == 0 {
            vec![EnvConfig::GaussianGamma { alpha: ctx.rng.gen_range(0.2..2.0), n_exp: 1.0 }]
        } else {
            vec![EnvConfig::Qubit { coupling: ctx.rng.gen_range(0.3..1.5) }]
        };
        let observed = vec![EnvConfig::Oscillator {
            dim: 6,
            generator: GeneratorKind::Position,
            coupling: ctx.rng.gen_range(0.5..1.5),
            occupation: 0.0,
        }];
        let cfg = scenario(
            SystemConfig::Cat { centers: vec![-center, center], weights: None, width: 0.4 },
            traced,
            observed,
            GridConfig { x_min: -8.0, x_max: 8.0, n: 32 },
            vec![tt],
        );
        let cap = ctx.cap;
        let r = (|| {
            let scn = Scenario::from_config(cfg, Some(cap))?;
            let s = evaluate_time(&scn, tt)?;
            Ok(s.bounds.iter().find(|b| !b.satisfied).map(describe))
        })();
        t.record(r);
    }
    t
}

/// Full sweeps of the two canonical scenarios.
fn check_canonical(ctx: &mut Ctx) -> CheckTally {
    let mut t = CheckTally::new("canonical_sweeps");
    for cfg in [canonical_kupsch_scenario(), canonical_diagonal_scenario()] {
        let cap = ctx.cap;
        let r = (|| {
            let scn = Scenario::from_config(cfg, Some(cap))?;
            let rec = run(&scn)?;
            let bad = rec.rows().find(|(_, b)| !b.satisfied).map(|(tt, b)| format!("t = {tt}: {}", describe(b)));
            Ok(bad)
        })();
        t.record(r);
    }
    t
}

pub fn verify(opts: &VerifyOptions) -> VerifyReport {
    let start = Instant::now();
    type Check = fn(&mut Ctx) -> Vec<CheckTally>;
    let checks: Vec<Check> = vec![
        |c| vec![check_trace_norm(c)],
        |c| vec![check_fidelity(c)],
        |c| vec![check_partial_trace(c)],
        |c| vec![check_kernel_invariants(c)],
        |c| vec![check_lemma_equivalence(c)],
        |c| vec![check_commutation_lemma(c)],
        |c| vec![check_kupsch(c)],
        |c| vec![check_kupsch_parts(c)],
        |c| vec![check_stolz(c)],
        |c| vec![check_gaussian(c)],
        check_diagonal,
        |c| vec![check_diagonal_multi(c)],
        check_helpers,
        check_qsd,
        |c| vec![check_scenarios(c)],
    ];
    let mut tallies = Vec::new();
    for (k, check) in checks.iter().enumerate() {
        let mut ctx = Ctx {
            rng: ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64)),
            trials: opts.suite.scale(),
            fault: opts.fault,
            cap: opts.cap,
        };
        tallies.extend(check(&mut ctx));
    }
    if opts.suite == Suite::All {
        let mut ctx = Ctx { rng: ChaCha8Rng::seed_from_u64(opts.seed), trials: 1, fault: opts.fault, cap: opts.cap };
        tallies.push(check_canonical(&mut ctx));
    }
    VerifyReport { suite: opts.suite, checks: tallies, wall_time: start.elapsed().as_secs_f64() }
}
