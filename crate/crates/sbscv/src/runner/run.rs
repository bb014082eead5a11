//! Time sweeps over a scenario and their CSV/manifest output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{PvmConfig, Scenario, Tolerances};
use crate::bounds::{
    diagonal_bound, diagonal_bound_multi, further_diagonal_bound, gaussian_offdiag_bound, offdiag_total_bound, BoundReport,
};
use crate::dynamics::{evolve_with_kernel, GammaKernel, JointState};
use crate::error::{Error, Result};
use crate::numkit::CMatrix;
use crate::sbs::{
    branch_fidelity_matrix, branches, build_sbs_candidate, diagonal_distance, exhaustive_env_pvm, heuristic_env_pvm,
    lambda_map, offdiag_half_norm, qsd_error, sbs_distance, Branch, EnvPvm, Partition, SbsCandidate, DISTINGUISHABLE_F,
};

pub const BOUNDS_CSV: &str = "bounds.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const MANIFEST: &str = "manifest.json";

pub const BOUNDS_HEADER: [&str; 10] = ["t", "name", "lhs", "rhs", "margin", "satisfied", "n_grid", "env_dims", "pvm_strategy", "seed"];

/// Everything computed at one time sample.
#[derive(Clone, Debug)]
pub struct TimeSample {
    pub t: f64,
    pub sbs_distance: f64,
    pub diagonal_distance: f64,
    pub offdiag_half_norm: f64,
    pub norm_const: f64,
    /// Largest fidelity between reduced branch states of distinct cells,
    /// over all observed environments.
    pub max_branch_fidelity: Option<f64>,
    pub distinguishable: Option<bool>,
    pub qsd_error: Option<f64>,
    pub pvm_warnings: Vec<String>,
    pub bounds: Vec<BoundReport>,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub samples: Vec<TimeSample>,
    pub wall_time: f64,
}

impl RunRecord {
    pub fn all_satisfied(&self) -> bool {
        self.samples.iter().all(|s| s.bounds.iter().all(|b| b.satisfied))
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &BoundReport)> {
        self.samples.iter().flat_map(|s| s.bounds.iter().map(move |b| (s.t, b)))
    }
}

fn in_context<T>(r: Result<T>, t: f64, what: &str) -> Result<T> {
    r.map_err(|e| Error::Precondition(format!("t = {t}: {what}: {e}")))
}

fn choose_pvm(scn: &Scenario, rho_t: &JointState, brs: &[Branch], partition: &Partition) -> Result<(EnvPvm, SbsCandidate)> {
    let cap = scn.cap;
    let cells = partition.len();
    let build = |pvm: EnvPvm| -> Result<(EnvPvm, SbsCandidate)> {
        let cand = build_sbs_candidate(rho_t, partition, &pvm, cap)?;
        Ok((pvm, cand))
    };
    match &scn.config.pvm {
        PvmConfig::Heuristic => build(heuristic_env_pvm(brs, cells)?),
        PvmConfig::Identity => build(EnvPvm::identity(&scn.observed_dims())),
        PvmConfig::Fixed { assignment } => build(EnvPvm::fixed(&scn.observed_dims(), assignment)?),
        PvmConfig::Exhaustive => {
            let (hp, hc) = build(heuristic_env_pvm(brs, cells)?)?;
            let (ep, ec) = build(exhaustive_env_pvm(brs, cells)?)?;
            if sbs_distance(rho_t, &ec)? < sbs_distance(rho_t, &hc)? {
                Ok((ep, ec))
            } else {
                Ok((hp, hc))
            }
        }
    }
}

fn max_fidelity(candidate: &SbsCandidate) -> Result<Option<f64>> {
    let mut worst: Option<f64> = None;
    for m in branch_fidelity_matrix(candidate)? {
        for (i, row) in m.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                if let (true, Some(f)) = (i != j, f) {
                    worst = Some(worst.map_or(*f, |w| w.max(*f)));
                }
            }
        }
    }
    Ok(worst)
}

/// Discrimination error of the cell PVM on the joint observed branch states.
fn branch_qsd(scn: &Scenario, brs: &[Branch], pvm: &EnvPvm, t: f64) -> Result<f64> {
    let total: f64 = brs.iter().map(|b| b.weight).sum();
    let weights: Vec<f64> = brs.iter().map(|b| b.weight / total).collect();
    let states = brs
        .iter()
        .map(|b| if scn.observed.len() == 1 { Ok(b.lambdas[0].clone()) } else { lambda_map(&b.state, &scn.observed, t, scn.cap) })
        .collect::<Result<Vec<_>>>()?;
    let mut measurement: Vec<CMatrix> = brs.iter().map(|b| pvm.joint_projector(b.cell, scn.cap)).collect::<Result<_>>()?;
    let d = states[0].dim();
    let mut rest = CMatrix::identity(d, d);
    for p in &measurement {
        rest -= p;
    }
    if rest.iter().any(|z| z.norm() > 1e-12) {
        measurement.push(rest);
    }
    qsd_error(&weights, &states, &measurement)
}

/// Evaluates one time sample.
pub fn evaluate_time(scn: &Scenario, t: f64) -> Result<TimeSample> {
    let start = Instant::now();
    let tol = *scn.tolerances();
    let grid = scn.grid;
    let partition = scn.partition_at(t);
    let gamma = in_context(GammaKernel::from_factors(&grid, t, scn.gamma_factors.clone()), t, "kernel")?;
    let rho_t = in_context(evolve_with_kernel(&scn.rho_s, &gamma, &scn.observed, t, scn.cap), t, "evolution")?;
    let offdiag = in_context(offdiag_half_norm(&rho_t, partition), t, "off-diagonal norm")?;
    let mut bounds = Vec::new();

    let (sbs, diag_lhs, diag_rhs, norm_const, max_f, qsd, warnings) = if scn.observed.is_empty() {
        // Nothing to measure: the candidate is the block-diagonal part itself.
        let w: f64 = (0..partition.len())
            .map(|i| partition.range(i).map(|j| scn.rho_s.kernel()[(j, j)].re).sum::<f64>() * grid.dx())
            .sum();
        (offdiag, 0.0, 0.0, w, None, None, Vec::new())
    } else {
        let brs = in_context(branches(&scn.rho_s, partition, &scn.observed, t), t, "branches")?;
        let (pvm, cand) = in_context(choose_pvm(scn, &rho_t, &brs, partition), t, "PVM")?;
        let sbs = in_context(sbs_distance(&rho_t, &cand), t, "SBS distance")?;
        let diag = in_context(diagonal_distance(&rho_t, &cand), t, "diagonal distance")?;
        let report = if scn.observed.len() == 1 {
            diagonal_bound(&rho_t, &cand, &brs, tol.bound)
        } else {
            diagonal_bound_multi(&rho_t, &cand, &brs, &scn.observed, t, scn.cap, tol.bound)
        };
        let report = in_context(report, t, "diagonal bound")?;
        let further = in_context(further_diagonal_bound(&brs, &scn.observed, &pvm, t, diag, tol.bound), t, "further bound")?;
        let jl = report.get("jensen_lhs").expect("recorded");
        let jr = report.get("jensen_rhs").expect("recorded");
        let diag_rhs = report.rhs;
        bounds.push(report);
        bounds.push(further);
        bounds.push(BoundReport::new("jensen", jl, jr, tol.jensen));
        let max_f = in_context(max_fidelity(&cand), t, "fidelities")?;
        let qsd = in_context(branch_qsd(scn, &brs, &pvm, t), t, "QSD")?;
        (sbs, diag, diag_rhs, cand.norm_const, max_f, Some(qsd), pvm.warnings.clone())
    };

    let (total, blocks) = in_context(offdiag_total_bound(offdiag, &gamma, &scn.rho_s, partition, tol.bound), t, "Kupsch bound")?;
    let total_rhs = total.rhs;
    bounds.extend(blocks);
    bounds.push(total);

    if let (Some((alpha, n_exp)), true) = (scn.gaussian_tag(), t > 0.0) {
        let cells = partition.cells();
        for i in 0..cells.len() {
            for j in 0..cells.len() {
                if i != j {
                    let r = gaussian_offdiag_bound(&scn.rho_s, t, alpha, n_exp, &cells[i], &cells[j], tol.bound);
                    bounds.push(in_context(r, t, "gaussian bound")?);
                }
            }
        }
    }

    bounds.push(BoundReport::new("chain_split", sbs, diag_lhs + offdiag, tol.chain));
    bounds.push(BoundReport::new("chain_total", diag_lhs + offdiag, diag_rhs + total_rhs, tol.chain));

    Ok(TimeSample {
        t,
        sbs_distance: sbs,
        diagonal_distance: diag_lhs,
        offdiag_half_norm: offdiag,
        norm_const,
        max_branch_fidelity: max_f,
        distinguishable: max_f.map(|f| f < DISTINGUISHABLE_F),
        qsd_error: qsd,
        pvm_warnings: warnings,
        bounds,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs every time sample, several at once; results keep the config order.
pub fn run(scn: &Scenario) -> Result<RunRecord> {
    let start = Instant::now();
    let times = scn.times();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(times.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TimeSample>>>> = Mutex::new((0..times.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= times.len() {
                    break;
                }
                let r = evaluate_time(scn, times[k]);
                slots.lock().expect("no panics while holding the lock")[k] = Some(r);
            });
        }
    });
    let samples = slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord { samples, wall_time: start.elapsed().as_secs_f64() })
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn env_dims_label(dims: &[usize]) -> String {
    if dims.is_empty() {
        "-".into()
    } else {
        dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io { path: path.display().to_string(), source: std::io::Error::other(e) }
}

/// Bound rows as CSV, optionally restricted to rows named `only`.
pub fn bounds_csv(scn: &Scenario, record: &RunRecord, only: Option<&str>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BOUNDS_HEADER).expect("in-memory write");
    let dims = env_dims_label(&scn.observed_dims());
    let seed = scn.seed().to_string();
    let n = scn.grid.n().to_string();
    for (t, b) in record.rows() {
        if only.is_some_and(|o| o != b.name) {
            continue;
        }
        w.write_record([
            fmt_f64(t),
            b.name.clone(),
            fmt_f64(b.lhs),
            fmt_f64(b.rhs),
            fmt_f64(b.margin),
            b.satisfied.to_string(),
            n.clone(),
            dims.clone(),
            scn.config.pvm.name().to_string(),
            seed.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

/// Per-time quantities. Wall time is left out so reruns are byte-identical.
pub fn samples_csv(record: &RunRecord) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t",
        "sbs_distance",
        "diagonal_distance",
        "offdiag_half_norm",
        "norm_const",
        "max_branch_fidelity",
        "qsd_error",
    ])
    .expect("in-memory write");
    for s in &record.samples {
        w.write_record([
            fmt_f64(s.t),
            fmt_f64(s.sbs_distance),
            fmt_f64(s.diagonal_distance),
            fmt_f64(s.offdiag_half_norm),
            fmt_f64(s.norm_const),
            opt(s.max_branch_fidelity),
            opt(s.qsd_error),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    name: Option<&'a str>,
    config_sha256: &'a str,
    seed: u64,
    crate_name: &'static str,
    crate_version: &'static str,
    n_grid: usize,
    env_dims: String,
    pvm_strategy: &'static str,
    cap: usize,
    all_satisfied: bool,
    files: BTreeMap<&'static str, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bounds.csv`, `samples.csv` and `manifest.json` into `dir`.
pub fn write_outputs(scn: &Scenario, record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| Error::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let bounds = bounds_csv(scn, record, None);
    let samples = samples_csv(record);
    let manifest = Manifest {
        schema: scn.config.schema,
        name: scn.config.name.as_deref(),
        config_sha256: &scn.config_hash,
        seed: scn.seed(),
        crate_name: env!("CARGO_PKG_NAME"),
        crate_version: env!("CARGO_PKG_VERSION"),
        n_grid: scn.grid.n(),
        env_dims: env_dims_label(&scn.observed_dims()),
        pvm_strategy: scn.config.pvm.name(),
        cap: scn.cap,
        all_satisfied: record.all_satisfied(),
        files: BTreeMap::from([(BOUNDS_CSV, sha256_hex(bounds.as_bytes())), (SAMPLES_CSV, sha256_hex(samples.as_bytes()))]),
    };
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    let mut out = Vec::new();
    for (name, body) in [(BOUNDS_CSV, bounds), (SAMPLES_CSV, samples), (MANIFEST, manifest)] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
        out.push(p);
    }
    Ok(out)
}

/// One row of `bounds.csv` read back.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub t: f64,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
    pub n_grid: usize,
    pub env_dims: String,
    pub pvm_strategy: String,
    pub seed: u64,
}

impl BoundRow {
    /// Recomputes the satisfied flag from the stored sides.
    pub fn revalidate(&self, tol: &Tolerances) -> bool {
        self.lhs <= self.rhs + tol.for_bound(&self.name)
    }
}

pub fn read_bounds_csv(path: &Path) -> Result<Vec<BoundRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(BOUNDS_HEADER) {
        return Err(Error::Validation { field: "header".into(), msg: format!("unexpected header {header:?}") });
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |col: &str| Error::Parse { line: k + 2, column: 0, msg: format!("bad {col} value") };
        let f = |i: usize, col: &str| rec[i].parse::<f64>().map_err(|_| bad(col));
        rows.push(BoundRow {
            t: f(0, "t")?,
            name: rec[1].to_string(),
            lhs: f(2, "lhs")?,
            rhs: f(3, "rhs")?,
            margin: f(4, "margin")?,
            satisfied: rec[5].parse().map_err(|_| bad("satisfied"))?,
            n_grid: rec[6].parse().map_err(|_| bad("n_grid"))?,
            env_dims: rec[7].to_string(),
            pvm_strategy: rec[8].to_string(),
            seed: rec[9].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}
