//! Finite-dimensional environments: generator B, coupling g and initial state.

use crate::error::{Error, Result};
use crate::numkit::{c, eigh, expm_from_eig, hermitian_defect, max_abs, CMatrix, CVector, DensityMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OscillatorKind {
    Position,
    Momentum,
    Number,
}

impl OscillatorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "position" => Some(Self::Position),
            "momentum" => Some(Self::Momentum),
            "number" => Some(Self::Number),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Position => "position",
            Self::Momentum => "momentum",
            Self::Number => "number",
        }
    }
}

/// Parameters an oscillator environment was built from, kept so its
/// truncation can be checked against a larger one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorSpec {
    pub dim: usize,
    pub kind: OscillatorKind,
    pub occupation: f64,
}

#[derive(Clone, Debug)]
pub struct EnvModel {
    b: CMatrix,
    g: f64,
    rho0: DensityMatrix,
    eig_vals: Vec<f64>,
    eig_vecs: CMatrix,
    /// Diagonal of ρ0 in the eigenbasis of B.
    spectral_weights: Vec<f64>,
    origin: Option<OscillatorSpec>,
}

impl EnvModel {
    pub fn new(b: CMatrix, g: f64, rho0: DensityMatrix) -> Result<Self> {
        if !b.is_square() || b.nrows() != rho0.dim() {
            return Err(Error::Dimension(format!(
                "generator is {}x{}, state has dim {}",
                b.nrows(),
                b.ncols(),
                rho0.dim()
            )));
        }
        let defect = hermitian_defect(&b);
        if defect > 1e-12 * (1.0 + max_abs(&b)) {
            return Err(Error::NotHermitian { defect });
        }
        if !g.is_finite() {
            return Err(Error::Invalid("coupling must be finite".into()));
        }
        let (eig_vals, eig_vecs) = eigh(&b);
        let rot = eig_vecs.adjoint() * rho0.mat() * &eig_vecs;
        let spectral_weights = (0..rot.nrows()).map(|k| rot[(k, k)].re).collect();
        Ok(Self { b, g, rho0, eig_vals, eig_vecs, spectral_weights, origin: None })
    }

    /// B = diag(0, 1) with ρ0 = I/2.
    pub fn qubit(g: f64) -> Result<Self> {
        let b = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]));
        Self::new(b, g, DensityMatrix::maximally_mixed(2))
    }

    pub fn with_coupling(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn generator(&self) -> &CMatrix {
        &self.b
    }

    pub fn coupling(&self) -> f64 {
        self.g
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn origin(&self) -> Option<OscillatorSpec> {
        self.origin
    }

    pub fn eigen(&self) -> (&[f64], &CMatrix) {
        (&self.eig_vals, &self.eig_vecs)
    }

    /// e^{-isB}.
    pub fn propagator(&self, s: f64) -> CMatrix {
        expm_from_eig(&self.eig_vals, &self.eig_vecs, s)
    }

    /// ρ0 is pure (purity 1 within 1e-10).
    pub fn pure_initial(&self) -> Option<CVector> {
        if (self.rho0.purity() - 1.0).abs() > 1e-10 {
            return None;
        }
        let (vals, vecs) = eigh(self.rho0.mat());
        let k = vals.len() - 1;
        Some(vecs.column(k).into_owned())
    }
}

/// Traced and observed environments.
#[derive(Clone, Debug, Default)]
pub struct EnvEnsemble {
    pub traced: Vec<EnvModel>,
    pub observed: Vec<EnvModel>,
}

impl EnvEnsemble {
    pub fn new(traced: Vec<EnvModel>, observed: Vec<EnvModel>) -> Result<Self> {
        if traced.is_empty() && observed.is_empty() {
            return Err(Error::Invalid("ensemble has no environments".into()));
        }
        Ok(Self { traced, observed })
    }

    pub fn observed_dims(&self) -> Vec<usize> {
        self.observed.iter().map(|e| e.dim()).collect()
    }

    pub fn traced_dims(&self) -> Vec<usize> {
        self.traced.iter().map(|e| e.dim()).collect()
    }
}

/// γ(s) = Tr{e^{-isB} ρ0}.
pub fn characteristic_function(env: &EnvModel, s: f64) -> C64 {
    // Tr ρ0 = 1 holds for every validated state.
    if s == 0.0 {
        return c(1.0, 0.0);
    }
    env.eig_vals
        .iter()
        .zip(&env.spectral_weights)
        .map(|(&l, &w)| C64::from_polar(w, -s * l))
        .sum()
}

/// Truncated ladder operator a with a|k⟩ = √k |k-1⟩.
pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for k in 1..dim {
        a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
    }
    a
}

/// Truncated oscillator with unit coupling.
pub fn make_oscillator_env(dim: usize, kind: OscillatorKind, thermal_occupation: f64) -> Result<EnvModel> {
    if dim < 4 {
        return Err(Error::Invalid(format!("oscillator dim must be at least 4, got {dim}")));
    }
    if !(thermal_occupation >= 0.0) || !thermal_occupation.is_finite() {
        return Err(Error::Invalid(format!("occupation must be >= 0, got {thermal_occupation}")));
    }
    let a = annihilation(dim);
    let ad = a.adjoint();
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let b = match kind {
        OscillatorKind::Position => (&a + &ad) * c(s2, 0.0),
        OscillatorKind::Momentum => (&ad - &a) * c(0.0, s2),
        OscillatorKind::Number => &ad * &a,
    };
    let weights = gibbs_weights(dim, thermal_occupation);
    let rho = CMatrix::from_diagonal(&CVector::from_iterator(dim, weights.iter().map(|&w| c(w, 0.0))));
    let mut env = EnvModel::new(b, 1.0, DensityMatrix::new(rho, vec![dim])?)?;
    env.origin = Some(OscillatorSpec { dim, kind, occupation: thermal_occupation });
    Ok(env)
}

/// Fock-basis weights ∝ r^k, r = n̄/(1+n̄), normalised on the truncation.
pub fn gibbs_weights(dim: usize, occupation: f64) -> Vec<f64> {
    if occupation == 0.0 {
        let mut w = vec![0.0; dim];
        w[0] = 1.0;
        return w;
    }
    let r = occupation / (1.0 + occupation);
    let raw: Vec<f64> = (0..dim).map(|k| r.powi(k as i32)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// e^{-itxgB} ρ0 e^{itxgB}.
pub fn branch_state(env: &EnvModel, t: f64, x: f64) -> DensityMatrix {
    let u = env.propagator(t * x * env.g);
    let m = &u * env.rho0.mat() * u.adjoint();
    DensityMatrix::from_parts(m, vec![env.dim()]).expect("conjugation keeps the shape")
}

/// Largest change in γ over `s_values` when the oscillator truncation is
/// doubled. Environments not built by [`make_oscillator_env`] are exact and
/// return 0.
pub fn truncation_change(env: &EnvModel, s_values: &[f64]) -> Result<f64> {
    let Some(spec) = env.origin else {
        return Ok(0.0);
    };
    let big = make_oscillator_env(2 * spec.dim, spec.kind, spec.occupation)?;
    Ok(s_values
        .iter()
        .map(|&s| (characteristic_function(env, s) - characteristic_function(&big, s)).norm())
        .fold(0.0, f64::max))
}

/// Aborts with a truncation error when doubling the dimension moves γ by
/// 1e-6 or more anywhere on `s_values`.
pub fn check_truncation(env: &EnvModel, s_values: &[f64]) -> Result<()> {
    let change = truncation_change(env, s_values)?;
    if change >= 1e-6 {
        return Err(Error::Truncation { dim: env.dim(), change });
    }
    Ok(())
}
