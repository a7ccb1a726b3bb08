//! Constrained kernel PCA.
//!
//! Each output dimension maximizes
//! `(1/n)‖K̄α‖² − mu_cp Σ_c (k̄_cᵀα − t_c)² − mu_ml Σ_ML (Δk̄ᵀα)² + mu_cl Σ_CL (Δk̄ᵀα)²`
//! over `αᵀK̄α = 1`, the second dimension additionally K̄-orthogonal to the
//! first. In the scaled eigenbasis `Y = U Σ^½` (so `coords = Yβ`, `‖β‖ = 1`)
//! the quadratic part becomes an r×r matrix `H` that depends only on the
//! constraint topology and strengths. `H` is diagonalized once; a drag then
//! only changes the linear term.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::secular::{restricted_sphere_max, sphere_max};
use super::{EmbedError, EmbedMethod, Embedding, KernelSpectrum, Provenance};
use crate::linalg::{argmax_abs, sym_eigen_desc};

pub const DEFAULT_MU_CP: f64 = 100.0;
pub const DEFAULT_MU_ML: f64 = 1.0;
pub const DEFAULT_MU_CL: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

fn default_mu_cp() -> f64 {
    DEFAULT_MU_CP
}
fn default_mu_ml() -> f64 {
    DEFAULT_MU_ML
}
fn default_mu_cl() -> f64 {
    DEFAULT_MU_CL
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default)]
    pub control_points: Vec<ControlPoint>,
    #[serde(default)]
    pub must_links: Vec<[usize; 2]>,
    #[serde(default)]
    pub cannot_links: Vec<[usize; 2]>,
    #[serde(default = "default_mu_cp")]
    pub mu_cp: f64,
    #[serde(default = "default_mu_ml")]
    pub mu_ml: f64,
    #[serde(default = "default_mu_cl")]
    pub mu_cl: f64,
    /// Relative spectral floor: kernel directions with eigenvalue at or below
    /// `lambda · σ_max` are left out of the solve.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            control_points: Vec::new(),
            must_links: Vec::new(),
            cannot_links: Vec::new(),
            mu_cp: DEFAULT_MU_CP,
            mu_ml: DEFAULT_MU_ML,
            mu_cl: DEFAULT_MU_CL,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

fn unordered(pair: [usize; 2]) -> (usize, usize) {
    (pair[0].min(pair[1]), pair[0].max(pair[1]))
}

impl ConstraintSet {
    pub fn validate(&self, n: usize) -> Result<(), EmbedError> {
        let bad = |msg: String| Err(EmbedError::InvalidConstraints(msg));
        for (name, v) in [("mu_cp", self.mu_cp), ("mu_ml", self.mu_ml), ("mu_cl", self.mu_cl)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        let mut seen = BTreeSet::new();
        for cp in &self.control_points {
            if cp.index >= n {
                return bad(format!("control index {} out of range for {n} points", cp.index));
            }
            if !(cp.x.is_finite() && cp.y.is_finite()) {
                return bad(format!("control {} has a non-finite target", cp.index));
            }
            if !seen.insert(cp.index) {
                return bad(format!("point {} has more than one control entry", cp.index));
            }
        }
        let mut must = BTreeSet::new();
        for (kind, links) in [("must", &self.must_links), ("cannot", &self.cannot_links)] {
            for &[i, j] in links {
                if i >= n || j >= n {
                    return bad(format!("{kind}-link ({i}, {j}) out of range for {n} points"));
                }
                if i == j {
                    return bad(format!("{kind}-link ({i}, {j}) joins a point to itself"));
                }
                if kind == "must" {
                    must.insert(unordered([i, j]));
                } else if must.contains(&unordered([i, j])) {
                    return bad(format!("pair ({i}, {j}) is both a must-link and a cannot-link"));
                }
            }
        }
        Ok(())
    }

    pub fn control(&self, index: usize) -> Option<&ControlPoint> {
        self.control_points.iter().find(|c| c.index == index)
    }

    pub fn is_empty(&self) -> bool {
        self.control_points.is_empty() && self.must_links.is_empty() && self.cannot_links.is_empty()
    }

    fn controls_active(&self) -> bool {
        self.mu_cp > 0.0 && !self.control_points.is_empty()
    }

    fn must_active(&self) -> bool {
        self.mu_ml > 0.0 && !self.must_links.is_empty()
    }

    fn cannot_active(&self) -> bool {
        self.mu_cl > 0.0 && !self.cannot_links.is_empty()
    }

    pub(crate) fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("lambda".to_string(), self.lambda),
            ("mu_cl".to_string(), self.mu_cl),
            ("mu_cp".to_string(), self.mu_cp),
            ("mu_ml".to_string(), self.mu_ml),
        ])
    }
}

/// Diagonalized quadratic form for one constraint topology.
#[derive(Debug, Clone)]
struct Factorization {
    /// Eigenvalues of `H`, descending.
    h: Vec<f64>,
    /// `Y·Q`: coordinates are `W β` for `β` in the eigenbasis of `H`.
    w: DMatrix<f64>,
    lambda: f64,
}

#[derive(Debug, Clone)]
pub struct CkpcaState {
    spectrum: KernelSpectrum,
    basis: DMatrix<f64>,
    sigma: Vec<f64>,
    constraints: ConstraintSet,
    factor: Factorization,
    betas: [Vec<f64>; 2],
    coords: Vec<[f64; 2]>,
}

fn factorize(basis: &DMatrix<f64>, sigma: &[f64], c: &ConstraintSet) -> Factorization {
    let n = basis.nrows();
    let r = basis.ncols();
    let active = c.controls_active() || c.must_active() || c.cannot_active();
    if !active {
        return Factorization {
            h: sigma.iter().map(|s| s / n as f64).collect(),
            w: basis.clone(),
            lambda: c.lambda,
        };
    }
    let mut hm = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        r,
        sigma.iter().map(|s| s / n as f64),
    ));
    let mut add_outer = |weight: f64, z: &nalgebra::DVector<f64>| {
        hm.ger(weight, z, z, 1.0);
    };
    let row = |i: usize| basis.row(i).transpose();
    if c.controls_active() {
        for cp in &c.control_points {
            add_outer(-c.mu_cp, &row(cp.index));
        }
    }
    if c.must_active() {
        for &[i, j] in &c.must_links {
            add_outer(-c.mu_ml, &(row(i) - row(j)));
        }
    }
    if c.cannot_active() {
        for &[i, j] in &c.cannot_links {
            add_outer(c.mu_cl, &(row(i) - row(j)));
        }
    }
    let (h, q) = sym_eigen_desc(hm);
    Factorization {
        h,
        w: basis * q,
        lambda: c.lambda,
    }
}

impl CkpcaState {
    /// Builds the state and solves once.
    pub fn new(spectrum: KernelSpectrum, constraints: ConstraintSet) -> Result<Self, EmbedError> {
        let n = spectrum.n();
        constraints.validate(n)?;
        let rank = spectrum.rank();
        if rank < 2 {
            return Err(EmbedError::RankDeficient { rank });
        }
        let (basis, sigma) = spectrum.scaled_basis(constraints.lambda);
        let factor = factorize(&basis, &sigma, &constraints);
        let (betas, coords) = solve_with(&factor, &constraints)?;
        Ok(CkpcaState {
            spectrum,
            basis,
            sigma,
            constraints,
            factor,
            betas,
            coords,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of kernel directions in the solve.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn spectrum(&self) -> &KernelSpectrum {
        &self.spectrum
    }

    /// Coefficients `α_d` with `coords[:, d] = K̄ α_d`.
    pub fn alphas(&self) -> [Vec<f64>; 2] {
        // K̄ Y = Y Σ, so α = Y Σ⁻¹ (Σ⁻¹ Yᵀ coords)
        let coef = |d: usize| -> Vec<f64> {
            let col = nalgebra::DVector::from_iterator(self.n(), self.coords.iter().map(|c| c[d]));
            let mut t = self.basis.transpose() * col;
            for (k, v) in t.iter_mut().enumerate() {
                *v /= self.sigma[k] * self.sigma[k];
            }
            (&self.basis * t).iter().copied().collect()
        };
        [coef(0), coef(1)]
    }

    pub fn embedding(&self) -> Embedding {
        Embedding::new(
            self.coords.clone(),
            EmbedMethod::Ckpca,
            Provenance {
                kernel: None,
                params: self.constraints.params(),
            },
        )
    }

    /// Re-diagonalizes for the current constraints and solves from scratch.
    pub fn solve(&mut self) -> Result<Embedding, EmbedError> {
        let constraints = self.constraints.clone();
        self.set_constraints(constraints)
    }

    /// Replaces the constraints, refactorizing. On error the state is untouched.
    pub fn set_constraints(&mut self, constraints: ConstraintSet) -> Result<Embedding, EmbedError> {
        constraints.validate(self.n())?;
        let rebasis = constraints.lambda != self.factor.lambda;
        let (basis, sigma) = if rebasis {
            self.spectrum.scaled_basis(constraints.lambda)
        } else {
            (self.basis.clone(), self.sigma.clone())
        };
        let factor = factorize(&basis, &sigma, &constraints);
        let (betas, coords) = solve_with(&factor, &constraints)?;
        self.basis = basis;
        self.sigma = sigma;
        self.factor = factor;
        self.constraints = constraints;
        self.betas = betas;
        self.coords = coords;
        Ok(self.embedding())
    }

    /// Moves an existing control point, reusing the factorization.
    pub fn move_control(&mut self, index: usize, x: f64, y: f64) -> Result<Embedding, EmbedError> {
        let mut constraints = self.constraints.clone();
        let Some(cp) = constraints.control_points.iter_mut().find(|c| c.index == index) else {
            return Err(EmbedError::UnknownControl(index));
        };
        if !(x.is_finite() && y.is_finite()) {
            return Err(EmbedError::InvalidConstraints(format!(
                "control {index} has a non-finite target"
            )));
        }
        cp.x = x;
        cp.y = y;
        let (betas, coords) = solve_with(&self.factor, &constraints)?;
        self.constraints = constraints;
        self.betas = betas;
        self.coords = coords;
        Ok(self.embedding())
    }

    /// Solution vectors in the eigenbasis of the constraint form.
    pub fn betas(&self) -> &[Vec<f64>; 2] {
        &self.betas
    }
}

/// Sphere-solution coefficients per axis, and the resulting coordinates.
type Solution = ([Vec<f64>; 2], Vec<[f64; 2]>);

fn solve_with(factor: &Factorization, c: &ConstraintSet) -> Result<Solution, EmbedError> {
    let w = &factor.w;
    let (n, r) = (w.nrows(), w.ncols());
    let mut rhs = [vec![0.0; r], vec![0.0; r]];
    if c.controls_active() {
        for cp in &c.control_points {
            let row = w.row(cp.index);
            for k in 0..r {
                rhs[0][k] += c.mu_cp * cp.x * row[k];
                rhs[1][k] += c.mu_cp * cp.y * row[k];
            }
        }
    }
    let project = |beta: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..r).map(|k| w[(i, k)] * beta[k]).sum())
            .collect()
    };
    let orient = |v: &[f64]| {
        let col = project(v);
        if col[argmax_abs(col.iter().copied())] < 0.0 {
            -1.0
        } else {
            1.0
        }
    };
    let first = sphere_max(&factor.h, &rhs[0], &orient).ok_or(EmbedError::SingularSystem)?;
    let second =
        restricted_sphere_max(&factor.h, &rhs[1], &first, &orient).ok_or(EmbedError::SingularSystem)?;
    let xs = project(&first);
    let ys = project(&second);
    let coords: Vec<[f64; 2]> = xs.iter().zip(&ys).map(|(&a, &b)| [a, b]).collect();
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EmbedError::SingularSystem);
    }
    Ok(([first, second], coords))
}
