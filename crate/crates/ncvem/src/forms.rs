//! Local stabilized stiffness and (non)stabilized mass matrices, the
//! sigma/tau stabilization recipes, global sparse assembly with boundary
//! conditions, load vectors, and the jump-moment conformity diagnostic.
//!
//! Local stiffness:
//!
//! ```text
//! K = Pi^T G Pi + sigma_P (I - PiDof)^T (I - PiDof)
//! ```
//!
//! with `G` the exact stiffness Gram of the monomials, `Pi` the elliptic
//! projector in coefficient form and `PiDof` its dof-space version.
//! `sigma_P` is the mean eigenvalue (trace/n) of the consistency part for
//! `k = 1` and its largest eigenvalue for `k = 2, 3`. The mass matrix uses
//! the L² projector with Gram `H`; the stabilized variant adds
//! `tau_P h^2 (I - Pi0Dof)^T (I - Pi0Dof)` where `tau_P` applies the same
//! mean/max recipe to `(1/h^2) M_cons` and `h` is the global mesh size.

use crate::mesh::PolygonalMesh;
use crate::polybasis::{dim_poly, edge_trace_coeffs, l2_project_element, t_moment, BasisError, MonomialBasis2D};
use crate::sparse::SymCsr;
use crate::vemspace::{
    dof_layout, edge_moments_of, local_ops, BoundaryCondition, DofMap, LocalElementOps,
    SpaceError,
};
use crate::Point2;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormsError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Which discrete L²-inner product backs the mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MassVariant {
    /// Consistency term only; positive semidefinite.
    Nonstabilized,
    /// Consistency plus `tau_P h^2` dof stabilization; positive definite.
    Stabilized,
}

impl std::str::FromStr for MassVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nonstabilized" => Ok(MassVariant::Nonstabilized),
            "stabilized" => Ok(MassVariant::Stabilized),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// How a stabilization constant is read off the consistency spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralRule {
    Mean,
    Max,
}

impl std::str::FromStr for SpectralRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(SpectralRule::Mean),
            "max" => Ok(SpectralRule::Max),
            other => Err(format!("unknown spectral rule `{other}`")),
        }
    }
}

/// Length scale entering the mass stabilization `tau_P h^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TauLengthScale {
    /// Global mesh size (the written form of the scaling).
    GlobalMesh,
    /// Per-cell diameter, for experimentation.
    CellDiameter,
}

/// Discretization options shared by assembly and load vectors.
#[derive(Debug, Clone, Copy)]
pub struct FormOptions {
    pub degree: usize,
    pub bc: BoundaryCondition,
    pub variant: MassVariant,
    /// Multiplies the automatically computed `tau_P` (tau sweeps).
    pub tau_override: f64,
    /// Overrides the per-degree default (mean for k=1, max for k=2,3).
    pub sigma_rule: Option<SpectralRule>,
    pub tau_rule: Option<SpectralRule>,
    /// Whether the mean rule includes zero eigenvalues (trace/n) or only
    /// the nonzero ones.
    pub mean_includes_zero: bool,
    pub tau_length: TauLengthScale,
}

impl FormOptions {
    pub fn new(degree: usize, bc: BoundaryCondition, variant: MassVariant) -> Self {
        FormOptions {
            degree,
            bc,
            variant,
            tau_override: 1.0,
            sigma_rule: None,
            tau_rule: None,
            mean_includes_zero: true,
            tau_length: TauLengthScale::GlobalMesh,
        }
    }

    fn rule_for(&self, explicit: Option<SpectralRule>) -> SpectralRule {
        explicit.unwrap_or(if self.degree == 1 {
            SpectralRule::Mean
        } else {
            SpectralRule::Max
        })
    }
}

/// Per-cell stabilization constants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilizationParams {
    pub sigma: f64,
    pub tau: f64,
}

/// Global stiffness/mass pair with the dof map that indexes them.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub a: SymCsr,
    pub b: SymCsr,
    pub variant: MassVariant,
    pub dofmap: DofMap,
    pub stabilization: Vec<StabilizationParams>,
    /// Global mesh size used in the mass stabilization.
    pub h: f64,
}

fn spectral_value(m: &DMatrix<f64>, rule: SpectralRule, include_zero: bool) -> f64 {
    match rule {
        SpectralRule::Mean if include_zero => m.trace() / m.nrows() as f64,
        rule => {
            let eigs = m.clone().symmetric_eigen().eigenvalues;
            let max = eigs.iter().cloned().fold(0.0f64, f64::max);
            match rule {
                SpectralRule::Max => max,
                SpectralRule::Mean => {
                    let nz: Vec<f64> = eigs.iter().cloned().filter(|&e| e > 1e-12 * max).collect();
                    if nz.is_empty() {
                        0.0
                    } else {
                        nz.iter().sum::<f64>() / nz.len() as f64
                    }
                }
            }
        }
    }
}

/// Local stabilized stiffness matrix and its `sigma_P`.
pub fn local_stiffness(ops: &LocalElementOps, opts: &FormOptions) -> (DMatrix<f64>, f64) {
    let consistency = ops.pi_nabla_coeff.transpose() * &ops.stiffness_gram * &ops.pi_nabla_coeff;
    let sigma = spectral_value(
        &consistency,
        opts.rule_for(opts.sigma_rule),
        opts.mean_includes_zero,
    );
    let eye = DMatrix::<f64>::identity(ops.n_dofs, ops.n_dofs);
    let complement = &eye - &ops.pi_nabla_dof;
    let k = consistency + complement.transpose() * &complement * sigma;
    (k, sigma)
}

/// Local mass matrix (consistency part, optionally stabilized) and its
/// `tau_P`. `h_global` is the mesh size of the owning mesh.
pub fn local_mass(
    ops: &LocalElementOps,
    opts: &FormOptions,
    h_global: f64,
) -> (DMatrix<f64>, f64) {
    let consistency = ops.pi_zero_coeff.transpose() * &ops.mass_gram * &ops.pi_zero_coeff;
    let len = match opts.tau_length {
        TauLengthScale::GlobalMesh => h_global,
        TauLengthScale::CellDiameter => ops.diameter,
    };
    let tau = spectral_value(
        &consistency,
        opts.rule_for(opts.tau_rule),
        opts.mean_includes_zero,
    ) / (len * len);
    match opts.variant {
        MassVariant::Nonstabilized => (consistency, tau),
        MassVariant::Stabilized => {
            let eye = DMatrix::<f64>::identity(ops.n_dofs, ops.n_dofs);
            let complement = &eye - &ops.pi_zero_dof;
            let scaled = opts.tau_override * tau;
            let m = consistency + complement.transpose() * &complement * (scaled * len * len);
            (m, tau)
        }
    }
}

/// Assembles the global stiffness and mass matrices. Local matrices are
/// computed per cell (in parallel) and scattered in cell order, so the
/// result is deterministic for a fixed mesh.
pub fn assemble(mesh: &PolygonalMesh, opts: &FormOptions) -> Result<AssembledSystem, FormsError> {
    let dofmap = dof_layout(mesh, opts.degree, opts.bc)?;
    let h = mesh.h;
    let locals: Vec<(DMatrix<f64>, DMatrix<f64>, StabilizationParams)> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|ci| -> Result<_, FormsError> {
            let ops = local_ops(&mesh.cell(ci), opts.degree)?;
            let (k, sigma) = local_stiffness(&ops, opts);
            let (m, tau) = local_mass(&ops, opts, h);
            Ok((k, m, StabilizationParams { sigma, tau }))
        })
        .collect::<Result<_, _>>()?;

    let mut a_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut b_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut stabilization = Vec::with_capacity(mesh.n_cells());
    for (ci, (k, m, stab)) in locals.into_iter().enumerate() {
        let global = dofmap.cell_dofs(mesh, ci);
        for (i, gi) in global.iter().enumerate() {
            let Some(gi) = gi else { continue };
            for (j, gj) in global.iter().enumerate() {
                let Some(gj) = gj else { continue };
                a_trip.push((*gi, *gj, k[(i, j)]));
                b_trip.push((*gi, *gj, m[(i, j)]));
            }
        }
        stabilization.push(stab);
    }
    let a = SymCsr::from_triplets(dofmap.n_dofs, &mut a_trip);
    let b = SymCsr::from_triplets(dofmap.n_dofs, &mut b_trip);
    Ok(AssembledSystem { a, b, variant: opts.variant, dofmap, stabilization, h })
}

/// Load vector of the discretized source problem: entry `i` is
/// `sum_P b_h^P(f, phi_i)`, built from the element L² projection of `f`
/// (plus the dof stabilization applied to the interpolant of `f` in the
/// stabilized variant).
pub fn rhs_source(
    mesh: &PolygonalMesh,
    opts: &FormOptions,
    f: impl Fn(Point2) -> f64 + Sync,
) -> Result<DVector<f64>, FormsError> {
    let dofmap = dof_layout(mesh, opts.degree, opts.bc)?;
    let k = opts.degree;
    let h = mesh.h;
    let mut rhs = DVector::zeros(dofmap.n_dofs);
    for ci in 0..mesh.n_cells() {
        let cell = mesh.cell(ci);
        let ops = local_ops(&cell, k)?;
        let cf = l2_project_element(&cell, &f, k)?;
        let mut local = ops.pi_zero_coeff.transpose() * (&ops.mass_gram * &cf);
        if opts.variant == MassVariant::Stabilized {
            // dof vector of the local interpolant of f
            let mut fdofs = DVector::zeros(ops.n_dofs);
            for (ei, be) in cell.boundary_edges().enumerate() {
                for (j, m) in edge_moments_of(be.p0, be.p1, k, &f).into_iter().enumerate() {
                    fdofs[ei * k + j] = m;
                }
            }
            if dim_poly(k as i64 - 2, 2) > 0 {
                let moments = crate::polybasis::element_moments(&cell, &f, k - 2);
                for (b, m) in moments.into_iter().enumerate() {
                    fdofs[cell.n_edges() * k + b] = m / cell.area();
                }
            }
            let (_, tau) = local_mass(&ops, opts, h);
            let len = match opts.tau_length {
                TauLengthScale::GlobalMesh => h,
                TauLengthScale::CellDiameter => ops.diameter,
            };
            let eye = DMatrix::<f64>::identity(ops.n_dofs, ops.n_dofs);
            let complement = &eye - &ops.pi_zero_dof;
            let stab = complement.transpose() * (&complement * &fdofs);
            local += stab * (opts.tau_override * tau * len * len);
        }
        for (i, gi) in dofmap.cell_dofs(mesh, ci).into_iter().enumerate() {
            if let Some(gi) = gi {
                rhs[gi] += local[i];
            }
        }
    }
    Ok(rhs)
}

/// Diagnostic proxy for the jump-moment conformity condition: recomputes
/// `∫_S [[v]] . n q ds` for `q` up to degree `k-1` from the two per-cell
/// elliptic projections (the exact traces are virtual) and reports the
/// largest absolute moment over interior edges.
pub fn jump_moment_residual(
    mesh: &PolygonalMesh,
    dofmap: &DofMap,
    dofvec: &DVector<f64>,
) -> Result<f64, FormsError> {
    let k = dofmap.degree;
    let mut coeffs_cache: Vec<Option<(MonomialBasis2D, DVector<f64>)>> =
        vec![None; mesh.n_cells()];
    let mut cell_proj = |ci: usize| -> Result<(MonomialBasis2D, DVector<f64>), FormsError> {
        if coeffs_cache[ci].is_none() {
            let cell = mesh.cell(ci);
            let ops = local_ops(&cell, k)?;
            let mut local = DVector::zeros(ops.n_dofs);
            for (i, gi) in dofmap.cell_dofs(mesh, ci).into_iter().enumerate() {
                local[i] = gi.map_or(0.0, |g| dofvec[g]);
            }
            let coeffs = &ops.pi_nabla_coeff * &local;
            coeffs_cache[ci] = Some((MonomialBasis2D::for_cell(&cell, k), coeffs));
        }
        Ok(coeffs_cache[ci].clone().unwrap())
    };

    let mut worst = 0.0f64;
    for e in &mesh.edges {
        let Some(right) = e.right else { continue };
        let p0 = mesh.vertices[e.vertices[0]];
        let p1 = mesh.vertices[e.vertices[1]];
        // trace polynomials of both projections in the shared global t
        let mut traces: Vec<Vec<f64>> = Vec::with_capacity(2);
        for ci in [e.left, right] {
            let (basis, coeffs) = cell_proj(ci)?;
            let tc = edge_trace_coeffs(&basis, p0, p1);
            let mut poly = vec![0.0; k + 1];
            for (a, t) in tc.iter().enumerate() {
                for (m, &c) in t.iter().enumerate() {
                    poly[m] += coeffs[a] * c;
                }
            }
            traces.push(poly);
        }
        for j in 0..k {
            let mut moment = 0.0;
            for m in 0..=k {
                moment += (traces[0][m] - traces[1][m]) * t_moment(m + j);
            }
            worst = worst.max((moment * e.length).abs());
        }
    }
    Ok(worst)
}
