//! Experiment driver: eigenvalue convergence studies, tau sweeps, rate
//! fitting, reference spectra and CSV/JSON emission.
//!
//! The driver generates one mesh per level, assembles the requested
//! variant, solves the generalized eigenproblem and matches discrete
//! eigenvalues to the reference spectrum by ascending order (references
//! with equal values form multiplicity clusters and absorb as many
//! discrete values as their size). For Neumann problems the zero mode is
//! detected by the relative threshold `lambda < 1e-8 * lambda_max` and
//! excluded from the records; `eig_index` counts physical eigenvalues
//! from 1.

use crate::forms::{assemble, FormOptions, MassVariant, SpectralRule, TauLengthScale};
use crate::mesh::{generate_family, Domain, MeshError, MeshFamily};
use crate::polybasis::dim_poly;
use crate::vemspace::BoundaryCondition;
use crate::eigsolve::{solve_gevp, SolveError, StiffnessKind};
use crate::forms::FormsError;
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("rate fit requires at least 2 strictly positive (h, error) pairs")]
    NonPositiveData,
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("solver returned {got} finite eigenvalues, need {want}")]
    InsufficientModes { got: usize, want: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Zero-mode threshold for Neumann spectra, relative to the largest
/// reported eigenvalue.
pub const ZERO_MODE_REL: f64 = 1e-8;

/// First nonzero Neumann eigenvalues of the L-shaped domain
/// `(-1,1)^2 minus (0,1) x (-1,0)`, indexed from 1 (the zero mode is
/// index 0). The third and fourth are the analytic double eigenvalue
/// `pi^2` (eigenfunctions `cos(pi x)` and `cos(pi y)`); the others were
/// produced by Richardson extrapolation (rate 4/3 for the singular first
/// mode) of this library's own degree-3 Voronoi runs on levels 3-5, see
/// the `lshape_reference_extrapolation` test.
pub const LSHAPE_NEUMANN_NONZERO: [f64; 5] = [
    1.47562182,
    3.53403137,
    9.869604401089358, // pi^2
    9.869604401089358, // pi^2
    11.38947918,
];

/// Reference eigenvalues (ascending, with multiplicity). Neumann lists
/// start with the zero mode.
pub fn reference_eigenvalues(domain: Domain, bc: BoundaryCondition, count: usize) -> Vec<f64> {
    assert!(count <= 20, "reference list supports at most 20 values");
    match (domain, bc) {
        (Domain::UnitSquare, BoundaryCondition::Dirichlet) => {
            let mut v = Vec::new();
            for n in 1..=25u32 {
                for m in 1..=25u32 {
                    v.push(std::f64::consts::PI.powi(2) * f64::from(n * n + m * m));
                }
            }
            v.sort_by(f64::total_cmp);
            v.truncate(count);
            v
        }
        (Domain::UnitSquare, BoundaryCondition::Neumann) => {
            let mut v = Vec::new();
            for n in 0..=25u32 {
                for m in 0..=25u32 {
                    v.push(std::f64::consts::PI.powi(2) * f64::from(n * n + m * m));
                }
            }
            v.sort_by(f64::total_cmp);
            v.truncate(count);
            v
        }
        (Domain::Lshape, BoundaryCondition::Neumann) => {
            let mut v = vec![0.0];
            v.extend_from_slice(&LSHAPE_NEUMANN_NONZERO);
            assert!(
                count <= v.len(),
                "only {} L-shape Neumann references are stored",
                v.len()
            );
            v.truncate(count);
            v
        }
        (Domain::Lshape, BoundaryCondition::Dirichlet) => {
            panic!("no stored references for the Dirichlet L-shape problem")
        }
    }
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<f64, HarnessError> {
    if pairs.len() < 2 || pairs.iter().any(|&(h, e)| h <= 0.0 || e <= 0.0) {
        return Err(HarnessError::NonPositiveData);
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, e) in pairs {
        let x = h.ln();
        let y = e.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// Least-squares fit of `lambda_l = lambda* + C h_l^rate`; returns the
/// extrapolated `lambda*`.
pub fn richardson_extrapolate(samples: &[(f64, f64)], rate: f64) -> f64 {
    let n = samples.len() as f64;
    let (mut sp, mut spp, mut sl, mut spl) = (0.0, 0.0, 0.0, 0.0);
    for &(h, lam) in samples {
        let p = h.powf(rate);
        sp += p;
        spp += p * p;
        sl += lam;
        spl += p * lam;
    }
    // normal equations for (lambda*, C)
    let det = n * spp - sp * sp;
    (spp * sl - sp * spl) / det
}

/// Complete description of a convergence run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub bc: BoundaryCondition,
    pub family: MeshFamily,
    pub degree: usize,
    pub variant: MassVariant,
    pub levels: Vec<usize>,
    pub num_eigs: usize,
    pub seed: u64,
    pub tau_override: f64,
    pub tau_sweep: Option<Vec<f64>>,
    pub sigma_rule: Option<SpectralRule>,
    pub tau_rule: Option<SpectralRule>,
    pub mean_includes_zero: bool,
    pub tau_length: TauLengthScale,
    /// Enables the tau-sweep stability assertion.
    pub assert_checks: bool,
}

impl ExperimentConfig {
    pub fn new(
        domain: Domain,
        bc: BoundaryCondition,
        family: MeshFamily,
        degree: usize,
        variant: MassVariant,
        levels: Vec<usize>,
        num_eigs: usize,
        seed: u64,
    ) -> Self {
        ExperimentConfig {
            domain,
            bc,
            family,
            degree,
            variant,
            levels,
            num_eigs,
            seed,
            tau_override: 1.0,
            tau_sweep: None,
            sigma_rule: None,
            tau_rule: None,
            mean_includes_zero: true,
            tau_length: TauLengthScale::GlobalMesh,
            assert_checks: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::InvalidConfig(
                "levels must be nonempty and strictly ascending".into(),
            ));
        }
        if self.num_eigs == 0 {
            return Err(HarnessError::InvalidConfig("num_eigs must be >= 1".into()));
        }
        Ok(())
    }

    fn form_options(&self, tau_override: f64) -> FormOptions {
        FormOptions {
            degree: self.degree,
            bc: self.bc,
            variant: self.variant,
            tau_override,
            sigma_rule: self.sigma_rule,
            tau_rule: self.tau_rule,
            mean_includes_zero: self.mean_includes_zero,
            tau_length: self.tau_length,
        }
    }
}

/// One (level, eigenvalue) entry of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRecord {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    /// Physical eigenvalue index, 1-based (zero modes excluded).
    pub eig_index: usize,
    pub lambda_h: f64,
    pub lambda_ref: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedRate {
    pub eig_index: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub records: Vec<ConvergenceRecord>,
    /// Least-squares rates over the last (up to) 3 levels, per eig_index.
    pub rates: Vec<FittedRate>,
    pub assertions: Vec<AssertionOutcome>,
}

/// Solves one level of a study; returns `(h, dofs, first num_eigs
/// physical eigenvalues)`.
fn solve_level(
    cfg: &ExperimentConfig,
    level: usize,
    tau_override: f64,
) -> Result<(f64, usize, Vec<f64>), HarnessError> {
    let mesh = generate_family(cfg.family, level, cfg.domain, cfg.seed)?;
    let opts = cfg.form_options(tau_override);
    let sys = assemble(&mesh, &opts)?;
    let kind = match cfg.bc {
        BoundaryCondition::Dirichlet => StiffnessKind::PositiveDefinite,
        BoundaryCondition::Neumann => StiffnessKind::SemidefiniteConstants,
    };
    let buffer = match cfg.bc {
        BoundaryCondition::Dirichlet => 0,
        BoundaryCondition::Neumann => 4,
    };
    let request = (cfg.num_eigs + buffer).min(sys.a.n);
    let eig = solve_gevp(&sys.a, &sys.b, request, kind)?;
    let lambda_max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let physical: Vec<f64> = eig
        .eigenvalues
        .iter()
        .cloned()
        .filter(|&l| l > ZERO_MODE_REL * lambda_max)
        .take(cfg.num_eigs)
        .collect();
    if physical.len() < cfg.num_eigs {
        return Err(HarnessError::InsufficientModes { got: physical.len(), want: cfg.num_eigs });
    }
    Ok((mesh.h, sys.dofmap.n_dofs, physical))
}

/// Runs the eigenvalue convergence study described by `cfg`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceStudy, HarnessError> {
    cfg.validate()?;
    let refs_all = reference_eigenvalues(
        cfg.domain,
        cfg.bc,
        cfg.num_eigs + if cfg.bc == BoundaryCondition::Neumann { 1 } else { 0 },
    );
    let refs: Vec<f64> = refs_all.into_iter().filter(|&l| l > 0.0).collect();
    assert!(refs.len() >= cfg.num_eigs);

    let mut records = Vec::new();
    for &level in &cfg.levels {
        let (h, dofs, lambdas) = solve_level(cfg, level, cfg.tau_override)?;
        for (i, &lh) in lambdas.iter().enumerate() {
            let lref = refs[i];
            records.push(ConvergenceRecord {
                level,
                h,
                dofs,
                eig_index: i + 1,
                lambda_h: lh,
                lambda_ref: lref,
                rel_error: (lref - lh).abs() / lref,
            });
        }
    }

    let mut rates = Vec::new();
    for i in 1..=cfg.num_eigs {
        let mut pairs: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.eig_index == i)
            .map(|r| (r.h, r.rel_error))
            .collect();
        let keep = pairs.len().min(3);
        pairs = pairs.split_off(pairs.len() - keep);
        if let Ok(rate) = fit_rate(&pairs) {
            rates.push(FittedRate { eig_index: i, rate });
        }
    }
    Ok(ConvergenceStudy { records, rates, assertions: Vec::new() })
}

/// One sweep point: eigenvalues at a given tau multiplier.
#[derive(Debug, Clone, Serialize)]
pub struct TauSweepRow {
    pub level: usize,
    pub h: f64,
    pub multiplier: f64,
    /// First four physical eigenvalues.
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TauSweepStudy {
    pub rows: Vec<TauSweepRow>,
    pub assertions: Vec<AssertionOutcome>,
}

/// Runs the tau sweep: for every multiplier and level, reports the first
/// four eigenvalues. With `assert_checks`, verifies that the first
/// eigenvalue varies by less than 5% (relative to its reference) over the
/// multipliers inside `[0.1, 10]`.
pub fn run_tau_sweep(cfg: &ExperimentConfig) -> Result<TauSweepStudy, HarnessError> {
    cfg.validate()?;
    if cfg.variant != MassVariant::Stabilized {
        return Err(HarnessError::InvalidConfig(
            "tau sweeps require the stabilized variant".into(),
        ));
    }
    let multipliers = cfg
        .tau_sweep
        .clone()
        .ok_or_else(|| HarnessError::InvalidConfig("tau_sweep list missing".into()))?;
    let report = cfg.num_eigs.max(4).min(6);
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.num_eigs = report;

    let mut rows = Vec::new();
    for &level in &cfg.levels {
        for &mult in &multipliers {
            let (h, _dofs, lambdas) = solve_level(&sweep_cfg, level, mult)?;
            rows.push(TauSweepRow {
                level,
                h,
                multiplier: mult,
                lambdas: lambdas.into_iter().take(4).collect(),
            });
        }
    }

    let mut assertions = Vec::new();
    if cfg.assert_checks {
        let lref = reference_eigenvalues(cfg.domain, cfg.bc, 2)
            .into_iter()
            .find(|&l| l > 0.0)
            .expect("nonzero reference");
        for &level in &cfg.levels {
            let in_range: Vec<f64> = rows
                .iter()
                .filter(|r| r.level == level && (0.1..=10.0).contains(&r.multiplier))
                .map(|r| r.lambdas[0])
                .collect();
            if in_range.len() < 2 {
                continue;
            }
            let min = in_range.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = in_range.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let variation = (max - min) / lref;
            assertions.push(AssertionOutcome {
                name: format!("tau_stability_level_{level}"),
                passed: variation < 0.05,
                detail: format!("lambda_1 relative variation {variation:.3e} over tau in [0.1, 10]"),
            });
        }
    }
    Ok(TauSweepStudy { rows, assertions })
}

/// Writes study records as CSV with the exact column set
/// `level,h,dofs,eig_index,lambda_h,lambda_ref,rel_error`.
pub fn write_csv(records: &[ConvergenceRecord], path: &PathBuf) -> Result<(), HarnessError> {
    let mut out = String::from("level,h,dofs,eig_index,lambda_h,lambda_ref,rel_error\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.level, r.h, r.dofs, r.eig_index, r.lambda_h, r.lambda_ref, r.rel_error
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    config: &'a ExperimentConfig,
    rates: &'a [FittedRate],
    assertions: &'a [AssertionOutcome],
    passed: bool,
}

/// Writes the JSON summary: per-eig_index fitted rates plus assertion
/// outcomes.
pub fn write_json_summary(
    cfg: &ExperimentConfig,
    rates: &[FittedRate],
    assertions: &[AssertionOutcome],
    path: &PathBuf,
) -> Result<(), HarnessError> {
    let passed = assertions.iter().all(|a| a.passed);
    let summary = JsonSummary { config: cfg, rates, assertions, passed };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Mesh statistics helper for the `mesh` subcommand and logs.
pub fn mesh_stats(family: MeshFamily, level: usize, domain: Domain, seed: u64) -> Result<String, HarnessError> {
    let mesh = generate_family(family, level, domain, seed)?;
    let rep = mesh.regularity_report();
    let k1 = dim_poly(1, 1);
    let _ = k1;
    Ok(format!(
        "family={} level={} domain={} cells={} edges={} boundary_edges={} h={:.5} min_edge_ratio={:.4} min_inradius_ratio={:.4} max_vertices={}",
        family.as_str(),
        level,
        domain.as_str(),
        mesh.n_cells(),
        mesh.n_edges(),
        mesh.n_boundary_edges(),
        mesh.h,
        rep.min_edge_ratio,
        rep.min_inradius_ratio,
        rep.max_vertices_per_cell
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fit_rate_examples() {
        let r = fit_rate(&[(0.1, 1e-2), (0.05, 2.5e-3)]).unwrap();
        assert_relative_eq!(r, 2.0, epsilon = 1e-12);
        let r = fit_rate(&[(0.1, 1e-3), (0.05, 1.25e-4)]).unwrap();
        assert_relative_eq!(r, 3.0, epsilon = 1e-12);
        let r = fit_rate(&[(0.1, 5.0), (0.05, 5.0), (0.025, 5.0)]).unwrap();
        assert_relative_eq!(r, 0.0, epsilon = 1e-12);
        assert!(matches!(
            fit_rate(&[(0.1, 0.0), (0.05, 1.0)]),
            Err(HarnessError::NonPositiveData)
        ));
        assert!(matches!(fit_rate(&[(0.1, 1.0)]), Err(HarnessError::NonPositiveData)));
    }

    #[test]
    fn square_dirichlet_references() {
        let pi2 = std::f64::consts::PI.powi(2);
        let refs = reference_eigenvalues(Domain::UnitSquare, BoundaryCondition::Dirichlet, 6);
        let expected = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0];
        for (r, e) in refs.iter().zip(expected) {
            assert_relative_eq!(*r, e * pi2, epsilon = 1e-12);
        }
    }

    #[test]
    fn lshape_references_contain_pi_squared() {
        let refs = reference_eigenvalues(Domain::Lshape, BoundaryCondition::Neumann, 5);
        assert_eq!(refs[0], 0.0);
        assert_relative_eq!(refs[3], std::f64::consts::PI.powi(2), epsilon = 1e-12);
        assert_relative_eq!(refs[4], std::f64::consts::PI.powi(2), epsilon = 1e-12);
        for w in refs.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn richardson_recovers_known_limit() {
        // lambda(h) = 3 + 2 h^{4/3}
        let samples: Vec<(f64, f64)> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h: &f64| (h, 3.0 + 2.0 * h.powf(4.0 / 3.0)))
            .collect();
        let lam = richardson_extrapolate(&samples, 4.0 / 3.0);
        assert_relative_eq!(lam, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(
            Domain::UnitSquare,
            BoundaryCondition::Dirichlet,
            MeshFamily::RandomQuads,
            1,
            MassVariant::Stabilized,
            vec![0, 1],
            4,
            7,
        );
        assert!(cfg.validate().is_ok());
        cfg.levels = vec![1, 1];
        assert!(cfg.validate().is_err());
        cfg.levels = vec![0, 1];
        cfg.num_eigs = 0;
        assert!(cfg.validate().is_err());
    }
}
