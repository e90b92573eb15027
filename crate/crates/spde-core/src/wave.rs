//! One-dimensional wave variant. The propagator is the half-indicator of the
//! light cone, Gamma_t(x) = 1/2 on |x| <= kappa t, with L2 mass kappa t / 2,
//! so its resolvent weight has the closed form kappa / (2 beta^2) and the
//! fixed-point machinery runs unchanged with Gamma in place of the heat
//! kernel. Initial data is a pair (mu, nu) of position and velocity measures;
//! the deterministic part is the d'Alembert half-sum, and atomic parts of mu
//! stay atoms (half weight, translated by +-kappa t) instead of being smeared
//! onto the grid.

use serde::{Deserialize, Serialize};

use crate::conv::{CausalEngine, KernelRule, KernelTable};
use crate::dalang::{burkholder_constant, GateReport};
use crate::error::{Result, SpdeError};
use crate::exec::Workers;
use crate::grid::{Grid, GridSpec};
use crate::measure::{DensityTable, SignedMeasure};
use crate::norms::NormParams;
use crate::picard::{
    convergence_report, iterate_ensemble, states_to_replicas, ConvergenceReport, FieldEnsemble,
    Provenance, SigmaSpec, MAX_ENSEMBLE_BYTES,
};
use crate::quad::adaptive_gk;

fn check_wave_params(kappa: f64, beta: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(SpdeError::parameter("wave speed kappa must be finite and > 0"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(SpdeError::parameter("beta must be finite and > 0"));
    }
    Ok(())
}

/// Resolvent weight of the wave propagator,
/// int_0^inf e^{-beta t} ||Gamma_t||_{L2}^2 dt = kappa / (2 beta^2).
/// Computed by quadrature and checked against the closed form before the
/// closed form is returned.
pub fn wave_upsilon(kappa: f64, beta: f64) -> Result<f64> {
    let closed = kappa / (2.0 * beta * beta);
    let quad = wave_upsilon_quadrature(kappa, beta)?;
    if ((quad - closed) / closed).abs() > 1e-9 {
        return Err(SpdeError::tolerance(format!(
            "wave resolvent quadrature {quad} disagrees with closed form {closed}"
        )));
    }
    Ok(closed)
}

/// Raw quadrature value of the wave resolvent weight.
pub fn wave_upsilon_quadrature(kappa: f64, beta: f64) -> Result<f64> {
    check_wave_params(kappa, beta)?;
    let closed = kappa / (2.0 * beta * beta);
    let t_cut = 60.0 / beta;
    let body = adaptive_gk(
        |t| (-beta * t).exp() * 0.5 * kappa * t,
        0.0,
        t_cut,
        1e-12 * closed,
        4096,
    )?;
    // Exact tail of int_{T}^inf e^{-beta t} (kappa t / 2) dt.
    let tail = 0.5 * kappa * (-beta * t_cut).exp() * (t_cut / beta + 1.0 / (beta * beta));
    Ok(body.value + tail)
}

/// Existence gate for the wave equation: pass iff
/// wave_upsilon(kappa, beta) < 1 / (z_k lip_sigma)^2, strict.
pub fn wave_gate(kappa: f64, k: f64, lip_sigma: f64, beta: f64) -> Result<GateReport> {
    if !(lip_sigma >= 0.0) || !lip_sigma.is_finite() {
        return Err(SpdeError::parameter("lip_sigma must be finite and >= 0"));
    }
    let z_k = burkholder_constant(k)?;
    let upsilon = wave_upsilon(kappa, beta)?;
    let threshold = if lip_sigma == 0.0 {
        None
    } else {
        Some(1.0 / (z_k * lip_sigma).powi(2))
    };
    let pass = match threshold {
        None => true,
        Some(th) => upsilon < th,
    };
    Ok(GateReport {
        pass,
        upsilon: Some(upsilon),
        threshold,
        z_k,
        beta,
        k,
        lip_sigma,
    })
}

/// Node-sampled light-cone kernel: rows[d-1][o] = 1/2 when |o dx| <= kappa t_d
/// (cone boundary included), else 0. Requires kappa dt <= dx so the cone grows
/// by at most one cell per step.
pub fn wave_kernel_table(kappa: f64, grid: &Grid) -> Result<KernelTable> {
    check_wave_params(kappa, 1.0)?;
    let dt = grid.dt();
    let dx = grid.dx();
    if kappa * dt > dx * (1.0 + 1e-12) {
        return Err(SpdeError::parameter(format!(
            "wave grid needs kappa dt <= dx, got kappa dt = {} > dx = {}",
            kappa * dt,
            dx
        )));
    }
    let tol = 1e-9 * dx;
    let rows: Vec<Vec<f64>> = (1..=grid.n_t)
        .map(|d| {
            let radius = kappa * d as f64 * dt + tol;
            (0..grid.n_x)
                .map(|o| if o as f64 * dx <= radius { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(KernelTable::from_rows(grid, KernelRule::Node, rows))
}

/// Function part of the d'Alembert deterministic term at (t, x):
/// half-sum of the translated density of mu plus the half window mass of nu,
///   1/2 [rho_mu(x - kappa t) + rho_mu(x + kappa t)] + 1/2 nu([x - kappa t, x + kappa t]).
/// Atoms of mu are excluded here: they stay point masses and are reported as
/// half-weight translates by wave_atom_translates, never as function values.
pub fn wave_deterministic_part(
    mu: &SignedMeasure,
    nu: &SignedMeasure,
    kappa: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    check_wave_params(kappa, 1.0)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(SpdeError::parameter("wave deterministic part needs t > 0"));
    }
    let r = kappa * t;
    let mut v = 0.0;
    if let Some(d) = &mu.density {
        v += 0.5 * (d.eval(x - r) + d.eval(x + r));
    }
    v += 0.5 * nu.interval_mass(x - r, x + r);
    Ok(v)
}

/// Half-weight translate of one atom of mu, tagged with the nearest grid cell
/// and the sub-cell offset so placement error stays reportable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveAtom {
    pub location: f64,
    pub weight: f64,
    /// Nearest column when the atom lies inside the spatial domain.
    pub nearest_col: Option<usize>,
    /// location - x_of_col(nearest_col); 0 when the atom is outside the domain.
    pub cell_offset: f64,
}

/// Atomic part of the d'Alembert term at time t: each atom (a, w) of mu
/// splits into (a - kappa t, w/2) and (a + kappa t, w/2), kept exact.
pub fn wave_atom_translates(
    mu: &SignedMeasure,
    kappa: f64,
    t: f64,
    grid: &Grid,
) -> Vec<WaveAtom> {
    let r = kappa * t;
    let mut out = Vec::new();
    for (a, w) in mu.merged_atoms() {
        for loc in [a - r, a + r] {
            let half = grid.spec.half_width;
            let nearest_col = if loc >= -half && loc <= half {
                let c = ((loc + half) / grid.dx()).round() as isize;
                Some(c.clamp(0, grid.n_x as isize - 1) as usize)
            } else {
                None
            };
            let cell_offset = match nearest_col {
                Some(c) => loc - grid.x_of_col(c),
                None => 0.0,
            };
            out.push(WaveAtom {
                location: loc,
                weight: 0.5 * w,
                nearest_col,
                cell_offset,
            });
        }
    }
    out
}

/// Prefix-integral view of a measure for O(1) window queries; the density
/// part integrates the piecewise linear interpolant exactly.
struct WindowMeasure {
    atoms: Vec<(f64, f64)>,
    table: Option<(DensityTable, Vec<f64>)>,
}

impl WindowMeasure {
    fn new(nu: &SignedMeasure) -> Self {
        let table = nu.density.as_ref().map(|t| {
            let mut prefix = Vec::with_capacity(t.values.len());
            prefix.push(0.0);
            for j in 0..t.values.len() - 1 {
                let last = *prefix.last().unwrap();
                prefix.push(last + 0.5 * (t.values[j] + t.values[j + 1]) * t.dx);
            }
            (t.clone(), prefix)
        });
        WindowMeasure {
            atoms: nu.merged_atoms(),
            table,
        }
    }

    /// Integral of the density part over (-inf, x].
    fn cumulative(&self, x: f64) -> f64 {
        match &self.table {
            None => 0.0,
            Some((t, prefix)) => {
                if x <= t.x0 {
                    return 0.0;
                }
                if x >= t.x_end() {
                    return *prefix.last().unwrap();
                }
                let j = (((x - t.x0) / t.dx) as usize).min(t.values.len() - 2);
                let xl = t.x0 + j as f64 * t.dx;
                prefix[j] + 0.5 * (t.eval(xl) + t.eval(x)) * (x - xl)
            }
        }
    }

    fn window(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return 0.0;
        }
        let atom_part: f64 = self
            .atoms
            .iter()
            .filter(|&&(loc, _)| loc >= a && loc <= b)
            .map(|&(_, w)| w)
            .sum();
        atom_part + self.cumulative(b) - self.cumulative(a)
    }
}

/// Function part of the d'Alembert term sampled on the grid, row j at
/// t = (j+1) dt.
pub fn wave_deterministic_field(
    mu: &SignedMeasure,
    nu: &SignedMeasure,
    kappa: f64,
    grid: &Grid,
) -> Result<Vec<f64>> {
    check_wave_params(kappa, 1.0)?;
    mu.validate()?;
    nu.validate()?;
    let window = WindowMeasure::new(nu);
    let mut h = vec![0.0; grid.cells()];
    for j in 0..grid.n_t {
        let r = kappa * grid.time_of_row(j);
        for i in 0..grid.n_x {
            let x = grid.x_of_col(i);
            let mut v = 0.0;
            if let Some(d) = &mu.density {
                v += 0.5 * (d.eval(x - r) + d.eval(x + r));
            }
            v += 0.5 * window.window(x - r, x + r);
            h[j * grid.n_x + i] = v;
        }
    }
    Ok(h)
}

/// Numerical stand-in for the adapted admissibility integral: the exponential
/// time integral of the squared function part of the d'Alembert term, built
/// from the total variations |mu|, |nu|. Atoms of mu have no finite squared
/// L2 mass, so an atomic mu is flagged instead of integrated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveAdmissibilityReport {
    /// int_0^inf e^{-beta t} || function part (t, .) ||_{L2}^2 dt, truncated.
    pub function_part: f64,
    /// Analytic bound on the truncated time tail.
    pub tail_bound: f64,
    /// True when mu carries atoms: their translated squares are not integrable.
    pub atomic_part_present: bool,
}

fn absolute_part(m: &SignedMeasure) -> SignedMeasure {
    SignedMeasure {
        atoms: m.atoms.iter().map(|&(a, w)| (a, w.abs())).collect(),
        density: m.density.as_ref().map(|t| DensityTable {
            x0: t.x0,
            dx: t.dx,
            values: t.values.iter().map(|v| v.abs()).collect(),
        }),
    }
}

fn support_bound(m: &SignedMeasure) -> f64 {
    let mut s: f64 = 0.0;
    for &(a, _) in &m.atoms {
        s = s.max(a.abs());
    }
    if let Some(t) = &m.density {
        s = s.max(t.x0.abs()).max(t.x_end().abs());
    }
    s
}

pub fn wave_admissibility(
    mu: &SignedMeasure,
    nu: &SignedMeasure,
    kappa: f64,
    beta: f64,
) -> Result<WaveAdmissibilityReport> {
    check_wave_params(kappa, beta)?;
    mu.validate()?;
    nu.validate()?;
    let mu_abs = absolute_part(mu);
    let nu_abs = absolute_part(nu);
    let window = WindowMeasure::new(&nu_abs);
    let s0 = support_bound(&mu_abs).max(support_bound(&nu_abs)) + 1.0;
    let t_cut = (40.0 / beta).max(4.0);
    let n_t = 600;
    let n_x = 1200;
    let dt = t_cut / n_t as f64;
    let mut value = 0.0;
    for jt in 0..=n_t {
        let t = jt as f64 * dt;
        let r = kappa * t;
        let span = s0 + r;
        let dxq = 2.0 * span / n_x as f64;
        let mut slice = 0.0;
        for ix in 0..=n_x {
            let x = -span + ix as f64 * dxq;
            let mut v = 0.0;
            if let Some(d) = &mu_abs.density {
                v += 0.5 * (d.eval(x - r) + d.eval(x + r));
            }
            v += 0.5 * window.window(x - r, x + r);
            let w = if ix == 0 || ix == n_x { 0.5 } else { 1.0 };
            slice += w * v * v * dxq;
        }
        let wt = if jt == 0 || jt == n_t { 0.5 } else { 1.0 };
        value += wt * (-beta * t).exp() * slice * dt;
    }
    // Slice bound a + b t from Cauchy-Schwarz on the half-sum plus the
    // window's linear growth, integrated past the cutoff.
    let rho_sq = mu_abs
        .density
        .as_ref()
        .map(|t| {
            let mut s = 0.0;
            for j in 0..t.values.len() - 1 {
                s += 0.5 * (t.values[j].powi(2) + t.values[j + 1].powi(2)) * t.dx;
            }
            s
        })
        .unwrap_or(0.0);
    let w_half = 0.5 * nu_abs.total_variation();
    let a = 2.0 * rho_sq;
    let b = 2.0 * w_half * w_half * 2.0 * kappa;
    let c = 2.0 * w_half * w_half * 2.0 * s0;
    let tail_bound = (-beta * t_cut).exp()
        * ((a + c + b * t_cut) / beta + b / (beta * beta));
    Ok(WaveAdmissibilityReport {
        function_part: value,
        tail_bound,
        atomic_part_present: mu.has_atoms(),
    })
}

#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub ensemble: FieldEnsemble,
    pub report: ConvergenceReport,
    /// Half-weight translates of mu's atoms, one list per time row.
    pub atoms_by_row: Vec<Vec<WaveAtom>>,
    pub deterministic_norm: WaveAdmissibilityReport,
}

/// Picard iteration of the wave mild equation over a replica ensemble. Same
/// lockstep contract as the heat solver with the light-cone kernel in place
/// of the transition density; mu's atoms ride along exactly and never enter
/// sigma, since a fixed point set has zero measure in the noise integral.
#[allow(clippy::too_many_arguments)]
pub fn wave_picard_solve(
    sigma: &SigmaSpec,
    mu: &SignedMeasure,
    nu: &SignedMeasure,
    kappa: f64,
    spec: &GridSpec,
    norm: &NormParams,
    seed: u64,
    replicas: usize,
    tol: f64,
    max_iter: usize,
    workers: Workers,
) -> Result<WaveSolution> {
    sigma.validate()?;
    norm.validate()?;
    mu.validate()?;
    nu.validate()?;
    let grid = spec.validate()?;
    if replicas == 0 || max_iter == 0 {
        return Err(SpdeError::parameter("need replicas >= 1 and max_iter >= 1"));
    }
    let gate = wave_gate(kappa, norm.k, sigma.lip(), norm.beta)?;
    if !gate.pass {
        return Err(SpdeError::GateRefused {
            upsilon: gate.upsilon,
            threshold: gate.threshold.unwrap_or(f64::INFINITY),
        });
    }
    let cells = grid.cells();
    if replicas.saturating_mul(cells).saturating_mul(8) > MAX_ENSEMBLE_BYTES {
        return Err(SpdeError::capacity(
            "replica ensemble exceeds the in-memory cap",
        ));
    }
    let table = wave_kernel_table(kappa, &grid)?;
    let engine = CausalEngine::new(&table);
    let h = wave_deterministic_field(mu, nu, kappa, &grid)?;
    let deterministic_norm = wave_admissibility(mu, nu, kappa, norm.beta)?;
    // Cone mass of Gamma_T lost to the Dirichlet truncation, as a fraction.
    let cone = kappa * spec.t_max;
    let leakage = ((cone - spec.half_width).max(0.0)) / cone;

    let outcome = iterate_ensemble(
        &engine, &grid, &h, sigma, norm, seed, replicas, tol, max_iter, workers,
    )?;
    let report = convergence_report(outcome.distances, outcome.converged_at, tol, leakage);
    let iterations = report.iterations;
    let atoms_by_row = (0..grid.n_t)
        .map(|j| wave_atom_translates(mu, kappa, grid.time_of_row(j), &grid))
        .collect();
    let replica_fields = states_to_replicas(outcome.states, replicas, cells);
    let ensemble = FieldEnsemble::from_replicas(
        &grid,
        replica_fields,
        Provenance::Wave {
            seed,
            kappa,
            sigma: sigma.clone(),
            mu: mu.clone(),
            nu: nu.clone(),
            iterations,
        },
    )?;
    Ok(WaveSolution {
        ensemble,
        report,
        atoms_by_row,
        deterministic_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::WeightMeasure;
    use crate::norms::TimeRule;

    fn cos_density(half: f64, dx: f64) -> DensityTable {
        let n = (2.0 * half / dx).round() as usize;
        DensityTable {
            x0: -half,
            dx,
            values: (0..=n).map(|j| (-half + j as f64 * dx).cos()).collect(),
        }
    }

    fn wave_norm(beta: f64) -> NormParams {
        let mut p = NormParams::m_variant(beta, WeightMeasure::Lebesgue);
        p.time_rule = TimeRule::RightPoint;
        p
    }

    #[test]
    fn upsilon_quadrature_matches_the_closed_form() {
        assert_eq!(wave_upsilon(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(wave_upsilon(2.0, 2.0).unwrap(), 0.25);
        let quad = wave_upsilon_quadrature(1.0, 1.0).unwrap();
        assert!((quad - 0.5).abs() < 1e-9 * 0.5);
        let mut last = f64::INFINITY;
        for beta in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = wave_upsilon(1.0, beta).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn upsilon_rejects_bad_parameters() {
        assert!(wave_upsilon(0.0, 1.0).is_err());
        assert!(wave_upsilon(1.0, -1.0).is_err());
        assert!(wave_upsilon(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn courant_violation_is_refused() {
        let grid = GridSpec {
            t_max: 1.0,
            dt: 0.125,
            half_width: 2.0,
            dx: 0.0625,
        }
        .validate()
        .unwrap();
        assert!(wave_kernel_table(1.0, &grid).is_err());
        assert!(wave_kernel_table(0.5, &grid).is_ok());
    }

    #[test]
    fn kernel_rows_fill_the_light_cone() {
        let grid = GridSpec {
            t_max: 1.0,
            dt: 0.0625,
            half_width: 2.0,
            dx: 0.0625,
        }
        .validate()
        .unwrap();
        let table = wave_kernel_table(1.0, &grid).unwrap();
        for d in 1..=grid.n_t {
            for o in 0..grid.n_x {
                let expect = if o <= d { 0.5 } else { 0.0 };
                assert_eq!(table.value(d, o), expect, "d={d} o={o}");
            }
            // Node rowsum carries the +dx/4 boundary skew over kappa t_d / 2.
            let expect = 0.25 * (2 * d + 1) as f64 * grid.dx();
            assert!((table.l2_rowsum(d) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn window_part_reproduces_the_indicator() {
        let mu = SignedMeasure::zero();
        let nu = SignedMeasure::delta();
        let t = 0.5;
        for (x, expect) in [(0.0, 0.5), (0.3, 0.5), (-0.5, 0.5), (0.5, 0.5), (0.51, 0.0), (-2.0, 0.0)] {
            let v = wave_deterministic_part(&mu, &nu, 1.0, t, x).unwrap();
            assert_eq!(v, expect, "x={x}");
        }
    }

    #[test]
    fn cosine_density_matches_the_trig_oracle() {
        let mu = SignedMeasure::from_density(cos_density(12.0, 1e-3));
        let nu = SignedMeasure::zero();
        for (t, x) in [(0.3, 0.7), (1.25, -0.9), (2.0, 1.6), (0.05, 0.0)] {
            let v = wave_deterministic_part(&mu, &nu, 1.0, t, x).unwrap();
            assert!(
                (v - x.cos() * t.cos()).abs() < 1e-6,
                "t={t} x={x} v={v}"
            );
        }
    }

    #[test]
    fn point_mass_splits_into_half_weight_translates() {
        let grid = GridSpec {
            t_max: 1.0,
            dt: 0.25,
            half_width: 2.0,
            dx: 0.25,
        }
        .validate()
        .unwrap();
        let mu = SignedMeasure::point_mass(0.5, 2.0);
        let atoms = wave_atom_translates(&mu, 2.0, 0.25, &grid);
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].location, 0.0);
        assert_eq!(atoms[0].weight, 1.0);
        assert_eq!(atoms[0].nearest_col, Some(8));
        assert_eq!(atoms[0].cell_offset, 0.0);
        assert_eq!(atoms[1].location, 1.0);
        assert_eq!(atoms[1].weight, 1.0);
        let far = wave_atom_translates(&mu, 2.0, 10.0, &grid);
        assert_eq!(far[1].nearest_col, None);
    }

    #[test]
    fn dalembert_evolution_is_exact_when_sigma_vanishes() {
        let spec = GridSpec {
            t_max: 1.0,
            dt: 0.0625,
            half_width: 2.0,
            dx: 0.0625,
        };
        let grid = spec.validate().unwrap();
        let mu = SignedMeasure::zero();
        let nu = SignedMeasure::delta();
        let sol = wave_picard_solve(
            &SigmaSpec::constant(0.0),
            &mu,
            &nu,
            1.0,
            &spec,
            &wave_norm(2.0),
            11,
            3,
            1e-12,
            10,
            Workers::new(1).unwrap(),
        )
        .unwrap();
        assert_eq!(sol.report.converged_at, Some(2));
        let h = wave_deterministic_field(&mu, &nu, 1.0, &grid).unwrap();
        for rep in &sol.ensemble.replicas {
            assert_eq!(rep, &h);
        }
    }

    #[test]
    fn finite_speed_is_exact_for_atomic_position_data() {
        let spec = GridSpec {
            t_max: 1.0,
            dt: 0.0625,
            half_width: 2.0,
            dx: 0.0625,
        };
        let grid = spec.validate().unwrap();
        let sol = wave_picard_solve(
            &SigmaSpec::Linear { lambda: 1.0 },
            &SignedMeasure::delta(),
            &SignedMeasure::zero(),
            1.0,
            &spec,
            &wave_norm(2.0),
            7,
            40,
            1e-10,
            12,
            Workers::new(1).unwrap(),
        )
        .unwrap();
        // The grid part of delta initial position is identically zero; the mass
        // rides in the atom track, so every replica stays exactly zero.
        for rep in &sol.ensemble.replicas {
            assert!(rep.iter().all(|&v| v == 0.0));
        }
        let last = sol.atoms_by_row.last().unwrap();
        assert_eq!(last.len(), 2);
        assert_eq!(last[0].location, -1.0);
        assert_eq!(last[1].location, 1.0);
        assert_eq!(last[0].weight, 0.5);
        assert_eq!(sol.report.converged_at, Some(1));
        assert!(grid.n_t > 0);
    }

    #[test]
    fn finite_speed_bounds_the_velocity_cone() {
        let spec = GridSpec {
            t_max: 1.5,
            dt: 0.0625,
            half_width: 3.0,
            dx: 0.0625,
        };
        let grid = spec.validate().unwrap();
        let sol = wave_picard_solve(
            &SigmaSpec::Linear { lambda: 1.0 },
            &SignedMeasure::zero(),
            &SignedMeasure::delta(),
            1.0,
            &spec,
            &wave_norm(2.0),
            19,
            30,
            1e-9,
            12,
            Workers::new(1).unwrap(),
        )
        .unwrap();
        let mut peak: f64 = 0.0;
        for rep in &sol.ensemble.replicas {
            for j in 0..grid.n_t {
                let cone = grid.time_of_row(j) + grid.dx() + 1e-9;
                for i in 0..grid.n_x {
                    let v = rep[j * grid.n_x + i].abs();
                    if grid.x_of_col(i).abs() > cone {
                        // Outside the cone only spectral rounding survives.
                        assert!(v <= 1e-12, "leak {v} at j={j} i={i}");
                    } else {
                        peak = peak.max(v);
                    }
                }
            }
        }
        assert!(peak > 0.4);
    }

    #[test]
    fn contraction_ratio_is_subcritical() {
        let spec = GridSpec {
            t_max: 2.0,
            dt: 0.03125,
            half_width: 4.0,
            dx: 0.03125,
        };
        let sol = wave_picard_solve(
            &SigmaSpec::Linear { lambda: 1.0 },
            &SignedMeasure::zero(),
            &SignedMeasure::delta(),
            1.0,
            &spec,
            &wave_norm(2.0),
            23,
            200,
            1e-12,
            6,
            Workers::new(1).unwrap(),
        )
        .unwrap();
        // sqrt(wave_upsilon(1, 2)) = sqrt(1/8) ~ 0.354 plus slack.
        for (n, r) in sol.report.ratios.iter().enumerate().skip(1) {
            assert!(*r <= 0.46, "ratio[{n}] = {r}");
        }
        assert!(sol.report.ratios.len() >= 3);
    }

    #[test]
    fn ensemble_mean_matches_the_deterministic_part() {
        let spec = GridSpec {
            t_max: 1.0,
            dt: 0.0625,
            half_width: 2.0,
            dx: 0.0625,
        };
        let grid = spec.validate().unwrap();
        let replicas = 400;
        let sol = wave_picard_solve(
            &SigmaSpec::Abs,
            &SignedMeasure::zero(),
            &SignedMeasure::delta(),
            1.0,
            &spec,
            &wave_norm(2.0),
            41,
            replicas,
            1e-9,
            12,
            Workers::new(1).unwrap(),
        )
        .unwrap();
        let h = wave_deterministic_field(
            &SignedMeasure::zero(),
            &SignedMeasure::delta(),
            1.0,
            &grid,
        )
        .unwrap();
        let mean = sol.ensemble.mean_field();
        for (j, i) in [(3, 32), (9, 40), (15, 32), (15, 50), (12, 20)] {
            let q = j * grid.n_x + i;
            let sd = {
                let m = mean[q];
                let var: f64 = sol
                    .ensemble
                    .replicas
                    .iter()
                    .map(|r| (r[q] - m).powi(2))
                    .sum::<f64>()
                    / (replicas - 1) as f64;
                (var / replicas as f64).sqrt()
            };
            assert!(
                (mean[q] - h[q]).abs() <= 3.5 * sd + 1e-12,
                "probe ({j},{i}): mean {} vs h {} sd {sd}",
                mean[q],
                h[q]
            );
        }
    }

    #[test]
    fn supercritical_lipschitz_is_refused() {
        let spec = GridSpec {
            t_max: 1.0,
            dt: 0.0625,
            half_width: 2.0,
            dx: 0.0625,
        };
        let err = wave_picard_solve(
            &SigmaSpec::Linear { lambda: 3.0 },
            &SignedMeasure::zero(),
            &SignedMeasure::delta(),
            1.0,
            &spec,
            &wave_norm(1.0),
            1,
            4,
            1e-9,
            4,
            Workers::new(1).unwrap(),
        )
        .unwrap_err();
        match err {
            SpdeError::GateRefused { upsilon, threshold } => {
                assert_eq!(upsilon, Some(0.5));
                assert!((threshold - 1.0 / 9.0).abs() < 1e-12);
            }
            other => panic!("expected gate refusal, got {other:?}"),
        }
    }

    #[test]
    fn admissibility_reports_the_window_integral_and_flags_atoms() {
        let report = wave_admissibility(
            &SignedMeasure::zero(),
            &SignedMeasure::delta(),
            1.0,
            2.0,
        )
        .unwrap();
        // Squared half-window of a point mass has L2 mass kappa t / 2, so the
        // integral equals the wave resolvent weight.
        assert!(!report.atomic_part_present);
        assert!((report.function_part - 0.125).abs() < 0.002);
        assert!(report.tail_bound < 1e-10);

        let flagged = wave_admissibility(
            &SignedMeasure::delta(),
            &SignedMeasure::zero(),
            1.0,
            2.0,
        )
        .unwrap();
        assert!(flagged.atomic_part_present);
        assert_eq!(flagged.function_part, 0.0);
    }
}
