//! Mild-equation solver: the discrete stochastic convolution, Picard
//! iteration over replica ensembles, and the deterministic second-moment
//! recursion used as its independent oracle.

use crate::conv::{CausalEngine, KernelRule, KernelTable};
use crate::dalang::existence_gate;
use crate::error::{Result, SpdeError};
use crate::exec::{Workers, CHUNK};
use crate::grid::{Grid, GridSpec};
use crate::levy::LevyModel;
use crate::measure::{admissibility_lebesgue, semigroup_apply, SignedMeasure};
use crate::noise::{noise_field, NoiseField};
use crate::norms::{norm_sq_reduce, NormParams};
use crate::quad::adaptive_gk;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Ensemble storage cap in bytes; replica fields beyond this must be
/// streamed instead of collected.
pub const MAX_ENSEMBLE_BYTES: usize = 3 << 29;

/// Multiplier sigma in the noise term. Tabulated variants interpolate
/// linearly and extend by their boundary values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSpec {
    Linear { lambda: f64 },
    Affine { a: f64, lambda: f64 },
    Abs,
    Tabulated { xs: Vec<f64>, values: Vec<f64>, lip: f64 },
}

impl SigmaSpec {
    pub fn constant(c: f64) -> SigmaSpec {
        SigmaSpec::Affine { a: c, lambda: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaSpec::Linear { lambda } | SigmaSpec::Affine { lambda, .. } => {
                if lambda.is_finite() {
                    Ok(())
                } else {
                    Err(SpdeError::parameter("sigma slope must be finite"))
                }
            }
            SigmaSpec::Abs => Ok(()),
            SigmaSpec::Tabulated { xs, values, lip } => {
                if xs.len() < 2 || xs.len() != values.len() {
                    return Err(SpdeError::parameter(
                        "tabulated sigma needs >= 2 aligned samples",
                    ));
                }
                if !lip.is_finite() || *lip < 0.0 {
                    return Err(SpdeError::parameter("tabulated sigma needs lip >= 0"));
                }
                for pair in xs.windows(2) {
                    if !(pair[1] > pair[0]) {
                        return Err(SpdeError::parameter(
                            "tabulated sigma abscissae must increase strictly",
                        ));
                    }
                }
                // Spot-check of the declared Lipschitz bound on the samples.
                for q in 1..xs.len() {
                    let slope = (values[q] - values[q - 1]) / (xs[q] - xs[q - 1]);
                    if slope.abs() > lip * (1.0 + 1e-9) + 1e-12 {
                        return Err(SpdeError::parameter(
                            "tabulated sigma violates its declared Lipschitz constant",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn lip(&self) -> f64 {
        match self {
            SigmaSpec::Linear { lambda } | SigmaSpec::Affine { lambda, .. } => lambda.abs(),
            SigmaSpec::Abs => 1.0,
            SigmaSpec::Tabulated { lip, .. } => *lip,
        }
    }

    pub fn value_at_zero(&self) -> f64 {
        self.apply(0.0)
    }

    pub fn apply(&self, z: f64) -> f64 {
        match self {
            SigmaSpec::Linear { lambda } => lambda * z,
            SigmaSpec::Affine { a, lambda } => a + lambda * z,
            SigmaSpec::Abs => z.abs(),
            SigmaSpec::Tabulated { xs, values, .. } => {
                if z <= xs[0] {
                    return values[0];
                }
                if z >= xs[xs.len() - 1] {
                    return values[values.len() - 1];
                }
                let q = xs.partition_point(|&x| x <= z);
                let w = (z - xs[q - 1]) / (xs[q] - xs[q - 1]);
                values[q - 1] + w * (values[q] - values[q - 1])
            }
        }
    }

    /// (a, lambda) when sigma is exactly affine; None otherwise.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match *self {
            SigmaSpec::Linear { lambda } => Some((0.0, lambda)),
            SigmaSpec::Affine { a, lambda } => Some((a, lambda)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Provenance {
    Simulated {
        seed: u64,
        model: LevyModel,
        sigma: SigmaSpec,
        mu: SignedMeasure,
        iterations: usize,
    },
    Wave {
        seed: u64,
        kappa: f64,
        sigma: SigmaSpec,
        mu: SignedMeasure,
        nu: SignedMeasure,
        iterations: usize,
    },
    Constructed {
        label: String,
    },
}

/// Replica fields over a shared grid. Invalid (non-finite) entries are
/// rejected at construction.
#[derive(Debug, Clone)]
pub struct FieldEnsemble {
    pub grid: Grid,
    pub replicas: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl FieldEnsemble {
    pub fn from_replicas(
        grid: &Grid,
        replicas: Vec<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<FieldEnsemble> {
        if replicas.is_empty() {
            return Err(SpdeError::parameter("ensemble needs at least one replica"));
        }
        let cells = grid.cells();
        if replicas.len().saturating_mul(cells).saturating_mul(8) > MAX_ENSEMBLE_BYTES {
            return Err(SpdeError::capacity(
                "ensemble exceeds the in-memory cap; stream reductions instead",
            ));
        }
        for rep in &replicas {
            if rep.len() != cells {
                return Err(SpdeError::contract("replica shape does not match the grid"));
            }
            if !rep.iter().all(|v| v.is_finite()) {
                return Err(SpdeError::contract("ensemble contains non-finite values"));
            }
        }
        Ok(FieldEnsemble {
            grid: *grid,
            replicas,
            provenance,
        })
    }

    /// Single-replica ensemble holding a deterministic field.
    pub fn deterministic(grid: &Grid, field: Vec<f64>, label: &str) -> Result<FieldEnsemble> {
        FieldEnsemble::from_replicas(
            grid,
            vec![field],
            Provenance::Constructed {
                label: label.to_string(),
            },
        )
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }

    /// Per-cell mean of |u|^k across replicas.
    pub fn moment_field(&self, k: f64) -> Vec<f64> {
        let cells = self.grid.cells();
        let mut out = vec![0.0; cells];
        for rep in &self.replicas {
            if (k - 2.0).abs() < 1e-14 {
                for (slot, &v) in out.iter_mut().zip(rep) {
                    *slot += v * v;
                }
            } else {
                for (slot, &v) in out.iter_mut().zip(rep) {
                    *slot += v.abs().powf(k);
                }
            }
        }
        let inv = 1.0 / self.replicas.len() as f64;
        for slot in out.iter_mut() {
            *slot *= inv;
        }
        out
    }

    pub fn mean_field(&self) -> Vec<f64> {
        let cells = self.grid.cells();
        let mut out = vec![0.0; cells];
        for rep in &self.replicas {
            for (slot, &v) in out.iter_mut().zip(rep) {
                *slot += v;
            }
        }
        let inv = 1.0 / self.replicas.len() as f64;
        for slot in out.iter_mut() {
            *slot *= inv;
        }
        out
    }
}

/// Deterministic part (P_{t_j} mu)(x_i) over the grid, evaluated through the
/// analytic semigroup; atoms are never gridded as spikes.
pub fn semigroup_field(model: &LevyModel, mu: &SignedMeasure, grid: &Grid) -> Result<Vec<f64>> {
    let mut h = vec![0.0; grid.cells()];
    for j in 0..grid.n_t {
        let t = grid.time_of_row(j);
        for i in 0..grid.n_x {
            h[j * grid.n_x + i] = semigroup_apply(model, t, mu, grid.x_of_col(i))?;
        }
    }
    Ok(h)
}

/// Transition mass escaping the truncated domain by the final time,
/// 1 - p_T([-L, L]); bounds the leakage of the clipped convolution sums.
pub fn domain_leakage(model: &LevyModel, grid: &Grid) -> Result<f64> {
    let t = grid.spec.t_max;
    let l = grid.spec.half_width;
    let inside = adaptive_gk(
        |y| model.transition_density(t, y).unwrap_or(0.0),
        -l,
        l,
        1e-10,
        20_000,
    )?;
    Ok((1.0 - inside.value).max(0.0))
}

/// Walsh-type discrete stochastic convolution of a replica field Z against
/// the tabulated kernel: out[n, i] = sum_{j<n} sum_m K_{n-j}[i-m] Z[j,m] dW[j,m].
pub fn stochastic_convolution(
    table: &KernelTable,
    z: &[f64],
    noise: &NoiseField,
) -> Result<Vec<f64>> {
    let grid = &table.grid;
    if z.len() != grid.cells() {
        return Err(SpdeError::contract("Z field does not match the kernel grid"));
    }
    if noise.grid != *grid {
        return Err(SpdeError::contract("noise grid does not match the kernel grid"));
    }
    let mut g = vec![0.0; grid.cells()];
    for j in 0..grid.n_t {
        let row = noise.row(j);
        for i in 0..grid.n_x {
            g[j * grid.n_x + i] = z[j * grid.n_x + i] * row[i];
        }
    }
    let engine = CausalEngine::new(table);
    let mut out = vec![0.0; grid.cells()];
    engine.convolve_all(&g, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    /// distances[n] = ensemble norm of u^{(n+1)} - u^{(n)}.
    pub distances: Vec<f64>,
    /// ratios[n] = distances[n+1] / distances[n].
    pub ratios: Vec<f64>,
    /// Iteration count after which the distance first dropped below tol.
    pub converged_at: Option<usize>,
    pub iterations: usize,
    pub warning: Option<String>,
    /// Transition mass outside the truncated domain at t = T.
    pub leakage: f64,
}

#[derive(Debug)]
pub struct PicardOutput {
    pub ensemble: FieldEnsemble,
    pub report: ConvergenceReport,
}

/// Run one replica's Picard sweeps to a fixed count, reusing caller scratch.
/// state enters as u^(0) and leaves as u^(sweeps).
fn sweep_replica(
    engine: &CausalEngine,
    h: &[f64],
    noise: &NoiseField,
    sigma: &SigmaSpec,
    sweeps: usize,
    state: &mut [f64],
    g: &mut [f64],
    conv: &mut [f64],
) {
    let grid = &noise.grid;
    for _ in 0..sweeps {
        for j in 0..grid.n_t {
            let row = noise.row(j);
            for i in 0..grid.n_x {
                let q = j * grid.n_x + i;
                g[q] = sigma.apply(state[q]) * row[i];
            }
        }
        engine.convolve_all(g, conv);
        for (q, slot) in state.iter_mut().enumerate() {
            *slot = h[q] + conv[q];
        }
    }
}

/// Fixed-sweep solve of one replica, for streaming reductions that bypass
/// ensemble storage. Affine sigma takes the exact one-pass solution.
pub fn solve_replica(
    engine: &CausalEngine,
    h: &[f64],
    noise: &NoiseField,
    sigma: &SigmaSpec,
    sweeps: usize,
) -> Vec<f64> {
    if let Some((a, lambda)) = sigma.as_affine() {
        return engine.solve_affine(h, noise, a, lambda);
    }
    let cells = h.len();
    let mut state = vec![0.0; cells];
    let mut g = vec![0.0; cells];
    let mut conv = vec![0.0; cells];
    sweep_replica(engine, h, noise, sigma, sweeps, &mut state, &mut g, &mut conv);
    state
}

pub(crate) struct IterationOutcome {
    /// Final iterates, replicas * cells flat.
    pub states: Vec<f64>,
    pub distances: Vec<f64>,
    pub converged_at: Option<usize>,
}

/// Lockstep Picard driver shared by the heat and wave solvers: every replica
/// advances one sweep per round so the stopping rule can evaluate the
/// across-replica moment norm of the iterate difference after each round.
#[allow(clippy::too_many_arguments)]
pub(crate) fn iterate_ensemble(
    engine: &CausalEngine,
    grid: &Grid,
    h: &[f64],
    sigma: &SigmaSpec,
    norm: &NormParams,
    seed: u64,
    replicas: usize,
    tol: f64,
    max_iter: usize,
    workers: Workers,
) -> Result<IterationOutcome> {
    let cells = grid.cells();
    let mut states = vec![0.0; replicas * cells];
    let mut distances: Vec<f64> = Vec::new();
    let mut converged_at = None;
    let pool = workers.pool()?;
    let k = norm.k;
    for n in 0..max_iter {
        let chunk_accs: Result<Vec<Vec<f64>>> = pool.install(|| {
            states
                .par_chunks_mut(CHUNK * cells)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut acc = vec![0.0; cells];
                    let mut g = vec![0.0; cells];
                    let mut conv = vec![0.0; cells];
                    for (slot, state) in chunk.chunks_mut(cells).enumerate() {
                        let r = (c * CHUNK + slot) as u64;
                        let noise = noise_field(grid, seed, r)?;
                        for j in 0..grid.n_t {
                            let row = noise.row(j);
                            for i in 0..grid.n_x {
                                let q = j * grid.n_x + i;
                                g[q] = sigma.apply(state[q]) * row[i];
                            }
                        }
                        engine.convolve_all(&g, &mut conv);
                        if (k - 2.0).abs() < 1e-14 {
                            for q in 0..cells {
                                let next = h[q] + conv[q];
                                let d = next - state[q];
                                acc[q] += d * d;
                                state[q] = next;
                            }
                        } else {
                            for q in 0..cells {
                                let next = h[q] + conv[q];
                                acc[q] += (next - state[q]).abs().powf(k);
                                state[q] = next;
                            }
                        }
                    }
                    Ok(acc)
                })
                .collect()
        });
        let chunk_accs = chunk_accs?;
        let mut mk = vec![0.0; cells];
        for acc in &chunk_accs {
            for (slot, &v) in mk.iter_mut().zip(acc) {
                *slot += v;
            }
        }
        let inv = 1.0 / replicas as f64;
        for slot in mk.iter_mut() {
            *slot *= inv;
        }
        if !mk.iter().all(|v| v.is_finite()) {
            return Err(SpdeError::contract(
                "iterate moment field became non-finite",
            ));
        }
        let (dist_sq, _) = norm_sq_reduce(&mk, grid, norm)?;
        distances.push(dist_sq.sqrt());
        if dist_sq.sqrt() < tol {
            converged_at = Some(n + 1);
            break;
        }
    }
    Ok(IterationOutcome {
        states,
        distances,
        converged_at,
    })
}

pub(crate) fn convergence_report(
    distances: Vec<f64>,
    converged_at: Option<usize>,
    tol: f64,
    leakage: f64,
) -> ConvergenceReport {
    let ratios: Vec<f64> = distances
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect();
    let iterations = distances.len();
    let warning = if converged_at.is_none() {
        Some(format!(
            "distance {:.3e} still above tol {:.3e} after {} iterations",
            distances.last().copied().unwrap_or(f64::NAN),
            tol,
            iterations
        ))
    } else {
        None
    };
    ConvergenceReport {
        distances,
        ratios,
        converged_at,
        iterations,
        warning,
        leakage,
    }
}

pub(crate) fn states_to_replicas(states: Vec<f64>, replicas: usize, cells: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(replicas);
    for r in 0..replicas {
        out.push(states[r * cells..(r + 1) * cells].to_vec());
    }
    out
}

/// Picard iteration of the mild equation u = P_. mu + K (*) (sigma o u) dW
/// over a replica ensemble; each replica keeps one fixed noise realization
/// across sweeps.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    model: &LevyModel,
    sigma: &SigmaSpec,
    mu: &SignedMeasure,
    spec: &GridSpec,
    norm: &NormParams,
    seed: u64,
    replicas: usize,
    tol: f64,
    max_iter: usize,
    rule: KernelRule,
    workers: Workers,
) -> Result<PicardOutput> {
    sigma.validate()?;
    norm.validate()?;
    mu.validate()?;
    let grid = spec.validate()?;
    if replicas == 0 || max_iter == 0 {
        return Err(SpdeError::parameter("need replicas >= 1 and max_iter >= 1"));
    }
    let gate = existence_gate(model, norm.k, sigma.lip(), norm.beta)?;
    if !gate.pass {
        return Err(SpdeError::GateRefused {
            upsilon: gate.upsilon,
            threshold: gate.threshold.unwrap_or(f64::INFINITY),
        });
    }
    let adm = admissibility_lebesgue(mu, model, norm.beta)?;
    if adm.divergent {
        return Err(SpdeError::domain(
            "initial measure fails the admissibility integral for this model",
        ));
    }
    let cells = grid.cells();
    if replicas.saturating_mul(cells).saturating_mul(8) > MAX_ENSEMBLE_BYTES {
        return Err(SpdeError::capacity(
            "replica ensemble exceeds the in-memory cap",
        ));
    }

    let h = semigroup_field(model, mu, &grid)?;
    let table = KernelTable::build(model, &grid, rule)?;
    let engine = CausalEngine::new(&table);
    let leakage = domain_leakage(model, &grid)?;

    let outcome = iterate_ensemble(
        &engine, &grid, &h, sigma, norm, seed, replicas, tol, max_iter, workers,
    )?;
    let report = convergence_report(outcome.distances, outcome.converged_at, tol, leakage);
    let iterations = report.iterations;
    let replica_fields = states_to_replicas(outcome.states, replicas, cells);
    let ensemble = FieldEnsemble::from_replicas(
        &grid,
        replica_fields,
        Provenance::Simulated {
            seed,
            model: *model,
            sigma: sigma.clone(),
            mu: mu.clone(),
            iterations,
        },
    )?;
    Ok(PicardOutput { ensemble, report })
}

/// Deterministic recursion for the second moment of the linear-multiplier
/// solution: f[n,i] = h[n,i]^2 + lambda^2 sum_{j<n} sum_m K_{n-j}[i-m]^2 f[j,m] dt dx.
/// Exact for the discrete model, so it serves as the Monte Carlo oracle.
pub fn second_moment_volterra(
    model: &LevyModel,
    lambda: f64,
    mu: &SignedMeasure,
    spec: &GridSpec,
    rule: KernelRule,
) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SpdeError::parameter("volterra recursion needs lambda >= 0"));
    }
    mu.validate()?;
    let grid = spec.validate()?;
    let h = semigroup_field(model, mu, &grid)?;
    let h_sq: Vec<f64> = h.iter().map(|v| v * v).collect();
    let table = KernelTable::build(model, &grid, rule)?;
    let squared = table.squared();
    let engine = CausalEngine::new(&squared);
    Ok(engine.solve_volterra(&h_sq, lambda * lambda * grid.cell_measure()))
}
