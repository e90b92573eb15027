//! Moment-norm estimation over ensembles and the verification checks built
//! on it: the convolution norm inequality, Lipschitz composition, the
//! deterministic-plus-noise orthogonality identity, and the linear-multiplier
//! fixed-point experiment.

use crate::conv::{CausalEngine, KernelRule, KernelTable};
use crate::dalang::{burkholder_constant, upsilon, Upsilon};
use crate::error::{Result, SpdeError};
use crate::exec::{run_replicas, Workers, CHUNK};
use crate::grid::{Grid, GridSpec};
use crate::levy::LevyModel;
use crate::measure::{SignedMeasure, WeightMeasure};
use crate::noise::{mix, noise_field};
use crate::picard::{domain_leakage, semigroup_field, solve_replica, FieldEnsemble};
use crate::picard::{second_moment_volterra, SigmaSpec};
use serde::{Deserialize, Serialize};

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Quadrature rule for the exponentially discounted time sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRule {
    /// Weight dt at t_j = (j+1) dt; the plain rectangle rule.
    RightPoint,
    /// Rectangle rule with the first cell reweighted (2.5 dt, trailing cell
    /// dt/2); exact on the leading C/sqrt(t) singularity that point-mass
    /// initial data induces in the time integrand.
    SingularFirstCell,
}

/// Parameters of the moment norm: k-th moments, e^{-beta t} time discount,
/// eta-weighted space integral, supremum over lattice shifts up to
/// shift_half_width, and a truncation horizon for the time sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub k: f64,
    pub beta: f64,
    pub eta: WeightMeasure,
    pub shift_half_width: f64,
    /// Truncation of the time sum; None uses the full grid window.
    pub time_horizon: Option<f64>,
    pub time_rule: TimeRule,
}

impl NormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 2.0) || !self.k.is_finite() {
            return Err(SpdeError::parameter("norm order k must be >= 2"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(SpdeError::parameter("norm discount beta must be > 0"));
        }
        if !(self.shift_half_width >= 0.0) {
            return Err(SpdeError::parameter("shift half-width must be >= 0"));
        }
        if let Some(t) = self.time_horizon {
            if !(t > 0.0) {
                return Err(SpdeError::parameter("time horizon must be > 0"));
            }
        }
        self.eta.validate()
    }

    /// Parameters of the no-shift second-moment norm variant.
    pub fn m_variant(beta: f64, eta: WeightMeasure) -> NormParams {
        NormParams {
            k: 2.0,
            beta,
            eta,
            shift_half_width: 0.0,
            time_horizon: None,
            time_rule: TimeRule::RightPoint,
        }
    }
}

pub(crate) fn time_weights(rule: TimeRule, n_rows: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n_rows];
    if rule == TimeRule::SingularFirstCell && n_rows >= 2 {
        w[0] = 2.5 * dt;
        w[n_rows - 1] = 0.5 * dt;
    }
    w
}

/// Reduce a per-cell moment field m_k (mean of |v|^k across replicas) to the
/// squared norm: time-discounted sum over rows of the shift-supremum of the
/// eta-weighted spatial sum of m_k^{2/k}. Returns (norm^2, tail bound on the
/// neglected time integral past the horizon).
pub(crate) fn norm_sq_reduce(mk: &[f64], grid: &Grid, p: &NormParams) -> Result<(f64, f64)> {
    p.validate()?;
    if mk.len() != grid.cells() {
        return Err(SpdeError::contract("moment field does not match the grid"));
    }
    let n_x = grid.n_x;
    let horizon = p.time_horizon.unwrap_or(f64::INFINITY);
    let mut n_rows = 0;
    while n_rows < grid.n_t && grid.time_of_row(n_rows) <= horizon + 1e-12 {
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(SpdeError::parameter("time horizon excludes every grid row"));
    }
    let weights = time_weights(p.time_rule, n_rows, grid.dt());
    let eta_w: Vec<f64> = (0..n_x)
        .map(|i| p.eta.density_at(grid.x_of_col(i)) * grid.dx())
        .collect();
    let s_max = (p.shift_half_width / grid.dx() + 1e-9).floor() as isize;
    let two_over_k = 2.0 / p.k;
    let exact_square = (p.k - 2.0).abs() < 1e-14;

    let mut norm_sq = 0.0;
    let mut max_sup = 0.0f64;
    let mut row_pow = vec![0.0; n_x];
    for n in 0..n_rows {
        let row = &mk[n * n_x..(n + 1) * n_x];
        if exact_square {
            row_pow.copy_from_slice(row);
        } else {
            for (slot, &v) in row_pow.iter_mut().zip(row) {
                *slot = v.powf(two_over_k);
            }
        }
        let mut sup = 0.0f64;
        for s in -s_max..=s_max {
            let mut sum = 0.0;
            for (i, &w) in eta_w.iter().enumerate() {
                let src = i as isize - s;
                if src >= 0 && (src as usize) < n_x {
                    sum += w * row_pow[src as usize];
                }
            }
            sup = sup.max(sum);
        }
        max_sup = max_sup.max(sup);
        norm_sq += weights[n] * (-p.beta * grid.time_of_row(n)).exp() * sup;
    }
    let t_used = grid.time_of_row(n_rows - 1);
    let tail_sq = max_sup * (-p.beta * t_used).exp() / p.beta;
    Ok((norm_sq, tail_sq))
}

/// Norm point estimate with a bound on the truncated time tail and a
/// bootstrap standard error (None when the ensemble has a single replica).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Bound on the time-tail contribution to the squared norm.
    pub tail_sq_bound: f64,
    pub std_error: Option<f64>,
}

/// Per-cell |v|^k sums grouped into replica blocks, for bootstrap resampling.
struct BlockMoments {
    block_sums: Vec<f64>,
    n_blocks: usize,
    cells: usize,
    replicas: usize,
}

fn block_moments(ens: &FieldEnsemble, k: f64) -> Result<BlockMoments> {
    let cells = ens.grid.cells();
    let replicas = ens.replica_count();
    let block = if replicas <= 256 { 1 } else { CHUNK };
    let n_blocks = replicas.div_ceil(block);
    let mut sums = vec![0.0; n_blocks * cells];
    let exact_square = (k - 2.0).abs() < 1e-14;
    for (r, rep) in ens.replicas.iter().enumerate() {
        let dst = &mut sums[(r / block) * cells..(r / block + 1) * cells];
        if exact_square {
            for (slot, &v) in dst.iter_mut().zip(rep) {
                *slot += v * v;
            }
        } else {
            for (slot, &v) in dst.iter_mut().zip(rep) {
                *slot += v.abs().powf(k);
            }
        }
    }
    if !sums.iter().all(|v| v.is_finite()) {
        return Err(SpdeError::contract(
            "k-th moment estimate is non-finite; invalid ensemble",
        ));
    }
    Ok(BlockMoments {
        block_sums: sums,
        n_blocks,
        cells,
        replicas,
    })
}

impl BlockMoments {
    fn mean_field(&self) -> Vec<f64> {
        let mut mk = vec![0.0; self.cells];
        for b in 0..self.n_blocks {
            for (slot, &v) in mk.iter_mut().zip(&self.block_sums[b * self.cells..]) {
                *slot += v;
            }
        }
        let inv = 1.0 / self.replicas as f64;
        for slot in mk.iter_mut() {
            *slot *= inv;
        }
        mk
    }

    /// Mean field under a block resample drawn from the counter RNG.
    fn resampled_field(&self, seed: u64, draw: u64) -> Vec<f64> {
        let mut mk = vec![0.0; self.cells];
        for t in 0..self.n_blocks {
            let b = (mix(seed ^ mix(draw.wrapping_add(0x9e37)) ^ (t as u64).wrapping_mul(0x632b))
                % self.n_blocks as u64) as usize;
            for (slot, &v) in mk.iter_mut().zip(&self.block_sums[b * self.cells..]) {
                *slot += v;
            }
        }
        let inv = 1.0 / self.replicas as f64;
        for slot in mk.iter_mut() {
            *slot *= inv;
        }
        mk
    }
}

/// Estimate the k-th moment norm of an ensemble: the time-discounted,
/// shift-supremum, eta-weighted norm of the empirical k-th moments.
pub fn norm_estimate(ens: &FieldEnsemble, p: &NormParams) -> Result<NormEstimate> {
    let blocks = block_moments(ens, p.k)?;
    let (norm_sq, tail_sq) = norm_sq_reduce(&blocks.mean_field(), &ens.grid, p)?;
    let std_error = if ens.replica_count() >= 8 {
        let mut vals = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for draw in 0..BOOTSTRAP_RESAMPLES {
            let mk = blocks.resampled_field(0x5eed_b007, draw as u64);
            let (v, _) = norm_sq_reduce(&mk, &ens.grid, p)?;
            vals.push(v.sqrt());
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        Some(var.sqrt())
    } else {
        None
    };
    Ok(NormEstimate {
        value: norm_sq.sqrt(),
        tail_sq_bound: tail_sq,
        std_error,
    })
}

/// The no-shift k=2 norm variant.
pub fn m_norm_estimate(
    ens: &FieldEnsemble,
    beta: f64,
    eta: WeightMeasure,
) -> Result<NormEstimate> {
    norm_estimate(ens, &NormParams::m_variant(beta, eta))
}

/// Replica-paired difference of two ensembles; the norm of the result is the
/// modification distance. Replicas must align one-to-one.
pub fn ensemble_diff(a: &FieldEnsemble, b: &FieldEnsemble) -> Result<FieldEnsemble> {
    if a.grid != b.grid {
        return Err(SpdeError::contract("ensembles live on different grids"));
    }
    if a.replica_count() != b.replica_count() {
        return Err(SpdeError::contract("ensembles have mismatched replicas"));
    }
    let replicas = a
        .replicas
        .iter()
        .zip(&b.replicas)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect();
    FieldEnsemble::from_replicas(
        &a.grid,
        replicas,
        crate::picard::Provenance::Constructed {
            label: "difference".into(),
        },
    )
}

/// Exact second-moment field of the stochastic convolution of a
/// deterministic Z: E conv[n,i]^2 = sum_{j<n} sum_m K_{n-j}[i-m]^2 Z[j,m]^2 dt dx.
pub fn isometry_second_moment(table: &KernelTable, z: &[f64]) -> Vec<f64> {
    let grid = &table.grid;
    assert_eq!(z.len(), grid.cells());
    let g: Vec<f64> = z.iter().map(|v| v * v * grid.cell_measure()).collect();
    let squared = table.squared();
    let engine = CausalEngine::new(&squared);
    let mut out = vec![0.0; grid.cells()];
    engine.convolve_all(&g, &mut out);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Relative slack applied to rhs before comparing.
    pub slack: f64,
    pub pass: bool,
    pub lhs_std_error: Option<f64>,
    pub rhs_std_error: Option<f64>,
}

/// Convolution norm inequality: N(K (*) Z dW) <= z_k sqrt(Upsilon(beta)) N(Z),
/// checked by simulating the convolution ensemble. A single-replica Z is
/// broadcast across noise replicas; otherwise replica counts must match.
#[allow(clippy::too_many_arguments)]
pub fn young_check(
    model: &LevyModel,
    rule: KernelRule,
    z: &FieldEnsemble,
    p: &NormParams,
    seed: u64,
    replicas: usize,
    workers: Workers,
) -> Result<InequalityReport> {
    p.validate()?;
    if replicas == 0 {
        return Err(SpdeError::parameter("need at least one noise replica"));
    }
    if z.replica_count() != 1 && z.replica_count() != replicas {
        return Err(SpdeError::contract(
            "Z ensemble must hold one field or one per noise replica",
        ));
    }
    let grid = z.grid;
    let ups = match upsilon(model, p.beta)? {
        Upsilon::Finite(v) => v,
        Upsilon::Divergent => {
            return Err(SpdeError::domain(
                "convolution bound is void: the resolvent integral diverges",
            ))
        }
    };
    let z_k = burkholder_constant(p.k)?;
    let table = KernelTable::build(model, &grid, rule)?;
    let engine = CausalEngine::new(&table);

    let conv_replicas: Vec<Vec<f64>> = crate::exec::map_replicas(replicas, workers, |r| {
        let noise = noise_field(&grid, seed, r)?;
        let z_field = if z.replica_count() == 1 {
            &z.replicas[0]
        } else {
            &z.replicas[r as usize]
        };
        let mut g = vec![0.0; grid.cells()];
        for j in 0..grid.n_t {
            let row = noise.row(j);
            for i in 0..grid.n_x {
                g[j * grid.n_x + i] = z_field[j * grid.n_x + i] * row[i];
            }
        }
        let mut out = vec![0.0; grid.cells()];
        engine.convolve_all(&g, &mut out);
        Ok(out)
    })?;
    let conv_ens = FieldEnsemble::from_replicas(
        &grid,
        conv_replicas,
        crate::picard::Provenance::Constructed {
            label: "stochastic convolution".into(),
        },
    )?;

    let lhs_est = norm_estimate(&conv_ens, p)?;
    let rhs_est = norm_estimate(z, p)?;
    let rhs = z_k * ups.sqrt() * rhs_est.value;
    let stat = 3.0
        * (lhs_est.std_error.unwrap_or(0.0)
            + z_k * ups.sqrt() * rhs_est.std_error.unwrap_or(0.0));
    let slack = 0.05 + if rhs > 0.0 { stat / rhs } else { 0.0 };
    let pass = lhs_est.value <= rhs * (1.0 + slack) + 1e-12;
    Ok(InequalityReport {
        lhs: lhs_est.value,
        rhs,
        slack,
        pass,
        lhs_std_error: lhs_est.std_error,
        rhs_std_error: rhs_est.std_error,
    })
}

/// Composition bound: N(sigma o Z - sigma o Z*) <= lip N(Z - Z*) on shared
/// replicas.
pub fn lipschitz_check(
    z: &FieldEnsemble,
    z_star: &FieldEnsemble,
    sigma: &SigmaSpec,
    p: &NormParams,
) -> Result<InequalityReport> {
    sigma.validate()?;
    let map_ens = |ens: &FieldEnsemble| -> Result<FieldEnsemble> {
        let replicas = ens
            .replicas
            .iter()
            .map(|rep| rep.iter().map(|&v| sigma.apply(v)).collect())
            .collect();
        FieldEnsemble::from_replicas(
            &ens.grid,
            replicas,
            crate::picard::Provenance::Constructed {
                label: "composed".into(),
            },
        )
    };
    let lhs_ens = ensemble_diff(&map_ens(z)?, &map_ens(z_star)?)?;
    let rhs_ens = ensemble_diff(z, z_star)?;
    let lhs_est = norm_estimate(&lhs_ens, p)?;
    let rhs_est = norm_estimate(&rhs_ens, p)?;
    let lip = sigma.lip();
    let rhs = lip * rhs_est.value;
    let stat =
        3.0 * (lhs_est.std_error.unwrap_or(0.0) + lip * rhs_est.std_error.unwrap_or(0.0));
    let slack = if rhs > 0.0 { stat / rhs } else { 0.0 };
    let pass = lhs_est.value <= rhs * (1.0 + slack) + 1e-12;
    Ok(InequalityReport {
        lhs: lhs_est.value,
        rhs,
        slack,
        pass,
        lhs_std_error: lhs_est.std_error,
        rhs_std_error: rhs_est.std_error,
    })
}

/// Streaming per-replica squared-M statistics of a solved field and of its
/// noise part u - h; returns per-replica sums folded in chunk order.
struct MSqStream {
    /// (S_u, S_conv) pairs: squared-M contributions of u and of u - h.
    pairs: Vec<(f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn m_sq_stream(
    model: &LevyModel,
    rule: KernelRule,
    sigma: &SigmaSpec,
    mu: &SignedMeasure,
    grid: &Grid,
    beta: f64,
    eta: WeightMeasure,
    time_rule: TimeRule,
    seed: u64,
    replicas: usize,
    sweeps: usize,
    workers: Workers,
) -> Result<MSqStream> {
    let h = semigroup_field(model, mu, grid)?;
    let table = KernelTable::build(model, grid, rule)?;
    let engine = CausalEngine::new(&table);
    let weights = time_weights(time_rule, grid.n_t, grid.dt());
    let row_w: Vec<f64> = (0..grid.n_t)
        .map(|n| weights[n] * (-beta * grid.time_of_row(n)).exp())
        .collect();
    let eta_w: Vec<f64> = (0..grid.n_x)
        .map(|i| eta.density_at(grid.x_of_col(i)) * grid.dx())
        .collect();

    let chunks = run_replicas(
        replicas,
        workers,
        |r| {
            let noise = noise_field(grid, seed, r)?;
            let u = solve_replica(&engine, &h, &noise, sigma, sweeps);
            let mut s_u = 0.0;
            let mut s_conv = 0.0;
            for n in 0..grid.n_t {
                let mut row_u = 0.0;
                let mut row_c = 0.0;
                for i in 0..grid.n_x {
                    let q = n * grid.n_x + i;
                    row_u += eta_w[i] * u[q] * u[q];
                    let c = u[q] - h[q];
                    row_c += eta_w[i] * c * c;
                }
                s_u += row_w[n] * row_u;
                s_conv += row_w[n] * row_c;
            }
            Ok((s_u, s_conv))
        },
        Vec::new,
        |acc: &mut Vec<(f64, f64)>, pair| acc.push(pair),
    )?;
    Ok(MSqStream {
        pairs: chunks.into_iter().flatten().collect(),
    })
}

fn mean_and_stderr(vals: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = vals.clone().sum::<f64>() / n as f64;
    let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalityReport {
    /// Squared M norm of the solution ensemble.
    pub m_sq_solution: f64,
    /// Squared M norm of the deterministic semigroup part.
    pub m_sq_deterministic: f64,
    /// Squared M norm of the noise part u - P mu.
    pub m_sq_noise: f64,
    pub residual: f64,
    pub residual_std_error: f64,
    pub relative_gap: f64,
    pub pass: bool,
}

/// Orthogonal decomposition of the squared M norm: because the noise part is
/// centered, M^2(u) = M^2(P mu) + M^2(u - P mu) holds exactly in expectation
/// on the discrete model; checked at Monte Carlo precision.
#[allow(clippy::too_many_arguments)]
pub fn orthogonality_check(
    model: &LevyModel,
    rule: KernelRule,
    sigma: &SigmaSpec,
    mu: &SignedMeasure,
    spec: &GridSpec,
    beta: f64,
    eta: WeightMeasure,
    seed: u64,
    replicas: usize,
    sweeps: usize,
    workers: Workers,
) -> Result<OrthogonalityReport> {
    sigma.validate()?;
    mu.validate()?;
    let grid = spec.validate()?;
    if replicas == 0 {
        return Err(SpdeError::parameter("need at least one replica"));
    }
    let stream = m_sq_stream(
        model,
        rule,
        sigma,
        mu,
        &grid,
        beta,
        eta,
        TimeRule::RightPoint,
        seed,
        replicas,
        sweeps,
        workers,
    )?;
    let h = semigroup_field(model, mu, &grid)?;
    let h_sq_field: Vec<f64> = h.iter().map(|v| v * v).collect();
    let weights = time_weights(TimeRule::RightPoint, grid.n_t, grid.dt());
    let eta_w: Vec<f64> = (0..grid.n_x)
        .map(|i| eta.density_at(grid.x_of_col(i)) * grid.dx())
        .collect();
    let mut m_sq_det = 0.0;
    for n in 0..grid.n_t {
        let mut row = 0.0;
        for i in 0..grid.n_x {
            row += eta_w[i] * h_sq_field[n * grid.n_x + i];
        }
        m_sq_det += weights[n] * (-beta * grid.time_of_row(n)).exp() * row;
    }

    let n = stream.pairs.len();
    let (m_sq_u, _) = mean_and_stderr(stream.pairs.iter().map(|p| p.0), n);
    let (m_sq_c, _) = mean_and_stderr(stream.pairs.iter().map(|p| p.1), n);
    // Per-replica residual D_r = S_u - S_conv - M^2(h) has mean 0 under the
    // identity; its spread gives the test scale.
    let (residual, res_stderr) =
        mean_and_stderr(stream.pairs.iter().map(|p| p.0 - p.1 - m_sq_det), n);
    let scale = m_sq_u.abs().max(1e-300);
    let pass = residual.abs() <= 4.0 * res_stderr + 1e-12 * scale;
    Ok(OrthogonalityReport {
        m_sq_solution: m_sq_u,
        m_sq_deterministic: m_sq_det,
        m_sq_noise: m_sq_c,
        residual,
        residual_std_error: res_stderr,
        relative_gap: residual.abs() / scale,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AndersonReport {
    /// Monte Carlo estimate of the squared M norm of the solution.
    pub mc_value: f64,
    pub mc_std_error: f64,
    /// Deterministic second-moment recursion pushed through the same norm.
    pub volterra_value: f64,
    /// Continuum fixed point Upsilon / (1 - lambda^2 Upsilon).
    pub target: f64,
    pub upsilon: f64,
    pub mc_rel_err: f64,
    pub volterra_rel_err: f64,
    /// |mc - volterra| within 4 Monte Carlo standard errors.
    pub estimators_agree: bool,
    pub leakage: f64,
    /// Per-replica squared-M contributions in replica order.
    pub replica_values: Vec<f64>,
}

/// Linear-multiplier fixed point: with sigma(u) = lambda u and a point mass
/// at the origin, the Lebesgue-weighted squared M norm of the solution equals
/// Upsilon / (1 - lambda^2 Upsilon). Estimated two independent ways: Monte
/// Carlo over exact forward solves, and the deterministic second-moment
/// recursion. Both use the singular-aware time rule; the kernel tabulation is
/// cell-rms so the white-noise variance transfer is exact per cell.
#[allow(clippy::too_many_arguments)]
pub fn anderson_experiment(
    model: &LevyModel,
    lambda: f64,
    mu: &SignedMeasure,
    spec: &GridSpec,
    beta: f64,
    seed: u64,
    replicas: usize,
    workers: Workers,
) -> Result<AndersonReport> {
    let grid = spec.validate()?;
    if replicas == 0 {
        return Err(SpdeError::parameter("need at least one replica"));
    }
    let ups = match upsilon(model, beta)? {
        Upsilon::Finite(v) => v,
        Upsilon::Divergent => {
            return Err(SpdeError::domain("the resolvent integral diverges"))
        }
    };
    let denom = 1.0 - lambda * lambda * ups;
    if denom <= 0.0 {
        return Err(SpdeError::GateRefused {
            upsilon: Some(ups),
            threshold: 1.0 / (lambda * lambda),
        });
    }
    let target = ups / denom;

    let rule = match model {
        LevyModel::Gaussian { .. } => KernelRule::CellRms,
        _ => KernelRule::Node,
    };
    let sigma = SigmaSpec::Linear { lambda };
    let stream = m_sq_stream(
        model,
        rule,
        &sigma,
        mu,
        &grid,
        beta,
        WeightMeasure::Lebesgue,
        TimeRule::SingularFirstCell,
        seed,
        replicas,
        1,
        workers,
    )?;
    let n = stream.pairs.len();
    let (mc_value, mc_std_error) = mean_and_stderr(stream.pairs.iter().map(|p| p.0), n);

    let f = second_moment_volterra(model, lambda, mu, spec, rule)?;
    let weights = time_weights(TimeRule::SingularFirstCell, grid.n_t, grid.dt());
    let mut volterra_value = 0.0;
    for row in 0..grid.n_t {
        let mut s = 0.0;
        for i in 0..grid.n_x {
            s += f[row * grid.n_x + i];
        }
        volterra_value += weights[row] * (-beta * grid.time_of_row(row)).exp() * s * grid.dx();
    }

    let leakage = domain_leakage(model, &grid)?;
    Ok(AndersonReport {
        mc_value,
        mc_std_error,
        volterra_value,
        target,
        upsilon: ups,
        mc_rel_err: (mc_value - target).abs() / target,
        volterra_rel_err: (volterra_value - target).abs() / target,
        estimators_agree: (mc_value - volterra_value).abs() <= 4.0 * mc_std_error,
        leakage,
        replica_values: stream.pairs.iter().map(|p| p.0).collect(),
    })
}
