//! Space-time convolution against the transition kernel: tabulated kernel
//! rows per time lag, a spectral engine for the causal convolution
//!   out[r] = sum_{j<r} K_{r-j} (*) G[j],
//! and direct-sum references. Contributions from outside the spatial domain
//! are dropped (truncation boundary); the circular embedding is padded to
//! twice the domain so no wraparound ever aliases in.

use crate::error::{Result, SpdeError};
use crate::grid::Grid;
use crate::levy::LevyModel;
use crate::noise::NoiseField;
use crate::quad::gauss_legendre;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRule {
    /// K_d[o] = p_{d dt}(o dx): kernel sampled at lattice points.
    Node,
    /// K_d[o]^2 = cell average of p^2 over the (dt x dx) cell: transfers the
    /// white-noise variance exactly. Gaussian model only.
    CellRms,
}

/// Tabulated kernel rows for lags d = 1..=n_t, with the real half-spectra of
/// their circular embeddings (real because the rows are even in the offset).
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: Grid,
    pub rule: KernelRule,
    /// rows[d-1][o] = kernel at lag d dt, offset o dx, o = 0..n_x-1.
    rows: Vec<Vec<f64>>,
    /// Flat n_t x (n_x+1): rfft of the circular embedding of each row.
    spec: Vec<f64>,
}

impl KernelTable {
    pub fn build(model: &LevyModel, grid: &Grid, rule: KernelRule) -> Result<KernelTable> {
        model.validate()?;
        let n_x = grid.n_x;
        let dt = grid.dt();
        let dx = grid.dx();
        let mut rows = Vec::with_capacity(grid.n_t);
        match rule {
            KernelRule::Node => {
                for d in 1..=grid.n_t {
                    let t = d as f64 * dt;
                    let mut row = vec![0.0; n_x];
                    for (o, slot) in row.iter_mut().enumerate() {
                        *slot = model.transition_density(t, o as f64 * dx)?;
                    }
                    rows.push(row);
                }
            }
            KernelRule::CellRms => {
                let kappa = match *model {
                    LevyModel::Gaussian { kappa } => kappa,
                    _ => {
                        return Err(SpdeError::parameter(
                            "cell_rms kernel rule requires the gaussian model",
                        ))
                    }
                };
                // p_tau(y)^2 = ||p_tau||^2 N(0, kappa tau)(y), and under
                // tau = dt v^2 the prefactor 2 dt v ||p_tau||^2 is constant:
                //   c0 = 2 dt / sqrt(8 pi kappa dt).
                let c0 = 2.0 * dt / (8.0 * PI * kappa * dt).sqrt();
                let (gl_nodes, gl_weights) = gauss_legendre(24);
                for d in 1..=grid.n_t {
                    let v_lo = ((d - 1) as f64).sqrt();
                    let v_hi = (d as f64).sqrt();
                    let half = 0.5 * (v_hi - v_lo);
                    let mid = 0.5 * (v_hi + v_lo);
                    let mut row = vec![0.0; n_x];
                    for (o, slot) in row.iter_mut().enumerate() {
                        let y_lo = (o as f64 - 0.5) * dx;
                        let y_hi = (o as f64 + 0.5) * dx;
                        let mut integral = 0.0;
                        for (gn, gw) in gl_nodes.iter().zip(&gl_weights) {
                            let v = mid + half * gn;
                            let sd = (kappa * dt).sqrt() * v;
                            let mass = 0.5
                                * (libm::erf(y_hi / (sd * std::f64::consts::SQRT_2))
                                    - libm::erf(y_lo / (sd * std::f64::consts::SQRT_2)));
                            integral += gw * half * c0 * mass;
                        }
                        *slot = (integral.max(0.0) / (dt * dx)).sqrt();
                    }
                    rows.push(row);
                }
            }
        }
        Ok(Self::from_rows(grid, rule, rows))
    }

    /// Build from explicit rows (used by the wave propagator, whose kernel is
    /// an indicator rather than a transition density).
    pub fn from_rows(grid: &Grid, rule: KernelRule, rows: Vec<Vec<f64>>) -> KernelTable {
        assert_eq!(rows.len(), grid.n_t);
        let n_x = grid.n_x;
        let p = 2 * n_x;
        let bins = n_x + 1;
        let fft = FftPlanner::new().plan_fft_forward(p);
        let mut spec = vec![0.0; grid.n_t * bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for (d, row) in rows.iter().enumerate() {
            debug_assert_eq!(row.len(), n_x);
            for slot in buf.iter_mut() {
                *slot = Complex64::new(0.0, 0.0);
            }
            buf[0] = Complex64::new(row[0], 0.0);
            for o in 1..n_x {
                buf[o] = Complex64::new(row[o], 0.0);
                buf[p - o] = Complex64::new(row[o], 0.0);
            }
            fft.process(&mut buf);
            for b in 0..bins {
                // Even real input: spectrum is real.
                spec[d * bins + b] = buf[b].re;
            }
        }
        KernelTable {
            grid: *grid,
            rule,
            rows,
            spec,
        }
    }

    /// Kernel value at lag d dt (d >= 1) and absolute offset o dx; zero
    /// outside the tabulated range.
    #[inline]
    pub fn value(&self, d: usize, o: usize) -> f64 {
        if d == 0 || d > self.rows.len() || o >= self.grid.n_x {
            0.0
        } else {
            self.rows[d - 1][o]
        }
    }

    /// sum over all offsets of K_d[o]^2 dx (both signs of the offset).
    pub fn l2_rowsum(&self, d: usize) -> f64 {
        let row = &self.rows[d - 1];
        let mut s = row[0] * row[0];
        for &v in &row[1..] {
            s += 2.0 * v * v;
        }
        s * self.grid.dx()
    }

    pub fn half_spectrum(&self, d: usize) -> &[f64] {
        let bins = self.grid.n_x + 1;
        &self.spec[(d - 1) * bins..d * bins]
    }

    /// Table whose rows are the squares of these rows; convolving against it
    /// yields second-moment (isometry) sums.
    pub fn squared(&self) -> KernelTable {
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().map(|v| v * v).collect())
            .collect();
        KernelTable::from_rows(&self.grid, self.rule, rows)
    }
}

/// FFT pair for the padded domain, plus scratch layouts shared by the causal
/// loops.
pub struct CausalEngine<'a> {
    table: &'a KernelTable,
    n_x: usize,
    p: usize,
    bins: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl<'a> CausalEngine<'a> {
    pub fn new(table: &'a KernelTable) -> CausalEngine<'a> {
        let n_x = table.grid.n_x;
        let p = 2 * n_x;
        let mut planner = FftPlanner::new();
        CausalEngine {
            table,
            n_x,
            p,
            bins: n_x + 1,
            fft: planner.plan_fft_forward(p),
            ifft: planner.plan_fft_inverse(p),
        }
    }

    fn forward_half(&self, row: &[f64], out: &mut [Complex64], buf: &mut [Complex64]) {
        for (slot, &v) in buf.iter_mut().zip(row.iter()) {
            *slot = Complex64::new(v, 0.0);
        }
        for slot in buf[self.n_x..].iter_mut() {
            *slot = Complex64::new(0.0, 0.0);
        }
        self.fft.process(buf);
        out.copy_from_slice(&buf[..self.bins]);
    }

    fn inverse_half(&self, half: &[Complex64], out_row: &mut [f64], buf: &mut [Complex64]) {
        buf[..self.bins].copy_from_slice(half);
        for b in 1..self.n_x {
            buf[self.p - b] = half[b].conj();
        }
        self.ifft.process(buf);
        let scale = 1.0 / self.p as f64;
        for (slot, v) in out_row.iter_mut().zip(buf.iter()) {
            *slot = v.re * scale;
        }
    }

    /// Causal convolution of integrand rows G (flat n_t x n_x) against the
    /// kernel table: out[r] = sum_{j<r} K_{r-j} (*) G[j]. Row 0 is zero.
    pub fn convolve_all(&self, g: &[f64], out: &mut [f64]) {
        let n_t = self.table.grid.n_t;
        let n_x = self.n_x;
        assert_eq!(g.len(), n_t * n_x);
        assert_eq!(out.len(), n_t * n_x);
        let bins = self.bins;
        let mut ghat = vec![Complex64::new(0.0, 0.0); n_t * bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.p];
        for j in 0..n_t {
            let (head, rest) = ghat.split_at_mut((j + 1) * bins);
            let _ = rest;
            self.forward_half(&g[j * n_x..(j + 1) * n_x], &mut head[j * bins..], &mut buf);
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); bins];
        for r in 0..n_t {
            for slot in acc.iter_mut() {
                *slot = Complex64::new(0.0, 0.0);
            }
            for j in 0..r {
                let k_row = self.table.half_spectrum(r - j);
                let g_row = &ghat[j * bins..(j + 1) * bins];
                for b in 0..bins {
                    acc[b] += g_row[b].scale(k_row[b]);
                }
            }
            self.inverse_half(&acc, &mut out[r * n_x..(r + 1) * n_x], &mut buf);
        }
    }

    /// One-pass solve of the affine mild equation
    ///   u[r] = h[r] + sum_{j<r} K_{r-j} (*) ((a + lambda u[j]) dW[j]).
    /// The discrete system is strictly causal, so this forward sweep IS the
    /// exact fixed point; no iteration is involved.
    pub fn solve_affine(&self, h: &[f64], noise: &NoiseField, a: f64, lambda: f64) -> Vec<f64> {
        let n_t = self.table.grid.n_t;
        let n_x = self.n_x;
        assert_eq!(h.len(), n_t * n_x);
        let bins = self.bins;
        let mut u = vec![0.0; n_t * n_x];
        let mut ghat = vec![Complex64::new(0.0, 0.0); n_t * bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.p];
        let mut acc = vec![Complex64::new(0.0, 0.0); bins];
        let mut g_row = vec![0.0; n_x];
        let mut conv_row = vec![0.0; n_x];
        for r in 0..n_t {
            for slot in acc.iter_mut() {
                *slot = Complex64::new(0.0, 0.0);
            }
            for j in 0..r {
                let k_row = self.table.half_spectrum(r - j);
                let g_hat = &ghat[j * bins..(j + 1) * bins];
                for b in 0..bins {
                    acc[b] += g_hat[b].scale(k_row[b]);
                }
            }
            self.inverse_half(&acc, &mut conv_row, &mut buf);
            let u_row = &mut u[r * n_x..(r + 1) * n_x];
            for i in 0..n_x {
                u_row[i] = h[r * n_x + i] + conv_row[i];
            }
            let w_row = noise.row(r);
            for i in 0..n_x {
                g_row[i] = (a + lambda * u_row[i]) * w_row[i];
            }
            self.forward_half(&g_row, &mut ghat[r * bins..(r + 1) * bins], &mut buf);
        }
        u
    }

    /// Forward sweep of the linear Volterra recursion
    ///   f[r] = source[r] + coeff * sum_{j<r} K_{r-j} (*) f[j].
    /// Strictly causal, so the sweep is the exact solution.
    pub fn solve_volterra(&self, source: &[f64], coeff: f64) -> Vec<f64> {
        let n_t = self.table.grid.n_t;
        let n_x = self.n_x;
        assert_eq!(source.len(), n_t * n_x);
        let bins = self.bins;
        let mut f = vec![0.0; n_t * n_x];
        let mut fhat = vec![Complex64::new(0.0, 0.0); n_t * bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.p];
        let mut acc = vec![Complex64::new(0.0, 0.0); bins];
        let mut conv_row = vec![0.0; n_x];
        for r in 0..n_t {
            for slot in acc.iter_mut() {
                *slot = Complex64::new(0.0, 0.0);
            }
            for j in 0..r {
                let k_row = self.table.half_spectrum(r - j);
                let f_hat = &fhat[j * bins..(j + 1) * bins];
                for b in 0..bins {
                    acc[b] += f_hat[b].scale(k_row[b]);
                }
            }
            self.inverse_half(&acc, &mut conv_row, &mut buf);
            for i in 0..n_x {
                f[r * n_x + i] = source[r * n_x + i] + coeff * conv_row[i];
            }
            self.forward_half(
                &f[r * n_x..(r + 1) * n_x],
                &mut fhat[r * bins..(r + 1) * bins],
                &mut buf,
            );
        }
        f
    }
}

/// Direct-sum reference for the causal convolution; O(n_t^2 n_x^2).
pub fn causal_conv_direct(table: &KernelTable, g: &[f64]) -> Vec<f64> {
    let n_t = table.grid.n_t;
    let n_x = table.grid.n_x;
    assert_eq!(g.len(), n_t * n_x);
    let mut out = vec![0.0; n_t * n_x];
    for r in 0..n_t {
        for j in 0..r {
            let d = r - j;
            for i in 0..n_x {
                let mut s = 0.0;
                for m in 0..n_x {
                    let o = i.abs_diff(m);
                    s += table.value(d, o) * g[j * n_x + m];
                }
                out[r * n_x + i] += s;
            }
        }
    }
    out
}

/// Convolution value at a single probe (row r, column i) by direct sum.
pub fn probe_conv(table: &KernelTable, g: &[f64], r: usize, i: usize) -> f64 {
    let n_x = table.grid.n_x;
    let mut s = 0.0;
    for j in 0..r {
        let d = r - j;
        let g_row = &g[j * n_x..(j + 1) * n_x];
        for (m, &gv) in g_row.iter().enumerate() {
            s += table.value(d, i.abs_diff(m)) * gv;
        }
    }
    s
}
