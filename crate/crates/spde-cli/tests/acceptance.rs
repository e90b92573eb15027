//! Acceptance gate for the workspace: ten checks covering closed-form
//! resolvents, the existence gate, discrete isometry, solver identities,
//! contraction rates, the Anderson fixed point, the inequality verifiers,
//! the wave variant, and bit-level determinism across worker counts.
//!
//! Run with `--nocapture` to see one PASS/FAIL line per criterion.

use std::fs;
use std::process::Command;
use std::time::Instant;

use spde_core::conv::{probe_conv, KernelRule, KernelTable};
use spde_core::dalang::{min_beta, upsilon, Upsilon};
use spde_core::exec::Workers;
use spde_core::grid::GridSpec;
use spde_core::levy::LevyModel;
use spde_core::measure::{DensityTable, SignedMeasure, WeightMeasure};
use spde_core::noise::{noise_field, standard_normal};
use spde_core::norms::{
    anderson_experiment, isometry_second_moment, lipschitz_check, young_check, NormParams,
    TimeRule,
};
use spde_core::picard::{picard_solve, FieldEnsemble, SigmaSpec};
use spde_core::wave::{
    wave_deterministic_part, wave_picard_solve, wave_upsilon, wave_upsilon_quadrature,
};

fn workers() -> Workers {
    Workers::new(1).unwrap()
}

fn gaussian() -> LevyModel {
    LevyModel::Gaussian { kappa: 1.0 }
}

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} [{n}/10] {name}: {detail}");
    assert!(pass, "[{n}/10] {name}: {detail}");
}

fn norm_k(k: f64, beta: f64) -> NormParams {
    NormParams {
        k,
        beta,
        eta: WeightMeasure::Lebesgue,
        shift_half_width: 0.0,
        time_horizon: None,
        time_rule: TimeRule::RightPoint,
    }
}

#[test]
fn a01_resolvent_closed_forms() {
    let start = Instant::now();
    let heat = match upsilon(&gaussian(), 2.0).unwrap() {
        Upsilon::Finite(v) => v,
        Upsilon::Divergent => f64::NAN,
    };
    let heat_rel = (heat - 0.25).abs() / 0.25;

    let wave_closed = wave_upsilon(1.0, 1.0).unwrap();
    let wave_quad = wave_upsilon_quadrature(1.0, 1.0).unwrap();
    let wave_rel = (wave_quad - 0.5).abs() / 0.5;

    let stable = upsilon(&LevyModel::Stable { alpha: 1.0, c: 1.0 }, 2.0).unwrap();
    let divergent = matches!(stable, Upsilon::Divergent);

    let elapsed = start.elapsed().as_secs_f64();
    let pass = heat_rel <= 1e-6
        && (wave_closed - 0.5).abs() <= 1e-12
        && wave_rel <= 1e-6
        && divergent
        && elapsed < 1.0;
    verdict(
        1,
        "resolvent closed forms",
        pass,
        &format!(
            "heat quadrature {heat:.9} vs 0.25 (rel {heat_rel:.2e}), wave quadrature \
             {wave_quad:.9} vs 0.5 (rel {wave_rel:.2e}), alpha=1 divergent={divergent}, \
             {elapsed:.3}s"
        ),
    );
}

#[test]
fn a02_gate_threshold() {
    let start = Instant::now();
    let m = min_beta(&gaussian(), 2.0, 1.0).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let err = (m - 0.125).abs();
    let pass = err <= 1e-5 && elapsed < 1.0;
    verdict(
        2,
        "gate threshold",
        pass,
        &format!("min_beta {m:.9} vs 0.125 (abs err {err:.2e}), {elapsed:.3}s"),
    );
}

#[test]
fn a03_discrete_isometry() {
    let spec = GridSpec {
        t_max: 1.0,
        dt: 1.0 / 64.0,
        half_width: 8.0,
        dx: 1.0 / 8.0,
    };
    let grid = spec.validate().unwrap();
    assert_eq!((grid.n_t, grid.n_x), (64, 128));
    let table = KernelTable::build(&gaussian(), &grid, KernelRule::CellRms).unwrap();
    let exact = isometry_second_moment(&table, &vec![1.0; grid.cells()]);

    let probes = [(15usize, 64usize), (40, 32), (63, 96)];
    let replicas = 10_000u64;
    let mut sum_sq = [0.0f64; 3];
    let mut sum_quad = [0.0f64; 3];
    for rep in 0..replicas {
        let noise = noise_field(&grid, 301, rep).unwrap();
        for (q, &(r, i)) in probes.iter().enumerate() {
            let v = probe_conv(&table, &noise.data, r, i);
            sum_sq[q] += v * v;
            sum_quad[q] += v * v * v * v;
        }
    }

    let mut pass = true;
    let mut detail = String::new();
    for (q, &(r, i)) in probes.iter().enumerate() {
        let m2 = sum_sq[q] / replicas as f64;
        let var_of_sq = (sum_quad[q] / replicas as f64 - m2 * m2).max(0.0);
        let se = (var_of_sq / replicas as f64).sqrt();
        let target = exact[r * grid.n_x + i];
        let dev = (m2 - target).abs();
        pass &= dev <= 3.0 * se;
        detail.push_str(&format!(
            "probe({r},{i}) mc {m2:.6} vs exact {target:.6} ({:.2} se); ",
            dev / se
        ));
    }
    verdict(3, "discrete isometry", pass, detail.trim_end());
}

#[test]
fn a04_mean_identity() {
    let spec = GridSpec {
        t_max: 0.5,
        dt: 1.0 / 64.0,
        half_width: 4.0,
        dx: 1.0 / 16.0,
    };
    let mu = SignedMeasure::point_mass(0.0, 1.0);
    let norm = NormParams::m_variant(2.0, WeightMeasure::Lebesgue);
    let sigmas = [
        ("linear", SigmaSpec::Linear { lambda: 0.7 }),
        ("abs", SigmaSpec::Abs),
        ("constant", SigmaSpec::constant(1.2)),
    ];
    let probes = [(7usize, 64usize), (15, 64), (15, 72), (31, 56), (31, 80)];
    let replicas = 3000;

    let mut pass = true;
    let mut detail = String::new();
    for (q, (label, sigma)) in sigmas.iter().enumerate() {
        let out = picard_solve(
            &gaussian(),
            sigma,
            &mu,
            &spec,
            &norm,
            411 + q as u64,
            replicas,
            1e-7,
            20,
            KernelRule::CellRms,
            workers(),
        )
        .unwrap();
        let grid = out.ensemble.grid;
        let mean = out.ensemble.mean_field();
        let mut worst = 0.0f64;
        for &(j, i) in &probes {
            let (t, x) = (grid.time_of_row(j), grid.x_of_col(i));
            let target = (-x * x / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
            let cell = j * grid.n_x + i;
            let m = mean[cell];
            let var = out
                .ensemble
                .replicas
                .iter()
                .map(|r| (r[cell] - m) * (r[cell] - m))
                .sum::<f64>()
                / (replicas - 1) as f64;
            let se = (var / replicas as f64).sqrt();
            let z = (m - target).abs() / se;
            worst = worst.max(z);
            pass &= z <= 3.0;
        }
        detail.push_str(&format!("{label} worst {worst:.2} se; "));
    }
    verdict(
        4,
        "ensemble mean reproduces the semigroup",
        pass,
        detail.trim_end(),
    );
}

#[test]
fn a05_picard_contraction() {
    let spec = GridSpec {
        t_max: 2.0,
        dt: 1.0 / 64.0,
        half_width: 5.0,
        dx: 1.0 / 8.0,
    };
    let out = picard_solve(
        &gaussian(),
        &SigmaSpec::Linear { lambda: 1.0 },
        &SignedMeasure::point_mass(0.0, 1.0),
        &spec,
        &NormParams::m_variant(2.0, WeightMeasure::Lebesgue),
        501,
        300,
        1e-15,
        7,
        KernelRule::CellRms,
        workers(),
    )
    .unwrap();
    let ratios = &out.report.ratios;
    assert!(ratios.len() >= 5, "need sweep distances up to n = 5");
    let window = &ratios[1..=4];
    let worst = window.iter().cloned().fold(0.0f64, f64::max);
    let pass = window.iter().all(|&r| r <= 0.5 + 0.1);
    verdict(
        5,
        "picard contraction rate",
        pass,
        &format!("ratios n=2..5 {window:?}, worst {worst:.4} vs bound 0.6"),
    );
}

#[test]
fn a06_anderson_fixed_point() {
    let spec = GridSpec {
        t_max: 4.0,
        dt: 1.0 / 256.0,
        half_width: 8.0,
        dx: 1.0 / 8.0,
    };
    let report = anderson_experiment(
        &gaussian(),
        1.0,
        &SignedMeasure::point_mass(0.0, 1.0),
        &spec,
        2.0,
        601,
        10_000,
        workers(),
    )
    .unwrap();
    let pass =
        report.mc_rel_err <= 0.07 && report.volterra_rel_err <= 0.07 && report.estimators_agree;
    verdict(
        6,
        "anderson fixed point",
        pass,
        &format!(
            "mc {:.5} (rel {:.2}%), volterra {:.5} (rel {:.2}%), target {:.5}, \
             agree={}, leakage {:.2e}",
            report.mc_value,
            100.0 * report.mc_rel_err,
            report.volterra_value,
            100.0 * report.volterra_rel_err,
            report.target,
            report.estimators_agree,
            report.leakage
        ),
    );
}

#[test]
fn a07_stochastic_young_inequality() {
    // Equality side first: the squared-kernel convolution against a direct
    // quadruple sum on an 8x8 grid.
    let small = GridSpec {
        t_max: 0.5,
        dt: 1.0 / 16.0,
        half_width: 0.5,
        dx: 1.0 / 8.0,
    };
    let sgrid = small.validate().unwrap();
    assert_eq!((sgrid.n_t, sgrid.n_x), (8, 8));
    let stable = KernelTable::build(&gaussian(), &sgrid, KernelRule::CellRms).unwrap();
    let z: Vec<f64> = (0..sgrid.cells())
        .map(|c| {
            let (j, i) = (c / sgrid.n_x, c % sgrid.n_x);
            0.5 + (0.7 * (j as f64 + 1.0)).sin() * (1.3 * i as f64).cos()
        })
        .collect();
    let oracle = isometry_second_moment(&stable, &z);
    let meas = sgrid.cell_measure();
    let mut brute_dev = 0.0f64;
    for r in 0..sgrid.n_t {
        for i in 0..sgrid.n_x {
            let mut s = 0.0;
            for j in 0..r {
                for m in 0..sgrid.n_x {
                    let k = stable.value(r - j, i.abs_diff(m));
                    s += k * k * z[j * sgrid.n_x + m] * z[j * sgrid.n_x + m] * meas;
                }
            }
            brute_dev = brute_dev.max((s - oracle[r * sgrid.n_x + i]).abs());
        }
    }
    let equality_ok = brute_dev <= 1e-10;

    // Inequality side: unit Z plus three random deterministic fields at
    // k = 2 and k = 4.
    let spec = GridSpec {
        t_max: 1.0,
        dt: 1.0 / 32.0,
        half_width: 4.0,
        dx: 1.0 / 8.0,
    };
    let grid = spec.validate().unwrap();
    let mut fields = vec![("unit", vec![1.0; grid.cells()])];
    for q in 0..3u64 {
        let vals: Vec<f64> = (0..grid.cells())
            .map(|c| standard_normal(700 + q, 0, (c / grid.n_x) as u64, (c % grid.n_x) as u64))
            .collect();
        fields.push(("random", vals));
    }

    let mut pass = equality_ok;
    let mut detail = format!("brute-force isometry dev {brute_dev:.2e}; ");
    for k in [2.0, 4.0] {
        let p = norm_k(k, 2.0);
        for (label, vals) in &fields {
            let z_ens = FieldEnsemble::deterministic(&grid, vals.clone(), label).unwrap();
            let rep = young_check(&gaussian(), KernelRule::CellRms, &z_ens, &p, 701, 400, workers())
                .unwrap();
            pass &= rep.pass;
            detail.push_str(&format!(
                "k={k} {label} lhs {:.4} rhs {:.4}; ",
                rep.lhs, rep.rhs
            ));
        }
    }
    verdict(7, "stochastic young inequality", pass, detail.trim_end());
}

#[test]
fn a08_lipschitz_composition() {
    let spec = GridSpec {
        t_max: 1.0,
        dt: 1.0 / 32.0,
        half_width: 4.0,
        dx: 1.0 / 8.0,
    };
    let norm = NormParams::m_variant(2.0, WeightMeasure::Lebesgue);
    let mu = SignedMeasure::point_mass(0.0, 1.0);
    let base = SigmaSpec::Linear { lambda: 0.8 };
    let solve = |seed: u64| {
        picard_solve(
            &gaussian(),
            &base,
            &mu,
            &spec,
            &norm,
            seed,
            300,
            1e-7,
            20,
            KernelRule::CellRms,
            workers(),
        )
        .unwrap()
        .ensemble
    };
    let z = solve(801);
    let z_star = solve(802);

    let cases = [
        ("identity", SigmaSpec::Linear { lambda: 1.0 }),
        ("constant", SigmaSpec::constant(1.5)),
        ("abs", SigmaSpec::Abs),
        ("scaled", SigmaSpec::Linear { lambda: 0.7 }),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (label, sigma) in &cases {
        let rep = lipschitz_check(&z, &z_star, sigma, &norm).unwrap();
        pass &= rep.pass;
        detail.push_str(&format!("{label} lhs {:.4} rhs {:.4}; ", rep.lhs, rep.rhs));
    }
    verdict(8, "lipschitz composition", pass, detail.trim_end());
}

#[test]
fn a09_wave_variant() {
    let norm = NormParams::m_variant(2.0, WeightMeasure::Lebesgue);

    // Finite speed, atomic position data: the noise term stays identically
    // zero because sigma(0) = 0, so every replica is exactly zero on the
    // grid while the atoms ride the cone edges.
    let spec = GridSpec {
        t_max: 1.0,
        dt: 1.0 / 32.0,
        half_width: 4.0,
        dx: 1.0 / 32.0,
    };
    let sol = wave_picard_solve(
        &SigmaSpec::Linear { lambda: 1.0 },
        &SignedMeasure::point_mass(0.0, 1.0),
        &SignedMeasure::zero(),
        1.0,
        &spec,
        &norm,
        901,
        200,
        1e-7,
        8,
        workers(),
    )
    .unwrap();
    let atomic_zero = sol
        .ensemble
        .replicas
        .iter()
        .all(|r| r.iter().all(|&v| v == 0.0));
    let atoms_tracked = sol.atoms_by_row.iter().all(|row| row.len() == 2);

    // Finite speed, velocity data: support stays inside |x| <= t + dx up to
    // convolution rounding, on every replica.
    let sol_v = wave_picard_solve(
        &SigmaSpec::Abs,
        &SignedMeasure::zero(),
        &SignedMeasure::point_mass(0.0, 1.0),
        1.0,
        &spec,
        &norm,
        902,
        200,
        1e-7,
        8,
        workers(),
    )
    .unwrap();
    let grid = sol_v.ensemble.grid;
    let mut cone_ok = true;
    for rep in &sol_v.ensemble.replicas {
        for j in 0..grid.n_t {
            let t = grid.time_of_row(j);
            for i in 0..grid.n_x {
                if grid.x_of_col(i).abs() > t + grid.spec.dx + 1e-9 {
                    cone_ok &= rep[j * grid.n_x + i].abs() <= 1e-12;
                }
            }
        }
    }

    // Contraction at upsilon = 0.125 (kappa = 1, beta = 2, lambda = 1).
    let cspec = GridSpec {
        t_max: 1.5,
        dt: 1.0 / 32.0,
        half_width: 4.0,
        dx: 1.0 / 32.0,
    };
    let csol = wave_picard_solve(
        &SigmaSpec::Linear { lambda: 1.0 },
        &SignedMeasure::zero(),
        &SignedMeasure::point_mass(0.0, 1.0),
        1.0,
        &cspec,
        &norm,
        903,
        300,
        1e-15,
        7,
        workers(),
    )
    .unwrap();
    let ratios = &csol.report.ratios;
    assert!(ratios.len() >= 5);
    let bound = 0.125f64.sqrt() + 0.1;
    let window = &ratios[1..=4];
    let contraction_ok = window.iter().all(|&r| r <= bound);

    // d'Alembert oracle: a cosine density evolves to cos(x) cos(t).
    let table = DensityTable {
        x0: -12.0,
        dx: 1e-3,
        values: (0..=24_000).map(|q| (-12.0 + 1e-3 * q as f64).cos()).collect(),
    };
    let mu = SignedMeasure::from_density(table);
    let nu = SignedMeasure::zero();
    let mut osc_dev = 0.0f64;
    for (t, x) in [(0.25, 0.0), (0.5, 0.3), (0.75, -0.7), (1.0, 1.1)] {
        let w = wave_deterministic_part(&mu, &nu, 1.0, t, x).unwrap();
        osc_dev = osc_dev.max((w - x.cos() * t.cos()).abs());
    }
    let oracle_ok = osc_dev <= 1e-6;

    let pass = atomic_zero && atoms_tracked && cone_ok && contraction_ok && oracle_ok;
    verdict(
        9,
        "wave variant",
        pass,
        &format!(
            "atomic replicas zero={atomic_zero}, atoms tracked={atoms_tracked}, \
             cone respected={cone_ok}, ratios n=2..5 {window:?} vs bound {bound:.4}, \
             d'Alembert dev {osc_dev:.2e}"
        ),
    );
}

#[test]
fn a10_worker_count_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "model": {"family": "gaussian", "kappa": 1.0},
        "mu": {"atoms": [[0.0, 1.0]], "density": null},
        "lambda": 1.0,
        "grid": {"t_max": 4.0, "dt": 0.00390625, "half_width": 8.0, "dx": 0.125},
        "norm": {"beta": 2.0},
        "seed": 1001,
        "replicas": 200
    });
    let cfg_path = dir.path().join("anderson.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let run = |label: &str, threads: &str| {
        let out_dir = dir.path().join(label);
        let output = Command::new(env!("CARGO_BIN_EXE_spde"))
            .args(["anderson", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out_dir)
            .env("SPDE_WORKERS", threads)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "run {label} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        (
            fs::read(out_dir.join("replicas.csv")).unwrap(),
            fs::read(out_dir.join("report.json")).unwrap(),
        )
    };
    let (csv_1, report_1) = run("w1", "1");
    let (csv_8, report_8) = run("w8", "8");

    let pass = csv_1 == csv_8 && report_1 == report_8;
    verdict(
        10,
        "worker count determinism",
        pass,
        &format!(
            "replicas.csv identical={}, report.json identical={}, {} csv bytes",
            csv_1 == csv_8,
            report_1 == report_8,
            csv_1.len()
        ),
    );
}
