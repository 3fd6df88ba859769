//! Subcommand implementations. Each returns whether its scientific check
//! passed; errors are mapped to exit codes by the caller.

use rayon::prelude::*;

use rmlab::compare::{compare_minimizers, minimize_plate, plate_solver_options, CompareError, CompareRow, CompareSetup};
use rmlab::energy3d::ForceSpec;
use rmlab::fields::DeformationField3;
use rmlab::limit2d::{limit_solver_options, minimize_limit_state, LimitBreakdown, LimitError};
use rmlab::material::{check_assumptions, QuadraticForm};
use rmlab::optimize::{MinimizeOptions, Status};
use rmlab::recovery::{build_recovery, gamma_study, StudyRow};
use rmlab::rigidity::{rigidity_report, RigidityError, RigidityReport, TUBULAR_RADIUS};
use rmlab::{BumpState, Grid2, Grid3, LimitVariant, Material, MidsurfaceState, PlateEnergy, Variant};

use crate::config::{FieldKind, RunConfig, StateKind};
use crate::output::{csv_field, RunDir};
use crate::CliError;

fn material(cfg: &RunConfig) -> Result<Material, CliError> {
    Material::new(cfg.params()).map_err(|e| CliError::Config(e.to_string()))
}

fn plane(cfg: &RunConfig) -> Result<Grid2, CliError> {
    Grid2::new(cfg.nx, cfg.ny, cfg.lx, cfg.ly).map_err(|e| CliError::Config(e.to_string()))
}

fn grid3(cfg: &RunConfig) -> Result<Grid3, CliError> {
    Grid3::new(cfg.nx, cfg.ny, cfg.nz, cfg.lx, cfg.ly).map_err(|e| CliError::Config(e.to_string()))
}

fn bump(cfg: &RunConfig) -> BumpState {
    match cfg.state {
        StateKind::Bump => BumpState {
            lx: cfg.lx,
            ly: cfg.ly,
            ..BumpState::standard()
        },
        StateKind::Zero => BumpState::zero(cfg.lx, cfg.ly),
        StateKind::Random => BumpState::random(cfg.seed, cfg.lx, cfg.ly),
    }
}

fn force(cfg: &RunConfig, grid: Grid2) -> Result<ForceSpec, CliError> {
    cfg.load
        .force(grid, cfg.amplitude, cfg.alpha())
        .map_err(|e| CliError::Config(e.to_string()))
}

fn solver(cfg: &RunConfig, base: MinimizeOptions) -> MinimizeOptions {
    MinimizeOptions {
        max_iters: cfg.max_iters.unwrap_or(base.max_iters),
        grad_tol: cfg.grad_tol.unwrap_or(base.grad_tol),
        seed: Some(cfg.seed),
        ..base
    }
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

pub fn check_material(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let report = check_assumptions(&cfg.params(), cfg.samples, cfg.seed);
    let rows = report.checks.iter().map(|c| {
        format!(
            "{},{},{},{},{},{}",
            c.label,
            c.passed,
            c.worst,
            c.threshold,
            c.samples,
            csv_field(c.description)
        )
    });
    out.write_csv("check_material.csv", "label,passed,worst,threshold,samples,description", rows)?;
    for c in &report.checks {
        println!("{} {}: {} (worst {:e}, threshold {:e})", c.label, if c.passed { "ok" } else { "FAILED" }, c.description, c.worst, c.threshold);
    }
    Ok(report.all_passed())
}

/// Hessian entries of `2β|sym A|²` and `4μ|sym A|² + 8λ(tr A)²` on row-major
/// flattenings.
fn closed_form(order: usize, shear: f64, volumetric: f64) -> Vec<f64> {
    let n = order * order;
    let mut h = vec![0.0; n * n];
    for i in 0..order {
        for j in 0..order {
            let a = i * order + j;
            h[a * n + a] += 0.5 * shear;
            h[a * n + j * order + i] += 0.5 * shear;
            if i == j {
                for k in 0..order {
                    h[a * n + k * order + k] += volumetric;
                }
            }
        }
    }
    h
}

pub fn qforms(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let m = material(cfg)?;
    let p = m.params();
    let forms: [(&str, &QuadraticForm, Vec<f64>); 2] = [
        ("membrane", m.membrane_form(), closed_form(2, 2.0 * p.beta, 0.0)),
        ("bulk", m.bulk_form(), closed_form(3, 4.0 * p.mu, 8.0 * p.lambda)),
    ];
    let mut rows = Vec::new();
    let mut ok = true;
    for (name, form, exact) in &forms {
        let n = form.order() * form.order();
        let scale = exact.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let fd = form.hessian()[r * n + c];
                let ex = exact[r * n + c];
                worst = worst.max((fd - ex).abs());
                rows.push(format!("{name},{r},{c},{fd},{ex}"));
            }
        }
        let rel = worst / scale;
        ok &= rel <= 1e-6;
        println!("{name}: max relative deviation from the closed form {rel:e}");
    }
    out.write_csv("qforms.csv", "form,row,col,fd_hessian,closed_form", rows)?;
    Ok(ok)
}

/// Nonincreasing over the last three rows, strictly unless already zero.
fn tail_decreasing(errs: &[f64]) -> bool {
    let tail = &errs[errs.len().saturating_sub(3)..];
    tail.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

pub fn gamma(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let m = material(cfg)?;
    let rows = gamma_study(&bump(cfg), &cfg.h_list, cfg.sigma, &m, cfg.variant).map_err(compute)?;
    out.write_csv("gamma_study.csv", StudyRow::CSV_HEADER, rows.iter().map(StudyRow::csv_row))?;
    for r in &rows {
        println!("h = {}: scaled {:e}, limit {:e}, rel_err {:e}", r.h, r.scaled.total, r.limit.total, r.rel_err);
    }
    if rows.iter().any(|r| r.flagged) {
        eprintln!("infeasible recovery energies were flagged");
        return Ok(false);
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_err).collect();
    Ok(tail_decreasing(&errs))
}

pub fn minimize3d(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let m = material(cfg)?;
    let grid = grid3(cfg)?;
    let f = force(cfg, grid.plane())?;
    let opts = solver(cfg, plate_solver_options());
    let results: Vec<_> = cfg
        .h_list
        .par_iter()
        .map(|&h| {
            let plate = minimize_plate(&m, grid, h, cfg.sigma, &f, cfg.variant, cfg.bc_mode, &opts)?;
            // the breakdown is reported unscaled by the energy itself
            let parts = PlateEnergy::new(&m, grid, h, cfg.variant, cfg.bc_mode)?
                .with_force(&f)?
                .evaluate(plate.field.displacement())
                .scaled(h.powf(-cfg.sigma));
            Ok::<_, CompareError>((plate, parts))
        })
        .collect::<Result<_, _>>()
        .map_err(compute)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for (index, (plate, e)) in results.iter().enumerate() {
        let s = &plate.solve;
        ok &= s.status == Status::Converged;
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            plate.h,
            s.status.name(),
            s.iterations,
            s.grad_norm,
            e.e_membrane,
            e.e_quartic,
            e.e_shear,
            e.e_reg,
            e.e_secondgrad,
            e.e_force,
            e.total
        ));
        out.write_csv(
            &format!("minimize3d_trace_{index}.csv"),
            "iter,energy,grad_norm,step",
            s.trace.iter().map(|t| format!("{},{},{},{}", t.iter, t.energy, t.grad_norm, t.step)),
        )?;
        println!("h = {}: {} after {} iterations, scaled energy {:e}", plate.h, s.status.name(), s.iterations, e.total);
    }
    out.write_csv(
        "minimize3d.csv",
        "h,status,iterations,grad_norm,e_membrane,e_quartic,e_shear,e_reg,e_secondgrad,e_force,total",
        rows,
    )?;
    Ok(ok)
}

pub fn minimize_limit(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let m = material(cfg)?;
    let grid = plane(cfg)?;
    let f = force(cfg, grid)?;
    let variant = match cfg.variant {
        Variant::Plain => LimitVariant::ReissnerMindlin,
        Variant::SecondGrad => LimitVariant::SecondGradient,
    };
    let start = MidsurfaceState::zeros(grid);
    let hold_u = variant == LimitVariant::ReissnerMindlin;
    let opts = solver(cfg, limit_solver_options());
    let sol = match minimize_limit_state(&m, variant, Some(&f), &start, hold_u, &opts) {
        Ok(sol) => sol,
        Err(e @ LimitError::NotConverged { .. }) => {
            eprintln!("{e}");
            return Ok(false);
        }
        Err(e) => return Err(compute(e)),
    };
    out.write_csv(
        "limit_energy.csv",
        &format!("{},status,iterations,grad_norm", LimitBreakdown::CSV_HEADER),
        [format!(
            "{},{},{},{}",
            sol.energy.csv_row(),
            sol.solve.status.name(),
            sol.solve.iterations,
            sol.solve.grad_norm
        )],
    )?;
    let mut state = Vec::new();
    sol.state.write_csv(&mut state)?;
    out.write_raw("limit_state.csv", String::from_utf8(state).expect("CSV output is UTF-8"))?;
    println!("limit minimum {:e} after {} iterations", sol.energy.total, sol.solve.iterations);
    Ok(true)
}

pub fn compare(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let m = material(cfg)?;
    let grid = grid3(cfg)?;
    let setup = CompareSetup {
        grid,
        sigma: cfg.sigma,
        h_list: cfg.h_list.clone(),
        force: force(cfg, grid.plane())?,
        variant: cfg.variant,
        bc_mode: cfg.bc_mode,
        solver: solver(cfg, plate_solver_options()),
    };
    let rows = match compare_minimizers(&m, &setup) {
        Ok((_, rows)) => rows,
        Err(CompareError::NotConverged { h, status, residual, partial }) => {
            out.write_csv("compare.csv", CompareRow::CSV_HEADER, partial.iter().map(CompareRow::csv_row))?;
            eprintln!("3D minimization at h = {h} stopped ({status}), gradient max-norm {residual:e}");
            return Ok(false);
        }
        Err(e) => return Err(compute(e)),
    };
    out.write_csv("compare.csv", CompareRow::CSV_HEADER, rows.iter().map(CompareRow::csv_row))?;
    for r in &rows {
        println!(
            "h = {}: scaled 3D {:e}, limit {:e}, gap {:e}, v distance {:e}, |u| {:e}",
            r.h, r.scaled_3d_min, r.limit_min, r.gap, r.v_rel_l2, r.u_norm
        );
    }
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    Ok(last.gap < first.gap || last.gap == 0.0)
}

fn rigidity_row(label: Option<f64>, r: &RigidityReport) -> String {
    match label {
        Some(delta) => format!("{delta},{}", r.csv_row()),
        None => r.csv_row(),
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v), h.max(v)));
    hi / lo
}

pub fn rigidity(cfg: &RunConfig, out: &RunDir) -> Result<bool, CliError> {
    let grid = grid3(cfg)?;
    let report = |y: &DeformationField3| match rigidity_report(y, TUBULAR_RADIUS) {
        Ok(r) => Ok(r),
        Err(e @ RigidityError::UnderResolved { .. }) => Err(compute(e)),
    };
    let field = |r: Result<DeformationField3, _>| r.map_err(|e: rmlab::fields::FieldError| compute(e));
    match cfg.field {
        FieldKind::Rigid => {
            let (s, c) = 0.3f64.sin_cos();
            let reports = cfg
                .h_list
                .iter()
                .map(|&h| {
                    let y = field(DeformationField3::from_fn(grid, h, |x1, x2, x3| {
                        [c * x1 - s * x2 + 0.1, s * x1 + c * x2 - 0.2, h * x3 + 0.3]
                    }))?;
                    report(&y)
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.write_csv("rigidity.csv", RigidityReport::CSV_HEADER, reports.iter().map(|r| rigidity_row(None, r)))?;
            Ok(reports.iter().all(|r| r.exact_rigidity))
        }
        FieldKind::Recovery => {
            let m = material(cfg)?;
            let state = bump(cfg).sample(grid.plane());
            let reports = cfg
                .h_list
                .iter()
                .map(|&h| {
                    let y = build_recovery(&state, cfg.sigma, h, &m, cfg.nz).map_err(compute)?;
                    report(&y)
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.write_csv("rigidity.csv", RigidityReport::CSV_HEADER, reports.iter().map(|r| rigidity_row(None, r)))?;
            Ok(reports.iter().all(|r| [r.r1, r.q1, r.t1, r.grad_q].iter().all(|v| v.is_finite())))
        }
        FieldKind::Perturbation => {
            let h = cfg.h_list[0];
            let (lx, ly) = (cfg.lx, cfg.ly);
            let shape = |x: f64, y: f64| (16.0 * x * (lx - x) * y * (ly - y) / (lx * lx * ly * ly)).powi(2);
            let reports = cfg
                .deltas
                .iter()
                .map(|&delta| {
                    let y = field(DeformationField3::from_fn(grid, h, |x1, x2, x3| {
                        let b = shape(x1, x2);
                        [x1 + delta * b * (1.0 + x2 / ly), x2 + delta * b * (x1 / lx - 0.5), h * x3]
                    }))?;
                    report(&y)
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.write_csv(
                "rigidity.csv",
                &format!("delta,{}", RigidityReport::CSV_HEADER),
                cfg.deltas.iter().zip(&reports).map(|(&d, r)| rigidity_row(Some(d), r)),
            )?;
            let q1 = spread(reports.iter().map(|r| r.q1));
            let t1 = spread(reports.iter().map(|r| r.t1));
            println!("q1 spread {q1:.3}, t1 spread {t1:.3}");
            Ok(q1 <= 3.0 && t1 <= 3.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_membrane_matches_trace_formula() {
        // aᵀHa = 2β tr(A²) for symmetric A
        let h = closed_form(2, 2.0 * 1.5, 0.0);
        let a = [0.3, -0.2, -0.2, 0.7];
        let v: f64 = (0..4).map(|i| a[i] * (0..4).map(|j| h[i * 4 + j] * a[j]).sum::<f64>()).sum();
        let tr_a2 = 0.09 + 0.49 + 2.0 * 0.04;
        assert!((v - 3.0 * tr_a2).abs() < 1e-14);
    }

    #[test]
    fn tail_check() {
        assert!(tail_decreasing(&[5.0, 1.0, 0.5, 0.1]));
        assert!(tail_decreasing(&[0.1, 1.0, 0.5, 0.1]));
        assert!(!tail_decreasing(&[1.0, 0.5, 0.6]));
        assert!(tail_decreasing(&[0.0, 0.0, 0.0]));
    }
}
