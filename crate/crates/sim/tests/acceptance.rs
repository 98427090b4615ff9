//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion.

use std::process::ExitCode;

use adaptml::config::{LawConfig, ModelConfig};
use adaptml::scenario::{embedded_config, preset_names, Scenario};
use adaptml::{run_config, ExperimentConfig, RunResult};
use adaptml_core::analysis::{discrete_regret, QuadraticCost};
use adaptml_core::discrete::{
    gd_step, nesterov_step, project, projected_gd_step, AdaptiveStepState, FeasibleSet, NesterovState, ScheduleKind,
    StepSchedule,
};
use adaptml_core::losses::{loss_grad, loss_value, LossKind};
use adaptml_core::Vector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[lo, hi)`.
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }

    fn vector(&mut self, n: usize, half: f64) -> Vector {
        Vector::from_fn(n, |_, _| self.range(-half, half))
    }
}

fn preset_config(path: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(embedded_config(path).unwrap_or_else(|| panic!("missing preset config {path}")))
        .unwrap()
}

fn run(cfg: &ExperimentConfig) -> RunResult {
    run_config(cfg).unwrap_or_else(|e| panic!("{}: {e}", cfg.display_name()))
}

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pe_convergence() -> Verdict {
    let r = run(&preset_config("configs/pe-gradient-flow.toml"));
    let half = run(&preset_config("configs/pe-gradient-flow-half-dt.toml"));
    let rep = &r.report;
    let fit = rep.convergence.as_ref().ok_or("no convergence fit")?;
    // dt/2 cross-check mid-transient, where θ̃ is still O(1e-4)
    let at = |res: &RunResult, t: f64| {
        res.outcome.trajectory.rows.iter().find(|row| (row.t - t).abs() < 1e-9).map(|row| row.theta.clone()).unwrap()
    };
    let gap = (at(&r, 10.0) - at(&half, 10.0)).norm();
    ensure(
        rep.final_theta_err_norm < 1e-2 && fit.slope < -0.05 && fit.r_squared > 0.95 && gap < 1e-9,
        format!(
            "‖θ̃(T)‖ = {:.3e} (< 1e-2), slope {:.4} (< −0.05), R² {:.6} (> 0.95), |θ_dt − θ_dt/2| at t=10 = {gap:.1e}",
            rep.final_theta_err_norm, fit.slope, fit.r_squared
        ),
    )
}

fn non_pe_stall() -> Verdict {
    let rep = run(&preset_config("configs/non-pe-gradient-flow.toml")).report;
    let e = rep.final_output_error.abs();
    let th = rep.final_theta_err_norm;
    ensure(
        e < 1e-3 && (0.99..=1.01).contains(&th),
        format!("|e_y(T)| = {e:.3e} (< 1e-3), ‖θ̃(T)‖ = {th:.6} (in [0.99, 1.01])"),
    )
}

fn constant_regret() -> Verdict {
    let rep = run(&preset_config("configs/regret-gradient-flow-long.toml")).report;
    let c = rep.continuous_regret.as_ref().ok_or("no continuous regret")?;
    let (r500, r1000) = (c.at(500.0).ok_or("t=500 not logged")?, c.at(1000.0).ok_or("t=1000 not logged")?);
    ensure(
        r1000 - r500 <= 0.01 * r500,
        format!(
            "regret(500) = {r500:.9}, regret(1000) = {r1000:.9}, growth {:.2e} ≤ {:.2e}",
            r1000 - r500,
            0.01 * r500
        ),
    )
}

fn ogd_regret_bound() -> Verdict {
    let cfg = preset_config("configs/regret-ogd-ball.toml");
    let rep = run(&cfg).report;
    let d = rep.discrete_regret.as_ref().ok_or("no discrete regret")?;
    let ratio = d.max_bound_ratio.ok_or("no regret curve")?;
    ensure(
        cfg.horizon == 1e4 && d.curve.len() == 10_000 && ratio <= 1.5,
        format!(
            "max over T ≤ 10⁴ of regret_T/(G·D·√T) = {ratio:.4} (≤ 1.5), G = {:.4}, D = {}",
            d.gradient_bound_observed, d.diameter
        ),
    )
}

/// Every preset experiment running gradient flow on the algebraic model
/// without an output disturbance.
fn gradient_flow_configs() -> Vec<(String, ExperimentConfig)> {
    let mut out = Vec::new();
    for name in preset_names() {
        for (id, cfg) in Scenario::preset(name).unwrap().configs {
            let gf = matches!(cfg.law, LawConfig::GradientFlow { .. }) && matches!(cfg.model, ModelConfig::Algebraic);
            if gf && cfg.disturbance.is_none() {
                out.push((format!("{name}/{id}"), cfg));
            }
        }
    }
    out
}

fn lyapunov_algebraic() -> Verdict {
    let runs = gradient_flow_configs();
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for (id, cfg) in &runs {
        let rep = run(cfg).report;
        if rep.max_lyapunov_increase > 1e-8 {
            return Err(format!("{id}: max V(t+dt) − V(t) = {:.3e}", rep.max_lyapunov_increase));
        }
        worst = worst.max(rep.max_lyapunov_increase);
        steps += rep.steps;
    }
    ensure(runs.len() >= 4, format!("{} runs, {steps} steps, max V(t+dt) − V(t) = {worst:.3e} (≤ 1e-8)", runs.len()))
}

fn spr_kyp() -> Verdict {
    let rep = run(&preset_config("configs/spr-gradient-flow.toml")).report;
    let e = rep.final_state_norm.ok_or("not a dynamic run")?;
    let p = rep.final_phi_tilde_norm.ok_or("not a dynamic run")?;
    ensure(
        !rep.diverged() && rep.max_lyapunov_excess <= 1e-6 && e < 1e-3 && p < 1e-3,
        format!(
            "max V(t+dt) − V(t) − |δ|dt = {:.3e} (≤ 1e-6) over {} steps, ‖e(T)‖ = {e:.2e}, ‖φ̃(T)‖ = {p:.2e}",
            rep.max_lyapunov_excess, rep.steps
        ),
    )
}

fn optimizer_reductions() -> Verdict {
    let mut u = Uniform::new(0xACCE);
    let set = FeasibleSet::symmetric_box(3, 0.8).map_err(|e| e.to_string())?;
    let schedule = StepSchedule::new(ScheduleKind::InverseSqrt, 0.3).unwrap();
    let mut st = AdaptiveStepState::identity(3);
    let (mut a, mut b) = (Vector::zeros(3), Vector::zeros(3));
    for k in 1..=1000 {
        let g = u.vector(3, 3.0);
        a = projected_gd_step(&a, &g, &schedule, k, &set);
        b = st.step(&b, &g, &schedule, k, &set).unwrap();
        if a.as_slice() != b.as_slice() {
            return Err(format!("adaptive identity differs from projected GD at step {k}"));
        }
    }
    let gamma = 0.15;
    let constant = StepSchedule::constant(gamma).unwrap();
    let mut gd = u.vector(3, 1.0);
    let mut state = NesterovState::new(gd.clone());
    for k in 1..=1000 {
        let phi = u.vector(3, 1.5);
        let y = u.range(-1.0, 1.0);
        let grad = |th: &Vector| &phi * (th.dot(&phi) - y);
        gd = gd_step(&gd, &grad(&gd), &constant, k);
        nesterov_step(&mut state, grad, gamma, 0.0);
        if gd.as_slice() != state.theta.as_slice() {
            return Err(format!("Nesterov β=0 differs from GD at step {k}"));
        }
    }
    Ok("identity adaptive step ≡ projected GD and Nesterov(β=0) ≡ GD, bitwise over 1000 random steps each".into())
}

fn higher_order_tuner_robustness() -> Verdict {
    let ht = run(&preset_config("configs/stress-higher-order-tuner.toml")).report;
    let nest_cfg = preset_config("configs/stress-nesterov.toml");
    let nest = run(&nest_cfg);
    let limit = 10.0 * nest.report.theta_scale;
    let escape =
        nest.outcome.trajectory.rows.iter().find(|r| r.theta.norm() > limit).map(|r| r.t).or(nest.report.diverged_at);
    let ht_limit = 10.0 * ht.theta_scale;
    ensure(
        !ht.diverged() && ht.max_theta_norm <= ht_limit && escape.is_some_and(|k| k < 1e4),
        format!(
            "tuner max ‖θ‖ = {:.4} (≤ {ht_limit:.4}); Nesterov (γ, β) = ({}, {}) exceeds {limit:.4} at k = {}",
            ht.max_theta_norm,
            match nest_cfg.law {
                LawConfig::Nesterov { gamma, .. } => gamma,
                _ => f64::NAN,
            },
            match nest_cfg.law {
                LawConfig::Nesterov { beta, .. } => beta,
                _ => f64::NAN,
            },
            escape.map_or("never".to_owned(), |k| format!("{k}"))
        ),
    )
}

fn projection_containment() -> Verdict {
    let mut cfg = preset_config("configs/robust-projection.toml");
    cfg.decimate = 1;
    let r = run(&cfg);
    let LawConfig::Projection { outer, .. } = &cfg.law else {
        return Err("preset is not a projection run".into());
    };
    let mut worst = f64::NEG_INFINITY;
    for row in &r.outcome.trajectory.rows {
        for (th, b) in row.theta.iter().zip(outer) {
            worst = worst.max(th.abs() - b);
        }
    }
    if worst > 1e-6 {
        return Err(format!("max |θ_i| − θ_i,max = {worst:.3e} over {} steps", r.outcome.trajectory.rows.len()));
    }
    let mut u = Uniform::new(9);
    for i in 0..1000 {
        let set = if i % 2 == 0 {
            let lo = u.vector(3, 2.0);
            let hi = &lo + Vector::from_fn(3, |_, _| u.range(0.0, 3.0));
            FeasibleSet::boxed(lo, hi).unwrap()
        } else {
            FeasibleSet::ball(u.vector(3, 2.0), u.range(0.1, 3.0)).unwrap()
        };
        let (x, y) = (u.vector(3, 10.0), u.vector(3, 10.0));
        let (px, py) = (project(&set, &x), project(&set, &y));
        if (project(&set, &px) - &px).norm() > 1e-12 || (&px - &py).norm() > (&x - &y).norm() + 1e-12 {
            return Err(format!("projection property fails on pair {i}"));
        }
    }
    Ok(format!(
        "max |θ_i(t)| − θ_i,max = {worst:.3e} over {} steps (≤ 1e-6); idempotent and nonexpansive on 1000 pairs (1e-12)",
        r.outcome.trajectory.rows.len()
    ))
}

fn gradient_correctness() -> Verdict {
    let mut u = Uniform::new(10);
    let h = 1e-5;
    let kinds = [LossKind::Squared, LossKind::Lp(4), LossKind::Lp(6), LossKind::Hinge, LossKind::Logistic];
    let mut worst = 0.0_f64;
    for kind in kinds {
        let mut checked = 0;
        while checked < 100 {
            let theta = u.vector(3, 1.0);
            let phi = u.vector(3, 1.0);
            let y = match kind {
                LossKind::Hinge | LossKind::Logistic => {
                    if u.range(0.0, 1.0) < 0.5 {
                        -1.0
                    } else {
                        1.0
                    }
                }
                _ => u.range(-1.0, 1.0),
            };
            if kind == LossKind::Hinge && (1.0 - y * theta.dot(&phi)).abs() <= 2.0 * h * phi.norm() {
                continue;
            }
            let g = loss_grad(kind, &theta, &phi, y).unwrap();
            let fd = Vector::from_fn(3, |i, _| {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                (loss_value(kind, &tp, &phi, y).unwrap() - loss_value(kind, &tm, &phi, y).unwrap()) / (2.0 * h)
            });
            let rel = (&g - &fd).norm() / g.norm().max(1e-3);
            if rel > 1e-6 {
                return Err(format!("{kind:?}: relative error {rel:.3e} at θ = {theta:?}"));
            }
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(format!("5 losses × 100 points, max relative error {worst:.2e} (≤ 1e-6)"))
}

fn jensen_bound() -> Verdict {
    let mut lines = Vec::new();
    for name in preset_names() {
        for (id, cfg) in Scenario::preset(name).unwrap().configs {
            if !cfg.analysis.jensen {
                continue;
            }
            let rep = run(&cfg).report;
            let j = rep.jensen.as_ref().ok_or(format!("{id}: no Jensen report"))?;
            if j.lhs > j.rhs + 1e-9 {
                return Err(format!("{id}: lhs {:.6e} > rhs {:.6e}", j.lhs, j.rhs));
            }
            lines.push(format!("{id}: {:.4e} ≤ {:.4e}", j.lhs, j.rhs));
        }
    }
    ensure(!lines.is_empty(), lines.join("; "))
}

/// Lattice minimum of `Σ f_k` over `[−1, 1]²` with spacing 1e-3.
fn lattice_minimum(costs: &[QuadraticCost]) -> f64 {
    let mut total = QuadraticCost::zero(2);
    for c in costs {
        total.accumulate(c);
    }
    let (h00, h01, h11) = (total.h[(0, 0)], total.h[(0, 1)], total.h[(1, 1)]);
    let (g0, g1, c) = (total.g[0], total.g[1], total.c);
    let mut best = f64::INFINITY;
    for i in 0..=2000 {
        let x = -1.0 + i as f64 * 1e-3;
        let (a, b) = (0.5 * h00 * x * x + g0 * x + c, h01 * x + g1);
        for j in 0..=2000 {
            let y = -1.0 + j as f64 * 1e-3;
            best = best.min(a + b * y + 0.5 * h11 * y * y);
        }
    }
    best
}

fn regret_oracle() -> Verdict {
    let set = FeasibleSet::symmetric_box(2, 1.0).unwrap();
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let mut u = Uniform::new(1000 + seed);
        let costs: Vec<QuadraticCost> =
            (0..5).map(|_| QuadraticCost::regression(&u.vector(2, 2.0), u.range(-3.0, 3.0))).collect();
        let iterates: Vec<Vector> = (0..5).map(|_| u.vector(2, 1.0)).collect();
        let rec = discrete_regret(&costs, &iterates, &set).map_err(|e| e.to_string())?;
        let alg: f64 = costs.iter().zip(&iterates).map(|(c, th)| c.value(th)).sum();
        let brute = alg - lattice_minimum(&costs);
        let gap = (rec.regret - brute).abs();
        if gap > 1e-3 {
            return Err(format!("instance {seed}: regret {:.6} vs lattice {brute:.6}", rec.regret));
        }
        worst = worst.max(gap);
    }
    Ok(format!("20 instances, max |regret − lattice regret| = {worst:.2e} (≤ 1e-3)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("PE convergence", pe_convergence),
        ("non-PE stall", non_pe_stall),
        ("constant regret", constant_regret),
        ("OGD regret bound", ogd_regret_bound),
        ("Lyapunov monotonicity, algebraic", lyapunov_algebraic),
        ("SPR/KYP Lyapunov decrease", spr_kyp),
        ("optimizer reductions", optimizer_reductions),
        ("higher-order tuner robustness", higher_order_tuner_robustness),
        ("projection containment", projection_containment),
        ("gradient correctness", gradient_correctness),
        ("Jensen bound", jensen_bound),
        ("regret oracle equivalence", regret_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = std::time::Instant::now();
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("[PASS] {:>2}. {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
