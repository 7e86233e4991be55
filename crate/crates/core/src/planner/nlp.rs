use super::PlanError;
use crate::geom::{Point3, Vec3};
use crate::snake::{predict_com_displacement, GaitParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const AMPLITUDE: usize = 0;
const FREQUENCY: usize = 1;
const PHASE: usize = 2;
const HEADER: usize = 3;

fn waypoint_index(i: usize) -> usize {
    HEADER + 3 * i
}

/// Box bounds used when building a problem from a tracking task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanBounds {
    pub amplitude: [f64; 2],
    pub frequency: [f64; 2],
    pub phase: [f64; 2],
    /// Half-width of the box around each desired waypoint (x and y).
    pub corridor: f64,
}

impl Default for PlanBounds {
    fn default() -> Self {
        Self {
            amplitude: [0.0, 1.0],
            frequency: [PI, 2.0 * PI],
            phase: [0.0, PI],
            corridor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub x0: Vec<f64>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub desired: Vec<Point3>,
    /// COM at `t_0`, the anchor of the prediction chain.
    pub start: Point3,
    /// Heading held over the horizon.
    pub heading: f64,
    /// Time between waypoints, seconds.
    pub dt_wp: f64,
    pub gain: f64,
    pub drift_angle: f64,
}

impl PlanProblem {
    pub fn dimension(&self) -> usize {
        HEADER + 3 * self.desired.len()
    }

    pub fn waypoint_count(&self) -> usize {
        self.desired.len()
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::InvalidProblem(m));
        let n = self.desired.len();
        if n == 0 {
            return bad("at least one waypoint is required".into());
        }
        let dim = self.dimension();
        for (name, v) in [("x0", &self.x0), ("x_min", &self.x_min), ("x_max", &self.x_max)] {
            if v.len() != dim {
                return bad(format!("{name} has {} entries, expected {dim}", v.len()));
            }
        }
        for k in 0..dim {
            if !(self.x_min[k] <= self.x0[k] && self.x0[k] <= self.x_max[k]) {
                return bad(format!(
                    "x0[{k}] = {} outside [{}, {}]",
                    self.x0[k], self.x_min[k], self.x_max[k]
                ));
            }
        }
        if !(self.x_min[FREQUENCY] > 0.0) {
            return bad("frequency lower bound must be positive".into());
        }
        if let Some(p) = self.desired.iter().find(|p| p.z != 0.0) {
            return bad(format!("desired waypoint {p:?} is off the ground plane"));
        }
        if !(self.dt_wp > 0.0) {
            return bad("dt_wp must be positive".into());
        }
        Ok(())
    }

    /// Tracking problem toward `target`: `n` desired waypoints spaced one gait
    /// period of `guess` apart along the straight line, at most `step` meters
    /// each. The initial waypoints roll the prediction model forward from
    /// `guess`, clamped into the bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn straight_line(
        start: Point3,
        heading: f64,
        target: Point3,
        n: usize,
        step: f64,
        guess: &GaitParams,
        bounds: &PlanBounds,
        gain: f64,
        drift_angle: f64,
    ) -> Result<Self, PlanError> {
        let start = Point3::new(start.x, start.y, 0.0);
        let delta = Vec3::new(target.x - start.x, target.y - start.y, 0.0);
        let dist = delta.norm();
        let dir = if dist > 0.0 { delta / dist } else { Vec3::zeros() };
        let desired: Vec<Point3> = (1..=n)
            .map(|i| start + dir * (i as f64 * step).min(dist))
            .collect();
        Self::from_desired(start, heading, desired, guess, bounds, gain, drift_angle)
    }

    pub fn from_desired(
        start: Point3,
        heading: f64,
        desired: Vec<Point3>,
        guess: &GaitParams,
        bounds: &PlanBounds,
        gain: f64,
        drift_angle: f64,
    ) -> Result<Self, PlanError> {
        let n = desired.len();
        let dt_wp = guess.period();
        let mut x_min = vec![bounds.amplitude[0], bounds.frequency[0], bounds.phase[0]];
        let mut x_max = vec![bounds.amplitude[1], bounds.frequency[1], bounds.phase[1]];
        for d in &desired {
            x_min.extend([d.x - bounds.corridor, d.y - bounds.corridor, 0.0]);
            x_max.extend([d.x + bounds.corridor, d.y + bounds.corridor, 0.0]);
        }
        let mut x0 = vec![guess.amplitude, guess.frequency, guess.phase_offset];
        let step = predict_com_displacement(guess, heading, dt_wp, gain, drift_angle);
        let mut p = start;
        for _ in 0..n {
            p += step;
            x0.extend([p.x, p.y, p.z]);
        }
        for k in 0..x0.len() {
            x0[k] = x0[k].clamp(x_min[k], x_max[k]);
        }
        let problem = Self {
            x0,
            x_min,
            x_max,
            desired,
            start,
            heading,
            dt_wp,
            gain,
            drift_angle,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn gait(&self, x: &[f64]) -> GaitParams {
        GaitParams::new(x[AMPLITUDE], x[FREQUENCY], x[PHASE])
    }

    pub fn waypoint(&self, x: &[f64], i: usize) -> Point3 {
        let k = waypoint_index(i);
        Point3::new(x[k], x[k + 1], x[k + 2])
    }

    fn project(&self, x: &mut [f64]) {
        for k in 0..x.len() {
            x[k] = x[k].clamp(self.x_min[k], self.x_max[k]);
        }
    }
}

fn check_dim(x: &[f64], problem: &PlanProblem) -> Result<(), PlanError> {
    let expected = problem.dimension();
    if x.len() != expected {
        return Err(PlanError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// `J(X) = Σ ‖P_i − P_i^des‖²`.
pub fn cost(x: &[f64], problem: &PlanProblem) -> Result<f64, PlanError> {
    check_dim(x, problem)?;
    Ok(problem
        .desired
        .iter()
        .enumerate()
        .map(|(i, d)| (problem.waypoint(x, i) - d).norm_squared())
        .sum())
}

/// Analytic gradient of [`cost`]; only the waypoint block is nonzero.
pub fn cost_gradient(x: &[f64], problem: &PlanProblem) -> Result<Vec<f64>, PlanError> {
    check_dim(x, problem)?;
    let mut g = vec![0.0; x.len()];
    for (i, d) in problem.desired.iter().enumerate() {
        let k = waypoint_index(i);
        let diff = problem.waypoint(x, i) - d;
        g[k] = 2.0 * diff.x;
        g[k + 1] = 2.0 * diff.y;
        g[k + 2] = 2.0 * diff.z;
    }
    Ok(g)
}

/// `r_i = P_i^pred − P_i`, with the prediction chained one displacement per
/// waypoint from the start COM.
pub fn constraint_residual(x: &[f64], problem: &PlanProblem) -> Result<Vec<Vec3>, PlanError> {
    check_dim(x, problem)?;
    let step = predict_com_displacement(
        &problem.gait(x),
        problem.heading,
        problem.dt_wp,
        problem.gain,
        problem.drift_angle,
    );
    let mut pred = problem.start;
    Ok((0..problem.waypoint_count())
        .map(|i| {
            pred += step;
            pred - problem.waypoint(x, i)
        })
        .collect())
}

/// Largest absolute residual component.
pub fn max_residual(x: &[f64], problem: &PlanProblem) -> Result<f64, PlanError> {
    Ok(constraint_residual(x, problem)?
        .iter()
        .map(|r| r.amax())
        .fold(0.0, f64::max))
}

/// `J(X) + μ Σ ‖r_i‖²`.
pub fn penalized_objective(x: &[f64], problem: &PlanProblem, mu: f64) -> Result<f64, PlanError> {
    let j = cost(x, problem)?;
    let r: f64 = constraint_residual(x, problem)?
        .iter()
        .map(|r| r.norm_squared())
        .sum();
    Ok(j + mu * r)
}

/// Closed-form gradient of [`penalized_objective`].
pub fn penalized_gradient_analytic(
    x: &[f64],
    problem: &PlanProblem,
    mu: f64,
) -> Result<Vec<f64>, PlanError> {
    let mut g = cost_gradient(x, problem)?;
    let residuals = constraint_residual(x, problem)?;
    let dir = problem.heading + problem.drift_angle;
    let e = Vec3::new(dir.cos(), dir.sin(), 0.0);
    let (a, w) = (x[AMPLITUDE], x[FREQUENCY]);
    let base = problem.gain * problem.dt_wp;
    for (i, r) in residuals.iter().enumerate() {
        let steps = (i + 1) as f64;
        let re = r.dot(&e);
        g[AMPLITUDE] += 2.0 * mu * re * steps * base * w;
        g[FREQUENCY] += 2.0 * mu * re * steps * base * a;
        let k = waypoint_index(i);
        g[k] -= 2.0 * mu * r.x;
        g[k + 1] -= 2.0 * mu * r.y;
        g[k + 2] -= 2.0 * mu * r.z;
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    CentralDifference,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub mu_initial: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    pub fd_step: f64,
    pub step_tolerance: f64,
    pub armijo: f64,
    pub max_iterations_per_round: usize,
    pub infeasibility_tolerance: f64,
    pub gradient: GradientMode,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu_initial: 10.0,
            mu_factor: 10.0,
            mu_max: 1e6,
            fd_step: 1e-6,
            step_tolerance: 1e-8,
            armijo: 1e-4,
            max_iterations_per_round: 5000,
            infeasibility_tolerance: 1e-3,
            gradient: GradientMode::CentralDifference,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub round: usize,
    pub mu: f64,
    pub cost: f64,
    pub residual: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSolution {
    pub x_star: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub constraint_residual: f64,
    pub trace: Vec<TraceRow>,
}

impl PlanSolution {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,round,mu,cost,residual,step_norm\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e}\n",
                r.iteration, r.round, r.mu, r.cost, r.residual, r.step_norm
            ));
        }
        out
    }
}

fn gradient(
    x: &[f64],
    problem: &PlanProblem,
    mu: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>, PlanError> {
    match opts.gradient {
        GradientMode::Analytic => penalized_gradient_analytic(x, problem, mu),
        GradientMode::CentralDifference => {
            let h = opts.fd_step;
            let mut probe = x.to_vec();
            let mut g = vec![0.0; x.len()];
            // Fixed coordinate order keeps the result reproducible.
            for k in 0..x.len() {
                let orig = probe[k];
                probe[k] = orig + h;
                let plus = penalized_objective(&probe, problem, mu)?;
                probe[k] = orig - h;
                let minus = penalized_objective(&probe, problem, mu)?;
                probe[k] = orig;
                g[k] = (plus - minus) / (2.0 * h);
            }
            Ok(g)
        }
    }
}

/// Penalty method with projected gradient descent and Armijo backtracking.
///
/// Each outer round minimizes `J + μ Σ‖r‖²` until the projected step falls
/// below `step_tolerance`; `μ` then grows by `mu_factor` up to `mu_max`.
pub fn solve(problem: &PlanProblem, opts: &SolverOptions) -> Result<PlanSolution, PlanError> {
    problem.validate()?;
    let mut x = problem.x0.clone();
    problem.project(&mut x);
    let initial_cost = cost(&x, problem)?;
    let initial_residual = max_residual(&x, problem)?;

    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged;
    let mut mu = opts.mu_initial;
    let mut round = 0usize;
    loop {
        let mut t: f64 = 1.0;
        let mut f = penalized_objective(&x, problem, mu)?;
        converged = false;
        for _ in 0..opts.max_iterations_per_round {
            let g = gradient(&x, problem, mu, opts)?;
            let mut step_norm = 0.0;
            let mut trial_t = (t * 2.0).min(1e6);
            loop {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - trial_t * gi).collect();
                problem.project(&mut trial);
                let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
                let f_trial = penalized_objective(&trial, problem, mu)?;
                if f_trial <= f + opts.armijo * decrease {
                    step_norm = trial
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if f_trial <= f {
                        x = trial;
                        f = f_trial;
                    } else {
                        step_norm = 0.0;
                    }
                    t = trial_t;
                    break;
                }
                trial_t *= 0.5;
                if trial_t < 1e-18 {
                    break;
                }
            }
            iterations += 1;
            if opts.record_trace {
                trace.push(TraceRow {
                    iteration: iterations,
                    round,
                    mu,
                    cost: cost(&x, problem)?,
                    residual: max_residual(&x, problem)?,
                    step_norm,
                });
            }
            if step_norm < opts.step_tolerance {
                converged = true;
                break;
            }
        }
        if mu >= opts.mu_max {
            break;
        }
        mu = (mu * opts.mu_factor).min(opts.mu_max);
        round += 1;
    }

    let mut final_cost = cost(&x, problem)?;
    let mut residual = max_residual(&x, problem)?;
    if final_cost > initial_cost && initial_residual <= residual {
        // The start point is at least as feasible and cheaper.
        x = problem.x0.clone();
        problem.project(&mut x);
        final_cost = initial_cost;
        residual = initial_residual;
    }
    let solution = PlanSolution {
        x_star: x,
        cost: final_cost,
        iterations,
        converged,
        constraint_residual: residual,
        trace,
    };
    if residual > opts.infeasibility_tolerance {
        return Err(PlanError::Infeasible {
            residual,
            solution: Box::new(solution),
        });
    }
    Ok(solution)
}
