//! Damped Newton minimization of the discrete limit energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::sparse::Skyline;
use crate::fem::{LimitState, Model};

/// Starting point of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InitialState {
    #[default]
    Zero,
    Supplied { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stopping threshold on the infinity norm of the reduced gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub backtrack: f64,
    /// Smallest step length tried by the line search.
    pub min_step: f64,
    /// First Hessian shift, relative to the mean absolute diagonal.
    pub shift_initial: f64,
    pub shift_growth: f64,
    /// Relative shift beyond which a gradient step is taken instead.
    pub shift_max: f64,
    pub initial: InitialState,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-12,
            shift_initial: 1e-8,
            shift_growth: 10.0,
            shift_max: 1e8,
            initial: InitialState::Zero,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo <= 0.5) {
            return bad("armijo constant must lie in (0, 1/2]");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        if !(self.min_step > 0.0 && self.shift_initial > 0.0 && self.shift_growth > 1.0 && self.shift_max > self.shift_initial) {
            return bad("invalid step or shift parameters");
        }
        Ok(())
    }

    /// Starting state for a model.
    pub fn initial_state(&self, model: &Model) -> Result<LimitState> {
        match &self.initial {
            InitialState::Zero => Ok(model.zero_state()),
            InitialState::Supplied { values } => {
                let s = LimitState { values: values.clone() };
                if !s.is_admissible(&model.dofs) {
                    return Err(Error::InvalidArgument(format!(
                        "supplied initial state has {} values (expected {}) or violates a constraint",
                        values.len(),
                        model.dofs.n_total()
                    )));
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFailure,
}

/// Outcome of the a posteriori second-order check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    /// Converged with a positive definite reduced Hessian.
    LocalMinimum,
    /// Converged, but the reduced Hessian is singular or indefinite.
    StationaryNotCertified,
    NotConverged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub state: LimitState,
    pub energy: f64,
    pub energy_history: Vec<f64>,
    pub gradient_history: Vec<f64>,
    pub step_history: Vec<f64>,
    pub shift_history: Vec<f64>,
    /// Negative pivots of the reduced Hessian at the final state; `None` if singular.
    pub negative_eigenvalues: Option<usize>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub certificate: Certificate,
    /// Gradient threshold actually applied: the requested tolerance, raised to
    /// the round-off floor of the gradient when that is larger.
    pub effective_tolerance: f64,
    /// Line-search steps accepted in the round-off regime.
    pub roundoff_acceptances: usize,
}

impl SolveReport {
    pub fn final_gradient(&self) -> f64 {
        self.gradient_history.last().copied().unwrap_or(0.0)
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradient_floor(model: &Model, h: &crate::fem::sparse::CsrSymmetric, x: &[f64]) -> f64 {
    let row_norm = (0..h.n)
        .map(|i| (h.row_ptr[i]..h.row_ptr[i + 1]).map(|p| h.values[p].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let b = inf_norm(model.load_vector());
    256.0 * f64::EPSILON * (row_norm * inf_norm(x) + b)
}

/// Newton iteration from `s0` on the model's energy.
pub fn minimize(model: &Model, s0: &LimitState, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    if !s0.is_admissible(&model.dofs) {
        return Err(Error::InvalidArgument("initial state does not satisfy the constraints".into()));
    }
    let dm = &model.dofs;
    let mut s = s0.clone();
    let mut a = model.assemble(&s);
    let mut report = SolveReport {
        state: s.clone(),
        energy: a.energy,
        energy_history: vec![a.energy],
        gradient_history: Vec::new(),
        step_history: Vec::new(),
        shift_history: Vec::new(),
        negative_eigenvalues: None,
        iterations: 0,
        status: SolveStatus::MaxIter,
        certificate: Certificate::NotConverged,
        effective_tolerance: opts.tolerance,
        roundoff_acceptances: 0,
    };
    let mut it = 0;
    loop {
        let g = &a.gradient;
        let gnorm = inf_norm(g);
        report.gradient_history.push(gnorm);
        let tol = opts.tolerance.max(gradient_floor(model, &a.hessian, &s.free_values(dm)));
        report.effective_tolerance = tol;
        if gnorm <= tol {
            report.status = SolveStatus::Converged;
            break;
        }
        if it == opts.max_iterations {
            report.status = SolveStatus::MaxIter;
            break;
        }
        let diag = a.hessian.diagonal();
        let scale = (diag.iter().map(|d| d.abs()).sum::<f64>() / diag.len().max(1) as f64).max(f64::MIN_POSITIVE);
        let mut tau = 0.0;
        let dir = loop {
            if let Ok(f) = Skyline::factor(&a.hessian, tau) {
                if f.is_positive_definite() {
                    let d: Vec<f64> = f.solve(g).into_iter().map(|v| -v).collect();
                    if dot(g, &d) < 0.0 && d.iter().all(|v| v.is_finite()) {
                        break d;
                    }
                }
            }
            tau = if tau == 0.0 { opts.shift_initial * scale } else { tau * opts.shift_growth };
            if tau > opts.shift_max * scale {
                log::debug!("shift limit reached, taking a gradient step");
                break g.iter().map(|v| -v / scale).collect();
            }
        };
        report.shift_history.push(tau);
        let slope = dot(g, &dir);
        let roundoff = 1e3 * f64::EPSILON * a.magnitude.max(a.energy.abs());
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = s.step(dm, alpha, &dir);
            let (e, gt) = model.energy_gradient(&trial);
            if e.is_finite() && e <= a.energy + opts.armijo * alpha * slope {
                break Some(trial);
            }
            if e.is_finite() && (alpha * slope).abs() <= roundoff && (e - a.energy).abs() <= roundoff && inf_norm(&gt) < gnorm {
                report.roundoff_acceptances += 1;
                break Some(trial);
            }
            alpha *= opts.backtrack;
            if alpha < opts.min_step {
                break None;
            }
        };
        let Some(next) = accepted else {
            report.status = SolveStatus::LineSearchFailure;
            break;
        };
        it += 1;
        s = next;
        a = model.assemble(&s);
        report.step_history.push(alpha);
        report.energy_history.push(a.energy);
        log::debug!("newton {it}: energy {:.15e}, |g| {:.3e}, step {alpha}, shift {tau:.2e}", a.energy, gnorm);
    }
    report.iterations = it;
    report.energy = a.energy;
    report.negative_eigenvalues = Skyline::factor(&a.hessian, 0.0).ok().map(|f| f.negative_pivots());
    report.certificate = match (report.status, report.negative_eigenvalues) {
        (SolveStatus::Converged, Some(0)) => Certificate::LocalMinimum,
        (SolveStatus::Converged, _) => Certificate::StationaryNotCertified,
        _ => Certificate::NotConverged,
    };
    report.state = s;
    Ok(report)
}

/// Minimizes from the initial state selected in `opts`.
pub fn solve(model: &Model, opts: &SolveOptions) -> Result<SolveReport> {
    let s0 = opts.initial_state(model)?;
    minimize(model, &s0, opts)
}

/// One step of a load continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub factor: f64,
    pub report: SolveReport,
    /// The warm start failed and this step was solved again from zero.
    pub cold_restart: bool,
}

/// Solves for the forces scaled by each factor, warm-starting from the previous solution.
pub fn continuation_sweep(model: &Model, factors: &[f64], opts: &SolveOptions) -> Result<Vec<ContinuationStep>> {
    if factors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("continuation factors must be increasing".into()));
    }
    let mut out: Vec<ContinuationStep> = Vec::with_capacity(factors.len());
    let mut start = opts.initial_state(model)?;
    for &t in factors {
        let mt = Model::with_options(
            model.plate.clone(),
            model.rod.clone(),
            model.material,
            model.forces.scaled(t),
            model.options,
        )?;
        let mut report = minimize(&mt, &start, opts)?;
        let mut cold = false;
        if !report.converged() && start.values.iter().any(|v| *v != 0.0) {
            log::warn!("continuation step {t} failed from the warm start; restarting from zero");
            report = minimize(&mt, &mt.zero_state(), opts)?;
            cold = true;
        }
        if report.converged() {
            start = report.state.clone();
        }
        out.push(ContinuationStep { factor: t, report, cold_restart: cold });
    }
    Ok(out)
}

/// Independent solves from random small initial states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiStart {
    pub reports: Vec<SolveReport>,
    /// Index of the converged report with the lowest energy.
    pub best: Option<usize>,
}

/// Runs `starts` solves from initial states with entries uniform in
/// [−amplitude, amplitude], start k seeded by `seed + k`.
pub fn multi_start(model: &Model, opts: &SolveOptions, starts: usize, amplitude: f64, seed: u64) -> Result<MultiStart> {
    let reports: Vec<SolveReport> = (0..starts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let x: Vec<f64> = (0..model.dofs.n_free()).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
            minimize(model, &LimitState::from_free(&model.dofs, &x), opts)
        })
        .collect::<Result<_>>()?;
    let best = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.converged())
        .min_by(|a, b| a.1.energy.total_cmp(&b.1.energy))
        .map(|(i, _)| i);
    Ok(MultiStart { reports, best })
}
