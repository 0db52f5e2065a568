//! Full-batch Adam and L-BFGS on flat parameter vectors.
//!
//! Objectives are `FnMut(&[f64]) -> Result<(loss, gradient)>`. Both drivers
//! are single-threaded and deterministic given identical inputs.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub adam_steps: usize,
    pub adam_lr: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub lbfgs_max_iters: usize,
    pub lbfgs_history: usize,
    pub lbfgs_grad_tol: f64,
    /// Strong-Wolfe constants `(c₁, c₂)`.
    pub wolfe: [f64; 2],
    /// Objective evaluations allowed per line search.
    pub line_search_max_evals: usize,
    /// Emit a progress log line every this many iterations (0 disables).
    pub log_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            adam_steps: 5000,
            adam_lr: 1e-3,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            lbfgs_max_iters: 2000,
            lbfgs_history: 10,
            lbfgs_grad_tol: 1e-9,
            wolfe: [1e-4, 0.9],
            line_search_max_evals: 25,
            log_every: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let [c1, c2] = self.wolfe;
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got ({c1}, {c2})"
            )));
        }
        if !(self.adam_lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "adam_lr must be positive, got {}",
                self.adam_lr
            )));
        }
        let [b1, b2] = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::InvalidArgument(format!(
                "adam_betas must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        if !(self.adam_eps >= 0.0) {
            return Err(Error::InvalidArgument("adam_eps must be non-negative".into()));
        }
        if self.lbfgs_history == 0 {
            return Err(Error::InvalidArgument("lbfgs_history must be at least 1".into()));
        }
        if !(self.lbfgs_grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("lbfgs_grad_tol must be non-negative".into()));
        }
        if self.line_search_max_evals == 0 {
            return Err(Error::InvalidArgument("line_search_max_evals must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

/// One recorded loss value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub step: usize,
    pub phase: Phase,
    pub loss: f64,
}

fn evaluate<F>(f: &mut F, x: &[f64], step: usize) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (loss, grad) = f(x)?;
    check_dim("objective gradient", x.len(), grad.len())?;
    if !loss.is_finite() {
        return Err(Error::OptimizerAbort {
            step,
            reason: format!("non-finite loss {loss}"),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::OptimizerAbort {
            step,
            reason: format!("non-finite gradient component {i}"),
        });
    }
    Ok((loss, grad))
}

/// Adam with bias correction. Returns the final parameters and the loss at
/// each step, evaluated before the update.
pub fn adam_minimize<F>(mut f: F, x0: &[f64], cfg: &OptimConfig) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let [b1, b2] = cfg.adam_betas;
    let mut x = x0.to_vec();
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let mut losses = Vec::with_capacity(cfg.adam_steps);
    let (mut p1, mut p2) = (1.0, 1.0);
    for step in 0..cfg.adam_steps {
        let (loss, g) = evaluate(&mut f, &x, step)?;
        losses.push(loss);
        if cfg.log_every > 0 && step % cfg.log_every == 0 {
            log::info!("adam step {step}: loss {loss:.6e}");
        }
        p1 *= b1;
        p2 *= b2;
        let (c1, c2) = (1.0 - p1, 1.0 - p2);
        for i in 0..x.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            if mh != 0.0 {
                x[i] -= cfg.adam_lr * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
    }
    Ok((x, losses))
}

/// Why L-BFGS stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No acceptable step was found; the result is the best iterate so far.
    LineSearchFailed,
}

/// Strong-Wolfe conditions measured on an accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolfeCheck {
    pub step_length: f64,
    pub sufficient_decrease: bool,
    pub curvature: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsReport {
    pub params: Vec<f64>,
    /// Loss at the start and after every accepted step.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    pub wolfe_checks: Vec<WolfeCheck>,
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, if it exists.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b - (b - a) * (db + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    evals_left: usize,
    evals: usize,
    step: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    /// Evaluates at `alpha`; a non-finite loss or residual is reported as `None`.
    fn probe(&mut self, alpha: f64) -> Result<Option<Trial>> {
        self.evals_left -= 1;
        self.evals += 1;
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + alpha * d).collect();
        match evaluate(self.f, &x, self.step) {
            Ok((f, g)) => {
                let dphi = dot(&g, self.d);
                Ok(Some(Trial { alpha, x, f, g, dphi }))
            }
            Err(Error::OptimizerAbort { .. } | Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.f <= self.f0 + self.c1 * t.alpha * self.dphi0
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.dphi.abs() <= -self.c2 * self.dphi0
    }

    fn run(&mut self, alpha_init: f64) -> Result<Option<Trial>> {
        let mut prev = Trial {
            alpha: 0.0,
            x: self.x.to_vec(),
            f: self.f0,
            g: Vec::new(),
            dphi: self.dphi0,
        };
        let mut alpha = alpha_init;
        let mut first = true;
        while self.evals_left > 0 {
            let Some(t) = self.probe(alpha)? else {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            };
            if !self.armijo(&t) || (!first && t.f >= prev.f) {
                return self.zoom(prev, t);
            }
            if self.curvature(&t) {
                return Ok(Some(t));
            }
            if t.dphi >= 0.0 {
                return self.zoom(t, prev);
            }
            alpha = 2.0 * t.alpha;
            prev = t;
            first = false;
        }
        Ok(None)
    }

    /// Bracket refinement; `lo` always satisfies sufficient decrease.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Result<Option<Trial>> {
        while self.evals_left > 0 {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= 1e-16 * b.max(1.0) {
                break;
            }
            let guess = cubic_min(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f, hi.dphi)
                .filter(|t| *t > a + 0.1 * width && *t < b - 0.1 * width)
                .unwrap_or(0.5 * (a + b));
            let Some(t) = self.probe(guess)? else {
                hi = failed_trial(guess);
                continue;
            };
            if !self.armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if self.curvature(&t) {
                    return Ok(Some(t));
                }
                if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        // Out of budget: fall back to the sufficient-decrease endpoint when it moved.
        Ok((lo.alpha > 0.0 && lo.f < self.f0).then_some(lo))
    }
}

/// Stand-in for a probe whose loss was non-finite.
fn failed_trial(alpha: f64) -> Trial {
    Trial {
        alpha,
        x: Vec::new(),
        f: f64::INFINITY,
        g: Vec::new(),
        dphi: f64::NAN,
    }
}

/// Two-loop recursion for `−H g`.
fn lbfgs_direction(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&y_hist[i], &s_hist[i])).collect();
    for i in (0..k).rev() {
        alphas[i] = rho[i] * dot(&s_hist[i], &q);
        q.iter_mut().zip(&y_hist[i]).for_each(|(q, y)| *q -= alphas[i] * y);
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        q.iter_mut().for_each(|q| *q *= gamma);
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_hist[i], &q);
        q.iter_mut().zip(&s_hist[i]).for_each(|(q, s)| *q += (alphas[i] - beta) * s);
    }
    q.iter_mut().for_each(|q| *q = -*q);
    q
}

/// L-BFGS with a strong-Wolfe line search. Accepted losses never increase.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], cfg: &OptimConfig) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let [c1, c2] = cfg.wolfe;
    let mut x = x0.to_vec();
    let (mut fx, mut g) = evaluate(&mut f, &x, 0)?;
    let mut report = LbfgsReport {
        params: Vec::new(),
        losses: vec![fx],
        iterations: 0,
        evaluations: 1,
        status: LbfgsStatus::MaxIterations,
        wolfe_checks: Vec::new(),
    };
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    if norm(&g) <= cfg.lbfgs_grad_tol {
        report.status = LbfgsStatus::Converged;
    }
    while report.status != LbfgsStatus::Converged && report.iterations < cfg.lbfgs_max_iters {
        let mut d = lbfgs_direction(&g, &s_hist, &y_hist);
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
        }
        let alpha_init = if s_hist.is_empty() {
            (1.0 / norm(&g)).min(1.0)
        } else {
            1.0
        };
        let mut ls = LineSearch {
            f: &mut f,
            x: &x,
            d: &d,
            f0: fx,
            dphi0,
            c1,
            c2,
            evals_left: cfg.line_search_max_evals,
            evals: 0,
            step: report.iterations + 1,
        };
        let accepted = ls.run(alpha_init)?;
        report.evaluations += ls.evals;
        let Some(t) = accepted else {
            if !s_hist.is_empty() {
                // Curvature pairs may be stale; retry along steepest descent.
                s_hist.clear();
                y_hist.clear();
                continue;
            }
            log::warn!(
                "L-BFGS line search failed at iteration {} (loss {fx:.6e})",
                report.iterations
            );
            report.status = LbfgsStatus::LineSearchFailed;
            break;
        };
        report.wolfe_checks.push(WolfeCheck {
            step_length: t.alpha,
            sufficient_decrease: t.f <= fx + c1 * t.alpha * dphi0,
            curvature: t.dphi.abs() <= -c2 * dphi0,
        });
        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if s_hist.len() == cfg.lbfgs_history {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        x = t.x;
        fx = t.f;
        g = t.g;
        report.iterations += 1;
        report.losses.push(fx);
        if cfg.log_every > 0 && report.iterations % cfg.log_every == 0 {
            log::info!("lbfgs iteration {}: loss {fx:.6e}", report.iterations);
        }
        if norm(&g) <= cfg.lbfgs_grad_tol {
            report.status = LbfgsStatus::Converged;
        }
    }
    report.params = x;
    Ok(report)
}

/// Outcome of the Adam → L-BFGS schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub params: Vec<f64>,
    pub history: Vec<LossEntry>,
    pub lbfgs_status: Option<LbfgsStatus>,
    pub final_loss: f64,
}

/// Adam for `adam_steps`, then L-BFGS from the Adam iterate.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &OptimConfig) -> Result<TrainReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (x, adam_losses) = adam_minimize(&mut f, x0, cfg)?;
    let mut history: Vec<LossEntry> = adam_losses
        .iter()
        .enumerate()
        .map(|(step, &loss)| LossEntry {
            step,
            phase: Phase::Adam,
            loss,
        })
        .collect();
    if cfg.lbfgs_max_iters == 0 {
        let (final_loss, _) = evaluate(&mut f, &x, cfg.adam_steps)?;
        return Ok(TrainReport {
            params: x,
            history,
            lbfgs_status: None,
            final_loss,
        });
    }
    let report = lbfgs_minimize(&mut f, &x, cfg).map_err(|e| match e {
        Error::OptimizerAbort { step, reason } => Error::OptimizerAbort {
            step: cfg.adam_steps + step,
            reason,
        },
        other => other,
    })?;
    history.extend(report.losses.iter().enumerate().map(|(i, &loss)| LossEntry {
        step: cfg.adam_steps + i,
        phase: Phase::Lbfgs,
        loss,
    }));
    Ok(TrainReport {
        final_loss: *report.losses.last().expect("initial loss recorded"),
        params: report.params,
        history,
        lbfgs_status: Some(report.status),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_min_of_exact_cubic() {
        // φ(t) = (t − 2)² has minimizer 2; a cubic fit through two points recovers it.
        let phi = |t: f64| (t - 2.0).powi(2);
        let dphi = |t: f64| 2.0 * (t - 2.0);
        let t = cubic_min(0.0, phi(0.0), dphi(0.0), 5.0, phi(5.0), dphi(5.0)).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        let bad = OptimConfig {
            wolfe: [0.9, 0.1],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimConfig {
            lbfgs_history: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimConfig {
            adam_lr: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn direction_without_history_is_steepest_descent() {
        assert_eq!(lbfgs_direction(&[1.0, -2.0], &[], &[]), vec![-1.0, 2.0]);
    }
}
