//! Full-batch limited-memory BFGS with a backtracking Armijo line search.

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    pub history: usize,
    /// Stop once the gradient norm falls below this.
    pub gradient_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            history: 10,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after each accepted step.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f`, which returns the objective and its gradient.
pub fn lbfgs_minimize<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsOutcome, TrainError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), TrainError>,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iterations && dot(&g, &g).sqrt() > cfg.gradient_tolerance {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let n = dot(&g, &g).sqrt();
            q.iter_mut().for_each(|v| *v /= n.max(1.0));
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            match f(&trial) {
                Ok((ft, gt)) if ft.is_finite() && ft <= fx + 1e-4 * step * slope => break Some((trial, ft, gt)),
                Ok(_) | Err(TrainError::Numerics(_)) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            if step < 1e-12 {
                break None;
            }
        };
        let Some((xn, fnew, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > cfg.history {
                hist.remove(0);
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
        iterations += 1;
        trace.push(fx);
    }
    Ok(LbfgsOutcome {
        x,
        value: fx,
        iterations,
        trace,
    })
}
