//! Self-adaptive projection-contraction method for box-constrained
//! variational inequalities.
//!
//! Each iteration predicts `X~ = P(X - beta F(X))`, measures the local ratio
//! `r = beta |F(X) - F(X~)| / |X - X~|`, shrinks `beta` and re-predicts while
//! `r > nu`, then corrects along `d = (X - X~) - beta (F(X) - F(X~))` with the
//! relaxed step `rho * delta`. A step is enlarged by 1.5 after iterations with
//! `r <= mu`. Norms are Euclidean over the flat vector.

use crate::error::{Error, Result};
use crate::vi::{residual_from_operator, BoxVi};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub beta0: f64,
    /// Upper limit on the ratio `r`; predictions above it are redone.
    pub nu: f64,
    /// Ratio below which the step is enlarged.
    pub mu: f64,
    /// Relaxation factor of the correction step, in (0, 2).
    pub rho: f64,
    /// Natural-residual threshold (infinity norm).
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta0: 1.0,
            nu: 0.9,
            mu: 0.3,
            rho: 1.9,
            tol: 1e-7,
            max_iter: 200_000,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return bad("beta0 must be positive and finite");
        }
        if !(0.0 < self.mu && self.mu < self.nu && self.nu < 1.0) {
            return bad("ratio limits must satisfy 0 < mu < nu < 1");
        }
        if !(0.0 < self.rho && self.rho < 2.0) {
            return bad("relaxation factor rho must lie in (0, 2)");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub beta: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverReport {
    /// Flat solution vector; see [`crate::vi::ViProblem::split`] for games.
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub beta_retries: usize,
    pub final_beta: f64,
    pub trace: Option<Vec<TraceRow>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub predicted: Vec<f64>,
    pub f_predicted: Vec<f64>,
    pub ratio: f64,
    /// `X~ == X`, so `X` solves the VI.
    pub at_solution: bool,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

/// Prediction step at `x` given `fx = F(x)`.
pub fn predict<P: BoxVi + ?Sized>(problem: &P, x: &[f64], fx: &[f64], beta: f64) -> Result<Prediction> {
    let mut predicted: Vec<f64> = x.iter().zip(fx).map(|(xi, fi)| xi - beta * fi).collect();
    problem.project_in_place(&mut predicted);
    let mut f_predicted = vec![0.0; x.len()];
    problem.operator(&predicted, &mut f_predicted)?;
    let dx = norm(x.iter().zip(&predicted).map(|(a, b)| a - b));
    if dx == 0.0 {
        return Ok(Prediction {
            predicted,
            f_predicted,
            ratio: 0.0,
            at_solution: true,
        });
    }
    let df = norm(fx.iter().zip(&f_predicted).map(|(a, b)| a - b));
    Ok(Prediction {
        predicted,
        f_predicted,
        ratio: beta * df / dx,
        at_solution: false,
    })
}

/// Correction step `X+ = X - rho delta d`. The result is not projected.
pub fn correct(x: &[f64], predicted: &[f64], beta: f64, fx: &[f64], f_predicted: &[f64], rho: f64) -> Result<Vec<f64>> {
    let diff: Vec<f64> = x.iter().zip(predicted).map(|(a, b)| a - b).collect();
    let d: Vec<f64> = diff
        .iter()
        .zip(fx.iter().zip(f_predicted))
        .map(|(e, (f, ft))| e - beta * (f - ft))
        .collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    if dd == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let delta = diff.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / dd;
    Ok(x.iter().zip(&d).map(|(xi, di)| xi - rho * delta * di).collect())
}

fn check_finite(v: &[f64], iteration: usize) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// Run the method from the feasible point `x0` until the natural residual is
/// at most `tol` and the problem's [`BoxVi::accepts`] test passes. Running
/// out of iterations is reported through `converged = false`, not as an
/// error.
pub fn solve<P: BoxVi + ?Sized>(problem: &P, config: &SolverConfig, x0: &[f64]) -> Result<SolverReport> {
    solve_observed(problem, config, x0, |_, _| {})
}

/// [`solve`], calling `observe(k, x)` with every iterate `X^k`, starting
/// from `X^0`.
pub fn solve_observed<P, O>(problem: &P, config: &SolverConfig, x0: &[f64], mut observe: O) -> Result<SolverReport>
where
    P: BoxVi + ?Sized,
    O: FnMut(usize, &[f64]),
{
    config.validate()?;
    problem.check_feasible(x0)?;

    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut fx = vec![0.0; dim];
    let mut beta = config.beta0;
    let mut retries = 0usize;
    let mut trace = config.record_trace.then(Vec::new);

    let mut iteration = 0usize;
    let mut residual;
    let mut accepted;
    loop {
        observe(iteration, &x);
        problem.operator(&x, &mut fx)?;
        check_finite(&fx, iteration)?;
        residual = residual_from_operator(problem, &x, &fx);
        accepted = residual <= config.tol && problem.accepts(&x, &fx);
        if accepted || iteration >= config.max_iter {
            break;
        }

        let prediction = loop {
            let p = predict(problem, &x, &fx, beta)?;
            check_finite(&p.f_predicted, iteration)?;
            if p.at_solution || p.ratio <= config.nu {
                break p;
            }
            // F(X) is unchanged when only beta shrinks.
            beta *= (2.0 / 3.0) * (1.0 / p.ratio).min(1.0);
            retries += 1;
        };
        if prediction.at_solution {
            residual = 0.0;
            accepted = problem.accepts(&x, &fx);
            break;
        }

        let mut next = correct(
            &x,
            &prediction.predicted,
            beta,
            &fx,
            &prediction.f_predicted,
            config.rho,
        )?;
        problem.project_in_place(&mut next);
        x = next;

        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                iteration,
                residual,
                beta,
                ratio: prediction.ratio,
            });
        }
        if prediction.ratio <= config.mu {
            beta *= 1.5;
        }
        iteration += 1;
    }

    Ok(SolverReport {
        solution: x,
        iterations: iteration,
        final_residual: residual,
        converged: accepted,
        beta_retries: retries,
        final_beta: beta,
        trace,
    })
}

/// Trace rows as CSV (`iteration,residual,beta,r`).
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["iteration", "residual", "beta", "r"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.residual.to_string(),
            r.beta.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    w.flush()
}
