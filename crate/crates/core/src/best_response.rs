//! Alternating (Gauss-Seidel) best responses: each retailer's own block is
//! solved with rivals frozen, retailer by retailer, until the stacked
//! profile solves the full variational inequality.

use crate::error::Result;
use crate::pc::{self, SolverConfig, SolverReport};
use crate::vi::{residual_from_operator, BoxVi, ViProblem};

/// Sweeps without a new best residual before the iteration is declared to
/// be cycling.
pub const CYCLE_WINDOW: usize = 50;

/// One retailer's block of the game with every other component fixed.
struct BlockVi<'a> {
    full: &'a ViProblem,
    indices: Vec<usize>,
    frozen: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> BlockVi<'a> {
    fn new(full: &'a ViProblem, retailer: usize, frozen: &[f64]) -> Self {
        let indices = full.block_indices(retailer);
        let lower = indices.iter().map(|&i| full.lower()[i]).collect();
        let upper = indices.iter().map(|&i| full.upper()[i]).collect();
        Self {
            full,
            indices,
            frozen: frozen.to_vec(),
            lower,
            upper,
        }
    }

    fn embed(&self, block: &[f64]) -> Vec<f64> {
        let mut x = self.frozen.clone();
        for (&i, &v) in self.indices.iter().zip(block) {
            x[i] = v;
        }
        x
    }

    fn extract(&self, x: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| x[i]).collect()
    }
}

impl BoxVi for BlockVi<'_> {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn accepts(&self, x: &[f64], fx: &[f64]) -> bool {
        let full_x = self.embed(x);
        let mut full_f = vec![0.0; full_x.len()];
        for (&i, &v) in self.indices.iter().zip(fx) {
            full_f[i] = v;
        }
        // Components outside the block are zeroed, so only this block is tested.
        self.full.accepts(&full_x, &full_f)
    }

    fn operator(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let full_x = self.embed(x);
        let mut full_f = vec![0.0; full_x.len()];
        self.full.operator(&full_x, &mut full_f)?;
        for (o, &i) in out.iter_mut().zip(&self.indices) {
            *o = full_f[i];
        }
        Ok(())
    }
}

/// Gauss-Seidel best-response iteration from `x0`. Each block is solved to
/// a tenth of `config.tol`; `iterations` in the report counts sweeps and
/// `beta_retries` sums the inner solves' retries. Stops once the full
/// natural residual is within `config.tol` (and the problem accepts the
/// point), or reports `converged = false` after `config.max_iter` sweeps or
/// when the residual has not improved for [`CYCLE_WINDOW`] sweeps.
pub fn best_response_solve(problem: &ViProblem, config: &SolverConfig, x0: &[f64]) -> Result<SolverReport> {
    config.validate()?;
    problem.check_feasible(x0)?;
    let inner = SolverConfig {
        tol: config.tol * 0.1,
        record_trace: false,
        ..config.clone()
    };

    let mut x = x0.to_vec();
    let mut fx = problem.assemble_operator(&x)?;
    let mut residual = residual_from_operator(problem, &x, &fx);
    let mut converged = residual <= config.tol && problem.accepts(&x, &fx);
    let mut sweeps = 0usize;
    let mut retries = 0usize;
    let mut best = residual;
    let mut stale = 0usize;
    let mut beta = config.beta0;

    while !converged && sweeps < config.max_iter {
        for retailer in 0..problem.m() {
            let block = BlockVi::new(problem, retailer, &x);
            let start = block.extract(&x);
            let report = pc::solve(&block, &inner, &start)?;
            retries += report.beta_retries;
            beta = report.final_beta;
            for (&i, &v) in block.indices.iter().zip(&report.solution) {
                x[i] = v;
            }
        }
        sweeps += 1;

        fx = problem.assemble_operator(&x)?;
        residual = residual_from_operator(problem, &x, &fx);
        converged = residual <= config.tol && problem.accepts(&x, &fx);
        if residual < best {
            best = residual;
            stale = 0;
        } else {
            stale += 1;
            if stale >= CYCLE_WINDOW {
                break;
            }
        }
    }

    Ok(SolverReport {
        solution: x,
        iterations: sweeps,
        final_residual: residual,
        converged,
        beta_retries: retries,
        final_beta: beta,
        trace: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::experiment1;

    #[test]
    fn block_embeds_and_extracts_its_own_components() {
        let s = experiment1();
        let problem = s.problem().unwrap();
        let x: Vec<f64> = (0..problem.dim()).map(|i| i as f64).collect();
        let block = BlockVi::new(&problem, 1, &x);
        let own = block.extract(&x);
        assert_eq!(own, block.indices.iter().map(|&i| i as f64).collect::<Vec<_>>());
        let replaced = block.embed(&vec![-1.0; own.len()]);
        for (i, v) in replaced.iter().enumerate() {
            if block.indices.contains(&i) {
                assert_eq!(*v, -1.0);
            } else {
                assert_eq!(*v, x[i]);
            }
        }
    }

    #[test]
    fn block_operator_is_a_slice_of_the_full_operator() {
        let s = experiment1();
        let problem = s.problem().unwrap();
        let x = s.initial.to_flat();
        let full = problem.assemble_operator(&x).unwrap();
        let block = BlockVi::new(&problem, 0, &x);
        let mut out = vec![0.0; block.indices.len()];
        block.operator(&block.extract(&x), &mut out).unwrap();
        for (o, &i) in out.iter().zip(&block.indices) {
            assert_eq!(*o, full[i]);
        }
    }

    #[test]
    fn start_at_solution_needs_no_sweeps() {
        let s = experiment1();
        let problem = s.problem().unwrap();
        let solved = s.solve().unwrap();
        let r = best_response_solve(&problem, &s.solver, &solved.report.solution).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }
}
