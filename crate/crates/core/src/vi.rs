//! Box-constrained variational inequalities.
//!
//! The game is stacked into one vector `X = (Q, u, lambda)`: all quantities in
//! row-major order, then the `m` security levels, then the `m` budget
//! multipliers. The operator is the concatenation of every retailer's
//! Lagrangian gradient in its own block, with the multiplier component
//! `-G(u_x) = B_x + ln(1 - u_x)` so that the projected update raises the
//! multiplier while the budget is violated.

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Hard cap on security levels, strictly below 1 so that `ln(1 - u)` stays
/// finite. The budget itself is enforced through the multiplier.
pub const U_CAP: f64 = 0.999_999;

/// Largest budget overshoot `G_x` a solution may carry.
pub const BUDGET_FEASIBILITY_TOL: f64 = 1e-8;

/// Largest `lambda_x |G_x|` a solution may carry.
pub const COMPLEMENTARITY_TOL: f64 = 1e-6;

/// A variational inequality over a box `{ lower <= x <= upper }`.
pub trait BoxVi {
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn operator(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn dim(&self) -> usize {
        self.lower().len()
    }

    fn project_in_place(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(self.lower()).zip(self.upper()) {
            *v = v.max(*lo).min(*hi);
        }
    }

    /// Extra acceptance test applied on top of the natural residual before
    /// the solver stops. `fx` is `F(x)`.
    fn accepts(&self, _x: &[f64], _fx: &[f64]) -> bool {
        true
    }

    fn check_feasible(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (index, ((&value, &lower), &upper)) in x.iter().zip(self.lower()).zip(self.upper()).enumerate() {
            if !(value >= lower && value <= upper) {
                return Err(Error::Infeasible {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }
}

/// `max_i |x_i - P(x_i - F_i(x))|` given a precomputed `F(x)`.
pub fn residual_from_operator<P: BoxVi + ?Sized>(problem: &P, x: &[f64], fx: &[f64]) -> f64 {
    x.iter()
        .zip(fx)
        .zip(problem.lower().iter().zip(problem.upper()))
        .map(|((&xi, &fi), (&lo, &hi))| (xi - (xi - fi).max(lo).min(hi)).abs())
        .fold(0.0, f64::max)
}

/// Natural residual `||X - P(X - F(X))||_inf`; zero exactly at solutions.
pub fn natural_residual<P: BoxVi + ?Sized>(problem: &P, x: &[f64]) -> Result<f64> {
    problem.check_feasible(x)?;
    let mut fx = vec![0.0; x.len()];
    problem.operator(x, &mut fx)?;
    Ok(residual_from_operator(problem, x, &fx))
}

/// Stacked strategy profile of the game.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    pub m: usize,
    pub n: usize,
    /// Row-major `m x n`.
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl DecisionVector {
    /// Uniform starting point: every quantity `q0`, every level `u0`, no multipliers.
    pub fn uniform(m: usize, n: usize, q0: f64, u0: f64) -> Self {
        Self {
            m,
            n,
            q: vec![q0; m * n],
            u: vec![u0; m],
            lambda: vec![0.0; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.m * self.n + 2 * self.m
    }

    pub fn q_at(&self, x: usize, y: usize) -> f64 {
        self.q[x * self.n + y]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.lambda);
        v
    }

    pub fn from_flat(m: usize, n: usize, flat: &[f64]) -> Result<Self> {
        let expected = m * n + 2 * m;
        if flat.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: flat.len(),
            });
        }
        let (q, rest) = flat.split_at(m * n);
        let (u, lambda) = rest.split_at(m);
        Ok(Self {
            m,
            n,
            q: q.to_vec(),
            u: u.to_vec(),
            lambda: lambda.to_vec(),
        })
    }
}

/// Label of a flat component, e.g. `Q_1_2`, `u_2`, `lambda_1` (one-based).
pub fn component_name(m: usize, n: usize, index: usize) -> String {
    let qn = m * n;
    if index < qn {
        format!("Q_{}_{}", index / n + 1, index % n + 1)
    } else if index < qn + m {
        format!("u_{}", index - qn + 1)
    } else {
        format!("lambda_{}", index - qn - m + 1)
    }
}

/// The game's variational inequality.
#[derive(Clone, Debug)]
pub struct ViProblem {
    model: ModelSpec,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ViProblem {
    pub fn new(model: ModelSpec) -> Result<Self> {
        model.validate()?;
        let (m, n) = (model.m(), model.n());
        let lower = vec![0.0; m * n + 2 * m];
        let mut upper = Vec::with_capacity(lower.len());
        upper.extend(std::iter::repeat_n(model.q_upper, m * n));
        upper.extend(std::iter::repeat_n(U_CAP, m));
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        Ok(Self { model, lower, upper })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn split(&self, flat: &[f64]) -> Result<DecisionVector> {
        DecisionVector::from_flat(self.m(), self.n(), flat)
    }

    /// Flat indices of retailer `x`'s own block: its quantities, level and multiplier.
    pub fn block_indices(&self, x: usize) -> Vec<usize> {
        let (m, n) = (self.m(), self.n());
        let mut idx: Vec<usize> = (x * n..(x + 1) * n).collect();
        idx.push(m * n + x);
        idx.push(m * n + m + x);
        idx
    }

    /// Stacked operator `F(X)`.
    pub fn assemble_operator(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.operator(x, &mut out)?;
        Ok(out)
    }

    /// Clamp onto the box. Idempotent.
    pub fn project(&self, x: &DecisionVector) -> Result<DecisionVector> {
        let mut flat = x.to_flat();
        if flat.len() != self.dim() || x.m != self.m() || x.n != self.n() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: flat.len(),
            });
        }
        self.project_in_place(&mut flat);
        self.split(&flat)
    }

    pub fn natural_residual(&self, x: &DecisionVector) -> Result<f64> {
        natural_residual(self, &x.to_flat())
    }
}

impl BoxVi for ViProblem {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Budgets feasible and complementary slackness within tolerance. The
    /// multiplier components of `F` are `-G_x`.
    fn accepts(&self, x: &[f64], fx: &[f64]) -> bool {
        let m = self.m();
        let start = m * self.n() + m;
        x[start..].iter().zip(&fx[start..]).all(|(&lambda, &neg_gap)| {
            -neg_gap <= BUDGET_FEASIBILITY_TOL && lambda * neg_gap.abs() <= COMPLEMENTARITY_TOL
        })
    }

    fn operator(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let model = &self.model;
        let (m, n) = (model.m(), model.n());
        let dim = m * n + 2 * m;
        if x.len() != dim || out.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: x.len().min(out.len()),
            });
        }
        let (q, rest) = x.split_at(m * n);
        let (u, lambda) = rest.split_at(m);
        for &ux in u {
            if !(ux < 1.0) || ux.is_nan() {
                return Err(Error::SecurityDomain(ux));
            }
        }
        let mf = m as f64;
        let u_bar = u.iter().sum::<f64>() / mf;

        let mut prices = Vec::with_capacity(n);
        for (y, mk) in model.markets.iter().enumerate() {
            let d: f64 = (0..m).map(|k| q[k * n + y]).sum();
            prices.push(mk.price_at(d, u_bar));
        }

        let (f1, rest) = out.split_at_mut(m * n);
        let (f2, f3) = rest.split_at_mut(m);
        for (x_idx, r) in model.retailers.iter().enumerate() {
            let row = &q[x_idx * n..(x_idx + 1) * n];
            for (y, mk) in model.markets.iter().enumerate() {
                let qxy = row[y];
                // Only market y's price moves with Q_xy.
                f1[x_idx * n + y] = r.handling_cost + r.costs[y].marginal(qxy) - prices[y] - mk.alpha * qxy;
            }

            let one_minus = 1.0 - u[x_idx];
            let multiplier = if model.loss_gradient_includes_multiplier {
                r.attack_multiplier
            } else {
                1.0
            };
            let revenue_gain: f64 = model
                .markets
                .iter()
                .zip(row)
                .map(|(mk, &qxy)| mk.gamma / mf * qxy)
                .sum();
            f2[x_idx] = 1.0 / one_minus - r.base_loss * multiplier * ((1.0 - u_bar) + one_minus / mf) - revenue_gain
                + lambda[x_idx] / one_minus;

            f3[x_idx] = r.budget + one_minus.ln();
        }
        Ok(())
    }
}

/// `F(x) = A x + b` over a box; used to validate the solver on instances with
/// known solutions.
#[derive(Clone, Debug)]
pub struct AffineVi {
    /// Row-major `dim x dim`.
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AffineVi {
    pub fn new(matrix: Vec<f64>, offset: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let dim = offset.len();
        if matrix.len() != dim * dim || lower.len() != dim || upper.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: lower.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidModel("box lower bound exceeds upper bound".into()));
        }
        Ok(Self {
            matrix,
            offset,
            lower,
            upper,
        })
    }

    /// `F(x) = x - 3` on `[0, 10]`.
    pub fn scalar(slope: f64, offset: f64, lower: f64, upper: f64) -> Self {
        Self {
            matrix: vec![slope],
            offset: vec![offset],
            lower: vec![lower],
            upper: vec![upper],
        }
    }
}

impl BoxVi for AffineVi {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn operator(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.offset.len();
        if x.len() != dim || out.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[i * dim..(i + 1) * dim];
            *o = row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + self.offset[i];
        }
        Ok(())
    }
}

/// Outcome of comparing the analytic operator with finite differences.
#[derive(Clone, Debug)]
pub struct FdReport {
    /// Relative error per checked flat component (quantities and levels).
    pub errors: Vec<(usize, f64)>,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compare the quantity and level components of `F(X)` against fourth-order
/// central differences (stencil `x +- h`, `x +- 2h`) of each retailer's Lagrangian `-E(U_x) + lambda_x G(u_x)` in
/// its own variables, rivals held fixed.
///
/// Relative error is `|F - FD| / max(|F|, |FD|, 1)`.
pub fn fd_check(problem: &ViProblem, x: &[f64], step: f64) -> Result<FdReport> {
    if !(1e-7..=1e-4).contains(&step) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {step} outside [1e-7, 1e-4]"
        )));
    }
    problem.check_feasible(x)?;
    let model = problem.model();
    let (m, n) = (model.m(), model.n());
    let checked = m * n + m;
    let bounds = problem.lower().iter().zip(problem.upper());
    for (index, (&v, (&lo, &hi))) in x.iter().zip(bounds).enumerate().take(checked) {
        let margin = (v - lo).min(hi - v);
        if margin < 2.0 * step {
            return Err(Error::TooCloseToBoundary { index, margin, step });
        }
    }

    let analytic = problem.assemble_operator(x)?;
    let dv = problem.split(x)?;
    let lagrangian = |retailer: usize, q: &[f64], u: &[f64]| -> Result<f64> {
        let r = &model.retailers[retailer];
        let gap = crate::model::budget_gap(u[retailer], r.budget)?;
        Ok(-model.expected_utility(retailer, q, u)? + dv.lambda[retailer] * gap)
    };

    let mut errors = Vec::with_capacity(checked);
    for index in 0..checked {
        let retailer = if index < m * n { index / n } else { index - m * n };
        let mut q = dv.q.clone();
        let mut u = dv.u.clone();
        let mut eval = |delta: f64| -> Result<f64> {
            if index < m * n {
                q[index] = dv.q[index] + delta;
            } else {
                u[retailer] = dv.u[retailer] + delta;
            }
            lagrangian(retailer, &q, &u)
        };
        let near = eval(step)? - eval(-step)?;
        let far = eval(2.0 * step)? - eval(-2.0 * step)?;
        let fd = (8.0 * near - far) / (12.0 * step);
        let a = analytic[index];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
        errors.push((index, rel));
    }
    let (worst_index, max_rel_error) = errors
        .iter()
        .copied()
        .fold((0, 0.0), |best, e| if e.1 > best.1 { e } else { best });
    Ok(FdReport {
        errors,
        max_rel_error,
        worst_index,
    })
}

/// `count` reproducible points strictly inside the game box, suitable for
/// [`fd_check`] with steps up to `margin / 2`: quantities in
/// `[margin, 0.6 q_upper]`, levels in `[0.01, 0.98]`, multipliers in `[0, 10]`.
pub fn random_interior_points(problem: &ViProblem, count: usize, margin: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (problem.m(), problem.n());
    let q_hi = (0.6 * problem.model().q_upper).max(2.0 * margin);
    (0..count)
        .map(|_| {
            let mut x = Vec::with_capacity(m * n + 2 * m);
            x.extend((0..m * n).map(|_| rng.gen_range(margin..q_hi)));
            x.extend((0..m).map(|_| rng.gen_range(0.01_f64.max(margin)..0.98)));
            x.extend((0..m).map(|_| rng.gen_range(0.0..10.0)));
            x
        })
        .collect()
}
