//! Built-in experiments, one-parameter sweeps and crossing detection.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{budget_gap, mean_security, Market, ModelSpec, Retailer, TransactionCost, DEFAULT_Q_UPPER};
use crate::pc::{self, SolverConfig, SolverReport};
use crate::vi::{BoxVi, DecisionVector, ViProblem};

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSpec,
    pub initial: DecisionVector,
    pub solver: SolverConfig,
}

/// A solved scenario with the quantities every report needs.
#[derive(Clone, Debug)]
pub struct Solved {
    pub problem: ViProblem,
    pub report: SolverReport,
    pub decision: DecisionVector,
    pub utilities: Vec<f64>,
    pub budget_gaps: Vec<f64>,
    pub mean_level: f64,
}

impl Solved {
    pub fn from_report(problem: ViProblem, report: SolverReport) -> Result<Self> {
        let decision = problem.split(&report.solution)?;
        let model = problem.model();
        let utilities = (0..model.m())
            .map(|x| model.expected_utility(x, &decision.q, &decision.u))
            .collect::<Result<Vec<_>>>()?;
        let budget_gaps = model
            .retailers
            .iter()
            .zip(&decision.u)
            .map(|(r, &u)| budget_gap(u, r.budget))
            .collect::<Result<Vec<_>>>()?;
        let mean_level = mean_security(&decision.u)?;
        Ok(Self {
            problem,
            report,
            decision,
            utilities,
            budget_gaps,
            mean_level,
        })
    }

    /// Largest `lambda_x |G_x|`.
    pub fn max_complementarity(&self) -> f64 {
        self.decision
            .lambda
            .iter()
            .zip(&self.budget_gaps)
            .map(|(l, g)| l * g.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_budget_gap(&self) -> f64 {
        self.budget_gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Scenario {
    pub fn problem(&self) -> Result<ViProblem> {
        let problem = ViProblem::new(self.model.clone())?;
        if self.initial.m != self.model.m() || self.initial.n != self.model.n() {
            return Err(Error::Dimension {
                expected: problem.dim(),
                got: self.initial.dim(),
            });
        }
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let problem = self.problem()?;
        problem.check_feasible(&self.initial.to_flat())?;
        self.solver.validate()
    }

    pub fn solve(&self) -> Result<Solved> {
        self.solve_from(&self.initial)
    }

    pub fn solve_from(&self, start: &DecisionVector) -> Result<Solved> {
        let problem = self.problem()?;
        let report = pc::solve(&problem, &self.solver, &start.to_flat())?;
        Solved::from_report(problem, report)
    }
}

/// Two-market family where every retailer's costs, budget, loss and attack
/// multiplier scale with `1 + t_x`.
pub fn share_scaled_model(shares: &[f64]) -> ModelSpec {
    let retailers = shares
        .iter()
        .map(|&t| {
            let s = 1.0 + t;
            Retailer {
                handling_cost: 10.0 * s,
                budget: 3.0 * s,
                base_loss: 100.0 * s,
                market_share: t,
                attack_multiplier: s,
                costs: vec![TransactionCost::new(1.0, 2.0, s), TransactionCost::new(0.5, 2.0, s)],
            }
        })
        .collect();
    ModelSpec {
        retailers,
        markets: vec![Market::new(-2.0, 0.2, 120.0), Market::new(-1.0, 0.4, 250.0)],
        q_upper: DEFAULT_Q_UPPER,
        loss_gradient_includes_multiplier: true,
    }
}

fn share_scaled_scenario(name: &str, shares: &[f64]) -> Scenario {
    let model = share_scaled_model(shares);
    let initial = DecisionVector::uniform(model.m(), model.n(), 1.0, 0.0);
    Scenario {
        name: name.to_string(),
        model,
        initial,
        solver: SolverConfig::default(),
    }
}

/// Two retailers (shares 0.76 / 0.24), two markets.
pub fn experiment1() -> Scenario {
    share_scaled_scenario("exp1", &[0.76, 0.24])
}

/// `experiment1` with a third entrant; shares 0.71 / 0.20 / 0.09.
pub fn experiment5() -> Scenario {
    share_scaled_scenario("exp5", &[0.71, 0.20, 0.09])
}

pub const BUILTIN_SCENARIOS: [&str; 2] = ["exp1", "exp5"];

pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "exp1" => Some(experiment1()),
        "exp5" => Some(experiment5()),
        _ => None,
    }
}

/// Published reference outcomes the computed equilibria are compared with.
#[derive(Clone, Debug)]
pub struct Reference {
    pub scenario: &'static str,
    /// Row-major quantities, when reported.
    pub q: Option<&'static [f64]>,
    pub u: &'static [f64],
    pub mean_level: f64,
}

pub const REFERENCE_EXP1: Reference = Reference {
    scenario: "exp1",
    q: Some(&[10.94, 30.25, 11.78, 31.73]),
    u: &[0.96, 0.95],
    mean_level: 0.955,
};

pub const REFERENCE_EXP5: Reference = Reference {
    scenario: "exp5",
    q: None,
    u: &[0.55, 0.58, 0.59],
    mean_level: 0.573,
};

pub fn reference(name: &str) -> Option<&'static Reference> {
    match name {
        "exp1" => Some(&REFERENCE_EXP1),
        "exp5" => Some(&REFERENCE_EXP5),
        _ => None,
    }
}

/// Side-by-side comparison of reference and computed values, plus the
/// operator evaluated at the reference point (zero multipliers).
#[derive(Clone, Debug)]
pub struct Reconciliation {
    pub reference: Reference,
    pub computed: DecisionVector,
    pub computed_mean: f64,
    /// `F(X_ref)` for the quantity and level components, when the
    /// reference reports quantities.
    pub reference_operator: Option<Vec<f64>>,
}

pub fn reconcile(reference: &Reference, solved: &Solved) -> Result<Reconciliation> {
    let problem = &solved.problem;
    let reference_operator = match reference.q {
        Some(q) if q.len() == problem.m() * problem.n() && reference.u.len() == problem.m() => {
            let point = DecisionVector {
                m: problem.m(),
                n: problem.n(),
                q: q.to_vec(),
                u: reference.u.to_vec(),
                lambda: vec![0.0; problem.m()],
            };
            let mut f = problem.assemble_operator(&point.to_flat())?;
            f.truncate(problem.m() * problem.n() + problem.m());
            Some(f)
        }
        _ => None,
    };
    Ok(Reconciliation {
        reference: reference.clone(),
        computed: solved.decision.clone(),
        computed_mean: solved.mean_level,
        reference_operator,
    })
}

impl fmt::Display for Reconciliation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.computed;
        writeln!(
            f,
            "reconciliation against reference values ({})",
            self.reference.scenario
        )?;
        writeln!(f, "  {:<10} {:>12} {:>12}", "", "reference", "computed")?;
        if let Some(q) = self.reference.q {
            for (i, (r, v)) in q.iter().zip(&c.q).enumerate() {
                let name = format!("Q_{}_{}", i / c.n + 1, i % c.n + 1);
                writeln!(f, "  {name:<10} {r:>12.4} {v:>12.4}")?;
            }
        }
        for (i, (r, v)) in self.reference.u.iter().zip(&c.u).enumerate() {
            writeln!(f, "  {:<10} {r:>12.4} {v:>12.4}", format!("u_{}", i + 1))?;
        }
        writeln!(
            f,
            "  {:<10} {:>12.4} {:>12.4}",
            "u_bar", self.reference.mean_level, self.computed_mean
        )?;
        match &self.reference_operator {
            Some(op) => {
                writeln!(
                    f,
                    "  stationarity residual F(X) at the reference point (zero means stationary):"
                )?;
                for (i, v) in op.iter().enumerate() {
                    writeln!(f, "    {:<10} {v:>12.4}", crate::vi::component_name(c.m, c.n, i))?;
                }
            }
            None => writeln!(
                f,
                "  reference reports no quantities; levels are recorded but not reconciled"
            )?,
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Budget,
    Loss,
    Share,
    HandlingCost,
    AttackMultiplier,
}

/// What happens to the other retailers when one share moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShareCoupling {
    /// Others are rescaled proportionally so shares sum to one; for two
    /// retailers this is `t_2 = 1 - t_1`.
    #[default]
    Complement,
    None,
}

/// A retailer-indexed parameter such as `B1`, `D1`, `t2`, `c1` or `mu3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepParam {
    pub kind: ParamKind,
    /// Zero-based.
    pub retailer: usize,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (prefix, digits) = s.split_at(split);
        let kind = match prefix {
            "B" => ParamKind::Budget,
            "D" => ParamKind::Loss,
            "t" => ParamKind::Share,
            "c" => ParamKind::HandlingCost,
            "mu" => ParamKind::AttackMultiplier,
            _ => return Err(Error::InvalidSweep(format!("unknown parameter path `{s}`"))),
        };
        let index: usize = digits
            .parse()
            .map_err(|_| Error::InvalidSweep(format!("parameter path `{s}` needs a retailer number")))?;
        if index == 0 {
            return Err(Error::InvalidSweep("retailers are numbered from 1".into()));
        }
        Ok(Self {
            kind,
            retailer: index - 1,
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            ParamKind::Budget => "B",
            ParamKind::Loss => "D",
            ParamKind::Share => "t",
            ParamKind::HandlingCost => "c",
            ParamKind::AttackMultiplier => "mu",
        };
        write!(f, "{prefix}{}", self.retailer + 1)
    }
}

fn rescale_retailer(r: &mut Retailer, new_share: f64) {
    let factor = (1.0 + new_share) / (1.0 + r.market_share);
    r.market_share = new_share;
    r.handling_cost *= factor;
    r.budget *= factor;
    r.base_loss *= factor;
    r.attack_multiplier *= factor;
    for c in &mut r.costs {
        c.s *= factor;
    }
}

impl SweepParam {
    /// A copy of `model` with this parameter set to `value`. Moving a share
    /// rescales every `1 + t` factor of that retailer.
    pub fn apply(&self, model: &ModelSpec, value: f64, coupling: ShareCoupling) -> Result<ModelSpec> {
        let m = model.m();
        if self.retailer >= m {
            return Err(Error::InvalidSweep(format!(
                "parameter `{self}` names retailer {} of {m}",
                self.retailer + 1
            )));
        }
        let mut out = model.clone();
        let x = self.retailer;
        match self.kind {
            ParamKind::Budget => out.retailers[x].budget = value,
            ParamKind::Loss => out.retailers[x].base_loss = value,
            ParamKind::HandlingCost => out.retailers[x].handling_cost = value,
            ParamKind::AttackMultiplier => out.retailers[x].attack_multiplier = value,
            ParamKind::Share => {
                rescale_retailer(&mut out.retailers[x], value);
                if coupling == ShareCoupling::Complement && m > 1 {
                    let others: f64 = (0..m)
                        .filter(|&k| k != x)
                        .map(|k| model.retailers[k].market_share)
                        .sum();
                    let remaining = 1.0 - value;
                    for k in (0..m).filter(|&k| k != x) {
                        let new_share = if others > 0.0 {
                            model.retailers[k].market_share * remaining / others
                        } else {
                            remaining / (m - 1) as f64
                        };
                        rescale_retailer(&mut out.retailers[k], new_share);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: Scenario,
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub coupling: ShareCoupling,
    /// Start each grid point from the previous point's solution. Rows are
    /// then solved in order; otherwise they are independent and may run in
    /// parallel.
    pub warm_start: bool,
    /// Worker cap for cold-start sweeps; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn new(base: Scenario, param: SweepParam, from: f64, to: f64, steps: usize) -> Self {
        Self {
            base,
            param,
            from,
            to,
            steps,
            coupling: ShareCoupling::default(),
            warm_start: true,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.from.is_finite() && self.to.is_finite() && self.from < self.to) {
            return Err(Error::InvalidSweep(format!(
                "range needs from < to, got {} .. {}",
                self.from, self.to
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidSweep("at least two steps are required".into()));
        }
        self.base.validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.to
                } else {
                    self.from + (self.to - self.from) * i as f64 / last
                }
            })
            .collect()
    }
}

/// Budget sweep on retailer 1, `B_1` from 2.0 to 3.5.
pub fn experiment2() -> SweepSpec {
    SweepSpec::new(
        experiment1(),
        SweepParam {
            kind: ParamKind::Budget,
            retailer: 0,
        },
        2.0,
        3.5,
        31,
    )
}

/// Loss sweep on retailer 1, `D_1` from 120 to 200.
pub fn experiment3() -> SweepSpec {
    SweepSpec::new(
        experiment1(),
        SweepParam {
            kind: ParamKind::Loss,
            retailer: 0,
        },
        120.0,
        200.0,
        81,
    )
}

/// Share sweep on retailer 1, `t_1` from 0.55 to 0.89 with `t_2 = 1 - t_1`.
pub fn experiment4() -> SweepSpec {
    SweepSpec::new(
        experiment1(),
        SweepParam {
            kind: ParamKind::Share,
            retailer: 0,
        },
        0.55,
        0.89,
        18,
    )
}

pub const BUILTIN_SWEEPS: [&str; 3] = ["exp2", "exp3", "exp4"];

pub fn builtin_sweep(name: &str) -> Option<SweepSpec> {
    match name {
        "exp2" => Some(experiment2()),
        "exp3" => Some(experiment3()),
        "exp4" => Some(experiment4()),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub u: Vec<f64>,
    /// Row-major.
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub utilities: Vec<f64>,
    pub budget_gaps: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SweepRow {
    fn from_solved(param: f64, s: &Solved) -> Self {
        Self {
            param,
            u: s.decision.u.clone(),
            q: s.decision.q.clone(),
            lambda: s.decision.lambda.clone(),
            utilities: s.utilities.clone(),
            budget_gaps: s.budget_gaps.clone(),
            residual: s.report.final_residual,
            iterations: s.report.iterations,
            converged: s.report.converged,
        }
    }

    fn decision(&self, m: usize, n: usize) -> DecisionVector {
        DecisionVector {
            m,
            n,
            q: self.q.clone(),
            u: self.u.clone(),
            lambda: self.lambda.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Series {
    Level(usize),
    Quantity(usize, usize),
    Multiplier(usize),
    Utility(usize),
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Series::Level(x) => write!(f, "u{}", x + 1),
            Series::Quantity(x, y) => write!(f, "Q{}{}", x + 1, y + 1),
            Series::Multiplier(x) => write!(f, "lambda{}", x + 1),
            Series::Utility(x) => write!(f, "EU{}", x + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub m: usize,
    pub n: usize,
    /// Ordered by parameter value.
    pub rows: Vec<SweepRow>,
}

fn solve_row(spec: &SweepSpec, value: f64, start: Option<&DecisionVector>) -> Result<SweepRow> {
    let model = spec.param.apply(&spec.base.model, value, spec.coupling)?;
    let scenario = Scenario {
        model,
        ..spec.base.clone()
    };
    let solved = scenario.solve_from(start.unwrap_or(&spec.base.initial))?;
    Ok(SweepRow::from_solved(value, &solved))
}

/// Solve the base scenario at every grid value. Non-converged points are
/// kept and flagged.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let (m, n) = (spec.base.model.m(), spec.base.model.n());
    let grid = spec.grid();
    let rows = if spec.warm_start {
        let mut rows: Vec<SweepRow> = Vec::with_capacity(grid.len());
        for &value in &grid {
            let start = rows.last().filter(|r| r.converged).map(|r| r.decision(m, n));
            rows.push(solve_row(spec, value, start.as_ref())?);
        }
        rows
    } else {
        let run = || {
            grid.par_iter()
                .map(|&v| solve_row(spec, v, None))
                .collect::<Result<Vec<_>>>()
        };
        match spec.threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidSweep(e.to_string()))?
                .install(run)?,
            None => run()?,
        }
    };
    Ok(SweepResult {
        param: spec.param,
        m,
        n,
        rows,
    })
}

impl SweepResult {
    pub fn params(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.param).collect()
    }

    pub fn converged(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.converged).collect()
    }

    pub fn series(&self, s: Series) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match s {
                Series::Level(x) => r.u[x],
                Series::Quantity(x, y) => r.q[x * self.n + y],
                Series::Multiplier(x) => r.lambda[x],
                Series::Utility(x) => r.utilities[x],
            })
            .collect()
    }

    pub fn crossing(&self, a: Series, b: Series) -> Result<Option<f64>> {
        find_crossing(&self.params(), &self.series(a), &self.series(b), &self.converged())
    }

    /// Every level crossing `u_i = u_j`, `i < j`.
    pub fn level_crossings(&self) -> Result<Vec<(Series, Series, f64)>> {
        let mut out = Vec::new();
        for i in 0..self.m {
            for j in i + 1..self.m {
                let (a, b) = (Series::Level(i), Series::Level(j));
                if let Some(p) = self.crossing(a, b)? {
                    out.push((a, b, p));
                }
            }
        }
        Ok(out)
    }

    /// CSV with header
    /// `param,u_1..u_m,Q_1_1..Q_m_n,lambda_1..lambda_m,EU_1..EU_m,residual,iters,converged`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["param".to_string()];
        header.extend((1..=self.m).map(|x| format!("u_{x}")));
        for x in 1..=self.m {
            header.extend((1..=self.n).map(|y| format!("Q_{x}_{y}")));
        }
        header.extend((1..=self.m).map(|x| format!("lambda_{x}")));
        header.extend((1..=self.m).map(|x| format!("EU_{x}")));
        header.extend(["residual", "iters", "converged"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.param.to_string()];
            rec.extend(r.u.iter().map(f64::to_string));
            rec.extend(r.q.iter().map(f64::to_string));
            rec.extend(r.lambda.iter().map(f64::to_string));
            rec.extend(r.utilities.iter().map(f64::to_string));
            rec.push(r.residual.to_string());
            rec.push(r.iterations.to_string());
            rec.push(r.converged.to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// First parameter value where `a - b` changes sign between adjacent
/// converged rows, linearly interpolated. An exact zero counts only when the
/// sign on either side differs.
pub fn find_crossing(params: &[f64], a: &[f64], b: &[f64], converged: &[bool]) -> Result<Option<f64>> {
    let len = params.len();
    for other in [a.len(), b.len(), converged.len()] {
        if other != len {
            return Err(Error::Dimension {
                expected: len,
                got: other,
            });
        }
    }
    let pts: Vec<(f64, f64)> = (0..len)
        .filter(|&i| converged[i] && a[i].is_finite() && b[i].is_finite())
        .map(|i| (params[i], a[i] - b[i]))
        .collect();
    let mut last_nonzero: Option<(f64, f64)> = None;
    for (i, &(p, d)) in pts.iter().enumerate() {
        if d == 0.0 {
            if let Some((_, prev)) = last_nonzero {
                let next = pts[i + 1..].iter().find(|(_, dd)| *dd != 0.0);
                if let Some(&(_, nd)) = next {
                    if nd.signum() != prev.signum() {
                        return Ok(Some(p));
                    }
                }
            }
            continue;
        }
        if let Some((p0, d0)) = last_nonzero {
            if d0.signum() != d.signum() {
                return Ok(Some(p0 + (p - p0) * d0 / (d0 - d)));
            }
        }
        last_nonzero = Some((p, d));
    }
    Ok(None)
}
