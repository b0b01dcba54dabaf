//! Monotone iteration solver for `Δu = λe^u(e^u−1) + 4πΣ_j δ_{p_j}`.
//!
//! The equation is split as `u = u₀ + v` around the Poisson background
//! `Δu₀ = −4πM/Vol + 4πΣδ_{p_j}`, leaving the pole-free transformed equation
//! `Δv = λe^{u₀+v}(e^{u₀+v}−1) + 4πM/Vol`. Starting from `v₀ = −u₀` the
//! screened iteration
//!
//! `(Δ − K)vₙ = λe^{u₀+vₙ₋₁}(e^{u₀+vₙ₋₁}−1) − Kvₙ₋₁ + 4πM/Vol`,  `K ≥ 2λ`,
//!
//! produces a pointwise decreasing sequence that dominates every upper
//! solution and converges to the maximal solution when one exists. A solution
//! exists iff λ exceeds a critical value `λ_c ≥ 16πM/Vol`; below it the
//! sequence escapes to −∞, which a configurable floor detects. Bisection on λ
//! brackets the critical value.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::graph::WeightedGraph;
use crate::linsolve::{poisson_internal, ScreenedSolver, RESIDUAL_FACTOR};
use crate::par;

/// `Δu = λe^u(e^u−1) + 4πΣδ_{p_j}` on a fixed graph; repeated vortices add
/// multiplicity.
#[derive(Debug, Clone)]
pub struct VortexProblem<'g> {
    graph: &'g WeightedGraph,
    lambda: f64,
    vortices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct VortexOptions {
    /// Residual target for the transformed equation (and the full equation).
    pub tol: f64,
    pub max_iters: usize,
    /// Screening constant; defaults to the smallest admissible value `2λ`.
    pub k_override: Option<f64>,
    /// Divergence floor is `−(‖u₀‖_∞ + divergence_floor_offset)`.
    pub divergence_floor_offset: f64,
    /// Successive-iterate threshold; convergence requires both this and `tol`.
    pub step_tol: f64,
    /// Keep every iterate `v₀, v₁, …` in the trace (scalar per-step evidence
    /// is always kept).
    pub record_fields: bool,
}

impl Default for VortexOptions {
    fn default() -> Self {
        VortexOptions {
            tol: 1e-8,
            max_iters: 100_000,
            k_override: None,
            divergence_floor_offset: 50.0,
            step_tol: 1e-12,
            record_fields: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceWitness {
    /// The decreasing sequence escaped below the floor: no solution at this λ.
    FloorEscape { v_min: f64, floor: f64 },
    /// The iteration reached a fixed point of the numerical map that does not
    /// solve the equation, or stopped making residual progress.
    Stalled { step_sup: f64, residual_sup: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VortexStatus {
    Converged,
    Diverged(DivergenceWitness),
    BudgetExhausted,
}

impl VortexStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, VortexStatus::Converged)
    }
}

/// Scalar evidence for one iterate.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    /// `‖Δvₙ − λe^{u₀+vₙ}(e^{u₀+vₙ}−1) − 4πM/Vol‖_∞`.
    pub residual_sup: f64,
    /// `‖vₙ − vₙ₋₁‖_∞` (0 for the initial iterate).
    pub step_sup: f64,
    /// `max_x (vₙ − vₙ₋₁)(x)`; ≤ 0 up to solver rounding by monotonicity.
    pub monotone_defect: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// The decreasing sequence `v₀ ≥ v₁ ≥ …` with per-step residuals.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// Screening constant `K` used by every step.
    pub screening: f64,
    pub status: VortexStatus,
    /// Entry 0 describes `v₀`; entry `n` describes `vₙ`.
    pub steps: Vec<TraceStep>,
    /// Full iterates, present when [`VortexOptions::record_fields`] is set.
    pub fields: Option<Vec<VertexField>>,
    /// The final iterate, kept even when fields are not recorded; on
    /// divergence it is the escape evidence.
    pub last_v: VertexField,
}

/// Solver certificate; all norms recomputed from the final iterate.
#[derive(Debug, Clone)]
pub struct VortexReport {
    pub status: VortexStatus,
    pub iterations: usize,
    /// `‖Δu − λe^u(e^u−1) − 4πΣδ‖_∞` of the returned (or last) `u = u₀+v`.
    pub residual_sup: f64,
    /// Residual of the transformed pole-free equation in `v`.
    pub reduced_residual_sup: f64,
    /// `max_x u(x)`; strictly negative for any true solution.
    pub u_max: f64,
    /// `|λ∫e^u(e^u−1) dμ + 4πM|`, the summed form of the equation.
    pub mass_defect: f64,
    /// Necessary existence bound `16πM/Vol`.
    pub lambda_bound: f64,
    pub k_used: f64,
}

/// `16πM/Vol`, the necessary lower bound for solvability with `M` vortices.
pub fn necessary_lambda_bound(g: &WeightedGraph, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::NoVortices);
    }
    Ok(16.0 * PI * m as f64 / g.volume())
}

impl<'g> VortexProblem<'g> {
    pub fn new<S: AsRef<str>>(
        graph: &'g WeightedGraph,
        lambda: f64,
        vortices: &[S],
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::NonpositiveParameter {
                name: "lambda",
                value: lambda,
            });
        }
        if vortices.is_empty() {
            return Err(Error::NoVortices);
        }
        let vortices = vortices
            .iter()
            .map(|s| graph.index_of(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(VortexProblem {
            graph,
            lambda,
            vortices,
        })
    }

    pub fn graph(&self) -> &'g WeightedGraph {
        self.graph
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Vortex indices with multiplicity; `M = self.vortices().len()`.
    pub fn vortices(&self) -> &[usize] {
        &self.vortices
    }

    pub fn multiplicity(&self) -> usize {
        self.vortices.len()
    }

    pub fn necessary_lambda_bound(&self) -> f64 {
        16.0 * PI * self.multiplicity() as f64 / self.graph.volume()
    }

    fn background_term(&self) -> f64 {
        4.0 * PI * self.multiplicity() as f64 / self.graph.volume()
    }

    /// `4πΣδ_{p_j}` as a field.
    fn dirac_values(&self) -> Vec<f64> {
        let mut values = vec![0.0; self.graph.vertex_count()];
        for &p in &self.vortices {
            values[p] += 4.0 * PI / self.graph.measure(p);
        }
        values
    }

    /// Mean-zero solution of `Δu₀ = −4πM/Vol + 4πΣδ_{p_j}`; the right side
    /// integrates to zero by construction.
    pub fn solve_background(&self) -> Result<VertexField> {
        let c = self.background_term();
        let mut rhs = self.dirac_values();
        for v in &mut rhs {
            *v -= c;
        }
        let f = self.graph.field(rhs)?;
        let (u0, _) = poisson_internal(self.graph, &f, 1e-9)?;
        Ok(u0)
    }

    /// Checks `Δv(x) ≥ λe^{u₀+v}(e^{u₀+v}−1) + 4πM/Vol − tol` at every vertex.
    pub fn is_upper_solution(
        &self,
        u0: &VertexField,
        v: &VertexField,
        tol: f64,
    ) -> Result<bool> {
        self.graph.check_bound(u0)?;
        self.graph.check_bound(v)?;
        let lap = self.graph.laplacian(v)?;
        let lv = lap.values();
        let c = self.background_term();
        let u0v = u0.values();
        let vv = v.values();
        let worst = -par::max_indexed(self.graph.vertex_count(), |x| {
            let t = (u0v[x] + vv[x]).min(crate::dirac::EXP_GUARD).exp();
            -(lv[x] - self.lambda * t * (t - 1.0) - c)
        });
        Ok(worst >= -tol)
    }

    /// One screened step `(Δ − K)vₙ = λe^{u₀+v}(e^{u₀+v}−1) − Kv + 4πM/Vol`.
    /// Requires `K ≥ 2λ`, the hypothesis under which the sequence is monotone.
    pub fn iterate_once(
        &self,
        k: f64,
        u0: &VertexField,
        v_prev: &VertexField,
    ) -> Result<VertexField> {
        self.check_screening(k)?;
        let solver = ScreenedSolver::new(self.graph, k)?;
        let stepper = Stepper::new(self, k, u0.values())?;
        stepper.step(&solver, v_prev.values(), 1e-12)
    }

    fn check_screening(&self, k: f64) -> Result<()> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::NonpositiveK(k));
        }
        if k < 2.0 * self.lambda {
            return Err(Error::ScreeningBelowTwoLambda {
                k,
                min: 2.0 * self.lambda,
            });
        }
        Ok(())
    }

    /// Pointwise defect `Δu − λe^u(e^u−1) − 4πΣδ_{p_j}`.
    pub fn residual(&self, u: &VertexField) -> Result<VertexField> {
        self.graph.check_bound(u)?;
        let max_u = u.max();
        if max_u > crate::dirac::EXP_GUARD {
            return Err(Error::ExpOverflow { max_u });
        }
        let lap = self.graph.laplacian(u)?;
        let lv = lap.values();
        let uv = u.values();
        let dirac = self.dirac_values();
        let values = par::map_indexed(self.graph.vertex_count(), |x| {
            let t = uv[x].exp();
            lv[x] - self.lambda * t * (t - 1.0) - dirac[x]
        });
        self.graph.field(values)
    }

    /// `|λ∫e^u(e^u−1) dμ + 4πM|`: summing the equation kills the Laplacian,
    /// so this vanishes for any exact solution.
    pub fn mass_defect(&self, u: &VertexField) -> Result<f64> {
        self.graph.check_bound(u)?;
        let uv = u.values();
        let integral = par::sum_indexed(self.graph.vertex_count(), |x| {
            let t = uv[x].exp();
            self.lambda * t * (t - 1.0) * self.graph.measure(x)
        });
        Ok((integral + 4.0 * PI * self.multiplicity() as f64).abs())
    }

    /// Constant `c` with `u₀ + c < 0` and
    /// `λe^{u₀+c}(e^{u₀+c}−1) + 4πM/Vol < 0` everywhere, when one exists.
    ///
    /// The admissible window is closed-form: `e^{u₀(x)+c}` must lie strictly
    /// between the roots of `λt(t−1) + 4πM/Vol`. Returns `None` when the
    /// window is empty, which does not rule out non-constant upper solutions.
    pub fn find_constant_upper_solution(&self, u0: &VertexField) -> Result<Option<f64>> {
        self.graph.check_bound(u0)?;
        let c_bg = self.background_term();
        let disc = 1.0 - 4.0 * c_bg / self.lambda;
        if disc <= 0.0 {
            return Ok(None);
        }
        let t_lo = 0.5 * (1.0 - disc.sqrt());
        let t_hi = 0.5 * (1.0 + disc.sqrt());
        let lo = t_lo.ln() - u0.min();
        let hi = t_hi.ln() - u0.max();
        if lo >= hi {
            return Ok(None);
        }
        let c = 0.5 * (lo + hi);
        let candidate = self.graph.constant_field(c)?;
        if self.is_upper_solution(u0, &candidate, 0.0)? {
            Ok(Some(c))
        } else {
            Ok(None)
        }
    }

    /// Runs the monotone iteration from `v₀ = −u₀`.
    ///
    /// On convergence the returned `u = u₀ + v` is the maximal solution
    /// (the decreasing limit dominating every upper solution) and is strictly
    /// negative. Non-existence (λ below critical) surfaces as a
    /// `Diverged` status, not an error.
    pub fn solve(
        &self,
        opts: &VortexOptions,
    ) -> Result<(Option<VertexField>, IterationTrace, VortexReport)> {
        let g = self.graph;
        let n = g.vertex_count();
        let k = opts.k_override.unwrap_or(2.0 * self.lambda);
        self.check_screening(k)?;

        let u0 = self.solve_background()?;
        let u0v = u0.values().to_vec();
        let solver = ScreenedSolver::new(g, k)?;
        let stepper = Stepper::new(self, k, &u0v)?;
        let floor = -(u0.sup_norm() + opts.divergence_floor_offset);

        let mut v: Vec<f64> = u0v.iter().map(|&x| -x).collect();
        let mut steps: Vec<TraceStep> = Vec::new();
        let mut fields = opts.record_fields.then(Vec::new);

        fn push_state(
            steps: &mut Vec<TraceStep>,
            stepper: &Stepper<'_, '_>,
            n: usize,
            v: &[f64],
            step_sup: f64,
            monotone_defect: f64,
        ) -> f64 {
            let residual_sup = stepper.reduced_residual_sup(v);
            steps.push(TraceStep {
                residual_sup,
                step_sup,
                monotone_defect,
                v_min: -par::max_indexed(n, |x| -v[x]),
                v_max: par::max_indexed(n, |x| v[x]),
            });
            residual_sup
        }
        fn record_field(
            fields: &mut Option<Vec<VertexField>>,
            g: &WeightedGraph,
            v: &[f64],
        ) {
            if let Some(fs) = fields {
                fs.push(g.field(v.to_vec()).expect("iterates stay finite"));
            }
        }

        push_state(&mut steps, &stepper, n, &v, 0.0, 0.0);
        record_field(&mut fields, g, &v);

        let mut status = VortexStatus::BudgetExhausted;
        let mut iterations = 0;
        for iter in 1..=opts.max_iters {
            iterations = iter;
            let next = stepper.step(&solver, &v, opts.step_tol)?;
            let nv = next.values();
            let step_sup = par::max_indexed(n, |x| (nv[x] - v[x]).abs()).max(0.0);
            let monotone_defect = par::max_indexed(n, |x| nv[x] - v[x]);
            v.copy_from_slice(nv);
            let residual_sup =
                push_state(&mut steps, &stepper, n, &v, step_sup, monotone_defect);
            record_field(&mut fields, g, &v);

            let v_min = steps.last().unwrap().v_min;
            if v_min < floor {
                status = VortexStatus::Diverged(DivergenceWitness::FloorEscape {
                    v_min,
                    floor,
                });
                break;
            }
            if step_sup <= opts.step_tol {
                if residual_sup <= opts.tol {
                    status = VortexStatus::Converged;
                } else {
                    status = VortexStatus::Diverged(DivergenceWitness::Stalled {
                        step_sup,
                        residual_sup,
                    });
                }
                break;
            }
        }

        // budget exhausted with no residual progress is divergence, not a
        // too-small budget
        if status == VortexStatus::BudgetExhausted && steps.len() > 200 {
            let last = steps.last().unwrap();
            let earlier = steps[steps.len() - 101];
            if last.residual_sup >= earlier.residual_sup * (1.0 - 1e-6) {
                status = VortexStatus::Diverged(DivergenceWitness::Stalled {
                    step_sup: last.step_sup,
                    residual_sup: last.residual_sup,
                });
            }
        }

        let u = g.field(par::map_indexed(n, |x| u0v[x] + v[x]))?;
        let report = VortexReport {
            status,
            iterations,
            residual_sup: self.residual(&u)?.sup_norm(),
            reduced_residual_sup: steps.last().unwrap().residual_sup,
            u_max: u.max(),
            mass_defect: self.mass_defect(&u)?,
            lambda_bound: self.necessary_lambda_bound(),
            k_used: k,
        };
        let trace = IterationTrace {
            screening: k,
            status,
            steps,
            fields,
            last_v: g.field(v)?,
        };
        let solution = status.is_converged().then_some(u);
        Ok((solution, trace, report))
    }
}

/// Shared per-step arithmetic: right side assembly, the screened solve and
/// the transformed-equation residual.
struct Stepper<'p, 'g> {
    p: &'p VortexProblem<'g>,
    k: f64,
    u0: &'p [f64],
    mu_min: f64,
}

impl<'p, 'g> Stepper<'p, 'g> {
    fn new(p: &'p VortexProblem<'g>, k: f64, u0: &'p [f64]) -> Result<Self> {
        let mu_min = p
            .graph
            .measures()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        Ok(Stepper { p, k, u0, mu_min })
    }

    fn rhs(&self, v: &[f64]) -> Vec<f64> {
        let c = self.p.background_term();
        let lambda = self.p.lambda;
        let u0 = self.u0;
        let k = self.k;
        par::map_indexed(v.len(), |x| {
            let t = (u0[x] + v[x]).min(crate::dirac::EXP_GUARD).exp();
            lambda * t * (t - 1.0) - k * v[x] + c
        })
    }

    fn step(
        &self,
        solver: &ScreenedSolver<'_>,
        v: &[f64],
        step_tol: f64,
    ) -> Result<VertexField> {
        let rhs = self.rhs(v);
        let rhs_sup = par::max_indexed(rhs.len(), |x| rhs[x].abs()).max(0.0);
        // aim well below the step tolerance so solver noise cannot mask
        // convergence, but only fail at the public residual contract
        let target = (0.01 * step_tol * self.k * self.mu_min).max(1e-14);
        let hard = (RESIDUAL_FACTOR * rhs_sup.max(1.0)).max(1e3 * target);
        let (next, _) = solver.solve_lenient(&rhs, target, hard, Some(v))?;
        Ok(next)
    }

    /// `‖Δv − λe^{u₀+v}(e^{u₀+v}−1) − 4πM/Vol‖_∞`.
    fn reduced_residual_sup(&self, v: &[f64]) -> f64 {
        let g = self.p.graph;
        let c = self.p.background_term();
        let lambda = self.p.lambda;
        let u0 = self.u0;
        par::max_indexed(v.len(), |x| {
            let vx = v[x];
            let mut lap = 0.0;
            for &(y, w) in g.neighbors(x) {
                lap += w * (v[y as usize] - vx);
            }
            lap /= g.measure(x);
            let t = (u0[x] + vx).min(crate::dirac::EXP_GUARD).exp();
            (lap - lambda * t * (t - 1.0) - c).abs()
        })
        .max(0.0)
    }
}

// ---------------------------------------------------------------------------
// Critical-value bisection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LambdaCOptions {
    /// First upper candidate; doubled until the solve succeeds.
    /// Defaults to `4 · 16πM/Vol`.
    pub initial_upper: Option<f64>,
    /// Bracket width target (absolute). Defaults to `10⁻³ · 16πM/Vol`.
    pub width: Option<f64>,
    pub doubling_budget: usize,
    /// Options for every candidate solve.
    pub solve: VortexOptions,
}

impl Default for LambdaCOptions {
    fn default() -> Self {
        LambdaCOptions {
            initial_upper: None,
            width: None,
            doubling_budget: 60,
            solve: VortexOptions::default(),
        }
    }
}

/// Bracket `[lower, upper]` around the critical λ, with solver evidence at
/// both endpoints. Existence exactly at the critical value is never claimed.
#[derive(Debug, Clone)]
pub struct LambdaCritical {
    /// Largest probed λ at which no solution was found.
    pub lower: f64,
    /// Smallest probed λ at which the solve converged.
    pub upper: f64,
    /// `16πM/Vol`.
    pub bound_necessary: f64,
    pub lower_report: VortexReport,
    pub upper_report: VortexReport,
}

/// Brackets the critical λ by bisection: solvability is monotone in λ (a
/// solution at λ′ is an upper solution for every λ > λ′), so the set of
/// solvable λ is an up-closed interval.
pub fn estimate_lambda_c<S: AsRef<str>>(
    g: &WeightedGraph,
    vortices: &[S],
    opts: &LambdaCOptions,
) -> Result<LambdaCritical> {
    let m = vortices.len();
    let bound = necessary_lambda_bound(g, m)?;
    let width = opts.width.unwrap_or(1e-3 * bound);
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::NonpositiveParameter {
            name: "width",
            value: width,
        });
    }

    let run = |lambda: f64| -> Result<(bool, VortexReport)> {
        let p = VortexProblem::new(g, lambda, vortices)?;
        let opts = VortexOptions {
            record_fields: false,
            ..opts.solve.clone()
        };
        let (solution, _, report) = p.solve(&opts)?;
        Ok((solution.is_some(), report))
    };

    // find a succeeding upper endpoint
    let mut upper = opts.initial_upper.unwrap_or(4.0 * bound).max(f64::MIN_POSITIVE);
    let mut upper_report = None;
    for attempt in 0..=opts.doubling_budget {
        let (ok, report) = run(upper)?;
        if ok {
            upper_report = Some(report);
            break;
        }
        if attempt == opts.doubling_budget {
            return Err(Error::BudgetExhausted {
                last: upper,
                doublings: attempt,
            });
        }
        upper *= 2.0;
    }
    let mut upper_report = upper_report.expect("loop either sets the report or errors");

    // find a failing lower endpoint; the necessary bound fails unless the
    // critical value sits exactly on it
    let mut lower = bound.min(upper * 0.5);
    let mut lower_report;
    loop {
        let (ok, report) = run(lower)?;
        if !ok {
            lower_report = report;
            break;
        }
        upper = lower;
        upper_report = report;
        lower *= 0.5;
    }

    while upper - lower > width {
        let mid = 0.5 * (lower + upper);
        if mid <= lower || mid >= upper {
            break; // bracket at floating-point resolution
        }
        let (ok, report) = run(mid)?;
        if ok {
            upper = mid;
            upper_report = report;
        } else {
            lower = mid;
            lower_report = report;
        }
    }

    Ok(LambdaCritical {
        lower,
        upper,
        bound_necessary: bound,
        lower_report,
        upper_report,
    })
}
