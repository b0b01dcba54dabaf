//! Variational solver for `Δu + e^u = ρδ₀`.
//!
//! The functional `J(u) = E(u) + ρ·u(x₀)` is minimized over the constraint
//! set `B = {u : ∫e^u dμ = ρ}`. Feasibility is a closed-form additive shift,
//! so the method is projected gradient descent on `B` with Armijo
//! backtracking (Barzilai–Borwein trial steps), switching to a damped Newton
//! iteration on the full nonlinear system `F(u) = Δu + e^u − ρδ₀` once the
//! residual is small. A solution exists for every `ρ > 0`, so a failure to
//! converge is reported as an error carrying the best iterate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::graph::{DiracSource, WeightedGraph};
use crate::linsolve::{minres, DENSE_LIMIT};
use crate::par;

/// Iterates whose maximum exceeds this are rejected so `e^u` stays
/// representable.
pub const EXP_GUARD: f64 = 700.0;

/// `Δu + e^u = ρδ₀` on a fixed graph.
#[derive(Debug, Clone, Copy)]
pub struct DiracProblem<'g> {
    graph: &'g WeightedGraph,
    rho: f64,
    pole: usize,
}

#[derive(Debug, Clone)]
pub struct DiracOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Residual level at which the Newton phase takes over.
    pub newton_threshold: f64,
    /// Record per-step `(J, residual)` pairs in the report.
    pub record_trace: bool,
}

impl Default for DiracOptions {
    fn default() -> Self {
        DiracOptions {
            tol: 1e-8,
            max_iters: 10_000,
            newton_threshold: 1e-3,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiracPhase {
    Gradient,
    Newton,
}

#[derive(Debug, Clone)]
pub struct DiracTraceStep {
    pub phase: DiracPhase,
    pub j_value: f64,
    pub residual_sup: f64,
}

/// Certificate recomputed from the returned iterate at exit.
#[derive(Debug, Clone)]
pub struct VariationalReport {
    pub j_value: f64,
    /// `|∫e^u dμ − ρ|`.
    pub constraint_defect: f64,
    /// `‖Δu + e^u − ρδ₀‖_∞`.
    pub residual_sup: f64,
    /// Lagrange multiplier estimate; 1 at a true critical point.
    pub lambda_lagrange: f64,
    pub iterations: usize,
    pub trace: Vec<DiracTraceStep>,
}

impl<'g> DiracProblem<'g> {
    pub fn new(graph: &'g WeightedGraph, rho: f64, pole: &str) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::NonpositiveParameter {
                name: "rho",
                value: rho,
            });
        }
        let pole = graph.index_of(pole)?;
        Ok(DiracProblem { graph, rho, pole })
    }

    pub fn graph(&self) -> &'g WeightedGraph {
        self.graph
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn pole(&self) -> usize {
        self.pole
    }

    pub fn dirac_source(&self) -> DiracSource {
        self.graph
            .dirac_source(&[self.graph.vertex_id(self.pole)])
            .expect("pole index is valid")
    }

    /// `J(u) = E(u) + ρ·u(x₀)`.
    pub fn functional_j(&self, u: &VertexField) -> Result<f64> {
        self.graph.check_bound(u)?;
        Ok(self.graph.dirichlet_energy(u)? + self.rho * u.values()[self.pole])
    }

    /// Additive shift onto `B`: returns `u + log(ρ / ∫e^u dμ)`.
    pub fn project_to_b(&self, u: &VertexField) -> Result<VertexField> {
        self.graph.check_bound(u)?;
        let max_u = u.max();
        if max_u > EXP_GUARD {
            return Err(Error::ExpOverflow { max_u });
        }
        let shift = self.feasibility_shift(u.values());
        let values = u.values().iter().map(|&v| v + shift).collect();
        self.graph.field(values)
    }

    /// `log ρ − log ∫e^u dμ`, evaluated in log-sum-exp form.
    fn feasibility_shift(&self, u: &[f64]) -> f64 {
        let n = self.graph.vertex_count();
        let m = par::max_indexed(n, |x| u[x]);
        let sum = par::sum_indexed(n, |x| self.graph.measure(x) * (u[x] - m).exp());
        self.rho.ln() - (m + sum.ln())
    }

    /// Pointwise defect `Δu + e^u − ρδ₀`; the zero field iff `u` solves the
    /// equation.
    pub fn residual(&self, u: &VertexField) -> Result<VertexField> {
        self.graph.check_bound(u)?;
        let max_u = u.max();
        if max_u > EXP_GUARD {
            return Err(Error::ExpOverflow { max_u });
        }
        let lap = self.graph.laplacian(u)?;
        let lv = lap.values();
        let uv = u.values();
        let values = par::map_indexed(self.graph.vertex_count(), |x| {
            let source = if x == self.pole {
                self.rho / self.graph.measure(x)
            } else {
                0.0
            };
            lv[x] + uv[x].exp() - source
        });
        self.graph.field(values)
    }

    /// Minimizes `J` over `B`, then polishes with damped Newton on `F`.
    pub fn solve(&self, opts: &DiracOptions) -> Result<(VertexField, VariationalReport)> {
        Solver::new(self, opts).run()
    }
}

struct Solver<'p, 'g> {
    p: &'p DiracProblem<'g>,
    opts: &'p DiracOptions,
    mu: &'p [f64],
    n: usize,
    iterations: usize,
    trace: Vec<DiracTraceStep>,
    best: Option<(Vec<f64>, f64)>,
}

impl<'p, 'g> Solver<'p, 'g> {
    fn new(p: &'p DiracProblem<'g>, opts: &'p DiracOptions) -> Self {
        Solver {
            p,
            opts,
            mu: p.graph.measures(),
            n: p.graph.vertex_count(),
            iterations: 0,
            trace: Vec::new(),
            best: None,
        }
    }

    fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let g = self.p.graph;
        par::map_indexed(self.n, |x| {
            let ux = u[x];
            let mut acc = 0.0;
            for &(y, w) in g.neighbors(x) {
                acc += w * (u[y as usize] - ux);
            }
            acc / self.mu[x]
        })
    }

    fn residual_vec(&self, u: &[f64]) -> Vec<f64> {
        let lap = self.laplacian(u);
        par::map_indexed(self.n, |x| {
            let source = if x == self.p.pole {
                self.p.rho / self.mu[x]
            } else {
                0.0
            };
            lap[x] + u[x].exp() - source
        })
    }

    fn sup(&self, v: &[f64]) -> f64 {
        par::max_indexed(self.n, |x| v[x].abs()).max(0.0)
    }

    fn j_value(&self, u: &[f64]) -> f64 {
        let g = self.p.graph;
        let energy = par::sum_indexed(self.n, |x| {
            let ux = u[x];
            let mut acc = 0.0;
            for &(y, w) in g.neighbors(x) {
                let d = u[y as usize] - ux;
                acc += w * d * d;
            }
            acc
        }) * 0.25;
        energy + self.p.rho * u[self.p.pole]
    }

    fn project(&self, u: &mut [f64]) {
        let shift = self.p.feasibility_shift(u);
        for v in u.iter_mut() {
            *v += shift;
        }
    }

    fn record(&mut self, phase: DiracPhase, u: &[f64], residual_sup: f64) {
        if self.opts.record_trace {
            self.trace.push(DiracTraceStep {
                phase,
                j_value: self.j_value(u),
                residual_sup,
            });
        }
        if self.best.as_ref().is_none_or(|(_, r)| residual_sup < *r) {
            self.best = Some((u.to_vec(), residual_sup));
        }
    }

    fn run(mut self) -> Result<(VertexField, VariationalReport)> {
        let p = self.p;
        // feasible start: the constant log(ρ/Vol)
        let mut u = vec![p.rho.ln() - p.graph.volume().ln(); self.n];
        let mut threshold = self.opts.newton_threshold;
        let mut stagnant_rounds = 0;
        loop {
            let res = self.sup(&self.residual_vec(&u));
            if res <= self.opts.tol {
                break;
            }
            if self.iterations >= self.opts.max_iters {
                return Err(self.budget_error());
            }
            if res >= threshold {
                if !self.gradient_phase(&mut u, threshold)? {
                    // descent line search exhausted; try Newton from here
                    self.newton_phase(&mut u, f64::INFINITY)?;
                }
            } else if !self.newton_phase(&mut u, threshold)? {
                // Newton stalled above tol: resume descent below the stall level
                threshold = self.sup(&self.residual_vec(&u)) * 0.5;
            }
            // neither phase moved the residual: report the best iterate
            // instead of burning the remaining budget on identical retries
            let after = self.sup(&self.residual_vec(&u));
            if after >= res * (1.0 - 1e-12) {
                stagnant_rounds += 1;
                if stagnant_rounds >= 3 {
                    return Err(self.budget_error());
                }
            } else {
                stagnant_rounds = 0;
            }
        }
        let report = self.report(&u);
        Ok((p.graph.field(u)?, report))
    }

    fn budget_error(&mut self) -> Error {
        let (u, _) = self
            .best
            .take()
            .expect("at least one iterate was recorded");
        let report = self.report(&u);
        let field = VertexField::new_unchecked(self.p.graph.id(), u);
        Error::MaxIterationsExceeded(Box::new((field, report)))
    }

    /// Tangent gradient of `J` on `B` at `u` in the `L²(μ)` metric.
    fn tangent_gradient(&self, u: &[f64]) -> Vec<f64> {
        let p = self.p;
        let lap = self.laplacian(u);
        let mut grad: Vec<f64> = par::map_indexed(self.n, |x| -lap[x]);
        grad[p.pole] += p.rho / self.mu[p.pole];
        let expu: Vec<f64> = par::map_indexed(self.n, |x| u[x].exp());
        let ge = par::sum_indexed(self.n, |x| grad[x] * expu[x] * self.mu[x]);
        let ee = par::sum_indexed(self.n, |x| expu[x] * expu[x] * self.mu[x]);
        let beta = ge / ee;
        par::map_indexed(self.n, |x| grad[x] - beta * expu[x])
    }

    /// Projected gradient descent until `‖F‖_∞` drops below `threshold`.
    /// Returns `Ok(false)` when the line search can no longer move.
    fn gradient_phase(&mut self, u: &mut Vec<f64>, threshold: f64) -> Result<bool> {
        let mut alpha = 1.0;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        loop {
            let res = self.sup(&self.residual_vec(u));
            self.record(DiracPhase::Gradient, u, res);
            if res < threshold || res <= self.opts.tol {
                return Ok(true);
            }
            if self.iterations >= self.opts.max_iters {
                return Err(self.budget_error());
            }

            let gt = self.tangent_gradient(u);
            let gnorm2 = par::sum_indexed(self.n, |x| gt[x] * gt[x] * self.mu[x]);
            if gnorm2 <= 1e-300 {
                return Ok(false); // stationary on B; hand over to Newton
            }

            // Barzilai–Borwein trial step, safeguarded by Armijo below
            if let Some((prev_u, prev_gt)) = prev.as_ref() {
                let num = par::sum_indexed(self.n, |x| {
                    let du = u[x] - prev_u[x];
                    du * du * self.mu[x]
                });
                let den = par::sum_indexed(self.n, |x| {
                    (u[x] - prev_u[x]) * (gt[x] - prev_gt[x]) * self.mu[x]
                });
                if den > 1e-300 {
                    alpha = (num / den).clamp(1e-12, 1e8);
                }
            }

            let j_now = self.j_value(u);
            let mut step = alpha;
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand: Vec<f64> =
                    par::map_indexed(self.n, |x| u[x] - step * gt[x]);
                let cand_max = par::max_indexed(self.n, |x| cand[x]);
                if cand_max <= EXP_GUARD {
                    self.project(&mut cand);
                    if self.j_value(&cand) <= j_now - 1e-4 * step * gnorm2 {
                        prev = Some((std::mem::replace(u, cand), gt));
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            self.iterations += 1;
            if !accepted {
                return Ok(false);
            }
        }
    }

    /// Damped Newton on `F(u) = Δu + e^u − ρδ₀`, projecting each accepted
    /// iterate back onto `B` (the shift is second-order small near a root).
    /// Returns `Ok(false)` if a step could not reduce the residual.
    fn newton_phase(&mut self, u: &mut Vec<f64>, entry_threshold: f64) -> Result<bool> {
        loop {
            let res_vec = self.residual_vec(u);
            let res = self.sup(&res_vec);
            self.record(DiracPhase::Newton, u, res);
            if res <= self.opts.tol {
                return Ok(true);
            }
            if res > 10.0 * entry_threshold {
                return Ok(false);
            }
            if self.iterations >= self.opts.max_iters {
                return Err(self.budget_error());
            }

            let rhs: Vec<f64> =
                par::map_indexed(self.n, |x| -self.mu[x] * res_vec[x]);
            let step = self.newton_direction(u, &rhs)?;

            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand: Vec<f64> =
                    par::map_indexed(self.n, |x| u[x] + t * step[x]);
                let cand_max = par::max_indexed(self.n, |x| cand[x]);
                if cand_max <= EXP_GUARD {
                    self.project(&mut cand);
                    let cand_res = self.sup(&self.residual_vec(&cand));
                    if cand_res <= (1.0 - 0.1 * t) * res {
                        *u = cand;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            self.iterations += 1;
            if !accepted {
                return Ok(false);
            }
        }
    }

    /// Solves the μ-scaled symmetric Newton system
    /// `(L + diag(μ e^u)) s = rhs` where `L = A − D`.
    fn newton_direction(&self, u: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let g = self.p.graph;
        if self.n <= DENSE_LIMIT {
            let mut a = DMatrix::<f64>::zeros(self.n, self.n);
            for x in 0..self.n {
                let mut degree = 0.0;
                for &(y, w) in g.neighbors(x) {
                    a[(x, y as usize)] = w;
                    degree += w;
                }
                a[(x, x)] = -degree + self.mu[x] * u[x].exp();
            }
            let b = DVector::from_column_slice(rhs);
            if let Some(sol) = a.clone().lu().solve(&b) {
                return Ok(sol.as_slice().to_vec());
            }
            // singular Jacobian at an isolated point: nudge the diagonal
            let scale = 1e-10 * a.diagonal().amax().max(1.0);
            for x in 0..self.n {
                a[(x, x)] += scale;
            }
            a.lu()
                .solve(&b)
                .map(|s| s.as_slice().to_vec())
                .ok_or(Error::SolveFailed {
                    residual: f64::INFINITY,
                    iterations: 0,
                })
        } else {
            let apply = |x: &[f64]| -> Vec<f64> {
                par::map_indexed(self.n, |i| {
                    let xi = x[i];
                    let mut acc = self.mu[i] * u[i].exp() * xi;
                    for &(j, w) in g.neighbors(i) {
                        acc += w * (x[j as usize] - xi);
                    }
                    acc
                })
            };
            let (sol, _) = minres(apply, rhs, 1e-10, (20 * self.n).max(500));
            Ok(sol)
        }
    }

    fn report(&self, u: &[f64]) -> VariationalReport {
        let p = self.p;
        let res_vec = self.residual_vec(u);
        let expu: Vec<f64> = par::map_indexed(self.n, |x| u[x].exp());
        let mass = par::sum_indexed(self.n, |x| expu[x] * self.mu[x]);
        let lap = self.laplacian(u);
        let mut grad: Vec<f64> = par::map_indexed(self.n, |x| -lap[x]);
        grad[p.pole] += p.rho / self.mu[p.pole];
        let ge = par::sum_indexed(self.n, |x| grad[x] * expu[x] * self.mu[x]);
        let ee = par::sum_indexed(self.n, |x| expu[x] * expu[x] * self.mu[x]);
        VariationalReport {
            j_value: self.j_value(u),
            constraint_defect: (mass - p.rho).abs(),
            residual_sup: self.sup(&res_vec),
            lambda_lagrange: ge / ee,
            iterations: self.iterations,
            trace: self.trace.clone(),
        }
    }
}
