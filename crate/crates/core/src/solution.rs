//! Machine-readable solution files.
//!
//! A solution file pins the graph (by content hash), the equation and its
//! parameters, the field values by vertex id and the solver report, so that
//! re-evaluating the residual after a round trip reproduces the stored value.
//! JSON float serialization is shortest-round-trip, so reloading is exact.

use serde::{Deserialize, Serialize};

use crate::dirac::{DiracProblem, VariationalReport};
use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::graph::WeightedGraph;
use crate::vortex::{VortexProblem, VortexReport, VortexStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquationTag {
    Dirac,
    Vortex,
    Green,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Poles of the Dirac source (with multiplicity for the vortex equation).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poles: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldValue {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBlock {
    pub status: String,
    pub residual_sup: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_defect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_lagrange: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_defect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_used: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub graph_hash: String,
    pub equation: EquationTag,
    pub parameters: Parameters,
    /// Field values in graph vertex order.
    pub field: Vec<FieldValue>,
    pub report: ReportBlock,
}

fn field_values(g: &WeightedGraph, u: &VertexField) -> Vec<FieldValue> {
    g.vertex_ids()
        .iter()
        .zip(u.values())
        .map(|(id, &value)| FieldValue {
            id: id.clone(),
            value,
        })
        .collect()
}

impl SolutionFile {
    pub fn for_dirac(p: &DiracProblem, u: &VertexField, report: &VariationalReport) -> Self {
        let g = p.graph();
        SolutionFile {
            graph_hash: g.content_hash(),
            equation: EquationTag::Dirac,
            parameters: Parameters {
                rho: Some(p.rho()),
                lambda: None,
                poles: vec![g.vertex_id(p.pole()).to_string()],
            },
            field: field_values(g, u),
            report: ReportBlock {
                status: "converged".to_string(),
                residual_sup: report.residual_sup,
                iterations: report.iterations,
                constraint_defect: Some(report.constraint_defect),
                lambda_lagrange: Some(report.lambda_lagrange),
                mass_defect: None,
                u_max: None,
                lambda_bound: None,
                k_used: None,
            },
        }
    }

    pub fn for_vortex(p: &VortexProblem, u: &VertexField, report: &VortexReport) -> Self {
        let g = p.graph();
        SolutionFile {
            graph_hash: g.content_hash(),
            equation: EquationTag::Vortex,
            parameters: Parameters {
                rho: None,
                lambda: Some(p.lambda()),
                poles: p
                    .vortices()
                    .iter()
                    .map(|&x| g.vertex_id(x).to_string())
                    .collect(),
            },
            field: field_values(g, u),
            report: ReportBlock {
                status: match report.status {
                    VortexStatus::Converged => "converged",
                    VortexStatus::Diverged(_) => "diverged",
                    VortexStatus::BudgetExhausted => "budget_exhausted",
                }
                .to_string(),
                residual_sup: report.residual_sup,
                iterations: report.iterations,
                constraint_defect: None,
                lambda_lagrange: None,
                mass_defect: Some(report.mass_defect),
                u_max: Some(report.u_max),
                lambda_bound: Some(report.lambda_bound),
                k_used: Some(report.k_used),
            },
        }
    }

    pub fn for_green(g: &WeightedGraph, pole: &str, green: &VertexField) -> Result<Self> {
        let residual_sup = green_residual_sup(g, pole, green)?;
        Ok(SolutionFile {
            graph_hash: g.content_hash(),
            equation: EquationTag::Green,
            parameters: Parameters {
                rho: None,
                lambda: None,
                poles: vec![pole.to_string()],
            },
            field: field_values(g, green),
            report: ReportBlock {
                status: "converged".to_string(),
                residual_sup,
                iterations: 0,
                constraint_defect: None,
                lambda_lagrange: None,
                mass_defect: None,
                u_max: None,
                lambda_bound: None,
                k_used: None,
            },
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedSolutionFile(e.to_string()))
    }

    /// Rebuilds the stored field on `g`, in graph vertex order.
    pub fn field_on(&self, g: &WeightedGraph) -> Result<VertexField> {
        if self.field.len() != g.vertex_count() {
            return Err(Error::MalformedSolutionFile(format!(
                "field has {} entries for a graph with {} vertices",
                self.field.len(),
                g.vertex_count()
            )));
        }
        let mut values = vec![f64::NAN; g.vertex_count()];
        for fv in &self.field {
            let x = g.index_of(&fv.id)?;
            if !values[x].is_nan() {
                return Err(Error::MalformedSolutionFile(format!(
                    "duplicate field entry for vertex `{}`",
                    fv.id
                )));
            }
            values[x] = fv.value;
        }
        g.field(values)
    }

    /// Re-evaluates the equation residual of the stored field on `g` and
    /// returns `(stored, recomputed)` sup-norms.
    pub fn verify(&self, g: &WeightedGraph) -> Result<(f64, f64)> {
        if g.content_hash() != self.graph_hash {
            return Err(Error::GraphHashMismatch);
        }
        let u = self.field_on(g)?;
        let recomputed = match self.equation {
            EquationTag::Dirac => {
                let rho = self.parameters.rho.ok_or_else(|| {
                    Error::MalformedSolutionFile("dirac solution without rho".into())
                })?;
                let pole = self.parameters.poles.first().ok_or_else(|| {
                    Error::MalformedSolutionFile("dirac solution without a pole".into())
                })?;
                let p = DiracProblem::new(g, rho, pole)?;
                p.residual(&u)?.sup_norm()
            }
            EquationTag::Vortex => {
                let lambda = self.parameters.lambda.ok_or_else(|| {
                    Error::MalformedSolutionFile("vortex solution without lambda".into())
                })?;
                let p = VortexProblem::new(g, lambda, &self.parameters.poles)?;
                p.residual(&u)?.sup_norm()
            }
            EquationTag::Green => {
                let pole = self.parameters.poles.first().ok_or_else(|| {
                    Error::MalformedSolutionFile("green solution without a pole".into())
                })?;
                green_residual_sup(g, pole, &u)?
            }
        };
        Ok((self.report.residual_sup, recomputed))
    }
}

/// `‖ΔG − (δ_pole − 1/Vol)‖_∞`.
pub fn green_residual_sup(g: &WeightedGraph, pole: &str, green: &VertexField) -> Result<f64> {
    let p = g.index_of(pole)?;
    let lap = g.laplacian(green)?;
    let vol = g.volume();
    let lv = lap.values();
    Ok(crate::par::max_indexed(g.vertex_count(), |x| {
        let rhs = if x == p { 1.0 / g.measure(x) - 1.0 / vol } else { -1.0 / vol };
        (lv[x] - rhs).abs()
    })
    .max(0.0))
}
