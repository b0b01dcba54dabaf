//! Finite connected weighted graphs with a positive vertex measure.
//!
//! The graph carries everything the solvers consume: the μ-weighted Laplacian
//! `Δu(x) = (1/μ(x)) Σ_{y∼x} w_xy (u(y) − u(x))`, integration
//! `∫ f dμ = Σ_x f(x) μ(x)`, the Dirichlet energy and normalized Dirac masses.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{GraphId, VertexField};
use crate::par;

/// Connected finite graph with symmetric positive edge weights and a positive
/// vertex measure. Immutable after construction; shared reads are safe.
#[derive(Debug)]
pub struct WeightedGraph {
    id: GraphId,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    mu: Vec<f64>,
    /// Per-vertex neighbor list `(neighbor index, w_xy)`, sorted by index.
    adj: Vec<Vec<(u32, f64)>>,
    /// Canonical undirected edge list with `u < v`, sorted.
    edges: Vec<(u32, u32, f64)>,
    volume: f64,
}

impl WeightedGraph {
    /// Builds a graph from `(id, μ)` vertices and `(u, v, w)` edges.
    ///
    /// Parallel edges are merged by summing weights; self-loops are rejected.
    /// Fails unless the graph is connected, all weights are positive and all
    /// measures are positive.
    pub fn new<I, E>(vertices: I, edges: E) -> Result<Self>
    where
        I: IntoIterator<Item = (String, f64)>,
        E: IntoIterator<Item = (String, String, f64)>,
    {
        let mut ids = Vec::new();
        let mut mu = Vec::new();
        let mut index = HashMap::new();
        for (id, m) in vertices {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::BadMeasure { id, mu: m });
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateVertex(id));
            }
            ids.push(id);
            mu.push(m);
        }
        if ids.is_empty() {
            return Err(Error::EmptyGraph);
        }

        let mut merged: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for (u, v, w) in edges {
            let ui = *index
                .get(&u)
                .ok_or_else(|| Error::UnknownVertex(u.clone()))? as u32;
            let vi = *index
                .get(&v)
                .ok_or_else(|| Error::UnknownVertex(v.clone()))? as u32;
            if ui == vi {
                return Err(Error::SelfLoop(u));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::BadEdgeWeight { u, v, weight: w });
            }
            *merged.entry((ui.min(vi), ui.max(vi))).or_insert(0.0) += w;
        }

        let mut adj = vec![Vec::new(); ids.len()];
        let mut edge_list = Vec::with_capacity(merged.len());
        for (&(u, v), &w) in &merged {
            adj[u as usize].push((v, w));
            adj[v as usize].push((u, w));
            edge_list.push((u, v, w));
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable_by_key(|&(y, _)| y);
        }

        let graph = WeightedGraph {
            id: GraphId::fresh(),
            ids,
            index,
            volume: mu.iter().sum(),
            mu,
            adj,
            edges: edge_list,
        };
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(graph)
    }

    fn is_connected(&self) -> bool {
        let n = self.ids.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &self.adj[x] {
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    count += 1;
                    queue.push_back(y as usize);
                }
            }
        }
        count == n
    }

    pub fn id(&self) -> GraphId {
        self.id
    }

    pub fn vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `Vol(G) = Σ_x μ(x)`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn measure(&self, x: usize) -> f64 {
        self.mu[x]
    }

    pub fn measures(&self) -> &[f64] {
        &self.mu
    }

    pub fn neighbors(&self, x: usize) -> &[(u32, f64)] {
        &self.adj[x]
    }

    /// Canonical undirected edges `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vertex_id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    // ---- field constructors -------------------------------------------------

    pub fn field(&self, values: Vec<f64>) -> Result<VertexField> {
        if values.len() != self.ids.len() {
            return Err(Error::LengthMismatch {
                got: values.len(),
                expected: self.ids.len(),
            });
        }
        VertexField::checked(self.id, values)
    }

    pub fn zero_field(&self) -> VertexField {
        VertexField::new_unchecked(self.id, vec![0.0; self.ids.len()])
    }

    pub fn constant_field(&self, c: f64) -> Result<VertexField> {
        self.field(vec![c; self.ids.len()])
    }

    pub fn field_from_fn(&self, f: impl Fn(usize) -> f64 + Sync + Send) -> Result<VertexField> {
        let values = par::map_indexed(self.ids.len(), f);
        self.field(values)
    }

    pub(crate) fn bind(&self, values: Vec<f64>) -> VertexField {
        debug_assert_eq!(values.len(), self.ids.len());
        VertexField::new_unchecked(self.id, values)
    }

    pub(crate) fn check_bound(&self, f: &VertexField) -> Result<()> {
        if f.graph_id() != self.id {
            return Err(Error::GraphMismatch);
        }
        Ok(())
    }

    // ---- core operations ----------------------------------------------------

    /// `Δu(x) = (1/μ(x)) Σ_{y∼x} w_xy (u(y) − u(x))`.
    ///
    /// In exact arithmetic `∫ Δu dμ = 0` (divergence form).
    pub fn laplacian(&self, u: &VertexField) -> Result<VertexField> {
        self.check_bound(u)?;
        let vals = u.values();
        let out = par::map_indexed(self.ids.len(), |x| {
            let ux = vals[x];
            let mut acc = 0.0;
            for &(y, w) in &self.adj[x] {
                acc += w * (vals[y as usize] - ux);
            }
            acc / self.mu[x]
        });
        Ok(self.bind(out))
    }

    /// Dirichlet energy `E(u) = (1/4) Σ_x Σ_{y∼x} w_xy (u(y) − u(x))²`,
    /// the quadratic form with `E(u) = −(1/2) ∫ u·Δu dμ`.
    pub fn dirichlet_energy(&self, u: &VertexField) -> Result<f64> {
        self.check_bound(u)?;
        let vals = u.values();
        let sum = par::sum_indexed(self.ids.len(), |x| {
            let ux = vals[x];
            let mut acc = 0.0;
            for &(y, w) in &self.adj[x] {
                let d = vals[y as usize] - ux;
                acc += w * d * d;
            }
            acc
        });
        Ok(0.25 * sum)
    }

    /// `∫ f dμ = Σ_x f(x) μ(x)`.
    pub fn integrate(&self, f: &VertexField) -> Result<f64> {
        self.check_bound(f)?;
        let vals = f.values();
        Ok(par::sum_indexed(self.ids.len(), |x| vals[x] * self.mu[x]))
    }

    /// μ-weighted inner product `∫ f·g dμ`.
    pub fn dot_mu(&self, f: &VertexField, g: &VertexField) -> Result<f64> {
        self.check_bound(f)?;
        self.check_bound(g)?;
        let a = f.values();
        let b = g.values();
        Ok(par::sum_indexed(self.ids.len(), |x| a[x] * b[x] * self.mu[x]))
    }

    /// `(max_x |f(x)|, (1/Vol) ∫ f dμ)`.
    pub fn sup_norm_and_mean(&self, f: &VertexField) -> Result<(f64, f64)> {
        self.check_bound(f)?;
        Ok((f.sup_norm(), self.integrate(f)? / self.volume))
    }

    /// Normalized Dirac mass on `poles` (repetition adds multiplicity):
    /// value `multiplicity(x)/μ(x)` at each pole, 0 elsewhere, so that the
    /// realization integrates to the total multiplicity.
    pub fn dirac_source<S: AsRef<str>>(&self, poles: &[S]) -> Result<DiracSource> {
        if poles.is_empty() {
            return Err(Error::NoVortices);
        }
        let mut indices = Vec::with_capacity(poles.len());
        let mut values = vec![0.0; self.ids.len()];
        for p in poles {
            let x = self.index_of(p.as_ref())?;
            indices.push(x);
            values[x] += 1.0 / self.mu[x];
        }
        Ok(DiracSource {
            poles: indices,
            realization: self.bind(values),
        })
    }

    // ---- serialization ------------------------------------------------------

    /// Parses the JSON graph format:
    /// `{"vertices":[{"id":"a","mu":1.0},…], "edges":[{"u":"a","v":"b","w":1.0},…]}`.
    /// `mu` defaults to 1.0 when omitted.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedGraphFile(e.to_string()))?;
        WeightedGraph::new(
            file.vertices.into_iter().map(|v| (v.id, v.mu)),
            file.edges.into_iter().map(|e| (e.u, e.v, e.w)),
        )
    }

    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            vertices: self
                .ids
                .iter()
                .zip(&self.mu)
                .map(|(id, &mu)| GraphFileVertex {
                    id: id.clone(),
                    mu,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(u, v, w)| GraphFileEdge {
                    u: self.ids[u as usize].clone(),
                    v: self.ids[v as usize].clone(),
                    w,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph serialization cannot fail")
    }

    /// SHA-256 over the canonical vertex/edge content; identifies the graph a
    /// solution file belongs to.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (id, m) in self.ids.iter().zip(&self.mu) {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
            hasher.update(m.to_bits().to_le_bytes());
        }
        hasher.update([1u8]);
        for &(u, v, w) in &self.edges {
            hasher.update(u.to_le_bytes());
            hasher.update(v.to_le_bytes());
            hasher.update(w.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(out, "{byte:02x}").unwrap();
        }
        out
    }
}

/// Point mass(es) on designated vertices, stored with the realizing field.
#[derive(Debug, Clone)]
pub struct DiracSource {
    poles: Vec<usize>,
    realization: VertexField,
}

impl DiracSource {
    /// Pole indices, with multiplicity.
    pub fn poles(&self) -> &[usize] {
        &self.poles
    }

    pub fn multiplicity(&self) -> usize {
        self.poles.len()
    }

    pub fn realization(&self) -> &VertexField {
        &self.realization
    }

    pub fn into_realization(self) -> VertexField {
        self.realization
    }
}

fn default_mu() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct GraphFileVertex {
    id: String,
    #[serde(default = "default_mu")]
    mu: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphFileEdge {
    u: String,
    v: String,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    vertices: Vec<GraphFileVertex>,
    edges: Vec<GraphFileEdge>,
}

/// Two-vertex test graph with unit weight and measure.
#[cfg(test)]
pub(crate) fn k2() -> WeightedGraph {
    WeightedGraph::new(
        [("a".into(), 1.0), ("b".into(), 1.0)],
        [("a".into(), "b".into(), 1.0)],
    )
    .unwrap()
}
