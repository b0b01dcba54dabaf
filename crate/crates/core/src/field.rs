//! Real-valued functions on the vertex set.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Process-unique identity of a graph; fields carry it so that operations can
/// reject a field built on a different graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GraphId(u64);

impl GraphId {
    pub(crate) fn fresh() -> Self {
        GraphId(NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A function `V → ℝ`, stored densely in the graph's vertex index order.
///
/// Every value is finite; constructors reject NaN and infinities so that no
/// public operation can leak them.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField {
    graph: GraphId,
    values: Vec<f64>,
}

impl VertexField {
    pub(crate) fn new_unchecked(graph: GraphId, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        VertexField { graph, values }
    }

    pub(crate) fn checked(graph: GraphId, values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(VertexField { graph, values })
    }

    pub fn graph_id(&self) -> GraphId {
        self.graph
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_x |f(x)|` (0 for the empty field, which cannot occur on a valid graph).
    pub fn sup_norm(&self) -> f64 {
        crate::par::max_indexed(self.values.len(), |i| self.values[i].abs()).max(0.0)
    }

    pub fn min(&self) -> f64 {
        -crate::par::max_indexed(self.values.len(), |i| -self.values[i])
    }

    pub fn max(&self) -> f64 {
        crate::par::max_indexed(self.values.len(), |i| self.values[i])
    }

    /// `max_x (self - other)(x)`; the sign test used by the monotonicity checks.
    pub fn max_difference(&self, other: &VertexField) -> Result<f64> {
        if self.graph != other.graph {
            return Err(Error::GraphMismatch);
        }
        Ok(crate::par::max_indexed(self.values.len(), |i| {
            self.values[i] - other.values[i]
        }))
    }

    /// `‖self − other‖_∞`.
    pub fn sup_distance(&self, other: &VertexField) -> Result<f64> {
        if self.graph != other.graph {
            return Err(Error::GraphMismatch);
        }
        Ok(crate::par::max_indexed(self.values.len(), |i| {
            (self.values[i] - other.values[i]).abs()
        })
        .max(0.0))
    }
}
