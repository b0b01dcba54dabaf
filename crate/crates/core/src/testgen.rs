//! Seeded random connected graphs for tests and benches.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::WeightedGraph;

/// Deterministic RNG for reproducible instances.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct RandomGraphConfig {
    /// Vertex count is drawn uniformly from `2..=max_vertices`.
    pub max_vertices: usize,
    pub weight_range: (f64, f64),
    pub mu_range: (f64, f64),
    /// Extra random edges per vertex on top of the random spanning tree.
    pub extra_edges_per_vertex: f64,
}

impl Default for RandomGraphConfig {
    fn default() -> Self {
        RandomGraphConfig {
            max_vertices: 50,
            weight_range: (0.5, 2.0),
            mu_range: (0.5, 2.0),
            extra_edges_per_vertex: 0.6,
        }
    }
}

/// Random connected graph: a random recursive tree plus extra random edges,
/// weights and measures uniform in the configured ranges.
pub fn random_connected_graph(rng: &mut impl Rng, cfg: &RandomGraphConfig) -> WeightedGraph {
    let n = rng.gen_range(2..=cfg.max_vertices.max(2));
    let vertices: Vec<(String, f64)> = (0..n)
        .map(|i| {
            (
                format!("v{i}"),
                rng.gen_range(cfg.mu_range.0..=cfg.mu_range.1),
            )
        })
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push((
            format!("v{j}"),
            format!("v{i}"),
            rng.gen_range(cfg.weight_range.0..=cfg.weight_range.1),
        ));
    }
    let extra = (cfg.extra_edges_per_vertex * n as f64).round() as usize;
    for _ in 0..extra {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            edges.push((
                format!("v{i}"),
                format!("v{j}"),
                rng.gen_range(cfg.weight_range.0..=cfg.weight_range.1),
            ));
        }
    }
    WeightedGraph::new(vertices, edges).expect("generator output is connected by construction")
}
