//! Discrete 2-torus graphs and their Green's function critical points.
//!
//! The torus is the quotient of the square lattice graph `Z²` by a rank-2
//! sublattice given by two integer period vectors. The τ = 1/2 + i torus at
//! refinement `n` uses the sublattice spanned by `(n,0)` and `(n/2,n)`:
//! wrapping once in the second direction shifts the first coordinate by
//! `n/2`, which realizes the half-period twist. Continuum coordinates are
//! fundamental-domain lattice positions divided by `n`, so the period
//! vectors map to `1` and `τ`.
//!
//! The Green's function with pole at the origin class is computed with the
//! graph solver; its critical vertices are located by a sign-change test on
//! the axis differences and refined by a local quadratic fit, then separated
//! into the pole, the three half-period classes and the remaining
//! "additional" points whose connecting line's slope is measured.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::VertexField;
use crate::graph::WeightedGraph;
use crate::linsolve::green_function;

/// Quotient description: grid refinement `n` and two period vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusSpec {
    pub n: u32,
    /// Rows span the sublattice: `periods[0] = (a,b)`, `periods[1] = (c,d)`.
    pub periods: [[i64; 2]; 2],
}

impl TorusSpec {
    /// Preset for τ = 1/2 + i: periods `(n,0)` and `(n/2,n)`; `n` must be even.
    pub fn tau_half_plus_i(n: u32) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::OddRefinement(n));
        }
        Ok(TorusSpec {
            n,
            periods: [[n as i64, 0], [n as i64 / 2, n as i64]],
        })
    }

    /// Explicit period vectors; the quotient has `|ad − bc|` vertices.
    pub fn with_periods(n: u32, periods: [[i64; 2]; 2]) -> Result<Self> {
        let spec = TorusSpec { n, periods };
        if n == 0 {
            return Err(Error::DegenerateLattice("refinement n must be ≥ 1".into()));
        }
        if spec.determinant() == 0 {
            return Err(Error::DegenerateLattice(
                "period vectors are linearly dependent".into(),
            ));
        }
        Ok(spec)
    }

    pub fn determinant(&self) -> i64 {
        let [[a, b], [c, d]] = self.periods;
        a * d - b * c
    }
}

/// Hermite basis of the sublattice: `h1 = (p, 0)`, `h2 = (q, r)` with
/// `0 ≤ q < p` and `p·r = |det|`; the fundamental domain is `[0,p) × [0,r)`.
#[derive(Debug, Clone, Copy)]
struct Hermite {
    p: i64,
    q: i64,
    r: i64,
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

impl Hermite {
    fn from_spec(spec: &TorusSpec) -> Result<Self> {
        let [[a, b], [c, d]] = spec.periods;
        let det = spec.determinant();
        if det == 0 {
            return Err(Error::DegenerateLattice(
                "period vectors are linearly dependent".into(),
            ));
        }
        let (mut g, mut x, mut y) = ext_gcd(b, d);
        if g == 0 {
            // b = d = 0 forces det = 0, already rejected
            unreachable!("gcd(b,d) = 0 implies a degenerate lattice");
        }
        if g < 0 {
            g = -g;
            x = -x;
            y = -y;
        }
        let p = det.abs() / g;
        let q = (x * a + y * c).rem_euclid(p);
        Ok(Hermite { p, q, r: g })
    }

    fn canon(&self, i: i64, j: i64) -> (i64, i64) {
        let m = j.div_euclid(self.r);
        let jj = j - m * self.r;
        let ii = (i - m * self.q).rem_euclid(self.p);
        (ii, jj)
    }
}

/// A built torus quotient: the weighted graph plus the coordinate maps.
#[derive(Debug)]
pub struct TorusGraph {
    spec: TorusSpec,
    graph: WeightedGraph,
    hermite: Hermite,
}

/// Builds the quotient graph: unit weights, unit measure, 4-neighbor lattice
/// edges (parallel classes merge by weight, so every weighted degree is 4).
pub fn build_torus_graph(spec: &TorusSpec) -> Result<TorusGraph> {
    let hermite = Hermite::from_spec(spec)?;
    let (p, r) = (hermite.p, hermite.r);

    // a quotient identifying lattice neighbors would create self-loops
    for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        if hermite.canon(di, dj) == (0, 0) {
            return Err(Error::DegenerateLattice(
                "quotient identifies adjacent lattice vertices".into(),
            ));
        }
    }

    let id_of = |i: i64, j: i64| format!("{i},{j}");
    let mut vertices = Vec::with_capacity((p * r) as usize);
    for i in 0..p {
        for j in 0..r {
            vertices.push((id_of(i, j), 1.0));
        }
    }
    let mut edges = Vec::with_capacity(2 * (p * r) as usize);
    for i in 0..p {
        for j in 0..r {
            for (di, dj) in [(1, 0), (0, 1)] {
                let (ii, jj) = hermite.canon(i + di, j + dj);
                edges.push((id_of(i, j), id_of(ii, jj), 1.0));
            }
        }
    }
    let graph = WeightedGraph::new(vertices, edges)?;
    Ok(TorusGraph {
        spec: *spec,
        graph,
        hermite,
    })
}

impl TorusGraph {
    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    /// Canonical fundamental-domain representative of `(i, j)`.
    pub fn canon(&self, i: i64, j: i64) -> (i64, i64) {
        self.hermite.canon(i, j)
    }

    pub fn index_of_coord(&self, i: i64, j: i64) -> usize {
        let (ii, jj) = self.hermite.canon(i, j);
        (ii * self.hermite.r + jj) as usize
    }

    pub fn coord_of_index(&self, idx: usize) -> (i64, i64) {
        let r = self.hermite.r;
        (idx as i64 / r, idx as i64 % r)
    }

    pub fn origin(&self) -> usize {
        self.index_of_coord(0, 0)
    }

    /// Continuum position of a (possibly refined) lattice coordinate:
    /// the fundamental-domain position divided by `n`.
    pub fn continuum(&self, pos: (f64, f64)) -> (f64, f64) {
        let n = self.spec.n as f64;
        (pos.0 / n, pos.1 / n)
    }

    /// Distance between lattice positions on the quotient (minimum over
    /// nearby lattice translates).
    pub fn quotient_distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let p = self.hermite.p as f64;
        let q = self.hermite.q as f64;
        let r = self.hermite.r as f64;
        let mut best = f64::INFINITY;
        for s1 in -2..=2i64 {
            for s2 in -2..=2i64 {
                let di = a.0 - b.0 - s1 as f64 * p - s2 as f64 * q;
                let dj = a.1 - b.1 - s2 as f64 * r;
                best = best.min(di.hypot(dj));
            }
        }
        best
    }

    /// The three half-period classes `g₁/2`, `g₂/2`, `(g₁+g₂)/2` in lattice
    /// coordinates (not necessarily integral).
    pub fn half_periods(&self) -> [(f64, f64); 3] {
        let [[a, b], [c, d]] = self.spec.periods;
        [
            (a as f64 / 2.0, b as f64 / 2.0),
            (c as f64 / 2.0, d as f64 / 2.0),
            ((a + c) as f64 / 2.0, (b + d) as f64 / 2.0),
        ]
    }
}

/// Green's function on the torus with pole at the origin class.
pub fn torus_green(tg: &TorusGraph) -> Result<VertexField> {
    let origin = tg.graph.vertex_id(tg.origin()).to_string();
    green_function(&tg.graph, &origin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalClass {
    Max,
    Min,
    Saddle,
    Degenerate,
}

impl CriticalClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CriticalClass::Max => "max",
            CriticalClass::Min => "min",
            CriticalClass::Saddle => "saddle",
            CriticalClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Pole,
    HalfPeriod,
    Additional,
}

impl CriticalKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CriticalKind::Pole => "pole",
            CriticalKind::HalfPeriod => "half-period",
            CriticalKind::Additional => "additional",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalPoint {
    /// Lattice vertex where the detection fired.
    pub lattice: (i64, i64),
    /// Sub-grid stationary point of the local quadratic fit, lattice coords.
    pub refined: (f64, f64),
    pub class: CriticalClass,
    pub kind: CriticalKind,
    /// Green's function value at the lattice vertex.
    pub g_value: f64,
}

#[derive(Debug, Clone)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPoint>,
    /// Pole position in lattice coordinates.
    pub pole: (i64, i64),
}

impl CriticalPointSet {
    pub fn additional(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.points
            .iter()
            .filter(|p| p.kind == CriticalKind::Additional)
    }
}

/// Locates critical vertices of `green`: both axis forward-difference pairs
/// must change sign (or vanish within `tol`) across the vertex; candidates
/// are refined by the stationary point of a least-squares quadratic on the
/// 3×3 stencil and kept when it lies inside the cell. Nearby detections of
/// the same sub-grid point are merged.
pub fn find_critical_points(
    tg: &TorusGraph,
    green: &VertexField,
    tol: f64,
) -> Result<CriticalPointSet> {
    tg.graph.check_bound(green)?;
    let gv = green.values();
    let at = |i: i64, j: i64| gv[tg.index_of_coord(i, j)];
    let (p, r) = (tg.hermite.p, tg.hermite.r);

    // least-squares quadratic fit on the 3x3 stencil:
    // z ≈ a0 + a1·di + a2·dj + a3·di² + a4·di·dj + a5·dj²
    let design = DMatrix::<f64>::from_fn(9, 6, |row, col| {
        let di = (row / 3) as f64 - 1.0;
        let dj = (row % 3) as f64 - 1.0;
        match col {
            0 => 1.0,
            1 => di,
            2 => dj,
            3 => di * di,
            4 => di * dj,
            _ => dj * dj,
        }
    });
    let fit = (design.transpose() * &design)
        .try_inverse()
        .expect("fixed stencil Gram matrix is invertible")
        * design.transpose();

    let sign_change = |fwd: f64, bwd: f64| fwd * bwd <= 0.0 || fwd.abs() <= tol || bwd.abs() <= tol;

    let mut raw: Vec<CriticalPoint> = Vec::new();
    for i in 0..p {
        for j in 0..r {
            let center = at(i, j);
            let f1p = at(i + 1, j) - center;
            let f1m = center - at(i - 1, j);
            let f2p = at(i, j + 1) - center;
            let f2m = center - at(i, j - 1);
            if !(sign_change(f1p, f1m) && sign_change(f2p, f2m)) {
                continue;
            }

            let mut z = nalgebra::DVector::<f64>::zeros(9);
            let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
            for di in -1..=1i64 {
                for dj in -1..=1i64 {
                    let value = at(i + di, j + dj);
                    z[((di + 1) * 3 + (dj + 1)) as usize] = value;
                    z_min = z_min.min(value);
                    z_max = z_max.max(value);
                }
            }
            if z_max - z_min <= tol {
                // exactly (or tolerably) flat stencil: degenerate critical vertex
                raw.push(CriticalPoint {
                    lattice: (i, j),
                    refined: (i as f64, j as f64),
                    class: CriticalClass::Degenerate,
                    kind: CriticalKind::Additional,
                    g_value: center,
                });
                continue;
            }
            let coef = &fit * z;
            let (a1, a2, a3, a4, a5) = (coef[1], coef[2], coef[3], coef[4], coef[5]);
            let (h11, h12, h22) = (2.0 * a3, a4, 2.0 * a5);
            let det = h11 * h22 - h12 * h12;
            let hnorm2 = h11 * h11 + h22 * h22 + 2.0 * h12 * h12;
            let grad_norm = a1.hypot(a2);

            let (refined, class) = if det.abs() <= 1e-12 * hnorm2.max(1e-300) {
                if grad_norm > tol.max(1e-13) {
                    continue; // flat Hessian with a real gradient: not stationary
                }
                ((i as f64, j as f64), CriticalClass::Degenerate)
            } else {
                let dx = (-a1 * h22 + a2 * h12) / det;
                let dy = (-a2 * h11 + a1 * h12) / det;
                if dx.abs().max(dy.abs()) > 0.75 {
                    continue; // stationary point of the fit falls outside the cell
                }
                let class = if det < 0.0 {
                    CriticalClass::Saddle
                } else if h11 + h22 > 0.0 {
                    CriticalClass::Min
                } else {
                    CriticalClass::Max
                };
                ((i as f64 + dx, j as f64 + dy), class)
            };
            raw.push(CriticalPoint {
                lattice: (i, j),
                refined,
                class,
                kind: CriticalKind::Additional, // labeled below
                g_value: center,
            });
        }
    }

    // merge detections that refine to the same sub-grid point
    let mut clusters: Vec<(CriticalPoint, usize)> = Vec::new();
    'outer: for pt in raw {
        for (rep, count) in &mut clusters {
            if tg.quotient_distance(pt.refined, rep.refined) <= 0.75 {
                let total = (*count + 1) as f64;
                rep.refined = (
                    rep.refined.0 + (pt.refined.0 - rep.refined.0) / total,
                    rep.refined.1 + (pt.refined.1 - rep.refined.1) / total,
                );
                *count += 1;
                continue 'outer;
            }
        }
        clusters.push((pt, 1));
    }

    let halves = tg.half_periods();
    let mut points: Vec<CriticalPoint> = clusters
        .into_iter()
        .map(|(mut pt, _)| {
            pt.kind = if tg.quotient_distance(pt.refined, (0.0, 0.0)) <= 1.0 {
                CriticalKind::Pole
            } else if halves
                .iter()
                .any(|&h| tg.quotient_distance(pt.refined, h) <= 1.0)
            {
                CriticalKind::HalfPeriod
            } else {
                CriticalKind::Additional
            };
            pt
        })
        .collect();
    points.sort_by_key(|pt| pt.lattice);

    Ok(CriticalPointSet {
        points,
        pole: (0, 0),
    })
}

/// Slope (absolute value) of the line through the two additional critical
/// points, measured in continuum coordinates along the shortest connecting
/// displacement on the torus.
pub fn critical_slope(cps: &CriticalPointSet, tg: &TorusGraph) -> Result<f64> {
    let additional: Vec<&CriticalPoint> = cps.additional().collect();
    if additional.len() != 2 {
        return Err(Error::AmbiguousCriticalSet(additional.len()));
    }
    let a = tg.continuum(additional[0].refined);
    let b = tg.continuum(additional[1].refined);
    let n = tg.spec.n as f64;
    let [[pa, pb], [pc, pd]] = tg.spec.periods;
    let (g1, g2) = (
        (pa as f64 / n, pb as f64 / n),
        (pc as f64 / n, pd as f64 / n),
    );
    let mut best: Option<(f64, f64, f64)> = None;
    for s1 in -2..=2i64 {
        for s2 in -2..=2i64 {
            let dx = b.0 - a.0 + s1 as f64 * g1.0 + s2 as f64 * g2.0;
            let dy = b.1 - a.1 + s1 as f64 * g1.1 + s2 as f64 * g2.1;
            let d = dx.hypot(dy);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, dx, dy));
            }
        }
    }
    let (_, dx, dy) = best.expect("shift search is nonempty");
    if dx == 0.0 {
        return Ok(if dy == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((dy / dx).abs())
}
