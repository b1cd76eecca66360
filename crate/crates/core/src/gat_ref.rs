//! Dense reference implementation of a single-head graph transformer layer:
//!
//! ```text
//! α_ij    = softmax_j ( (W3 v_i)ᵀ (W4 v_j + W6 e_ij) / √d )
//! v_i'    = W1 v_i + Σ_j α_ij (W2 v_j + W6 e_ij)
//! ```
//!
//! No biases, no nonlinearity, double precision. Nodes without neighbors
//! get `W1 v_i`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub w3: Array2<f64>,
    pub w4: Array2<f64>,
    pub w6: Array2<f64>,
    /// Scaling dimension; must equal the key dimension (rows of W3).
    pub d: usize,
}

fn shape_err(matrix: &'static str, detail: String) -> Error {
    Error::Shape { matrix, detail }
}

impl DenseLayerParams {
    /// Checks shape compatibility. W6 projects edge features into both the
    /// key space and the output space, so those dimensions must agree.
    pub fn new(
        w1: Array2<f64>,
        w2: Array2<f64>,
        w3: Array2<f64>,
        w4: Array2<f64>,
        w6: Array2<f64>,
        d: usize,
    ) -> Result<Self> {
        let p = DenseLayerParams { w1, w2, w3, w4, w6, d };
        p.validate()?;
        Ok(p)
    }

    pub fn d_in(&self) -> usize {
        self.w1.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_edge(&self) -> usize {
        self.w6.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (d_out, d_in) = self.w1.dim();
        if self.w2.dim() != (d_out, d_in) {
            return Err(shape_err(
                "W2",
                format!("is {:?}, expected {:?} like W1", self.w2.dim(), (d_out, d_in)),
            ));
        }
        if self.w3.dim() != (d_out, d_in) {
            return Err(shape_err(
                "W3",
                format!("is {:?}, expected {:?}", self.w3.dim(), (d_out, d_in)),
            ));
        }
        if self.w4.dim() != (d_out, d_in) {
            return Err(shape_err(
                "W4",
                format!("is {:?}, expected {:?}", self.w4.dim(), (d_out, d_in)),
            ));
        }
        if self.w6.nrows() != d_out {
            return Err(shape_err(
                "W6",
                format!("has {} rows, expected {d_out}", self.w6.nrows()),
            ));
        }
        if self.d == 0 || self.d != self.w3.nrows() {
            return Err(shape_err(
                "d",
                format!("is {}, expected the key dimension {}", self.d, self.w3.nrows()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    pub nodes: Vec<Array1<f64>>,
    /// `neighbors[i]` is N(i), each entry carrying e_ij.
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl FeatureGraph {
    /// Graph with no edges.
    pub fn isolated(nodes: Vec<Array1<f64>>) -> Self {
        let n = nodes.len();
        FeatureGraph {
            nodes,
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Adds j to N(i) with edge features `edge`.
    pub fn connect(&mut self, i: usize, j: usize, edge: Array1<f64>) {
        self.neighbors[i].push(Neighbor { node: j, edge });
    }

    /// Checks the graph against the layer's expected dimensions.
    pub fn check(&self, p: &DenseLayerParams) -> Result<()> {
        if self.neighbors.len() != self.nodes.len() {
            return Err(Error::Invalid(format!(
                "{} neighbor lists for {} nodes",
                self.neighbors.len(),
                self.nodes.len()
            )));
        }
        if let Some((i, v)) = self.nodes.iter().enumerate().find(|(_, v)| v.len() != p.d_in()) {
            return Err(shape_err(
                "W1",
                format!("expects {} input features, node {i} has {}", p.d_in(), v.len()),
            ));
        }
        for (i, ns) in self.neighbors.iter().enumerate() {
            for n in ns {
                if n.node >= self.nodes.len() {
                    return Err(Error::Invalid(format!("node {i} lists missing neighbor {}", n.node)));
                }
                if n.edge.len() != p.d_edge() {
                    return Err(shape_err(
                        "W6",
                        format!(
                            "expects {} edge features, edge {i}<-{} has {}",
                            p.d_edge(),
                            n.node,
                            n.edge.len()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn coefficients_unchecked(g: &FeatureGraph, p: &DenseLayerParams, i: usize) -> Vec<f64> {
    let q = p.w3.dot(&g.nodes[i]);
    let scale = (p.d as f64).sqrt();
    let logits: Vec<f64> = g.neighbors[i]
        .iter()
        .map(|n| {
            let k = p.w4.dot(&g.nodes[n.node]) + p.w6.dot(&n.edge);
            q.dot(&k) / scale
        })
        .collect();
    softmax(&logits)
}

/// α_ij over j ∈ N(i), in neighbor-list order.
pub fn attention_coefficients(g: &FeatureGraph, p: &DenseLayerParams, i: usize) -> Result<Vec<f64>> {
    g.check(p)?;
    if i >= g.nodes.len() {
        return Err(Error::Invalid(format!(
            "node {i} out of range ({} nodes)",
            g.nodes.len()
        )));
    }
    if g.neighbors[i].is_empty() {
        return Err(Error::EmptyNeighborhood(i));
    }
    Ok(coefficients_unchecked(g, p, i))
}

fn update(g: &FeatureGraph, p: &DenseLayerParams, i: usize) -> Array1<f64> {
    let mut out = p.w1.dot(&g.nodes[i]);
    if g.neighbors[i].is_empty() {
        return out;
    }
    let alpha = coefficients_unchecked(g, p, i);
    for (a, n) in alpha.iter().zip(&g.neighbors[i]) {
        out.scaled_add(*a, &(p.w2.dot(&g.nodes[n.node]) + p.w6.dot(&n.edge)));
    }
    out
}

pub fn layer_forward(g: &FeatureGraph, p: &DenseLayerParams) -> Result<Vec<Array1<f64>>> {
    layer_forward_with(g, p, Execution::default())
}

pub fn layer_forward_with(g: &FeatureGraph, p: &DenseLayerParams, exec: Execution) -> Result<Vec<Array1<f64>>> {
    p.validate()?;
    g.check(p)?;
    let ids: Vec<usize> = (0..g.nodes.len()).collect();
    Ok(par::map(&ids, exec, |&i| update(g, p, i)))
}

/// Random parameters and graphs for property checks.
pub mod random {
    use super::*;

    pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    pub fn vector(rng: &mut impl Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.gen_range(-2.0..2.0))
    }

    pub fn params(rng: &mut impl Rng, d_in: usize, d_out: usize, d_edge: usize) -> DenseLayerParams {
        DenseLayerParams::new(
            matrix(rng, d_out, d_in),
            matrix(rng, d_out, d_in),
            matrix(rng, d_out, d_in),
            matrix(rng, d_out, d_in),
            matrix(rng, d_out, d_edge),
            d_out,
        )
        .expect("consistent random shapes")
    }

    /// Directed graph where each ordered pair is an edge with probability `density`.
    pub fn graph(rng: &mut impl Rng, n: usize, d_in: usize, d_edge: usize, density: f64) -> FeatureGraph {
        let mut g = FeatureGraph::isolated((0..n).map(|_| vector(rng, d_in)).collect());
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(density) {
                    let e = vector(rng, d_edge);
                    g.connect(i, j, e);
                }
            }
        }
        g
    }
}

/// Result of [`invariant_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub seed: u64,
    pub graphs: usize,
    pub max_row_sum_error: f64,
    pub max_permutation_error: f64,
    pub locality_violations: usize,
    pub non_finite_outputs: usize,
    pub sequential_parallel_mismatches: usize,
}

impl InvariantReport {
    pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
    pub const PERMUTATION_TOLERANCE: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.max_row_sum_error <= Self::ROW_SUM_TOLERANCE
            && self.max_permutation_error <= Self::PERMUTATION_TOLERANCE
            && self.locality_violations == 0
            && self.non_finite_outputs == 0
            && self.sequential_parallel_mismatches == 0
    }
}

fn permute(g: &FeatureGraph, perm: &[usize]) -> FeatureGraph {
    // perm[old] = new
    let n = g.nodes.len();
    let mut nodes = vec![Array1::zeros(0); n];
    let mut neighbors = vec![Vec::new(); n];
    for old in 0..n {
        nodes[perm[old]] = g.nodes[old].clone();
        neighbors[perm[old]] = g.neighbors[old]
            .iter()
            .map(|nb| Neighbor {
                node: perm[nb.node],
                edge: nb.edge.clone(),
            })
            .collect();
    }
    FeatureGraph { nodes, neighbors }
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Checks coefficient normalization, permutation equivariance, locality,
/// finiteness and sequential/parallel agreement on `graphs` random graphs.
pub fn invariant_suite(seed: u64, graphs: usize) -> InvariantReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvariantReport {
        seed,
        graphs,
        max_row_sum_error: 0.0,
        max_permutation_error: 0.0,
        locality_violations: 0,
        non_finite_outputs: 0,
        sequential_parallel_mismatches: 0,
    };
    for _ in 0..graphs {
        let n = rng.gen_range(1..=20);
        let (d_in, d_out, d_edge) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=4));
        let density = rng.gen_range(0.0..0.5);
        let p = random::params(&mut rng, d_in, d_out, d_edge);
        let g = random::graph(&mut rng, n, d_in, d_edge, density);

        for i in 0..n {
            if !g.neighbors[i].is_empty() {
                let s: f64 = coefficients_unchecked(&g, &p, i).iter().sum();
                report.max_row_sum_error = report.max_row_sum_error.max((s - 1.0).abs());
            }
        }

        let out = layer_forward_with(&g, &p, Execution::Sequential).expect("consistent shapes");
        report.non_finite_outputs += out.iter().filter(|v| v.iter().any(|x| !x.is_finite())).count();
        let par_out = layer_forward_with(&g, &p, Execution::Parallel).expect("consistent shapes");
        report.sequential_parallel_mismatches += out.iter().zip(&par_out).filter(|(a, b)| a != b).count();

        let mut perm: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            perm.swap(k, rng.gen_range(0..=k));
        }
        let permuted = layer_forward_with(&permute(&g, &perm), &p, Execution::Sequential).expect("consistent shapes");
        for old in 0..n {
            report.max_permutation_error = report
                .max_permutation_error
                .max(max_abs_diff(&out[old], &permuted[perm[old]]));
        }

        let i = rng.gen_range(0..n);
        let outside: Vec<usize> = (0..n)
            .filter(|&k| k != i && !g.neighbors[i].iter().any(|nb| nb.node == k))
            .collect();
        if !outside.is_empty() {
            let k = outside[rng.gen_range(0..outside.len())];
            let mut changed = g.clone();
            changed.nodes[k] = random::vector(&mut rng, d_in);
            let after = layer_forward_with(&changed, &p, Execution::Sequential).expect("consistent shapes");
            if after[i] != out[i] {
                report.locality_violations += 1;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_params(w: f64, w6: f64) -> DenseLayerParams {
        let m = |x: f64| array![[x]];
        DenseLayerParams::new(m(w), m(w), m(w), m(w), m(w6), 1).unwrap()
    }

    #[test]
    fn two_neighbor_softmax_gives_quarter_and_three_quarters() {
        let mut g = FeatureGraph::isolated(vec![array![1.0], array![0.0], array![3f64.ln()]]);
        g.connect(0, 1, array![0.0]);
        g.connect(0, 2, array![0.0]);
        let a = attention_coefficients(&g, &scalar_params(1.0, 0.0), 0).unwrap();
        assert!((a[0] - 0.25).abs() < 1e-12 && (a[1] - 0.75).abs() < 1e-12, "{a:?}");
    }

    #[test]
    fn singleton_neighborhood_has_unit_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random::params(&mut rng, 3, 4, 2);
        let mut g = FeatureGraph::isolated(vec![random::vector(&mut rng, 3), random::vector(&mut rng, 3)]);
        g.connect(0, 1, random::vector(&mut rng, 2));
        assert_eq!(attention_coefficients(&g, &p, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn uniform_logit_shift_leaves_coefficients_unchanged() {
        // With W6 = 1 and v_i = 1, an edge feature c adds c to every logit.
        let base = |c: f64| {
            let mut g = FeatureGraph::isolated(vec![array![1.0], array![0.5], array![-1.0]]);
            g.connect(0, 1, array![c]);
            g.connect(0, 2, array![c]);
            attention_coefficients(&g, &scalar_params(1.0, 1.0), 0).unwrap()
        };
        let (a, b) = (base(0.0), base(5.0));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn empty_neighborhood_is_an_error() {
        let g = FeatureGraph::isolated(vec![array![1.0]]);
        assert!(matches!(
            attention_coefficients(&g, &scalar_params(1.0, 0.0), 0),
            Err(Error::EmptyNeighborhood(0))
        ));
    }

    #[test]
    fn isolated_node_maps_through_w1() {
        let p = DenseLayerParams::new(
            array![[2.0, 0.0], [1.0, 1.0]],
            Array2::zeros((2, 2)),
            Array2::zeros((2, 2)),
            Array2::zeros((2, 2)),
            Array2::zeros((2, 1)),
            2,
        )
        .unwrap();
        let out = layer_forward(&FeatureGraph::isolated(vec![array![1.0, 3.0]]), &p).unwrap();
        assert_eq!(out[0], array![2.0, 4.0]);
    }

    #[test]
    fn identity_configuration_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DenseLayerParams::new(
            Array2::eye(3),
            Array2::zeros((3, 3)),
            random::matrix(&mut rng, 3, 3),
            random::matrix(&mut rng, 3, 3),
            Array2::zeros((3, 2)),
            3,
        )
        .unwrap();
        let g = random::graph(&mut rng, 6, 3, 2, 0.5);
        let out = layer_forward(&g, &p).unwrap();
        for (o, v) in out.iter().zip(&g.nodes) {
            assert!(max_abs_diff(o, v) < 1e-15);
        }
    }

    #[test]
    fn two_node_path_with_unit_weights() {
        let mut g = FeatureGraph::isolated(vec![array![1.0], array![2.0]]);
        g.connect(0, 1, array![0.0]);
        g.connect(1, 0, array![0.0]);
        let out = layer_forward(&g, &scalar_params(1.0, 1.0)).unwrap();
        assert_eq!(out, vec![array![3.0], array![3.0]]);
    }

    #[test]
    fn shape_errors_name_the_matrix() {
        let bad = DenseLayerParams::new(
            Array2::zeros((2, 3)),
            Array2::zeros((2, 3)),
            Array2::zeros((2, 3)),
            Array2::zeros((3, 3)),
            Array2::zeros((2, 1)),
            2,
        )
        .unwrap_err();
        assert!(bad.to_string().contains("W4"), "{bad}");

        let p = scalar_params(1.0, 1.0);
        let mut g = FeatureGraph::isolated(vec![array![1.0], array![1.0]]);
        g.connect(0, 1, array![1.0, 2.0]);
        assert!(layer_forward(&g, &p).unwrap_err().to_string().contains("W6"));
        let g = FeatureGraph::isolated(vec![array![1.0, 2.0]]);
        assert!(layer_forward(&g, &p).unwrap_err().to_string().contains("W1"));
    }

    #[test]
    fn large_logits_stay_finite() {
        let mut g = FeatureGraph::isolated(vec![array![1000.0], array![1000.0], array![-1000.0]]);
        g.connect(0, 1, array![0.0]);
        g.connect(0, 2, array![0.0]);
        let a = attention_coefficients(&g, &scalar_params(1.0, 0.0), 0).unwrap();
        assert!(a.iter().all(|x| x.is_finite()));
        assert!((a[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariant_suite_passes() {
        let r = invariant_suite(11, 40);
        assert!(r.passed(), "{r:?}");
    }
}
