//! Grundmann-Moller quadrature on simplices of arbitrary dimension.
//!
//! The rule of index s integrates polynomials of total degree 2s+1 exactly on
//! a k-simplex, with closed-form nodes in barycentric coordinates. Index 1
//! (degree 3) is the default throughout the crate: it is exact for products
//! of the dual basis with P2, which is what the interpolation operator needs.

use crate::simplex::{factorial, Simplex};

/// Default polynomial exactness degree for interpolation-type integrals.
pub const DEFAULT_DEGREE: usize = 3;

/// Quadrature rule on the reference k-simplex, stored in barycentric form.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    dim: usize,
    degree: usize,
    /// Barycentric coordinates of each node, k+1 entries per node.
    nodes: Vec<Vec<f64>>,
    /// Reference weights; they sum to the reference volume 1/k!.
    weights: Vec<f64>,
}

impl SimplexRule {
    /// Grundmann-Moller rule of the given index (exact degree 2*index + 1)
    /// on the k-dimensional reference simplex.
    pub fn grundmann_moeller(dim: usize, index: usize) -> Self {
        let k = dim;
        let s = index;
        if k == 0 {
            // point "simplices" carry the unit counting measure
            return Self {
                dim: 0,
                degree: 2 * s + 1,
                nodes: vec![vec![1.0]],
                weights: vec![1.0],
            };
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let exponent = (2 * s + 1) as i32;
        for i in 0..=s {
            let denom = (2 * s + 1 + k - 2 * i) as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let weight = sign * 2.0_f64.powi(-2 * (s as i32)) * denom.powi(exponent)
                / (factorial(i) * factorial(2 * s + 1 + k - i));
            for beta in compositions(s - i, k + 1) {
                nodes.push(beta.iter().map(|&b| (2.0 * b as f64 + 1.0) / denom).collect());
                weights.push(weight);
            }
        }
        Self {
            dim: k,
            degree: 2 * s + 1,
            nodes,
            weights,
        }
    }

    /// Smallest Grundmann-Moller rule exact for the requested degree.
    pub fn with_degree(dim: usize, degree: usize) -> Self {
        Self::grundmann_moeller(dim, degree / 2)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f(point, barycentric)` over a simplex of matching
    /// intrinsic dimension. The physical node is anchored at vertex 0, so
    /// coordinates shared by every vertex are exact.
    pub fn integrate_with(
        &self,
        simplex: &Simplex,
        mut f: impl FnMut(&[f64], &[f64]) -> f64,
    ) -> f64 {
        debug_assert_eq!(simplex.dim(), self.dim);
        // reference weights sum to 1/k!, so the physical scale is |K| k!
        let scale = simplex.volume() * factorial(self.dim);
        let mut sum = 0.0;
        for (bary, w) in self.nodes.iter().zip(&self.weights) {
            let p = simplex.point_from_barycentric(bary);
            sum += w * f(p.as_slice(), bary);
        }
        scale * sum
    }

    /// Integrates a function of the physical point over a simplex.
    pub fn integrate(&self, simplex: &Simplex, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.integrate_with(simplex, |x, _| f(x))
    }
}

/// All vectors of `parts` nonnegative integers summing to `total`,
/// enumerated in a fixed lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; parts];
    fill(&mut out, &mut current, 0, total);
    fn fill(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, remaining: usize) {
        if pos + 1 == current.len() {
            current[pos] = remaining;
            out.push(current.clone());
            return;
        }
        for v in 0..=remaining {
            current[pos] = v;
            fill(out, current, pos + 1, remaining - v);
        }
    }
    out
}
