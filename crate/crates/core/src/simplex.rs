//! Geometry of simplices in arbitrary dimension: measures, faces, affine
//! maps, and the shape quantities (diameter, inradius, their ratio) used to
//! classify triangulations.
//!
//! A `Simplex` stores k+1 vertices embedded in an ambient space of dimension
//! at least k, so the same type covers both mesh elements (k = d) and their
//! codimension-one faces (k = d-1). Measures are computed from the Gram
//! determinant of the edge matrix, which is dimension-generic and needs no
//! embedding tricks.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Scale-aware degeneracy threshold: a k-simplex is rejected when its measure
/// falls below `DEGENERACY_RTOL * diameter^k`.
pub const DEGENERACY_RTOL: f64 = 1e-14;

/// A k-simplex given by k+1 affinely independent vertices in `R^m`, m >= k.
///
/// Volume, diameter, and inradius are computed at construction and cached;
/// the struct is immutable afterwards and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    vertices: Vec<DVector<f64>>,
    measure: f64,
    diameter: f64,
    inradius: f64,
}

/// Affine map `x -> B x + b` carrying the reference simplex
/// `{0, e_1, ..., e_d}` onto a full-dimensional simplex, vertex by vertex.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub determinant: f64,
}

impl AffineMap {
    pub fn apply(&self, reference_point: &DVector<f64>) -> DVector<f64> {
        &self.matrix * reference_point + &self.offset
    }
}

impl Simplex {
    /// Builds a simplex from its vertices, validating affine independence.
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidArgument("simplex needs vertices".into()));
        }
        let ambient = vertices[0].len();
        if vertices.iter().any(|v| v.len() != ambient) {
            return Err(Error::InvalidArgument(
                "simplex vertices have mixed ambient dimensions".into(),
            ));
        }
        let k = vertices.len() - 1;
        if k > ambient {
            return Err(Error::InvalidArgument(format!(
                "{}-simplex cannot be embedded in R^{ambient}",
                k
            )));
        }
        let diameter = max_pairwise_distance(&vertices);
        let measure = gram_measure(&vertices);
        if k >= 1 {
            let threshold = DEGENERACY_RTOL * diameter.powi(k as i32);
            if !(measure > threshold) {
                return Err(Error::DegenerateGeometry { measure, threshold });
            }
        }
        let inradius = if k >= 1 {
            let face_sum: f64 = face_vertex_sets(&vertices)
                .map(|face| gram_measure(&face))
                .sum();
            k as f64 * measure / face_sum
        } else {
            0.0
        };
        Ok(Self {
            vertices,
            measure,
            diameter,
            inradius,
        })
    }

    /// The reference simplex with vertices `{0, e_1, ..., e_d}`.
    pub fn reference(d: usize) -> Self {
        let mut vertices = vec![DVector::zeros(d)];
        for i in 0..d {
            let mut v = DVector::zeros(d);
            v[i] = 1.0;
            vertices.push(v);
        }
        Self::new(vertices).expect("reference simplex is nondegenerate")
    }

    /// Intrinsic dimension k (one less than the vertex count).
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// k-dimensional measure (length/area/volume); 1 for a point by the
    /// 0-dimensional convention.
    pub fn volume(&self) -> f64 {
        self.measure
    }

    /// Maximum pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Inradius `r = k * volume / (sum of facet measures)`.
    pub fn inradius(&self) -> f64 {
        self.inradius
    }

    /// Shape-regularity quotient `diameter / inradius`.
    pub fn shape_ratio(&self) -> f64 {
        self.diameter / self.inradius
    }

    /// The k+1 facets; facet i omits vertex i.
    pub fn faces(&self) -> Vec<Simplex> {
        face_vertex_sets(&self.vertices)
            .map(|face| {
                let diameter = max_pairwise_distance(&face);
                let measure = gram_measure(&face);
                let k = face.len() - 1;
                let inradius = if k >= 1 {
                    let face_sum: f64 = face_vertex_sets(&face).map(|f| gram_measure(&f)).sum();
                    k as f64 * measure / face_sum
                } else {
                    0.0
                };
                Simplex {
                    vertices: face,
                    measure,
                    diameter,
                    inradius,
                }
            })
            .collect()
    }

    /// Measures of the k+1 facets, facet i opposite vertex i.
    pub fn face_measures(&self) -> Vec<f64> {
        face_vertex_sets(&self.vertices)
            .map(|face| gram_measure(&face))
            .collect()
    }

    /// The affine map from the reference simplex; columns of the matrix are
    /// the edge vectors `v_i - v_0`. Only defined for full-dimensional
    /// simplices.
    pub fn affine_map(&self) -> Result<AffineMap> {
        let d = self.dim();
        if d != self.ambient_dim() {
            return Err(Error::InvalidArgument(
                "affine map requires a full-dimensional simplex".into(),
            ));
        }
        let matrix = self.edge_matrix();
        let determinant = matrix.clone().lu().determinant();
        if determinant == 0.0 || !determinant.is_finite() {
            return Err(Error::DegenerateGeometry {
                measure: determinant.abs(),
                threshold: 0.0,
            });
        }
        Ok(AffineMap {
            matrix,
            offset: self.vertices[0].clone(),
            determinant,
        })
    }

    /// Edge matrix with columns `v_i - v_0`, i = 1..=k.
    pub fn edge_matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        let m = self.ambient_dim();
        DMatrix::from_fn(m, k, |r, c| self.vertices[c + 1][r] - self.vertices[0][r])
    }

    /// Gradients of the barycentric coordinates: row i is the constant
    /// gradient of the hat function of vertex i. Full-dimensional only.
    pub fn barycentric_gradients(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let map = self.affine_map()?;
        let inv = map
            .matrix
            .try_inverse()
            .ok_or(Error::DegenerateGeometry {
                measure: 0.0,
                threshold: 0.0,
            })?;
        // lambda_i = i-th reference coordinate, so grad lambda_i is row i of
        // B^{-1}; the vertex-0 gradient makes the rows sum to zero.
        let mut grads = DMatrix::zeros(d + 1, d);
        for i in 0..d {
            for j in 0..d {
                grads[(i + 1, j)] = inv[(i, j)];
                grads[(0, j)] -= inv[(i, j)];
            }
        }
        Ok(grads)
    }

    /// Barycentric combination of the vertices. Coordinates shared by all
    /// vertices are reproduced exactly (the point is anchored at vertex 0),
    /// which keeps quadrature nodes on boundary faces exactly on the
    /// boundary.
    pub fn point_from_barycentric(&self, bary: &[f64]) -> DVector<f64> {
        debug_assert_eq!(bary.len(), self.vertices.len());
        let mut p = self.vertices[0].clone();
        for (j, w) in bary.iter().enumerate().skip(1) {
            p.axpy(*w, &(&self.vertices[j] - &self.vertices[0]), 1.0);
        }
        p
    }
}

/// Measure of the simplex spanned by `vertices` via the Gram determinant
/// `sqrt(det(E^T E)) / k!`; a single vertex has measure 1 by convention.
fn gram_measure(vertices: &[DVector<f64>]) -> f64 {
    let k = vertices.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let m = vertices[0].len();
    let edges = DMatrix::from_fn(m, k, |r, c| vertices[c + 1][r] - vertices[0][r]);
    let gram = edges.transpose() * &edges;
    let det = gram.lu().determinant();
    if det <= 0.0 {
        return 0.0;
    }
    det.sqrt() / factorial(k)
}

fn max_pairwise_distance(vertices: &[DVector<f64>]) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            best = best.max((&vertices[i] - &vertices[j]).norm());
        }
    }
    best
}

fn face_vertex_sets(vertices: &[DVector<f64>]) -> impl Iterator<Item = Vec<DVector<f64>>> + '_ {
    (0..vertices.len()).map(move |omit| {
        vertices
            .iter()
            .enumerate()
            .filter_map(|(i, v)| (i != omit).then(|| v.clone()))
            .collect()
    })
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}
