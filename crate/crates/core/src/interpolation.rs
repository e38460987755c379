//! Averaged quasi-interpolation into the P1 space, built from dual basis
//! functions on vertex patches, plus the L2 and H1 orthogonal projections.
//!
//! The nodal value at a vertex is a measure-weighted average of dual-basis
//! integrals over all patch elements; at boundary vertices the average runs
//! over selected boundary faces instead, which preserves homogeneous
//! Dirichlet data exactly. On each region K of intrinsic dimension k the
//! dual function of vertex a has the closed form
//! `psi_{a,K} = (k+1)/|K| ((k+2) phi_a - 1)`.

use crate::assembly::{assemble, BoundaryCondition, MatrixKind};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::multilevel::Hierarchy;
use crate::quadrature::SimplexRule;
use crate::simplex::Simplex;
use nalgebra::DVector;

/// A scalar field evaluable at points of the unit cube, with an optional
/// analytic gradient (H1-type errors are only computed against supplied
/// gradients, never by numerical differentiation).
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let _ = x;
        None
    }
}

/// Field defined by a plain closure.
pub struct FnField<F: Fn(&[f64]) -> f64>(pub F);

impl<F: Fn(&[f64]) -> f64> ScalarField for FnField<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Field with an analytic gradient.
pub struct AnalyticField<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub value: F,
    pub gradient: G,
}

impl<F, G> ScalarField for AnalyticField<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some((self.gradient)(x))
    }
}

/// A P1 finite element function given by one coefficient per mesh vertex,
/// evaluated through point location.
pub struct FeFunction<'a> {
    mesh: &'a Mesh,
    coefficients: &'a DVector<f64>,
}

impl<'a> FeFunction<'a> {
    pub fn new(mesh: &'a Mesh, coefficients: &'a DVector<f64>) -> Self {
        assert_eq!(coefficients.len(), mesh.num_vertices());
        Self { mesh, coefficients }
    }
}

impl ScalarField for FeFunction<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let (e, bary) = self.mesh.locate(x).expect("point inside the unit cube");
        self.mesh
            .element_vertex_ids(e)
            .iter()
            .zip(&bary)
            .map(|(&v, &b)| b * self.coefficients[v])
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (e, _) = self.mesh.locate(x).expect("point inside the unit cube");
        let grads = self
            .mesh
            .element_simplex(e)
            .barycentric_gradients()
            .expect("mesh elements are nondegenerate");
        let ids = self.mesh.element_vertex_ids(e);
        let mut g = vec![0.0; self.mesh.dim()];
        for (i, &v) in ids.iter().enumerate() {
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += self.coefficients[v] * grads[(i, j)];
            }
        }
        Some(g)
    }
}

/// An averaging region: a mesh element or a boundary face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Element(usize),
    BoundaryFace(usize),
}

/// The P1 function on a region dual to one restricted nodal basis function.
#[derive(Debug, Clone)]
pub struct DualFunction {
    pub region: Region,
    /// Index of the vertex within the region's vertex list.
    pub local_index: usize,
    /// Nodal coefficients of psi in the region's restricted basis.
    pub coefficients: Vec<f64>,
    pub intrinsic_dim: usize,
    pub measure: f64,
}

impl DualFunction {
    fn from_simplex(region: Region, simplex: &Simplex, local_index: usize) -> Self {
        let k = simplex.dim();
        let measure = simplex.volume();
        let scale = (k + 1) as f64 / measure;
        let coefficients = (0..=k)
            .map(|b| scale * (if b == local_index { (k + 2) as f64 } else { 0.0 } - 1.0))
            .collect();
        Self {
            region,
            local_index,
            coefficients,
            intrinsic_dim: k,
            measure,
        }
    }

    /// Value at a point given in region barycentric coordinates.
    pub fn eval_bary(&self, bary: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(bary)
            .map(|(c, b)| c * b)
            .sum()
    }

    /// Exact L1 norm. The dual function changes sign on the level set
    /// `phi_a = 1/(k+2)`, so the integral splits over the subsimplex where
    /// it is nonnegative (the homothety of K toward the vertex with ratio
    /// (k+1)/(k+2)): `|psi|_1 = 2 int_{K+} psi - int_K psi`.
    pub fn l1_norm(&self, simplex: &Simplex) -> f64 {
        let k = self.intrinsic_dim;
        let rule = SimplexRule::with_degree(k, 1);
        let total = rule.integrate_with(simplex, |_, bary| self.eval_bary(bary));
        let c = 1.0 / (k + 2) as f64;
        let a = self.local_index;
        let positive_part: Vec<nalgebra::DVector<f64>> = simplex
            .vertices()
            .iter()
            .enumerate()
            .map(|(b, v)| {
                if b == a {
                    v.clone()
                } else {
                    &simplex.vertices()[a] * c + v * (1.0 - c)
                }
            })
            .collect();
        let sub = Simplex::new(positive_part).expect("homothety preserves nondegeneracy");
        // K-barycentric coordinates of a point with sub-simplex barycentric mu:
        // lambda_a = mu_a + c * (1 - mu_a), lambda_b = (1 - c) mu_b
        let on_sub = rule.integrate_with(&sub, |_, mu| {
            let mut lambda: Vec<f64> = mu.iter().map(|&m| (1.0 - c) * m).collect();
            lambda[a] = mu[a] + c * (1.0 - mu[a]);
            self.eval_bary(&lambda)
        });
        2.0 * on_sub - total
    }
}

/// Builds the dual function of `vertex` on a region that must contain it.
pub fn dual_function(mesh: &Mesh, vertex: usize, region: Region) -> Result<DualFunction> {
    let (vertex_ids, simplex) = region_data(mesh, region);
    let local_index = vertex_ids
        .iter()
        .position(|&v| v == vertex)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("vertex {vertex} is not a vertex of {region:?}"))
        })?;
    Ok(DualFunction::from_simplex(region, &simplex, local_index))
}

fn region_data(mesh: &Mesh, region: Region) -> (Vec<usize>, Simplex) {
    match region {
        Region::Element(e) => (mesh.element_vertex_ids(e), mesh.element_simplex(e)),
        Region::BoundaryFace(id) => {
            let bf = mesh.boundary_faces()[id];
            (
                mesh.face_vertex_ids(bf.element, bf.local_face),
                mesh.face_simplex(bf.element, bf.local_face),
            )
        }
    }
}

/// Rule for picking one boundary face per boundary-touching patch element.
/// `LowestId` is the default; `HighestId` exists to test that the estimates
/// are insensitive to the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceSelection {
    #[default]
    LowestId,
    HighestId,
}

/// Per-vertex averaging regions with measure weights.
#[derive(Debug, Clone)]
pub struct AveragingSets {
    entries: Vec<Vec<(Region, f64)>>,
    skipped_elements: usize,
}

impl AveragingSets {
    pub fn regions(&self, vertex: usize) -> &[(Region, f64)] {
        &self.entries[vertex]
    }

    /// Boundary-touching patch elements skipped because none of their
    /// boundary faces contains the vertex (the dual function would be
    /// undefined there). Occurs for d >= 3; every boundary vertex still
    /// keeps at least one face, since any incident boundary face belongs to
    /// an element of the patch.
    pub fn skipped_elements(&self) -> usize {
        self.skipped_elements
    }
}

pub fn build_averaging_sets(mesh: &Mesh) -> AveragingSets {
    build_averaging_sets_with(mesh, FaceSelection::LowestId)
}

pub fn build_averaging_sets_with(mesh: &Mesh, selection: FaceSelection) -> AveragingSets {
    let mut entries = Vec::with_capacity(mesh.num_vertices());
    let mut skipped = 0usize;
    for a in 0..mesh.num_vertices() {
        let patch = mesh.vertex_patch(a);
        let mut regions: Vec<(Region, f64)> = Vec::new();
        if !mesh.is_boundary_vertex(a) {
            for &e in patch {
                let e = e as usize;
                regions.push((Region::Element(e), mesh.element_simplex(e).volume()));
            }
        } else {
            for &e in patch {
                let e = e as usize;
                let local_of_vertex = mesh
                    .element_vertex_ids(e)
                    .iter()
                    .position(|&v| v == a)
                    .expect("patch elements contain the vertex");
                // candidate faces must lie on the boundary and contain a,
                // i.e. not be the face opposite to a
                let mut candidates: Vec<usize> = mesh
                    .boundary_faces_of_element(e)
                    .into_iter()
                    .filter_map(|(local, id)| (local != local_of_vertex).then_some(id))
                    .collect();
                if candidates.is_empty() {
                    if !mesh.boundary_faces_of_element(e).is_empty() {
                        skipped += 1;
                    }
                    continue;
                }
                candidates.sort_unstable();
                let id = match selection {
                    FaceSelection::LowestId => candidates[0],
                    FaceSelection::HighestId => *candidates.last().unwrap(),
                };
                let bf = mesh.boundary_faces()[id];
                let measure = mesh.face_simplex(bf.element, bf.local_face).volume();
                regions.push((Region::BoundaryFace(id), measure));
            }
        }
        let total: f64 = regions.iter().map(|(_, m)| m).sum();
        for r in &mut regions {
            r.1 /= total;
        }
        entries.push(regions);
    }
    AveragingSets {
        entries,
        skipped_elements: skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L2,
    H1Semi,
}

/// The averaged quasi-interpolation operator on one mesh, with cached
/// averaging sets and quadrature rules.
pub struct Interpolator<'a> {
    mesh: &'a Mesh,
    sets: AveragingSets,
    element_rule: SimplexRule,
    face_rule: SimplexRule,
    error_rule: SimplexRule,
}

impl<'a> Interpolator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        Self::with_selection(mesh, FaceSelection::LowestId)
    }

    pub fn with_selection(mesh: &'a Mesh, selection: FaceSelection) -> Self {
        let d = mesh.dim();
        Self {
            mesh,
            sets: build_averaging_sets_with(mesh, selection),
            element_rule: SimplexRule::with_degree(d, crate::quadrature::DEFAULT_DEGREE),
            face_rule: SimplexRule::with_degree(d.saturating_sub(1), crate::quadrature::DEFAULT_DEGREE),
            // error integrands are not piecewise polynomial; a higher-degree
            // rule keeps the quadrature error well below the h^2 signal
            error_rule: SimplexRule::with_degree(d, 5),
        }
    }

    pub fn averaging_sets(&self) -> &AveragingSets {
        &self.sets
    }

    /// Nodal vector of the interpolant, one value per mesh vertex.
    pub fn interpolate(&self, v: &dyn ScalarField) -> Result<DVector<f64>> {
        let mut nodal = DVector::zeros(self.mesh.num_vertices());
        for a in 0..self.mesh.num_vertices() {
            let mut value = 0.0;
            for &(region, alpha) in self.sets.regions(a) {
                let (_, simplex) = region_data(self.mesh, region);
                let psi = dual_function(self.mesh, a, region)?;
                let rule = match region {
                    Region::Element(_) => &self.element_rule,
                    Region::BoundaryFace(_) => &self.face_rule,
                };
                let integral =
                    rule.integrate_with(&simplex, |x, bary| psi.eval_bary(bary) * v.value(x));
                value += alpha * integral;
            }
            nodal[a] = value;
        }
        Ok(nodal)
    }

    /// Interpolation error `|v - I_h v|` in the requested norm, by
    /// element-wise quadrature against the P1 interpolant.
    pub fn interp_error(&self, v: &dyn ScalarField, norm: ErrorNorm) -> Result<f64> {
        let nodal = self.interpolate(v)?;
        self.error_against_nodal(v, &nodal, norm)
    }

    /// Error of an arbitrary nodal vector against a field; shared by
    /// interpolation and projection error measurements.
    pub fn error_against_nodal(
        &self,
        v: &dyn ScalarField,
        nodal: &DVector<f64>,
        norm: ErrorNorm,
    ) -> Result<f64> {
        let d = self.mesh.dim();
        let mut total = 0.0;
        for e in 0..self.mesh.num_elements() {
            let s = self.mesh.element_simplex(e);
            let ids = self.mesh.element_vertex_ids(e);
            match norm {
                ErrorNorm::L2 => {
                    total += self.error_rule.integrate_with(&s, |x, bary| {
                        let ih: f64 = ids.iter().zip(bary).map(|(&a, &b)| nodal[a] * b).sum();
                        (v.value(x) - ih).powi(2)
                    });
                }
                ErrorNorm::H1Semi => {
                    let grads = s.barycentric_gradients()?;
                    let mut g = vec![0.0; d];
                    for (i, &a) in ids.iter().enumerate() {
                        for (j, gj) in g.iter_mut().enumerate() {
                            *gj += nodal[a] * grads[(i, j)];
                        }
                    }
                    total += self.error_rule.integrate(&s, |x| {
                        let gv = v.gradient(x).expect("H1 error needs an analytic gradient");
                        gv.iter()
                            .zip(&g)
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>()
                    });
                }
            }
        }
        // negative quadrature weights can leave a tiny negative residue when
        // the true error is zero
        Ok(total.max(0.0).sqrt())
    }
}

/// L2-orthogonal projection onto the full P1 space: solves `M x = b` with
/// `b_a = int v phi_a`.
pub fn l2_project(mesh: &Mesh, v: &dyn ScalarField) -> Result<DVector<f64>> {
    let mass = assemble(mesh, MatrixKind::Mass, BoundaryCondition::Full)?;
    let rule = SimplexRule::with_degree(mesh.dim(), 5);
    let mut rhs = DVector::zeros(mesh.num_vertices());
    for e in 0..mesh.num_elements() {
        let s = mesh.element_simplex(e);
        let ids = mesh.element_vertex_ids(e);
        for (i, &a) in ids.iter().enumerate() {
            rhs[a] += rule.integrate_with(&s, |x, bary| v.value(x) * bary[i]);
        }
    }
    solve_spd(&mass, &rhs)
}

/// H1-orthogonal projection of a finest-level function onto level `l` of a
/// hierarchy: solves `K_l x = P^t K_J v` on free dofs.
pub fn h1_project(hier: &Hierarchy, l: usize, fine_free: &DVector<f64>) -> Result<DVector<f64>> {
    let weighted = hier.finest().stiffness().matvec(fine_free);
    let rhs = hier.restrict_from_finest(l, &weighted);
    solve_spd(hier.level(l).stiffness(), &rhs)
}

/// One-shot SPD solve: sparse Cholesky up to the direct-solve limit, CG
/// beyond it.
pub(crate) fn solve_spd(
    m: &crate::sparse::SparseMatrix,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
    if m.nrows() <= crate::multilevel::DIRECT_MASS_SOLVE_LIMIT {
        let n = m.nrows();
        let mut coo = CooMatrix::new(n, n);
        for r in 0..n {
            for (c, v) in m.row(r) {
                coo.push(r, c, v);
            }
        }
        let chol = CscCholesky::factor(&CscMatrix::from(&coo))
            .map_err(|e| Error::SolverFailure(format!("sparse Cholesky failed: {e:?}")))?;
        let b = nalgebra::DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        Ok(DVector::from_column_slice(chol.solve(&b).column(0).as_slice()))
    } else {
        crate::multilevel::cg(|v| m.matvec(v), rhs, 1e-12, 4 * rhs.len() + 200)
    }
}
