//! Local and global P1 matrices on a Freudenthal mesh: mass, stiffness, and
//! boundary-face mass, with Dirichlet elimination producing the interior
//! (free-dof) system.
//!
//! Local matrices have closed forms. The element mass matrix is
//! `|K|/((d+1)(d+2)) (I + 1 1^t)`; a boundary face contributes
//! `|F|/(d(d+1)) (1 + delta)` on the face-supported block and zeros on the
//! row/column of the opposite vertex. Stiffness entries are
//! `|K| grad(lambda_i) . grad(lambda_j)`.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::simplex::Simplex;
use crate::sparse::{CooBuilder, SparseMatrix};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Mass,
    Stiffness,
    BoundaryMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// All vertices carry a degree of freedom.
    Full,
    /// Boundary vertices are eliminated; only interior vertices remain.
    Dirichlet,
}

/// Vertex-to-free-dof numbering for the homogeneous Dirichlet space.
#[derive(Debug, Clone)]
pub struct DofMap {
    full_to_free: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
}

impl DofMap {
    pub fn dirichlet(mesh: &Mesh) -> Self {
        let mut full_to_free = vec![None; mesh.num_vertices()];
        let mut free_to_full = Vec::new();
        for v in 0..mesh.num_vertices() {
            if !mesh.is_boundary_vertex(v) {
                full_to_free[v] = Some(free_to_full.len());
                free_to_full.push(v);
            }
        }
        Self {
            full_to_free,
            free_to_full,
        }
    }

    pub fn full(mesh: &Mesh) -> Self {
        Self {
            full_to_free: (0..mesh.num_vertices()).map(Some).collect(),
            free_to_full: (0..mesh.num_vertices()).collect(),
        }
    }

    pub fn free_count(&self) -> usize {
        self.free_to_full.len()
    }

    pub fn free_of(&self, vertex: usize) -> Option<usize> {
        self.full_to_free[vertex]
    }

    pub fn vertex_of(&self, free: usize) -> usize {
        self.free_to_full[free]
    }
}

/// Element mass matrix `|K|/((d+1)(d+2)) (I + 1 1^t)`.
pub fn local_mass(s: &Simplex) -> DMatrix<f64> {
    let d = s.dim();
    let scale = s.volume() / ((d + 1) as f64 * (d + 2) as f64);
    DMatrix::from_fn(d + 1, d + 1, |i, j| {
        scale * if i == j { 2.0 } else { 1.0 }
    })
}

/// Element stiffness matrix `K_ij = |K| grad(lambda_i) . grad(lambda_j)`.
pub fn local_stiffness(s: &Simplex) -> Result<DMatrix<f64>> {
    let grads = s.barycentric_gradients()?;
    Ok(&grads * grads.transpose() * s.volume())
}

/// Mass matrix of one face against the element's nodal basis: the block on
/// the face vertices is `|F|/(d(d+1)) (1 + delta)`, the opposite vertex row
/// and column vanish.
pub fn local_boundary_mass(s: &Simplex, local_face: usize) -> Result<DMatrix<f64>> {
    let d = s.dim();
    if local_face > d {
        return Err(Error::InvalidArgument(format!(
            "face index {local_face} out of range for a {d}-simplex"
        )));
    }
    let face_measure = s.face_measures()[local_face];
    let scale = face_measure / (d as f64 * (d + 1) as f64);
    Ok(DMatrix::from_fn(d + 1, d + 1, |i, j| {
        if i == local_face || j == local_face {
            0.0
        } else {
            scale * if i == j { 2.0 } else { 1.0 }
        }
    }))
}

/// Scatters local matrices into the global operator over all vertices
/// (`Full`) or over interior vertices only (`Dirichlet`).
pub fn assemble(mesh: &Mesh, kind: MatrixKind, bc: BoundaryCondition) -> Result<SparseMatrix> {
    let dofs = match bc {
        BoundaryCondition::Full => DofMap::full(mesh),
        BoundaryCondition::Dirichlet => DofMap::dirichlet(mesh),
    };
    assemble_with_dofs(mesh, kind, &dofs)
}

pub fn assemble_with_dofs(
    mesh: &Mesh,
    kind: MatrixKind,
    dofs: &DofMap,
) -> Result<SparseMatrix> {
    let n = dofs.free_count();
    let mut coo = CooBuilder::new(n, n);
    let mut scatter = |local: &DMatrix<f64>, vertex_ids: &[usize]| {
        for (i, &vi) in vertex_ids.iter().enumerate() {
            let Some(ri) = dofs.free_of(vi) else { continue };
            for (j, &vj) in vertex_ids.iter().enumerate() {
                let Some(cj) = dofs.free_of(vj) else { continue };
                let v = local[(i, j)];
                if v != 0.0 {
                    coo.push(ri, cj, v);
                }
            }
        }
    };
    match kind {
        MatrixKind::Mass | MatrixKind::Stiffness => {
            for e in 0..mesh.num_elements() {
                let s = mesh.element_simplex(e);
                let local = match kind {
                    MatrixKind::Mass => local_mass(&s),
                    MatrixKind::Stiffness => local_stiffness(&s)?,
                    MatrixKind::BoundaryMass => unreachable!(),
                };
                scatter(&local, &mesh.element_vertex_ids(e));
            }
        }
        MatrixKind::BoundaryMass => {
            for bf in mesh.boundary_faces() {
                let s = mesh.element_simplex(bf.element);
                let local = local_boundary_mass(&s, bf.local_face)?;
                scatter(&local, &mesh.element_vertex_ids(bf.element));
            }
        }
    }
    Ok(coo.finalize())
}

/// Largest nodal-basis gradient magnitude over the mesh: the reciprocal of
/// the smallest vertex-to-opposite-face distance, `max |F| / (d |K|)`.
pub fn nodal_gradient_bound(mesh: &Mesh) -> f64 {
    let d = mesh.dim() as f64;
    let mut bound = 0.0_f64;
    for e in 0..mesh.num_elements() {
        let s = mesh.element_simplex(e);
        let vol = s.volume();
        for f in s.face_measures() {
            bound = bound.max(f / (d * vol));
        }
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::SimplexRule;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    fn simplex(coords: &[&[f64]]) -> Simplex {
        Simplex::new(coords.iter().map(|c| DVector::from_row_slice(c)).collect()).unwrap()
    }

    /// Degree-2-exact quadrature oracle for mass entries and a direct
    /// gradient-product oracle for stiffness entries.
    fn quadrature_mass(s: &Simplex) -> DMatrix<f64> {
        let d = s.dim();
        let rule = SimplexRule::with_degree(d, 3);
        DMatrix::from_fn(d + 1, d + 1, |i, j| {
            rule.integrate_with(s, |_, bary| bary[i] * bary[j])
        })
    }

    #[test]
    fn local_mass_matches_formula_and_quadrature() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for d in 1..=4 {
            for _ in 0..5 {
                let s = loop {
                    let vertices: Vec<DVector<f64>> = (0..=d)
                        .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(0.0..1.0)))
                        .collect();
                    if let Ok(s) = Simplex::new(vertices) {
                        if s.volume() > 1e-3 / crate::simplex::factorial(d) {
                            break s;
                        }
                    }
                };
                let m = local_mass(&s);
                let q = quadrature_mass(&s);
                assert_relative_eq!(m, q, epsilon = 1e-10 * s.volume().max(1.0));
                let row_sum: f64 = m.row(0).iter().sum();
                assert_relative_eq!(row_sum, s.volume() / (d as f64 + 1.0), epsilon = 1e-12);
                assert_relative_eq!(
                    m.trace(),
                    2.0 * s.volume() / (d as f64 + 2.0),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn local_mass_unit_interval() {
        let m = local_mass(&simplex(&[&[0.0], &[1.0]]));
        let expected =
            DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]);
        assert_relative_eq!(m, expected, epsilon = 1e-15);
    }

    #[test]
    fn local_mass_reference_triangle() {
        let m = local_mass(&Simplex::reference(2));
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0],
        ) / 24.0;
        assert_relative_eq!(m, expected, epsilon = 1e-15);
    }

    #[test]
    fn local_stiffness_reference_block_form() {
        // |K| [[d, -1^t], [-1, I]] on the reference simplex
        for d in 1..=5 {
            let s = Simplex::reference(d);
            let k = local_stiffness(&s).unwrap();
            let vol = s.volume();
            assert_relative_eq!(k[(0, 0)], vol * d as f64, epsilon = 1e-12);
            for i in 1..=d {
                assert_relative_eq!(k[(0, i)], -vol, epsilon = 1e-12);
                for j in 1..=d {
                    let expected = if i == j { vol } else { 0.0 };
                    assert_relative_eq!(k[(i, j)], expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn local_stiffness_unit_interval_and_right_triangle() {
        let k1 = local_stiffness(&simplex(&[&[0.0], &[1.0]])).unwrap();
        assert_relative_eq!(
            k1,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
            epsilon = 1e-14
        );
        let h = 0.5;
        let k2 = local_stiffness(&simplex(&[&[0.0, 0.0], &[h, 0.0], &[0.0, h]])).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0])
                * 0.5;
        assert_relative_eq!(k2, expected, epsilon = 1e-14);
    }

    #[test]
    fn local_stiffness_annihilates_constants() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for d in 1..=4 {
            let s = loop {
                let vertices: Vec<DVector<f64>> = (0..=d)
                    .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(0.0..1.0)))
                    .collect();
                if let Ok(s) = Simplex::new(vertices) {
                    if s.volume() > 1e-3 / crate::simplex::factorial(d) {
                        break s;
                    }
                }
            };
            let k = local_stiffness(&s).unwrap();
            let ones = DVector::from_element(d + 1, 1.0);
            assert!((&k * &ones).norm() <= 1e-12 * k.norm());
        }
    }

    #[test]
    fn boundary_mass_hypotenuse_block() {
        let s = simplex(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        // face 0 is opposite the right-angle vertex: the hypotenuse
        let b = local_boundary_mass(&s, 0).unwrap();
        let c = 2.0_f64.sqrt() / 6.0;
        assert_relative_eq!(b[(0, 0)], 0.0);
        assert_relative_eq!(b[(0, 1)], 0.0);
        assert_relative_eq!(b[(1, 1)], 2.0 * c, epsilon = 1e-14);
        assert_relative_eq!(b[(1, 2)], c, epsilon = 1e-14);
        assert_relative_eq!(b[(2, 2)], 2.0 * c, epsilon = 1e-14);
    }

    #[test]
    fn boundary_mass_interval_endpoint() {
        let s = simplex(&[&[0.0], &[0.25]]);
        // face 1 omits the right endpoint: it is the point at x = 0
        let b = local_boundary_mass(&s, 1).unwrap();
        assert_relative_eq!(b[(0, 0)], 1.0);
        assert_relative_eq!(b[(1, 1)], 0.0);
        assert_relative_eq!(b[(0, 1)], 0.0);
        assert!(local_boundary_mass(&s, 2).is_err());
    }

    #[test]
    fn boundary_mass_agrees_with_face_quadrature() {
        let s = simplex(&[&[0.2, 0.1, 0.0], &[1.0, 0.3, 0.1], &[0.4, 1.2, 0.2], &[0.3, 0.4, 1.4]]);
        let faces = s.faces();
        let rule = SimplexRule::with_degree(2, 3);
        for local in 0..=3 {
            let b = local_boundary_mass(&s, local).unwrap();
            // map element-local basis indices to face-local barycentrics
            let face_vertices: Vec<usize> = (0..=3).filter(|&i| i != local).collect();
            for (fi, &i) in face_vertices.iter().enumerate() {
                for (fj, &j) in face_vertices.iter().enumerate() {
                    let oracle =
                        rule.integrate_with(&faces[local], |_, bary| bary[fi] * bary[fj]);
                    assert_relative_eq!(b[(i, j)], oracle, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn assembled_1d_dirichlet_stiffness_is_scaled_tridiagonal() {
        let mesh = Mesh::build(1, 4).unwrap();
        let k = assemble(&mesh, MatrixKind::Stiffness, BoundaryCondition::Dirichlet).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0])
                * 4.0;
        assert_relative_eq!(k.to_dense(), expected, epsilon = 1e-12);
    }

    #[test]
    fn assembled_1d_full_mass_is_tridiagonal() {
        let mesh = Mesh::build(1, 4).unwrap();
        let m = assemble(&mesh, MatrixKind::Mass, BoundaryCondition::Full).unwrap();
        let h = 0.25;
        let d = m.to_dense();
        for i in 0..5 {
            let expected_diag = if i == 0 || i == 4 { 2.0 } else { 4.0 };
            assert_relative_eq!(d[(i, i)], h / 6.0 * expected_diag, epsilon = 1e-14);
            if i + 1 < 5 {
                assert_relative_eq!(d[(i, i + 1)], h / 6.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn global_mass_sums_to_domain_volume() {
        for (d, n) in [(1usize, 4usize), (2, 2), (3, 2)] {
            let mesh = Mesh::build(d, n).unwrap();
            let m = assemble(&mesh, MatrixKind::Mass, BoundaryCondition::Full).unwrap();
            let ones = DVector::from_element(m.nrows(), 1.0);
            let total = ones.dot(&m.matvec(&ones));
            assert_relative_eq!(total, 1.0, epsilon = 1e-10);
            assert!(m.is_symmetric(1e-12));
        }
    }

    #[test]
    fn dirichlet_free_count() {
        for (d, n) in [(1usize, 4usize), (2, 4), (3, 2)] {
            let mesh = Mesh::build(d, n).unwrap();
            let dofs = DofMap::dirichlet(&mesh);
            assert_eq!(dofs.free_count(), (n - 1).pow(d as u32));
        }
    }

    #[test]
    fn per_face_trace_pencil_is_bounded() {
        // restricted to the face-supported block, the pencil
        // (M_face, M_element) stays within the d^2/h class
        for d in 1..=4 {
            let mesh = Mesh::build(d, 2).unwrap();
            let s = mesh.element_simplex(0);
            let m = local_mass(&s);
            let h = s.diameter();
            let rho = 2.0 * (d as f64).sqrt() + (d as f64 - 1.0) * (2.0 * d as f64).sqrt();
            for local in 0..=d {
                let b = local_boundary_mass(&s, local).unwrap();
                let keep: Vec<usize> = (0..=d).filter(|&i| i != local).collect();
                let sub = |mat: &DMatrix<f64>| {
                    DMatrix::from_fn(d, d, |i, j| mat[(keep[i], keep[j])])
                };
                let eigs =
                    crate::spectral::dense_generalized_eig(&sub(&b), &sub(&m)).unwrap();
                let lambda_max = *eigs.last().unwrap();
                assert!(lambda_max <= 2.0 * rho * (d * d) as f64 / h);
            }
        }
    }

    #[test]
    fn nodal_gradient_bound_values_and_scaling() {
        let m1 = Mesh::build(1, 4).unwrap();
        assert_relative_eq!(nodal_gradient_bound(&m1), 4.0, epsilon = 1e-12);

        let m2 = Mesh::build(2, 1).unwrap();
        assert_relative_eq!(nodal_gradient_bound(&m2), 2.0_f64.sqrt(), epsilon = 1e-12);

        let coarse = Mesh::build(2, 2).unwrap();
        let fine = Mesh::build(2, 4).unwrap();
        assert_relative_eq!(
            2.0 * nodal_gradient_bound(&coarse),
            nodal_gradient_bound(&fine),
            epsilon = 1e-10
        );
    }
}
