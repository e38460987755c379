//! Nested dyadic hierarchy of Freudenthal meshes with prolongation,
//! restriction, and per-level L2 projection.
//!
//! Level l lives on the grid with 2^l subdivisions (level 1 starts at grid 2
//! so every level has interior dofs), giving mesh sizes h_l = sqrt(d) 2^{-l}
//! and refinement ratio gamma^2 = 1/2. All operators act on free
//! (interior-vertex) coefficients. Nestedness and the Galerkin identities
//! `P^t M_f P = M_c`, `P^t K_f P = K_c` are verified at build time.

use crate::assembly::{assemble_with_dofs, DofMap, MatrixKind};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{CooBuilder, SparseMatrix};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

/// Free-dof count above which per-level mass solves switch from a direct
/// sparse Cholesky to conjugate gradients.
pub const DIRECT_MASS_SOLVE_LIMIT: usize = 20_000;

/// Relative tolerance of iterative mass solves; mass matrices are uniformly
/// well conditioned, so this keeps projections exact to working precision.
pub const MASS_CG_RTOL: f64 = 1e-12;

enum MassSolver {
    Direct(CscCholesky<f64>),
    Cg,
}

/// One level of the hierarchy: mesh, free-dof operators, and solve handles.
pub struct Level {
    mesh: Mesh,
    dofs: DofMap,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    solver: MassSolver,
    /// Prolongation from the previous (coarser) level; `None` on level 1.
    prolongation: Option<SparseMatrix>,
}

impl Level {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn free_count(&self) -> usize {
        self.dofs.free_count()
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn prolongation(&self) -> Option<&SparseMatrix> {
        self.prolongation.as_ref()
    }

    /// Solves `M x = rhs` on this level's free dofs.
    pub fn solve_mass(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.solver {
            MassSolver::Direct(chol) => {
                let b = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
                Ok(DVector::from_column_slice(chol.solve(&b).column(0).as_slice()))
            }
            MassSolver::Cg => cg(
                |v| self.mass.matvec(v),
                rhs,
                MASS_CG_RTOL,
                4 * rhs.len() + 200,
            ),
        }
    }
}

pub struct Hierarchy {
    dim: usize,
    levels: Vec<Level>,
}

impl Hierarchy {
    pub fn build(dim: usize, num_levels: usize) -> Result<Self> {
        Self::build_with_budget(dim, num_levels, crate::mesh::DEFAULT_DOF_BUDGET)
    }

    pub fn build_with_budget(dim: usize, num_levels: usize, budget: usize) -> Result<Self> {
        if num_levels < 1 {
            return Err(Error::InvalidArgument("need at least one level".into()));
        }
        let mut levels: Vec<Level> = Vec::with_capacity(num_levels);
        for l in 1..=num_levels {
            let n = 1usize
                .checked_shl(l as u32)
                .ok_or_else(|| Error::InvalidArgument("level count too large".into()))?;
            let mesh = Mesh::build_with_budget(dim, n, budget).map_err(|e| match e {
                Error::BudgetExceeded {
                    requested, budget, ..
                } => Error::BudgetExceeded {
                    requested,
                    budget,
                    context: format!(" at hierarchy level {l} (grid {n})"),
                },
                other => other,
            })?;
            let dofs = DofMap::dirichlet(&mesh);
            let mass = assemble_with_dofs(&mesh, MatrixKind::Mass, &dofs)?;
            let stiffness = assemble_with_dofs(&mesh, MatrixKind::Stiffness, &dofs)?;
            let prolongation = match levels.last() {
                None => None,
                Some(coarse) => {
                    if !Mesh::nestedness_check(&coarse.mesh, &mesh)? {
                        return Err(Error::InvariantViolation(format!(
                            "level {l} is not nested in level {}",
                            l - 1
                        )));
                    }
                    Some(build_prolongation(&coarse.mesh, &coarse.dofs, &mesh, &dofs)?)
                }
            };
            let solver = if dofs.free_count() <= DIRECT_MASS_SOLVE_LIMIT {
                MassSolver::Direct(factor_spd(&mass)?)
            } else {
                MassSolver::Cg
            };
            let level = Level {
                mesh,
                dofs,
                mass,
                stiffness,
                solver,
                prolongation,
            };
            if let Some(coarse) = levels.last() {
                check_galerkin(coarse, &level)?;
            }
            levels.push(level);
        }
        Ok(Self { dim, levels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Level accessor, 1-based as in the decomposition V_1 + ... + V_J.
    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l - 1]
    }

    pub fn finest(&self) -> &Level {
        self.levels.last().unwrap()
    }

    /// Mesh size of level l: `sqrt(d) 2^{-l}`.
    pub fn mesh_size(&self, l: usize) -> f64 {
        (self.dim as f64).sqrt() * 0.5f64.powi(l as i32)
    }

    /// Nodal evaluation of a coarse function on the next finer level.
    pub fn prolong(&self, coarse_level: usize, v: &DVector<f64>) -> DVector<f64> {
        self.level(coarse_level + 1)
            .prolongation()
            .expect("levels above 1 carry a prolongation")
            .matvec(v)
    }

    /// Transpose of [`Hierarchy::prolong`], mapping fine dual vectors down.
    pub fn restrict(&self, coarse_level: usize, dual: &DVector<f64>) -> DVector<f64> {
        self.level(coarse_level + 1)
            .prolongation()
            .expect("levels above 1 carry a prolongation")
            .matvec_transpose(dual)
    }

    /// Composite prolongation from level l to the finest level, applied
    /// factor by factor.
    pub fn prolong_to_finest(&self, l: usize, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for level in l..self.num_levels() {
            out = self.prolong(level, &out);
        }
        out
    }

    /// Composite restriction of a finest-level dual vector onto level l.
    pub fn restrict_from_finest(&self, l: usize, dual: &DVector<f64>) -> DVector<f64> {
        let mut out = dual.clone();
        for level in (l..self.num_levels()).rev() {
            out = self.restrict(level, &out);
        }
        out
    }

    /// L2-orthogonal projection of a finest-level function onto level l,
    /// returned in level-l coefficients: solves `M_l x = P^t M_J v`.
    pub fn level_l2_project(&self, l: usize, fine: &DVector<f64>) -> Result<DVector<f64>> {
        let weighted = self.finest().mass.matvec(fine);
        let rhs = self.restrict_from_finest(l, &weighted);
        self.level(l).solve_mass(&rhs)
    }

    /// The projection of [`Hierarchy::level_l2_project`] expressed back in
    /// finest-level coefficients.
    pub fn l2_projection_on_finest(&self, l: usize, fine: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.prolong_to_finest(l, &self.level_l2_project(l, fine)?))
    }
}

/// Prolongation by nodal evaluation: each fine free vertex takes the
/// barycentric combination of the coarse element found by point location.
/// For nested dyadic grids the weights are exactly {0, 1/2, 1}.
fn build_prolongation(
    coarse_mesh: &Mesh,
    coarse_dofs: &DofMap,
    fine_mesh: &Mesh,
    fine_dofs: &DofMap,
) -> Result<SparseMatrix> {
    let mut coo = CooBuilder::new(fine_dofs.free_count(), coarse_dofs.free_count());
    for fine_row in 0..fine_dofs.free_count() {
        let vertex = fine_dofs.vertex_of(fine_row);
        let point = fine_mesh.vertex_point(vertex);
        let (elem, bary) = coarse_mesh.locate(point.as_slice())?;
        for (k, &coarse_vertex) in coarse_mesh.element_vertex_ids(elem).iter().enumerate() {
            if bary[k] == 0.0 {
                continue;
            }
            // coarse boundary vertices carry no dof; their basis functions
            // vanish at interior fine vertices anyway
            if let Some(col) = coarse_dofs.free_of(coarse_vertex) {
                coo.push(fine_row, col, bary[k]);
            }
        }
    }
    Ok(coo.finalize())
}

/// Verifies `P^t A_f P = A_c` entrywise for mass and stiffness.
fn check_galerkin(coarse: &Level, fine: &Level) -> Result<()> {
    let p = fine.prolongation().expect("fine level has a prolongation");
    for (name, fine_mat, coarse_mat) in [
        ("mass", &fine.mass, &coarse.mass),
        ("stiffness", &fine.stiffness, &coarse.stiffness),
    ] {
        let scale = (0..coarse_mat.nrows())
            .flat_map(|r| coarse_mat.row(r).map(|(_, v)| v.abs()))
            .fold(0.0f64, f64::max);
        for j in 0..coarse.free_count() {
            let mut e = DVector::zeros(coarse.free_count());
            e[j] = 1.0;
            let column = p.matvec_transpose(&fine_mat.matvec(&p.matvec(&e)));
            for i in 0..coarse.free_count() {
                if (column[i] - coarse_mat.get(i, j)).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::InvariantViolation(format!(
                        "Galerkin {name} identity fails at ({i}, {j})"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn factor_spd(m: &SparseMatrix) -> Result<CscCholesky<f64>> {
    let n = m.nrows();
    let mut coo = CooMatrix::new(n, n);
    for r in 0..n {
        for (c, v) in m.row(r) {
            coo.push(r, c, v);
        }
    }
    CscCholesky::factor(&CscMatrix::from(&coo))
        .map_err(|e| Error::SolverFailure(format!("sparse Cholesky failed: {e:?}")))
}

/// Plain conjugate gradients with a relative residual stopping rule.
pub(crate) fn cg(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    rhs: &DVector<f64>,
    rtol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let mut x = DVector::zeros(rhs.len());
    let mut r = rhs.clone();
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..max_iter {
        if rr.sqrt() <= rtol * rhs_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure(
                "cg encountered a non-positive curvature direction".into(),
            ));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    if rr.sqrt() <= rtol * rhs_norm {
        Ok(x)
    } else {
        Err(Error::SolverFailure(format!(
            "cg stalled at relative residual {:e}",
            rr.sqrt() / rhs_norm
        )))
    }
}
