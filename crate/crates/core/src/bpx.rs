//! The multilevel preconditioner `C = sum_l h_l^2 P_l M_l^{-1} P_l^t` as a
//! matrix-free operator on finest-level residual vectors, preconditioned
//! conjugate gradients, and condition-number measurement of the
//! preconditioned stiffness.
//!
//! The operator acts on duals: restriction first, a per-level mass solve,
//! then prolongation. With exact mass solves this realizes the scaled sum of
//! L2 projections; the lumped and diagonal variants replace each `M_l^{-1}`
//! by a diagonal surrogate and are measured, not asserted, against the exact
//! form.

use crate::error::{Error, Result};
use crate::multilevel::{cg, Hierarchy};
use crate::sparse::SparseMatrix;
use crate::spectral::{self, lanczos_extremes, OperatorPair, DENSE_LIMIT};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::time::Instant;

/// Lanczos step count for condition-number estimates beyond the dense limit.
pub const KAPPA_LANCZOS_STEPS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MassVariant {
    ExactMass,
    LumpedMass,
    Diagonal,
}

impl MassVariant {
    pub fn label(&self) -> &'static str {
        match self {
            MassVariant::ExactMass => "exact_mass",
            MassVariant::LumpedMass => "lumped_mass",
            MassVariant::Diagonal => "diagonal",
        }
    }
}

impl std::str::FromStr for MassVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_mass" => Ok(MassVariant::ExactMass),
            "lumped" | "lumped_mass" => Ok(MassVariant::LumpedMass),
            "diag" | "diagonal" => Ok(MassVariant::Diagonal),
            other => Err(Error::InvalidArgument(format!(
                "unknown mass variant '{other}' (expected exact|lumped|diag)"
            ))),
        }
    }
}

/// Matrix-free BPX preconditioner over a mesh hierarchy.
pub struct BpxOperator<'a> {
    hier: &'a Hierarchy,
    variant: MassVariant,
    /// Per-level scale h_l^2.
    scales: Vec<f64>,
    /// Per-level inverse diagonals for the lumped/diagonal variants.
    diag_inverse: Vec<Option<DVector<f64>>>,
}

impl<'a> BpxOperator<'a> {
    pub fn new(hier: &'a Hierarchy, variant: MassVariant) -> Self {
        let levels = hier.num_levels();
        let scales = (1..=levels).map(|l| hier.mesh_size(l).powi(2)).collect();
        let diag_inverse = (1..=levels)
            .map(|l| {
                let mass = hier.level(l).mass();
                match variant {
                    MassVariant::ExactMass => None,
                    MassVariant::LumpedMass => {
                        let ones = DVector::from_element(mass.ncols(), 1.0);
                        Some(mass.matvec(&ones).map(|v| 1.0 / v))
                    }
                    MassVariant::Diagonal => Some(DVector::from_fn(mass.nrows(), |i, _| {
                        1.0 / mass.get(i, i)
                    })),
                }
            })
            .collect();
        Self {
            hier,
            variant,
            scales,
            diag_inverse,
        }
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        self.hier
    }

    pub fn variant(&self) -> MassVariant {
        self.variant
    }

    pub fn size(&self) -> usize {
        self.hier.finest().free_count()
    }

    /// Applies the preconditioner to a finest-level dual vector.
    pub fn apply(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        let levels = self.hier.num_levels();
        // restriction sweep: duals[l-1] holds the level-l restriction of r
        let mut duals: Vec<DVector<f64>> = Vec::with_capacity(levels);
        duals.push(r.clone());
        for l in (1..levels).rev() {
            let next = self.hier.restrict(l, duals.last().unwrap());
            duals.push(next);
        }
        duals.reverse();
        // solve and prolongate back up, accumulating the scaled corrections
        let mut acc: Option<DVector<f64>> = None;
        for l in 1..=levels {
            let mut y = match (&self.variant, &self.diag_inverse[l - 1]) {
                (MassVariant::ExactMass, _) => self.hier.level(l).solve_mass(&duals[l - 1])?,
                (_, Some(dinv)) => duals[l - 1].component_mul(dinv),
                _ => unreachable!(),
            };
            y *= self.scales[l - 1];
            acc = Some(match acc {
                None => y,
                Some(prev) => self.hier.prolong(l - 1, &prev) + y,
            });
        }
        Ok(acc.expect("hierarchy has at least one level"))
    }

    /// Dense realization, for the oracle paths; gated by the dense limit.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.size();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense BPX realization limited to {DENSE_LIMIT} dofs, got {n}"
            )));
        }
        let levels = self.hier.num_levels();
        let mut c = DMatrix::zeros(n, n);
        // composite prolongation, assembled from the finest level downwards
        let mut composite: DMatrix<f64> = DMatrix::identity(n, n);
        for l in (1..=levels).rev() {
            let level = self.hier.level(l);
            let nl = level.free_count();
            let inv = match &self.diag_inverse[l - 1] {
                Some(dinv) => DMatrix::from_diagonal(dinv),
                None => {
                    let dense_mass = level.mass().to_dense();
                    dense_mass
                        .cholesky()
                        .ok_or_else(|| Error::SolverFailure("mass matrix not SPD".into()))?
                        .inverse()
                }
            };
            c += &composite * inv * composite.transpose() * self.scales[l - 1];
            if l > 1 {
                let p = level
                    .prolongation()
                    .expect("levels above 1 carry a prolongation")
                    .to_dense();
                composite *= p;
                debug_assert_eq!(composite.ncols(), self.hier.level(l - 1).free_count());
                let _ = nl;
            }
        }
        Ok(c)
    }
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub wall_time_s: f64,
    pub preconditioner: String,
    pub dim: usize,
    pub levels: usize,
    pub unknowns: usize,
}

/// Preconditioned conjugate gradients on an SPD system, converging on the
/// relative preconditioned residual norm `sqrt(r^t C r / r0^t C r0)`.
pub fn pcg(
    a: &SparseMatrix,
    rhs: &DVector<f64>,
    pre: Option<&BpxOperator>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, SolveReport)> {
    if !(0.0..1.0).contains(&tol) || tol == 0.0 {
        return Err(Error::InvalidArgument("pcg tolerance must be in (0, 1)".into()));
    }
    let start = Instant::now();
    let describe = |pre: Option<&BpxOperator>| match pre {
        Some(b) => format!("bpx_{}", b.variant().label()),
        None => "none".into(),
    };
    let (dim, levels) = match pre {
        Some(b) => (b.hierarchy().dim(), b.hierarchy().num_levels()),
        None => (0, 0),
    };
    let mut report = SolveReport {
        iterations: 0,
        relative_residual: 0.0,
        converged: true,
        wall_time_s: 0.0,
        preconditioner: describe(pre),
        dim,
        levels,
        unknowns: rhs.len(),
    };
    let mut x = DVector::zeros(rhs.len());
    let mut r = rhs.clone();
    let precondition = |r: &DVector<f64>| -> Result<DVector<f64>> {
        match pre {
            Some(b) => b.apply(r),
            None => Ok(r.clone()),
        }
    };
    let mut z = precondition(&r)?;
    let mut rz = r.dot(&z);
    let rz0 = rz;
    if rz0 <= 0.0 {
        report.wall_time_s = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut p = z.clone();
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure(format!(
                "non-positive curvature p^t A p = {pap:e} at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = precondition(&r)?;
        let rz_next = r.dot(&z).max(0.0);
        let rel = (rz_next / rz0).sqrt();
        report.iterations = it;
        report.relative_residual = rel;
        if rel <= tol {
            report.wall_time_s = start.elapsed().as_secs_f64();
            return Ok((x, report));
        }
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    report.converged = false;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((x, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMethod {
    Dense,
    Lanczos,
}

impl KappaMethod {
    pub fn label(&self) -> &'static str {
        match self {
            KappaMethod::Dense => "dense",
            KappaMethod::Lanczos => "lanczos",
        }
    }
}

impl std::str::FromStr for KappaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(KappaMethod::Dense),
            "lanczos" => Ok(KappaMethod::Lanczos),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected dense|lanczos)"
            ))),
        }
    }
}

/// Extreme eigenvalues and condition number of the (optionally
/// preconditioned) stiffness operator.
#[derive(Debug, Clone, Serialize)]
pub struct KappaReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub method: String,
    pub preconditioner: String,
    pub seed: u64,
    /// Ritz residuals of the extreme pairs when the Lanczos path was used.
    pub confidence: Option<(f64, f64)>,
}

/// Condition number of `C A` (or of `A` without a preconditioner). The dense
/// path symmetrizes via the Cholesky factor of C; the Lanczos path runs in
/// the A-inner product, where `C A` is self-adjoint, without factoring A.
pub fn kappa(
    a: &SparseMatrix,
    pre: Option<&BpxOperator>,
    method: KappaMethod,
    seed: u64,
) -> Result<KappaReport> {
    let preconditioner = match pre {
        Some(b) => format!("bpx_{}", b.variant().label()),
        None => "none".into(),
    };
    let (lambda_min, lambda_max, confidence) = match method {
        KappaMethod::Dense => {
            if a.nrows() > DENSE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "dense method limited to {DENSE_LIMIT} dofs, got {}",
                    a.nrows()
                )));
            }
            let k = a.to_dense();
            let eigs = match pre {
                None => spectral::sym_eigenvalues(&k),
                Some(b) => {
                    let c = b.to_dense()?;
                    let chol = c
                        .cholesky()
                        .ok_or_else(|| Error::EigenFailure("preconditioner not SPD".into()))?;
                    let l = chol.l();
                    let s = l.transpose() * &k * &l;
                    let s = (&s + s.transpose()) * 0.5;
                    spectral::sym_eigenvalues(&s)
                }
            };
            (eigs[0], *eigs.last().unwrap(), None)
        }
        KappaMethod::Lanczos => {
            let steps = KAPPA_LANCZOS_STEPS.max(100);
            let result = match pre {
                None => {
                    let pair = OperatorPair::new(a.nrows(), |v| a.matvec(v));
                    lanczos_extremes(&pair, steps, seed)?
                }
                Some(b) => {
                    let pair = OperatorPair::with_inner(
                        a.nrows(),
                        |v| b.apply(&a.matvec(v)).expect("bpx apply"),
                        |v| a.matvec(v),
                    );
                    lanczos_extremes(&pair, steps, seed)?
                }
            };
            (
                result.lambda_min,
                result.lambda_max,
                Some((result.residual_min, result.residual_max)),
            )
        }
    };
    if !(lambda_min > 0.0) {
        return Err(Error::EigenFailure(format!(
            "nonpositive extreme eigenvalue {lambda_min:e}"
        )));
    }
    Ok(KappaReport {
        lambda_min,
        lambda_max,
        kappa: lambda_max / lambda_min,
        method: method.label().into(),
        preconditioner,
        seed,
        confidence,
    })
}

/// Evaluates `<C^{-1} v, v>` by an inner conjugate gradient solve with the
/// preconditioner itself; exact-mass variant only, where C realizes the
/// scaled sum of L2 projections.
pub fn psc_quadratic_form(b: &BpxOperator, v: &DVector<f64>) -> Result<f64> {
    if b.variant() != MassVariant::ExactMass {
        return Err(Error::InvalidArgument(
            "the quadratic form is defined for the exact_mass variant".into(),
        ));
    }
    let y = cg(
        |x| b.apply(x).expect("bpx apply"),
        v,
        1e-13,
        20 * v.len() + 200,
    )?;
    Ok(y.dot(v))
}
