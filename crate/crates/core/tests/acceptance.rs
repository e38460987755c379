//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured quantities. Tolerances are pinned in the assertions.
//!
//! Criteria 7 and 10 assert level-robustness windows (kappa max/min <= 1.5,
//! PCG iteration spread <= 3) that the exact-projection multilevel operator
//! does not satisfy at these level counts: its condition number approaches
//! the level-independent bound slowly from below, so the windows fail even
//! though the asymptotic claim behind them is sound. They are kept as stated
//! and report the measured windows; see the test output for the numbers.

use bpxhd::assembly::{assemble, BoundaryCondition, MatrixKind};
use bpxhd::bpx::{kappa, pcg, psc_quadratic_form, BpxOperator, KappaMethod, MassVariant};
use bpxhd::interpolation::{
    build_averaging_sets, AnalyticField, ErrorNorm, FeFunction, Interpolator, Region,
};
use bpxhd::mesh::Mesh;
use bpxhd::multilevel::Hierarchy;
use bpxhd::quadrature::SimplexRule;
use bpxhd::simplex::{factorial, Simplex};
use bpxhd::spectral::{dense_generalized_eig, DENSE_LIMIT};
use bpxhd::verification::{fit_slope, psc_infimum_dense, rho_freudenthal};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion} {verdict}: {detail}");
    assert!(pass, "criterion {criterion}: {detail}");
}

#[test]
fn criterion_01_reference_inverse_constant() {
    let mut worst_lambda = 0.0_f64;
    let mut worst_sup = 0.0_f64;
    for d in 1..=6 {
        let n = d + 1;
        let m = DMatrix::from_fn(n, n, |i, j| 1.0 + if i == j { 1.0 } else { 0.0 });
        let mut k = DMatrix::zeros(n, n);
        k[(0, 0)] = d as f64;
        for i in 1..n {
            k[(0, i)] = -1.0;
            k[(i, 0)] = -1.0;
            k[(i, i)] = 1.0;
        }
        let eigs = dense_generalized_eig(&k, &m).unwrap();
        let lambda_max = *eigs.last().unwrap();
        let df = d as f64;
        worst_lambda = worst_lambda.max((lambda_max - (df + 1.0)).abs());
        let sup = ((df + 1.0) * (df + 2.0) * lambda_max).sqrt();
        worst_sup = worst_sup.max((sup - (df + 1.0) * (df + 2.0).sqrt()).abs());
    }
    report(
        1,
        worst_lambda <= 1e-9 && worst_sup <= 1e-9,
        &format!(
            "lambda_max(M_d^-1 K_d) = d+1 and Rayleigh sup = (d+1)sqrt(d+2) for d = 1..6, \
             worst errors {worst_lambda:.2e} / {worst_sup:.2e} (tol 1e-9)"
        ),
    );
}

#[test]
fn criterion_02_freudenthal_geometry() {
    let mut detail = String::new();
    let mut pass = true;
    for d in 1..=5 {
        for n in [1usize, 2] {
            let mesh = Mesh::build(d, n).unwrap();
            let expected_elements = n.pow(d as u32) * (1..=d).product::<usize>();
            pass &= mesh.num_elements() == expected_elements;

            let volume_sum: f64 = (0..mesh.num_elements())
                .map(|e| mesh.element_simplex(e).volume())
                .sum();
            pass &= (volume_sum - 1.0).abs() <= 1e-12;

            // congruence: sorted edge-length multisets across all elements
            let edge_multiset = |e: usize| -> Vec<f64> {
                let s = mesh.element_simplex(e);
                let vs = s.vertices();
                let mut edges = Vec::new();
                for i in 0..vs.len() {
                    for j in i + 1..vs.len() {
                        edges.push((&vs[i] - &vs[j]).norm());
                    }
                }
                edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
                edges
            };
            let reference = edge_multiset(0);
            for e in 1..mesh.num_elements() {
                let edges = edge_multiset(e);
                let deviation = reference
                    .iter()
                    .zip(&edges)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                pass &= deviation <= 1e-12;
            }

            let ratio = mesh.element_simplex(0).shape_ratio();
            pass &= (ratio - rho_freudenthal(d)).abs() <= 1e-10;
        }
        detail.push_str(&format!("d={d} ok; "));
    }
    report(
        2,
        pass,
        &format!(
            "counts n^d d!, volume sum 1 +- 1e-12, congruent edge multisets +- 1e-12, \
             shape ratio 2 sqrt(d) + (d-1) sqrt(2d) +- 1e-10 for d = 1..5, n in {{1,2}}: {detail}"
        ),
    );
}

#[test]
fn criterion_03_dual_basis_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst_l2 = 0.0_f64;
    let mut worst_l1 = 0.0_f64;
    for d in 1..=5 {
        for _ in 0..4 {
            let simplex = loop {
                let vertices: Vec<DVector<f64>> = (0..=d)
                    .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(0.0..1.0)))
                    .collect();
                if let Ok(s) = Simplex::new(vertices) {
                    if s.volume() >= 0.01 / factorial(d) {
                        break s;
                    }
                }
            };
            let local = rng.gen_range(0..=d);
            let scale = (d + 1) as f64 / simplex.volume();
            let psi = bpxhd::interpolation::DualFunction {
                region: Region::Element(0),
                local_index: local,
                coefficients: (0..=d)
                    .map(|b| scale * (if b == local { (d + 2) as f64 } else { 0.0 } - 1.0))
                    .collect(),
                intrinsic_dim: d,
                measure: simplex.volume(),
            };
            let rule = SimplexRule::with_degree(d, 3);
            let l2sq = rule.integrate_with(&simplex, |_, bary| psi.eval_bary(bary).powi(2));
            let df = (d + 1) as f64;
            worst_l2 = worst_l2.max((l2sq - df * df / simplex.volume()).abs());
            let l1 = psi.l1_norm(&simplex);
            let l1_ref = 2.0 * df.powi(d as i32 + 1) / ((d + 2) as f64).powi(d as i32) - 1.0;
            worst_l1 = worst_l1.max((l1 - l1_ref).abs());
        }
    }
    report(
        3,
        worst_l2 <= 1e-9 && worst_l1 <= 1e-9,
        &format!(
            "|psi|_L2^2 = (d+1)^2/|K| and |psi|_L1 = 2(d+1)^(d+1)/(d+2)^d - 1 on random \
             elements, d = 1..5, worst errors {worst_l2:.2e} / {worst_l1:.2e} (tol 1e-9)"
        ),
    );
}

#[test]
fn criterion_04_interpolation_projection_property() {
    let mut worst_projection = 0.0_f64;
    let mut dirichlet_exact = true;
    for d in [1usize, 2, 3] {
        let mesh = Mesh::build(d, 4).unwrap();
        let interp = Interpolator::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + d as u64);

        let coeffs = DVector::from_fn(mesh.num_vertices(), |_, _| rng.gen_range(-1.0..1.0));
        let field = FeFunction::new(&mesh, &coeffs);
        let nodal = interp.interpolate(&field).unwrap();
        worst_projection = worst_projection.max((&nodal - &coeffs).amax());

        let zero_boundary = DVector::from_fn(mesh.num_vertices(), |v, _| {
            if mesh.is_boundary_vertex(v) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let field0 = FeFunction::new(&mesh, &zero_boundary);
        let nodal0 = interp.interpolate(&field0).unwrap();
        for v in 0..mesh.num_vertices() {
            if mesh.is_boundary_vertex(v) {
                dirichlet_exact &= nodal0[v] == 0.0;
            }
        }
        // boundary averaging sets never lose a vertex
        let sets = build_averaging_sets(&mesh);
        for v in 0..mesh.num_vertices() {
            assert!(!sets.regions(v).is_empty());
        }
    }
    report(
        4,
        worst_projection <= 1e-10 && dirichlet_exact,
        &format!(
            "random v in V_h reproduced with sup error {worst_projection:.2e} (tol 1e-10), \
             zero Dirichlet data preserved exactly: {dirichlet_exact} (d = 1,2,3, n = 4)"
        ),
    );
}

#[test]
fn criterion_05_interpolation_error_rates() {
    let pi = std::f64::consts::PI;
    let field = AnalyticField {
        value: move |x: &[f64]| (pi * x[0]).sin() * (pi * x[1]).sin(),
        gradient: move |x: &[f64]| {
            vec![
                pi * (pi * x[0]).cos() * (pi * x[1]).sin(),
                pi * (pi * x[0]).sin() * (pi * x[1]).cos(),
            ]
        },
    };
    let mut l2 = Vec::new();
    let mut h1 = Vec::new();
    for n in [4usize, 8] {
        let mesh = Mesh::build(2, n).unwrap();
        let interp = Interpolator::new(&mesh);
        l2.push(interp.interp_error(&field, ErrorNorm::L2).unwrap());
        h1.push(interp.interp_error(&field, ErrorNorm::H1Semi).unwrap());
    }
    let l2_ratio = l2[0] / l2[1];
    let h1_ratio = h1[0] / h1[1];
    report(
        5,
        (3.5..=4.5).contains(&l2_ratio) && (1.8..=2.2).contains(&h1_ratio),
        &format!(
            "d=2 sin(pi x) sin(pi y): L2 error ratio n=4/n=8 = {l2_ratio:.3} (window [3.5, 4.5]), \
             H1 ratio = {h1_ratio:.3} (window [1.8, 2.2])"
        ),
    );
}

#[test]
fn criterion_06_unpreconditioned_growth() {
    let mut detail = String::new();
    let mut pass = true;
    for d in [1usize, 2] {
        let mut kappas = Vec::new();
        for levels in 2..=5 {
            let hier = Hierarchy::build(d, levels).unwrap();
            let r = kappa(hier.finest().stiffness(), None, KappaMethod::Dense, 0).unwrap();
            kappas.push(r.kappa);
        }
        for (i, w) in kappas.windows(2).enumerate() {
            let growth = w[1] / w[0];
            pass &= (3.2..=4.8).contains(&growth);
            detail.push_str(&format!("d={d} J={}->{}: x{growth:.2}; ", i + 2, i + 3));
        }
    }
    report(
        6,
        pass,
        &format!("kappa(A) growth per level within [3.2, 4.8]: {detail}"),
    );
}

#[test]
fn criterion_07_bpx_level_robustness() {
    let mut detail = String::new();
    let mut pass = true;
    for (d, j_max) in [(1usize, 6usize), (2, 5), (3, 4)] {
        let mut kappas = Vec::new();
        for levels in 2..=j_max {
            let hier = Hierarchy::build(d, levels).unwrap();
            let stiffness = hier.finest().stiffness();
            let bpx = BpxOperator::new(&hier, MassVariant::ExactMass);
            let method = if stiffness.nrows() <= DENSE_LIMIT {
                KappaMethod::Dense
            } else {
                KappaMethod::Lanczos
            };
            let r = kappa(stiffness, Some(&bpx), method, 0).unwrap();
            kappas.push(r.kappa);
        }
        let max = kappas.iter().cloned().fold(f64::MIN, f64::max);
        let min = kappas.iter().cloned().fold(f64::MAX, f64::min);
        let window = max / min;
        pass &= window <= 1.5;
        detail.push_str(&format!(
            "d={d} J=2..{j_max}: kappa = {:?}, max/min = {window:.3}; ",
            kappas.iter().map(|k| (k * 100.0).round() / 100.0).collect::<Vec<_>>()
        ));
    }
    report(
        7,
        pass,
        &format!("kappa(CA) max/min over available J <= 1.5 with exact mass solves: {detail}"),
    );
}

#[test]
fn criterion_08_dimension_trend() {
    let levels = 3; // largest J available to every d up to 4 at dense sizes
    let mut points = Vec::new();
    let mut detail = String::new();
    for d in 1..=4 {
        let hier = Hierarchy::build(d, levels).unwrap();
        let stiffness = hier.finest().stiffness();
        let bpx = BpxOperator::new(&hier, MassVariant::ExactMass);
        let r = kappa(stiffness, Some(&bpx), KappaMethod::Dense, 0).unwrap();
        detail.push_str(&format!("d={d}: kappa={:.2}; ", r.kappa));
        points.push(((d as f64).ln(), r.kappa.ln()));
    }
    let slope = fit_slope(&points).unwrap();
    report(
        8,
        slope.is_finite() && slope <= 10.0,
        &format!(
            "log-log fit of kappa(CA) vs d over d = 1..4 at J = {levels}: slope {slope:.3} \
             (recorded; envelope 10): {detail}"
        ),
    );
}

#[test]
fn criterion_09_psc_identity() {
    let hier = Hierarchy::build(1, 2).unwrap();
    let bpx = BpxOperator::new(&hier, MassVariant::ExactMass);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let v = DVector::from_fn(bpx.size(), |_, _| rng.gen_range(-1.0..1.0));
        let form = psc_quadratic_form(&bpx, &v).unwrap();
        let infimum = psc_infimum_dense(&hier, &v).unwrap();
        worst = worst.max((form - infimum).abs() / infimum.abs());
    }
    report(
        9,
        worst <= 1e-8,
        &format!(
            "<C^-1 v, v> matches the stacked least-squares infimum on d=1, J=2 for 20 random \
             vectors, worst relative deviation {worst:.2e} (tol 1e-8)"
        ),
    );
}

#[test]
fn criterion_10_pcg_robustness() {
    let mut detail = String::new();
    let mut spread_ok = true;
    let mut monotone_ok = true;
    for (d, j_max) in [(1usize, 6usize), (2, 5)] {
        let mut preconditioned = Vec::new();
        let mut plain = Vec::new();
        for levels in 2..=j_max {
            let hier = Hierarchy::build(d, levels).unwrap();
            let stiffness = hier.finest().stiffness();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let rhs = DVector::from_fn(stiffness.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let bpx = BpxOperator::new(&hier, MassVariant::ExactMass);
            let (_, with) = pcg(stiffness, &rhs, Some(&bpx), 1e-8, 100_000).unwrap();
            let (_, without) = pcg(stiffness, &rhs, None, 1e-8, 100_000).unwrap();
            assert!(with.converged && without.converged);
            preconditioned.push(with.iterations);
            plain.push(without.iterations);
        }
        let spread =
            preconditioned.iter().max().unwrap() - preconditioned.iter().min().unwrap();
        spread_ok &= spread <= 3;
        monotone_ok &= plain.windows(2).all(|w| w[1] > w[0]);
        detail.push_str(&format!(
            "d={d}: bpx iterations {preconditioned:?} (spread {spread}), plain {plain:?}; "
        ));
    }
    report(
        10,
        spread_ok && monotone_ok,
        &format!(
            "BPX iteration spread <= 3 across J and monotone unpreconditioned growth at \
             tol 1e-8: {detail}"
        ),
    );
}

/// Supporting check for the spec's external-interface contracts exercised by
/// the criteria above: MatrixMarket export and mesh dumps stay well-formed.
#[test]
fn interfaces_for_downstream_tools() {
    let mesh = Mesh::build(2, 2).unwrap();
    let k = assemble(&mesh, MatrixKind::Stiffness, BoundaryCondition::Dirichlet).unwrap();
    let mut mm = Vec::new();
    k.write_matrix_market(&mut mm, true).unwrap();
    let text = String::from_utf8(mm).unwrap();
    assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    let summary = serde_json::to_string(&mesh.summary()).unwrap();
    assert!(summary.contains("\"num_elements\":8"));
}
