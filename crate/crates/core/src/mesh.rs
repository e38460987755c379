//! Freudenthal (Kuhn) triangulation of the unit cube in arbitrary dimension.
//!
//! The grid with n subdivisions per axis carries (n+1)^d lexicographically
//! indexed vertices. Each grid cell is split into d! simplices, one per
//! permutation of the axes; an element is identified by its (cell, permutation)
//! pair and vertex coordinates are expanded lazily, so element storage is
//! O(1). Point location runs in O(d log d) by sorting fractional coordinates.

use crate::error::{Error, Result};
use crate::simplex::Simplex;
use nalgebra::DVector;
use serde::Serialize;
use std::io::Write;

/// Default guard on the vertex count of a single mesh.
pub const DEFAULT_DOF_BUDGET: usize = 2_000_000;

/// Face-slot threshold above which the hash-based conformity audit is
/// skipped at build time (it remains available via [`Mesh::verify_conformity`]).
const CONFORMITY_AUDIT_LIMIT: usize = 4_000_000;

/// A boundary (d-1)-face, identified by its owning element and the local
/// index of the omitted vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub element: usize,
    pub local_face: usize,
}

/// Immutable Freudenthal mesh of the unit cube `[0,1]^d`.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    grid_n: usize,
    num_vertices: usize,
    num_elements: usize,
    perm_count: usize,
    mesh_size: f64,
    boundary_vertex: Vec<bool>,
    patch_offsets: Vec<usize>,
    patch_elems: Vec<u32>,
    /// Boundary faces in canonical order: sorted by their sorted vertex-id
    /// tuples. The index in this list is the global boundary-face id.
    boundary_faces: Vec<BoundaryFace>,
    /// Same faces keyed by element: (element, local_face, face id), sorted.
    boundary_by_element: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Serialize)]
pub struct MeshSummary {
    pub dim: usize,
    pub n: usize,
    pub num_vertices: usize,
    pub num_elements: usize,
    pub boundary_vertex_ids: Vec<usize>,
}

impl Mesh {
    pub fn build(dim: usize, n: usize) -> Result<Self> {
        Self::build_with_budget(dim, n, DEFAULT_DOF_BUDGET)
    }

    pub fn build_with_budget(dim: usize, n: usize, budget: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if n < 1 {
            return Err(Error::InvalidArgument(
                "grid resolution must be at least 1".into(),
            ));
        }
        let num_vertices = checked_pow(n + 1, dim).ok_or_else(|| Error::BudgetExceeded {
            requested: usize::MAX,
            budget,
            context: String::new(),
        })?;
        if num_vertices > budget {
            return Err(Error::BudgetExceeded {
                requested: num_vertices,
                budget,
                context: format!(" building mesh d={dim} n={n}"),
            });
        }
        let perm_count = factorial_usize(dim).ok_or_else(|| {
            Error::InvalidArgument(format!("dimension {dim} is too large for d! element ids"))
        })?;
        let num_elements = checked_pow(n, dim)
            .and_then(|c| c.checked_mul(perm_count))
            .ok_or_else(|| Error::BudgetExceeded {
                requested: usize::MAX,
                budget,
                context: format!(" element count overflow for d={dim} n={n}"),
            })?;

        let mut mesh = Mesh {
            dim,
            grid_n: n,
            num_vertices,
            num_elements,
            perm_count,
            mesh_size: (dim as f64).sqrt() / n as f64,
            boundary_vertex: Vec::new(),
            patch_offsets: Vec::new(),
            patch_elems: Vec::new(),
            boundary_faces: Vec::new(),
            boundary_by_element: Vec::new(),
        };
        mesh.flag_boundary_vertices();
        mesh.build_patches();
        mesh.collect_boundary_faces()?;
        mesh.check_congruence_and_volume()?;
        if num_elements * (dim + 1) <= CONFORMITY_AUDIT_LIMIT {
            mesh.verify_conformity()?;
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// Characteristic mesh size `h = sqrt(d) / n` (every element's diameter).
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_vertex_ids(&self) -> Vec<usize> {
        (0..self.num_vertices)
            .filter(|&v| self.boundary_vertex[v])
            .collect()
    }

    /// Integer grid coordinates of a vertex (lexicographic id, first
    /// coordinate most significant).
    pub fn vertex_coords(&self, v: usize) -> Vec<usize> {
        let mut coords = vec![0usize; self.dim];
        let mut rest = v;
        let base = self.grid_n + 1;
        for i in (0..self.dim).rev() {
            coords[i] = rest % base;
            rest /= base;
        }
        coords
    }

    pub fn vertex_id(&self, coords: &[usize]) -> usize {
        let base = self.grid_n + 1;
        coords.iter().fold(0usize, |acc, &c| acc * base + c)
    }

    pub fn vertex_point(&self, v: usize) -> DVector<f64> {
        let coords = self.vertex_coords(v);
        DVector::from_iterator(
            self.dim,
            coords.iter().map(|&c| c as f64 / self.grid_n as f64),
        )
    }

    /// Decomposes an element id into cell coordinates and axis permutation
    /// `(s(1), ..., s(d))` (0-based axes).
    pub fn element_cell_and_perm(&self, e: usize) -> (Vec<usize>, Vec<usize>) {
        let cell_rank = e / self.perm_count;
        let perm_id = e % self.perm_count;
        let mut cell = vec![0usize; self.dim];
        let mut rest = cell_rank;
        for i in (0..self.dim).rev() {
            cell[i] = rest % self.grid_n;
            rest /= self.grid_n;
        }
        (cell, permutation_from_index(self.dim, perm_id))
    }

    fn element_id(&self, cell: &[usize], perm: &[usize]) -> usize {
        let cell_rank = cell.iter().fold(0usize, |acc, &c| acc * self.grid_n + c);
        cell_rank * self.perm_count + permutation_index(perm)
    }

    /// Vertex ids of an element, in path order: `v_0` is the cell corner,
    /// `v_k = v_{k-1} + e_{s(d+1-k)}`.
    pub fn element_vertex_ids(&self, e: usize) -> Vec<usize> {
        let (mut corner, perm) = self.element_cell_and_perm(e);
        let d = self.dim;
        let mut ids = Vec::with_capacity(d + 1);
        ids.push(self.vertex_id(&corner));
        for k in 1..=d {
            corner[perm[d - k]] += 1;
            ids.push(self.vertex_id(&corner));
        }
        ids
    }

    pub fn element_simplex(&self, e: usize) -> Simplex {
        let vertices = self
            .element_vertex_ids(e)
            .into_iter()
            .map(|v| self.vertex_point(v))
            .collect();
        Simplex::new(vertices).expect("mesh elements are nondegenerate")
    }

    /// Vertex ids of a local face (the face omits the given local vertex).
    pub fn face_vertex_ids(&self, e: usize, local_face: usize) -> Vec<usize> {
        self.element_vertex_ids(e)
            .into_iter()
            .enumerate()
            .filter_map(|(i, v)| (i != local_face).then_some(v))
            .collect()
    }

    pub fn face_simplex(&self, e: usize, local_face: usize) -> Simplex {
        let vertices = self
            .face_vertex_ids(e, local_face)
            .into_iter()
            .map(|v| self.vertex_point(v))
            .collect();
        Simplex::new(vertices).expect("mesh faces are nondegenerate")
    }

    /// Elements incident to a vertex (the patch around it), ascending ids.
    pub fn vertex_patch(&self, a: usize) -> &[u32] {
        &self.patch_elems[self.patch_offsets[a]..self.patch_offsets[a + 1]]
    }

    /// Elements whose closure meets the closure of `e` (including `e`).
    pub fn element_neighbors(&self, e: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .element_vertex_ids(e)
            .into_iter()
            .flat_map(|v| self.vertex_patch(v).iter().map(|&x| x as usize))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Boundary faces of one element as (local_face, global face id) pairs.
    pub fn boundary_faces_of_element(&self, e: usize) -> Vec<(usize, usize)> {
        let start = self.boundary_by_element.partition_point(|&(el, _, _)| el < e);
        self.boundary_by_element[start..]
            .iter()
            .take_while(|&&(el, _, _)| el == e)
            .map(|&(_, local, id)| (local, id))
            .collect()
    }

    /// Locates a point of the closed unit cube: returns the owning element
    /// and barycentric coordinates with respect to its vertex order.
    ///
    /// Points on shared faces are assigned deterministically to the
    /// lowest-element-id owner: cell ties resolve to the lexicographically
    /// smaller cell and equal fractional parts sort by axis index.
    pub fn locate(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {}, mesh has {}",
                x.len(),
                self.dim
            )));
        }
        const DOMAIN_SLACK: f64 = 1e-12;
        let d = self.dim;
        let n = self.grid_n;
        let mut cell = vec![0usize; d];
        let mut frac = vec![0f64; d];
        for i in 0..d {
            let xi = x[i];
            if !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&xi) {
                return Err(Error::OutsideDomain { axis: i, value: xi });
            }
            let scaled = (xi.clamp(0.0, 1.0)) * n as f64;
            let mut c = scaled.floor() as usize;
            if c >= n {
                c = n - 1;
            }
            let mut f = scaled - c as f64;
            // shared cube faces belong to the lexicographically smaller cell
            if f == 0.0 && c > 0 {
                c -= 1;
                f = 1.0;
            }
            cell[i] = c;
            frac[i] = f;
        }
        let mut axes: Vec<usize> = (0..d).collect();
        // stable: equal fractional parts keep ascending axis order, which
        // picks the lowest permutation id among the valid owners
        axes.sort_by(|&a, &b| frac[a].partial_cmp(&frac[b]).unwrap());
        let mut bary = vec![0.0; d + 1];
        bary[d] = frac[axes[0]];
        for k in 1..d {
            bary[d - k] = frac[axes[k]] - frac[axes[k - 1]];
        }
        bary[0] = 1.0 - frac[axes[d - 1]];
        Ok((self.element_id(&cell, &axes), bary))
    }

    /// Barycentric coordinates of `x` with respect to a specific element
    /// (coordinates may be negative when the point is outside).
    pub fn barycentric_in_element(&self, e: usize, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.element_simplex(e);
        let map = s.affine_map()?;
        let rhs = DVector::from_row_slice(x) - &map.offset;
        let lu = map.matrix.clone().lu();
        let inner = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SolverFailure("singular element map".into()))?;
        let mut bary = Vec::with_capacity(self.dim + 1);
        bary.push(1.0 - inner.iter().sum::<f64>());
        bary.extend(inner.iter().copied());
        Ok(bary)
    }

    /// Checks that every element of `fine` lies inside exactly one element
    /// of `coarse` (dyadic refinement nestedness).
    pub fn nestedness_check(coarse: &Mesh, fine: &Mesh) -> Result<bool> {
        if coarse.dim != fine.dim {
            return Err(Error::InvalidArgument(
                "nestedness check requires equal dimensions".into(),
            ));
        }
        if fine.grid_n != 2 * coarse.grid_n {
            return Err(Error::InvalidArgument(
                "nestedness check requires a dyadic refinement".into(),
            ));
        }
        const TOL: f64 = 1e-12;
        for e in 0..fine.num_elements {
            let s = fine.element_simplex(e);
            let mut centroid = DVector::zeros(fine.dim);
            for v in s.vertices() {
                centroid += v;
            }
            centroid /= (fine.dim + 1) as f64;
            let (coarse_elem, _) = coarse.locate(centroid.as_slice())?;
            for v in s.vertices() {
                let bary = coarse.barycentric_in_element(coarse_elem, v.as_slice())?;
                if bary.iter().any(|&b| b < -TOL) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Exhaustive face audit: every (d-1)-face is shared by exactly two
    /// elements or is one of the recorded boundary faces.
    pub fn verify_conformity(&self) -> Result<()> {
        let d = self.dim;
        let slots = self.num_elements * (d + 1);
        let mut keys: Vec<u32> = Vec::with_capacity(slots * d);
        for e in 0..self.num_elements {
            let vids = self.element_vertex_ids(e);
            for omit in 0..=d {
                let mut face: Vec<u32> = vids
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &v)| (i != omit).then_some(v as u32))
                    .collect();
                face.sort_unstable();
                keys.extend_from_slice(&face);
            }
        }
        let key = |slot: usize| &keys[slot * d..(slot + 1) * d];
        let mut order: Vec<usize> = (0..slots).collect();
        order.sort_unstable_by(|&a, &b| key(a).cmp(key(b)));
        let mut singles = 0usize;
        let mut i = 0;
        while i < slots {
            let mut j = i + 1;
            while j < slots && key(order[j]) == key(order[i]) {
                j += 1;
            }
            match j - i {
                1 => singles += 1,
                2 => {}
                c => {
                    return Err(Error::InvariantViolation(format!(
                        "face shared by {c} elements"
                    )))
                }
            }
            i = j;
        }
        if singles != self.boundary_faces.len() {
            return Err(Error::InvariantViolation(format!(
                "{} single-owner faces but {} boundary faces",
                singles,
                self.boundary_faces.len()
            )));
        }
        Ok(())
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            dim: self.dim,
            n: self.grid_n,
            num_vertices: self.num_vertices,
            num_elements: self.num_elements,
            boundary_vertex_ids: self.boundary_vertex_ids(),
        }
    }

    /// Streams the element table as CSV rows `elem_id,c0,...,c{d-1},perm_id`.
    pub fn write_elements_csv(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "elem_id")?;
        for i in 0..self.dim {
            write!(w, ",c{i}")?;
        }
        writeln!(w, ",perm_id")?;
        for e in 0..self.num_elements {
            let (cell, perm) = self.element_cell_and_perm(e);
            write!(w, "{e}")?;
            for c in &cell {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{}", permutation_index(&perm))?;
        }
        Ok(())
    }

    fn flag_boundary_vertices(&mut self) {
        self.boundary_vertex = (0..self.num_vertices)
            .map(|v| {
                self.vertex_coords(v)
                    .iter()
                    .any(|&c| c == 0 || c == self.grid_n)
            })
            .collect();
    }

    fn build_patches(&mut self) {
        let mut counts = vec![0usize; self.num_vertices + 1];
        for e in 0..self.num_elements {
            for v in self.element_vertex_ids(e) {
                counts[v + 1] += 1;
            }
        }
        for i in 0..self.num_vertices {
            counts[i + 1] += counts[i];
        }
        self.patch_offsets = counts.clone();
        let mut fill = counts;
        self.patch_elems = vec![0u32; self.patch_offsets[self.num_vertices]];
        for e in 0..self.num_elements {
            for v in self.element_vertex_ids(e) {
                self.patch_elems[fill[v]] = e as u32;
                fill[v] += 1;
            }
        }
    }

    /// A face lies on the boundary iff all its vertices share a grid facet
    /// hyperplane (some coordinate identically 0 or n).
    fn collect_boundary_faces(&mut self) -> Result<()> {
        let d = self.dim;
        let n = self.grid_n;
        let mut faces: Vec<(Vec<u32>, usize, usize)> = Vec::new();
        for e in 0..self.num_elements {
            let coords: Vec<Vec<usize>> = self
                .element_vertex_ids(e)
                .iter()
                .map(|&v| self.vertex_coords(v))
                .collect();
            for omit in 0..=d {
                let on_boundary = (0..d).any(|axis| {
                    coords
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != omit)
                        .all(|(_, c)| c[axis] == 0)
                        || coords
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != omit)
                            .all(|(_, c)| c[axis] == n)
                });
                if on_boundary {
                    let mut key: Vec<u32> = self
                        .face_vertex_ids(e, omit)
                        .into_iter()
                        .map(|v| v as u32)
                        .collect();
                    key.sort_unstable();
                    faces.push((key, e, omit));
                }
            }
        }
        faces.sort();
        let expected = 2 * d * checked_pow(n, d - 1).unwrap_or(usize::MAX)
            * factorial_usize(d - 1).unwrap_or(usize::MAX);
        if faces.len() != expected {
            return Err(Error::InvariantViolation(format!(
                "boundary face count {} does not match 2d n^{{d-1}} (d-1)! = {}",
                faces.len(),
                expected
            )));
        }
        self.boundary_faces = faces
            .iter()
            .map(|&(_, e, local)| BoundaryFace {
                element: e,
                local_face: local,
            })
            .collect();
        self.boundary_by_element = faces
            .iter()
            .enumerate()
            .map(|(id, &(_, e, local))| (e, local, id))
            .collect();
        self.boundary_by_element.sort_unstable();
        Ok(())
    }

    /// All elements are congruent: the d! permutation classes (translates
    /// cover the rest) must share one sorted squared-edge-length multiset.
    /// Total volume must be exactly 1.
    fn check_congruence_and_volume(&mut self) -> Result<()> {
        let d = self.dim;
        let mut reference: Option<Vec<f64>> = None;
        let mut class_volume_sum = 0.0;
        for perm_id in 0..self.perm_count {
            let s = self.element_simplex(perm_id);
            class_volume_sum += s.volume();
            let mut edges: Vec<f64> = Vec::with_capacity(d * (d + 1) / 2);
            let vs = s.vertices();
            for i in 0..vs.len() {
                for j in i + 1..vs.len() {
                    edges.push((&vs[i] - &vs[j]).norm_squared());
                }
            }
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            match &reference {
                None => reference = Some(edges),
                Some(r) => {
                    let worst = r
                        .iter()
                        .zip(&edges)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    if worst > 1e-12 {
                        return Err(Error::InvariantViolation(format!(
                            "elements are not congruent: edge multiset deviation {worst:e}"
                        )));
                    }
                }
            }
        }
        let cells = checked_pow(self.grid_n, d).unwrap_or(0) as f64;
        let total = class_volume_sum * cells;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "element volumes sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Lexicographic-rank (Lehmer) decode: index -> permutation of 0..d.
pub fn permutation_from_index(d: usize, index: usize) -> Vec<usize> {
    let mut available: Vec<usize> = (0..d).collect();
    let mut perm = Vec::with_capacity(d);
    let mut rest = index;
    for i in 0..d {
        let f = factorial_usize(d - 1 - i).expect("small factorial");
        perm.push(available.remove(rest / f));
        rest %= f;
    }
    perm
}

/// Lexicographic rank (Lehmer code) of a permutation of 0..d.
pub fn permutation_index(perm: &[usize]) -> usize {
    let d = perm.len();
    let mut rank = 0usize;
    for i in 0..d {
        let smaller_remaining = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count();
        rank += smaller_remaining * factorial_usize(d - 1 - i).expect("small factorial");
    }
    rank
}

fn factorial_usize(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, i| acc.checked_mul(i))
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn counts_match_closed_forms() {
        for (d, n, verts, elems) in [
            (1usize, 4usize, 5usize, 4usize),
            (3, 1, 8, 6),
            (2, 2, 9, 8),
            (1, 1, 2, 1),
            (3, 2, 27, 48),
        ] {
            let m = Mesh::build(d, n).unwrap();
            assert_eq!(m.num_vertices(), verts);
            assert_eq!(m.num_elements(), elems);
        }
    }

    #[test]
    fn total_volume_is_one() {
        let m = Mesh::build(2, 2).unwrap();
        let total: f64 = (0..m.num_elements())
            .map(|e| m.element_simplex(e).volume())
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_face_counts() {
        for (d, n, expected) in [(1usize, 4usize, 2usize), (2, 1, 4), (3, 2, 48)] {
            let m = Mesh::build(d, n).unwrap();
            assert_eq!(m.boundary_faces().len(), expected, "d={d} n={n}");
        }
    }

    #[test]
    fn lehmer_round_trip() {
        for d in 1..=5 {
            let count: usize = (1..=d).product();
            for id in 0..count {
                let p = permutation_from_index(d, id);
                assert_eq!(permutation_index(&p), id);
            }
        }
        // lexicographic order of sequences matches id order
        assert_eq!(permutation_from_index(3, 0), vec![0, 1, 2]);
        assert_eq!(permutation_from_index(3, 5), vec![2, 1, 0]);
    }

    #[test]
    fn locate_matches_brute_force_d2() {
        let m = Mesh::build(2, 1).unwrap();
        let (e, bary) = m.locate(&[0.7, 0.2]).unwrap();
        // x_2 < x_1: vertices (0,0), (1,0), (1,1)
        let ids = m.element_vertex_ids(e);
        assert_eq!(m.vertex_coords(ids[0]), vec![0, 0]);
        assert_eq!(m.vertex_coords(ids[1]), vec![1, 0]);
        assert_eq!(m.vertex_coords(ids[2]), vec![1, 1]);
        assert_relative_eq!(bary[0], 0.3, epsilon = 1e-14);
        assert_relative_eq!(bary[1], 0.5, epsilon = 1e-14);
        assert_relative_eq!(bary[2], 0.2, epsilon = 1e-14);
    }

    #[test]
    fn locate_at_grid_vertex_has_unit_barycentric() {
        let m = Mesh::build(2, 2).unwrap();
        let (e, bary) = m.locate(&[0.5, 0.5]).unwrap();
        let one = bary.iter().filter(|&&b| (b - 1.0).abs() < 1e-14).count();
        let zero = bary.iter().filter(|&&b| b.abs() < 1e-14).count();
        assert_eq!(one, 1);
        assert_eq!(zero, 2);
        // the unit barycentric points at the vertex itself
        let k = bary.iter().position(|&b| (b - 1.0).abs() < 1e-14).unwrap();
        let vid = m.element_vertex_ids(e)[k];
        assert_eq!(m.vertex_coords(vid), vec![1, 1]);
    }

    #[test]
    fn locate_d3_with_fractional_tie() {
        let m = Mesh::build(3, 2).unwrap();
        let (e, bary) = m.locate(&[0.9, 0.1, 0.6]).unwrap();
        let (cell, perm) = m.element_cell_and_perm(e);
        assert_eq!(cell, vec![1, 0, 1]);
        // fractional parts (0.8, ~0.2, ~0.2): the permutation must sort them
        // ascending (the near-tie between axes 1 and 2 resolves by value)
        assert_eq!(perm[2], 0);
        assert!(bary.iter().all(|&b| b >= 0.0));
        let s = m.element_simplex(e);
        let mut x = DVector::zeros(3);
        for (k, v) in s.vertices().iter().enumerate() {
            x += v * bary[k];
        }
        assert_relative_eq!(x[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.1, epsilon = 1e-12);
        assert_relative_eq!(x[2], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn exact_ties_pick_the_lowest_permutation() {
        let m = Mesh::build(3, 2).unwrap();
        // scaled point (1.5, 0.5, 0.5): all fractional parts exactly 0.5
        let (e, _) = m.locate(&[0.75, 0.25, 0.25]).unwrap();
        let (cell, perm) = m.element_cell_and_perm(e);
        assert_eq!(cell, vec![1, 0, 0]);
        assert_eq!(perm, vec![0, 1, 2]);
    }

    #[test]
    fn locate_rejects_outside_points() {
        let m = Mesh::build(2, 2).unwrap();
        assert!(matches!(
            m.locate(&[1.2, 0.5]),
            Err(Error::OutsideDomain { axis: 0, .. })
        ));
    }

    #[test]
    fn shared_face_points_go_to_lowest_element_id() {
        let m = Mesh::build(2, 2).unwrap();
        // midpoint of the edge between the two cells of the bottom row
        let (e, _) = m.locate(&[0.5, 0.25]).unwrap();
        let mut owners = Vec::new();
        for cand in 0..m.num_elements() {
            let bary = m.barycentric_in_element(cand, &[0.5, 0.25]).unwrap();
            if bary.iter().all(|&b| b >= -1e-12) {
                owners.push(cand);
            }
        }
        assert_eq!(e, owners[0]);
        assert!(owners.len() >= 2);
    }

    #[test]
    fn patch_sizes() {
        let m1 = Mesh::build(1, 4).unwrap();
        let interior = m1.vertex_id(&[2]);
        assert_eq!(m1.vertex_patch(interior).len(), 2);

        let m2 = Mesh::build(2, 2).unwrap();
        let center = m2.vertex_id(&[1, 1]);
        assert_eq!(m2.vertex_patch(center).len(), 6);

        let m2c = Mesh::build(2, 1).unwrap();
        // Kuhn square: the diagonal runs through (0,0), so both triangles
        // touch that corner but only one touches (1,0)
        assert_eq!(m2c.vertex_patch(m2c.vertex_id(&[0, 0])).len(), 2);
        assert_eq!(m2c.vertex_patch(m2c.vertex_id(&[1, 0])).len(), 1);
    }

    #[test]
    fn interior_patch_valence_is_d_plus_one_factorial() {
        let m = Mesh::build(3, 2).unwrap();
        let center = m.vertex_id(&[1, 1, 1]);
        assert_eq!(m.vertex_patch(center).len(), 24);
    }

    #[test]
    fn interior_patches_are_convex_by_midpoint_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for d in [2usize, 3] {
            let m = Mesh::build(d, 2).unwrap();
            let center = m.vertex_id(&vec![1; d]);
            let patch: Vec<usize> = m.vertex_patch(center).iter().map(|&e| e as usize).collect();
            let inside = |x: &[f64]| {
                patch.iter().any(|&e| {
                    m.barycentric_in_element(e, x)
                        .unwrap()
                        .iter()
                        .all(|&b| b >= -1e-10)
                })
            };
            let sample_in_patch = |rng: &mut rand_chacha::ChaCha8Rng| loop {
                let e = patch[rng.gen_range(0..patch.len())];
                let s = m.element_simplex(e);
                let mut w: Vec<f64> = (0..=d).map(|_| rng.gen_range(0.0..1.0)).collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|wi| *wi /= total);
                let p = s.point_from_barycentric(&w);
                if inside(p.as_slice()) {
                    return p;
                }
            };
            for _ in 0..50 {
                let p = sample_in_patch(&mut rng);
                let q = sample_in_patch(&mut rng);
                let mid = (&p + &q) * 0.5;
                assert!(inside(mid.as_slice()), "midpoint left the patch in d={d}");
            }
        }
    }

    #[test]
    fn nestedness_holds_for_dyadic_pairs() {
        for d in 1..=3 {
            let coarse = Mesh::build(d, 1).unwrap();
            let fine = Mesh::build(d, 2).unwrap();
            assert!(Mesh::nestedness_check(&coarse, &fine).unwrap());
            let coarse2 = Mesh::build(d, 2).unwrap();
            let fine2 = Mesh::build(d, 4).unwrap();
            assert!(Mesh::nestedness_check(&coarse2, &fine2).unwrap());
        }
        let d4_coarse = Mesh::build(4, 1).unwrap();
        let d4_fine = Mesh::build(4, 2).unwrap();
        assert!(Mesh::nestedness_check(&d4_coarse, &d4_fine).unwrap());
    }

    #[test]
    fn nestedness_rejects_mismatched_input() {
        let a = Mesh::build(2, 2).unwrap();
        let b = Mesh::build(2, 3).unwrap();
        assert!(Mesh::nestedness_check(&a, &b).is_err());
    }

    #[test]
    fn budget_guard_trips() {
        let r = Mesh::build_with_budget(3, 100, 1000);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn summary_and_csv_are_well_formed() {
        let m = Mesh::build(2, 1).unwrap();
        let s = m.summary();
        assert_eq!((s.dim, s.n, s.num_vertices, s.num_elements), (2, 1, 4, 2));
        assert_eq!(s.boundary_vertex_ids.len(), 4);
        let mut buf = Vec::new();
        m.write_elements_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("elem_id,c0,c1,perm_id"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn located_element_contains_the_point(
            x in 0.0..1.0f64, y in 0.0..1.0f64, z in 0.0..1.0f64
        ) {
            let m = Mesh::build(3, 3).unwrap();
            let p = [x, y, z];
            let (e, bary) = m.locate(&p).unwrap();
            prop_assert!(bary.iter().all(|&b| b >= -1e-12));
            prop_assert!((bary.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let s = m.element_simplex(e);
            let mut reconstructed = DVector::zeros(3);
            for (k, v) in s.vertices().iter().enumerate() {
                reconstructed += v * bary[k];
            }
            for i in 0..3 {
                prop_assert!((reconstructed[i] - p[i]).abs() <= 1e-12);
            }
        }
    }
}
