//! Q1 finite element assembly for the Laplacian and isotropic plane-stress
//! elasticity on quadrilateral meshes.
//!
//! Essential boundary conditions follow the row-replacement convention: the
//! assembled matrix keeps its raw symmetric form alongside a constrained copy
//! whose Dirichlet rows have a unit diagonal and zero off-diagonals, with the
//! prescribed values stored in the load vector. Solvers work on the free
//! sub-block, which stays symmetric positive definite.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{Coo, Csr};
use crate::mesh::ComponentMesh;
use crate::{Error, Result};

/// Differential operator of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    Laplace,
    #[serde(rename = "elasticity_plane_stress")]
    Elasticity { poisson_ratio: f64 },
}

impl OperatorKind {
    pub fn elasticity() -> Self {
        OperatorKind::Elasticity { poisson_ratio: 0.3 }
    }

    pub fn dofs_per_node(&self) -> usize {
        match self {
            OperatorKind::Laplace => 1,
            OperatorKind::Elasticity { .. } => 2,
        }
    }

    pub fn kernel_dim(&self) -> usize {
        match self {
            OperatorKind::Laplace => 1,
            OperatorKind::Elasticity { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let OperatorKind::Elasticity { poisson_ratio } = self {
            if !(-1.0 < *poisson_ratio && *poisson_ratio < 0.5) {
                return Err(Error::InvalidOperator(format!(
                    "plane-stress Poisson ratio {poisson_ratio} outside (-1, 0.5)"
                )));
            }
        }
        Ok(())
    }
}

/// Volumetric load density; `None` means zero. For the Laplacian only the
/// first returned component is used.
pub type Source<'a> = Option<&'a (dyn Fn([f64; 2]) -> [f64; 2] + Sync)>;

/// Assembled linear system with both the raw symmetric operator and the
/// Dirichlet-constrained copy.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Constrained matrix: Dirichlet rows have unit diagonal, zero elsewhere.
    pub stiffness: Csr,
    /// Unconstrained symmetric matrix.
    pub raw: Csr,
    /// Source load; Dirichlet entries hold the prescribed values.
    pub load: DVector<f64>,
    pub dirichlet: BTreeMap<usize, f64>,
    pub n_dofs: usize,
    pub dofs_per_node: usize,
}

impl AssembledSystem {
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs).filter(|d| !self.dirichlet.contains_key(d)).collect()
    }

    /// Full-length vector of prescribed values (zero at free DOFs).
    pub fn dirichlet_vector(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_dofs);
        for (&d, &v) in &self.dirichlet {
            g[d] = v;
        }
        g
    }
}

/// Plane-stress constitutive matrix in Voigt order (xx, yy, xy) for unit
/// Young's modulus.
pub fn plane_stress_matrix(poisson_ratio: f64) -> Result<Matrix3<f64>> {
    OperatorKind::Elasticity { poisson_ratio }.validate()?;
    let nu = poisson_ratio;
    let c = 1.0 / (1.0 - nu * nu);
    Ok(Matrix3::new(
        c,
        nu * c,
        0.0,
        nu * c,
        c,
        0.0,
        0.0,
        0.0,
        0.5 * (1.0 - nu) * c,
    ))
}

const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

fn shape_derivatives(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let n = [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ];
    let d = [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ];
    (n, d)
}

struct QuadPoint {
    /// Shape values.
    n: [f64; 4],
    /// Physical-space gradients per node.
    grad: [[f64; 2]; 4],
    /// Jacobian determinant times quadrature weight.
    scale: f64,
    /// Mapped physical coordinates.
    point: [f64; 2],
}

fn quad_points(element: usize, coords: &[[f64; 2]; 4]) -> Result<Vec<QuadPoint>> {
    let mut out = Vec::with_capacity(4);
    for &xi in &GAUSS {
        for &eta in &GAUSS {
            let (n, d) = shape_derivatives(xi, eta);
            let mut j = Matrix2::zeros();
            for a in 0..4 {
                j[(0, 0)] += d[a][0] * coords[a][0];
                j[(0, 1)] += d[a][0] * coords[a][1];
                j[(1, 0)] += d[a][1] * coords[a][0];
                j[(1, 1)] += d[a][1] * coords[a][1];
            }
            let det = j.determinant();
            if det <= 0.0 {
                return Err(Error::DegenerateElement { element, det });
            }
            let inv = j.try_inverse().ok_or(Error::DegenerateElement { element, det })?;
            let mut grad = [[0.0; 2]; 4];
            for a in 0..4 {
                grad[a][0] = inv[(0, 0)] * d[a][0] + inv[(0, 1)] * d[a][1];
                grad[a][1] = inv[(1, 0)] * d[a][0] + inv[(1, 1)] * d[a][1];
            }
            let mut point = [0.0; 2];
            for a in 0..4 {
                point[0] += n[a] * coords[a][0];
                point[1] += n[a] * coords[a][1];
            }
            out.push(QuadPoint { n, grad, scale: det, point });
        }
    }
    Ok(out)
}

/// Element stiffness matrix (4·d × 4·d with d DOFs per node).
pub fn element_stiffness(
    element: usize,
    coords: &[[f64; 2]; 4],
    op: &OperatorKind,
) -> Result<DMatrix<f64>> {
    let pts = quad_points(element, coords)?;
    match op {
        OperatorKind::Laplace => {
            let mut k = DMatrix::zeros(4, 4);
            for qp in &pts {
                for a in 0..4 {
                    for b in 0..4 {
                        k[(a, b)] += qp.scale
                            * (qp.grad[a][0] * qp.grad[b][0] + qp.grad[a][1] * qp.grad[b][1]);
                    }
                }
            }
            Ok(k)
        }
        OperatorKind::Elasticity { poisson_ratio } => {
            let d = plane_stress_matrix(*poisson_ratio)?;
            let mut k = DMatrix::zeros(8, 8);
            for qp in &pts {
                // strain-displacement rows (xx, yy, xy) per node/component
                let mut b = DMatrix::zeros(3, 8);
                for a in 0..4 {
                    b[(0, 2 * a)] = qp.grad[a][0];
                    b[(1, 2 * a + 1)] = qp.grad[a][1];
                    b[(2, 2 * a)] = qp.grad[a][1];
                    b[(2, 2 * a + 1)] = qp.grad[a][0];
                }
                let db = DMatrix::from_fn(3, 8, |i, j| {
                    (0..3).map(|l| d[(i, l)] * b[(l, j)]).sum::<f64>()
                });
                k += qp.scale * b.transpose() * db;
            }
            Ok(k)
        }
    }
}

/// Gram matrices assembled from element contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    /// L² inner product, componentwise.
    Mass,
    /// Gradient (H¹ seminorm) inner product, componentwise.
    Gradient,
    /// Mass plus gradient (full H¹ inner product).
    H1,
}

fn element_gram(
    element: usize,
    coords: &[[f64; 2]; 4],
    dpn: usize,
    kind: GramKind,
) -> Result<DMatrix<f64>> {
    let pts = quad_points(element, coords)?;
    let mut scalar = DMatrix::zeros(4, 4);
    for qp in &pts {
        for a in 0..4 {
            for b in 0..4 {
                let mut v = 0.0;
                if matches!(kind, GramKind::Mass | GramKind::H1) {
                    v += qp.n[a] * qp.n[b];
                }
                if matches!(kind, GramKind::Gradient | GramKind::H1) {
                    v += qp.grad[a][0] * qp.grad[b][0] + qp.grad[a][1] * qp.grad[b][1];
                }
                scalar[(a, b)] += qp.scale * v;
            }
        }
    }
    if dpn == 1 {
        return Ok(scalar);
    }
    let mut blocked = DMatrix::zeros(4 * dpn, 4 * dpn);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..dpn {
                blocked[(a * dpn + c, b * dpn + c)] = scalar[(a, b)];
            }
        }
    }
    Ok(blocked)
}

fn element_coords(mesh: &ComponentMesh, quad: &[usize; 4]) -> [[f64; 2]; 4] {
    [
        mesh.nodes[quad[0]],
        mesh.nodes[quad[1]],
        mesh.nodes[quad[2]],
        mesh.nodes[quad[3]],
    ]
}

fn element_dofs(quad: &[usize; 4], dpn: usize) -> Vec<usize> {
    let mut dofs = Vec::with_capacity(4 * dpn);
    for &v in quad {
        for c in 0..dpn {
            dofs.push(v * dpn + c);
        }
    }
    dofs
}

/// Assemble a Gram matrix over an optional element range (defaults to all).
pub fn assemble_gram(
    mesh: &ComponentMesh,
    dpn: usize,
    kind: GramKind,
    elements: Option<std::ops::Range<usize>>,
) -> Result<Csr> {
    let range = elements.unwrap_or(0..mesh.elements.len());
    let n = mesh.n_nodes() * dpn;
    let locals: Vec<(usize, DMatrix<f64>)> = range
        .clone()
        .into_par_iter()
        .map(|e| {
            let coords = element_coords(mesh, &mesh.elements[e]);
            element_gram(e, &coords, dpn, kind).map(|m| (e, m))
        })
        .collect::<Result<_>>()?;
    let mut coo = Coo::new(n, n);
    for (e, m) in locals {
        let dofs = element_dofs(&mesh.elements[e], dpn);
        for (i, &di) in dofs.iter().enumerate() {
            for (j, &dj) in dofs.iter().enumerate() {
                coo.push(di, dj, m[(i, j)]);
            }
        }
    }
    Ok(coo.into_csr())
}

/// Assemble the operator with optional volumetric source and essential data.
pub fn assemble(
    mesh: &ComponentMesh,
    op: &OperatorKind,
    source: Source,
    dirichlet: &BTreeMap<usize, f64>,
) -> Result<AssembledSystem> {
    op.validate()?;
    let dpn = op.dofs_per_node();
    let n = mesh.n_nodes() * dpn;
    for &d in dirichlet.keys() {
        if d >= n {
            return Err(Error::MissingDirichlet(format!(
                "constrained DOF {d} outside system of size {n}"
            )));
        }
    }
    let locals: Vec<(usize, DMatrix<f64>, DVector<f64>)> = (0..mesh.elements.len())
        .into_par_iter()
        .map(|e| {
            let coords = element_coords(mesh, &mesh.elements[e]);
            let k = element_stiffness(e, &coords, op)?;
            let mut f = DVector::zeros(4 * dpn);
            if let Some(density) = source {
                for qp in quad_points(e, &coords)? {
                    let val = density(qp.point);
                    for a in 0..4 {
                        for c in 0..dpn {
                            f[a * dpn + c] += qp.scale * qp.n[a] * val[c];
                        }
                    }
                }
            }
            Ok((e, k, f))
        })
        .collect::<Result<_>>()?;

    let mut coo = Coo::new(n, n);
    let mut load = DVector::zeros(n);
    for (e, k, f) in locals {
        let dofs = element_dofs(&mesh.elements[e], dpn);
        for (i, &di) in dofs.iter().enumerate() {
            for (j, &dj) in dofs.iter().enumerate() {
                coo.push(di, dj, k[(i, j)]);
            }
            load[di] += f[i];
        }
    }
    // make sure constrained rows own a diagonal slot before replacement
    for &d in dirichlet.keys() {
        coo.push(d, d, 0.0);
    }
    let raw = coo.into_csr();
    let mut stiffness = raw.clone();
    let rows: Vec<usize> = dirichlet.keys().copied().collect();
    stiffness.replace_rows_identity(&rows)?;
    for (&d, &v) in dirichlet {
        load[d] = v;
    }
    Ok(AssembledSystem {
        stiffness,
        raw,
        load,
        dirichlet: dirichlet.clone(),
        n_dofs: n,
        dofs_per_node: dpn,
    })
}

/// Basis of the operator's kernel sampled at all DOFs: constants for the
/// Laplacian, rigid body motions for elasticity.
pub fn kernel_basis(mesh: &ComponentMesh, op: &OperatorKind) -> DMatrix<f64> {
    let n_nodes = mesh.n_nodes();
    match op {
        OperatorKind::Laplace => DMatrix::from_element(n_nodes, 1, 1.0),
        OperatorKind::Elasticity { .. } => {
            let mut k = DMatrix::zeros(2 * n_nodes, 3);
            for (i, p) in mesh.nodes.iter().enumerate() {
                k[(2 * i, 0)] = 1.0;
                k[(2 * i + 1, 1)] = 1.0;
                k[(2 * i, 2)] = -p[1];
                k[(2 * i + 1, 2)] = p[0];
            }
            k
        }
    }
}

/// Direct solve of the constrained system.
pub fn solve(sys: &AssembledSystem) -> Result<DVector<f64>> {
    let free = sys.free_dofs();
    if free.is_empty() {
        return Ok(sys.dirichlet_vector());
    }
    let a_ff = sys.raw.extract_dense(&free, &free);
    let g = sys.dirichlet_vector();
    let lifted = sys.raw.matvec(&g);
    let rhs = DVector::from_fn(free.len(), |i, _| sys.load[free[i]] - lifted[free[i]]);
    let chol = Cholesky::new(a_ff).ok_or_else(|| {
        Error::NotPositiveDefinite(
            "free stiffness block is not positive definite; the essential \
             boundary likely leaves kernel fields unconstrained"
                .into(),
        )
    })?;
    // a semi-definite block can survive factorization with tiny pivots
    let pivots = chol.l_dirty().diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &p in pivots.iter() {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if !(lo > 1e-7 * hi) {
        return Err(Error::NotPositiveDefinite(format!(
            "free stiffness block is numerically singular (pivot ratio {:.3e}); \
             the essential boundary likely leaves kernel fields unconstrained",
            lo / hi
        )));
    }
    let u_f = chol.solve(&rhs);
    let mut u = g;
    for (i, &d) in free.iter().enumerate() {
        u[d] = u_f[i];
    }
    let residual = (sys.stiffness.matvec(&u) - &sys.load).norm();
    let scale = sys.load.norm().max(u.norm() * sys.raw.max_abs() * 1e-6);
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite(format!(
            "direct solve left residual {residual:.3e} (scale {scale:.3e})"
        )));
    }
    Ok(u)
}

/// Dense mass matrix of the 1D trace along a node path (consecutive nodes
/// joined by segments), blocked per DOF component.
pub fn trace_mass(mesh: &ComponentMesh, path: &[usize], dpn: usize) -> DMatrix<f64> {
    let m = path.len();
    let mut out = DMatrix::zeros(m * dpn, m * dpn);
    for w in 0..m.saturating_sub(1) {
        let pa = mesh.nodes[path[w]];
        let pb = mesh.nodes[path[w + 1]];
        let h = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for c in 0..dpn {
            let (i, j) = (w * dpn + c, (w + 1) * dpn + c);
            out[(i, i)] += h / 3.0;
            out[(j, j)] += h / 3.0;
            out[(i, j)] += h / 6.0;
            out[(j, i)] += h / 6.0;
        }
    }
    out
}

/// Trace mass on a node path embedded into the full DOF numbering.
pub fn trace_mass_embedded(
    mesh: &ComponentMesh,
    path: &[usize],
    dpn: usize,
    n_dofs: usize,
) -> Csr {
    let mut coo = Coo::new(n_dofs, n_dofs);
    for w in 0..path.len().saturating_sub(1) {
        let pa = mesh.nodes[path[w]];
        let pb = mesh.nodes[path[w + 1]];
        let h = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        for c in 0..dpn {
            let (i, j) = (path[w] * dpn + c, path[w + 1] * dpn + c);
            coo.push(i, i, h / 3.0);
            coo.push(j, j, h / 3.0);
            coo.push(i, j, h / 6.0);
            coo.push(j, i, h / 6.0);
        }
    }
    coo.into_csr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_pair, ComponentSpec};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn unit_pair() -> crate::mesh::ComponentPairMesh {
        let s1 = ComponentSpec::rectangle([0.0, 0.0], 1.0, 1.0, 4, 4);
        let s2 = ComponentSpec::rectangle([1.0, 0.0], 1.0, 1.0, 4, 4);
        build_pair(&s1, &s2).unwrap()
    }

    fn outer_dirichlet(
        pair: &crate::mesh::ComponentPairMesh,
        dpn: usize,
        value: impl Fn([f64; 2], usize) -> f64,
    ) -> BTreeMap<usize, f64> {
        let mut bc = BTreeMap::new();
        for &n in &pair.sets.outer {
            for c in 0..dpn {
                bc.insert(n * dpn + c, value(pair.mesh.nodes[n], c));
            }
        }
        bc
    }

    #[test]
    fn laplace_element_stiffness_on_unit_square() {
        let coords = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let k = element_stiffness(0, &coords, &OperatorKind::Laplace).unwrap();
        for a in 0..4 {
            assert_relative_eq!(k[(a, a)], 2.0 / 3.0, max_relative = 1e-12);
        }
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            assert_relative_eq!(k[(a, b)], -1.0 / 6.0, max_relative = 1e-12);
            assert_relative_eq!(k[(b, a)], -1.0 / 6.0, max_relative = 1e-12);
        }
        for (a, b) in [(0, 2), (1, 3)] {
            assert_relative_eq!(k[(a, b)], -1.0 / 3.0, max_relative = 1e-12);
        }
        // constants lie in the kernel
        let ones = DVector::from_element(4, 1.0);
        assert!((&k * ones).norm() < 1e-12);
    }

    #[test]
    fn plane_stress_moduli_for_default_ratio() {
        let d = plane_stress_matrix(0.3).unwrap();
        assert_relative_eq!(d[(0, 0)], 1.0 / 0.91, max_relative = 1e-12);
        assert_relative_eq!(d[(0, 1)], 0.3 / 0.91, max_relative = 1e-12);
        assert_relative_eq!(d[(2, 2)], 1.0 / 2.6, max_relative = 1e-12);
        assert_eq!(d[(0, 1)], d[(1, 0)]);
        assert!(plane_stress_matrix(0.5).is_err());
        assert!(plane_stress_matrix(-1.0).is_err());
    }

    #[test]
    fn elasticity_element_annihilates_rigid_motions() {
        let coords = [[0.2, -0.1], [1.3, 0.0], [1.1, 0.9], [0.1, 1.0]];
        let k = element_stiffness(0, &coords, &OperatorKind::elasticity()).unwrap();
        assert!((&k - k.transpose()).norm() < 1e-12);
        let rigid = [
            DVector::from_fn(8, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 }),
            DVector::from_fn(8, |i, _| if i % 2 == 1 { 1.0 } else { 0.0 }),
            DVector::from_fn(8, |i, _| {
                let node = i / 2;
                if i % 2 == 0 {
                    -coords[node][1]
                } else {
                    coords[node][0]
                }
            }),
        ];
        for r in &rigid {
            assert!((&k * r).norm() < 1e-12 * k.norm());
        }
        let eig = k.clone().symmetric_eigen();
        let near_zero = eig.eigenvalues.iter().filter(|&&l| l.abs() < 1e-12).count();
        assert_eq!(near_zero, 3);
        for &l in eig.eigenvalues.iter() {
            assert!(l > -1e-12);
        }
    }

    #[test]
    fn assembled_raw_matrix_is_symmetric_with_constrained_rows() {
        let pair = unit_pair();
        let bc = outer_dirichlet(&pair, 1, |p, _| p[0]);
        let sys = assemble(&pair.mesh, &OperatorKind::Laplace, None, &bc).unwrap();
        assert_eq!(sys.raw.symmetry_defect(), 0.0);
        for (&d, &v) in &sys.dirichlet {
            assert_eq!(sys.stiffness.get(d, d), 1.0);
            assert_eq!(sys.load[d], v);
            for (j, val) in sys.stiffness.row(d) {
                if j != d {
                    assert_eq!(val, 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let pair = unit_pair();
        let bc = outer_dirichlet(&pair, 1, |_, _| 0.0);
        let sys = assemble(&pair.mesh, &OperatorKind::Laplace, None, &bc).unwrap();
        let u = solve(&sys).unwrap();
        assert!(u.norm() < 1e-14);
    }

    #[test]
    fn linear_ramp_is_reproduced_exactly() {
        let pair = unit_pair();
        let bc = outer_dirichlet(&pair, 1, |p, _| p[0] / 2.0);
        let sys = assemble(&pair.mesh, &OperatorKind::Laplace, None, &bc).unwrap();
        let u = solve(&sys).unwrap();
        for (i, p) in pair.mesh.nodes.iter().enumerate() {
            assert_relative_eq!(u[i], p[0] / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rigid_body_data_is_reproduced_exactly() {
        let pair = unit_pair();
        let rigid = |p: [f64; 2], c: usize| if c == 0 { 0.3 - 0.7 * p[1] } else { 0.7 * p[0] + 0.1 };
        let bc = outer_dirichlet(&pair, 2, rigid);
        let sys = assemble(&pair.mesh, &OperatorKind::elasticity(), None, &bc).unwrap();
        let u = solve(&sys).unwrap();
        for (i, p) in pair.mesh.nodes.iter().enumerate() {
            assert_relative_eq!(u[2 * i], rigid(*p, 0), epsilon = 1e-10);
            assert_relative_eq!(u[2 * i + 1], rigid(*p, 1), epsilon = 1e-10);
        }
    }

    #[test]
    fn solve_matches_dense_lu_oracle() {
        let pair = unit_pair();
        let bc = outer_dirichlet(&pair, 2, |p, c| {
            ((p[0] * 13.0 + p[1] * 7.0 + c as f64).sin()) * 0.5
        });
        let source = |p: [f64; 2]| [p[0] - p[1], p[0] * p[1]];
        let sys = assemble(&pair.mesh, &OperatorKind::elasticity(), Some(&source), &bc).unwrap();
        let u = solve(&sys).unwrap();
        let dense = sys.stiffness.to_dense();
        let lu = dense.lu();
        let u_ref = lu.solve(&sys.load).unwrap();
        assert!((u - &u_ref).norm() <= 1e-10 * u_ref.norm());
    }

    #[test]
    fn kernel_columns_are_annihilated_by_raw_operator() {
        let pair = unit_pair();
        for op in [OperatorKind::Laplace, OperatorKind::elasticity()] {
            let sys = assemble(&pair.mesh, &op, None, &BTreeMap::new()).unwrap();
            let kernel = kernel_basis(&pair.mesh, &op);
            assert_eq!(kernel.ncols(), op.kernel_dim());
            for j in 0..kernel.ncols() {
                let col = kernel.column(j).into_owned();
                let image = sys.raw.matvec(&col);
                assert!(
                    image.norm() <= 1e-10 * col.norm() * sys.raw.max_abs(),
                    "kernel column {j} not annihilated"
                );
            }
        }
    }

    #[test]
    fn missing_constraints_are_reported() {
        let pair = unit_pair();
        let sys = assemble(&pair.mesh, &OperatorKind::elasticity(), None, &BTreeMap::new())
            .unwrap();
        match solve(&sys) {
            Err(Error::NotPositiveDefinite(_)) => {}
            other => panic!("expected positivity error, got {other:?}"),
        }
    }

    #[test]
    fn gram_matrices_integrate_exactly() {
        let pair = unit_pair();
        for dpn in [1usize, 2] {
            let mass = assemble_gram(&pair.mesh, dpn, GramKind::Mass, None).unwrap();
            let n = pair.mesh.n_nodes() * dpn;
            let ones = DVector::from_element(n, 1.0);
            // total measure: area times number of components
            assert_relative_eq!(
                mass.quad_form(&ones, &ones),
                2.0 * dpn as f64,
                max_relative = 1e-12
            );
            let grad = assemble_gram(&pair.mesh, dpn, GramKind::Gradient, None).unwrap();
            assert!(grad.matvec(&ones).norm() < 1e-12);
            let h1 = assemble_gram(&pair.mesh, dpn, GramKind::H1, None).unwrap();
            let linear = DVector::from_fn(n, |i, _| pair.mesh.nodes[i / dpn][0]);
            let expect = mass.quad_form(&linear, &linear) + grad.quad_form(&linear, &linear);
            assert_relative_eq!(h1.quad_form(&linear, &linear), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn gram_over_element_range_restricts_the_domain() {
        let pair = unit_pair();
        let ones = DVector::from_element(pair.mesh.n_nodes(), 1.0);
        let first = assemble_gram(
            &pair.mesh,
            1,
            GramKind::Mass,
            Some(pair.component_elements(0)),
        )
        .unwrap();
        assert_relative_eq!(first.quad_form(&ones, &ones), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn trace_mass_measures_path_length() {
        let pair = unit_pair();
        let port = &pair.sets.port;
        for dpn in [1usize, 2] {
            let tm = trace_mass(&pair.mesh, port, dpn);
            let ones = DVector::from_element(port.len() * dpn, 1.0);
            assert_relative_eq!(
                (&tm * &ones).dot(&ones),
                1.0 * dpn as f64,
                max_relative = 1e-12
            );
            let emb = trace_mass_embedded(&pair.mesh, port, dpn, pair.mesh.n_nodes() * dpn);
            let all = DVector::from_element(pair.mesh.n_nodes() * dpn, 1.0);
            assert_relative_eq!(emb.quad_form(&all, &all), dpn as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_element_is_rejected() {
        let mut pair = unit_pair();
        // flip one quad's orientation
        pair.mesh.elements[0].swap(1, 3);
        let err = assemble(&pair.mesh, &OperatorKind::Laplace, None, &BTreeMap::new());
        match err {
            Err(Error::DegenerateElement { .. }) => {}
            other => panic!("expected degenerate element, got {other:?}"),
        }
    }
}
