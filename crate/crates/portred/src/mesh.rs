//! Structured quadrilateral meshes for rectangular components and their
//! port-compatible merging.
//!
//! A component is an axis-aligned rectangle meshed with an nx-by-ny tensor
//! grid of bilinear quads. Optional defects: a vertical slit (crack) realized
//! by node duplication along interior mesh lines, or a rectangular hole
//! realized by element removal. Components are chained left to right; the
//! shared vertical edges become ports and the free vertical ends become the
//! outer boundary.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Boundary role of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    /// Shared port between joined components.
    GammaIn,
    /// Outer vertical edges carrying boundary data.
    GammaOut,
    /// Essential (displacement/value) boundary.
    SigmaD,
    /// Natural (traction-free) boundary.
    SigmaN,
    /// Newly exposed defect surface (crack faces, hole ring).
    DefectBoundary,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::GammaIn => "gamma_in",
            Tag::GammaOut => "gamma_out",
            Tag::SigmaD => "sigma_d",
            Tag::SigmaN => "sigma_n",
            Tag::DefectBoundary => "defect_boundary",
        }
    }

    pub fn from_str_name(s: &str) -> Option<Tag> {
        match s {
            "gamma_in" => Some(Tag::GammaIn),
            "gamma_out" => Some(Tag::GammaOut),
            "sigma_d" => Some(Tag::SigmaD),
            "sigma_n" => Some(Tag::SigmaN),
            "defect_boundary" => Some(Tag::DefectBoundary),
            _ => None,
        }
    }
}

/// Which horizontal edge a crack starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrackEdge {
    Top,
    Bottom,
}

/// Geometric defect of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    /// Zero-width vertical slit from a horizontal edge, realized by node
    /// duplication. The slit must lie on an interior mesh line.
    Crack { from_edge: CrackEdge, position_fraction: f64, depth_fraction: f64 },
    /// Rectangular opening covering a whole block of elements strictly
    /// inside the component.
    Hole { center_fraction: [f64; 2], half_extent_fraction: [f64; 2] },
}

/// Blueprint of a rectangular component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<Defect>,
}

impl ComponentSpec {
    pub fn rectangle(origin: [f64; 2], width: f64, height: f64, nx: usize, ny: usize) -> Self {
        ComponentSpec { origin, width, height, nx, ny, defect: None }
    }

    pub fn with_defect(mut self, defect: Defect) -> Self {
        self.defect = Some(defect);
        self
    }
}

/// A meshed component (or merged chain of components).
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node indices per quad.
    pub elements: Vec<[usize; 4]>,
    pub tags: BTreeMap<Tag, BTreeSet<usize>>,
}

impl ComponentMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn tagged(&self, tag: Tag) -> impl Iterator<Item = usize> + '_ {
        self.tags.get(&tag).into_iter().flatten().copied()
    }

    pub fn has_tag(&self, node: usize, tag: Tag) -> bool {
        self.tags.get(&tag).is_some_and(|s| s.contains(&node))
    }

    fn add_tag(&mut self, node: usize, tag: Tag) {
        self.tags.entry(tag).or_default().insert(node);
    }

    fn remove_tag(&mut self, node: usize, tag: Tag) {
        if let Some(set) = self.tags.get_mut(&tag) {
            set.remove(&node);
            if set.is_empty() {
                self.tags.remove(&tag);
            }
        }
    }

    /// Nodes with the given tag whose first coordinate is within `tol` of `x`,
    /// sorted bottom to top.
    fn tagged_on_vertical_line(&self, tag: Tag, x: f64, tol: f64) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .tagged(tag)
            .filter(|&i| (self.nodes[i][0] - x).abs() <= tol)
            .collect();
        out.sort_by(|&a, &b| self.nodes[a][1].partial_cmp(&self.nodes[b][1]).unwrap());
        out
    }

    fn x_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.nodes {
            lo = lo.min(p[0]);
            hi = hi.max(p[0]);
        }
        (lo, hi)
    }

    fn geometric_tol(&self) -> f64 {
        let mut scale = 1.0f64;
        for p in &self.nodes {
            scale = scale.max(p[0].abs()).max(p[1].abs());
        }
        1e-9 * scale
    }

    /// Left (bottom-to-top) vertical outer edge nodes.
    pub fn left_edge(&self) -> Vec<usize> {
        let (lo, _) = self.x_range();
        self.tagged_on_vertical_line(Tag::GammaOut, lo, self.geometric_tol())
    }

    /// Right (bottom-to-top) vertical outer edge nodes.
    pub fn right_edge(&self) -> Vec<usize> {
        let (_, hi) = self.x_range();
        self.tagged_on_vertical_line(Tag::GammaOut, hi, self.geometric_tol())
    }
}

/// Node index sets of a joined pair, all at node (not DOF) granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSets {
    /// Non-port, non-outer, non-essential nodes of the first component.
    pub interior1: Vec<usize>,
    /// Same for the second component.
    pub interior2: Vec<usize>,
    /// Shared port nodes, sorted bottom to top.
    pub port: Vec<usize>,
    /// Left outer edge then right outer edge, each sorted bottom to top.
    pub outer: Vec<usize>,
    /// Nodes on the left outer edge only.
    pub outer_left: Vec<usize>,
    /// Nodes on the right outer edge only.
    pub outer_right: Vec<usize>,
    /// Essential-boundary nodes outside port and outer edges.
    pub dirichlet: Vec<usize>,
}

/// DOF index sets induced by [`NodeSets`] for a fixed number of DOFs per node.
///
/// Within each set, DOFs follow the node order with vector components
/// interleaved (node k contributes DOFs k·d .. k·d+d−1 in order).
#[derive(Debug, Clone, PartialEq)]
pub struct DofPartition {
    pub interior1: Vec<usize>,
    pub interior2: Vec<usize>,
    pub port: Vec<usize>,
    pub outer: Vec<usize>,
    pub dirichlet: Vec<usize>,
    pub n_dofs: usize,
    pub dofs_per_node: usize,
}

impl DofPartition {
    /// Every DOF not constrained by the outer edges or an essential boundary.
    pub fn free(&self) -> Vec<usize> {
        let mut free = Vec::with_capacity(
            self.interior1.len() + self.interior2.len() + self.port.len(),
        );
        free.extend_from_slice(&self.interior1);
        free.extend_from_slice(&self.interior2);
        free.extend_from_slice(&self.port);
        free.sort_unstable();
        free
    }
}

fn dofs_of(nodes: &[usize], d: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(nodes.len() * d);
    for &n in nodes {
        for c in 0..d {
            out.push(n * d + c);
        }
    }
    out
}

/// Two components merged on their shared vertical edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPairMesh {
    pub mesh: ComponentMesh,
    pub sets: NodeSets,
    /// Node count contributed by the first component (ids 0..nodes1).
    pub nodes1: usize,
    /// Elements 0..elements1 belong to the first component.
    pub elements1: usize,
}

impl ComponentPairMesh {
    pub fn dof_partition(&self, dofs_per_node: usize) -> DofPartition {
        DofPartition {
            interior1: dofs_of(&self.sets.interior1, dofs_per_node),
            interior2: dofs_of(&self.sets.interior2, dofs_per_node),
            port: dofs_of(&self.sets.port, dofs_per_node),
            outer: dofs_of(&self.sets.outer, dofs_per_node),
            dirichlet: dofs_of(&self.sets.dirichlet, dofs_per_node),
            n_dofs: self.mesh.n_nodes() * dofs_per_node,
            dofs_per_node,
        }
    }

    /// All node ids belonging to component `i` (0 or 1), port included.
    pub fn component_nodes(&self, i: usize) -> Vec<usize> {
        assert!(i < 2);
        if i == 0 {
            (0..self.nodes1).collect()
        } else {
            let mut out: Vec<usize> = self.sets.port.clone();
            out.extend(self.nodes1..self.mesh.n_nodes());
            out.sort_unstable();
            out
        }
    }

    /// Element index range of component `i`.
    pub fn component_elements(&self, i: usize) -> std::ops::Range<usize> {
        assert!(i < 2);
        if i == 0 {
            0..self.elements1
        } else {
            self.elements1..self.mesh.elements.len()
        }
    }
}

/// A chain of components merged on successive shared edges.
#[derive(Debug, Clone)]
pub struct ChainMesh {
    pub mesh: ComponentMesh,
    /// Interior port node lists, one per joint, each sorted bottom to top.
    pub ports: Vec<Vec<usize>>,
    /// Merged node id of each component's local nodes, per component.
    pub component_nodes: Vec<Vec<usize>>,
    /// Element index range per component.
    pub component_elements: Vec<(usize, usize)>,
    pub outer_left: Vec<usize>,
    pub outer_right: Vec<usize>,
}

fn validate_spec(spec: &ComponentSpec) -> Result<()> {
    if !(spec.width > 0.0) || !(spec.height > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "component extents must be positive, got {} x {}",
            spec.width, spec.height
        )));
    }
    if spec.nx == 0 || spec.ny == 0 {
        return Err(Error::InvalidGeometry("element counts must be at least 1".into()));
    }
    Ok(())
}

/// Build the mesh of a single component per its blueprint.
///
/// Boundary tags: vertical edges are `GammaOut`, horizontal edges `SigmaN`
/// (corners carry both), defect surfaces `SigmaN` plus `DefectBoundary`.
/// A crack duplicates the slit nodes (mouth included) so the two faces are
/// topologically disconnected; the crack tip keeps a single node.
pub fn build_component_mesh(spec: &ComponentSpec) -> Result<ComponentMesh> {
    validate_spec(spec)?;
    let (nx, ny) = (spec.nx, spec.ny);
    let hx = spec.width / nx as f64;
    let hy = spec.height / ny as f64;
    let node_id = |ix: usize, iy: usize| iy * (nx + 1) + ix;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            nodes.push([
                spec.origin[0] + ix as f64 * hx,
                spec.origin[1] + iy as f64 * hy,
            ]);
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    for ey in 0..ny {
        for ex in 0..nx {
            elements.push([
                node_id(ex, ey),
                node_id(ex + 1, ey),
                node_id(ex + 1, ey + 1),
                node_id(ex, ey + 1),
            ]);
        }
    }

    let mut mesh = ComponentMesh { nodes, elements, tags: BTreeMap::new() };
    for iy in 0..=ny {
        mesh.add_tag(node_id(0, iy), Tag::GammaOut);
        mesh.add_tag(node_id(nx, iy), Tag::GammaOut);
    }
    for ix in 0..=nx {
        mesh.add_tag(node_id(ix, 0), Tag::SigmaN);
        mesh.add_tag(node_id(ix, ny), Tag::SigmaN);
    }

    match &spec.defect {
        None => {}
        Some(Defect::Crack { from_edge, position_fraction, depth_fraction }) => {
            apply_crack(&mut mesh, spec, *from_edge, *position_fraction, *depth_fraction)?;
        }
        Some(Defect::Hole { center_fraction, half_extent_fraction }) => {
            apply_hole(&mut mesh, spec, *center_fraction, *half_extent_fraction)?;
        }
    }
    Ok(mesh)
}

fn snap_to_grid(fraction: f64, n: usize, what: &str) -> Result<usize> {
    let raw = fraction * n as f64;
    let snapped = raw.round();
    if (raw - snapped).abs() > 1e-9 * n as f64 {
        return Err(Error::InvalidGeometry(format!(
            "{what} at fraction {fraction} does not lie on a mesh line \
             ({raw} of {n} elements)"
        )));
    }
    Ok(snapped as usize)
}

fn apply_crack(
    mesh: &mut ComponentMesh,
    spec: &ComponentSpec,
    from_edge: CrackEdge,
    position_fraction: f64,
    depth_fraction: f64,
) -> Result<()> {
    let (nx, ny) = (spec.nx, spec.ny);
    if !(0.0 < position_fraction && position_fraction < 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "crack position fraction {position_fraction} must be strictly inside (0, 1)"
        )));
    }
    if !(0.0 < depth_fraction && depth_fraction < 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "crack depth fraction {depth_fraction} must be strictly inside (0, 1)"
        )));
    }
    let k = snap_to_grid(position_fraction, nx, "crack position")?;
    if k == 0 || k == nx {
        return Err(Error::InvalidGeometry(
            "crack position coincides with a vertical component edge".into(),
        ));
    }
    let depth = (depth_fraction * ny as f64).round() as usize;
    if depth == 0 {
        return Err(Error::InvalidGeometry(
            "crack depth resolves to zero mesh rows".into(),
        ));
    }
    if depth >= ny {
        return Err(Error::InvalidGeometry(
            "crack depth reaches the opposite edge; the component would split".into(),
        ));
    }
    let node_id = |ix: usize, iy: usize| iy * (nx + 1) + ix;

    // mesh rows crossed by the slit, mouth first; the last entry is the tip
    let path: Vec<usize> = match from_edge {
        CrackEdge::Top => (ny - depth..=ny).rev().collect(),
        CrackEdge::Bottom => (0..=depth).collect(),
    };
    let (duplicated, tip) = path.split_at(path.len() - 1);
    let tip_node = node_id(k, tip[0]);
    mesh.add_tag(tip_node, Tag::DefectBoundary);

    let mut replacement: BTreeMap<usize, usize> = BTreeMap::new();
    for &iy in duplicated {
        let old = node_id(k, iy);
        let new = mesh.nodes.len();
        mesh.nodes.push(mesh.nodes[old]);
        replacement.insert(old, new);
        for tag in [Tag::SigmaN, Tag::DefectBoundary] {
            mesh.add_tag(old, tag);
            mesh.add_tag(new, tag);
        }
        // the duplicate sits on the same outer tags as the original
        if mesh.has_tag(old, Tag::GammaOut) {
            mesh.add_tag(new, Tag::GammaOut);
        }
    }
    // elements right of the slit switch to the duplicated copies
    let element_rows: Vec<usize> = match from_edge {
        CrackEdge::Top => (ny - depth..ny).collect(),
        CrackEdge::Bottom => (0..depth).collect(),
    };
    for ey in element_rows {
        let e = ey * nx + k;
        for v in mesh.elements[e].iter_mut() {
            if let Some(&new) = replacement.get(v) {
                *v = new;
            }
        }
    }
    Ok(())
}

fn apply_hole(
    mesh: &mut ComponentMesh,
    spec: &ComponentSpec,
    center_fraction: [f64; 2],
    half_extent_fraction: [f64; 2],
) -> Result<()> {
    let (nx, ny) = (spec.nx, spec.ny);
    for f in center_fraction.iter().chain(half_extent_fraction.iter()) {
        if !f.is_finite() {
            return Err(Error::InvalidGeometry("hole fractions must be finite".into()));
        }
    }
    let c0 = snap_to_grid(center_fraction[0] - half_extent_fraction[0], nx, "hole left edge")?;
    let c1 = snap_to_grid(center_fraction[0] + half_extent_fraction[0], nx, "hole right edge")?;
    let r0 = snap_to_grid(center_fraction[1] - half_extent_fraction[1], ny, "hole bottom edge")?;
    let r1 = snap_to_grid(center_fraction[1] + half_extent_fraction[1], ny, "hole top edge")?;
    if c1 <= c0 || r1 <= r0 {
        return Err(Error::InvalidGeometry(
            "hole extent resolves to an empty element block".into(),
        ));
    }
    if c0 == 0 || c1 == nx || r0 == 0 || r1 == ny {
        return Err(Error::InvalidGeometry(
            "hole touches the component boundary".into(),
        ));
    }
    let node_id = |ix: usize, iy: usize| iy * (nx + 1) + ix;

    // ring nodes become a natural defect boundary
    for ix in c0..=c1 {
        for iy in [r0, r1] {
            mesh.add_tag(node_id(ix, iy), Tag::SigmaN);
            mesh.add_tag(node_id(ix, iy), Tag::DefectBoundary);
        }
    }
    for iy in r0 + 1..r1 {
        for ix in [c0, c1] {
            mesh.add_tag(node_id(ix, iy), Tag::SigmaN);
            mesh.add_tag(node_id(ix, iy), Tag::DefectBoundary);
        }
    }

    // drop elements of the block and nodes strictly inside it
    let mut removed_elements = vec![false; mesh.elements.len()];
    for ey in r0..r1 {
        for ex in c0..c1 {
            removed_elements[ey * nx + ex] = true;
        }
    }
    let mut removed_nodes = vec![false; mesh.nodes.len()];
    for iy in r0 + 1..r1 {
        for ix in c0 + 1..c1 {
            removed_nodes[node_id(ix, iy)] = true;
        }
    }
    let mut new_id = vec![usize::MAX; mesh.nodes.len()];
    let mut kept_nodes = Vec::with_capacity(mesh.nodes.len());
    for (i, &p) in mesh.nodes.iter().enumerate() {
        if !removed_nodes[i] {
            new_id[i] = kept_nodes.len();
            kept_nodes.push(p);
        }
    }
    let mut kept_elements = Vec::with_capacity(mesh.elements.len());
    for (e, quad) in mesh.elements.iter().enumerate() {
        if !removed_elements[e] {
            kept_elements.push(quad.map(|v| new_id[v]));
        }
    }
    let tags = mesh
        .tags
        .iter()
        .map(|(&tag, set)| {
            let renumbered: BTreeSet<usize> = set
                .iter()
                .filter(|&&n| !removed_nodes[n])
                .map(|&n| new_id[n])
                .collect();
            (tag, renumbered)
        })
        .filter(|(_, set)| !set.is_empty())
        .collect();
    mesh.nodes = kept_nodes;
    mesh.elements = kept_elements;
    mesh.tags = tags;
    Ok(())
}

/// Merge a left-to-right chain of component meshes on their shared vertical
/// edges. Edge node coordinates must match pairwise; shared nodes are unified
/// and retagged as ports.
pub fn join_chain(meshes: &[ComponentMesh]) -> Result<ChainMesh> {
    if meshes.is_empty() {
        return Err(Error::InvalidGeometry("cannot join an empty chain".into()));
    }
    let mut merged = meshes[0].clone();
    let mut component_nodes: Vec<Vec<usize>> = vec![(0..merged.n_nodes()).collect()];
    let mut component_elements = vec![(0usize, merged.elements.len())];
    let mut ports: Vec<Vec<usize>> = Vec::new();

    for (ci, next) in meshes.iter().enumerate().skip(1) {
        let tol = merged.geometric_tol().max(next.geometric_tol());
        let right = merged.right_edge();
        let left = next.left_edge();
        if right.len() != left.len() {
            return Err(Error::PortMismatch(format!(
                "component {} exposes {} edge nodes, component {} expects {}",
                ci - 1,
                right.len(),
                ci,
                left.len()
            )));
        }
        for (&a, &b) in right.iter().zip(&left) {
            let pa = merged.nodes[a];
            let pb = next.nodes[b];
            if (pa[0] - pb[0]).abs() > tol || (pa[1] - pb[1]).abs() > tol {
                return Err(Error::PortMismatch(format!(
                    "edge nodes differ at ({}, {}) vs ({}, {})",
                    pa[0], pa[1], pb[0], pb[1]
                )));
            }
        }
        // map the incoming mesh's nodes into the merged numbering
        let mut remap = vec![usize::MAX; next.n_nodes()];
        for (&a, &b) in right.iter().zip(&left) {
            remap[b] = a;
        }
        let base = merged.n_nodes();
        let mut fresh = 0usize;
        for (i, &p) in next.nodes.iter().enumerate() {
            if remap[i] == usize::MAX {
                remap[i] = base + fresh;
                fresh += 1;
                merged.nodes.push(p);
            }
        }
        let elem_start = merged.elements.len();
        for quad in &next.elements {
            merged.elements.push(quad.map(|v| remap[v]));
        }
        component_elements.push((elem_start, merged.elements.len()));
        component_nodes.push(next.nodes.iter().enumerate().map(|(i, _)| remap[i]).collect());
        for (&tag, set) in &next.tags {
            for &n in set {
                merged.add_tag(remap[n], tag);
            }
        }
        // the shared edge is now an interior port
        for &n in &right {
            merged.remove_tag(n, Tag::GammaOut);
            merged.add_tag(n, Tag::GammaIn);
        }
        ports.push(right);
    }

    let outer_left = merged.left_edge();
    let outer_right = merged.right_edge();
    Ok(ChainMesh {
        mesh: merged,
        ports,
        component_nodes,
        component_elements,
        outer_left,
        outer_right,
    })
}

/// Merge two components on their shared vertical edge and classify nodes.
pub fn join_pair(m1: &ComponentMesh, m2: &ComponentMesh) -> Result<ComponentPairMesh> {
    let chain = join_chain(&[m1.clone(), m2.clone()])?;
    let mesh = chain.mesh;
    let port = chain.ports.into_iter().next().unwrap();
    let outer_left = chain.outer_left;
    let outer_right = chain.outer_right;
    let mut outer = outer_left.clone();
    outer.extend_from_slice(&outer_right);

    let mut classified = vec![false; mesh.n_nodes()];
    for &n in port.iter().chain(&outer) {
        classified[n] = true;
    }
    let dirichlet: Vec<usize> = mesh
        .tagged(Tag::SigmaD)
        .filter(|&n| !classified[n])
        .collect();
    for &n in &dirichlet {
        classified[n] = true;
    }
    let nodes1 = m1.n_nodes();
    let in_first: BTreeSet<usize> = chain.component_nodes[0].iter().copied().collect();
    let mut interior1 = Vec::new();
    let mut interior2 = Vec::new();
    for n in 0..mesh.n_nodes() {
        if !classified[n] {
            if in_first.contains(&n) {
                interior1.push(n);
            } else {
                interior2.push(n);
            }
        }
    }
    let elements1 = chain.component_elements[0].1;
    Ok(ComponentPairMesh {
        mesh,
        sets: NodeSets {
            interior1,
            interior2,
            port,
            outer,
            outer_left,
            outer_right,
            dirichlet,
        },
        nodes1,
        elements1,
    })
}

/// Convenience: mesh both specs and join them.
pub fn build_pair(spec1: &ComponentSpec, spec2: &ComponentSpec) -> Result<ComponentPairMesh> {
    let m1 = build_component_mesh(spec1)?;
    let m2 = build_component_mesh(spec2)?;
    join_pair(&m1, &m2)
}
