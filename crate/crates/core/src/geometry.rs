//! Reactor cross-section geometry: a structured 2D grid over the rectangle
//! `[0, extent_x] x [0, extent_y]`, the per-cell region map, boundary tags and
//! the cell-centred L2 structure shared by every other module.
//!
//! Fields are piecewise constant on cells, so `<f, g> = sum_i f_i g_i |cell|`
//! is the exact L2 inner product of the represented functions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric tolerance when checking region boxes against the domain.
const GEOM_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Reflective,
    Vacuum,
}

/// Boundary condition per side of the rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryTags {
    pub xmin: BoundaryKind,
    pub xmax: BoundaryKind,
    pub ymin: BoundaryKind,
    pub ymax: BoundaryKind,
}

impl BoundaryTags {
    pub fn all(kind: BoundaryKind) -> Self {
        BoundaryTags {
            xmin: kind,
            xmax: kind,
            ymin: kind,
            ymax: kind,
        }
    }
}

impl Default for BoundaryTags {
    /// Reflection on the symmetry planes `x = 0` and `y = 0`, vacuum outside.
    fn default() -> Self {
        BoundaryTags {
            xmin: BoundaryKind::Reflective,
            xmax: BoundaryKind::Vacuum,
            ymin: BoundaryKind::Reflective,
            ymax: BoundaryKind::Vacuum,
        }
    }
}

/// Material region label. The three benchmark regions have dedicated
/// variants; anything else is carried by name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum RegionId {
    Core,
    Reflector,
    Void,
    Named(String),
}

impl RegionId {
    pub fn parse(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "core" => RegionId::Core,
            "reflector" => RegionId::Reflector,
            "void" => RegionId::Void,
            _ => RegionId::Named(name.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            RegionId::Core => "core",
            RegionId::Reflector => "reflector",
            RegionId::Void => "void",
            RegionId::Named(s) => s,
        }
    }
}

impl From<String> for RegionId {
    fn from(s: String) -> Self {
        RegionId::parse(&s)
    }
}

impl From<RegionId> for String {
    fn from(r: RegionId) -> Self {
        r.name().to_string()
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned box `[x0, x1] x [y0, y1]` assigned to a region. When boxes
/// overlap, the higher `priority` wins; equal priorities are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub name: String,
    #[serde(rename = "box")]
    pub bounds: [f64; 4],
    #[serde(default)]
    pub priority: i32,
}

impl RegionBox {
    pub fn new(name: &str, bounds: [f64; 4]) -> Self {
        RegionBox {
            name: name.to_string(),
            bounds,
            priority: 0,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, x1, y0, y1] = self.bounds;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    fn overlap_area(&self, other: &RegionBox) -> f64 {
        let [a0, a1, b0, b1] = self.bounds;
        let [c0, c1, d0, d1] = other.bounds;
        let w = a1.min(c1) - a0.max(c0);
        let h = b1.min(d1) - b0.max(d0);
        if w > GEOM_EPS && h > GEOM_EPS {
            w * h
        } else {
            0.0
        }
    }
}

fn default_background() -> String {
    "reflector".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub extent_x: f64,
    pub extent_y: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub regions: Vec<RegionBox>,
    /// Region for cells not covered by any box.
    #[serde(default = "default_background")]
    pub background: String,
    #[serde(default)]
    pub bc: BoundaryTags,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            extent_x: 25.0,
            extent_y: 25.0,
            nx: 50,
            ny: 50,
            regions: vec![
                RegionBox::new("core", [0.0, 15.0, 0.0, 15.0]),
                RegionBox::new("void", [15.0, 20.0, 0.0, 5.0]),
            ],
            background: default_background(),
            bc: BoundaryTags::default(),
        }
    }
}

impl GeometryConfig {
    pub fn with_resolution(mut self, nx: usize, ny: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self
    }

    /// A single-region rectangle.
    pub fn homogeneous(extent_x: f64, extent_y: f64, nx: usize, ny: usize, region: &str) -> Self {
        GeometryConfig {
            extent_x,
            extent_y,
            nx,
            ny,
            regions: Vec::new(),
            background: region.to_string(),
            bc: BoundaryTags::default(),
        }
    }

    pub fn with_bc(mut self, bc: BoundaryTags) -> Self {
        self.bc = bc;
        self
    }
}

/// Structured grid with a region per cell. Cell `(ix, iy)` has linear index
/// `iy * nx + ix` (row-major, x fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    extent_x: f64,
    extent_y: f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    cell_area: f64,
    regions: Vec<RegionId>,
    region_map: Vec<usize>,
    bc: BoundaryTags,
}

pub fn build_mesh(cfg: &GeometryConfig) -> Result<Mesh> {
    if !(cfg.extent_x > 0.0 && cfg.extent_y > 0.0)
        || !cfg.extent_x.is_finite()
        || !cfg.extent_y.is_finite()
    {
        return Err(Error::Config(format!(
            "domain extents must be positive, got {} x {}",
            cfg.extent_x, cfg.extent_y
        )));
    }
    if cfg.nx < 2 || cfg.ny < 2 {
        return Err(Error::Config(format!(
            "need at least 2 cells per direction, got {} x {}",
            cfg.nx, cfg.ny
        )));
    }
    for b in &cfg.regions {
        let [x0, x1, y0, y1] = b.bounds;
        let inside = x0 >= -GEOM_EPS
            && y0 >= -GEOM_EPS
            && x1 <= cfg.extent_x + GEOM_EPS
            && y1 <= cfg.extent_y + GEOM_EPS;
        if !(x0 < x1 && y0 < y1) || !inside {
            return Err(Error::Config(format!(
                "region box '{}' {:?} is empty or leaves the domain",
                b.name, b.bounds
            )));
        }
    }
    for (i, a) in cfg.regions.iter().enumerate() {
        for b in &cfg.regions[i + 1..] {
            let same_region = RegionId::parse(&a.name) == RegionId::parse(&b.name);
            if !same_region && a.priority == b.priority && a.overlap_area(b) > 0.0 {
                return Err(Error::Config(format!(
                    "region boxes '{}' and '{}' overlap with equal priority {}",
                    a.name, b.name, a.priority
                )));
            }
        }
    }

    let mut regions: Vec<RegionId> = Vec::new();
    let mut intern = |id: RegionId| -> usize {
        match regions.iter().position(|r| *r == id) {
            Some(i) => i,
            None => {
                regions.push(id);
                regions.len() - 1
            }
        }
    };
    let box_ids: Vec<usize> = cfg
        .regions
        .iter()
        .map(|b| intern(RegionId::parse(&b.name)))
        .collect();
    let background = intern(RegionId::parse(&cfg.background));

    let dx = cfg.extent_x / cfg.nx as f64;
    let dy = cfg.extent_y / cfg.ny as f64;
    let mut region_map = Vec::with_capacity(cfg.nx * cfg.ny);
    for iy in 0..cfg.ny {
        let y = (iy as f64 + 0.5) * dy;
        for ix in 0..cfg.nx {
            let x = (ix as f64 + 0.5) * dx;
            let winner = cfg
                .regions
                .iter()
                .zip(&box_ids)
                .filter(|(b, _)| b.contains(x, y))
                .max_by_key(|(b, _)| b.priority)
                .map(|(_, &id)| id);
            region_map.push(winner.unwrap_or(background));
        }
    }

    let used: Vec<bool> = (0..regions.len())
        .map(|r| region_map.contains(&r))
        .collect();
    if used.iter().any(|u| !u) {
        // Drop regions that no cell center landed in and renumber.
        let mut remap = vec![usize::MAX; regions.len()];
        let mut kept = Vec::new();
        for (i, r) in regions.into_iter().enumerate() {
            if used[i] {
                remap[i] = kept.len();
                kept.push(r);
            }
        }
        regions = kept;
        for r in &mut region_map {
            *r = remap[*r];
        }
    }

    Ok(Mesh {
        extent_x: cfg.extent_x,
        extent_y: cfg.extent_y,
        nx: cfg.nx,
        ny: cfg.ny,
        dx,
        dy,
        cell_area: dx * dy,
        regions,
        region_map,
        bc: cfg.bc,
    })
}

impl Mesh {
    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }
    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }
    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }
    pub fn area(&self) -> f64 {
        self.extent_x * self.extent_y
    }
    pub fn ncells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn bc(&self) -> BoundaryTags {
        self.bc
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let ix = cell % self.nx;
        let iy = cell / self.nx;
        ((ix as f64 + 0.5) * self.dx, (iy as f64 + 0.5) * self.dy)
    }

    /// Distinct regions present on the mesh.
    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    /// Per-cell index into [`Mesh::regions`].
    pub fn region_map(&self) -> &[usize] {
        &self.region_map
    }

    pub fn region_of(&self, cell: usize) -> &RegionId {
        &self.regions[self.region_map[cell]]
    }

    /// Same grid (extents, resolution); region maps may differ.
    pub fn same_grid(&self, other: &Mesh) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.extent_x == other.extent_x
            && self.extent_y == other.extent_y
    }
}

/// Cell-centred scalar function on a mesh.
#[derive(Clone, Debug)]
pub struct Field {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.ncells() {
            return Err(Error::Usage(format!(
                "field has {} values but mesh has {} cells",
                values.len(),
                mesh.ncells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite field value {} at cell {i}",
                values[i]
            )));
        }
        Ok(Field { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.ncells();
        Field {
            mesh,
            values: vec![0.0; n],
        }
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.ncells();
        Field {
            mesh,
            values: vec![c; n],
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.values, &self.values) * self.mesh.cell_area).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &Field) -> Result<Field> {
        check_same(self, other)?;
        Ok(Field {
            mesh: self.mesh.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        })
    }

    /// Copy scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Field> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Degenerate("cannot normalize the zero field".into()));
        }
        Ok(self.scaled(1.0 / n))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_same(f: &Field, g: &Field) -> Result<()> {
    if Arc::ptr_eq(&f.mesh, &g.mesh) || f.mesh.same_grid(&g.mesh) {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "fields live on different meshes ({}x{} vs {}x{})",
            f.mesh.nx, f.mesh.ny, g.mesh.nx, g.mesh.ny
        )))
    }
}

/// Midpoint-quadrature L2 inner product `sum_i f_i g_i |cell|`.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    check_same(f, g)?;
    Ok(dot(&f.values, &g.values) * f.mesh.cell_area)
}

/// `||u - v|| / ||u||`.
pub fn relative_l2_error(u: &Field, v: &Field) -> Result<f64> {
    check_same(u, v)?;
    let nu = u.norm();
    if nu == 0.0 {
        return Err(Error::Degenerate(
            "reference field has zero norm".into(),
        ));
    }
    let diff: f64 = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((diff * u.mesh.cell_area).sqrt() / nu)
}
