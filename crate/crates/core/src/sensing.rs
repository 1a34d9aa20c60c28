//! Local-average sensors on disjoint rectangular blocks of cells.
//!
//! Sensor `i` averages over its block `R_i`: `l_i(u) = <omega_i, u>` with
//! `omega_i = 1_{R_i} / |R_i|`. Because blocks are disjoint, the functions
//! `psi_i = 1_{R_i} / sqrt|R_i|` are already an orthonormal basis of
//! `W_m = span{omega_i}`, and `<psi_i, u> = l_i(u) sqrt|R_i|`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Mesh};

/// Rectangle `[x0, x1] x [y0, y1]` tiled by the sensor grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorWindow {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl SensorWindow {
    pub fn whole(mesh: &Mesh) -> Self {
        SensorWindow {
            x0: 0.0,
            x1: mesh.extent_x(),
            y0: 0.0,
            y1: mesh.extent_y(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementSystem {
    mesh: Arc<Mesh>,
    grid: (usize, usize),
    window: SensorWindow,
    /// Cell indices per block, blocks ordered x-fastest.
    blocks: Vec<Vec<usize>>,
    areas: Vec<f64>,
}

/// Cell-boundary index of coordinate `x` on a grid of spacing `h`, if `x`
/// sits on one.
fn grid_line(x: f64, h: f64, ncells: usize) -> Option<usize> {
    let t = x / h;
    let r = t.round();
    if (t - r).abs() > 1e-9 || r < 0.0 || r > ncells as f64 {
        None
    } else {
        Some(r as usize)
    }
}

/// Sensors tiling the whole domain with an `sx x sy` grid.
pub fn build_sensors(mesh: &Arc<Mesh>, sx: usize, sy: usize) -> Result<MeasurementSystem> {
    build_sensors_in(mesh, sx, sy, SensorWindow::whole(mesh))
}

/// Sensors tiling `window` with an `sx x sy` grid. Every block edge must lie
/// on a mesh line so that no cell is shared between blocks.
pub fn build_sensors_in(
    mesh: &Arc<Mesh>,
    sx: usize,
    sy: usize,
    window: SensorWindow,
) -> Result<MeasurementSystem> {
    if sx == 0 || sy == 0 {
        return Err(Error::Config(format!("sensor grid {sx}x{sy} is empty")));
    }
    let w = window;
    if !(w.x0 < w.x1 && w.y0 < w.y1) || w.x0 < 0.0 || w.y0 < 0.0 {
        return Err(Error::Config(format!("invalid sensor window {w:?}")));
    }
    let lines = |lo: f64, hi: f64, k: usize, h: f64, n: usize, axis: &str| -> Result<Vec<usize>> {
        (0..=k)
            .map(|j| {
                let x = lo + (hi - lo) * j as f64 / k as f64;
                grid_line(x, h, n).ok_or_else(|| {
                    Error::Config(format!(
                        "sensor edge {axis} = {x} is not on a mesh line (spacing {h})"
                    ))
                })
            })
            .collect()
    };
    let xl = lines(w.x0, w.x1, sx, mesh.dx(), mesh.nx(), "x")?;
    let yl = lines(w.y0, w.y1, sy, mesh.dy(), mesh.ny(), "y")?;
    let mut blocks = Vec::with_capacity(sx * sy);
    for by in 0..sy {
        for bx in 0..sx {
            let cells: Vec<usize> = (yl[by]..yl[by + 1])
                .flat_map(|iy| (xl[bx]..xl[bx + 1]).map(move |ix| (ix, iy)))
                .map(|(ix, iy)| mesh.index(ix, iy))
                .collect();
            if cells.is_empty() {
                return Err(Error::Config(format!(
                    "sensor ({bx},{by}) covers no cells; the grid is finer than the mesh"
                )));
            }
            blocks.push(cells);
        }
    }
    let areas = blocks
        .iter()
        .map(|b| b.len() as f64 * mesh.cell_area())
        .collect();
    Ok(MeasurementSystem {
        mesh: mesh.clone(),
        grid: (sx, sy),
        window,
        blocks,
        areas,
    })
}

impl MeasurementSystem {
    pub fn m(&self) -> usize {
        self.blocks.len()
    }
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }
    pub fn window(&self) -> SensorWindow {
        self.window
    }
    pub fn subdomain(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }
    pub fn area(&self, i: usize) -> f64 {
        self.areas[i]
    }

    fn indicator(&self, i: usize, value: f64) -> Field {
        let mut v = vec![0.0; self.mesh.ncells()];
        for &c in &self.blocks[i] {
            v[c] = value;
        }
        Field::new(self.mesh.clone(), v).expect("finite indicator")
    }

    /// Riesz representer `omega_i`.
    pub fn representer(&self, i: usize) -> Field {
        self.indicator(i, 1.0 / self.areas[i])
    }

    /// Orthonormal basis function `psi_i`.
    pub fn basis_function(&self, i: usize) -> Field {
        self.indicator(i, 1.0 / self.areas[i].sqrt())
    }

    fn check_mesh(&self, u: &Field) -> Result<()> {
        if !self.mesh.same_grid(u.mesh()) {
            return Err(Error::Usage("field and sensors live on different meshes".into()));
        }
        Ok(())
    }

    /// Block means `y_i = l_i(u)`.
    pub fn observe(&self, u: &Field) -> Result<Vec<f64>> {
        self.check_mesh(u)?;
        let v = u.values();
        Ok(self
            .blocks
            .iter()
            .map(|b| b.iter().map(|&c| v[c]).sum::<f64>() / b.len() as f64)
            .collect())
    }

    /// Coordinates `<psi_i, u>` of the projection onto `W_m`.
    pub fn observe_psi(&self, u: &Field) -> Result<Vec<f64>> {
        Ok(self.to_psi(&self.observe(u)?))
    }

    pub fn to_psi(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.areas).map(|(y, a)| y * a.sqrt()).collect()
    }

    pub fn from_psi(&self, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.areas).map(|(c, a)| c / a.sqrt()).collect()
    }

    /// `sum_i c_i psi_i`.
    pub fn synthesize(&self, c: &[f64]) -> Result<Field> {
        if c.len() != self.m() {
            return Err(Error::Usage(format!(
                "expected {} coordinates, got {}",
                self.m(),
                c.len()
            )));
        }
        let mut v = vec![0.0; self.mesh.ncells()];
        for (i, b) in self.blocks.iter().enumerate() {
            let s = c[i] / self.areas[i].sqrt();
            for &cell in b {
                v[cell] += s;
            }
        }
        Field::new(self.mesh.clone(), v)
    }
}

pub fn observe(u: &Field, sensors: &MeasurementSystem) -> Result<Vec<f64>> {
    sensors.observe(u)
}

/// Adds a perturbation of Euclidean norm exactly `eps` in a uniformly random
/// direction. `y` is expected in psi-coordinates, where this norm is the
/// `W_m` norm.
pub fn perturb_observations(y: &[f64], eps: f64, seed: u64) -> Result<Vec<f64>> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("noise level must be >= 0, got {eps}")));
    }
    if eps == 0.0 || y.is_empty() {
        return Ok(y.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = loop {
        let d: Vec<f64> = (0..y.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-300 {
            break d.into_iter().map(|v| v / n).collect::<Vec<f64>>();
        }
    };
    Ok(y.iter().zip(dir).map(|(y, d)| y + eps * d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, inner_product, GeometryConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn mesh(nx: usize, ny: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(&GeometryConfig::default().with_resolution(nx, ny)).unwrap())
    }

    fn random_field(mesh: &Arc<Mesh>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..mesh.ncells()).map(|_| rng.gen_range(-1.0..2.0)).collect();
        Field::new(mesh.clone(), v).unwrap()
    }

    #[test]
    fn default_grid_has_54_disjoint_sensors_covering_the_domain() {
        let m = mesh(45, 48);
        let s = build_sensors(&m, 9, 6).unwrap();
        assert_eq!(s.m(), 54);
        let mut seen = vec![0; m.ncells()];
        for i in 0..s.m() {
            for &c in s.subdomain(i) {
                seen[c] += 1;
            }
        }
        assert!(seen.iter().all(|&k| k == 1));
        let total: f64 = (0..s.m()).map(|i| s.area(i)).sum();
        assert!((total - m.area()).abs() < 1e-9);
        for i in 0..s.m() {
            for j in 0..s.m() {
                let ip = inner_product(&s.basis_function(i), &s.basis_function(j)).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        // 50 cells cannot be cut into 9 equal blocks
        let m = mesh(50, 50);
        assert!(matches!(build_sensors(&m, 9, 6), Err(Error::Config(_))));
        assert!(matches!(build_sensors(&m, 0, 6), Err(Error::Config(_))));
        assert!(matches!(build_sensors(&m, 100, 1), Err(Error::Config(_))));
    }

    #[test]
    fn window_covers_only_its_cells() {
        let m = mesh(45, 50);
        let w = SensorWindow {
            x0: 0.0,
            x1: 15.0,
            y0: 0.0,
            y1: 15.0,
        };
        let s = build_sensors_in(&m, 9, 6, w).unwrap();
        assert_eq!(s.m(), 54);
        let total: f64 = (0..s.m()).map(|i| s.area(i)).sum();
        assert!((total - 225.0).abs() < 1e-9);
        for i in 0..s.m() {
            assert_eq!(s.subdomain(i).len(), 15);
            for &c in s.subdomain(i) {
                let (x, y) = m.cell_center(c);
                assert!(x < 15.0 && y < 15.0);
            }
        }
    }

    #[test]
    fn single_sensor_measures_the_domain_mean() {
        let m = mesh(10, 10);
        let s = build_sensors(&m, 1, 1).unwrap();
        let u = random_field(&m, 1);
        let mean = u.values().iter().sum::<f64>() / 100.0;
        assert!((s.observe(&u).unwrap()[0] - mean).abs() < 1e-14);
        let w = s.representer(0);
        assert!(w.values().iter().all(|&v| (v - 1.0 / m.area()).abs() < 1e-15));
    }

    #[test]
    fn observe_constant_and_basis_functions() {
        let m = mesh(45, 48);
        let s = build_sensors(&m, 9, 6).unwrap();
        let y = s.observe(&Field::constant(m.clone(), 3.5)).unwrap();
        assert!(y.iter().all(|&v| (v - 3.5).abs() < 1e-14));
        let y = s.observe_psi(&s.basis_function(0)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
        assert!(y[1..].iter().all(|&v| v.abs() < 1e-12));
        let raw = s.observe(&s.basis_function(0)).unwrap();
        assert!((raw[0] - 1.0 / s.area(0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn observe_matches_per_block_sums() {
        let m = mesh(45, 48);
        let s = build_sensors(&m, 9, 6).unwrap();
        let u = random_field(&m, 7);
        let y = s.observe(&u).unwrap();
        // blocks are 5x8 cells; walk them by coordinates
        for by in 0..6 {
            for bx in 0..9 {
                let mut sum = 0.0;
                for iy in by * 8..(by + 1) * 8 {
                    for ix in bx * 5..(bx + 1) * 5 {
                        sum += u.values()[iy * 45 + ix];
                    }
                }
                assert!((y[by * 9 + bx] - sum / 40.0).abs() < 1e-13);
                let via_representer = inner_product(&s.representer(by * 9 + bx), &u).unwrap();
                assert!((via_representer - sum / 40.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let m = mesh(45, 48);
        let s = build_sensors(&m, 9, 6).unwrap();
        let u = random_field(&m, 3);
        let c = s.observe_psi(&u).unwrap();
        let pu = s.synthesize(&c).unwrap();
        let c2 = s.observe_psi(&pu).unwrap();
        for (a, b) in c.iter().zip(&c2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.from_psi(&c).len(), 54);
    }

    #[test]
    fn mesh_mismatch_is_rejected() {
        let s = build_sensors(&mesh(10, 10), 2, 2).unwrap();
        let u = Field::constant(mesh(20, 20), 1.0);
        assert!(matches!(s.observe(&u), Err(Error::Usage(_))));
    }

    #[test]
    fn perturbation_has_exact_norm_and_is_reproducible() {
        let y: Vec<f64> = (0..54).map(|i| i as f64 * 0.1).collect();
        assert_eq!(perturb_observations(&y, 0.0, 5).unwrap(), y);
        for eps in [1e-3, 1e-2, 0.7] {
            let a = perturb_observations(&y, eps, 42).unwrap();
            let b = perturb_observations(&y, eps, 42).unwrap();
            assert_eq!(a, b);
            let d = a.iter().zip(&y).map(|(a, y)| (a - y).powi(2)).sum::<f64>().sqrt();
            assert!((d - eps).abs() < 1e-12);
            assert_ne!(a, perturb_observations(&y, eps, 43).unwrap());
        }
        assert!(matches!(perturb_observations(&y, -1e-3, 1), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        /// A representer perturbed by at most rho changes the reading by at most rho ||u||.
        #[test]
        fn sensor_modeling_error_is_bounded(seed in any::<u64>(), rho in 0.0f64..0.5, i in 0usize..6) {
            let m = mesh(10, 12);
            let s = build_sensors(&m, 2, 3).unwrap();
            let u = random_field(&m, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let dir = random_field(&m, rng.gen());
            let scale = rng.gen_range(0.0..=1.0) * rho / dir.norm();
            let w = s.representer(i);
            let w_tilde = w.add_scaled(scale, &dir).unwrap();
            let dist = w_tilde.add_scaled(-1.0, &w).unwrap().norm();
            prop_assert!(dist <= rho * (1.0 + 1e-12));
            let diff = inner_product(&w_tilde, &u).unwrap() - inner_product(&w, &u).unwrap();
            prop_assert!(diff.abs() <= rho * u.norm() * (1.0 + 1e-12) + 1e-15);
        }
    }
}
