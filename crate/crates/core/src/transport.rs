//! Two-group discrete-ordinates transport criticality solver on the 2D mesh.
//!
//! Angles: product Gauss (polar) x Chebyshev (azimuthal) quadrature on the
//! upper hemisphere, each point standing for itself and its mirror below the
//! plane, so the weights sum to 4 pi. Space: step (upwind) or diamond
//! finite volumes swept cell by cell along each direction. Vacuum sides get
//! zero inflow; reflective sides feed the mirrored outgoing flux back in.
//!
//! Each outer (power) iteration solves a fixed-source problem per group.
//! The within-group problem `x = T x + b` (scalar flux plus reflected
//! boundary fluxes) is solved either by plain source iteration or by GMRES
//! on `(I - T) x = b`, where one application of `T` is one transport sweep.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::{normalized_power, ToleranceConfig};
use crate::error::{Error, LastIterate, Result};
use crate::geometry::{BoundaryKind, Field, Mesh};
use crate::linalg::gmres;
use crate::materials::{CrossSectionSet, GROUPS};

const FOUR_PI: f64 = 4.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    pub ox: f64,
    pub oy: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct AngularQuadrature {
    order: usize,
    directions: Vec<Direction>,
    mirror_x: Vec<usize>,
    mirror_y: Vec<usize>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n and its derivative by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrant sign pairs in sweep order. With reflection on the low sides and
/// vacuum on the high sides this order lets every reflected inflow come from
/// a direction already swept.
const QUADRANTS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];

pub fn build_quadrature(order: usize) -> Result<AngularQuadrature> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::Domain(format!(
            "S_N order must be even and at least 2, got {order}"
        )));
    }
    let (nodes, weights) = gauss_legendre(order);
    let half = order / 2;
    // positive polar cosines, ascending: level 0 is closest to the xy-plane
    let levels: Vec<(f64, f64)> = (half..order).map(|i| (nodes[i], weights[i])).collect();
    let mut local = Vec::new();
    for (l, &(xi, w)) in levels.iter().enumerate() {
        let n_az = half - l;
        let sin_theta = (1.0 - xi * xi).sqrt();
        for j in 0..n_az {
            let phi = (j as f64 + 0.5) * (PI / 2.0) / n_az as f64;
            // factor 2 folds the lower hemisphere onto the upper one
            let weight = 2.0 * w * (PI / 2.0) / n_az as f64;
            local.push((sin_theta * phi.cos(), sin_theta * phi.sin(), weight));
        }
    }
    let per = local.len();
    let mut directions = Vec::with_capacity(4 * per);
    for &(sx, sy) in &QUADRANTS {
        for &(cx, cy, w) in &local {
            directions.push(Direction {
                ox: sx * cx,
                oy: sy * cy,
                weight: w,
            });
        }
    }
    let quadrant_of = |sx: f64, sy: f64| {
        QUADRANTS
            .iter()
            .position(|&(a, b)| a == sx && b == sy)
            .unwrap()
    };
    let mut mirror_x = vec![0; directions.len()];
    let mut mirror_y = vec![0; directions.len()];
    for (q, &(sx, sy)) in QUADRANTS.iter().enumerate() {
        for k in 0..per {
            mirror_x[q * per + k] = quadrant_of(-sx, sy) * per + k;
            mirror_y[q * per + k] = quadrant_of(sx, -sy) * per + k;
        }
    }
    Ok(AngularQuadrature {
        order,
        directions,
        mirror_x,
        mirror_y,
    })
}

impl AngularQuadrature {
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }
    pub fn len(&self) -> usize {
        self.directions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
    /// Direction with the x-component reversed.
    pub fn mirror_x(&self, d: usize) -> usize {
        self.mirror_x[d]
    }
    pub fn mirror_y(&self, d: usize) -> usize {
        self.mirror_y[d]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialScheme {
    /// Fully upwinded; positive.
    #[default]
    Step,
    /// Second order, may go negative in thick cells.
    Diamond,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    #[default]
    Krylov,
    SourceIteration,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportOptions {
    pub scheme: SpatialScheme,
    pub inner: InnerSolver,
    /// Relative tolerance of the within-group solve.
    pub inner_tol: f64,
    pub max_inner: usize,
    pub gmres_restart: usize,
    /// Keep per-direction cell fluxes of the converged state.
    pub keep_angular: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            scheme: SpatialScheme::Step,
            inner: InnerSolver::Krylov,
            inner_tol: 1e-9,
            max_inner: 500,
            gmres_restart: 30,
            keep_angular: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub k_eff: f64,
    /// `int psi^g dOmega` per cell, scaled so the power map has unit norm.
    pub scalar_flux: [Field; GROUPS],
    /// Reflected-inflow boundary state, same scaling as the scalar flux.
    pub boundary: [Vec<f64>; GROUPS],
    /// `psi[d * ncells + cell]` per group when requested.
    pub angular_flux: Option<[Vec<f64>; GROUPS]>,
    pub iterations: usize,
    /// `|k_n - k_{n-1}|` at the last outer iteration.
    pub residual: f64,
}

/// Boundary currents accumulated during a sweep (per unit depth).
#[derive(Clone, Copy, Debug, Default)]
pub struct Leakage {
    pub outflow: f64,
    pub inflow: f64,
}

impl Leakage {
    pub fn net(&self) -> f64 {
        self.outflow - self.inflow
    }
}

/// Per-group neutron balance of a converged state, integrated over the mesh.
#[derive(Clone, Copy, Debug)]
pub struct GroupBalance {
    /// Fission source over k plus in-scatter from the other group.
    pub production: f64,
    /// Absorption plus out-scatter, `(Sigma_t - Sigma_s^{gg}) phi`.
    pub removal: f64,
    pub net_leakage: f64,
}

impl GroupBalance {
    pub fn relative_residual(&self) -> f64 {
        (self.production - self.removal - self.net_leakage).abs() / self.production.abs()
    }
}

pub struct TransportProblem<'q> {
    mesh: Arc<Mesh>,
    quad: &'q AngularQuadrature,
    opts: TransportOptions,
    sigma_t: [Vec<f64>; GROUPS],
    /// `scatter[from][to][cell]`
    scatter: [[Vec<f64>; GROUPS]; GROUPS],
    nu_sigma_f: [Vec<f64>; GROUPS],
    kappa_sigma_f: [Vec<f64>; GROUPS],
    chi: [Vec<f64>; GROUPS],
}

impl<'q> TransportProblem<'q> {
    pub fn new(
        xs: &CrossSectionSet,
        mesh: &Arc<Mesh>,
        quad: &'q AngularQuadrature,
        opts: TransportOptions,
    ) -> Result<Self> {
        if quad.is_empty() {
            return Err(Error::Usage("empty angular quadrature".into()));
        }
        if !(opts.inner_tol > 0.0) || opts.max_inner == 0 {
            return Err(Error::Config(format!("invalid inner iteration settings {opts:?}")));
        }
        let table = xs.validate_for_transport(mesh)?;
        let per_cell = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
            mesh.region_map().iter().map(|&r| f(r)).collect()
        };
        Ok(TransportProblem {
            mesh: mesh.clone(),
            quad,
            opts,
            sigma_t: [0, 1].map(|g| per_cell(&|r| table[r].sigma_t[g])),
            scatter: [0, 1].map(|from| [0, 1].map(|to| per_cell(&|r| table[r].scatter[from][to]))),
            nu_sigma_f: [0, 1].map(|g| per_cell(&|r| table[r].nu_sigma_f[g])),
            kappa_sigma_f: [0, 1].map(|g| per_cell(&|r| table[r].kappa_sigma_f[g])),
            chi: [0, 1].map(|g| per_cell(&|r| table[r].chi[g])),
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Length of the boundary state vector: per direction, one inflow value
    /// per row on its entering x-side, then one per column on its entering y-side.
    pub fn boundary_len(&self) -> usize {
        self.quad.len() * (self.mesh.nx() + self.mesh.ny())
    }

    pub fn inflow_x_index(&self, d: usize, iy: usize) -> usize {
        d * (self.mesh.nx() + self.mesh.ny()) + iy
    }

    pub fn inflow_y_index(&self, d: usize, ix: usize) -> usize {
        d * (self.mesh.nx() + self.mesh.ny()) + self.mesh.ny() + ix
    }

    /// One transport sweep of group `g` for the isotropic source `q`
    /// (per steradian) and boundary inflow `b_in`. Writes the scalar flux to
    /// `phi` and the reflected inflow for the next sweep to `b_out`.
    pub fn sweep(
        &self,
        g: usize,
        q: &[f64],
        b_in: &[f64],
        phi: &mut [f64],
        b_out: &mut [f64],
        mut leakage: Option<&mut Leakage>,
        mut angular: Option<&mut [f64]>,
    ) {
        let mesh = &*self.mesh;
        let (nx, ny) = (mesh.nx(), mesh.ny());
        let (dx, dy) = (mesh.dx(), mesh.dy());
        let bc = mesh.bc();
        let sigma_t = &self.sigma_t[g];
        let diamond = self.opts.scheme == SpatialScheme::Diamond;
        phi.iter_mut().for_each(|v| *v = 0.0);
        b_out.iter_mut().for_each(|v| *v = 0.0);
        let mut col = vec![0.0; nx];

        for (d, dir) in self.quad.directions().iter().enumerate() {
            let ax = dir.ox.abs() / dx;
            let ay = dir.oy.abs() / dy;
            let w = dir.weight;
            let right = dir.ox > 0.0;
            let up = dir.oy > 0.0;
            for ix in 0..nx {
                col[ix] = b_in[self.inflow_y_index(d, ix)];
            }
            if let Some(l) = leakage.as_deref_mut() {
                let in_x: f64 = (0..ny).map(|iy| b_in[self.inflow_x_index(d, iy)]).sum();
                let in_y: f64 = col.iter().sum();
                l.inflow += w * (dir.ox.abs() * dy * in_x + dir.oy.abs() * dx * in_y);
            }
            let exit_x = if right { bc.xmax } else { bc.xmin };
            let exit_y = if up { bc.ymax } else { bc.ymin };
            let mx = self.quad.mirror_x(d);
            let my = self.quad.mirror_y(d);
            let mut out_x_sum = 0.0;

            for jy in 0..ny {
                let iy = if up { jy } else { ny - 1 - jy };
                let mut px = b_in[self.inflow_x_index(d, iy)];
                let row = iy * nx;
                for jx in 0..nx {
                    let ix = if right { jx } else { nx - 1 - jx };
                    let c = row + ix;
                    let py = col[ix];
                    let psi = if diamond {
                        let psi = (q[c] + 2.0 * (ax * px + ay * py)) / (sigma_t[c] + 2.0 * (ax + ay));
                        px = 2.0 * psi - px;
                        col[ix] = 2.0 * psi - py;
                        psi
                    } else {
                        let psi = (q[c] + ax * px + ay * py) / (sigma_t[c] + ax + ay);
                        px = psi;
                        col[ix] = psi;
                        psi
                    };
                    phi[c] += w * psi;
                    if let Some(a) = angular.as_deref_mut() {
                        a[d * nx * ny + c] = psi;
                    }
                }
                out_x_sum += px;
                if exit_x == BoundaryKind::Reflective {
                    b_out[self.inflow_x_index(mx, iy)] = px;
                }
            }
            if exit_y == BoundaryKind::Reflective {
                for ix in 0..nx {
                    b_out[self.inflow_y_index(my, ix)] = col[ix];
                }
            }
            if let Some(l) = leakage.as_deref_mut() {
                let out_y: f64 = col.iter().sum();
                l.outflow += w * (dir.ox.abs() * dy * out_x_sum + dir.oy.abs() * dx * out_y);
            }
        }
    }

    /// Solves the within-group problem for external isotropic source `ext`
    /// (total, not per steradian), starting from `phi` / `bnd`.
    fn solve_group(
        &self,
        g: usize,
        ext: &[f64],
        phi: &mut Vec<f64>,
        bnd: &mut Vec<f64>,
    ) -> Result<usize> {
        let n = self.mesh.ncells();
        let nb = self.boundary_len();
        let within = &self.scatter[g][g];
        match self.opts.inner {
            InnerSolver::SourceIteration => {
                let mut q = vec![0.0; n];
                let mut new_phi = vec![0.0; n];
                let mut new_bnd = vec![0.0; nb];
                for it in 1..=self.opts.max_inner {
                    for c in 0..n {
                        q[c] = (ext[c] + within[c] * phi[c]) / FOUR_PI;
                    }
                    self.sweep(g, &q, bnd, &mut new_phi, &mut new_bnd, None, None);
                    let scale = new_phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let change = phi
                        .iter()
                        .zip(&new_phi)
                        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    std::mem::swap(phi, &mut new_phi);
                    std::mem::swap(bnd, &mut new_bnd);
                    if scale == 0.0 || change <= self.opts.inner_tol * scale {
                        return Ok(it);
                    }
                }
                // capped: the outer iteration decides convergence
                log::debug!(
                    "source iteration for group {} stopped at the {}-sweep cap",
                    g + 1,
                    self.opts.max_inner
                );
                Ok(self.opts.max_inner)
            }
            InnerSolver::Krylov => {
                let q_ext: Vec<f64> = ext.iter().map(|v| v / FOUR_PI).collect();
                let mut rhs = vec![0.0; n + nb];
                {
                    let zero_bnd = vec![0.0; nb];
                    let (rp, rb) = rhs.split_at_mut(n);
                    self.sweep(g, &q_ext, &zero_bnd, rp, rb, None, None);
                }
                let mut x = Vec::with_capacity(n + nb);
                x.extend_from_slice(phi);
                x.extend_from_slice(bnd);
                let mut q = vec![0.0; n];
                let apply = |v: &[f64], out: &mut [f64]| {
                    let (vp, vb) = v.split_at(n);
                    for c in 0..n {
                        q[c] = within[c] * vp[c] / FOUR_PI;
                    }
                    let (op, ob) = out.split_at_mut(n);
                    self.sweep(g, &q, vb, op, ob, None, None);
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o = vi - *o;
                    }
                };
                let stats = gmres(
                    apply,
                    &rhs,
                    &mut x,
                    self.opts.inner_tol,
                    self.opts.gmres_restart,
                    self.opts.max_inner,
                )
                .map_err(|e| e.context(format!("within-group solve, group {}", g + 1)))?;
                phi.copy_from_slice(&x[..n]);
                bnd.copy_from_slice(&x[n..]);
                Ok(stats.iterations)
            }
        }
    }

    fn fission_density(&self, phi: &[Vec<f64>; GROUPS]) -> Vec<f64> {
        (0..self.mesh.ncells())
            .map(|c| self.nu_sigma_f[0][c] * phi[0][c] + self.nu_sigma_f[1][c] * phi[1][c])
            .collect()
    }

    fn has_upscatter(&self) -> bool {
        self.scatter[1][0].iter().any(|&v| v != 0.0)
    }

    /// One outer step: group solves with the fission source of `phi` frozen.
    /// Returns the unnormalized new fission integral.
    fn outer_step(
        &self,
        k: f64,
        phi: &mut [Vec<f64>; GROUPS],
        bnd: &mut [Vec<f64>; GROUPS],
    ) -> Result<f64> {
        let n = self.mesh.ncells();
        let fission = self.fission_density(phi);
        let upscatter = self.has_upscatter();
        let mut passes = 0;
        loop {
            let before = phi.clone();
            for g in 0..GROUPS {
                let other = 1 - g;
                let ext: Vec<f64> = (0..n)
                    .map(|c| self.chi[g][c] * fission[c] / k + self.scatter[other][g][c] * phi[other][c])
                    .collect();
                let (pg, bg) = (&mut phi[g], &mut bnd[g]);
                self.solve_group(g, &ext, pg, bg)?;
            }
            passes += 1;
            if !upscatter || passes >= 200 || max_rel_change(&before, phi) < self.opts.inner_tol {
                break;
            }
        }
        Ok(self.fission_density(phi).iter().sum::<f64>() * self.mesh.cell_area())
    }

    pub fn solve(&self, tol: &ToleranceConfig) -> Result<TransportSolution> {
        let n = self.mesh.ncells();
        let nb = self.boundary_len();
        let mut phi = [vec![1.0; n], vec![1.0; n]];
        let mut bnd = [vec![0.0; nb], vec![0.0; nb]];
        self.iterate(tol, &mut phi, &mut bnd, 1.0)
    }

    /// Power iteration from a given starting state (flux, boundary, k).
    pub fn iterate(
        &self,
        tol: &ToleranceConfig,
        phi: &mut [Vec<f64>; GROUPS],
        bnd: &mut [Vec<f64>; GROUPS],
        k0: f64,
    ) -> Result<TransportSolution> {
        tol.check()?;
        let vol = self.mesh.cell_area();
        let total = self.fission_density(phi).iter().sum::<f64>() * vol;
        if !(total > 0.0) {
            return Err(Error::NoEigenproblem("zero fission source".into()));
        }
        scale_state(phi, bnd, 1.0 / total);
        let mut k = k0;
        let mut dk = f64::INFINITY;
        for it in 1..=tol.max_outer {
            let old = phi.clone();
            let f_new = self.outer_step(k, phi, bnd)?;
            if !(f_new > 0.0) || !f_new.is_finite() {
                return Err(Error::NoEigenproblem(format!(
                    "fission integral became {f_new} at iteration {it}"
                )));
            }
            let k_new = k * f_new;
            scale_state(phi, bnd, 1.0 / f_new);
            dk = (k_new - k).abs();
            k = k_new;
            let dflux = max_rel_change(&old, phi);
            log::trace!("outer {it}: k = {k:.10}, dk = {dk:.2e}, dflux = {dflux:.2e}");
            if dk < tol.k_tol && dflux < tol.flux_tol {
                return self.finish(k, phi.clone(), bnd.clone(), it, dk);
            }
        }
        Err(Error::IterationLimit {
            iterations: tol.max_outer,
            k_eff: k,
            increment: dk,
            last: Box::new(LastIterate {
                k_eff: k,
                flux: phi.clone(),
            }),
        })
    }

    fn finish(
        &self,
        k: f64,
        mut phi: [Vec<f64>; GROUPS],
        mut bnd: [Vec<f64>; GROUPS],
        iterations: usize,
        residual: f64,
    ) -> Result<TransportSolution> {
        let mesh = &self.mesh;
        // scale so that the power of this flux has unit norm, if there is any
        let p2: f64 = (0..mesh.ncells())
            .map(|c| {
                let p = self.kappa_sigma_f[0][c] * phi[0][c] + self.kappa_sigma_f[1][c] * phi[1][c];
                p * p
            })
            .sum::<f64>()
            * mesh.cell_area();
        let scale = if p2 > 0.0 { 1.0 / p2.sqrt() } else { 1.0 };
        scale_state(&mut phi, &mut bnd, scale);
        let angular = if self.opts.keep_angular {
            Some([self.angular_flux(0, k, &phi, &bnd), self.angular_flux(1, k, &phi, &bnd)])
        } else {
            None
        };
        Ok(TransportSolution {
            k_eff: k,
            scalar_flux: [
                Field::new(mesh.clone(), phi[0].clone())?,
                Field::new(mesh.clone(), phi[1].clone())?,
            ],
            boundary: bnd,
            angular_flux: angular,
            iterations,
            residual,
        })
    }

    fn group_source(&self, g: usize, k: f64, phi: &[Vec<f64>; GROUPS]) -> Vec<f64> {
        let fission = self.fission_density(phi);
        let other = 1 - g;
        (0..self.mesh.ncells())
            .map(|c| self.chi[g][c] * fission[c] / k + self.scatter[other][g][c] * phi[other][c])
            .collect()
    }

    fn angular_flux(
        &self,
        g: usize,
        k: f64,
        phi: &[Vec<f64>; GROUPS],
        bnd: &[Vec<f64>; GROUPS],
    ) -> Vec<f64> {
        let n = self.mesh.ncells();
        let ext = self.group_source(g, k, phi);
        let q: Vec<f64> = (0..n)
            .map(|c| (ext[c] + self.scatter[g][g][c] * phi[g][c]) / FOUR_PI)
            .collect();
        let mut out_phi = vec![0.0; n];
        let mut out_b = vec![0.0; self.boundary_len()];
        let mut psi = vec![0.0; n * self.quad.len()];
        self.sweep(g, &q, &bnd[g], &mut out_phi, &mut out_b, None, Some(&mut psi));
        psi
    }

    fn state_of(sol: &TransportSolution) -> ([Vec<f64>; GROUPS], [Vec<f64>; GROUPS]) {
        (
            [
                sol.scalar_flux[0].values().to_vec(),
                sol.scalar_flux[1].values().to_vec(),
            ],
            sol.boundary.clone(),
        )
    }

    /// k after applying one more outer iteration to a converged state.
    pub fn reapply_outer(&self, sol: &TransportSolution) -> Result<f64> {
        let (mut phi, mut bnd) = Self::state_of(sol);
        let f_old = self.fission_density(&phi).iter().sum::<f64>() * self.mesh.cell_area();
        let f_new = self.outer_step(sol.k_eff, &mut phi, &mut bnd)?;
        Ok(sol.k_eff * f_new / f_old)
    }

    /// Integrated per-group balance of a converged state. Leakage comes from
    /// one extra sweep driven by the state's own sources.
    pub fn balance(&self, sol: &TransportSolution) -> [GroupBalance; GROUPS] {
        let (phi, bnd) = Self::state_of(sol);
        let n = self.mesh.ncells();
        let vol = self.mesh.cell_area();
        [0, 1].map(|g| {
            let ext = self.group_source(g, sol.k_eff, &phi);
            let q: Vec<f64> = (0..n)
                .map(|c| (ext[c] + self.scatter[g][g][c] * phi[g][c]) / FOUR_PI)
                .collect();
            let mut leak = Leakage::default();
            let mut p = vec![0.0; n];
            let mut b = vec![0.0; self.boundary_len()];
            self.sweep(g, &q, &bnd[g], &mut p, &mut b, Some(&mut leak), None);
            let production = ext.iter().sum::<f64>() * vol;
            let removal = (0..n)
                .map(|c| (self.sigma_t[g][c] - self.scatter[g][g][c]) * phi[g][c])
                .sum::<f64>()
                * vol;
            GroupBalance {
                production,
                removal,
                net_leakage: leak.net(),
            }
        })
    }
}

fn scale_state(phi: &mut [Vec<f64>; GROUPS], bnd: &mut [Vec<f64>; GROUPS], s: f64) {
    for v in phi.iter_mut().chain(bnd.iter_mut()) {
        v.iter_mut().for_each(|x| *x *= s);
    }
}

fn max_rel_change(old: &[Vec<f64>; GROUPS], new: &[Vec<f64>; GROUPS]) -> f64 {
    let scale = new
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = old
        .iter()
        .zip(new)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);
    diff / scale
}

pub fn solve_transport(
    xs: &CrossSectionSet,
    mesh: &Arc<Mesh>,
    quad: &AngularQuadrature,
    tol: &ToleranceConfig,
) -> Result<TransportSolution> {
    solve_transport_with(xs, mesh, quad, tol, TransportOptions::default())
}

pub fn solve_transport_with(
    xs: &CrossSectionSet,
    mesh: &Arc<Mesh>,
    quad: &AngularQuadrature,
    tol: &ToleranceConfig,
    opts: TransportOptions,
) -> Result<TransportSolution> {
    TransportProblem::new(xs, mesh, quad, opts)?.solve(tol)
}

/// `P = sum_g (kappaSigma_f)^g phi^g`, scaled to unit L2 norm.
pub fn power_map_transport(sol: &TransportSolution, xs: &CrossSectionSet) -> Result<Field> {
    normalized_power(xs, &sol.scalar_flux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, BoundaryTags, GeometryConfig, RegionBox, RegionId};
    use crate::materials::RegionXs;

    fn fuel() -> RegionXs {
        RegionXs {
            d: [1.4, 0.38],
            sigma_a: [0.012, 0.11],
            scatter: [[0.2, 0.018], [0.004, 0.75]],
            nu_sigma_f: [0.0065, 0.16],
            chi: [1.0, 0.0],
            kappa_sigma_f: [0.0026, 0.064],
            sigma_t: [0.23, 0.864],
        }
    }

    fn tight() -> ToleranceConfig {
        ToleranceConfig {
            k_tol: 1e-11,
            flux_tol: 1e-9,
            max_outer: 2000,
        }
    }

    fn mesh(cfg: GeometryConfig) -> Arc<Mesh> {
        Arc::new(build_mesh(&cfg).unwrap())
    }

    /// Small core/reflector problem with vacuum on the far sides.
    fn small_reactor(n: usize) -> (CrossSectionSet, Arc<Mesh>) {
        let cfg = GeometryConfig {
            regions: vec![RegionBox::new("core", [0.0, 6.0, 0.0, 6.0])],
            ..GeometryConfig::homogeneous(10.0, 10.0, n, n, "reflector")
        };
        let mut refl = fuel();
        refl.nu_sigma_f = [0.0, 0.0];
        refl.kappa_sigma_f = [0.0, 0.0];
        refl.sigma_a = [0.001, 0.02];
        refl.scatter = [[0.2, 0.03], [0.0, 1.2]];
        refl.sigma_t = [0.231, 1.22];
        let xs = CrossSectionSet::new()
            .with_region(RegionId::Core, fuel())
            .with_region(RegionId::Reflector, refl);
        (xs, mesh(cfg))
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} p={p}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn quadrature_sizes_and_moments() {
        for order in [2, 4, 6, 8, 12, 16] {
            let q = build_quadrature(order).unwrap();
            assert_eq!(q.len(), order * (order + 2) / 2);
            let dirs = q.directions();
            let s0: f64 = dirs.iter().map(|d| d.weight).sum();
            let sx: f64 = dirs.iter().map(|d| d.weight * d.ox).sum();
            let sy: f64 = dirs.iter().map(|d| d.weight * d.oy).sum();
            let sxx: f64 = dirs.iter().map(|d| d.weight * d.ox * d.ox).sum();
            let syy: f64 = dirs.iter().map(|d| d.weight * d.oy * d.oy).sum();
            assert!((s0 - FOUR_PI).abs() < 1e-12);
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
            assert!((sxx - FOUR_PI / 3.0).abs() < 1e-12, "S{order}: {sxx}");
            assert!((syy - FOUR_PI / 3.0).abs() < 1e-12, "S{order}: {syy}");
            for (d, dir) in dirs.iter().enumerate() {
                assert!(dir.ox * dir.ox + dir.oy * dir.oy < 1.0);
                let mx = dirs[q.mirror_x(d)];
                let my = dirs[q.mirror_y(d)];
                assert_eq!((mx.ox, mx.oy, mx.weight), (-dir.ox, dir.oy, dir.weight));
                assert_eq!((my.ox, my.oy, my.weight), (dir.ox, -dir.oy, dir.weight));
            }
        }
    }

    #[test]
    fn quadrature_rejects_bad_orders() {
        for order in [0, 1, 3, 7] {
            assert!(matches!(build_quadrature(order), Err(Error::Domain(_))));
        }
    }

    /// k of the homogeneous infinite medium: largest eigenvalue of
    /// `nuSigma_f^T A^{-1} chi` with `A` the 2x2 removal/scatter matrix.
    fn k_infinity(x: &RegionXs) -> f64 {
        let a11 = x.sigma_t[0] - x.scatter[0][0];
        let a22 = x.sigma_t[1] - x.scatter[1][1];
        let a12 = -x.scatter[1][0];
        let a21 = -x.scatter[0][1];
        let det = a11 * a22 - a12 * a21;
        let phi1 = (a22 * x.chi[0] - a12 * x.chi[1]) / det;
        let phi2 = (-a21 * x.chi[0] + a11 * x.chi[1]) / det;
        x.nu_sigma_f[0] * phi1 + x.nu_sigma_f[1] * phi2
    }

    #[test]
    fn infinite_medium_matches_analytic_k_and_is_isotropic() {
        let x = fuel();
        let xs = CrossSectionSet::new().with_region(RegionId::Core, x);
        let m = mesh(
            GeometryConfig::homogeneous(8.0, 6.0, 6, 5, "core")
                .with_bc(BoundaryTags::all(BoundaryKind::Reflective)),
        );
        let quad = build_quadrature(4).unwrap();
        for scheme in [SpatialScheme::Step, SpatialScheme::Diamond] {
            let opts = TransportOptions {
                scheme,
                keep_angular: true,
                inner_tol: 1e-12,
                ..Default::default()
            };
            let sol = solve_transport_with(&xs, &m, &quad, &tight(), opts).unwrap();
            assert!((sol.k_eff - k_infinity(&x)).abs() < 1e-6, "{scheme:?}: {}", sol.k_eff);
            let psi = sol.angular_flux.as_ref().unwrap();
            for g in 0..GROUPS {
                let phi = sol.scalar_flux[g].values();
                let mean = phi.iter().sum::<f64>() / phi.len() as f64;
                for &v in phi {
                    assert!((v / mean - 1.0).abs() < 1e-7);
                }
                for (i, &p) in psi[g].iter().enumerate() {
                    let c = i % m.ncells();
                    assert!((p * FOUR_PI / phi[c] - 1.0).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn krylov_and_source_iteration_agree() {
        let (xs, m) = small_reactor(10);
        let quad = build_quadrature(4).unwrap();
        let kr = solve_transport(&xs, &m, &quad, &tight()).unwrap();
        let si = solve_transport_with(
            &xs,
            &m,
            &quad,
            &tight(),
            TransportOptions {
                inner: InnerSolver::SourceIteration,
                inner_tol: 1e-11,
                max_inner: 20000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((kr.k_eff - si.k_eff).abs() < 1e-8, "{} vs {}", kr.k_eff, si.k_eff);
        let pk = power_map_transport(&kr, &xs).unwrap();
        let ps = power_map_transport(&si, &xs).unwrap();
        assert!(crate::geometry::relative_l2_error(&pk, &ps).unwrap() < 1e-6);
        assert!((pk.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn converged_state_balances_and_is_a_fixed_point() {
        let (xs, m) = small_reactor(12);
        let quad = build_quadrature(6).unwrap();
        for scheme in [SpatialScheme::Step, SpatialScheme::Diamond] {
            let tol = tight();
            let opts = TransportOptions {
                scheme,
                ..Default::default()
            };
            let problem = TransportProblem::new(&xs, &m, &quad, opts).unwrap();
            let sol = problem.solve(&tol).unwrap();
            for b in problem.balance(&sol) {
                assert!(b.net_leakage > 0.0);
                assert!(b.relative_residual() < 1e-6, "{scheme:?}: {b:?}");
            }
            let k2 = problem.reapply_outer(&sol).unwrap();
            assert!((k2 - sol.k_eff).abs() < 10.0 * tol.k_tol, "{}", k2 - sol.k_eff);
            assert!(sol.scalar_flux.iter().all(|f| f.values().iter().all(|&v| v > 0.0)));
        }
    }

    #[test]
    fn vacuum_leakage_lowers_k() {
        let (xs, m) = small_reactor(10);
        let quad = build_quadrature(4).unwrap();
        let k_open = solve_transport(&xs, &m, &quad, &tight()).unwrap().k_eff;
        assert!(k_open < k_infinity(&fuel()));
        assert!(k_open > 0.1);
    }

    #[test]
    fn sn_order_convergence_is_monotone() {
        let (xs, m) = small_reactor(10);
        let k: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&n| {
                let q = build_quadrature(n).unwrap();
                solve_transport(&xs, &m, &q, &tight()).unwrap().k_eff
            })
            .collect();
        assert!((k[2] - k[1]).abs() < (k[1] - k[0]).abs(), "{k:?}");
    }

    /// Pure absorber, one direction lit from the low sides with the exact
    /// uncollided profile: the step scheme converges to it at first order.
    #[test]
    fn uncollided_attenuation_converges_first_order() {
        let sigma = 0.5;
        let mut absorber = fuel();
        absorber.scatter = [[0.0; 2]; 2];
        absorber.nu_sigma_f = [0.0; 2];
        absorber.kappa_sigma_f = [0.0; 2];
        absorber.sigma_a = [sigma, sigma];
        absorber.sigma_t = [sigma, sigma];
        let xs = CrossSectionSet::new().with_region(RegionId::Core, absorber);
        let quad = build_quadrature(4).unwrap();
        let d = quad
            .directions()
            .iter()
            .position(|d| d.ox > 0.0 && d.oy > 0.0)
            .unwrap();
        let dir = quad.directions()[d];
        let length = 4.0;
        let exact = (-sigma * length / dir.ox).exp();
        let mut errors = Vec::new();
        for n in [10, 20, 40, 80] {
            let m = mesh(
                GeometryConfig::homogeneous(length, 2.0, n, 4, "core")
                    .with_bc(BoundaryTags::all(BoundaryKind::Vacuum)),
            );
            let problem = TransportProblem::new(&xs, &m, &quad, TransportOptions::default()).unwrap();
            let mut b_in = vec![0.0; problem.boundary_len()];
            for iy in 0..m.ny() {
                b_in[problem.inflow_x_index(d, iy)] = 1.0;
            }
            for ix in 0..m.nx() {
                let (x, _) = m.cell_center(ix);
                b_in[problem.inflow_y_index(d, ix)] = (-sigma * x / dir.ox).exp();
            }
            let q = vec![0.0; m.ncells()];
            let mut phi = vec![0.0; m.ncells()];
            let mut b_out = vec![0.0; problem.boundary_len()];
            let mut psi = vec![0.0; m.ncells() * quad.len()];
            problem.sweep(0, &q, &b_in, &mut phi, &mut b_out, None, Some(&mut psi));
            let last = m.index(m.nx() - 1, m.ny() - 1);
            errors.push((psi[d * m.ncells() + last] - exact).abs());
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..2.2).contains(&ratio), "{errors:?}");
        }
        assert!(errors[3] < 5e-3);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let mut thin = fuel();
        thin.sigma_t = [0.23, 1e-5];
        thin.scatter = [[0.2, 0.018], [0.0, 0.0]];
        thin.sigma_a = [0.012, 0.0];
        let m = mesh(GeometryConfig::homogeneous(4.0, 4.0, 4, 4, "core"));
        let quad = build_quadrature(2).unwrap();
        let xs = CrossSectionSet::new().with_region(RegionId::Core, thin);
        assert!(matches!(
            solve_transport(&xs, &m, &quad, &tight()),
            Err(Error::Config(_))
        ));

        let mut inert = fuel();
        inert.nu_sigma_f = [0.0; 2];
        inert.kappa_sigma_f = [0.0; 2];
        let xs = CrossSectionSet::new().with_region(RegionId::Core, inert);
        assert!(matches!(
            solve_transport(&xs, &m, &quad, &tight()),
            Err(Error::NoEigenproblem(_))
        ));
    }
}
