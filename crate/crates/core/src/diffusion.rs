//! Two-group neutron diffusion criticality solver.
//!
//! Cell-centred finite volumes with harmonic-mean face diffusion
//! coefficients. Vacuum sides carry the Robin condition
//! `D grad(phi).n + phi/2 = 0` (or zero flux, on request); reflective sides
//! are zero-current. The fundamental mode is found by power iteration on
//! the fission source with a Gauss-Seidel sweep over the two groups; each
//! group operator is SPD and factorized once.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LastIterate, Result};
use crate::geometry::{BoundaryKind, Field, Mesh};
use crate::linalg::{BandCholesky, BandedSpd};
use crate::materials::{CrossSectionSet, GROUPS};

/// Outer (power) iteration controls shared by both solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceConfig {
    pub k_tol: f64,
    pub flux_tol: f64,
    pub max_outer: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            k_tol: 1e-8,
            flux_tol: 1e-7,
            max_outer: 2000,
        }
    }
}

impl ToleranceConfig {
    pub(crate) fn check(&self) -> Result<()> {
        if !(self.k_tol > 0.0 && self.flux_tol > 0.0) || self.max_outer == 0 {
            return Err(Error::Config(format!(
                "tolerances must be positive and max_outer nonzero: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Treatment of sides tagged [`BoundaryKind::Vacuum`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VacuumCondition {
    #[default]
    Robin,
    Dirichlet,
}

/// What the loss term of each group equation contains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRemoval {
    /// `Sigma_a^g` only, exactly as the two-group equations are written.
    #[default]
    Literal,
    /// `Sigma_a^g` plus out-of-group scattering.
    AbsorptionPlusOutscatter,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionOptions {
    pub vacuum: VacuumCondition,
    pub removal: GroupRemoval,
}

#[derive(Clone, Debug)]
pub struct DiffusionSolution {
    pub k_eff: f64,
    /// Fast and thermal flux, scaled so the power map has unit L2 norm.
    pub phi: [Field; GROUPS],
    pub iterations: usize,
    /// `|k_n - k_{n-1}|` at the last outer iteration.
    pub residual: f64,
}

/// Assembled and factorized two-group operator on one mesh.
pub struct DiffusionSystem {
    mesh: Arc<Mesh>,
    ops: [BandedSpd; GROUPS],
    factors: [BandCholesky; GROUPS],
    /// `transfer[from][to][cell]`, out-of-group entries only.
    transfer: [[Vec<f64>; GROUPS]; GROUPS],
    nu_sigma_f: [Vec<f64>; GROUPS],
    chi: [Vec<f64>; GROUPS],
    kappa_sigma_f: [Vec<f64>; GROUPS],
}

impl DiffusionSystem {
    pub fn new(xs: &CrossSectionSet, mesh: &Arc<Mesh>, opts: DiffusionOptions) -> Result<Self> {
        let table = xs.validate_for_diffusion(mesh)?;
        let n = mesh.ncells();
        let per_cell = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
            mesh.region_map().iter().map(|&r| f(r)).collect()
        };
        let nu_sigma_f = [0, 1].map(|g| per_cell(&|r| table[r].nu_sigma_f[g]));
        if nu_sigma_f.iter().all(|v| v.iter().all(|&x| x == 0.0)) {
            return Err(Error::NoEigenproblem(
                "no fissile cell on the mesh".into(),
            ));
        }
        let chi = [0, 1].map(|g| per_cell(&|r| table[r].chi[g]));
        let kappa_sigma_f = [0, 1].map(|g| per_cell(&|r| table[r].kappa_sigma_f[g]));
        let transfer = [0, 1].map(|from| {
            [0, 1].map(|to| {
                if from == to {
                    vec![0.0; n]
                } else {
                    per_cell(&|r| table[r].scatter[from][to])
                }
            })
        });

        let (nx, ny) = (mesh.nx(), mesh.ny());
        let (dx, dy) = (mesh.dx(), mesh.dy());
        let vol = mesh.cell_area();
        let bc = mesh.bc();
        let boundary = |kind: BoundaryKind, d: f64, h: f64, face: f64| -> f64 {
            match (kind, opts.vacuum) {
                (BoundaryKind::Reflective, _) => 0.0,
                (BoundaryKind::Vacuum, VacuumCondition::Robin) => face * 2.0 * d / (h + 4.0 * d),
                (BoundaryKind::Vacuum, VacuumCondition::Dirichlet) => face * 2.0 * d / h,
            }
        };
        let harmonic = |d1: f64, d2: f64, h: f64, face: f64| face * 2.0 * d1 * d2 / (h * (d1 + d2));

        let ops = [0, 1].map(|g| {
            let d = per_cell(&|r| table[r].d[g]);
            let removal = per_cell(&|r| {
                let x = &table[r];
                match opts.removal {
                    GroupRemoval::Literal => x.sigma_a[g],
                    GroupRemoval::AbsorptionPlusOutscatter => x.sigma_a[g] + x.scatter[g][1 - g],
                }
            });
            let mut a = BandedSpd::zeros(n, nx);
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = mesh.index(ix, iy);
                    a.add(c, c, removal[c] * vol);
                    if ix + 1 < nx {
                        let e = c + 1;
                        let k = harmonic(d[c], d[e], dx, dy);
                        a.add(c, c, k);
                        a.add(e, e, k);
                        a.add(e, c, -k);
                    }
                    if iy + 1 < ny {
                        let nb = c + nx;
                        let k = harmonic(d[c], d[nb], dy, dx);
                        a.add(c, c, k);
                        a.add(nb, nb, k);
                        a.add(nb, c, -k);
                    }
                    if ix == 0 {
                        a.add(c, c, boundary(bc.xmin, d[c], dx, dy));
                    }
                    if ix + 1 == nx {
                        a.add(c, c, boundary(bc.xmax, d[c], dx, dy));
                    }
                    if iy == 0 {
                        a.add(c, c, boundary(bc.ymin, d[c], dy, dx));
                    }
                    if iy + 1 == ny {
                        a.add(c, c, boundary(bc.ymax, d[c], dy, dx));
                    }
                }
            }
            a
        });
        let factors = [ops[0].cholesky()?, ops[1].cholesky()?];
        Ok(DiffusionSystem {
            mesh: mesh.clone(),
            ops,
            factors,
            transfer,
            nu_sigma_f,
            chi,
            kappa_sigma_f,
        })
    }

    fn fission_density(&self, phi: &[Vec<f64>; GROUPS]) -> Vec<f64> {
        (0..self.mesh.ncells())
            .map(|c| self.nu_sigma_f[0][c] * phi[0][c] + self.nu_sigma_f[1][c] * phi[1][c])
            .collect()
    }

    fn has_upscatter(&self) -> bool {
        self.transfer[1][0].iter().any(|&v| v != 0.0)
    }

    fn solve_group(&self, g: usize, fission: &[f64], k: f64, phi: &mut [Vec<f64>; GROUPS]) {
        let vol = self.mesh.cell_area();
        let other = 1 - g;
        let mut rhs: Vec<f64> = (0..self.mesh.ncells())
            .map(|c| {
                vol * (self.chi[g][c] * fission[c] / k + self.transfer[other][g][c] * phi[other][c])
            })
            .collect();
        self.factors[g].solve(&mut rhs);
        phi[g] = rhs;
    }

    pub fn solve(&self, tol: &ToleranceConfig) -> Result<DiffusionSolution> {
        tol.check()?;
        let n = self.mesh.ncells();
        let vol = self.mesh.cell_area();
        let mut phi = [vec![1.0; n], vec![1.0; n]];
        let mut fission = self.fission_density(&phi);
        let total = fission.iter().sum::<f64>() * vol;
        if total <= 0.0 {
            return Err(Error::NoEigenproblem("zero fission source".into()));
        }
        for g in 0..GROUPS {
            phi[g].iter_mut().for_each(|v| *v /= total);
        }
        fission.iter_mut().for_each(|v| *v /= total);

        let upscatter = self.has_upscatter();
        let mut k = 1.0;
        let mut dk = f64::INFINITY;
        for it in 1..=tol.max_outer {
            let old = phi.clone();
            let mut sweeps = 0;
            loop {
                let before = phi.clone();
                self.solve_group(0, &fission, k, &mut phi);
                self.solve_group(1, &fission, k, &mut phi);
                sweeps += 1;
                if !upscatter || sweeps >= 200 || max_rel_change(&before, &phi) < 1e-2 * tol.flux_tol
                {
                    break;
                }
            }
            let new_fission = self.fission_density(&phi);
            let f_new = new_fission.iter().sum::<f64>() * vol;
            if !(f_new > 0.0) || !f_new.is_finite() {
                return Err(Error::NoEigenproblem(format!(
                    "fission integral became {f_new} at iteration {it}"
                )));
            }
            // the previous source was normalized to a unit integral
            let k_new = k * f_new;
            for g in 0..GROUPS {
                phi[g].iter_mut().for_each(|v| *v /= f_new);
            }
            fission = new_fission.into_iter().map(|v| v / f_new).collect();
            dk = (k_new - k).abs();
            k = k_new;
            let dflux = max_rel_change(&old, &phi);
            if dk < tol.k_tol && dflux < tol.flux_tol {
                let phi = self.normalize_to_unit_power(phi)?;
                return Ok(DiffusionSolution {
                    k_eff: k,
                    phi,
                    iterations: it,
                    residual: dk,
                });
            }
        }
        Err(Error::IterationLimit {
            iterations: tol.max_outer,
            k_eff: k,
            increment: dk,
            last: Box::new(LastIterate { k_eff: k, flux: phi }),
        })
    }

    fn power_values(&self, phi: &[Vec<f64>; GROUPS]) -> Vec<f64> {
        (0..self.mesh.ncells())
            .map(|c| self.kappa_sigma_f[0][c] * phi[0][c] + self.kappa_sigma_f[1][c] * phi[1][c])
            .collect()
    }

    fn normalize_to_unit_power(&self, phi: [Vec<f64>; GROUPS]) -> Result<[Field; GROUPS]> {
        let p = self.power_values(&phi);
        let pn = (p.iter().map(|v| v * v).sum::<f64>() * self.mesh.cell_area()).sqrt();
        let scale = if pn > 0.0 { 1.0 / pn } else { 1.0 };
        let [a, b] = phi;
        Ok([
            Field::new(self.mesh.clone(), a.into_iter().map(|v| v * scale).collect())?,
            Field::new(self.mesh.clone(), b.into_iter().map(|v| v * scale).collect())?,
        ])
    }

    /// `||A phi - F phi / k|| / ||F phi||` for the full two-group operator.
    pub fn eigen_residual(&self, sol: &DiffusionSolution) -> f64 {
        let n = self.mesh.ncells();
        let vol = self.mesh.cell_area();
        let phi = [sol.phi[0].values().to_vec(), sol.phi[1].values().to_vec()];
        let fission = self.fission_density(&phi);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut aphi = vec![0.0; n];
        for g in 0..GROUPS {
            self.ops[g].matvec(&phi[g], &mut aphi);
            let other = 1 - g;
            for c in 0..n {
                let lhs = aphi[c] - vol * self.transfer[other][g][c] * phi[other][c];
                let f = vol * self.chi[g][c] * fission[c];
                num += (lhs - f / sol.k_eff).powi(2);
                den += f * f;
            }
        }
        (num / den).sqrt()
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

pub fn solve_diffusion(
    xs: &CrossSectionSet,
    mesh: &Arc<Mesh>,
    tol: &ToleranceConfig,
) -> Result<DiffusionSolution> {
    solve_diffusion_with(xs, mesh, tol, DiffusionOptions::default())
}

pub fn solve_diffusion_with(
    xs: &CrossSectionSet,
    mesh: &Arc<Mesh>,
    tol: &ToleranceConfig,
    opts: DiffusionOptions,
) -> Result<DiffusionSolution> {
    DiffusionSystem::new(xs, mesh, opts)?.solve(tol)
}

/// Per-cell `sum_g kappaSigma_f^g phi^g`, without normalization.
pub(crate) fn raw_power(xs: &CrossSectionSet, flux: &[Field; GROUPS]) -> Result<Field> {
    let mesh = flux[0].mesh().clone();
    if !mesh.same_grid(flux[1].mesh()) {
        return Err(Error::Usage("group fluxes live on different meshes".into()));
    }
    let table = xs.check_mesh(&mesh)?;
    let values = mesh
        .region_map()
        .iter()
        .enumerate()
        .map(|(c, &r)| {
            table[r].kappa_sigma_f[0] * flux[0].values()[c]
                + table[r].kappa_sigma_f[1] * flux[1].values()[c]
        })
        .collect();
    Field::new(mesh, values)
}

pub(crate) fn normalized_power(xs: &CrossSectionSet, flux: &[Field; GROUPS]) -> Result<Field> {
    let p = raw_power(xs, flux)?;
    if p.norm() == 0.0 {
        return Err(Error::Degenerate(
            "power map is identically zero (no kappa*Sigma_f where flux lives)".into(),
        ));
    }
    p.normalized()
}

/// `P = (kSf)^1 phi^1 + (kSf)^2 phi^2`, scaled to unit L2 norm.
pub fn power_map_diffusion(sol: &DiffusionSolution, xs: &CrossSectionSet) -> Result<Field> {
    normalized_power(xs, &sol.phi)
}
