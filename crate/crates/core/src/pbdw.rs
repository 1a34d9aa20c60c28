//! PBDW state estimation: given psi-coordinates of `P_{W_m} u`, find the
//! element of `V_n + W_m` closest to `V_n` among fields with those
//! observations.
//!
//! With orthonormal bases `{zeta_j}` of `V_n` and `{psi_i}` of `W_m` and the
//! cross-Gramian `A_ij = <psi_i, zeta_j>`, the solution is
//! `z = argmin ||A z - y||`, `eta = y - A z`, and the estimate is
//! `sum z_j zeta_j + sum eta_i psi_i`. The stability constant
//! `beta = inf_{v in V_n} ||P_W v|| / ||v||` is the smallest singular value of `A`.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::geometry::{dot, Field};
use crate::rom::ReducedBasis;
use crate::sensing::MeasurementSystem;

/// Singular values below this fraction of the largest are treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-13;

pub struct PbdwOperator<'a> {
    basis: &'a ReducedBasis,
    sensors: &'a MeasurementSystem,
    n: usize,
    gramian: DMatrix<f64>,
    svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    beta: f64,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub estimate: Field,
    /// Coordinates in the reduced basis.
    pub z: Vec<f64>,
    /// Correction coordinates in the psi basis.
    pub eta: Vec<f64>,
    /// `||y - A z||`, which is also `||eta||`.
    pub residual: f64,
}

impl<'a> PbdwOperator<'a> {
    pub fn assemble(
        basis: &'a ReducedBasis,
        n: usize,
        sensors: &'a MeasurementSystem,
    ) -> Result<Self> {
        let m = sensors.m();
        if n == 0 || n > basis.len() {
            return Err(Error::Usage(format!(
                "n = {n} outside 1..={} (basis size)",
                basis.len()
            )));
        }
        if n > m {
            return Err(Error::Usage(format!(
                "n = {n} exceeds m = {m}; the stability constant would vanish"
            )));
        }
        if let Some(mesh) = basis.mesh() {
            if !mesh.same_grid(sensors.mesh()) {
                return Err(Error::Usage("basis and sensors live on different meshes".into()));
            }
        }
        let area = sensors.mesh().cell_area();
        let mut gramian = DMatrix::zeros(m, n);
        for i in 0..m {
            let scale = area / sensors.area(i).sqrt();
            for (j, z) in basis.modes()[..n].iter().enumerate() {
                let v = z.values();
                gramian[(i, j)] = scale * sensors.subdomain(i).iter().map(|&c| v[c]).sum::<f64>();
            }
        }
        let svd = gramian.clone().svd(true, true);
        let beta = svd.singular_values.min();
        Ok(PbdwOperator {
            basis,
            sensors,
            n,
            gramian,
            svd,
            beta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.sensors.m()
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn cross_gramian(&self) -> &DMatrix<f64> {
        &self.gramian
    }

    /// Reconstruction from observations in psi-coordinates.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Reconstruction> {
        let m = self.m();
        if y.len() != m {
            return Err(Error::Usage(format!(
                "expected {m} observations, got {}",
                y.len()
            )));
        }
        let s_max = self.svd.singular_values.max();
        if !(self.beta > SINGULAR_CUTOFF * s_max) {
            return Err(Error::Singular(format!(
                "beta = {:e} for n = {}, m = {m}; the reconstruction is not unique",
                self.beta, self.n
            )));
        }
        let yv = DVector::from_column_slice(y);
        let u = self.svd.u.as_ref().expect("left singular vectors");
        let vt = self.svd.v_t.as_ref().expect("right singular vectors");
        let mut c = u.transpose() * &yv;
        for (ci, s) in c.iter_mut().zip(self.svd.singular_values.iter()) {
            *ci /= s;
        }
        let z = vt.transpose() * c;
        let eta = &yv - &self.gramian * &z;
        let mut values = self.basis.combine(z.as_slice())?.into_values();
        for i in 0..m {
            let s = eta[i] / self.sensors.area(i).sqrt();
            for &cell in self.sensors.subdomain(i) {
                values[cell] += s;
            }
        }
        let estimate = Field::new(self.sensors.mesh().clone(), values)?;
        Ok(Reconstruction {
            estimate,
            residual: dot(eta.as_slice(), eta.as_slice()).sqrt(),
            z: z.as_slice().to_vec(),
            eta: eta.as_slice().to_vec(),
        })
    }

    /// Convenience: observe `u` without noise and reconstruct it.
    pub fn reconstruct_field(&self, u: &Field) -> Result<Reconstruction> {
        self.reconstruct(&self.sensors.observe_psi(u)?)
    }
}

/// `(delta + eps_noise + eps_model) / beta`; infinite when `beta = 0`.
pub fn error_bound(beta: f64, delta: f64, eps_noise: f64, eps_model: f64) -> Result<f64> {
    if !(beta >= 0.0) || !(delta >= 0.0) || !(eps_noise >= 0.0) || !(eps_model >= 0.0) {
        return Err(Error::Domain(format!(
            "bound inputs must be nonnegative (beta {beta}, delta {delta}, noise {eps_noise}, model {eps_model})"
        )));
    }
    if beta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((delta + eps_noise + eps_model) / beta)
}
