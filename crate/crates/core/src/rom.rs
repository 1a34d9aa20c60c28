//! POD reduced bases by the method of snapshots, and manifold approximation
//! errors of a basis over a test set.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, Field, Mesh};
use crate::materials::AlphaPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Transport,
    Diffusion,
}

impl ModelTag {
    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Transport => "transport",
            ModelTag::Diffusion => "diffusion",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transport" => Ok(ModelTag::Transport),
            "diffusion" => Ok(ModelTag::Diffusion),
            _ => Err(Error::Usage(format!(
                "unknown model '{s}' (expected transport or diffusion)"
            ))),
        }
    }
}

/// Unit-norm power maps on one mesh with their parameters.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    fields: Vec<Field>,
    alphas: Vec<AlphaPoint>,
    k_eff: Vec<f64>,
    model: ModelTag,
}

impl SnapshotSet {
    pub fn new(
        fields: Vec<Field>,
        alphas: Vec<AlphaPoint>,
        k_eff: Vec<f64>,
        model: ModelTag,
    ) -> Result<Self> {
        if fields.len() != alphas.len() || fields.len() != k_eff.len() {
            return Err(Error::Usage(format!(
                "{} fields, {} parameter points and {} eigenvalues",
                fields.len(),
                alphas.len(),
                k_eff.len()
            )));
        }
        if let Some(first) = fields.first() {
            for (i, f) in fields.iter().enumerate() {
                if !first.mesh().same_grid(f.mesh()) {
                    return Err(Error::Usage(format!("snapshot {i} lives on a different mesh")));
                }
                if (f.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Usage(format!(
                        "snapshot {i} has norm {} (expected 1)",
                        f.norm()
                    )));
                }
            }
        }
        Ok(SnapshotSet {
            fields,
            alphas,
            k_eff,
            model,
        })
    }

    /// Fields only, normalized here; parameters default to nominal.
    pub fn from_fields(fields: Vec<Field>, model: ModelTag) -> Result<Self> {
        let n = fields.len();
        let fields = fields
            .iter()
            .map(|f| f.normalized())
            .collect::<Result<Vec<_>>>()?;
        Self::new(fields, vec![AlphaPoint::nominal(); n], vec![1.0; n], model)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }
    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
    pub fn fields(&self) -> &[Field] {
        &self.fields
    }
    pub fn alphas(&self) -> &[AlphaPoint] {
        &self.alphas
    }
    pub fn k_eff(&self) -> &[f64] {
        &self.k_eff
    }
    pub fn model(&self) -> ModelTag {
        self.model
    }
    pub fn mesh(&self) -> Option<&Arc<Mesh>> {
        self.fields.first().map(|f| f.mesh())
    }
}

#[derive(Clone, Debug)]
pub struct ReducedBasis {
    modes: Vec<Field>,
    singular_values: Vec<f64>,
    /// All snapshot-Gram eigenvalues, nonincreasing (kept or not).
    spectrum: Vec<f64>,
    model: ModelTag,
    /// Numerical rank of the snapshot set, if smaller than what was asked for.
    truncated_at: Option<usize>,
}

impl ReducedBasis {
    /// Wraps given modes after checking orthonormality.
    pub fn from_orthonormal(modes: Vec<Field>, model: ModelTag) -> Result<Self> {
        for i in 0..modes.len() {
            if !modes[0].mesh().same_grid(modes[i].mesh()) {
                return Err(Error::Usage("modes live on different meshes".into()));
            }
            for j in 0..=i {
                let ip = inner(&modes[i], &modes[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                if (ip - expect).abs() > 1e-10 {
                    return Err(Error::Usage(format!(
                        "modes {i} and {j} are not orthonormal (inner product {ip})"
                    )));
                }
            }
        }
        let n = modes.len();
        Ok(ReducedBasis {
            modes,
            singular_values: vec![1.0; n],
            spectrum: vec![1.0; n],
            model,
            truncated_at: None,
        })
    }

    pub fn modes(&self) -> &[Field] {
        &self.modes
    }
    pub fn len(&self) -> usize {
        self.modes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
    /// Square roots of the snapshot-Gram eigenvalues, nonincreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }
    /// Every eigenvalue of the snapshot Gram matrix, including dropped ones.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }
    pub fn model(&self) -> ModelTag {
        self.model
    }
    pub fn truncated_at(&self) -> Option<usize> {
        self.truncated_at
    }
    pub fn mesh(&self) -> Option<&Arc<Mesh>> {
        self.modes.first().map(|f| f.mesh())
    }

    /// `||u - P_{V_n} u||` for `n = 0..=len`, computed by deflating an
    /// explicit residual one mode at a time (no cancellation at small errors).
    pub fn projection_distances(&self, u: &Field) -> Result<Vec<f64>> {
        if let Some(m) = self.mesh() {
            if !m.same_grid(u.mesh()) {
                return Err(Error::Usage("field and basis live on different meshes".into()));
            }
        }
        let mut r = u.values().to_vec();
        let area = u.mesh().cell_area();
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(norm(&r, area));
        for z in &self.modes {
            let c = dot(&r, z.values()) * area;
            r.iter_mut().zip(z.values()).for_each(|(ri, zi)| *ri -= c * zi);
            out.push(norm(&r, area));
        }
        Ok(out)
    }

    /// Coordinates `<zeta_j, u>` for the first `n` modes.
    pub fn coordinates(&self, u: &Field, n: usize) -> Vec<f64> {
        self.modes[..n].iter().map(|z| inner(z, u)).collect()
    }

    /// `sum_j c_j zeta_j`.
    pub fn combine(&self, c: &[f64]) -> Result<Field> {
        let mesh = self
            .mesh()
            .ok_or_else(|| Error::Usage("empty basis".into()))?
            .clone();
        if c.len() > self.len() {
            return Err(Error::Usage(format!(
                "{} coefficients for {} modes",
                c.len(),
                self.len()
            )));
        }
        let mut v = vec![0.0; mesh.ncells()];
        for (cj, z) in c.iter().zip(&self.modes) {
            v.iter_mut().zip(z.values()).for_each(|(vi, zi)| *vi += cj * zi);
        }
        Field::new(mesh, v)
    }
}

fn inner(a: &Field, b: &Field) -> f64 {
    dot(a.values(), b.values()) * a.mesh().cell_area()
}

fn norm(v: &[f64], area: f64) -> f64 {
    (dot(v, v) * area).sqrt()
}

/// Eigenvalues below this fraction of the Gram trace count as zero.
pub const RANK_THRESHOLD: f64 = 1e-14;

/// POD of `snaps` keeping at most `n_max` modes.
pub fn pod(snaps: &SnapshotSet, n_max: usize) -> Result<ReducedBasis> {
    if snaps.is_empty() {
        return Err(Error::Usage("cannot build a basis from no snapshots".into()));
    }
    let fields = snaps.fields();
    let k = fields.len();
    let mesh = fields[0].mesh().clone();
    if n_max == 0 || n_max > k.min(mesh.ncells()) {
        return Err(Error::Usage(format!(
            "n_max = {n_max} must lie in 1..={}",
            k.min(mesh.ncells())
        )));
    }
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let g = inner(&fields[i], &fields[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let trace = gram.trace();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > RANK_THRESHOLD * trace)
        .count();
    let n = n_max.min(rank);
    if n < n_max {
        log::warn!("snapshot set has numerical rank {rank}; basis truncated to {n} modes");
    }

    let nc = mesh.ncells();
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    for &e in order.iter().take(n) {
        let lambda = eig.eigenvalues[e];
        let v = eig.eigenvectors.column(e);
        let mut z = vec![0.0; nc];
        for (i, f) in fields.iter().enumerate() {
            let c = v[i] / lambda.sqrt();
            z.iter_mut().zip(f.values()).for_each(|(zi, ui)| *zi += c * ui);
        }
        modes.push(z);
        singular_values.push(lambda.sqrt());
    }
    // The Gram route loses orthogonality in the trailing modes roughly like
    // eps * lambda_1 / lambda_n; two Gram-Schmidt passes restore it without
    // changing the nested spans.
    let area = mesh.cell_area();
    for _ in 0..2 {
        for j in 0..modes.len() {
            let (done, rest) = modes.split_at_mut(j);
            let z = &mut rest[0];
            for q in done.iter() {
                let c = dot(z, q) * area;
                z.iter_mut().zip(q).for_each(|(zi, qi)| *zi -= c * qi);
            }
            let nz = norm(z, area);
            z.iter_mut().for_each(|v| *v /= nz);
        }
    }
    let modes = modes
        .into_iter()
        .map(|mut z| {
            let imax = z
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if z[imax] < 0.0 {
                z.iter_mut().for_each(|v| *v = -*v);
            }
            Field::new(mesh.clone(), z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedBasis {
        modes,
        singular_values,
        spectrum: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        model: snaps.model(),
        truncated_at: (n < n_max).then_some(rank),
    })
}

/// Relative worst-case and mean-square projection errors over a test set,
/// indexed by `n - 1` for `n = 1..=basis.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaCurves {
    pub wc: Vec<f64>,
    pub ms: Vec<f64>,
}

pub fn delta_curves(basis: &ReducedBasis, test: &SnapshotSet) -> Result<DeltaCurves> {
    if test.is_empty() {
        return Err(Error::Usage("empty test set".into()));
    }
    let n = basis.len();
    let mut wc = vec![0.0f64; n];
    let mut ms = vec![0.0f64; n];
    for u in test.fields() {
        let d = basis.projection_distances(u)?;
        let nu = d[0];
        for j in 0..n {
            let rel = d[j + 1] / nu;
            wc[j] = wc[j].max(rel);
            ms[j] += rel * rel;
        }
    }
    let k = test.len() as f64;
    ms.iter_mut().for_each(|v| *v = (*v / k).sqrt());
    Ok(DeltaCurves { wc, ms })
}
