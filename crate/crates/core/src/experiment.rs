//! End-to-end reconstruction study: snapshot generation on the parameter
//! lattices, POD, PBDW sweeps over the reduced dimension, and the noise sweep.
//!
//! Case 1 reduces transport snapshots (perfect model); Case 2 reduces
//! diffusion snapshots (biased model). The truth is always the transport
//! solution on the test lattice.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    power_map_diffusion, DiffusionOptions, DiffusionSystem, GroupRemoval, ToleranceConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{build_mesh, Field, GeometryConfig, Mesh};
use crate::io;
use crate::materials::{map_alpha_to_mu, AlphaPoint, CrossSectionSet, Lattice};
use crate::pbdw::{error_bound, PbdwOperator};
use crate::rom::{delta_curves, pod, DeltaCurves, ModelTag, ReducedBasis, SnapshotSet};
use crate::sensing::{build_sensors_in, perturb_observations, MeasurementSystem, SensorWindow};
use crate::transport::{
    build_quadrature, power_map_transport, AngularQuadrature, InnerSolver, SpatialScheme,
    TransportOptions, TransportProblem,
};

/// Rows whose stability constant falls below this are flagged in the report.
pub const BETA_FLAG: f64 = 1e-8;

pub const CSV_HEADER: &str = "n,beta,delta_wc,delta_ms,err_wc,bound,eta_norm_mean";
pub const NOISE_CSV_HEADER: &str = "eps,seed,n,beta,delta_wc,eps_model,err_wc,bound";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub sx: usize,
    pub sy: usize,
    /// Region tiled by the sensors; the whole domain when absent.
    pub window: Option<SensorWindow>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            sx: 9,
            sy: 6,
            window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub eps: Vec<f64>,
    pub seeds: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            eps: vec![1e-3, 1e-2],
            seeds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    /// Cross-section JSON; the built-in benchmark data when absent.
    pub cross_sections: Option<PathBuf>,
    pub tolerances: ToleranceConfig,
    pub sn_order: usize,
    pub scheme: SpatialScheme,
    pub inner_solver: InnerSolver,
    pub inner_tol: f64,
    pub diffusion: DiffusionOptions,
    pub sensors: SensorConfig,
    pub training_set: Lattice,
    pub test_set: Lattice,
    /// Inclusive range of reduced dimensions.
    pub n_range: [usize; 2],
    /// Where snapshots and reports go; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// Worker threads for snapshot generation; all cores when absent.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: GeometryConfig::default().with_resolution(45, 60),
            cross_sections: None,
            tolerances: ToleranceConfig::default(),
            sn_order: 4,
            scheme: SpatialScheme::Step,
            inner_solver: InnerSolver::Krylov,
            inner_tol: 1e-9,
            diffusion: DiffusionOptions {
                removal: GroupRemoval::AbsorptionPlusOutscatter,
                ..Default::default()
            },
            sensors: SensorConfig::default(),
            training_set: Lattice::Training,
            test_set: Lattice::Test,
            n_range: [1, 54],
            out_dir: None,
            seed: 1,
            noise: NoiseConfig::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    fn transport_options(&self) -> TransportOptions {
        TransportOptions {
            scheme: self.scheme,
            inner: self.inner_solver,
            inner_tol: self.inner_tol,
            ..Default::default()
        }
    }
}

/// One row of a case report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub beta: f64,
    pub delta_wc: f64,
    pub delta_ms: f64,
    pub err_wc: f64,
    pub bound: f64,
    pub eta_norm_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(v: &[f64]) -> Stats {
        Stats {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportMeta {
    pub case: u8,
    pub model_for_rom: ModelTag,
    pub model_for_truth: ModelTag,
    /// Cell count of the mesh; plays the role of the fine post-processing space.
    pub n_cells: usize,
    pub m: usize,
    pub basis_rank: Option<usize>,
    /// Reduced dimensions whose stability constant fell below the flag level.
    pub flagged_rows: Vec<usize>,
    pub k_eff_training: Stats,
    pub k_eff_test: Stats,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
    /// Per-sample relative errors, `errors[n_index][sample]`.
    pub sample_errors: Vec<Vec<f64>>,
}

fn push_csv_row(out: &mut String, cols: &[String]) {
    out.push_str(&cols.join(","));
    out.push('\n');
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            push_csv_row(
                &mut out,
                &[
                    r.n.to_string(),
                    format!("{:e}", r.beta),
                    format!("{:e}", r.delta_wc),
                    format!("{:e}", r.delta_ms),
                    format!("{:e}", r.err_wc),
                    format!("{:e}", r.bound),
                    format!("{:e}", r.eta_norm_mean),
                ],
            );
        }
        out
    }

    /// Writes `case<k>.csv` and `case<k>_meta.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let csv = dir.join(format!("case{}.csv", self.meta.case));
        io::write_text(&csv, &self.to_csv())?;
        io::write_json(&dir.join(format!("case{}_meta.json", self.meta.case)), &self.meta)?;
        Ok(csv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseRow {
    pub eps: f64,
    pub seed: u64,
    pub n: usize,
    pub beta: f64,
    pub delta_wc: f64,
    pub eps_model: f64,
    pub err_wc: f64,
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct NoiseReport {
    pub rows: Vec<NoiseRow>,
}

impl NoiseReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(NOISE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            push_csv_row(
                &mut out,
                &[
                    format!("{:e}", r.eps),
                    r.seed.to_string(),
                    r.n.to_string(),
                    format!("{:e}", r.beta),
                    format!("{:e}", r.delta_wc),
                    format!("{:e}", r.eps_model),
                    format!("{:e}", r.err_wc),
                    format!("{:e}", r.bound),
                ],
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub alpha: AlphaPoint,
    pub k_eff: f64,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub model: ModelTag,
    pub lattice: Lattice,
    pub count: usize,
    pub settings: serde_json::Value,
    pub entries: Vec<ManifestEntry>,
    /// Hash over the entry hashes in index order.
    pub content_hash: String,
}

pub struct Experiment {
    cfg: ExperimentConfig,
    mesh: Arc<Mesh>,
    xs: CrossSectionSet,
    xs_hash: String,
    quad: AngularQuadrature,
    sensors: MeasurementSystem,
    pool: rayon::ThreadPool,
    cache: Mutex<HashMap<(ModelTag, Lattice), Arc<SnapshotSet>>>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let mesh = Arc::new(build_mesh(&cfg.geometry).map_err(|e| e.context("geometry"))?);
        let xs = match &cfg.cross_sections {
            Some(p) => CrossSectionSet::load(p)?,
            None => CrossSectionSet::benchmark_default(),
        };
        xs.validate_for_transport(&mesh)?;
        xs.validate_for_diffusion(&mesh)?;
        let xs_hash = io::sha256_hex(xs.to_json_string().as_bytes());
        let quad = build_quadrature(cfg.sn_order)?;
        let window = cfg.sensors.window.unwrap_or_else(|| SensorWindow::whole(&mesh));
        let sensors = build_sensors_in(&mesh, cfg.sensors.sx, cfg.sensors.sy, window)
            .map_err(|e| e.context("sensor layout"))?;
        let [lo, hi] = cfg.n_range;
        if lo == 0 || lo > hi || hi > sensors.m() {
            return Err(Error::Config(format!(
                "n_range [{lo}, {hi}] must satisfy 1 <= lo <= hi <= m = {}",
                sensors.m()
            )));
        }
        if cfg.noise.eps.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Config("noise levels must be nonnegative".into()));
        }
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cfg.threads {
            pool = pool.num_threads(t);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Experiment {
            cfg,
            mesh,
            xs,
            xs_hash,
            quad,
            sensors,
            pool,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn sensors(&self) -> &MeasurementSystem {
        &self.sensors
    }
    pub fn cross_sections(&self) -> &CrossSectionSet {
        &self.xs
    }
    pub fn quadrature(&self) -> &AngularQuadrature {
        &self.quad
    }

    /// Normalized power map and k for one parameter point.
    pub fn solve_power(&self, model: ModelTag, alpha: &AlphaPoint) -> Result<(Field, f64)> {
        let xs = map_alpha_to_mu(alpha, &self.xs);
        match model {
            ModelTag::Diffusion => {
                let sol = DiffusionSystem::new(&xs, &self.mesh, self.cfg.diffusion)?
                    .solve(&self.cfg.tolerances)?;
                Ok((power_map_diffusion(&sol, &xs)?, sol.k_eff))
            }
            ModelTag::Transport => {
                let sol = TransportProblem::new(&xs, &self.mesh, &self.quad, self.cfg.transport_options())?
                    .solve(&self.cfg.tolerances)?;
                Ok((power_map_transport(&sol, &xs)?, sol.k_eff))
            }
        }
    }

    fn settings(&self, model: ModelTag, lattice: Lattice) -> serde_json::Value {
        let mut s = serde_json::json!({
            "model": model,
            "lattice": lattice,
            "geometry": self.cfg.geometry,
            "cross_sections_sha256": self.xs_hash,
            "tolerances": self.cfg.tolerances,
        });
        let extra = match model {
            ModelTag::Diffusion => serde_json::json!({ "diffusion": self.cfg.diffusion }),
            ModelTag::Transport => serde_json::json!({
                "sn_order": self.cfg.sn_order,
                "scheme": self.cfg.scheme,
                "inner_solver": self.cfg.inner_solver,
                "inner_tol": self.cfg.inner_tol,
            }),
        };
        if let (Some(a), serde_json::Value::Object(b)) = (s.as_object_mut(), extra) {
            a.extend(b);
        }
        s
    }

    fn snapshot_dir(&self, model: ModelTag, lattice: Lattice) -> Option<PathBuf> {
        self.cfg
            .out_dir
            .as_ref()
            .map(|d| d.join("snapshots").join(format!("{}_{}", model, lattice.name())))
    }

    /// Snapshots for one model on one lattice, reusing an on-disk set whose
    /// manifest matches the current settings and whose files hash correctly.
    pub fn generate_snapshots(&self, model: ModelTag, lattice: Lattice) -> Result<Arc<SnapshotSet>> {
        if let Some(s) = self.cache.lock().unwrap().get(&(model, lattice)) {
            return Ok(s.clone());
        }
        let settings = self.settings(model, lattice);
        let dir = self.snapshot_dir(model, lattice);
        if let Some(dir) = &dir {
            match self.load_cached(dir, &settings) {
                Ok(Some(set)) => {
                    log::info!("reusing {} {} snapshots from {}", model, lattice.name(), dir.display());
                    let set = Arc::new(set);
                    self.cache.lock().unwrap().insert((model, lattice), set.clone());
                    return Ok(set);
                }
                Ok(None) => {}
                Err(e) => log::warn!("ignoring snapshot cache in {}: {e}", dir.display()),
            }
        }

        let points = lattice.points();
        let t0 = Instant::now();
        log::info!("solving {} {} {} problems", points.len(), model, lattice.name());
        let solved: Vec<(Field, f64)> = self.pool.install(|| {
            points
                .par_iter()
                .enumerate()
                .map(|(i, a)| {
                    self.solve_power(model, a).map_err(|e| {
                        e.context(format!(
                            "{model} solve for {} point {i}, alpha = {:?}",
                            lattice.name(),
                            a.components()
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        log::info!("{} {} snapshots done in {:.1?}", model, lattice.name(), t0.elapsed());
        let (fields, k_eff): (Vec<Field>, Vec<f64>) = solved.into_iter().unzip();

        if let Some(dir) = &dir {
            let mut entries = Vec::with_capacity(fields.len());
            for (i, f) in fields.iter().enumerate() {
                let file = format!("snap_{i:03}.csv");
                let sha256 = io::write_field_csv(&dir.join(&file), f)?;
                entries.push(ManifestEntry {
                    index: i,
                    alpha: points[i],
                    k_eff: k_eff[i],
                    file,
                    sha256,
                });
            }
            let manifest = SnapshotManifest {
                model,
                lattice,
                count: entries.len(),
                settings,
                content_hash: content_hash(&entries),
                entries,
            };
            io::write_json(&dir.join("manifest.json"), &manifest)?;
        }
        let set = Arc::new(SnapshotSet::new(fields, points, k_eff, model)?);
        self.cache.lock().unwrap().insert((model, lattice), set.clone());
        Ok(set)
    }

    fn load_cached(&self, dir: &Path, settings: &serde_json::Value) -> Result<Option<SnapshotSet>> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Ok(None);
        }
        let manifest: SnapshotManifest = io::read_json(&path)?;
        if &manifest.settings != settings
            || manifest.count != manifest.entries.len()
            || manifest.content_hash != content_hash(&manifest.entries)
        {
            return Ok(None);
        }
        let mut fields = Vec::with_capacity(manifest.count);
        for e in &manifest.entries {
            let p = dir.join(&e.file);
            let text = std::fs::read_to_string(&p).map_err(|err| Error::io(&p, err))?;
            if io::sha256_hex(text.as_bytes()) != e.sha256 {
                return Ok(None);
            }
            fields.push(io::field_from_csv(&text, &self.mesh, &p)?);
        }
        let alphas = manifest.entries.iter().map(|e| e.alpha).collect();
        let k = manifest.entries.iter().map(|e| e.k_eff).collect();
        Ok(Some(SnapshotSet::new(fields, alphas, k, manifest.model)?))
    }

    fn n_max(&self) -> usize {
        self.cfg.n_range[1]
    }

    /// POD of the training snapshots of `model`, up to the largest n requested.
    pub fn basis(&self, model: ModelTag) -> Result<ReducedBasis> {
        let train = self.generate_snapshots(model, self.cfg.training_set)?;
        pod(&train, self.n_max().min(train.len()))
    }

    pub fn run_case(&self, case: u8) -> Result<ExperimentReport> {
        let t0 = Instant::now();
        let model = match case {
            1 => ModelTag::Transport,
            2 => ModelTag::Diffusion,
            _ => return Err(Error::Usage(format!("unknown case {case} (expected 1 or 2)"))),
        };
        let ctx = |e: Error| e.context(format!("case {case}"));
        let train = self.generate_snapshots(model, self.cfg.training_set).map_err(ctx)?;
        let test = self
            .generate_snapshots(ModelTag::Transport, self.cfg.test_set)
            .map_err(ctx)?;
        let basis = pod(&train, self.n_max().min(train.len())).map_err(ctx)?;
        let deltas = delta_curves(&basis, &test).map_err(ctx)?;
        let (rows, sample_errors, flagged) = self.sweep_n(&basis, &deltas, &test, 0.0, None, 0.0)?;
        let meta = ReportMeta {
            case,
            model_for_rom: model,
            model_for_truth: ModelTag::Transport,
            n_cells: self.mesh.ncells(),
            m: self.sensors.m(),
            basis_rank: basis.truncated_at(),
            flagged_rows: flagged,
            k_eff_training: Stats::of(train.k_eff()),
            k_eff_test: Stats::of(test.k_eff()),
            seconds: t0.elapsed().as_secs_f64(),
        };
        let report = ExperimentReport {
            rows: rows
                .into_iter()
                .map(|(r, _)| r)
                .collect(),
            meta,
            sample_errors,
        };
        if let Some(dir) = &self.cfg.out_dir {
            report.write(dir)?;
            io::write_basis(&dir.join(format!("basis_case{case}")), &basis)?;
        }
        Ok(report)
    }

    /// Reconstructs every test field for each n in range, optionally with
    /// noisy observations (`noise = Some(seed)`).
    #[allow(clippy::type_complexity)]
    fn sweep_n(
        &self,
        basis: &ReducedBasis,
        deltas: &DeltaCurves,
        test: &SnapshotSet,
        eps: f64,
        noise: Option<u64>,
        eps_model: f64,
    ) -> Result<(Vec<(ReportRow, f64)>, Vec<Vec<f64>>, Vec<usize>)> {
        let [lo, hi] = self.cfg.n_range;
        let hi = hi.min(basis.len());
        let observations: Vec<Vec<f64>> = test
            .fields()
            .iter()
            .enumerate()
            .map(|(j, u)| {
                let y = self.sensors.observe_psi(u)?;
                match noise {
                    Some(seed) => perturb_observations(&y, eps, sample_seed(seed, j)),
                    None => Ok(y),
                }
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        let mut all_errors = Vec::new();
        let mut flagged = Vec::new();
        for n in lo..=hi {
            let op = PbdwOperator::assemble(basis, n, &self.sensors)?;
            let beta = op.beta();
            if beta < BETA_FLAG {
                log::warn!("n = {n}: beta = {beta:e} below {BETA_FLAG:e}; row flagged");
                flagged.push(n);
            }
            let mut errs = Vec::with_capacity(test.len());
            let mut eta_sum = 0.0;
            for (u, y) in test.fields().iter().zip(&observations) {
                match op.reconstruct(y) {
                    Ok(r) => {
                        errs.push(r.estimate.add_scaled(-1.0, u)?.norm() / u.norm());
                        eta_sum += r.residual;
                    }
                    Err(Error::Singular(_)) => {
                        errs.push(f64::NAN);
                        eta_sum = f64::NAN;
                    }
                    Err(e) => return Err(e),
                }
            }
            let err_wc = errs.iter().copied().fold(f64::NEG_INFINITY, |a, b| {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else {
                    a.max(b)
                }
            });
            let delta_wc = deltas.wc[n - 1];
            let row = ReportRow {
                n,
                beta,
                delta_wc,
                delta_ms: deltas.ms[n - 1],
                err_wc,
                bound: error_bound(beta, delta_wc, eps, eps_model)?,
                eta_norm_mean: eta_sum / test.len() as f64,
            };
            rows.push((row, eps_model));
            all_errors.push(errs);
        }
        Ok((rows, all_errors, flagged))
    }

    /// Largest distance of a test truth to the span of the full-rank POD of
    /// the diffusion training set.
    pub fn diffusion_model_error(&self) -> Result<f64> {
        let train = self.generate_snapshots(ModelTag::Diffusion, self.cfg.training_set)?;
        let test = self.generate_snapshots(ModelTag::Transport, self.cfg.test_set)?;
        let full = pod(&train, train.len().min(self.mesh.ncells()))?;
        let mut worst = 0.0f64;
        for u in test.fields() {
            let d = full.projection_distances(u)?;
            worst = worst.max(d[d.len() - 1] / u.norm());
        }
        Ok(worst)
    }

    /// Case 2 with noisy observations for every level in `eps` and seeds
    /// `seed, seed + 1, ...`. A zero level reproduces the noiseless case.
    pub fn sweep_noise(&self, eps: &[f64], seeds: usize) -> Result<NoiseReport> {
        let train = self.generate_snapshots(ModelTag::Diffusion, self.cfg.training_set)?;
        let test = self.generate_snapshots(ModelTag::Transport, self.cfg.test_set)?;
        let basis = pod(&train, self.n_max().min(train.len()))?;
        let deltas = delta_curves(&basis, &test)?;
        let eps_model = self.diffusion_model_error()?;
        let mut rows = Vec::new();
        for &e in eps {
            if !(e >= 0.0) {
                return Err(Error::Domain(format!("noise level {e} is negative")));
            }
            for s in 0..seeds as u64 {
                let seed = self.cfg.seed.wrapping_add(s);
                let noise = (e > 0.0).then_some(seed);
                let (r, _, _) = self.sweep_n(&basis, &deltas, &test, e, noise, eps_model)?;
                rows.extend(r.into_iter().map(|(row, em)| NoiseRow {
                    eps: e,
                    seed,
                    n: row.n,
                    beta: row.beta,
                    delta_wc: row.delta_wc,
                    eps_model: em,
                    err_wc: row.err_wc,
                    bound: row.bound,
                }));
            }
        }
        let report = NoiseReport { rows };
        if let Some(dir) = &self.cfg.out_dir {
            io::write_text(&dir.join("noise_sweep.csv"), &report.to_csv())?;
        }
        Ok(report)
    }
}

fn content_hash(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        writeln!(s, "{} {}", e.index, e.sha256).unwrap();
    }
    io::sha256_hex(s.as_bytes())
}

/// Distinct, reproducible perturbation seed per (run seed, test sample).
fn sample_seed(seed: u64, sample: usize) -> u64 {
    // splitmix64 finalizer of a combined key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(sample as u64 + 1);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
