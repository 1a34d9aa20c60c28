//! Two-group cross sections per region, the `alpha -> mu` perturbation map
//! and the training/test parameter lattices.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, RegionId};

pub const GROUPS: usize = 2;

/// Smallest total cross section accepted by the transport solver (1/cm).
pub const MIN_SIGMA_T: f64 = 1e-4;

const ALPHA_MIN: f64 = 0.8;
const ALPHA_MAX: f64 = 1.0;

/// Coefficients of one region. Group index 0 is fast, 1 thermal.
/// `scatter[from][to]` is the isotropic transfer cross section.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RegionXs {
    pub d: [f64; GROUPS],
    pub sigma_a: [f64; GROUPS],
    pub scatter: [[f64; GROUPS]; GROUPS],
    pub nu_sigma_f: [f64; GROUPS],
    pub chi: [f64; GROUPS],
    pub kappa_sigma_f: [f64; GROUPS],
    pub sigma_t: [f64; GROUPS],
}

impl RegionXs {
    pub fn is_fissile(&self) -> bool {
        self.nu_sigma_f.iter().any(|&v| v > 0.0)
    }

    fn entries(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        let names = [
            "D",
            "sigma_a",
            "nu_sigma_f",
            "chi",
            "kappa_sigma_f",
            "sigma_t",
        ];
        let arrays = [
            &self.d,
            &self.sigma_a,
            &self.nu_sigma_f,
            &self.chi,
            &self.kappa_sigma_f,
            &self.sigma_t,
        ];
        names
            .into_iter()
            .zip(arrays)
            .flat_map(|(n, a)| a.iter().map(move |&v| (n, v)))
            .chain(
                self.scatter
                    .iter()
                    .flat_map(|row| row.iter().map(|&v| ("sigma_s", v))),
            )
    }
}

/// JSON layout of one group block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupRecord {
    #[serde(rename = "D", default)]
    d: f64,
    #[serde(default)]
    sigma_a: f64,
    #[serde(default)]
    sigma_s_11: f64,
    #[serde(default)]
    sigma_s_12: f64,
    #[serde(default)]
    sigma_s_21: f64,
    #[serde(default)]
    sigma_s_22: f64,
    #[serde(default)]
    nu_sigma_f: f64,
    #[serde(default)]
    chi: f64,
    #[serde(default)]
    kappa_sigma_f: f64,
    #[serde(default)]
    sigma_t: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct XsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    regions: BTreeMap<String, BTreeMap<String, GroupRecord>>,
}

/// Pick a transfer entry that may be written in either group block.
fn transfer(name: &str, region: &str, primary: f64, secondary: f64) -> Result<f64> {
    if secondary != 0.0 && primary != 0.0 && secondary != primary {
        return Err(Error::Config(format!(
            "region '{region}': conflicting values for {name} in the two group blocks"
        )));
    }
    Ok(if primary != 0.0 { primary } else { secondary })
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CrossSectionSet {
    regions: BTreeMap<RegionId, RegionXs>,
}

impl CrossSectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_region(mut self, id: RegionId, xs: RegionXs) -> Self {
        self.regions.insert(id, xs);
        self
    }

    pub fn insert(&mut self, id: RegionId, xs: RegionXs) {
        self.regions.insert(id, xs);
    }

    pub fn get(&self, id: &RegionId) -> Option<&RegionXs> {
        self.regions.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RegionId, &RegionXs)> {
        self.regions.iter()
    }

    /// Bundled two-group benchmark data (see `data/takeda_model1.json`).
    pub fn benchmark_default() -> Self {
        Self::from_json_str(include_str!("../data/takeda_model1.json"))
            .expect("bundled cross sections are valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: XsFile = serde_json::from_str(s)?;
        let mut set = CrossSectionSet::new();
        for (name, groups) in &file.regions {
            let g1 = groups.get("1").copied().ok_or_else(|| {
                Error::Config(format!("region '{name}' is missing group \"1\""))
            })?;
            let g2 = groups.get("2").copied().ok_or_else(|| {
                Error::Config(format!("region '{name}' is missing group \"2\""))
            })?;
            if let Some(extra) = groups.keys().find(|k| *k != "1" && *k != "2") {
                return Err(Error::Config(format!(
                    "region '{name}': only groups \"1\" and \"2\" are supported, found \"{extra}\""
                )));
            }
            let xs = RegionXs {
                d: [g1.d, g2.d],
                sigma_a: [g1.sigma_a, g2.sigma_a],
                scatter: [
                    [
                        transfer("sigma_s_11", name, g1.sigma_s_11, g2.sigma_s_11)?,
                        transfer("sigma_s_12", name, g1.sigma_s_12, g2.sigma_s_12)?,
                    ],
                    [
                        transfer("sigma_s_21", name, g2.sigma_s_21, g1.sigma_s_21)?,
                        transfer("sigma_s_22", name, g2.sigma_s_22, g1.sigma_s_22)?,
                    ],
                ],
                nu_sigma_f: [g1.nu_sigma_f, g2.nu_sigma_f],
                chi: [g1.chi, g2.chi],
                kappa_sigma_f: [g1.kappa_sigma_f, g2.kappa_sigma_f],
                sigma_t: [g1.sigma_t, g2.sigma_t],
            };
            set.insert(RegionId::parse(name), xs);
        }
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    pub fn to_json_string(&self) -> String {
        let mut file = XsFile::default();
        for (id, xs) in &self.regions {
            let mut groups = BTreeMap::new();
            for g in 0..GROUPS {
                let rec = GroupRecord {
                    d: xs.d[g],
                    sigma_a: xs.sigma_a[g],
                    sigma_s_11: if g == 0 { xs.scatter[0][0] } else { 0.0 },
                    sigma_s_12: if g == 0 { xs.scatter[0][1] } else { 0.0 },
                    sigma_s_21: if g == 1 { xs.scatter[1][0] } else { 0.0 },
                    sigma_s_22: if g == 1 { xs.scatter[1][1] } else { 0.0 },
                    nu_sigma_f: xs.nu_sigma_f[g],
                    chi: xs.chi[g],
                    kappa_sigma_f: xs.kappa_sigma_f[g],
                    sigma_t: xs.sigma_t[g],
                };
                groups.insert((g + 1).to_string(), rec);
            }
            file.regions.insert(id.name().to_string(), groups);
        }
        serde_json::to_string_pretty(&file).expect("cross sections serialize")
    }

    /// Nonnegativity and fission-spectrum normalization.
    pub fn validate(&self) -> Result<()> {
        for (id, xs) in &self.regions {
            for (name, v) in xs.entries() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Config(format!(
                        "region '{id}': {name} = {v} must be finite and nonnegative"
                    )));
                }
            }
            if xs.is_fissile() && (xs.chi[0] + xs.chi[1] - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "region '{id}': fission spectrum sums to {}, expected 1",
                    xs.chi[0] + xs.chi[1]
                )));
            }
        }
        Ok(())
    }

    /// Every mesh region has data and at least one cell is fissile.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<Vec<RegionXs>> {
        let table: Vec<RegionXs> = mesh
            .regions()
            .iter()
            .map(|id| {
                self.get(id).copied().ok_or_else(|| {
                    Error::Config(format!("no cross sections for region '{id}'"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(table)
    }

    pub fn validate_for_diffusion(&self, mesh: &Mesh) -> Result<Vec<RegionXs>> {
        self.validate()?;
        let table = self.check_mesh(mesh)?;
        for (id, xs) in mesh.regions().iter().zip(&table) {
            if xs.d.iter().any(|&d| d <= 0.0) {
                return Err(Error::Config(format!(
                    "region '{id}': diffusion coefficients must be positive"
                )));
            }
        }
        Ok(table)
    }

    pub fn validate_for_transport(&self, mesh: &Mesh) -> Result<Vec<RegionXs>> {
        self.validate()?;
        let table = self.check_mesh(mesh)?;
        for (id, xs) in mesh.regions().iter().zip(&table) {
            if xs.sigma_t.iter().any(|&s| s < MIN_SIGMA_T) {
                return Err(Error::Config(format!(
                    "region '{id}': total cross sections must be at least {MIN_SIGMA_T} 1/cm, got {:?}",
                    xs.sigma_t
                )));
            }
        }
        Ok(table)
    }
}

/// Perturbation factors `alpha in [0.8, 1]^5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct AlphaPoint([f64; 5]);

impl AlphaPoint {
    pub fn new(components: [f64; 5]) -> Result<Self> {
        for (i, &a) in components.iter().enumerate() {
            if !(ALPHA_MIN..=ALPHA_MAX).contains(&a) {
                return Err(Error::Domain(format!(
                    "alpha[{i}] = {a} outside [{ALPHA_MIN}, {ALPHA_MAX}]"
                )));
            }
        }
        Ok(AlphaPoint(components))
    }

    pub fn nominal() -> Self {
        AlphaPoint([1.0; 5])
    }

    pub fn components(&self) -> [f64; 5] {
        self.0
    }
}

impl TryFrom<[f64; 5]> for AlphaPoint {
    type Error = Error;
    fn try_from(a: [f64; 5]) -> Result<Self> {
        AlphaPoint::new(a)
    }
}

impl From<AlphaPoint> for [f64; 5] {
    fn from(a: AlphaPoint) -> Self {
        a.0
    }
}

/// Scale the base coefficients by `alpha`:
/// `D^g / a_g`, `a_g Sigma_a^g` (g = 1, 2), `a_3 Sigma_s^{1->2}`, `a_4 nuSigma_f^1`,
/// `a_5 nuSigma_f^2`; `chi` unchanged. Totals move with the scaled absorption and
/// out-scatter so the transport balance stays consistent.
pub fn map_alpha_to_mu(alpha: &AlphaPoint, base: &CrossSectionSet) -> CrossSectionSet {
    let [a1, a2, a3, a4, a5] = alpha.0;
    let mut out = CrossSectionSet::new();
    for (id, xs) in base.iter() {
        let mut s = *xs;
        s.d = [xs.d[0] / a1, xs.d[1] / a2];
        s.sigma_a = [a1 * xs.sigma_a[0], a2 * xs.sigma_a[1]];
        s.scatter[0][1] = a3 * xs.scatter[0][1];
        s.nu_sigma_f = [a4 * xs.nu_sigma_f[0], a5 * xs.nu_sigma_f[1]];
        s.sigma_t[0] = xs.sigma_t[0]
            + (s.sigma_a[0] - xs.sigma_a[0])
            + (s.scatter[0][1] - xs.scatter[0][1]);
        s.sigma_t[1] = xs.sigma_t[1] + (s.sigma_a[1] - xs.sigma_a[1]);
        out.insert(id.clone(), s);
    }
    out
}

fn tensor_lattice(levels: &[f64]) -> Vec<AlphaPoint> {
    let l = levels.len();
    let total = l.pow(5);
    (0..total)
        .map(|mut idx| {
            let mut a = [0.0; 5];
            for slot in a.iter_mut().rev() {
                *slot = levels[idx % l];
                idx /= l;
            }
            AlphaPoint(a)
        })
        .collect()
}

/// `{0.8, 0.9, 1.0}^5` in lexicographic order (243 points).
pub fn training_lattice() -> Vec<AlphaPoint> {
    tensor_lattice(&[0.8, 0.9, 1.0])
}

/// `{0.85, 0.95}^5` in lexicographic order (32 points).
pub fn test_lattice() -> Vec<AlphaPoint> {
    tensor_lattice(&[0.85, 0.95])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    Training,
    Test,
}

impl Lattice {
    pub fn points(self) -> Vec<AlphaPoint> {
        match self {
            Lattice::Training => training_lattice(),
            Lattice::Test => test_lattice(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Lattice::Training => "training",
            Lattice::Test => "test",
        }
    }
}

impl std::str::FromStr for Lattice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" | "train" => Ok(Lattice::Training),
            "test" => Ok(Lattice::Test),
            _ => Err(Error::Usage(format!(
                "unknown lattice '{s}', expected 'training' or 'test'"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn sample_set() -> CrossSectionSet {
        CrossSectionSet::new()
            .with_region(
                RegionId::Core,
                RegionXs {
                    d: [1.0, 0.4],
                    sigma_a: [0.01, 0.08],
                    scatter: [[0.2, 0.02], [0.001, 0.9]],
                    nu_sigma_f: [0.005, 0.1],
                    chi: [0.97, 0.03],
                    kappa_sigma_f: [0.002, 0.04],
                    sigma_t: [0.23, 0.981],
                },
            )
            .with_region(
                RegionId::Reflector,
                RegionXs {
                    d: [1.3, 0.2],
                    sigma_a: [0.0004, 0.02],
                    scatter: [[0.19, 0.056], [0.0, 1.62]],
                    nu_sigma_f: [0.0, 0.0],
                    chi: [0.0, 0.0],
                    kappa_sigma_f: [0.0, 0.0],
                    sigma_t: [0.2464, 1.64],
                },
            )
    }

    #[test]
    fn identity_map() {
        let base = sample_set();
        assert_eq!(map_alpha_to_mu(&AlphaPoint::nominal(), &base), base);
    }

    #[test]
    fn first_component_scales_group_one() {
        let mut base = sample_set();
        let mut core = *base.get(&RegionId::Core).unwrap();
        core.d[0] = 1.0;
        core.sigma_a[0] = 0.01;
        base.insert(RegionId::Core, core);
        let a = AlphaPoint::new([0.8, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let out = map_alpha_to_mu(&a, &base);
        let c = out.get(&RegionId::Core).unwrap();
        assert!((c.d[0] - 1.25).abs() < 1e-15);
        assert!((c.sigma_a[0] - 0.008).abs() < 1e-17);
    }

    #[test]
    fn uniform_alpha_matches_entrywise_recomputation() {
        let base = sample_set();
        let a = AlphaPoint::new([0.9; 5]).unwrap();
        let out = map_alpha_to_mu(&a, &base);
        for (id, b) in base.iter() {
            let o = out.get(id).unwrap();
            assert_eq!(o.d[0], b.d[0] / 0.9);
            assert_eq!(o.d[1], b.d[1] / 0.9);
            assert_eq!(o.sigma_a[0], 0.9 * b.sigma_a[0]);
            assert_eq!(o.sigma_a[1], 0.9 * b.sigma_a[1]);
            assert_eq!(o.scatter[0][1], 0.9 * b.scatter[0][1]);
            assert_eq!(o.scatter[1][0], b.scatter[1][0]);
            assert_eq!(o.scatter[0][0], b.scatter[0][0]);
            assert_eq!(o.nu_sigma_f[0], 0.9 * b.nu_sigma_f[0]);
            assert_eq!(o.nu_sigma_f[1], 0.9 * b.nu_sigma_f[1]);
            assert_eq!(o.chi, b.chi);
            assert_eq!(o.kappa_sigma_f, b.kappa_sigma_f);
            // total = absorption + out-scatter + within-group scatter
            let t1 = o.sigma_a[0] + o.scatter[0][0] + o.scatter[0][1];
            let b1 = b.sigma_a[0] + b.scatter[0][0] + b.scatter[0][1];
            assert!((o.sigma_t[0] - (b.sigma_t[0] - b1 + t1)).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_out_of_bounds() {
        assert!(matches!(
            AlphaPoint::new([0.79, 1.0, 1.0, 1.0, 1.0]),
            Err(Error::Domain(_))
        ));
        assert!(AlphaPoint::new([1.0, 1.0, 1.0, 1.0, 1.01]).is_err());
        assert!(serde_json::from_str::<AlphaPoint>("[0.9,0.9,0.9,0.9,1.2]").is_err());
    }

    #[test]
    fn training_lattice_enumeration() {
        let pts = training_lattice();
        assert_eq!(pts.len(), 243);
        assert_eq!(pts[0].components(), [0.8; 5]);
        assert_eq!(pts[242].components(), [1.0; 5]);

        let key = |a: [f64; 5]| a.map(|v| (v * 100.0).round() as i64);
        let mut oracle = HashSet::new();
        let lv = [0.8, 0.9, 1.0];
        for &a in &lv {
            for &b in &lv {
                for &c in &lv {
                    for &d in &lv {
                        for &e in &lv {
                            oracle.insert(key([a, b, c, d, e]));
                        }
                    }
                }
            }
        }
        let got: HashSet<_> = pts.iter().map(|p| key(p.components())).collect();
        assert_eq!(got.len(), 243);
        assert_eq!(got, oracle);
        // lexicographic: second point only changes the last component
        assert_eq!(pts[1].components(), [0.8, 0.8, 0.8, 0.8, 0.9]);
    }

    #[test]
    fn test_lattice_properties() {
        let pts = test_lattice();
        assert_eq!(pts.len(), 32);
        assert!(pts
            .iter()
            .all(|p| p.components().iter().all(|&v| v == 0.85 || v == 0.95)));
        let train = training_lattice();
        assert!(pts.iter().all(|p| !train.contains(p)));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let base = sample_set();
        let back = CrossSectionSet::from_json_str(&base.to_json_string()).unwrap();
        assert_eq!(back, base);

        let bad = r#"{"regions": {"core": {"1": {"D": 1, "nu_sigma_f": 0.01, "chi": 0.6},
                                              "2": {"D": 1, "chi": 0.3}}}}"#;
        assert!(matches!(
            CrossSectionSet::from_json_str(bad),
            Err(Error::Config(_))
        ));
        let neg = r#"{"regions": {"r": {"1": {"D": 1, "sigma_a": -0.1}, "2": {"D": 1}}}}"#;
        assert!(CrossSectionSet::from_json_str(neg).is_err());
        let missing = r#"{"regions": {"r": {"1": {"D": 1}}}}"#;
        assert!(CrossSectionSet::from_json_str(missing).is_err());
    }

    #[test]
    fn bundled_data_is_consistent() {
        let xs = CrossSectionSet::benchmark_default();
        for (id, r) in xs.iter() {
            for g in 0..2 {
                let sum = r.sigma_a[g] + r.scatter[g][0] + r.scatter[g][1];
                assert!(
                    (sum - r.sigma_t[g]).abs() < 1e-9,
                    "{id} group {g}: {sum} vs {}",
                    r.sigma_t[g]
                );
                assert!(r.sigma_t[g] >= MIN_SIGMA_T);
            }
        }
    }

    // sqrt(0.8) < 0.895, so componentwise products stay inside the box
    fn alpha_strategy() -> impl Strategy<Value = [f64; 5]> {
        prop::array::uniform5(0.895f64..=1.0)
    }

    proptest! {
        #[test]
        fn map_is_multiplicative(a in alpha_strategy(), b in alpha_strategy()) {
            let base = sample_set();
            let mut ab = [0.0; 5];
            for i in 0..5 {
                ab[i] = a[i] * b[i];
            }
            let pa = AlphaPoint::new(a).unwrap();
            let pb = AlphaPoint::new(b).unwrap();
            let pab = AlphaPoint::new(ab).unwrap();
            let twice = map_alpha_to_mu(&pb, &map_alpha_to_mu(&pa, &base));
            let once = map_alpha_to_mu(&pab, &base);
            for (id, x) in once.iter() {
                let y = twice.get(id).unwrap();
                let close = |p: f64, q: f64| (p - q).abs() <= 1e-14 * p.abs().max(q.abs()) + 1e-300;
                for g in 0..2 {
                    prop_assert!(close(x.d[g], y.d[g]));
                    prop_assert!(close(x.sigma_a[g], y.sigma_a[g]));
                    prop_assert!(close(x.nu_sigma_f[g], y.nu_sigma_f[g]));
                    prop_assert!(close(x.scatter[0][g], y.scatter[0][g]));
                    prop_assert_eq!(x.chi[g], y.chi[g]);
                }
                prop_assert!((x.sigma_t[0] - y.sigma_t[0]).abs() <= 1e-14 * x.sigma_t[0] * 4.0);
                prop_assert!((x.chi[0] + x.chi[1] - 1.0).abs() < 1e-12 || !x.is_fissile());
            }
        }
    }
}
