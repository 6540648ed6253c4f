//! Experiment configuration: a flat TOML document.

use std::fs;
use std::path::{Path, PathBuf};

use optomo::linalg::reciprocal_condition;
use optomo::maps::{default_dim_cut, twin_beam, KrausMap};
use optomo::{Complex64, ComplexMatrix};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

const PRESET_FIG2_TOP: &str = include_str!("../presets/fig2_top.toml");
const PRESET_FIG2_BOTTOM: &str = include_str!("../presets/fig2_bottom.toml");
const PRESET_FIG2_BOTTOM_SCALED: &str = include_str!("../presets/fig2_bottom_scaled.toml");

pub const PRESETS: [(&str, &str); 3] = [
    ("fig2_top", PRESET_FIG2_TOP),
    ("fig2_bottom", PRESET_FIG2_BOTTOM),
    ("fig2_bottom_scaled", PRESET_FIG2_BOTTOM_SCALED),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Displacement,
    Identity,
    Kraus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferencePolicy {
    #[default]
    Fixed,
    Auto,
}

fn default_n_max() -> usize {
    7
}

fn default_pilot_samples() -> usize {
    20_000
}

fn default_output() -> PathBuf {
    PathBuf::from("result.txt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub operation: OperationKind,
    /// Displacement amplitude (real and imaginary parts).
    #[serde(default)]
    pub z_re: f64,
    #[serde(default)]
    pub z_im: f64,
    /// JSON file with the Kraus operators, for `operation = "kraus"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_file: Option<PathBuf>,
    pub nbar: f64,
    pub eta: f64,
    /// Fock truncation of the entangler; defaults to `max(16, ceil(8(nbar+1)))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_cut: Option<usize>,
    /// Largest reconstructed index.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub blocks: usize,
    pub samples_per_block: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub reference: ReferencePolicy,
    #[serde(default)]
    pub i0: usize,
    #[serde(default)]
    pub j0: usize,
    #[serde(default = "default_pilot_samples")]
    pub pilot_samples: usize,
    /// Result document path.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Plot files go to `<prefix>_diagonal.csv` and `<prefix>_matrix.csv`;
    /// defaults to the output path without extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot_prefix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dump: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_cache: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("cannot parse configuration: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Reads `name` as a file, or as a bundled preset when no such file
    /// exists.
    pub fn load(name: &str) -> Result<Self, CliError> {
        let path = Path::new(name);
        if path.exists() {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            return Self::from_toml(&text);
        }
        match preset(name) {
            Some(text) => Self::from_toml(text),
            None => Err(CliError::Config(format!(
                "no configuration file or preset named {name:?} (presets: {})",
                PRESETS.map(|p| p.0).join(", ")
            ))),
        }
    }

    pub fn z(&self) -> Complex64 {
        match self.operation {
            OperationKind::Displacement => Complex64::new(self.z_re, self.z_im),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn dim_cut(&self) -> usize {
        self.dim_cut.unwrap_or_else(|| default_dim_cut(self.nbar))
    }

    pub fn window(&self) -> usize {
        self.n_max + 1
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn plot_prefix(&self) -> PathBuf {
        self.plot_prefix
            .clone()
            .unwrap_or_else(|| self.output.with_extension(""))
    }

    /// Domain checks; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if !(self.eta > 0.5 && self.eta <= 1.0) {
            return bad(format!(
                "eta = {} is outside (0.5, 1]; efficiency deconvolution diverges at or below 0.5",
                self.eta
            ));
        }
        if !(self.nbar > 0.0 && self.nbar.is_finite()) {
            return bad(format!("nbar = {} must be positive (the entangler must be invertible)", self.nbar));
        }
        if self.blocks < 2 {
            return bad(format!("blocks = {} must be at least 2 for error bars", self.blocks));
        }
        if self.samples_per_block == 0 {
            return bad("samples_per_block must be positive".into());
        }
        if self.reference == ReferencePolicy::Auto && self.pilot_samples == 0 {
            return bad("pilot_samples must be positive with reference = \"auto\"".into());
        }
        if !(self.z_re.is_finite() && self.z_im.is_finite()) {
            return bad("displacement amplitude must be finite".into());
        }
        let dim_cut = self.dim_cut();
        if self.window() > dim_cut {
            return bad(format!(
                "n_max = {} needs dim_cut >= {}, got {dim_cut}",
                self.n_max,
                self.window()
            ));
        }
        if self.reference == ReferencePolicy::Fixed && (self.i0 > self.n_max || self.j0 > self.n_max) {
            return bad(format!("reference ({}, {}) lies outside the window 0..={}", self.i0, self.j0, self.n_max));
        }
        let mut warnings = Vec::new();
        let entangler_dim = match self.operation {
            OperationKind::Kraus => {
                let map = self.kraus_map()?;
                let d = map.dim();
                if d > dim_cut {
                    return bad(format!("Kraus operators act on {d} levels, more than dim_cut = {dim_cut}"));
                }
                if self.reference == ReferencePolicy::Fixed && (self.i0 >= d || self.j0 >= d) {
                    return bad(format!("reference ({}, {}) lies outside the {d}-level operation", self.i0, self.j0));
                }
                d
            }
            _ => dim_cut,
        };
        let tb = twin_beam(self.nbar, entangler_dim).map_err(|e| CliError::Config(e.to_string()))?;
        let rcond = reciprocal_condition(&tb.psi).map_err(|e| CliError::Config(e.to_string()))?;
        if rcond < optomo::linalg::RCOND_THRESHOLD {
            return bad(format!(
                "non-invertible entangler: nbar = {} on {entangler_dim} levels has reciprocal condition {rcond:.2e}; \
                 raise nbar or lower dim_cut",
                self.nbar
            ));
        }
        if let Some(w) = tb.warning {
            if self.operation != OperationKind::Kraus {
                warnings.push(w);
            }
        }
        Ok(warnings)
    }

    /// Operators from `kraus_file`.
    pub fn kraus_map(&self) -> Result<KrausMap, CliError> {
        let Some(path) = &self.kraus_file else {
            return Err(CliError::Config("operation = \"kraus\" requires kraus_file".into()));
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        parse_kraus(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

/// `{"operators": [matrix, ...]}`, each matrix a list of rows of
/// `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
struct KrausFile {
    operators: Vec<Vec<Vec<[f64; 2]>>>,
}

pub fn parse_kraus(text: &str) -> Result<KrausMap, String> {
    let file: KrausFile = serde_json::from_str(text).map_err(|e| format!("invalid Kraus file: {e}"))?;
    if file.operators.is_empty() {
        return Err("Kraus file lists no operators".into());
    }
    let mut ops = Vec::new();
    for (n, rows) in file.operators.iter().enumerate() {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(format!("operator {n} is not a square matrix"));
        }
        ops.push(ComplexMatrix::from_fn(d, d, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])));
    }
    KrausMap::new(ops).map_err(|e| e.to_string())
}

pub fn kraus_to_json(map: &KrausMap) -> String {
    let operators = map
        .operators()
        .iter()
        .map(|k| {
            (0..k.nrows())
                .map(|i| (0..k.ncols()).map(|j| [k[(i, j)].re, k[(i, j)].im]).collect())
                .collect()
        })
        .collect();
    serde_json::to_string_pretty(&KrausFile { operators }).expect("Kraus file serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let c = ExperimentConfig::load(name).unwrap();
            c.validate().unwrap();
            assert_eq!(c.operation, OperationKind::Displacement);
            assert_eq!(c.z(), Complex64::new(1.0, 0.0));
        }
        let top = ExperimentConfig::load("fig2_top").unwrap();
        assert_eq!((top.nbar, top.eta, top.blocks, top.samples_per_block), (5.0, 0.9, 150, 10_000));
        let scaled = ExperimentConfig::load("fig2_bottom_scaled").unwrap();
        assert_eq!((scaled.nbar, scaled.eta, scaled.blocks, scaled.samples_per_block), (3.0, 0.7, 300, 20_000));
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = ExperimentConfig::load("fig2_top").unwrap();
        c.z_im = 0.1 + 0.2;
        c.dim_cut = Some(40);
        c.sample_dump = Some("dump.csv".into());
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn rejects_out_of_domain_values() {
        let base = ExperimentConfig::load("fig2_top").unwrap();
        let check = |f: &dyn Fn(&mut ExperimentConfig), needle: &str| {
            let mut c = base.clone();
            f(&mut c);
            match c.validate() {
                Err(CliError::Config(msg)) => assert!(msg.contains(needle), "{msg}"),
                other => panic!("expected config error, got {other:?}"),
            }
        };
        check(&|c| c.eta = 0.5, "eta");
        check(&|c| c.eta = 1.2, "eta");
        check(&|c| c.blocks = 1, "blocks");
        check(&|c| c.samples_per_block = 0, "samples_per_block");
        check(&|c| c.n_max = 60, "dim_cut");
        check(&|c| c.i0 = 9, "reference");
        check(&|c| c.format_version = 2, "format_version");
        check(
            &|c| {
                c.nbar = 1e-4;
                c.dim_cut = Some(16);
            },
            "non-invertible entangler",
        );
        assert!(ExperimentConfig::from_toml("format_version = 1\nbogus = 3").is_err());
    }

    #[test]
    fn kraus_json_round_trip() {
        let map = KrausMap::new(vec![
            ComplexMatrix::from_fn(2, 2, |i, j| Complex64::new(if i == j { 0.6 } else { 0.0 }, 0.0)),
            ComplexMatrix::from_fn(2, 2, |i, j| Complex64::new(0.0, if i != j { 0.8 } else { 0.0 })),
        ])
        .unwrap();
        let back = parse_kraus(&kraus_to_json(&map)).unwrap();
        assert_eq!(back.operators(), map.operators());
        assert!(parse_kraus("{\"operators\": [[[[1,0]],[[0,0]]]]}").is_err());
    }
}
