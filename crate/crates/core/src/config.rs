//! Plain-text pipeline configuration: flat `key = value` lines with '#'
//! comments and dotted section prefixes (`cae.filters = 32,16,8`), plus
//! the named presets matching the published benchmark setups.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::bench::{DensityCurrentConfig, SyntheticDynamicsConfig, WarmBubbleConfig};
use crate::cae::CaeConfig;
use crate::esn::EsnConfig;
use crate::grid::GridSpec;
use crate::nn::Activation;
use crate::{Error, Result};

/// Parsed key = value file. Keys keep their dotted prefixes.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "config line {}: expected 'key = value', got '{}'",
                    lineno + 1,
                    line
                ))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "config line {}: empty key",
                    lineno + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidArgument(format!("config key '{key}': cannot parse '{s}'"))
            }),
        }
    }

    fn parsed_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) if s.is_empty() => Ok(Some(Vec::new())),
            Some(s) => s
                .split(',')
                .map(|part| {
                    part.trim().parse::<T>().map_err(|_| {
                        Error::InvalidArgument(format!(
                            "config key '{key}': cannot parse element '{part}'"
                        ))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Which initial condition the generator lays down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    WarmBubble2d,
    WarmBubble3d,
    DensityCurrent,
}

impl InitialCondition {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WarmBubble2d => "warm-bubble-2d",
            Self::WarmBubble3d => "warm-bubble-3d",
            Self::DensityCurrent => "density-current",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "warm-bubble-2d" => Ok(Self::WarmBubble2d),
            "warm-bubble-3d" => Ok(Self::WarmBubble3d),
            "density-current" => Ok(Self::DensityCurrent),
            other => Err(Error::InvalidArgument(format!(
                "unknown initial condition '{other}'"
            ))),
        }
    }
}

/// Exactly one snapshot source per run.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotSource {
    /// Generate with the configured grid, IC, and synthetic dynamics.
    Generate(InitialCondition),
    /// Load a snapshot file in the binary grid format.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: SnapshotSource,
    pub grid: GridSpec,
    pub dynamics: SyntheticDynamicsConfig,
    pub cae: CaeConfig,
    pub esn: EsnConfig,
    pub train_fraction: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

pub const PRESET_NAMES: [&str; 3] = ["rtb2d", "dc2d", "rtb3d"];

impl PipelineConfig {
    /// 2D rising thermal bubble: 80x160 cells at 62.5 m, 1020 snapshots,
    /// plain CAE with L=4 filters 256/128/64/32, reservoir of 400 units.
    pub fn preset_rtb2d() -> Self {
        Self {
            source: SnapshotSource::Generate(InitialCondition::WarmBubble2d),
            grid: GridSpec::new_2d(80, 160, 62.5, 62.5),
            dynamics: SyntheticDynamicsConfig {
                u: 1.0,
                v: 1.5,
                w: 0.0,
                kappa: 8.0,
                n_steps: 1019,
                dt: 20.0,
            },
            cae: CaeConfig {
                levels: 4,
                filters: vec![256, 128, 64, 32],
                n_f: 1,
                latent_dim: 4,
                dense_widths: vec![],
                ..CaeConfig::default()
            },
            esn: EsnConfig {
                n_h: 400,
                alpha: 0.0095,
                lambda: 0.004,
                ..EsnConfig::default()
            },
            train_fraction: 0.8,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }

    /// 2D density current: 256x64 cells at 100 m, 900 snapshots, extended
    /// CAE with n_f=3 and a 128/32 dense chain, reservoir of 1000 units.
    pub fn preset_dc2d() -> Self {
        Self {
            source: SnapshotSource::Generate(InitialCondition::DensityCurrent),
            grid: GridSpec::new_2d(256, 64, 100.0, 100.0),
            dynamics: SyntheticDynamicsConfig {
                u: 4.0,
                v: 0.5,
                w: 0.0,
                kappa: 20.0,
                n_steps: 899,
                dt: 20.0,
            },
            cae: CaeConfig {
                levels: 4,
                filters: vec![512, 256, 128, 64],
                n_f: 3,
                latent_dim: 4,
                dense_widths: CaeConfig::ecae_dense_widths(),
                ..CaeConfig::default()
            },
            esn: EsnConfig {
                n_h: 1000,
                alpha: 0.0022,
                lambda: 0.0022,
                ..EsnConfig::default()
            },
            train_fraction: 0.8,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }

    /// 3D rising thermal bubble: 40x40x100 cells at 40 m, 500 snapshots,
    /// extended CAE, reservoir of 1200 units.
    pub fn preset_rtb3d() -> Self {
        Self {
            source: SnapshotSource::Generate(InitialCondition::WarmBubble3d),
            grid: GridSpec::new_3d(40, 40, 100, 40.0, 40.0, 40.0),
            dynamics: SyntheticDynamicsConfig {
                u: 0.5,
                v: 0.5,
                w: 1.0,
                kappa: 4.0,
                n_steps: 499,
                dt: 20.0,
            },
            cae: CaeConfig {
                levels: 4,
                filters: vec![512, 256, 128, 64],
                n_f: 3,
                latent_dim: 4,
                dense_widths: CaeConfig::ecae_dense_widths(),
                ..CaeConfig::default()
            },
            esn: EsnConfig {
                n_h: 1200,
                alpha: 0.015,
                lambda: 0.00055,
                ..EsnConfig::default()
            },
            train_fraction: 0.8,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "rtb2d" => Ok(Self::preset_rtb2d()),
            "dc2d" => Ok(Self::preset_dc2d()),
            "rtb3d" => Ok(Self::preset_rtb3d()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset '{other}', expected one of {PRESET_NAMES:?}"
            ))),
        }
    }

    /// Initial condition for generated sources, centered in the configured
    /// domain except for the x-pinned density current.
    pub fn warm_bubble(&self) -> WarmBubbleConfig {
        let g = &self.grid;
        let mid = |n: usize, d: f64, o: f64| o + 0.5 * n as f64 * d;
        match self.source {
            SnapshotSource::Generate(InitialCondition::WarmBubble3d) => WarmBubbleConfig {
                x_c: mid(g.nx, g.dx, g.x0),
                y_c: mid(g.ny, g.dy, g.y0),
                z_c: WarmBubbleConfig::reference_3d().z_c,
                r0: WarmBubbleConfig::reference_3d().r0,
                amplitude: 2.0,
            },
            _ => WarmBubbleConfig::centered_2d(g, 2000.0),
        }
    }

    pub fn density_current(&self) -> DensityCurrentConfig {
        let g = &self.grid;
        DensityCurrentConfig {
            x_c: g.x0 + 0.5 * g.nx as f64 * g.dx,
            ..DensityCurrentConfig::default()
        }
    }

    /// Overlay parsed key = value pairs on top of this configuration.
    /// Unknown keys are rejected to catch typos.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        const KNOWN: &[&str] = &[
            "benchmark",
            "ic",
            "snapshots",
            "train_fraction",
            "seed",
            "out",
            "grid.nx",
            "grid.ny",
            "grid.nz",
            "grid.dx",
            "grid.dy",
            "grid.dz",
            "grid.x0",
            "grid.y0",
            "grid.z0",
            "dynamics.u",
            "dynamics.v",
            "dynamics.w",
            "dynamics.kappa",
            "dynamics.n_steps",
            "dynamics.dt",
            "cae.levels",
            "cae.filters",
            "cae.n_f",
            "cae.latent_dim",
            "cae.dense_widths",
            "cae.activation",
            "cae.kernel",
            "cae.epochs",
            "cae.batch_size",
            "cae.lr",
            "esn.n_h",
            "esn.alpha",
            "esn.lambda",
            "esn.spectral_radius",
            "esn.connectivity",
            "esn.input_scale",
            "esn.washout",
        ];
        for key in kv.keys() {
            if !KNOWN.contains(&key) {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key '{key}'"
                )));
            }
        }
        if let Some(name) = kv.get("benchmark") {
            *self = Self::preset(name)?;
        }
        if let Some(name) = kv.get("ic") {
            self.source = SnapshotSource::Generate(InitialCondition::from_name(name)?);
        }
        if let Some(path) = kv.get("snapshots") {
            if kv.get("ic").is_some() {
                return Err(Error::InvalidArgument(
                    "config sets both 'ic' and 'snapshots'; exactly one source allowed".into(),
                ));
            }
            self.source = SnapshotSource::File(PathBuf::from(path));
        }
        if let Some(v) = kv.parsed("train_fraction")? {
            self.train_fraction = v;
        }
        if let Some(v) = kv.parsed("seed")? {
            self.seed = v;
        }
        if let Some(v) = kv.get("out") {
            self.out_dir = PathBuf::from(v);
        }

        let g = &mut self.grid;
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.parsed($key)? {
                    $field = v;
                }
            };
        }
        set!(g.nx, "grid.nx");
        set!(g.ny, "grid.ny");
        set!(g.nz, "grid.nz");
        set!(g.dx, "grid.dx");
        set!(g.dy, "grid.dy");
        set!(g.dz, "grid.dz");
        set!(g.x0, "grid.x0");
        set!(g.y0, "grid.y0");
        set!(g.z0, "grid.z0");

        let d = &mut self.dynamics;
        set!(d.u, "dynamics.u");
        set!(d.v, "dynamics.v");
        set!(d.w, "dynamics.w");
        set!(d.kappa, "dynamics.kappa");
        set!(d.n_steps, "dynamics.n_steps");
        set!(d.dt, "dynamics.dt");

        let c = &mut self.cae;
        set!(c.levels, "cae.levels");
        if let Some(v) = kv.parsed_list("cae.filters")? {
            c.filters = v;
        }
        set!(c.n_f, "cae.n_f");
        set!(c.latent_dim, "cae.latent_dim");
        if let Some(v) = kv.parsed_list("cae.dense_widths")? {
            c.dense_widths = v;
        }
        if let Some(name) = kv.get("cae.activation") {
            c.activation = Activation::from_name(name)?;
        }
        set!(c.kernel, "cae.kernel");
        set!(c.epochs, "cae.epochs");
        set!(c.batch_size, "cae.batch_size");
        set!(c.lr, "cae.lr");

        let e = &mut self.esn;
        set!(e.n_h, "esn.n_h");
        set!(e.alpha, "esn.alpha");
        set!(e.lambda, "esn.lambda");
        set!(e.spectral_radius_target, "esn.spectral_radius");
        set!(e.connectivity, "esn.connectivity");
        set!(e.input_scale, "esn.input_scale");
        set!(e.washout, "esn.washout");
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if let SnapshotSource::Generate(_) = self.source {
            self.dynamics.validate(&self.grid)?;
        }
        self.cae.validate(&self.grid)?;
        self.esn.validate()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset_rtb2d()
    }
}
