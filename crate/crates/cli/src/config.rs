//! Run configuration read from a sectioned TOML file.

use crate::CliError;
use horizon_core::carleman::{SampleDensity, SearchLimits};
use horizon_core::decay::DataFamily;
use horizon_core::model::{build_model_allow_zero_potential, ModelSpec};
use horizon_core::spectra::{DepthProfile, Scheme, Window};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for randomized checks in `verify`.
    pub seed: u64,
    pub model: ModelBlock,
    pub discretization: DiscretizationBlock,
    pub frequency: FrequencyBlock,
    pub carleman: CarlemanBlock,
    pub decay: DecayBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub mass: f64,
    pub lambda: f64,
    pub v0: f64,
    pub ell: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationBlock {
    pub n: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencyBlock {
    /// Semiclassical band [a, b] for z.
    pub band: [f64; 2],
    pub h_list: Vec<f64>,
    pub points_per_h: usize,
    /// Depth profile |Im ω| = exp(−depth_c1·Re ω) of the strip probes.
    pub depth_c1: f64,
    /// Search window for `qnm`.
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanBlock {
    pub nr: usize,
    pub ndir: usize,
    pub ntau: usize,
    pub alpha_cap: f64,
    pub eps0: f64,
    /// Fixed pseudoconvexity parameters; both must be given to skip the search.
    pub m: Option<f64>,
    pub delta: Option<f64>,
    /// Rows in carleman.csv.
    pub profile_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayBlock {
    pub t_final: f64,
    /// Defaults to the spectral-radius step of the generator.
    pub dt: Option<f64>,
    pub data: DataFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock { mass: 1.0, lambda: 0.03, v0: 0.1, ell: 2 }
    }
}

impl Default for DiscretizationBlock {
    fn default() -> Self {
        DiscretizationBlock { n: 48, scheme: Scheme::Collocation }
    }
}

impl Default for FrequencyBlock {
    fn default() -> Self {
        FrequencyBlock {
            band: [0.5, 2.0],
            h_list: vec![1.0, 0.5, 0.25],
            points_per_h: 6,
            depth_c1: 5.0,
            window: Window { re_min: -1.0, re_max: 1.0, im_min: -0.4, im_max: 0.1 },
        }
    }
}

impl Default for CarlemanBlock {
    fn default() -> Self {
        let d = SampleDensity { nr: 240, ndir: 64, ntau: 48 };
        let l = SearchLimits::default();
        CarlemanBlock {
            nr: d.nr,
            ndir: d.ndir,
            ntau: d.ntau,
            alpha_cap: l.alpha_cap,
            eps0: l.eps0,
            m: None,
            delta: None,
            profile_rows: 400,
        }
    }
}

impl Default for DecayBlock {
    fn default() -> Self {
        DecayBlock { t_final: 1000.0, dt: None, data: DataFamily::default() }
    }
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: PathBuf::from("out") }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    check(v.is_finite() && v > 0.0, || format!("{name} must be positive and finite, got {v}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Range checks; nothing is computed before this passes.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model_spec()?;
        let d = &self.discretization;
        check((8..=1024).contains(&d.n), || format!("discretization.n must lie in [8, 1024], got {}", d.n))?;

        let f = &self.frequency;
        let [a, b] = f.band;
        positive("frequency.band[0]", a)?;
        check(b.is_finite() && b > a, || format!("frequency.band must satisfy 0 < a < b, got [{a}, {b}]"))?;
        check(!f.h_list.is_empty(), || "frequency.h_list is empty".into())?;
        for &h in &f.h_list {
            check(h.is_finite() && h > 0.0 && h <= 1.0, || {
                format!("frequency.h_list entries must lie in (0, 1], got {h}")
            })?;
        }
        check(f.points_per_h >= 1, || "frequency.points_per_h must be at least 1".into())?;
        positive("frequency.depth_c1", f.depth_c1)?;
        let w = &f.window;
        check(
            [w.re_min, w.re_max, w.im_min, w.im_max].iter().all(|v| v.is_finite())
                && w.re_min <= w.re_max
                && w.im_min <= w.im_max,
            || format!("frequency.window is not a rectangle: {w:?}"),
        )?;

        let c = &self.carleman;
        check(c.nr >= 2 && c.ntau >= 2, || "carleman.nr and carleman.ntau must be at least 2".into())?;
        check(c.ndir >= 4, || "carleman.ndir must be at least 4".into())?;
        check(c.alpha_cap.is_finite() && c.alpha_cap >= 1.0, || {
            format!("carleman.alpha_cap must be at least 1, got {}", c.alpha_cap)
        })?;
        check(c.eps0 > 0.0 && c.eps0 <= 1.0, || format!("carleman.eps0 must lie in (0, 1], got {}", c.eps0))?;
        check(c.m.is_some() == c.delta.is_some(), || "carleman.m and carleman.delta must be given together".into())?;
        if let (Some(m), Some(delta)) = (c.m, c.delta) {
            positive("carleman.m", m)?;
            check(delta > 0.0 && delta < 1.0, || format!("carleman.delta must lie in (0, 1), got {delta}"))?;
        }
        check(c.profile_rows >= 2, || "carleman.profile_rows must be at least 2".into())?;

        let t = &self.decay;
        check(t.t_final.is_finite() && t.t_final >= 1.0, || {
            format!("decay.t_final must be at least 1, got {}", t.t_final)
        })?;
        if let Some(dt) = t.dt {
            positive("decay.dt", dt)?;
        }
        match t.data {
            DataFamily::Gaussian { center, width } => {
                check((0.0..=1.0).contains(&center), || format!("decay.data center must lie in [0, 1], got {center}"))?;
                positive("decay.data width", width)?;
            }
            DataFamily::Mode | DataFamily::Constant => {}
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        build_model_allow_zero_potential(m.mass, m.lambda, m.v0, m.ell)
            .map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn band(&self) -> (f64, f64) {
        (self.frequency.band[0], self.frequency.band[1])
    }

    pub fn density(&self) -> SampleDensity {
        SampleDensity { nr: self.carleman.nr, ndir: self.carleman.ndir, ntau: self.carleman.ntau }
    }

    pub fn limits(&self) -> SearchLimits {
        SearchLimits { alpha_cap: self.carleman.alpha_cap, eps0: self.carleman.eps0 }
    }

    pub fn depth(&self) -> DepthProfile {
        DepthProfile { c1: self.frequency.depth_c1 }
    }
}
