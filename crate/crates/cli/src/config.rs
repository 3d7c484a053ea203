//! Experiment configuration. One JSON document drives every command; every
//! section is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pisco_core::kspace::{golden_angle, NoiseDomain};
use pisco_core::optim::OptimizerKind;
use pisco_core::{GradientMode, KernelGeometry, KernelKind, Measure, Orientation, PhantomSpec, PiscoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub phantom: PhantomConfig,
    pub trajectory: TrajectoryConfig,
    pub noise: NoiseConfig,
    pub mask: MaskConfig,
    pub pisco: PiscoSection,
    pub validate: ValidateConfig,
    pub sweep: SweepConfig,
    pub fit: FitSection,
    pub network: NetworkConfig,
    pub train: TrainSection,
    pub recon: ReconConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            phantom: PhantomConfig::default(),
            trajectory: TrajectoryConfig::default(),
            noise: NoiseConfig::default(),
            mask: MaskConfig::default(),
            pisco: PiscoSection::default(),
            validate: ValidateConfig::default(),
            sweep: SweepConfig::default(),
            fit: FitSection::default(),
            network: NetworkConfig::default(),
            train: TrainSection::default(),
            recon: ReconConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    Cardiac,
    StaticDisc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub kind: PhantomKind,
    pub n: usize,
    pub n_coils: usize,
    pub n_frames: usize,
    /// Only used by `static-disc`.
    pub disc_radius: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            kind: PhantomKind::Cardiac,
            n: 64,
            n_coils: 4,
            n_frames: 25,
            disc_radius: 0.3,
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self) -> PhantomSpec {
        match self.kind {
            PhantomKind::Cardiac => PhantomSpec::cardiac(self.n, self.n_coils),
            PhantomKind::StaticDisc => PhantomSpec::static_disc(self.n, self.n_coils, self.disc_radius),
        }
    }

    /// Frame `f` sits at `t = f / (n_frames - 1)`.
    pub fn frame_times(&self) -> Vec<f64> {
        let den = (self.n_frames.max(2) - 1) as f64;
        (0..self.n_frames).map(|f| f as f64 / den).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryChoice {
    /// Complete grid per frame.
    Cartesian,
    RadialGoldenAngle,
    RadialUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub kind: TrajectoryChoice,
    pub spokes_per_frame: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            kind: TrajectoryChoice::Cartesian,
            spokes_per_frame: 4,
        }
    }
}

impl TrajectoryConfig {
    pub fn radial(&self, n_fe: usize, n_frames: usize) -> Option<pisco_core::Trajectory> {
        use pisco_core::{Trajectory, TrajectoryKind};
        let n_spokes = self.spokes_per_frame * n_frames;
        match self.kind {
            TrajectoryChoice::Cartesian => None,
            TrajectoryChoice::RadialGoldenAngle => Some(Trajectory {
                kind: TrajectoryKind::RadialGoldenAngle,
                n_spokes,
                n_fe,
                angle_increment: golden_angle(),
            }),
            TrajectoryChoice::RadialUniform => Some(Trajectory::uniform(n_spokes, n_fe)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Noise standard deviation relative to the median clean k-space magnitude.
    pub sigma_factor: f64,
    pub domain: NoiseDomain,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_factor: 0.0,
            domain: NoiseDomain::Kspace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub acceleration: f64,
    pub center_fraction: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            acceleration: 2.0,
            center_fraction: 0.04,
        }
    }
}

/// Consistency settings; distances are in grid cells (`1/n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiscoSection {
    pub kernel: KernelKind,
    pub shape: [usize; 2],
    pub delta_cells: f64,
    pub orientation: Orientation,
    pub alpha: f64,
    pub f_od: f64,
    pub n_s_min: usize,
    pub exclusion_cells: f64,
    pub measure: Measure,
    pub gradient_mode: GradientMode,
    pub normalize_entries: bool,
}

impl Default for PiscoSection {
    fn default() -> Self {
        let base = PiscoConfig::for_grid(64);
        Self {
            kernel: KernelKind::Cartesian,
            shape: [3, 2],
            delta_cells: 2.0,
            orientation: Orientation::YMajor,
            alpha: base.alpha,
            f_od: base.f_od,
            n_s_min: base.n_s_min,
            exclusion_cells: 10.0,
            measure: Measure::Residual,
            gradient_mode: GradientMode::FixedWeights,
            normalize_entries: false,
        }
    }
}

impl PiscoSection {
    pub fn build(&self, n_fe: usize, lambda: f64) -> PiscoConfig {
        let n = n_fe as f64;
        PiscoConfig {
            geometry: KernelGeometry {
                kind: self.kernel,
                shape: self.shape,
                delta: self.delta_cells / n,
                orientation: self.orientation,
            },
            alpha: self.alpha,
            f_od: self.f_od,
            n_s_min: self.n_s_min,
            exclusion_radius: self.exclusion_cells / n,
            lambda,
            measure: self.measure,
            gradient_mode: self.gradient_mode,
            normalize_entries: self.normalize_entries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub kernels: Vec<KernelKind>,
    pub shape: [usize; 2],
    pub seeds: Vec<u64>,
    /// Phantom time the ideal k-space is simulated at.
    pub t: f64,
    /// Centre exclusion of the sorted/random comparison pool, in grid cells.
    pub sorting_exclusion_cells: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            kernels: vec![KernelKind::Cartesian, KernelKind::Radial, KernelKind::RadialEquidistant],
            shape: [3, 2],
            seeds: vec![0, 1, 2],
            t: 0.0,
            sorting_exclusion_cells: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Noise levels relative to the median clean k-space magnitude.
    pub sigma_factors: Vec<f64>,
    pub domains: Vec<NoiseDomain>,
    pub measures: Vec<Measure>,
    pub seeds: Vec<u64>,
    pub t: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_factors: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            domains: vec![NoiseDomain::Kspace, NoiseDomain::Image],
            measures: vec![Measure::Residual, Measure::Distance],
            seeds: vec![0, 1, 2],
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Defaults to `kspace.bin` in the output directory.
    pub kspace: Option<PathBuf>,
    /// Defaults to `mask.json` in the output directory.
    pub mask: Option<PathBuf>,
    pub frame: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub precondition_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            kspace: None,
            mask: None,
            frame: 0,
            lambda: 5e-4,
            epochs: 500,
            precondition_epochs: 100,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::AdamAmsgrad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub n_features: usize,
    pub sigma: f64,
    pub hidden: usize,
    pub n_layers: usize,
    pub omega: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_features: 64,
            sigma: 1.0,
            hidden: 64,
            n_layers: 4,
            omega: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Defaults to `kspace.bin` in the output directory.
    pub kspace: Option<PathBuf>,
    pub lambda: f64,
    pub epochs: usize,
    pub e_pre: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub dc_epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            kspace: None,
            lambda: 0.1,
            epochs: 1000,
            e_pre: 200,
            batch_size: 10_000,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::AdamAmsgrad,
            dc_epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Defaults to `checkpoint.bin` in the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the phantom frame times.
    pub times: Option<Vec<f64>>,
    /// Grid size; defaults to the phantom size.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Defaults to `recon` in the output directory.
    pub recon_dir: Option<PathBuf>,
    /// Defaults to `truth` in the output directory.
    pub reference_dir: Option<PathBuf>,
    pub method: String,
    pub acceleration: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            recon_dir: None,
            reference_dir: None,
            method: "nik".into(),
            acceleration: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| crate::ConfigError(format!("{}: {e}", path.display())).into())
    }

    /// Resolves an optional input path, defaulting to `name` in the output directory.
    pub fn input(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.output_dir.join(name))
    }

    pub fn check(&self) -> Result<(), String> {
        let p = &self.phantom;
        if p.n < 8 || p.n_coils == 0 || p.n_frames == 0 {
            return Err(format!(
                "phantom needs n >= 8, n_coils >= 1 and n_frames >= 1, got {}, {}, {}",
                p.n, p.n_coils, p.n_frames
            ));
        }
        if self.trajectory.kind != TrajectoryChoice::Cartesian && self.trajectory.spokes_per_frame == 0 {
            return Err("trajectory.spokes_per_frame must be positive".into());
        }
        if !(self.noise.sigma_factor >= 0.0) {
            return Err("noise.sigma_factor must be >= 0".into());
        }
        if self.fit.frame >= p.n_frames {
            return Err(format!("fit.frame {} outside 0..{}", self.fit.frame, p.n_frames));
        }
        if self.sweep.sigma_factors.windows(2).any(|w| w[1] <= w[0]) {
            return Err("sweep.sigma_factors must be strictly increasing".into());
        }
        Ok(())
    }
}
