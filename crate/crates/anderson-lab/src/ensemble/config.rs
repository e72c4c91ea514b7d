//! Experiment configuration: a single TOML file with one table per
//! experiment family. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::estimates::CombinationSpec;
use crate::model::ModelParams;

use super::RunError;

/// The experiment families the runner knows how to drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectrum,
    Lyapunov,
    Dos,
    GradientFloor,
    LevelStats,
    SignScan,
    Moments,
    Decay,
    Renorm,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::Dos => "dos",
            ExperimentKind::GradientFloor => "gradient_floor",
            ExperimentKind::LevelStats => "level_stats",
            ExperimentKind::SignScan => "sign_scan",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Renorm => "renorm",
        }
    }
}

/// Energy grid + stream budget for a transfer-matrix γ(E) curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaGridConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
    /// Transfer steps per stream.
    pub steps: usize,
    /// Independent streams averaged per grid point.
    pub streams: usize,
}

impl Default for GammaGridConfig {
    fn default() -> Self {
        Self {
            e_min: -2.0,
            e_max: 2.0,
            points: 41,
            steps: 200_000,
            streams: 4,
        }
    }
}

impl GammaGridConfig {
    pub fn energies(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.e_min];
        }
        (0..self.points)
            .map(|i| {
                self.e_min + (self.e_max - self.e_min) * i as f64 / (self.points - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub bin_width: f64,
    /// Raw energies are embedded in the report while M·|Λ| stays at or
    /// below this limit.
    pub store_energies_limit: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            bin_width: 0.02,
            store_energies_limit: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub grid: GammaGridConfig,
    /// Spectra diagonalized for the Thouless cross-check; 0 skips it.
    pub thouless_spectra: usize,
    pub thouless_box: usize,
    pub bin_width: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            grid: GammaGridConfig {
                e_min: -1.5,
                e_max: 1.5,
                points: 7,
                steps: 1_000_000,
                streams: 1,
            },
            thouless_spectra: 0,
            thouless_box: 400,
            bin_width: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DosConfig {
    pub bin_width: f64,
    /// Optional Thouless γ(E) evaluation grid over the estimated DOS.
    pub thouless_energies: Vec<f64>,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            bin_width: 0.02,
            thouless_energies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientFloorConfig {
    pub offsets: Vec<usize>,
    /// Slack ε in the reference floor C_j = e^{−2(γ̃+ε)j}.
    pub eps: f64,
    /// Fixed threshold; when set it replaces the reference floor.
    pub fixed_c: Option<f64>,
    pub curve: GammaGridConfig,
}

impl Default for GradientFloorConfig {
    fn default() -> Self {
        Self {
            offsets: vec![10, 20, 30],
            eps: 0.1,
            fixed_c: None,
            curve: GammaGridConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelStatsConfig {
    /// Interval lengths I; empty means one decade below the mean spacing.
    pub intervals: Vec<f64>,
    pub bin_width: f64,
}

impl Default for LevelStatsConfig {
    fn default() -> Self {
        Self {
            intervals: Vec::new(),
            bin_width: 0.02,
        }
    }
}

impl LevelStatsConfig {
    /// Log-spaced intervals spanning one decade below the mean spacing
    /// (2+Δ−(−2−Δ))/|Λ| when none are configured.
    pub fn effective_intervals(&self, model: &ModelParams) -> Vec<f64> {
        if !self.intervals.is_empty() {
            return self.intervals.clone();
        }
        let spacing = 2.0 * model.spectral_bound() / model.box_size() as f64;
        let n = 8;
        (0..n)
            .map(|i| spacing * 10f64.powf(-1.0 + i as f64 / (n - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignScanConfig {
    /// Swept site j; the paired coordinate is (ε_j + ε_{j+1})/√2. Defaults
    /// to the midpoint between the combination's outermost centers.
    pub site: Option<usize>,
    pub grid_points: usize,
    /// Fraction of the admissible ε_j⁺ range to sweep, centered on the
    /// realization's own value; 1.0 sweeps the full range.
    pub span: f64,
}

impl Default for SignScanConfig {
    fn default() -> Self {
        Self {
            site: None,
            grid_points: 200,
            span: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    pub s: f64,
    pub delta: f64,
    /// Box sizes for the scaling study; empty means the model's size only.
    pub box_sizes: Vec<usize>,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            s: 0.5,
            delta: 0.05,
            box_sizes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    /// Slack ε in the envelope bound e^{−(γ+ε)n}.
    pub eps: f64,
    /// Onset thresholds n for the violating-fraction report.
    pub thresholds: Vec<usize>,
    pub curve: GammaGridConfig,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            thresholds: vec![10, 20, 30],
            curve: GammaGridConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenormConfig {
    pub s: f64,
    pub delta: f64,
    pub beta: f64,
    /// Multiplier in the β ceiling const·e^{−2(γ_max−γ_min)|x_δ|}.
    pub constant: f64,
    /// Distances |x_j| from the renormalized center.
    pub distances: Vec<usize>,
    /// Renormalized mode's center site; defaults to the box center.
    pub center: Option<usize>,
    /// Quantile used for the bare-vs-renormalized gradient floor check.
    pub quantile: f64,
    pub curve: GammaGridConfig,
}

impl Default for RenormConfig {
    fn default() -> Self {
        Self {
            s: 0.5,
            delta: 0.05,
            beta: 0.01,
            constant: 1.0,
            distances: vec![5, 10, 15, 20],
            center: None,
            quantile: 0.05,
            curve: GammaGridConfig::default(),
        }
    }
}

/// Full experiment description, loadable from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelParams,
    /// Realizations M.
    pub realizations: usize,
    pub master_seed: u64,
    /// Worker threads; 0 lets the pool pick the hardware default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Optional flat per-sample table next to the structured report.
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    /// The combination f = Σ c_k E_{i_k} as (coefficient, center) pairs.
    #[serde(default)]
    pub combination: Option<CombinationSpec>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub dos: DosConfig,
    #[serde(default)]
    pub gradient_floor: GradientFloorConfig,
    #[serde(default)]
    pub level_stats: LevelStatsConfig,
    #[serde(default)]
    pub sign_scan: SignScanConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub renorm: RenormConfig,
}

impl ExperimentConfig {
    /// Minimal runnable configuration for an experiment kind.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let model = ModelParams::new(200, 1.0).expect("static params");
        Self {
            experiment,
            model,
            realizations: 100,
            master_seed: 1,
            threads: 0,
            output_path: None,
            csv_path: None,
            combination: None,
            spectrum: SpectrumConfig::default(),
            lyapunov: LyapunovConfig::default(),
            dos: DosConfig::default(),
            gradient_floor: GradientFloorConfig::default(),
            level_stats: LevelStatsConfig::default(),
            sign_scan: SignScanConfig::default(),
            moments: MomentsConfig::default(),
            decay: DecayConfig::default(),
            renorm: RenormConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Sites a combination is allowed to address in the given box.
    fn check_combination(&self, box_size: usize) -> Result<(), RunError> {
        if let Some(spec) = &self.combination {
            for site in spec.centers() {
                if site >= box_size {
                    return Err(RunError::Config(format!(
                        "combination center {site} outside box of {box_size} sites"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.model
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        if self.realizations == 0 {
            return Err(RunError::Config("realizations must be >= 1".into()));
        }
        let n = self.model.box_size();
        self.check_combination(n)?;

        match self.experiment {
            ExperimentKind::Moments | ExperimentKind::GradientFloor | ExperimentKind::SignScan => {
                let spec = self
                    .combination
                    .as_ref()
                    .ok_or_else(|| {
                        RunError::Config(format!(
                            "experiment '{}' requires a [combination]",
                            self.experiment.name()
                        ))
                    })?;
                if self.experiment == ExperimentKind::Moments {
                    for &size in &self.moments.box_sizes {
                        if size < 2 {
                            return Err(RunError::Config(format!("box size {size} too small")));
                        }
                        if spec.centers().any(|c| c >= size) {
                            return Err(RunError::Config(format!(
                                "combination does not fit in scaling box of {size} sites"
                            )));
                        }
                    }
                    if !(self.moments.s > 0.0 && self.moments.s < 1.0) {
                        return Err(RunError::Config("moments.s must lie in (0,1)".into()));
                    }
                    if !(0.0..1.0).contains(&self.moments.delta) {
                        return Err(RunError::Config("moments.delta must lie in [0,1)".into()));
                    }
                }
                if self.experiment == ExperimentKind::GradientFloor {
                    let base = spec.rightmost_center();
                    for &off in &self.gradient_floor.offsets {
                        if base + off + 1 >= n {
                            return Err(RunError::Config(format!(
                                "offset {off} beyond center {base} leaves the box of {n} sites"
                            )));
                        }
                    }
                }
                if self.experiment == ExperimentKind::SignScan {
                    if self.sign_scan.grid_points < 2 {
                        return Err(RunError::Config("sign_scan.grid_points must be >= 2".into()));
                    }
                    if !(self.sign_scan.span > 0.0 && self.sign_scan.span <= 1.0) {
                        return Err(RunError::Config("sign_scan.span must lie in (0,1]".into()));
                    }
                    if let Some(site) = self.sign_scan.site {
                        if site + 1 >= n {
                            return Err(RunError::Config(format!(
                                "sign_scan.site {site} leaves the box of {n} sites"
                            )));
                        }
                    }
                }
            }
            ExperimentKind::LevelStats => {
                let width = 2.0 * self.model.spectral_bound();
                for &i in &self.level_stats.intervals {
                    if !(i > 0.0 && i <= width) {
                        return Err(RunError::Config(format!(
                            "interval {i} does not fit the spectral width {width}"
                        )));
                    }
                }
            }
            ExperimentKind::Decay => {
                if self.decay.thresholds.is_empty() {
                    return Err(RunError::Config("decay.thresholds must be nonempty".into()));
                }
                let need = self.decay.thresholds.iter().max().unwrap() + 2;
                if n < 2 * need {
                    return Err(RunError::Config(format!(
                        "box of {n} sites leaves no room for decay distances up to {need}"
                    )));
                }
            }
            ExperimentKind::Renorm => {
                let center = self.renorm.center.unwrap_or(n / 2);
                let reach = self.renorm.distances.iter().copied().max().unwrap_or(0);
                if center + reach + 2 >= n {
                    return Err(RunError::Config(format!(
                        "renorm distances reach site {} outside the box of {n} sites",
                        center + reach + 1
                    )));
                }
                if !(self.renorm.s > 0.0 && self.renorm.s < 1.0) {
                    return Err(RunError::Config("renorm.s must lie in (0,1)".into()));
                }
                if self.renorm.beta < 0.0 {
                    return Err(RunError::Config("renorm.beta must be >= 0".into()));
                }
            }
            ExperimentKind::Spectrum | ExperimentKind::Dos | ExperimentKind::Lyapunov => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_kind() {
        for kind in [
            ExperimentKind::Spectrum,
            ExperimentKind::Lyapunov,
            ExperimentKind::Dos,
            ExperimentKind::LevelStats,
            ExperimentKind::Decay,
            ExperimentKind::Renorm,
        ] {
            ExperimentConfig::defaults(kind).validate().unwrap();
        }
    }

    #[test]
    fn spec_requiring_experiments_reject_missing_combination() {
        for kind in [
            ExperimentKind::Moments,
            ExperimentKind::GradientFloor,
            ExperimentKind::SignScan,
        ] {
            let c = ExperimentConfig::defaults(kind);
            assert!(matches!(c.validate(), Err(RunError::Config(_))));
        }
    }

    #[test]
    fn toml_roundtrip_and_unknown_key_rejection() {
        let text = r#"
experiment = "moments"
realizations = 10
master_seed = 7
combination = [[1, 30], [-2, 50], [1, 70]]

[model]
box_size = 100
disorder_half_width = 1.0

[moments]
s = 0.5
delta = 0.05
box_sizes = [100, 200]
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.experiment, ExperimentKind::Moments);
        assert_eq!(config.moments.box_sizes, vec![100, 200]);

        let with_typo = text.replace("master_seed", "master_sed");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&with_typo),
            Err(RunError::Config(_))
        ));

        let nested_typo = text.replace("delta = 0.05", "delta = 0.05\nunknown_knob = 3");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&nested_typo),
            Err(RunError::Config(_))
        ));
    }

    #[test]
    fn default_level_intervals_span_a_decade() {
        let model = ModelParams::new(200, 1.0).unwrap();
        let intervals = LevelStatsConfig::default().effective_intervals(&model);
        let spacing = 6.0 / 200.0;
        assert!((intervals.last().unwrap() - spacing).abs() < 1e-12);
        assert!((intervals[0] - spacing / 10.0).abs() < 1e-12);
        assert!(intervals.windows(2).all(|w| w[0] < w[1]));
    }
}
