//! Structured experiment reports: a versioned JSON document per run, plus
//! exact pooling of independent batches.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::fit::{fit_exponent, FitResult};
use super::RunError;
use crate::estimates::{fractional_moment, LevelPoint, MomentReport};
use crate::lyapunov::{DosAccumulator, DosEstimate, LyapunovCurve};

pub const SCHEMA_VERSION: u32 = 1;

/// Exclusion bookkeeping: every one of the M realizations is either
/// included or sits in exactly one reason bucket.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExclusionLog {
    pub realizations: usize,
    pub included: usize,
    /// Reason code → count; BTreeMap keeps serialization order stable.
    pub excluded: BTreeMap<String, usize>,
}

impl ExclusionLog {
    pub fn excluded_total(&self) -> usize {
        self.excluded.values().sum()
    }

    pub fn merge(&mut self, other: &ExclusionLog) {
        self.realizations += other.realizations;
        self.included += other.included;
        for (k, v) in &other.excluded {
            *self.excluded.entry(k.clone()).or_insert(0) += v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPayload {
    pub histogram: DosEstimate,
    /// Raw per-realization spectra, embedded only for small runs.
    pub energies: Option<Vec<Vec<f64>>>,
    pub max_abs_energy: f64,
    pub spectral_bound: f64,
    pub total_reassignments: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPayload {
    pub transfer: LyapunovCurve,
    /// Per grid point, the per-stream γ estimates backing the mean.
    pub stream_gammas: Vec<Vec<f64>>,
    pub thouless: Option<LyapunovCurve>,
    /// Pooled spectra behind the Thouless curve.
    pub dos: Option<DosEstimate>,
    pub max_abs_deviation: Option<f64>,
    pub deviation_fraction_of_gamma_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosPayload {
    pub dos: DosEstimate,
    pub thouless: Option<LyapunovCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorPointReport {
    pub offset: usize,
    pub probability: f64,
    pub hits: u64,
    pub count: u64,
    pub mean_floor: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientFloorPayload {
    pub points: Vec<FloorPointReport>,
    pub eps: f64,
    pub monotone_nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStatsPayload {
    pub points: Vec<LevelPoint>,
    pub dos: DosEstimate,
    pub sup_density: f64,
    /// Log-log slope of Pr(n_I ≥ 2) against I.
    pub pair_exponent: Option<FitResult>,
    pub all_below_minami: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignScanPayload {
    pub realizations_with_flip: u64,
    pub flip_fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub total_flips: u64,
    /// Minimal adjacent-level gap at each flip.
    pub flip_gaps: Vec<f64>,
    /// Pooled unperturbed adjacent-level gaps (sorted).
    pub adjacent_gaps: Vec<f64>,
    pub p10_gap: f64,
    pub flips_below_p10: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSizeReport {
    pub box_size: usize,
    pub seeds: Vec<u64>,
    /// Included f samples, one per seed.
    pub f_samples: Vec<f64>,
    pub report: MomentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsPayload {
    pub sizes: Vec<MomentSizeReport>,
    /// max/min ratio of trimmed means across sizes.
    pub trimmed_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayThresholdReport {
    pub threshold: usize,
    pub violations: u64,
    pub states: u64,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPayload {
    pub thresholds: Vec<DecayThresholdReport>,
    pub states_considered: u64,
    pub monotone_nonincreasing: bool,
    pub curve: LyapunovCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormDistanceReport {
    pub distance: usize,
    /// ⟨|∂V/∂ε_j⁺|ˢ⟩_δ at this distance.
    pub moment: f64,
    pub trim_count: usize,
    /// |∂V/∂ε_j⁺| samples, one per included realization.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormPayload {
    pub beta: f64,
    pub beta_ceiling: f64,
    pub beta_below_ceiling: bool,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub distances: Vec<RenormDistanceReport>,
    pub fitted_rate: Option<FitResult>,
    /// 2·γ_min·s, the reference decay rate.
    pub reference_rate: f64,
    /// |∂f/∂ε_j⁺| samples at the largest distance.
    pub bare_gradient_samples: Vec<f64>,
    /// |∂f′/∂ε_j⁺| samples at the largest distance.
    pub renormalized_gradient_samples: Vec<f64>,
    pub floor_bare: f64,
    pub floor_renormalized: f64,
    pub floor_rel_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Spectrum(SpectrumPayload),
    Lyapunov(LyapunovPayload),
    Dos(DosPayload),
    GradientFloor(GradientFloorPayload),
    LevelStats(LevelStatsPayload),
    SignScan(SignScanPayload),
    Moments(MomentsPayload),
    Decay(DecayPayload),
    Renorm(RenormPayload),
}

/// Wall-clock diagnostics; excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Runtime {
    pub wall_ms: u64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub schema: u32,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub exclusions: ExclusionLog,
    pub payload: Payload,
    pub runtime: Runtime,
}

#[derive(Serialize)]
struct DeterministicView<'a> {
    schema: u32,
    experiment: ExperimentKind,
    config: &'a ExperimentConfig,
    exclusions: &'a ExclusionLog,
    payload: &'a Payload,
}

impl EnsembleReport {
    /// The numerical payload as JSON, without wall-time or scheduling
    /// fields; two runs of the same config must agree on this
    /// byte-for-byte regardless of worker count.
    pub fn numerical_payload_json(&self) -> String {
        let mut config = self.config.clone();
        config.threads = 0;
        let view = DeterministicView {
            schema: self.schema,
            experiment: self.experiment,
            config: &config,
            exclusions: &self.exclusions,
            payload: &self.payload,
        };
        serde_json::to_string_pretty(&view).expect("report serialization")
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut text = serde_json::to_string_pretty(self).expect("report serialization");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)?;
        let report: EnsembleReport =
            serde_json::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?;
        Ok(report)
    }
}

/// Configs are poolable when everything but seeds, counts, and output
/// locations agrees.
fn normalized(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.master_seed = 0;
    c.realizations = 0;
    c.threads = 0;
    c.output_path = None;
    c.csv_path = None;
    c
}

fn rebuild_dos(parts: Vec<&DosEstimate>, bound: f64) -> Result<DosEstimate, RunError> {
    let first = parts.first().ok_or_else(|| RunError::SchemaMismatch("no parts".into()))?;
    let bin_width = first.bin_width();
    let mut acc = DosAccumulator::new(bound, bin_width);
    for d in &parts {
        if d.bins() != first.bins() {
            return Err(RunError::SchemaMismatch("histogram binning differs".into()));
        }
        // Bin counts roundtrip exactly through density = c/(total·width).
        let total = d.sample_count as f64;
        for (b, &rho) in d.density.iter().enumerate() {
            let count = (rho * total * d.bin_width()).round() as u64;
            acc.add_count(b, count);
        }
    }
    acc.finish().map_err(|e| RunError::SchemaMismatch(e.to_string()))
}

/// Pool independent batches of the same experiment: histograms and counts
/// add, sample buffers concatenate, and every probability, trimmed mean,
/// and fit is recomputed from the pooled data.
pub fn aggregate(reports: &[EnsembleReport]) -> Result<EnsembleReport, RunError> {
    let first = reports
        .first()
        .ok_or_else(|| RunError::SchemaMismatch("nothing to aggregate".into()))?;
    let reference = normalized(&first.config);
    for r in reports {
        if r.schema != first.schema {
            return Err(RunError::SchemaMismatch("schema version differs".into()));
        }
        if r.experiment != first.experiment {
            return Err(RunError::SchemaMismatch("experiment kind differs".into()));
        }
        if normalized(&r.config) != reference {
            return Err(RunError::SchemaMismatch("experiment parameters differ".into()));
        }
    }

    let mut exclusions = ExclusionLog::default();
    for r in reports {
        exclusions.merge(&r.exclusions);
    }

    let bound = first.config.model.spectral_bound();
    let payload = match &first.payload {
        Payload::Moments(_) => {
            let mut sizes: Vec<MomentSizeReport> = Vec::new();
            for r in reports {
                let Payload::Moments(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                for (i, size) in p.sizes.iter().enumerate() {
                    if let Some(slot) = sizes.get_mut(i) {
                        if slot.box_size != size.box_size {
                            return Err(RunError::SchemaMismatch("size grids differ".into()));
                        }
                        slot.seeds.extend_from_slice(&size.seeds);
                        slot.f_samples.extend_from_slice(&size.f_samples);
                    } else {
                        sizes.push(size.clone());
                    }
                }
            }
            let (s, delta) = (first.config.moments.s, first.config.moments.delta);
            for size in &mut sizes {
                size.report = fractional_moment(&size.f_samples, s, delta)
                    .map_err(|e| RunError::SchemaMismatch(e.to_string()))?;
            }
            let trimmed_spread = spread(sizes.iter().map(|s| s.report.trimmed_mean));
            Payload::Moments(MomentsPayload {
                sizes,
                trimmed_spread,
            })
        }
        Payload::LevelStats(_) => {
            let mut points: Vec<LevelPoint> = Vec::new();
            let mut dos_parts = Vec::new();
            for r in reports {
                let Payload::LevelStats(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                dos_parts.push(&p.dos);
                for (i, pt) in p.points.iter().enumerate() {
                    if let Some(slot) = points.get_mut(i) {
                        if slot.interval != pt.interval {
                            return Err(RunError::SchemaMismatch("interval grids differ".into()));
                        }
                        slot.windows += pt.windows;
                        slot.at_least_one += pt.at_least_one;
                        slot.at_least_two += pt.at_least_two;
                    } else {
                        points.push(pt.clone());
                    }
                }
            }
            let dos = rebuild_dos(dos_parts, bound)?;
            let sup = dos.sup_density;
            let l = first.config.model.box_size() as f64;
            for pt in &mut points {
                pt.p_ge1 = pt.at_least_one as f64 / pt.windows as f64;
                pt.p_ge2 = pt.at_least_two as f64 / pt.windows as f64;
                let scale = std::f64::consts::PI * sup * pt.interval * l;
                pt.wegner_bound = scale;
                pt.minami_bound = scale * scale;
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|p| p.p_ge2 > 0.0)
                .map(|p| (p.interval, p.p_ge2))
                .unzip();
            let pair_exponent = fit_exponent(&xs, &ys).ok();
            let all_below_minami = points.iter().all(|p| p.p_ge2 <= p.minami_bound);
            Payload::LevelStats(LevelStatsPayload {
                points,
                sup_density: sup,
                dos,
                pair_exponent,
                all_below_minami,
            })
        }
        Payload::Spectrum(_) => {
            let mut dos_parts = Vec::new();
            let mut energies: Option<Vec<Vec<f64>>> = Some(Vec::new());
            let mut max_abs = 0.0f64;
            let mut reassigned = 0u64;
            for r in reports {
                let Payload::Spectrum(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                dos_parts.push(&p.histogram);
                max_abs = max_abs.max(p.max_abs_energy);
                reassigned += p.total_reassignments;
                match (&mut energies, &p.energies) {
                    (Some(acc), Some(e)) => acc.extend(e.iter().cloned()),
                    _ => energies = None,
                }
            }
            Payload::Spectrum(SpectrumPayload {
                histogram: rebuild_dos(dos_parts, bound)?,
                energies,
                max_abs_energy: max_abs,
                spectral_bound: bound,
                total_reassignments: reassigned,
            })
        }
        Payload::Dos(_) => {
            let mut dos_parts = Vec::new();
            for r in reports {
                let Payload::Dos(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                dos_parts.push(&p.dos);
            }
            let dos = rebuild_dos(dos_parts, bound)?;
            let thouless = match &first.payload {
                Payload::Dos(p) => p.thouless.as_ref().map(|curve| {
                    let gamma: Vec<f64> = curve
                        .energies
                        .iter()
                        .map(|&e| crate::lyapunov::lyapunov_thouless(&dos, e))
                        .collect();
                    LyapunovCurve::new(
                        curve.energies.clone(),
                        gamma,
                        vec![0.0; curve.energies.len()],
                        crate::lyapunov::GammaMethod::Thouless,
                    )
                }),
                _ => None,
            };
            Payload::Dos(DosPayload { dos, thouless })
        }
        Payload::GradientFloor(_) => {
            let mut points: Vec<FloorPointReport> = Vec::new();
            let mut floor_mass: Vec<f64> = Vec::new();
            for r in reports {
                let Payload::GradientFloor(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                for (i, pt) in p.points.iter().enumerate() {
                    if let Some(slot) = points.get_mut(i) {
                        if slot.offset != pt.offset {
                            return Err(RunError::SchemaMismatch("offset grids differ".into()));
                        }
                        slot.hits += pt.hits;
                        slot.count += pt.count;
                        floor_mass[i] += pt.mean_floor * pt.count as f64;
                    } else {
                        points.push(pt.clone());
                        floor_mass.push(pt.mean_floor * pt.count as f64);
                    }
                }
            }
            for (pt, mass) in points.iter_mut().zip(&floor_mass) {
                pt.probability = pt.hits as f64 / pt.count as f64;
                pt.mean_floor = mass / pt.count as f64;
                let (lo, hi) = super::fit::wilson_interval(pt.hits, pt.count);
                pt.wilson_low = lo;
                pt.wilson_high = hi;
            }
            let monotone = points
                .windows(2)
                .all(|w| w[1].probability <= w[0].probability + 1e-12);
            let eps = match &first.payload {
                Payload::GradientFloor(p) => p.eps,
                _ => unreachable!(),
            };
            Payload::GradientFloor(GradientFloorPayload {
                points,
                eps,
                monotone_nonincreasing: monotone,
            })
        }
        Payload::SignScan(_) => {
            let mut with_flip = 0u64;
            let mut total_flips = 0u64;
            let mut flip_gaps = Vec::new();
            let mut adjacent = Vec::new();
            let mut count = 0u64;
            for r in reports {
                let Payload::SignScan(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                with_flip += p.realizations_with_flip;
                total_flips += p.total_flips;
                flip_gaps.extend_from_slice(&p.flip_gaps);
                adjacent.extend_from_slice(&p.adjacent_gaps);
                count += r.exclusions.included as u64;
            }
            adjacent.sort_by(f64::total_cmp);
            flip_gaps.sort_by(f64::total_cmp);
            let p10 = quantile_sorted(&adjacent, 0.10);
            let below = flip_gaps.iter().filter(|&&g| g < p10).count() as u64;
            let (lo, hi) = super::fit::wilson_interval(with_flip, count);
            Payload::SignScan(SignScanPayload {
                realizations_with_flip: with_flip,
                flip_fraction: with_flip as f64 / count as f64,
                wilson_low: lo,
                wilson_high: hi,
                total_flips,
                flip_gaps,
                adjacent_gaps: adjacent,
                p10_gap: p10,
                flips_below_p10: below,
            })
        }
        Payload::Decay(_) => {
            let mut thresholds: Vec<DecayThresholdReport> = Vec::new();
            let mut states = 0u64;
            for r in reports {
                let Payload::Decay(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                states += p.states_considered;
                for (i, t) in p.thresholds.iter().enumerate() {
                    if let Some(slot) = thresholds.get_mut(i) {
                        if slot.threshold != t.threshold {
                            return Err(RunError::SchemaMismatch("threshold grids differ".into()));
                        }
                        slot.violations += t.violations;
                        slot.states += t.states;
                    } else {
                        thresholds.push(t.clone());
                    }
                }
            }
            for t in &mut thresholds {
                t.fraction = t.violations as f64 / t.states.max(1) as f64;
                let (lo, hi) = super::fit::wilson_interval(t.violations, t.states);
                t.wilson_low = lo;
                t.wilson_high = hi;
            }
            let monotone = thresholds
                .windows(2)
                .all(|w| w[1].fraction <= w[0].fraction + 1e-12);
            let curve = match &first.payload {
                Payload::Decay(p) => p.curve.clone(),
                _ => unreachable!(),
            };
            Payload::Decay(DecayPayload {
                thresholds,
                states_considered: states,
                monotone_nonincreasing: monotone,
                curve,
            })
        }
        Payload::Renorm(_) => {
            let Payload::Renorm(base) = &first.payload else {
                unreachable!()
            };
            let mut distances: Vec<RenormDistanceReport> = Vec::new();
            let mut bare = Vec::new();
            let mut renormed = Vec::new();
            for r in reports {
                let Payload::Renorm(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                bare.extend_from_slice(&p.bare_gradient_samples);
                renormed.extend_from_slice(&p.renormalized_gradient_samples);
                for (i, d) in p.distances.iter().enumerate() {
                    if let Some(slot) = distances.get_mut(i) {
                        if slot.distance != d.distance {
                            return Err(RunError::SchemaMismatch("distance grids differ".into()));
                        }
                        slot.samples.extend_from_slice(&d.samples);
                    } else {
                        distances.push(d.clone());
                    }
                }
            }
            let (s, delta) = (first.config.renorm.s, first.config.renorm.delta);
            for d in &mut distances {
                let (m, trim) = crate::estimates::trimmed_power_moment(&d.samples, s, delta);
                d.moment = m;
                d.trim_count = trim;
            }
            let xs: Vec<f64> = distances.iter().map(|d| d.distance as f64).collect();
            let ys: Vec<f64> = distances.iter().map(|d| d.moment).collect();
            let fitted_rate = super::fit::fit_decay_rate(&xs, &ys).ok();
            let quantile = first.config.renorm.quantile;
            bare.sort_by(f64::total_cmp);
            renormed.sort_by(f64::total_cmp);
            let floor_bare = quantile_sorted(&bare, quantile);
            let floor_renormalized = quantile_sorted(&renormed, quantile);
            let floor_rel_diff = if floor_bare != 0.0 {
                (floor_renormalized - floor_bare).abs() / floor_bare.abs()
            } else {
                f64::INFINITY
            };
            Payload::Renorm(RenormPayload {
                distances,
                fitted_rate,
                bare_gradient_samples: bare,
                renormalized_gradient_samples: renormed,
                floor_bare,
                floor_renormalized,
                floor_rel_diff,
                ..base.clone()
            })
        }
        Payload::Lyapunov(_) => {
            let Payload::Lyapunov(base) = &first.payload else {
                unreachable!()
            };
            let mut streams: Vec<Vec<f64>> = vec![Vec::new(); base.transfer.energies.len()];
            for r in reports {
                let Payload::Lyapunov(p) = &r.payload else {
                    return Err(RunError::SchemaMismatch("payload kind differs".into()));
                };
                if p.transfer.energies != base.transfer.energies {
                    return Err(RunError::SchemaMismatch("energy grids differ".into()));
                }
                for (slot, s) in streams.iter_mut().zip(&p.stream_gammas) {
                    slot.extend_from_slice(s);
                }
            }
            let (gamma, stderr): (Vec<f64>, Vec<f64>) = streams
                .iter()
                .map(|g| {
                    let n = g.len() as f64;
                    let mean = g.iter().sum::<f64>() / n;
                    let se = if g.len() > 1 {
                        let var =
                            g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                        (var / n).sqrt()
                    } else {
                        0.0
                    };
                    (mean, se)
                })
                .unzip();
            let transfer = LyapunovCurve::new(
                base.transfer.energies.clone(),
                gamma,
                stderr,
                crate::lyapunov::GammaMethod::Transfer,
            );
            Payload::Lyapunov(LyapunovPayload {
                transfer,
                stream_gammas: streams,
                thouless: base.thouless.clone(),
                dos: base.dos.clone(),
                max_abs_deviation: base.max_abs_deviation,
                deviation_fraction_of_gamma_max: base.deviation_fraction_of_gamma_max,
            })
        }
    };

    Ok(EnsembleReport {
        schema: first.schema,
        experiment: first.experiment,
        config: first.config.clone(),
        exclusions,
        payload,
        runtime: Runtime::default(),
    })
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(hi / lo)
}

/// Lower empirical quantile of an ascending-sorted buffer.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 * q).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}
