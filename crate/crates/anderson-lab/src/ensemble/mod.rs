//! Deterministic parallel Monte Carlo orchestration.
//!
//! A run is a pure function of its [`ExperimentConfig`]: realization `r`
//! draws its disorder from `seed = mix(master_seed, r)`, workers never share
//! mutable state, and every floating-point reduction happens single-threaded
//! over index-ordered (or sorted) buffers — so the numerical payload is
//! byte-identical for any worker count.

mod config;
mod fit;
mod report;

pub use config::{
    DecayConfig, DosConfig, ExperimentConfig, ExperimentKind, GammaGridConfig,
    GradientFloorConfig, LevelStatsConfig, LyapunovConfig, MomentsConfig, RenormConfig,
    SignScanConfig, SpectrumConfig,
};
pub use fit::{fit_decay_rate, fit_exponent, linear_fit, wilson_interval, FitError, FitResult};
pub use report::{
    aggregate, DecayPayload, DecayThresholdReport, DosPayload, EnsembleReport, ExclusionLog,
    FloorPointReport, GradientFloorPayload, LevelStatsPayload, LyapunovPayload, MomentSizeReport,
    MomentsPayload, Payload, RenormDistanceReport, RenormPayload, Runtime, SignScanPayload,
    SpectrumPayload, SCHEMA_VERSION,
};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimates::{
    self, fractional_moment, paired_gradient, sign_change_scan, sweep_grid_with_span,
    trimmed_power_moment, CombinationSpec, LevelPoint,
};
use crate::lyapunov::{
    gamma_extrema, lyapunov_thouless, lyapunov_transfer, DosAccumulator, GammaMethod,
    LyapunovCurve,
};
use crate::model::{
    diagonalize_default, sample_disorder, ModelError, ModelParams,
};
use crate::renorm::{beta_threshold, v_derivative_paired, RenormError};
use crate::rng::{mix64, realization_seed};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("convergence failures exceeded the 1% budget: {failures} of {realizations}")]
    FailureBudget {
        failures: usize,
        realizations: usize,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Exit code the CLI maps each failure to.
impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::SchemaMismatch(_) => 2,
            RunError::FailureBudget { .. } | RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

const REASON_CONVERGENCE: &str = "convergence_failure";
const REASON_DEGENERATE: &str = "degenerate_level";

/// Seed namespace for auxiliary γ(E) curves.
const NS_CURVE: u64 = 0x6375_7276_6500;
/// Seed namespace for auxiliary DOS ensembles.
const NS_DOS: u64 = 0x646f_7300;

enum Item<T> {
    Ok(T),
    Excluded(&'static str),
}

/// Flat per-sample table written next to the report.
struct CsvDoc {
    header: &'static str,
    rows: Vec<String>,
}

impl CsvDoc {
    fn write(&self, path: &Path) -> Result<(), RunError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut text = String::with_capacity(self.rows.len() * 32 + 64);
        text.push_str(self.header);
        text.push('\n');
        for row in &self.rows {
            text.push_str(row);
            text.push('\n');
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn exclusion_log(realizations: usize, reasons: &[&'static str]) -> ExclusionLog {
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    for &r in reasons {
        *excluded.entry(r.to_string()).or_insert(0) += 1;
    }
    ExclusionLog {
        realizations,
        included: realizations - reasons.len(),
        excluded,
    }
}

fn check_budget(log: &ExclusionLog) -> Result<(), RunError> {
    let failures = log.excluded.get(REASON_CONVERGENCE).copied().unwrap_or(0);
    if failures as f64 > 0.01 * log.realizations as f64 {
        return Err(RunError::FailureBudget {
            failures,
            realizations: log.realizations,
        });
    }
    Ok(())
}

/// Run the configured experiment and persist its report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EnsembleReport, RunError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let started = Instant::now();

    let (exclusions, payload, csv) = match config.experiment {
        ExperimentKind::Spectrum => run_spectrum(config, &pool)?,
        ExperimentKind::Lyapunov => run_lyapunov(config, &pool)?,
        ExperimentKind::Dos => run_dos(config, &pool)?,
        ExperimentKind::GradientFloor => run_gradient_floor(config, &pool)?,
        ExperimentKind::LevelStats => run_level_stats(config, &pool)?,
        ExperimentKind::SignScan => run_sign_scan(config, &pool)?,
        ExperimentKind::Moments => run_moments(config, &pool)?,
        ExperimentKind::Decay => run_decay(config, &pool)?,
        ExperimentKind::Renorm => run_renorm(config, &pool)?,
    };
    check_budget(&exclusions)?;

    let report = EnsembleReport {
        schema: SCHEMA_VERSION,
        experiment: config.experiment,
        config: config.clone(),
        exclusions,
        payload,
        runtime: Runtime {
            wall_ms: started.elapsed().as_millis() as u64,
            threads: pool.current_num_threads(),
        },
    };

    if let Some(path) = &config.output_path {
        report.save(path)?;
    }
    if let (Some(path), Some(csv)) = (&config.csv_path, csv) {
        csv.write(path)?;
    }
    Ok(report)
}

fn parallel_items<T: Send>(
    pool: &rayon::ThreadPool,
    count: usize,
    f: impl Fn(usize) -> Item<T> + Sync + Send,
) -> (Vec<T>, Vec<&'static str>) {
    let items: Vec<Item<T>> = pool.install(|| (0..count).into_par_iter().map(f).collect());
    let mut ok = Vec::with_capacity(count);
    let mut reasons = Vec::new();
    for item in items {
        match item {
            Item::Ok(t) => ok.push(t),
            Item::Excluded(r) => reasons.push(r),
        }
    }
    (ok, reasons)
}

/// A reduction over zero included realizations has no meaningful output.
fn ensure_some<T>(items: &[T], experiment: &str) -> Result<(), RunError> {
    if items.is_empty() {
        return Err(RunError::Numerical(format!(
            "every realization was excluded in the {experiment} experiment"
        )));
    }
    Ok(())
}

fn classify(e: &ModelError) -> &'static str {
    match e {
        ModelError::ConvergenceFailure { .. } => REASON_CONVERGENCE,
        ModelError::InvalidParams(_) => REASON_CONVERGENCE,
    }
}

/// Transfer-matrix γ(E) curve averaged over independent streams per point.
fn transfer_curve(
    grid: &GammaGridConfig,
    model: ModelParams,
    master: u64,
    namespace: u64,
    pool: &rayon::ThreadPool,
) -> Result<(LyapunovCurve, Vec<Vec<f64>>), RunError> {
    let energies = grid.energies();
    let streams = grid.streams.max(1);
    let work = energies.len() * streams;
    let results: Vec<Result<(f64, f64), String>> = pool.install(|| {
        (0..work)
            .into_par_iter()
            .map(|i| {
                let point = i / streams;
                let seed = realization_seed(mix64(master ^ namespace), i as u64);
                lyapunov_transfer(model, energies[point], grid.steps, seed)
                    .map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut stream_gammas: Vec<Vec<f64>> = vec![Vec::new(); energies.len()];
    let mut batch_stderr: Vec<f64> = vec![0.0; energies.len()];
    for (i, r) in results.into_iter().enumerate() {
        let point = i / streams;
        match r {
            Ok((g, se)) => {
                stream_gammas[point].push(g);
                batch_stderr[point] = se;
            }
            Err(e) => return Err(RunError::Numerical(e)),
        }
    }

    let mut gamma = Vec::with_capacity(energies.len());
    let mut stderr = Vec::with_capacity(energies.len());
    for (point, g) in stream_gammas.iter().enumerate() {
        let n = g.len() as f64;
        let mean = g.iter().sum::<f64>() / n;
        gamma.push(mean);
        stderr.push(if g.len() > 1 {
            let var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            batch_stderr[point]
        });
    }
    Ok((
        LyapunovCurve::new(energies, gamma, stderr, GammaMethod::Transfer),
        stream_gammas,
    ))
}

fn check_curve(grid: &GammaGridConfig) -> Result<(), RunError> {
    if grid.steps < 10_000 {
        return Err(RunError::Config(
            "transfer curves need at least 1e4 steps".into(),
        ));
    }
    if grid.points == 0 || grid.streams == 0 {
        return Err(RunError::Config("curve grid needs points and streams".into()));
    }
    if grid.e_min > grid.e_max {
        return Err(RunError::Config("curve grid has e_min > e_max".into()));
    }
    Ok(())
}

// ───────────────────────── spectrum ─────────────────────────

struct SpectrumItem {
    energies: Vec<f64>,
    reassigned: usize,
}

fn run_spectrum(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let m = config.realizations;
    let model = config.model;
    let (items, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        let r = sample_disorder(model, seed);
        match diagonalize_default(&r) {
            Ok(d) => Item::Ok(SpectrumItem {
                energies: d.energies().to_vec(),
                reassigned: d.centers().reassigned(),
            }),
            Err(e) => Item::Excluded(classify(&e)),
        }
    });

    let mut acc = DosAccumulator::new(model.spectral_bound(), config.spectrum.bin_width);
    let mut max_abs = 0.0f64;
    let mut reassigned = 0u64;
    for item in &items {
        acc.add_energies(&item.energies);
        for &e in &item.energies {
            max_abs = max_abs.max(e.abs());
        }
        reassigned += item.reassigned as u64;
    }
    let histogram = acc.finish().map_err(|e| RunError::Numerical(e.to_string()))?;

    let store = m * model.box_size() <= config.spectrum.store_energies_limit;
    let energies = store.then(|| items.iter().map(|i| i.energies.clone()).collect());

    let mut rows = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let seed = realization_seed(config.master_seed, i as u64);
        if store {
            for (k, e) in item.energies.iter().enumerate() {
                rows.push(format!("{seed},{k},{e}"));
            }
        }
    }
    let csv = store.then_some(CsvDoc {
        header: "seed,index,energy",
        rows,
    });

    Ok((
        exclusion_log(m, &reasons),
        Payload::Spectrum(SpectrumPayload {
            histogram,
            energies,
            max_abs_energy: max_abs,
            spectral_bound: model.spectral_bound(),
            total_reassignments: reassigned,
        }),
        csv,
    ))
}

// ───────────────────────── lyapunov ─────────────────────────

fn run_lyapunov(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let lc = &config.lyapunov;
    check_curve(&lc.grid)?;
    let model = config.model;
    let mut grid = lc.grid.clone();
    grid.streams = config.realizations;
    let (transfer, stream_gammas) = transfer_curve(&grid, model, config.master_seed, 0, pool)?;

    let (thouless, dos, max_dev, dev_frac) = if lc.thouless_spectra > 0 {
        let box_params = ModelParams::new(lc.thouless_box, model.disorder_half_width())
            .map_err(|e| RunError::Config(e.to_string()))?;
        let (spectra, reasons) = parallel_items(pool, lc.thouless_spectra, |i| {
            let seed = realization_seed(mix64(config.master_seed ^ NS_DOS), i as u64);
            match diagonalize_default(&sample_disorder(box_params, seed)) {
                Ok(d) => Item::Ok(d.energies().to_vec()),
                Err(e) => Item::Excluded(classify(&e)),
            }
        });
        if !reasons.is_empty() {
            return Err(RunError::Numerical(format!(
                "{} of {} Thouless spectra failed to converge",
                reasons.len(),
                lc.thouless_spectra
            )));
        }
        let mut acc = DosAccumulator::new(box_params.spectral_bound(), lc.bin_width);
        for es in &spectra {
            acc.add_energies(es);
        }
        let dos = acc.finish().map_err(|e| RunError::Numerical(e.to_string()))?;
        let gamma: Vec<f64> = transfer
            .energies
            .iter()
            .map(|&e| lyapunov_thouless(&dos, e))
            .collect();
        let curve = LyapunovCurve::new(
            transfer.energies.clone(),
            gamma,
            vec![0.0; transfer.energies.len()],
            GammaMethod::Thouless,
        );
        let max_dev = transfer
            .gamma
            .iter()
            .zip(&curve.gamma)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let frac = max_dev / transfer.gamma_max;
        (Some(curve), Some(dos), Some(max_dev), Some(frac))
    } else {
        (None, None, None, None)
    };

    let mut rows = Vec::new();
    for (i, e) in transfer.energies.iter().enumerate() {
        let th = thouless
            .as_ref()
            .map(|c| c.gamma[i].to_string())
            .unwrap_or_default();
        rows.push(format!(
            "{e},{},{},{th}",
            transfer.gamma[i], transfer.stderr[i]
        ));
    }
    let csv = Some(CsvDoc {
        header: "energy,gamma_transfer,stderr,gamma_thouless",
        rows,
    });

    Ok((
        exclusion_log(config.realizations, &[]),
        Payload::Lyapunov(LyapunovPayload {
            transfer,
            stream_gammas,
            thouless,
            dos,
            max_abs_deviation: max_dev,
            deviation_fraction_of_gamma_max: dev_frac,
        }),
        csv,
    ))
}

// ───────────────────────── dos ─────────────────────────

fn run_dos(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let m = config.realizations;
    let model = config.model;
    let (spectra, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        match diagonalize_default(&sample_disorder(model, seed)) {
            Ok(d) => Item::Ok(d.energies().to_vec()),
            Err(e) => Item::Excluded(classify(&e)),
        }
    });

    let mut acc = DosAccumulator::new(model.spectral_bound(), config.dos.bin_width);
    for es in &spectra {
        acc.add_energies(es);
    }
    let dos = acc.finish().map_err(|e| RunError::Numerical(e.to_string()))?;

    let thouless = (!config.dos.thouless_energies.is_empty()).then(|| {
        let es = config.dos.thouless_energies.clone();
        let gamma: Vec<f64> = es.iter().map(|&e| lyapunov_thouless(&dos, e)).collect();
        let n = es.len();
        LyapunovCurve::new(es, gamma, vec![0.0; n], GammaMethod::Thouless)
    });

    let rows = (0..dos.bins())
        .map(|b| {
            format!(
                "{},{},{},{}",
                dos.bin_edges[b],
                dos.bin_edges[b + 1],
                dos.density[b],
                dos.cumulative[b]
            )
        })
        .collect();
    let csv = Some(CsvDoc {
        header: "bin_lo,bin_hi,density,cumulative",
        rows,
    });

    Ok((
        exclusion_log(m, &reasons),
        Payload::Dos(DosPayload { dos, thouless }),
        csv,
    ))
}

// ───────────────────────── gradient floor ─────────────────────────

fn run_gradient_floor(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let gf = &config.gradient_floor;
    check_curve(&gf.curve)?;
    let spec = config.combination.as_ref().expect("validated");
    let model = config.model;
    let (curve, _) = transfer_curve(&gf.curve, model, config.master_seed, NS_CURVE, pool)?;

    let base = spec.rightmost_center();
    let offsets = gf.offsets.clone();
    let m = config.realizations;

    struct FloorItem {
        seed: u64,
        rows: Vec<(f64, f64)>,
    }

    let (items, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        let d = match diagonalize_default(&sample_disorder(model, seed)) {
            Ok(d) => d,
            Err(e) => return Item::Excluded(classify(&e)),
        };
        let gamma_tilde = spec
            .centers()
            .map(|s| curve.gamma_at(d.energy_at_center(s).expect("full spectrum")))
            .fold(f64::INFINITY, f64::min);
        let rows = offsets
            .iter()
            .map(|&off| {
                let pg = paired_gradient(spec, &d, base + off).expect("validated offsets");
                let floor = match gf.fixed_c {
                    Some(c) => c,
                    None => estimates::reference_floor(gamma_tilde, gf.eps, off),
                };
                (pg, floor)
            })
            .collect();
        Item::Ok(FloorItem { seed, rows })
    });
    ensure_some(&items, "gradient_floor")?;

    let mut points = Vec::with_capacity(offsets.len());
    let mut csv_rows = Vec::new();
    for (k, &off) in offsets.iter().enumerate() {
        let mut hits = 0u64;
        let mut floor_sum = 0.0;
        for item in &items {
            let (pg, floor) = item.rows[k];
            if pg.abs() <= floor {
                hits += 1;
            }
            floor_sum += floor;
        }
        let count = items.len() as u64;
        let (lo, hi) = wilson_interval(hits, count);
        points.push(FloorPointReport {
            offset: off,
            probability: hits as f64 / count as f64,
            hits,
            count,
            mean_floor: floor_sum / count as f64,
            wilson_low: lo,
            wilson_high: hi,
        });
    }
    for item in &items {
        for (k, &off) in offsets.iter().enumerate() {
            let (pg, floor) = item.rows[k];
            csv_rows.push(format!("{},{off},{pg},{floor}", item.seed));
        }
    }
    let monotone = points
        .windows(2)
        .all(|w| w[1].probability <= w[0].probability + 1e-12);

    Ok((
        exclusion_log(m, &reasons),
        Payload::GradientFloor(GradientFloorPayload {
            points,
            eps: gf.eps,
            monotone_nonincreasing: monotone,
        }),
        Some(CsvDoc {
            header: "seed,offset,paired_gradient,floor",
            rows: csv_rows,
        }),
    ))
}

// ───────────────────────── level statistics ─────────────────────────

fn run_level_stats(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let model = config.model;
    let intervals = config.level_stats.effective_intervals(&model);
    let bound = model.spectral_bound();
    let m = config.realizations;

    struct LevelItem {
        energies: Vec<f64>,
        counts: Vec<(u64, u64, u64)>,
    }

    let (items, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        let d = match diagonalize_default(&sample_disorder(model, seed)) {
            Ok(d) => d,
            Err(e) => return Item::Excluded(classify(&e)),
        };
        let counts = intervals
            .iter()
            .map(|&iv| estimates::window_counts(d.energies(), bound, iv))
            .collect();
        Item::Ok(LevelItem {
            energies: d.energies().to_vec(),
            counts,
        })
    });

    let mut acc = DosAccumulator::new(bound, config.level_stats.bin_width);
    for item in &items {
        acc.add_energies(&item.energies);
    }
    let dos = acc.finish().map_err(|e| RunError::Numerical(e.to_string()))?;
    let sup = dos.sup_density;
    let l = model.box_size() as f64;

    let mut points = Vec::with_capacity(intervals.len());
    for (k, &interval) in intervals.iter().enumerate() {
        let mut windows = 0u64;
        let mut ge1 = 0u64;
        let mut ge2 = 0u64;
        for item in &items {
            let (w, a, b) = item.counts[k];
            windows += w;
            ge1 += a;
            ge2 += b;
        }
        let scale = std::f64::consts::PI * sup * interval * l;
        points.push(LevelPoint {
            interval,
            windows,
            at_least_one: ge1,
            at_least_two: ge2,
            p_ge1: ge1 as f64 / windows as f64,
            p_ge2: ge2 as f64 / windows as f64,
            wegner_bound: scale,
            minami_bound: scale * scale,
        });
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.p_ge2 > 0.0)
        .map(|p| (p.interval, p.p_ge2))
        .unzip();
    let pair_exponent = fit_exponent(&xs, &ys).ok();
    let all_below_minami = points.iter().all(|p| p.p_ge2 <= p.minami_bound);

    let rows = points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{},{},{}",
                p.interval,
                p.windows,
                p.at_least_one,
                p.at_least_two,
                p.p_ge1,
                p.p_ge2,
                p.wegner_bound,
                p.minami_bound
            )
        })
        .collect();

    Ok((
        exclusion_log(m, &reasons),
        Payload::LevelStats(LevelStatsPayload {
            points,
            dos,
            sup_density: sup,
            pair_exponent,
            all_below_minami,
        }),
        Some(CsvDoc {
            header: "interval,windows,ge1,ge2,p_ge1,p_ge2,wegner_bound,minami_bound",
            rows,
        }),
    ))
}

// ───────────────────────── sign scan ─────────────────────────

fn run_sign_scan(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let spec = config.combination.as_ref().expect("validated").clone();
    let model = config.model;
    let site = config.sign_scan.site.unwrap_or_else(|| {
        let lo = spec.centers().min().unwrap();
        let hi = spec.rightmost_center();
        (lo + hi) / 2
    });
    if site + 1 >= model.box_size() {
        return Err(RunError::Config(format!(
            "sweep site {site} leaves the box"
        )));
    }
    let points = config.sign_scan.grid_points;
    let m = config.realizations;

    struct ScanItem {
        seed: u64,
        flip_gaps: Vec<f64>,
        adjacent_gaps: Vec<f64>,
    }

    let (items, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        let r = sample_disorder(model, seed);
        let d = match diagonalize_default(&r) {
            Ok(d) => d,
            Err(e) => return Item::Excluded(classify(&e)),
        };
        let adjacent_gaps: Vec<f64> = d.energies().windows(2).map(|w| w[1] - w[0]).collect();
        let grid = sweep_grid_with_span(&r, site, points, config.sign_scan.span);
        let events = match sign_change_scan(&spec, &r, site, &grid) {
            Ok(ev) => ev,
            Err(estimates::EstimateError::Model(e)) => return Item::Excluded(classify(&e)),
            Err(e) => panic!("sign scan setup error: {e}"),
        };
        Item::Ok(ScanItem {
            seed,
            flip_gaps: events.iter().map(|e| e.min_adjacent_gap).collect(),
            adjacent_gaps,
        })
    });
    ensure_some(&items, "sign_scan")?;

    let mut with_flip = 0u64;
    let mut total_flips = 0u64;
    let mut flip_gaps = Vec::new();
    let mut adjacent = Vec::new();
    let mut rows = Vec::new();
    for item in &items {
        if !item.flip_gaps.is_empty() {
            with_flip += 1;
        }
        total_flips += item.flip_gaps.len() as u64;
        flip_gaps.extend_from_slice(&item.flip_gaps);
        adjacent.extend_from_slice(&item.adjacent_gaps);
        let min_gap = item
            .flip_gaps
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        rows.push(format!(
            "{},{},{}",
            item.seed,
            item.flip_gaps.len(),
            if min_gap.is_finite() {
                min_gap.to_string()
            } else {
                String::new()
            }
        ));
    }
    adjacent.sort_by(f64::total_cmp);
    flip_gaps.sort_by(f64::total_cmp);
    let p10 = report::quantile_sorted(&adjacent, 0.10);
    let below = flip_gaps.iter().filter(|&&g| g < p10).count() as u64;
    let count = items.len() as u64;
    let (lo, hi) = wilson_interval(with_flip, count);

    Ok((
        exclusion_log(m, &reasons),
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
        }),
        Some(CsvDoc {
            header: "seed,flips,min_flip_gap",
            rows,
        }),
    ))
}

// ───────────────────────── moments ─────────────────────────

fn run_moments(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let spec = config.combination.as_ref().expect("validated").clone();
    let mc = &config.moments;
    let sizes = if mc.box_sizes.is_empty() {
        vec![config.model.box_size()]
    } else {
        mc.box_sizes.clone()
    };
    let m = config.realizations;
    let delta = config.model.disorder_half_width();

    let mut size_reports = Vec::with_capacity(sizes.len());
    let mut csv_rows = Vec::new();
    let mut all_reasons = Vec::new();

    for (size_idx, &size) in sizes.iter().enumerate() {
        let params =
            ModelParams::new(size, delta).map_err(|e| RunError::Config(e.to_string()))?;
        let (samples, reasons) = parallel_items(pool, m, |i| {
            let global = (size_idx * m + i) as u64;
            let seed = realization_seed(config.master_seed, global);
            let d = match diagonalize_default(&sample_disorder(params, seed)) {
                Ok(d) => d,
                Err(e) => return Item::Excluded(classify(&e)),
            };
            let f = estimates::eval_combination(&spec, &d).expect("full spectrum");
            Item::Ok((seed, f))
        });
        all_reasons.extend_from_slice(&reasons);
        ensure_some(&samples, "moments")?;

        let seeds: Vec<u64> = samples.iter().map(|&(s, _)| s).collect();
        let f_samples: Vec<f64> = samples.iter().map(|&(_, f)| f).collect();
        let report = fractional_moment(&f_samples, mc.s, mc.delta)
            .map_err(|e| RunError::Numerical(e.to_string()))?;
        for (seed, f) in &samples {
            csv_rows.push(format!(
                "{seed},{size},{f},{}",
                f.abs().powf(-mc.s)
            ));
        }
        size_reports.push(MomentSizeReport {
            box_size: size,
            seeds,
            f_samples,
            report,
        });
    }

    let lo = size_reports
        .iter()
        .map(|s| s.report.trimmed_mean)
        .fold(f64::INFINITY, f64::min);
    let hi = size_reports
        .iter()
        .map(|s| s.report.trimmed_mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let spread = (lo > 0.0).then_some(hi / lo);

    Ok((
        exclusion_log(m * sizes.len(), &all_reasons),
        Payload::Moments(MomentsPayload {
            sizes: size_reports,
            trimmed_spread: spread,
        }),
        Some(CsvDoc {
            header: "seed,size,f,abs_f_pow_neg_s",
            rows: csv_rows,
        }),
    ))
}

// ───────────────────────── decay ─────────────────────────

fn run_decay(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let dc = &config.decay;
    check_curve(&dc.curve)?;
    let model = config.model;
    let (curve, _) = transfer_curve(&dc.curve, model, config.master_seed, NS_CURVE, pool)?;
    let thresholds = dc.thresholds.clone();
    let max_threshold = *thresholds.iter().max().expect("validated nonempty");
    let m = config.realizations;
    let n = model.box_size();

    struct DecayItem {
        seed: u64,
        states: u64,
        violations: Vec<u64>,
        n_stars: Vec<(f64, i64)>,
    }

    let (items, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        let d = match diagonalize_default(&sample_disorder(model, seed)) {
            Ok(d) => d,
            Err(e) => return Item::Excluded(classify(&e)),
        };
        let lo_state = n / 10;
        let hi_state = n - n / 10;
        let mut states = 0u64;
        let mut violations = vec![0u64; thresholds.len()];
        let mut n_stars = Vec::new();
        for k in lo_state..hi_state {
            let center = d.centers().site_of(k);
            let room = center.min(n - 1 - center);
            if room < max_threshold + 2 {
                continue;
            }
            let gamma_ref = curve.gamma_at(d.energy(k));
            let profile = estimates::decay_profile(&d, k, gamma_ref, dc.eps);
            states += 1;
            n_stars.push((
                d.energy(k),
                profile.n_star.map(|v| v as i64).unwrap_or(-1),
            ));
            for (t, &thr) in thresholds.iter().enumerate() {
                let violated = match profile.n_star {
                    None => true,
                    Some(ns) => ns > thr,
                };
                if violated {
                    violations[t] += 1;
                }
            }
        }
        Item::Ok(DecayItem {
            seed,
            states,
            violations,
            n_stars,
        })
    });
    ensure_some(&items, "decay")?;

    let mut total_states = 0u64;
    let mut total_violations = vec![0u64; thresholds.len()];
    let mut rows = Vec::new();
    for item in &items {
        total_states += item.states;
        for (t, v) in item.violations.iter().enumerate() {
            total_violations[t] += v;
        }
        for (e, ns) in &item.n_stars {
            rows.push(format!("{},{e},{ns}", item.seed));
        }
    }

    let reports: Vec<DecayThresholdReport> = thresholds
        .iter()
        .zip(&total_violations)
        .map(|(&threshold, &violations)| {
            let (lo, hi) = wilson_interval(violations, total_states);
            DecayThresholdReport {
                threshold,
                violations,
                states: total_states,
                fraction: violations as f64 / total_states.max(1) as f64,
                wilson_low: lo,
                wilson_high: hi,
            }
        })
        .collect();
    let monotone = reports
        .windows(2)
        .all(|w| w[1].fraction <= w[0].fraction + 1e-12);

    Ok((
        exclusion_log(m, &reasons),
        Payload::Decay(DecayPayload {
            thresholds: reports,
            states_considered: total_states,
            monotone_nonincreasing: monotone,
            curve,
        }),
        Some(CsvDoc {
            header: "seed,energy,n_star",
            rows,
        }),
    ))
}

// ───────────────────────── renormalization ─────────────────────────

fn run_renorm(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(ExclusionLog, Payload, Option<CsvDoc>), RunError> {
    let rc = &config.renorm;
    check_curve(&rc.curve)?;
    let model = config.model;
    if model.disorder_half_width() <= 0.0 {
        return Err(RunError::Config(
            "the renorm experiment needs positive disorder".into(),
        ));
    }
    let n = model.box_size();
    let center = rc.center.unwrap_or(n / 2);
    let distances = rc.distances.clone();
    let x_delta = *distances.iter().max().expect("validated");
    let (curve, _) = transfer_curve(&rc.curve, model, config.master_seed, NS_CURVE, pool)?;
    let m = config.realizations;

    struct RenormItem {
        seed: u64,
        v_abs: Vec<f64>,
        bare: f64,
        renormalized: f64,
        energies: Vec<f64>,
    }

    let spec = CombinationSpec::single(center);
    let beta = rc.beta;
    let (items, reasons) = parallel_items(pool, m, |i| {
        let seed = realization_seed(config.master_seed, i as u64);
        let d = match diagonalize_default(&sample_disorder(model, seed)) {
            Ok(d) => d,
            Err(e) => return Item::Excluded(classify(&e)),
        };
        let mut v_abs = Vec::with_capacity(distances.len());
        for &x in &distances {
            match v_derivative_paired(&d, center, center + x) {
                Ok(v) => v_abs.push(v.abs()),
                Err(RenormError::DegenerateLevel { .. }) => {
                    return Item::Excluded(REASON_DEGENERATE)
                }
                Err(e) => panic!("renorm setup error: {e}"),
            }
        }
        let j = center + x_delta;
        let bare = paired_gradient(&spec, &d, j).expect("validated sites")
            / std::f64::consts::SQRT_2;
        let dv = match v_derivative_paired(&d, center, j) {
            Ok(v) => v,
            Err(RenormError::DegenerateLevel { .. }) => return Item::Excluded(REASON_DEGENERATE),
            Err(e) => panic!("renorm setup error: {e}"),
        };
        Item::Ok(RenormItem {
            seed,
            v_abs,
            bare: bare.abs(),
            renormalized: (bare + beta * dv).abs(),
            energies: d.energies().to_vec(),
        })
    });

    ensure_some(&items, "renorm")?;

    // Interior γ extrema need the run's own DOS.
    let mut acc = DosAccumulator::new(model.spectral_bound(), 0.02);
    for item in &items {
        acc.add_energies(&item.energies);
    }
    let dos = acc.finish().map_err(|e| RunError::Numerical(e.to_string()))?;
    let (gamma_min, gamma_max) = gamma_extrema(&curve, Some(&dos));
    if gamma_min <= 0.0 {
        return Err(RunError::Numerical(
            "interior gamma_min is not positive; widen the curve grid".into(),
        ));
    }

    let mut distance_reports = Vec::with_capacity(distances.len());
    let mut csv_rows = Vec::new();
    for (k, &x) in distances.iter().enumerate() {
        let samples: Vec<f64> = items.iter().map(|it| it.v_abs[k]).collect();
        let (moment, trim_count) = trimmed_power_moment(&samples, rc.s, rc.delta);
        distance_reports.push(RenormDistanceReport {
            distance: x,
            moment,
            trim_count,
            samples,
        });
    }
    for item in &items {
        for (k, &x) in distances.iter().enumerate() {
            csv_rows.push(format!("{},{x},{}", item.seed, item.v_abs[k]));
        }
    }

    let xs: Vec<f64> = distance_reports.iter().map(|d| d.distance as f64).collect();
    let ys: Vec<f64> = distance_reports.iter().map(|d| d.moment).collect();
    let fitted_rate = fit_decay_rate(&xs, &ys).ok();
    let reference_rate = 2.0 * gamma_min * rc.s;

    let mut bare: Vec<f64> = items.iter().map(|it| it.bare).collect();
    let mut renormalized: Vec<f64> = items.iter().map(|it| it.renormalized).collect();
    bare.sort_by(f64::total_cmp);
    renormalized.sort_by(f64::total_cmp);
    let floor_bare = report::quantile_sorted(&bare, rc.quantile);
    let floor_renormalized = report::quantile_sorted(&renormalized, rc.quantile);
    let floor_rel_diff = (floor_renormalized - floor_bare).abs() / floor_bare.abs();

    let beta_ceiling = beta_threshold(gamma_min, gamma_max, x_delta, rc.constant);

    Ok((
        exclusion_log(m, &reasons),
        Payload::Renorm(RenormPayload {
            beta: rc.beta,
            beta_ceiling,
            beta_below_ceiling: rc.beta <= beta_ceiling,
            gamma_min,
            gamma_max,
            distances: distance_reports,
            fitted_rate,
            reference_rate,
            bare_gradient_samples: bare,
            renormalized_gradient_samples: renormalized,
            floor_bare,
            floor_renormalized,
            floor_rel_diff,
        }),
        Some(CsvDoc {
            header: "seed,distance,abs_v_derivative_paired",
            rows: csv_rows,
        }),
    ))
}
