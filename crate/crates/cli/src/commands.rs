use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array2, Axis};
use serde::Serialize;

use pisco_core::eval::{evaluate_frames, normalize_for_metrics, spearman, temporal_profile, ProfileAxis};
use pisco_core::fit::{fill_report, fit_kspace, zero_filled, FillReport, FitConfig};
use pisco_core::io::{load_checkpoint, load_image, load_kspace, load_mask, save_checkpoint, save_image, save_kspace, save_mask};
use pisco_core::kspace::{
    add_image_noise, add_kspace_noise, forward_grid, ifft_recon_grid, make_mask, make_radial_trajectory,
    nudft_forward, render_phantom, simulate_sensitivities, CartesianGrid, GridKSpace, NoiseDomain, NudftSource,
};
use pisco_core::loss::{consistency_sweep, SweepBase};
use pisco_core::nik::{infer_frame, train, NikArchitecture, NikModel, TrainConfig};
use pisco_core::validation::{kernel_weight_sets, pool_weights, sample_pair_pool, weight_dispersion, weight_stack};
use pisco_core::{Coord, Image, KernelGeometry, KernelKind, Measure, MultiCoilKSpace, SamplingMask};

use crate::config::ExperimentConfig;
use crate::output::{csv_writer, frame_name, write_gray, write_heatmap, write_magnitude, Run};
use crate::plot::save_line_plot;

/// Pixels per weight entry in the stacked weight images.
const STACK_ZOOM: usize = 8;

pub struct Ctx<'a> {
    pub config: &'a ExperimentConfig,
    pub quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn kind_name(kind: KernelKind) -> &'static str {
    match kind {
        KernelKind::Cartesian => "cartesian",
        KernelKind::Radial => "radial",
        KernelKind::RadialEquidistant => "radial-equidistant",
    }
}

fn measure_name(m: Measure) -> &'static str {
    match m {
        Measure::Residual => "residual",
        Measure::Distance => "distance",
    }
}

fn domain_name(d: NoiseDomain) -> &'static str {
    match d {
        NoiseDomain::Kspace => "kspace",
        NoiseDomain::Image => "image",
    }
}

/// Frame index of a stored time, robust to f32 rounding.
fn frame_of(t: f64, n_frames: usize) -> usize {
    (t * (n_frames.max(2) - 1) as f64).round() as usize
}

fn select_rows(k: &MultiCoilKSpace, rows: &[usize]) -> MultiCoilKSpace {
    MultiCoilKSpace {
        coords: rows.iter().map(|&i| k.coords[i]).collect(),
        values: k.values.select(Axis(0), rows),
        n_fe: k.n_fe,
    }
}

pub fn phantom(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let p = &cfg.phantom;
    let spec = p.spec();
    spec.validate()?;
    let sens = simulate_sensitivities(p.n, p.n, p.n_coils)?;
    let times = p.frame_times();
    let images: Vec<Image> = times
        .iter()
        .map(|&t| render_phantom(&spec, t))
        .collect::<pisco_core::Result<_>>()?;
    for (f, img) in images.iter().enumerate() {
        write_magnitude(&run.file(&format!("truth/{}.png", frame_name(f)))?, img)?;
        save_image(&run.file(&format!("truth/{}.bin", frame_name(f)))?, img)?;
    }

    // per-frame coordinates, frame-major
    let radial = cfg.trajectory.radial(p.n, p.n_frames);
    let frame_coords: Vec<Vec<Coord>> = match &radial {
        None => {
            let grid = CartesianGrid::new(p.n, p.n)?;
            times.iter().map(|&t| grid.coords(t)).collect()
        }
        Some(traj) => {
            let all = make_radial_trajectory(traj, p.n_frames)?;
            (0..p.n_frames)
                .map(|f| all.iter().copied().filter(|c| frame_of(c.t, p.n_frames) == f).collect())
                .collect()
        }
    };
    let acquire = |imgs: &[Image]| -> Result<MultiCoilKSpace> {
        let mut coords = Vec::new();
        let mut blocks = Vec::new();
        for (img, fc) in imgs.iter().zip(&frame_coords) {
            let values = match radial {
                None => forward_grid(img, &sens)?.values,
                Some(_) => nudft_forward(img, &sens, fc)?.values,
            };
            coords.extend_from_slice(fc);
            blocks.push(values);
        }
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        Ok(MultiCoilKSpace::new(coords, ndarray::concatenate(Axis(0), &views)?, p.n)?)
    };
    let clean = acquire(&images)?;
    let sigma = cfg.noise.sigma_factor * clean.median_magnitude();
    let acquired = match cfg.noise.domain {
        _ if sigma == 0.0 => clean,
        NoiseDomain::Kspace => add_kspace_noise(&clean, sigma, cfg.seed)?,
        NoiseDomain::Image => {
            let noisy: Vec<Image> = images
                .iter()
                .enumerate()
                .map(|(f, img)| add_image_noise(img, sigma, cfg.seed.wrapping_mul(1000).wrapping_add(f as u64)))
                .collect::<pisco_core::Result<_>>()?;
            acquire(&noisy)?
        }
    };
    let shape = radial.is_none().then_some([p.n, p.n]);
    save_kspace(&run.file("kspace.bin")?, &acquired, shape)?;
    if radial.is_none() {
        let mask = make_mask(p.n, p.n, cfg.mask.acceleration, cfg.mask.center_fraction, cfg.seed)?;
        save_mask(&run.file("mask.json")?, &mask)?;
    }
    ctx.say(format!(
        "phantom: {} frames, {} samples x {} coils, noise sigma {sigma:.4e}",
        p.n_frames,
        acquired.n_samples(),
        acquired.n_coils()
    ));
    Ok(())
}

fn upscale(a: &Array2<f64>, k: usize) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows() * k, a.ncols() * k), |(i, j)| a[[i / k, j / k]])
}

/// Magnitude (min-max) and phase (`[-pi, pi]` to `[0, 1]`) images with one
/// row per subset and one column per weight entry.
fn write_stack(run: &mut Run, stem: &str, sets: &[pisco_core::WeightSet]) -> Result<()> {
    let (mag, phase) = weight_stack(sets);
    write_heatmap(&run.file(&format!("{stem}_mag.png"))?, &upscale(&mag.reversed_axes(), STACK_ZOOM))?;
    let phase = phase.mapv(|v| (v + std::f64::consts::PI) / (2.0 * std::f64::consts::PI));
    write_gray(&run.file(&format!("{stem}_phase.png"))?, &upscale(&phase.reversed_axes(), STACK_ZOOM))?;
    Ok(())
}

#[derive(Serialize)]
struct DispersionRow<'a> {
    kernel: &'a str,
    partition: &'a str,
    seed: u64,
    n_subsets: usize,
    mean_cov: f64,
    mean_variance: f64,
}

#[derive(Serialize)]
struct EntryRow<'a> {
    kernel: &'a str,
    partition: &'a str,
    seed: u64,
    row: usize,
    col: usize,
    cov: f64,
    variance: f64,
}

pub fn validate_kernel(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let v = &cfg.validate;
    let p = &cfg.phantom;
    if v.seeds.is_empty() || v.kernels.is_empty() {
        bail!(crate::ConfigError("validate needs at least one kernel and one seed".into()));
    }
    let image = render_phantom(&p.spec(), v.t)?;
    let sens = simulate_sensitivities(p.n, p.n, p.n_coils)?;
    let source = NudftSource {
        image: &image,
        sens: &sens,
    };
    let grid = CartesianGrid::new(p.n, p.n)?;
    let base = cfg.pisco.build(p.n, 0.0);
    let mut summary = csv_writer(&run.file("dispersion.csv")?)?;
    let mut entries = csv_writer(&run.file("dispersion_entries.csv")?)?;
    let mut record = |kernel: &str, partition: &str, seed: u64, sets: &[pisco_core::WeightSet]| -> Result<f64> {
        let d = weight_dispersion(sets)?;
        summary.serialize(DispersionRow {
            kernel,
            partition,
            seed,
            n_subsets: d.n_subsets,
            mean_cov: d.mean_cov,
            mean_variance: d.mean_variance,
        })?;
        for ((row, col), cov) in d.cov.indexed_iter() {
            entries.serialize(EntryRow {
                kernel,
                partition,
                seed,
                row,
                col,
                cov: *cov,
                variance: d.variance[[row, col]],
            })?;
        }
        Ok(d.mean_cov)
    };

    for &kind in &v.kernels {
        let geometry = KernelGeometry {
            kind,
            shape: v.shape,
            ..base.geometry
        };
        for (i, &seed) in v.seeds.iter().enumerate() {
            let sets = kernel_weight_sets(&source, grid, &geometry, &base, seed)?;
            let cov = record(kind_name(kind), "sorted", seed, &sets)?;
            ctx.say(format!("{} seed {seed}: {} subsets, mean CoV {cov:.4}", kind_name(kind), sets.len()));
            if i == 0 {
                write_stack(run, &format!("weights_{}", kind_name(kind)), &sets)?;
            }
        }
    }

    let mut pool_cfg = base.clone();
    pool_cfg.exclusion_radius = v.sorting_exclusion_cells / p.n as f64;
    let geometry = KernelGeometry {
        kind: KernelKind::Cartesian,
        shape: v.shape,
        ..base.geometry
    };
    for (i, &seed) in v.seeds.iter().enumerate() {
        let pool = sample_pair_pool(grid, &geometry, &pool_cfg, p.n_coils, seed)?;
        let sorted = pool_weights(pool.clone(), &source, &pool_cfg, true, seed)?;
        let random = pool_weights(pool, &source, &pool_cfg, false, seed)?;
        record("cartesian", "pool-sorted", seed, &sorted)?;
        record("cartesian", "pool-random", seed, &random)?;
        if i == 0 {
            write_stack(run, "weights_pool_sorted", &sorted)?;
            write_stack(run, "weights_pool_random", &random)?;
        }
    }
    summary.flush()?;
    entries.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    sigma: f64,
    seed: u64,
    raw_loss: f64,
    normalized_loss: f64,
    measure: &'a str,
    domain: &'a str,
}

#[derive(Serialize)]
struct SweepSummaryRow<'a> {
    measure: &'a str,
    domain: &'a str,
    spearman: f64,
    strictly_increasing: bool,
}

pub fn noise_sweep(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let s = &cfg.sweep;
    let p = &cfg.phantom;
    let image = render_phantom(&p.spec(), s.t)?;
    let sens = simulate_sensitivities(p.n, p.n, p.n_coils)?;
    let median = forward_grid(&image, &sens)?.to_kspace(s.t).median_magnitude();
    let sigmas: Vec<f64> = s.sigma_factors.iter().map(|f| f * median).collect();
    let base = SweepBase {
        image: &image,
        sens: &sens,
    };
    let mut rows = csv_writer(&run.file("sweep.csv")?)?;
    let mut summary = csv_writer(&run.file("sweep_summary.csv")?)?;
    let mut series = Vec::new();
    for &measure in &s.measures {
        let mut pc = cfg.pisco.build(p.n, 0.0);
        pc.measure = measure;
        for &domain in &s.domains {
            let curve = consistency_sweep(&base, &sigmas, domain, &pc, &s.seeds)?;
            for pt in &curve.points {
                rows.serialize(SweepRow {
                    sigma: pt.sigma,
                    seed: pt.seed,
                    raw_loss: pt.raw_loss,
                    normalized_loss: pt.normalized_loss,
                    measure: measure_name(measure),
                    domain: domain_name(domain),
                })?;
            }
            let rho = spearman(&s.sigma_factors, &curve.normalized)?;
            let increasing = curve.normalized.windows(2).all(|w| w[1] > w[0]);
            summary.serialize(SweepSummaryRow {
                measure: measure_name(measure),
                domain: domain_name(domain),
                spearman: rho,
                strictly_increasing: increasing,
            })?;
            ctx.say(format!(
                "{}/{}: spearman {rho:+.3}",
                measure_name(measure),
                domain_name(domain)
            ));
            series.push(s.sigma_factors.iter().copied().zip(curve.normalized.iter().copied()).collect());
        }
    }
    rows.flush()?;
    summary.flush()?;
    save_line_plot(&run.file("sweep.png")?, &series)?;
    Ok(())
}

fn load_fit_mask(cfg: &ExperimentConfig, n: usize) -> Result<SamplingMask> {
    let path = cfg.input(&cfg.fit.mask, "mask.json");
    if cfg.fit.mask.is_some() || path.exists() {
        return load_mask(&path).with_context(|| format!("reading {}", path.display()));
    }
    Ok(make_mask(n, n, cfg.mask.acceleration, cfg.mask.center_fraction, cfg.seed)?)
}

#[derive(Serialize)]
struct FitReportFile {
    zero_filled: FillReport,
    fitted: FillReport,
    psnr_gain_db: f64,
}

pub fn fit(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let p = &cfg.phantom;
    let f = &cfg.fit;
    let path = cfg.input(&f.kspace, "kspace.bin");
    let (all, header) = load_kspace(&path).with_context(|| format!("reading {}", path.display()))?;
    let n = header.shape.map(|s| s[0]).unwrap_or(all.n_fe);
    let rows: Vec<usize> = (0..all.n_samples())
        .filter(|&i| frame_of(all.coords[i].t, p.n_frames) == f.frame)
        .collect();
    let measured = select_rows(&all, &rows);
    let mask = load_fit_mask(cfg, n)?;
    let grid = CartesianGrid::new(n, n)?;
    let reference = GridKSpace::from_kspace(&measured, grid).ok();
    let sens = simulate_sensitivities(n, n, measured.n_coils())?;

    let config = FitConfig {
        lambda: f.lambda,
        epochs: f.epochs,
        precondition_epochs: f.precondition_epochs,
        learning_rate: f.learning_rate,
        optimizer: f.optimizer,
        pisco: cfg.pisco.build(n, f.lambda),
        seed: cfg.seed,
    };
    let result = fit_kspace(&measured, &mask, &config)?;
    let zf = zero_filled(&measured, &mask)?;
    let t = measured.coords.first().map(|c| c.t).unwrap_or(0.0);
    save_kspace(&run.file("fitted.bin")?, &result.fitted.to_kspace(t), Some([n, n]))?;

    let mut loss = csv_writer(&run.file("loss.csv")?)?;
    for e in &result.history {
        loss.serialize(e)?;
    }
    loss.flush()?;

    let recon = ifft_recon_grid(&result.fitted, &sens)?;
    let zf_recon = ifft_recon_grid(&zf, &sens)?;
    write_magnitude(&run.file("recon.png")?, &recon)?;
    write_magnitude(&run.file("zero_filled.png")?, &zf_recon)?;
    let against = match &reference {
        Some(r) => ifft_recon_grid(r, &sens)?,
        None => zf_recon,
    };
    let diff = (&normalize_for_metrics(&recon)? - &normalize_for_metrics(&against)?).mapv(f64::abs);
    write_gray(&run.file("difference.png")?, &diff)?;

    if let Some(r) = &reference {
        let zero_filled = fill_report(&zf, &mask, r, &sens)?;
        let fitted = fill_report(&result.fitted, &mask, r, &sens)?;
        let report = FitReportFile {
            psnr_gain_db: fitted.psnr - zero_filled.psnr,
            zero_filled,
            fitted,
        };
        ctx.say(format!(
            "fit: PSNR {:.2} dB (zero-filled {:.2} dB), recovered fraction {:.3}",
            report.fitted.psnr, report.zero_filled.psnr, report.fitted.recovered_fraction
        ));
        fs::write(run.file("report.json")?, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

pub fn train_cmd(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let tr = &cfg.train;
    let net = &cfg.network;
    let path = cfg.input(&tr.kspace, "kspace.bin");
    let (acquired, _) = load_kspace(&path).with_context(|| format!("reading {}", path.display()))?;
    let arch = NikArchitecture {
        n_features: net.n_features,
        sigma: net.sigma,
        hidden: net.hidden,
        n_layers: net.n_layers,
        omega: net.omega,
        n_coils: acquired.n_coils(),
        output_scale: acquired.max_magnitude().max(f64::MIN_POSITIVE),
    };
    let mut model = NikModel::new(arch, cfg.seed)?;
    let config = TrainConfig {
        epochs: tr.epochs,
        batch_size: tr.batch_size,
        learning_rate: tr.learning_rate,
        optimizer: tr.optimizer,
        e_pre: tr.e_pre,
        lambda: tr.lambda,
        pisco: cfg.pisco.build(acquired.n_fe, tr.lambda),
        dc_epsilon: tr.dc_epsilon,
        seed: cfg.seed,
    };
    let history = train(&mut model, &acquired, &config)?;
    save_checkpoint(&run.file("checkpoint.bin")?, &model, cfg.seed, serde_json::to_value(&config)?)?;
    let mut out = csv_writer(&run.file("history.csv")?)?;
    for e in &history {
        out.serialize(e)?;
    }
    out.flush()?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        ctx.say(format!("train: dc {:.4} -> {:.4}, pisco {:.4}", first.dc, last.dc, last.pisco));
    }
    Ok(())
}

pub fn recon(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let path = cfg.input(&cfg.recon.checkpoint, "checkpoint.bin");
    let (model, _) = load_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
    let n = cfg.recon.n.unwrap_or(cfg.phantom.n);
    let times = cfg.recon.times.clone().unwrap_or_else(|| cfg.phantom.frame_times());
    if times.is_empty() {
        bail!(crate::ConfigError("recon.times is empty".into()));
    }
    let sens = simulate_sensitivities(n, n, model.arch.n_coils)?;
    let mut normalized = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let frame = infer_frame(&model, t, n, n, &sens)?;
        write_magnitude(&run.file(&format!("recon/{}.png", frame_name(i)))?, &frame)?;
        save_image(&run.file(&format!("recon/{}.bin", frame_name(i)))?, &frame)?;
        normalized.push(normalize_for_metrics(&frame)?);
    }
    if normalized.len() >= 2 {
        for (axis, name) in [(ProfileAxis::Xt, "xt"), (ProfileAxis::Yt, "yt")] {
            let profile = temporal_profile(&normalized, axis, n / 2)?;
            write_gray(&run.file(&format!("recon/profile_{name}.png"))?, &profile.reversed_axes())?;
        }
    }
    ctx.say(format!("recon: {} frames at {n}x{n}", times.len()));
    Ok(())
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Serialize)]
struct MetricRow<'a> {
    method: &'a str,
    #[serde(rename = "R")]
    r: f64,
    frame: usize,
    psnr: f64,
    ssim: f64,
}

pub fn metrics(ctx: &Ctx<'_>, run: &mut Run) -> Result<()> {
    let cfg = ctx.config;
    let m = &cfg.metrics;
    let recon_dir = cfg.input(&m.recon_dir, "recon");
    let ref_dir = cfg.input(&m.reference_dir, "truth");
    let files = frame_files(&recon_dir)?;
    if files.is_empty() {
        return Err(pisco_core::Error::InsufficientData {
            what: format!("frames in {}", recon_dir.display()),
            required: 1,
            available: 0,
        }
        .into());
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut refs = Vec::with_capacity(files.len());
    for f in &files {
        let name = f.file_name().expect("file name");
        frames.push(load_image(f).with_context(|| format!("reading {}", f.display()))?);
        let r = ref_dir.join(name);
        refs.push(load_image(&r).with_context(|| format!("reading {}", r.display()))?);
    }
    let report = evaluate_frames(&frames, &refs)?;
    let mut out = csv_writer(&run.file("metrics.csv")?)?;
    for fm in &report.frames {
        out.serialize(MetricRow {
            method: &m.method,
            r: m.acceleration,
            frame: fm.frame,
            psnr: fm.psnr,
            ssim: fm.ssim,
        })?;
    }
    out.flush()?;
    ctx.say(format!(
        "metrics: {} frames, mean PSNR {:.2} dB, mean SSIM {:.4}",
        report.frames.len(),
        report.psnr,
        report.ssim
    ));
    Ok(())
}
