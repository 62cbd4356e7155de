//! Command implementations. Each writes `manifest.toml` plus its CSVs into
//! the output directory and returns a one-line summary.

use crate::config::{AttackSection, CorpusSection, DatasetSection, ExperimentConfig, StrategySection, TrainSection};
use crate::error::CliError;
use crate::Command;
use serde::Serialize;
use std::path::{Path, PathBuf};
use tslab::attack::{attack, attack_suite, AttackConfig, Sample};
use tslab::corpus::{random_patches, synthetic_corpus, CorpusConfig};
use tslab::denoiser::{load_model, save_model, train_from, Arch, Denoiser, LrSchedule, Optimizer, TrainConfig};
use tslab::metrics::{mse, psnr, transfer_condition, MetricReport, ModelLosses, Transferability, MAX_I};
use tslab::pgm::{read_pgm, write_pgm, Depth};
use tslab::probe::{blend_adversarials, patch_attack, radar_probe, region_psnr, sphere_probe, PatchMethod, Region};
use tslab::ts_sampler::{density_histogram, NoiseStrategy, StrategyKind};
use tslab::typical_set::{
    b2_bound, binf_bound, l1_concentration_bounds, l1_tolerance, l2_concentration_bounds, log2_volume_bounds,
    logpdf_shift_bounds, monte_carlo_verify, TypicalSetSpec,
};
use tslab::{add_noise, gaussian_noise, NormKind, PixelGrid, SeededRng};

pub fn execute(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let manifest = format!("# tslab {}\n{}", cmd.name(), cfg.manifest());
    write_text(&out.join("manifest.toml"), &manifest)?;
    match cmd {
        Command::Verify => verify(cfg, out),
        Command::Sample => sample(cfg, out),
        Command::Train => train(cfg, out),
        Command::Attack => run_attack(cfg, out),
        Command::Probe => probe(cfg, out),
        Command::Eval => eval(cfg, out),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_norm(s: &str) -> Result<NormKind, CliError> {
    s.parse::<NormKind>().map_err(|e| CliError::Usage(e.to_string()))
}

fn usage<T>(r: tslab::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

// ---------------------------------------------------------------- verify

#[derive(Serialize)]
struct VerifyRow<'a> {
    check: &'a str,
    trials: u64,
    violations: u64,
    rate: f64,
    max_rate: f64,
    bound: &'a str,
    pass: bool,
}

#[derive(Serialize)]
struct QuantityRow {
    quantity: &'static str,
    value: f64,
}

fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let s = &cfg.typical_set;
    let spec = usage(TypicalSetSpec::new(s.dim, s.sigma, s.epsilon, s.delta))?;
    let norm = parse_norm(&s.budget_norm)?;
    if s.max_rate.is_nan() || s.max_rate < 0.0 {
        return Err(CliError::Usage("max_rate must be nonnegative".into()));
    }
    let report = usage(monte_carlo_verify(&spec, s.eta, norm, s.trials, &SeededRng::new(cfg.seed, 0)))?;
    let rows: Vec<VerifyRow> = report
        .reports()
        .iter()
        .map(|r| VerifyRow {
            check: &r.bound_tested,
            trials: r.trials,
            violations: r.violations,
            rate: r.empirical_rate(),
            max_rate: s.max_rate,
            bound: &r.bound_value,
            pass: r.passes(s.max_rate),
        })
        .collect();
    write_csv(&out.join("verify.csv"), &rows)?;

    let (l2_lo, l2_hi) = l2_concentration_bounds(&spec);
    let (l1_lo, l1_hi) = l1_concentration_bounds(&spec, l1_tolerance(&spec));
    let (sh_lo, sh_hi) = usage(logpdf_shift_bounds(&spec, s.eta, norm))?;
    let b2 = usage(b2_bound(&spec, s.eta))?.value;
    let binf = usage(binf_bound(&spec, s.eta))?.value;
    let (vol_lo, vol_hi) = log2_volume_bounds(s.epsilon, &spec);
    let quantities = vec![
        QuantityRow { quantity: "entropy_bits", value: spec.entropy_bits() },
        QuantityRow { quantity: "l2_sq_lo", value: l2_lo },
        QuantityRow { quantity: "l2_sq_hi", value: l2_hi },
        QuantityRow { quantity: "l1_lo", value: l1_lo },
        QuantityRow { quantity: "l1_hi", value: l1_hi },
        QuantityRow { quantity: "logpdf_shift_lo", value: sh_lo },
        QuantityRow { quantity: "logpdf_shift_hi", value: sh_hi },
        QuantityRow { quantity: "b2", value: b2 },
        QuantityRow { quantity: "binf", value: binf },
        QuantityRow { quantity: "log2_volume_lo", value: vol_lo },
        QuantityRow { quantity: "log2_volume_hi", value: vol_hi },
    ];
    write_csv(&out.join("bounds.csv"), &quantities)?;

    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.check).collect();
    if failed.is_empty() {
        Ok(format!("verify: all {} checks within rate {}", rows.len(), s.max_rate))
    } else {
        Err(CliError::Threshold(format!("violation rate above {} for {}", s.max_rate, failed.join(", "))))
    }
}

// ---------------------------------------------------------------- sample

fn strategy(s: &StrategySection) -> Result<NoiseStrategy, CliError> {
    let kind: StrategyKind = usage(s.kind.parse())?;
    usage(NoiseStrategy::new(kind, s.sigma, s.iterations, s.sigma2))
}

#[derive(Serialize)]
struct BinRow {
    bin_center: f64,
    count: u64,
}

#[derive(Serialize)]
struct SampleSummary {
    strategy: String,
    dim: usize,
    draws: u64,
    mean: f64,
    reference: f64,
}

fn sample(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let st = strategy(&cfg.strategy)?;
    let s = &cfg.sample;
    let mut rng = SeededRng::new(cfg.seed, 0);
    let hist = usage(density_histogram(st.clone(), s.dim, s.draws, s.bins, &mut rng))?;
    let rows: Vec<BinRow> = hist.bins.iter().map(|&(bin_center, count)| BinRow { bin_center, count }).collect();
    write_csv(&out.join("histogram.csv"), &rows)?;
    let summary = SampleSummary {
        strategy: st.kind.to_string(),
        dim: s.dim,
        draws: hist.draws,
        mean: hist.mean,
        reference: hist.reference,
    };
    write_csv(&out.join("summary.csv"), &[&summary])?;
    Ok(format!(
        "sample: {} draws of {}, mean -(1/n)log2 f = {:.6} (h = {:.6})",
        hist.draws, summary.strategy, hist.mean, hist.reference
    ))
}

// ---------------------------------------------------------------- train

pub fn load_corpus(c: &CorpusSection) -> Result<Vec<PixelGrid>, CliError> {
    let all = if c.images.is_empty() {
        let cc = CorpusConfig {
            count: c.synthetic_count,
            size: c.synthetic_size,
            ..CorpusConfig::default()
        };
        synthetic_corpus(&cc, c.synthetic_seed)?
    } else {
        c.images.iter().map(read_pgm).collect::<tslab::Result<Vec<_>>>()?
    };
    let half = all.len() / 2;
    let picked: Vec<PixelGrid> = match c.split.as_str() {
        "all" => all,
        "first-half" => all.into_iter().take(half).collect(),
        "second-half" => all.into_iter().skip(half).collect(),
        other => return Err(CliError::Usage(format!("unknown corpus split {other:?}"))),
    };
    if picked.is_empty() {
        return Err(CliError::Usage("corpus is empty".into()));
    }
    Ok(picked)
}

pub fn train_config(t: &TrainSection, st: NoiseStrategy, seed: u64) -> Result<TrainConfig, CliError> {
    let optimizer = match t.optimizer.as_str() {
        "adam" => Optimizer::adam(),
        "sgd" => Optimizer::SgdMomentum { momentum: t.momentum },
        other => return Err(CliError::Usage(format!("unknown optimizer {other:?}"))),
    };
    let lr = if t.lr_every == 0 {
        LrSchedule::Constant(t.lr)
    } else {
        LrSchedule::Step {
            base: t.lr,
            factor: t.lr_decay,
            every: t.lr_every,
        }
    };
    let cfg = TrainConfig {
        arch: Arch {
            layers: t.layers,
            channels: t.channels,
        },
        strategy: st,
        patch_size: t.patch_size,
        stride: t.stride,
        epochs: t.epochs,
        steps_per_epoch: t.steps_per_epoch,
        batch_size: t.batch_size,
        lr,
        optimizer,
        validation_patches: t.validation_patches,
        seed,
    };
    usage(cfg.validate())?;
    Ok(cfg)
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    train_loss: f64,
    val_psnr: f64,
    noisy_psnr: f64,
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let tc = train_config(&cfg.train, strategy(&cfg.strategy)?, cfg.seed)?;
    let corpus = load_corpus(&cfg.corpus)?;
    let initial = cfg.train.resume.as_ref().map(load_model).transpose()?;
    let (model, hist) = train_from(initial, &tc, &corpus)?;
    let model_path = out.join(&cfg.train.model_file);
    save_model(&model, &model_path)?;
    let rows: Vec<HistoryRow> = hist
        .epoch_loss
        .iter()
        .zip(&hist.val_psnr)
        .enumerate()
        .map(|(i, (&l, &v))| HistoryRow {
            epoch: i + 1,
            train_loss: l,
            val_psnr: v,
            noisy_psnr: hist.noisy_psnr,
        })
        .collect();
    write_csv(&out.join("history.csv"), &rows)?;
    Ok(format!(
        "train: {} -> {} (validation PSNR {:.3} dB, noisy {:.3} dB)",
        tc.strategy.kind,
        model_path.display(),
        hist.val_psnr.last().copied().unwrap_or(f64::NAN),
        hist.noisy_psnr
    ))
}

// ---------------------------------------------------------------- attack

/// Noisy test samples: seeded crops of the corpus with seeded Gaussian noise.
/// `sigma = 0` yields noise-free samples.
pub fn build_dataset(corpus: &[PixelGrid], d: &DatasetSection) -> Result<Vec<Sample>, CliError> {
    if d.count == 0 {
        return Err(CliError::Usage("dataset count must be positive".into()));
    }
    let mut rng = SeededRng::new(d.seed, 0xda7a);
    let cleans = if d.patch_size == 0 {
        corpus.iter().cycle().take(d.count).cloned().collect()
    } else {
        usage(random_patches(corpus, d.patch_size, d.count, &mut rng))?
    };
    cleans
        .into_iter()
        .enumerate()
        .map(|(i, clean)| {
            let noisy = if d.sigma == 0.0 {
                clean.clone()
            } else {
                let n = usage(gaussian_noise(clean.len(), d.sigma, &mut rng))?;
                add_noise(&clean, &n)?
            };
            Ok(Sample {
                id: format!("s{i:04}"),
                clean,
                noisy,
            })
        })
        .collect()
}

pub fn attack_config(a: &AttackSection, seed: u64) -> Result<AttackConfig, CliError> {
    let cfg = AttackConfig {
        norm: parse_norm(&a.norm)?,
        epsilon: a.epsilon,
        alpha: a.alpha,
        steps: a.steps,
        random_init: a.random_init,
        clamp_valid_range: a.clamp,
        seed,
    };
    usage(cfg.validate())?;
    Ok(cfg)
}

#[derive(Serialize)]
struct AttackCsvRow<'a> {
    id: &'a str,
    norm: String,
    epsilon: f64,
    distance: f64,
    psnr_before: f64,
    psnr_after: f64,
    ssim_before: f64,
    ssim_after: f64,
    mae_before: f64,
    mae_after: f64,
}

#[derive(Serialize)]
struct AttackSummary {
    images: usize,
    mean_psnr_before: f64,
    mean_psnr_after: f64,
    mean_drop: f64,
    mean_ssim_before: f64,
    mean_ssim_after: f64,
}

fn run_attack(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let ac = attack_config(&cfg.attack, cfg.seed)?;
    let model = load_model(&cfg.attack.model)?;
    let data = build_dataset(&load_corpus(&cfg.corpus)?, &cfg.dataset)?;
    let report = attack_suite(&model, &data, &ac)?;
    let rows: Vec<AttackCsvRow> = report
        .rows
        .iter()
        .map(|r| AttackCsvRow {
            id: &r.id,
            norm: ac.norm.to_string(),
            epsilon: ac.epsilon,
            distance: r.distance,
            psnr_before: r.before.psnr,
            psnr_after: r.after.psnr,
            ssim_before: r.before.ssim,
            ssim_after: r.after.ssim,
            mae_before: r.before.mae,
            mae_after: r.after.mae,
        })
        .collect();
    write_csv(&out.join("attack.csv"), &rows)?;
    write_csv(
        &out.join("summary.csv"),
        &[AttackSummary {
            images: rows.len(),
            mean_psnr_before: report.mean_psnr_before,
            mean_psnr_after: report.mean_psnr_after,
            mean_drop: report.mean_drop(),
            mean_ssim_before: report.mean_ssim_before,
            mean_ssim_after: report.mean_ssim_after,
        }],
    )?;
    if cfg.attack.write_images {
        let dir = out.join("adv");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        for r in &report.rows {
            write_pgm(&r.adversarial, dir.join(format!("{}.pgm", r.id)), Depth::Sixteen)?;
        }
    }
    Ok(format!(
        "attack: {} images, mean PSNR {:.3} -> {:.3} dB (drop {:.3})",
        rows.len(),
        report.mean_psnr_before,
        report.mean_psnr_after,
        report.mean_drop()
    ))
}

// ---------------------------------------------------------------- probe

#[derive(Serialize)]
struct BlendRow {
    lambda: f64,
    score: f64,
}

#[derive(Serialize)]
struct PatchRow {
    method: &'static str,
    psnr_drop_inside: f64,
    psnr_drop_outside: f64,
    outside_identical: bool,
}

fn probe(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let p = &cfg.probe;
    let ac = attack_config(&cfg.attack, cfg.seed)?;
    let model = load_model(&p.model)?;
    let data = build_dataset(&load_corpus(&cfg.corpus)?, &cfg.dataset)?;
    let s = data
        .get(p.index)
        .ok_or_else(|| CliError::Usage(format!("probe index {} outside dataset of {}", p.index, data.len())))?;
    let u = &s.clean;
    let mut rng = SeededRng::new(cfg.seed, 0x9b0e);
    let adv1 = attack(&model, u, &s.noisy, &ac, &mut rng)?;
    let n1 = s.noisy.sub(u)?.into_values();
    let v1 = adv1.sub(&s.noisy)?.into_values();
    // A second observation of the same image for sphere and blend probes.
    let second = || -> Result<(PixelGrid, tslab::Grid), CliError> {
        let mut r2 = SeededRng::new(cfg.seed, 0x9b0f);
        let n = usage(gaussian_noise(u.len(), cfg.dataset.sigma.max(f64::MIN_POSITIVE), &mut r2))?;
        let noisy2 = add_noise(u, &n)?;
        let adv2 = attack(&model, u, &noisy2, &ac, &mut r2)?;
        Ok((noisy2, adv2))
    };
    match p.mode.as_str() {
        "radar" => {
            let g = radar_probe(&model, u, &n1, &v1, p.angular, p.radial)?;
            write_text(&out.join("probe.csv"), &g.to_csv())?;
            let (i, j) = g.argmax();
            Ok(format!("probe radar: max {:.4} dB at theta {:.4}, gamma {:.4}", g.score(i, j), g.thetas[i], g.second[j]))
        }
        "sphere" => {
            let (noisy2, _) = second()?;
            let n2 = noisy2.sub(u)?.into_values();
            let radius = p.radius.unwrap_or_else(|| v1.iter().map(|x| x * x).sum::<f64>().sqrt());
            let g = sphere_probe(&model, u, &n1, [&n1, &n2, &v1], p.angular, p.radial, radius)?;
            write_text(&out.join("probe.csv"), &g.to_csv())?;
            let (i, j) = g.argmax();
            Ok(format!("probe sphere: max {:.4} dB at theta {:.4}, phi {:.4}", g.score(i, j), g.thetas[i], g.second[j]))
        }
        "blend" => {
            let (noisy2, adv2) = second()?;
            let rows = p
                .lambdas
                .iter()
                .map(|&lambda| {
                    let gauss = blend_adversarials(u, &s.noisy, &noisy2, lambda)?;
                    let adv = blend_adversarials(u, &adv1, &adv2, lambda)?;
                    let score = psnr(&model.forward(&gauss), u, MAX_I)? - psnr(&model.forward(&adv), u, MAX_I)?;
                    Ok(BlendRow { lambda, score })
                })
                .collect::<tslab::Result<Vec<_>>>()?;
            write_csv(&out.join("blend.csv"), &rows)?;
            let adversarial = rows.iter().filter(|r| r.score > 0.0).count();
            Ok(format!("probe blend: {adversarial}/{} path samples adversarial", rows.len()))
        }
        "patch" => {
            let region = Region {
                row: p.region_row,
                col: p.region_col,
                height: p.region_size,
                width: p.region_size,
            };
            let base = model.forward(&s.noisy);
            let mut rows = Vec::new();
            for (name, method) in [("local-craft", PatchMethod::LocalCraft), ("crop-global", PatchMethod::CropGlobal)] {
                let mut r = SeededRng::new(cfg.seed, 0x9a7c);
                let adv = usage(patch_attack(&model, u, &s.noisy, region, method, &ac, &mut r))?;
                let den = model.forward(&adv);
                let w = adv.width();
                let outside_identical = (0..adv.len()).all(|k| {
                    region.contains(k / w, k % w) || adv.values()[k].to_bits() == s.noisy.values()[k].to_bits()
                });
                rows.push(PatchRow {
                    method: name,
                    psnr_drop_inside: region_psnr(&base, u, region, true)? - region_psnr(&den, u, region, true)?,
                    psnr_drop_outside: region_psnr(&base, u, region, false)? - region_psnr(&den, u, region, false)?,
                    outside_identical,
                });
            }
            write_csv(&out.join("patch.csv"), &rows)?;
            Ok(format!(
                "probe patch: inside drop {:.4}/{:.4} dB, outside {:.4}/{:.4} dB",
                rows[0].psnr_drop_inside, rows[1].psnr_drop_inside, rows[0].psnr_drop_outside, rows[1].psnr_drop_outside
            ))
        }
        other => Err(CliError::Usage(format!("unknown probe mode {other:?}"))),
    }
}

// ---------------------------------------------------------------- eval

#[derive(Serialize)]
struct EvalRow<'a> {
    id: &'a str,
    stage: &'static str,
    psnr: f64,
    ssim: f64,
    mae: f64,
}

#[derive(Serialize)]
struct TransferRow<'a> {
    id: &'a str,
    input_loss: f64,
    source_loss: f64,
    source_adv_loss: f64,
    target_loss: f64,
    target_adv_loss: f64,
    result: &'static str,
}

fn transfer_name(t: Transferability) -> &'static str {
    match t {
        Transferability::Transferable => "transferable",
        Transferability::NotTransferable => "not-transferable",
        Transferability::AttackFailed => "attack-failed",
    }
}

fn load_pair(a: &Path, b: Option<&PathBuf>) -> Result<(Denoiser, Option<Denoiser>), CliError> {
    Ok((load_model(a)?, b.map(load_model).transpose()?))
}

fn eval(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let ac = attack_config(&cfg.attack, cfg.seed)?;
    let (source, target) = load_pair(&cfg.eval.model, cfg.eval.model_b.as_ref())?;
    let data = build_dataset(&load_corpus(&cfg.corpus)?, &cfg.dataset)?;
    let root = SeededRng::new(cfg.seed, 0xe7a1);
    let mut rows = Vec::new();
    let mut transfers = Vec::new();
    for (i, s) in data.iter().enumerate() {
        let tag = |e: tslab::Error| CliError::from(e.for_item(&s.id));
        let adv = attack(&source, &s.clean, &s.noisy, &ac, &mut root.fork(i as u64)).map_err(tag)?;
        let denoised = source.forward(&s.noisy);
        let adv_denoised = source.forward(&adv);
        for (stage, img) in [("noisy", s.noisy.as_grid()), ("denoised", &denoised), ("adv_denoised", &adv_denoised)] {
            let m = MetricReport::compute(img, &s.clean).map_err(tag)?;
            rows.push(EvalRow { id: &s.id, stage, psnr: m.psnr, ssim: m.ssim, mae: m.mae });
        }
        if let Some(t) = &target {
            let input_loss = mse(&s.noisy, &s.clean)?;
            let a = ModelLosses::measure(&source, &s.clean, &s.noisy, &adv)?;
            let b = ModelLosses::measure(t, &s.clean, &s.noisy, &adv)?;
            let result = transfer_condition(input_loss, a, b, cfg.eval.margin).map_err(|e| CliError::Usage(e.to_string()))?;
            transfers.push(TransferRow {
                id: &s.id,
                input_loss,
                source_loss: a.on_input,
                source_adv_loss: a.on_adversarial,
                target_loss: b.on_input,
                target_adv_loss: b.on_adversarial,
                result: transfer_name(result),
            });
        }
    }
    write_csv(&out.join("eval.csv"), &rows)?;
    let mut summary = format!("eval: {} images", data.len());
    if target.is_some() {
        write_csv(&out.join("transfer.csv"), &transfers)?;
        let ok = transfers.iter().filter(|t| t.result == "transferable").count();
        summary.push_str(&format!(", {ok}/{} transferable at M = {}", transfers.len(), cfg.eval.margin));
    }
    Ok(summary)
}
