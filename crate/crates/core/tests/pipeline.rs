//! Cross-module pipelines: corpus -> training -> persistence -> attack ->
//! probe -> metrics, on models small enough to train in a second.

use proptest::prelude::*;
use tslab::attack::{attack, attack_suite, AttackConfig, Sample};
use tslab::corpus::{random_patches, synthetic_corpus, CorpusConfig};
use tslab::denoiser::{load_model, save_model, train, Arch, Denoiser, TrainConfig};
use tslab::metrics::{psnr, MetricReport, MAX_I};
use tslab::pgm::{read_pgm, write_pgm, Depth};
use tslab::probe::{radar_probe, sphere_probe};
use tslab::ts_sampler::NoiseStrategy;
use tslab::typical_set::log_density;
use tslab::{add_noise, gaussian_noise, Grid, NormKind, PixelGrid, SeededRng};

const SIGMA: f64 = 25.0 / 255.0;

fn tiny_corpus(seed: u64) -> Vec<PixelGrid> {
    synthetic_corpus(&CorpusConfig { count: 6, size: 32, ..CorpusConfig::default() }, seed).unwrap()
}

fn tiny_train(strategy: NoiseStrategy, seed: u64) -> Denoiser {
    let mut cfg = TrainConfig::new(strategy, seed);
    cfg.arch = Arch { layers: 3, channels: 8 };
    cfg.patch_size = 16;
    cfg.stride = 8;
    cfg.steps_per_epoch = Some(40);
    cfg.validation_patches = 4;
    train(&cfg, &tiny_corpus(1)).unwrap().0
}

fn samples(count: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = SeededRng::new(seed, 3);
    random_patches(&tiny_corpus(50), size, count, &mut rng)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, clean)| {
            let n = gaussian_noise(clean.len(), SIGMA, &mut rng).unwrap();
            Sample { id: format!("p{i}"), noisy: add_noise(&clean, &n).unwrap(), clean }
        })
        .collect()
}

#[test]
fn trained_model_round_trips_through_disk() {
    let model = tiny_train(NoiseStrategy::normal(SIGMA).unwrap(), 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tsdn");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let x = &samples(1, 16, 1)[0].noisy;
    assert_eq!(back.forward(x), model.forward(x));
}

#[test]
fn training_is_reproducible_per_strategy() {
    for strategy in [NoiseStrategy::ts_def(SIGMA, 3).unwrap(), NoiseStrategy::mixed(SIGMA, 0.15).unwrap()] {
        assert_eq!(tiny_train(strategy.clone(), 9), tiny_train(strategy, 9));
    }
}

#[test]
fn adversarial_images_survive_sixteen_bit_pgm() {
    let model = tiny_train(NoiseStrategy::normal(SIGMA).unwrap(), 2);
    let s = &samples(1, 16, 2)[0];
    let adv = attack(&model, &s.clean, &s.noisy, &AttackConfig::default(), &mut SeededRng::new(1, 1)).unwrap();
    let px = PixelGrid::try_from_grid(adv.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adv.pgm");
    write_pgm(&px, &path, Depth::Sixteen).unwrap();
    let back = read_pgm(&path).unwrap();
    let worst = back.values().iter().zip(adv.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1.0 / 131_070.0 + 1e-15);
}

#[test]
fn suite_reports_agree_with_metric_reports() {
    let model = tiny_train(NoiseStrategy::normal(SIGMA).unwrap(), 3);
    let data = samples(3, 16, 3);
    let report = attack_suite(&model, &data, &AttackConfig::default()).unwrap();
    for (row, s) in report.rows.iter().zip(&data) {
        let after = MetricReport::compute(&model.forward(&row.adversarial), &s.clean).unwrap();
        assert_eq!(after, row.after);
        assert!(row.distance <= 3.0 / 255.0 + 1e-15);
    }
    let mean = report.rows.iter().map(|r| r.after.psnr).sum::<f64>() / 3.0;
    assert!((mean - report.mean_psnr_after).abs() < 1e-12);
}

#[test]
fn probe_origins_score_zero_on_trained_model() {
    let model = tiny_train(NoiseStrategy::normal(SIGMA).unwrap(), 5);
    let s = &samples(1, 16, 5)[0];
    let adv = attack(&model, &s.clean, &s.noisy, &AttackConfig::default(), &mut SeededRng::new(5, 5)).unwrap();
    let n = s.noisy.sub(&s.clean).unwrap().into_values();
    let v = adv.sub(&s.noisy).unwrap().into_values();
    let radar = radar_probe(&model, &s.clean, &n, &v, 8, 4).unwrap();
    for i in 0..8 {
        assert!(radar.score(i, 0).abs() <= 1e-9);
    }
    let mut rng = SeededRng::new(5, 6);
    let n2 = gaussian_noise(n.len(), SIGMA, &mut rng).unwrap().into_values();
    let flat = sphere_probe(&model, &s.clean, &n, [&n, &n2, &v], 6, 3, 0.0).unwrap();
    assert!(flat.scores.iter().all(|&x| x == 0.0));
}

#[test]
fn ts_def_training_noise_is_less_likely_than_normal() {
    let mut normal = NoiseStrategy::normal(SIGMA).unwrap();
    let mut ts = NoiseStrategy::ts_def(SIGMA, 10).unwrap();
    let (mut a, mut b) = (SeededRng::new(8, 0), SeededRng::new(8, 0));
    let mean = |s: &mut NoiseStrategy, rng: &mut SeededRng| {
        (0..200).map(|_| log_density(s.next_noise(1024, rng).unwrap().values(), SIGMA)).sum::<f64>() / 200.0
    };
    assert!(mean(&mut ts, &mut b) < mean(&mut normal, &mut a));
}

fn any_model() -> impl Strategy<Value = Denoiser> {
    (any::<u64>(), 2usize..4).prop_map(|(seed, layers)| Denoiser::init(Arch { layers, channels: 4 }, seed).unwrap())
}

fn any_image(size: usize) -> impl Strategy<Value = PixelGrid> {
    prop::collection::vec(0.0f64..=1.0, size * size).prop_map(move |v| PixelGrid::new(size, size, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attacks_stay_in_budget_and_range(
        model in any_model(),
        clean in any_image(8),
        noisy in any_image(8),
        eps_levels in 1u32..8,
        steps in 0usize..4,
        random_init in any::<bool>(),
        seed in any::<u64>(),
    ) {
        for norm in [NormKind::Linf, NormKind::L2] {
            let cfg = AttackConfig {
                norm,
                epsilon: eps_levels as f64 / 255.0,
                alpha: 2.0 / 255.0,
                steps,
                random_init,
                ..AttackConfig::default()
            };
            let adv = attack(&model, &clean, &noisy, &cfg, &mut SeededRng::new(seed, 0)).unwrap();
            prop_assert!(adv.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let d = adv.sub(&noisy).unwrap();
            match norm {
                NormKind::Linf => prop_assert!(adv
                    .values()
                    .iter()
                    .zip(noisy.values())
                    .all(|(&a, &b)| b - cfg.epsilon <= a && a <= b + cfg.epsilon)),
                _ => {
                    let r = d.values().iter().map(|v| v * v).sum::<f64>().sqrt();
                    prop_assert!(r <= cfg.l2_radius(64) * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn psnr_is_symmetric_and_finite_off_diagonal(a in any_image(12), b in any_image(12)) {
        let ab = psnr(&a, &b, MAX_I).unwrap();
        prop_assert_eq!(ab, psnr(&b, &a, MAX_I).unwrap());
        if a != b {
            prop_assert!(ab.is_finite());
        }
    }

    #[test]
    fn forward_output_is_a_valid_image(model in any_model(), x in any_image(6)) {
        let y: Grid = model.forward(&x).into_grid();
        prop_assert!(y.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
