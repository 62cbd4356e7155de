//! End-to-end runs of the `tslab` binary: exit codes, CSV shapes, and
//! reproducibility of the manifest.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const SMALL: &str = "\
seed = 5
[typical_set]
trials = 400
[sample]
dim = 512
draws = 300
bins = 10
[corpus]
synthetic_count = 6
synthetic_size = 32
[train]
patch_size = 16
stride = 8
epochs = 1
steps_per_epoch = 15
validation_patches = 4
[dataset]
count = 3
patch_size = 24
";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, extra: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, format!("{SMALL}{extra}")).unwrap();
        p
    }

    fn run(&self, cmd: &str, config: &Path, out: &str, flags: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_tslab"))
            .arg(cmd)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.path(out))
            .args(flags)
            .output()
            .unwrap()
    }

    fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap()
    }

    /// Train a tiny model and return its path.
    fn model(&self) -> PathBuf {
        let cfg = self.config("train.toml", "");
        let out = self.run("train", &cfg, "trained", &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        self.path("trained/model.tsdn")
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn model_sections(model: &Path) -> String {
    format!("[attack]\nmodel = {model:?}\n[eval]\nmodel = {model:?}\n[probe]\nmodel = {model:?}\n")
}

#[test]
fn malformed_config_is_a_usage_error() {
    let ws = Workspace::new();
    let cfg = ws.path("bad.toml");
    std::fs::write(&cfg, "[typical_set\ndim = 3").unwrap();
    let o = ws.run("verify", &cfg, "out", &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid config"));
}

#[test]
fn unknown_key_and_bad_values_are_usage_errors() {
    let ws = Workspace::new();
    let o = ws.run("verify", &ws.config("a.toml", "[attack]\nepsilonn = 1\n"), "out", &[]);
    assert_eq!(code(&o), 2);
    let o = ws.run("sample", &ws.config("b.toml", "[strategy]\nkind = \"gaussian\"\n"), "out", &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_config_and_unknown_command_exit_2() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run("verify", &ws.path("absent.toml"), "out", &[])), 2);
    let cfg = ws.config("c.toml", "");
    assert_eq!(code(&ws.run("explode", &cfg, "out", &[])), 2);
}

#[test]
fn verify_passes_on_defaults_and_fails_threshold_on_tiny_epsilon() {
    let ws = Workspace::new();
    let ok = ws.run("verify", &ws.config("ok.toml", ""), "ok", &[]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let csv = ws.read("ok/verify.csv");
    assert!(csv.starts_with("check,trials,violations,rate,max_rate,bound,pass\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(ws.read("ok/bounds.csv").contains("entropy_bits,"));

    let cfg = ws.path("eps.toml");
    std::fs::write(&cfg, SMALL.replace("trials = 400", "trials = 400\nepsilon = 1e-6")).unwrap();
    let fail = ws.run("verify", &cfg, "eps", &[]);
    assert_eq!(code(&fail), 1);
    let row = ws.read("eps/verify.csv").lines().nth(1).unwrap().to_string();
    let violations: u64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(violations > 0, "{row}");
}

#[test]
fn single_draw_gives_single_histogram_row() {
    let ws = Workspace::new();
    let cfg = ws.path("one.toml");
    std::fs::write(&cfg, SMALL.replace("draws = 300", "draws = 1")).unwrap();
    let o = ws.run("sample", &cfg, "one", &[]);
    assert_eq!(code(&o), 0);
    let hist = ws.read("one/histogram.csv");
    assert_eq!(hist.lines().count(), 2, "{hist}");
    assert!(hist.ends_with(",1\n"));
}

fn summary_mean(ws: &Workspace, out: &str) -> f64 {
    let s = ws.read(&format!("{out}/summary.csv"));
    s.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap()
}

#[test]
fn ts_def_histogram_mean_exceeds_normal() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run("sample", &ws.config("n.toml", ""), "normal", &[])), 0);
    let ts = ws.config("t.toml", "[strategy]\nkind = \"ts-def\"\n");
    assert_eq!(code(&ws.run("sample", &ts, "tsdef", &[])), 0);
    assert!(summary_mean(&ws, "tsdef") > summary_mean(&ws, "normal"));
}

#[test]
fn seeds_control_sample_bytes() {
    let ws = Workspace::new();
    let cfg = ws.config("s.toml", "");
    ws.run("sample", &cfg, "a", &[]);
    ws.run("sample", &cfg, "b", &[]);
    ws.run("sample", &cfg, "c", &["--seed", "6"]);
    assert_eq!(ws.read("a/histogram.csv"), ws.read("b/histogram.csv"));
    assert_ne!(ws.read("a/histogram.csv"), ws.read("c/histogram.csv"));
    assert!(ws.read("c/manifest.toml").contains("seed = 6"));
}

#[test]
fn manifest_reruns_to_identical_outputs() {
    let ws = Workspace::new();
    ws.run("sample", &ws.config("m.toml", "[strategy]\nkind = \"mixed\"\nsigma2 = 0.15\n"), "first", &[]);
    let again = ws.run("sample", &ws.path("first/manifest.toml"), "second", &[]);
    assert_eq!(code(&again), 0, "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(ws.read("first/histogram.csv"), ws.read("second/histogram.csv"));
}

#[test]
fn train_writes_model_and_history_and_resumes() {
    let ws = Workspace::new();
    let model = ws.model();
    assert!(std::fs::read(&model).unwrap().starts_with(b"TSDN"));
    let history = ws.read("trained/history.csv");
    assert!(history.starts_with("epoch,train_loss,val_psnr,noisy_psnr\n"));
    assert_eq!(history.lines().count(), 2);

    let cfg = ws.path("resume2.toml");
    std::fs::write(&cfg, SMALL.replace("validation_patches = 4", &format!("validation_patches = 4\nresume = {model:?}"))).unwrap();
    let o = ws.run("train", &cfg, "resumed", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resume_from_missing_file_is_a_file_error() {
    let ws = Workspace::new();
    let cfg = ws.path("r.toml");
    std::fs::write(&cfg, SMALL.replace("validation_patches = 4", "validation_patches = 4\nresume = \"nowhere.tsdn\"")).unwrap();
    let o = ws.run("train", &cfg, "out", &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.tsdn"));
}

#[test]
fn missing_model_is_a_file_error() {
    let ws = Workspace::new();
    let missing = ws.path("missing.tsdn");
    for cmd in ["attack", "eval", "probe"] {
        let o = ws.run(cmd, &ws.config("m.toml", &model_sections(&missing)), "out", &[]);
        assert_eq!(code(&o), 2, "{cmd}");
    }
}

#[test]
fn attack_writes_rows_and_sixteen_bit_images() {
    let ws = Workspace::new();
    let model = ws.model();
    let o = ws.run("attack", &ws.config("a.toml", &model_sections(&model)), "atk", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = ws.read("atk/attack.csv");
    assert_eq!(csv.lines().count(), 4);
    for line in csv.lines().skip(1) {
        let distance: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(distance <= 3.0 / 255.0 + 1e-15);
    }
    let img = std::fs::read(ws.path("atk/adv/s0000.pgm")).unwrap();
    assert!(img.starts_with(b"P5"));
    assert!(String::from_utf8_lossy(&img[..20]).contains("65535"));
}

#[test]
fn zero_step_attack_has_zero_drop() {
    let ws = Workspace::new();
    let model = ws.model();
    let extra = model_sections(&model).replace("[attack]\n", "[attack]\nsteps = 0\n");
    let o = ws.run("attack", &ws.config("z.toml", &extra), "z", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary_drop(&ws.read("z/summary.csv")), 0.0);
}

fn summary_drop(csv: &str) -> f64 {
    csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap()
}

#[test]
fn eval_of_noise_free_inputs_reports_sentinels() {
    let ws = Workspace::new();
    let model = ws.model();
    let cfg = ws.path("e.toml");
    let text = format!("{SMALL}{}", model_sections(&model));
    std::fs::write(&cfg, text.replace("patch_size = 24\n", "patch_size = 24\nsigma = 0.0\n")).unwrap();
    let o = ws.run("eval", &cfg, "e", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = ws.read("e/eval.csv");
    assert!(csv.starts_with("id,stage,psnr,ssim,mae\n"));
    assert!(csv.lines().any(|l| l == "s0000,noisy,inf,1.0,0.0"), "{csv}");
    assert!(!ws.path("e/transfer.csv").exists());
}

#[test]
fn eval_self_transfer_reports_every_row() {
    let ws = Workspace::new();
    let model = ws.model();
    let extra = model_sections(&model).replace("[eval]\n", &format!("[eval]\nmodel_b = {model:?}\n"));
    let o = ws.run("eval", &ws.config("t.toml", &extra), "t", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = ws.read("t/transfer.csv");
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| ["transferable", "not-transferable", "attack-failed"]
        .iter()
        .any(|r| l.ends_with(&format!(",{r}")))));
}

#[test]
fn probe_modes_write_their_tables() {
    let ws = Workspace::new();
    let model = ws.model();
    let base = model_sections(&model);
    let probe = |mode: &str, extra: &str, out: &str| {
        let sections = base.replace("[probe]\n", &format!("[probe]\nmode = \"{mode}\"\nangular = 6\nradial = 3\n{extra}"));
        let o = ws.run("probe", &ws.config(&format!("{out}.toml"), &sections), out, &[]);
        assert_eq!(code(&o), 0, "{mode}: {}", String::from_utf8_lossy(&o.stderr));
    };
    probe("radar", "", "radar");
    let radar = ws.read("radar/probe.csv");
    assert!(radar.starts_with("theta,gamma_or_phi,score\n"));
    assert_eq!(radar.lines().count(), 1 + 6 * 3);

    probe("sphere", "radius = 0.0\n", "sphere");
    let sphere = ws.read("sphere/probe.csv");
    assert!(sphere.lines().skip(1).all(|l| l.ends_with(",0")), "{sphere}");

    probe("blend", "", "blend");
    assert_eq!(ws.read("blend/blend.csv").lines().count(), 6);

    probe("patch", "region_row = 4\nregion_col = 4\nregion_size = 8\n", "patch");
    let patch = ws.read("patch/patch.csv");
    assert!(patch.lines().skip(1).all(|l| l.ends_with(",true")), "{patch}");

    let bad = base.replace("[probe]\n", "[probe]\nmode = \"spiral\"\n");
    assert_eq!(code(&ws.run("probe", &ws.config("bad.toml", &bad), "bad", &[])), 2);
}
