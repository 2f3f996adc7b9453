use std::fs;
use std::path::Path;
use std::process::Command;

use ired_cli::ablate::{cmd_ablate, row_config, LADDER};
use ired_cli::checkpoint::Checkpoint;
use ired_cli::config::ExperimentConfig;
use ired_cli::data::{cmd_gen, load_split};
use ired_cli::eval::cmd_eval;
use ired_cli::layout::Layout;
use ired_cli::run::{cmd_train, count_loss_rows};
use ired_core::tasks::Difficulty;
use ired_core::train::Trainer;
use ired_core::{EnergyModel, Tensor};

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let text = format!("output_dir = {:?}\n{body}", dir.to_str().unwrap());
    ExperimentConfig::parse(&text).unwrap()
}

const ADDITION: &str = r#"
name = "addition"
seeds = [0, 1]

[task]
task = "addition"
n = 3

[model]
arch = "mlp_energy"
width = 8
depth = 2

[data]
train = 40
test = 7
harder = 5

[train]
batch = 4
lr = 1e-3
iterations = 6
checkpoint_every = 2

[solve]
steps = [1, 2, 4]
"#;

const CONNECTIVITY: &str = r#"
name = "conn"
seeds = [3]

[task]
task = "connectivity"
nodes = 4

[model]
arch = "edge_relational_energy"
width = 4
depth = 1

[data]
train = 20
test = 10
harder = 0

[train]
batch = 4
lr = 1e-3
iterations = 0

[solve]
steps = [1]
"#;

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn gen_is_idempotent_and_empty_splits_are_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), CONNECTIVITY);
    let first: Vec<Vec<u8>> = cmd_gen(&cfg).unwrap().iter().map(|p| read(p)).collect();
    let second: Vec<Vec<u8>> = cmd_gen(&cfg).unwrap().iter().map(|p| read(p)).collect();
    assert_eq!(first, second);
    let harder = Layout::new(&cfg).split_file(3, Difficulty::Harder);
    assert_eq!(fs::read_to_string(harder).unwrap(), "# ired-dataset v1\n");
    assert_eq!(load_split(&cfg, 3, Some(Difficulty::Standard)).unwrap().len(), 10);
}

#[test]
fn zero_iterations_checkpoints_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), CONNECTIVITY);
    cmd_gen(&cfg).unwrap();
    let out = cmd_train(&cfg, 3, None).unwrap();
    assert_eq!(out.iterations_run, 0);
    let ck = Checkpoint::load(&out.checkpoint).unwrap();
    assert_eq!(ck.model().unwrap(), EnergyModel::build(cfg.model_spec(), 3).unwrap());
    assert_eq!(count_loss_rows(&Layout::new(&cfg).loss_csv(&cfg, 3)).unwrap(), 0);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ADDITION);
    cmd_gen(&cfg).unwrap();
    let full = cmd_train(&cfg, 1, None).unwrap();
    let layout = Layout::new(&cfg);
    let loss = layout.loss_csv(&cfg, 1);
    assert_eq!(count_loss_rows(&loss).unwrap(), 6);
    let full_losses = read(&loss);
    let full_ckpt = read(&full.checkpoint);

    let mid = layout.checkpoint_at(&cfg, 1, 4);
    let resumed = cmd_train(&cfg, 1, Some(&mid)).unwrap();
    assert_eq!(resumed.iterations_run, 2);
    assert_eq!(read(&resumed.checkpoint), full_ckpt);
    assert_eq!(read(&loss), full_losses);

    // a checkpoint from different training settings is refused
    let mut other = cfg.clone();
    other.train.lr = 5e-3;
    let err = cmd_train(&other, 1, Some(&mid)).unwrap_err();
    assert!(format!("{err:#}").contains("different configuration"));
}

#[test]
fn eval_reports_are_reproducible_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ADDITION);
    cmd_gen(&cfg).unwrap();
    for s in [0, 1] {
        cmd_train(&cfg, s, None).unwrap();
    }
    let report = cmd_eval(&cfg, None, None).unwrap();
    assert_eq!(report.rows.len(), 2 * 3 * 2);
    assert_eq!(report.aggregates.len(), 2 * 3);
    let json = Layout::new(&cfg).reports().join("eval.json");
    let csv = Layout::new(&cfg).reports().join("eval.csv");
    let (j1, c1) = (read(&json), read(&csv));
    cmd_eval(&cfg, None, None).unwrap();
    assert_eq!(read(&json), j1);
    assert_eq!(read(&csv), c1);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 13);
}

#[test]
fn quadratic_stub_solves_addition_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let body = ADDITION
        .replace("arch = \"mlp_energy\"\nwidth = 8\ndepth = 2", "arch = \"quadratic\"\nwidth = 1\ndepth = 1")
        .replace("seeds = [0, 1]", "seeds = [0]")
        .replace("steps = [1, 2, 4]", "steps = [1, 5]");
    let cfg = config(dir.path(), &body);
    cmd_gen(&cfg).unwrap();
    // energy ½s_k‖y − √ᾱ_k·[I I]·x‖² with s_k = 1/λ_k, so each descent
    // step lands on the minimizer and level 0 returns A + B
    let mut m = EnergyModel::zeroed(cfg.model_spec()).unwrap();
    let mut w = vec![0.0; 18 * 9];
    for i in 0..9 {
        w[i * 9 + i] = 1.0;
        w[(9 + i) * 9 + i] = 1.0;
    }
    m.set_param("target.w", Tensor::new(vec![18, 9], w).unwrap()).unwrap();
    let sched = cfg.schedule();
    let mean: Vec<f64> = (0..=10).map(|k| sched.retention(k)).collect();
    m.set_param("level.mean", Tensor::vector(mean)).unwrap();
    let stiffness: Vec<f64> = cfg.solve_config(1, 0).lambda.iter().map(|l| 1.0 / l).collect();
    m.set_param("level.stiffness", Tensor::vector(stiffness)).unwrap();
    let ck = Checkpoint::from_trainer(&Trainer::new(m), &sched, 0, &cfg.training_hash());
    let path = dir.path().join("stub.ckpt");
    ck.save(&path).unwrap();
    let report = cmd_eval(&cfg, Some(&path), Some(&[1, 5])).unwrap();
    for row in &report.rows {
        assert!(row.metric < 1e-10, "{row:?}");
    }
}

#[test]
fn ablation_ladder_dispatch_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &ADDITION.replace("seeds = [0, 1]", "seeds = [0]"));
    cmd_gen(&cfg).unwrap();
    let report = cmd_ablate(&cfg).unwrap();
    assert_eq!(report.rows.len(), 4 * 2);
    let rows: Vec<_> = report.rows.iter().filter(|r| r.difficulty == "harder").collect();
    assert_eq!(
        rows.iter().map(|r| r.row.as_str()).collect::<Vec<_>>(),
        ["noisy", "gd_t1", "gd_refine", "full"]
    );
    assert!(rows[0].noisy_mode && rows[1..].iter().all(|r| !r.noisy_mode));
    assert_eq!(rows.iter().map(|r| r.steps).collect::<Vec<_>>()[1..], [1, 4, 4]);
    // rows differ only in the ablation flags
    let mut base = cfg.clone();
    base.ablation = LADDER[0].1;
    for (_, flags) in LADDER {
        let mut c = row_config(&cfg, flags);
        c.ablation = LADDER[0].1;
        assert_eq!(c.hash(), base.hash());
    }
    // rows 1 to 3 share one model, the full row trains its own
    let runs = fs::read_dir(dir.path().join("runs")).unwrap().count();
    assert_eq!(runs, 2);
}

fn ired() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ired"))
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = ired().args(["-c", "/nonexistent.toml", "gen"]).output().unwrap();
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "io");

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, format!("{ADDITION}\nunknown = 1\n").replace("name =", "output_dir = \"x\"\nname =")).unwrap();
    let out = ired().arg("-c").arg(&cfg).arg("gen").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "config");

    let out = ired().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "usage");
}

#[test]
fn binary_resolves_outputs_against_the_root_variable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("output_dir = \"exp\"\n{CONNECTIVITY}")).unwrap();
    let run = |args: &[&str]| {
        let out = ired()
            .arg("-c")
            .arg(&cfg)
            .args(args)
            .env("IRED_OUTPUT_ROOT", dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    run(&["gen"]);
    assert!(dir.path().join("exp/data/seed-3/train.jsonl").exists());
    run(&["train", "--iterations", "2"]);
    let v = run(&["eval", "--iterations", "2"]);
    assert!(v["report"].as_str().unwrap().starts_with(dir.path().to_str().unwrap()));
    run(&["plot-traces", "--seed", "3", "--iterations", "2", "--count", "2"]);
    assert!(dir.path().join("exp/traces/standard-t1-seed-3.csv").exists());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
        n += 1;
    }
    assert_eq!(n, 8);
}
