//! Experiment drivers end to end: table schemas, determinism, and the
//! outcome patterns of each experiment on small configurations.

use std::path::Path;

use qkdfl::experiment::report::{self, read_round_records};
use qkdfl::experiment::{run, run_experiment_c, ExperimentConfig, ExperimentKind};
use qkdfl::fl::{Mode, RoundStatus};

fn federated(kind: &str, clients: &str, modes: &str, eve: bool, gamma: f64) -> ExperimentConfig {
    let text = format!(
        r#"
experiment = "{kind}"
task = "channel"
seed = 11
clients = {clients}
rounds = 2
modes = {modes}
eve = {eve}
qber_threshold = 0.08

[qkd]
raw_len = 1000
pa_ratio = 0.8
depolarize_prob = 0.0

[masking]
gamma = {gamma:e}
key_bits = 256

[model]
preset = "desk"
init_seed = 3

[data]
train_samples = 24
val_samples = 6
snr_db = [5.0, 15.0]
val_snr_db = 10.0

[training]
epochs = 1
lr = 1e-3
batch_size = 4
beta1 = 0.9
beta2 = 0.999
adam_eps = 1e-8
"#
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn sweep(etas: &str, sessions: usize) -> ExperimentConfig {
    let text = format!(
        r#"
experiment = "C"
task = "radar"
seed = 4
clients = []
rounds = 1
modes = []
eve = false
qber_threshold = 0.08
[qkd]
raw_len = 2000
pa_ratio = 0.8
depolarize_prob = 0.0
[masking]
gamma = 1e-3
key_bits = 256
[sweep]
etas = {etas}
sessions = {sessions}
"#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let width = r.headers().unwrap().len();
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert!(rows.iter().all(|row| row.len() == width), "{}", path.display());
    rows
}

#[test]
fn table_schemas_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    run(&federated("A", "[2]", r#"["plain"]"#, false, 1e-3), &dir.path().join("a")).unwrap();
    run(&federated("B", "[2]", "[]", true, 1e-3), &dir.path().join("b")).unwrap();
    run(&sweep("[0.0]", 4), &dir.path().join("c")).unwrap();
    let expect = [
        ("a/rounds.csv", "schema_version,config_hash,experiment,task,scenario,clients,mode,eve,round,status,qber,sifted_len,final_len,nmse,accuracy,miou,recon_error,leakage_cosine,leakage_pearson,bytes_down,bytes_up"),
        ("a/utility.csv", "schema_version,config_hash,experiment,task,scenario,clients,mode,eve,rounds,secure_rounds,aborted_rounds,nmse,accuracy,miou,bytes_down,bytes_up,total_bytes_down,total_bytes_up,max_recon_error,mean_qber"),
        ("a/leakage.csv", "schema_version,config_hash,experiment,task,scenario,clients,mode,round,nmse,accuracy,miou,qber,mean_cosine,mean_pearson"),
        ("b/threat_summary.csv", "schema_version,config_hash,experiment,task,scenario,clients,mode,eve,rounds,secure,aborted,recovered,mean_qber,min_qber,max_qber,nmse,accuracy,miou"),
        ("c/qber_sweep.csv", "schema_version,config_hash,task,eta,eve,sessions,qber_threshold,pooled_qber,mean_qber,qber_std_err,min_qber,max_qber,mean_sifted_len,abort_count,abort_rate"),
    ];
    for (file, cols) in expect {
        let path = dir.path().join(file);
        assert_eq!(header(&path), cols, "{file}");
        for row in csv_rows(&path) {
            assert_eq!(&row[0], "1", "{file}");
        }
    }
}

#[test]
fn every_row_echoes_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = federated("A", "[2, 3]", r#"["plain", "qkd_sa"]"#, false, 1e-3);
    run(&cfg, dir.path()).unwrap();
    let hash = cfg.hash();
    for file in ["rounds.csv", "utility.csv", "leakage.csv"] {
        let rows = csv_rows(&dir.path().join(file));
        assert!(!rows.is_empty(), "{file}");
        assert!(rows.iter().all(|r| &r[1] == hash.as_str()), "{file}");
    }
    let m = report::read_manifest(dir.path()).unwrap();
    assert_eq!(m.config_hash, hash);
    assert_eq!(m.config, ExperimentConfig { output_dir: None, ..cfg });
}

#[test]
fn experiment_a_rows_and_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = federated("A", "[2, 4]", r#"["plain", "classical_sa", "qkd_sa"]"#, false, 1e-3);
    run(&cfg, dir.path()).unwrap();
    let rows = csv_rows(&dir.path().join("utility.csv"));
    assert_eq!(rows.len(), 6);
    let params = report::read_manifest(dir.path()).unwrap().model_params.unwrap() as u64;
    for row in &rows {
        let k: u64 = row[5].parse().unwrap();
        assert_eq!(row[14].parse::<u64>().unwrap(), 8 * params);
        assert_eq!(row[15].parse::<u64>().unwrap(), k * 8 * params);
        assert_eq!(&row[10], "0");
    }
    let records = read_round_records(dir.path()).unwrap();
    assert_eq!(records.len(), 12);
    let nmse = |mode: Mode, k: usize| {
        records
            .iter()
            .rfind(|r| r.report.mode == mode && r.report.num_clients == k)
            .unwrap()
            .report
            .utility
            .nmse()
            .unwrap()
    };
    for k in [2, 4] {
        let base = nmse(Mode::Plain, k);
        for m in [Mode::ClassicalSa, Mode::QkdSa] {
            assert!((nmse(m, k) - base).abs() / base < 1e-6, "{m:?} K={k}");
        }
    }
}

#[test]
fn experiment_b_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = federated("B", "[3]", r#"["plain", "qkd_sa"]"#, true, 1e-3);
    cfg.rounds = 5;
    run(&cfg, dir.path()).unwrap();
    let rows = csv_rows(&dir.path().join("threat_summary.csv"));
    assert_eq!(rows.len(), 3);
    let get = |scenario: &str, mode: &str| rows.iter().find(|r| &r[4] == scenario && &r[6] == mode).unwrap();
    for mode in ["plain", "qkd_sa"] {
        let r = get("baseline", mode);
        assert_eq!((&r[8], &r[9], &r[10], &r[11]), ("5", "5", "0", "0"));
    }
    let eve = get("eve", "qkd_sa");
    assert_eq!((&eve[8], &eve[9], &eve[10], &eve[11]), ("5", "0", "5", "0"));
    let mean_qber: f64 = eve[12].parse().unwrap();
    assert!((0.20..=0.30).contains(&mean_qber), "{mean_qber}");
    // leakage table holds only the secure rounds
    let leak = csv_rows(&dir.path().join("leakage.csv"));
    assert_eq!(leak.len(), 10);
    assert!(leak.iter().all(|r| &r[4] == "baseline"));
}

#[test]
fn experiment_c_sweep_shape() {
    let cfg = sweep("[0.0, 0.05, 0.1, 0.15, 0.2]", 200);
    let rows = run_experiment_c(&cfg).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0].pooled_qber, 0.0);
    assert_eq!(rows[0].abort_rate, 0.0);
    for w in rows.windows(2) {
        assert!(w[1].pooled_qber >= w[0].pooled_qber);
    }
    for r in &rows {
        assert!((r.pooled_qber - r.eta / 2.0).abs() < 0.01, "eta {} qber {}", r.eta, r.pooled_qber);
    }
    assert!(rows[4].abort_rate > 0.5);
}

#[test]
fn leakage_report_degenerate_cases() {
    let dir = tempfile::tempdir().unwrap();
    run(&federated("A", "[3]", r#"["plain"]"#, false, 1e-3), &dir.path().join("plain")).unwrap();
    run(&federated("A", "[3]", r#"["qkd_sa"]"#, false, 0.0), &dir.path().join("g0")).unwrap();
    run(&federated("A", "[3]", r#"["qkd_sa"]"#, false, 1e-3), &dir.path().join("masked")).unwrap();
    let cos = |d: &str| -> Vec<f64> {
        csv_rows(&dir.path().join(d).join("leakage.csv")).iter().map(|r| r[12].parse().unwrap()).collect()
    };
    assert!(cos("plain").iter().all(|&c| c == 1.0));
    assert!(cos("g0").iter().all(|&c| c == 1.0));
    let masked = cos("masked");
    assert_eq!(masked.len(), 2);
    assert!(masked.iter().all(|&c| c < 1.0));
}

#[test]
fn no_secure_rounds_gives_empty_leakage_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = federated("A", "[2]", r#"["qkd_sa"]"#, true, 1e-3);
    cfg.rounds = 1;
    run(&cfg, dir.path()).unwrap();
    let records = read_round_records(dir.path()).unwrap();
    assert_eq!(records[0].report.status, RoundStatus::Aborted);
    assert!(csv_rows(&dir.path().join("leakage.csv")).is_empty());
    assert!(header(&dir.path().join("leakage.csv")).starts_with("schema_version"));
}

#[test]
fn runs_are_byte_identical_and_report_regenerates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = federated("A", "[2, 3]", r#"["plain", "qkd_sa"]"#, false, 1e-3);
    let one = run(&cfg, &dir.path().join("one")).unwrap();
    run(&cfg, &dir.path().join("two")).unwrap();
    for path in &one {
        let name = path.file_name().unwrap();
        let a = std::fs::read(path).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("two").join(name)).unwrap(), "{name:?}");
        std::fs::remove_file(path).unwrap();
    }
    let again = report::write_tables(&dir.path().join("one")).unwrap();
    assert_eq!(again.len(), one.len());
    for path in &again {
        let name = path.file_name().unwrap();
        assert_eq!(std::fs::read(path).unwrap(), std::fs::read(dir.path().join("two").join(name)).unwrap());
    }
    let c = sweep("[0.0, 0.1]", 50);
    let a = run(&c, &dir.path().join("c1")).unwrap();
    run(&c, &dir.path().join("c2")).unwrap();
    for path in &a {
        let name = path.file_name().unwrap();
        assert_eq!(std::fs::read(path).unwrap(), std::fs::read(dir.path().join("c2").join(name)).unwrap());
    }
}

#[test]
fn config_errors_are_flagged() {
    let mut cfg = federated("A", "[2]", r#"["plain"]"#, false, 1e-3);
    cfg.data.as_mut().unwrap().snr_db.clear();
    let err = run(&cfg, Path::new("/nonexistent/never")).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("data.snr_db"), "{err}");
    let mut cfg = sweep("[0.1]", 10);
    cfg.experiment = ExperimentKind::A;
    assert!(cfg.validate().unwrap_err().to_string().contains("clients"));
}
