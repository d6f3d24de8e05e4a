use bathsmith_core::coarsegrain::EffectiveEnvironment;
use bathsmith_core::csvio::read_table;
use bathsmith_core::data;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bathsmith"));
    c.env_remove(data::DATA_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Numeric rows of a CSV, ignoring the metadata header.
fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn bcf_writes_three_files_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["bcf", "bundled:fmo_full", "--temp", "77", "--tau", "300", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["correlation.csv", "spectrum.csv", "peaks.json", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let m = manifest(&out);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
    let sha = m["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    let table = read_table(&std::fs::read_to_string(out.join("correlation.csv")).unwrap()).unwrap();
    assert_eq!(table.meta.get("temperature_K"), Some("77"));
    assert_eq!(table.rows.len(), 4801);
}

#[test]
fn manifest_hashes_the_exact_input_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = data::load_text("fmo_effective.json").unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    std::fs::write(&a, &text).unwrap();
    std::fs::write(&b, format!("{text}\n")).unwrap();
    let hash = |p: &Path, out: &str| {
        let out = tmp.path().join(out);
        let o = run(&["peaks", p.to_str().unwrap(), "--temp", "77", "--tau", "300", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        manifest(&out)["inputs"][0]["sha256"].as_str().unwrap().to_string()
    };
    let (ha, hb) = (hash(&a, "oa"), hash(&b, "ob"));
    assert_ne!(ha, hb);
    // digest computed here, independently of the tool
    use sha2::{Digest, Sha256};
    assert_eq!(ha, hex::encode(Sha256::digest(text.as_bytes())));
}

#[test]
fn missing_model_is_an_input_error_naming_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["bcf", "no_such_model.json", "--temp", "77", "--tau", "300", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no_such_model.json"));
}

#[test]
fn malformed_model_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, "{\"label\": \"x\", \"lorentzians\": [{\"omega_cm1\": -5, \"hr\": 0.1, \"gamma_cm1\": 3}]}").unwrap();
    let o = run(&["bcf", p.to_str().unwrap(), "--temp", "77", "--tau", "300", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn zero_step_is_a_usage_error() {
    let o = run(&["bcf", "bundled:fmo_full", "--temp", "77", "--tau", "300", "--dt", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_peaks_is_a_usage_error() {
    let o = run(&["fit", "bundled:fmo_full", "--temp", "77", "--tau", "300", "--peaks", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn fit_conserves_reorganization_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let go = |out: &str| {
        let out = tmp.path().join(out);
        let o = run(&[
            "fit", "bundled:fmo_full", "--temp", "77", "--tau", "300", "--peaks", "5", "--starts", "2", "--seed", "7",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("reorganization energy"));
        out
    };
    let (a, b) = (go("a"), go("b"));
    let text = std::fs::read_to_string(a.join("effective.json")).unwrap();
    assert_eq!(text, std::fs::read_to_string(b.join("effective.json")).unwrap());
    // re-check the constraint from the emitted file alone
    let env = EffectiveEnvironment::from_json(&text).unwrap();
    let full = data::fmo_full().unwrap();
    assert_eq!(env.lorentzians.len(), 5);
    let got = env.to_model().reorganization_exact();
    let want = full.reorganization_exact();
    assert!((got / want - 1.0).abs() < 1e-6, "{got} vs {want}");
    assert_eq!(manifest(&a)["seeds"][0], 7);
}

#[test]
fn conventional_keeps_reorganization() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["conventional", "bundled:fmo_full", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let env = EffectiveEnvironment::from_json(&std::fs::read_to_string(tmp.path().join("conventional.json")).unwrap())
        .unwrap();
    assert_eq!(env.lorentzians.len(), 1);
    assert_eq!(env.lorentzians[0].omega, 1000.0);
    let want = data::fmo_full().unwrap().reorganization_exact();
    assert!((env.to_model().reorganization_exact() / want - 1.0).abs() < 1e-9);
}

#[test]
fn heom_cost_prints_the_exact_count() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["heom-cost", "--N", "2", "--M", "62", "--L", "5", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("8,301,429,675"), "{s}");
    assert!(s.contains("0.27 TB"));
    let csv = std::fs::read_to_string(tmp.path().join("heom_cost.csv")).unwrap();
    assert!(csv.contains("2,62,5,2,16,8301429675,265645749600"));
}

#[test]
fn compare_identical_inputs_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare", "bundled:fmo_effective", "bundled:fmo_effective", "--temp", "77", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("compare.json")).unwrap()).unwrap();
    assert_eq!(v["correlation_distance"].as_f64().unwrap(), 0.0);
    assert!((v["monomer_overlap"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn compare_full_and_effective_monomers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["compare", "bundled:fmo_full", "bundled:fmo_effective", "--temp", "77", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("compare.json")).unwrap()).unwrap();
    assert!(v["monomer_overlap"].as_f64().unwrap() >= 0.99, "{v}");
    assert!(stdout(&o).contains("monomer spectral overlap"));
}

#[test]
fn chain_with_fixed_length() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let o = run(&["chain", "bundled:fmo_full", "--temp", "77", "--length", "20", "--out", out.to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let chain = read_table(&std::fs::read_to_string(out.join("chain.csv")).unwrap()).unwrap();
    assert_eq!(chain.rows.len(), 20);
    let star = read_table(&std::fs::read_to_string(out.join("star.csv")).unwrap()).unwrap();
    assert_eq!(star.rows.len(), 20);
    assert!(out.join("correlation.svg").is_file());
}

#[test]
fn chain_rejects_inverted_support() {
    let o = run(&["chain", "bundled:fmo_full", "--temp", "77", "--length", "5", "--support", "10,-10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn absorb_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("monomer_effective.json");
    let go = |out: &str, threads: &str| {
        let out = tmp.path().join(out);
        let o = bin()
            .args(["absorb", scenario.to_str().unwrap(), "--samples", "200", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (go("a", "1"), go("b", "3"));
    assert_eq!(body(&a.join("absorption.csv")), body(&b.join("absorption.csv")));
    assert_eq!(body(&a.join("dipole.csv")), body(&b.join("dipole.csv")));
    let m = manifest(&a);
    assert_eq!(m["seeds"][0], 2024);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn seed_changes_the_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = scenarios().join("monomer_effective.json");
    let go = |seed: &str| {
        let out = tmp.path().join(seed);
        let o = bin()
            .args(["absorb", scenario.to_str().unwrap(), "--samples", "50", "--seed", seed, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        body(&out.join("absorption.csv"))
    };
    assert_ne!(go("1"), go("2"));
}

#[test]
fn cumulant_scenario_needs_no_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["absorb", scenarios().join("monomer_full_cumulant.json").to_str().unwrap(), "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_table(&std::fs::read_to_string(tmp.path().join("absorption.csv")).unwrap()).unwrap();
    let a = t.column("absorption").unwrap();
    assert!(a.iter().all(|v| v.is_finite()));
    assert_eq!(t.meta.get("engine"), Some("cumulant"));
}

#[test]
fn bad_scenario_engine_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("monomer_effective.json"))
        .unwrap()
        .replace("\"temperature_K\"", "\"engine\": \"warp\",\n  \"temperature_K\"")
        .replace("monomer_system.json", scenarios().join("monomer_system.json").to_str().unwrap());
    let p = tmp.path().join("s.json");
    std::fs::write(&p, text).unwrap();
    let o = run(&["absorb", p.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("warp"));
}

#[test]
fn data_directory_overrides_bundled_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    std::fs::create_dir(&dir).unwrap();
    let doc = r#"{"label": "override", "lorentzians": [{"omega_cm1": 500, "hr": 0.1, "gamma_cm1": 20}]}"#;
    std::fs::write(dir.join("fmo_effective.json"), doc).unwrap();
    let out = tmp.path().join("o");
    let o = bin()
        .env(data::DATA_ENV, &dir)
        .args(["peaks", "bundled:fmo_effective", "--temp", "0", "--tau", "1000", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let census: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("peaks.json")).unwrap()).unwrap();
    let peaks = census["peaks"].as_array().unwrap();
    assert_eq!(peaks.len(), 1);
    assert!((peaks[0]["center"].as_f64().unwrap() - 500.0).abs() < 5.0);
}

#[test]
fn auto_peak_count_follows_the_census() {
    let tmp = tempfile::tempdir().unwrap();
    let census_dir = tmp.path().join("p");
    let o = run(&[
        "peaks", "bundled:fmo_full", "--temp", "77", "--tau", "300", "--above", "100", "--out", census_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let census: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(census_dir.join("peaks.json")).unwrap()).unwrap();
    let k = census["peaks"].as_array().unwrap().len();
    let fit_dir = tmp.path().join("f");
    let o = run(&[
        "fit", "bundled:fmo_full", "--temp", "77", "--tau", "300", "--peaks", "auto", "--starts", "1", "--out",
        fit_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let env = EffectiveEnvironment::from_json(&std::fs::read_to_string(fit_dir.join("effective.json")).unwrap()).unwrap();
    assert_eq!(env.lorentzians.len(), k);
}
