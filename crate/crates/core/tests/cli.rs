use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasserpath")).args(args).output().unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const STRONG: &str = "# small sweep\nmodel = sin_elliptic\ngrid.N = 4, 8, 16\nsamples.M = 600\nstrong.proxy_depth = 3\nseed = 77\n";

#[test]
fn rows_are_identical_across_worker_counts() {
    let d = scratch("workers");
    let cfg = write_cfg(&d, STRONG);
    let mut csv = Vec::new();
    for w in ["1", "2"] {
        let out = d.join(format!("w{w}"));
        let o = run(&["strong-rate", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", w]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csv.push(std::fs::read(out.join("rows.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    let header = String::from_utf8_lossy(&csv[0]).lines().next().unwrap().to_string();
    assert!(header.starts_with("N,m,estimate,std_error"));
}

#[test]
fn report_embeds_config_and_flags() {
    let d = scratch("report");
    let cfg = write_cfg(&d, STRONG);
    let out = d.join("out");
    assert!(run(&["strong-rate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let flags = v["provenance"]["deviation_flags"].as_array().unwrap();
    assert!(flags.iter().any(|f| f.as_str().unwrap().contains("proxy")), "{flags:?}");
    assert!(v["provenance"].to_string().contains("sin_elliptic"));
    assert!(v["fit"]["slope"].is_number());
}

#[test]
fn seed_override_changes_rows() {
    let d = scratch("seed");
    let cfg = write_cfg(&d, STRONG);
    let a = d.join("a");
    let b = d.join("b");
    assert!(run(&["strong-rate", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["strong-rate", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "78"]).status.success());
    assert_ne!(std::fs::read(a.join("rows.csv")).unwrap(), std::fs::read(b.join("rows.csv")).unwrap());
}

#[test]
fn ot_check_passes_and_lists_checks() {
    let d = scratch("ot");
    let cfg = write_cfg(&d, "model = bm_drift\ngrid.N = 1\nseed = 3\not.instances = 300\n");
    let o = run(&["ot-check", "--config", &cfg, "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS sorted_vs_bruteforce"), "{stdout}");
}

#[test]
fn marginal_rate_dumps_laws() {
    let d = scratch("laws");
    let cfg = write_cfg(&d, "model = sin_elliptic\ngrid.N = 4, 8, 16\nseed = 1\nmesh.nodes = 512\n");
    let laws = d.join("laws");
    let o = run(&["marginal-rate", "--config", &cfg, "--out", d.join("out").to_str().unwrap(), "--dump-laws", laws.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let euler = std::fs::read_to_string(laws.join("euler_N8_T.csv")).unwrap();
    assert_eq!(euler.lines().next().unwrap(), "x,density,cdf");
    assert!(laws.join("fp_N8_T.csv").exists());
}

#[test]
fn bad_input_exits_with_two() {
    let d = scratch("bad");
    let cfg = write_cfg(&d, "model = nope\ngrid.N = 4\nseed = 1\nsamples.M = 100\n");
    let o = run(&["strong-rate", "--config", &cfg, "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    let o = run(&["strong-rate", "--config", d.join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_cfg(&d, STRONG);
    let o = run(&["strong-rate", "--config", &cfg, "--workers", "0", "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
