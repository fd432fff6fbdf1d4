//! CLI contract checks: exit codes, diagnostics, and the file formats the
//! commands promise.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_impactcast")
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("impactcast_cli_tests").join(name);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small synthetic inputs shared by the surface tests.
fn small_pipeline(dir: &Path) {
    let p = |s: &str| dir.join(s).to_string_lossy().to_string();
    std::fs::write(
        dir.join("synth.json"),
        r#"{ "seed": 5, "rows": 3, "cols": 3, "end_date": "2019-03-03",
             "rate_hot": 0.3, "rate_warm": 0.22 }"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("train.json"),
        r#"{ "w": 4, "epochs_model1": 3, "epochs_model2": 2, "seed": 5 }"#,
    )
    .unwrap();
    run_ok(&["synth", "--config", &p("synth.json"), "--out", &p("raw"), "--seed", "5"]);
    run_ok(&[
        "ingest",
        "--accidents", &p("raw/accidents.csv"),
        "--congestion", &p("raw/congestion.csv"),
        "--weather", &p("raw/weather.csv"),
        "--poi", &p("raw/poi.csv"),
        "--stations", &p("raw/stations.csv"),
        "--out", &p("clean"),
    ]);
    run_ok(&[
        "label-gamma",
        "--congestion", &p("clean/congestion.csv"),
        "--accidents", &p("clean/accidents.csv"),
        "--model-out", &p("gamma.json"),
        "--labels-out", &p("labels.csv"),
        "--kind", "linear",
        "--train-end", "2019-02-25",
        "--seed", "5",
    ]);
    run_ok(&[
        "build-pack",
        "--accidents", &p("clean/accidents.csv"),
        "--congestion", &p("clean/congestion.csv"),
        "--weather", &p("clean/weather.csv"),
        "--poi", &p("clean/poi.csv"),
        "--stations", &p("clean/stations.csv"),
        "--gamma-labels", &p("labels.csv"),
        "--train-end", "2019-02-25",
        "--alpha", "30",
        "--out", &p("pack"),
        "--seed", "5",
    ]);
    run_ok(&[
        "train",
        "--pack", &p("pack"),
        "--config", &p("train.json"),
        "--model-out", &p("models"),
        "--seed", "5",
    ]);
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let out = Command::new(bin()).arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2), "usage errors exit 2");
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_fails_with_diagnostic() {
    let dir = scratch("missing_input");
    let out = Command::new(bin())
        .args([
            "ingest",
            "--accidents", "/nonexistent/acc.csv",
            "--congestion", "/nonexistent/c.csv",
            "--weather", "/nonexistent/w.csv",
            "--poi", "/nonexistent/p.csv",
            "--out",
        ])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing input file"), "stderr: {err}");
}

#[test]
fn eval_reports_a_dimension_mismatch_clearly() {
    let dir = scratch("dim_mismatch");
    small_pipeline(&dir);
    let p = |s: &str| dir.join(s).to_string_lossy().to_string();
    // a second pack with a shrunk condition vocabulary has F = 33, not 35
    run_ok(&[
        "build-pack",
        "--accidents", &p("clean/accidents.csv"),
        "--congestion", &p("clean/congestion.csv"),
        "--weather", &p("clean/weather.csv"),
        "--poi", &p("clean/poi.csv"),
        "--stations", &p("clean/stations.csv"),
        "--gamma-labels", &p("labels.csv"),
        "--train-end", "2019-02-25",
        "--alpha", "30",
        "--condition-vocab", "Clear,Cloudy,Rain",
        "--out", &p("pack33"),
        "--seed", "5",
    ]);
    let out = Command::new(bin())
        .args(["eval", "--pack", &p("pack33"), "--models", &p("models"), "--out", &p("m.csv")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("dimension mismatch") && err.contains("33") && err.contains("35"),
        "diagnostic should name both dimensions: {err}"
    );
}

#[test]
fn metrics_csv_has_the_documented_schema() {
    let dir = scratch("metrics_schema");
    small_pipeline(&dir);
    let p = |s: &str| dir.join(s).to_string_lossy().to_string();
    run_ok(&["eval", "--pack", &p("pack"), "--models", &p("models"), "--out", &p("metrics.csv")]);
    let text = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,class,precision,recall,n_true,n_pred"
    );
    // cascade rows plus the full-scale reference context rows
    assert!(text.lines().filter(|l| l.starts_with("cascade,")).count() == 3);
    assert!(text.lines().filter(|l| l.starts_with("reference-full-scale,")).count() == 3);
}

#[test]
fn cluster_export_has_the_documented_schema() {
    let dir = scratch("cluster_schema");
    small_pipeline(&dir);
    let p = |s: &str| dir.join(s).to_string_lossy().to_string();
    run_ok(&[
        "cluster",
        "--models", &p("models"),
        "--pack", &p("pack"),
        "--k", "3",
        "--out", &p("clusters.csv"),
        "--seed", "5",
    ]);
    let text = std::fs::read_to_string(dir.join("clusters.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "zone_index,lat,lon,cluster");
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        let cluster: usize = fields[3].parse().unwrap();
        assert!(cluster < 3);
    }
}

#[test]
fn training_is_identical_across_thread_counts() {
    let dir = scratch("thread_determinism");
    small_pipeline(&dir);
    let p = |s: &str| dir.join(s).to_string_lossy().to_string();
    run_ok(&[
        "--threads", "1",
        "train",
        "--pack", &p("pack"),
        "--config", &p("train.json"),
        "--model-out", &p("models_t1"),
        "--seed", "5",
    ]);
    run_ok(&[
        "--threads", "2",
        "train",
        "--pack", &p("pack"),
        "--config", &p("train.json"),
        "--model-out", &p("models_t2"),
        "--seed", "5",
    ]);
    for file in ["model1.bin", "model2.bin"] {
        let a = std::fs::read(dir.join("models_t1").join(file)).unwrap();
        let b = std::fs::read(dir.join("models_t2").join(file)).unwrap();
        assert_eq!(a, b, "{file} depends on the thread count");
    }
}

#[test]
fn rejects_report_carries_line_numbers_and_reasons() {
    let dir = scratch("rejects");
    // one good and one bad row (end before start)
    let header = impactcast_core::ingest::ACCIDENT_HEADER.join(",");
    let good = "A1,2019-02-01T09:00:00Z,2019-02-01T10:00:00Z,34.0,-118.4,2,0.5,Main St,UTC,\
                false,false,false,false,false,false,false,false,false,false,false,false,false,\
                Day,Day,Day,Day";
    let bad = "A2,2019-02-01T10:00:00Z,2019-02-01T09:00:00Z,34.0,-118.4,2,0.5,Main St,UTC,\
               false,false,false,false,false,false,false,false,false,false,false,false,false,\
               Day,Day,Day,Day";
    std::fs::write(dir.join("acc.csv"), format!("{header}\n{good}\n{bad}\n")).unwrap();
    std::fs::write(
        dir.join("cong.csv"),
        "id,time,lat,lon,severity,duration,distance,description,delay\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("weather.csv"),
        "airport,time,temperature,wind_chill,humidity,pressure,visibility,wind_speed,wind_direction,precipitation,condition\n\
         LAX,2019-02-01T00:00:00Z,60,58,50,29.9,9,5,N,0,Clear\n",
    )
    .unwrap();
    std::fs::write(dir.join("poi.csv"), "lat,lon,kind\n").unwrap();
    let p = |s: &str| dir.join(s).to_string_lossy().to_string();
    run_ok(&[
        "ingest",
        "--accidents", &p("acc.csv"),
        "--congestion", &p("cong.csv"),
        "--weather", &p("weather.csv"),
        "--poi", &p("poi.csv"),
        "--out", &p("out"),
        "--rejects-out", &p("rejects.csv"),
    ]);
    let text = std::fs::read_to_string(dir.join("rejects.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains("dataset,line,reason"));
    assert!(text.contains("Accidents,3,"), "line number of the bad row: {text}");
    assert!(text.contains("end_time"), "reason names the violation: {text}");
}
