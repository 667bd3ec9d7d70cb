use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const ROOM: &str = "\
############
#..........#
#..........#
#...##.....#
#...##.....#
#..........#
#..........#
#.......#..#
#.......#..#
#..........#
#..........#
############
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diffexplore"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scenario(dir: &Path) -> String {
    fs::write(dir.join("room.txt"), ROOM).unwrap();
    let cfg = dir.join("room.cfg");
    fs::write(
        &cfg,
        "world = room.txt\nstart_x = 0.45\nstart_y = 0.45\nseed = 3\noutput_dir = out\nmax_episodes = 30\n",
    )
    .unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn print_config_is_a_loadable_config() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(dir.path());
    let out = run(&["-c", &cfg, "--set", "alpha=2.5", "--print-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("alpha = 2.5"));
    assert!(text.contains("seed = 3"));
    let again = dir.path().join("again.cfg");
    fs::write(&again, &text).unwrap();
    let out2 = run(&["-c", again.to_str().unwrap(), "--print-config"]);
    assert!(
        out2.status.success(),
        "{}",
        String::from_utf8_lossy(&out2.stderr)
    );
}

#[test]
fn bad_settings_fail_with_a_message() {
    let out = run(&["--set", "not_a_key=1", "--print-config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));

    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("broken.cfg");
    fs::write(&cfg, "world = x.txt\nalpha = lots\n").unwrap();
    let out = run(&["-c", cfg.to_str().unwrap(), "--print-config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn explore_writes_outputs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = run(&[
            "-c",
            &cfg,
            "explore",
            "--snapshots",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    let report_a = fs::read(a.join("report.json")).unwrap();
    assert_eq!(report_a, fs::read(b.join("report.json")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&report_a).unwrap();
    let status = report["status"].as_str().unwrap();
    assert!(status == "complete" || status == "terminated");
    assert_eq!(report["optimize"], true);
    let episodes = report["episodes"].as_array().unwrap().len();
    assert!(episodes >= 1);
    for k in 1..=episodes {
        for name in [
            format!("path_{k}.csv"),
            format!("trace_{k}.csv"),
            format!("map_{k}.pgm"),
            format!("bd_{k}.pgm"),
        ] {
            assert!(a.join(&name).exists(), "missing {name}");
        }
    }
    for name in [
        "coverage.csv",
        "odds_final.csv",
        "map_final.pgm",
        "bd_final.pgm",
    ] {
        assert!(a.join(name).exists(), "missing {name}");
    }
    let coverage = fs::read_to_string(a.join("coverage.csv")).unwrap();
    assert_eq!(coverage.lines().count(), episodes + 2);
    let pgm = fs::read(a.join("map_final.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n12 12\n255\n"));
}

#[test]
fn baseline_and_iteration_cap_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(dir.path());
    let out = dir.path().join("base");
    let res = run(&[
        "-c",
        &cfg,
        "explore",
        "--no-opt",
        "-o",
        out.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["optimize"], false);
    assert_eq!(res.status.success(), report["status"] != "iteration-cap");

    let capped = dir.path().join("capped");
    let res = run(&[
        "-c",
        &cfg,
        "--set",
        "max_episodes=1",
        "explore",
        "-o",
        capped.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(capped.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "iteration-cap");
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn snapshot_tools() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(dir.path());
    let out = dir.path().join("run");
    let res = run(&[
        "-c",
        &cfg,
        "explore",
        "--snapshots",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let odds = out.join("odds_1.csv");
    let path = out.join("path_1.csv");
    let (odds, path) = (odds.to_str().unwrap(), path.to_str().unwrap());

    let gain = run(&["-c", &cfg, "gain", "--map", odds, "--path", path]);
    assert!(
        gain.status.success(),
        "{}",
        String::from_utf8_lossy(&gain.stderr)
    );
    let body: serde_json::Value = serde_json::from_slice(&gain.stdout).unwrap();
    assert!(body["path_gain"].as_f64().unwrap() >= 0.0);

    let bd = dir.path().join("bd.pgm");
    let res = run(&[
        "-c",
        &cfg,
        "boundariness",
        "--map",
        odds,
        "-o",
        bd.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert!(fs::read(&bd).unwrap().starts_with(b"P5"));

    let filter = dir.path().join("filter.csv");
    let res = run(&[
        "-c",
        &cfg,
        "filter",
        "--x",
        "1.8",
        "--y",
        "1.8",
        "--theta-deg",
        "-30",
        "-o",
        filter.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = fs::read_to_string(&filter).unwrap();
    assert!(text.starts_with("i,j,discount"));
    assert!(text.lines().skip(1).any(|l| l.ends_with(",1")));
}

#[test]
fn gradcheck_reports_small_error() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario(dir.path());
    let odds = dir.path().join("odds.csv");
    let mut text = String::from("# resolution 0.3\n");
    for j in 0..12 {
        let row: Vec<String> = (0..12)
            .map(|i| {
                if (i + j) % 5 == 0 {
                    "0".into()
                } else if i == 6 {
                    "2".into()
                } else {
                    "-0.5".into()
                }
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(&odds, text).unwrap();
    let path = dir.path().join("path.csv");
    fs::write(
        &path,
        "x,y,theta\n0.5,0.5,0.1\n1.13,1.71,0.77\n2.07,2.33,0.41\n3.1,2.9,1.2\n",
    )
    .unwrap();
    let res = run(&[
        "-c",
        &cfg,
        "gradcheck",
        "--map",
        odds.to_str().unwrap(),
        "--path",
        path.to_str().unwrap(),
    ]);
    let body: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(
        body["max_relative_error"].as_f64().unwrap() < 1e-4,
        "{body}"
    );
    assert!(res.status.success());
}
