use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"{
    "dim": 2,
    "domain": {"simplex": [[0,0],[1,0],[0,1]]},
    "mesh": {"h": 0.3},
    "epsilon": 0.25,
    "delta": 0.001,
    "time": {"T": 1.0, "steps": 3},
    "law": {
        "E": {"discrete": {"values": [1, 3], "weights": [0.5, 0.5]}},
        "nu": {"point": 0.3},
        "sigma_y": {"point": 0.01},
        "H": {"point": 0.1}
    },
    "rve": {"N": 2, "r": 1, "M": 2},
    "bc": {"xi": "xi.csv", "a": [0.5, 0]},
    "seed": 11,
    "macro": {"tol": 1e-6, "max_elements": 64},
    "average": {"epsilons": [0.5, 0.25], "seeds": 2, "resolution": 2},
    "korn": {"N": 2, "samples": 20},
    "ergodic": {"sizes": [4, 8], "seeds": 5}
}"#;

fn setup(dir: &Path, config: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("xi.csv"), "t,xx,yy,xy\n0,0,0,0\n1,0.02,-0.01,0.01\n").unwrap();
    let path = dir.join("run.json");
    std::fs::write(&path, config).unwrap();
    path
}

fn stochplast(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stochplast"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", "2"])
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn eps_writes_csv_with_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = stochplast(&["eps"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&out.join("eps.csv")),
        "t,sigma_0,sigma_1,sigma_2,p_0,p_1,p_2,newton_iterations,residual,flow_residual,seed,epsilon"
    );
    assert_eq!(std::fs::read_to_string(out.join("eps.csv")).unwrap().lines().count(), 5);
}

#[test]
fn cell_overrides_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = stochplast(&["cell", "--cells", "3", "--samples", "1"], &cfg, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(a.join("cell.csv")).unwrap();
    assert_eq!(text, std::fs::read(b.join("cell.csv")).unwrap());
    let line = String::from_utf8(text).unwrap().lines().nth(1).unwrap().to_string();
    assert!(line.ends_with(",3,1,1,11,1e-3"), "{line}");
}

#[test]
fn experiments_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), CONFIG);
    let out = dir.path().join("out");
    for (cmd, file) in [("korn", "korn.csv"), ("ergodic", "ergodic.csv"), ("average", "average.csv"), ("macro", "macro.csv")] {
        let o = stochplast(&[cmd, "--seed", "5"], &cfg, &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(file).exists());
    }
    assert!(out.join("average.svg").exists());
    let avg = std::fs::read_to_string(out.join("average.csv")).unwrap();
    assert!(avg.lines().nth(1).unwrap().contains(",5,"));
    let stdout = String::from_utf8(stochplast(&["average"], &cfg, &out).stdout).unwrap();
    assert!(stdout.contains("a_invariant=true"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = setup(dir.path(), &CONFIG.replace("\"delta\": 0.001", "\"delta\": 0"));
    assert_eq!(stochplast(&["eps"], &bad, &out).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(stochplast(&["eps"], &missing, &out).status.code(), Some(2));
    let budget = setup(dir.path(), &CONFIG.replace("\"max_elements\": 64", "\"wall_clock_s\": 0"));
    assert_eq!(stochplast(&["macro"], &budget, &out).status.code(), Some(3));
    let o = Command::new(env!("CARGO_BIN_EXE_stochplast")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
