use std::fs;
use std::path::Path;
use std::process::Command;

use noncoercive_cli::config::{parse_config, parse_config_for, RunConfig, Subcommand};
use noncoercive_cli::{
    echo_config, run, Outcome, EXIT_AUDIT_FAILED, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK,
};
use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noncoercive"))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn run_bin(sub: &str, config: &str, out: &Path, extra: &[&str]) -> i32 {
    let cfg = out.with_extension("toml");
    fs::write(&cfg, config).unwrap();
    let status = bin()
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .status()
        .unwrap();
    status.code().unwrap()
}

/// Thomas algorithm for the P1 system of `−2u'' + u = 1` on a uniform grid.
fn tridiagonal_oracle(cells: usize) -> Vec<f64> {
    let h = 1.0 / cells as f64;
    let n = cells - 1;
    let diag = 4.0 / h + 2.0 * h / 3.0;
    let off = -2.0 / h + h / 6.0;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = diag - if i > 0 { off * c[i - 1] } else { 0.0 };
        c[i] = off / denom;
        d[i] = (h - if i > 0 { off * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut u = vec![0.0; n];
    for i in (0..n).rev() {
        u[i] = d[i] - if i + 1 < n { c[i] * u[i + 1] } else { 0.0 };
    }
    let mut full = vec![0.0];
    full.extend(u);
    full.push(0.0);
    full
}

#[test]
fn reference_file_lists_the_defaults() {
    let text = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../docs/config-reference.toml"
    ))
    .unwrap();
    assert_eq!(parse_config(&text).unwrap(), parse_config("").unwrap());
    assert_eq!(parse_config("").unwrap(), {
        let mut c = RunConfig::default();
        c.problem.integrand_params.insert("a".into(), 1.0);
        c.problem.integrand_params.insert("oscillation".into(), 0.0);
        c.problem.b_params.insert("value".into(), 1.0);
        c.problem.f_params.insert("value".into(), 1.0);
        c
    });
}

#[test]
fn echo_file_parses_back() {
    let dir = tempdir().unwrap();
    let text = "seed = 5\n[problem]\ndimension = 2\ncells = 6\ny_cells = 4\nintegrand = \"anisotropic\"\nf = \"sine\"\nb = \"smooth-bump\"\n";
    let config = parse_config_for(text, Subcommand::Solve).unwrap();
    run(&config, dir.path(), None).unwrap();
    let echoed = fs::read_to_string(dir.path().join("config.echo.toml")).unwrap();
    assert_eq!(echoed, echo_config(&config).unwrap());
    assert_eq!(parse_config(&echoed).unwrap(), config);
}

#[test]
fn zero_datum_gives_zero_field_and_exit_zero() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("zero");
    let code = run_bin(
        "solve",
        "[problem]\nintegrand = \"logaug\"\n[problem.f_params]\nvalue = 0.0\n",
        &out,
        &[],
    );
    assert_eq!(code, EXIT_OK);
    let (h, rows) = read_csv(&out.join("solution.csv"));
    let v = column(&h, "value");
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[v].parse::<f64>().unwrap() == 0.0));
    let (h, rows) = read_csv(&out.join("estimates.csv"));
    let verdict = column(&h, "verdict");
    assert!(rows
        .iter()
        .all(|r| r[verdict] == "pass" || r[verdict] == "inapplicable"));
}

#[test]
fn quadratic_solution_csv_matches_oracles() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("quad");
    let code = run_bin("solve", "[problem]\ncells = 256\nb = \"zero\"\n", &out, &[]);
    assert_eq!(code, EXIT_OK);
    let (h, rows) = read_csv(&out.join("solution.csv"));
    let (x, v, node) = (column(&h, "x"), column(&h, "value"), column(&h, "node"));
    let oracle = tridiagonal_oracle(256);
    let s = 2f64.sqrt();
    assert_eq!(rows.len(), 257);
    for r in &rows {
        let xv: f64 = r[x].parse().unwrap();
        let val: f64 = r[v].parse().unwrap();
        let i: usize = r[node].parse().unwrap();
        assert!(
            (val - oracle[i]).abs() <= 1e-6,
            "node {i}: {val} vs {}",
            oracle[i]
        );
        let exact = 1.0 - ((xv - 0.5) / s).cosh() / (1.0 / (2.0 * s)).cosh();
        assert!((val - exact).abs() <= 1e-4);
    }
}

#[test]
fn counterexample_table_has_a_row_per_level() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("ce");
    let code = run_bin(
        "counterexample",
        "subcommand = \"counterexample\"\n",
        &out,
        &[],
    );
    assert_eq!(code, EXIT_OK);
    let (h, rows) = read_csv(&out.join("counterexample.csv"));
    assert_eq!(rows.len(), 13);
    let chain = column(&h, "chain_holds");
    assert!(rows.iter().all(|r| r[chain] == "true"));
    let n = column(&h, "n");
    let levels: Vec<f64> = rows.iter().map(|r| r[n].parse().unwrap()).collect();
    assert_eq!(levels, (0..=12).map(f64::from).collect::<Vec<_>>());
}

#[test]
fn exit_codes() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run_bin("solve", "[problem]\ncels = 3\n", &d.join("a"), &[]),
        EXIT_ERROR
    );
    assert_eq!(
        run_bin("solve", "subcommand = \"sweep\"\n", &d.join("b"), &[]),
        EXIT_ERROR
    );
    assert_eq!(
        run_bin(
            "counterexample",
            "[counterexample]\nrho = 0.6\n",
            &d.join("c"),
            &[]
        ),
        EXIT_ERROR
    );
    assert_eq!(
        run_bin(
            "counterexample",
            "[counterexample]\nn_max = 400\n",
            &d.join("d"),
            &[]
        ),
        EXIT_ERROR
    );
    assert_eq!(
        run_bin(
            "solve",
            "[problem]\nintegrand = \"logaug\"\nmax_iter = 1\n",
            &d.join("e"),
            &[]
        ),
        EXIT_NOT_CONVERGED
    );
    let missing = bin()
        .args(["solve", "--config", "/nonexistent/config.toml", "--out"])
        .arg(d.join("f"))
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(EXIT_ERROR));
}

#[test]
fn exit_code_precedence() {
    let base = Outcome {
        subcommand: Subcommand::Solve,
        converged: true,
        hard_failures: 0,
        warnings: 3,
        check_failures: 0,
    };
    assert_eq!(base.exit_code(), EXIT_OK);
    let failed = Outcome {
        hard_failures: 1,
        ..base.clone()
    };
    assert_eq!(failed.exit_code(), EXIT_AUDIT_FAILED);
    let unchecked = Outcome {
        check_failures: 2,
        ..base.clone()
    };
    assert_eq!(unchecked.exit_code(), EXIT_AUDIT_FAILED);
    let both = Outcome {
        converged: false,
        ..failed
    };
    assert_eq!(both.exit_code(), EXIT_NOT_CONVERGED);
}

#[test]
fn certify_subcommand_reports_every_integrand() {
    let dir = tempdir().unwrap();
    let config = parse_config_for("[audit]\ncertify_samples = 50\n", Subcommand::Certify).unwrap();
    let outcome = run(&config, dir.path(), None).unwrap();
    assert_eq!(outcome.exit_code(), EXIT_OK);
    let (h, rows) = read_csv(&dir.path().join("certify.csv"));
    let name = column(&h, "integrand");
    for n in ["quadratic", "anisotropic", "logaug"] {
        assert!(rows.iter().any(|r| r[name] == n), "{n}");
    }
}

#[test]
fn solve_outputs_are_deterministic() {
    let dir = tempdir().unwrap();
    let text = "seed = 99\n[problem]\nintegrand = \"logaug\"\nb = \"step\"\nf = \"power-singularity\"\ncells = 64\n";
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_bin("audit", text, &a, &[]), EXIT_OK);
    assert_eq!(run_bin("audit", text, &b, &[]), EXIT_OK);
    for name in [
        "solution.csv",
        "trace.csv",
        "stages.csv",
        "estimates.csv",
        "report.json",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let c = dir.path().join("c");
    assert_eq!(run_bin("audit", text, &c, &["--seed", "100"]), EXIT_OK);
    assert_ne!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(c.join("report.json")).unwrap()
    );
}

#[test]
fn single_point_sweep_matches_solve() {
    let dir = tempdir().unwrap();
    let base = "seed = 4\n[problem]\nintegrand = \"anisotropic\"\nb = \"step\"\nf = \"sine\"\ncells = 48\n";
    let sweep = format!("{base}[sweep]\nintegrands = [\"anisotropic\"]\ncoefficients = [\"step\"]\ndata = [\"sine\"]\n");
    let s = dir.path().join("s");
    let r = dir.path().join("r");
    assert_eq!(run_bin("sweep", &sweep, &s, &[]), EXIT_OK);
    assert_eq!(run_bin("audit", base, &r, &[]), EXIT_OK);
    let (_, sweep_rows) = read_csv(&s.join("estimates.csv"));
    let (_, run_rows) = read_csv(&r.join("estimates.csv"));
    let stripped: Vec<Vec<String>> = sweep_rows.into_iter().map(|r| r[1..].to_vec()).collect();
    assert_eq!(stripped, run_rows);
    let sweep_json: serde_json::Value =
        serde_json::from_slice(&fs::read(s.join("report.json")).unwrap()).unwrap();
    let run_json: serde_json::Value =
        serde_json::from_slice(&fs::read(r.join("report.json")).unwrap()).unwrap();
    let point = &sweep_json["points"][0];
    for key in ["solve", "estimates", "testclass", "minimality", "certify"] {
        assert_eq!(point[key], run_json[key], "{key}");
    }
}

#[test]
fn coefficient_sweep_widens_terzastima_slack() {
    let dir = tempdir().unwrap();
    let text = "[sweep]\nintegrands = [\"logaug\"]\ncoefficients = [\"constant\"]\ndata = [\"sine\"]\nb_scales = [0.0, 1.0, 10.0]\n";
    let out = dir.path().join("b");
    assert_eq!(run_bin("sweep", text, &out, &["--jobs", "2"]), EXIT_OK);
    let (h, rows) = read_csv(&out.join("estimates.csv"));
    let (id, stage, lhs, rhs, slack, point) = (
        column(&h, "estimate_id"),
        column(&h, "stage_index"),
        column(&h, "lhs"),
        column(&h, "rhs"),
        column(&h, "slack"),
        column(&h, "point"),
    );
    let terza: Vec<(usize, f64, f64, f64)> = rows
        .iter()
        .filter(|r| r[id] == "TERZASTIMA" && r[stage] == "0")
        .map(|r| {
            (
                r[point].parse().unwrap(),
                r[lhs].parse().unwrap(),
                r[rhs].parse().unwrap(),
                r[slack].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(terza.iter().map(|t| t.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(terza.windows(2).all(|w| w[1].2 > w[0].2), "{terza:?}");
    assert!(terza.windows(2).all(|w| w[1].3 > w[0].3), "{terza:?}");
    assert!(terza.iter().all(|t| t.1 <= terza[0].2));
}

#[test]
fn integrand_sweep_certifies_every_builtin() {
    let dir = tempdir().unwrap();
    let text =
        "[sweep]\ncoefficients = [\"constant\"]\ndata = [\"constant\"]\n[problem]\ncells = 32\n";
    let out = dir.path().join("i");
    assert_eq!(run_bin("sweep", text, &out, &[]), EXIT_OK);
    let (h, rows) = read_csv(&out.join("sweep_matrix.csv"));
    let (name, cert) = (column(&h, "integrand"), column(&h, "certified"));
    let names: Vec<&str> = rows.iter().map(|r| r[name].as_str()).collect();
    assert_eq!(names, ["quadratic", "anisotropic", "logaug"]);
    assert!(rows.iter().all(|r| r[cert] == "true"));
}

#[test]
fn sweep_report_independent_of_thread_count() {
    let dir = tempdir().unwrap();
    let text =
        "seed = 3\n[problem]\ncells = 32\n[sweep]\ndata = [\"sine\", \"power-singularity\"]\n";
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_bin("sweep", text, &a, &["--jobs", "1"]), EXIT_OK);
    assert_eq!(run_bin("sweep", text, &b, &["--jobs", "4"]), EXIT_OK);
    for name in ["report.json", "estimates.csv", "sweep_matrix.csv"] {
        assert!(
            fs::read(a.join(name)).unwrap() == fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}
