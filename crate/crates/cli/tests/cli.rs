use std::path::Path;
use std::process::{Command, Output};

use deepgd::model::DeepGDParams;

fn deepgd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepgd"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DEEPGD_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const TRAIN: &str = r#"{
  "seed": 3,
  "out_dir": "run",
  "dataset": {"synthetic": {"kinds": ["random_tree", "cycle"], "count": 20, "min_nodes": 5, "max_nodes": 9}},
  "train": {"epochs": 2, "batch_size": 4, "arch": {"interior_blocks": 1}}
}"#;

#[test]
fn layout_path_writes_one_row_per_node() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "p.txt", "0 1\n1 2\n");
    for method in ["pivotmds", "majorization", "direct"] {
        let stdout = ok(&deepgd(&["layout", "p.txt", "--method", method, "--svg", "p.svg"], tmp.path()));
        let rows: Vec<Vec<&str>> = stdout.lines().map(|l| l.split('\t').collect()).collect();
        assert_eq!(rows.len(), 3, "{method}");
        assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["0", "1", "2"]);
        for r in &rows {
            assert_eq!(r.len(), 3);
            assert!(r[1].parse::<f64>().unwrap().is_finite() && r[2].parse::<f64>().unwrap().is_finite());
        }
        let svg = std::fs::read_to_string(tmp.path().join("p.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}

#[test]
fn missing_graph_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = deepgd(&["layout", "nowhere.txt"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.txt"));
}

#[test]
fn out_dir_variable_redirects_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "p.txt", "0 1\n1 2\n");
    let out = Command::new(env!("CARGO_BIN_EXE_deepgd"))
        .args(["layout", "p.txt", "-o", "p.tsv"])
        .current_dir(tmp.path())
        .env("DEEPGD_OUT_DIR", "elsewhere")
        .output()
        .unwrap();
    ok(&out);
    assert!(tmp.path().join("elsewhere/p.tsv").is_file());
    assert!(!tmp.path().join("p.tsv").exists());
}

#[test]
fn train_checkpoint_reloads_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "train.json", TRAIN);
    ok(&deepgd(&["train", "train.json"], tmp.path()));
    let read = |name: &str| std::fs::read_to_string(tmp.path().join("run").join(name)).unwrap();
    let (ckpt, history) = (read("checkpoint.json"), read("history.csv"));
    let params = DeepGDParams::from_checkpoint(&ckpt).unwrap();
    assert_eq!(params.to_checkpoint().unwrap(), ckpt);
    assert_eq!(history.lines().count(), 3);
    assert!(read("summary.json").contains("test_mean_loss"));

    ok(&deepgd(&["train", "train.json"], tmp.path()));
    assert_eq!(read("history.csv"), history);
    assert_eq!(read("checkpoint.json"), ckpt);

    write(tmp.path(), "g.txt", "0 1\n1 2\n2 0\n2 3\n");
    let stdout = ok(&deepgd(&["layout", "g.txt", "--method", "model", "--checkpoint", "run/checkpoint.json"], tmp.path()));
    assert_eq!(stdout.lines().count(), 4);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_strategy = TRAIN.replace(r#""epochs": 2"#, r#""epochs": 2, "strategy": "greedy""#);
    write(tmp.path(), "bad.json", &bad_strategy);
    let out = deepgd(&["train", "bad.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let unknown_field = TRAIN.replace(r#""epochs": 2"#, r#""epochz": 2"#);
    write(tmp.path(), "typo.json", &unknown_field);
    assert_eq!(deepgd(&["train", "typo.json"], tmp.path()).status.code(), Some(2));

    write(
        tmp.path(),
        "grid.json",
        r#"{"dataset": {"synthetic": {"kinds": ["cycle"], "count": 2, "min_nodes": 4, "max_nodes": 5}},
            "pareto": {"pair": ["stress", "angle"], "strategies": ["fixed"], "grid": [[0.5, 0.6]]}}"#,
    );
    assert_eq!(deepgd(&["pareto", "grid.json"], tmp.path()).status.code(), Some(2));
}

#[test]
fn eval_of_identical_sets_gives_zero_spc() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    for dir in ["graphs", "a", "b"] {
        std::fs::create_dir(root.join(dir)).unwrap();
    }
    write(root, "graphs/g1.txt", "0 1\n0 2\n0 3\n0 4\n");
    write(root, "graphs/g2.txt", "0 1\n1 2\n2 3\n3 4\n4 0\n");
    for g in ["g1", "g2"] {
        let tsv = ok(&deepgd(&["layout", &format!("graphs/{g}.txt")], root));
        write(root, &format!("a/{g}.tsv"), &tsv);
        write(root, &format!("b/{g}.tsv"), &tsv);
    }
    let stdout = ok(&deepgd(&["eval", "graphs", "a", "b", "--out-dir", "report"], root));
    let mut rows = stdout.lines().skip(1);
    let stress = rows.next().unwrap();
    assert_eq!(stress, "stress\t0");
    for row in rows {
        let value = row.split('\t').nth(1).unwrap();
        assert!(value == "0" || value == "undefined", "{row}");
    }
    assert!(root.join("report/metrics.json").is_file());

    std::fs::remove_file(root.join("b/g2.tsv")).unwrap();
    let out = deepgd(&["eval", "graphs", "a", "b"], root);
    assert!(!out.status.success());
}

#[test]
fn pareto_single_cell_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "p.json",
        r#"{"out_dir": "sweep",
            "dataset": {"synthetic": {"kinds": ["cycle", "random_tree"], "count": 3, "min_nodes": 5, "max_nodes": 8}},
            "descent": {"steps": 40},
            "pareto": {"pair": ["stress", "angle"], "strategies": ["adaptive"], "grid": [[0.5, 0.5]]}}"#,
    );
    ok(&deepgd(&["pareto", "p.json"], tmp.path()));
    let csv = std::fs::read_to_string(tmp.path().join("sweep/pareto.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,gamma_a,gamma_b,mean_loss_a,mean_loss_b");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("adaptive,0.5,0.5,"));
    assert!(tmp.path().join("sweep/pareto.svg").is_file());
}

#[test]
fn convert_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "g.txt", "# square with a tail\n3 0\n0 1\n1 2\n2 3\n3 4\n");
    ok(&deepgd(&["convert", "g.txt", "g.graphml"], tmp.path()));
    ok(&deepgd(&["convert", "g.graphml", "back.txt"], tmp.path()));
    let back = std::fs::read_to_string(tmp.path().join("back.txt")).unwrap();
    assert_eq!(back, "0 1\n0 3\n1 2\n2 3\n3 4\n");
}
