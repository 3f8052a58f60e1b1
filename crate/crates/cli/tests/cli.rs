use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use exchange_cli::{
    execute, load_config, parse_config, run, Command, ConfigError, Format, Overrides, RunConfig, RunManifest,
    EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION,
};
use serde_json::Value;
use tempfile::TempDir;

const MINIMAL: &str = r#"
[economy]
n_agents = 2
n_goods = 1
rates = [[0.0, 1.0], [1.0, 0.0]]
exponents = [[1.0], [1.0]]
endowments = [[1.0], [0.0]]
seed = 1

[simulation]
t_end = 1.0
sample_times = [0.0, 1.0]
n_trajectories = 100
initial_state = "endowments"
"#;

fn three_agents(n_trajectories: usize) -> String {
    format!(
        r#"
[economy]
n_agents = 3
n_goods = 1
rates = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
exponents = [[1.0], [1.0], [1.0]]
endowments = [[1.0], [0.0], [0.0]]
seed = 99

[simulation]
t_end = 4.0
sample_times = [0.0, 1.0, 4.0]
n_trajectories = {n_trajectories}
initial_state = "endowments"
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn manifest(command: Command, config: &Path, out: &Path) -> RunManifest {
    RunManifest::new(command, Some(config.to_path_buf()), out.to_path_buf())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimal_file_loads() {
    let dir = TempDir::new().unwrap();
    let loaded = load_config(&write(dir.path(), "c.toml", MINIMAL)).unwrap();
    assert_eq!(loaded.plan.economy().total_rate(), 1.0);
    assert_eq!(loaded.config.bound.grid, 64);
}

#[test]
fn negative_rate_names_the_entry() {
    let text = MINIMAL.replace("[[0.0, 1.0], [1.0, 0.0]]", "[[0.0, -1.0], [-1.0, 0.0]]");
    match parse_config(&text).unwrap().validate() {
        Err(ConfigError::Validation { field, .. }) => assert_eq!(field.as_deref(), Some("rates[0][1]")),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected_with_position() {
    let text = MINIMAL.replace("seed = 1", "sed = 1");
    match parse_config(&text) {
        Err(ConfigError::Parse { line, column, message }) => {
            assert_eq!((line, column), (8, 1));
            assert!(message.contains("sed"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
    let text = format!("{MINIMAL}\n[verify]\nbinz = 3\n");
    assert!(matches!(parse_config(&text), Err(ConfigError::Parse { .. })));
}

#[test]
fn syntax_errors_report_position() {
    let text = MINIMAL.replace("n_goods = 1", "n_goods = ");
    match parse_config(&text) {
        Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn kac_preset() {
    let dir = TempDir::new().unwrap();
    let m = RunManifest::new(Command::PresetKac { agents: 5 }, None, dir.path().to_path_buf());
    let written = execute(&m).unwrap();
    let loaded = load_config(&written[0]).unwrap();
    let cfg = &loaded.config.economy;
    assert_eq!((cfg.n_agents, cfg.n_goods), (5, 1));
    for i in 0..5 {
        assert_eq!(cfg.exponents.get(i, 0), 0.5);
        for j in 0..5 {
            assert_eq!(cfg.rates.get(i, j), if i == j { 0.0 } else { 1.0 });
        }
    }
    let total: f64 = cfg.endowments.column(0).iter().sum();
    assert!((total - 1.0).abs() < 1e-15);
    assert!(cfg.endowments.column(0).iter().all(|&v| v == cfg.endowments.get(0, 0)));
}

#[test]
fn kac_preset_needs_two_agents() {
    let dir = TempDir::new().unwrap();
    let m = RunManifest::new(Command::PresetKac { agents: 1 }, None, dir.path().to_path_buf());
    assert_eq!(run(&m), EXIT_VALIDATION);
    assert!(RunConfig::kac(2, 0).validate().is_ok());
}

#[test]
fn bound_reports_three_agent_constants() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", &three_agents(10));
    execute(&manifest(Command::Bound, &config, dir.path())).unwrap();
    let report = read_json(&dir.path().join("doeblin.json"));
    let levels = report["levels"].as_array().unwrap();
    assert_eq!(levels[0]["c"].as_f64(), Some(1.0));
    let c3 = levels[1]["c"].as_f64().unwrap();
    assert!((c3 - 1.0 / 18.0).abs() < 1e-12, "{c3}");
    assert_eq!(report["seed"].as_u64(), Some(99));
    assert_eq!(report["plan_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn verify_at_time_zero_sees_the_point_mass() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", &three_agents(2000));
    let mut m = manifest(Command::Verify, &config, dir.path());
    m.overrides.t_end = Some(0.0);
    execute(&m).unwrap();
    let report = read_json(&dir.path().join("convergence.json"));
    let times = report["times"].as_array().unwrap();
    assert_eq!(times.len(), 1);
    assert_eq!(times[0]["time"].as_f64(), Some(0.0));
    assert!(times[0]["tv"].as_f64().unwrap() > 0.95);
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(csv.starts_with("# plan_digest="));
    assert_eq!(csv.lines().count(), 3);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", &three_agents(500));
    let outputs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            for command in [Command::Simulate, Command::Verify, Command::Bound] {
                let mut m = manifest(command, &config, &out);
                m.format = Some(Format::Both);
                execute(&m).unwrap();
            }
            snapshot(&out)
        })
        .collect();
    assert_eq!(outputs[0].len(), 8);
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn threads_do_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", &three_agents(300));
    let outputs: Vec<_> = [1, 3]
        .iter()
        .map(|&t| {
            let out = dir.path().join(format!("t{t}"));
            let mut m = manifest(Command::Simulate, &config, &out);
            m.format = Some(Format::Both);
            m.threads = Some(t);
            execute(&m).unwrap();
            snapshot(&out)
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn commands_leave_the_config_untouched() {
    let dir = TempDir::new().unwrap();
    let text = three_agents(50);
    let config = write(dir.path(), "c.toml", &text);
    for command in [Command::Simulate, Command::Verify, Command::Bound] {
        let mut m = manifest(command, &config, dir.path());
        m.overrides = Overrides { seed: Some(5), t_end: Some(2.0), n_trajectories: Some(40) };
        assert_eq!(run(&m), EXIT_OK);
    }
    assert_eq!(fs::read_to_string(&config).unwrap(), text);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = write(dir.path(), "good.toml", MINIMAL);
    let bad = write(dir.path(), "bad.toml", &MINIMAL.replace("[[1.0], [1.0]]", "[[1.0], [0.0]]"));
    assert_eq!(run(&manifest(Command::Bound, &good, dir.path())), EXIT_OK);
    assert_eq!(run(&manifest(Command::Bound, &bad, dir.path())), EXIT_VALIDATION);
    // an output directory that is a file cannot be written
    assert_eq!(run(&manifest(Command::Bound, &good, &good)), EXIT_RUNTIME);

    let bin = env!("CARGO_BIN_EXE_exchange-sim");
    let status = |args: &[&str]| Process::new(bin).args(args).output().unwrap().status.code();
    let out = dir.path().join("bin");
    let out = out.to_str().unwrap();
    assert_eq!(status(&["bound", "--config", good.to_str().unwrap(), "--out", out]), Some(0));
    assert_eq!(status(&["bound", "--config", bad.to_str().unwrap(), "--out", out]), Some(1));
    assert_eq!(status(&["frobnicate"]), Some(1));
    assert_eq!(status(&["simulate", "--out", out]), Some(1));
}

/// Checks object keys and primitive types against a JSON schema, following
/// local `$ref`s. Covers the subset of the vocabulary the report schemas use.
fn conforms(value: &Value, schema: &Value, root: &Value, path: &str) {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        let name = r.trim_start_matches("#/$defs/");
        return conforms(value, &root["$defs"][name], root, path);
    }
    if let Some(c) = schema.get("const") {
        assert_eq!(value, c, "{path}");
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        assert!(options.contains(value), "{path}: {value} not in {options:?}");
    }
    let types: Vec<&str> = match schema.get("type") {
        Some(Value::String(t)) => vec![t.as_str()],
        Some(Value::Array(ts)) => ts.iter().filter_map(Value::as_str).collect(),
        _ => vec![],
    };
    if !types.is_empty() {
        let ok = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "integer" => value.is_u64() || value.is_i64(),
            "number" => value.is_number(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            _ => false,
        });
        assert!(ok, "{path}: {value} is not {types:?}");
    }
    if let Some(obj) = value.as_object() {
        let props = schema["properties"].as_object().unwrap();
        for key in schema["required"].as_array().unwrap() {
            assert!(obj.contains_key(key.as_str().unwrap()), "{path}: missing {key}");
        }
        for (k, v) in obj {
            let sub = props.get(k).unwrap_or_else(|| panic!("{path}: unexpected key {k}"));
            conforms(v, sub, root, &format!("{path}.{k}"));
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            conforms(v, items, root, &format!("{path}[{i}]"));
        }
    }
}

#[test]
fn reports_match_published_schemas() {
    let schemas = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", &three_agents(300));
    execute(&manifest(Command::Verify, &config, dir.path())).unwrap();
    execute(&manifest(Command::Bound, &config, dir.path())).unwrap();
    for (schema, report) in [("convergence_report.v1.json", "convergence.json"), ("doeblin_report.v1.json", "doeblin.json")] {
        let schema = read_json(&schemas.join(schema));
        conforms(&read_json(&dir.path().join(report)), &schema, &schema, "$");
    }
}

#[test]
fn example_configs_load() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count > 0);
}
