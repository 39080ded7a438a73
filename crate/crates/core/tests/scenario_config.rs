use std::path::Path;

use ibc_core::scenario::{builtin, emit, load_scenario_file, load_scenario_str, BUILTIN_NAMES};
use ibc_core::ScenarioError;

fn shipped(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn builtins_survive_an_emit_load_round_trip() {
    for name in BUILTIN_NAMES {
        let s = builtin(name).unwrap();
        let back = load_scenario_str(&emit(&s)).unwrap();
        assert_eq!(back, s, "{name}");
    }
}

#[test]
fn shipped_scenario_files_match_the_builtins() {
    for name in BUILTIN_NAMES {
        let file = load_scenario_file(shipped(&format!("{name}.toml"))).unwrap();
        assert_eq!(file, builtin(name).unwrap(), "{name}");
    }
    let zero = load_scenario_file(shipped("zero_demand.toml")).unwrap();
    assert!(zero.demands.entry_a.iter().chain(&zero.demands.entry_b).all(|&q| q == 0.0));
}

#[test]
fn control_step_must_be_a_multiple_of_the_model_step() {
    let text = emit(&builtin("uncongested").unwrap()).replace("T_c = 60.0", "T_c = 45.0");
    let err = load_scenario_str(&text).unwrap_err();
    assert_eq!(err.field(), Some("control.T_c"));
    assert!(err.to_string().contains("control.T_c"));
}

#[test]
fn missing_demand_section_is_a_parse_error() {
    let text = emit(&builtin("uncongested").unwrap());
    let start = text.find("[[demands.entry_b]]").unwrap();
    let end = text.find("[[demands.ramps]]").unwrap();
    let cut = format!("{}{}", &text[..start], &text[end..]);
    match load_scenario_str(&cut) {
        Err(ScenarioError::Parse(e)) => assert!(e.to_string().contains("entry_b")),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn per_section_lists_must_match_the_section_count() {
    let text = emit(&builtin("uncongested").unwrap()).replace(
        "rho_a = [5.0, 5.0, 5.0, 5.0, 18.5, 29.4]",
        "rho_a = [5.0, 5.0]",
    );
    let err = load_scenario_str(&text).unwrap_err();
    assert_eq!(err.field(), Some("initial.rho_a"));
}

#[test]
fn unknown_builtin_is_reported() {
    assert!(matches!(builtin("rush-hour"), Err(ScenarioError::UnknownBuiltin(_))));
}
