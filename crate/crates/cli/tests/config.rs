use amz_cli::config::{parse_config, to_toml, ConfigError, RunConfig, E1_TOML};
use amz_core::simulate::{Driver, Side};
use proptest::prelude::*;

#[test]
fn minimal_config_round_trips() {
    let cfg = RunConfig::e1();
    assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
}

#[test]
fn customized_config_round_trips() {
    let text = r#"
seed = 99
grid_n = 1024
output_dir = "results/run1"

[system]
x0 = 0.8
y0 = 0.6

[p0]
family = "affine"
v0 = 0.45
v1 = 0.55
lipschitz = 0.2

[experiments.prop1]
range = [0.3, 0.6]

[experiments.prop2]
driver = "y"

[experiments.escape]
sides = ["right"]

[experiments.slln]
functions = ["identity", "smoothed_indicator"]

[experiments.stationary]
cesaro = true
"#;
    let cfg = parse_config(text).unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.experiments.prop1.range, Some([0.3, 0.6]));
    assert_eq!(cfg.experiments.prop2.driver, Driver::Y);
    assert_eq!(cfg.experiments.escape.sides, vec![Side::Right]);
    assert_eq!(cfg.experiments.stationary.grid_n, 1024);
    assert_eq!(cfg.p0.declared_lipschitz(), Some(0.2));
    assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
}

#[test]
fn out_of_region_system_is_a_validation_error() {
    let text = E1_TOML.replace("y0 = 0.5", "y0 = 0.8");
    match parse_config(&text) {
        Err(ConfigError::Validation(problems)) => {
            assert!(problems.iter().any(|p| p.contains("A1")), "{problems:?}");
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn attracting_endpoint_is_a_validation_error() {
    let text = E1_TOML.replace("p = 0.5", "p = 0.95");
    match parse_config(&text) {
        Err(ConfigError::Validation(problems)) => {
            assert!(problems.iter().any(|p| p.contains("A4")), "{problems:?}");
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn unknown_top_level_key_names_key_and_position() {
    let text = format!("seed = 3\nalpha0 = 0.3\n{E1_TOML}");
    match parse_config(&text) {
        Err(ConfigError::Parse { line, column, message }) => {
            assert!(message.contains("alpha0"), "{message}");
            assert_eq!(line, 2);
            assert_eq!(column, 1);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected_everywhere() {
    for (section, key) in [
        ("[system]", "z0 = 0.1"),
        ("[p0]", "pp = 0.5"),
        ("[experiments.prop2]", "pairz = 10"),
        ("[experiments]", "bogus = {}"),
    ] {
        let text = if E1_TOML.contains(section) {
            E1_TOML.replace(section, &format!("{section}\n{key}"))
        } else {
            format!("{E1_TOML}\n{section}\n{key}\n")
        };
        let err = parse_config(&text).unwrap_err();
        let name = key.split_whitespace().next().unwrap();
        assert!(err.to_string().contains(name), "{section}: {err}");
    }
}

#[test]
fn syntax_errors_carry_line_and_column() {
    let text = "[system]\nx0 = 0.75\ny0 = = 0.5\n";
    match parse_config(text) {
        Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_field_section_is_an_error() {
    assert!(parse_config("[system]\nx0 = 0.75\ny0 = 0.5\n").is_err());
}

#[test]
fn every_field_family_parses() {
    for spec in [
        "family = \"constant\"\np = 0.5",
        "family = \"affine\"\nv0 = 0.45\nv1 = 0.55",
        "family = \"piecewise_linear\"\nbreakpoints = [[0.0, 0.5], [0.5, 0.45], [1.0, 0.5]]",
        "family = \"logistic\"\ncenter = 0.5\nsteepness = 1.0\nlow = 0.45\nhigh = 0.55",
    ] {
        let text = E1_TOML.replace("family = \"constant\"\np = 0.5", spec);
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{spec}: {e}"));
        assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_configs_round_trip(
        seed in any::<u64>(),
        grid in 8usize..100_000,
        x0 in 0.51f64..0.99,
        t in 0.0f64..1.0,
        p in 0.3f64..0.7,
        tol in 1e-12f64..1e-2,
        steps in 1u64..10_000_000,
    ) {
        let y0 = 0.5 + t * (x0 - 0.5) * 0.99;
        let text = format!(
            "seed = \"{seed}\"\ngrid_n = {grid}\n[system]\nx0 = {x0:?}\ny0 = {y0:?}\n[p0]\nfamily = \"constant\"\np = {p:?}\n\
             [experiments.stationary]\ntol = {tol:?}\n[experiments.slln]\nsteps = {steps}\n"
        );
        match parse_config(&text) {
            Ok(cfg) => {
                prop_assert_eq!(cfg.experiments.stationary.tol, tol);
                prop_assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
            }
            // Some draws violate A4; those must be reported as such.
            Err(ConfigError::Validation(v)) => prop_assert!(v.iter().any(|m| m.contains("A4")), "{:?}", v),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}
