use std::fs;
use std::path::Path;

use super::{validate_network, IntegratedNetwork};
use crate::error::{Error, Result};

/// Parses and validates a network document.
pub fn parse_network(text: &str) -> Result<IntegratedNetwork> {
    let net: IntegratedNetwork = serde_json::from_str(text).map_err(|source| Error::Parse {
        what: "network document".into(),
        source,
    })?;
    let violations = validate_network(&net);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<IntegratedNetwork> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_network(&text).map_err(|e| match e {
        Error::Parse { source, .. } => Error::Parse {
            what: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Canonical text form: pretty JSON with a trailing newline.
pub fn to_canonical_json(net: &IntegratedNetwork) -> String {
    let mut text = serde_json::to_string_pretty(net).expect("network serializes");
    text.push('\n');
    text
}

pub fn save_network(net: &IntegratedNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_canonical_json(net))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_simple_testbed, ComponentKind, Rule};

    #[test]
    fn testbed_round_trips() {
        let net = build_simple_testbed();
        let text = to_canonical_json(&net);
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(to_canonical_json(&back), text);
    }

    #[test]
    fn shipped_file_matches_constructor() {
        let text = include_str!("../../../../data/simple_testbed.json");
        assert_eq!(parse_network(text).unwrap(), build_simple_testbed());
        assert_eq!(to_canonical_json(&build_simple_testbed()), text);
    }

    #[test]
    fn dangling_dependency_is_rejected() {
        let mut net = build_simple_testbed();
        net.dependencies[0].target_id = "w_pump_9".into();
        let err = parse_network(&to_canonical_json(&net)).unwrap_err();
        match err {
            Error::Validation(v) => assert!(v.iter().any(|v| v.rule == Rule::DanglingReference)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_diameter_is_rejected() {
        let mut net = build_simple_testbed();
        if let ComponentKind::Pipe(p) = &mut net.water.iter_mut().find(|c| c.id == "w_pipe_01").unwrap().kind {
            p.diameter = -0.3;
        }
        match parse_network(&to_canonical_json(&net)).unwrap_err() {
            Error::Validation(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].component_id, "w_pipe_01");
                assert_eq!(v[0].rule, Rule::NonPositiveAttribute);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_error_carries_position_and_field() {
        let text = r#"{"schema_version": 1, "water": [{"id": "w_x", "location": {"x": 0, "y": 0}, "kind": "pipe", "from": "a", "to": "b", "length": 1.0, "diameter": 1.0}], "power": [], "traffic": [], "dependencies": [], "od_matrix": []}"#;
        let msg = parse_network(text).unwrap_err().to_string();
        assert!(msg.contains("roughness"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }
}
