//! Model files: TOML with the top-level keys `name`, `horizon_hours` and the
//! sections `products`, `tool_groups`, `routes`, `releases`. All durations
//! are in hours. See `models/README.md` for the full schema.

use std::path::Path;

use super::FabModel;
use crate::error::{Error, ModelError};

pub const MIDIFAB_TOML: &str = include_str!("../../models/midifab.toml");

pub fn parse_model(text: &str) -> Result<FabModel, ModelError> {
    let model: FabModel = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FabModel, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model = parse_model(&text).map_err(|e| match e {
        ModelError::Parse(msg) => ModelError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(model)
}

/// Serializes a model. Field order follows the struct definitions and maps
/// are sorted, so emitting the same model twice gives identical text.
pub fn emit_model(model: &FabModel) -> String {
    toml::to_string(model).expect("fab models always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_midifab, build_minifab, Priority};

    #[test]
    fn minifab_round_trips() {
        for seed in 0..5 {
            let m = build_minifab(seed);
            let text = emit_model(&m);
            assert_eq!(parse_model(&text).unwrap(), m);
            assert_eq!(emit_model(&parse_model(&text).unwrap()), text);
        }
    }

    #[test]
    fn midifab_is_valid_and_scaled() {
        let m = build_midifab();
        let tools = m.tool_count();
        assert!((30..=50).contains(&tools), "{tools} tools");
        assert!(m.releases.iter().any(|r| r.priority == Priority::Hot));
        assert!(m.releases.iter().any(|r| r.priority == Priority::SuperHot));
        assert!(m.routes.values().flat_map(|r| &r.steps).any(|s| s.setup.is_some()));
        assert!(m.routes.values().flat_map(|r| &r.steps).any(|s| s.time_constraint_hours.is_some()));
        assert!(m.routes.values().flat_map(|r| &r.steps).any(|s| s.batch_eligible));
        assert_eq!(parse_model(&emit_model(&m)).unwrap(), m);
    }

    #[test]
    fn unknown_tool_group_is_dangling() {
        let mut m = build_minifab(0);
        m.routes.get_mut("r_pa").unwrap().steps[0].tool_group = "etch".into();
        let err = parse_model(&emit_model(&m)).unwrap_err();
        match err {
            ModelError::Dangling { field, reference } => {
                assert_eq!(field, "routes.r_pa.steps[0].tool_group");
                assert_eq!(reference, "etch");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_tool_list_is_schema_violation() {
        let mut m = build_minifab(0);
        m.tool_groups[1].tools.clear();
        let err = m.validate().unwrap_err();
        assert!(matches!(&err, ModelError::Schema { field, .. } if field == "tool_groups[1].tools"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_model("name = \"x\"\nhorizon_hours = = 3\n").unwrap_err();
        let ModelError::Parse(msg) = err else { panic!() };
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn release_of_unknown_product_is_dangling() {
        let mut m = build_minifab(0);
        m.releases[0].product = "nope".into();
        assert!(matches!(m.validate(), Err(ModelError::Dangling { .. })));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, emit_model(&build_minifab(2))).unwrap();
        assert_eq!(load_model(&path).unwrap(), build_minifab(2));
        assert!(load_model(dir.path().join("missing.toml")).is_err());
    }
}
