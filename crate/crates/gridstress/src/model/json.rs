//! Native JSON case schema.
//!
//! The schema is the serde form of [`Network`]:
//!
//! ```json
//! {
//!   "base_mva": 100.0,
//!   "slack_bus": 2,
//!   "buses":      [ { "id": 1, "load_mw": 0.0, "name": "Riversde" } ],
//!   "branches":   [ { "id": 1, "from_bus": 1, "to_bus": 2, "reactance": 0.1,
//!                     "rating_mw": 100.0, "in_service": true, "is_transformer": false } ],
//!   "generators": [ { "bus": 1, "output_mw": 90.0, "max_output_mw": 150.0 } ]
//! }
//! ```
//!
//! `rating_mw: null` marks an unrated branch. [`to_canonical_json`] emits a
//! deterministic rendering, so parse -> serialize -> parse is the identity.

use crate::error::{GridError, Result};
use crate::model::Network;

pub fn parse_json_case(text: &str) -> Result<Network> {
    let net: Network = serde_json::from_str(text).map_err(|e| GridError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    net.validate()?;
    Ok(net)
}

/// Deterministic pretty-printed JSON for a network.
pub fn to_canonical_json(net: &Network) -> String {
    serde_json::to_string_pretty(net).expect("network serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn round_trip_is_identity() {
        for net in [fixtures::triangle(), fixtures::ieee118()] {
            let text = to_canonical_json(&net);
            let back = parse_json_case(&text).unwrap();
            assert_eq!(net, back);
            // and the rendering itself is stable
            assert_eq!(text, to_canonical_json(&back));
        }
    }

    #[test]
    fn unrated_branch_round_trips_through_null() {
        let mut net = fixtures::triangle();
        net.branches[1].rating_mw = f64::INFINITY;
        let text = to_canonical_json(&net);
        assert!(text.contains("\"rating_mw\": null"));
        let back = parse_json_case(&text).unwrap();
        assert!(back.branches[1].rating_mw.is_infinite());
        assert_eq!(net, back);
    }

    #[test]
    fn invalid_json_case_is_rejected() {
        let mut net = fixtures::triangle();
        net.branches[0].reactance = 0.0;
        let text = to_canonical_json(&net);
        assert!(matches!(parse_json_case(&text), Err(GridError::ZeroReactance(_))));
    }
}
