//! Bundled case documents.

use crate::model::{load_case_str, GridCase};

/// Names accepted by [`builtin`].
pub const NAMES: [&str; 7] = [
    "two_bus",
    "three_bus",
    "three_bus_congested",
    "three_bus_multigen",
    "three_bus_multigen_congested",
    "five_bus",
    "rts24",
];

/// Raw JSON of a bundled case.
pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "two_bus" => include_str!("../cases/two_bus.json"),
        "three_bus" => include_str!("../cases/three_bus.json"),
        "three_bus_congested" => include_str!("../cases/three_bus_congested.json"),
        "three_bus_multigen" => include_str!("../cases/three_bus_multigen.json"),
        "three_bus_multigen_congested" => include_str!("../cases/three_bus_multigen_congested.json"),
        "five_bus" => include_str!("../cases/five_bus.json"),
        "rts24" => include_str!("../cases/rts24.json"),
        _ => return None,
    })
}

/// A bundled case by name.
pub fn builtin(name: &str) -> Option<GridCase> {
    source(name).map(|s| load_case_str(s).expect("bundled cases are valid"))
}
