//! Scenario documents compiled into the binary.

use super::config::Scenario;
use crate::error::{Error, Result};

pub const BUNDLED: &[(&str, &str)] = &[
    ("circle", include_str!("../../scenarios/circle.toml")),
    ("ellipse-3-7", include_str!("../../scenarios/ellipse-3-7.toml")),
    ("lens-3pi4", include_str!("../../scenarios/lens-3pi4.toml")),
    ("lens-pi4", include_str!("../../scenarios/lens-pi4.toml")),
    ("hkl-perturbed-ellipse", include_str!("../../scenarios/hkl-perturbed-ellipse.toml")),
    ("theorem-a-outward", include_str!("../../scenarios/theorem-a-outward.toml")),
    ("theorem-a-inward", include_str!("../../scenarios/theorem-a-inward.toml")),
    ("quasimode-ladder", include_str!("../../scenarios/quasimode-ladder.toml")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled(name: &str) -> Result<Scenario> {
    let (_, src) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no bundled scenario `{name}` (known: {})", bundled_names().join(", "))))?;
    Scenario::from_toml(src)
}

pub fn bundled_scenarios() -> Result<Vec<Scenario>> {
    BUNDLED.iter().map(|(_, src)| Scenario::from_toml(src)).collect()
}

/// A bundled name or a path to a TOML file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    if BUNDLED.iter().any(|(n, _)| *n == name_or_path) {
        return bundled(name_or_path);
    }
    Scenario::from_path(std::path::Path::new(name_or_path))
}
