use std::path::Path;

use serde::Deserialize;

use crate::channel::RadioConstants;
use crate::error::{Error, Result};
use crate::scenario::{MobilityGroup, ScenarioConfig};

/// Simulation manifest: base scenario values, the axes swept over them, and
/// radio constants. Stored as TOML.
///
/// ```toml
/// [dataset]
/// replicas = 2
///
/// [scenario]
/// sim_time_s = 20.0
///
/// [grid]
/// mobility_groups = ["none_speed", "attacker_speed"]
/// users = [0, 20]
/// attackers = [0, 1]
/// attacker_power_dbm = [2.0, 20.0]
/// serving_distance_m = [100.0]
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub grid: GridAxes,
    #[serde(default)]
    pub radio: RadioConstants,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub master_seed: Option<u64>,
    pub replicas: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            master_seed: None,
            replicas: 1,
        }
    }
}

/// Empty axes fall back to the base scenario value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAxes {
    pub mobility_groups: Vec<MobilityGroup>,
    pub users: Vec<usize>,
    pub attackers: Vec<usize>,
    pub attacker_power_dbm: Vec<f64>,
    pub serving_distance_m: Vec<f64>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: GridSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.scenario.validate()?;
        spec.radio.validate()?;
        if spec.dataset.replicas == 0 {
            return Err(Error::Config("dataset.replicas must be at least 1".into()));
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every configuration of the grid, in a fixed nested order
    /// (group, users, attackers, power, distance, replica).
    pub fn expand(&self) -> Vec<ScenarioConfig> {
        let base = &self.scenario;
        let mut out = Vec::new();
        for group in axis(&self.grid.mobility_groups, base.mobility_group) {
            for users in axis(&self.grid.users, base.num_users) {
                for attackers in axis(&self.grid.attackers, base.num_attackers) {
                    for power in axis(&self.grid.attacker_power_dbm, base.attacker_power_dbm) {
                        for dist in axis(&self.grid.serving_distance_m, base.serving_distance_m) {
                            for _ in 0..self.dataset.replicas {
                                out.push(ScenarioConfig {
                                    mobility_group: group,
                                    num_users: users,
                                    num_attackers: attackers,
                                    attacker_power_dbm: power,
                                    serving_distance_m: dist,
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = include_str!("../../configs/canonical.toml");

    #[test]
    fn canonical_grid_has_2400_cells() {
        let spec = GridSpec::parse(CANONICAL).unwrap();
        let grid = spec.expand();
        assert_eq!(grid.len(), 2400);
        assert!(grid.iter().all(|c| c.is_canonical()));
        for g in MobilityGroup::ALL {
            assert_eq!(grid.iter().filter(|c| c.mobility_group == g).count(), 600);
        }
    }

    #[test]
    fn empty_axes_use_base() {
        let spec = GridSpec::parse("[scenario]\nnum_users = 3\n").unwrap();
        let grid = spec.expand();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].num_users, 3);
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = GridSpec::parse("[grid]\nusers = [1, 2\n").unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let err = GridSpec::parse("[grid]\nuserz = [1]\n").unwrap_err().to_string();
        assert!(err.contains("userz"), "{err}");
        assert!(GridSpec::parse("[scenario]\nsim_time_s = -1.0\n").is_err());
    }
}
