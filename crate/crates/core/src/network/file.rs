//! Road network files.
//!
//! ```toml
//! [[zone]]
//! id = 1
//! name = "West Bank"      # optional
//!
//! [[arc]]
//! from = 1
//! to = 2
//! minutes = 6.5
//! miles = 1.4
//! both_ways = true        # optional, adds the reverse arc with the same values
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arc, RoadNetwork, ZoneId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(rename = "zone")]
    pub zones: Vec<ZoneSpec>,
    #[serde(rename = "arc", default)]
    pub arcs: Vec<ArcSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpec {
    pub id: ZoneId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSpec {
    pub from: ZoneId,
    pub to: ZoneId,
    pub minutes: f64,
    pub miles: f64,
    #[serde(default)]
    pub both_ways: bool,
}

impl NetworkFile {
    pub fn to_road_network(&self) -> Result<RoadNetwork> {
        let mut arcs = Vec::with_capacity(self.arcs.len() * 2);
        for a in &self.arcs {
            arcs.push(Arc {
                from: a.from,
                to: a.to,
                minutes: a.minutes,
                miles: a.miles,
            });
            if a.both_ways {
                arcs.push(Arc {
                    from: a.to,
                    to: a.from,
                    minutes: a.minutes,
                    miles: a.miles,
                });
            }
        }
        RoadNetwork::new(self.zones.iter().map(|z| z.id), arcs)
    }
}

pub fn parse_network(text: &str, origin: &str) -> Result<RoadNetwork> {
    let file: NetworkFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    file.to_road_network()
}

pub fn read_network(path: &Path) -> Result<RoadNetwork> {
    let text = std::fs::read_to_string(path)?;
    parse_network(&text, &path.display().to_string())
}
