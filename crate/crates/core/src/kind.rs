use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three component roles of a control structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Sensor,
    Controller,
    Actuator,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 3] = [
        ComponentKind::Sensor,
        ComponentKind::Controller,
        ComponentKind::Actuator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Sensor => "sensor",
            ComponentKind::Controller => "controller",
            ComponentKind::Actuator => "actuator",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            ComponentKind::Sensor => "sensors",
            ComponentKind::Controller => "controllers",
            ComponentKind::Actuator => "actuators",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sensor" | "sensors" => Ok(ComponentKind::Sensor),
            "controller" | "controllers" => Ok(ComponentKind::Controller),
            "actuator" | "actuators" => Ok(ComponentKind::Actuator),
            other => Err(format!("unknown component kind {other:?}")),
        }
    }
}
