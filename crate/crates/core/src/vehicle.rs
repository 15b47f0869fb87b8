use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    #[serde(rename = "HDV")]
    Hdv,
    #[serde(rename = "CAV")]
    Cav,
    #[serde(rename = "Bus")]
    Bus,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Hdv => "HDV",
            VehicleClass::Cav => "CAV",
            VehicleClass::Bus => "Bus",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HDV" => Ok(VehicleClass::Hdv),
            "CAV" => Ok(VehicleClass::Cav),
            "Bus" => Ok(VehicleClass::Bus),
            other => Err(format!("unknown vehicle class {other:?}")),
        }
    }
}
