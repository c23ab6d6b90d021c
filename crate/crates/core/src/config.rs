//! Tunable policy parameters. Every field has a default; a scenario file may
//! override any subset under its `[policy]` table.

use serde::{Deserialize, Serialize};

use crate::ahead::AheadConfig;
use crate::control::{PidGains, VehicleDynamics};
use crate::cot::TargetSpeedTable;
use crate::hazards::HazardConfig;
use crate::kinematics::BicycleParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hazards: HazardConfig,
    pub ahead: AheadConfig,
    pub speeds: TargetSpeedTable,
    pub longitudinal: PidGains,
    pub lateral: PidGains,
    pub vehicle: VehicleDynamics,
    pub bicycle: BicycleParams,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hazards: HazardConfig::default(),
            ahead: AheadConfig::default(),
            speeds: TargetSpeedTable::default(),
            longitudinal: PidGains::LONGITUDINAL,
            lateral: PidGains::LATERAL,
            vehicle: VehicleDynamics::default(),
            bicycle: BicycleParams::default(),
        }
    }
}
