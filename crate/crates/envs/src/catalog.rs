//! Task identifiers, action spaces and the machine-readable catalog.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EnvError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    PourWater,
    PourSoup,
    PushRope,
    WhipRope,
    FoldCloth1,
    FoldCloth3,
    FoldTshirt,
    UnfoldCloth1,
    UnfoldCloth3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    /// Gripper velocity `(v_x, v_y, v_z)`.
    LowLevel3,
    /// Gripper velocity plus wrist angular velocity.
    LowLevel4,
    /// Macro action `(x, y, z, x′, y′, z′)`.
    Macro6,
}

impl ActionSpace {
    pub fn dim(self) -> usize {
        match self {
            ActionSpace::LowLevel3 => 3,
            ActionSpace::LowLevel4 => 4,
            ActionSpace::Macro6 => 6,
        }
    }
}

/// Which dynamics back end a task runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Fluid,
    Rope,
    Cloth,
}

impl TaskId {
    pub const ALL: [TaskId; 9] = [
        TaskId::PourWater,
        TaskId::PourSoup,
        TaskId::PushRope,
        TaskId::WhipRope,
        TaskId::FoldCloth1,
        TaskId::FoldCloth3,
        TaskId::FoldTshirt,
        TaskId::UnfoldCloth1,
        TaskId::UnfoldCloth3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::PourWater => "pour_water",
            TaskId::PourSoup => "pour_soup",
            TaskId::PushRope => "push_rope",
            TaskId::WhipRope => "whip_rope",
            TaskId::FoldCloth1 => "fold_cloth1",
            TaskId::FoldCloth3 => "fold_cloth3",
            TaskId::FoldTshirt => "fold_tshirt",
            TaskId::UnfoldCloth1 => "unfold_cloth1",
            TaskId::UnfoldCloth3 => "unfold_cloth3",
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            TaskId::PourWater | TaskId::PourSoup => 100,
            TaskId::PushRope => 6,
            TaskId::WhipRope => 70,
            TaskId::FoldCloth1 => 3,
            TaskId::FoldCloth3 | TaskId::FoldTshirt => 4,
            TaskId::UnfoldCloth1 | TaskId::UnfoldCloth3 => 10,
        }
    }

    pub fn action_space(self) -> ActionSpace {
        match self {
            TaskId::PourWater | TaskId::PourSoup => ActionSpace::LowLevel4,
            TaskId::WhipRope => ActionSpace::LowLevel3,
            _ => ActionSpace::Macro6,
        }
    }

    pub fn family(self) -> Family {
        match self {
            TaskId::PourWater | TaskId::PourSoup => Family::Fluid,
            TaskId::PushRope | TaskId::WhipRope => Family::Rope,
            _ => Family::Cloth,
        }
    }

    /// Fluids are scored without particle correspondence.
    pub fn corresponded(self) -> bool {
        self.family() != Family::Fluid
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        TaskId::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| EnvError::UnknownTask {
            id: s.to_string(),
            valid: TaskId::ALL.iter().map(|t| t.name()).collect::<Vec<_>>().join(", "),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: TaskId,
    pub action_size: usize,
    pub horizon: usize,
    pub action_space: ActionSpace,
}

pub fn catalog() -> Vec<CatalogEntry> {
    TaskId::ALL
        .into_iter()
        .map(|id| CatalogEntry { id, action_size: id.action_space().dim(), horizon: id.horizon(), action_space: id.action_space() })
        .collect()
}
