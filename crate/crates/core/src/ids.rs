//! Agent and node identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Uav,
    Ugv,
}

/// An agent is identified by its layer and its pair index. UAV `i` and UGV
/// `i` form pair `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId {
    pub kind: AgentKind,
    pub index: u32,
}

impl AgentId {
    pub const fn uav(index: u32) -> Self {
        Self { kind: AgentKind::Uav, index }
    }

    pub const fn ugv(index: u32) -> Self {
        Self { kind: AgentKind::Ugv, index }
    }

    pub fn is_uav(self) -> bool {
        self.kind == AgentKind::Uav
    }

    /// The other member of this agent's pair.
    pub fn partner(self) -> AgentId {
        match self.kind {
            AgentKind::Uav => AgentId::ugv(self.index),
            AgentKind::Ugv => AgentId::uav(self.index),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Uav => "uav",
            AgentKind::Ugv => "ugv",
        })
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid agent id `{0}`")]
pub struct ParseIdError(String);

impl FromStr for AgentId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = if let Some(rest) = s.strip_prefix("uav") {
            (AgentKind::Uav, rest)
        } else if let Some(rest) = s.strip_prefix("ugv") {
            (AgentKind::Ugv, rest)
        } else {
            return Err(ParseIdError(s.to_string()));
        };
        let index = rest.parse().map_err(|_| ParseIdError(s.to_string()))?;
        Ok(AgentId { kind, index })
    }
}

impl Serialize for AgentId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A node on the network: the Watcher or one of the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Watcher,
    Agent(AgentId),
}

impl NodeId {
    pub fn agent(self) -> Option<AgentId> {
        match self {
            NodeId::Watcher => None,
            NodeId::Agent(id) => Some(id),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Watcher => f.write_str("watcher"),
            NodeId::Agent(id) => id.fmt(f),
        }
    }
}

impl FromStr for NodeId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "watcher" {
            Ok(NodeId::Watcher)
        } else {
            s.parse().map(NodeId::Agent)
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
