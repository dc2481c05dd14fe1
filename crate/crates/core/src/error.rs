use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("schedule invalid: node {node} transmits on level {level} above its reach {reach}")]
    AboveReach { node: NodeId, level: u32, reach: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReductionError {
    #[error(
        "insufficient levels: {rate} relay-stream bits of node {node} cannot be placed below level {start}"
    )]
    InsufficientLevels { node: NodeId, rate: u32, start: u32 },
    #[error("reduced network mismatch for node {node}: closed form {closed_form}, level assignment {constructive}")]
    Mismatch {
        node: NodeId,
        closed_form: u32,
        constructive: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("infeasible schedule: {phase} segment of node {owner} needs level {level}, node {node} reaches {reach}")]
    Infeasible {
        phase: &'static str,
        owner: NodeId,
        node: NodeId,
        level: u32,
        reach: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetourError {
    #[error("no violated extra condition: the tuple is already schedulable directly")]
    NoViolation,
    #[error("rate tuple is outside the 4-user capacity region ({condition} exceeded by {excess})")]
    OutsideRegion { condition: String, excess: i64 },
    #[error("no detour candidate applies: {0}")]
    Exhausted(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("rate tuple is outside the capacity region ({0})")]
    OutsideRegion(String),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Detour(#[from] DetourError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("decode failure in round {round} at level {level}: stream {from}->{to} ({detail})")]
    Decode {
        round: u32,
        level: u32,
        from: NodeId,
        to: NodeId,
        detail: String,
    },
    #[error("relay output at downlink level {level} is not a verbatim copy of uplink level {source_level}")]
    RelayNotOblivious { level: u32, source_level: u32 },
    #[error("reserved level {level} carries a transmission from node {node} besides node {owner}")]
    ReservedLevelShared { level: u32, owner: NodeId, node: NodeId },
}
