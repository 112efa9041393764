use crate::engine::EventPayload;
use crate::node::BsId;
use crate::radio::JobId;

/// Everything the simulated network can schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEvent {
    PacketArrival {
        flow: usize,
        index: u64,
    },
    PolicyTick,
    MobilityStep,
    DeepSleepTimer {
        bs: BsId,
    },
    OffWindowStart {
        bs: BsId,
    },
    OffWindowEnd {
        bs: BsId,
    },
    /// Boundary between two PHY segments of a radio job.
    RadioStep {
        job: JobId,
    },
}

impl EventPayload for SimEvent {
    fn kind_name(&self) -> &'static str {
        match self {
            SimEvent::PacketArrival { .. } => "PacketArrival",
            SimEvent::PolicyTick => "PolicyTick",
            SimEvent::MobilityStep => "MobilityStep",
            SimEvent::DeepSleepTimer { .. } => "DeepSleepTimer",
            SimEvent::OffWindowStart { .. } => "OffWindowStart",
            SimEvent::OffWindowEnd { .. } => "OffWindowEnd",
            SimEvent::RadioStep { .. } => "RadioStep",
        }
    }

    fn summary(&self) -> String {
        match self {
            SimEvent::PacketArrival { flow, index } => format!("flow={flow} pkt={index}"),
            SimEvent::DeepSleepTimer { bs } | SimEvent::OffWindowStart { bs } | SimEvent::OffWindowEnd { bs } => {
                bs.to_string()
            }
            SimEvent::RadioStep { job } => format!("job={}", job.0),
            SimEvent::PolicyTick | SimEvent::MobilityStep => String::new(),
        }
    }
}
