use super::{EntityError, Job, JobId, Message, Request};
use crate::label::{CapabilitySet, Label, UserTag};
use crate::monitor::{check_send, FlowDecision};

/// A customer's dedicated entry and exit point.
///
/// Requests are stamped `{U/U:inf}` on the way in. Results are declassified
/// with every capability the gateway holds and delivered only if what is
/// left flows to the customer's clearance, which is also `{U/U:inf}`.
#[derive(Debug, Clone)]
pub struct Gateway {
    pub owner: UserTag,
    pub caps: CapabilitySet,
    next_index: u64,
}

impl Gateway {
    pub fn new(owner: UserTag, caps: CapabilitySet) -> Self {
        Gateway { owner, caps, next_index: 0 }
    }

    pub fn ingress_label(&self) -> Label {
        Label::owned_by(&self.owner)
    }

    pub fn clearance(&self) -> Label {
        Label::owned_by(&self.owner)
    }

    pub fn ingress(&mut self, request: Request) -> Result<Job, EntityError> {
        if request.owner != self.owner {
            return Err(EntityError::CrossCustomer {
                gateway: self.owner.to_string(),
                owner: request.owner.to_string(),
            });
        }
        let id = JobId { owner: self.owner.clone(), index: self.next_index };
        let job = Job::new(id, request.work, request.payload_bits, self.ingress_label())?;
        self.next_index += 1;
        Ok(job)
    }

    pub fn egress(&self, result: &Message) -> FlowDecision {
        check_send(&result.label, &self.caps, &self.clearance())
    }
}
