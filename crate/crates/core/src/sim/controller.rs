//! Feedback controller run by the master every sampling period.
//!
//! Demands are summed per server, the network is shared by largest
//! remainder, each server's grant is split across its sessions and every
//! session grant becomes a target constraint set. Sessions drop to a lower
//! target at once and climb back by `restore_step` frames per GoP once the
//! headroom has lasted `restore_hold` periods.

use std::collections::BTreeMap;

use crate::fairshare::{
    allocation_to_constraints, apportion, largest_remainder, Allocation, CapacityDemand,
    ClassFloors, FairShareError,
};
use crate::mk::ClassConstraintSet;
use crate::stream::{FrameClass, GopTemplate, ServerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionDemand {
    pub session: u32,
    /// Required frames per time unit.
    pub qos: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerLoad {
    pub server_id: ServerId,
    pub sessions: Vec<SessionDemand>,
}

impl ServerLoad {
    pub fn demand(&self) -> u64 {
        self.sessions.iter().map(|s| u64::from(s.qos)).sum()
    }
}

/// Per-session controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlState {
    pub constraints: ClassConstraintSet,
    pub headroom_periods: u32,
}

impl ControlState {
    pub fn new(constraints: ClassConstraintSet) -> Self {
        ControlState {
            constraints,
            headroom_periods: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutcome {
    pub server_grants: Vec<Allocation>,
    /// Granted frames per time unit, by session.
    pub session_grants: BTreeMap<u32, u64>,
    /// Sessions whose constraint set changed this tick.
    pub changed: Vec<u32>,
    /// Sessions whose grant cannot carry their mandatory frames.
    pub infeasible: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackController {
    full: ClassConstraintSet,
    gop_len: u32,
    floors: ClassFloors,
    restore_step: u32,
    restore_hold: u32,
    server_cap: Option<u64>,
}

impl FeedbackController {
    pub fn new(template: &GopTemplate, floors: ClassFloors, restore_step: u32, restore_hold: u32) -> Self {
        let n = |c| template.count(c) as u32;
        FeedbackController {
            full: ClassConstraintSet::full(n(FrameClass::I), n(FrameClass::P), n(FrameClass::B))
                .expect("template counts form a full set"),
            gop_len: template.len() as u32,
            floors,
            restore_step: restore_step.max(1),
            restore_hold,
            server_cap: None,
        }
    }

    /// Caps every server grant at `cap` frames per time unit.
    pub fn with_server_cap(mut self, cap: u64) -> Self {
        self.server_cap = Some(cap);
        self
    }

    pub fn full(&self) -> ClassConstraintSet {
        self.full
    }

    /// Target set for a session granted `granted_rate` of its `qos`.
    pub fn target(&self, granted_rate: u64, qos: u32) -> Result<ClassConstraintSet, FairShareError> {
        let per_gop = if qos == 0 {
            self.gop_len
        } else {
            (granted_rate.min(u64::from(qos)) * u64::from(self.gop_len) / u64::from(qos)) as u32
        };
        allocation_to_constraints(&self.full, per_gop, self.gop_len, self.floors)
    }

    /// Moves `state` toward `target`. Returns true when the constraints changed.
    pub fn advance(&self, state: &mut ControlState, target: &ClassConstraintSet) -> bool {
        let cur = state.constraints;
        if target.total_m() < cur.total_m() {
            state.constraints = *target;
            state.headroom_periods = 0;
            return true;
        }
        if target.total_m() == cur.total_m() {
            state.headroom_periods = 0;
            let changed = *target != cur;
            state.constraints = *target;
            return changed;
        }
        state.headroom_periods += 1;
        if state.headroom_periods < self.restore_hold {
            return false;
        }
        // Restore P before B.
        let mut budget = self.restore_step;
        let add_p = (target.p().m().saturating_sub(cur.p().m())).min(budget);
        budget -= add_p;
        let add_b = (target.b().m().saturating_sub(cur.b().m())).min(budget);
        state.constraints = cur.with_m(cur.p().m() + add_p, cur.b().m() + add_b);
        state.constraints != cur
    }

    /// Network grants per server.
    pub fn server_grants(
        &self,
        net_capacity: u64,
        loads: &[ServerLoad],
    ) -> Result<Vec<Allocation>, FairShareError> {
        let demands: Vec<CapacityDemand> = loads
            .iter()
            .filter(|l| l.demand() > 0)
            .map(|l| CapacityDemand {
                server_id: l.server_id,
                required_capacity: l.demand(),
            })
            .collect();
        if demands.is_empty() {
            return Ok(Vec::new());
        }
        let mut grants = apportion(net_capacity, &demands)?;
        if let Some(cap) = self.server_cap {
            for g in &mut grants {
                g.granted_capacity = g.granted_capacity.min(cap);
            }
        }
        Ok(grants)
    }

    /// One control period over all loaded servers. Sessions missing from
    /// `states` start at full quality.
    pub fn tick(
        &self,
        net_capacity: u64,
        loads: &[ServerLoad],
        states: &mut BTreeMap<u32, ControlState>,
    ) -> Result<TickOutcome, FairShareError> {
        let server_grants = self.server_grants(net_capacity, loads)?;
        let mut out = TickOutcome {
            server_grants,
            ..Default::default()
        };
        for grant in &out.server_grants {
            let load = loads
                .iter()
                .find(|l| l.server_id == grant.server_id)
                .expect("grant for a listed server");
            let weights: Vec<(u32, u64)> = load
                .sessions
                .iter()
                .map(|s| (s.session, u64::from(s.qos)))
                .collect();
            let split = largest_remainder(grant.granted_capacity, &weights);
            for (sess, g) in load.sessions.iter().zip(split) {
                out.session_grants.insert(sess.session, g);
                let state = states
                    .entry(sess.session)
                    .or_insert_with(|| ControlState::new(self.full));
                match self.target(g, sess.qos) {
                    Ok(target) => {
                        if self.advance(state, &target) {
                            out.changed.push(sess.session);
                        }
                    }
                    Err(FairShareError::Infeasible { .. }) => out.infeasible.push(sess.session),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(out)
    }
}
