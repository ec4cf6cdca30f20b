//! Proportional sharing of network capacity between video servers.
//!
//! Under congestion every server receives `RC_i × R` with
//! `R = N / ΣRC_i`, rounded by largest remainder so the grants add up to
//! exactly `N`. Grants are then mapped onto per-class (m,k) constraints,
//! shedding B frames before P frames and never I frames.

use std::collections::HashSet;

use num_rational::Ratio;
use thiserror::Error;

use crate::mk::ClassConstraintSet;
use crate::scalar::Scalar;
use crate::stream::ServerId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FairShareError {
    #[error("no capacity demands to share between")]
    NoDemands,
    #[error("network capacity must be positive")]
    ZeroCapacity,
    #[error("server {0} demands zero capacity")]
    ZeroDemand(ServerId),
    #[error("server {0} appears more than once")]
    DuplicateServer(ServerId),
    #[error("granted {granted} exceeds required {required}")]
    OverGrant { granted: u32, required: u32 },
    #[error("constraint set is not at full quality")]
    NotFull,
    #[error("grant of {granted} frames cannot carry the {mandatory} mandatory frames")]
    Infeasible { granted: u32, mandatory: u32 },
}

/// `RC_i`: frames per time unit server `server_id` wants to push.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityDemand {
    pub server_id: ServerId,
    pub required_capacity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub server_id: ServerId,
    pub granted_capacity: u64,
}

fn check(network_capacity: u64, demands: &[CapacityDemand]) -> Result<u64, FairShareError> {
    if demands.is_empty() {
        return Err(FairShareError::NoDemands);
    }
    if network_capacity == 0 {
        return Err(FairShareError::ZeroCapacity);
    }
    let mut seen = HashSet::with_capacity(demands.len());
    let mut total = 0u64;
    for d in demands {
        if d.required_capacity == 0 {
            return Err(FairShareError::ZeroDemand(d.server_id));
        }
        if !seen.insert(d.server_id) {
            return Err(FairShareError::DuplicateServer(d.server_id));
        }
        total += d.required_capacity;
    }
    Ok(total)
}

/// `min(1, N / ΣRC_i)` as an exact fraction.
pub fn congestion_ratio_exact(
    network_capacity: u64,
    demands: &[CapacityDemand],
) -> Result<Ratio<u64>, FairShareError> {
    let total = check(network_capacity, demands)?;
    Ok(Ratio::new(network_capacity.min(total), total))
}

/// `min(1, N / ΣRC_i)`.
pub fn congestion_ratio<T: Scalar>(
    network_capacity: u64,
    demands: &[CapacityDemand],
) -> Result<T, FairShareError> {
    let r = congestion_ratio_exact(network_capacity, demands)?;
    Ok(T::from_count(*r.numer()) / T::from_count(*r.denom()))
}

/// Largest-remainder apportionment of `network_capacity` over `demands`.
///
/// Without congestion every server gets its full demand. Otherwise grants
/// are `⌊N·RC_i / ΣRC⌋` plus one extra unit for the servers with the
/// largest fractional remainders (ties to the lower server id), so they sum
/// to exactly `N`. Output order follows input order.
pub fn apportion(
    network_capacity: u64,
    demands: &[CapacityDemand],
) -> Result<Vec<Allocation>, FairShareError> {
    check(network_capacity, demands)?;
    let keyed: Vec<(ServerId, u64)> = demands
        .iter()
        .map(|d| (d.server_id, d.required_capacity))
        .collect();
    Ok(demands
        .iter()
        .zip(largest_remainder(network_capacity, &keyed))
        .map(|(d, g)| Allocation {
            server_id: d.server_id,
            granted_capacity: g,
        })
        .collect())
}

/// Hamilton apportionment of `capacity` over `(key, weight)` pairs, ties on
/// the fractional part going to the smaller key. When `capacity` covers the
/// total weight each entry simply gets its weight. Zero total weight yields
/// all zeros.
pub fn largest_remainder<K: Ord + Copy>(capacity: u64, weights: &[(K, u64)]) -> Vec<u64> {
    let total: u64 = weights.iter().map(|w| w.1).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    if capacity >= total {
        return weights.iter().map(|w| w.1).collect();
    }
    let n = u128::from(capacity);
    let s = u128::from(total);
    let mut grants: Vec<u64> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u128, K, usize)> = Vec::with_capacity(weights.len());
    for (idx, &(key, w)) in weights.iter().enumerate() {
        let scaled = n * u128::from(w);
        grants.push((scaled / s) as u64);
        remainders.push((scaled % s, key, idx));
    }
    let leftover = capacity - grants.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, _, idx) in remainders.iter().take(leftover as usize) {
        grants[idx] += 1;
    }
    grants
}

/// Lowest `m` each degradable class may be pushed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassFloors {
    pub p: u32,
    pub b: u32,
}

impl Default for ClassFloors {
    fn default() -> Self {
        ClassFloors { p: 1, b: 0 }
    }
}

/// Scales a full-quality set down to `granted` out of `required` frames per
/// window. B frames are shed first down to `floors.b`, then P frames down to
/// `floors.p`; `m_i` is never touched. When the floors stop further shedding
/// the result keeps Σm above the grant.
pub fn allocation_to_constraints(
    full: &ClassConstraintSet,
    granted: u32,
    required: u32,
    floors: ClassFloors,
) -> Result<ClassConstraintSet, FairShareError> {
    if granted > required {
        return Err(FairShareError::OverGrant { granted, required });
    }
    if !full.is_full() {
        return Err(FairShareError::NotFull);
    }
    let mandatory = full.i().m();
    if granted < mandatory {
        return Err(FairShareError::Infeasible { granted, mandatory });
    }
    let total_k = full.total_k();
    let target = if required == 0 {
        total_k
    } else {
        (u64::from(granted) * u64::from(total_k) / u64::from(required)) as u32
    };
    let mut shed = total_k.saturating_sub(target);
    let b_room = full.b().k().saturating_sub(floors.b.min(full.b().k()));
    let shed_b = shed.min(b_room);
    shed -= shed_b;
    let p_room = full.p().k().saturating_sub(floors.p.min(full.p().k()));
    let shed_p = shed.min(p_room);
    Ok(full.with_m(full.p().k() - shed_p, full.b().k() - shed_b))
}
