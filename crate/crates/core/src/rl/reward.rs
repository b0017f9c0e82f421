//! Per-reservation reward: the negated weighted cost plus penalties.

use num_traits::Signed;

use super::config::RewardParams;
use crate::exact::exact_to_f64;
use crate::objective::ReservationTerms;

/// Number of curriculum stages: o1, +o2, +o3, +o4, +penalties.
pub const STAGES: usize = 5;

/// `stage` counts the active terms, 1 ..= [`STAGES`]. `o1` is the movement
/// cost over all servers of the type at this slot.
pub fn reward(o1: f64, terms: &ReservationTerms, params: &RewardParams, stage: usize) -> f64 {
    let mut cost = params.w1 * o1;
    if stage >= 2 {
        cost += params.w2 * exact_to_f64(&terms.o2);
    }
    if stage >= 3 {
        cost += params.w3 * exact_to_f64(&terms.o3);
    }
    if stage >= 4 {
        cost += params.w4 * terms.o4 as f64;
    }
    if stage >= 5 {
        if terms.g2 < 0 {
            cost += params.p2 + params.p2_deficit * (-terms.g2) as f64;
        }
        cost += params.p3 * terms.g3.iter().filter(|s| s.is_negative()).count() as f64;
    }
    -cost
}
