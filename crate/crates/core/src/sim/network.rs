use rand::seq::index::sample;
use rand::Rng;

use super::config::Strategy;
use crate::stream::PatternLabel;

/// What happened to one offered frame in a network tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Delivered,
    /// Dropped because the tick was over capacity.
    Overflow,
    /// Survived overflow but lost at random.
    Random,
}

/// One network tick over the frames offered by the servers.
///
/// Over capacity, Baseline drops uniformly among all frames. The other
/// strategies drop O frames first, then H, and M only when nothing else is
/// left. Every survivor is then lost with probability `p_loss`.
pub fn network_step<R: Rng + ?Sized>(
    offered: &[PatternLabel],
    capacity: usize,
    p_loss: f64,
    strategy: Strategy,
    rng: &mut R,
) -> Vec<Fate> {
    let mut fate = vec![Fate::Delivered; offered.len()];
    if offered.len() > capacity {
        let excess = offered.len() - capacity;
        if strategy == Strategy::Baseline {
            for i in sample(rng, offered.len(), excess).iter() {
                fate[i] = Fate::Overflow;
            }
        } else {
            let mut left = excess;
            for label in [PatternLabel::O, PatternLabel::H, PatternLabel::M] {
                if left == 0 {
                    break;
                }
                let group: Vec<usize> = (0..offered.len()).filter(|&i| offered[i] == label).collect();
                let take = left.min(group.len());
                for j in sample(rng, group.len(), take).iter() {
                    fate[group[j]] = Fate::Overflow;
                }
                left -= take;
            }
        }
    }
    if p_loss > 0.0 {
        for f in fate.iter_mut().filter(|f| **f == Fate::Delivered) {
            if rng.gen::<f64>() < p_loss {
                *f = Fate::Random;
            }
        }
    }
    fate
}
