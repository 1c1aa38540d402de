//! Per-path Doppler shift from the path-length rate between two snapshots.

use std::collections::HashMap;

use super::{ChannelRealization, Signature};
use crate::SPEED_OF_LIGHT;

/// Set `doppler_hz = -(f/c) dL/dt` on every path of `r0` whose signature
/// also appears in `r1`, taken `dt` seconds later. Unmatched paths keep
/// zero. Returns the number of matched paths.
pub fn doppler_annotate(r0: &mut ChannelRealization, r1: &ChannelRealization, dt: f64) -> usize {
    if !(dt.abs() > 0.0) {
        return 0;
    }
    let later: HashMap<Signature, f64> = r1.paths.iter().map(|p| (p.signature(), p.path_length)).collect();
    let scale = -r0.freq_hz / SPEED_OF_LIGHT / dt;
    let mut n = 0;
    for p in &mut r0.paths {
        if let Some(l1) = later.get(&p.signature()) {
            p.doppler_hz = scale * (l1 - p.path_length);
            n += 1;
        }
    }
    n
}
