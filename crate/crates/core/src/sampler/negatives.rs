use rand::seq::index::sample as sample_indices;

use super::{stream_rng, Seed};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::rdb::Timestamp;

/// Draws `count` distinct negative candidates of `target_type` per positive,
/// never the positive itself. With `cutoff_filter`, candidates must have a
/// timestamp at or before the seed's cutoff (untimed nodes always qualify).
/// Candidate lists are sorted ascending; positive `i` uses RNG stream `i`.
pub fn sample_negatives(
    g: &HeteroGraph,
    target_type: &str,
    positives: &[(Seed, u32)],
    count: usize,
    rng_seed: u64,
    cutoff_filter: bool,
) -> Result<Vec<Vec<u32>>> {
    let nt = g.node_type(target_type)?;
    let n = nt.count();
    // untimed nodes first, then by timestamp, so every eligible pool is a prefix
    let mut order: Vec<u32> = (0..n as u32).collect();
    let key = |i: u32| nt.timestamp(i as usize).map_or((0, Timestamp::MIN), |t| (1, t));
    order.sort_by_key(|&i| (key(i), i));
    let mut position = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        position[i as usize] = p;
    }

    positives
        .iter()
        .enumerate()
        .map(|(q, (seed, positive))| {
            if *positive as usize >= n {
                return Err(Error::UnknownNode {
                    kind: "positive node",
                    name: format!("{target_type}[{positive}]"),
                });
            }
            let pool = match (cutoff_filter, seed.cutoff) {
                (true, Some(c)) => order.partition_point(|&i| key(i) <= (1, c)),
                _ => n,
            };
            let pos = position[*positive as usize];
            let available = if pos < pool { pool - 1 } else { pool };
            if available < count {
                return Err(Error::Data(format!(
                    "seed `{}`: only {available} negative candidates for {count} requested",
                    seed.id
                )));
            }
            let mut rng = stream_rng(rng_seed, q as u64);
            let mut out: Vec<u32> = sample_indices(&mut rng, available, count)
                .into_iter()
                .map(|k| {
                    let k = if pos < pool && k >= pos { k + 1 } else { k };
                    order[k]
                })
                .collect();
            out.sort_unstable();
            Ok(out)
        })
        .collect()
}
