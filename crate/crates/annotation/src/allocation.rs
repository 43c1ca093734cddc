use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{AnnotationError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub video_id: String,
    pub worker: String,
    pub scheme: String,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Visits every (worker, scheme) cell once such that any prefix is balanced
/// to within one in both workers and schemes.
fn balanced_order(workers: usize, schemes: usize) -> Vec<(usize, usize)> {
    let lcm = workers / gcd(workers, schemes) * schemes;
    (0..workers * schemes).map(|k| (k % workers, (k + k / lcm) % schemes)).collect()
}

/// Block-randomized allocation. Videos are shuffled, then cut into blocks of
/// `workers × schemes`; a complete block uses every pair once, and the final
/// partial block uses distinct pairs balanced across workers and schemes.
pub fn allocate(videos: &[String], workers: &[String], schemes: &[String], seed: u64) -> Result<Vec<Allocation>> {
    if videos.is_empty() || workers.is_empty() || schemes.is_empty() {
        return Err(AnnotationError::Invalid("need at least one video, worker and scheme".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&String> = videos.iter().collect();
    order.shuffle(&mut rng);
    let cells = balanced_order(workers.len(), schemes.len());
    let mut out = Vec::with_capacity(videos.len());
    for block in order.chunks(cells.len()) {
        let mut w_perm: Vec<usize> = (0..workers.len()).collect();
        let mut s_perm: Vec<usize> = (0..schemes.len()).collect();
        w_perm.shuffle(&mut rng);
        s_perm.shuffle(&mut rng);
        let mut pairs: Vec<(usize, usize)> = cells.iter().take(block.len()).map(|&(w, s)| (w_perm[w], s_perm[s])).collect();
        pairs.shuffle(&mut rng);
        for (video, (w, s)) in block.iter().zip(pairs) {
            out.push(Allocation {
                video_id: (*video).clone(),
                worker: workers[w].clone(),
                scheme: schemes[s].clone(),
            });
        }
    }
    Ok(out)
}
