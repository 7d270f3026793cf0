use rayon::prelude::*;
use roughkit_core::density::{ShardJob, ShardRunner};
use roughkit_core::Result;

/// Runs Monte-Carlo shards on the rayon pool; results keep shard order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl ShardRunner for Parallel {
    fn run(&self, shards: usize, job: &ShardJob<'_>) -> Result<Vec<Vec<f64>>> {
        (0..shards).into_par_iter().map(job).collect()
    }
}
