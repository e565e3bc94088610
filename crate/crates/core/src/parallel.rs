//! Deterministic chunked map-reduce over Monte-Carlo paths.
//!
//! Paths are grouped into fixed chunks of [`CHUNK_SIZE`] consecutive indices.
//! Chunks run in parallel; their partial results are merged sequentially in
//! chunk order. Neither the chunking nor the merge order depends on the number
//! of worker threads, so results are bitwise reproducible across machines.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const CHUNK_SIZE: u64 = 1024;

/// `workers = None` uses the global pool (all available cores).
pub fn run_chunked<A, I, F, M>(n: u64, workers: Option<usize>, init: I, per_item: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, u64) -> Result<()> + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK_SIZE);
    let job = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for i in c * CHUNK_SIZE..n.min((c + 1) * CHUNK_SIZE) {
                    per_item(&mut acc, i)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<A>>>()
    };
    let parts = match workers {
        Some(0) => return Err(Error::InvalidArgument("workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(job)?,
        None => job()?,
    };
    let mut parts = parts.into_iter();
    let mut total = parts.next().unwrap_or_else(&init);
    for p in parts {
        merge(&mut total, p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sum::CompensatedSum;

    #[test]
    fn result_independent_of_worker_count() {
        let f = |w| {
            run_chunked(
                10_000,
                w,
                CompensatedSum::new,
                |acc: &mut CompensatedSum, i| {
                    acc.add(((i as f64) * 0.1).sin() / (1.0 + i as f64));
                    Ok(())
                },
                |a, b| a.merge(&b),
            )
            .unwrap()
            .value()
        };
        let one = f(Some(1));
        assert_eq!(one.to_bits(), f(Some(3)).to_bits());
        assert_eq!(one.to_bits(), f(None).to_bits());
    }

    #[test]
    fn errors_propagate() {
        let r = run_chunked(
            5000,
            Some(2),
            || (),
            |_, i| if i == 4321 { Err(Error::InvalidArgument("boom".into())) } else { Ok(()) },
            |_, _| {},
        );
        assert!(r.is_err());
        assert!(run_chunked(1, Some(0), || (), |_, _| Ok(()), |_, _| {}).is_err());
    }
}
