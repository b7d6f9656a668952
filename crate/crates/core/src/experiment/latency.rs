use std::time::Instant;

use crate::data::Features;
use crate::error::{invalid, Error, Result};
use crate::learners::Learner;

/// Median single-thread throughput (rows per second) of full predict
/// passes over `rows`, after one untimed warm-up pass.
pub fn measure_latency(model: &Learner, rows: &Features, repetitions: usize) -> Result<f64> {
    if repetitions < 3 {
        return Err(invalid("latency needs at least 3 repetitions"));
    }
    if rows.n_rows() == 0 {
        return Err(Error::InsufficientData("no rows to time".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        model.predict(rows)?;
        let mut rates = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            let out = model.predict(rows)?;
            let secs = start.elapsed().as_secs_f64().max(1e-9);
            std::hint::black_box(out);
            rates.push(rows.n_rows() as f64 / secs);
        }
        rates.sort_by(f64::total_cmp);
        Ok(median(&rates))
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `rows` cycled (or truncated) to exactly `n` rows.
pub fn cycle_rows(rows: &Features, n: usize) -> Features {
    let idx: Vec<usize> = (0..n).map(|i| i % rows.n_rows().max(1)).collect();
    rows.select_rows(&idx)
}
