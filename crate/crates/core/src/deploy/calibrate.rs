//! Per-configuration normalization statistics from a calibration stream.

use ndarray::Array5;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::configspace::Configuration;
use crate::data::Dataset;
use crate::error::{A3dError, Result};
use crate::exec::map_indexed;
use crate::model::Model;
use crate::real::Real;
use crate::slimnet::{Ctx, Moments, StatEntry};

/// `batches` centre-window batches of `batch_size` clips from `data`, in a
/// seeded order that wraps around when the stream is longer than the data.
pub fn calibration_stream<T: Real>(data: &Dataset, frames: usize, batches: usize, batch_size: usize, seed: u64) -> Result<Vec<Array5<T>>> {
    if data.is_empty() || batches == 0 || batch_size == 0 {
        return Err(A3dError::Empty("calibration stream"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let idx = order.iter().copied().cycle();
    let idx: Vec<usize> = idx.take(batches * batch_size).collect();
    Ok(idx
        .chunks(batch_size)
        .map(|chunk| data.center_clips(chunk, frames).data.mapv(|v| T::of(v as f64)))
        .collect())
}

/// Aggregate mean and biased variance of every normalization layer's input
/// over `passes` passes of `stream`, with batch statistics used upstream.
pub fn calibration_entry<T: Real>(model: &Model<T>, c: &Configuration, stream: &[Array5<T>], passes: usize) -> Result<StatEntry> {
    if stream.is_empty() || passes == 0 {
        return Err(A3dError::Empty("calibration stream"));
    }
    let n = model.num_norms();
    let mut acc: Vec<Option<Moments>> = vec![None; n];
    let mut clips = 0u64;
    for _ in 0..passes {
        for batch in stream {
            let input = model.input_for(batch, c)?;
            let mut ctx = Ctx::calibrate(n);
            model.forward(&input, c, &mut ctx)?;
            for (a, m) in acc.iter_mut().zip(ctx.moments) {
                match (a.as_mut(), m) {
                    (Some(a), Some(m)) => a.merge(&m),
                    (None, m) => *a = m,
                    (Some(_), None) => {}
                }
            }
            clips += batch.dim().0 as u64;
        }
    }
    let layers = acc
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            m.map(|m| m.stats())
                .ok_or_else(|| A3dError::Invalid(format!("normalization layer {i} saw no input during calibration")))
        })
        .collect::<Result<_>>()?;
    Ok(StatEntry { layers, clips })
}

/// Calibrates `c` and stores the statistics; parameters are not modified.
pub fn calibrate_bn<T: Real>(model: &mut Model<T>, c: &Configuration, stream: &[Array5<T>], passes: usize) -> Result<()> {
    let entry = calibration_entry(model, c, stream, passes)?;
    model.stats.insert(c, entry);
    Ok(())
}

/// Calibrates every configuration in `configs`.
pub fn calibrate_grid<T: Real>(model: &mut Model<T>, configs: &[Configuration], stream: &[Array5<T>], passes: usize) -> Result<()> {
    let shared: &Model<T> = model;
    let entries = map_indexed(configs.len(), |i| calibration_entry(shared, &configs[i], stream, passes));
    for (c, e) in configs.iter().zip(entries) {
        model.stats.insert(c, e?);
    }
    Ok(())
}
