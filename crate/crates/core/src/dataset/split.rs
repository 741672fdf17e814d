use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{manifest_bytes, task_counts, write_atomic, DatasetError, ManifestHeader, TripletRecord};
use crate::task::Task;

/// Largest-remainder allocation of `n` items over `ratios`.
fn allocate(n: usize, ratios: &[f64]) -> Vec<usize> {
    let shares: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).filter(|&i| ratios[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Stratified split: each task's records are shuffled under `seed` and cut
/// by `ratios`. Ratios must be non-negative and sum to 1; a ratio of zero
/// yields an empty split.
pub fn split_records(
    records: &[TripletRecord],
    ratios: &[(String, f64)],
    seed: u64,
) -> Result<BTreeMap<String, Vec<TripletRecord>>, DatasetError> {
    if ratios.is_empty() {
        return Err(DatasetError::Split("no splits requested".into()));
    }
    let values: Vec<f64> = ratios.iter().map(|(_, r)| *r).collect();
    if values.iter().any(|r| !(*r >= 0.0 && r.is_finite())) || (values.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Split(format!("ratios {values:?} must be non-negative and sum to 1")));
    }
    let mut names: Vec<&str> = ratios.iter().map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(DatasetError::Split("split names must be distinct".into()));
    }
    let positive = values.iter().filter(|r| **r > 0.0).count();

    let mut out: BTreeMap<String, Vec<TripletRecord>> =
        ratios.iter().map(|(n, _)| (n.clone(), Vec::new())).collect();
    for (ti, task) in Task::ALL.iter().enumerate() {
        let mut group: Vec<&TripletRecord> = records.iter().filter(|r| r.task == *task).collect();
        if group.is_empty() {
            continue;
        }
        if group.len() < positive {
            return Err(DatasetError::Split(format!(
                "{task} has {} records, fewer than the {positive} splits requested",
                group.len()
            )));
        }
        group.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ti as u64);
        group.shuffle(&mut rng);
        let mut rest = group.as_slice();
        for ((name, _), n) in ratios.iter().zip(allocate(rest.len(), &values)) {
            let (take, tail) = rest.split_at(n);
            out.get_mut(name).expect("present").extend(take.iter().map(|r| (*r).clone()));
            rest = tail;
        }
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
    }
    Ok(out)
}

/// Writes `<root>/<name>.jsonl` with the parent header adjusted to the subset.
pub fn write_split(
    root: impl AsRef<Path>,
    name: &str,
    parent: &ManifestHeader,
    records: &[TripletRecord],
) -> Result<PathBuf, DatasetError> {
    let header = ManifestHeader {
        task_counts: task_counts(records),
        record_count: records.len(),
        ..parent.clone()
    };
    let path = root.as_ref().join(format!("{name}.jsonl"));
    write_atomic(&path, &manifest_bytes(&header, records))?;
    Ok(path)
}
