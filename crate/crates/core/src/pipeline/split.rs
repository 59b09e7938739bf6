use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Minimum members per class for a stratified split.
pub const MIN_CLASS_SIZE: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified 80/10/10 split.
///
/// Global sizes are `floor(0.8 N)` train and `floor(0.1 N)` validation with
/// the remainder going to test. Each size is shared out across classes by
/// largest remainder. Within a class the members are Fisher–Yates shuffled
/// (class 0 first, one generator seeded with `seed`) and dealt out in
/// train/val/test order. Each returned list is sorted.
pub fn split(ds: &Dataset, seed: u64) -> Result<SplitIndices> {
    let n = ds.len();
    if n < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples to split, got {n}"
        )));
    }
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in ds.labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < MIN_CLASS_SIZE {
            return Err(Error::InvalidInput(format!(
                "class {c} has {} samples; stratified split needs {MIN_CLASS_SIZE}",
                m.len()
            )));
        }
    }
    let sizes = [members[0].len(), members[1].len()];
    let train_q = apportion(n * 8 / 10, &sizes, &sizes);
    let left = [sizes[0] - train_q[0], sizes[1] - train_q[1]];
    let val_q = apportion(n / 10, &sizes, &left);

    let mut rng = Rng::new(seed);
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..2 {
        let mut idx = members[c].clone();
        rng.shuffle(&mut idx);
        let (t, rest) = idx.split_at(train_q[c]);
        let (v, te) = rest.split_at(val_q[c]);
        out.train.extend_from_slice(t);
        out.val.extend_from_slice(v);
        out.test.extend_from_slice(te);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Largest-remainder allocation of `total` proportional to `weights`, never
/// exceeding `caps`. Ties on the remainder go to the lower class index.
pub(crate) fn apportion(total: usize, weights: &[usize; 2], caps: &[usize; 2]) -> [usize; 2] {
    let wsum: usize = weights.iter().sum();
    let mut alloc = [0usize; 2];
    let mut frac = [0usize; 2];
    for c in 0..2 {
        let exact = total * weights[c];
        alloc[c] = (exact / wsum).min(caps[c]);
        frac[c] = exact % wsum;
    }
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| frac[b].cmp(&frac[a]).then(a.cmp(&b)));
    let mut remaining = total.saturating_sub(alloc.iter().sum());
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining > 0 && alloc[c] < caps[c] {
                alloc[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}
