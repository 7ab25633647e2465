//! Jenks natural breaks.
//!
//! Finds the partition of the sorted values into `classes` contiguous
//! groups with the least total within-class sum of squared deviations.
//! Equal values always share a class: the dynamic program runs over the
//! distinct values weighted by multiplicity. Optimal split points are
//! monotone in the right end of the last class, so every layer is filled by
//! divide and conquer in `O(n log n)`.
//!
//! Breaks are reported as `classes + 1` ascending values: the minimum,
//! the midpoints between adjacent classes, and the maximum. Class `c`
//! covers `[breaks[c], breaks[c + 1])`, the last class closed on top.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JenksBreaks {
    pub breaks: Vec<f64>,
    /// Total within-class sum of squared deviations of the partition.
    pub within_ssd: f64,
}

impl JenksBreaks {
    pub fn classes(&self) -> usize {
        self.breaks.len() - 1
    }

    /// Class of `value` and whether it had to be clamped into an end class.
    pub fn class_of(&self, value: f64) -> (usize, bool) {
        let k = self.classes();
        let lo = self.breaks[0];
        let hi = self.breaks[k];
        if value < lo {
            return (0, true);
        }
        if value > hi {
            return (k - 1, true);
        }
        // number of interior breaks at or below the value
        let interior = &self.breaks[1..k];
        (interior.partition_point(|&b| b <= value), false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classified {
    pub classes: Vec<usize>,
    pub clamped: usize,
}

pub fn classify(values: &[f64], breaks: &JenksBreaks) -> Classified {
    let mut clamped = 0;
    let classes = values
        .iter()
        .map(|&v| {
            let (c, out) = breaks.class_of(v);
            clamped += out as usize;
            c
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} values fell outside the break range and were clamped");
    }
    Classified { classes, clamped }
}

/// Distinct sorted values with multiplicities.
fn distinct(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, w)) if *last == v => *w += 1.0,
            _ => out.push((v, 1.0)),
        }
    }
    out
}

struct Prefix {
    w: Vec<f64>,
    s: Vec<f64>,
    ss: Vec<f64>,
}

impl Prefix {
    fn new(items: &[(f64, f64)]) -> Self {
        // shift by the median to limit cancellation
        let shift = items[items.len() / 2].0;
        let n = items.len();
        let (mut w, mut s, mut ss) = (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]);
        for (i, &(v, m)) in items.iter().enumerate() {
            let d = v - shift;
            w[i + 1] = w[i] + m;
            s[i + 1] = s[i] + m * d;
            ss[i + 1] = ss[i] + m * d * d;
        }
        Prefix { w, s, ss }
    }

    /// SSD of items `j..=i`.
    #[inline]
    fn cost(&self, j: usize, i: usize) -> f64 {
        let w = self.w[i + 1] - self.w[j];
        let s = self.s[i + 1] - self.s[j];
        let ss = self.ss[i + 1] - self.ss[j];
        (ss - s * s / w).max(0.0)
    }
}

pub fn jenks_breaks(values: &[f64], classes: usize) -> Result<JenksBreaks> {
    if values.is_empty() {
        return Err(Error::arg("cannot classify an empty value set"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("values must be finite"));
    }
    let items = distinct(values);
    let n = items.len();
    if classes == 0 || classes > n {
        return Err(Error::arg(format!(
            "{classes} classes requested for {n} distinct values"
        )));
    }
    let prefix = Prefix::new(&items);

    let mut prev: Vec<f64> = (0..n).map(|i| prefix.cost(0, i)).collect();
    // starts[c - 1][i]: first item of class c in the best c+1-class split of 0..=i
    let mut starts: Vec<Vec<u32>> = Vec::with_capacity(classes.saturating_sub(1));
    for c in 1..classes {
        let mut cur = vec![f64::INFINITY; n];
        let mut arg = vec![0u32; n];
        fill_layer(&prefix, &prev, &mut cur, &mut arg, c, n - 1, c, n - 1);
        starts.push(arg);
        prev = cur;
    }

    let mut bounds = vec![n; classes + 1];
    bounds[0] = 0;
    let mut end = n - 1;
    for c in (1..classes).rev() {
        let start = starts[c - 1][end] as usize;
        bounds[c] = start;
        end = start - 1;
    }

    let mut breaks = Vec::with_capacity(classes + 1);
    breaks.push(items[0].0);
    for &b in &bounds[1..classes] {
        breaks.push(0.5 * (items[b - 1].0 + items[b].0));
    }
    breaks.push(items[n - 1].0);

    let within_ssd = (0..classes)
        .map(|c| group_ssd(&items[bounds[c]..bounds[c + 1]]))
        .sum();
    Ok(JenksBreaks { breaks, within_ssd })
}

/// Fills `cur[lo..=hi]` for layer `c`, knowing optimal starts lie in `opt_lo..=opt_hi`.
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    prefix: &Prefix,
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [u32],
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    let mut stack = vec![(lo, hi, opt_lo, opt_hi)];
    while let Some((lo, hi, opt_lo, opt_hi)) = stack.pop() {
        if lo > hi {
            continue;
        }
        let mid = lo + (hi - lo) / 2;
        let mut best = f64::INFINITY;
        let mut best_j = opt_lo.max(1);
        for j in opt_lo.max(1)..=opt_hi.min(mid) {
            let v = prev[j - 1] + prefix.cost(j, mid);
            if v < best {
                best = v;
                best_j = j;
            }
        }
        cur[mid] = best;
        arg[mid] = best_j as u32;
        if mid > lo {
            stack.push((lo, mid - 1, opt_lo, best_j));
        }
        stack.push((mid + 1, hi, best_j, opt_hi));
    }
}

fn group_ssd(items: &[(f64, f64)]) -> f64 {
    let w: f64 = items.iter().map(|&(_, m)| m).sum();
    let mean = items.iter().map(|&(v, m)| v * m).sum::<f64>() / w;
    items
        .iter()
        .map(|&(v, m)| m * (v - mean) * (v - mean))
        .sum()
}
