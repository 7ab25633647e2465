//! Independent reference computations shared by the integration tests.
//!
//! Everything here works on exact rationals (every `f64` is a dyadic
//! rational, so the conversion is lossless) or by plain enumeration, and
//! shares no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

pub type Q = BigRational;

pub fn exact(v: f64) -> Q {
    Q::from_float(v).expect("finite value")
}

pub fn exact_matrix(m: &DMatrix<f64>) -> Vec<Vec<Q>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| exact(m[(i, j)])).collect())
        .collect()
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().expect("representable")
}

/// Solves the square system `m x = b` by Gauss-Jordan elimination; `None` if singular.
pub fn solve_exact(mut m: Vec<Vec<Q>>, mut b: Vec<Vec<Q>>) -> Option<Vec<Vec<Q>>> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        b.swap(col, pivot);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &p;
        }
        for v in b[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            for c in 0..n {
                let d = &f * &m[col][c];
                m[r][c] -= d;
            }
            for c in 0..b[r].len() {
                let d = &f * &b[col][c];
                b[r][c] -= d;
            }
        }
    }
    Some(b)
}

/// Lowest index of the largest absolute value.
fn argmax_abs(v: &[Q]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Greedy residual recursion carried out in exact arithmetic.
pub fn deim_exact(u: &DMatrix<f64>, q: usize) -> Vec<usize> {
    let ue = exact_matrix(u);
    let x = u.nrows();
    let col = |l: usize| -> Vec<Q> { (0..x).map(|i| ue[i][l].clone()).collect() };
    let mut picks = vec![argmax_abs(&col(0))];
    for l in 1..q {
        let system: Vec<Vec<Q>> = picks
            .iter()
            .map(|&p| (0..l).map(|c| ue[p][c].clone()).collect())
            .collect();
        let rhs: Vec<Vec<Q>> = picks.iter().map(|&p| vec![ue[p][l].clone()]).collect();
        let c = solve_exact(system, rhs).expect("nonsingular interpolation system");
        let residual: Vec<Q> = (0..x)
            .map(|i| {
                let mut r = ue[i][l].clone();
                for (t, ct) in c.iter().enumerate() {
                    r -= &ue[i][t] * &ct[0];
                }
                r
            })
            .collect();
        picks.push(argmax_abs(&residual));
    }
    picks
}

/// `U (P^T U)^-1 P^T A` in exact arithmetic, rounded to `f64` at the end.
pub fn reconstruct_exact(u: &DMatrix<f64>, sensors: &[usize], a: &DMatrix<f64>) -> DMatrix<f64> {
    let q = sensors.len();
    let ue = exact_matrix(u);
    let ae = exact_matrix(a);
    let system: Vec<Vec<Q>> = sensors
        .iter()
        .map(|&p| (0..q).map(|c| ue[p][c].clone()).collect())
        .collect();
    let rhs: Vec<Vec<Q>> = sensors.iter().map(|&p| ae[p].clone()).collect();
    let coeffs = solve_exact(system, rhs).expect("nonsingular interpolation system");
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        let mut acc = Q::zero();
        for (l, row) in coeffs.iter().enumerate() {
            acc += &ue[i][l] * &row[j];
        }
        to_f64(&acc)
    })
}

fn ssd(group: &[f64]) -> Q {
    if group.is_empty() {
        return Q::zero();
    }
    let vals: Vec<Q> = group.iter().map(|&v| exact(v)).collect();
    let n = Q::from_integer(BigInt::from(vals.len()));
    let mean = vals.iter().fold(Q::zero(), |a, v| a + v) / &n;
    vals.iter().fold(Q::zero(), |a, v| {
        let d = v - &mean;
        a + &d * &d
    })
}

/// Minimum within-class SSD over every split of the sorted values into
/// `classes` non-empty contiguous runs. Equal values may be split apart.
pub fn jenks_contiguous_min(values: &[f64], classes: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut best: Option<Q> = None;
    let mut cuts = Vec::with_capacity(classes);
    fn walk(
        sorted: &[f64],
        start: usize,
        left: usize,
        cuts: &mut Vec<usize>,
        best: &mut Option<Q>,
    ) {
        let n = sorted.len();
        if left == 1 {
            let mut bounds = vec![0];
            bounds.extend_from_slice(cuts);
            bounds.push(n);
            let total = bounds
                .windows(2)
                .fold(Q::zero(), |a, w| a + ssd(&sorted[w[0]..w[1]]));
            if best.as_ref().is_none_or(|b| total < *b) {
                *best = Some(total);
            }
            return;
        }
        for c in start + 1..=n - (left - 1) {
            cuts.push(c);
            walk(sorted, c, left - 1, cuts, best);
            cuts.pop();
        }
    }
    assert!(classes >= 1 && classes <= n);
    walk(&sorted, 0, classes, &mut cuts, &mut best);
    to_f64(&best.expect("at least one split"))
}

/// Minimum within-class SSD over every assignment of values to `classes`
/// non-empty groups, contiguous or not. Exponential; keep `n` small.
pub fn jenks_any_partition_min(values: &[f64], classes: usize) -> f64 {
    let n = values.len();
    let total = classes.pow(n as u32);
    let mut best: Option<Q> = None;
    for code in 0..total {
        let mut groups = vec![Vec::new(); classes];
        let mut c = code;
        for &v in values {
            groups[c % classes].push(v);
            c /= classes;
        }
        if groups.iter().any(|g| g.is_empty()) {
            continue;
        }
        let s = groups.iter().fold(Q::zero(), |a, g| a + ssd(g));
        if best.as_ref().is_none_or(|b| s < *b) {
            best = Some(s);
        }
    }
    to_f64(&best.expect("some assignment"))
}

pub fn random_integer_matrix(x: usize, k: usize, max: u32, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(x, k, |_, _| rng.random_range(0..=max) as f64)
}

/// Product of random non-negative integer factors; rank `r` with probability one.
pub fn random_rank_r(x: usize, k: usize, r: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let left = random_integer_matrix(x, r, 20, rng);
    let right = DMatrix::from_fn(r, k, |_, _| rng.random_range(1..=9) as f64);
    left * right
}

/// `||A - U_q U_q^T A||_F` computed in exact arithmetic against the given `U_q`.
pub fn projection_residual(u: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let ue = exact_matrix(u);
    let ae = exact_matrix(a);
    let (x, k, q) = (a.nrows(), a.ncols(), u.ncols());
    let mut total = Q::zero();
    for j in 0..k {
        let coeff: Vec<Q> = (0..q)
            .map(|l| (0..x).fold(Q::zero(), |s, i| s + &ue[i][l] * &ae[i][j]))
            .collect();
        for i in 0..x {
            let p = (0..q).fold(Q::zero(), |s, l| s + &ue[i][l] * &coeff[l]);
            let d = &ae[i][j] - p;
            total += &d * &d;
        }
    }
    to_f64(&total).sqrt()
}

/// Best split of the sorted values into `classes` runs, cutting only
/// between distinct values. Returns the SSD and the breaks as
/// `[min, midpoints between runs, max]`; the first minimum found wins.
pub fn jenks_brute_breaks(values: &[f64], classes: usize) -> (f64, Vec<f64>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cut_points: Vec<usize> = (1..n).filter(|&c| sorted[c - 1] < sorted[c]).collect();
    assert!(classes >= 1 && classes - 1 <= cut_points.len());
    let mut best: Option<(Q, Vec<usize>)> = None;
    let mut chosen = Vec::new();
    fn walk(
        sorted: &[f64],
        cut_points: &[usize],
        from: usize,
        left: usize,
        chosen: &mut Vec<usize>,
        best: &mut Option<(Q, Vec<usize>)>,
    ) {
        if left == 0 {
            let mut bounds = vec![0];
            bounds.extend_from_slice(chosen);
            bounds.push(sorted.len());
            let total = bounds
                .windows(2)
                .fold(Q::zero(), |a, w| a + ssd(&sorted[w[0]..w[1]]));
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                *best = Some((total, chosen.clone()));
            }
            return;
        }
        for i in from..cut_points.len() {
            if cut_points.len() - i < left {
                break;
            }
            chosen.push(cut_points[i]);
            walk(sorted, cut_points, i + 1, left - 1, chosen, best);
            chosen.pop();
        }
    }
    walk(&sorted, &cut_points, 0, classes - 1, &mut chosen, &mut best);
    let (total, cuts) = best.expect("a split exists");
    let mut breaks = vec![sorted[0]];
    breaks.extend(cuts.iter().map(|&c| 0.5 * (sorted[c - 1] + sorted[c])));
    breaks.push(sorted[n - 1]);
    (to_f64(&total), breaks)
}
