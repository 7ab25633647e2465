//! Seeded synthetic activity fields with known rank and planted events.
//!
//! Spatial patterns are integer-valued and heavy-tailed (a few hot cells,
//! many quiet ones), temporal coefficients are small integers, so the
//! noise-free signal is an exact integer matrix of the requested rank.

use std::io::Write;

use chrono::{Duration, NaiveDateTime, TimeZone};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ingest::TripSchema;
use crate::matrix::ActivityMatrix;
use crate::temporal::TemporalSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_cells: usize,
    pub rank: usize,
    /// Amplitude of the hottest spatial patterns.
    pub signal_level: f64,
    /// Gaussian noise sigma as a fraction of the signal RMS.
    pub noise_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_cells: 200,
            rank: 3,
            signal_level: 100.0,
            noise_fraction: 0.02,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `x x r` integer spatial patterns, each a sparse set of hot cells over a floor.
pub fn spatial_patterns(spec: &SyntheticSpec, rng: &mut impl Rng) -> DMatrix<f64> {
    let gamma = Gamma::new(0.5, 1.0).expect("valid gamma");
    DMatrix::from_fn(spec.num_cells, spec.rank, |_, _| {
        (gamma.sample(rng) * spec.signal_level).round() + 1.0
    })
}

/// `r x k` integer temporal coefficients in `10..=15`.
pub fn temporal_coefficients(rank: usize, num_units: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rank, num_units, |_, _| rng.random_range(10..=15) as f64)
}

pub fn rms(m: &DMatrix<f64>) -> f64 {
    (m.norm_squared() / m.len() as f64).sqrt()
}

/// Signal plus Gaussian noise, rounded to non-negative integers.
pub fn add_noise(signal: &DMatrix<f64>, sigma: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    if sigma == 0.0 {
        return signal.map(|v| v.round().max(0.0));
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    signal.map(|v| (v + normal.sample(rng)).round().max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spike {
    pub cell: usize,
    pub unit: usize,
}

/// Adds `amount` (rounded) at each spike location.
pub fn plant_spikes(m: &mut DMatrix<f64>, spikes: &[Spike], amount: f64) {
    for s in spikes {
        m[(s.cell, s.unit)] += amount.round();
    }
}

/// `count` spikes on distinct units, at random cells outside `exclude`.
pub fn choose_spikes(
    num_cells: usize,
    num_units: usize,
    count: usize,
    exclude: &[usize],
    rng: &mut impl Rng,
) -> Vec<Spike> {
    let mut units: Vec<usize> = (0..num_units).collect();
    units.shuffle(rng);
    let cells: Vec<usize> = (0..num_cells).filter(|c| !exclude.contains(c)).collect();
    units
        .into_iter()
        .take(count)
        .map(|unit| Spike {
            cell: cells[rng.random_range(0..cells.len())],
            unit,
        })
        .collect()
}

/// One training/validation pair sharing spatial structure.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub patterns: DMatrix<f64>,
    pub train_signal: DMatrix<f64>,
    pub validation_signal: DMatrix<f64>,
    pub train: DMatrix<f64>,
    pub validation: DMatrix<f64>,
    pub sigma: f64,
}

pub fn scenario(
    spec: &SyntheticSpec,
    train_units: usize,
    validation_units: usize,
    rng: &mut impl Rng,
) -> Scenario {
    let patterns = spatial_patterns(spec, rng);
    let train_signal = &patterns * temporal_coefficients(spec.rank, train_units, rng);
    let validation_signal = &patterns * temporal_coefficients(spec.rank, validation_units, rng);
    let sigma = spec.noise_fraction * rms(&train_signal);
    let train = add_noise(&train_signal, sigma, rng);
    let validation = add_noise(&validation_signal, sigma, rng);
    Scenario {
        patterns,
        train_signal,
        validation_signal,
        train,
        validation,
        sigma,
    }
}

pub fn to_activity(
    m: &DMatrix<f64>,
    grid: GridSpec,
    temporal: TemporalSpec,
) -> Result<ActivityMatrix> {
    if m.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
        return Err(Error::arg("activity counts must be non-negative integers"));
    }
    let values = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)] as u64)
        .collect();
    ActivityMatrix::from_parts(values, grid, temporal, 0)
}

/// Writes trips whose pickups and dropoffs reproduce `matrix` exactly.
///
/// Points of each unit are shuffled and paired into trips. When a unit has
/// an odd count, the last trip's dropoff is placed west of the grid so it
/// is dropped on ingestion. Returns the number of trip rows written.
pub fn write_trip_csv(
    matrix: &ActivityMatrix,
    schema: &TripSchema,
    out: &mut impl Write,
    rng: &mut impl Rng,
) -> Result<u64> {
    let grid = &matrix.grid;
    let temporal = &matrix.temporal;
    if temporal.unit != crate::TimeUnit::Day {
        return Err(Error::arg("trip synthesis supports daily units only"));
    }
    writeln!(
        out,
        "{},{},{},{},{},{}",
        schema.pickup_datetime,
        schema.dropoff_datetime,
        schema.pickup_longitude,
        schema.pickup_latitude,
        schema.dropoff_longitude,
        schema.dropoff_latitude
    )?;
    let mut rows = 0;
    let mut cells: Vec<usize> = Vec::new();
    for j in 0..matrix.num_units() {
        cells.clear();
        for i in 0..matrix.num_cells() {
            cells.extend(std::iter::repeat_n(i, matrix.get(i, j) as usize));
        }
        cells.shuffle(rng);
        let day = temporal.start + Duration::days(j as i64);
        let midnight = day.and_hms_opt(0, 0, 0).expect("midnight");
        for pair in cells.chunks(2) {
            let pickup = point_in(grid, pair[0], rng);
            let dropoff = match pair.get(1) {
                Some(&c) => point_in(grid, c, rng),
                None => (
                    grid.min_longitude - 1.0,
                    grid.min_latitude + 0.5 * grid.cell_height_deg,
                ),
            };
            let t0 = local_time(temporal, midnight, rng)?;
            let t1 = local_time(temporal, midnight, rng)?;
            writeln!(
                out,
                "{},{},{:.7},{:.7},{:.7},{:.7}",
                t0.format(&schema.datetime_format),
                t1.format(&schema.datetime_format),
                pickup.0,
                pickup.1,
                dropoff.0,
                dropoff.1
            )?;
            rows += 1;
        }
    }
    Ok(rows)
}

fn point_in(grid: &GridSpec, cell: usize, rng: &mut impl Rng) -> (f64, f64) {
    let (lon, lat) = grid.centroid(cell).expect("cell in grid");
    (
        lon + (rng.random::<f64>() - 0.5) * 0.8 * grid.cell_width_deg,
        lat + (rng.random::<f64>() - 0.5) * 0.8 * grid.cell_height_deg,
    )
}

/// Random wall-clock time on the given local day that exists in the zone.
fn local_time(
    temporal: &TemporalSpec,
    midnight: NaiveDateTime,
    rng: &mut impl Rng,
) -> Result<NaiveDateTime> {
    for _ in 0..16 {
        let t = midnight + Duration::seconds(rng.random_range(0..86_400));
        if temporal.timezone.from_local_datetime(&t).single().is_some() {
            return Ok(t);
        }
    }
    Err(Error::arg("could not draw a valid local time"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_trip_records;
    use crate::matrix::build_activity_matrix;
    use chrono::NaiveDate;

    #[test]
    fn noise_free_signal_has_planted_rank() {
        let spec = SyntheticSpec::default();
        let s = scenario(
            &SyntheticSpec {
                noise_fraction: 0.0,
                ..spec
            },
            40,
            30,
            &mut rng(1),
        );
        assert_eq!(s.train, s.train_signal);
        let b = crate::decomposition::compute_basis_dense(&s.train, 10).unwrap();
        assert_eq!(b.rank(), 3);
        assert_eq!(s.validation.ncols(), 30);
    }

    #[test]
    fn spikes_avoid_excluded_cells_and_repeat_no_unit() {
        let spikes = choose_spikes(10, 20, 5, &[0, 1, 2, 3, 4, 5, 6, 7], &mut rng(3));
        assert_eq!(spikes.len(), 5);
        assert!(spikes.iter().all(|s| s.cell >= 8));
        let mut units: Vec<usize> = spikes.iter().map(|s| s.unit).collect();
        units.sort();
        units.dedup();
        assert_eq!(units.len(), 5);
    }

    #[test]
    fn trips_reproduce_the_matrix() {
        let grid = GridSpec::new(-74.0, 40.7, 0.001, 0.001, 4, 3).unwrap();
        let temporal = TemporalSpec::daily(
            NaiveDate::from_ymd_opt(2009, 3, 7).unwrap(),
            3,
            chrono_tz::America::New_York,
        )
        .unwrap();
        let m = DMatrix::from_fn(12, 3, |i, j| ((i * 5 + j * 3) % 7) as f64);
        let activity = to_activity(&m, grid, temporal).unwrap();
        let schema = TripSchema::default();
        let mut buf = Vec::new();
        write_trip_csv(&activity, &schema, &mut buf, &mut rng(9)).unwrap();
        let parsed = parse_trip_records(buf.as_slice(), &schema).unwrap();
        assert_eq!(parsed.stats.rejected_rows, 0);
        let rebuilt = build_activity_matrix(&parsed.points, &grid, &temporal).unwrap();
        assert_eq!(rebuilt.values(), activity.values());
    }
}
