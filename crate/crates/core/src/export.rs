//! GeoJSON and CSV writers for sensors and event reports.

use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::detection::RankedDay;
use crate::error::Result;
use crate::grid::GridSpec;
use crate::jenks::JenksBreaks;
use crate::sensors::SensorLocation;
use crate::temporal::TemporalSpec;

pub fn sensors_geojson(locations: &[SensorLocation]) -> Value {
    let features: Vec<Value> = locations
        .iter()
        .map(|s| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [s.longitude, s.latitude] },
                "properties": { "order": s.order, "cell_id": s.cell_id },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn sensors_csv(locations: &[SensorLocation]) -> String {
    let mut out = String::from("order,cell_id,longitude,latitude\n");
    for s in locations {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.order, s.cell_id, s.longitude, s.latitude
        ));
    }
    out
}

/// Cell polygons for one unit with `cell_id`, `event_index` and `jenks_class`.
pub fn event_index_geojson(
    grid: &GridSpec,
    cells: &[usize],
    event_index: &DMatrix<f64>,
    unit: usize,
    breaks: &JenksBreaks,
) -> Result<Value> {
    let mut features = Vec::with_capacity(cells.len());
    for &cell in cells {
        let value = event_index[(cell, unit)];
        let (class, _) = breaks.class_of(value);
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": [grid.cell_ring(cell)?] },
            "properties": { "cell_id": cell, "event_index": value, "jenks_class": class },
        }));
    }
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

pub fn daily_rmse_csv(temporal: &TemporalSpec, series: &[f64]) -> String {
    let mut out = String::from("unit,date,rmse\n");
    for (j, r) in series.iter().enumerate() {
        out.push_str(&format!("{j},{},{r}\n", temporal.label(j)));
    }
    out
}

pub fn ranked_days_csv(temporal: &TemporalSpec, ranked: &[RankedDay]) -> String {
    let mut out = String::from("rank,unit,date,rmse\n");
    for (n, d) in ranked.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            n + 1,
            d.unit,
            temporal.label(d.unit),
            d.rmse
        ));
    }
    out
}
