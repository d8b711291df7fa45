//! CSV ingestion and export for zones, ports, trips and travel matrices.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::domain::{PortSite, TravelTimeProvider, TripRequest, TripStatus, Zone};
use crate::{Error, Result};

fn open_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    malformed(path, line, err.to_string())
}

fn require_headers(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    for name in expected {
        if !headers.iter().any(|h| h == *name) {
            return Err(malformed(path, 1, format!("missing column `{name}`")));
        }
    }
    Ok(())
}

/// Reads rows of a headed CSV, yielding each record with its line number.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, expected: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut reader = open_reader(path, true)?;
    require_headers(path, &mut reader, expected)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(path, line, e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ZoneRow {
    zone_id: usize,
    x_miles: f64,
    y_miles: f64,
}

pub fn load_zones(path: &Path) -> Result<Vec<Zone>> {
    let mut rows = read_rows::<ZoneRow>(path, &["zone_id", "x_miles", "y_miles"])?;
    rows.sort_by_key(|(_, r)| r.zone_id);
    let mut zones = Vec::with_capacity(rows.len());
    for (i, (line, r)) in rows.into_iter().enumerate() {
        if r.zone_id != i {
            return Err(malformed(
                path,
                line,
                format!("zone ids must be unique and contiguous from 0 (expected {i}, got {})", r.zone_id),
            ));
        }
        if !r.x_miles.is_finite() || !r.y_miles.is_finite() {
            return Err(malformed(path, line, "centroid must be finite"));
        }
        zones.push(Zone {
            id: r.zone_id,
            x_miles: r.x_miles,
            y_miles: r.y_miles,
        });
    }
    Ok(zones)
}

pub fn load_ports(path: &Path, n_zones: usize) -> Result<Vec<PortSite>> {
    let mut rows = read_rows::<PortSite>(path, &["port_id", "zone_id"])?;
    rows.sort_by_key(|(_, r)| r.port_id);
    let mut ports = Vec::with_capacity(rows.len());
    for (i, (line, r)) in rows.into_iter().enumerate() {
        if r.port_id != i {
            return Err(malformed(
                path,
                line,
                format!("port ids must be unique and contiguous from 0 (expected {i}, got {})", r.port_id),
            ));
        }
        if r.zone_id >= n_zones {
            return Err(Error::UnknownZone {
                zone: r.zone_id,
                n_zones,
            });
        }
        ports.push(r);
    }
    Ok(ports)
}

#[derive(Deserialize)]
struct TripRow {
    #[allow(dead_code)]
    id: u64,
    request_min: f64,
    origin_zone: usize,
    dest_zone: usize,
    distance_miles: f64,
}

/// Loads a trip file, keeping each row independently with probability
/// `sample_fraction`. The result is sorted by request tick and re-numbered
/// from 0. One uniform draw is consumed per row whatever the fraction, so
/// the same seed always keeps the same rows.
pub fn load_trips<R: Rng + ?Sized>(
    path: &Path,
    n_zones: usize,
    sample_fraction: f64,
    rng: &mut R,
) -> Result<Vec<TripRequest>> {
    let rows = read_rows::<TripRow>(
        path,
        &["id", "request_min", "origin_zone", "dest_zone", "distance_miles"],
    )?;
    let mut trips = Vec::new();
    for (line, r) in rows {
        if !(r.request_min >= 0.0) || !r.request_min.is_finite() {
            return Err(malformed(path, line, "request_min must be a finite value >= 0"));
        }
        if !(r.distance_miles > 0.0) || !r.distance_miles.is_finite() {
            return Err(malformed(path, line, "distance_miles must be > 0"));
        }
        for z in [r.origin_zone, r.dest_zone] {
            if z >= n_zones {
                return Err(Error::UnknownZone { zone: z, n_zones });
            }
        }
        let keep = rng.random::<f64>() < sample_fraction;
        if keep {
            trips.push(TripRequest {
                id: 0,
                request_tick: r.request_min.floor() as u64,
                origin: r.origin_zone,
                destination: r.dest_zone,
                distance_miles: r.distance_miles,
                status: TripStatus::Open,
            });
        }
    }
    // stable: rows with equal ticks keep file order
    trips.sort_by_key(|t| t.request_tick);
    for (i, t) in trips.iter_mut().enumerate() {
        t.id = i;
    }
    Ok(trips)
}

/// Square travel-time matrix without a header. Empty cells are missing entries.
pub fn load_travel_matrix(path: &Path, n_zones: usize) -> Result<TravelTimeProvider> {
    let mut reader = open_reader(path, false)?;
    let mut minutes = Vec::with_capacity(n_zones * n_zones);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != n_zones {
            return Err(malformed(
                path,
                line,
                format!("expected {n_zones} columns, got {}", record.len()),
            ));
        }
        for cell in record.iter() {
            if cell.is_empty() {
                minutes.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| malformed(path, line, format!("`{cell}` is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(malformed(path, line, format!("travel time {v} must be finite and >= 0")));
            }
            minutes.push(Some(v));
        }
        rows += 1;
    }
    if rows != n_zones {
        return Err(malformed(
            path,
            rows as u64,
            format!("expected {n_zones} rows, got {rows}"),
        ));
    }
    Ok(TravelTimeProvider::Matrix { n: n_zones, minutes })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_zones_csv(path: &Path, zones: &[Zone]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("zone_id,x_miles,y_miles\n");
    for z in zones {
        body.push_str(&format!("{},{},{}\n", z.id, z.x_miles, z.y_miles));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_ports_csv(path: &Path, ports: &[PortSite]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("port_id,zone_id\n");
    for p in ports {
        body.push_str(&format!("{},{}\n", p.port_id, p.zone_id));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_trips_csv(path: &Path, trips: &[TripRequest]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("id,request_min,origin_zone,dest_zone,distance_miles\n");
    for t in trips {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            t.id, t.request_tick, t.origin, t.destination, t.distance_miles
        ));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}
