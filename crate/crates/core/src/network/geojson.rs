//! GeoJSON FeatureCollection of LineStrings with `class`, `speed_limit_kmh`
//! and `oneway` properties.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::LocalProjection;

use super::{RoadNetwork, RoadSpec};

#[derive(Deserialize)]
struct Collection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Value>,
}

#[derive(Deserialize)]
struct Feature {
    geometry: Geometry,
    properties: Properties,
}

#[derive(Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<[f64; 2]>,
}

#[derive(Deserialize, Serialize)]
struct Properties {
    class: String,
    speed_limit_kmh: f64,
    #[serde(default)]
    oneway: bool,
}

pub fn load_network(path: impl AsRef<FsPath>) -> Result<RoadNetwork> {
    read_network(BufReader::new(
        File::open(path.as_ref()).map_err(Error::file(&path))?,
    ))
}

/// Parses a network; planar coordinates are centered on the mean of all vertices.
pub fn read_network(reader: impl Read) -> Result<RoadNetwork> {
    let collection: Collection = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if collection.kind != "FeatureCollection" {
        return Err(Error::Parse {
            location: "root".into(),
            message: format!("expected a FeatureCollection, found {:?}", collection.kind),
        });
    }
    let mut features = Vec::with_capacity(collection.features.len());
    for (i, value) in collection.features.into_iter().enumerate() {
        let f: Feature = serde_json::from_value(value).map_err(|e| Error::Parse {
            location: format!("feature {i}"),
            message: e.to_string(),
        })?;
        if f.geometry.kind != "LineString" {
            return Err(Error::Parse {
                location: format!("feature {i}"),
                message: format!("expected a LineString, found {:?}", f.geometry.kind),
            });
        }
        if !(f.properties.speed_limit_kmh > 0.0) {
            return Err(Error::Validation(format!(
                "feature {i}: speed_limit_kmh must be positive, got {}",
                f.properties.speed_limit_kmh
            )));
        }
        features.push(f);
    }
    let projection =
        LocalProjection::centered_on(features.iter().flat_map(|f| f.geometry.coordinates.iter()))
            .unwrap_or(LocalProjection::new(0.0, 0.0));
    let roads = features
        .into_iter()
        .map(|f| RoadSpec {
            class: f.properties.class,
            speed_limit: f.properties.speed_limit_kmh / 3.6,
            oneway: f.properties.oneway,
            polyline: f
                .geometry
                .coordinates
                .iter()
                .map(|c| projection.to_planar(c[0], c[1]))
                .collect(),
        })
        .collect();
    RoadNetwork::from_roads(projection, roads)
}

pub fn save_network(net: &RoadNetwork, path: impl AsRef<FsPath>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref()).map_err(Error::file(&path))?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes one feature per road; a two-way pair is written once, as its
/// lower-id direction, so reloading reproduces the same segment ids.
pub fn write_network(net: &RoadNetwork, writer: impl Write) -> Result<()> {
    let proj = net.projection();
    let features: Vec<Value> = net
        .segments()
        .iter()
        .filter(|s| s.twin.is_none_or(|t| t > s.id))
        .map(|s| {
            let coords: Vec<[f64; 2]> = s.polyline.iter().map(|p| proj.to_lonlat(p)).collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": Properties {
                    class: net.class_name(s.class).to_string(),
                    speed_limit_kmh: s.speed_limit * 3.6,
                    oneway: s.twin.is_none(),
                },
            })
        })
        .collect();
    serde_json::to_writer(
        writer,
        &json!({ "type": "FeatureCollection", "features": features }),
    )?;
    Ok(())
}
