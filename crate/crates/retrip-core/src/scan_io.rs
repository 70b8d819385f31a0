//! Organized point-cloud I/O with a reflectivity channel.
//!
//! A scan is an ordered list of `(x, y, z, r)` samples plus a ring id per
//! point. Within a ring, point order is azimuthal scan order, which is what
//! gives "consecutive points" a meaning for the relative-reflectivity test.
//!
//! Two file formats are supported:
//!
//! * organized-binary: header `{magic "RTRP", version u32, point_count u32,
//!   ring_count u32}` (little-endian), then per-point records
//!   `{f32 x, f32 y, f32 z, f32 r, u16 ring}`.
//! * organized-text: header line `rtrp v1 <count> <rings>`, then one
//!   whitespace-separated `x y z r ring` record per line.
//!
//! Coordinates are kept as `f64` in memory for downstream geometry, but the
//! binary format stores `f32`. Every cloud produced by this module or by the
//! synthetic generator has exactly f32-representable fields, so the binary
//! round-trip is bit-exact for them.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

/// Magic bytes opening every binary scan file.
pub const SCAN_MAGIC: [u8; 4] = *b"RTRP";
/// Binary scan format version.
pub const SCAN_VERSION: u32 = 1;
/// Bytes per binary point record: 4 × f32 + u16.
const RECORD_BYTES: usize = 18;
/// Bytes in the binary header.
const HEADER_BYTES: u64 = 16;

#[derive(Debug, Error)]
pub enum ScanIoError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("empty point cloud")]
    EmptyCloud,
}

impl ScanIoError {
    fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        ScanIoError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

/// One LiDAR return: sensor-frame position in meters plus reflectivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Reflectivity, dimensionless, non-negative (sensors report [0, 255]).
    pub r: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, r: f64) -> Self {
        Point { x, y, z, r }
    }

    /// Builds a point whose fields are exactly representable in the binary
    /// (f32) wire format.
    pub fn quantized(x: f64, y: f64, z: f64, r: f64) -> Self {
        Point {
            x: x as f32 as f64,
            y: y as f32 as f64,
            z: z as f32 as f64,
            r: r as f32 as f64,
        }
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(format!(
                "non-finite coordinate ({}, {}, {})",
                self.x, self.y, self.z
            ));
        }
        if !self.r.is_finite() {
            return Err(format!("non-finite reflectivity {}", self.r));
        }
        if self.r < 0.0 {
            return Err(format!("negative reflectivity {}", self.r));
        }
        Ok(())
    }
}

/// An organized scan: points in scan order, one ring id per point.
///
/// Immutable after construction; ring membership tables are precomputed so
/// ring-local neighborhoods are O(1) to address.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    ring_of: Vec<u16>,
    ring_count: u16,
    frame_id: u64,
    // Derived: point indices per ring, in scan order.
    ring_members: Vec<Vec<u32>>,
    // Derived: position of each point within its ring.
    ring_pos: Vec<u32>,
}

impl PointCloud {
    /// Builds a cloud, validating invariants: matching lengths, finite
    /// coordinates, non-negative reflectivity, ring ids below `ring_count`.
    /// Empty rings are allowed (a pose can miss everything on a ring).
    pub fn new(
        points: Vec<Point>,
        ring_of: Vec<u16>,
        ring_count: u16,
        frame_id: u64,
    ) -> Result<Self, ScanIoError> {
        if points.len() != ring_of.len() {
            return Err(ScanIoError::InvalidCloud(format!(
                "{} points but {} ring ids",
                points.len(),
                ring_of.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            p.validate()
                .map_err(|e| ScanIoError::InvalidCloud(format!("point {i}: {e}")))?;
        }
        for (i, &ring) in ring_of.iter().enumerate() {
            if ring >= ring_count {
                return Err(ScanIoError::InvalidCloud(format!(
                    "point {i} has ring {ring} but ring_count is {ring_count}"
                )));
            }
        }
        let mut ring_members = vec![Vec::new(); ring_count as usize];
        let mut ring_pos = vec![0u32; points.len()];
        for (i, &ring) in ring_of.iter().enumerate() {
            let members = &mut ring_members[ring as usize];
            ring_pos[i] = members.len() as u32;
            members.push(i as u32);
        }
        Ok(PointCloud {
            points,
            ring_of,
            ring_count,
            frame_id,
            ring_members,
            ring_pos,
        })
    }

    pub fn empty(ring_count: u16, frame_id: u64) -> Self {
        PointCloud::new(Vec::new(), Vec::new(), ring_count, frame_id)
            .expect("empty cloud is always valid")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &Point {
        &self.points[index]
    }

    pub fn ring_of(&self, index: usize) -> u16 {
        self.ring_of[index]
    }

    pub fn ring_count(&self) -> u16 {
        self.ring_count
    }

    /// Point indices belonging to `ring`, in azimuthal scan order.
    pub fn ring_members(&self, ring: u16) -> &[u32] {
        &self.ring_members[ring as usize]
    }

    /// Position of point `index` within its own ring.
    pub fn ring_position(&self, index: usize) -> u32 {
        self.ring_pos[index]
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn with_frame_id(mut self, frame_id: u64) -> Self {
        self.frame_id = frame_id;
        self
    }
}

/// Population mean / standard deviation of a scan's reflectivity channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectivityStats {
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

/// Population statistics (divisor `N`, no Bessel correction) of the
/// reflectivity channel, computed with a two-pass sweep.
pub fn reflectivity_stats(cloud: &PointCloud) -> Result<ReflectivityStats, ScanIoError> {
    if cloud.is_empty() {
        return Err(ScanIoError::EmptyCloud);
    }
    let n = cloud.len() as f64;
    let mean = cloud.points().iter().map(|p| p.r).sum::<f64>() / n;
    let var = cloud
        .points()
        .iter()
        .map(|p| {
            let d = p.r - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(ReflectivityStats {
        mean,
        stddev: var.sqrt(),
        count: cloud.len(),
    })
}

/// On-disk scan encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFormat {
    OrganizedBinary,
    OrganizedText,
}

impl FromStr for ScanFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" | "organized-binary" => Ok(ScanFormat::OrganizedBinary),
            "text" | "organized-text" => Ok(ScanFormat::OrganizedText),
            other => Err(format!("unknown scan format '{other}'")),
        }
    }
}

impl fmt::Display for ScanFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanFormat::OrganizedBinary => write!(f, "organized-binary"),
            ScanFormat::OrganizedText => write!(f, "organized-text"),
        }
    }
}

/// Guesses the format from the file extension: `.txt` → text, else binary.
pub fn format_for_path(path: &Path) -> ScanFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("txt") | Some("text") => ScanFormat::OrganizedText,
        _ => ScanFormat::OrganizedBinary,
    }
}

pub fn load_scan(path: impl AsRef<Path>, format: ScanFormat) -> Result<PointCloud, ScanIoError> {
    let file = File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    read_scan(&mut reader, format)
}

pub fn save_scan(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: ScanFormat,
) -> Result<(), ScanIoError> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    write_scan(cloud, &mut writer, format)?;
    writer.flush()?;
    Ok(())
}

pub fn read_scan<R: BufRead>(
    reader: &mut R,
    format: ScanFormat,
) -> Result<PointCloud, ScanIoError> {
    match format {
        ScanFormat::OrganizedBinary => read_binary(reader),
        ScanFormat::OrganizedText => read_text(reader),
    }
}

pub fn write_scan<W: Write>(
    cloud: &PointCloud,
    writer: &mut W,
    format: ScanFormat,
) -> Result<(), ScanIoError> {
    match format {
        ScanFormat::OrganizedBinary => write_binary(cloud, writer),
        ScanFormat::OrganizedText => write_text(cloud, writer),
    }
}

fn read_binary<R: Read>(reader: &mut R) -> Result<PointCloud, ScanIoError> {
    let mut header = [0u8; HEADER_BYTES as usize];
    reader
        .read_exact(&mut header)
        .map_err(|_| ScanIoError::parse("byte 0", "truncated or missing header"))?;
    if header[0..4] != SCAN_MAGIC {
        return Err(ScanIoError::parse("byte 0", "bad magic, expected \"RTRP\""));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != SCAN_VERSION {
        return Err(ScanIoError::parse(
            "byte 4",
            format!("unsupported version {version}, expected {SCAN_VERSION}"),
        ));
    }
    let count = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let ring_count_raw = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let ring_count = u16::try_from(ring_count_raw).map_err(|_| {
        ScanIoError::parse(
            "byte 12",
            format!("ring count {ring_count_raw} exceeds u16"),
        )
    })?;

    let mut points = Vec::with_capacity(count.min(1 << 20));
    let mut rings = Vec::with_capacity(count.min(1 << 20));
    let mut record = [0u8; RECORD_BYTES];
    for n in 1..=count {
        let offset = HEADER_BYTES + (n as u64 - 1) * RECORD_BYTES as u64;
        reader.read_exact(&mut record).map_err(|_| {
            ScanIoError::parse(
                format!("record {n} (byte {offset})"),
                format!("truncated record, expected {count} records"),
            )
        })?;
        let x = f32::from_le_bytes(record[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(record[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(record[8..12].try_into().unwrap()) as f64;
        let r = f32::from_le_bytes(record[12..16].try_into().unwrap()) as f64;
        let ring = u16::from_le_bytes(record[16..18].try_into().unwrap());
        let point = Point::new(x, y, z, r);
        point
            .validate()
            .map_err(|e| ScanIoError::parse(format!("record {n} (byte {offset})"), e))?;
        if ring >= ring_count {
            return Err(ScanIoError::parse(
                format!("record {n} (byte {offset})"),
                format!("ring {ring} out of range, ring count is {ring_count}"),
            ));
        }
        points.push(point);
        rings.push(ring);
    }
    PointCloud::new(points, rings, ring_count, 0)
}

fn write_binary<W: Write>(cloud: &PointCloud, writer: &mut W) -> Result<(), ScanIoError> {
    writer.write_all(&SCAN_MAGIC)?;
    writer.write_all(&SCAN_VERSION.to_le_bytes())?;
    writer.write_all(&(cloud.len() as u32).to_le_bytes())?;
    writer.write_all(&(cloud.ring_count() as u32).to_le_bytes())?;
    for (i, p) in cloud.points().iter().enumerate() {
        writer.write_all(&(p.x as f32).to_le_bytes())?;
        writer.write_all(&(p.y as f32).to_le_bytes())?;
        writer.write_all(&(p.z as f32).to_le_bytes())?;
        writer.write_all(&(p.r as f32).to_le_bytes())?;
        writer.write_all(&cloud.ring_of(i).to_le_bytes())?;
    }
    Ok(())
}

fn read_text<R: BufRead>(reader: &mut R) -> Result<PointCloud, ScanIoError> {
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "rtrp" || fields[1] != "v1" {
        return Err(ScanIoError::parse(
            "line 1",
            "bad header, expected 'rtrp v1 <count> <rings>'",
        ));
    }
    let count: usize = fields[2]
        .parse()
        .map_err(|_| ScanIoError::parse("line 1", format!("bad point count '{}'", fields[2])))?;
    let ring_count: u16 = fields[3]
        .parse()
        .map_err(|_| ScanIoError::parse("line 1", format!("bad ring count '{}'", fields[3])))?;

    let mut points = Vec::with_capacity(count.min(1 << 20));
    let mut rings = Vec::with_capacity(count.min(1 << 20));
    let mut line = String::new();
    let mut line_no = 1u64;
    while points.len() < count {
        line.clear();
        let read = reader.read_line(&mut line)?;
        line_no += 1;
        if read == 0 {
            return Err(ScanIoError::parse(
                format!("line {line_no}"),
                format!(
                    "unexpected end of file, read {} of {count} records",
                    points.len()
                ),
            ));
        }
        if line.trim().is_empty() {
            continue;
        }
        let n = points.len() + 1;
        let locus = || format!("record {n} (line {line_no})");
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(ScanIoError::parse(
                locus(),
                format!("expected 5 fields 'x y z r ring', got {}", fields.len()),
            ));
        }
        let parse_f64 = |s: &str, name: &str| -> Result<f64, ScanIoError> {
            s.parse::<f64>()
                .map_err(|_| ScanIoError::parse(locus(), format!("bad {name} '{s}'")))
        };
        let x = parse_f64(fields[0], "x")?;
        let y = parse_f64(fields[1], "y")?;
        let z = parse_f64(fields[2], "z")?;
        let r = parse_f64(fields[3], "r")?;
        let ring: u16 = fields[4]
            .parse()
            .map_err(|_| ScanIoError::parse(locus(), format!("bad ring '{}'", fields[4])))?;
        let point = Point::new(x, y, z, r);
        point
            .validate()
            .map_err(|e| ScanIoError::parse(locus(), e))?;
        if ring >= ring_count {
            return Err(ScanIoError::parse(
                locus(),
                format!("ring {ring} out of range, ring count is {ring_count}"),
            ));
        }
        points.push(point);
        rings.push(ring);
    }
    PointCloud::new(points, rings, ring_count, 0)
}

fn write_text<W: Write>(cloud: &PointCloud, writer: &mut W) -> Result<(), ScanIoError> {
    writeln!(writer, "rtrp v1 {} {}", cloud.len(), cloud.ring_count())?;
    for (i, p) in cloud.points().iter().enumerate() {
        writeln!(
            writer,
            "{} {} {} {} {}",
            p.x,
            p.y,
            p.z,
            p.r,
            cloud.ring_of(i)
        )?;
    }
    Ok(())
}
