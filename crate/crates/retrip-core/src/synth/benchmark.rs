//! Benchmark emission: scans plus ground-truth pose and marker manifests.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::render::{render_scan, ScanModel};
use super::scene::{MarkerInfo, Scene};
use super::trajectory::Trajectory;
use crate::scan_io::{save_scan, ScanFormat, ScanIoError};
use crate::verification::RigidTransform;

/// One row of `poses.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub frame: u64,
    pub position: Point3<f64>,
    /// Sensor-in-world orientation (x, y, z, w).
    pub quaternion: [f64; 4],
    pub arc_length: f64,
}

impl PoseRecord {
    pub fn from_pose(frame: u64, pose: &RigidTransform, arc_length: f64) -> Self {
        let rot = Rotation3::from_matrix_unchecked(pose.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        PoseRecord {
            frame,
            position: Point3::from(pose.translation),
            quaternion: [q.i, q.j, q.k, q.w],
            arc_length,
        }
    }

    pub fn to_pose(&self) -> RigidTransform {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(
            self.quaternion[3],
            self.quaternion[0],
            self.quaternion[1],
            self.quaternion[2],
        ));
        RigidTransform::new(q.to_rotation_matrix().into_inner(), self.position.coords)
    }
}

/// What `make_benchmark` wrote.
#[derive(Debug, Clone)]
pub struct BenchmarkManifest {
    pub dir: PathBuf,
    pub frames: usize,
    pub poses: Vec<PoseRecord>,
}

pub fn scan_file_name(frame: u64) -> String {
    format!("scan_{frame:06}.rtrp")
}

/// Lazily renders the trajectory: yields `(frame_id, pose, cloud)` per pose.
pub fn render_sequence<'a>(
    scene: &'a Scene,
    trajectory: &'a Trajectory,
    model: &'a ScanModel,
) -> impl Iterator<Item = (u64, RigidTransform, crate::scan_io::PointCloud)> + 'a {
    trajectory
        .samples()
        .iter()
        .enumerate()
        .map(move |(i, sample)| {
            let cloud = render_scan(scene, &sample.pose, model, i as u64);
            (i as u64, sample.pose, cloud)
        })
}

/// Renders every trajectory pose to `dir`: organized-binary scans plus
/// `poses.csv` and `markers.csv`. Fully deterministic under the scene seed.
pub fn make_benchmark(
    scene: &Scene,
    trajectory: &Trajectory,
    model: &ScanModel,
    dir: impl AsRef<Path>,
) -> Result<BenchmarkManifest, ScanIoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut poses = Vec::with_capacity(trajectory.len());
    for (i, sample) in trajectory.samples().iter().enumerate() {
        let cloud = render_scan(scene, &sample.pose, model, i as u64);
        save_scan(
            &cloud,
            dir.join(scan_file_name(i as u64)),
            ScanFormat::OrganizedBinary,
        )?;
        poses.push(PoseRecord::from_pose(
            i as u64,
            &sample.pose,
            sample.arc_length,
        ));
    }
    write_poses_csv(&poses, dir.join("poses.csv"))?;
    write_markers_csv(&scene.markers, dir.join("markers.csv"))?;
    Ok(BenchmarkManifest {
        dir: dir.to_path_buf(),
        frames: poses.len(),
        poses,
    })
}

pub fn write_poses_csv(poses: &[PoseRecord], path: impl AsRef<Path>) -> Result<(), ScanIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "frame,x,y,z,qx,qy,qz,qw,arclen")?;
    for p in poses {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.frame,
            p.position.x,
            p.position.y,
            p.position.z,
            p.quaternion[0],
            p.quaternion[1],
            p.quaternion[2],
            p.quaternion[3],
            p.arc_length
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_poses_csv(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>, ScanIoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(ScanIoError::Parse {
                location: format!("line {}", line_no + 1),
                message: format!("expected 9 fields in poses.csv, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, ScanIoError> {
            s.parse::<f64>().map_err(|_| ScanIoError::Parse {
                location: format!("line {}", line_no + 1),
                message: format!("bad number '{s}'"),
            })
        };
        out.push(PoseRecord {
            frame: fields[0].parse().map_err(|_| ScanIoError::Parse {
                location: format!("line {}", line_no + 1),
                message: format!("bad frame id '{}'", fields[0]),
            })?,
            position: Point3::new(parse(fields[1])?, parse(fields[2])?, parse(fields[3])?),
            quaternion: [
                parse(fields[4])?,
                parse(fields[5])?,
                parse(fields[6])?,
                parse(fields[7])?,
            ],
            arc_length: parse(fields[8])?,
        });
    }
    Ok(out)
}

pub fn write_markers_csv(
    markers: &[MarkerInfo],
    path: impl AsRef<Path>,
) -> Result<(), ScanIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "id,cx,cy,cz,width,height,nx,ny,nz,reflectivity_mean,reflectivity_spread"
    )?;
    for m in markers {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.id,
            m.center.x,
            m.center.y,
            m.center.z,
            m.width,
            m.height,
            m.normal.x,
            m.normal.y,
            m.normal.z,
            m.reflectivity.mean,
            m.reflectivity.spread
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_markers_csv(path: impl AsRef<Path>) -> Result<Vec<MarkerInfo>, ScanIoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(ScanIoError::Parse {
                location: format!("line {}", line_no + 1),
                message: format!("expected 11 fields in markers.csv, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, ScanIoError> {
            s.parse::<f64>().map_err(|_| ScanIoError::Parse {
                location: format!("line {}", line_no + 1),
                message: format!("bad number '{s}'"),
            })
        };
        out.push(MarkerInfo {
            id: fields[0].parse().map_err(|_| ScanIoError::Parse {
                location: format!("line {}", line_no + 1),
                message: format!("bad marker id '{}'", fields[0]),
            })?,
            center: Point3::new(parse(fields[1])?, parse(fields[2])?, parse(fields[3])?),
            width: parse(fields[4])?,
            height: parse(fields[5])?,
            normal: Vector3::new(parse(fields[6])?, parse(fields[7])?, parse(fields[8])?),
            reflectivity: super::scene::ReflectivityBand::new(
                parse(fields[9])?,
                parse(fields[10])?,
            ),
        });
    }
    Ok(out)
}
