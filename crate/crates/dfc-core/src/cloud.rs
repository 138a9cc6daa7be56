//! Point-cloud ingestion, voxel-grid downsampling, synthetic scene
//! generation and augmentation.

use crate::error::{Error, Result};
use crate::features::{Correspondence, CorrespondenceSet, FeatureMatrix};
use crate::geometry::{random_rotation, RigidTransform, Vec3};
use crate::{real, Real};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// A bag of 3-D points with optional per-point features (row i describes
/// point i).
#[derive(Debug, Clone, Default)]
pub struct PointCloud<T> {
    pub points: Vec<Vec3<T>>,
    pub features: Option<FeatureMatrix<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn from_points(points: Vec<Vec3<T>>) -> Self {
        PointCloud {
            points,
            features: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, tf: &RigidTransform<T>) -> PointCloud<T> {
        PointCloud {
            points: self.points.iter().map(|p| tf.apply(p)).collect(),
            features: self.features.clone(),
        }
    }
}

/// On-disk point formats. PLY is ascii 1.0 with an (x, y, z) vertex element;
/// XYZ and CSV are one point per line with `#` comments skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    PlyAscii,
    Xyz,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("ply") => Ok(Format::PlyAscii),
            Some("xyz") | Some("txt") => Ok(Format::Xyz),
            Some("csv") => Ok(Format::Csv),
            other => Err(Error::InvalidConfig(format!(
                "cannot infer point format from extension {:?} (expected ply/xyz/csv)",
                other
            ))),
        }
    }
}

pub fn load<T: Real>(path: &Path, format: Format) -> Result<PointCloud<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    match format {
        Format::PlyAscii => parse_ply(reader, &path.display().to_string()),
        Format::Xyz | Format::Csv => parse_delimited(reader, &path.display().to_string()),
    }
}

pub fn save<T: Real>(cloud: &PointCloud<T>, path: &Path, format: Format) -> Result<()> {
    let mut out = String::new();
    match format {
        Format::PlyAscii => {
            out.push_str("ply\nformat ascii 1.0\n");
            let _ = writeln!(out, "element vertex {}", cloud.len());
            out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
            for p in &cloud.points {
                let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
            }
        }
        Format::Xyz => {
            for p in &cloud.points {
                let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
            }
        }
        Format::Csv => {
            for p in &cloud.points {
                let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
            }
        }
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_scalar<T: Real>(token: &str, path: &str, line_no: usize) -> Result<T> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("invalid number `{token}`")))?;
    Ok(real::<T>(v))
}

fn parse_ply<T: Real, R: BufRead>(reader: R, path: &str) -> Result<PointCloud<T>> {
    let mut lines = reader.lines().enumerate();

    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((idx, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                Ok((idx + 1, line))
            }
            None => Err(Error::parse(
                path,
                0,
                format!("unexpected EOF, wanted {expect}"),
            )),
        }
    };

    let (no, magic) = next_line("ply magic")?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, no, "missing `ply` magic"));
    }

    // Header: collect the vertex count and the property order of the vertex
    // element; other elements are tolerated but their payload is ignored.
    let mut vertex_count: Option<usize> = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut trailing_elements = 0usize;
    loop {
        let (no, line) = next_line("end_header")?;
        let line = line.trim().to_string();
        if line == "end_header" {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", ..] => {
                return Err(Error::parse(
                    path,
                    no,
                    "only `format ascii 1.0` is supported",
                ))
            }
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                vertex_count =
                    Some(n.parse().map_err(|_| {
                        Error::parse(path, no, format!("invalid vertex count `{n}`"))
                    })?);
                in_vertex_element = true;
            }
            ["element", _, n] => {
                in_vertex_element = false;
                trailing_elements += n.parse::<usize>().unwrap_or(0);
            }
            ["property", _ty, name] if in_vertex_element => {
                vertex_props.push((*name).to_string());
            }
            ["property", ..] => {}
            _ => {
                return Err(Error::parse(
                    path,
                    no,
                    format!("unrecognized header line `{line}`"),
                ))
            }
        }
    }

    let count = vertex_count.ok_or_else(|| Error::parse(path, 0, "no vertex element in header"))?;
    let want = |name: &str| -> Result<usize> {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse(path, 0, format!("vertex element lacks property `{name}`")))
    };
    let (ix, iy, iz) = (want("x")?, want("y")?, want("z")?);

    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let (no, line) = next_line("vertex row")?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < vertex_props.len() {
            return Err(Error::parse(
                path,
                no,
                format!(
                    "expected {} fields, found {}",
                    vertex_props.len(),
                    toks.len()
                ),
            ));
        }
        points.push(Vec3::new(
            parse_scalar(toks[ix], path, no)?,
            parse_scalar(toks[iy], path, no)?,
            parse_scalar(toks[iz], path, no)?,
        ));
    }
    let _ = trailing_elements; // payload of other elements is not read

    Ok(PointCloud::from_points(points))
}

fn parse_delimited<T: Real, R: BufRead>(reader: R, path: &str) -> Result<PointCloud<T>> {
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        if toks.len() != 3 {
            return Err(Error::parse(
                path,
                no,
                format!("expected 3 coordinates, found {}", toks.len()),
            ));
        }
        points.push(Vec3::new(
            parse_scalar(toks[0], path, no)?,
            parse_scalar(toks[1], path, no)?,
            parse_scalar(toks[2], path, no)?,
        ));
    }
    Ok(PointCloud::from_points(points))
}

/// Voxel-grid downsampling: each occupied cell collapses to the centroid of
/// its points; output is ordered by ascending lexicographic voxel index.
pub fn voxel_downsample<T: Real>(cloud: &PointCloud<T>, voxel: T) -> PointCloud<T> {
    assert!(voxel > T::zero(), "voxel size must be positive");
    let mut cells: HashMap<(i64, i64, i64), (Vec3<T>, usize)> = HashMap::new();
    for p in &cloud.points {
        let key = (
            (crate::to_f64(p.x / voxel)).floor() as i64,
            (crate::to_f64(p.y / voxel)).floor() as i64,
            (crate::to_f64(p.z / voxel)).floor() as i64,
        );
        let entry = cells.entry(key).or_insert((Vec3::zeros(), 0));
        entry.0 = entry.0 + *p;
        entry.1 += 1;
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort();
    let points = keys
        .into_iter()
        .map(|k| {
            let (sum, n) = cells[&k];
            sum.scale(T::one() / real::<T>(n as f64))
        })
        .collect();
    PointCloud::from_points(points)
}

/// A synthetic registration problem with known ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPair<T> {
    pub source: PointCloud<T>,
    pub target: PointCloud<T>,
    pub gt: RigidTransform<T>,
    /// Per-correspondence ground-truth inlier labels (residual under `gt`
    /// strictly below `tau`).
    pub gt_labels: Vec<u8>,
}

/// Parameters for synthetic pair construction.
#[derive(Debug, Clone)]
pub struct SyntheticConfig<T> {
    pub n_points: usize,
    /// Fraction of correspondences re-paired with a random target point.
    pub outlier_ratio: f64,
    /// Per-axis Gaussian noise applied to target points.
    pub noise_sigma: T,
    /// Inlier threshold used for labeling.
    pub tau: T,
    /// Translation sampled uniformly in `[-range, range]^3`.
    pub translation_range: T,
}

impl<T: Real> Default for SyntheticConfig<T> {
    fn default() -> Self {
        SyntheticConfig {
            n_points: 1000,
            outlier_ratio: 0.7,
            noise_sigma: real(0.01),
            tau: real(0.05),
            translation_range: T::one(),
        }
    }
}

/// Builds a synthetic pair: source uniform in the unit cube, target rigidly
/// moved plus Gaussian noise, and a correspondence set in which an
/// `outlier_ratio` fraction is re-paired with uniformly random target points.
pub fn make_synthetic_pair<T: Real, R: Rng + ?Sized>(
    cfg: &SyntheticConfig<T>,
    rng: &mut R,
) -> (SyntheticPair<T>, CorrespondenceSet<T>) {
    assert!(cfg.n_points >= 10, "need at least 10 points");
    assert!((0.0..=1.0).contains(&cfg.outlier_ratio));

    let n = cfg.n_points;
    let source: Vec<Vec3<T>> = (0..n)
        .map(|_| {
            Vec3::new(
                real::<T>(rng.random::<f64>()),
                real::<T>(rng.random::<f64>()),
                real::<T>(rng.random::<f64>()),
            )
        })
        .collect();
    let gt = crate::geometry::random_transform::<T, R>(rng, cfg.translation_range);
    let target: Vec<Vec3<T>> = source
        .iter()
        .map(|p| gt.apply(p) + gaussian_vec(cfg.noise_sigma, rng))
        .collect();

    // Exactly round(ratio * n) correspondences are re-paired; the affected
    // indices come from a seeded partial shuffle.
    let n_outliers = (cfg.outlier_ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n_outliers.min(n) {
        let j = i + rng.random_range(0..(n - i));
        order.swap(i, j);
    }
    let mut dst_index: Vec<usize> = (0..n).collect();
    for &i in order.iter().take(n_outliers) {
        dst_index[i] = rng.random_range(0..n);
    }

    let pairs: Vec<Correspondence<T>> = (0..n)
        .map(|i| Correspondence {
            src: source[i],
            dst: target[dst_index[i]],
        })
        .collect();
    let gt_labels: Vec<u8> = pairs
        .iter()
        .map(|c| u8::from(gt.apply(&c.src).distance(&c.dst) < cfg.tau))
        .collect();

    let pair = SyntheticPair {
        source: PointCloud::from_points(source),
        target: PointCloud::from_points(target),
        gt,
        gt_labels: gt_labels.clone(),
    };
    let corrs = CorrespondenceSet {
        pairs,
        features: None,
        confidences: None,
        labels: Some(gt_labels),
    };
    (pair, corrs)
}

/// Applies a random rigid motion plus per-point Gaussian noise; returns the
/// moved cloud and the transform that was applied.
pub fn augment<T: Real, R: Rng + ?Sized>(
    cloud: &PointCloud<T>,
    noise_sigma: T,
    rng: &mut R,
) -> (PointCloud<T>, RigidTransform<T>) {
    let rotation = random_rotation::<T, R>(rng);
    let translation = Vec3::new(
        real::<T>(2.0 * rng.random::<f64>() - 1.0),
        real::<T>(2.0 * rng.random::<f64>() - 1.0),
        real::<T>(2.0 * rng.random::<f64>() - 1.0),
    );
    let tf = RigidTransform::new(rotation, translation);
    let points = cloud
        .points
        .iter()
        .map(|p| tf.apply(p) + gaussian_vec(noise_sigma, rng))
        .collect();
    (PointCloud::from_points(points), tf)
}

fn gaussian_vec<T: Real, R: Rng + ?Sized>(sigma: T, rng: &mut R) -> Vec3<T> {
    if sigma == T::zero() {
        return Vec3::zeros();
    }
    let g = |rng: &mut R| real::<T>(rng.sample::<f64, _>(StandardNormal)) * sigma;
    Vec3::new(g(rng), g(rng), g(rng))
}
