//! Synthetic generators and CSV ingestion.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{KbnnError, Result};
use crate::network::{ColumnStats, Standardizer};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    /// Binary labels in {0, 1}.
    Classification,
}

/// Raw-scale rows with one target vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<Vec<T>>,
    pub task: Task,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(x: Vec<Vec<T>>, y: Vec<Vec<T>>, task: Task) -> Result<Self> {
        if x.len() != y.len() {
            return Err(KbnnError::Dimension {
                context: "dataset targets",
                expected: x.len(),
                actual: y.len(),
            });
        }
        Ok(Self { x, y, task })
    }

    pub fn empty(task: Task) -> Self {
        Self { x: Vec::new(), y: Vec::new(), task }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i].clone()).collect(),
            task: self.task,
        }
    }

    /// Scalar targets of a single-output dataset.
    pub fn targets(&self) -> Vec<T> {
        self.y.iter().map(|r| r[0]).collect()
    }
}

/// Train/test partition with statistics fitted on the training rows. Rows
/// are kept on the raw scale; the statistics travel with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub feature_stats: ColumnStats<T>,
    /// `None` for classification, whose labels stay in {0, 1}.
    pub target_stats: Option<ColumnStats<T>>,
}

impl<T: Scalar> DatasetSplit<T> {
    pub fn standardizer(&self) -> Standardizer<T> {
        Standardizer {
            features: self.feature_stats.clone(),
            targets: self.target_stats.clone(),
        }
    }

    pub fn standardized_train_x(&self) -> Vec<Vec<T>> {
        self.train.x.iter().map(|r| self.feature_stats.standardize(r)).collect()
    }

    pub fn standardized_train_y(&self) -> Vec<Vec<T>> {
        match &self.target_stats {
            Some(s) => self.train.y.iter().map(|r| s.standardize(r)).collect(),
            None => self.train.y.clone(),
        }
    }
}

/// Seeded permutation split. With `standardize` off the statistics are the
/// identity map.
pub fn split<T: Scalar>(data: &Dataset<T>, train_fraction: f64, seed: u64, standardize: bool) -> Result<DatasetSplit<T>> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(KbnnError::Config(format!("train fraction must lie in (0, 1], got {train_fraction}")));
    }
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(n.min(1), n);
    let train = data.subset(&idx[..n_train]);
    let test = data.subset(&idx[n_train..]);
    let (feature_stats, target_stats) = if standardize {
        let targets = match data.task {
            Task::Regression => Some(ColumnStats::fit(&train.y)),
            Task::Classification => None,
        };
        (ColumnStats::fit(&train.x), targets)
    } else {
        let targets = match data.task {
            Task::Regression => Some(ColumnStats::identity(data.output_dim())),
            Task::Classification => None,
        };
        (ColumnStats::identity(data.input_dim()), targets)
    };
    Ok(DatasetSplit {
        train,
        test,
        feature_stats,
        target_stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSpec {
    pub n: usize,
    pub noise_std: f64,
    pub x_range: (f64, f64),
    /// Size of the noiseless evenly spaced test grid.
    pub test_points: usize,
}

impl Default for CubicSpec {
    fn default() -> Self {
        Self {
            n: 800,
            noise_std: 3.0,
            x_range: (-4.0, 4.0),
            test_points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingMoonsSpec {
    pub initial_n: usize,
    pub per_step_n: usize,
    pub steps: usize,
    pub step_degrees: f64,
    pub noise_std: f64,
    pub train_fraction: f64,
}

impl Default for RotatingMoonsSpec {
    fn default() -> Self {
        Self {
            initial_n: 1500,
            per_step_n: 100,
            steps: 18,
            step_degrees: 20.0,
            noise_std: 0.1,
            train_fraction: 0.9,
        }
    }
}

/// Tagged synthetic dataset description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthSpec {
    Cubic(CubicSpec),
    Moons { n: usize, noise_std: f64 },
    Circles { n: usize, noise_std: f64, radius_factor: f64 },
    RotatingMoons(RotatingMoonsSpec),
}

fn check_synth(n: usize, noise_std: f64) -> Result<()> {
    if n == 0 {
        return Err(KbnnError::Config("sample count must be at least 1".into()));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(KbnnError::Config(format!("noise std must be non-negative, got {noise_std}")));
    }
    Ok(())
}

fn linspace(start: f64, stop: f64, n: usize, endpoint: bool) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let denom = if endpoint { n - 1 } else { n } as f64;
            (0..n).map(|i| start + (stop - start) * i as f64 / denom).collect()
        }
    }
}

/// `y = x³ + ε` with `x ~ U(x_range)` for training and a noiseless grid for
/// testing.
pub fn gen_cubic<T: Scalar>(spec: &CubicSpec, seed: u64) -> Result<DatasetSplit<T>> {
    check_synth(spec.n, spec.noise_std)?;
    let (lo, hi) = spec.x_range;
    if !(lo < hi) {
        return Err(KbnnError::Config(format!("empty x range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ux = Uniform::new_inclusive(lo, hi);
    let noise = Normal::new(0.0, spec.noise_std).unwrap();
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let xi = ux.sample(&mut rng);
        x.push(vec![T::lit(xi)]);
        y.push(vec![T::lit(xi.powi(3) + noise.sample(&mut rng))]);
    }
    let grid = linspace(lo, hi, spec.test_points, true);
    let train = Dataset::new(x, y, Task::Regression)?;
    let test = Dataset::new(
        grid.iter().map(|g| vec![T::lit(*g)]).collect(),
        grid.iter().map(|g| vec![T::lit(g.powi(3))]).collect(),
        Task::Regression,
    )?;
    Ok(DatasetSplit {
        feature_stats: ColumnStats::fit(&train.x),
        target_stats: Some(ColumnStats::fit(&train.y)),
        train,
        test,
    })
}

fn shuffle_and_perturb<T: Scalar>(mut pts: Vec<([f64; 2], f64)>, noise_std: f64, seed: u64) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pts.shuffle(&mut rng);
    let noise = Normal::new(0.0, noise_std).unwrap();
    let mut x = Vec::with_capacity(pts.len());
    let mut y = Vec::with_capacity(pts.len());
    for (p, label) in pts {
        let (dx, dy) = if noise_std > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        x.push(vec![T::lit(p[0] + dx), T::lit(p[1] + dy)]);
        y.push(vec![T::lit(label)]);
    }
    Dataset { x, y, task: Task::Classification }
}

/// Two interleaving half circles: class 0 on `(cos t, sin t)`, class 1 on
/// `(1 − cos t, 0.5 − sin t)`, `t` on an even grid over `[0, π]`, shuffled,
/// then isotropic Gaussian noise.
pub fn gen_moons<T: Scalar>(n: usize, noise_std: f64, seed: u64) -> Result<Dataset<T>> {
    check_synth(n, noise_std)?;
    let n_out = n / 2;
    let n_in = n - n_out;
    let pi = std::f64::consts::PI;
    let mut pts = Vec::with_capacity(n);
    for t in linspace(0.0, pi, n_out, true) {
        pts.push(([t.cos(), t.sin()], 0.0));
    }
    for t in linspace(0.0, pi, n_in, true) {
        pts.push(([1.0 - t.cos(), 1.0 - t.sin() - 0.5], 1.0));
    }
    Ok(shuffle_and_perturb(pts, noise_std, seed))
}

/// Concentric circles: radius 1 for class 0, `radius_factor` for class 1.
pub fn gen_circles<T: Scalar>(n: usize, noise_std: f64, radius_factor: f64, seed: u64) -> Result<Dataset<T>> {
    check_synth(n, noise_std)?;
    if !(radius_factor > 0.0 && radius_factor < 1.0) {
        return Err(KbnnError::Config(format!("radius factor must lie in (0, 1), got {radius_factor}")));
    }
    let n_out = n / 2;
    let n_in = n - n_out;
    let tau = 2.0 * std::f64::consts::PI;
    let mut pts = Vec::with_capacity(n);
    for t in linspace(0.0, tau, n_out, false) {
        pts.push(([t.cos(), t.sin()], 0.0));
    }
    for t in linspace(0.0, tau, n_in, false) {
        pts.push(([radius_factor * t.cos(), radius_factor * t.sin()], 1.0));
    }
    Ok(shuffle_and_perturb(pts, noise_std, seed))
}

pub fn centroid<T: Scalar>(points: &[Vec<T>]) -> [T; 2] {
    let n = T::lit(points.len().max(1) as f64);
    let (sx, sy) = points
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), p| (a + p[0], b + p[1]));
    [sx / n, sy / n]
}

/// Rotate 2-D points counter-clockwise by `degrees` about `center`.
pub fn rotate_about<T: Scalar>(points: &[Vec<T>], degrees: f64, center: [T; 2]) -> Vec<Vec<T>> {
    let rad = degrees.to_radians();
    let (s, c) = (T::lit(rad.sin()), T::lit(rad.cos()));
    points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
            vec![center[0] + c * dx - s * dy, center[1] + s * dx + c * dy]
        })
        .collect()
}

/// Rotate 2-D points about their own centroid.
pub fn rotate_moons<T: Scalar>(points: &[Vec<T>], degrees: f64) -> Vec<Vec<T>> {
    rotate_about(points, degrees, centroid(points))
}

/// Drifting moon stream: an initial split, then per step a fresh batch and
/// the initial test set, both rotated by `step · step_degrees` about the
/// centroid of the initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingMoonsStream<T> {
    pub initial: DatasetSplit<T>,
    pub steps: Vec<RotationStep<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationStep<T> {
    pub degrees: f64,
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

pub fn gen_rotating_moons<T: Scalar>(spec: &RotatingMoonsSpec, seed: u64) -> Result<RotatingMoonsStream<T>> {
    check_synth(spec.per_step_n, spec.noise_std)?;
    let all = gen_moons::<T>(spec.initial_n, spec.noise_std, seed)?;
    let initial = split(&all, spec.train_fraction, seed ^ 0x5eed_0001, false)?;
    let center = centroid(&all.x);
    let mut steps = Vec::with_capacity(spec.steps);
    for k in 1..=spec.steps {
        let degrees = spec.step_degrees * k as f64;
        let batch = gen_moons::<T>(spec.per_step_n, spec.noise_std, seed.wrapping_add(k as u64).rotate_left(17))?;
        steps.push(RotationStep {
            degrees,
            train: Dataset {
                x: rotate_about(&batch.x, degrees, center),
                ..batch
            },
            test: Dataset {
                x: rotate_about(&initial.test.x, degrees, center),
                y: initial.test.y.clone(),
                task: Task::Classification,
            },
        });
    }
    Ok(RotatingMoonsStream { initial, steps })
}

/// Which CSV column holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

pub const MIN_CSV_ROWS: usize = 10;

/// Reads a numeric CSV with a header row. Every other column is a feature.
pub fn read_csv<T: Scalar>(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let err = |reason: String| KbnnError::DataLoad {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let target_idx = match target {
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(format!("missing target column '{name}'")))?,
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Index(i) => return Err(err(format!("missing target column index {i} ({} columns)", headers.len()))),
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(err(format!("row {row}: expected {} fields, found {}", headers.len(), record.len())));
        }
        let mut features = Vec::with_capacity(headers.len() - 1);
        let mut label = T::zero();
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("row {row}, column '{}': non-numeric value '{cell}'", &headers[c])))?;
            if c == target_idx {
                label = T::lit(v);
            } else {
                features.push(T::lit(v));
            }
        }
        x.push(features);
        y.push(vec![label]);
    }
    if x.len() < MIN_CSV_ROWS {
        return Err(err(format!("{} data rows, at least {MIN_CSV_ROWS} required", x.len())));
    }
    Dataset::new(x, y, Task::Regression)
}

pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    target: &TargetColumn,
    train_fraction: f64,
    seed: u64,
    standardize: bool,
) -> Result<DatasetSplit<T>> {
    split(&read_csv(path, target)?, train_fraction, seed, standardize)
}
