//! Experiment protocol: seeded random downsampling, PSNR measured only on
//! reconstructed points, multi-run sweeps over densities and CSV reports.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::InterpolatorKind;
use crate::cloud::{ColorPointCloud, Role};
use crate::error::{Error, Result};
use crate::parallel::map_slice;
use crate::pipeline::{reconstruct, MethodParams};
use crate::seed::hash_words;

pub const CSV_HEADER: &str =
    "method,density,run,seed,psnr_r,psnr_g,psnr_b,color_psnr,uncolored_count,wall_time_ms,flags";

/// Keeps `round(density * N)` points as originals, chosen by a seeded
/// shuffle of the point ids; the rest lose their color and become points to
/// reconstruct.
pub fn random_downsample(cloud: &ColorPointCloud, density: f64, seed: u64) -> Result<ColorPointCloud> {
    check_density(density)?;
    if let Some(index) = cloud.points.iter().position(|p| p.color.is_none()) {
        return Err(Error::MissingColor { index });
    }
    let keep = (density * cloud.len() as f64).round() as usize;
    let mut ids: Vec<usize> = (0..cloud.len()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = cloud.clone();
    for p in &mut out.points {
        p.role = Role::Original;
    }
    for &id in &ids[keep.min(ids.len())..] {
        out.points[id].role = Role::Reconstruct;
        out.points[id].color = None;
    }
    Ok(out)
}

fn check_density(density: f64) -> Result<()> {
    if density > 0.0 && density <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("density must lie in (0, 1], got {density}")))
    }
}

/// PSNR in dB with peak 255. Identical inputs give `f64::INFINITY`.
pub fn psnr_channel(reference: &[u8], reconstructed: &[u8]) -> Result<f64> {
    if reference.len() != reconstructed.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            reference.len(),
            reconstructed.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::InvalidInput("cannot compute PSNR of empty sequences".into()));
    }
    let sse: f64 = reference
        .iter()
        .zip(reconstructed)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(psnr_from_mse(sse / reference.len() as f64))
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorPsnr {
    pub channels: [f64; 3],
    /// Mean of the three channel values.
    pub color: f64,
    /// Points to reconstruct that carry no color; excluded from the error.
    pub uncolored_count: usize,
}

/// Compares `upsampled` against the ground truth over the points whose role
/// in `upsampled` is `Reconstruct`. Originals never affect the result.
pub fn reconstruction_color_psnr(
    original: &ColorPointCloud,
    upsampled: &ColorPointCloud,
) -> Result<ColorPsnr> {
    if original.len() != upsampled.len() {
        return Err(Error::InvalidInput(format!(
            "clouds differ in size: {} vs {}",
            original.len(),
            upsampled.len()
        )));
    }
    let mut targets = 0;
    let mut uncolored_count = 0;
    let mut sse = [0.0f64; 3];
    let mut scored = 0usize;
    for (i, (truth, got)) in original.points.iter().zip(&upsampled.points).enumerate() {
        if got.role != Role::Reconstruct {
            continue;
        }
        targets += 1;
        let Some(got) = got.color else {
            uncolored_count += 1;
            continue;
        };
        let truth = truth.color.ok_or(Error::MissingColor { index: i })?;
        for (c, acc) in sse.iter_mut().enumerate() {
            *acc += (truth.0[c] as f64 - got.0[c] as f64).powi(2);
        }
        scored += 1;
    }
    if targets == 0 {
        return Err(Error::InvalidInput("no points to reconstruct".into()));
    }
    if scored == 0 {
        return Err(Error::InvalidInput("no reconstructed point carries a color".into()));
    }
    let channels = sse.map(|s| psnr_from_mse(s / scored as f64));
    Ok(ColorPsnr {
        channels,
        color: channels.iter().sum::<f64>() / 3.0,
        uncolored_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub methods: Vec<InterpolatorKind>,
    pub densities: Vec<f64>,
    pub runs: usize,
    pub base_seed: u64,
    pub params: MethodParams,
    /// Record wall time per record. Off keeps reports byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            methods: InterpolatorKind::ALL.to_vec(),
            densities: (1..=8).map(|d| d as f64 / 10.0).collect(),
            runs: 3,
            base_seed: 0,
            params: MethodParams::default(),
            timing: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if self.densities.is_empty() {
            return Err(Error::InvalidConfig("no densities selected".into()));
        }
        for &d in &self.densities {
            check_density(d)?;
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        self.params.validate()
    }

    /// Seed of the split shared by every method at `(density, run)`.
    pub fn split_seed(&self, density: f64, run: usize) -> u64 {
        self.base_seed ^ hash_words(&[density.to_bits(), run as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordStatus {
    Scored(ColorPsnr),
    /// Nothing to reconstruct at this density.
    Skipped,
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub method: InterpolatorKind,
    pub density: f64,
    pub run: usize,
    pub seed: u64,
    pub status: RecordStatus,
    pub wall_time_ms: f64,
}

impl ExperimentRecord {
    /// Finite color PSNR, the only kind that enters aggregates.
    pub fn finite_color_psnr(&self) -> Option<f64> {
        match &self.status {
            RecordStatus::Scored(p) if p.color.is_finite() => Some(p.color),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: InterpolatorKind,
    pub density: f64,
    /// Mean over runs with finite color PSNR; `None` if there are none.
    pub mean_color_psnr: Option<f64>,
    pub runs_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<ExperimentRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn aggregate(&self, method: InterpolatorKind, density: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.density == density)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{},", r.method, r.density, r.run, r.seed);
            let (values, uncolored, flags) = match &r.status {
                RecordStatus::Scored(p) => {
                    let flag = if p.color.is_finite() { "" } else { "inf" };
                    let [a, b, c] = p.channels.map(fmt_db);
                    (format!("{a},{b},{c},{}", fmt_db(p.color)), p.uncolored_count.to_string(), flag.to_string())
                }
                RecordStatus::Skipped => ("inf,inf,inf,inf".to_string(), "0".to_string(), "skipped".to_string()),
                RecordStatus::Failed(e) => (
                    ",,,".to_string(),
                    String::new(),
                    format!("failed: {}", e.to_string().replace([',', '\n', '\r'], ";")),
                ),
            };
            let _ = writeln!(out, "{values},{uncolored},{:.3},{flags}", r.wall_time_ms);
        }
        out
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// Runs every method on one shared split per `(density, run)`. Splits run
/// concurrently; each record's values depend only on its own seed.
pub fn run_experiment(cloud: &ColorPointCloud, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if let Some(index) = cloud.points.iter().position(|p| p.color.is_none()) {
        return Err(Error::MissingColor { index });
    }
    let splits: Vec<(f64, usize)> = spec
        .densities
        .iter()
        .flat_map(|&d| (0..spec.runs).map(move |r| (d, r)))
        .collect();

    let per_split = map_slice(&splits, |&(density, run)| {
        let seed = spec.split_seed(density, run);
        let record = |method, status, wall_time_ms| ExperimentRecord {
            method,
            density,
            run,
            seed,
            status,
            wall_time_ms,
        };
        let split = match random_downsample(cloud, density, seed) {
            Ok(s) => s,
            Err(e) => {
                return spec
                    .methods
                    .iter()
                    .map(|&m| record(m, RecordStatus::Failed(e.clone()), 0.0))
                    .collect::<Vec<_>>()
            }
        };
        let nothing_to_do = split.original_count() == split.len();
        spec.methods
            .iter()
            .map(|&method| {
                if nothing_to_do {
                    return record(method, RecordStatus::Skipped, 0.0);
                }
                let start = Instant::now();
                let status = match reconstruct(&split, method, &spec.params)
                    .and_then(|r| reconstruction_color_psnr(cloud, &r.cloud))
                {
                    Ok(p) => RecordStatus::Scored(p),
                    Err(e) => RecordStatus::Failed(e),
                };
                let ms = if spec.timing {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                record(method, status, ms)
            })
            .collect()
    });
    let records: Vec<ExperimentRecord> = per_split.into_iter().flatten().collect();

    let mut aggregates = Vec::new();
    for &density in &spec.densities {
        for &method in &spec.methods {
            let finite: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.density == density)
                .filter_map(ExperimentRecord::finite_color_psnr)
                .collect();
            aggregates.push(Aggregate {
                method,
                density,
                mean_color_psnr: (!finite.is_empty())
                    .then(|| finite.iter().sum::<f64>() / finite.len() as f64),
                runs_used: finite.len(),
            });
        }
    }
    Ok(ExperimentReport { records, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{ColorPoint, Rgb};
    use approx::assert_abs_diff_eq;

    fn colored(n: usize) -> ColorPointCloud {
        ColorPointCloud::new(
            (0..n)
                .map(|i| {
                    let t = i as f64;
                    ColorPoint::original(
                        [t.sin() * 3.0, t.cos() * 3.0, 0.01 * t],
                        Rgb::new((i * 7 % 256) as u8, (i * 3 % 256) as u8, (255 - i % 256) as u8),
                    )
                })
                .collect(),
            "test",
        )
    }

    #[test]
    fn downsample_counts() {
        let c = colored(10);
        let half = random_downsample(&c, 0.5, 3).unwrap();
        assert_eq!(half.original_count(), 5);
        assert_eq!(half.points.iter().filter(|p| p.color.is_none()).count(), 5);
        for (a, b) in c.points.iter().zip(&half.points) {
            assert_eq!(a.position, b.position);
        }
        assert_eq!(random_downsample(&c, 1.0, 3).unwrap(), c);
        assert_eq!(random_downsample(&c, 0.5, 3).unwrap(), half);
        // 0.25 * 10 = 2.5 rounds up.
        assert_eq!(random_downsample(&c, 0.25, 1).unwrap().original_count(), 3);
        assert!(matches!(random_downsample(&c, 0.0, 1), Err(Error::InvalidConfig(_))));
        assert!(matches!(random_downsample(&c, 1.5, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn psnr_examples() {
        assert_eq!(psnr_channel(&[1, 2, 3], &[1, 2, 3]).unwrap(), f64::INFINITY);
        assert_abs_diff_eq!(psnr_channel(&[0], &[16]).unwrap(), 24.04840395556061, epsilon = 1e-9);
        assert_abs_diff_eq!(psnr_channel(&[0; 4], &[255; 4]).unwrap(), 0.0, epsilon = 1e-12);
        assert!(matches!(psnr_channel(&[], &[]), Err(Error::InvalidInput(_))));
        assert!(matches!(psnr_channel(&[1], &[1, 2]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn color_psnr_scope() {
        let truth = colored(4);
        let mut up = truth.clone();
        up.points[0].role = Role::Reconstruct;
        up.points[1].role = Role::Reconstruct;
        up.points[2].color = Some(Rgb::new(0, 0, 0));
        let exact = reconstruction_color_psnr(&truth, &up).unwrap();
        assert_eq!(exact.color, f64::INFINITY);

        let r0 = truth.points[0].color.unwrap().0[0];
        up.points[0].color = Some(Rgb::new(r0 + 16, truth.points[0].color.unwrap().0[1], truth.points[0].color.unwrap().0[2]));
        let p = reconstruction_color_psnr(&truth, &up).unwrap();
        assert_abs_diff_eq!(p.channels[0], 27.05870391220042, epsilon = 1e-9);
        assert_eq!(p.channels[1], f64::INFINITY);

        up.points[1].color = None;
        assert_eq!(reconstruction_color_psnr(&truth, &up).unwrap().uncolored_count, 1);
        assert!(reconstruction_color_psnr(&truth, &truth).is_err());
    }

    #[test]
    fn shared_splits_and_skips() {
        let cloud = colored(200);
        let spec = ExperimentSpec {
            methods: vec![InterpolatorKind::Nn3, InterpolatorKind::Idw3],
            densities: vec![0.5, 1.0],
            runs: 3,
            base_seed: 11,
            ..Default::default()
        };
        let report = run_experiment(&cloud, &spec).unwrap();
        assert_eq!(report.records.len(), 12);
        for pair in report.records.chunks(2) {
            assert_eq!((pair[0].density, pair[0].run, pair[0].seed), (pair[1].density, pair[1].run, pair[1].seed));
        }
        for r in report.records.iter().filter(|r| r.density == 1.0) {
            assert_eq!(r.status, RecordStatus::Skipped);
        }
        let nn: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.method == InterpolatorKind::Nn3 && r.density == 0.5)
            .map(|r| r.finite_color_psnr().unwrap_or_else(|| panic!("{r:?}")))
            .collect();
        let agg = report.aggregate(InterpolatorKind::Nn3, 0.5).unwrap();
        assert_abs_diff_eq!(agg.mean_color_psnr.unwrap(), (nn[0] + nn[1] + nn[2]) / 3.0, epsilon = 1e-12);
        assert_eq!(report.aggregate(InterpolatorKind::Nn3, 1.0).unwrap().mean_color_psnr, None);

        let csv = report.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.contains(",skipped\n"));
        assert_eq!(csv, run_experiment(&cloud, &spec).unwrap().to_csv());
    }

    #[test]
    fn failures_are_recorded() {
        let cloud = colored(30);
        let spec = ExperimentSpec {
            methods: vec![InterpolatorKind::Nn3],
            densities: vec![0.01],
            runs: 1,
            ..Default::default()
        };
        let report = run_experiment(&cloud, &spec).unwrap();
        assert_eq!(report.records[0].status, RecordStatus::Failed(Error::EmptySamples));
        assert!(report.to_csv().contains("failed: "));
    }
}
