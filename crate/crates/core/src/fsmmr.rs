//! Frequency-selective mesh-to-mesh resampling.
//!
//! A block's color channel is modelled as a sparse superposition of 2D DCT-II
//! basis functions, evaluated at continuous coordinates inside an `M x N`
//! window:
//!
//! ```text
//! phi_kl(x, y) = cos(pi k (2x + 1) / 2M) * cos(pi l (2y + 1) / 2N)
//! ```
//!
//! The model is grown greedily from zero. In every iteration each candidate
//! `(k, l)` gets its optimal single-coefficient update against the current
//! residual under the spatially weighted energy `E = sum_s w_s r_s^2`:
//!
//! ```text
//! c_kl  = sum_s w_s r_s phi_kl(s) / sum_s w_s phi_kl(s)^2
//! dE_kl = c_kl^2 * sum_s w_s phi_kl(s)^2
//! ```
//!
//! The candidate maximizing `dE_kl * sigma^sqrt(k^2 + l^2)` is selected and
//! `gamma * c_kl` is added to its coefficient. The finished model can be
//! evaluated at any coordinates in the window, which is how colors of the
//! points to reconstruct are obtained.

use crate::cloud::{Block, ColorPointCloud, Point3, Rgb, Role};
use crate::error::{Error, Result};
use crate::surface::{flatten_block, FlattenedMesh, RootPolicy};

/// Model window size `(M, N)`; coordinates live in `[0, M-1] x [0, N-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub m: usize,
    pub n: usize,
}

impl Window {
    pub const fn new(m: usize, n: usize) -> Self {
        Window { m, n }
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.m as f64 - 1.0) / 2.0, (self.n as f64 - 1.0) / 2.0]
    }

    pub fn full_grid(&self) -> Vec<(usize, usize)> {
        (0..self.m)
            .flat_map(|k| (0..self.n).map(move |l| (k, l)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsmmrConfig {
    pub window: Window,
    /// Candidate frequency pairs; `None` means the full `M x N` grid.
    pub candidates: Option<Vec<(usize, usize)>>,
    /// Frequency weight decay, in (0, 1).
    pub sigma: f64,
    /// Spatial weight decay, in (0, 1).
    pub rho: f64,
    /// Damping on coefficient updates, in (0, 1].
    pub gamma: f64,
    pub max_iterations: usize,
    pub energy_threshold: f64,
}

impl Default for FsmmrConfig {
    fn default() -> Self {
        FsmmrConfig {
            window: Window::new(16, 16),
            candidates: None,
            sigma: 0.8,
            rho: 0.7,
            gamma: 0.5,
            max_iterations: 100,
            energy_threshold: 0.0,
        }
    }
}

impl FsmmrConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.window.m == 0 || self.window.n == 0 {
            return bad(format!("model size must be positive, got {:?}", self.window));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma must be in (0, 1), got {}", self.sigma));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must be in (0, 1), got {}", self.rho));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.energy_threshold >= 0.0) {
            return bad(format!(
                "energy threshold must be non-negative, got {}",
                self.energy_threshold
            ));
        }
        if let Some(cands) = &self.candidates {
            if cands.is_empty() {
                return bad("candidate set is empty".into());
            }
            if let Some(&(k, l)) = cands
                .iter()
                .find(|&&(k, l)| k >= self.window.m || l >= self.window.n)
            {
                return bad(format!("candidate ({k}, {l}) lies outside the window"));
            }
        }
        Ok(())
    }

    pub fn candidate_set(&self) -> Vec<(usize, usize)> {
        self.candidates
            .clone()
            .unwrap_or_else(|| self.window.full_grid())
    }
}

pub fn basis_value(k: usize, l: usize, x: f64, y: f64, window: Window) -> f64 {
    dct_cos(k, x, window.m) * dct_cos(l, y, window.n)
}

#[inline]
fn dct_cos(k: usize, x: f64, len: usize) -> f64 {
    (std::f64::consts::PI * k as f64 * (2.0 * x + 1.0) / (2.0 * len as f64)).cos()
}

/// `rho^d` where `d` is the distance of `(x, y)` from the window center.
pub fn spatial_weight(x: f64, y: f64, window: Window, rho: f64) -> f64 {
    let [cx, cy] = window.center();
    rho.powf(((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
}

pub fn frequency_weight(k: usize, l: usize, sigma: f64) -> f64 {
    sigma.powf(((k * k + l * l) as f64).sqrt())
}

/// One channel of scattered samples in window coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteredSamples {
    pub coords: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ScatteredSamples {
    pub fn new(coords: Vec<[f64; 2]>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if coords.len() != values.len() || coords.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "sample arrays differ in length: {} coords, {} values, {} weights",
                coords.len(),
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("sample weight {w} is not positive")));
        }
        Ok(ScatteredSamples {
            coords,
            values,
            weights,
        })
    }

    /// Samples weighted by [`spatial_weight`] at their coordinates.
    pub fn spatially_weighted(
        coords: Vec<[f64; 2]>,
        values: Vec<f64>,
        window: Window,
        rho: f64,
    ) -> Result<Self> {
        let weights = coords
            .iter()
            .map(|&[x, y]| spatial_weight(x, y, window, rho))
            .collect();
        Self::new(coords, values, weights)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn weighted_energy(&self, residual: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(residual)
            .map(|(w, r)| w * r * r)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub u: usize,
    pub v: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    /// One term per distinct frequency pair, in order of first selection.
    pub terms: Vec<Term>,
    pub window: Window,
    pub iterations_run: usize,
    pub final_energy: f64,
}

impl SparseModel {
    pub fn empty(window: Window) -> Self {
        SparseModel {
            terms: Vec::new(),
            window,
            iterations_run: 0,
            final_energy: 0.0,
        }
    }

    pub fn evaluate_at(&self, x: f64, y: f64) -> f64 {
        let x = clamp_marginal(x, self.window.m);
        let y = clamp_marginal(y, self.window.n);
        self.terms
            .iter()
            .map(|t| t.coefficient * basis_value(t.u, t.v, x, y, self.window))
            .sum()
    }
}

const WINDOW_SLACK: f64 = 1e-9;

fn clamp_marginal(v: f64, len: usize) -> f64 {
    let hi = len as f64 - 1.0;
    if (-WINDOW_SLACK..0.0).contains(&v) {
        0.0
    } else if v > hi && v <= hi + WINDOW_SLACK {
        hi
    } else {
        v
    }
}

pub fn evaluate_model(model: &SparseModel, queries: &[[f64; 2]]) -> Vec<f64> {
    queries
        .iter()
        .map(|&[x, y]| model.evaluate_at(x, y))
        .collect()
}

/// State of one greedy iteration, recorded by [`generate_model_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Model terms before this iteration's update.
    pub terms_before: Vec<Term>,
    pub selected: (usize, usize),
    /// Undamped optimal coefficient of the selected basis.
    pub coefficient: f64,
    pub delta_energy: f64,
    /// `delta_energy` times the frequency weight.
    pub score: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Candidate whose normalizer `sum w phi^2` falls below this fraction of
/// `sum w` is treated as vanishing on the sample set.
const DEGENERATE_RELATIVE: f64 = 1e-10;

struct Candidate {
    k: usize,
    l: usize,
    radius_sq: usize,
    freq_weight: f64,
    norm: f64,
}

pub fn generate_model(samples: &ScatteredSamples, config: &FsmmrConfig) -> Result<SparseModel> {
    generate(samples, config, None)
}

pub fn generate_model_traced(
    samples: &ScatteredSamples,
    config: &FsmmrConfig,
) -> Result<(SparseModel, Vec<TraceStep>)> {
    let mut trace = Vec::new();
    let model = generate(samples, config, Some(&mut trace))?;
    Ok((model, trace))
}

fn generate(
    samples: &ScatteredSamples,
    config: &FsmmrConfig,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<SparseModel> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let window = config.window;
    let s = samples.len();

    // Column-major cosine tables: cos_x[k * s + i] for sample i.
    let mut cos_x = vec![0.0; window.m * s];
    let mut cos_y = vec![0.0; window.n * s];
    for (i, &[x, y]) in samples.coords.iter().enumerate() {
        let (x, y) = (clamp_marginal(x, window.m), clamp_marginal(y, window.n));
        for k in 0..window.m {
            cos_x[k * s + i] = dct_cos(k, x, window.m);
        }
        for l in 0..window.n {
            cos_y[l * s + i] = dct_cos(l, y, window.n);
        }
    }
    let col = |k: usize| k * s..(k + 1) * s;

    let weight_sum: f64 = samples.weights.iter().sum();
    let mut candidates: Vec<Candidate> = config
        .candidate_set()
        .into_iter()
        .filter_map(|(k, l)| {
            let cx = &cos_x[col(k)];
            let cy = &cos_y[col(l)];
            let norm: f64 = (0..s)
                .map(|i| samples.weights[i] * (cx[i] * cy[i]).powi(2))
                .sum();
            (norm > DEGENERATE_RELATIVE * weight_sum).then(|| Candidate {
                k,
                l,
                radius_sq: k * k + l * l,
                freq_weight: frequency_weight(k, l, config.sigma),
                norm,
            })
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateBasis);
    }
    candidates.sort_by_key(|c| (c.k, c.l));

    let mut residual = samples.values.clone();
    let mut energy = samples.weighted_energy(&residual);
    let mut model = SparseModel::empty(window);
    let mut weighted_residual = vec![0.0; s];
    let mut row = vec![0.0; s];

    while model.iterations_run < config.max_iterations && energy > config.energy_threshold {
        for i in 0..s {
            weighted_residual[i] = samples.weights[i] * residual[i];
        }
        let mut row_k = usize::MAX;
        // (score, delta_energy, coefficient, candidate index)
        let mut best: Option<(f64, f64, f64, usize)> = None;
        for (idx, cand) in candidates.iter().enumerate() {
            if cand.k != row_k {
                let cx = &cos_x[col(cand.k)];
                for i in 0..s {
                    row[i] = weighted_residual[i] * cx[i];
                }
                row_k = cand.k;
            }
            let cy = &cos_y[col(cand.l)];
            let projection: f64 = row.iter().zip(cy).map(|(a, b)| a * b).sum();
            let coefficient = projection / cand.norm;
            let delta = coefficient * projection;
            let score = delta * cand.freq_weight;
            let better = match best {
                None => true,
                Some((bs, _, _, bi)) => {
                    let b = &candidates[bi];
                    score > bs
                        || (score == bs
                            && (cand.radius_sq, cand.k, cand.l) < (b.radius_sq, b.k, b.l))
                }
            };
            if better {
                best = Some((score, delta, coefficient, idx));
            }
        }
        let Some((score, delta, coefficient, idx)) = best else {
            break;
        };
        if !(delta > 0.0) {
            break;
        }
        let cand = &candidates[idx];
        let step = config.gamma * coefficient;
        let terms_before = trace.as_ref().map(|_| model.terms.clone());

        let cx = &cos_x[col(cand.k)];
        let cy = &cos_y[col(cand.l)];
        for i in 0..s {
            residual[i] -= step * cx[i] * cy[i];
        }
        match model
            .terms
            .iter_mut()
            .find(|t| t.u == cand.k && t.v == cand.l)
        {
            Some(t) => t.coefficient += step,
            None => model.terms.push(Term {
                u: cand.k,
                v: cand.l,
                coefficient: step,
            }),
        }
        let energy_before = energy;
        energy = samples.weighted_energy(&residual);
        model.iterations_run += 1;

        if let (Some(trace), Some(terms_before)) = (trace.as_deref_mut(), terms_before) {
            trace.push(TraceStep {
                terms_before,
                selected: (cand.k, cand.l),
                coefficient,
                delta_energy: delta,
                score,
                energy_before,
                energy_after: energy,
            });
        }
    }
    model.final_energy = energy;
    Ok(model)
}

/// Window coordinates for every mesh entry, in entry order.
///
/// The joint bounding rectangle of all entries is mapped affinely onto
/// `[0, M-1] x [0, N-1]`; an axis with zero extent maps to the window
/// center on that axis.
pub fn normalize_to_window(mesh: &FlattenedMesh, window: Window) -> Vec<[f64; 2]> {
    let coords: Vec<[f64; 2]> = mesh.coords().collect();
    normalize_coords(&coords, window)
}

pub(crate) fn normalize_coords(coords: &[[f64; 2]], window: Window) -> Vec<[f64; 2]> {
    if coords.is_empty() {
        return Vec::new();
    }
    let mut lo = coords[0];
    let mut hi = coords[0];
    for c in coords {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let span = [window.m as f64 - 1.0, window.n as f64 - 1.0];
    let center = window.center();
    coords
        .iter()
        .map(|c| {
            [0, 1].map(|a| {
                if hi[a] > lo[a] {
                    ((c[a] - lo[a]) / (hi[a] - lo[a]) * span[a]).clamp(0.0, span[a])
                } else {
                    center[a]
                }
            })
        })
        .collect()
}

/// Color source for blocks that contain no originals.
pub trait NearestOriginal {
    fn nearest_color(&self, query: Point3) -> Option<Rgb>;
}

/// Linear scan over the originals of a cloud; ties resolve to the lower id.
pub struct ScanNearest<'a>(pub &'a ColorPointCloud);

impl NearestOriginal for ScanNearest<'_> {
    fn nearest_color(&self, query: Point3) -> Option<Rgb> {
        let mut best: Option<(f64, Rgb)> = None;
        for p in &self.0.points {
            if p.role != Role::Original {
                continue;
            }
            let Some(color) = p.color else { continue };
            let d = crate::surface::distance_sq(query, p.position);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, color));
            }
        }
        best.map(|(_, c)| c)
    }
}

/// Colors for the block's points to reconstruct, as `(point_id, color)` in
/// block order.
pub fn upsample_block(
    block: &Block,
    cloud: &ColorPointCloud,
    config: &FsmmrConfig,
    root_policy: RootPolicy,
) -> Result<Vec<(usize, Rgb)>> {
    upsample_block_with(block, cloud, config, root_policy, &ScanNearest(cloud))
}

pub(crate) fn upsample_block_with(
    block: &Block,
    cloud: &ColorPointCloud,
    config: &FsmmrConfig,
    root_policy: RootPolicy,
    fallback: &dyn NearestOriginal,
) -> Result<Vec<(usize, Rgb)>> {
    if block.is_empty() {
        return Err(Error::EmptyBlock);
    }
    config.validate()?;
    let targets: Vec<usize> = block
        .point_ids
        .iter()
        .copied()
        .filter(|&id| cloud.points[id].role == Role::Reconstruct)
        .collect();
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let has_original = block
        .point_ids
        .iter()
        .any(|&id| cloud.points[id].role == Role::Original);
    if !has_original {
        return targets
            .into_iter()
            .map(|id| {
                fallback
                    .nearest_color(cloud.position(id))
                    .map(|c| (id, c))
                    .ok_or(Error::EmptySamples)
            })
            .collect();
    }

    let mesh = flatten_block(block, cloud, root_policy)?;
    let coords = normalize_to_window(&mesh, config.window);
    let mut sample_coords = Vec::new();
    let mut sample_colors = Vec::new();
    let mut query_coords = Vec::new();
    for (entry, &c) in mesh.entries.iter().zip(&coords) {
        let p = &cloud.points[entry.point_id];
        match p.role {
            Role::Original => {
                let color = p.color.ok_or(Error::MissingColor {
                    index: entry.point_id,
                })?;
                sample_coords.push(c);
                sample_colors.push(color);
            }
            Role::Reconstruct => query_coords.push(c),
        }
    }
    let base = ScatteredSamples::spatially_weighted(
        sample_coords,
        vec![0.0; sample_colors.len()],
        config.window,
        config.rho,
    )?;
    let mut channels = [Vec::new(), Vec::new(), Vec::new()];
    for (ch, out) in channels.iter_mut().enumerate() {
        let samples = ScatteredSamples {
            values: sample_colors
                .iter()
                .map(|c| c.channel(ch) as f64)
                .collect(),
            ..base.clone()
        };
        let model = generate_model(&samples, config)?;
        *out = evaluate_model(&model, &query_coords);
    }
    Ok(targets
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            (
                id,
                Rgb::from_f64([channels[0][i], channels[1][i], channels[2][i]]),
            )
        })
        .collect())
}
