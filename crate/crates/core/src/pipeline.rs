//! Cloud-level color reconstruction: partition, per-block work in parallel,
//! then write the reconstructed colors back in point order.

use crate::baselines::{idw_single, interpolate_lin2, interpolate_nn3, InterpolatorKind};
use crate::cloud::{partition_into_blocks, Block, ColorPointCloud, Point3, Rgb, Role};
use crate::error::{Error, Result};
use crate::fsmmr::{upsample_block_with, FsmmrConfig, NearestOriginal};
use crate::parallel::map_slice;
use crate::spatial::KdTree;
use crate::surface::{flatten_block, RootPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub block_size: f64,
    pub fsmmr: FsmmrConfig,
    pub root_policy: RootPolicy,
    pub idw_power: f64,
    /// Number of nearest originals blended by the IDW methods.
    pub idw_neighbors: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            block_size: 4.0,
            fsmmr: FsmmrConfig::default(),
            root_policy: RootPolicy::Deterministic,
            idw_power: 2.0,
            idw_neighbors: 8,
        }
    }
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.block_size > 0.0 && self.block_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "block size must be positive, got {}",
                self.block_size
            )));
        }
        if !(self.idw_power > 0.0 && self.idw_power.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "IDW power must be positive, got {}",
                self.idw_power
            )));
        }
        if self.idw_neighbors == 0 {
            return Err(Error::InvalidConfig("IDW neighbor count must be at least 1".into()));
        }
        self.fsmmr.validate()
    }
}

/// Result of reconstructing a cloud. Points listed in `uncolored` are
/// points to reconstruct the method could not color; they keep `color:
/// None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub cloud: ColorPointCloud,
    pub uncolored: Vec<usize>,
}

struct OriginalIndex<'a> {
    tree: KdTree,
    cloud: &'a ColorPointCloud,
}

impl<'a> OriginalIndex<'a> {
    fn new(cloud: &'a ColorPointCloud) -> Self {
        let items = cloud
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.role == Role::Original && p.color.is_some())
            .map(|(id, p)| (id, p.position))
            .collect();
        OriginalIndex {
            tree: KdTree::new(items),
            cloud,
        }
    }

    fn color(&self, id: usize) -> Rgb {
        self.cloud.points[id].color.expect("indexed originals are colored")
    }
}

impl NearestOriginal for OriginalIndex<'_> {
    fn nearest_color(&self, query: Point3) -> Option<Rgb> {
        self.tree.nearest(query).map(|id| self.color(id))
    }
}

/// Colors every point to reconstruct with `method`. Originals are left
/// untouched.
pub fn reconstruct(
    cloud: &ColorPointCloud,
    method: InterpolatorKind,
    params: &MethodParams,
) -> Result<Reconstruction> {
    params.validate()?;
    cloud.validate()?;
    if cloud.original_count() == 0 {
        return Err(Error::EmptySamples);
    }
    let index = OriginalIndex::new(cloud);

    let assignments: Vec<(usize, Option<Rgb>)> = match method {
        InterpolatorKind::Nn3 => {
            let originals: Vec<(usize, Point3, Rgb)> = cloud
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| p.role == Role::Original)
                .map(|(id, p)| (id, p.position, p.color.expect("validated")))
                .collect();
            let targets = reconstruct_ids(cloud);
            let queries: Vec<Point3> = targets.iter().map(|&id| cloud.position(id)).collect();
            let colors = chunked(&queries, |chunk| interpolate_nn3(&originals, chunk))?;
            targets.into_iter().zip(colors.into_iter().map(Some)).collect()
        }
        InterpolatorKind::Idw3 => {
            let targets = reconstruct_ids(cloud);
            map_slice(&targets, |&id| {
                let near = index
                    .tree
                    .k_nearest(cloud.position(id), params.idw_neighbors);
                let color = idw_single(
                    near.into_iter().map(|(o, d2)| (d2.sqrt(), index.color(o))),
                    params.idw_power,
                );
                (id, Some(color))
            })
        }
        InterpolatorKind::Fsmmr | InterpolatorKind::Idw2 | InterpolatorKind::Lin2Delaunay => {
            let blocks = partition_into_blocks(cloud, params.block_size)?;
            let per_block = map_slice(&blocks, |block| {
                block_colors(block, cloud, method, params, &index)
            });
            let mut all = Vec::with_capacity(cloud.len() - cloud.original_count());
            for block in per_block {
                all.extend(block?);
            }
            all
        }
    };

    let mut out = cloud.clone();
    let mut uncolored = Vec::new();
    for (id, color) in assignments {
        match color {
            Some(c) => out.points[id].color = Some(c),
            None => uncolored.push(id),
        }
    }
    uncolored.sort_unstable();
    Ok(Reconstruction {
        cloud: out,
        uncolored,
    })
}

fn reconstruct_ids(cloud: &ColorPointCloud) -> Vec<usize> {
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.role == Role::Reconstruct)
        .map(|(id, _)| id)
        .collect()
}

fn chunked<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&[T]) -> Result<Vec<R>> + Sync + Send,
) -> Result<Vec<R>> {
    let chunks: Vec<&[T]> = items.chunks(1024).collect();
    let mut out = Vec::with_capacity(items.len());
    for part in map_slice(&chunks, |c| f(c)) {
        out.extend(part?);
    }
    Ok(out)
}

fn block_colors(
    block: &Block,
    cloud: &ColorPointCloud,
    method: InterpolatorKind,
    params: &MethodParams,
    index: &OriginalIndex<'_>,
) -> Result<Vec<(usize, Option<Rgb>)>> {
    if method == InterpolatorKind::Fsmmr {
        return Ok(
            upsample_block_with(block, cloud, &params.fsmmr, params.root_policy, index)?
                .into_iter()
                .map(|(id, c)| (id, Some(c)))
                .collect(),
        );
    }
    let is_target = |id: &usize| cloud.points[*id].role == Role::Reconstruct;
    if !block.point_ids.iter().any(is_target) {
        return Ok(Vec::new());
    }
    let mesh = flatten_block(block, cloud, params.root_policy)?;
    let mut originals = Vec::new();
    let mut targets = Vec::new();
    for e in &mesh.entries {
        let p = &cloud.points[e.point_id];
        match p.role {
            Role::Original => originals.push(([e.x, e.y], p.color.expect("validated"))),
            Role::Reconstruct => targets.push((e.point_id, [e.x, e.y])),
        }
    }
    Ok(match method {
        InterpolatorKind::Lin2Delaunay => {
            let queries: Vec<[f64; 2]> = targets.iter().map(|t| t.1).collect();
            targets
                .iter()
                .map(|t| t.0)
                .zip(interpolate_lin2(&originals, &queries))
                .collect()
        }
        _ if originals.is_empty() => targets
            .iter()
            .map(|&(id, _)| (id, index.nearest_color(cloud.position(id))))
            .collect(),
        _ => targets
            .iter()
            .map(|&(id, q)| {
                let mut near: Vec<(f64, usize)> = originals
                    .iter()
                    .enumerate()
                    .map(|(i, (p, _))| (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), i))
                    .collect();
                near.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                near.truncate(params.idw_neighbors);
                let color = idw_single(
                    near.into_iter().map(|(d, i)| (d, originals[i].1)),
                    params.idw_power,
                );
                (id, Some(color))
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::ColorPoint;

    fn mixed_cloud() -> ColorPointCloud {
        let mut points = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                let pos = [i as f64 * 0.5, j as f64 * 0.5, 0.1 * (i as f64).sin()];
                let c = Rgb::new((i * 20) as u8, (j * 20) as u8, 77);
                points.push(if (i + 2 * j) % 3 == 0 {
                    ColorPoint::to_reconstruct(pos)
                } else {
                    ColorPoint::original(pos, c)
                });
            }
        }
        ColorPointCloud::new(points, "grid")
    }

    #[test]
    fn total_methods_color_everything() {
        let cloud = mixed_cloud();
        for method in [
            InterpolatorKind::Fsmmr,
            InterpolatorKind::Nn3,
            InterpolatorKind::Idw3,
            InterpolatorKind::Idw2,
        ] {
            let r = reconstruct(&cloud, method, &MethodParams::default()).unwrap();
            assert!(r.uncolored.is_empty(), "{method}");
            assert!(r.cloud.is_fully_colored(), "{method}");
            for (a, b) in cloud.points.iter().zip(&r.cloud.points) {
                if a.is_original() {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn lin2_reports_hull_exterior_points() {
        let mut cloud = mixed_cloud();
        // A far corner point outside every block hull.
        cloud.points[0] = ColorPoint::to_reconstruct([0.0, 0.0, 0.0]);
        let r = reconstruct(&cloud, InterpolatorKind::Lin2Delaunay, &MethodParams::default()).unwrap();
        assert!(r.uncolored.contains(&0));
        for &id in &r.uncolored {
            assert!(r.cloud.points[id].color.is_none());
        }
    }

    #[test]
    fn requires_originals() {
        let cloud = ColorPointCloud::new(vec![ColorPoint::to_reconstruct([0.0; 3])], "x");
        assert_eq!(
            reconstruct(&cloud, InterpolatorKind::Nn3, &MethodParams::default()),
            Err(Error::EmptySamples)
        );
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let cloud = mixed_cloud();
        let params = MethodParams { block_size: 2.0, ..Default::default() };
        for method in InterpolatorKind::ALL {
            let one = crate::parallel::with_threads(Some(1), || reconstruct(&cloud, method, &params));
            let many = crate::parallel::with_threads(Some(6), || reconstruct(&cloud, method, &params));
            assert_eq!(one, many, "{method}");
        }
    }
}
