use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{sq_dist, Mesh, PointSet};

/// Area-weighted uniform sampling of `n` points on the mesh surface.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.triangle_area(f);
        cdf.push(total);
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let face = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.faces[face].map(|i| mesh.vertices[i]);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
        points.push([0, 1, 2].map(|k| wa * a[k] + wb * b[k] + wc * c[k]));
    }
    PointSet::new(points)
}

/// Indices removed by [`occlude`] and the anchor they were grown around.
///
/// The anchor is drawn uniformly from `ps`; the `k` points closest to it
/// (ties by smallest index) are removed, the anchor itself included.
pub fn occlude_indices(ps: &PointSet, seed: u64, k: usize) -> Result<(usize, Vec<usize>)> {
    if k >= ps.len() {
        return Err(Error::Invalid(format!(
            "cannot remove {k} of {} points",
            ps.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = rng.random_range(0..ps.len());
    if k == 0 {
        return Ok((anchor, Vec::new()));
    }
    let a = ps.points()[anchor];
    let dist: Vec<f64> = ps.iter().map(|p| sq_dist(p, &a)).collect();
    let mut idx: Vec<usize> = (0..ps.len()).collect();
    let by_dist = |x: &usize, y: &usize| dist[*x].total_cmp(&dist[*y]).then(x.cmp(y));
    idx.select_nth_unstable_by(k - 1, by_dist);
    let mut removed = idx[..k].to_vec();
    removed.sort_unstable();
    Ok((anchor, removed))
}

/// Removes the `k` nearest neighbours of a random anchor point, keeping the
/// order of the survivors.
pub fn occlude(ps: &PointSet, seed: u64, k: usize) -> Result<PointSet> {
    let (_, removed) = occlude_indices(ps, seed, k)?;
    let mut keep = vec![true; ps.len()];
    for i in removed {
        keep[i] = false;
    }
    Ok(PointSet {
        points: ps
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect(),
    })
}
