use fpt::deform::{apply_rbf, control_grid, sample_rbf};
use fpt::geometry::{nearest_neighbors, occlude, occlude_indices, sq_dist, Point, PointSet};
use fpt::loss::{chamfer, ChamferConfig, ChamferMode};
use fpt::net::{FptArch, FptModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
    PointSet::new(
        (0..n)
            .map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

/// Points on a coarse integer lattice so that distance ties are common.
fn lattice_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
    PointSet::new(
        (0..n)
            .map(|_| [0; 3].map(|_| rng.random_range(-3i32..=3) as f64))
            .collect(),
    )
    .unwrap()
}

fn permuted(ps: &PointSet, perm: &[usize]) -> PointSet {
    ps.select(perm)
}

pub fn exact_symmetries() -> Outcome {
    const INSTANCES: u64 = 20;
    const N: usize = 64;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = FptModel::<f32>::init(FptArch::compact(), seed).unwrap();
        // a zero last layer would make equivariance vacuous
        let &(w_last, _) = model.transformer_layer_ids().last().unwrap();
        for v in model.params.get_mut(w_last).value.data_mut() {
            *v = rng.random_range(-0.1f32..0.1);
        }
        let source = random_cloud(&mut rng, N);
        let target = random_cloud(&mut rng, N);
        let mut perm: Vec<usize> = (0..N).collect();
        perm.shuffle(&mut rng);
        let src_p = permuted(&source, &perm);
        let tgt_p = permuted(&target, &perm);

        let g = model.extract_global_feature(&source).unwrap();
        let g_p = model.extract_global_feature(&src_p).unwrap();
        ensure!(
            g.data().iter().map(|v| v.to_bits()).eq(g_p.data().iter().map(|v| v.to_bits())),
            "seed {seed}: global feature changed under source permutation"
        );

        let field = model.fpt_forward(&source, &target).unwrap();
        let field_tp = model.fpt_forward(&source, &tgt_p).unwrap();
        ensure!(
            field.displacements.data().iter().map(|v| v.to_bits()).eq(field_tp.displacements.data().iter().map(|v| v.to_bits())),
            "seed {seed}: displacements changed under target permutation"
        );
        ensure!(
            field.displacements.data().iter().any(|&v| v != 0.0),
            "seed {seed}: displacement field is identically zero"
        );
        let field_sp = model.fpt_forward(&src_p, &target).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            let a = field.displacements.row(i);
            let b = field_sp.displacements.row(k);
            ensure!(
                a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
                "seed {seed}: displacement of source point {i} differs after permutation"
            );
        }

        for squared in [true, false] {
            let cfg = ChamferConfig { mode: ChamferMode::TwoWay, squared };
            let ab = chamfer(&source, &target, &cfg).unwrap();
            let ba = chamfer(&target, &source, &cfg).unwrap();
            ensure!(ab.to_bits() == ba.to_bits(), "seed {seed}: chamfer {ab} != {ba}");
        }
    }
    Ok(format!(
        "{INSTANCES} random {N}-point instances: global feature, displacement equivariance, chamfer symmetry all bitwise"
    ))
}

fn brute_nearest(q: &Point, target: &PointSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, p) in target.iter().enumerate() {
        let d = sq_dist(q, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Keeps every point not among the `k` closest to the anchor under the
/// (distance, index) order.
fn brute_occlude(ps: &PointSet, anchor: usize, k: usize) -> PointSet {
    let a = ps.points()[anchor];
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&x, &y| {
        sq_dist(&ps.points()[x], &a)
            .partial_cmp(&sq_dist(&ps.points()[y], &a))
            .unwrap()
            .then(x.cmp(&y))
    });
    let mut removed = vec![false; ps.len()];
    for &i in &order[..k] {
        removed[i] = true;
    }
    let kept: Vec<usize> = (0..ps.len()).filter(|&i| !removed[i]).collect();
    ps.select(&kept)
}

pub fn oracle_equivalence() -> Outcome {
    const INSTANCES: u64 = 200;
    let mut ties = 0usize;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = rng.random_range(1..=256);
        let m = rng.random_range(1..=256);
        let lattice = seed % 2 == 1;
        let (query, target) = if lattice {
            (lattice_cloud(&mut rng, n), lattice_cloud(&mut rng, m))
        } else {
            (random_cloud(&mut rng, n), random_cloud(&mut rng, m))
        };
        let fast = nearest_neighbors(&query, &target).unwrap();
        for (q, got) in query.iter().zip(&fast) {
            let want = brute_nearest(q, &target);
            ensure!(
                *got == want,
                "seed {seed}: nearest of {q:?} is {got:?}, brute force says {want:?}"
            );
            if target.iter().filter(|p| sq_dist(q, p) == want.1).count() > 1 {
                ties += 1;
            }
        }

        if n >= 2 {
            let k = rng.random_range(0..n);
            let occ_seed = rng.random::<u64>();
            let got = occlude(&query, occ_seed, k).unwrap();
            let (anchor, _) = occlude_indices(&query, occ_seed, k).unwrap();
            let want = brute_occlude(&query, anchor, k);
            ensure!(got == want, "seed {seed}: occlude(n={n}, k={k}) differs from brute force");
        }
    }
    ensure!(ties > 0, "lattice instances produced no distance ties");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..20 {
        let ps = random_cloud(&mut rng, 2048);
        let n = occlude(&ps, seed, 512).unwrap().len();
        ensure!(n == 1536, "occlude(2048, 512) kept {n} points");
    }
    Ok(format!(
        "{INSTANCES} instances (n ≤ 256, {ties} tied queries) match brute force; occlude(2048, 512) keeps 1536"
    ))
}

pub fn rbf_contract() -> Outcome {
    const SEEDS: u64 = 100;
    const TOL: f64 = 1e-8;
    let controls = control_grid(3);
    ensure!(controls.len() == 27, "expected 27 controls, got {}", controls.len());
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let def = sample_rbf(seed, 0.1).unwrap();
        for (c, s) in def.controls.iter().zip(&def.shifts) {
            let d = def.displacement(c);
            let err = (0..3).map(|k| (d[k] - s[k]).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    ensure!(worst < TOL, "worst control-point error {worst:.3e} ≥ {TOL:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cloud = random_cloud(&mut rng, 500);
    for seed in 0..10 {
        let def = sample_rbf(seed, 0.0).unwrap();
        ensure!(def.is_identity(), "zero-shift sample {seed} has nonzero weights");
        ensure!(apply_rbf(&def, &cloud).unwrap() == cloud, "zero-shift sample {seed} moved points");
    }
    Ok(format!(
        "{SEEDS} seeds: worst interpolation error at 27 controls {worst:.2e} < {TOL:e}; zero shift is the identity"
    ))
}
