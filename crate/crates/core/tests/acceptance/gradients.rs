use fpt::geometry::{nearest_neighbors, PointSet};
use fpt::loss::{chamfer_on_tape, ChamferConfig, ChamferMode};
use fpt::net::{points_to_tensor, FptArch, FptModel};
use fpt::numeric::ops::conditioned_linear_forward;
use fpt::numeric::{
    finite_difference_gradient, linear_forward, maxpool_points, relu_forward, NodeId, ParamId, ParamStore, Tape, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;
const POINTS: usize = 16;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
    PointSet::new(
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect(),
    )
    .unwrap()
}

/// `Σ r ⊙ y` recorded as an external scalar.
fn project(tape: &mut Tape<'_, f64>, y: NodeId, r: &Tensor<f64>) -> NodeId {
    let value: f64 = tape.value(y).data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
    tape.external_scalar(y, value, r.clone()).unwrap()
}

/// Largest per-tensor relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between
/// tape gradients and central differences over every parameter.
fn check_store<F>(store: &ParamStore<f64>, graph: F) -> f64
where
    F: Fn(&mut Tape<'_, f64>) -> NodeId,
{
    let mut tape = Tape::new(store);
    let loss = graph(&mut tape);
    let grads = tape.backward(loss, 1.0).unwrap();

    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<ParamId>>() {
        let theta = store.value(id).data().to_vec();
        let numeric = finite_difference_gradient(
            |t| {
                let mut s = store.clone();
                s.get_mut(id).value.data_mut().copy_from_slice(t);
                let mut tape = Tape::new(&s);
                let l = graph(&mut tape);
                tape.value(l).data()[0]
            },
            &theta,
            H,
        );
        let analytic = grads.get(id).data();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nn);
        let rel = if denom < 1e-12 { diff } else { diff / denom };
        worst = worst.max(rel);
    }
    worst
}

fn layer_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&mut rng, &[POINTS, 3], 1.0);
    let mut store = ParamStore::<f64>::new();
    let w1 = store.add("w1", random_tensor(&mut rng, &[3, 6], 1.0)).unwrap();
    let b1 = store.add("b1", random_tensor(&mut rng, &[6], 0.5)).unwrap();
    let w2 = store.add("w2", random_tensor(&mut rng, &[6, 4], 1.0)).unwrap();
    let b2 = store.add("b2", random_tensor(&mut rng, &[4], 0.5)).unwrap();
    let wc = store.add("wc", random_tensor(&mut rng, &[3 + 4, 3], 1.0)).unwrap();
    let bc = store.add("bc", random_tensor(&mut rng, &[3], 0.5)).unwrap();
    let r6 = random_tensor(&mut rng, &[POINTS, 6], 1.0);
    let r4 = random_tensor(&mut rng, &[4], 1.0);
    let r8 = random_tensor(&mut rng, &[8], 1.0);
    let r3 = random_tensor(&mut rng, &[POINTS, 3], 1.0);
    let target = random_points(&mut rng, POINTS);

    let linear = check_store(&store, |t| {
        let xi = t.input(x.clone());
        let y = t.linear(xi, w1, b1).unwrap();
        project(t, y, &r6)
    });
    let relu = check_store(&store, |t| {
        let xi = t.input(x.clone());
        let y = t.linear(xi, w1, b1).unwrap();
        let y = t.relu(y);
        project(t, y, &r6)
    });
    let maxpool = check_store(&store, |t| {
        let xi = t.input(x.clone());
        let h = t.linear(xi, w1, b1).unwrap();
        let h = t.relu(h);
        let h = t.linear(h, w2, b2).unwrap();
        let g = t.maxpool(h).unwrap();
        project(t, g, &r4)
    });
    let concat = check_store(&store, |t| {
        let xi = t.input(x.clone());
        let h = t.linear(xi, w1, b1).unwrap();
        let h = t.linear(h, w2, b2).unwrap();
        let g = t.maxpool(h).unwrap();
        let g2 = t.concat(g, g);
        project(t, g2, &r8)
    });
    let conditioned = check_store(&store, |t| {
        let xi = t.input(x.clone());
        let h = t.linear(xi, w1, b1).unwrap();
        let h = t.linear(h, w2, b2).unwrap();
        let g = t.maxpool(h).unwrap();
        let y = t.conditioned_linear(xi, g, wc, bc).unwrap();
        let y = t.add(xi, y).unwrap();
        project(t, y, &r3)
    });
    let sum = check_store(&store, |t| {
        let xi = t.input(x.clone());
        let y = t.linear(xi, w1, b1).unwrap();
        t.sum(y)
    });
    let mut chamfer = 0.0f64;
    for mode in [ChamferMode::TwoWay, ChamferMode::OneWaySourceToTarget] {
        for squared in [true, false] {
            let cfg = ChamferConfig { mode, squared };
            chamfer = chamfer.max(check_store(&store, |t| {
                let xi = t.input(x.clone());
                let g = xi_cond(t, xi, w1, b1, w2, b2);
                let y = t.conditioned_linear(xi, g, wc, bc).unwrap();
                chamfer_on_tape(t, y, &target, &cfg).unwrap()
            }));
        }
    }
    vec![
        ("linear", linear),
        ("relu", relu),
        ("maxpool", maxpool),
        ("concat", concat),
        ("conditioned_linear+add", conditioned),
        ("sum", sum),
        ("chamfer", chamfer),
    ]
}

fn xi_cond(t: &mut Tape<'_, f64>, xi: NodeId, w1: ParamId, b1: ParamId, w2: ParamId, b2: ParamId) -> NodeId {
    let h = t.linear(xi, w1, b1).unwrap();
    let h = t.relu(h);
    let h = t.linear(h, w2, b2).unwrap();
    t.maxpool(h).unwrap()
}

/// Which side of every kink the composed loss sits on: ReLU signs, max-pool
/// winners and Chamfer nearest-neighbour assignments.
fn branch_signature(model: &FptModel<f64>, params: &ParamStore<f64>, source: &PointSet, target: &PointSet) -> Vec<usize> {
    let mut sig = Vec::new();
    let signs = |t: &Tensor<f64>, sig: &mut Vec<usize>| sig.extend(t.data().iter().map(|&v| (v > 0.0) as usize));
    let mut globals = Vec::new();
    for ps in [source, target] {
        let mut h = points_to_tensor::<f64>(ps);
        let layers = model.feature_layer_ids();
        for (i, &(w, b)) in layers.iter().enumerate() {
            h = linear_forward(&h, params.value(w), params.value(b)).unwrap();
            if i + 1 < layers.len() {
                signs(&h, &mut sig);
                h = relu_forward(&h);
            }
        }
        let (g, argmax) = maxpool_points(&h).unwrap();
        sig.extend(argmax);
        globals.extend_from_slice(g.data());
    }
    let global = Tensor::new(vec![globals.len()], globals).unwrap();
    let layers = model.transformer_layer_ids();
    let (w0, b0) = layers[0];
    let mut h = conditioned_linear_forward(&points_to_tensor(source), &global, params.value(w0), params.value(b0)).unwrap();
    for &(w, b) in &layers[1..] {
        signs(&h, &mut sig);
        h = relu_forward(&h);
        h = linear_forward(&h, params.value(w), params.value(b)).unwrap();
    }
    let moved = PointSet::new(
        source
            .iter()
            .zip(h.data().chunks_exact(3))
            .map(|(p, d)| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
            .collect(),
    )
    .unwrap();
    sig.extend(nearest_neighbors(&moved, target).unwrap().into_iter().map(|(j, _)| j));
    sig.extend(nearest_neighbors(target, &moved).unwrap().into_iter().map(|(j, _)| j));
    sig
}

/// True when some `±h` coordinate step changes the branch signature, so the
/// central difference straddles a kink.
fn stencil_crosses_kink(model: &FptModel<f64>, source: &PointSet, target: &PointSet) -> bool {
    let base = branch_signature(model, &model.params, source, target);
    let mut probe = model.params.clone();
    for id in model.params.ids().collect::<Vec<_>>() {
        for k in 0..model.params.value(id).len() {
            let v = model.params.value(id).data()[k];
            for step in [H, -H] {
                probe.get_mut(id).value.data_mut()[k] = v + step;
                if branch_signature(model, &probe, source, target) != base {
                    return true;
                }
            }
            probe.get_mut(id).value.data_mut()[k] = v;
        }
    }
    false
}

/// FPT forward plus two-way Chamfer on a small network with every weight
/// nonzero. `None` when the stencil straddles a kink.
fn composed_error(seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let arch = FptArch {
        feature_widths: vec![3, 8, 16],
        transformer_hidden: vec![16, 8],
    };
    let mut model = FptModel::<f64>::init(arch, seed).unwrap();
    for p in model.params.iter_mut() {
        for v in p.value.data_mut() {
            *v += 0.3 * rng.random_range(-1.0..1.0);
        }
    }
    let source = random_points(&mut rng, POINTS);
    let target = random_points(&mut rng, POINTS);
    if stencil_crosses_kink(&model, &source, &target) {
        return None;
    }
    let cfg = ChamferConfig::default();
    let store = model.params.clone();
    Some(check_store(&store, |t| {
        let nodes = model.forward_on_tape(t, &source, &target).unwrap();
        chamfer_on_tape(t, nodes.moved, &target, &cfg).unwrap()
    }))
}

pub fn gradient_oracle() -> Outcome {
    let mut worst_layer = ("", 0.0f64);
    let mut worst_full = 0.0f64;
    for seed in 0..INSTANCES {
        for (name, err) in layer_errors(seed) {
            if err > worst_layer.1 {
                worst_layer = (name, err);
            }
        }
    }
    let mut accepted = 0;
    let mut redrawn = 0;
    let mut seed = 0;
    while accepted < INSTANCES {
        match composed_error(seed) {
            Some(err) => {
                worst_full = worst_full.max(err);
                accepted += 1;
            }
            None => redrawn += 1,
        }
        seed += 1;
    }
    ensure!(
        worst_layer.1 < TOL && worst_full < TOL,
        "max relative error layer {} = {:.3e}, composed FPT+Chamfer = {:.3e} (tolerance {TOL:e})",
        worst_layer.0,
        worst_layer.1,
        worst_full
    );
    Ok(format!(
        "{INSTANCES} random {POINTS}-point instances, h={H:e}: worst layer ({}) {:.2e}, composed FPT+Chamfer {:.2e} < {TOL:e} ({redrawn} composed instances redrawn for a branch switch inside the stencil)",
        worst_layer.0, worst_layer.1, worst_full
    ))
}
