use iscan::graph::generate_er;
use iscan::matrix::Matrix;
use iscan::score::{analytic_gaussian_score, estimate_score_gradient, jacobian_variance, KernelConfig};
use iscan::seed;
use iscan::simulate::{sample_environment, MechanismMap, MechanismSpec, NodeMechanism, NoiseSpec};
use rand::Rng;
use rand_distr::StandardNormal;

fn sin_anm(g: &iscan::graph::Dag) -> MechanismMap {
    let mut mechs = MechanismMap::new();
    for j in 0..g.num_nodes() {
        let pa: Vec<usize> = g.parents(j).into_iter().collect();
        if !pa.is_empty() {
            mechs.insert(j, NodeMechanism::single(pa, MechanismSpec::SinSquare));
        }
    }
    mechs
}

#[test]
fn rmse_to_gaussian_score_shrinks_with_samples() {
    let cfg = KernelConfig::with_eta(0.05);
    let mut avg = Vec::new();
    for m in [100usize, 400, 1600] {
        let mut total = 0.0;
        for s in 0..20u64 {
            let mut rng = seed::stream(s, "rmse", m as u64);
            let x = Matrix::from_fn(m, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let est = estimate_score_gradient(&x, &cfg).unwrap();
            let truth = analytic_gaussian_score(&[0.0], &Matrix::identity(1), &x).unwrap();
            let mse: f64 = (0..m)
                .map(|i| (est.get(i, 0) - truth.gradients.get(i, 0)).powi(2))
                .sum::<f64>()
                / m as f64;
            total += mse.sqrt();
        }
        avg.push(total / 20.0);
    }
    assert!(avg[0] >= avg[1] && avg[1] >= avg[2], "{avg:?}");
}

#[test]
fn leaf_of_a_chain_has_smaller_variance() {
    let g = iscan::graph::Dag::new(2, [(0, 1)]).unwrap();
    let data = sample_environment(&g, &sin_anm(&g), &NoiseSpec::gaussian(1.0).unwrap(), 1000, 5).unwrap();
    let var = jacobian_variance(&data.values, &KernelConfig::with_eta(0.05)).unwrap().var;
    assert!(var[1] < var[0], "{var:?}");
}

#[test]
fn lowest_variance_node_is_usually_a_leaf() {
    let noise = NoiseSpec::gaussian(1.0).unwrap();
    let cfg = KernelConfig::with_eta(0.05);
    let mut hits = 0;
    for s in 0..20u64 {
        let g = generate_er(5, 2.0, 1000 + s).unwrap();
        let data = sample_environment(&g, &sin_anm(&g), &noise, 500, 2000 + s).unwrap();
        let var = jacobian_variance(&data.values, &cfg).unwrap().var;
        let lowest = (0..5).min_by(|&a, &b| var[a].total_cmp(&var[b])).unwrap();
        if g.is_leaf(lowest) {
            hits += 1;
        }
    }
    assert!(hits >= 16, "{hits}/20");
}
