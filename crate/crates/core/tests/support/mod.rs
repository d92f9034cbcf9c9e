//! Generators and invariant checks shared by the integration test targets.

#![allow(dead_code)]

use egopose::classify::{forest_proba, train_forest, ClusterDistribution, ForestParams, KnnModel};
use egopose::clustering::{build_neighbor_graph, kmeans_vectors, ExemplarBank};
use egopose::pathopt::{
    brute_force, energy_of_path, solve_exact_dp, solve_paper_dp, solve_path_cluster, PathParams, Trellis,
    TrellisNode,
};
use egopose::skeleton::{normalize_pose, Frame, Pose, NUM_JOINTS, POSE_DIM};
use egopose::Error;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn zero_pose() -> Pose {
    Pose::from_slice(&[0.0; POSE_DIM], Frame::WearerLocal).unwrap()
}

/// Random sensor-frame pose with well separated, non-vertical shoulders.
pub fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    loop {
        let values: Vec<f64> = (0..POSE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = Pose::from_slice(&values, Frame::Sensor).unwrap();
        let across = p.joint(egopose::skeleton::Joint::ShoulderRight) - p.joint(egopose::skeleton::Joint::ShoulderLeft);
        if across.xy().norm() > 0.2 {
            return p;
        }
    }
}

fn max_joint_gap(a: &Pose, b: &Pose) -> f64 {
    (0..NUM_JOINTS)
        .map(|j| (a.joints()[j] - b.joints()[j]).abs().max())
        .fold(0.0, f64::max)
}

pub fn check_normalization(seed: u64, yaw: f64, shift: [f64; 3]) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_pose(&mut rng);
    let up = Vector3::z();
    let once = normalize_pose(&p, &up).unwrap();
    let twice = normalize_pose(&once, &up).unwrap();
    prop_assert!(max_joint_gap(&once, &twice) < 1e-9, "not idempotent");

    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let t = Vector3::from(shift);
    let moved = p.map_joints(|v| r * v + t).unwrap();
    let again = normalize_pose(&moved, &up).unwrap();
    prop_assert!(max_joint_gap(&once, &again) < 1e-9, "yaw or translation changed the result");
    Ok(())
}

fn check_distribution(d: &ClusterDistribution, k: usize) -> Result<(), TestCaseError> {
    prop_assert_eq!(d.len(), k);
    prop_assert!(d.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
    prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    Ok(())
}

pub fn check_classifier_distributions(seed: u64, k: usize) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 60;
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    // Cycle the first k samples through every class so no label set is constant.
    let classes: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    let forest = train_forest(&features, &classes, k, ForestParams { n_trees: 5, seed }).unwrap();
    let knn = KnnModel::new(features, classes, (0..n).collect(), k, 5).unwrap();
    for _ in 0..10 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
        check_distribution(&forest_proba(&forest, &q).unwrap(), k)?;
        check_distribution(&knn.proba(&q).unwrap(), k)?;
    }
    Ok(())
}

pub fn check_neighbor_graph(seed: u64, len: usize, k: usize) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cluster_of: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
    let breaks: Vec<usize> = (1..len).filter(|_| rng.random::<f64>() < 0.2).collect();
    let g = build_neighbor_graph(&cluster_of, &breaks, k);
    for (a, ns) in g.iter().enumerate() {
        prop_assert!(ns.contains(&a));
        for &b in ns {
            prop_assert!(g[b].contains(&a), "{a} -> {b} has no reverse edge");
        }
    }
    for i in 1..len {
        if !breaks.contains(&i) {
            prop_assert!(g[cluster_of[i - 1]].contains(&cluster_of[i]));
        }
    }
    Ok(())
}

pub fn check_kmeans_monotone(seed: u64, n: usize, k: usize) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
    let r = kmeans_vectors(&data, k, seed, 50).unwrap();
    for w in r.objective_history.windows(2) {
        prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "objective rose {} -> {}", w[0], w[1]);
    }
    Ok(())
}

/// Random bank of zero poses with random cluster labels and sequence breaks,
/// plus random candidate sets with costs in `[0, 1)`.
pub fn random_trellis(seed: u64, frames: usize, per: usize, bank_len: usize, k: usize) -> (ExemplarBank, Vec<Vec<TrellisNode>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cluster_of: Vec<usize> = (0..bank_len).map(|_| rng.random_range(0..k)).collect();
    let breaks: Vec<usize> = (1..bank_len).filter(|_| rng.random::<f64>() < 0.1).collect();
    let neighbors = build_neighbor_graph(&cluster_of, &breaks, k);
    let bank = ExemplarBank::from_parts(vec![zero_pose(); bank_len], cluster_of, breaks, neighbors).unwrap();
    let frames = (0..frames)
        .map(|_| {
            let mut poses: Vec<usize> = (0..bank_len).collect();
            for a in 0..per {
                let b = rng.random_range(a..bank_len);
                poses.swap(a, b);
            }
            poses[..per]
                .iter()
                .map(|&pose| TrellisNode { pose, cost: rng.random::<f64>() })
                .collect()
        })
        .collect();
    (bank, frames)
}

/// Solver paths must re-evaluate to their reported energy, and
/// brute force = exact <= paper.
pub fn check_solvers(seed: u64, frames: usize, per: usize) -> Result<(), TestCaseError> {
    let (bank, nodes) = random_trellis(seed, frames, per, 20, 4);
    let tr = Trellis::new(&bank, nodes).unwrap();
    let p = PathParams::default();
    let bf = match brute_force(&tr, &p) {
        Ok(bf) => bf,
        Err(Error::Infeasible { .. }) => {
            let exact_infeasible = matches!(solve_exact_dp(&tr, &p), Err(Error::Infeasible { .. }));
            prop_assert!(exact_infeasible);
            return Ok(());
        }
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    };
    let exact = solve_exact_dp(&tr, &p).unwrap();
    let paper = solve_paper_dp(&tr, &p).unwrap();
    for path in [&bf, &exact, &paper] {
        let e = energy_of_path(&path.indices, &tr, &p).unwrap();
        prop_assert!((e.total - path.energy.total).abs() < 1e-9);
        prop_assert!((e.unary + e.step + e.speed + e.stationary - e.total).abs() < 1e-9);
    }
    prop_assert_eq!(bf.energy.total, exact.energy.total);
    prop_assert!(paper.energy.total >= exact.energy.total);
    Ok(())
}

/// Energy of Path-Cluster minus energy of the single-history recursion on the same
/// trellis, or `None` when the restricted trellis has no path.
pub fn path_cluster_gap(seed: u64, frames: usize, per: usize) -> Option<f64> {
    let (bank, nodes) = random_trellis(seed, frames, per, 20, 4);
    let tr = Trellis::new(&bank, nodes).ok()?;
    let p = PathParams::default();
    let paper = solve_paper_dp(&tr, &p).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let dists: Vec<ClusterDistribution> = (0..frames)
        .map(|_| ClusterDistribution::from_weights((0..4).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect();
    let pc = solve_path_cluster(&tr, &dists, &p).ok()?;
    Some(pc.energy.total - paper.energy.total)
}
