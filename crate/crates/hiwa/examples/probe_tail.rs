use hiwa::{datagen, solver};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    // Fig-1 config at mu=0.01: how does the primal residual decay?
    let spec = datagen::GenSpec {
        clusters: 5, intrinsic_dim: 2, ambient_dim: 6, samples_per_cluster: 100,
        subspace_mode: datagen::SubspaceMode::Random, noise_sigma: 0.0,
        permute_clusters: true, seed: 1000, shared_samples: false, identity_transform: false,
    };
    let (x, y, _) = datagen::generate(&spec).unwrap();
    for mu in [0.01, 0.02] {
        let config = solver::SolverConfig { mu, seed: 0, outer_max_iters: 600, ..Default::default() };
        let t0 = std::time::Instant::now();
        let r = solver::solve(&x, &y, &config).unwrap();
        let tr = &r.primal_residual_trace;
        let pick = |i: usize| if i < tr.len() { tr[i] } else { f64::NAN };
        println!("mu={mu}: converged={} iters={} ({:.0}s) primal at 50/100/200/300/400/last: {:.1e} {:.1e} {:.1e} {:.1e} {:.1e} {:.1e}",
            r.converged, r.iterations, t0.elapsed().as_secs_f64(),
            pick(49), pick(99), pick(199), pick(299), pick(399), tr.last().unwrap());
    }
    // Flat mode S=1 on a symmetric Gaussian, mu=0.01.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cloud = DMatrix::from_fn(3, 60, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cloud2 = DMatrix::from_fn(3, 60, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xf = hiwa::ClusteredDataset::new(vec![cloud]).unwrap();
    let yf = hiwa::ClusteredDataset::new(vec![cloud2]).unwrap();
    let config = solver::SolverConfig { mu: 0.01, mode: solver::AlignmentMode::Flat, seed: 4, ..Default::default() };
    let r = solver::solve(&xf, &yf, &config).unwrap();
    println!("flat S=1 mu=0.01: converged={} iters={} primal_last={:.1e}", r.converged, r.iterations, r.primal_residual_trace.last().unwrap());
}
