use hiwa::{datagen, solver, diagnostics};
fn main() {
    for seed in 0..8u64 {
        let spec = datagen::GenSpec {
            clusters: 3, intrinsic_dim: 2, ambient_dim: 4, samples_per_cluster: 30,
            subspace_mode: datagen::SubspaceMode::Random, noise_sigma: 0.0,
            permute_clusters: false, seed, shared_samples: true, identity_transform: true,
        };
        let (x, y, truth) = datagen::generate(&spec).unwrap();
        let config = solver::SolverConfig { seed, ..Default::default() };
        let r = solver::solve(&x, &y, &config).unwrap();
        let align = diagnostics::alignment_error(&r.transform, &truth.r_star, &x.pooled()).unwrap();
        let corr = diagnostics::correspondence_error(&r.correspondence, &truth.p_star).unwrap();
        println!("seed {seed}: align {align:.4e} corr {corr:.4e} converged {} iters {} primal_last {:.2e} gamma1 {:.3} gamma2 {:.3}",
            r.converged, r.iterations, r.primal_residual_trace.last().unwrap(), r.config.gamma1, r.config.gamma2);
    }
}
