use hiwa::{datagen, solver, diagnostics};

fn scale_of(x: &hiwa::ClusteredDataset, y: &hiwa::ClusteredDataset, seed: u64) -> f64 {
    let r0 = hiwa::manifold::random_orthogonal(x.dim(), seed);
    let pooled = hiwa::transport::build_pair_cost(&x.pooled(), &y.pooled(), &r0).unwrap();
    let mut v: Vec<f64> = pooled.entries().iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn main() {
    let seeds = 8u64;
    let mut datasets = vec![];
    for seed in 0..seeds {
        let spec = datagen::GenSpec {
            clusters: 5, intrinsic_dim: 2, ambient_dim: 6, samples_per_cluster: 100,
            subspace_mode: datagen::SubspaceMode::Random, noise_sigma: 0.0,
            permute_clusters: true, seed: 1000 + seed, shared_samples: false, identity_transform: false,
        };
        datasets.push(datagen::generate(&spec).unwrap());
    }
    for (g1f, g2f, mu) in [
        (0.1, 0.05, 0.005), (0.1, 0.05, 0.003), (0.2, 0.05, 0.01), (0.1, 0.02, 0.01),
    ] {
        let mut ok = 0;
        let mut details = vec![];
        let t0 = std::time::Instant::now();
        for (seed, (x, y, truth)) in datasets.iter().enumerate() {
            let seed = seed as u64;
            let m = scale_of(x, y, seed);
            let config = solver::SolverConfig {
                gamma1: Some(g1f * m), gamma2: Some(g2f * m), mu,
                seed, ..Default::default()
            };
            let r = solver::solve(x, y, &config).unwrap();
            let align = diagnostics::alignment_error(&r.transform, &truth.r_star, &x.pooled()).unwrap();
            let corr = diagnostics::correspondence_error(&r.correspondence, &truth.p_star).unwrap();
            if align < 0.05 && corr < 0.1 { ok += 1; }
            details.push(format!("{align:.0e}/{corr:.0e}/{}", r.iterations));
        }
        println!("g1={g1f}m g2={g2f}m mu={mu}: {ok}/{seeds} ({:.0}s) {}", t0.elapsed().as_secs_f64(), details.join(" "));
    }
}
