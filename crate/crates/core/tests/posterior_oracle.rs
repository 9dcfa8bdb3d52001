use rcoda::inference::{sample_posterior, McmcSettings, Prior, Uniform};
use rcoda::potts::{exact_log_likelihood, gibbs_sample, PottsModel};
use rcoda::seed::RngSeed;
use rcoda::{Backend, LabelField, LatticeGeometry, Order};

/// Posterior mean of beta under a uniform prior by midpoint quadrature.
fn quadrature_mean(field: &LabelField, geometry: &LatticeGeometry, prior: Uniform) -> f64 {
    let n = 2000;
    let h = prior.width() / n as f64;
    let model = PottsModel::new(geometry.clone(), field.q(), 0.0).unwrap();
    let grid: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let b = prior.lo + (k as f64 + 0.5) * h;
            (b, exact_log_likelihood(field, &model.with_beta(b).unwrap()).unwrap())
        })
        .collect();
    let m = grid.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
    let (num, den) = grid.iter().fold((0.0, 0.0), |(a, b), &(beta, ll)| {
        let w = (ll - m).exp();
        (a + beta * w, b + w)
    });
    num / den
}

#[test]
fn exact_chain_matches_quadrature_on_3x3() {
    let g = LatticeGeometry::new(3, 3, Order::First).unwrap();
    let field = gibbs_sample(&PottsModel::new(g.clone(), 2, 0.5).unwrap(), 50, RngSeed(11), None).unwrap();
    let prior = Prior::simulation();
    let oracle = quadrature_mean(&field, &g, prior.beta);
    let settings = McmcSettings {
        iterations: 60_000,
        burn_in: 2000,
        seed: RngSeed(5),
        ..Default::default()
    };
    let chain = sample_posterior(&field, &g, &Backend::Exact, &prior, &settings).unwrap();
    let mean = chain.summary_beta(0.95).unwrap().mean;
    assert!((mean - oracle).abs() < 0.01, "chain {mean} vs quadrature {oracle}");
}

#[test]
fn pseudo_chain_matches_its_own_quadrature() {
    // Same oracle for pseudo-likelihood: the integrand is cheap and exact.
    let g = LatticeGeometry::new(8, 8, Order::First).unwrap();
    let field = gibbs_sample(&PottsModel::new(g.clone(), 3, 0.6).unwrap(), 100, RngSeed(3), None).unwrap();
    let prior = Prior::simulation();
    let n = 2000;
    let h = prior.beta.width() / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    let lls: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let b = (k as f64 + 0.5) * h;
            (b, rcoda::likelihood::pseudo_loglik(&field, 3, b, &g).unwrap())
        })
        .collect();
    let m = lls.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    for (b, ll) in lls {
        let w = (ll - m).exp();
        num += b * w;
        den += w;
    }
    let settings = McmcSettings { iterations: 40_000, seed: RngSeed(8), ..Default::default() };
    let chain = sample_posterior(&field, &g, &Backend::Pseudo, &prior, &settings).unwrap();
    let mean = chain.summary_beta(0.95).unwrap().mean;
    assert!((mean - num / den).abs() < 0.01, "chain {mean} vs quadrature {}", num / den);
}
