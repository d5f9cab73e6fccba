use qjpd_core::detector::{DetectorParams, HyperfineState, ReadoutModel};
use qjpd_core::distributions::{
    f2_count_pmf, pmf_detected_photons, poisson_count_pmf, sample_cascade, sample_poisson,
    CascadeParams, Pmf, Variant, DEFAULT_TAIL_CUTOFF,
};
use qjpd_core::histogram::CountHistogram;
use qjpd_core::rng::stream;
use qjpd_core::validation::chi_square_gof;

const DRAWS: u64 = 200_000;

fn detected_pmf(params: &CascadeParams) -> Pmf {
    Pmf::from_fn(1e-13, 1, |d| pmf_detected_photons(d as u64, params, Variant::Corrected)).unwrap()
}

#[test]
fn poisson_sampler_matches_pmf() {
    for (i, mu) in [0.3, 1.146, 7.5, 40.0].into_iter().enumerate() {
        let mut rng = stream(11, i as u64, 0, "poisson");
        let hist: CountHistogram = (0..DRAWS).map(|_| sample_poisson(mu, &mut rng)).collect();
        let pmf = poisson_count_pmf(mu, DEFAULT_TAIL_CUTOFF).unwrap();
        let chi = chi_square_gof(&hist, &pmf).unwrap();
        assert!(chi.p_value > 1e-4, "mu = {mu}: {chi:?}");
        assert!(pmf.total_variation(&hist.to_pmf().unwrap()) < 0.01);
    }
}

#[test]
fn cascade_sampler_matches_thinned_geometric() {
    for (i, (p, eta)) in [(0.99, 0.0475), (0.7, 0.5), (0.3, 0.9)].into_iter().enumerate() {
        let params = CascadeParams::new(p, eta, 0.0).unwrap();
        let mut rng = stream(12, i as u64, 0, "cascade");
        let mut scattered_total = 0u64;
        let hist: CountHistogram = (0..DRAWS)
            .map(|_| {
                let (s, d) = sample_cascade(&params, &mut rng);
                assert!(s >= 1 && d <= s);
                scattered_total += s;
                d
            })
            .collect();
        let chi = chi_square_gof(&hist, &detected_pmf(&params)).unwrap();
        assert!(chi.p_value > 1e-4, "p = {p}, eta = {eta}: {chi:?}");
        let mean_s = scattered_total as f64 / DRAWS as f64;
        let expect = 1.0 / (1.0 - p);
        let se = (p.sqrt() / (1.0 - p)) / (DRAWS as f64).sqrt();
        assert!((mean_s - expect).abs() < 5.0 * se, "{mean_s} vs {expect}");
    }
}

#[test]
fn bright_state_samplers_match_their_pmfs() {
    for model in ["markov", "gaussian"] {
        for convolve in [false, true] {
            let params = DetectorParams {
                gauss_convolve_background: convolve,
                ..DetectorParams::default().with_model(model)
            };
            let readout = ReadoutModel::new(&params).unwrap();
            let mut rng = stream(13, convolve as u64, 0, "f2");
            let hist: CountHistogram = (0..DRAWS)
                .map(|_| readout.sample(HyperfineState::F2, &mut rng))
                .collect();
            let chi = chi_square_gof(&hist, readout.pmf(HyperfineState::F2)).unwrap();
            assert!(chi.p_value > 1e-4, "{model}, convolve = {convolve}: {chi:?}");
        }
    }
}

#[test]
fn markov_pmf_matches_cascade_plus_background() {
    let params = CascadeParams::new(0.99, 0.0475, 1.146).unwrap();
    let direct = f2_count_pmf(&params, 1e-13).unwrap();
    let composed = detected_pmf(&params).convolve(&poisson_count_pmf(1.146, 1e-13).unwrap());
    assert!(direct.total_variation(&composed) < 1e-11);
    assert!((direct.mean() - (1.146 + params.mean_detected())).abs() < 1e-9);
}

#[test]
fn dark_state_sampler_is_background_only() {
    let readout = ReadoutModel::new(&DetectorParams::default()).unwrap();
    let mut rng = stream(14, 0, 0, "f1");
    let hist: CountHistogram = (0..DRAWS)
        .map(|_| readout.sample(HyperfineState::F1, &mut rng))
        .collect();
    let chi = chi_square_gof(&hist, readout.pmf(HyperfineState::F1)).unwrap();
    assert!(chi.p_value > 1e-4, "{chi:?}");
}
