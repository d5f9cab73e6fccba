use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};

use super::CascadeParams;

/// Poisson draw; `µ = 0` always yields 0.
pub fn sample_poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    // The constructor only rejects nonpositive or non-finite means.
    let dist = Poisson::new(mu).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}

/// One scatter cascade: `(n_scat, n_det)` with `n_scat ≥ 1` geometric and
/// `n_det` its binomial thinning.
pub fn sample_cascade<R: Rng + ?Sized>(params: &CascadeParams, rng: &mut R) -> (u64, u64) {
    // Geometric counts failures before the first success; here a "success"
    // is the scatter that sends the atom dark.
    let stop = Geometric::new(1.0 - params.scatter_survival).expect("valid stop probability");
    let scattered = 1 + stop.sample(rng);
    let detected = if params.det_efficiency >= 1.0 {
        scattered
    } else {
        Binomial::new(scattered, params.det_efficiency)
            .expect("valid thinning probability")
            .sample(rng)
    };
    (scattered, detected)
}

/// Total readout count of a bright atom: detected fluorescence plus background.
pub fn sample_readout_count_f2<R: Rng + ?Sized>(params: &CascadeParams, rng: &mut R) -> u64 {
    let (_, detected) = sample_cascade(params, rng);
    detected + sample_poisson(params.bg_mean, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn perfect_detection_keeps_every_photon() {
        let c = CascadeParams::new(0.9, 1.0, 0.0).unwrap();
        let mut rng = stream(3, 0, 0, "cascade");
        for _ in 0..10_000 {
            let (s, d) = sample_cascade(&c, &mut rng);
            assert!(s >= 1);
            assert_eq!(s, d);
        }
    }

    #[test]
    fn zero_mean_poisson_is_zero() {
        let mut rng = stream(3, 0, 0, "bg");
        assert!((0..100).all(|_| sample_poisson(0.0, &mut rng) == 0));
    }

    #[test]
    fn fixed_seed_reproduces_stream() {
        let c = CascadeParams::new(0.95, 0.2, 1.146).unwrap();
        let draw = |seed| {
            let mut rng = stream(seed, 0, 0, "f2");
            (0..500)
                .map(|_| sample_readout_count_f2(&c, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }
}
