//! Four-level rate picture of phonon-assisted gain: optical transitions
//! either conserve the vibrational state (zero-phonon, weight `W_0`) or
//! bridge `n` vibrational quanta (sideband, weight `W_n`), with
//! Franck-Condon weights `W_j = S^j e^{-S} / j!`.

use crate::baths::{thermal_factor, BathError, BathModel, BathSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct FourLevelModel<T: Scalar> {
    /// Emitter splitting.
    pub splitting: T,
    /// Vibrational quantum bridged by the sideband.
    pub mode_frequency: T,
    /// Huang-Rhys factor `S`.
    pub huang_rhys: T,
    /// Number of quanta in the sideband transition.
    pub sideband: usize,
    /// Optical bath driving the transitions.
    pub optical: BathSpec<T>,
}

impl<T: Scalar> FourLevelModel<T> {
    pub fn validate(&self) -> Result<(), BathError> {
        self.optical.validate()?;
        let drop = self.splitting - T::of(self.sideband as f64) * self.mode_frequency;
        if !(drop > T::zero()) {
            return Err(BathError::BadParameter {
                name: "splitting",
                value: drop.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Franck-Condon weight `S^j e^{-S} / j!`.
    pub fn weight(&self, j: usize) -> T {
        let s = self.huang_rhys;
        let mut w = (-s).exp();
        for k in 1..=j {
            w = w * s / T::of(k as f64);
        }
        w
    }

    /// Optical emission/absorption weights `J(w)(1+N)` and `J(w)N`.
    fn optical_weights(&self, w: T) -> (T, T) {
        let j = match &self.optical.model {
            BathModel::Continuum(j) => j.eval_unchecked(w),
            BathModel::Mode { .. } => panic!("rate model needs a continuum optical bath"),
        };
        let th = thermal_factor(w, self.optical.temperature);
        let half = T::of(0.5);
        (j * (th + T::one()) * half, j * (th - T::one()) * half)
    }

    /// Steady ratio of excited to ground population: pumping happens at the
    /// zero-phonon line and the blue sideband, decay at the zero-phonon
    /// line and the red sideband.
    pub fn population_ratio(&self) -> T {
        let d = self.splitting;
        let shift = T::of(self.sideband as f64) * self.mode_frequency;
        // Only the ratio of Franck-Condon weights matters; dropping the
        // common e^{-S} keeps huge `S` finite.
        let w0 = T::one();
        let mut wn = T::one();
        for k in 1..=self.sideband {
            wn = wn * self.huang_rhys / T::of(k as f64);
        }
        let up = w0 * self.optical_weights(d).1 + wn * self.optical_weights(d + shift).1;
        let down = w0 * self.optical_weights(d).0 + wn * self.optical_weights(d - shift).0;
        up / down
    }

    /// Steady excited-state population `P / (1 + P)`.
    pub fn excited_population(&self) -> T {
        let p = self.population_ratio();
        p / (T::one() + p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baths::SpectralDensity;

    fn model(s: f64, p: f64, temperature: f64) -> FourLevelModel<f64> {
        FourLevelModel {
            splitting: 1.0,
            mode_frequency: 0.1,
            huang_rhys: s,
            sideband: 2,
            optical: BathSpec {
                model: BathModel::Continuum(SpectralDensity::PowerLawExp {
                    a: 0.003,
                    p,
                    cutoff: 10.0,
                }),
                temperature,
                coupling_index: 0,
            },
        }
    }

    #[test]
    fn weights_are_a_poisson_distribution() {
        let m = model(1.7, 3.0, 1.0);
        let total: f64 = (0..60).map(|j| m.weight(j)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((m.weight(0) - (-1.7_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_huang_rhys_gives_boltzmann_ratio() {
        // Without the sideband the ratio is the detailed-balance factor.
        for &t in &[0.3, 1.0, 5.0] {
            let m = model(0.0, 3.0, t);
            let got = m.population_ratio();
            let want = (-m.splitting / t).exp();
            assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn strong_coupling_high_temperature_ratio_is_geometric() {
        // When the sideband dominates and every relevant occupation is
        // classical, the ratio tends to ((d + n w) / (d - n w))^(p-1).
        for &p in &[1.0, 3.0] {
            let mut m = model(1e5, p, 2e7);
            m.optical.model = BathModel::Continuum(SpectralDensity::PowerLawExp {
                a: 0.003,
                p,
                cutoff: 1e9,
            });
            let got = m.population_ratio();
            let want = (1.2_f64 / 0.8).powf(p - 1.0);
            assert!((got - want).abs() < 1e-6 * want, "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn ohmic_density_never_inverts() {
        for &s in &[0.0, 0.5, 1.0, 2.0, 5.0] {
            for &t in &[0.5, 2.0, 20.0] {
                let m = model(s, 1.0, t);
                let ratio = m.population_ratio();
                assert!(ratio <= 1.0 + 1e-12, "s={s} t={t}: {ratio}");
            }
        }
    }

    #[test]
    fn cubic_density_inverts_at_strong_coupling_and_high_temperature() {
        let m = model(3.0, 3.0, 50.0);
        assert!(m.excited_population() > 0.5);
    }

    #[test]
    fn sideband_below_splitting_is_required() {
        let mut m = model(1.0, 3.0, 1.0);
        m.sideband = 12;
        assert!(m.validate().is_err());
    }
}
