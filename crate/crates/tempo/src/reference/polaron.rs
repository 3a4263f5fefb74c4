//! Polaron-frame golden-rule rates for a two-level emitter coupled to an
//! optical bath through `sigma_x` and to a vibrational bath through the
//! excited-state projector.
//!
//! The vibrational coupling is absorbed by a displacement transformation;
//! the optical transition then acquires the Franck-Condon envelope
//! `exp(phi(t) - phi(0))` and the golden-rule up/down rates follow from a
//! one-sided Fourier transform of the dressed correlation function.

use num_complex::Complex;

use crate::baths::{correlation, thermal_factor, BathError, BathModel, BathSpec};
use crate::quad::{adaptive_panels, linear_panels};
use crate::scalar::Scalar;

/// Two-level emitter with one optical and one vibrational bath.
#[derive(Debug, Clone)]
pub struct PolaronModel<T: Scalar> {
    /// Excited-state splitting of the emitter.
    pub splitting: T,
    /// Bath driving transitions (couples through `sigma_x`).
    pub optical: BathSpec<T>,
    /// Bath dressed away by the displacement (couples diagonally).
    pub vibrational: BathSpec<T>,
    /// Relative tolerance for all quadratures.
    pub rel_tol: T,
}

/// Vibrational bath with Huang-Rhys factor `s`: a cubic spectral density
/// `s w^3 / wc^2 exp(-w/wc)`, whose zero-temperature displacement weight
/// `int J/w^2` is exactly `s`.
pub fn huang_rhys_bath<T: Scalar>(s: T, cutoff: T, temperature: T) -> BathSpec<T> {
    BathSpec {
        model: BathModel::Continuum(crate::baths::SpectralDensity::PowerLawExp {
            a: s,
            p: T::of(3.0),
            cutoff,
        }),
        temperature,
        coupling_index: 1,
    }
}

impl<T: Scalar> PolaronModel<T> {
    pub fn validate(&self) -> Result<(), BathError> {
        self.optical.validate()?;
        self.vibrational.validate()
    }

    /// Displacement correlation
    /// `phi(t) = int dw J_V(w)/w^2 [coth(w/2T_V) cos(wt) - i sin(wt)]`.
    pub fn phi(&self, t: T) -> Complex<T> {
        let temp = self.vibrational.temperature;
        match &self.vibrational.model {
            BathModel::Mode { omega, g } => {
                let w = *omega;
                let gg = *g * *g / (w * w);
                Complex::new(
                    gg * (w * t).cos() * thermal_factor(w, temp),
                    -gg * (w * t).sin(),
                )
            }
            BathModel::Continuum(j) => {
                let wmax = j.omega_max(temp, T::of(1e-15));
                let period = T::PI() / (t.abs() + T::one() / wmax);
                let pts = linear_panels(wmax, period.min(wmax / T::of(16.0)));
                adaptive_panels(
                    &mut |w: T| {
                        let w = w.max(T::eps());
                        let jv = j.eval_unchecked(w) / (w * w);
                        Complex::new(
                            jv * (w * t).cos() * thermal_factor(w, temp),
                            -jv * (w * t).sin(),
                        )
                    },
                    &pts,
                    self.rel_tol,
                    T::zero(),
                    30,
                )
                .value
            }
        }
    }

    /// `phi(0)`, the total dressing weight (real).
    pub fn phi_zero(&self) -> T {
        self.phi(T::zero()).re
    }

    /// Optical absorption/emission weights at frequency `w > 0`:
    /// `(J_E, J_A) = J_O(w) (1 + N, N)` with `N` the thermal occupation.
    fn optical_weights(&self, w: T) -> (T, T) {
        let j = match &self.optical.model {
            BathModel::Continuum(j) => j.eval_unchecked(w.max(T::zero())),
            BathModel::Mode { .. } => panic!("polaron rates need a continuum optical bath"),
        };
        let th = thermal_factor(w.max(T::eps()), self.optical.temperature);
        let half = T::of(0.5);
        (j * (th + T::one()) * half, j * (th - T::one()) * half)
    }

    /// Golden-rule rate at detuning `zeta`:
    /// the sharp (zero-phonon) part plus the broadband correction
    /// `2 e^{-phi(0)} Re int_0^inf (e^{phi(t)} - 1) C_O(t) e^{i zeta t} dt`.
    pub fn rate(&self, zeta: T) -> T {
        let phi0 = self.phi_zero();
        let damp = (-phi0).exp();
        let sharp = if zeta > T::zero() {
            self.optical_weights(zeta).0
        } else if zeta < T::zero() {
            self.optical_weights(-zeta).1
        } else {
            T::zero()
        };
        let two = T::of(2.0);
        let broad = two * damp * self.broad_integral(zeta);
        two * T::PI() * damp * sharp + broad
    }

    /// `Re int_0^inf (e^{phi(t)} - 1) C_O(t) e^{i zeta t} dt` over doubling
    /// time windows, stopping once a window no longer contributes.
    fn broad_integral(&self, zeta: T) -> T {
        let scale = match (&self.optical.model, &self.vibrational.model) {
            (BathModel::Continuum(jo), BathModel::Continuum(jv)) => {
                jo.omega_max(T::zero(), T::of(1e-6))
                    .max(jv.omega_max(T::zero(), T::of(1e-6)))
            }
            _ => T::one(),
        };
        let osc = zeta.abs().max(scale).max(T::eps());
        let window = T::of(8.0) * T::PI() / osc;
        let mut f = |t: T| {
            let grow = (self.phi(t).exp() - Complex::new(T::one(), T::zero()))
                * correlation(&self.optical, t, self.rel_tol);
            let ph = zeta * t;
            grow * Complex::new(ph.cos(), ph.sin())
        };
        // Absolute floor from the integrand's own scale so that panels
        // straddling zero crossings terminate instead of bisecting forever.
        let probe = f(window * T::of(0.01)).norm()
            + f(window * T::of(0.37)).norm()
            + f(window).norm();
        let floor = probe * window * self.rel_tol + T::eps();
        let mut total = Complex::new(T::zero(), T::zero());
        let mut a = T::zero();
        let mut width = window;
        for _ in 0..24 {
            let pts = linear_panels(width, width / T::of(16.0))
                .iter()
                .map(|&x| a + x)
                .collect::<Vec<_>>();
            let part = adaptive_panels(&mut f, &pts, self.rel_tol, floor, 10).value;
            total = total + part;
            a = a + width;
            if part.norm() < self.rel_tol * total.norm() + floor {
                break;
            }
            width = width * T::of(2.0);
        }
        total.re
    }

    /// Upward and downward rates `(gamma_up, gamma_down)` across the
    /// emitter splitting.
    pub fn rates(&self) -> (T, T) {
        (self.rate(-self.splitting), self.rate(self.splitting))
    }

    /// Stationary excited-state population `gamma_up / (gamma_up + gamma_down)`.
    pub fn excited_population(&self) -> T {
        let (up, down) = self.rates();
        up / (up + down)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baths::SpectralDensity;

    fn model(s: f64, alpha: f64, p: f64) -> PolaronModel<f64> {
        PolaronModel {
            splitting: 1.0,
            optical: BathSpec {
                model: BathModel::Continuum(SpectralDensity::PowerLawExp {
                    a: alpha,
                    p,
                    cutoff: 10.0,
                }),
                temperature: 5.0,
                coupling_index: 0,
            },
            vibrational: huang_rhys_bath(s, 0.101, 0.0258),
            rel_tol: 1e-7,
        }
    }

    #[test]
    fn phi_matches_zero_temperature_closed_form() {
        // Cubic density at T = 0: phi(t) = s / (1 + i wc t)^2.
        let mut m = model(1.3, 0.001, 3.0);
        m.rel_tol = 1e-10;
        m.vibrational.temperature = 0.0;
        let wc = 0.101;
        for &t in &[0.0, 0.7, 3.0, 12.0] {
            let got = m.phi(t);
            let want = Complex::new(1.3, 0.0) / Complex::new(1.0, wc * t).powi(2);
            assert!((got - want).norm() < 1e-8, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn zero_huang_rhys_reduces_to_golden_rule() {
        // With s = 0 the dressing disappears and the stationary population
        // is the thermal occupation ratio N / (1 + 2N) of the optical bath.
        let m = model(0.0, 0.02, 3.0);
        let n = 1.0 / ((m.splitting / m.optical.temperature).exp() - 1.0);
        let want = n / (1.0 + 2.0 * n);
        let got = m.excited_population();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn detailed_balance_at_zero_huang_rhys() {
        let m = model(0.0, 0.005, 1.0);
        let (up, down) = m.rates();
        let got = down / up;
        let want = (m.splitting / m.optical.temperature).exp();
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn population_invariant_under_optical_coupling_scale() {
        let a = model(1.0, 0.001, 3.0).excited_population();
        let b = model(1.0, 0.1, 3.0).excited_population();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn cubic_density_inverts_super_ohmic_does_not() {
        // Strong dressing with a cubic optical density pushes the
        // stationary population above one half; a linear (ohmic) density
        // cannot.
        let cubic = model(2.0, 0.001, 3.0).excited_population();
        assert!(cubic > 0.5, "cubic: {cubic}");
        let ohmic = model(2.0, 0.0001, 1.0).excited_population();
        assert!(ohmic <= 0.5 + 1e-9, "ohmic: {ohmic}");
    }
}
