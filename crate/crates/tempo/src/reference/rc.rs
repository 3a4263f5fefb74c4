//! Reaction-coordinate master equation: the underdamped vibrational bath
//! is replaced by a single damped mode coupled to the emitter, and the
//! residual (Ohmic) environment plus the optical bath enter through
//! Born-Markov dissipators built in the exact eigenbasis of the enlarged
//! system.

use ndarray::linalg::kron;
use ndarray::{Array1, Array2};
use num_complex::Complex;

use crate::baths::{coth, thermal_factor, BathModel, BathSpec};
use crate::reference::oracles::expm;
use crate::scalar::{imag_unit, re, Scalar};
use crate::system::{
    anticommutator_super, devectorize, excited_projector, left_super, right_super,
};

/// Emitter plus reaction coordinate with a residual Ohmic environment and
/// an optical bath.
#[derive(Debug, Clone)]
pub struct RcModel<T: Scalar> {
    /// Emitter splitting in the mapped frame.
    pub splitting: T,
    /// Emitter-mode coupling `eta` (acts through the excited projector).
    pub coupling: T,
    /// Mode frequency `Omega`.
    pub frequency: T,
    /// Width `Gamma` of the original underdamped density; sets the residual
    /// coupling `J_res(w) = Gamma w / (2 pi Omega)`.
    pub residual_width: T,
    /// Temperature of the residual (vibrational) environment.
    pub rc_temperature: T,
    /// Optical bath driving emitter transitions through `sigma_x`.
    pub optical: BathSpec<T>,
    /// Fock-space truncation of the mode.
    pub levels: usize,
}

/// Steady state of the reaction-coordinate master equation.
#[derive(Debug, Clone)]
pub struct RcSteady<T: Scalar> {
    /// Full emitter-plus-mode state.
    pub rho_full: Array2<Complex<T>>,
    /// Emitter state with the mode traced out.
    pub rho_tls: Array2<Complex<T>>,
    /// Mean occupation of the mode.
    pub mode_occupation: T,
    /// Population of the highest kept Fock level; should be tiny, or the
    /// truncation is too small.
    pub fock_tail: T,
}

/// Map an underdamped continuum `a G w0^2 w / ((w0^2-w^2)^2 + G^2 w^2)`
/// onto a single mode: `Omega = w0`, `eta = sqrt(pi a w0 / 2)`, and the
/// emitter splitting picks up the reorganisation shift `pi a / 2`.
pub fn from_underdamped<T: Scalar>(
    bare_splitting: T,
    a: T,
    omega0: T,
    width: T,
    rc_temperature: T,
    optical: BathSpec<T>,
    levels: usize,
) -> RcModel<T> {
    let half_pi = T::PI() / T::of(2.0);
    RcModel {
        splitting: bare_splitting + half_pi * a,
        coupling: (half_pi * a * omega0).sqrt(),
        frequency: omega0,
        residual_width: width,
        rc_temperature,
        optical,
        levels,
    }
}

fn annihilation<T: Scalar>(m: usize) -> Array2<Complex<T>> {
    let mut a = Array2::zeros((m, m));
    for n in 1..m {
        a[(n - 1, n)] = re(T::of(n as f64).sqrt());
    }
    a
}

fn dagger<T: Scalar>(m: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    m.t().mapv(|z| z.conj())
}

fn sigma_minus<T: Scalar>() -> Array2<Complex<T>> {
    let mut s = Array2::zeros((2, 2));
    s[(0, 1)] = re(T::one());
    s
}

impl<T: Scalar> RcModel<T> {
    pub fn dim(&self) -> usize {
        2 * self.levels
    }

    /// `H = split P (x) I + eta P (x) (a + a^dag) + Omega I (x) a^dag a`.
    pub fn hamiltonian(&self) -> Array2<Complex<T>> {
        let m = self.levels;
        let a = annihilation::<T>(m);
        let x = &a + &dagger(&a);
        let num = dagger(&a).dot(&a);
        let p = excited_projector::<T>();
        let eye2 = Array2::<Complex<T>>::eye(2);
        let eye_m = Array2::<Complex<T>>::eye(m);
        kron(&p, &eye_m).mapv(|z| z * re(self.splitting))
            + kron(&p, &x).mapv(|z| z * re(self.coupling))
            + kron(&eye2, &num).mapv(|z| z * re(self.frequency))
    }

    /// Residual coupling operator `A = I (x) (a + a^dag) - 2 (eta/Omega) P (x) I`.
    fn residual_op(&self) -> Array2<Complex<T>> {
        let m = self.levels;
        let a = annihilation::<T>(m);
        let x = &a + &dagger(&a);
        let p = excited_projector::<T>();
        let eye2 = Array2::<Complex<T>>::eye(2);
        let eye_m = Array2::<Complex<T>>::eye(m);
        kron(&eye2, &x)
            - kron(&p, &eye_m).mapv(|z| z * re(T::of(2.0) * self.coupling / self.frequency))
    }

    /// Optical transition operator `sigma^x (x) I`. The mode mapping does
    /// not touch the optical coupling; phonon sidebands enter through the
    /// displaced eigenstates of the coupled Hamiltonian when this operator
    /// is decomposed into Bohr-frequency jumps.
    fn transition_op(&self) -> Array2<Complex<T>> {
        let m = self.levels;
        let sm = sigma_minus::<T>();
        let sx = &sm + &dagger(&sm);
        kron(&sx, &Array2::eye(m))
    }

    /// Residual weight `(pi/2) J_res(w) [coth(w/2T) + 1]`, with the finite
    /// `w -> 0` limit `Gamma T / (2 Omega)`.
    fn residual_weight(&self, w: T) -> T {
        let slope = self.residual_width / (T::of(2.0) * T::PI() * self.frequency);
        let t = self.rc_temperature;
        let small = T::of(1e-8) * self.frequency;
        let half_pi = T::PI() / T::of(2.0);
        if w.abs() < small {
            return if t > T::zero() {
                half_pi * slope * T::of(2.0) * t
            } else {
                T::zero()
            };
        }
        let th = if t > T::zero() {
            coth(w / (T::of(2.0) * t))
        } else {
            T::one().copysign(w)
        };
        half_pi * slope * w * (th + T::one())
    }

    /// Optical emission/absorption weights `J_O(w)(1+N)` and `J_O(w)N` at
    /// `w >= 0`, with the shared `w -> 0` limit of `J coth / 2`.
    fn optical_weights(&self, w: T) -> (T, T) {
        let j = match &self.optical.model {
            BathModel::Continuum(j) => j,
            BathModel::Mode { .. } => panic!("rc solver needs a continuum optical bath"),
        };
        let small = T::of(1e-8) * self.splitting.abs().max(self.frequency);
        if w.abs() < small {
            let ws = small;
            let l0 = j.eval_unchecked(ws) * thermal_factor(ws, self.optical.temperature)
                / T::of(2.0);
            return (l0, l0);
        }
        let th = thermal_factor(w, self.optical.temperature);
        let half = T::of(0.5);
        let jv = j.eval_unchecked(w);
        (jv * (th + T::one()) * half, jv * (th - T::one()) * half)
    }

    /// Full Liouvillian (dense, `(2 levels)^2` square).
    pub fn liouvillian(&self) -> Result<Array2<Complex<T>>, crate::scalar::LinalgError> {
        let h = self.hamiltonian();
        let n = self.dim();
        let (vals, vecs) = T::eigh(&h)?;
        let vdag = dagger(&vecs);
        let i = imag_unit::<T>();

        let mut liou = (left_super(&h) - right_super(&h)).mapv(|z| z * -i);

        // Residual dissipator [A, rho zeta] + [zeta^dag rho, A].
        let aop = self.residual_op();
        let abar = vdag.dot(&aop).dot(&vecs);
        let mut zbar = Array2::<Complex<T>>::zeros((n, n));
        for jn in 0..n {
            for k in 0..n {
                zbar[(jn, k)] = abar[(jn, k)] * re(self.residual_weight(vals[jn] - vals[k]));
            }
        }
        let zeta = vecs.dot(&zbar).dot(&vdag);
        let zdag = dagger(&zeta);
        // `A rho zeta` vectorises to `A (x) zeta^T`, and similarly for
        // the conjugate term.
        liou = liou + kron(&aop, &zeta.t().to_owned());
        liou = liou - right_super(&zeta.dot(&aop));
        liou = liou + kron(&zdag, &aop.t().to_owned());
        liou = liou - left_super(&aop.dot(&zdag));

        // Optical dissipator: secular jumps grouped by Bohr frequency.
        let x = self.transition_op();
        let xbar = vdag.dot(&x).dot(&vecs);
        let span = vals
            .iter()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
            .max(T::one());
        let tol = T::of(1e-8) * span;
        let mut groups: Vec<(T, Array2<Complex<T>>)> = Vec::new();
        for jn in 0..n {
            for k in 0..n {
                let w = vals[k] - vals[jn];
                if w < -tol {
                    continue;
                }
                let w = if w.abs() <= tol { T::zero() } else { w };
                let hit = groups.iter_mut().find(|(wg, _)| (*wg - w).abs() <= tol);
                match hit {
                    Some((_, op)) => op[(jn, k)] = op[(jn, k)] + xbar[(jn, k)],
                    None => {
                        let mut op = Array2::<Complex<T>>::zeros((n, n));
                        op[(jn, k)] = xbar[(jn, k)];
                        groups.push((w, op));
                    }
                }
            }
        }
        let two_pi = T::of(2.0) * T::PI();
        // Almost all Bohr-frequency groups carry exponentially small
        // Franck-Condon weight; dropping them changes the Liouvillian far
        // below any tolerance used here and keeps the cost polynomial.
        // The dissipator is linear in `rate * D[l]`, so accumulate the
        // sandwich and anticommutator pieces separately and assemble the
        // superoperators once at the end.
        let total_weight = xbar.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b);
        let floor = total_weight * T::of(1e-16);
        let n2 = n * n;
        let mut sandwich = Array2::<Complex<T>>::zeros((n2, n2));
        let mut lost = Array2::<Complex<T>>::zeros((n, n));
        let mut add_jump = |l: &Array2<Complex<T>>, rate: T| {
            let lc = l.mapv(|z| z.conj());
            sandwich.scaled_add(re(rate), &kron(l, &lc));
            lost.scaled_add(re(rate), &dagger(l).dot(l));
        };
        for (w, opbar) in groups {
            let weight = opbar.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b);
            if weight <= floor {
                continue;
            }
            let lower = vecs.dot(&opbar).dot(&vdag);
            let (je, ja) = self.optical_weights(w);
            if w == T::zero() {
                // Degenerate group: the operator is Hermitian and carries
                // both directions at once.
                add_jump(&lower, two_pi * je);
                continue;
            }
            add_jump(&lower, two_pi * je);
            add_jump(&dagger(&lower), two_pi * ja);
        }
        liou = liou + sandwich - anticommutator_super(&lost).mapv(|z| z * re(T::of(0.5)));
        Ok(liou)
    }

    /// Time evolution of a full emitter-plus-mode state.
    pub fn evolve(
        &self,
        rho0: &Array2<Complex<T>>,
        t: T,
    ) -> Result<Array2<Complex<T>>, crate::scalar::LinalgError> {
        let liou = self.liouvillian()?;
        let prop = expm(&liou.mapv(|z| z * re(t)));
        Ok(devectorize(
            &prop.dot(&crate::system::vectorize(rho0)),
            self.dim(),
        ))
    }

    /// Steady state as the null vector of the Liouvillian.
    pub fn steady_state(&self) -> Result<RcSteady<T>, crate::scalar::LinalgError> {
        let liou = self.liouvillian()?;
        let (_, _, vh) = T::svd(liou)?;
        let null = vh.row(vh.nrows() - 1).mapv(|z| z.conj());
        let n = self.dim();
        let rho = devectorize(&Array1::from(null.to_vec()), n);
        let mut rho = (&rho + &dagger(&rho)).mapv(|z| z * re(T::of(0.5)));
        let tr: Complex<T> = (0..n).map(|i| rho[(i, i)]).sum();
        rho = rho.mapv(|z| z / tr);

        let m = self.levels;
        let mut tls = Array2::<Complex<T>>::zeros((2, 2));
        for s in 0..2 {
            for sp in 0..2 {
                for q in 0..m {
                    tls[(s, sp)] = tls[(s, sp)] + rho[(s * m + q, sp * m + q)];
                }
            }
        }
        let mut occ = T::zero();
        let mut tail = T::zero();
        for s in 0..2 {
            for q in 0..m {
                let p = rho[(s * m + q, s * m + q)].re;
                occ = occ + T::of(q as f64) * p;
                if q == m - 1 {
                    tail = tail + p;
                }
            }
        }
        Ok(RcSteady {
            rho_full: rho,
            rho_tls: tls,
            mode_occupation: occ,
            fock_tail: tail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baths::SpectralDensity;
    use crate::reference::oracles::{bose_occupation, lindblad_evolve};
    use ndarray::array;

    fn optical(a: f64) -> BathSpec<f64> {
        BathSpec {
            model: BathModel::Continuum(SpectralDensity::PowerLawExp {
                a,
                p: 3.0,
                cutoff: 10.0,
            }),
            temperature: 0.5,
            coupling_index: 0,
        }
    }

    fn model(eta: f64, levels: usize) -> RcModel<f64> {
        RcModel {
            splitting: 1.0,
            coupling: eta,
            frequency: 0.4,
            residual_width: 0.1,
            rc_temperature: 0.2,
            optical: optical(0.01),
            levels,
        }
    }

    #[test]
    fn decoupled_mode_steady_state_is_golden_rule_times_thermal() {
        let m = model(0.0, 12);
        let s = m.steady_state().unwrap();
        let n = bose_occupation(m.splitting, m.optical.temperature);
        let want = n / (1.0 + 2.0 * n);
        assert!((s.rho_tls[(1, 1)].re - want).abs() < 1e-8, "{}", s.rho_tls[(1, 1)]);
        let nv = bose_occupation(m.frequency, m.rc_temperature);
        assert!((s.mode_occupation - nv).abs() < 1e-8, "{} vs {nv}", s.mode_occupation);
        assert!(s.fock_tail < 1e-8);
    }

    #[test]
    fn decoupled_emitter_dynamics_match_two_level_lindblad() {
        let m = model(0.0, 5);
        let rho_tls0 = array![
            [re(0.2_f64), Complex::new(0.1, 0.05)],
            [Complex::new(0.1, -0.05), re(0.8)],
        ];
        // Product with the mode ground state.
        let mut rho0 = Array2::<Complex<f64>>::zeros((10, 10));
        for s in 0..2 {
            for sp in 0..2 {
                rho0[(s * 5, sp * 5)] = rho_tls0[(s, sp)];
            }
        }
        let t = 1.7;
        let full = m.evolve(&rho0, t).unwrap();
        let mut tls = Array2::<Complex<f64>>::zeros((2, 2));
        for s in 0..2 {
            for sp in 0..2 {
                for q in 0..5 {
                    tls[(s, sp)] = tls[(s, sp)] + full[(s * 5 + q, sp * 5 + q)];
                }
            }
        }
        let (je, ja) = m.optical_weights(m.splitting);
        let two_pi = 2.0 * std::f64::consts::PI;
        let h = array![[re(0.0), re(0.0)], [re(0.0), re(m.splitting)]];
        let sm = sigma_minus::<f64>();
        let want = lindblad_evolve(
            &h,
            &[(two_pi * je, sm.clone()), (two_pi * ja, dagger(&sm))],
            &rho_tls0,
            t,
        );
        let diff = (&tls - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn coupled_steady_state_is_a_valid_state() {
        let m = model(0.25, 9);
        let s = m.steady_state().unwrap();
        let tr: Complex<f64> = (0..18).map(|i| s.rho_full[(i, i)]).sum();
        assert!((tr.re - 1.0).abs() < 1e-10 && tr.im.abs() < 1e-12);
        let herm = (&s.rho_full - &dagger(&s.rho_full))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(herm < 1e-12);
        let (evals, _) = f64::eigh(&s.rho_full).unwrap();
        assert!(evals.iter().all(|&e| e > -1e-9), "{evals:?}");
        assert!(s.fock_tail < 1e-4, "{}", s.fock_tail);
    }

    #[test]
    fn steady_population_converges_in_fock_levels() {
        let a = model(0.25, 10).steady_state().unwrap().rho_tls[(1, 1)].re;
        let b = model(0.25, 14).steady_state().unwrap().rho_tls[(1, 1)].re;
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn underdamped_mapping_matches_closed_forms() {
        let m = from_underdamped(2.0, 0.3, 0.05, 0.1, 0.0258, optical(0.01), 6);
        let half_pi = std::f64::consts::PI / 2.0;
        assert!((m.splitting - (2.0 + half_pi * 0.3)).abs() < 1e-15);
        assert!((m.coupling - (half_pi * 0.3 * 0.05).sqrt()).abs() < 1e-15);
        assert!((m.frequency - 0.05).abs() < 1e-15);
    }
}
