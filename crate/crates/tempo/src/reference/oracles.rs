//! Brute-force oracles used to validate the tensor-network pipeline:
//! a dense path-sum over the full history space, exact diagonalization of
//! a system coupled to a single bosonic mode, and a dense Lindblad
//! evolver. These share no contraction machinery with the MPO code; they
//! are loops over explicitly enumerated paths and dense matrices.

use ndarray::{Array1, Array2};
use num_complex::Complex;

use crate::baths::coth;
use crate::propagation::{BathSetup, PropagationError};
use crate::scalar::{imag_unit, re, Scalar};
use crate::system::{
    devectorize, free_propagator, vectorize, CouplingBasis, SystemSpec,
};

/// Matrix exponential by scaling and squaring with a Taylor series.
/// Test-grade: fine for the small dense matrices used here.
pub fn expm<T: Scalar>(m: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let n = m.nrows();
    let norm: T = m
        .iter()
        .map(|z| z.norm())
        .fold(T::zero(), T::max);
    let mut squarings = 0u32;
    let mut scale = T::one();
    while norm * scale > T::of(0.5) && squarings < 40 {
        scale = scale / T::of(2.0);
        squarings += 1;
    }
    let a = m.mapv(|z| z * scale);
    let mut term = Array2::<Complex<T>>::eye(n);
    let mut acc = Array2::<Complex<T>>::eye(n);
    for k in 1..200 {
        term = term.dot(&a).mapv(|z| z / T::of(k as f64));
        acc = acc + &term;
        let tn: T = term.iter().map(|z| z.norm()).fold(T::zero(), T::max);
        if tn < T::eps() {
            break;
        }
    }
    for _ in 0..squarings {
        acc = acc.dot(&acc);
    }
    acc
}

/// Dynamical maps from a dense path sum over the discretized history.
///
/// Every propagation step inserts one Liouville eigen-index per bath; the
/// sum runs over all their joint values, weighting each path by the free
/// propagator matrix elements between insertion points and the influence
/// factors of every ordered pair of columns. Cost grows as
/// `(d^2)^(baths * steps)`: use only for a handful of steps.
pub fn dense_history_maps<T: Scalar>(
    system: &SystemSpec<T>,
    setups: &[BathSetup<T>],
    delta_p: T,
    n_steps: usize,
) -> Result<Vec<Array2<Complex<T>>>, PropagationError> {
    let d2 = system.liouville_dim();
    let nb = setups.len();
    assert!(nb >= 1);
    let mut bases = Vec::new();
    let mut kernels = Vec::new();
    for setup in setups {
        let op = &system.coupling_ops[setup.spec.coupling_index];
        bases.push(CouplingBasis::new(op)?);
        kernels.push(crate::baths::build_kernel(
            &setup.spec,
            delta_p,
            setup.ratio,
            setup.memory,
            n_steps,
            setup.rule,
            setup.outer,
        )?);
    }
    let uh = free_propagator(&system.hamiltonian, delta_p / T::of(2.0))?;
    // Transfer matrices between index insertion points, in application
    // order within one step: half step, bath 0, bath 1, ..., half step.
    // m_start: from the incoming state to the first insertion.
    let m_start = bases[0].into_basis.dot(&uh);
    // m_between[alpha]: from insertion alpha to alpha + 1 within a step.
    let mut m_between = Vec::new();
    for alpha in 0..nb.saturating_sub(1) {
        m_between.push(bases[alpha + 1].into_basis.dot(&bases[alpha].out_of_basis));
    }
    // m_wrap: from the last insertion of one step to the first of the next.
    let m_wrap = m_start.dot(&uh).dot(&bases[nb - 1].out_of_basis);
    // m_end: from the last insertion to the outgoing state.
    let m_end = uh.dot(&bases[nb - 1].out_of_basis);

    let mut minus = Vec::new();
    let mut plus = Vec::new();
    for b in &bases {
        minus.push(b.minus_diag());
        plus.push(b.plus_diag());
    }

    let mut eye = Array2::<Complex<T>>::zeros((d2, d2));
    for i in 0..d2 {
        eye[(i, i)] = re(T::one());
    }
    let mut maps = vec![eye];

    for k in 1..=n_steps {
        let mut lam = Array2::<Complex<T>>::zeros((d2, d2));
        let total = d2.pow((nb * k) as u32);
        // Path index layout: idx[s * nb + alpha], column-0 bath-0 fastest.
        let mut idx = vec![0usize; nb * k];
        for flat in 0..total {
            let mut rest = flat;
            for v in idx.iter_mut() {
                *v = rest % d2;
                rest /= d2;
            }
            // Transfer weight along the chain of insertions.
            let mut w = Complex::new(T::one(), T::zero());
            for s in 0..k {
                for alpha in 0..nb {
                    if alpha + 1 < nb {
                        w = w * m_between[alpha][(idx[s * nb + alpha + 1], idx[s * nb + alpha])];
                    } else if s + 1 < k {
                        w = w * m_wrap[(idx[(s + 1) * nb], idx[s * nb + alpha])];
                    }
                }
            }
            if w.norm_sqr() == T::zero() {
                continue;
            }
            // Influence factors over all ordered pairs, per bath. Columns
            // at or beyond k carry exact unit caps and are omitted.
            for (alpha, kernel) in kernels.iter().enumerate() {
                for k0 in 0..k {
                    if kernel.ratio > 1 && k0 % kernel.ratio != 0 {
                        continue;
                    }
                    let v = idx[k0 * nb + alpha];
                    for m in k0..k {
                        let b = kernel.coeff(m - k0);
                        let u = idx[m * nb + alpha];
                        w = w * Complex::new(
                            -minus[alpha][u] * minus[alpha][v] * b.re,
                            -minus[alpha][u] * plus[alpha][v] * b.im,
                        )
                        .exp();
                    }
                }
            }
            // Rank-one update: out through m_end, in through m_start.
            let first = idx[0];
            let last = idx[(k - 1) * nb + nb - 1];
            for out in 0..d2 {
                let left = m_end[(out, last)] * w;
                if left.norm_sqr() == T::zero() {
                    continue;
                }
                for inp in 0..d2 {
                    lam[(out, inp)] = lam[(out, inp)] + left * m_start[(first, inp)];
                }
            }
        }
        maps.push(lam);
    }
    Ok(maps)
}

/// Reduced dynamics of a system coupled to one harmonic mode, by exact
/// diagonalization on a truncated Fock space. The mode starts thermal.
pub struct SingleModeEd<T: Scalar> {
    evolution: EigenEvolution<T>,
    rho_mode: Array2<Complex<T>>,
    d: usize,
    levels: usize,
}

struct EigenEvolution<T: Scalar> {
    vals: Array1<T>,
    vecs: Array2<Complex<T>>,
}

impl<T: Scalar> SingleModeEd<T> {
    pub fn new(
        system: &SystemSpec<T>,
        coupling_index: usize,
        omega: T,
        g: T,
        temperature: T,
        levels: usize,
    ) -> Result<Self, PropagationError> {
        let d = system.dim();
        let dim = d * levels;
        let mut h = Array2::<Complex<T>>::zeros((dim, dim));
        let s_op = &system.coupling_ops[coupling_index];
        for i in 0..d {
            for j in 0..d {
                for n in 0..levels {
                    for m in 0..levels {
                        let mut v = Complex::new(T::zero(), T::zero());
                        if n == m {
                            v = v + system.hamiltonian[(i, j)];
                            if i == j {
                                v = v + re(omega * T::of(n as f64));
                            }
                        }
                        // a + a^dag matrix elements.
                        let ladder = if m + 1 == n {
                            T::of((n as f64).sqrt())
                        } else if n + 1 == m {
                            T::of((m as f64).sqrt())
                        } else {
                            T::zero()
                        };
                        if ladder != T::zero() {
                            v = v + s_op[(i, j)] * g * ladder;
                        }
                        h[(i * levels + n, j * levels + m)] = v;
                    }
                }
            }
        }
        let (vals, vecs) = T::eigh(&h).map_err(crate::system::SystemError::from)?;
        // Thermal mode state.
        let mut rho_mode = Array2::<Complex<T>>::zeros((levels, levels));
        if temperature > T::zero() {
            let mut z = T::zero();
            for n in 0..levels {
                z = z + (-omega * T::of(n as f64) / temperature).exp();
            }
            for n in 0..levels {
                rho_mode[(n, n)] = re((-omega * T::of(n as f64) / temperature).exp() / z);
            }
        } else {
            rho_mode[(0, 0)] = re(T::one());
        }
        Ok(Self {
            evolution: EigenEvolution { vals, vecs },
            rho_mode,
            d,
            levels,
        })
    }

    /// Occupation of the highest Fock level in the thermal initial state;
    /// a cheap truncation sanity check.
    pub fn top_level_population(&self) -> T {
        self.rho_mode[(self.levels - 1, self.levels - 1)].re
    }

    /// Reduced system state at time `t` starting from `rho_s (x) thermal`.
    pub fn reduced_state(&self, rho_s: &Array2<Complex<T>>, t: T) -> Array2<Complex<T>> {
        let d = self.d;
        let l = self.levels;
        let dim = d * l;
        let mut rho0 = Array2::<Complex<T>>::zeros((dim, dim));
        for i in 0..d {
            for j in 0..d {
                for n in 0..l {
                    for m in 0..l {
                        rho0[(i * l + n, j * l + m)] = rho_s[(i, j)] * self.rho_mode[(n, m)];
                    }
                }
            }
        }
        // U = V exp(-i E t) V^dag.
        let v = &self.evolution.vecs;
        let mut phases = Array2::<Complex<T>>::zeros((dim, dim));
        for i in 0..dim {
            phases[(i, i)] = (-imag_unit::<T>() * self.evolution.vals[i] * t).exp();
        }
        let vdag = v.t().mapv(|z| z.conj());
        let u = v.dot(&phases).dot(&vdag);
        let udag = u.t().mapv(|z| z.conj());
        let rho_t = u.dot(&rho0).dot(&udag);
        let mut out = Array2::<Complex<T>>::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex::new(T::zero(), T::zero());
                for n in 0..l {
                    acc = acc + rho_t[(i * l + n, j * l + n)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }
}

/// Dense Lindblad evolution: `drho/dt = -i[H, rho] + sum_k rate_k
/// (L rho L^dag - {L^dag L, rho}/2)`, via the exponential of the
/// Liouvillian.
pub fn lindblad_propagator<T: Scalar>(
    h: &Array2<Complex<T>>,
    jumps: &[(T, Array2<Complex<T>>)],
    t: T,
) -> Array2<Complex<T>> {
    let d = h.nrows();
    let d2 = d * d;
    let eye = Array2::<Complex<T>>::eye(d);
    let mut liou = Array2::<Complex<T>>::zeros((d2, d2));
    let kron = ndarray::linalg::kron;
    let i = imag_unit::<T>();
    liou = liou - &kron(h, &eye).mapv(|z| z * i);
    liou = liou + &kron(&eye, &h.t().to_owned()).mapv(|z| z * i);
    for (rate, l) in jumps {
        let ldag = l.t().mapv(|z| z.conj());
        let ldl = ldag.dot(l);
        let half = re(*rate / T::of(2.0));
        liou = liou + &kron(l, &ldag.t().to_owned()).mapv(|z| z * *rate);
        liou = liou - &kron(&ldl, &eye).mapv(|z| z * half);
        liou = liou - &kron(&eye, &ldl.t().to_owned()).mapv(|z| z * half);
    }
    expm(&liou.mapv(|z| z * t))
}

/// Evolve a state through the Lindblad propagator.
pub fn lindblad_evolve<T: Scalar>(
    h: &Array2<Complex<T>>,
    jumps: &[(T, Array2<Complex<T>>)],
    rho0: &Array2<Complex<T>>,
    t: T,
) -> Array2<Complex<T>> {
    let d = h.nrows();
    let p = lindblad_propagator(h, jumps, t);
    devectorize(&p.dot(&vectorize(rho0)), d)
}

/// Thermal occupation `1 / (exp(w/T) - 1)`; zero at zero temperature.
pub fn bose_occupation<T: Scalar>(w: T, temperature: T) -> T {
    if temperature <= T::zero() {
        return T::zero();
    }
    (coth(w / (T::of(2.0) * temperature)) - T::one()) / T::of(2.0)
}

/// Closed-form independent-boson coherence: for a diagonal coupling to
/// the excited state, `rho_eg(t) = rho_eg(0) exp(-i delta t) exp(phi(t) -
/// phi(0))` with the phonon propagator phase `phi`; callers supply `phi`.
pub fn independent_boson_coherence<T: Scalar>(
    delta: T,
    phi0: Complex<T>,
    phi_t: Complex<T>,
    t: T,
    initial: Complex<T>,
) -> Complex<T> {
    initial * (-imag_unit::<T>() * delta * t).exp() * (phi_t - phi0).exp()
}
