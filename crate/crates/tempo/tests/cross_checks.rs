//! End-to-end agreement between the tensor-network propagation and
//! independent brute-force or closed-form solutions.

use ndarray::{array, Array2};
use num_complex::Complex;

use tempo::baths::{BathModel, BathSpec, SpectralDensity};
use tempo::propagation::{propagate, BathSetup, PropagationOptions};
use tempo::reference::oracles::{dense_history_maps, independent_boson_coherence, SingleModeEd};
use tempo::reference::polaron::{huang_rhys_bath, PolaronModel};
use tempo::system::{excited_projector, sigma_x, sigma_z, SystemSpec};

fn re(x: f64) -> Complex<f64> {
    Complex::new(x, 0.0)
}

fn two_bath_system() -> SystemSpec<f64> {
    let h = array![
        [re(0.25), re(0.3)],
        [re(0.3), re(-0.25)],
    ];
    SystemSpec::new(h, vec![excited_projector(), sigma_x()]).unwrap()
}

fn two_bath_setups() -> Vec<BathSetup<f64>> {
    let a = BathSpec {
        model: BathModel::Continuum(SpectralDensity::PowerLawExp {
            a: 0.2,
            p: 3.0,
            cutoff: 1.0,
        }),
        temperature: 0.5,
        coupling_index: 0,
    };
    let b = BathSpec {
        model: BathModel::Mode { omega: 0.8, g: 0.3 },
        temperature: 0.0,
        coupling_index: 1,
    };
    vec![BathSetup::plain(a), BathSetup::plain(b)]
}

fn max_diff(a: &Array2<Complex<f64>>, b: &Array2<Complex<f64>>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn exact_contraction_matches_dense_path_sum() {
    let sys = two_bath_system();
    let setups = two_bath_setups();
    let n = 4;
    let dt = 0.2;
    let dense = dense_history_maps(&sys, &setups, dt, n).unwrap();

    let exact = propagate(
        &sys,
        &setups,
        &PropagationOptions {
            delta_p: dt,
            n_steps: n,
            chi: 0.0,
            steady: None,
        },
    )
    .unwrap();
    for k in 0..=n {
        let d = max_diff(&exact.maps[k], &dense[k]);
        assert!(d < 1e-10, "step {k}: {d}");
    }

    let truncated = propagate(
        &sys,
        &setups,
        &PropagationOptions {
            delta_p: dt,
            n_steps: n,
            chi: 1e-9,
            steady: None,
        },
    )
    .unwrap();
    for k in 0..=n {
        let d = max_diff(&truncated.maps[k], &dense[k]);
        assert!(d < 1e-6, "step {k}: {d}");
    }
}

#[test]
fn single_mode_bath_matches_exact_diagonalization() {
    // Resonant emitter-mode pair; the influence-functional treatment of a
    // lone undamped mode must reproduce exact diagonalization.
    let omega = 1.0;
    let g = 0.15;
    let h = sigma_z::<f64>().mapv(|z| z * re(omega / 2.0));
    let sys = SystemSpec::new(h, vec![sigma_x()]).unwrap();
    let ed = SingleModeEd::new(&sys, 0, omega, g, 0.0, 30).unwrap();

    let dt = 0.02;
    let n = 120;
    let traj = propagate(
        &sys,
        &[BathSetup::plain(BathSpec {
            model: BathModel::Mode { omega, g },
            temperature: 0.0,
            coupling_index: 0,
        })],
        &PropagationOptions {
            delta_p: dt,
            n_steps: n,
            chi: 1e-10,
            steady: None,
        },
    )
    .unwrap();

    let rho0 = array![
        [re(1.0), re(0.0)],
        [re(0.0), re(0.0)],
    ];
    let states = traj.states(&rho0);
    let mut worst = 0.0_f64;
    for (k, got) in states.iter().enumerate() {
        let want = ed.reduced_state(&rho0, dt * k as f64);
        worst = worst.max(max_diff(got, &want));
    }
    assert!(worst < 1e-3, "worst deviation {worst}");
}

#[test]
fn pure_dephasing_matches_independent_boson_solution() {
    // Diagonal coupling commutes with the Hamiltonian, so the only
    // numerical content is the discretized influence functional; the
    // exact cell integrals make even a coarse grid agree with the
    // closed-form coherence decay.
    let delta = 0.7;
    let mut bath = huang_rhys_bath(0.6, 0.9, 0.4);
    bath.coupling_index = 0;
    let h = array![
        [re(0.0), re(0.0)],
        [re(0.0), re(delta)],
    ];
    let sys = SystemSpec::new(h, vec![excited_projector()]).unwrap();
    let lambda = match &bath.model {
        BathModel::Continuum(j) => j.reorganisation_energy(1e-12),
        _ => unreachable!(),
    };
    let model = PolaronModel {
        splitting: delta,
        optical: bath.clone(),
        vibrational: bath.clone(),
        rel_tol: 1e-12,
    };

    let dt = 0.4;
    let n = 12;
    let traj = propagate(
        &sys,
        &[BathSetup::plain(bath)],
        &PropagationOptions {
            delta_p: dt,
            n_steps: n,
            chi: 1e-9,
            steady: None,
        },
    )
    .unwrap();
    let rho0 = array![
        [re(0.5), re(0.5)],
        [re(0.5), re(0.5)],
    ];
    let states = traj.states(&rho0);
    let phi0 = model.phi(0.0);
    for (k, got) in states.iter().enumerate() {
        let t = dt * k as f64;
        let want =
            independent_boson_coherence(delta - lambda, phi0, model.phi(t), t, rho0[(1, 0)]);
        let d = (got[(1, 0)] - want).norm();
        assert!(d < 1e-5, "t={t}: {} vs {want} ({d})", got[(1, 0)]);
    }
}
