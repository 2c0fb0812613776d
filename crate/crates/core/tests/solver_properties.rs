use dicke_core::solvers::*;
use dicke_core::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DickeDensityMatrix {
    let d = n + 1;
    let x = CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let rho = &x * x.adjoint();
    let tr: Complex64 = (0..d).map(|k| rho[(k, k)]).sum();
    let rho = rho / tr;
    DickeDensityMatrix::from_matrix(n, (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0)).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let n = rng.random_range(1..=12);
    ModelParams::new(
        rng.random_range(0.05..0.5),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        0.0,
        n,
    )
    .unwrap()
    .with_g_sqrt_n(rng.random_range(0.2..0.8))
}

// For every mode: a unique steady state with small residual, reached from
// three random initial states by t = 50/|Re λ_slowest|.
#[test]
fn random_draws_relax_to_the_steady_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for mode in ApproximationMode::ALL {
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let spec = GeneratorSpec::new(&p, mode).unwrap();
            let ss = steady_state(&spec).unwrap();
            assert!(!ss.degenerate, "{mode:?} {p:?}");
            assert!(ss.residual < 1e-10, "{mode:?} {p:?} residual {}", ss.residual);
            let slow = slowest_relaxation(&spec).unwrap();
            assert!(slow.re < 0.0);
            let t_end = 50.0 / slow.re.abs();
            for _ in 0..3 {
                let rho0 = random_state(p.n_atoms, &mut rng);
                let run = evolve(
                    &spec,
                    &rho0,
                    &[t_end],
                    &EvolutionControls { track_eigenvalues: false, ..Default::default() },
                )
                .unwrap();
                let end = observables(&run.final_state);
                let target = ss.observables;
                for (a, b) in [(end.sx, target.sx), (end.sy, target.sy), (end.sz, target.sz)] {
                    assert!((a - b).abs() < 1e-6, "{mode:?} {p:?}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn spectrum_has_one_stationary_mode() {
    let p = ModelParams::new(0.1, 1.0, 1.0, 0.0, 6).unwrap().with_g_sqrt_n(0.3);
    let spec = GeneratorSpec::new(&p, ApproximationMode::Full).unwrap();
    let spectrum = relaxation_spectrum(&spec).unwrap();
    assert_eq!(spectrum.len(), 49);
    assert_eq!(spectrum.iter().filter(|z| z.norm() < 1e-10).count(), 1);
    assert!(spectrum.iter().all(|z| z.re < 1e-10));
    // conjugation symmetry
    for z in &spectrum {
        assert!(spectrum.iter().any(|w| (w - z.conj()).norm() < 1e-8));
    }
    let too_big = ModelParams::new(0.1, 1.0, 1.0, 0.1, SPECTRUM_MAX_ATOMS + 1).unwrap();
    let spec = GeneratorSpec::new(&too_big, ApproximationMode::Full).unwrap();
    assert!(matches!(relaxation_spectrum(&spec), Err(Error::ResourceCap(_))));
}
