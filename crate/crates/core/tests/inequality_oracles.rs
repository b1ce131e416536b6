use std::f64::consts::PI;

use twistlab_core::discretize::{assemble_straightened, Grid1D, Grid2D};
use twistlab_core::inequalities::{
    check_angular_bound, check_hardy_classical, check_poincare_slice, hardy_classical_margin,
    hardy_worst_case_family, Envelope, RandomFunctionSpec,
};
use twistlab_core::spectral::{compute_modes, smallest_eigenpairs};
use twistlab_core::{CrossSection, EigOptions, TubeSpec, TwistProfile};

#[test]
fn angular_bound_holds_for_200_seeds() {
    let section = CrossSection::square(PI);
    let g = Grid2D::lattice(section, PI / 16.0).unwrap();
    let form = twistlab_core::discretize::assemble_cross_section(&g).unwrap();
    for seed in 0..200 {
        let psi = RandomFunctionSpec::new(seed).sample(&form);
        let m = check_angular_bound(&g, &psi, section.a());
        assert!(m.margin >= -1e-10, "seed {seed}: {m:?}");
    }
}

fn straight_tube(half_length: f64, cells: usize) -> (twistlab_core::discretize::DiscreteForm, Vec<f64>) {
    let g = Grid2D::lattice(CrossSection::square(PI), PI / 8.0).unwrap();
    let modes = compute_modes(&g, &EigOptions::default()).unwrap();
    let tube = TubeSpec::new(CrossSection::square(PI), TwistProfile::Zero, half_length).unwrap();
    let axial = Grid1D::uniform(-half_length, half_length, cells).unwrap();
    let form = assemble_straightened(&tube, &axial, &g).unwrap();
    (form, modes.j1)
}

// slow decay rates need room: exp(-400/32) is below 1e-5
const KAPPAS: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

#[test]
fn classical_hardy_holds_on_worst_case_family() {
    let (form, j1) = straight_tube(400.0, 1600);
    let family = hardy_worst_case_family(&form.layout, &j1, &KAPPAS);
    for psi in &family {
        let m = check_hardy_classical(&form.layout, psi, (-1.0, 1.0)).unwrap();
        assert!(m.margin >= 0.0, "{m:?}");
    }
}

#[test]
fn worst_case_family_defeats_a_too_small_coefficient() {
    let (form, j1) = straight_tube(400.0, 1600);
    let family = hardy_worst_case_family(&form.layout, &j1, &KAPPAS);
    let worst = family
        .iter()
        .map(|psi| hardy_classical_margin(&form.layout, psi, (-1.0, 1.0), 1.0).unwrap().relative())
        .fold(f64::INFINITY, f64::min);
    assert!(worst < 0.0, "{worst}");
}

#[test]
fn classical_hardy_holds_for_random_functions() {
    let (form, _) = straight_tube(40.0, 1600);
    for seed in 0..20 {
        let psi = RandomFunctionSpec::new(seed)
            .with_envelope(Envelope::Gaussian { width: 3.0 })
            .sample(&form);
        let m = check_hardy_classical(&form.layout, &psi, (-1.0, 1.0)).unwrap();
        assert!(m.margin >= -1e-9 * m.scale, "seed {seed}: {m:?}");
    }
}

#[test]
fn poincare_margin_on_second_mode_is_the_gap() {
    let g = Grid2D::lattice(CrossSection::square(PI), PI / 12.0).unwrap();
    let form = twistlab_core::discretize::assemble_cross_section(&g).unwrap();
    let pairs = smallest_eigenpairs(&form, 2, &EigOptions::default()).unwrap();
    let (e1, e2) = (pairs[0].value, pairs[1].value);
    let tube = TubeSpec::new(CrossSection::square(PI), TwistProfile::Zero, 10.0).unwrap();
    let axial = Grid1D::uniform(-10.0, 10.0, 20).unwrap();
    let layout = assemble_straightened(&tube, &axial, &g).unwrap().layout;
    let f = vec![1.0; layout.axial.len()];
    let psi = layout.tensor(&f, &pairs[1].vector);
    let m = check_poincare_slice(&g, &layout, &psi, e1).unwrap();
    let slice_mass: f64 = pairs[1].vector.iter().zip(g.mass()).map(|(v, w)| w * v * v).sum();
    let expected = (e2 - e1) * slice_mass;
    assert!((m.margin - expected).abs() < 1e-8 * expected.max(1.0), "{} vs {expected}", m.margin);
}
