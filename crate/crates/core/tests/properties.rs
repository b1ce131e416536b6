use proptest::prelude::*;
use twistlab_core::discretize::{assemble_straightened, Grid1D, Grid2D};
use twistlab_core::evolution::{lambert_w_exp, HeatState, Scheme, Stepper};
use twistlab_core::geometry::{jacobian_det, twist_map};
use twistlab_core::inequalities::{check_sobolev_1d, hardy_classical_margin};
use twistlab_core::spectral::{offset_factor, smallest_eigenpairs};
use twistlab_core::{CrossSection, EigOptions, TubeSpec, TwistProfile};

fn small_twisted(beta: f64) -> twistlab_core::discretize::DiscreteForm {
    let g = Grid2D::lattice(CrossSection::Rectangle { width: 3.0, height: 2.0 }, 0.5).unwrap();
    let tube = TubeSpec::new(
        CrossSection::Rectangle { width: 3.0, height: 2.0 },
        TwistProfile::bump(beta, 1.0).unwrap(),
        7.0,
    )
    .unwrap();
    let axial = Grid1D::uniform(-7.0, 7.0, 28).unwrap();
    assemble_straightened(&tube, &axial, &g).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn twist_map_is_a_rotation_with_unit_jacobian(
        beta in -3.0f64..3.0, x1 in -4.0f64..4.0, x2 in -2.0f64..2.0, x3 in -2.0f64..2.0,
    ) {
        let tw = TwistProfile::bump(beta, 1.0).unwrap();
        let y = twist_map(&tw, [x1, x2, x3]);
        prop_assert!((y[0] - x1).abs() < 1e-15);
        prop_assert!(((y[1] * y[1] + y[2] * y[2]) - (x2 * x2 + x3 * x3)).abs() < 1e-12);
        prop_assert!((jacobian_det(&tw, [x1, x2, x3]) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn graded_grids_are_monotone_with_bounded_ratio(
        half in 40.0f64..100.0, core in 0.5f64..3.0, fine in 0.02f64..0.2, ratio in 1.05f64..1.2,
    ) {
        let g = Grid1D::graded(half, core, fine, 1.0, ratio).unwrap();
        let x = g.nodes();
        prop_assert!(x.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((x[0] + half).abs() < 1e-12 && (x[x.len() - 1] - half).abs() < 1e-12);
        prop_assert!(g.max_ratio() <= 1.2 + 1e-9);
        prop_assert!(g.max_spacing_on(-core, core) <= fine * (1.0 + 1e-9));
    }

    #[test]
    fn lattice_nodes_lie_inside_the_section(a in 0.5f64..2.0, b in 0.5f64..2.0, h in 0.05f64..0.3) {
        let section = CrossSection::Ellipse { semi_x: a, semi_y: b };
        let g = Grid2D::lattice(section, h).unwrap();
        prop_assert!(g.coords().iter().all(|&(x, y)| section.contains(x, y)));
    }

    #[test]
    fn twisted_stiffness_is_symmetric_psd(beta in -3.0f64..3.0, u in values(27 * 15)) {
        let form = small_twisted(beta);
        prop_assume!(form.n() == u.len());
        prop_assert!(form.energy(&u) >= -1e-12 * form.mass_norm_sq(&u));
        let a = &form.stiffness;
        for i in 0..a.n() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                prop_assert!((v - a.get(j, i)).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rayleigh_quotient_dominates_ground_value(beta in 0.5f64..3.0, u in values(27 * 15)) {
        let form = small_twisted(beta);
        prop_assume!(form.n() == u.len() && form.mass_norm_sq(&u) > 0.0);
        let ground = smallest_eigenpairs(&form, 1, &EigOptions::default()).unwrap()[0].value;
        prop_assert!(form.rayleigh(&u) >= ground * (1.0 - 1e-9));
    }

    #[test]
    fn implicit_euler_is_non_expansive_and_positivity_preserving(
        beta in prop_oneof![Just(0.0), -3.0f64..3.0],
        u in prop::collection::vec(0.0f64..1.0, 27 * 15),
        dt in 0.01f64..1.0,
    ) {
        let form = small_twisted(beta);
        prop_assume!(form.n() == u.len());
        let g = Grid2D::lattice(CrossSection::Rectangle { width: 3.0, height: 2.0 }, 0.5).unwrap();
        let e1 = smallest_eigenpairs(&twistlab_core::discretize::assemble_cross_section(&g).unwrap(), 1,
            &EigOptions::default()).unwrap()[0].value;
        let shifted = form.shifted(e1);
        let stepper = Stepper::new(&shifted, dt, Scheme::ImplicitEuler).unwrap();
        let mut state = HeatState { t: 0.0, u: u.clone() };
        let before = shifted.mass_norm_sq(&state.u);
        stepper.step(&mut state).unwrap();
        prop_assert!(shifted.mass_norm_sq(&state.u) <= before * (1.0 + 1e-12));
        if beta == 0.0 {
            prop_assert!(state.u.iter().all(|v| *v >= -1e-14));
        }
    }

    #[test]
    fn sobolev_and_hardy_margins_scale_quadratically(c in 0.1f64..10.0, u in values(201)) {
        let grid = Grid1D::uniform(-5.0, 5.0, 200).unwrap();
        let mut phi = u.clone();
        phi[0] = 0.0;
        phi[200] = 0.0;
        prop_assume!(phi.iter().any(|v| *v != 0.0));
        let m1 = check_sobolev_1d(&grid, &phi).unwrap();
        let scaled: Vec<f64> = phi.iter().map(|v| c * v).collect();
        let m2 = check_sobolev_1d(&grid, &scaled).unwrap();
        prop_assert!(m1.margin >= -1e-9 * m1.scale);
        prop_assert!((m2.margin - c * c * m1.margin).abs() <= 1e-9 * m2.scale);

        let form = small_twisted(0.0);
        let psi: Vec<f64> = (0..form.n()).map(|i| u[i % u.len()]).collect();
        let h1 = hardy_classical_margin(&form.layout, &psi, (-1.0, 1.0), 16.0).unwrap();
        let psi2: Vec<f64> = psi.iter().map(|v| c * v).collect();
        let h2 = hardy_classical_margin(&form.layout, &psi2, (-1.0, 1.0), 16.0).unwrap();
        prop_assert!((h2.margin - c * c * h1.margin).abs() <= 1e-9 * h2.scale.max(1.0));
    }

    #[test]
    fn lambert_w_solves_its_equation(ell in -20.0f64..5000.0) {
        let w = lambert_w_exp(ell);
        prop_assert!(w > 0.0);
        prop_assert!((w + w.ln() - ell).abs() <= 1e-12 * ell.abs().max(1.0));
    }

    #[test]
    fn offset_factor_is_a_lower_bound(x0 in -5.0f64..5.0, x in -50.0f64..50.0) {
        let f = offset_factor(x0);
        prop_assert!(f > 0.0 && f <= 1.0 + 1e-15);
        prop_assert!((1.0 + x * x) / (1.0 + (x - x0) * (x - x0)) >= f * (1.0 - 1e-12));
    }
}

#[test]
fn small_tube_has_expected_size() {
    assert_eq!(small_twisted(1.0).n(), 27 * 15);
}
