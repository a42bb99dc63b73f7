use proptest::prelude::*;
use rpde::expr::Expr;
use rpde::feynman_kac::{backward_field, forward_measure, InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
use rpde::rde::{solve_flow, ExprFields};
use rpde::roughpath::{chen_compose, lift_piecewise_linear, Grid};

fn samples(steps: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let mut x = vec![vec![0.0, 0.0]];
    for (a, b) in steps {
        let last = x.last().unwrap().clone();
        x.push(vec![last[0] + a, last[1] + b]);
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chen_holds_on_piecewise_linear_lifts(
        steps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4..24),
        cut in 0.0f64..1.0,
    ) {
        let n = steps.len();
        let grid = Grid::uniform(1.0, n).unwrap();
        let w = lift_piecewise_linear(&grid, &samples(&steps), 0.45).unwrap();
        let k = ((n as f64 * cut) as usize).clamp(1, n - 1);
        let whole = w.increment(0, n);
        let split = chen_compose(&w.increment(0, k), &w.increment(k, n)).unwrap();
        for (a, b) in whole.second.iter().zip(&split.second) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reversal_is_an_involution(steps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..16)) {
        let grid = Grid::uniform(1.0, steps.len()).unwrap();
        let w = lift_piecewise_linear(&grid, &samples(&steps), 0.45).unwrap();
        let back = w.reversed().reversed();
        let (a, b) = (w.increment(0, steps.len()), back.increment(0, steps.len()));
        for (x, y) in a.second.iter().zip(&b.second) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_driver_flow_is_identity(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let grid = Grid::uniform(1.0, 8).unwrap();
        let w = lift_piecewise_linear(&grid, &samples(&[(0.0, 0.0); 8]), 0.45).unwrap().into_inner();
        let f = ExprFields::parse(2, &[vec!["sin(x1)", "x0"], vec!["1", "cos(x0)"]], &["0", "0"], 4).unwrap();
        let flow = solve_flow(&f, &w, &[vec![x, y]]).unwrap();
        prop_assert_eq!(&flow.forward[0], &vec![x, y]);
        prop_assert!((flow.det[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn terminal_row_equals_datum(shift in -2.0f64..2.0, seed in 0u64..1000) {
        let grid = Grid::uniform(1.0, 8).unwrap();
        let w = lift_piecewise_linear(&grid, &(0..=8).map(|k| vec![(k as f64).sin()]).collect::<Vec<_>>(), 0.45).unwrap().into_inner();
        let coeffs = OperatorCoefficients::parse(1, &[vec!["0.5"]], &["0"], "0", &[vec!["1"]], &["0"]).unwrap();
        let g = Expr::parse(&format!("exp(-(x-{shift})^2)")).unwrap();
        let space = SpaceGrid::uniform(1, 3.0, 7).unwrap();
        let u = backward_field(&coeffs, &g, &w, &[0, 8], &space, &McParams::new(8, seed)).unwrap();
        for (p, x) in space.points().iter().enumerate() {
            prop_assert_eq!(u.values[1][p], g.eval(x, 1.0));
        }
    }

    #[test]
    fn initial_weights_are_one(mass in 0.1f64..5.0, seed in 0u64..1000) {
        let grid = Grid::uniform(1.0, 8).unwrap();
        let w = lift_piecewise_linear(&grid, &(0..=8).map(|k| vec![0.1 * k as f64]).collect::<Vec<_>>(), 0.45).unwrap().into_inner();
        let coeffs = OperatorCoefficients::parse(1, &[vec!["0.5"]], &["0"], "0.3", &[vec!["1"]], &["0.2"]).unwrap();
        let nu = InitialMeasure::Gaussian { mean: vec![0.0], std: 1.0, mass };
        let rho = forward_measure(&coeffs, &nu, &w, &McParams::new(16, seed), &[0, 8]).unwrap();
        prop_assert!(rho.weights(0).iter().all(|&v| v == 1.0));
        prop_assert!((rho.total_mass(0).unwrap().mean - mass).abs() < 1e-12 * mass);
    }
}
