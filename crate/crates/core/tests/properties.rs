use proptest::prelude::*;
use ribaucour::expr::{BinOp, Func};
use ribaucour::grid::fd_jet_oracle;
use ribaucour::jet_matrix::JetMatrix;
use ribaucour::{parse_tau, Domain, Expr, Jet2};

fn ast() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..4000).prop_map(|k| Expr::Const(k as f64 / 16.0)),
        (0usize..2).prop_map(Expr::Var),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow)
        ];
        let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Ln)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Bin(o, Box::new(a), Box::new(b))),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

/// Smooth everywhere: bounded arguments to exp, positive arguments to ln.
fn smooth_source() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        (0.1f64..2.0, 0usize..2, 0usize..2).prop_map(|(c, f, x)| {
            format!("{c:.3}*{}({})", ["sin", "cos"][f], ["u", "v"][x])
        }),
        (0.1f64..0.5, 0usize..2).prop_map(|(c, f)| format!("exp({c:.3}*{}(u+v))", ["sin", "cos"][f])),
        (0.1f64..0.9).prop_map(|c| format!("ln(2 + {c:.3}*sin(u)*cos(v))")),
        (0.1f64..0.9).prop_map(|c| format!("(1 + {c:.3}*cos(v))^2")),
    ];
    proptest::collection::vec(atom, 1..4).prop_map(|xs| xs.join(" + "))
}

proptest! {
    #[test]
    fn display_then_parse_is_identity(e in ast()) {
        let printed = e.to_string();
        let back = parse_tau(&printed).unwrap();
        prop_assert_eq!(back, e, "{}", printed);
    }

    #[test]
    fn inverse_of_random_jet_matrix(
        vals in proptest::array::uniform4(-2.0f64..2.0),
        grads in proptest::array::uniform8(-1.0f64..1.0),
        hess in proptest::array::uniform12(-1.0f64..1.0),
    ) {
        let det = vals[0] * vals[3] - vals[1] * vals[2];
        prop_assume!(det.abs() > 0.1);
        let m = JetMatrix::from_fn(2, 2, |i, j| {
            let k = 2 * i + j;
            let h = [hess[3 * k], hess[3 * k + 1], hess[3 * k + 1], hess[3 * k + 2]];
            Jet2::from_parts(vals[k], &grads[2 * k..2 * k + 2], &h)
        });
        let inv = m.inverse().unwrap();
        let prod = &m * &inv;
        let id = JetMatrix::identity(2, 2);
        prop_assert!(prod.max_abs_diff(&id) < 1e-12 * (1.0 + 1.0 / det.abs()).powi(4));
    }

    #[test]
    fn jets_agree_with_central_differences(src in smooth_source(), u in 0.5f64..5.5, v in 0.5f64..5.5) {
        let e = parse_tau(&src).unwrap();
        let exact = e.jet_at(&[u, v]).unwrap();
        let fd = fd_jet_oracle(|p| Ok(e.eval(p)?), &[u, v], 1e-3, &Domain::torus()).unwrap();
        // O(h²) truncation plus round-off in the second differences
        prop_assert!(exact.max_abs_diff(&fd) < 1e-4, "{} {:?} {:?}", src, exact, fd);
    }
}
