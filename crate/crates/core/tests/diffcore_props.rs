mod support;

use judgelab_core::diffcore::{Tape, Var};
use proptest::prelude::*;
use support::{close, fd_grad};

/// A straight-line program over smooth primitives, evaluated either in
/// plain arithmetic or on a tape.
#[derive(Debug, Clone)]
struct Program {
    ops: Vec<(u8, usize, usize, f64)>,
}

fn program() -> impl Strategy<Value = (Program, Vec<f64>, Vec<f64>)> {
    (1usize..6, 1usize..24).prop_flat_map(|(params, len)| {
        let ops =
            proptest::collection::vec((0u8..10, any::<usize>(), any::<usize>(), -1.5f64..1.5), len);
        let point = proptest::collection::vec(-1.0f64..1.0, params);
        let dir = proptest::collection::vec(-1.0f64..1.0, params);
        (ops, point, dir).prop_map(move |(ops, point, dir)| {
            let ops = ops
                .into_iter()
                .enumerate()
                .map(|(k, (op, a, b, c))| (op, a % (params + k), b % (params + k), c))
                .collect();
            (Program { ops }, point, dir)
        })
    })
}

fn plain(p: &Program, x: &[f64]) -> f64 {
    let mut v: Vec<f64> = x.to_vec();
    for &(op, a, b, c) in &p.ops {
        let (va, vb) = (v[a], v[b]);
        v.push(match op {
            0 => va + vb,
            1 => va * vb,
            2 => va - vb,
            3 => va.tanh(),
            4 => 1.0 / (1.0 + (-va).exp()),
            5 => va.max(0.0) + (-va.abs()).exp().ln_1p(),
            6 => support::ln_sigmoid(va),
            7 => c * va,
            8 => va + c,
            _ => -va,
        });
    }
    v.iter().rev().take(3).sum()
}

fn record(p: &Program, tape: &mut Tape, x: &[f64]) -> Var {
    let mut v: Vec<Var> = tape.params(x);
    for &(op, a, b, c) in &p.ops {
        let (va, vb) = (v[a], v[b]);
        let out = match op {
            0 => tape.add(va, vb),
            1 => tape.mul(va, vb),
            2 => tape.sub(va, vb),
            3 => tape.tanh(va),
            4 => tape.sigmoid(va),
            5 => tape.softplus(va),
            6 => tape.log_sigmoid(va),
            7 => tape.scale(va, c),
            8 => tape.add_const(va, c),
            _ => tape.neg(va),
        };
        v.push(out);
    }
    let tail: Vec<Var> = v.iter().rev().take(3).copied().collect();
    tape.sum(&tail)
}

fn tame(p: &Program, x: &[f64]) -> bool {
    plain(p, x).abs() < 1e3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn values_match_plain_arithmetic((p, x, _) in program()) {
        prop_assume!(tame(&p, &x));
        let mut tape = Tape::new();
        let root = record(&p, &mut tape, &x);
        prop_assert!((tape.value(root) - plain(&p, &x)).abs() <= 1e-12 * (1.0 + plain(&p, &x).abs()));
    }

    #[test]
    fn gradient_matches_finite_differences((p, x, _) in program()) {
        prop_assume!(tame(&p, &x));
        let mut tape = Tape::new();
        let root = record(&p, &mut tape, &x);
        let g = tape.backward(root).unwrap();
        let numeric = fd_grad(|y| plain(&p, y), &x, 1e-3);
        // Floor at 1e-4: the stencil carries ~1e-12 of rounding noise.
        prop_assert!(close(&g, &numeric, 1e-6, 1e-4), "{g:?} vs {numeric:?}");
    }

    #[test]
    fn hvp_matches_differenced_gradients((p, x, d) in program()) {
        prop_assume!(tame(&p, &x));
        let mut tape = Tape::new();
        let root = record(&p, &mut tape, &x);
        let (g, hv) = tape.grad_and_hvp(root, &d).unwrap();
        prop_assert_eq!(&g, &tape.backward(root).unwrap());
        let grad_at = |t: f64| {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let mut tp = Tape::new();
            let r = record(&p, &mut tp, &y);
            tp.backward(r).unwrap()
        };
        let h = 1e-4;
        let (gp, gm, gp2, gm2) = (grad_at(h), grad_at(-h), grad_at(2.0 * h), grad_at(-2.0 * h));
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| (8.0 * (gp[i] - gm[i]) - (gp2[i] - gm2[i])) / (12.0 * h))
            .collect();
        prop_assert!(close(&hv, &numeric, 1e-6, 1e-4), "{hv:?} vs {numeric:?}");
    }

    #[test]
    fn replay_equals_fresh_recording((p, x, d) in program()) {
        let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + 0.5 * b).collect();
        prop_assume!(tame(&p, &x) && tame(&p, &y));
        let mut tape = Tape::new();
        let root = record(&p, &mut tape, &x);
        let replayed = tape.forward(&y, root).unwrap();
        let mut fresh = Tape::new();
        let r = record(&p, &mut fresh, &y);
        prop_assert_eq!(replayed, fresh.value(r));
        prop_assert_eq!(tape.backward(root).unwrap(), fresh.backward(r).unwrap());
    }

    #[test]
    fn hvp_is_linear_in_direction((p, x, d) in program(), s in -3.0f64..3.0) {
        prop_assume!(tame(&p, &x));
        let mut tape = Tape::new();
        let root = record(&p, &mut tape, &x);
        let hv = tape.hvp(root, &d).unwrap();
        let sd: Vec<f64> = d.iter().map(|v| s * v).collect();
        let shv = tape.hvp(root, &sd).unwrap();
        let scaled: Vec<f64> = hv.iter().map(|v| s * v).collect();
        // Floor at 1: second derivatives can cancel to rounding noise.
        prop_assert!(close(&shv, &scaled, 1e-12, 1.0), "{shv:?} vs {scaled:?}");
    }
}
