//! SGD with L2 penalty and the finite-difference gradient checker.

use crate::error::{Error, Result};
use crate::tape::{Grads, ParamSet};

/// One SGD step: p <- p - lr * (g + l2 * p) for every parameter entry.
pub fn sgd_step(params: &mut ParamSet, grads: &Grads, lr: f64, l2: f64) {
    for id in params.ids() {
        let g = grads.get(id).data().to_vec();
        let p = params.get_mut(id);
        for (pv, gv) in p.data_mut().iter_mut().zip(g.iter()) {
            *pv -= lr * (gv + l2 * *pv);
        }
    }
}

/// Compare `analytic` gradients against central finite differences of
/// `loss_fn` for every parameter entry; returns the worst relative error.
///
/// The relative error denominator is floored at 1e-3 so that entries whose
/// true gradient is essentially zero are compared absolutely, where central
/// differences are dominated by roundoff.
pub fn grad_check<F>(
    params: &mut ParamSet,
    analytic: &Grads,
    mut loss_fn: F,
    eps: f64,
) -> Result<f64>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidConfig("grad_check eps must be > 0".into()));
    }
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        let n = params.get(id).len();
        for e in 0..n {
            let orig = params.get(id).data()[e];
            params.get_mut(id).data_mut()[e] = orig + eps;
            let up = loss_fn(params)?;
            params.get_mut(id).data_mut()[e] = orig - eps;
            let down = loss_fn(params)?;
            params.get_mut(id).data_mut()[e] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {}[{}]",
                    params.name(id),
                    e
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(id).data()[e];
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            let rel = (a - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor2;

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut params = ParamSet::new();
        let id = params.register("p", Tensor2::col(&[1.0, -2.0]));
        let mut grads = Grads::zeros_like(&params);
        grads.get_mut(id).data_mut().copy_from_slice(&[5.0, 5.0]);
        sgd_step(&mut params, &grads, 0.0, 1e-5);
        assert_eq!(params.get(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn sgd_applies_l2_decay() {
        // p=1, g=0, lr=0.1, l2=1e-5 -> p = 1 - 1e-6
        let mut params = ParamSet::new();
        let id = params.register("p", Tensor2::col(&[1.0]));
        let grads = Grads::zeros_like(&params);
        sgd_step(&mut params, &grads, 0.1, 1e-5);
        assert!((params.get(id).data()[0] - (1.0 - 1e-6)).abs() < 1e-18);
    }

    #[test]
    fn sgd_plain_gradient_step() {
        // p=2, g=1, lr=0.1, l2=0 -> p = 1.9
        let mut params = ParamSet::new();
        let id = params.register("p", Tensor2::col(&[2.0]));
        let mut grads = Grads::zeros_like(&params);
        grads.get_mut(id).data_mut()[0] = 1.0;
        sgd_step(&mut params, &grads, 0.1, 0.0);
        assert!((params.get(id).data()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_with_unit_lr_and_no_l2_subtracts_gradient_exactly() {
        let mut params = ParamSet::new();
        let id = params.register("p", Tensor2::col(&[0.25, -3.5, 7.0]));
        let mut grads = Grads::zeros_like(&params);
        grads.get_mut(id).data_mut().copy_from_slice(&[1.0, 2.0, -0.5]);
        sgd_step(&mut params, &grads, 1.0, 0.0);
        assert_eq!(params.get(id).data(), &[-0.75, -5.5, 7.5]);
    }

    #[test]
    fn grad_check_exact_for_quadratic() {
        // f(p) = p^2 at p = 3: analytic 6, central difference 6.
        let mut params = ParamSet::new();
        let id = params.register("p", Tensor2::col(&[3.0]));
        let mut analytic = Grads::zeros_like(&params);
        analytic.get_mut(id).data_mut()[0] = 6.0;
        let err = grad_check(
            &mut params,
            &analytic,
            |p| Ok(p.get(id).data()[0] * p.get(id).data()[0]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn grad_check_flags_wrong_gradient() {
        let mut params = ParamSet::new();
        let id = params.register("p", Tensor2::col(&[3.0]));
        let mut analytic = Grads::zeros_like(&params);
        analytic.get_mut(id).data_mut()[0] = 5.0; // wrong on purpose
        let err = grad_check(
            &mut params,
            &analytic,
            |p| Ok(p.get(id).data()[0] * p.get(id).data()[0]),
            1e-5,
        )
        .unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn grad_check_rejects_non_finite_loss() {
        let mut params = ParamSet::new();
        params.register("p", Tensor2::col(&[3.0]));
        let analytic = Grads::zeros_like(&params);
        let res = grad_check(&mut params, &analytic, |_| Ok(f64::NAN), 1e-5);
        assert!(res.is_err());
    }
}
