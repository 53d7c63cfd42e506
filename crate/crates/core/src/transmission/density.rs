use crate::error::{Error, Result};
use crate::rng::{logit, normal_logpdf, softplus};

/// Log density of one transmission outcome: a point mass at zero with
/// probability 1 − π, otherwise a logit-normal on (0, 1).
pub fn mixed_logdensity(t: f64, pi: f64, mu_w: f64, sigma2_eps: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::invalid(format!("transmission outcome {t} outside [0, 1)")));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid(format!("π = {pi} outside (0, 1)")));
    }
    Ok(if t == 0.0 {
        (1.0 - pi).ln()
    } else {
        pi.ln() - t.ln() - (1.0 - t).ln() + normal_logpdf(logit(t), mu_w, sigma2_eps)
    })
}

/// Same density with π given on the logit scale; stable for large |ψ|.
/// `w` must be `logit(t)` when `t > 0`.
pub(crate) fn mixed_logdensity_logit(t: f64, w: f64, psi: f64, mu_w: f64, sigma2_eps: f64) -> f64 {
    if t == 0.0 {
        -softplus(psi)
    } else {
        -softplus(-psi) - t.ln() - (1.0 - t).ln() + normal_logpdf(w, mu_w, sigma2_eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::logistic;

    #[test]
    fn point_mass_and_jacobian() {
        assert!((mixed_logdensity(0.0, 0.25, 3.0, 2.0).unwrap() - 0.75f64.ln()).abs() < 1e-15);
        // at t = 1/2 the logit is 0 and the Jacobian is ln 4
        let v = mixed_logdensity(0.5, 0.5, 0.0, 1.0).unwrap();
        let expected = 0.5f64.ln() + 4f64.ln() + normal_logpdf(0.0, 0.0, 1.0);
        assert!((v - expected).abs() < 1e-14);
        assert!(mixed_logdensity(1.0, 0.5, 0.0, 1.0).is_err());
        assert!(mixed_logdensity(-0.1, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn logit_form_agrees() {
        for &(t, psi, mu, s2) in &[(0.0, -1.3, 0.2, 0.7), (0.3, 2.0, -1.0, 2.4), (0.9, -4.0, 1.5, 0.3)] {
            let w = if t > 0.0 { logit(t) } else { 0.0 };
            let a = mixed_logdensity(t, logistic(psi), mu, s2).unwrap();
            let b = mixed_logdensity_logit(t, w, psi, mu, s2);
            assert!((a - b).abs() < 1e-12);
        }
        // no overflow far in the tails
        assert!(mixed_logdensity_logit(0.0, 0.0, 800.0, 0.0, 1.0).is_finite());
        assert!(mixed_logdensity_logit(0.2, logit(0.2), -800.0, 0.0, 1.0).is_finite());
    }
}
