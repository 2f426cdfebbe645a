//! Wasserstein losses with gradient penalty.

use crate::models::ModelError;
use crate::tensor::{backward, Tensor};

/// Offset under the square root of the per-sample gradient norm, keeping
/// the penalty differentiable at zero gradient.
pub const NORM_EPSILON: f64 = 1e-12;

/// A critic maps `[batch, ...]` to `[batch, 1]` (or `[batch]`) scores.
pub type Critic<'a> = dyn Fn(&Tensor) -> Result<Tensor, ModelError> + 'a;

/// Critic loss terms. `loss` is differentiable w.r.t. the critic's
/// parameters; the rest are plain values for logging.
pub struct CriticLoss {
    pub loss: Tensor,
    /// E[D(real)] - E[D(fake)].
    pub wasserstein: f64,
    /// E[(||grad D(x_hat)|| - 1)^2], without the weight.
    pub penalty: f64,
}

/// `eps * real + (1 - eps) * fake` with one `eps` per sample.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Result<Tensor, ModelError> {
    let b = real.shape()[0];
    if fake.shape() != real.shape() || eps.len() != b {
        return Err(ModelError::Shape(format!(
            "real {:?}, fake {:?}, {} interpolation weights",
            real.shape(),
            fake.shape(),
            eps.len()
        )));
    }
    let per = real.numel() / b;
    let e: Vec<f64> = eps.iter().flat_map(|&e| std::iter::repeat_n(e, per)).collect();
    let one_minus: Vec<f64> = e.iter().map(|e| 1.0 - e).collect();
    let e = Tensor::new(real.shape(), e)?;
    let one_minus = Tensor::new(real.shape(), one_minus)?;
    Ok(real.mul(&e)?.add(&fake.mul(&one_minus)?)?)
}

/// Mean over samples of `(||grad_x critic(x)||_2 - 1)^2` at `x_hat`,
/// kept differentiable w.r.t. the critic's parameters.
pub fn gradient_penalty(critic: &Critic, x_hat: &Tensor) -> Result<Tensor, ModelError> {
    let b = x_hat.shape()[0];
    let x = x_hat.detach_param();
    let score = critic(&x)?.sum_all();
    let g = backward(&score, true)?.wrt(&x);
    let norms = g
        .square()
        .reshape(&[b, x.numel() / b])?
        .sum_last()?
        .add_scalar(NORM_EPSILON)
        .powf(0.5);
    Ok(norms.add_scalar(-1.0).square().mean_all())
}

/// `E[D(fake)] - E[D(real)] + weight * penalty`.
pub fn critic_loss(critic: &Critic, real: &Tensor, fake: &Tensor, eps: &[f64], weight: f64) -> Result<CriticLoss, ModelError> {
    let d_real = critic(real)?.mean_all();
    let d_fake = critic(fake)?.mean_all();
    let w = d_fake.sub(&d_real)?;
    let gp = gradient_penalty(critic, &interpolate(real, fake, eps)?)?;
    let loss = w.add(&gp.scale(weight))?;
    Ok(CriticLoss {
        wasserstein: -w.item()?,
        penalty: gp.item()?,
        loss,
    })
}

/// `-E[D(fake)]`.
pub fn generator_loss(critic: &Critic, fake: &Tensor) -> Result<Tensor, ModelError> {
    Ok(critic(fake)?.mean_all().neg())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(v: &[f64]) -> Tensor {
        Tensor::new(&[v.len() / 2, 2], v.to_vec()).unwrap()
    }

    #[test]
    fn constant_critic_penalty_is_one() {
        let c = |x: &Tensor| Ok(Tensor::full(&[x.shape()[0], 1], 3.0));
        let r = critic_loss(&c, &batch(&[1.0, 2.0, 3.0, 4.0]), &batch(&[0.0; 4]), &[0.3, 0.6], 10.0).unwrap();
        assert_eq!(r.wasserstein, 0.0);
        assert!((r.penalty - 1.0).abs() < 1e-5);
        assert!((r.loss.item().unwrap() - 10.0).abs() < 1e-4);
    }

    #[test]
    fn unit_linear_critic_has_no_penalty() {
        let w = Tensor::param(&[2, 1], vec![0.6, 0.8]).unwrap();
        let c = |x: &Tensor| Ok(x.matmul(&w)?);
        let real = batch(&[1.0, 0.0, 2.0, 1.0]);
        let fake = batch(&[0.0, 0.0, 0.0, -1.0]);
        let r = critic_loss(&c, &real, &fake, &[0.5, 0.1], 10.0).unwrap();
        assert!(r.penalty < 1e-10);
        // plain Wasserstein estimate: mean <w, real - fake>
        let expected = (0.6 + (0.6 * 2.0 + 0.8 * 2.0)) / 2.0;
        assert!((r.wasserstein - expected).abs() < 1e-12);
        let r0 = critic_loss(&c, &real, &fake, &[0.5, 0.1], 0.0).unwrap();
        assert!((r0.loss.item().unwrap() + expected).abs() < 1e-12);
    }

    #[test]
    fn interpolation_endpoints() {
        let real = batch(&[1.0, 2.0, 3.0, 4.0]);
        let fake = batch(&[-1.0; 4]);
        let x = interpolate(&real, &fake, &[1.0, 0.0]).unwrap();
        assert_eq!(x.data(), &[1.0, 2.0, -1.0, -1.0]);
    }
}
