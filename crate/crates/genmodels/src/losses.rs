//! Training objectives, recorded on a [`Graph`] so they can be differentiated.

use resgen_nn::{Graph, NnError, Real, Tensor, Var};

use crate::config::ResolvedWeights;

/// `z = mu + exp(logvar / 2) * eps`, differentiable in `mu` and `logvar`.
pub fn reparameterize<T: Real>(
    g: &mut Graph<T>,
    mu: Var,
    logvar: Var,
    eps: Tensor<T>,
) -> Result<Var, NnError> {
    let half = g.scale(logvar, 0.5);
    let sigma = g.exp(half);
    let e = g.input(eps);
    let noise = g.mul(sigma, e)?;
    g.add(mu, noise)
}

/// Mean squared error over every element.
pub fn mse<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var, NnError> {
    let d = g.sub(a, b)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Mean absolute error over every element.
pub fn mae<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var, NnError> {
    let d = g.sub(a, b)?;
    let ab = g.abs(d);
    Ok(g.mean(ab))
}

/// KL divergence from `N(mu, exp(logvar))` to the standard normal, summed over
/// latent coordinates and averaged over the batch.
pub fn kl_divergence<T: Real>(g: &mut Graph<T>, mu: Var, logvar: Var) -> Result<Var, NnError> {
    let batch = g.shape(mu)[0].max(1);
    let m2 = g.square(mu);
    let var = g.exp(logvar);
    let a = g.add(m2, var)?;
    let b = g.sub(a, logvar)?;
    let c = g.offset(b, -1.0);
    let s = g.sum(c);
    Ok(g.scale(s, 0.5 / batch as f64))
}

#[derive(Clone, Copy, Debug)]
pub struct ElboTerms {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
}

/// Negative ELBO with a Gaussian likelihood: `mse + beta * kl`.
pub fn elbo_loss<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    x_hat: Var,
    mu: Var,
    logvar: Var,
    beta: f64,
) -> Result<ElboTerms, NnError> {
    let recon = mse(g, x_hat, x)?;
    let kl = kl_divergence(g, mu, logvar)?;
    let weighted = g.scale(kl, beta);
    let total = g.add(recon, weighted)?;
    Ok(ElboTerms { total, recon, kl })
}

#[derive(Clone, Copy, Debug)]
pub struct GanTerms {
    /// Non-saturating generator loss, `mean softplus(-D(fake))`.
    pub generator: Var,
    /// `real_term + fake_term`.
    pub discriminator: Var,
    /// `mean softplus(-D(real))`.
    pub real_term: Var,
    /// `mean softplus(D(fake))`.
    pub fake_term: Var,
}

pub fn gan_losses<T: Real>(g: &mut Graph<T>, real_logits: Var, fake_logits: Var) -> Result<GanTerms, NnError> {
    let neg_real = g.neg(real_logits);
    let sp_real = g.softplus(neg_real);
    let real_term = g.mean(sp_real);
    let sp_fake = g.softplus(fake_logits);
    let fake_term = g.mean(sp_fake);
    let discriminator = g.add(real_term, fake_term)?;
    let generator = generator_loss(g, fake_logits);
    Ok(GanTerms {
        generator,
        discriminator,
        real_term,
        fake_term,
    })
}

pub fn generator_loss<T: Real>(g: &mut Graph<T>, fake_logits: Var) -> Var {
    let neg = g.neg(fake_logits);
    let sp = g.softplus(neg);
    g.mean(sp)
}

/// `(gamma / 2) * E ||grad_x D(x)||^2` on the real batch `x`, where
/// `real_logits` was computed from `x` on the same graph.
pub fn r1_penalty<T: Real>(g: &mut Graph<T>, x: Var, real_logits: Var, gamma: f64) -> Result<Var, NnError> {
    let batch = g.shape(x)[0].max(1);
    let total = g.sum(real_logits);
    let grad = g.grad(total, &[x])?[0];
    Ok(match grad {
        Some(gx) => {
            let sq = g.square(gx);
            let s = g.sum(sq);
            g.scale(s, 0.5 * gamma / batch as f64)
        }
        None => g.input(Tensor::zeros(&[1])),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct VaeganTerms {
    /// Encoder objective: weighted reconstruction, KL and perceptual terms.
    pub total: Var,
    /// `total` plus the weighted adversarial term, used for the decoder.
    pub decoder_total: Var,
    pub l1: Var,
    pub l2: Var,
    pub kl: Var,
    pub perceptual: Var,
    pub adversarial: Var,
}

/// VAE-GAN objective. `features` holds classifier activations for `x` and
/// `x_hat`; without them the perceptual term is zero.
#[allow(clippy::too_many_arguments)]
pub fn vaegan_total_loss<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    x_hat: Var,
    mu: Var,
    logvar: Var,
    fake_logits: Var,
    features: Option<(Var, Var)>,
    w: &ResolvedWeights,
) -> Result<VaeganTerms, NnError> {
    let l1 = mae(g, x_hat, x)?;
    let l2 = mse(g, x_hat, x)?;
    let kl = kl_divergence(g, mu, logvar)?;
    let perceptual = match features {
        Some((fx, fh)) => mse(g, fh, fx)?,
        None => g.input(Tensor::zeros(&[1])),
    };
    let adversarial = generator_loss(g, fake_logits);
    let mut total = g.scale(l1, w.l1);
    for (term, weight) in [(l2, w.l2), (kl, w.beta), (perceptual, w.gamma)] {
        let t = g.scale(term, weight);
        total = g.add(total, t)?;
    }
    let adv = g.scale(adversarial, w.adversarial);
    let decoder_total = g.add(total, adv)?;
    Ok(VaeganTerms {
        total,
        decoder_total,
        l1,
        l2,
        kl,
        perceptual,
        adversarial,
    })
}
