use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::nn::{init_params, Activation, MlpParams};
use crate::scalar::Scalar;

use super::MarkovSequence;

/// Per-step noise coefficients: `α_l = 1 - β_l`, `ᾱ_l = ∏_{i<=l} α_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    alphas: Vec<T>,
    betas: Vec<T>,
    alpha_bars: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn from_betas(betas: Vec<T>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument(
                "noise schedule needs at least one step".into(),
            ));
        }
        if betas.iter().any(|&b| !(b >= T::zero() && b < T::one())) {
            return Err(Error::InvalidArgument("betas must lie in [0, 1)".into()));
        }
        let alphas: Vec<T> = betas.iter().map(|&b| T::one() - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(T::one(), |acc, &a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            alphas,
            betas,
            alpha_bars,
        })
    }

    /// Betas spaced linearly from `beta_start` to `beta_end` over `len` steps.
    pub fn linear(len: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        let betas = (0..len)
            .map(|i| {
                let t = if len > 1 {
                    i as f64 / (len - 1) as f64
                } else {
                    0.0
                };
                T::lit(beta_start + t * (beta_end - beta_start))
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Linear schedule from `1e-4` to `0.02`.
    pub fn ddpm_default(len: usize) -> Result<Self> {
        Self::linear(len, 1e-4, 0.02)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Coefficients for step `l` (1-based).
    pub fn alpha(&self, l: usize) -> T {
        self.alphas[l - 1]
    }

    pub fn beta(&self, l: usize) -> T {
        self.betas[l - 1]
    }

    pub fn alpha_bar(&self, l: usize) -> T {
        self.alpha_bars[l - 1]
    }

    /// `(1 - α_l) / sqrt(1 - ᾱ_l)`, taken as 0 when `α_l = 1`.
    pub fn noise_weight(&self, l: usize) -> T {
        let num = T::one() - self.alpha(l);
        if num == T::zero() {
            T::zero()
        } else {
            num / (T::one() - self.alpha_bar(l)).sqrt()
        }
    }
}

/// Pre-sampled standard-normal draws, one per denoising step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTape<T> {
    pub draws: Vec<DenseVector<T>>,
    pub seed: u64,
}

impl<T: Scalar> NoiseTape<T> {
    pub fn sample(len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = (0..len)
            .map(|_| {
                DenseVector::from_fn(dim, |_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    T::lit(v)
                })
            })
            .collect();
        Self { draws, seed }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Noise predictor `g(z, l)` used inside a denoising step.
pub trait Denoiser<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn predict(&self, z: &DenseVector<T>, step: usize) -> DenseVector<T>;

    /// `∂g/∂z` at `(z, step)`.
    fn jacobian(&self, z: &DenseVector<T>, step: usize) -> DenseMatrix<T>;
}

/// `g ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroDenoiser {
    pub dim: usize,
}

impl<T: Scalar> Denoiser<T> for ZeroDenoiser {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, _z: &DenseVector<T>, _step: usize) -> DenseVector<T> {
        DenseVector::zeros(self.dim)
    }

    fn jacobian(&self, _z: &DenseVector<T>, _step: usize) -> DenseMatrix<T> {
        DenseMatrix::zeros(self.dim, self.dim)
    }
}

/// Residual MLP noise predictor: `g(z, l) = u + net(u)` with `u = z + e(l)`,
/// where `e` is a sinusoidal step embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpDenoiser<T> {
    pub net: MlpParams<T>,
}

impl<T: Scalar> MlpDenoiser<T> {
    pub fn new(net: MlpParams<T>) -> Result<Self> {
        if net.input_dim() != net.output_dim() {
            return Err(shape_err("MlpDenoiser", net.input_dim(), net.output_dim()));
        }
        Ok(Self { net })
    }

    /// Randomly initialized `dim -> hidden -> dim` network with a tanh hidden layer.
    pub fn random(dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        Self::new(init_params(
            &[dim, hidden, dim],
            &[Activation::Identity, Activation::Tanh],
            seed,
        )?)
    }

    fn embedded(&self, z: &DenseVector<T>, step: usize) -> DenseVector<T> {
        z.add(&sinusoidal_embedding(step, z.dim()))
            .expect("embedding dim matches")
    }
}

impl<T: Scalar> Denoiser<T> for MlpDenoiser<T> {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn predict(&self, z: &DenseVector<T>, step: usize) -> DenseVector<T> {
        let u = self.embedded(z, step);
        let out = self.net.forward(&u).expect("denoiser dims validated");
        u.add(&out).expect("denoiser dims validated")
    }

    fn jacobian(&self, z: &DenseVector<T>, step: usize) -> DenseMatrix<T> {
        let u = self.embedded(z, step);
        let mut jac = self
            .net
            .input_jacobian(&u)
            .expect("denoiser dims validated");
        for i in 0..jac.rows() {
            jac.set(i, i, jac.get(i, i) + T::one());
        }
        jac
    }
}

/// `e(l)_{2k} = sin(l ω_k)`, `e(l)_{2k+1} = cos(l ω_k)`, `ω_k = 10000^{-2k/dim}`.
pub fn sinusoidal_embedding<T: Scalar>(step: usize, dim: usize) -> DenseVector<T> {
    DenseVector::from_fn(dim, |i| {
        let k = (i / 2) as f64;
        let omega = 10000f64.powf(-2.0 * k / dim as f64);
        let phase = step as f64 * omega;
        T::lit(if i % 2 == 0 { phase.sin() } else { phase.cos() })
    })
}

/// Denoising chain:
/// `f_l(z) = (z - w_l g(z, l)) / sqrt(α_l) + sqrt(β_l) ε_l`, with
/// `w_l = (1 - α_l) / sqrt(1 - ᾱ_l)` and `ε_l` read from the noise tape.
#[derive(Clone, Debug)]
pub struct DiffusionSequence<'a, T, D> {
    denoiser: &'a D,
    schedule: &'a NoiseSchedule<T>,
    tape: &'a NoiseTape<T>,
    z_init: DenseVector<T>,
}

pub fn diffusion_sequence<'a, T: Scalar, D: Denoiser<T>>(
    denoiser: &'a D,
    schedule: &'a NoiseSchedule<T>,
    tape: &'a NoiseTape<T>,
    z_init: DenseVector<T>,
) -> Result<DiffusionSequence<'a, T, D>> {
    if tape.len() != schedule.len() {
        return Err(shape_err(
            "diffusion noise tape length",
            schedule.len(),
            tape.len(),
        ));
    }
    let dim = denoiser.dim();
    if z_init.dim() != dim {
        return Err(shape_err("diffusion initial state", dim, z_init.dim()));
    }
    if let Some(bad) = tape.draws.iter().find(|d| d.dim() != dim) {
        return Err(shape_err("diffusion noise draw", dim, bad.dim()));
    }
    Ok(DiffusionSequence {
        denoiser,
        schedule,
        tape,
        z_init,
    })
}

impl<T: Scalar, D: Denoiser<T>> MarkovSequence<T> for DiffusionSequence<'_, T, D> {
    fn len(&self) -> usize {
        self.schedule.len()
    }

    fn state_dim(&self, _l: usize) -> usize {
        self.z_init.dim()
    }

    fn initial_value(&self) -> DenseVector<T> {
        self.z_init.clone()
    }

    fn step(&self, l: usize, prev: &DenseVector<T>) -> DenseVector<T> {
        let inv_sqrt_alpha = T::one() / self.schedule.alpha(l).sqrt();
        let w = self.schedule.noise_weight(l);
        let sigma = self.schedule.beta(l).sqrt();
        let g = self.denoiser.predict(prev, l);
        let noise = &self.tape.draws[l - 1];
        DenseVector::from_fn(prev.dim(), |i| {
            (prev.get(i) - w * g.get(i)) * inv_sqrt_alpha + sigma * noise.get(i)
        })
    }

    fn step_jacobian(&self, l: usize, prev: &DenseVector<T>) -> DenseMatrix<T> {
        let inv_sqrt_alpha = T::one() / self.schedule.alpha(l).sqrt();
        let w = self.schedule.noise_weight(l);
        let mut jac = self.denoiser.jacobian(prev, l).scaled(-w * inv_sqrt_alpha);
        for i in 0..jac.rows() {
            jac.set(i, i, jac.get(i, i) + inv_sqrt_alpha);
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::{newton_solve, NewtonConfig};
    use crate::sequences::anchored_guess;
    use crate::sequences::testing::{fd_jacobian, rel_diff};
    use rand::{Rng, SeedableRng};

    #[test]
    fn schedule_invariants() {
        let s = NoiseSchedule::<f64>::ddpm_default(100).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(100) - 0.02).abs() < 1e-15);
        let mut prev = 1.0;
        for l in 1..=100 {
            assert_eq!(s.alpha(l), 1.0 - s.beta(l));
            assert!(s.alpha_bar(l) < prev && s.alpha_bar(l) > 0.0);
            prev = s.alpha_bar(l);
        }
        assert!(NoiseSchedule::<f64>::from_betas(vec![]).is_err());
        assert!(NoiseSchedule::<f64>::from_betas(vec![1.0]).is_err());
    }

    #[test]
    fn tape_is_reproducible() {
        let a = NoiseTape::<f64>::sample(16, 4, 9);
        assert_eq!(a, NoiseTape::sample(16, 4, 9));
        assert_ne!(a, NoiseTape::sample(16, 4, 10));
    }

    #[test]
    fn degenerate_schedule_is_identity() {
        let s = NoiseSchedule::<f64>::from_betas(vec![0.0; 5]).unwrap();
        let tape = NoiseTape::sample(5, 3, 1);
        let den = MlpDenoiser::random(3, 8, 2).unwrap();
        let z = DenseVector::from_vec(vec![0.5, -1.0, 2.0]);
        let seq = diffusion_sequence(&den, &s, &tape, z.clone()).unwrap();
        assert_eq!(seq.step(3, &z), z);
        assert_eq!(seq.step_jacobian(3, &z), DenseMatrix::identity(3));
        assert_eq!(seq.rollout()[5], z);
    }

    #[test]
    fn zero_denoiser_closed_form() {
        let len = 50;
        let s = NoiseSchedule::<f64>::ddpm_default(len).unwrap();
        let betas = vec![0.0; len];
        let tape = NoiseTape::sample(len, 4, 3);
        let z = DenseVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]);
        // noiseless variant: alphas from the default schedule, but β_l = 0 in the noise term
        let quiet = NoiseSchedule {
            alphas: s.alphas.clone(),
            betas,
            alpha_bars: s.alpha_bars.clone(),
        };
        let den = ZeroDenoiser { dim: 4 };
        let seq = diffusion_sequence(&den, &quiet, &tape, z.clone()).unwrap();
        let out = seq.rollout().pop().unwrap();
        let expected = z.scaled(1.0 / s.alpha_bar(len).sqrt());
        assert!(out.sub(&expected).unwrap().norm_inf() <= 1e-12 * expected.norm_inf());
    }

    #[test]
    fn step_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = NoiseSchedule::<f64>::ddpm_default(64).unwrap();
        let tape = NoiseTape::sample(64, 8, 5);
        let den = MlpDenoiser::random(8, 16, 6).unwrap();
        let seq = diffusion_sequence(&den, &s, &tape, DenseVector::zeros(8)).unwrap();
        for _ in 0..20 {
            let l = rng.random_range(1..=64);
            let z = DenseVector::from_fn(8, |_| rng.random_range(-2.0..2.0));
            assert!(rel_diff(&seq.step_jacobian(l, &z), &fd_jacobian(&seq, l, &z, 1e-6)) <= 1e-5);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let s = NoiseSchedule::<f64>::ddpm_default(10).unwrap();
        let tape = NoiseTape::sample(9, 2, 0);
        let den = ZeroDenoiser { dim: 2 };
        assert!(diffusion_sequence(&den, &s, &tape, DenseVector::zeros(2)).is_err());
    }

    #[test]
    fn newton_reproduces_sequential_denoising() {
        let len = 256;
        let s = NoiseSchedule::<f64>::ddpm_default(len).unwrap();
        let tape = NoiseTape::sample(len, 8, 11);
        let den = MlpDenoiser::random(8, 16, 12).unwrap();
        let z_init = NoiseTape::<f64>::sample(1, 8, 13).draws.remove(0);
        let seq = diffusion_sequence(&den, &s, &tape, z_init).unwrap();
        let guess = anchored_guess(&seq, &DenseVector::zeros(8));
        let (z, report) = newton_solve(&seq, guess, &NewtonConfig::diffusion()).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.iterations <= 30);
        let oracle = seq.rollout();
        assert!(z[len].sub(&oracle[len]).unwrap().norm_inf() <= 5e-3);
        // same tape, same output, bit for bit
        assert_eq!(seq.rollout(), oracle);
    }
}
