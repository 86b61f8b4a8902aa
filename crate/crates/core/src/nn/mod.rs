//! Fully connected networks: parameters, initialization, loss and SGD.

mod loss;
mod train;

pub use loss::softmax_xent;
pub use train::{
    batch_gradients, evaluate_accuracy, resnet_backward_sequential, resnet_forward_sequential,
    train_resnet, train_resnet_observed, BatchStats, ForwardMode, SgdConfig, TrainLogRow,
    TrainOutcome,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative; ReLU uses 0 at the kink.
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Sigmoid => {
                let s = self.apply(x);
                s * (T::one() - s)
            }
        }
    }

    pub fn apply_vec<T: Scalar>(self, v: &DenseVector<T>) -> DenseVector<T> {
        v.map(|x| self.apply(x))
    }

    pub fn derivative_vec<T: Scalar>(self, v: &DenseVector<T>) -> DenseVector<T> {
        v.map(|x| self.derivative(x))
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

/// Layers `0..=L`: `z_0 = W_0 σ_0(x) + b_0`, `z_l = W_l σ_l(z_{l-1}) + b_l`.
///
/// `σ_l` acts on the layer's input. Networks built by [`init_params`] use the
/// identity for layer 0, so `z_0` is the plain affine map of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub weights: Vec<DenseMatrix<T>>,
    pub biases: Vec<DenseVector<T>>,
    pub activations: Vec<Activation>,
}

/// Same layout as [`MlpParams`], without activations.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads<T> {
    pub weights: Vec<DenseMatrix<T>>,
    pub biases: Vec<DenseVector<T>>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(
        weights: Vec<DenseMatrix<T>>,
        biases: Vec<DenseVector<T>>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least layer 0".into(),
            ));
        }
        if biases.len() != weights.len() || activations.len() != weights.len() {
            return Err(shape_err(
                "MlpParams layer count",
                weights.len(),
                format!("{} biases, {} activations", biases.len(), activations.len()),
            ));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if b.dim() != w.rows() {
                return Err(shape_err(
                    "MlpParams bias",
                    format!("{} at layer {l}", w.rows()),
                    b.dim(),
                ));
            }
            if l > 0 && w.cols() != weights[l - 1].rows() {
                return Err(shape_err(
                    "MlpParams weight chain",
                    format!("{} columns at layer {l}", weights[l - 1].rows()),
                    w.cols(),
                ));
            }
        }
        Ok(Self {
            weights,
            biases,
            activations,
        })
    }

    /// Number of layers after layer 0.
    pub fn depth(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    /// Dimension of `z_l`.
    pub fn width(&self, l: usize) -> usize {
        self.weights[l].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.width(self.depth())
    }

    /// `W_l σ_l(input) + b_l`.
    pub fn layer_output(&self, l: usize, input: &DenseVector<T>) -> Result<DenseVector<T>> {
        let act = self.activations[l].apply_vec(input);
        let mut out = self.weights[l].matvec(&act)?;
        out.add_assign(&self.biases[l])?;
        Ok(out)
    }

    /// `W_l diag(σ_l'(input))`.
    pub fn layer_jacobian(&self, l: usize, input: &DenseVector<T>) -> Result<DenseMatrix<T>> {
        self.weights[l].scale_columns(&self.activations[l].derivative_vec(input))
    }

    /// Sequential forward pass: `z_0..z_L`.
    pub fn forward_states(&self, x: &DenseVector<T>) -> Result<Vec<DenseVector<T>>> {
        let mut states = Vec::with_capacity(self.weights.len());
        states.push(self.layer_output(0, x)?);
        for l in 1..self.weights.len() {
            let next = self.layer_output(l, &states[l - 1])?;
            states.push(next);
        }
        Ok(states)
    }

    pub fn forward(&self, x: &DenseVector<T>) -> Result<DenseVector<T>> {
        Ok(self.forward_states(x)?.pop().expect("at least layer 0"))
    }

    /// Jacobian of the network output with respect to its input.
    pub fn input_jacobian(&self, x: &DenseVector<T>) -> Result<DenseMatrix<T>> {
        let mut jac = self.layer_jacobian(0, x)?;
        let mut z = self.layer_output(0, x)?;
        for l in 1..self.weights.len() {
            jac = self.layer_jacobian(l, &z)?.matmul(&jac)?;
            z = self.layer_output(l, &z)?;
        }
        Ok(jac)
    }

    pub fn zero_grads(&self) -> MlpGrads<T> {
        MlpGrads {
            weights: self
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| DenseVector::zeros(b.dim()))
                .collect(),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.activations[1..]
            .iter()
            .all(|&a| a == Activation::Identity)
    }
}

impl<T: Scalar> MlpGrads<T> {
    pub fn add_assign(&mut self, other: &MlpGrads<T>) -> Result<()> {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.axpy_in_place(T::one(), b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        for w in &mut self.weights {
            *w = w.scaled(alpha);
        }
        for b in &mut self.biases {
            *b = b.scaled(alpha);
        }
    }

    pub fn max_abs(&self) -> T {
        let w = self
            .weights
            .iter()
            .fold(T::zero(), |m, w| m.max(w.max_abs()));
        self.biases.iter().fold(w, |m, b| m.max(b.norm_inf()))
    }

    /// Largest entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &MlpGrads<T>) -> T {
        let mut m = T::zero();
        for (a, b) in self.weights.iter().zip(&other.weights) {
            m = m.max(a.add(&b.neg()).expect("same layout").max_abs());
        }
        for (a, b) in self.biases.iter().zip(&other.biases) {
            m = m.max(a.sub(b).expect("same layout").norm_inf());
        }
        m
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Init {
    /// Kaiming-uniform for ReLU layers, Glorot-uniform otherwise; zero biases.
    #[default]
    KaimingGlorot,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases alike, the
    /// default linear-layer init of the common deep-learning frameworks.
    FanInUniform,
}

impl Init {
    pub fn name(self) -> &'static str {
        match self {
            Init::KaimingGlorot => "kaiming-glorot",
            Init::FanInUniform => "fan-in-uniform",
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kaiming-glorot" | "kaiming" | "glorot" => Ok(Init::KaimingGlorot),
            "fan-in-uniform" | "fan-in" | "torch" => Ok(Init::FanInUniform),
            other => Err(Error::InvalidArgument(format!(
                "unknown init scheme `{other}`"
            ))),
        }
    }
}

/// Random weights, zero biases. Layer `l` is drawn Kaiming-uniform when its
/// activation is ReLU and Glorot-uniform otherwise.
///
/// `widths` lists the input dimension followed by `d_0..d_L`; `activations`
/// has one entry per layer.
pub fn init_params<T: Scalar>(
    widths: &[usize],
    activations: &[Activation],
    seed: u64,
) -> Result<MlpParams<T>> {
    init_params_with(widths, activations, Init::KaimingGlorot, seed)
}

pub fn init_params_with<T: Scalar>(
    widths: &[usize],
    activations: &[Activation],
    init: Init,
    seed: u64,
) -> Result<MlpParams<T>> {
    if widths.len() < 2 {
        return Err(Error::InvalidArgument(
            "need an input width and at least one layer".into(),
        ));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
    }
    if activations.len() != widths.len() - 1 {
        return Err(shape_err(
            "init_params activations",
            widths.len() - 1,
            activations.len(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(activations.len());
    let mut biases = Vec::with_capacity(activations.len());
    for (l, &act) in activations.iter().enumerate() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let bound = match (init, act) {
            (Init::FanInUniform, _) => (1.0 / fan_in as f64).sqrt(),
            (Init::KaimingGlorot, Activation::Relu) => (6.0 / fan_in as f64).sqrt(),
            (Init::KaimingGlorot, _) => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        weights.push(DenseMatrix::from_fn(fan_out, fan_in, |_, _| {
            T::lit(rng.random_range(-bound..bound))
        }));
        biases.push(match init {
            Init::KaimingGlorot => DenseVector::zeros(fan_out),
            Init::FanInUniform => {
                DenseVector::from_fn(fan_out, |_| T::lit(rng.random_range(-bound..bound)))
            }
        });
    }
    MlpParams::new(weights, biases, activations.to_vec())
}

/// Input layer `input_dim -> width` followed by `depth` square layers using `activation`.
pub fn uniform_mlp<T: Scalar>(
    input_dim: usize,
    width: usize,
    depth: usize,
    activation: Activation,
    seed: u64,
) -> Result<MlpParams<T>> {
    uniform_mlp_with(
        input_dim,
        width,
        depth,
        activation,
        Init::KaimingGlorot,
        seed,
    )
}

pub fn uniform_mlp_with<T: Scalar>(
    input_dim: usize,
    width: usize,
    depth: usize,
    activation: Activation,
    init: Init,
    seed: u64,
) -> Result<MlpParams<T>> {
    let mut widths = vec![input_dim];
    widths.extend(std::iter::repeat_n(width, depth + 1));
    let mut acts = vec![Activation::Identity];
    acts.extend(std::iter::repeat_n(activation, depth));
    init_params_with(&widths, &acts, init, seed)
}

/// `p <- p - lr * g`, in place.
pub fn sgd_step<T: Scalar>(params: &mut MlpParams<T>, grads: &MlpGrads<T>, lr: T) -> Result<()> {
    if grads.weights.len() != params.weights.len() || grads.biases.len() != params.biases.len() {
        return Err(shape_err(
            "sgd_step",
            params.weights.len(),
            grads.weights.len(),
        ));
    }
    for (w, g) in params.weights.iter_mut().zip(&grads.weights) {
        w.axpy_in_place(-lr, g)?;
    }
    for (b, g) in params.biases.iter_mut().zip(&grads.biases) {
        if b.dim() != g.dim() {
            return Err(shape_err("sgd_step bias", b.dim(), g.dim()));
        }
        for (p, &d) in b.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *p -= lr * d;
        }
    }
    Ok(())
}

/// Fully connected ResNet: an MLP body whose layer `l` adds `z_{l-s}` when
/// `l % s == 0`, and a linear readout `W_h σ_h(z_L) + b_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetParams<T> {
    pub body: MlpParams<T>,
    pub skip: usize,
    pub head_weight: DenseMatrix<T>,
    pub head_bias: DenseVector<T>,
    pub head_activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResNetGrads<T> {
    pub body: MlpGrads<T>,
    pub head_weight: DenseMatrix<T>,
    pub head_bias: DenseVector<T>,
}

impl<T: Scalar> ResNetParams<T> {
    pub fn new(
        body: MlpParams<T>,
        skip: usize,
        head_weight: DenseMatrix<T>,
        head_bias: DenseVector<T>,
        head_activation: Activation,
    ) -> Result<Self> {
        if skip == 0 || !body.depth().is_multiple_of(skip) {
            return Err(Error::InvalidArgument(format!(
                "depth {} is not divisible by skip length {skip}",
                body.depth()
            )));
        }
        let width = body.width(0);
        if (1..=body.depth()).any(|l| body.width(l) != width) {
            return Err(Error::InvalidArgument(
                "residual layers need equal widths".into(),
            ));
        }
        if head_weight.cols() != width || head_bias.dim() != head_weight.rows() {
            return Err(shape_err(
                "ResNet head",
                format!("{}x{width}", head_bias.dim()),
                format!("{:?}", head_weight.shape()),
            ));
        }
        Ok(Self {
            body,
            skip,
            head_weight,
            head_bias,
            head_activation,
        })
    }

    /// Random ResNet: `input_dim -> width`, `depth` residual-body layers, `width -> classes`.
    pub fn init(
        input_dim: usize,
        width: usize,
        depth: usize,
        skip: usize,
        classes: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        Self::init_with(
            input_dim,
            width,
            depth,
            skip,
            classes,
            activation,
            Init::KaimingGlorot,
            seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init_with(
        input_dim: usize,
        width: usize,
        depth: usize,
        skip: usize,
        classes: usize,
        activation: Activation,
        init: Init,
        seed: u64,
    ) -> Result<Self> {
        let body = uniform_mlp_with(input_dim, width, depth, activation, init, seed)?;
        let head = init_params_with::<T>(
            &[width, classes],
            &[activation],
            init,
            seed ^ 0x005e_ed0f_bead,
        )?;
        let (mut w, mut b) = (head.weights, head.biases);
        Self::new(body, skip, w.remove(0), b.remove(0), activation)
    }

    pub fn width(&self) -> usize {
        self.body.width(0)
    }

    pub fn depth(&self) -> usize {
        self.body.depth()
    }

    pub fn blocks(&self) -> usize {
        self.depth() / self.skip
    }

    pub fn classes(&self) -> usize {
        self.head_weight.rows()
    }

    pub fn logits(&self, z_last: &DenseVector<T>) -> Result<DenseVector<T>> {
        let mut out = self
            .head_weight
            .matvec(&self.head_activation.apply_vec(z_last))?;
        out.add_assign(&self.head_bias)?;
        Ok(out)
    }

    pub fn zero_grads(&self) -> ResNetGrads<T> {
        ResNetGrads {
            body: self.body.zero_grads(),
            head_weight: DenseMatrix::zeros(self.head_weight.rows(), self.head_weight.cols()),
            head_bias: DenseVector::zeros(self.head_bias.dim()),
        }
    }

    pub fn apply_sgd(&mut self, grads: &ResNetGrads<T>, lr: T) -> Result<()> {
        sgd_step(&mut self.body, &grads.body, lr)?;
        self.head_weight.axpy_in_place(-lr, &grads.head_weight)?;
        for (p, &g) in self
            .head_bias
            .as_mut_slice()
            .iter_mut()
            .zip(grads.head_bias.as_slice())
        {
            *p -= lr * g;
        }
        Ok(())
    }
}

impl<T: Scalar> ResNetGrads<T> {
    pub fn add_assign(&mut self, other: &ResNetGrads<T>) -> Result<()> {
        self.body.add_assign(&other.body)?;
        self.head_weight
            .axpy_in_place(T::one(), &other.head_weight)?;
        self.head_bias.add_assign(&other.head_bias)
    }

    pub fn scale(&mut self, alpha: T) {
        self.body.scale(alpha);
        self.head_weight = self.head_weight.scaled(alpha);
        self.head_bias = self.head_bias.scaled(alpha);
    }

    pub fn max_abs(&self) -> T {
        self.body
            .max_abs()
            .max(self.head_weight.max_abs())
            .max(self.head_bias.norm_inf())
    }

    pub fn max_abs_diff(&self, other: &ResNetGrads<T>) -> T {
        self.body
            .max_abs_diff(&other.body)
            .max(
                self.head_weight
                    .add(&other.head_weight.neg())
                    .expect("same layout")
                    .max_abs(),
            )
            .max(
                self.head_bias
                    .sub(&other.head_bias)
                    .expect("same layout")
                    .norm_inf(),
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        let a = uniform_mlp::<f64>(5, 8, 4, Activation::Tanh, 42).unwrap();
        let b = uniform_mlp::<f64>(5, 8, 4, Activation::Tanh, 42).unwrap();
        assert_eq!(a, b);
        let c = uniform_mlp::<f64>(5, 8, 4, Activation::Tanh, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(
            init_params::<f64>(&[3, 0, 2], &[Activation::Identity, Activation::Relu], 1).is_err()
        );
        assert!(init_params::<f64>(&[3], &[], 1).is_err());
    }

    #[test]
    fn kaiming_variance() {
        // U(-b, b) with b = sqrt(6 / fan_in) has variance 2 / fan_in.
        let params = uniform_mlp::<f64>(16, 16, 60, Activation::Relu, 7).unwrap();
        let draws: Vec<f64> = params.weights[1..]
            .iter()
            .flat_map(|w| w.as_slice().to_vec())
            .collect();
        assert!(draws.len() >= 10_000);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / 16.0;
        assert!((var - target).abs() <= 0.3 * target, "variance {var}");
        assert!(params.biases.iter().all(|b| b.norm_inf() == 0.0));
    }

    #[test]
    fn fan_in_uniform_bounds() {
        let params =
            uniform_mlp_with::<f64>(16, 16, 8, Activation::Relu, Init::FanInUniform, 7).unwrap();
        let bound = 0.25;
        assert!(params.weights.iter().all(|w| w.max_abs() <= bound));
        assert!(params
            .biases
            .iter()
            .all(|b| b.norm_inf() <= bound && b.norm_inf() > 0.0));
        assert_eq!("torch".parse::<Init>().unwrap(), Init::FanInUniform);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [
            Activation::Identity,
            Activation::Relu,
            Activation::Tanh,
            Activation::Sigmoid,
        ] {
            for &x in &[-1.7f64, -0.3, 0.4, 2.2] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act} at {x}");
            }
        }
        assert_eq!(Activation::Relu.derivative(0.0f64), 0.0);
    }

    #[test]
    fn activation_parse() {
        assert_eq!("ReLU".parse::<Activation>().unwrap(), Activation::Relu);
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn sgd_cases() {
        let mut p = MlpParams::new(
            vec![DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap()],
            vec![DenseVector::from_vec(vec![1.0])],
            vec![Activation::Identity],
        )
        .unwrap();
        let original = p.clone();
        let zero = p.zero_grads();
        sgd_step(&mut p, &zero, 0.1).unwrap();
        assert_eq!(p, original);

        let g = MlpGrads {
            weights: vec![DenseMatrix::from_vec(1, 1, vec![2.0]).unwrap()],
            biases: vec![DenseVector::from_vec(vec![2.0])],
        };
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, original);
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert_eq!(p.weights[0].get(0, 0), 0.8);
        assert_eq!(p.biases[0].get(0), 0.8);

        let bad = MlpGrads {
            weights: vec![],
            biases: vec![],
        };
        assert!(sgd_step(&mut p, &bad, 0.1).is_err());
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let net =
            init_params::<f64>(&[3, 5, 4], &[Activation::Identity, Activation::Tanh], 3).unwrap();
        let x = DenseVector::from_vec(vec![0.3, -0.2, 0.9]);
        let jac = net.input_jacobian(&x).unwrap();
        for j in 0..3 {
            let h = 1e-6;
            let mut p = x.clone();
            let mut m = x.clone();
            p.set(j, x.get(j) + h);
            m.set(j, x.get(j) - h);
            let d = net
                .forward(&p)
                .unwrap()
                .sub(&net.forward(&m).unwrap())
                .unwrap();
            for i in 0..4 {
                assert!((d.get(i) / (2.0 * h) - jac.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn resnet_divisibility() {
        assert!(ResNetParams::<f64>::init(4, 8, 6, 4, 3, Activation::Relu, 1).is_err());
        let r = ResNetParams::<f64>::init(4, 8, 8, 4, 3, Activation::Relu, 1).unwrap();
        assert_eq!(r.blocks(), 2);
        assert_eq!(r.classes(), 3);
    }
}
