//! Built-in loss functions and the objective abstraction.
//!
//! Three per-sample losses are provided, selectable by name in config files:
//!
//! * `sine_bowl` — `f(w,x) = (||w||^2 + sin ||w||^2)/2 + <x,w>`; non-convex,
//!   with Lipschitz/smoothness constants 5 and 6 on the radius-2 ball when
//!   `||x|| <= 1`.
//! * `quadratic_pl` — `f(w,x) = ||w - x||^2 / 2`; the empirical mean satisfies
//!   the Polyak-Lojasiewicz identity `F(w) - F* = ||grad F(w)||^2 / 2`.
//! * `glm_sigmoid_sq` — squared error through a logistic link,
//!   `f(w,(x,y)) = (y - s(<w,x>))^2` with `s(z) = 1/(1+e^-z)`; requires labels.
//!
//! [`LossModel`] bundles a loss kind with the constants claimed for it
//! ([`LossMetadata`]); the certification module checks those claims
//! numerically. [`Objective`] is the minimal differentiable-function
//! interface used by evaluation and certification code, with
//! [`EmpiricalLoss`] (mean loss over a dataset) as the standard
//! implementation.

use ndarray::{Array1, ArrayView1};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Constants claimed for a loss on its domain ball.
///
/// `lipschitz`, `smoothness`, and `diameter` are required and positive; the
/// rest describe optional structure and are validated when present:
/// `quasar` in (0,1], KL exponent in [1,2].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossMetadata {
    /// Per-sample Lipschitz constant L.
    pub lipschitz: f64,
    /// Per-sample smoothness (gradient Lipschitz) constant beta.
    pub smoothness: f64,
    /// Diameter D of the domain ball.
    pub diameter: f64,
    /// Hessian Lipschitz constant rho, when claimed.
    pub hessian_lipschitz: Option<f64>,
    /// Quasar-convexity parameter q in (0,1], when claimed.
    pub quasar: Option<f64>,
    /// Kurdyka-Lojasiewicz pair (gamma, k) with k in [1,2], when claimed.
    pub kl: Option<(f64, f64)>,
}

impl LossMetadata {
    pub fn new(lipschitz: f64, smoothness: f64, diameter: f64) -> Result<Self> {
        let meta = LossMetadata {
            lipschitz,
            smoothness,
            diameter,
            hessian_lipschitz: None,
            quasar: None,
            kl: None,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn with_quasar(mut self, q: f64) -> Result<Self> {
        self.quasar = Some(q);
        self.validate()?;
        Ok(self)
    }

    pub fn with_kl(mut self, gamma: f64, k: f64) -> Result<Self> {
        self.kl = Some((gamma, k));
        self.validate()?;
        Ok(self)
    }

    pub fn with_hessian_lipschitz(mut self, rho: f64) -> Result<Self> {
        self.hessian_lipschitz = Some(rho);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lipschitz", self.lipschitz),
            ("smoothness", self.smoothness),
            ("diameter", self.diameter),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if let Some(rho) = self.hessian_lipschitz {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(Error::invalid(format!(
                    "hessian_lipschitz must be > 0, got {rho}"
                )));
            }
        }
        if let Some(q) = self.quasar {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::invalid(format!(
                    "quasar parameter must lie in (0,1], got {q}"
                )));
            }
        }
        if let Some((gamma, k)) = self.kl {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::invalid(format!("kl gamma must be > 0, got {gamma}")));
            }
            if !(1.0..=2.0).contains(&k) {
                return Err(Error::invalid(format!(
                    "kl exponent must lie in [1,2], got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// The built-in per-sample losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    SineBowl,
    QuadraticPl,
    GlmSigmoidSq,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SineBowl => "sine_bowl",
            LossKind::QuadraticPl => "quadratic_pl",
            LossKind::GlmSigmoidSq => "glm_sigmoid_sq",
        }
    }
}

/// A loss kind together with the constants claimed for it.
#[derive(Clone, Debug, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub metadata: LossMetadata,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    // Split on sign to avoid overflow in exp for large |z|.
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LossModel {
    /// `sine_bowl` with its constants on the radius-2 ball.
    pub fn sine_bowl() -> Self {
        LossModel {
            kind: LossKind::SineBowl,
            metadata: LossMetadata::new(5.0, 6.0, 4.0).expect("constants are valid"),
        }
    }

    /// `quadratic_pl` with constants on the radius-2 ball; convex, hence
    /// quasar with q = 1, and 1-PL (KL pair `(sqrt(1/2), 2)`).
    pub fn quadratic_pl() -> Self {
        LossModel {
            kind: LossKind::QuadraticPl,
            metadata: LossMetadata::new(3.0, 1.0, 4.0)
                .and_then(|m| m.with_quasar(1.0))
                .and_then(|m| m.with_kl(0.5f64.sqrt(), 2.0))
                .expect("constants are valid"),
        }
    }

    /// `glm_sigmoid_sq` with constants on the radius-2 ball, assuming labels
    /// in [0,1] and `||x|| <= 1`.
    pub fn glm_sigmoid_sq() -> Self {
        LossModel {
            kind: LossKind::GlmSigmoidSq,
            metadata: LossMetadata::new(0.5, 0.5, 4.0).expect("constants are valid"),
        }
    }

    /// Look a loss up by its config-file name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sine_bowl" => Ok(Self::sine_bowl()),
            "quadratic_pl" => Ok(Self::quadratic_pl()),
            "glm_sigmoid_sq" => Ok(Self::glm_sigmoid_sq()),
            _ => Err(Error::invalid(format!(
                "unknown loss {name:?}; expected sine_bowl, quadratic_pl, or glm_sigmoid_sq"
            ))),
        }
    }

    pub fn requires_labels(&self) -> bool {
        matches!(self.kind, LossKind::GlmSigmoidSq)
    }

    /// Check that `data` provides what this loss needs (labels, matching
    /// dimension is the caller's concern).
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if self.requires_labels() && !data.has_labels() {
            return Err(Error::Config(format!(
                "loss {} requires a labeled dataset",
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Per-sample loss value.
    pub fn sample_value(
        &self,
        w: ArrayView1<f64>,
        x: ArrayView1<f64>,
        y: Option<f64>,
    ) -> Result<f64> {
        match self.kind {
            LossKind::SineBowl => {
                let r = w.dot(&w);
                Ok(0.5 * (r + r.sin()) + x.dot(&w))
            }
            LossKind::QuadraticPl => {
                let mut acc = 0.0;
                for (wi, xi) in w.iter().zip(x.iter()) {
                    let dvi = wi - xi;
                    acc += dvi * dvi;
                }
                Ok(0.5 * acc)
            }
            LossKind::GlmSigmoidSq => {
                let y = y.ok_or_else(|| {
                    Error::invalid("glm_sigmoid_sq needs a label for every sample")
                })?;
                let e = y - sigmoid(x.dot(&w));
                Ok(e * e)
            }
        }
    }

    /// Per-sample gradient in `w`.
    pub fn sample_grad(
        &self,
        w: ArrayView1<f64>,
        x: ArrayView1<f64>,
        y: Option<f64>,
    ) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(w.len());
        self.add_sample_grad(w, x, y, 1.0, &mut out)?;
        Ok(out)
    }

    /// Accumulate `coeff * grad f(w, (x,y))` into `acc` without allocating;
    /// this is the hot path used by the optimizers.
    pub fn add_sample_grad(
        &self,
        w: ArrayView1<f64>,
        x: ArrayView1<f64>,
        y: Option<f64>,
        coeff: f64,
        acc: &mut Array1<f64>,
    ) -> Result<()> {
        match self.kind {
            LossKind::SineBowl => {
                // grad = (1 + cos ||w||^2) w + x
                let scale = 1.0 + w.dot(&w).cos();
                for ((a, wi), xi) in acc.iter_mut().zip(w.iter()).zip(x.iter()) {
                    *a += coeff * (scale * wi + xi);
                }
            }
            LossKind::QuadraticPl => {
                for ((a, wi), xi) in acc.iter_mut().zip(w.iter()).zip(x.iter()) {
                    *a += coeff * (wi - xi);
                }
            }
            LossKind::GlmSigmoidSq => {
                let y = y.ok_or_else(|| {
                    Error::invalid("glm_sigmoid_sq needs a label for every sample")
                })?;
                let s = sigmoid(x.dot(&w));
                // d/dz (y - s(z))^2 = -2 (y - s) s (1 - s), chain rule through z = <x,w>.
                let dz = -2.0 * (y - s) * s * (1.0 - s);
                for (a, xi) in acc.iter_mut().zip(x.iter()) {
                    *a += coeff * dz * xi;
                }
            }
        }
        Ok(())
    }

    /// Mean loss over the dataset.
    pub fn empirical_value(&self, data: &Dataset, w: ArrayView1<f64>) -> Result<f64> {
        self.check_data(data)?;
        let mut acc = 0.0;
        for i in 0..data.len() {
            acc += self.sample_value(w, data.row(i), data.label(i))?;
        }
        Ok(acc / data.len() as f64)
    }

    /// Gradient of the mean loss over the dataset.
    pub fn empirical_grad(&self, data: &Dataset, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_data(data)?;
        let mut acc = Array1::zeros(w.len());
        let coeff = 1.0 / data.len() as f64;
        for i in 0..data.len() {
            self.add_sample_grad(w, data.row(i), data.label(i), coeff, &mut acc)?;
        }
        Ok(acc)
    }

    /// Analytic minimizer of the empirical loss, when one is known in closed
    /// form. Only `quadratic_pl` has one: the sample mean.
    pub fn analytic_minimizer(&self, data: &Dataset) -> Option<Array1<f64>> {
        match self.kind {
            LossKind::QuadraticPl => Some(data.mean_row()),
            _ => None,
        }
    }
}

/// A differentiable function of `w`, the interface consumed by evaluation
/// and certification code. Implementations must be pure: repeated calls with
/// the same `w` return the same values.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, w: ArrayView1<f64>) -> f64;
    fn gradient(&self, w: ArrayView1<f64>) -> Array1<f64>;
}

/// Mean loss over a dataset as an [`Objective`].
pub struct EmpiricalLoss<'a> {
    loss: &'a LossModel,
    data: &'a Dataset,
}

impl<'a> EmpiricalLoss<'a> {
    /// Fails if the dataset lacks what the loss needs (e.g. labels).
    pub fn new(loss: &'a LossModel, data: &'a Dataset) -> Result<Self> {
        loss.check_data(data)?;
        Ok(EmpiricalLoss { loss, data })
    }
}

impl Objective for EmpiricalLoss<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, w: ArrayView1<f64>) -> f64 {
        self.loss
            .empirical_value(self.data, w)
            .expect("dataset validated at construction")
    }

    fn gradient(&self, w: ArrayView1<f64>) -> Array1<f64> {
        self.loss
            .empirical_grad(self.data, w)
            .expect("dataset validated at construction")
    }
}

/// Default central-difference step at `w`: `1e-5 * (1 + ||w||)`.
pub fn default_fd_step(w: ArrayView1<f64>) -> f64 {
    1e-5 * (1.0 + w.dot(&w).sqrt())
}

/// Componentwise central-difference gradient of an objective,
/// `(g(w + h e_i) - g(w - h e_i)) / 2h`. With `step = None` the default step
/// is used. Serves as the independent oracle for analytic gradients.
pub fn finite_diff_grad_obj(
    obj: &impl Objective,
    w: ArrayView1<f64>,
    step: Option<f64>,
) -> Array1<f64> {
    let h = step.unwrap_or_else(|| default_fd_step(w));
    let mut probe = w.to_owned();
    let mut grad = Array1::zeros(w.len());
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let plus = obj.value(probe.view());
        probe[i] = w[i] - h;
        let minus = obj.value(probe.view());
        probe[i] = w[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// [`finite_diff_grad_obj`] applied to the empirical loss of `loss` on `data`.
pub fn finite_diff_grad(
    loss: &LossModel,
    data: &Dataset,
    w: ArrayView1<f64>,
    step: Option<f64>,
) -> Result<Array1<f64>> {
    let obj = EmpiricalLoss::new(loss, data)?;
    Ok(finite_diff_grad_obj(&obj, w, step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_unit_ball;
    use crate::rng::RngStream;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn single_point_dataset(x: Vec<f64>, y: Option<f64>) -> Dataset {
        let d = x.len();
        let samples = Array2::from_shape_vec((1, d), x).unwrap();
        Dataset::new(samples, y.map(|v| Array1::from_vec(vec![v]))).unwrap()
    }

    #[test]
    fn sine_bowl_closed_form_points() {
        let loss = LossModel::sine_bowl();
        let w0 = array![0.0, 0.0];
        let x = array![0.3, -0.4];
        // At w = 0 the value is 0 and the gradient is x itself.
        assert_eq!(loss.sample_value(w0.view(), x.view(), None).unwrap(), 0.0);
        let g = loss.sample_grad(w0.view(), x.view(), None).unwrap();
        assert_abs_diff_eq!(g[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.4, epsilon = 1e-15);

        // ||w||^2 = pi makes 1 + cos ||w||^2 vanish, so grad = x; with x = 0
        // the point is stationary.
        let wpi = array![std::f64::consts::PI.sqrt(), 0.0];
        let zero = array![0.0, 0.0];
        let g = loss.sample_grad(wpi.view(), zero.view(), None).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15), "grad at the ring: {g:?}");

        // w = (1,0), x = 0: value (1 + sin 1)/2, gradient ((1 + cos 1), 0).
        let w1 = array![1.0, 0.0];
        let v = loss.sample_value(w1.view(), zero.view(), None).unwrap();
        assert_abs_diff_eq!(v, 0.920735, epsilon = 1e-6);
        assert_abs_diff_eq!(v, 0.5 * (1.0 + 1.0f64.sin()), epsilon = 1e-15);
        let g = loss.sample_grad(w1.view(), zero.view(), None).unwrap();
        assert_abs_diff_eq!(g[0], 1.540302, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_pl_identity_holds_empirically() {
        // F(w) - F* = ||grad F(w)||^2 / 2 for the empirical mean loss.
        let data = sample_unit_ball(4, 37, &RngStream::new(10, 0)).unwrap();
        let loss = LossModel::quadratic_pl();
        let minimizer = loss.analytic_minimizer(&data).unwrap();
        let f_star = loss.empirical_value(&data, minimizer.view()).unwrap();
        let mut r = RngStream::new(10, 1).rng();
        for _ in 0..20 {
            let w: Array1<f64> = (0..4)
                .map(|_| rand::Rng::random_range(&mut r, -2.0..2.0))
                .collect();
            let f = loss.empirical_value(&data, w.view()).unwrap();
            let g = loss.empirical_grad(&data, w.view()).unwrap();
            assert_abs_diff_eq!(f - f_star, 0.5 * g.dot(&g), epsilon = 1e-10);
        }
    }

    #[test]
    fn glm_closed_form_points() {
        let loss = LossModel::glm_sigmoid_sq();
        // Perfectly balanced: z = 0, s = 1/2, label 1/2 gives zero loss.
        let w = array![0.0, 0.0];
        let x = array![1.0, 0.0];
        assert_eq!(
            loss.sample_value(w.view(), x.view(), Some(0.5)).unwrap(),
            0.0
        );
        // Label 1 at z = 0: value (1 - 1/2)^2 = 1/4, gradient -2*(1/2)*(1/4)*x = -x/4.
        assert_abs_diff_eq!(
            loss.sample_value(w.view(), x.view(), Some(1.0)).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        let g = loss.sample_grad(w.view(), x.view(), Some(1.0)).unwrap();
        assert_abs_diff_eq!(g[0], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
        // Missing label is an error.
        assert!(loss.sample_value(w.view(), x.view(), None).is_err());
    }

    #[test]
    fn glm_gradient_lies_in_the_row_space() {
        // grad F is a linear combination of the feature rows; project it onto
        // span{x_1, x_2} and check the residual vanishes.
        let samples = Array2::from_shape_vec((2, 3), vec![0.6, -0.2, 0.1, -0.3, 0.5, 0.4]).unwrap();
        let labels = Array1::from_vec(vec![1.0, 0.0]);
        let data = Dataset::new(samples, Some(labels)).unwrap();
        let loss = LossModel::glm_sigmoid_sq();
        let w = array![0.7, -1.1, 0.4];
        let g = loss.empirical_grad(&data, w.view()).unwrap();

        // Solve the 2x2 normal equations for the projection coefficients.
        let x1 = data.row(0).to_owned();
        let x2 = data.row(1).to_owned();
        let (a, b, c) = (x1.dot(&x1), x1.dot(&x2), x2.dot(&x2));
        let (p, q) = (x1.dot(&g), x2.dot(&g));
        let det = a * c - b * b;
        let c1 = (c * p - b * q) / det;
        let c2 = (a * q - b * p) / det;
        let residual = &g - &(&x1 * c1 + &x2 * c2);
        assert!(
            residual.dot(&residual).sqrt() < 1e-10,
            "row-space residual too large: {residual:?}"
        );
    }

    #[test]
    fn finite_difference_matches_analytic_gradients() {
        // The central-difference oracle agrees with every analytic gradient
        // to relative error 1e-5 at random interior points.
        let mut r = RngStream::new(33, 0).rng();
        for loss in [
            LossModel::sine_bowl(),
            LossModel::quadratic_pl(),
            LossModel::glm_sigmoid_sq(),
        ] {
            let d = 5;
            let n = 12;
            let mut data = sample_unit_ball(d, n, &RngStream::new(33, 1)).unwrap();
            if loss.requires_labels() {
                let labels: Array1<f64> = (0..n)
                    .map(|_| rand::Rng::random_range(&mut r, 0.0..1.0))
                    .collect();
                data = Dataset::new(data.samples().clone(), Some(labels)).unwrap();
            }
            for _ in 0..100 {
                let w: Array1<f64> = (0..d)
                    .map(|_| rand::Rng::random_range(&mut r, -1.9..1.9))
                    .collect();
                let analytic = loss.empirical_grad(&data, w.view()).unwrap();
                let fd = finite_diff_grad(&loss, &data, w.view(), None).unwrap();
                let diff = &fd - &analytic;
                let rel = diff.dot(&diff).sqrt() / analytic.dot(&analytic).sqrt().max(1e-8);
                assert!(rel <= 1e-5, "{}: relative error {rel}", loss.kind.name());
            }
        }
    }

    #[test]
    fn finite_difference_with_explicit_step() {
        // One exact quadratic: grad at w with a single sample x=0 is w itself.
        let data = single_point_dataset(vec![0.0, 0.0], None);
        let loss = LossModel::quadratic_pl();
        let w = array![1.0, 0.0];
        let fd = finite_diff_grad(&loss, &data, w.view(), Some(1e-5)).unwrap();
        assert_abs_diff_eq!(fd[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fd[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn metadata_validation() {
        assert!(LossMetadata::new(0.0, 1.0, 1.0).is_err());
        assert!(LossMetadata::new(1.0, 1.0, 1.0)
            .unwrap()
            .with_quasar(0.0)
            .is_err());
        assert!(LossMetadata::new(1.0, 1.0, 1.0)
            .unwrap()
            .with_quasar(1.5)
            .is_err());
        assert!(LossMetadata::new(1.0, 1.0, 1.0)
            .unwrap()
            .with_kl(1.0, 2.5)
            .is_err());
        assert!(LossMetadata::new(1.0, 1.0, 1.0)
            .unwrap()
            .with_kl(1.0, 1.5)
            .is_ok());
    }

    #[test]
    fn loss_lookup_by_name() {
        assert_eq!(
            LossModel::from_name("sine_bowl").unwrap().kind,
            LossKind::SineBowl
        );
        assert_eq!(
            LossModel::from_name("quadratic_pl").unwrap().kind,
            LossKind::QuadraticPl
        );
        assert_eq!(
            LossModel::from_name("glm_sigmoid_sq").unwrap().kind,
            LossKind::GlmSigmoidSq
        );
        assert!(LossModel::from_name("logistic").is_err());
    }

    #[test]
    fn glm_requires_labeled_dataset() {
        let data = sample_unit_ball(3, 5, &RngStream::new(1, 0)).unwrap();
        let loss = LossModel::glm_sigmoid_sq();
        assert!(matches!(
            loss.empirical_value(&data, Array1::zeros(3).view()),
            Err(Error::Config(_))
        ));
    }
}
