//! Certificate templates: the scalar fields that barrier conditions bind.
//!
//! Three kinds:
//!
//! * [`Polynomial`]: monomial basis up to a total degree, coefficients clamped
//!   to `[-100, 100]`.
//! * [`Network`]: small feed-forward net with softplus hidden activation
//!   (smooth, Lipschitz constant 1) and linear output.
//! * `AffineOf`: frozen affine image `a * inner(x) + b`, the vehicle for the
//!   conversion constructions `h = 1 - (1-p) V` and `h' = 1 - h`.
//!
//! Every kind offers exact evaluation, a certified Lipschitz bound over a box
//! (in the infinity norm on states), and, for the trainable kinds, exact
//! parameter gradients.

use crate::error::{Error, Result};
use crate::interval::{Interval, TRANSCENDENTAL_SLACK};
use crate::region::AxisBox;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

thread_local! {
    /// Scratch buffers for the network forward/backward hot paths; per
    /// thread so the rayon pools and the sequential build share one code
    /// path. Nothing inside a borrow re-enters these functions: `AffineOf`
    /// unwraps to the inner network before the borrow is taken.
    static NET_SCRATCH: RefCell<NetScratch> = RefCell::new(NetScratch::default());
}

#[derive(Default)]
struct NetScratch {
    ping: Vec<f64>,
    pong: Vec<f64>,
    /// Flattened inputs to every transition (forward trace).
    act: Vec<f64>,
    /// Flattened raw pre-activations of every transition.
    pre: Vec<f64>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

pub const COEFF_CLAMP: f64 = 100.0;
const BASIS_NAME: &str = "monomial_graded_lex";
const ACTIVATION_NAME: &str = "softplus";

#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    degree: u32,
    /// Exponent tuples in graded lexicographic order.
    exponents: Vec<Vec<u32>>,
    coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    /// Widths `[n, w1, .., 1]`.
    layers: Vec<usize>,
    /// Per transition, row-major `out x in`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Certificate {
    Polynomial(Polynomial),
    Network(Network),
    AffineOf { scale: f64, offset: f64, inner: Box<Certificate> },
}

/// Exponent tuples of total degree `<= degree` over `dim` variables, graded
/// lexicographic: by total degree, then by earlier variables taking higher
/// exponents first. Degree 2 over 2 vars: 00, 10, 01, 20, 11, 02.
fn monomials(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if dim == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(dim - 1, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        fill(dim, total, &mut Vec::new(), &mut out);
    }
    out
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// Both maps are monotone increasing, so endpoint images bound the interval
// image; endpoints are inflated outward to cover libm round-off, with the
// sigmoid image clamped to its [0, 1] range.

fn softplus_interval(z: Interval) -> Interval {
    Interval::new(
        (softplus(z.lo()) - TRANSCENDENTAL_SLACK).max(0.0),
        softplus(z.hi()) + TRANSCENDENTAL_SLACK,
    )
}

fn sigmoid_interval(z: Interval) -> Interval {
    Interval::new(
        (sigmoid(z.lo()) - TRANSCENDENTAL_SLACK).max(0.0),
        (sigmoid(z.hi()) + TRANSCENDENTAL_SLACK).min(1.0),
    )
}

impl Polynomial {
    pub fn new(dim: usize, degree: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("polynomial dimension must be >= 1"));
        }
        let exponents = monomials(dim, degree);
        let coeffs = vec![0.0; exponents.len()];
        Ok(Polynomial { dim, degree, exponents, coeffs })
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        let mut p = Polynomial::new(dim, 0)?;
        p.coeffs[0] = value.clamp(-COEFF_CLAMP, COEFF_CLAMP);
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Set the coefficient of the monomial with the given exponent tuple.
    pub fn set_term(&mut self, exponent: &[u32], coeff: f64) -> Result<()> {
        let idx = self
            .exponents
            .iter()
            .position(|e| e == exponent)
            .ok_or_else(|| Error::invalid(format!("no monomial {exponent:?} in basis")))?;
        self.coeffs[idx] = coeff.clamp(-COEFF_CLAMP, COEFF_CLAMP);
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.exponents
            .iter()
            .zip(&self.coeffs)
            .map(|(e, &c)| {
                if c == 0.0 {
                    return 0.0;
                }
                let mut m = c;
                for (xi, &ei) in x.iter().zip(e) {
                    m *= xi.powi(ei as i32);
                }
                m
            })
            .sum()
    }

    fn eval_interval(&self, bx: &[Interval]) -> Interval {
        let mut acc = Interval::point(0.0);
        for (e, &c) in self.exponents.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let mut m = Interval::point(c);
            for (xi, &ei) in bx.iter().zip(e) {
                m = m * xi.powi(ei);
            }
            acc = acc + m;
        }
        acc
    }

    /// Partial derivative as a polynomial over the same basis family.
    fn diff(&self, axis: usize) -> Polynomial {
        let mut out = Polynomial::new(self.dim, self.degree.saturating_sub(1)).unwrap();
        for (e, &c) in self.exponents.iter().zip(&self.coeffs) {
            if c == 0.0 || e[axis] == 0 {
                continue;
            }
            let mut de = e.clone();
            de[axis] -= 1;
            let idx = out.exponents.iter().position(|x| *x == de).unwrap();
            // derivative coefficients may exceed the clamp; they are not
            // template parameters, so no clamping here
            out.coeffs[idx] += c * e[axis] as f64;
        }
        out
    }

    pub fn lipschitz_bound(&self, bounds: &AxisBox) -> f64 {
        let bx = bounds.to_intervals();
        (0..self.dim)
            .map(|i| self.diff(i).eval_interval(&bx).mag())
            .sum()
    }
}

impl Network {
    pub fn zeroed(layers: &[usize]) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid("network needs at least input and output layers"));
        }
        if layers.iter().any(|&w| w == 0) {
            return Err(Error::invalid("network layer widths must be >= 1"));
        }
        if *layers.last().unwrap() != 1 {
            return Err(Error::invalid("network output width must be 1"));
        }
        let weights = layers.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layers[1..].iter().map(|&w| vec![0.0; w]).collect();
        Ok(Network { layers: layers.to_vec(), weights, biases })
    }

    /// Uniform init scaled by fan-in; the output layer additionally scaled by
    /// `output_scale` so templates can start with a larger dynamic range.
    pub fn random(layers: &[usize], rng: &mut impl Rng, output_scale: f64) -> Result<Self> {
        let mut net = Network::zeroed(layers)?;
        let last = net.weights.len() - 1;
        for l in 0..net.weights.len() {
            let fan_in = net.layers[l] as f64;
            let s = (1.0 / fan_in).sqrt() * if l == last { output_scale } else { 1.0 };
            for w in &mut net.weights[l] {
                *w = rng.random_range(-s..s);
            }
            let bs = 0.1 * if l == last { output_scale.max(1.0) } else { 1.0 };
            for b in &mut net.biases[l] {
                *b = rng.random_range(-bs..bs);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn dim(&self) -> usize {
        self.layers[0]
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        NET_SCRATCH.with(|s| {
            let s = &mut *s.borrow_mut();
            let (a, z) = (&mut s.ping, &mut s.pong);
            a.clear();
            a.extend_from_slice(x);
            let last = self.weights.len() - 1;
            for l in 0..=last {
                let out_w = self.layers[l + 1];
                let in_w = self.layers[l];
                z.clear();
                for i in 0..out_w {
                    let row = &self.weights[l][i * in_w..(i + 1) * in_w];
                    let mut acc = self.biases[l][i];
                    for (w, ai) in row.iter().zip(a.iter()) {
                        acc += w * ai;
                    }
                    z.push(if l < last { softplus(acc) } else { acc });
                }
                std::mem::swap(a, z);
            }
            a[0]
        })
    }

    /// Flat parameter layout: `[W1 row-major, b1, W2, b2, ..]`.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn parameter_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count()];
        self.parameter_gradient_into(x, &mut grad);
        grad
    }

    /// Backpropagation writing into a caller-owned buffer of length
    /// `param_count()`, so batch loops allocate nothing per point.
    pub fn parameter_gradient_into(&self, x: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(grad.len(), self.param_count());
        let last = self.weights.len() - 1;
        NET_SCRATCH.with(|s| {
            let s = &mut *s.borrow_mut();
            // forward trace, flattened: act holds the input to every
            // transition back to back, pre the raw outputs
            s.act.clear();
            s.pre.clear();
            s.act.extend_from_slice(x);
            let mut a_off = 0usize;
            for l in 0..=last {
                let in_w = self.layers[l];
                let out_w = self.layers[l + 1];
                let pre_off = s.pre.len();
                for i in 0..out_w {
                    let row = &self.weights[l][i * in_w..(i + 1) * in_w];
                    let mut acc = self.biases[l][i];
                    for k in 0..in_w {
                        acc += row[k] * s.act[a_off + k];
                    }
                    s.pre.push(acc);
                }
                if l < last {
                    for i in 0..out_w {
                        let v = softplus(s.pre[pre_off + i]);
                        s.act.push(v);
                    }
                    a_off += in_w;
                }
            }
            // delta = d out / d pre[l], computed backwards
            s.delta.clear();
            s.delta.push(1.0);
            // offsets of layer l's input in act and of layer l-1's raw
            // output in pre, walked backwards
            let mut a_off = self.layers[..last].iter().sum::<usize>();
            let mut pre_off = self.layers[1..=last].iter().sum::<usize>();
            for l in (0..=last).rev() {
                let in_w = self.layers[l];
                let out_w = self.layers[l + 1];
                let offset = self.param_offset(l);
                let a = &s.act[a_off..a_off + in_w];
                for (i, &di) in s.delta.iter().enumerate() {
                    for (j, &aj) in a.iter().enumerate() {
                        grad[offset + i * in_w + j] = di * aj;
                    }
                    grad[offset + out_w * in_w + i] = di;
                }
                if l > 0 {
                    pre_off -= in_w;
                    a_off -= self.layers[l - 1];
                    s.next.clear();
                    for j in 0..in_w {
                        let mut nj = 0.0;
                        for (i, &di) in s.delta.iter().enumerate() {
                            nj += di * self.weights[l][i * in_w + j];
                        }
                        s.next.push(nj * sigmoid(s.pre[pre_off + j]));
                    }
                    std::mem::swap(&mut s.delta, &mut s.next);
                }
            }
        });
    }

    /// Offset of transition `l`'s weights in the flat layout.
    fn param_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.weights[k].len() + self.biases[k].len()).sum()
    }

    /// Lipschitz bound over `bounds`: an interval forward pass records each
    /// hidden pre-activation range, the softplus slope image `sigmoid(z)` is
    /// read off those ranges, and a backward interval product accumulates the
    /// row Jacobian. The l1 magnitude of that row bounds the gradient on the
    /// box, so saturated neurons and sign cancellation both tighten the
    /// result; it never exceeds the global product of induced infinity norms.
    pub fn lipschitz_bound(&self, bounds: &AxisBox) -> f64 {
        let last = self.weights.len() - 1;
        let mut act = bounds.to_intervals();
        let mut slopes: Vec<Vec<Interval>> = Vec::with_capacity(last);
        for l in 0..last {
            let in_w = self.layers[l];
            let out_w = self.layers[l + 1];
            let w = &self.weights[l];
            let mut next = Vec::with_capacity(out_w);
            let mut slope = Vec::with_capacity(out_w);
            for i in 0..out_w {
                let mut z = Interval::point(self.biases[l][i]);
                for (j, &a) in act.iter().enumerate().take(in_w) {
                    z = z + Interval::point(w[i * in_w + j]) * a;
                }
                slope.push(sigmoid_interval(z));
                next.push(softplus_interval(z));
            }
            slopes.push(slope);
            act = next;
        }
        let in_last = self.layers[last];
        let mut jac: Vec<Interval> =
            self.weights[last][..in_last].iter().map(|&v| Interval::point(v)).collect();
        for l in (0..last).rev() {
            let in_w = self.layers[l];
            let out_w = self.layers[l + 1];
            let w = &self.weights[l];
            let mut prev = vec![Interval::point(0.0); in_w];
            for i in 0..out_w {
                let scaled = jac[i] * slopes[l][i];
                for (j, p) in prev.iter_mut().enumerate().take(in_w) {
                    *p = *p + scaled * Interval::point(w[i * in_w + j]);
                }
            }
            jac = prev;
        }
        jac.into_iter().map(Interval::mag).sum()
    }
}

impl Certificate {
    pub fn polynomial(dim: usize, degree: u32) -> Result<Certificate> {
        Ok(Certificate::Polynomial(Polynomial::new(dim, degree)?))
    }

    pub fn constant(dim: usize, value: f64) -> Result<Certificate> {
        Ok(Certificate::Polynomial(Polynomial::constant(dim, value)?))
    }

    pub fn network(layers: &[usize], rng: &mut impl Rng, output_scale: f64) -> Result<Certificate> {
        Ok(Certificate::Network(Network::random(layers, rng, output_scale)?))
    }

    pub fn affine_of(scale: f64, offset: f64, inner: Certificate) -> Certificate {
        Certificate::AffineOf { scale, offset, inner: Box::new(inner) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Certificate::Polynomial(p) => p.dim(),
            Certificate::Network(n) => n.dim(),
            Certificate::AffineOf { inner, .. } => inner.dim(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            Certificate::Polynomial(p) => p.evaluate(x),
            Certificate::Network(n) => n.evaluate(x),
            Certificate::AffineOf { scale, offset, inner } => scale * inner.evaluate(x) + offset,
        }
    }

    /// `L` with `|c(x) - c(y)| <= L * max_i |x_i - y_i|` on the box.
    pub fn lipschitz_bound(&self, bounds: &AxisBox) -> f64 {
        match self {
            Certificate::Polynomial(p) => p.lipschitz_bound(bounds),
            Certificate::Network(n) => n.lipschitz_bound(bounds),
            Certificate::AffineOf { scale, inner, .. } => {
                scale.abs() * inner.lipschitz_bound(bounds)
            }
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, Certificate::AffineOf { .. })
    }

    pub fn param_count(&self) -> usize {
        match self {
            Certificate::Polynomial(p) => p.coeffs.len(),
            Certificate::Network(n) => n.param_count(),
            Certificate::AffineOf { .. } => 0,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Certificate::Polynomial(p) => p.coeffs.clone(),
            Certificate::Network(n) => {
                let mut out = Vec::with_capacity(n.param_count());
                for l in 0..n.weights.len() {
                    out.extend_from_slice(&n.weights[l]);
                    out.extend_from_slice(&n.biases[l]);
                }
                out
            }
            Certificate::AffineOf { .. } => Vec::new(),
        }
    }

    /// Install a flat parameter vector. Polynomial coefficients are clamped to
    /// `[-100, 100]` (projected update).
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        match self {
            Certificate::Polynomial(p) => {
                for (c, &v) in p.coeffs.iter_mut().zip(params) {
                    *c = v.clamp(-COEFF_CLAMP, COEFF_CLAMP);
                }
                Ok(())
            }
            Certificate::Network(n) => {
                let mut it = params.iter();
                for l in 0..n.weights.len() {
                    for w in &mut n.weights[l] {
                        *w = *it.next().unwrap();
                    }
                    for b in &mut n.biases[l] {
                        *b = *it.next().unwrap();
                    }
                }
                Ok(())
            }
            Certificate::AffineOf { .. } => {
                Err(Error::unsupported("affine-of certificate has no trainable parameters"))
            }
        }
    }

    pub fn parameter_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.param_count()];
        self.parameter_gradient_into(x, &mut grad)?;
        Ok(grad)
    }

    /// As [`Certificate::parameter_gradient`], writing into a caller-owned
    /// buffer of length `param_count()` so batch loops allocate nothing.
    pub fn parameter_gradient_into(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
        match self {
            Certificate::Polynomial(p) => {
                for (g, e) in grad.iter_mut().zip(&p.exponents) {
                    let mut m = 1.0;
                    for (xi, &ei) in x.iter().zip(e) {
                        m *= xi.powi(ei as i32);
                    }
                    *g = m;
                }
                Ok(())
            }
            Certificate::Network(n) => {
                n.parameter_gradient_into(x, grad);
                Ok(())
            }
            Certificate::AffineOf { .. } => {
                Err(Error::unsupported("affine-of certificate has no trainable parameters"))
            }
        }
    }
}

// JSON form. Parameter arrays round-trip bit-exactly (shortest-representation
// float printing re-reads to the same f64).

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CertificateDto {
    Polynomial { dim: usize, degree: u32, basis: String, parameters: Vec<f64> },
    Network { layers: Vec<usize>, activation: String, parameters: Vec<f64> },
    AffineOf { scale: f64, offset: f64, inner: Box<CertificateDto> },
}

impl From<&Certificate> for CertificateDto {
    fn from(c: &Certificate) -> Self {
        match c {
            Certificate::Polynomial(p) => CertificateDto::Polynomial {
                dim: p.dim,
                degree: p.degree,
                basis: BASIS_NAME.into(),
                parameters: p.coeffs.clone(),
            },
            Certificate::Network(n) => CertificateDto::Network {
                layers: n.layers.clone(),
                activation: ACTIVATION_NAME.into(),
                parameters: c.params(),
            },
            Certificate::AffineOf { scale, offset, inner } => CertificateDto::AffineOf {
                scale: *scale,
                offset: *offset,
                inner: Box::new(inner.as_ref().into()),
            },
        }
    }
}

impl TryFrom<CertificateDto> for Certificate {
    type Error = Error;
    fn try_from(dto: CertificateDto) -> Result<Self> {
        match dto {
            CertificateDto::Polynomial { dim, degree, basis, parameters } => {
                if basis != BASIS_NAME {
                    return Err(Error::invalid(format!(
                        "unknown polynomial basis '{basis}', expected '{BASIS_NAME}'"
                    )));
                }
                let mut p = Polynomial::new(dim, degree)?;
                if parameters.len() != p.coeffs.len() {
                    return Err(Error::dimension(format!(
                        "degree-{degree} polynomial over {dim} vars needs {} coefficients, got {}",
                        p.coeffs.len(),
                        parameters.len()
                    )));
                }
                if parameters.iter().any(|c| c.abs() > COEFF_CLAMP) {
                    return Err(Error::invalid(format!(
                        "polynomial coefficients must lie in [-{COEFF_CLAMP}, {COEFF_CLAMP}]"
                    )));
                }
                p.coeffs = parameters;
                Ok(Certificate::Polynomial(p))
            }
            CertificateDto::Network { layers, activation, parameters } => {
                if activation != ACTIVATION_NAME {
                    return Err(Error::invalid(format!(
                        "unknown activation '{activation}', expected '{ACTIVATION_NAME}'"
                    )));
                }
                let mut c = Certificate::Network(Network::zeroed(&layers)?);
                if parameters.len() != c.param_count() {
                    return Err(Error::dimension(format!(
                        "network {layers:?} needs {} parameters, got {}",
                        c.param_count(),
                        parameters.len()
                    )));
                }
                c.set_params(&parameters)?;
                Ok(c)
            }
            CertificateDto::AffineOf { scale, offset, inner } => {
                if !(scale.is_finite() && offset.is_finite()) {
                    return Err(Error::invalid("affine-of scale/offset must be finite"));
                }
                Ok(Certificate::affine_of(scale, offset, (*inner).try_into()?))
            }
        }
    }
}

impl Serialize for Certificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CertificateDto::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Certificate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let dto = CertificateDto::deserialize(d)?;
        dto.try_into().map_err(serde::de::Error::custom)
    }
}
