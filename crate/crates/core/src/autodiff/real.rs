use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::params::ParamId;
use super::tape::{sigmoid_with_slope, Tape, Var};

/// Scalar arithmetic shared by plain `f64` evaluation and taped evaluation,
/// so the forward model is written once.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(x: f64) -> Self;
    fn val(self) -> f64;
    fn detach(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn sigmoid(self) -> Self;
    fn relu(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn max_const(self, floor: f64) -> Self;
    /// `bias + Σ c_k x_k`
    fn linear(terms: &[(Self, f64)], bias: f64) -> Self;
    fn dot(a: &[Self], b: &[Self]) -> Self;

    fn clamp_pos(self) -> Self {
        self.relu()
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn val(self) -> f64 {
        self
    }
    fn detach(self) -> Self {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_with_slope(self).0
    }
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn max_const(self, floor: f64) -> Self {
        if self >= floor {
            self
        } else {
            floor
        }
    }
    fn linear(terms: &[(Self, f64)], bias: f64) -> Self {
        terms.iter().fold(bias, |acc, (x, c)| acc + x * c)
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

impl<'t> Real for Var<'t> {
    fn cst(x: f64) -> Self {
        Var::constant(x)
    }
    fn val(self) -> f64 {
        self.value()
    }
    fn detach(self) -> Self {
        Var::detach(self)
    }
    fn exp(self) -> Self {
        Var::exp(self)
    }
    fn ln(self) -> Self {
        Var::ln(self)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn sigmoid(self) -> Self {
        Var::sigmoid(self)
    }
    fn relu(self) -> Self {
        Var::relu(self)
    }
    fn powi(self, n: i32) -> Self {
        Var::powi(self, n)
    }
    fn max_const(self, floor: f64) -> Self {
        Var::max_const(self, floor)
    }
    fn linear(terms: &[(Self, f64)], bias: f64) -> Self {
        Var::linear(terms, bias)
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        Var::dot(a, b)
    }
}

/// Read access to the optimizable parameters in a chosen scalar type.
pub trait ParamCtx {
    type R: Real;

    fn values(&self) -> &[f64];

    fn param(&self, id: ParamId) -> Self::R;

    /// `bias + Σ c_k θ[id_k]`
    fn param_affine(&self, bias: f64, terms: &[(ParamId, f64)]) -> Self::R;

    /// `θ[bias] + Σ_k θ[weights + k] x_k`
    fn neuron(&self, bias: ParamId, weights: ParamId, inputs: &[Self::R]) -> Self::R;
}

/// Evaluates with raw `f64` values (no gradients).
#[derive(Clone, Copy, Debug)]
pub struct PlainCtx<'a> {
    values: &'a [f64],
}

impl<'a> PlainCtx<'a> {
    pub fn new(values: &'a [f64]) -> Self {
        PlainCtx { values }
    }
}

impl ParamCtx for PlainCtx<'_> {
    type R = f64;

    fn values(&self) -> &[f64] {
        self.values
    }

    fn param(&self, id: ParamId) -> f64 {
        self.values[id as usize]
    }

    fn param_affine(&self, bias: f64, terms: &[(ParamId, f64)]) -> f64 {
        terms
            .iter()
            .fold(bias, |acc, &(id, c)| acc + c * self.values[id as usize])
    }

    fn neuron(&self, bias: ParamId, weights: ParamId, inputs: &[f64]) -> f64 {
        let w = &self.values[weights as usize..weights as usize + inputs.len()];
        w.iter()
            .zip(inputs)
            .fold(self.values[bias as usize], |acc, (w, x)| acc + w * x)
    }
}

/// Evaluates on a tape so parameter gradients can be pulled back.
#[derive(Clone, Copy, Debug)]
pub struct TapeCtx<'t> {
    tape: &'t Tape,
    values: &'t [f64],
}

impl<'t> TapeCtx<'t> {
    pub fn new(tape: &'t Tape, values: &'t [f64]) -> Self {
        TapeCtx { tape, values }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

impl<'t> ParamCtx for TapeCtx<'t> {
    type R = Var<'t>;

    fn values(&self) -> &[f64] {
        self.values
    }

    fn param(&self, id: ParamId) -> Var<'t> {
        self.tape.param(id, self.values[id as usize])
    }

    fn param_affine(&self, bias: f64, terms: &[(ParamId, f64)]) -> Var<'t> {
        let value = PlainCtx::new(self.values).param_affine(bias, terms);
        self.tape.param_affine(value, terms)
    }

    fn neuron(&self, bias: ParamId, weights: ParamId, inputs: &[Var<'t>]) -> Var<'t> {
        let w = &self.values[weights as usize..weights as usize + inputs.len()];
        let value = w
            .iter()
            .zip(inputs)
            .fold(self.values[bias as usize], |acc, (w, x)| acc + w * x.value());
        self.tape.neuron(value, bias, weights, w, inputs)
    }
}
