//! Direct-collocation optimal control.
//!
//! Problems are written as Bolza-form models ([`ocp`]) over parsed
//! expressions ([`expr`]), transcribed with backward Euler, trapezoidal or
//! multi-interval Legendre-Gauss-Radau collocation ([`colloc`],
//! [`transcribe`]) into sparse nonlinear programs, and solved with a
//! primal-dual interior-point method ([`nlp`]). [`mpc`] closes the loop
//! around a simulated plant and [`bench`] builds performance profiles.

pub mod bench;
pub mod colloc;
pub mod expr;
pub mod mpc;
pub mod nlp;
pub mod ocp;
pub mod plot;
pub mod transcribe;
pub mod problems;
