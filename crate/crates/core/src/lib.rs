#![no_std]
//! Receivers built from nonlinear analog operators followed by few-bit ADCs,
//! and the capacity of the quantized Gaussian channels they induce.

extern crate alloc;

pub mod analog_ops;
pub mod scalar_quantizer;
pub mod code_construction;
pub mod capacity_engine;
pub mod hybrid_sim;
