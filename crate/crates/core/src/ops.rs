//! Arithmetic back-ends for the per-sample codec loops.
//!
//! Every steady-state encoder step routes its additions, subtractions and
//! multiplications through an [`Arith`] implementation. [`Plain`] compiles to
//! the bare operators; [`Counting`] tallies each operation so the per-sample
//! cost of a codec can be measured rather than asserted.

use std::cell::Cell;

pub trait Arith {
    fn add(&self, a: f64, b: f64) -> f64;
    fn sub(&self, a: f64, b: f64) -> f64;
    fn mul(&self, a: f64, b: f64) -> f64;
}

/// Uninstrumented arithmetic.
#[derive(Debug, Clone, Copy, Default)]
pub struct Plain;

impl Arith for Plain {
    #[inline(always)]
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline(always)]
    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline(always)]
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }
}

/// Arithmetic that counts additions (subtractions included) and multiplications.
#[derive(Debug, Default)]
pub struct Counting {
    adds: Cell<u64>,
    muls: Cell<u64>,
}

impl Counting {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn adds(&self) -> u64 {
        self.adds.get()
    }

    pub fn muls(&self) -> u64 {
        self.muls.get()
    }

    pub fn reset(&self) {
        self.adds.set(0);
        self.muls.set(0);
    }
}

impl Arith for Counting {
    fn add(&self, a: f64, b: f64) -> f64 {
        self.adds.set(self.adds.get() + 1);
        a + b
    }
    fn sub(&self, a: f64, b: f64) -> f64 {
        self.adds.set(self.adds.get() + 1);
        a - b
    }
    fn mul(&self, a: f64, b: f64) -> f64 {
        self.muls.set(self.muls.get() + 1);
        a * b
    }
}
