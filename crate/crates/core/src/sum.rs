//! Deterministic compensated summation.
//!
//! Every reduction in the crate goes through here. Inputs are split into
//! fixed-size blocks, each block is accumulated sequentially with Neumaier
//! compensation, and block totals are combined in a fixed binary tree. The
//! shape of the computation depends only on the input length, so results are
//! bit-identical for any rayon pool size.

use num_complex::Complex;
use rayon::prelude::*;

use crate::scalar::Real;

/// Number of terms accumulated sequentially per block.
pub const BLOCK: usize = 2048;

/// Neumaier (improved Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier<S> {
    sum: S,
    comp: S,
}

impl<S: Real> Neumaier<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            comp: S::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> S {
        self.sum + self.comp
    }
}

/// Complex accumulator with independent compensation of both parts.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexNeumaier<S> {
    re: Neumaier<S>,
    im: Neumaier<S>,
}

impl<S: Real> ComplexNeumaier<S> {
    pub fn new() -> Self {
        Self {
            re: Neumaier::new(),
            im: Neumaier::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, z: Complex<S>) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn value(&self) -> Complex<S> {
        Complex::new(self.re.value(), self.im.value())
    }
}

fn tree<T: Copy>(items: &[T], zero: T, add: &impl Fn(T, T) -> T) -> T {
    match items.len() {
        0 => zero,
        1 => items[0],
        n => {
            let mid = n.div_ceil(2);
            add(tree(&items[..mid], zero, add), tree(&items[mid..], zero, add))
        }
    }
}

/// Fixed-shape pairwise sum of a slice.
pub fn pairwise<S: Real>(xs: &[S]) -> S {
    let blocks: Vec<S> = xs
        .chunks(BLOCK)
        .map(|c| {
            let mut acc = Neumaier::new();
            c.iter().for_each(|&x| acc.add(x));
            acc.value()
        })
        .collect();
    tree(&blocks, S::zero(), &|a, b| a + b)
}

/// Fixed-shape pairwise sum of a complex slice.
pub fn pairwise_complex<S: Real>(xs: &[Complex<S>]) -> Complex<S> {
    let blocks: Vec<Complex<S>> = xs
        .chunks(BLOCK)
        .map(|c| {
            let mut acc = ComplexNeumaier::new();
            c.iter().for_each(|&x| acc.add(x));
            acc.value()
        })
        .collect();
    tree(&blocks, Complex::new(S::zero(), S::zero()), &|a, b| a + b)
}

/// `Σ_{i<n} term(i)`, evaluated block-parallel with a fixed reduction tree.
pub fn par_sum<S, F>(n: usize, term: F) -> S
where
    S: Real,
    F: Fn(usize) -> S + Sync,
{
    let nblocks = n.div_ceil(BLOCK);
    let blocks: Vec<S> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Neumaier::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                acc.add(term(i));
            }
            acc.value()
        })
        .collect();
    tree(&blocks, S::zero(), &|a, b| a + b)
}

/// Complex counterpart of [`par_sum`].
pub fn par_sum_complex<S, F>(n: usize, term: F) -> Complex<S>
where
    S: Real,
    F: Fn(usize) -> Complex<S> + Sync,
{
    let nblocks = n.div_ceil(BLOCK);
    let blocks: Vec<Complex<S>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = ComplexNeumaier::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                acc.add(term(i));
            }
            acc.value()
        })
        .collect();
    tree(&blocks, Complex::new(S::zero(), S::zero()), &|a, b| a + b)
}
