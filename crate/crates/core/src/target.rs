use crate::error::{Error, Result};

/// A black-box scalar function of `dim()` real inputs.
///
/// Implementations must be pure: the same input yields the same output.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;

    /// Evaluates and rejects non-finite values.
    fn eval_checked(&self, x: &[f64]) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::TargetEval {
                point: x.to_vec(),
                value: v,
            })
        }
    }
}

/// Adapts a closure into a [`Target`].
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F> FnTarget<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnTarget { dim, f }
    }
}

impl<F> Target for FnTarget<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

impl<T: Target + ?Sized + Send> Target for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

/// Counts evaluations of the wrapped target.
pub struct Counting<T> {
    inner: T,
    count: std::sync::atomic::AtomicU64,
}

impl<T: Target> Counting<T> {
    pub fn new(inner: T) -> Self {
        Counting {
            inner,
            count: std::sync::atomic::AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(std::sync::atomic::Ordering::Relaxed)
    }
}

impl<T: Target> Target for Counting<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.count
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        self.inner.eval(x)
    }
}
