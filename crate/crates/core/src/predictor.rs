use crate::scalar::Scalar;

/// A fitted binary classifier seen as a black box: feature vector in,
/// probability of the benign class out.
pub trait Predictor<T: Scalar>: Sync {
    fn predict(&self, x: &[T]) -> T;
}

impl<T: Scalar, F> Predictor<T> for F
where
    F: Fn(&[T]) -> T + Sync,
{
    fn predict(&self, x: &[T]) -> T {
        self(x)
    }
}
