use crate::scalar::Real;

/// Analysis/synthesis window applied around every transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Window {
    Rect,
    /// Square root of the periodic Hann window. Used for both analysis and
    /// synthesis its square sums to 2 at a hop of a quarter frame.
    #[default]
    SqrtHann,
}

impl Window {
    pub fn coefficients<T: Real>(self, len: usize) -> Vec<T> {
        match self {
            Window::Rect => vec![T::one(); len],
            Window::SqrtHann => {
                let n = T::from_usize_lossy(len);
                (0..len)
                    .map(|i| {
                        let phase = T::TAU() * T::from_usize_lossy(i) / n;
                        (T::lit(0.5) - T::lit(0.5) * phase.cos())
                            .max(T::zero())
                            .sqrt()
                    })
                    .collect()
            }
        }
    }
}
