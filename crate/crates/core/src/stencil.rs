//! One-dimensional finite-difference stencils on uniform node sets.
//!
//! Interior nodes use central differences; boundary nodes use second-order
//! one-sided formulas, so derivatives are exact on quadratics everywhere and
//! second derivatives are exact on cubics in the interior.

/// Up to four `(index, weight)` pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub len: usize,
}

impl Stencil {
    fn new(pairs: &[(usize, f64)]) -> Self {
        let mut idx = [0; 4];
        let mut w = [0.0; 4];
        for (slot, &(i, wi)) in pairs.iter().enumerate() {
            idx[slot] = i;
            w[slot] = wi;
        }
        Self {
            idx,
            w,
            len: pairs.len(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len].iter().copied().zip(self.w[..self.len].iter().copied())
    }

    pub fn apply(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.iter().map(|(i, w)| w * f(i)).sum()
    }
}

/// First-derivative stencils for `n` nodes with spacing `dx`.
pub(crate) fn first_derivative(n: usize, dx: f64) -> Vec<Stencil> {
    assert!(n >= 2, "need at least two nodes");
    if n == 2 {
        let s = Stencil::new(&[(0, -1.0 / dx), (1, 1.0 / dx)]);
        return vec![s, s];
    }
    let c = 0.5 / dx;
    (0..n)
        .map(|i| {
            if i == 0 {
                Stencil::new(&[(0, -3.0 * c), (1, 4.0 * c), (2, -c)])
            } else if i == n - 1 {
                Stencil::new(&[(n - 3, c), (n - 2, -4.0 * c), (n - 1, 3.0 * c)])
            } else {
                Stencil::new(&[(i - 1, -c), (i + 1, c)])
            }
        })
        .collect()
}

/// Second-derivative stencils for `n` nodes with spacing `dx`. With two nodes
/// there is no second derivative and the stencils are empty.
pub(crate) fn second_derivative(n: usize, dx: f64) -> Vec<Stencil> {
    assert!(n >= 2, "need at least two nodes");
    if n == 2 {
        return vec![Stencil::new(&[]); 2];
    }
    let c = 1.0 / (dx * dx);
    (0..n)
        .map(|i| {
            if n == 3 {
                Stencil::new(&[(0, c), (1, -2.0 * c), (2, c)])
            } else if i == 0 {
                Stencil::new(&[(0, 2.0 * c), (1, -5.0 * c), (2, 4.0 * c), (3, -c)])
            } else if i == n - 1 {
                Stencil::new(&[(n - 4, -c), (n - 3, 4.0 * c), (n - 2, -5.0 * c), (n - 1, 2.0 * c)])
            } else {
                Stencil::new(&[(i - 1, c), (i, -2.0 * c), (i + 1, c)])
            }
        })
        .collect()
}

/// Composite trapezoid weights.
pub(crate) fn trapezoid(n: usize, dx: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * dx } else { dx })
        .collect()
}
