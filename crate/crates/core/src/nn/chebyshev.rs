//! First-kind Chebyshev polynomials and the learnable Chebyshev polynomial
//! approximation (CPA) `f(x) = sum_{l=1..K} v_l T_l(x)`.
//!
//! There is no constant term: the sum starts at `T_1`.

use rand::Rng;

use crate::autodiff::{ParamBuilder, ParamId, Session, Shape, Var};
use crate::error::{Error, Result};

/// Map a value in `[0, 1]` onto the Chebyshev domain `[-1, 1]`.
pub fn to_domain(u: f64) -> f64 {
    2.0 * u - 1.0
}

/// `[T_1(x), .., T_k(x)]` with `x` clamped to `[-1, 1]`.
pub fn basis(x: f64, k: usize) -> Vec<f64> {
    let x = x.clamp(-1.0, 1.0);
    let mut out = Vec::with_capacity(k);
    let (mut prev, mut cur) = (1.0, x);
    for _ in 0..k {
        out.push(cur);
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    out
}

/// `[T_1'(x), .., T_k'(x)]`, using `T_l' = 2 T_{l-1} + 2x T_{l-1}' - T_{l-2}'`.
pub fn basis_derivative(x: f64, k: usize) -> Vec<f64> {
    let x = x.clamp(-1.0, 1.0);
    let mut out = Vec::with_capacity(k);
    // (T_{l-1}, T_l) and (T'_{l-1}, T'_l), starting at l = 1
    let (mut t_prev, mut t_cur) = (1.0, x);
    let (mut d_prev, mut d_cur) = (0.0, 1.0);
    for _ in 0..k {
        out.push(d_cur);
        let t_next = 2.0 * x * t_cur - t_prev;
        let d_next = 2.0 * t_cur + 2.0 * x * d_cur - d_prev;
        t_prev = t_cur;
        t_cur = t_next;
        d_prev = d_cur;
        d_cur = d_next;
    }
    out
}

/// Plain-valued CPA coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CpaParams {
    pub coefficients: Vec<f64>,
}

impl CpaParams {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("CPA needs at least one coefficient"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("CPA coefficients must be finite"));
        }
        Ok(CpaParams { coefficients })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// `sum_l v_l T_l(x)` for `x` already in the Chebyshev domain.
    pub fn eval(&self, x: f64) -> f64 {
        basis(x, self.order())
            .iter()
            .zip(&self.coefficients)
            .map(|(t, v)| t * v)
            .sum()
    }
}

/// CPA layer with coefficients stored as a `K x 1` parameter.
#[derive(Clone, Debug)]
pub struct Cpa {
    pub coefficients: ParamId,
    pub order: usize,
}

impl Cpa {
    pub fn new<R: Rng>(b: &mut ParamBuilder<'_, R>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("k_em", "must be >= 1"));
        }
        Ok(Cpa {
            coefficients: b.weight("v", order, 1)?,
            order,
        })
    }

    pub fn params(&self, s: &Session<'_>) -> CpaParams {
        CpaParams {
            coefficients: s.store().get(self.coefficients).values.clone(),
        }
    }

    /// Differentiable in both the coefficients and `x` (a `1 x 1` value).
    pub fn eval(&self, s: &mut Session<'_>, x: Var) -> Result<Var> {
        let basis = s.chebyshev(x, self.order)?;
        let v = s.param(self.coefficients);
        s.matmul(basis, v)
    }

    /// CPA evaluated at every embedding position `j / c`, mapped to [-1, 1].
    /// Returns a `c x 1` column.
    pub fn fill(&self, s: &mut Session<'_>, c: usize) -> Result<Var> {
        let mut rows = Vec::with_capacity(c * self.order);
        for j in 0..c {
            rows.extend(basis(to_domain(j as f64 / c as f64), self.order));
        }
        let basis = s.constant(Shape::new(c, self.order), rows)?;
        let v = s.param(self.coefficients);
        s.matmul(basis, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn basis_examples() {
        assert_eq!(basis(1.0, 4), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(basis(0.5, 2), vec![0.5, -0.5]);
        // 2 * 0.5 * (-0.5) - 0.5
        assert_eq!(basis(0.5, 3), vec![0.5, -0.5, -1.0]);
    }

    #[test]
    fn cpa_examples() {
        let pick_first = CpaParams::new(vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for x in [-0.7, 0.0, 0.3, 1.0] {
            assert_eq!(pick_first.eval(x), x);
        }
        let zeros = CpaParams::new(vec![0.0; 5]).unwrap();
        assert_eq!(zeros.eval(0.42), 0.0);
        let half = CpaParams::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(half.eval(0.5), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cpa_layer_gradient_is_basis() {
        use crate::autodiff::{ParamStore, Shape};
        let mut store = ParamStore::new();
        let id = store.insert("v", Shape::col(3), vec![0.2, -0.1, 0.4]).unwrap();
        let cpa = Cpa {
            coefficients: id,
            order: 3,
        };
        let mut s = Session::eval(&store);
        let x = s.scalar_const(0.3);
        let y = cpa.eval(&mut s, x).unwrap();
        s.backward(y).unwrap();
        let g = s.param_grads()[0].unwrap().to_vec();
        for (g, t) in g.iter().zip(basis(0.3, 3)) {
            assert_abs_diff_eq!(*g, t, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn recurrence_and_cosine_identity(x in -1.0f64..=1.0) {
            let t = basis(x, 10);
            // t[i] holds T_{i+1}
            for i in 2..10 {
                prop_assert!((t[i] - 2.0 * x * t[i - 1] + t[i - 2]).abs() < 1e-12);
            }
            for (l, v) in t.iter().enumerate() {
                let exact = ((l + 1) as f64 * x.acos()).cos();
                prop_assert!((v - exact).abs() < 1e-9);
            }
        }

        #[test]
        fn derivative_matches_finite_difference(x in -0.99f64..0.99) {
            let d = basis_derivative(x, 6);
            let h = 1e-6;
            let (hi, lo) = (basis(x + h, 6), basis(x - h, 6));
            for l in 0..6 {
                let fd = (hi[l] - lo[l]) / (2.0 * h);
                prop_assert!((fd - d[l]).abs() < 1e-5 * (1.0 + d[l].abs()));
            }
        }
    }
}
