//! Scalar reverse-mode automatic differentiation on a flat tape.

/// Node handle.
pub type Var = usize;

#[derive(Default, Debug, Clone)]
pub struct Tape {
    vals: Vec<f64>,
    deps: Vec<Vec<(Var, f64)>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn push(&mut self, v: f64, deps: Vec<(Var, f64)>) -> Var {
        self.vals.push(v);
        self.deps.push(deps);
        self.vals.len() - 1
    }

    /// Leaf (parameter or constant).
    pub fn leaf(&mut self, v: f64) -> Var {
        self.push(v, Vec::new())
    }

    pub fn value(&self, a: Var) -> f64 {
        self.vals[a]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(self.vals[a] + self.vals[b], vec![(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(self.vals[a] - self.vals[b], vec![(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.vals[a], self.vals[b]);
        self.push(x * y, vec![(a, y), (b, x)])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.push(self.vals[a] * k, vec![(a, k)])
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        self.push(self.vals[a] + k, vec![(a, 1.0)])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.vals[x]).sum();
        self.push(v, xs.iter().map(|&x| (x, 1.0)).collect())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.vals[a].exp();
        self.push(e, vec![(a, e)])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.vals[a];
        self.push(x.ln(), vec![(a, 1.0 / x)])
    }

    /// Node whose value is `value` and whose derivative with respect to `a`
    /// is declared to be `deriv` (used for non-differentiable steps).
    pub fn custom(&mut self, a: Var, value: f64, deriv: f64) -> Var {
        self.push(value, vec![(a, deriv)])
    }

    /// Gradient of `out` with respect to every node.
    pub fn grad(&self, out: Var) -> Vec<f64> {
        let mut g = vec![0.0; self.vals.len()];
        g[out] = 1.0;
        for i in (0..=out).rev() {
            if g[i] == 0.0 {
                continue;
            }
            for &(p, d) in &self.deps[i] {
                g[p] += g[i] * d;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(3.0);
        let y = t.leaf(4.0);
        let xy = t.mul(x, y);
        let z = t.add(xy, x);
        let g = t.grad(z);
        assert_eq!(g[x], 5.0);
        assert_eq!(g[y], 3.0);
    }

    #[test]
    fn log_exp() {
        let mut t = Tape::new();
        let x = t.leaf(0.7);
        let e = t.exp(x);
        let l = t.ln(e);
        assert!((t.grad(l)[x] - 1.0).abs() < 1e-12);
    }
}
