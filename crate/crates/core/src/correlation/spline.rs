//! Natural cubic spline on unit-spaced knots.

#[derive(Debug, Clone)]
pub struct NaturalSpline {
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(y: Vec<f64>) -> Self {
        assert!(!y.is_empty(), "spline needs at least one knot");
        let n = y.len();
        let mut m = vec![0.0; n];
        if n >= 3 {
            // Thomas algorithm for m_{i−1} + 4m_i + m_{i+1} = 6(y_{i+1} − 2y_i + y_{i−1}).
            let interior = n - 2;
            let mut c_prime = vec![0.0; interior];
            let mut d_prime = vec![0.0; interior];
            for k in 0..interior {
                let i = k + 1;
                let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
                if k == 0 {
                    c_prime[0] = 1.0 / 4.0;
                    d_prime[0] = rhs / 4.0;
                } else {
                    let denom = 4.0 - c_prime[k - 1];
                    c_prime[k] = 1.0 / denom;
                    d_prime[k] = (rhs - d_prime[k - 1]) / denom;
                }
            }
            for k in (0..interior).rev() {
                let next = if k + 1 < interior { m[k + 2] } else { 0.0 };
                m[k + 1] = d_prime[k] - c_prime[k] * next;
            }
        }
        Self { y, m }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn knots(&self) -> &[f64] {
        &self.y
    }

    /// Value, first and second derivative at `x ∈ [0, len−1]`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.y.len();
        if n == 1 {
            return (self.y[0], 0.0, 0.0);
        }
        let i = (x.floor().max(0.0) as usize).min(n - 2);
        let u = x - i as f64;
        let v = 1.0 - u;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let value = v * y0 + u * y1 + (v * v * v - v) * m0 / 6.0 + (u * u * u - u) * m1 / 6.0;
        let d1 = y1 - y0 - (3.0 * v * v - 1.0) * m0 / 6.0 + (3.0 * u * u - 1.0) * m1 / 6.0;
        let d2 = v * m0 + u * m1;
        (value, d1, d2)
    }
}
