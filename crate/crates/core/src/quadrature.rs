//! Quadrature over the systematic offset ε ~ U(-T_c/2, T_c/2).

/// Nodes and weights of an `count`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots of `P_count` by Newton iteration from the Chebyshev-like initial
/// guess; weights from the derivative. Accurate to machine precision for the
/// node counts used here (up to a few hundred).
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(count >= 1, "need at least one node");
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let nf = count as f64;
    for i in 0..count.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(count, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(count, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[count - 1 - i] = x;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    if count % 2 == 1 {
        nodes[count / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Averaging rule for E_ε[f(ε)] with ε uniform on `[-half, half]`:
/// nodes in ε and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EpsilonRule {
    /// Gauss–Legendre rule with `count` nodes. One node is the midpoint.
    pub fn gauss(half: f64, count: usize) -> Self {
        let (x, w) = gauss_legendre(count);
        EpsilonRule {
            nodes: x.iter().map(|&t| t * half).collect(),
            weights: w.iter().map(|&v| v / 2.0).collect(),
        }
    }

    /// Composite midpoint rule with `count` equal cells.
    pub fn midpoint(half: f64, count: usize) -> Self {
        assert!(count >= 1);
        let width = 2.0 * half / count as f64;
        EpsilonRule {
            nodes: (0..count)
                .map(|i| -half + (i as f64 + 0.5) * width)
                .collect(),
            weights: vec![1.0 / count as f64; count],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn average(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&e, &w)| w * f(e))
            .sum()
    }
}
