use rand::Rng;

/// Source of actor feature vectors `ξ(x, u)`.
pub trait ActorFeatures<S: ?Sized> {
    /// Length `K_θ` of each feature vector.
    fn dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Writes `ξ(x, u)` into `out` (length `dim()`).
    fn write_features(&self, x: &S, u: usize, out: &mut [f64]);

    /// Writes `ξ(x, u)` for every action, action-major, into `out`
    /// (length `num_actions() * dim()`).
    fn write_all(&self, x: &S, out: &mut [f64]) {
        let k = self.dim();
        for (u, chunk) in out.chunks_exact_mut(k).enumerate() {
            self.write_features(x, u, chunk);
        }
    }
}

impl<S: ?Sized, T: ActorFeatures<S> + ?Sized> ActorFeatures<S> for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }

    fn write_features(&self, x: &S, u: usize, out: &mut [f64]) {
        (**self).write_features(x, u, out)
    }

    fn write_all(&self, x: &S, out: &mut [f64]) {
        (**self).write_all(x, out)
    }
}

/// Dense table of actor features for a finite state space.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn zeros(num_states: usize, num_actions: usize, dim: usize) -> Self {
        Self {
            num_states,
            num_actions,
            dim,
            data: vec![0.0; num_states * num_actions * dim],
        }
    }

    /// Builds a table from a closure producing `ξ(x, u)`.
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Self {
        let mut table = Self::zeros(num_states, num_actions, dim);
        for x in 0..num_states {
            for u in 0..num_actions {
                f(x, u, table.get_mut(x, u));
            }
        }
        table
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn get(&self, x: usize, u: usize) -> &[f64] {
        let start = (x * self.num_actions + u) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn get_mut(&mut self, x: usize, u: usize) -> &mut [f64] {
        let start = (x * self.num_actions + u) * self.dim;
        &mut self.data[start..start + self.dim]
    }
}

impl ActorFeatures<usize> for FeatureTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn write_features(&self, x: &usize, u: usize, out: &mut [f64]) {
        out.copy_from_slice(self.get(*x, u));
    }

    fn write_all(&self, x: &usize, out: &mut [f64]) {
        let block = self.num_actions * self.dim;
        out.copy_from_slice(&self.data[x * block..(x + 1) * block]);
    }
}

/// Softmax policy `μ(u|x) ∝ exp(θᵀξ(x, u))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxPolicy<F> {
    pub theta: Vec<f64>,
    pub features: F,
}

impl<F> SoftmaxPolicy<F> {
    pub fn new(theta: Vec<f64>, features: F) -> Self {
        Self { theta, features }
    }
}

impl<F> SoftmaxPolicy<F> {
    /// Action probabilities at `x`.
    pub fn probabilities<S: ?Sized>(&self, x: &S) -> Vec<f64>
    where
        F: ActorFeatures<S>,
    {
        let mut xi = vec![0.0; self.features.num_actions() * self.features.dim()];
        self.features.write_all(x, &mut xi);
        let mut probs = vec![0.0; self.features.num_actions()];
        softmax_from_features(&self.theta, &xi, &mut probs);
        probs
    }

    /// Likelihood ratio `ψ(x, u) = ∇_θ log μ(u|x)`.
    pub fn likelihood_ratio<S: ?Sized>(&self, x: &S, u: usize) -> Vec<f64>
    where
        F: ActorFeatures<S>,
    {
        likelihood_ratio(&self.features, &self.theta, x, u)
    }

    pub fn sample_action<S: ?Sized, R: Rng + ?Sized>(&self, x: &S, rng: &mut R) -> usize
    where
        F: ActorFeatures<S>,
    {
        sample_index(&self.probabilities(x), rng)
    }
}

/// `ψ(x, u) = ξ(x, u) − Σ_u' μ(u'|x) ξ(x, u')` for the softmax policy with
/// parameters `theta`.
pub fn likelihood_ratio<S: ?Sized, F: ActorFeatures<S>>(
    features: &F,
    theta: &[f64],
    x: &S,
    u: usize,
) -> Vec<f64> {
    let k = features.dim();
    let mut xi = vec![0.0; features.num_actions() * k];
    features.write_all(x, &mut xi);
    let mut probs = vec![0.0; features.num_actions()];
    softmax_from_features(theta, &xi, &mut probs);
    let mut psi = vec![0.0; k];
    score_from_features(&xi, &probs, u, &mut psi);
    psi
}

/// Softmax probabilities given the action-major feature block `xi`.
pub(crate) fn softmax_from_features(theta: &[f64], xi: &[f64], probs: &mut [f64]) {
    let k = theta.len();
    let mut max = f64::NEG_INFINITY;
    for (u, p) in probs.iter_mut().enumerate() {
        *p = dot(theta, &xi[u * k..(u + 1) * k]);
        max = max.max(*p);
    }
    let mut total = 0.0;
    for p in probs.iter_mut() {
        *p = (*p - max).exp();
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}

pub(crate) fn score_from_features(xi: &[f64], probs: &[f64], u: usize, psi: &mut [f64]) {
    let k = psi.len();
    psi.copy_from_slice(&xi[u * k..(u + 1) * k]);
    for (a, &p) in probs.iter().enumerate() {
        for (out, &v) in psi.iter_mut().zip(&xi[a * k..(a + 1) * k]) {
            *out -= p * v;
        }
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_table(seed: u64, states: usize, actions: usize, dim: usize) -> FeatureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureTable::from_fn(states, actions, dim, |_, _, out| {
            for v in out {
                *v = rng.random_range(-1.0..1.0);
            }
        })
    }

    #[test]
    fn probabilities_sum_to_one_and_are_positive() {
        let table = random_table(3, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        let policy = SoftmaxPolicy::new(theta, table);
        for x in 0..4 {
            let p = policy.probabilities(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn single_action_score_is_zero() {
        let table = random_table(1, 2, 1, 3);
        let psi = likelihood_ratio(&table, &[0.3, -0.2, 1.0], &1, 0);
        assert!(psi.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn uniform_two_action_score_is_half_difference() {
        let table = FeatureTable::from_fn(1, 2, 2, |_, u, out| {
            if u == 0 {
                out.copy_from_slice(&[1.0, 3.0]);
            } else {
                out.copy_from_slice(&[-1.0, 0.5]);
            }
        });
        let psi = likelihood_ratio(&table, &[0.0, 0.0], &0, 0);
        assert!((psi[0] - 1.0).abs() < 1e-15);
        assert!((psi[1] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn score_matches_finite_difference_of_log_policy() {
        let table = random_table(11, 3, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = 1e-6;
        for x in 0..3 {
            for u in 0..3 {
                let psi = likelihood_ratio(&table, &theta, &x, u);
                for i in 0..4 {
                    let mut plus = theta.clone();
                    let mut minus = theta.clone();
                    plus[i] += h;
                    minus[i] -= h;
                    let lp = SoftmaxPolicy::new(plus, table.clone()).probabilities(&x)[u].ln();
                    let lm = SoftmaxPolicy::new(minus, table.clone()).probabilities(&x)[u].ln();
                    let fd = (lp - lm) / (2.0 * h);
                    assert!((fd - psi[i]).abs() < 1e-8, "x={x} u={u} i={i}: {fd} vs {}", psi[i]);
                }
            }
        }
    }

    #[test]
    fn large_parameters_do_not_overflow() {
        let table = random_table(5, 1, 3, 2);
        let policy = SoftmaxPolicy::new(vec![800.0, -900.0], table);
        let p = policy.probabilities(&0);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
