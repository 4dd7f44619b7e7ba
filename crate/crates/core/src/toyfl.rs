//! Quadratic federated workload with exact losses, gradients and
//! smoothness constants, used to check the surrogate descent bounds on
//! real gradient trajectories.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::invalid;
use crate::surrogate::descent_gap_bound;
use crate::vector::{axpy, check_dim, dot, norm, sub};
use crate::Result;

/// `f_k(w) = c_k / 2 * ||w - w_k*||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticClient {
    pub optimum: Vec<f64>,
    pub curvature: f64,
    /// Local model, warm-started from the global model each round.
    pub local: Vec<f64>,
}

impl QuadraticClient {
    pub fn new(optimum: Vec<f64>, curvature: f64) -> Result<Self> {
        if !(curvature > 0.0) {
            return Err(invalid("curvature", "curvature must be positive"));
        }
        let local = alloc::vec![0.0; optimum.len()];
        Ok(Self {
            optimum,
            curvature,
            local,
        })
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let d = sub(w, &self.optimum);
        0.5 * self.curvature * dot(&d, &d)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.optimum)
            .map(|(x, o)| self.curvature * (x - o))
            .collect()
    }
}

/// Clients with optima uniform in `[-spread, spread]^dim` and curvature
/// uniform in `curvature`.
pub fn spread_clients<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    spread: f64,
    curvature: (f64, f64),
    rng: &mut R,
) -> Result<Vec<QuadraticClient>> {
    (0..n)
        .map(|_| {
            let optimum = (0..dim)
                .map(|_| spread * (2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            let c = curvature.0 + (curvature.1 - curvature.0) * rng.gen::<f64>();
            QuadraticClient::new(optimum, c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub step_size: f64,
    pub local_epochs: usize,
    /// Weight of the incoming global model in the warm start.
    pub mixing: f64,
    /// Required cosine between the true gradient and the surrogate aggregate.
    pub angle_constant: f64,
}

impl TrainerConfig {
    pub fn new(
        step_size: f64,
        local_epochs: usize,
        mixing: f64,
        angle_constant: f64,
    ) -> Result<Self> {
        if !(step_size > 0.0) {
            return Err(invalid("step_size", "step size must be positive"));
        }
        if local_epochs == 0 {
            return Err(invalid("local_epochs", "need at least one local epoch"));
        }
        if !(0.0..=1.0).contains(&mixing) {
            return Err(invalid("mixing", "mixing factor must lie in [0, 1]"));
        }
        if !(angle_constant > 0.0 && angle_constant <= 1.0) {
            return Err(invalid(
                "angle_constant",
                "angle constant must lie in (0, 1]",
            ));
        }
        Ok(Self {
            step_size,
            local_epochs,
            mixing,
            angle_constant,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    /// Loss reduction clipped to `[0, M]`.
    pub utility: f64,
    /// Gradient at the warm-started local model.
    pub signal: Vec<f64>,
    /// `step_size * curvature >= 2`: plain gradient descent on this client is unstable.
    pub diverging: bool,
}

/// Warm start `w_k <- (1 - a) w_k + a w`, then full-gradient local epochs.
pub fn local_update(
    client: &mut QuadraticClient,
    global: &[f64],
    cfg: &TrainerConfig,
    utility_bound: f64,
) -> Result<LocalUpdate> {
    check_dim(client.dim(), global.len())?;
    let a = cfg.mixing;
    for (l, g) in client.local.iter_mut().zip(global) {
        *l = (1.0 - a) * *l + a * g;
    }
    let before = client.loss(&client.local);
    let signal = client.gradient(&client.local);
    for _ in 0..cfg.local_epochs {
        let g = client.gradient(&client.local);
        axpy(&mut client.local, -cfg.step_size, &g);
    }
    let after = client.loss(&client.local);
    Ok(LocalUpdate {
        utility: (before - after).clamp(0.0, utility_bound),
        signal,
        diverging: cfg.step_size * client.curvature >= 2.0,
    })
}

/// `w - gamma * g`.
pub fn global_step(w: &[f64], aggregate: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_dim(w.len(), aggregate.len())?;
    Ok(w.iter()
        .zip(aggregate)
        .map(|(x, g)| x - gamma * g)
        .collect())
}

/// `f(w) = sum_k beta_k f_k(w)` over a subset of clients.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedObjective {
    pub terms: Vec<(usize, f64)>,
}

impl WeightedObjective {
    pub fn value(&self, clients: &[QuadraticClient], w: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(k, b)| b * clients[k].loss(w))
            .sum()
    }

    pub fn gradient(&self, clients: &[QuadraticClient], w: &[f64]) -> Vec<f64> {
        let mut g = alloc::vec![0.0; w.len()];
        for &(k, b) in &self.terms {
            axpy(&mut g, b, &clients[k].gradient(w));
        }
        g
    }

    /// Exact smoothness constant `sum_k beta_k c_k`.
    pub fn smoothness(&self, clients: &[QuadraticClient]) -> f64 {
        self.terms
            .iter()
            .map(|&(k, b)| b * clients[k].curvature)
            .sum()
    }
}

/// One server round seen by the bound checker.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentRecord {
    pub round: usize,
    pub objective: WeightedObjective,
    pub model: Vec<f64>,
    /// Aggregate with true signals for the missing clients.
    pub true_aggregate: Vec<f64>,
    /// Aggregate actually applied.
    pub surrogate_aggregate: Vec<f64>,
    pub step_size: f64,
    /// Total weight carried by surrogates.
    pub surrogate_weight: f64,
    /// Largest `||surrogate - truth||` among this round's surrogates.
    pub surrogate_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentReport {
    pub rounds: usize,
    /// Rounds passing the angle condition, on which the descent bound is checked.
    pub descent_checked: usize,
    pub angle_excluded: usize,
    pub descent_violations: usize,
    pub gap_violations: usize,
    /// Rounds where `||G~ - G||` exceeds `surrogate_error * surrogate_weight`.
    pub bias_violations: usize,
    pub min_descent_slack: f64,
    pub min_gap_slack: f64,
}

/// Checks the smoothness one-step bound (on rounds meeting the angle
/// condition), the surrogate descent-gap bound and the bias bound (on every
/// round).
pub fn verify_descent_bounds(
    clients: &[QuadraticClient],
    trajectory: &[DescentRecord],
    cfg: &TrainerConfig,
) -> DescentReport {
    let mut report = DescentReport {
        rounds: trajectory.len(),
        descent_checked: 0,
        angle_excluded: 0,
        descent_violations: 0,
        gap_violations: 0,
        bias_violations: 0,
        min_descent_slack: f64::INFINITY,
        min_gap_slack: f64::INFINITY,
    };
    for rec in trajectory {
        let f = &rec.objective;
        let smooth = f.smoothness(clients);
        let gamma = rec.step_size;
        let grad = f.gradient(clients, &rec.model);
        let (grad_norm, sur_norm) = (norm(&grad), norm(&rec.surrogate_aggregate));
        let f_now = f.value(clients, &rec.model);
        let w_sur: Vec<f64> = rec
            .model
            .iter()
            .zip(&rec.surrogate_aggregate)
            .map(|(w, g)| w - gamma * g)
            .collect();
        let w_true: Vec<f64> = rec
            .model
            .iter()
            .zip(&rec.true_aggregate)
            .map(|(w, g)| w - gamma * g)
            .collect();
        let (f_sur, f_true) = (f.value(clients, &w_sur), f.value(clients, &w_true));
        let tol = 1e-9 * (1.0 + f_now.abs());

        if dot(&grad, &rec.surrogate_aggregate) >= cfg.angle_constant * grad_norm * sur_norm {
            report.descent_checked += 1;
            let bound = f_now - gamma * cfg.angle_constant * grad_norm * sur_norm
                + 0.5 * smooth * gamma * gamma * sur_norm * sur_norm;
            let slack = bound - f_sur;
            report.min_descent_slack = report.min_descent_slack.min(slack);
            if slack < -tol {
                report.descent_violations += 1;
            }
        } else {
            report.angle_excluded += 1;
        }

        let bias = sub(&rec.surrogate_aggregate, &rec.true_aggregate);
        let bias_norm = norm(&bias);
        let bias_bound = rec.surrogate_error * rec.surrogate_weight;
        if bias_norm > bias_bound * (1.0 + 1e-12) + 1e-15 {
            report.bias_violations += 1;
        }
        let gap = descent_gap_bound(
            gamma,
            smooth,
            grad_norm,
            norm(&rec.true_aggregate),
            bias_norm,
        );
        let slack = gap - (f_sur - f_true).abs();
        report.min_gap_slack = report.min_gap_slack.min(slack);
        if slack < -tol {
            report.gap_violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg(step: f64, epochs: usize, mixing: f64) -> TrainerConfig {
        TrainerConfig::new(step, epochs, mixing, 0.5).unwrap()
    }

    #[test]
    fn at_optimum_nothing_moves() {
        let mut c = QuadraticClient::new(vec![1.0, -1.0], 2.0).unwrap();
        c.local = vec![1.0, -1.0];
        let up = local_update(&mut c, &[1.0, -1.0], &cfg(0.3, 3, 0.5), 10.0).unwrap();
        assert_eq!(up.utility, 0.0);
        assert_eq!(c.local, vec![1.0, -1.0]);
    }

    #[test]
    fn single_hand_step() {
        let mut c = QuadraticClient::new(vec![0.0, 0.0], 1.0).unwrap();
        let up = local_update(&mut c, &[2.0, 0.0], &cfg(0.5, 1, 1.0), 10.0).unwrap();
        assert_eq!(c.local, vec![1.0, 0.0]);
        assert!((up.utility - 1.5).abs() < 1e-15);
        assert_eq!(up.signal, vec![2.0, 0.0]);
        assert!(!up.diverging);
    }

    #[test]
    fn zero_mixing_ignores_global() {
        let mut a = QuadraticClient::new(vec![0.0], 1.0).unwrap();
        a.local = vec![3.0];
        let mut b = a.clone();
        local_update(&mut a, &[100.0], &cfg(0.2, 2, 0.0), 1e9).unwrap();
        local_update(&mut b, &[-7.0], &cfg(0.2, 2, 0.0), 1e9).unwrap();
        assert_eq!(a.local, b.local);
    }

    #[test]
    fn divergence_flag_and_clip() {
        let mut c = QuadraticClient::new(vec![0.0], 4.0).unwrap();
        let up = local_update(&mut c, &[1.0], &cfg(0.6, 1, 1.0), 10.0).unwrap();
        assert!(up.diverging);
        assert_eq!(up.utility, 0.0);
    }

    #[test]
    fn global_step_examples() {
        assert_eq!(
            global_step(&[1.0, 1.0], &[0.0, 0.0], 0.5).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            global_step(&[1.0, 1.0], &[1.0, 0.0], 0.5).unwrap(),
            vec![0.5, 1.0]
        );
        assert!(global_step(&[1.0], &[1.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn single_client_descent_has_positive_slack() {
        let clients = vec![QuadraticClient::new(vec![1.0, 2.0], 2.0).unwrap()];
        let obj = WeightedObjective {
            terms: vec![(0, 1.0)],
        };
        let w = vec![-1.0, 0.5];
        let g = obj.gradient(&clients, &w);
        let rec = DescentRecord {
            round: 1,
            objective: obj,
            model: w,
            true_aggregate: g.clone(),
            surrogate_aggregate: g,
            step_size: 0.2,
            surrogate_weight: 0.0,
            surrogate_error: 0.0,
        };
        let r = verify_descent_bounds(&clients, &[rec], &cfg(0.2, 1, 1.0));
        assert_eq!(
            (
                r.descent_checked,
                r.descent_violations,
                r.gap_violations,
                r.bias_violations
            ),
            (1, 0, 0, 0)
        );
        assert!(r.min_descent_slack > 0.0);
        assert_eq!(r.min_gap_slack, 0.0);
    }
}
