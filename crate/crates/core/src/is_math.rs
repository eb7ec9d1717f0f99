//! Importance sampling on finite outcome spaces: the estimator, its exact
//! expectation and variance, and the minimum-variance proposal.

use thiserror::Error;

use crate::rng::ScenarioStream;

#[derive(Debug, Error, PartialEq)]
pub enum IsError {
    #[error("probabilities must be non-negative and sum to 1 (sum {0})")]
    NotADistribution(f64),
    #[error("{p} probabilities but {f} values")]
    LengthMismatch { p: usize, f: usize },
    #[error("proposal has zero mass on outcome {0} where f·p is non-zero")]
    SupportViolation(usize),
    #[error("f is zero everywhere under p; the optimal proposal is undefined")]
    UndefinedOptimum,
    #[error("sample count must be positive")]
    NoSamples,
}

/// Outcomes `0..n` with probabilities `p` and values `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    p: Vec<f64>,
    f: Vec<f64>,
}

fn check_distribution(p: &[f64]) -> Result<(), IsError> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(IsError::NotADistribution(sum));
    }
    Ok(())
}

impl DiscreteProblem {
    pub fn new(p: Vec<f64>, f: Vec<f64>) -> Result<Self, IsError> {
        if p.len() != f.len() {
            return Err(IsError::LengthMismatch { p: p.len(), f: f.len() });
        }
        check_distribution(&p)?;
        Ok(Self { p, f })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    /// `μ = Σ f·p`.
    pub fn mean(&self) -> f64 {
        self.p.iter().zip(&self.f).map(|(p, f)| p * f).sum()
    }

    fn check_proposal(&self, q: &[f64]) -> Result<(), IsError> {
        if q.len() != self.p.len() {
            return Err(IsError::LengthMismatch { p: q.len(), f: self.f.len() });
        }
        check_distribution(q)?;
        for (i, ((&p, &f), &qi)) in self.p.iter().zip(&self.f).zip(q).enumerate() {
            if qi <= 0.0 && p * f != 0.0 {
                return Err(IsError::SupportViolation(i));
            }
        }
        Ok(())
    }

    /// Single-sample term `f(x)·p(x)/q(x)`; zero where `q` has no mass.
    fn term(&self, x: usize, q: &[f64]) -> f64 {
        if q[x] > 0.0 {
            self.f[x] * self.p[x] / q[x]
        } else {
            0.0
        }
    }
}

/// Draws `n` outcomes from `q` and averages `f·p/q`.
pub fn is_estimate(problem: &DiscreteProblem, q: &[f64], n: usize, stream: &mut ScenarioStream) -> Result<f64, IsError> {
    problem.check_proposal(q)?;
    if n == 0 {
        return Err(IsError::NoSamples);
    }
    let total: f64 = (0..n).map(|_| problem.term(stream.next_categorical(q), q)).sum();
    Ok(total / n as f64)
}

/// Exact expectation of the single-sample estimator under `q`, by
/// enumeration (the `n`-sample mean has the same expectation).
pub fn exact_expectation(problem: &DiscreteProblem, q: &[f64]) -> Result<f64, IsError> {
    problem.check_proposal(q)?;
    Ok((0..q.len()).map(|x| q[x] * problem.term(x, q)).sum())
}

/// `(1/n) Σ (f·p − μ·q)² / q` over outcomes with `q > 0`.
pub fn estimator_variance(problem: &DiscreteProblem, q: &[f64], n: usize) -> Result<f64, IsError> {
    problem.check_proposal(q)?;
    if n == 0 {
        return Err(IsError::NoSamples);
    }
    let mu = problem.mean();
    let sum: f64 = q
        .iter()
        .enumerate()
        .filter(|(_, &qi)| qi > 0.0)
        .map(|(x, &qi)| (problem.f[x] * problem.p[x] - mu * qi).powi(2) / qi)
        .sum();
    Ok(sum / n as f64)
}

/// `q*(x) = |f(x)|·p(x) / Σ|f|·p`.
pub fn optimal_q(problem: &DiscreteProblem) -> Result<Vec<f64>, IsError> {
    let scores: Vec<f64> = problem.p.iter().zip(&problem.f).map(|(p, f)| f.abs() * p).collect();
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(IsError::UndefinedOptimum);
    }
    Ok(scores.into_iter().map(|s| s / total).collect())
}
