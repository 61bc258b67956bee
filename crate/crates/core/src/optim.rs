//! Multi-start derivative-free minimisation on top of argmin's Nelder–Mead.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub(crate) struct NelderMeadConfig {
    pub max_iters: u64,
    pub sd_tolerance: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iters: 400,
            sd_tolerance: 1e-9,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub start_index: usize,
}

struct Objective<'a, F>(&'a F);

impl<F> CostFunction for Objective<'_, F>
where
    F: Fn(&[f64]) -> f64,
{
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, argmin::core::Error> {
        let v = (self.0)(p);
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    }
}

pub(crate) fn minimize<F>(f: &F, x0: &[f64], cfg: NelderMeadConfig) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += cfg.initial_step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(cfg.sd_tolerance).ok()?;
    let res = Executor::new(Objective(f), solver)
        .configure(|s| s.max_iters(cfg.max_iters))
        .run()
        .ok()?;
    let state = res.state();
    let x = state.get_best_param()?.clone();
    let value = state.get_best_cost();
    value.is_finite().then_some((x, value))
}

/// Runs one local search per start point in parallel and returns the finite
/// minima in start order. The best one is the lowest value, ties going to the
/// lowest start index, so the reduction is independent of thread scheduling.
pub(crate) fn multi_start<F>(f: &F, starts: &[Vec<f64>], cfg: NelderMeadConfig) -> Vec<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    starts
        .par_iter()
        .enumerate()
        .filter_map(|(i, x0)| {
            minimize(f, x0, cfg).map(|(x, value)| Minimum {
                x,
                value,
                start_index: i,
            })
        })
        .collect()
}

pub(crate) fn best(minima: &[Minimum]) -> Option<&Minimum> {
    minima.iter().min_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.start_index.cmp(&b.start_index))
    })
}
