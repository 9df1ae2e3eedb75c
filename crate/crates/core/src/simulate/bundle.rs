//! Seeded Brownian increments shared by every evaluation (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::grid::TimeGrid;
use crate::scalar::Real;

/// Panel of increments `ΔW[p][k] ~ N(0, Δt)`.
///
/// Path `p` draws from ChaCha20 keyed by the seed on stream `p`, so every
/// increment is a pure function of `(seed, p, k)` and of the generation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle<S> {
    seed: u64,
    n_paths: usize,
    grid: TimeGrid<S>,
    /// Ratio between the grid the increments were drawn on and `grid`.
    coarsening: usize,
    increments: Vec<S>,
}

impl<S: Real> PathBundle<S> {
    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid<S> {
        &self.grid
    }

    #[inline]
    pub fn coarsening(&self) -> usize {
        self.coarsening
    }

    /// Increments `ΔW_0 … ΔW_{N−1}` of path `p`.
    #[inline]
    pub fn path(&self, p: usize) -> &[S] {
        let n = self.grid.steps;
        &self.increments[p * n..(p + 1) * n]
    }

    #[inline]
    pub fn increment(&self, p: usize, k: usize) -> S {
        self.increments[p * self.grid.steps + k]
    }

    /// `W(t_k)` on path `p`.
    pub fn brownian(&self, p: usize, k: usize) -> S {
        self.path(p)[..k].iter().copied().sum()
    }

    /// Same Brownian paths observed on a grid `factor` times coarser: each
    /// new increment is the sum of `factor` adjacent ones.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.grid.steps % factor != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.grid.steps
            )));
        }
        let steps = self.grid.steps / factor;
        let mut increments = Vec::with_capacity(self.n_paths * steps);
        for p in 0..self.n_paths {
            for chunk in self.path(p).chunks_exact(factor) {
                increments.push(chunk.iter().copied().sum());
            }
        }
        Ok(Self {
            seed: self.seed,
            n_paths: self.n_paths,
            grid: TimeGrid {
                horizon: self.grid.horizon,
                steps,
            },
            coarsening: self.coarsening * factor,
            increments,
        })
    }
}

/// Draws the increment panel for `n_paths` paths on `grid`.
pub fn generate_paths<S: Real>(
    seed: u64,
    n_paths: usize,
    grid: &TimeGrid<S>,
) -> Result<PathBundle<S>> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be at least 1".into()));
    }
    if let Some(msg) = grid.check() {
        return Err(Error::InvalidInput(msg));
    }
    let steps = grid.steps;
    let sd = grid.dt().as_f64().sqrt();
    let mut increments = vec![S::zero(); n_paths * steps];
    increments
        .par_chunks_mut(steps)
        .enumerate()
        .for_each(|(p, chunk)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            for slot in chunk.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *slot = S::lit(z * sd);
            }
        });
    Ok(PathBundle {
        seed,
        n_paths,
        grid: *grid,
        coarsening: 1,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_identical() {
        let g = TimeGrid::new(1.0f64, 4).unwrap();
        let a = generate_paths(7, 2, &g).unwrap();
        let b = generate_paths(7, 2, &g).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.path(0), a.path(1));
        let c = generate_paths(8, 2, &g).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn path_does_not_depend_on_bundle_size() {
        let g = TimeGrid::new(1.0f64, 6).unwrap();
        let small = generate_paths(3, 2, &g).unwrap();
        let large = generate_paths(3, 50, &g).unwrap();
        assert_eq!(small.path(1), large.path(1));
    }

    #[test]
    fn coarsening_keeps_brownian_values() {
        let g = TimeGrid::new(1.0f64, 8).unwrap();
        let fine = generate_paths(11, 3, &g).unwrap();
        let coarse = fine.coarsen(2).unwrap();
        assert_eq!(coarse.grid().steps, 4);
        for p in 0..3 {
            for k in 0..=4 {
                assert!((coarse.brownian(p, k) - fine.brownian(p, 2 * k)).abs() < 1e-14);
            }
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn rejects_empty_bundle() {
        let g = TimeGrid::new(1.0f64, 4).unwrap();
        assert!(generate_paths(1, 0, &g).is_err());
    }
}
