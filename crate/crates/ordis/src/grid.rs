//! Parallel execution of experiment grids.
//!
//! Cells are independent trainings, so they run on a bounded rayon pool and
//! are aggregated in (variant, seed) order afterwards; the resulting table
//! does not depend on the number of workers. Finished cells are cached by
//! dataset hash and cell key, so a variant shared between two tables is
//! trained once.

use std::collections::HashMap;
use std::sync::Mutex;

use ordis_core::experiments::{aggregate, run_cell, CellResult, Table, Variant};
use ordis_core::net::NetworkConfig;
use ordis_core::seqgen::Dataset;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

pub struct Grid {
    pool: ThreadPool,
    cache: Mutex<HashMap<String, CellResult>>,
}

impl Grid {
    /// `workers == 0` uses one thread per available core.
    pub fn new(workers: usize) -> Result<Grid> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Grid { pool, cache: Mutex::new(HashMap::new()) })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn key(dataset: &Dataset, net: &NetworkConfig, variant: &Variant, seed: u64) -> String {
        format!("{}|{:?}|{}", dataset.manifest.records_hash, net, variant.cell_key(seed))
    }

    pub fn run(&self, dataset: &Dataset, net: &NetworkConfig, variants: &[Variant], seeds: &[u64]) -> Result<Table> {
        let jobs: Vec<(usize, u64)> =
            (0..variants.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
        let cells: Vec<(usize, u64, CellResult)> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(i, seed)| -> Result<(usize, u64, CellResult)> {
                    let key = Grid::key(dataset, net, &variants[i], seed);
                    if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
                        return Ok((i, seed, hit.clone()));
                    }
                    let cell = run_cell(dataset, net, &variants[i], seed)?;
                    self.cache.lock().expect("cache lock").insert(key, cell.clone());
                    Ok((i, seed, cell))
                })
                .collect::<Result<_>>()
        })?;
        Ok(aggregate(variants, &cells)?)
    }

    pub fn cached_cells(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}
