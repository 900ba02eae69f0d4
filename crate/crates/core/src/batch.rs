//! Data-parallel batch helpers. With the `parallel` feature (default) work is
//! spread over rayon's pool; without it everything runs on the calling
//! thread. Both paths return results in input order.

use serde::{Deserialize, Serialize};

use crate::forge::{self, TaskInstance};

/// Order-preserving map over a slice.
#[cfg(feature = "parallel")]
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Sequential reference for [`par_map`], always available.
pub fn seq_map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Runs `f` with at most `jobs` worker threads (0 = library default).
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R: Send>(_jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeKind {
    RandomDots,
    OutlineDots,
    Maze,
    BallDrop,
}

impl std::str::FromStr for ForgeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dots" | "random_dots" => Ok(ForgeKind::RandomDots),
            "outline" | "outline_dots" => Ok(ForgeKind::OutlineDots),
            "maze" => Ok(ForgeKind::Maze),
            "balldrop" | "ball_drop" => Ok(ForgeKind::BallDrop),
            _ => Err(format!("unknown dataset kind {s:?} (dots, outline, maze, balldrop)")),
        }
    }
}

fn sub_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Builds a synthetic dataset.
///
/// - random dots: `count` puzzles cycling 4..=10 dots;
/// - outline dots: `count` puzzles cycling the built-in silhouettes;
/// - maze: `count` distinct layouts, each as a valid and an invalid item;
/// - ball drop: `count` scenes with 1, 2, 3 platforms in rotation.
pub fn forge_instances(kind: ForgeKind, count: usize, seed: u64) -> Result<Vec<TaskInstance>, String> {
    let idx: Vec<usize> = (0..count).collect();
    match kind {
        ForgeKind::RandomDots => par_map(&idx, |&i| {
            let n = 4 + i % 7;
            forge::gen_random_dots(n, sub_seed(seed, i), (800, 800)).map(|mut t| {
                t.id = format!("dots_{i:03}_n{n}");
                t
            })
        })
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string()),
        ForgeKind::OutlineDots => {
            let shapes = forge::outline::builtin_contours();
            par_map(&idx, |&i| {
                let (name, c) = &shapes[i % shapes.len()];
                forge::gen_outline_dots(std::slice::from_ref(c), sub_seed(seed, i), (800, 800)).map(|mut t| {
                    t.id = format!("outline_{i:03}_{name}");
                    t
                })
            })
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())
        }
        ForgeKind::Maze => Ok(forge::maze::gen_maze_batch(count, seed).into_iter().flat_map(|(a, b)| [a, b]).collect()),
        ForgeKind::BallDrop => Ok(par_map(&idx, |&i| {
            let lines = i % 3 + 1;
            let mut t = forge::gen_ball_drop(sub_seed(seed, i), lines);
            t.id = format!("ball_{i:03}_l{lines}");
            t
        })),
    }
}
