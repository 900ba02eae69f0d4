use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{instance_rng, GroundTruth, ImageRef, TaskInstance, TaskKind};
use crate::prompting::maze_question;

pub const MAZE_SIZE: u8 = 3;
pub const MIN_PATH: usize = 3;
pub const MAX_PATH: usize = 8;
pub const MAZE_IMAGE_PX: u32 = 440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    Up,
    Right,
    Down,
    Left,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Right, Dir::Down, Dir::Left];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Right => (0, 1),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
        }
    }

    pub fn opposite(self) -> Dir {
        Dir::ALL[(self.index() + 2) % 4]
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::Up => "up",
            Dir::Right => "right",
            Dir::Down => "down",
            Dir::Left => "left",
        })
    }
}

/// A rectangular maze with walls stored per cell edge, indexed
/// `[row * cols + col][dir]`. Row 0 is the top row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MazeGt {
    pub rows: u8,
    pub cols: u8,
    pub walls: Vec<[bool; 4]>,
    /// `(row, col)` of the green start cell.
    pub start: (u8, u8),
    /// `(row, col)` of the red end cell.
    pub end: (u8, u8),
    pub path: Vec<Dir>,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkOutcome {
    Reached,
    /// The move at this 0-based index crossed a wall or left the maze.
    WallCrossed(usize),
    EndedElsewhere((u8, u8)),
}

impl MazeGt {
    pub fn has_wall(&self, cell: (u8, u8), d: Dir) -> bool {
        self.walls[cell.0 as usize * self.cols as usize + cell.1 as usize][d.index()]
    }

    pub fn path_text(&self) -> String {
        self.path.iter().map(Dir::to_string).collect::<Vec<_>>().join(", ")
    }

    fn step(&self, cell: (u8, u8), d: Dir) -> Option<(u8, u8)> {
        if self.has_wall(cell, d) {
            return None;
        }
        let (dr, dc) = d.delta();
        let (r, c) = (cell.0 as i32 + dr, cell.1 as i32 + dc);
        (r >= 0 && c >= 0 && r < self.rows as i32 && c < self.cols as i32).then_some((r as u8, c as u8))
    }

    /// Shortest open-passage route from `start` to `end`.
    pub fn shortest_path(&self) -> Option<Vec<Dir>> {
        let idx = |c: (u8, u8)| c.0 as usize * self.cols as usize + c.1 as usize;
        let mut prev: Vec<Option<((u8, u8), Dir)>> = vec![None; self.walls.len()];
        let mut seen = vec![false; self.walls.len()];
        let mut q = VecDeque::from([self.start]);
        seen[idx(self.start)] = true;
        while let Some(c) = q.pop_front() {
            if c == self.end {
                let mut path = vec![];
                let mut cur = c;
                while let Some((p, d)) = prev[idx(cur)] {
                    path.push(d);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for d in Dir::ALL {
                if let Some(n) = self.step(c, d) {
                    if !seen[idx(n)] {
                        seen[idx(n)] = true;
                        prev[idx(n)] = Some((c, d));
                        q.push_back(n);
                    }
                }
            }
        }
        None
    }
}

/// Follows `path` from the start cell.
pub fn walk_maze(maze: &MazeGt, path: &[Dir]) -> WalkOutcome {
    let mut cell = maze.start;
    for (i, d) in path.iter().enumerate() {
        match maze.step(cell, *d) {
            Some(n) => cell = n,
            None => return WalkOutcome::WallCrossed(i),
        }
    }
    if cell == maze.end {
        WalkOutcome::Reached
    } else {
        WalkOutcome::EndedElsewhere(cell)
    }
}

/// Uniform spanning tree of the grid graph via Wilson's loop-erased random
/// walks; returns the wall table.
fn spanning_tree<R: Rng>(rows: u8, cols: u8, rng: &mut R) -> Vec<[bool; 4]> {
    let n = rows as usize * cols as usize;
    let mut walls = vec![[true; 4]; n];
    let mut in_tree = vec![false; n];
    let neighbours = |i: usize| -> Vec<(usize, Dir)> {
        let (r, c) = ((i / cols as usize) as i32, (i % cols as usize) as i32);
        Dir::ALL
            .iter()
            .filter_map(|d| {
                let (dr, dc) = d.delta();
                let (nr, nc) = (r + dr, c + dc);
                (nr >= 0 && nc >= 0 && nr < rows as i32 && nc < cols as i32)
                    .then(|| ((nr * cols as i32 + nc) as usize, *d))
            })
            .collect()
    };
    in_tree[rng.gen_range(0..n)] = true;
    let mut next: Vec<Option<(usize, Dir)>> = vec![None; n];
    for start in 0..n {
        let mut u = start;
        while !in_tree[u] {
            let nb = neighbours(u);
            let pick = nb[rng.gen_range(0..nb.len())];
            next[u] = Some(pick);
            u = pick.0;
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            let (v, d) = next[u].expect("walk recorded");
            walls[u][d.index()] = false;
            walls[v][d.opposite().index()] = false;
            u = v;
        }
    }
    walls
}

/// A valid maze instance and its one-token-perturbed invalid twin.
pub fn gen_maze(seed: u64) -> (TaskInstance, TaskInstance) {
    let (valid, invalid) = gen_maze_truths(seed);
    (maze_instance(format!("maze_s{seed}_valid"), valid), maze_instance(format!("maze_s{seed}_invalid"), invalid))
}

pub fn gen_maze_truths(seed: u64) -> (MazeGt, MazeGt) {
    let mut rng = instance_rng(seed, 0x6d617a65);
    let (rows, cols) = (MAZE_SIZE, MAZE_SIZE);
    let walls = spanning_tree(rows, cols, &mut rng);
    let cells: Vec<(u8, u8)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    let mut pairs = vec![];
    for &s in &cells {
        for &e in &cells {
            let probe = MazeGt { rows, cols, walls: walls.clone(), start: s, end: e, path: vec![], valid: true };
            let p = probe.shortest_path().expect("spanning tree connects every cell");
            if (MIN_PATH..=MAX_PATH).contains(&p.len()) {
                pairs.push((s, e, p));
            }
        }
    }
    let (start, end, path) = pairs.choose(&mut rng).cloned().expect("a 3x3 tree always has a path of length >= 3");
    let valid = MazeGt { rows, cols, walls, start, end, path, valid: true };
    let invalid = loop {
        let i = rng.gen_range(0..valid.path.len());
        let others: Vec<Dir> = Dir::ALL.into_iter().filter(|d| *d != valid.path[i]).collect();
        let mut path = valid.path.clone();
        path[i] = *others.choose(&mut rng).expect("three alternatives");
        let cand = MazeGt { path, valid: false, ..valid.clone() };
        if walk_maze(&cand, &cand.path) != WalkOutcome::Reached {
            break cand;
        }
    };
    (valid, invalid)
}

pub fn maze_instance(id: String, gt: MazeGt) -> TaskInstance {
    TaskInstance {
        id,
        kind: TaskKind::Maze,
        image: ImageRef { path: String::new(), width: MAZE_IMAGE_PX, height: MAZE_IMAGE_PX },
        question: maze_question(&gt.path_text()),
        answer: Some(if gt.valid { "Yes" } else { "No" }.into()),
        truth: GroundTruth::Maze(gt),
    }
}

/// `count` valid/invalid pairs over distinct (walls, start, end) layouts,
/// drawn from consecutive sub-seeds of `seed`.
pub fn gen_maze_batch(count: usize, seed: u64) -> Vec<(TaskInstance, TaskInstance)> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        let sub = seed.wrapping_mul(1_000_003).wrapping_add(k);
        k += 1;
        let (v, inv) = gen_maze_truths(sub);
        if seen.insert((v.walls.clone(), v.start, v.end)) {
            let i = out.len();
            out.push((maze_instance(format!("maze_{i:03}_valid"), v), maze_instance(format!("maze_{i:03}_invalid"), inv)));
        }
    }
    out
}
