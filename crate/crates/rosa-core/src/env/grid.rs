//! Deterministic gridworlds and their text layout format.
//!
//! Layout files have a header of `key = value` lines, a `---` separator and
//! then the grid itself:
//!
//! ```text
//! # comment
//! step_reward = -0.01
//! max_steps = 200
//! terminal.0 = 0.5
//! terminal.1 = 1.0
//! ---
//! #######
//! #S..0.#
//! #h#####
//! ```
//!
//! Grid characters: `#` wall, `.` free, `S` start, `0`-`9` terminal with the
//! reward given by `terminal.<digit>`, `h` free cell belonging to the herring
//! region. Every terminal digit used in the grid needs a header entry.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Result, RosaError};

pub type Cell = (usize, usize);

/// Moves in action order: up, down, left, right.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub id: u8,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<Cell>,
    pub start: Cell,
    pub terminals: BTreeMap<Cell, Terminal>,
    pub step_reward: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub herring: BTreeSet<Cell>,
}

fn construction<T>(msg: impl Into<String>) -> Result<T> {
    Err(RosaError::Construction(msg.into()))
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut header = BTreeMap::new();
        let mut lines = text.lines();
        let mut saw_sep = false;
        for line in lines.by_ref() {
            let t = line.trim();
            if t == "---" {
                saw_sep = true;
                break;
            }
            if t.is_empty() || t.starts_with("//") || (t.starts_with('#') && !t.contains('=')) {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| RosaError::Parse(format!("header line without '=': {t}")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        if !saw_sep {
            return Err(RosaError::Parse("layout is missing the '---' separator".into()));
        }
        let num = |k: &str| -> Result<Option<f64>> {
            header
                .get(k)
                .map(|v| v.parse::<f64>().map_err(|e| RosaError::Parse(format!("{k}: {e}"))))
                .transpose()
        };
        let step_reward = num("step_reward")?.unwrap_or(0.0);
        let max_steps = num("max_steps")?.unwrap_or(200.0);
        if max_steps < 1.0 || max_steps.fract() != 0.0 {
            return construction("max_steps must be a positive integer");
        }
        let rows: Vec<&str> = lines.map(|l| l.trim_end()).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(RosaError::Parse("empty grid".into()));
        }
        let height = rows.len();
        let width = rows.iter().map(|r| r.chars().count()).max().unwrap();
        let mut walls = BTreeSet::new();
        let mut terminals = BTreeMap::new();
        let mut herring = BTreeSet::new();
        let mut start = None;
        for (r, row) in rows.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            for c in 0..width {
                let ch = chars.get(c).copied().unwrap_or('#');
                match ch {
                    '#' => {
                        walls.insert((r, c));
                    }
                    '.' => {}
                    'h' => {
                        herring.insert((r, c));
                    }
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return construction("more than one start cell");
                        }
                    }
                    d if d.is_ascii_digit() => {
                        let id = d.to_digit(10).unwrap() as u8;
                        let reward = num(&format!("terminal.{id}"))?.ok_or_else(|| {
                            RosaError::Construction(format!("terminal {id} has no reward in the header"))
                        })?;
                        terminals.insert((r, c), Terminal { id, reward });
                    }
                    other => return Err(RosaError::Parse(format!("unknown grid character {other:?}"))),
                }
            }
        }
        let start = start.ok_or_else(|| RosaError::Construction("no start cell".into()))?;
        let spec = GridSpec {
            width,
            height,
            walls,
            start,
            terminals,
            step_reward,
            max_steps: max_steps as usize,
            herring,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return construction("max_steps must be positive");
        }
        if self.walls.contains(&self.start) || self.terminals.contains_key(&self.start) {
            return construction("start cell must be free and non-terminal");
        }
        if self.terminals.is_empty() {
            return construction("layout has no terminal");
        }
        let dist = self.bfs_from(self.start);
        for cell in self.terminals.keys() {
            if self.walls.contains(cell) {
                return construction(format!("terminal {cell:?} is a wall"));
            }
            if !dist.contains_key(cell) {
                return construction(format!("terminal {cell:?} is unreachable from the start"));
            }
        }
        if self.herring.iter().any(|c| self.terminals.contains_key(c) || self.walls.contains(c)) {
            return construction("herring region must contain only free non-terminal cells");
        }
        Ok(())
    }

    pub fn in_bounds(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        cell.0 < self.height && cell.1 < self.width && !self.walls.contains(&cell)
    }

    /// Result of moving from `cell` with action `a`; walls and edges block.
    pub fn next_cell(&self, cell: Cell, a: usize) -> Cell {
        let (dr, dc) = MOVES[a];
        let (r, c) = (cell.0 as isize + dr, cell.1 as isize + dc);
        if self.in_bounds(r, c) && self.is_free((r as usize, c as usize)) {
            (r as usize, c as usize)
        } else {
            cell
        }
    }

    /// Shortest-path distances from `from`, not expanding through terminals.
    pub fn bfs_from(&self, from: Cell) -> BTreeMap<Cell, usize> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(from, 0);
        queue.push_back(from);
        while let Some(cell) = queue.pop_front() {
            let d = dist[&cell];
            if cell != from && self.terminals.contains_key(&cell) {
                continue;
            }
            for a in 0..MOVES.len() {
                let n = self.next_cell(cell, a);
                if !dist.contains_key(&n) {
                    dist.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Distance-to-nearest-goal table over free cells, searching backwards
    /// from the given terminal ids (all terminals if `ids` is empty).
    pub fn goal_distance(&self, ids: &[u8]) -> BTreeMap<Cell, usize> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        for (cell, t) in &self.terminals {
            if ids.is_empty() || ids.contains(&t.id) {
                dist.insert(*cell, 0);
                queue.push_back(*cell);
            }
        }
        // moves are symmetric, so a forward search from the goals gives the distances
        while let Some(cell) = queue.pop_front() {
            let d = dist[&cell];
            for a in 0..MOVES.len() {
                let n = self.next_cell(cell, a);
                if self.terminals.contains_key(&n) && !dist.contains_key(&n) {
                    continue;
                }
                if !dist.contains_key(&n) {
                    dist.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|c| !self.walls.contains(c))
            .collect()
    }

    /// Dense index of every free cell, row-major.
    pub fn cell_index(&self) -> BTreeMap<Cell, usize> {
        self.free_cells().into_iter().enumerate().map(|(i, c)| (c, i)).collect()
    }

    pub fn terminal_by_id(&self, id: u8) -> Option<(Cell, &Terminal)> {
        self.terminals.iter().find(|(_, t)| t.id == id).map(|(c, t)| (*c, t))
    }

    pub fn herring_fraction(&self) -> f64 {
        self.herring.len() as f64 / self.free_cells().len() as f64
    }
}

pub const TWO_GOAL_LAYOUT: &str = include_str!("../../layouts/two_goal.txt");
pub const SUBGOAL_LAYOUT: &str = include_str!("../../layouts/subgoal.txt");
pub const RED_HERRING_LAYOUT: &str = include_str!("../../layouts/red_herring.txt");
pub const CORRIDOR_LAYOUT: &str = include_str!("../../layouts/corridor.txt");

/// Two terminals with rewards 0.5 and 1.0, the 0.5 one strictly closer.
pub fn check_two_goal(spec: &GridSpec) -> Result<()> {
    let mut rewards: Vec<f64> = spec.terminals.values().map(|t| t.reward).collect();
    rewards.sort_by(f64::total_cmp);
    if rewards != [0.5, 1.0] {
        return construction(format!("two-goal maze needs terminals 0.5 and 1.0, found {rewards:?}"));
    }
    let dist = spec.bfs_from(spec.start);
    let d_of = |target: f64| {
        spec.terminals.iter().find(|(_, t)| t.reward == target).map(|(c, _)| dist[c]).unwrap()
    };
    if d_of(0.5) >= d_of(1.0) {
        return construction("the 0.5 goal must be strictly closer to the start than the 1.0 goal");
    }
    Ok(())
}

pub fn check_subgoal(spec: &GridSpec) -> Result<()> {
    if spec.terminals.len() != 1 {
        return construction("subgoal maze has exactly one terminal");
    }
    // exactly one doorway (walls on two opposite sides) whose removal disconnects the goal
    let wall = |r: usize, c: usize, dr: isize, dc: isize| {
        let (r, c) = (r as isize + dr, c as isize + dc);
        !spec.in_bounds(r, c) || spec.walls.contains(&(r as usize, c as usize))
    };
    let cuts: Vec<Cell> = spec
        .free_cells()
        .into_iter()
        .filter(|c| *c != spec.start && !spec.terminals.contains_key(c))
        .filter(|&(r, c)| (wall(r, c, -1, 0) && wall(r, c, 1, 0)) || (wall(r, c, 0, -1) && wall(r, c, 0, 1)))
        .filter(|c| {
            let mut blocked = spec.clone();
            blocked.walls.insert(*c);
            blocked.validate().is_err()
        })
        .collect();
    if cuts.len() != 1 {
        return construction(format!("subgoal maze needs a single gateway cell, found {}", cuts.len()));
    }
    Ok(())
}

pub fn check_red_herring(spec: &GridSpec) -> Result<()> {
    if spec.herring_fraction() < 0.4 {
        return construction("herring region must cover at least 40% of the free cells");
    }
    if !spec.terminals.values().any(|t| t.reward > 0.0) {
        return construction("red-herring maze needs a rewarding terminal");
    }
    Ok(())
}

pub fn check_corridor(spec: &GridSpec) -> Result<()> {
    let mut rewards: Vec<f64> = spec.terminals.values().map(|t| t.reward).collect();
    rewards.sort_by(f64::total_cmp);
    if rewards != [0.5, 1.0] {
        return construction("corridor needs terminals 0.5 and 1.0");
    }
    let dist = spec.bfs_from(spec.start);
    let ds: Vec<usize> = spec.terminals.keys().map(|c| dist[c]).collect();
    if ds[0] != ds[1] {
        return construction("corridor goals must be equidistant from the start");
    }
    if spec.step_reward >= 0.0 {
        return construction("corridor step reward must be negative");
    }
    Ok(())
}
